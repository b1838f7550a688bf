"""Compare the numba kernels with the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--horizon 1000] [--draws 200000]

The fallback is selected per process by CRNSIM_DISABLE_NUMBA, so each backend
runs in its own interpreter. Numba timings exclude compilation (a warm-up call
is made first).
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
from dataclasses import replace
from crnsim import GEParams, NetworkConfig, RngStream, backend, ge_samples, simulate

horizon, draws = float(sys.argv[1]), int(sys.argv[2])
cfg = NetworkConfig.build(3.0, 6.0, scv_arrival=4.0, scv_service=4.0, horizon=horizon,
                          warmup=0.1 * horizon, seed=1)
simulate(replace(cfg, horizon=1.0, warmup=0.0))  # compile
ge_samples(GEParams(13.0, 4.0), RngStream(0), 10, vectorised=False)

t0 = time.perf_counter()
stats, _ = simulate(cfg)
t_sim = time.perf_counter() - t0
events = int(stats.diagnostics[1])

p = GEParams(13.0, 4.0)
t0 = time.perf_counter()
ge_samples(p, RngStream(1), draws, vectorised=False)
t_loop = time.perf_counter() - t0
t0 = time.perf_counter()
ge_samples(p, RngStream(1), draws)
t_vec = time.perf_counter() - t0
print(json.dumps(dict(backend=backend(), events=events, t_sim=t_sim, t_loop=t_loop,
                      t_vec=t_vec)))
"""


def run(disable, horizon, draws):
    env = dict(os.environ)
    env.pop("CRNSIM_DISABLE_NUMBA", None)
    if disable:
        env["CRNSIM_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", CHILD, str(horizon), str(draws)], env=env,
                         check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=float, default=1000.0,
                    help="simulated seconds per kernel run (default 1000)")
    ap.add_argument("--draws", type=int, default=200_000, help="GE samples (default 200000)")
    args = ap.parse_args()
    res = [run(False, args.horizon, args.draws), run(True, args.horizon, args.draws)]
    print(f"{'backend':<8} {'events':>9} {'kernel s':>9} {'events/s':>11} "
          f"{'GE loop s':>10} {'GE vector s':>12}")
    for r in res:
        print(f"{r['backend']:<8} {r['events']:>9} {r['t_sim']:>9.3f} "
              f"{r['events'] / r['t_sim']:>11.0f} {r['t_loop']:>10.3f} {r['t_vec']:>12.4f}")
    nb, py = res
    assert nb["events"] == py["events"], "backends disagree on the event count"
    print(f"kernel speed-up {py['t_sim'] / nb['t_sim']:.0f}x, "
          f"per-draw GE speed-up {py['t_loop'] / nb['t_loop']:.0f}x")


if __name__ == "__main__":
    main()
