"""Regularity-scan slope of the K = 256 white-noise drift against the time step.

Usage: python scripts/white_noise_resolution.py [--paths N] [--dts 12 14 16 18] [-w WORKERS]

Each dt = 2^-j runs regularity_moment_scan with the bridge quadrature on the
same seeds and prints the fitted exponent with its bootstrap interval, so the
drift of the slope under refinement is visible at a fixed path count.
"""

import argparse
import os
import time

from itwlab.averaging import regularity_moment_scan
from itwlab.fields import make_field


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=30)
    ap.add_argument("--dts", type=int, nargs="+", default=[12, 14, 16, 18])
    ap.add_argument("--H", type=float, default=0.25)
    ap.add_argument("--seed", type=int, default=909)
    ap.add_argument("-w", "--workers", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()
    b = make_field("fourier:white:K=256")
    print("dt        slope   ci_low  ci_high  seconds")
    for j in args.dts:
        start = time.perf_counter()
        out = regularity_moment_scan(
            b, args.H, ell=4, gamma=0.1, n_paths=args.paths, dt=2.0**-j, seed=args.seed, quadrature="bridge", workers=args.workers
        )
        lo, hi = out["ci"]
        print(f"2^-{j:<6d} {out['slope']:.3f}   {lo:.3f}   {hi:.3f}    {time.perf_counter() - start:.0f}", flush=True)


if __name__ == "__main__":
    main()
