"""Run every config in configs/acceptance and print a PASS/FAIL table with wall times.

Usage: python scripts/run_acceptance.py [-o OUT] [-w WORKERS] [names ...]

Artifacts land in OUT/<config stem>; a summary.json collects the criteria.
The pytest file tests/test_acceptance.py adds the criteria that are not
config-driven (semigroup checks and Young machinery) on top of these runs.
"""

import argparse
import json
import os
import time
from pathlib import Path

from itwlab.cli import execute
from itwlab.config import load_config

ROOT = Path(__file__).resolve().parents[1] / "configs" / "acceptance"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="config stems (default: all)")
    ap.add_argument("-o", "--output", default="acceptance_out")
    ap.add_argument("-w", "--workers", type=int, default=os.cpu_count() or 1)
    args = ap.parse_args()
    files = [ROOT / f"{n}.yaml" for n in args.names] if args.names else sorted(ROOT.glob("*.yaml"))
    out_root = Path(args.output)
    summary = {}
    for f in files:
        cfg = load_config(f)
        cfg.workers = args.workers
        start = time.perf_counter()
        code = execute(cfg, out_root / f.stem, str(f))
        wall = time.perf_counter() - start
        result = json.loads((out_root / f.stem / "result.json").read_text())
        summary[f.stem] = {"exit": code, "wall_s": round(wall, 1), "criteria": result.get("criteria", {}), "error": result.get("error")}
        print(f"{'PASS' if code == 0 else 'FAIL'} {f.stem} ({wall:.0f} s)", flush=True)
    (out_root / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0 if all(s["exit"] == 0 for s in summary.values()) else 1


if __name__ == "__main__":
    raise SystemExit(main())
