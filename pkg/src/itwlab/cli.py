"""Command line entry point: ``itwlab run <config>``, ``itwlab list``, ``itwlab verify --quick``.

Exit codes of ``run``: 0 when every configured criterion holds, 1 when one
fails or the experiment aborts (artifacts are still written), 2 for config or
output-directory errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import tempfile
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .fields import catalog_table

log = logging.getLogger("itwlab")

RESULT_FILE = "result.json"
METADATA_FILE = "metadata.json"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in row) + "\n")


_PLOT_TEMPLATE = '''"""Plot {table}.csv; run from this directory."""

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

with open("{table}.csv") as fh:
    rows = list(csv.DictReader(fh))
x = [float(r["{x}"]) for r in rows]
fig, ax = plt.subplots()
for col in {ys!r}:
    ax.plot(x, [float(r[col]) for r in rows], marker="o", label=col)
if {loglog!r}:
    ax.set_xscale("log")
    ax.set_yscale("log")
ax.set_xlabel("{x}")
ax.legend()
fig.savefig("{table}.png", dpi=120)
'''


def _versions() -> dict:
    import scipy
    import yaml

    return {
        "itwlab": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pyyaml": yaml.__version__,
    }


def execute(cfg: ExperimentConfig, out: Path, config_path: str | None = None) -> int:
    """Run one experiment into ``out``; returns the exit code."""
    from .experiments import run_experiment

    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"output_dir: not writable: {exc}", file=sys.stderr)
        return 2
    start = time.perf_counter()
    meta = {
        "config": cfg.to_dict(),
        "config_path": config_path,
        "versions": _versions(),
        "started": datetime.now(timezone.utc).isoformat(),
    }
    try:
        outcome = run_experiment(cfg)
    except (RuntimeError, ValueError, FloatingPointError) as exc:
        meta["wall_time_s"] = time.perf_counter() - start
        meta["error"] = f"{type(exc).__name__}: {exc}"
        _dump(out / METADATA_FILE, meta)
        _dump(out / RESULT_FILE, {"experiment": cfg.experiment, "error": meta["error"], "passed": False})
        print(f"FAIL {cfg.experiment}: {meta['error']}", file=sys.stderr)
        return 1
    meta["wall_time_s"] = time.perf_counter() - start
    files = [RESULT_FILE]
    for name, (header, rows) in outcome.tables.items():
        _write_csv(out / f"{name}.csv", header, rows)
        files.append(f"{name}.csv")
    for table, x, ys, loglog in outcome.plots:
        (out / f"plot_{table}.py").write_text(_PLOT_TEMPLATE.format(table=table, x=x, ys=list(ys), loglog=loglog))
    _dump(
        out / RESULT_FILE,
        {
            "experiment": cfg.experiment,
            "field": cfg.field,
            "H": cfg.H,
            "seed": cfg.seed,
            "n_paths": cfg.n_paths,
            "grid": cfg.to_dict()["grid"],
            "criteria": outcome.criteria,
            "passed": outcome.passed,
            "result": outcome.result,
        },
    )
    meta["files"] = files
    _dump(out / METADATA_FILE, meta)
    for name, ok in outcome.criteria.items():
        print(f"{'PASS' if ok else 'FAIL'} {cfg.experiment}.{name}")
    return 0 if outcome.passed else 1


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return 2
    if args.output:
        cfg.output_dir = args.output
    if args.workers:
        cfg.workers = args.workers
    return execute(cfg, cfg.resolved_output(args.config), args.config)


def cmd_list(args) -> int:
    rows = catalog_table()
    w = max(len(r[0]) for r in rows)
    print(f"{'id'.ljust(w)}  {'class'.ljust(14)}  description")
    for fid, kind, desc in rows:
        print(f"{fid.ljust(w)}  {kind.ljust(14)}  {desc}")
    return 0


QUICK_SUITE = [
    {"experiment": "verify-ito-tanaka", "H": 0.3, "field": "det:one", "n_paths": 4, "grid": {"dts": ["2^-5", "2^-6"]}, "tolerances": {"abs_residual": 1e-12}},
    {"experiment": "verify-ito-tanaka", "H": 0.3, "field": "det:linear", "n_paths": 4, "grid": {"dts": ["2^-5", "2^-6"]}, "tolerances": {"abs_residual": 1e-8}},
    {"experiment": "clark-ocone", "field": "functional:B1", "n_paths": 20, "grid": {"dts": ["2^-6", "2^-8"]}, "tolerances": {"abs_residual": 1e-12}},
    {"experiment": "simulate-fbm", "H": 0.3, "n_paths": 200, "grid": {"dt": "2^-6", "L": 8.0}, "params": {"decomposition_paths": 5}},
    {"experiment": "euler-crosscheck", "H": 0.7, "field": "det:linear:a=-1", "grid": {"dt": "2^-12", "M": 512}, "params": {"stride": 4}},
    {"experiment": "roughness-stress", "H": 0.25, "n_paths": 5, "grid": {"dt": "2^-10"}, "params": {"Ks": [1, 8, 64], "K_from": 8, "K_to": 64}, "tolerances": {"control_ratio_min": 2.0}},
]


def cmd_verify(args) -> int:
    if not args.quick:
        print("only the quick smoke suite is available: itwlab verify --quick", file=sys.stderr)
        return 2
    codes = []
    with tempfile.TemporaryDirectory() as tmp:
        for i, raw in enumerate(QUICK_SUITE):
            cfg = parse_config(raw)
            codes.append(execute(cfg, Path(tmp) / f"{i:02d}_{cfg.experiment}"))
    ok = all(c == 0 for c in codes)
    print(f"quick suite: {sum(c == 0 for c in codes)}/{len(codes)} passed")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="itwlab", description="Ito-Tanaka-Wentzell and regularization-by-noise experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("config")
    r.add_argument("-o", "--output", help="output directory (overrides output_dir)")
    r.add_argument("-w", "--workers", type=int, help="worker processes (overrides the config)")
    r.set_defaults(fn=cmd_run)
    lst = sub.add_parser("list", help="print the field catalog")
    lst.set_defaults(fn=cmd_list)
    v = sub.add_parser("verify", help="smoke suite")
    v.add_argument("--quick", action="store_true")
    v.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
