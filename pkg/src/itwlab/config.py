"""YAML experiment configs with explicit defaults and field-path diagnostics."""

from __future__ import annotations

import os
import re
from dataclasses import asdict, dataclass, fields
from dataclasses import field as dc_field
from pathlib import Path

import yaml

from .fields import catalog_ids, make_field

__all__ = ["ConfigError", "GridConfig", "ExperimentConfig", "load_config", "parse_config", "EXPERIMENTS", "OUTPUT_ENV"]

EXPERIMENTS = (
    "simulate-fbm",
    "verify-ito-tanaka",
    "clark-ocone",
    "regularity-scan",
    "solve-sde",
    "euler-crosscheck",
    "roughness-stress",
)
OUTPUT_ENV = "ITWLAB_OUTPUT_ROOT"
_NO_H = {"clark-ocone"}
_NO_FIELD = {"simulate-fbm", "roughness-stress"}


class ConfigError(ValueError):
    """Invalid config; ``path`` names the offending field (e.g. ``grid.dt``)."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


_POW = re.compile(r"^\s*2\s*(\^|\*\*)\s*(-?\d+)\s*$")


def _number(value, path: str) -> float:
    """Floats, ints, or strings such as ``2^-10`` and ``2**-10``."""
    if isinstance(value, bool):
        raise ConfigError(path, "expected a number")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _POW.match(value)
        if m:
            return 2.0 ** int(m.group(2))
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(path, f"expected a number, got {value!r}")


def _coerce(value):
    """Turn numeric-looking strings (``1e-12``, ``2^-10``) into floats, recursively."""
    if isinstance(value, list):
        return [_coerce(v) for v in value]
    if isinstance(value, dict):
        return {k: _coerce(v) for k, v in value.items()}
    if isinstance(value, str):
        try:
            return _number(value, "")
        except ConfigError:
            return value
    return value


@dataclass
class GridConfig:
    dt: float = 2.0**-10
    dts: list | None = None
    L: float = 1.0
    T: float = 1.0
    M: int = 1024
    x_probes: list = dc_field(default_factory=lambda: [0.0])


@dataclass
class ExperimentConfig:
    experiment: str
    H: float | None = None
    d: int = 1
    field: str | None = None
    n_paths: int = 100
    seed: int = 0
    workers: int = 1
    t1_reading: str = "w2"
    grid: GridConfig = dc_field(default_factory=GridConfig)
    tolerances: dict = dc_field(default_factory=dict)
    params: dict = dc_field(default_factory=dict)
    output_dir: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def resolved_output(self, config_path: str | os.PathLike | None = None) -> Path:
        """output_dir, else $ITWLAB_OUTPUT_ROOT/<config stem>, else ./itwlab_out/<config stem>."""
        if self.output_dir:
            return Path(self.output_dir)
        stem = Path(config_path).stem if config_path else self.experiment
        return Path(os.environ.get(OUTPUT_ENV, "itwlab_out")) / stem


def parse_config(raw) -> ExperimentConfig:
    """Validate a mapping into an :class:`ExperimentConfig`; raises ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    known = {f.name for f in fields(ExperimentConfig)}
    for key in raw:
        if key not in known:
            raise ConfigError(str(key), "unknown field")
    if "experiment" not in raw:
        raise ConfigError("experiment", "missing required field")
    kind = raw["experiment"]
    if kind not in EXPERIMENTS:
        raise ConfigError("experiment", f"must be one of {', '.join(EXPERIMENTS)}")

    H = raw.get("H")
    if H is None:
        if kind not in _NO_H:
            raise ConfigError("H", "missing required field")
    else:
        H = _number(H, "H")
        if not (0.0 < H < 1.0) or H == 0.5:
            raise ConfigError("H", "must lie in (0, 1) and differ from 1/2")

    def _int(key, default, lo):
        v = raw.get(key, default)
        if isinstance(v, bool) or not isinstance(v, int) or v < lo:
            raise ConfigError(key, f"expected an integer >= {lo}")
        return v

    d = _int("d", 1, 1)
    n_paths = _int("n_paths", 100, 1)
    seed = _int("seed", 0, 0)
    workers = _int("workers", 1, 1)

    fid = raw.get("field")
    if fid is None and kind not in _NO_FIELD:
        raise ConfigError("field", "missing required field")
    if fid is not None:
        if not isinstance(fid, str):
            raise ConfigError("field", "expected a catalog id string")
        if not (fid in catalog_ids() or fid.startswith("csv:")):
            try:
                make_field(fid)
            except (KeyError, ValueError):
                raise ConfigError("field", f"unknown catalog id {fid!r}") from None

    reading = raw.get("t1_reading", "w2")
    if reading not in ("auto", "w2", "literal"):
        raise ConfigError("t1_reading", "must be auto, w2 or literal")

    graw = raw.get("grid", {}) or {}
    if not isinstance(graw, dict):
        raise ConfigError("grid", "must be a mapping")
    gknown = {f.name for f in fields(GridConfig)}
    for key in graw:
        if key not in gknown:
            raise ConfigError(f"grid.{key}", "unknown field")
    g = GridConfig()
    for key in ("dt", "L", "T"):
        if key in graw:
            v = _number(graw[key], f"grid.{key}")
            if v <= 0:
                raise ConfigError(f"grid.{key}", "must be positive")
            setattr(g, key, v)
    if "M" in graw:
        M = graw["M"]
        if isinstance(M, bool) or not isinstance(M, int) or M < 4:
            raise ConfigError("grid.M", "expected an integer >= 4")
        g.M = M
    if "dts" in graw and graw["dts"] is not None:
        if not isinstance(graw["dts"], list) or not graw["dts"]:
            raise ConfigError("grid.dts", "expected a non-empty list")
        g.dts = sorted((_number(v, f"grid.dts[{i}]") for i, v in enumerate(graw["dts"])), reverse=True)
    if "x_probes" in graw:
        xp = graw["x_probes"]
        if not isinstance(xp, list) or not xp:
            raise ConfigError("grid.x_probes", "expected a non-empty list")
        g.x_probes = [
            [_number(c, f"grid.x_probes[{i}]") for c in v] if isinstance(v, list) else _number(v, f"grid.x_probes[{i}]")
            for i, v in enumerate(xp)
        ]

    for key in ("tolerances", "params"):
        if not isinstance(raw.get(key, {}) or {}, dict):
            raise ConfigError(key, "must be a mapping")
    out = raw.get("output_dir")
    if out is not None and not isinstance(out, str):
        raise ConfigError("output_dir", "expected a path string")
    return ExperimentConfig(
        experiment=kind,
        H=H,
        d=d,
        field=fid,
        n_paths=n_paths,
        seed=seed,
        workers=workers,
        t1_reading=reading,
        grid=g,
        tolerances=_coerce(dict(raw.get("tolerances") or {})),
        params=_coerce(dict(raw.get("params") or {})),
        output_dir=out,
    )


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from None
    return parse_config(raw)
