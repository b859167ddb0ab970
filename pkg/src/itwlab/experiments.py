"""Experiment runners behind ``itwlab run``.

Every runner takes a validated :class:`~itwlab.config.ExperimentConfig` and
returns an :class:`Outcome`: a JSON-ready result dict, named pass criteria,
CSV tables and plot recipes. Runners never read the clock or the worker count
into their results, so identical configs give identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .averaging import compute_A, regularity_moment_scan, roughness_stress_test
from .config import ExperimentConfig
from .fbm import decomposition_error, fbm_from_lattice, fbm_variance_constant, sample_lattice
from .fields import make_field
from .verifier import (
    _map,
    clark_ocone_check,
    compute_terms,
    regime_check,
    resolve_t1_reading,
    verify_identity,
)
from .young import euler_crosscheck, sde_reconstruct, solve_yode

__all__ = ["Outcome", "RUNNERS", "run_experiment", "t4_support_check", "fbm_law_check"]


@dataclass
class Outcome:
    result: dict
    criteria: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    plots: list = field(default_factory=list)  # (table name, x column, y columns, loglog)

    @property
    def passed(self) -> bool:
        return all(self.criteria.values())


def _tol(cfg: ExperimentConfig, key: str, default):
    return cfg.tolerances.get(key, default)


# ---------------------------------------------------------------------------
# fBm law and decomposition


def _law_path(args):
    H, dt, left, seed, k = args
    lat = sample_lattice(1, dt, left, 1.0, seed, k, tail=True)
    p = fbm_from_lattice(lat, H, eval_grid=[1.0])
    w = float(p.values[0, -1])
    return np.array([w, w - float(p.w2_origin[0, -1])])


def _var_with_se(x: np.ndarray) -> tuple[float, float]:
    """Sample variance about the known mean 0 and its standard error."""
    x2 = x**2
    return float(x2.mean()), float(x2.std(ddof=1) / math.sqrt(x.size))


def fbm_law_check(H: float, n_paths: int, dt: float, left: float, seed: int, workers: int = 1) -> dict:
    """Var W^H(1) against c_H and Var W1(0, 1) against 1 / (2H), with 3-SE bands."""
    samples = _map(_law_path, [(H, dt, left, seed, k) for k in range(n_paths)], workers)
    out = {"H": H, "n_paths": n_paths, "dt": dt, "L": left, "seed": seed}
    for name, col, oracle in (("W", 0, fbm_variance_constant(H)), ("W1", 1, 1.0 / (2 * H))):
        v, se = _var_with_se(samples[:, col])
        out[name] = {"var": v, "se": se, "oracle": oracle, "z": (v - oracle) / se}
    return out


def _decomp_path(args):
    H, dt, left, seed, k = args
    lat = sample_lattice(1, dt, left, 1.0, seed, k, tail=True)
    return decomposition_error(fbm_from_lattice(lat, H))


def run_simulate_fbm(cfg: ExperimentConfig) -> Outcome:
    g, p = cfg.grid, cfg.params
    res = {"law": fbm_law_check(cfg.H, cfg.n_paths, g.dt, g.L, cfg.seed, cfg.workers)}
    crit = {
        "var_W_within_3se": abs(res["law"]["W"]["z"]) < _tol(cfg, "z_max", 3.0),
        "var_W1_within_3se": abs(res["law"]["W1"]["z"]) < _tol(cfg, "z_max", 3.0),
    }
    n_dec = int(p.get("decomposition_paths", 0))
    if n_dec:
        dt_dec = float(p.get("decomposition_dt", 2.0**-6))
        errs = _map(_decomp_path, [(cfg.H, dt_dec, g.L, cfg.seed, k) for k in range(n_dec)], cfg.workers)
        res["decomposition"] = {"n_paths": n_dec, "dt": dt_dec, "max_error": float(errs.max())}
        crit["decomposition_exact"] = res["decomposition"]["max_error"] < _tol(cfg, "decomposition", 1e-12)
    rows = [[k, name, res["law"][name]["var"], res["law"][name]["se"], res["law"][name]["oracle"]] for k, name in enumerate(("W", "W1"))]
    return Outcome(res, crit, {"variance": (["row", "quantity", "var", "se", "oracle"], rows)})


# ---------------------------------------------------------------------------
# identity and Clark-Ocone


def _ladder_table(rep: dict) -> tuple[list, list]:
    head = ["dt", "residual_rms", "relative_rms", "lhs_rms", "max_abs_residual"] + [f"mean_{k}" for k in rep["term_mean"]]
    rows = []
    for q, dt in enumerate(rep["dts"]):
        rows.append(
            [dt, rep["residual_rms"][q], rep["relative_rms"][q], rep["lhs_rms"][q], rep["max_abs_residual"][q]]
            + [rep["term_mean"][k][q] for k in rep["term_mean"]]
        )
    return head, rows


def t4_support_check(field_id: str, H: float, dt: float, tau: float, n_paths: int, seed: int, x: float = 0.0) -> dict:
    """max |T4 integrand| over cells starting at or after tau, and over cells before it."""
    f = make_field(field_id)
    after, before = 0.0, 0.0
    for k in range(n_paths):
        lat = sample_lattice(1, dt, 1.0, 1.0, seed, k)
        _, integ = compute_terms(f, fbm_from_lattice(lat, H), [x], return_integrands=True)
        u = integ["c"] * dt
        q4 = np.abs(integ["q4"])
        late = u >= tau - 1e-12
        after = max(after, float(q4[late].max()) if late.any() else 0.0)
        before = max(before, float(q4[~late].max()) if (~late).any() else 0.0)
    return {"tau": tau, "max_after": after, "max_before": before, "n_paths": n_paths, "dt": dt}


def run_verify(cfg: ExperimentConfig) -> Outcome:
    g, p = cfg.grid, cfg.params
    f = make_field(cfg.field)
    dts = g.dts or [g.dt]
    kw = dict(
        d=cfg.d,
        t=g.T,
        left=g.L,
        seed=cfg.seed,
        workers=cfg.workers,
        field_id=cfg.field,
        t4_form=p.get("t4_form", "proof"),
        scheme=p.get("scheme"),
        tolerance=_tol(cfg, "relative_rms", None),
    )
    res: dict = {"regime": dict(getattr(f, "regime", {}) or {})}
    if "alpha" in p and "p" in p:
        res["regime"]["assumption"] = regime_check(cfg.H, float(p["alpha"]), float(p["p"]))
    if cfg.t1_reading == "auto":
        resolution = resolve_t1_reading(f, cfg.H, cfg.n_paths, dts, g.x_probes, **kw)
        res["t1_resolution"] = {"chosen": resolution["chosen"], "decays": resolution["decays"]}
        res["reports"] = resolution["reports"]
        rep = resolution["reports"][resolution["chosen"]]
    else:
        rep = verify_identity(f, cfg.H, cfg.n_paths, dts, g.x_probes, reading=cfg.t1_reading, **kw).to_dict()
        res["reports"] = {cfg.t1_reading: rep}
    crit = {}
    tol = _tol(cfg, "relative_rms", None)
    if tol is not None:
        crit["relative_rms_finest"] = bool(rep["relative_rms"][-1] < tol)
    if _tol(cfg, "require_decay", False):
        crit["positive_decay_slope"] = bool(rep["slope"] is not None and rep["slope"] > 0)
    if "abs_residual" in cfg.tolerances:
        crit["abs_residual"] = bool(max(rep["max_abs_residual"]) < cfg.tolerances["abs_residual"])
    if _tol(cfg, "terms_nonzero", False):
        crit["all_terms_nonzero"] = bool(all(rep["term_sd"][k][-1] > 1e-6 for k in ("t1", "t2", "t3", "t4")))
    if cfg.t1_reading == "auto" and "expect_reading" in p:
        crit["reading_resolved"] = res["t1_resolution"]["chosen"] == p["expect_reading"]
        others = [k for k in res["t1_resolution"]["decays"] if k != p["expect_reading"]]
        crit["other_reading_plateaus"] = not any(res["t1_resolution"]["decays"][k] for k in others)
    if "support_tau" in p:
        sup = t4_support_check(cfg.field, cfg.H, dts[-1], float(p["support_tau"]), int(p.get("support_paths", 4)), cfg.seed)
        res["t4_support"] = sup
        crit["t4_support_exact"] = bool(sup["max_after"] == 0.0 and sup["max_before"] > 0.0)
    tables = {}
    for name, r in res["reports"].items():
        tables[f"ladder_{name}"] = _ladder_table(r)
    plots = [(f"ladder_{name}", "dt", ["residual_rms"], True) for name in res["reports"]]
    return Outcome(res, crit, tables, plots)


def run_clark_ocone(cfg: ExperimentConfig) -> Outcome:
    functional = cfg.field.split(":", 1)[1] if cfg.field.startswith("functional:") else cfg.field
    dts = cfg.grid.dts or [cfg.grid.dt]
    res = clark_ocone_check(functional, cfg.n_paths, dts, t1=cfg.grid.T, seed=cfg.seed)
    crit = {}
    if "order" in cfg.tolerances:
        lo, hi = cfg.tolerances["order"]
        crit["order_in_band"] = bool(res["slope"] is not None and lo <= res["slope"] <= hi)
    if "relative_rms" in cfg.tolerances:
        crit["relative_rms_finest"] = bool(res["relative_rms"][-1] < cfg.tolerances["relative_rms"])
    if "abs_residual" in cfg.tolerances:
        crit["abs_residual"] = bool(max(res["max_abs_residual"]) < cfg.tolerances["abs_residual"])
    rows = [[d, r, q] for d, r, q in zip(res["dts"], res["residual_rms"], res["relative_rms"])]
    return Outcome(res, crit, {"ladder": (["dt", "residual_rms", "relative_rms"], rows)}, [("ladder", "dt", ["residual_rms"], True)])


# ---------------------------------------------------------------------------
# averaging


def run_regularity(cfg: ExperimentConfig) -> Outcome:
    p, g = cfg.params, cfg.grid
    ell = int(p.get("ell", 4))
    gaps = [float(v) for v in p["gaps"]] if "gaps" in p else [2.0**-k for k in range(10, 3, -1)]
    res = regularity_moment_scan(
        make_field(cfg.field),
        cfg.H,
        ell=ell,
        gamma=float(p.get("gamma", 0.1)),
        n_paths=cfg.n_paths,
        gaps=gaps,
        dt=g.dt,
        left=g.L,
        seed=cfg.seed,
        quadrature=p.get("quadrature"),
        n_boot=int(p.get("n_boot", 400)),
        workers=cfg.workers,
    )
    res["field"] = cfg.field
    threshold = _tol(cfg, "slope_min", 0.5 + 1.0 / ell - 0.1)
    crit = {"slope_above_threshold": bool(res["slope"] > threshold)}
    res["threshold"] = threshold
    if _tol(cfg, "ci_excludes", None) is not None:
        crit["ci_excludes_value"] = bool(res["ci"][0] > cfg.tolerances["ci_excludes"])
    rows = [[h, m] for h, m in zip(res["gaps"], res["moments"])]
    return Outcome(res, crit, {"moments": (["gap", "moment"], rows)}, [("moments", "gap", ["moment"], True)])


def run_roughness(cfg: ExperimentConfig) -> Outcome:
    p = cfg.params
    res = roughness_stress_test(
        [int(k) for k in p.get("Ks", [1, 2, 4, 8, 16, 32, 64, 128, 256])],
        cfg.H,
        n_paths=cfg.n_paths,
        T=cfg.grid.T,
        dt=cfg.grid.dt,
        left=cfg.grid.L,
        seed=cfg.seed,
        family_seed=int(p.get("family_seed", 0)),
        quadrature=p.get("quadrature", "bridge"),
    )
    K = res["K"]
    lo, hi = int(p.get("K_from", 32)), int(p.get("K_to", 256))
    i, j = K.index(lo), K.index(hi)
    res["noise_ratio"] = res["noise"][j] / res["noise"][i]
    res["control_ratio"] = res["control"][j] / res["control"][i]
    crit = {
        "noise_ratio_small": bool(res["noise_ratio"] < _tol(cfg, "noise_ratio_max", 2.0)),
        "control_ratio_large": bool(res["control_ratio"] > _tol(cfg, "control_ratio_min", 4.0)),
    }
    rows = [[k, n, c] for k, n, c in zip(K, res["noise"], res["control"])]
    return Outcome(res, crit, {"stress": (["K", "noise", "control"], rows)}, [("stress", "K", ["noise", "control"], True)])


# ---------------------------------------------------------------------------
# Young ODE


def _sde_path(cfg: ExperimentConfig):
    g = cfg.grid
    lat = sample_lattice(1, g.dt, g.L, g.T, cfg.seed, int(cfg.params.get("path_index", 0)), tail=True)
    return fbm_from_lattice(lat, cfg.H)


def run_solve_sde(cfg: ExperimentConfig) -> Outcome:
    p, g = cfg.params, cfg.grid
    path = _sde_path(cfg)
    b = make_field(cfg.field)
    Y0 = float(p.get("Y0", 0.0))
    prof = b.profile
    periodic = bool(getattr(prof, "periodic", False))
    if periodic:
        x = np.arange(g.M) * (prof.circumference / g.M)
    else:
        half = float(p.get("window", 4.0))
        x = np.linspace(Y0 - half, Y0 + half, g.M + 1)
    A = compute_A(b, path, x, quadrature=p.get("quadrature", "bridge" if hasattr(prof, "k") else "trapezoid"))
    stride = int(p.get("stride", 1))
    sol = solve_yode(A, Y0, stride, gamma=float(p.get("gamma", 0.5)))
    X = sde_reconstruct(sol, path)
    res = {"Y0": Y0, "Y_T": float(sol.values[-1]), "X_T": float(X[-1]), "diagnostics": sol.diagnostics, "space_points": int(x.size)}
    rows = [[t, y, xx] for t, y, xx in zip(sol.t, sol.values, X)]
    crit = {"finite": bool(np.all(np.isfinite(X)))}
    return Outcome(res, crit, {"solution": (["t", "Y", "X"], rows)}, [("solution", "t", ["Y", "X"], False)])


def run_euler_crosscheck(cfg: ExperimentConfig) -> Outcome:
    p = cfg.params
    path = _sde_path(cfg)
    out = euler_crosscheck(make_field(cfg.field), path, float(p.get("Y0", 1.0)), int(p.get("stride", 4)), n_space=cfg.grid.M + 1)
    rows = [[t, a, b] for t, a, b in zip(out.pop("t"), out.pop("X_young"), out.pop("X_euler"))]
    crit = {"sup_difference": bool(out["sup_diff"] < _tol(cfg, "sup_diff", 1e-3))}
    return Outcome(out, crit, {"paths": (["t", "X_young", "X_euler"], rows)}, [("paths", "t", ["X_young", "X_euler"], False)])


RUNNERS: dict[str, Callable[[ExperimentConfig], Outcome]] = {
    "simulate-fbm": run_simulate_fbm,
    "verify-ito-tanaka": run_verify,
    "clark-ocone": run_clark_ocone,
    "regularity-scan": run_regularity,
    "solve-sde": run_solve_sde,
    "euler-crosscheck": run_euler_crosscheck,
    "roughness-stress": run_roughness,
}


def run_experiment(cfg: ExperimentConfig) -> Outcome:
    return RUNNERS[cfg.experiment](cfg)
