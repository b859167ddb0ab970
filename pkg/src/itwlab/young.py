"""Nonlinear Young integrals and the Young ODE Y_t = Y_0 + int_0^t A_{ds}(Y_s).

The integral int_s^t A_{dr}(Y_r) is the limit of Riemann sums
sum delta A_{u,v}(Y_u) over partitions of [s, t]. The sewing lemma bounds the
distance between any partition sum and the limit by

    C_theta ||A||_{beta,gamma} ||Y||_rho^gamma |Pi|^{theta - 1} (t - s),
    theta = beta + gamma rho > 1,  C_theta = 2^theta zeta(theta),

which is the envelope used by :func:`partition_check`.

The ODE is solved by the explicit step Y_{i+1} = Y_i + delta A_{t_i, t_{i+1}}(Y_i)
(Davie scheme), which only needs increments of A and therefore works for drifts
that have no pointwise values. The SDE solution is recovered as X = Y + W^H.

Increments can come from an :class:`~itwlab.averaging.AveragedField` (partition
points must then be nodes of its time grid) or from a callable
``delta(u, v, y)`` accepting arrays.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import zeta

from .averaging import AveragedField, compute_A
from .fbm import FbmPath
from .function_space import holder_exponent_fit

__all__ = [
    "Partition",
    "YoungIntegral",
    "YoungSolution",
    "NonConvergence",
    "WindowExit",
    "riemann_sum",
    "young_integral",
    "solve_yode",
    "local_order",
    "apriori_bound_check",
    "sewing_constant",
    "partition_check",
    "sde_reconstruct",
    "euler_crosscheck",
    "uniqueness_probe",
    "peano_witness",
    "holder_proxy",
]


class NonConvergence(RuntimeError):
    """Dyadic refinement stopped before successive sums agreed to the tolerance."""

    def __init__(self, msg: str, value: float, residual: float, level: int):
        super().__init__(msg)
        self.value, self.residual, self.level = value, residual, level


class WindowExit(RuntimeError):
    """The solution left the spatial window on which A is tabulated."""

    def __init__(self, msg: str, time: float, position: float):
        super().__init__(msg)
        self.time, self.position = time, position


# ---------------------------------------------------------------------------
# partitions and increments


@dataclass(frozen=True)
class Partition:
    """Ordered breakpoints s = p_0 < ... < p_n = t."""

    points: np.ndarray
    level: int | None = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("a partition needs at least two points")
        if np.any(np.diff(p) <= 0):
            raise ValueError("partition points must be strictly increasing")
        object.__setattr__(self, "points", p)

    @property
    def s(self) -> float:
        return float(self.points[0])

    @property
    def t(self) -> float:
        return float(self.points[-1])

    @property
    def mesh(self) -> float:
        return float(np.diff(self.points).max())

    def __len__(self) -> int:
        return self.points.size - 1

    @classmethod
    def dyadic(cls, s: float, t: float, level: int) -> "Partition":
        return cls(np.linspace(s, t, 2**level + 1), level)

    @classmethod
    def random(cls, grid: np.ndarray, n: int, rng: np.random.Generator) -> "Partition":
        """n intervals with breakpoints drawn among ``grid`` nodes, one per equal block.

        Every interval is shorter than two blocks, so partitions drawn with the
        same n share the same nominal mesh.
        """
        grid = np.asarray(grid, dtype=float)
        m = grid.size - 1
        if n > m:
            raise ValueError("more intervals than grid cells")
        block = m / n
        centres = np.arange(1, n) * block
        jitter = rng.uniform(-0.5, 0.5, n - 1) * (block - 1)
        idx = np.unique(np.concatenate([[0], np.rint(centres + jitter), [m]]).astype(int))
        return cls(grid[idx])


class _Increments:
    """Uniform access to delta A_{u,v}(y) from a tabulated field or a callable."""

    def __init__(self, A):
        self.A = A
        self.tabulated = isinstance(A, AveragedField)
        if not self.tabulated and not callable(A):
            raise TypeError("A must be an AveragedField or a callable delta(u, v, y)")

    def index(self, times) -> np.ndarray:
        t = np.asarray(times, dtype=float)
        idx = np.searchsorted(self.A.t, t)
        idx = np.clip(idx, 0, self.A.t.size - 1)
        lo = np.clip(idx - 1, 0, None)
        idx = np.where(np.abs(self.A.t[lo] - t) < np.abs(self.A.t[idx] - t), lo, idx)
        if not np.allclose(self.A.t[idx], t, rtol=0, atol=1e-9 * max(1.0, float(np.abs(self.A.t).max()))):
            raise ValueError("partition points must be nodes of the tabulated time grid")
        return idx

    def __call__(self, u, v, y) -> np.ndarray:
        if self.tabulated:
            return self.A.delta_pairs(self.index(u), self.index(v), y)
        return np.asarray(self.A(np.asarray(u, float), np.asarray(v, float), np.asarray(y, float)), dtype=float)

    def max_level(self, s: float, t: float) -> int:
        """Deepest dyadic level whose points are all grid nodes (callables: unbounded)."""
        if not self.tabulated:
            return 10**6
        i, j = self.index([s, t])
        n = int(j - i)
        return (n & -n).bit_length() - 1 if n > 0 else 0


def _path_eval(Y, times: np.ndarray, inc: _Increments) -> np.ndarray:
    if callable(Y):
        return np.asarray(Y(times), dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 0:
        return np.full(times.shape, float(Y))
    if not inc.tabulated or Y.shape[0] != inc.A.t.size:
        raise ValueError("array paths must be sampled on the time grid of A")
    return Y[inc.index(times)]


def riemann_sum(A, Y, partition: Partition) -> float:
    """sum over the partition of delta A_{u,v}(Y_u)."""
    inc = _Increments(A)
    u, v = partition.points[:-1], partition.points[1:]
    return float(inc(u, v, _path_eval(Y, u, inc)).sum())


# ---------------------------------------------------------------------------
# integral


@dataclass
class YoungIntegral:
    value: float
    error: float
    level: int
    converged: bool
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"value": self.value, "error": self.error, "level": self.level, "converged": self.converged, "history": self.history}


def young_integral(
    A,
    Y,
    s: float,
    t: float,
    tol: float = 1e-6,
    max_depth: int = 16,
    *,
    strict: bool = True,
    theta: float | None = None,
) -> YoungIntegral:
    """int_s^t A_{dr}(Y_r) by dyadic refinement of Riemann sums.

    Parameters
    ----------
    A : AveragedField or callable
        Source of increments delta A_{u,v}(y).
    Y : callable, scalar, or array on ``A.t``
        The integrand path.
    tol : float
        Stop once two consecutive refinements each change the sum by less
        than ``tol``. A single small change can be a chance near-coincidence
        of two coarse sums on a rough field.
    max_depth : int
        Deepest level tried; for tabulated A the time grid may cap it earlier.
    strict : bool
        Raise :class:`NonConvergence` (carrying the Cauchy residual) when the
        tolerance is not met; otherwise return with ``converged=False``.
    theta : float, optional
        Estimated beta + gamma rho; a warning is issued when it is not above 1.
    """
    if not t > s:
        raise ValueError("need s < t")
    if theta is not None and theta <= 1:
        warnings.warn(f"beta + gamma rho = {theta:.3f} <= 1: Riemann sums need not converge", stacklevel=2)
    inc = _Increments(A)
    depth = min(max_depth, inc.max_level(s, t))
    hist = []
    prev = None
    calm = 0
    for level in range(depth + 1):
        val = riemann_sum(A, Y, Partition.dyadic(s, t, level))
        if prev is not None:
            err = abs(val - prev)
            hist.append({"level": level, "value": val, "diff": err})
            calm = calm + 1 if err < tol else 0
            if calm == 2:
                return YoungIntegral(val, err, level, True, hist)
        else:
            hist.append({"level": 0, "value": val, "diff": None})
        prev = val
    err = hist[-1]["diff"] if len(hist) > 1 else math.inf
    if strict:
        raise NonConvergence(
            f"no convergence to tol {tol:g} by level {depth}: Cauchy residual {err:.3e}", prev, err, depth
        )
    return YoungIntegral(prev, err, depth, False, hist)


def sewing_constant(theta: float) -> float:
    """C_theta = 2^theta zeta(theta) of the sewing lemma, theta > 1."""
    if theta <= 1:
        raise ValueError("the sewing constant needs theta > 1")
    return float(2.0**theta * zeta(theta))


def holder_proxy(values: np.ndarray, times: np.ndarray, rho: float) -> float:
    """max over dyadic index lags h of sup_i |Y_{i+h} - Y_i| / (t_{i+h} - t_i)^rho."""
    v = np.asarray(values, dtype=float)
    v = v.reshape(v.shape[0], -1)
    best, lag = 0.0, 1
    while lag < v.shape[0]:
        d = np.abs(v[lag:] - v[:-lag]).max(axis=1)
        h = times[lag:] - times[:-lag]
        best = max(best, float((d / h**rho).max()))
        lag *= 2
    return best


def partition_check(
    A: AveragedField,
    Y,
    s: float,
    t: float,
    n_intervals: int,
    *,
    beta: float,
    gamma: float,
    rho: float,
    n_pairs: int = 8,
    seed: int = 0,
) -> dict:
    """Sums over pairs of random partitions with the same number of intervals stay inside the sewing envelope.

    The envelope is 2 C_theta K |Pi|^{theta - 1} (t - s) with
    K = sup |delta A_{u,v}(x) - delta A_{u,v}(y)| / (|v - u|^beta |x - y|^gamma)
    measured on the tabulated grid and the Hoelder-rho proxy of Y.
    """
    inc = _Increments(A)
    i, j = inc.index([s, t])
    grid = A.t[i : j + 1]
    ys = _path_eval(Y, grid, inc)
    theta = beta + gamma * rho
    K = _spatial_holder_constant(A, beta, gamma, i, j)
    yr = holder_proxy(ys, grid, rho)
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_pairs):
        p1 = Partition.random(grid, n_intervals, rng)
        p2 = Partition.random(grid, n_intervals, rng)
        mesh = max(p1.mesh, p2.mesh)
        env = 2 * sewing_constant(theta) * K * yr**gamma * mesh ** (theta - 1) * (t - s)
        d = abs(riemann_sum(A, Y, p1) - riemann_sum(A, Y, p2))
        rows.append({"mesh": mesh, "diff": d, "envelope": env, "ok": bool(d <= env)})
    return {"theta": theta, "A_norm": K, "Y_norm": yr, "pairs": rows, "ok": all(r["ok"] for r in rows)}


def _spatial_holder_constant(A: AveragedField, beta: float, gamma: float, i: int, j: int) -> float:
    """sup over dyadic time gaps of the gamma-Hoelder seminorm in x of delta A, over |v - u|^beta."""
    best, g = 0.0, 1
    x = A.x
    while g <= j - i:
        for a in range(i, j - g + 1, g):
            v = A.delta(a, a + g)
            lag, sn = 1, 0.0
            while lag < x.size:
                if A.periodic:
                    d = np.abs(np.roll(v, -lag) - v)
                    dist = min(lag, x.size - lag) * A.dx
                else:
                    d = np.abs(v[lag:] - v[:-lag])
                    dist = lag * A.dx
                sn = max(sn, float(d.max()) / dist**gamma)
                lag *= 2
            best = max(best, sn / (A.t[a + g] - A.t[a]) ** beta)
        g *= 2
    return best


# ---------------------------------------------------------------------------
# Young ODE


@dataclass
class YoungSolution:
    """Davie-scheme solution on a time grid; ``values`` has shape (n + 1, *Y0.shape)."""

    t: np.ndarray
    values: np.ndarray
    increments: np.ndarray
    Y0: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def to_csv(self, path, X: np.ndarray | None = None) -> None:
        import csv

        vals = self.values.reshape(self.t.size, -1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            nc = vals.shape[1]
            head = ["t"] + [f"Y{c}" for c in range(nc)]
            if X is not None:
                head += [f"X{c}" for c in range(nc)]
                X = np.asarray(X).reshape(self.t.size, -1)
            w.writerow(head)
            for r in range(self.t.size):
                row = [repr(float(self.t[r]))] + [repr(float(v)) for v in vals[r]]
                if X is not None:
                    row += [repr(float(v)) for v in X[r]]
                w.writerow(row)


def _grid(A, stride: int, grid) -> np.ndarray:
    if grid is not None:
        return np.asarray(grid, dtype=float)
    if not isinstance(A, AveragedField):
        raise ValueError("a callable A needs an explicit grid")
    if (A.t.size - 1) % stride:
        raise ValueError("stride must divide the number of time steps of A")
    return A.t[::stride]


def _davie(inc: _Increments, Y0: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    Y = np.empty((t.size,) + Y0.shape)
    dY = np.empty((t.size - 1,) + Y0.shape)
    Y[0] = Y0
    for i in range(t.size - 1):
        try:
            dY[i] = inc(t[i], t[i + 1], Y[i])
        except ValueError as exc:
            if "outside the tabulated window" not in str(exc):
                raise
            pos = float(np.asarray(Y[i]).flat[np.argmax(np.abs(np.asarray(Y[i]).ravel()))])
            raise WindowExit(f"solution left the spatial window at t = {t[i]:.6g}, Y = {pos:.6g}", float(t[i]), pos) from exc
        Y[i + 1] = Y[i] + dY[i]
        if not np.all(np.isfinite(Y[i + 1])):
            raise FloatingPointError(f"non-finite solution at t = {t[i + 1]:.6g}")
    return Y, dY


def solve_yode(
    A,
    Y0,
    stride: int = 1,
    *,
    grid: Sequence[float] | None = None,
    beta: float | None = None,
    gamma: float = 0.5,
    diagnostics: bool = True,
) -> YoungSolution:
    """Solve Y_t = Y_0 + int_0^t A_{ds}(Y_s) with Y_{i+1} = Y_i + delta A_{t_i, t_{i+1}}(Y_i).

    Parameters
    ----------
    A : AveragedField or callable delta(u, v, y)
        Tabulated fields are stepped on every ``stride``-th node.
    Y0 : float or array
        Initial values; an array solves several initial conditions at once.
    beta, gamma : float
        Time and space exponents for the diagnostics. ``beta`` is fitted from
        A when not given and A is tabulated.
    diagnostics : bool
        Add the Richardson half-step error, the empirical order over three
        step sizes, and the C^beta proxy of Y.

    Raises
    ------
    WindowExit
        When Y leaves the spatial window of a non-periodic tabulated A.
    """
    inc = _Increments(A)
    Y0 = np.asarray(Y0, dtype=float)
    t = _grid(A, stride, grid)
    Y, dY = _davie(inc, Y0, t)
    diag: dict = {"stride": stride, "n_steps": t.size - 1, "dt": float(t[1] - t[0])}
    if diagnostics:
        diag.update(_richardson(inc, Y0, t, Y))
        if beta is None and inc.tabulated:
            try:
                fit = holder_exponent_fit(A, gamma, gaps=[2**j for j in range(int(math.log2(A.t.size - 1)) + 1)])
                beta = fit["beta"]
            except (ValueError, MemoryError):
                beta = None
        if beta is not None and np.isfinite(beta):
            diag["beta"] = float(beta)
            diag["gamma"] = float(gamma)
            diag["beta_1_plus_gamma"] = float(beta * (1 + gamma))
            diag["beta_1_plus_gamma_gt_1"] = bool(beta * (1 + gamma) > 1)
            diag["holder_proxy"] = holder_proxy(Y, t, min(beta, 1.0))
    return YoungSolution(t, Y, dY, Y0, diag)


def _richardson(inc: _Increments, Y0: np.ndarray, t: np.ndarray, Y: np.ndarray) -> dict:
    """Compare the solution with runs on every second and every fourth node."""
    n = t.size - 1
    if n % 4:
        return {}
    Y2, _ = _davie(inc, Y0, t[::2])
    Y4, _ = _davie(inc, Y0, t[::4])
    e1 = float(np.abs(Y[::2] - Y2).max())
    e2 = float(np.abs(Y2[::2] - Y4).max())
    order = math.log2(e2 / e1) if e1 > 0 and e2 > 0 else math.nan
    return {"richardson_error": e1, "empirical_order": order}


def local_order(A, Y0: float, h_list: Sequence[float] | None = None, *, t0: float = 0.0, ref_steps: int = 64) -> dict:
    """Fitted order of the one-step error |Y0 + delta A_{t0, t0+h}(Y0) - Y(t0 + h)|.

    The reference Y(t0 + h) is the Davie solution with ``ref_steps`` substeps
    extrapolated by one Richardson step. Callables only, so the substeps can be
    placed anywhere.
    """
    inc = _Increments(A)
    if inc.tabulated:
        raise ValueError("local_order needs a callable A")
    h_list = list(h_list or [2.0**-k for k in range(3, 7)])
    if len(h_list) < 4:
        raise ValueError("need at least 4 step sizes")
    Y0a = np.asarray(Y0, dtype=float)
    errs = []
    for h in h_list:
        one = Y0a + inc(t0, t0 + h, Y0a)
        fine = _davie(inc, Y0a, np.linspace(t0, t0 + h, ref_steps + 1))[0][-1]
        half = _davie(inc, Y0a, np.linspace(t0, t0 + h, ref_steps // 2 + 1))[0][-1]
        ref = 2 * fine - half
        errs.append(float(np.abs(one - ref).max()))
    errs = np.array(errs)
    slope = float(np.polyfit(np.log(h_list), np.log(errs), 1)[0]) if np.all(errs > 0) else math.nan
    return {"h": h_list, "error": errs.tolist(), "order": slope}


def apriori_bound_check(
    A, Y0s: Sequence[float] = (0.0, 1.0, 10.0), *, beta: float, stride: int = 1, grid=None, ref: float = 1.0, factor: float = 4.0
) -> dict:
    """||Y||_{C^beta} proxy against the shape C (|Y0| + 1).

    C is fitted at Y0 = ``ref``; the bound shape is accepted when every other
    ratio proxy / (|Y0| + 1) stays below ``factor`` C.
    """
    ratios = {}
    for y0 in Y0s:
        sol = solve_yode(A, y0, stride, grid=grid, diagnostics=False)
        ratios[float(y0)] = holder_proxy(sol.values, sol.t, beta) / (abs(y0) + 1.0)
    if float(ref) not in ratios:
        raise ValueError("the reference initial value must be among Y0s")
    C = ratios[float(ref)]
    return {
        "beta": beta,
        "C": C,
        "ratios": ratios,
        "factor": factor,
        "stable": bool(all(r <= factor * C for r in ratios.values())),
    }


# ---------------------------------------------------------------------------
# SDE reconstruction and checks


def sde_reconstruct(Y: YoungSolution, path: FbmPath) -> np.ndarray:
    """X = Y + W^H on the solver grid; the grid must consist of path nodes."""
    if path.d != 1:
        raise ValueError("reconstruction is implemented for d = 1")
    times = path.times
    idx = np.searchsorted(times, Y.t - 1e-12)
    idx = np.clip(idx, 0, times.size - 1)
    if not np.allclose(times[idx], Y.t, rtol=0, atol=1e-12):
        raise ValueError("solver grid is not a subset of the path grid")
    w = path.values[0][idx]
    return Y.values + w.reshape((-1,) + (1,) * (Y.values.ndim - 1))


def euler_crosscheck(
    b,
    path: FbmPath,
    Y0: float,
    stride: int = 4,
    *,
    window: tuple[float, float] | None = None,
    n_space: int = 1025,
) -> dict:
    """sup_i |X^young_i - X^euler_i| on the solver grid for a smooth drift b(y).

    A is tabulated on every path node over ``window`` (default: Y0 +- 6 plus
    the path range), the Young solver steps every ``stride`` nodes and the
    Euler scheme X_{i+1} = X_i + b(X_i) h + (W_{i+1} - W_i) uses the same nodes.
    """
    w = path.values[0]
    if window is None:
        span = float(np.abs(w).max())
        window = (Y0 - 6 - span, Y0 + 6 + span)
    x = np.linspace(window[0], window[1], n_space)
    A = compute_A(b, path, x)
    sol = solve_yode(A, Y0, stride, diagnostics=False)
    X = sde_reconstruct(sol, path)
    bf = _pointwise(b)
    t = sol.t
    ws = w[::stride]
    Xe = np.empty_like(t)
    Xe[0] = Y0 + ws[0]
    for i in range(t.size - 1):
        Xe[i + 1] = Xe[i] + bf(t[i], Xe[i]) * (t[i + 1] - t[i]) + (ws[i + 1] - ws[i])
    return {
        "sup_diff": float(np.abs(X - Xe).max()),
        "dt_solver": float(t[1] - t[0]),
        "dt_A": float(path.lattice.dt),
        "window": list(window),
        "n_space": n_space,
        "t": t,
        "X_young": X,
        "X_euler": Xe,
    }


def _pointwise(b) -> Callable:
    from .fields import SeparableField, SpatialProfile

    if isinstance(b, SeparableField):
        if not b.deterministic:
            raise ValueError("the cross-check needs a deterministic drift")
        return lambda s, y: float(b.theta(np.asarray(s))) * float(b.profile.value(np.array([[y]]))[0])
    if isinstance(b, SpatialProfile):
        return lambda s, y: float(b.value(np.array([[y]]))[0])
    return lambda s, y: float(b(s, y))


def uniqueness_probe(A, Y0: float, lip: float, *, delta: float = 1e-6, tol: float = 1e-4, stride: int = 1, grid=None) -> dict:
    """Runs from Y0 and Y0 + delta stay within tol e^{lip T} (and report the Groenwall bound delta e^{lip T})."""
    sol = solve_yode(A, np.array([Y0, Y0 + delta]), stride, grid=grid, diagnostics=False)
    gap = np.abs(sol.values[:, 1] - sol.values[:, 0])
    T = float(sol.t[-1] - sol.t[0])
    env = tol * math.exp(lip * T)
    return {
        "sup_gap": float(gap.max()),
        "envelope": env,
        "gronwall": delta * math.exp(lip * T),
        "lip": lip,
        "ok": bool(gap.max() <= env),
    }


def peano_witness(
    T: float = 1.0, dt: float = 2.0**-12, eps: float = 1e-8, scale: float = math.sqrt(2.0)
) -> dict:
    """Noiseless Peano ODE y' = scale sgn(y) sqrt|y| from 0 and from +-eps.

    With W = 0 the averaged field is A_u(x) = u b(x) exactly. From 0 the scheme
    stays at 0; from +-eps it follows +-(t - t0)^2 scale^2 / 4 with
    t0 = -2 sqrt(eps) / scale, which is +-(t - t0)^2 / 2 for scale sqrt 2.
    """

    def delta(u, v, y):
        return (v - u) * scale * np.sign(y) * np.sqrt(np.abs(y))

    t = np.arange(0.0, T + dt / 2, dt)
    Y0 = np.array([0.0, eps, -eps])
    Y, _ = _davie(_Increments(delta), Y0, t)
    t0 = -2 * math.sqrt(eps) / scale
    env = scale**2 / 4 * (t - t0) ** 2
    rel = np.abs(Y[1:, 1:] - np.stack([env[1:], -env[1:]], axis=1)) / env[1:, None]
    return {
        "t": t,
        "Y": Y,
        "zero_stays": bool(np.all(Y[:, 0] == 0)),
        "final": Y[-1].tolist(),
        "envelope_final": float(env[-1]),
        "rel_error_final": float(rel[-1].max()),
        "rel_error_late": float(rel[t[1:] >= 0.25 * T].max()),
    }
