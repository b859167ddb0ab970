"""Heat semigroup, Sobolev and Hölder norms on periodic grids.

The torus [0, L)^d with L = 2 pi by default stands in for R^d: Fourier
multipliers are then exact, and every catalog profile is either periodic or
negligible near the boundary. The heat semigroup is P_tau f = f * N(0, tau I),
so its symbol is exp(-tau |xi|^2 / 2).

Hölder-type norms are grid proxies. For a function h on the grid,

    C^{1+gamma} proxy = sup|h| + sup|grad h| + max_j max_x |grad h(x + h_j) - grad h(x)| / h_j^gamma

over dyadic lags h_j = 2^j dx along each axis (j = 0 .. log2(M) - 2), with
spectral gradients. These are estimators tied to the grid resolution, which
every NormReport records.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "GridField",
    "NormReport",
    "SmoothingFit",
    "heat_apply",
    "sobolev_norm",
    "c1gamma_proxy",
    "c1gamma_from_samples",
    "smoothing_check",
    "smoothing_envelope",
    "heat_operator_norm",
    "holder_two_param_norm",
    "holder_exponent_fit",
    "sobolev_embedding_probe",
]


def _is_pow2(m: int) -> bool:
    return m > 0 and m & (m - 1) == 0


@dataclass
class GridField:
    """Real values on a uniform periodic grid with M points per axis, d <= 2.

    Grid points are x_i = origin + i L / M. The Fourier transform is cached
    per instance and never shared.
    """

    values: np.ndarray
    length: float = 2 * math.pi
    origin: float = 0.0
    _fft: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim not in (1, 2):
            raise ValueError("GridField supports d = 1 or 2")
        if len(set(self.values.shape)) != 1 or not _is_pow2(self.values.shape[0]):
            raise ValueError(f"grid must be M^d with M a power of two, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("GridField values must be finite")

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def M(self) -> int:
        return self.values.shape[0]

    @property
    def dx(self) -> float:
        return self.length / self.M

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    def axis(self) -> np.ndarray:
        return self.origin + np.arange(self.M) * self.dx

    def points(self) -> np.ndarray:
        """Grid coordinates with the coordinate on the last axis, shape (M, ..., d)."""
        ax = self.axis()
        mesh = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    @classmethod
    def from_function(cls, fn: Callable, M: int, d: int = 1, length: float = 2 * math.pi, origin: float = 0.0):
        """Sample ``fn(y)`` with ``y.shape == (..., d)`` on the grid."""
        probe = cls(np.zeros((M,) * d), length, origin)
        return cls(np.asarray(fn(probe.points()), dtype=float), length, origin)

    def with_values(self, values) -> "GridField":
        return GridField(np.real_if_close(values).real, self.length, self.origin)

    def wavenumbers(self) -> list[np.ndarray]:
        k = 2 * math.pi * np.fft.fftfreq(self.M, d=self.dx)
        return np.meshgrid(*([k] * self.d), indexing="ij")

    def k2(self) -> np.ndarray:
        return sum(kk**2 for kk in self.wavenumbers())

    def fft(self) -> np.ndarray:
        if self._fft is None:
            self._fft = np.fft.fftn(self.values)
            self._fft.flags.writeable = False
        return self._fft

    def from_spectrum(self, spec: np.ndarray) -> "GridField":
        return GridField(np.fft.ifftn(spec).real, self.length, self.origin)

    def grad(self) -> np.ndarray:
        """Spectral gradient, shape (M, ..., d)."""
        spec = self.fft()
        return np.stack([np.fft.ifftn(1j * kk * spec).real for kk in self.wavenumbers()], axis=-1)

    def mean(self) -> float:
        return float(self.values.mean())

    def lp_norm(self, p: float = 2.0) -> float:
        a = np.abs(self.values)
        if math.isinf(p):
            return float(a.max())
        return float((self.cell_volume * (a**p).sum()) ** (1.0 / p))

    def to_csv(self, path) -> None:
        pts = self.points().reshape(-1, self.d)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j + 1}" for j in range(self.d)] + ["value"])
            for p, v in zip(pts, self.values.reshape(-1)):
                w.writerow([repr(float(c)) for c in p] + [repr(float(v))])

    @classmethod
    def from_csv(cls, path, length: float = 2 * math.pi) -> "GridField":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        d = len(header) - 1
        M = round(body.shape[0] ** (1.0 / d))
        if M**d != body.shape[0]:
            raise ValueError(f"{path}: {body.shape[0]} rows is not M^{d}")
        return cls(body[:, -1].reshape((M,) * d), length, float(body[0, 0]))


@dataclass
class NormReport:
    """A norm value with everything needed to recompute it."""

    kind: str
    params: dict
    value: float
    resolution: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.value >= 0:
            raise ValueError(f"norm must be nonnegative, got {self.value}")

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# heat semigroup


def heat_apply(g, tau: float, y: np.ndarray | None = None):
    """P_tau g for a GridField (spectral) or a spatial profile (closed form or Gauss-Hermite).

    For a profile, returns the values at ``y`` when given and otherwise a
    callable ``y -> P_tau g(y)``. Profiles without a closed form fall back to
    21-node Gauss-Hermite quadrature per axis.
    """
    if not np.all(np.asarray(tau) >= 0):
        raise ValueError("heat time must be nonnegative")
    if isinstance(g, GridField):
        if tau == 0:
            return g
        return g.from_spectrum(g.fft() * np.exp(-0.5 * tau * g.k2()))
    if y is None:
        return lambda z: g.heat(tau, np.asarray(z, dtype=float))
    return g.heat(tau, np.asarray(y, dtype=float))


def heat_operator_norm(tau: float, m_from: float, m_to: float, M: int = 1024, length: float = 2 * math.pi) -> float:
    """Exact norm of P_tau from H^{m_from} to H^{m_to} on the grid: sup_xi (1+xi^2)^{(m_to-m_from)/2} e^{-tau xi^2/2}."""
    k = 2 * math.pi * np.fft.fftfreq(M, d=length / M)
    return float(np.max((1 + k**2) ** (0.5 * (m_to - m_from)) * np.exp(-0.5 * tau * k**2)))


# ---------------------------------------------------------------------------
# norms


def _bessel(g: GridField, m: float) -> np.ndarray:
    return g.fft() * (1.0 + g.k2()) ** (0.5 * m)


def sobolev_norm(g: GridField, m: float, p: float = 2.0) -> NormReport:
    """||(1 - Delta)^{m/2} g||_{L^p} via the Bessel multiplier.

    For p = 2 this is computed exactly by Plancherel; other p use grid
    quadrature of the inverse transform.
    """
    if p < 1:
        raise ValueError("need p >= 1")
    if not np.all(np.isfinite(g.values)):
        raise ValueError("NaN in field")
    spec = _bessel(g, m)
    if p == 2:
        n = g.values.size
        value = math.sqrt(g.cell_volume * float((np.abs(spec) ** 2).sum()) / n)
        route = "plancherel"
    else:
        value = GridField(np.fft.ifftn(spec).real, g.length).lp_norm(p)
        route = "quadrature"
    return NormReport("sobolev", {"m": m, "p": p}, value, g.M, {"route": route, "d": g.d, "length": g.length})


def _shift_lags(M: int) -> list[int]:
    return [2**j for j in range(max(int(math.log2(M)) - 1, 1))]


def c1gamma_from_samples(values: np.ndarray, grad: np.ndarray, dx: float, gamma: float, periodic: bool) -> float:
    """C^{1+gamma} proxy from samples of h and grad h on a uniform grid.

    ``values`` has shape (M, ..., M) and ``grad`` the same shape plus a
    trailing axis d. Periodic grids difference with wrap-around, others only
    over pairs inside the window.
    """
    if not 0 < gamma < 1:
        raise ValueError("need 0 < gamma < 1")
    d = grad.shape[-1]
    gnorm = np.sqrt((grad**2).sum(axis=-1))
    out = float(np.abs(values).max() + gnorm.max())
    M = values.shape[0]
    hold = 0.0
    for lag in _shift_lags(M):
        for ax in range(d):
            if periodic:
                diff = np.roll(grad, -lag, axis=ax) - grad
            else:
                hi = [slice(None)] * values.ndim
                lo = [slice(None)] * values.ndim
                hi[ax], lo[ax] = slice(lag, None), slice(None, -lag)
                diff = grad[tuple(hi)] - grad[tuple(lo)]
            hold = max(hold, float(np.sqrt((diff**2).sum(axis=-1)).max()) / (lag * dx) ** gamma)
    return out + hold


def c1gamma_proxy(g: GridField | np.ndarray, gamma: float, length: float = 2 * math.pi) -> float:
    """Grid C^{1+gamma} proxy (see module docstring) with spectral gradients.

    Accepts a GridField or a periodic (M,) array on [0, length).
    """
    if not isinstance(g, GridField):
        g = GridField(np.asarray(g, dtype=float), length)
    return c1gamma_from_samples(g.values, g.grad(), g.dx, gamma, periodic=True)


@dataclass
class SmoothingFit:
    slope: float
    intercept: float
    constant: float
    taus: list
    norms: list
    gamma: float
    m: float
    p: float

    def to_dict(self) -> dict:
        return asdict(self)


def _check_taus(taus) -> np.ndarray:
    taus = np.asarray(taus, dtype=float)
    if taus.size < 6:
        raise ValueError("need at least 6 heat times")
    if np.any(taus <= 0):
        raise ValueError("heat times must be positive")
    ratios = np.diff(np.log(taus))
    if not np.allclose(ratios, ratios[0], rtol=1e-6):
        raise ValueError("heat times must be log-spaced")
    return taus


def smoothing_check(f: GridField, gamma: float, m: float, p: float, taus: Sequence[float]) -> SmoothingFit:
    """Slope of log ||P_tau f||_{W^{m,p}} against log tau, and sup_tau tau^{gamma/2} ||P_tau f||_{m,p} / ||f||_{m-gamma,p}.

    A single f need not saturate the smoothing bound: a bump of width sigma
    gives slope -(2m + d)/4 for tau >> sigma^2, not -gamma/2. The bound's
    exponent is the one of the worst case; see :func:`smoothing_envelope`.
    """
    taus = _check_taus(taus)
    norms = np.array([sobolev_norm(heat_apply(f, t), m, p).value for t in taus])
    if not np.any(norms > 0):
        raise ValueError("degenerate fit: all norms are zero")
    base = sobolev_norm(f, m - gamma, p).value
    slope, icpt = np.polyfit(np.log(taus), np.log(norms), 1)
    const = float(np.max(taus ** (gamma / 2) * norms) / base) if base > 0 else math.inf
    return SmoothingFit(float(slope), float(icpt), const, taus.tolist(), norms.tolist(), gamma, m, p)


def smoothing_envelope(family: Sequence[GridField], gamma: float, m: float, p: float, taus: Sequence[float]) -> SmoothingFit:
    """Fit for sup over a family of ||P_tau f||_{m,p} / ||f||_{m-gamma,p}.

    Over a family that spans all widths (bumps from far below to above the
    smallest sqrt(tau)) this envelope is the operator norm of P_tau from
    W^{m-gamma,p} to W^{m,p}, whose exponent is the sharp -gamma/2.
    """
    taus = _check_taus(taus)
    base = [sobolev_norm(f, m - gamma, p).value for f in family]
    env = []
    for t in taus:
        env.append(max(sobolev_norm(heat_apply(f, t), m, p).value / b for f, b in zip(family, base) if b > 0))
    env = np.array(env)
    slope, icpt = np.polyfit(np.log(taus), np.log(env), 1)
    const = float(np.max(taus ** (gamma / 2) * env))
    return SmoothingFit(float(slope), float(icpt), const, taus.tolist(), env.tolist(), gamma, m, p)


def sobolev_embedding_probe(f: GridField, p: float, eps1: float, gamma: float) -> float:
    """||f||_{C^{1+gamma} proxy} / ||f||_{W^{1+d/p+eps1,p}}; 0/0 is 0 by convention."""
    if gamma >= eps1:
        raise ValueError("need gamma < eps1")
    num = c1gamma_proxy(f, gamma)
    den = sobolev_norm(f, 1.0 + f.d / p + eps1, p).value
    if den == 0:
        if num == 0:
            return 0.0
        raise ZeroDivisionError("zero Sobolev norm with nonzero Hölder proxy")
    return num / den


# ---------------------------------------------------------------------------
# two-parameter norms of averaged fields


def _delta_proxies(A, gaps_idx: Sequence[int], gamma: float, starts: Sequence[int] | None = None) -> dict:
    """sup over start nodes of the C^{1+gamma} proxy of delta A on each index gap."""
    vals = np.asarray(A.values)
    nt = vals.shape[0] - 1
    out = {}
    for g in gaps_idx:
        s_list = range(0, nt - g + 1, g) if starts is None else [s for s in starts if s + g <= nt]
        best = 0.0
        for s in s_list:
            best = max(best, A.delta_c1gamma(s, s + g, gamma))
        out[g] = best
    return out


def holder_two_param_norm(A, beta: float, gamma: float) -> NormReport:
    """sup over time-grid pairs s < t of ||delta A_{s,t}||_{C^{1+gamma} proxy} / |t - s|^beta.

    The sup runs over every dyadic index gap from every aligned start node,
    about 2 N pairs for N time steps.
    """
    nt = A.values.shape[0] - 1
    gaps = [2**j for j in range(int(math.log2(nt)) + 1)]
    best, where, count = 0.0, None, 0
    for g in gaps:
        for s in range(0, nt - g + 1, g):
            count += 1
            v = A.delta_c1gamma(s, s + g, gamma) / (A.t[s + g] - A.t[s]) ** beta
            if v > best:
                best, where = v, (float(A.t[s]), float(A.t[s + g]))
    return NormReport(
        "two-param",
        {"beta": beta, "gamma": gamma},
        best,
        A.values.shape[1],
        {"argmax": where, "pairs": count, "n_time": nt},
    )


def holder_exponent_fit(A, gamma: float, gaps: Sequence[int] | None = None) -> dict:
    """Regression of log sup_s ||delta A_{s,s+h}||_{C^{1+gamma} proxy} on log h over dyadic index gaps."""
    nt = A.values.shape[0] - 1
    if gaps is None:
        gaps = [2**j for j in range(int(math.log2(nt)) + 1) if 2**j <= nt]
    gaps = [int(g) for g in gaps]
    if len(gaps) < 4:
        raise ValueError("need at least 4 dyadic scales")
    sup = _delta_proxies(A, gaps, gamma)
    h = np.array([A.t[g] - A.t[0] for g in gaps])
    v = np.array([sup[g] for g in gaps])
    if np.any(v <= 0):
        return {"beta": math.nan, "gaps": h.tolist(), "sup": v.tolist(), "gamma": gamma}
    slope, icpt = np.polyfit(np.log(h), np.log(v), 1)
    return {"beta": float(slope), "intercept": float(icpt), "gaps": h.tolist(), "sup": v.tolist(), "gamma": gamma}
