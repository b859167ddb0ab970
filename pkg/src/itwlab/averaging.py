"""The averaging operator A_u(x) = int_0^u b(s, x + W^H(s)) ds along simulated paths.

Pointwise drifts are integrated by the composite trapezoid rule in s for every
space point. Fourier-series drifts b(s, y) = theta(s) Re sum_k c_k e^{i k y}
never need pointwise values: the per-frequency accumulators

    S_k(u) = int_0^u theta(s) e^{i k W(s)} ds

are built once per path and A_u(x) = Re sum_k c_k S_k(u) e^{i k x} is synthesized
on demand. This is the only route for distributional drifts.

A time grid resolves mode k only when k^2 Var(W(s + dt) - W(s)) is small, that
is dt << k^{-1/H}; for H = 1/4 and k = 256 this asks for dt << 2^{-32}. The
"bridge" quadrature handles the unresolved modes: inside each cell it
integrates E[theta(r) e^{i k W(r)} | W(s_i), W(s_{i+1})], which is Gaussian
and available in closed form, at Gauss-Legendre nodes. Its mean over paths is
the exact mean of S_k, and it damps the modes the grid cannot see instead of
turning them into white noise in time.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .fbm import FbmPath, fbm_from_lattice, fbm_variance_constant, path_rng, sample_lattice
from .fields import FourierSeries, SeparableField, SpatialProfile
from .function_space import c1gamma_from_samples

__all__ = [
    "AveragedField",
    "compute_A",
    "regularity_moment_scan",
    "roughness_stress_test",
    "cos_mean_oracle",
    "QUADRATURES",
]

QUADRATURES = ("trapezoid", "left", "bridge")
_GL_NODES = 3


@dataclass
class AveragedField:
    """A tabulated on a time grid t and a uniform space grid x, or held as Fourier accumulators.

    ``values[i, k]`` is A_{t_i}(x_k). Fourier-backed instances keep
    ``freqs``, ``coeffs`` and the cumulative ``accum`` (shape (len(t), K))
    and synthesize values lazily. A_0 = 0 and increments are differences of
    the cumulative table, so delta A is exactly additive.
    """

    t: np.ndarray
    x: np.ndarray
    periodic: bool = False
    length: float | None = None
    provenance: dict = field(default_factory=dict)
    freqs: np.ndarray | None = None
    coeffs: np.ndarray | None = None
    accum: np.ndarray | None = None
    _values: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        if self.periodic and self.length is None:
            self.length = self.x.size * (self.x[1] - self.x[0])
        if self._values is None and self.accum is None:
            raise ValueError("AveragedField needs values or Fourier accumulators")

    @classmethod
    def from_function(cls, fn: Callable, t, x, periodic: bool = False, length: float | None = None, **prov):
        """Tabulate a given A_u(x) = fn(u, x); used for closed-form test cases."""
        t, x = np.asarray(t, float), np.asarray(x, float)
        vals = np.asarray(fn(t[:, None], x[None, :]), dtype=float) * np.ones((t.size, x.size))
        return cls(t, x, periodic, length, dict(prov, source="function"), _values=vals)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def fourier(self) -> bool:
        return self.accum is not None

    def _synth(self, spec_t: np.ndarray, y: np.ndarray, deriv: int = 0) -> np.ndarray:
        """Re sum_k (i k)^deriv c_k spec_t[..., k] e^{i k y} for spec_t of shape (..., K)."""
        amp = spec_t * self.coeffs * (1j * self.freqs) ** deriv
        out = np.empty(spec_t.shape[:-1] + y.shape)
        flat = amp.reshape(-1, amp.shape[-1])
        res = out.reshape(-1, y.size)
        phase = np.exp(1j * np.outer(self.freqs, y.reshape(-1)))
        for lo in range(0, flat.shape[0], 256):
            res[lo : lo + 256] = (flat[lo : lo + 256] @ phase).real
        return out

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            self._values = self._synth(self.accum, self.x)
        return self._values

    def _check_idx(self, s: int, t: int) -> None:
        if not 0 <= s <= t < self.t.size:
            raise IndexError(f"need 0 <= s <= t < {self.t.size}, got {s}, {t}")

    def delta(self, s: int, t: int) -> np.ndarray:
        """delta A_{t_s, t_t} on the space grid."""
        self._check_idx(s, t)
        if self._values is None and self.fourier:
            return self._synth(self.accum[t] - self.accum[s], self.x)
        return self.values[t] - self.values[s]

    def delta_grad(self, s: int, t: int) -> np.ndarray:
        """Spatial derivative of delta A_{t_s, t_t} on the space grid."""
        self._check_idx(s, t)
        if self.fourier:
            return self._synth(self.accum[t] - self.accum[s], self.x, deriv=1)
        v = self.delta(s, t)
        if self.periodic:
            k = 2 * math.pi * np.fft.fftfreq(v.size, d=self.dx)
            return np.fft.ifft(1j * k * np.fft.fft(v)).real
        return np.gradient(v, self.dx, edge_order=2)

    def delta_at(self, s: int, t: int, y) -> np.ndarray:
        """delta A_{t_s, t_t}(y) at arbitrary points: exact for Fourier fields, cubic otherwise."""
        self._check_idx(s, t)
        y = np.asarray(y, dtype=float)
        if self.fourier:
            return self._synth(self.accum[t] - self.accum[s], y)
        return self._interp(self.delta(s, t), y)

    def delta_pairs(self, s_idx, t_idx, y) -> np.ndarray:
        """delta A_{t_s, t_t}(y) for arrays of index pairs and points, elementwise.

        Fourier fields are exact; tabulated fields use the local cubic
        (4-point Lagrange) interpolant of each row, which reproduces cubics
        exactly and keeps one continuous derivative on smooth data.
        """
        s_idx, t_idx, y = np.broadcast_arrays(np.asarray(s_idx, int), np.asarray(t_idx, int), np.asarray(y, float))
        if np.any(s_idx > t_idx) or np.any(s_idx < 0) or np.any(t_idx >= self.t.size):
            raise IndexError("bad time index pair")
        if self.fourier:
            dS = self.accum[t_idx] - self.accum[s_idx]
            return (self.coeffs * dS * np.exp(1j * y[..., None] * self.freqs)).sum(axis=-1).real
        vals = self.values
        M, h = self.x.size, self.dx
        u = (y - self.x[0]) / h
        if self.periodic:
            base = np.floor(u).astype(int) - 1
            frac = u - base - 1
            cols = (base[..., None] + np.arange(4)) % M
        else:
            if np.any(u < -1e-9) or np.any(u > M - 1 + 1e-9):
                bad = y[(u < -1e-9) | (u > M - 1 + 1e-9)]
                raise ValueError(f"point {float(bad.flat[0])} outside the tabulated window [{self.x[0]}, {self.x[-1]}]")
            base = np.clip(np.floor(u).astype(int) - 1, 0, M - 4)
            frac = u - base - 1
            cols = base[..., None] + np.arange(4)
        rows = vals[t_idx[..., None], cols] - vals[s_idx[..., None], cols]
        # Lagrange weights on nodes -1, 0, 1, 2 relative to base + 1
        f = frac
        w = np.stack(
            [-f * (f - 1) * (f - 2) / 6, (f + 1) * (f - 1) * (f - 2) / 2, -(f + 1) * f * (f - 2) / 2, (f + 1) * f * (f - 1) / 6],
            axis=-1,
        )
        return (rows * w).sum(axis=-1)

    def _interp(self, v: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.periodic:
            xs = np.append(self.x, self.x[0] + self.length)
            spline = CubicSpline(xs, np.append(v, v[0]), bc_type="periodic")
            return spline(self.x[0] + np.mod(y - self.x[0], self.length))
        if np.any(y < self.x[0]) or np.any(y > self.x[-1]):
            bad = y[(y < self.x[0]) | (y > self.x[-1])]
            raise ValueError(f"point {float(bad.flat[0])} outside the tabulated window [{self.x[0]}, {self.x[-1]}]")
        return CubicSpline(self.x, v)(y)

    def delta_c1gamma(self, s: int, t: int, gamma: float) -> float:
        v = self.delta(s, t)
        g = self.delta_grad(s, t)
        return c1gamma_from_samples(v, g[:, None], self.dx, gamma, self.periodic)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [repr(float(v)) for v in self.x])
            for ti, row in zip(self.t, self.values):
                w.writerow([repr(float(ti))] + [repr(float(v)) for v in row])


# ---------------------------------------------------------------------------
# construction


def _split_drift(b):
    """(time factor or None, profile or pointwise callable)."""
    if isinstance(b, SeparableField):
        if not b.deterministic:
            raise ValueError("compute_A takes deterministic drifts; random fields belong to the verifier")
        return b.time_factor, b.profile
    if isinstance(b, SpatialProfile):
        return None, b
    if callable(b):
        return None, b
    raise TypeError(f"unsupported drift {type(b).__name__}")


def _cell_weights(t: np.ndarray, rule: str) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell weights for the left and right node of each cell."""
    h = np.diff(t)
    if rule == "left":
        return h, np.zeros_like(h)
    return 0.5 * h, 0.5 * h


def _cumulate(node_vals: np.ndarray, t: np.ndarray, rule: str) -> np.ndarray:
    wl, wr = _cell_weights(t, rule)
    shape = (-1,) + (1,) * (node_vals.ndim - 1)
    inc = wl.reshape(shape) * node_vals[:-1] + wr.reshape(shape) * node_vals[1:]
    out = np.zeros_like(node_vals)
    np.cumsum(inc, axis=0, out=out[1:])
    return out


def _quadrature_terms(theta, t: np.ndarray, w: np.ndarray, rule: str, H: float | None):
    """Per-cell quadrature samples (weight, phase argument, variance) whose sum over cells is int theta e^{ikW}.

    Each sample contributes weight * exp(i k arg - k^2 var / 2) to its cell;
    var is zero except for the bridge rule.
    """
    if rule in ("trapezoid", "left"):
        wl, wr = _cell_weights(t, rule)
        th = np.ones_like(t) if theta is None else theta(t)
        out = [(wl * th[:-1], w[:-1], 0.0)]
        if rule == "trapezoid":
            out.append((wr * th[1:], w[1:], 0.0))
        return out
    if H is None:
        raise ValueError("bridge quadrature needs an fBm path")
    h = np.diff(t)
    if not np.allclose(h, h[0], rtol=1e-9):
        raise ValueError("bridge quadrature needs a uniform time grid")
    h = float(h[0])
    c = fbm_variance_constant(H)
    xi, wq = np.polynomial.legendre.leggauss(_GL_NODES)
    xi, wq = 0.5 * (xi + 1.0), 0.5 * wq
    dW = np.diff(w)
    out = []
    for q in range(xi.size):
        # law of W(r) - W(s_i) given W(s_{i+1}) - W(s_i), r = s_i + xi h
        a, b = (xi[q] * h) ** (2 * H), ((1 - xi[q]) * h) ** (2 * H)
        vy = h ** (2 * H)
        cov = 0.5 * (a + vy - b)
        r = t[:-1] + xi[q] * h
        th = np.ones_like(r) if theta is None else theta(r)
        out.append((wq[q] * h * th, w[:-1] + (cov / vy) * dW, c * (a - cov * cov / vy)))
    return out


def _fourier_accum(freqs: np.ndarray, terms, keep: np.ndarray) -> np.ndarray:
    """S_k at the kept nodes (keep[0] == 0) from per-cell quadrature samples."""
    starts = keep[:-1]
    n_cells = keep[-1]
    out = np.zeros((keep.size, freqs.size), dtype=complex)
    f0 = freqs[0]
    ladder = freqs.size > 1 and f0 != 0 and np.allclose(freqs, f0 * np.arange(1, freqs.size + 1), rtol=0, atol=1e-12)
    for weight, arg, var in terms:
        weight, arg = weight[:n_cells], arg[:n_cells]
        damp = np.exp(-0.5 * var * freqs**2)
        if ladder:
            # consecutive harmonics: z^k by repeated multiplication instead of K exponentials
            z = np.exp(1j * f0 * arg)
            p = weight.astype(complex)
            for k in range(freqs.size):
                p = p * z
                out[1:, k] += damp[k] * np.add.reduceat(p, starts)
        else:
            for lo in range(0, freqs.size, 32):
                ks = slice(lo, lo + 32)
                vals = weight[:, None] * np.exp(1j * np.outer(arg, freqs[ks]))
                out[1:, ks] += damp[ks] * np.add.reduceat(vals, starts, axis=0)
    np.cumsum(out, axis=0, out=out)
    return out


def _keep_nodes(n_nodes: int, keep) -> np.ndarray:
    if keep is None:
        return np.arange(n_nodes)
    keep = np.unique(np.concatenate([[0], np.asarray(keep, dtype=int)]))
    if keep[-1] >= n_nodes or keep[0] < 0:
        raise IndexError("kept node outside the path")
    if keep.size < 2:
        raise ValueError("need at least one node after 0")
    return keep


def compute_A(
    b,
    path: FbmPath | None,
    x,
    *,
    times: np.ndarray | None = None,
    w: np.ndarray | None = None,
    quadrature: str = "trapezoid",
    periodic: bool | None = None,
    keep=None,
) -> AveragedField:
    """Averaged field of a deterministic drift along one path.

    Parameters
    ----------
    b : SeparableField, SpatialProfile or callable ``b(s, y)``
        Deterministic drift. Fourier-series profiles go through the
        accumulator route, everything else is evaluated pointwise.
    path : FbmPath or None
        One-dimensional path; the quadrature uses every path node. Pass
        ``path=None`` with explicit ``times`` and ``w`` to average along any
        sampled curve (``w = 0`` gives the noiseless control).
    x : array
        Uniform space grid.
    quadrature : {"trapezoid", "left", "bridge"}
        Rule in s. "bridge" is only defined for Fourier drifts along an fBm path.
    keep : array of node indices, optional
        Tabulate A only at these nodes (node 0 is always kept). The quadrature
        still runs over every cell.
    """
    if quadrature not in QUADRATURES:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    if path is not None:
        if path.d != 1:
            raise ValueError("averaging is implemented for d = 1")
        times, w = path.times, path.values[0]
        H = path.H
        prov = {"H": H, "seed": path.lattice.seed, "path_index": path.lattice.path_index, "dt": path.lattice.dt}
    else:
        if times is None or w is None:
            raise ValueError("need a path or explicit times and w")
        times, w, H = np.asarray(times, float), np.asarray(w, float), None
        prov = {"H": None, "dt": float(times[1] - times[0])}
    x = np.asarray(x, dtype=float)
    if not np.allclose(np.diff(x), x[1] - x[0], rtol=1e-9):
        raise ValueError("space grid must be uniform")
    kept = _keep_nodes(times.size, keep)
    theta, prof = _split_drift(b)
    prov.update(drift=getattr(b, "name", "") or type(prof).__name__, quadrature=quadrature)

    if isinstance(prof, FourierSeries):
        if prof.d != 1:
            raise ValueError("averaging is implemented for d = 1")
        freqs = prof.k[:, 0]
        coeffs = prof.a - 1j * prof.b
        if periodic is None:
            periodic = True
        length = prof.circumference if periodic else None
        accum = _fourier_accum(freqs, _quadrature_terms(theta, times, w, quadrature, H), kept)
        return AveragedField(times[kept], x, periodic, length, prov, freqs=freqs, coeffs=coeffs, accum=accum)

    if quadrature == "bridge":
        raise ValueError("bridge quadrature is only defined for Fourier drifts")
    y = x[None, :] + w[:, None]
    if isinstance(prof, SpatialProfile):
        vals = prof.value(y[..., None])
        if theta is not None:
            vals = theta(times)[:, None] * vals
    else:
        vals = np.asarray(prof(times[:, None], y), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("drift undefined at some probe points")
    periodic = bool(periodic) if periodic is not None else bool(getattr(prof, "periodic", False))
    length = getattr(prof, "circumference", None) if periodic else None
    if periodic and length is None:
        length = x.size * (x[1] - x[0])
    return AveragedField(times[kept], x, periodic, length, prov, _values=_cumulate(vals, times, quadrature)[kept])


def cos_mean_oracle(k: float, H: float, u: np.ndarray) -> np.ndarray:
    """int_0^u exp(-k^2 c_H s^{2H} / 2) ds, the mean of A_u(0) for b = cos(k y)."""
    from scipy.integrate import quad

    c = fbm_variance_constant(H)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return np.array([quad(lambda s: math.exp(-0.5 * k * k * c * s ** (2 * H)), 0.0, ui, limit=200)[0] for ui in u])


# ---------------------------------------------------------------------------
# Monte Carlo scans


def _scan_path(args):
    b, H, dt, left, horizon, seed, k, x, gaps, gamma, quadrature = args
    lat = sample_lattice(1, dt, left, horizon, seed, k, tail=True)
    A = compute_A(b, fbm_from_lattice(lat, H), x, quadrature=quadrature, keep=gaps)
    return np.array([A.delta_c1gamma(0, j + 1, gamma) for j in range(len(gaps))])


def _map(fn, jobs, workers: int) -> np.ndarray:
    if workers <= 1:
        return np.stack([fn(j) for j in jobs])
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as ex:
        return np.stack(list(ex.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * workers)))))


def regularity_moment_scan(
    b,
    H: float,
    *,
    ell: float = 4.0,
    gamma: float = 0.1,
    n_paths: int = 1000,
    gaps: Sequence[float] = tuple(2.0 ** -np.arange(10, 3, -1)),
    dt: float = 2.0**-14,
    x=None,
    left: float = 1.0,
    seed: int = 0,
    quadrature: str | None = None,
    n_boot: int = 400,
    workers: int = 1,
) -> dict:
    """Fit of log E[||delta A_{0,h}||^ell_{C^{1+gamma}}]^{1/ell} against log h.

    Every path contributes one sample per gap h (all gaps start at s = 0);
    the confidence interval is a percentile bootstrap over paths. The past
    of the driving motion is truncated at -``left`` with geometric tail cells
    beyond it.
    """
    gaps = np.sort(np.asarray(gaps, dtype=float))
    if gaps.size < 5:
        raise ValueError("need at least 5 dyadic gaps")
    ratios = gaps[1:] / gaps[:-1]
    if not np.allclose(ratios, 2.0):
        raise ValueError("gaps must be dyadic")
    if n_paths < 2:
        raise ValueError("need at least 2 paths")
    idx = np.rint(gaps / dt).astype(int)
    if np.any(np.abs(idx * dt - gaps) > 1e-9 * gaps) or idx[0] < 1:
        raise ValueError("gaps must be multiples of dt")
    _, prof = _split_drift(b)
    fourier = isinstance(prof, FourierSeries)
    if quadrature is None:
        quadrature = "bridge" if fourier else "trapezoid"
    if x is None:
        x = np.arange(1024) * (2 * math.pi / 1024) if fourier else np.linspace(-1.0, 1.0, 513)[:-1]
    horizon = float(gaps[-1])
    jobs = [(b, H, dt, left, horizon, seed, k, x, idx, gamma, quadrature) for k in range(n_paths)]
    norms = _map(_scan_path, jobs, workers)  # (paths, gaps)
    mom = np.mean(norms**ell, axis=0) ** (1.0 / ell)
    slope, icpt = np.polyfit(np.log(gaps), np.log(mom), 1)
    rng = path_rng(seed, n_paths, stream=7)
    boot = np.empty(n_boot)
    for r in range(n_boot):
        pick = rng.integers(0, n_paths, n_paths)
        m = np.mean(norms[pick] ** ell, axis=0) ** (1.0 / ell)
        boot[r] = np.polyfit(np.log(gaps), np.log(m), 1)[0]
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return {
        "slope": float(slope),
        "intercept": float(icpt),
        "ci": [float(lo), float(hi)],
        "moments": mom.tolist(),
        "gaps": gaps.tolist(),
        "ell": ell,
        "gamma": gamma,
        "H": H,
        "n_paths": n_paths,
        "dt": dt,
        "left": left,
        "quadrature": quadrature,
        "space_grid": {"x0": float(x[0]), "dx": float(x[1] - x[0]), "M": int(len(x))},
        "seed": seed,
        "n_boot": n_boot,
    }


def _sup_grad_partial(freqs, coeffs, S, Ks, M) -> list:
    """sup_x |d/dx Re sum_{k <= K} c_k S_k e^{i k x}| on an M-point grid, for each K (integer freqs)."""
    out = []
    for K in Ks:
        spec = np.zeros(M // 2 + 1, dtype=complex)
        kk = freqs[:K].astype(int)
        spec[kk] = 1j * kk * coeffs[:K] * S[:K]
        g = np.fft.irfft(spec, n=M) * M / 2.0
        out.append(float(np.abs(g).max()))
    return out


def roughness_stress_test(
    Ks: Sequence[int] = (1, 2, 4, 8, 16, 32, 64, 128, 256),
    H: float = 0.25,
    *,
    n_paths: int = 50,
    T: float = 1.0,
    dt: float = 2.0**-14,
    left: float = 1.0,
    seed: int = 0,
    family_seed: int = 0,
    quadrature: str = "bridge",
    M: int | None = None,
) -> dict:
    """sup_x |d/dx A_T(x)| for partial sums b_K of the white-noise family, with and without noise.

    The noise column is the median over ``n_paths`` paths; the control
    column averages along W = 0, where A_T = T b_K.
    """
    from .fields import white_noise

    Ks = [int(k) for k in Ks]
    kmax = max(Ks)
    prof = white_noise(kmax, 0.0, family_seed)
    freqs, coeffs = prof.k[:, 0], prof.a - 1j * prof.b
    M = M or 8 * kmax
    noise = np.empty((n_paths, len(Ks)))
    for p in range(n_paths):
        lat = sample_lattice(1, dt, left, T, seed, p, tail=True)
        A = compute_A(prof, fbm_from_lattice(lat, H), np.arange(8) * math.pi / 4, quadrature=quadrature, keep=[lat.n_pos])
        noise[p] = _sup_grad_partial(freqs, coeffs, A.accum[-1], Ks, M)
    control = _sup_grad_partial(freqs, coeffs, np.full(kmax, T, dtype=complex), Ks, M)
    med = np.median(noise, axis=0)
    return {
        "K": Ks,
        "noise": med.tolist(),
        "noise_q25": np.percentile(noise, 25, axis=0).tolist(),
        "noise_q75": np.percentile(noise, 75, axis=0).tolist(),
        "control": control,
        "H": H,
        "n_paths": n_paths,
        "T": T,
        "dt": dt,
        "quadrature": quadrature,
        "grid_M": M,
        "seed": seed,
        "family_seed": family_seed,
    }
