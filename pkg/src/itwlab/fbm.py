"""Two-sided Brownian lattices and the moving-average fractional Brownian motion.

The fBm is built as

    W^H(s) = int_{-inf}^s [(s-u)_+^{H-1/2} - (-u)_+^{H-1/2}] dB(u)

on a uniform lattice over [-L, T]. Each lattice cell contributes its Brownian
increment times the exact cell average of the kernel, which keeps the near
diagonal variance under control when H < 1/2. The far past (-inf, -L) is
optionally represented by a short list of geometrically growing tail cells so
that truncating at -L does not bias the variance.

For a split time u <= r,

    W^H(r) = W1(u, r) + W2(u, r),   W1(u, r) = int_u^r (r-v)^{H-1/2} dB(v),

where W1(u, r) is independent of the past before u and W2 is adapted. W2 is
always computed as the difference W^H(r) - W1(u, r).
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, signal

__all__ = [
    "BrownianLattice",
    "FbmPath",
    "sample_lattice",
    "fbm_from_lattice",
    "w1",
    "w2",
    "path_rng",
    "kernel_cell_average",
    "lattice_variance",
    "fbm_variance_constant",
    "cholesky_fbm",
    "decomposition_error",
]

_GRID_ATOL = 1e-9


def path_rng(seed: int, path_index: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one path.

    Philox keyed by a SeedSequence spawned from ``(seed, path_index, stream)``
    so every path is reproducible on its own, independently of the order or
    the worker in which paths are generated.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path_index), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


def _as_cell_count(length: float, dt: float, what: str) -> int:
    n = length / dt
    k = int(round(n))
    if k <= 0 or abs(n - k) > 1e-9 * max(1.0, n):
        raise ValueError(f"{what}={length!r} is not an integral number of steps dt={dt!r}")
    return k


@dataclass(frozen=True)
class BrownianLattice:
    """Discretized d-dimensional two-sided Brownian motion on [-L, T].

    ``increments[j, c]`` is the increment of component j over the cell
    ``[c*dt, (c+1)*dt)`` for ``c = -n_neg, ..., n_pos - 1``; it is stored at
    column ``c + n_neg``. Tail cells cover ``(-inf, -L)`` with geometric
    widths (``tail_edges`` decreasing from ``-L``).
    """

    d: int
    dt: float
    left: float
    horizon: float
    increments: np.ndarray
    seed: int = 0
    path_index: int = 0
    tail_edges: np.ndarray = field(default_factory=lambda: np.zeros(0))
    tail_increments: np.ndarray = field(default_factory=lambda: np.zeros((1, 0)))

    @property
    def n_neg(self) -> int:
        return int(round(self.left / self.dt))

    @property
    def n_pos(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def n_cells(self) -> int:
        return self.increments.shape[1]

    @property
    def positive(self) -> np.ndarray:
        """Increments of the cells covering [0, T), shape (d, n_pos)."""
        return self.increments[:, self.n_neg:]

    @property
    def negative(self) -> np.ndarray:
        """Increments of the cells covering [-L, 0), shape (d, n_neg)."""
        return self.increments[:, : self.n_neg]

    def grid(self) -> np.ndarray:
        """Nonnegative lattice times 0, dt, ..., T."""
        return np.arange(self.n_pos + 1) * self.dt

    def brownian(self) -> np.ndarray:
        """B on the nonnegative grid, B(0) = 0, shape (d, n_pos + 1)."""
        out = np.zeros((self.d, self.n_pos + 1))
        np.cumsum(self.positive, axis=1, out=out[:, 1:])
        return out

    def time_index(self, t: float) -> int:
        i = t / self.dt
        k = int(round(i))
        if abs(i - k) > _GRID_ATOL or k < 0 or k > self.n_pos:
            raise ValueError(f"time {t!r} is not a nonnegative lattice point")
        return k

    def coarsen(self, factor: int) -> "BrownianLattice":
        """Same Brownian path observed on a grid ``factor`` times coarser."""
        if factor == 1:
            return self
        if self.n_neg % factor or self.n_pos % factor:
            raise ValueError(f"cannot coarsen {self.n_neg}+{self.n_pos} cells by {factor}")
        inc = self.increments.reshape(self.d, -1, factor).sum(axis=2)
        return BrownianLattice(
            d=self.d,
            dt=self.dt * factor,
            left=self.left,
            horizon=self.horizon,
            increments=inc,
            seed=self.seed,
            path_index=self.path_index,
            tail_edges=self.tail_edges,
            tail_increments=self.tail_increments,
        )

    def metadata(self) -> dict:
        return {
            "d": self.d,
            "dt": self.dt,
            "left": self.left,
            "horizon": self.horizon,
            "n_cells": self.n_cells,
            "n_tail_cells": int(self.tail_increments.shape[1]),
            "seed": self.seed,
            "path_index": self.path_index,
        }


def _tail_edges(left: float, ratio: float, span: float) -> np.ndarray:
    n = int(math.ceil(math.log(span) / math.log(ratio)))
    return -left * ratio ** np.arange(n + 1)


def sample_lattice(
    d: int,
    dt: float,
    left: float,
    horizon: float,
    seed: int,
    path_index: int,
    *,
    tail: bool = True,
    tail_ratio: float = 1.1,
    tail_span: float = 1e8,
) -> BrownianLattice:
    """Draw one lattice; bit-identical for identical ``(seed, path_index)``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if not (left > 0 and horizon > 0):
        raise ValueError("left horizon and T must be positive")
    n_neg = _as_cell_count(left, dt, "L")
    n_pos = _as_cell_count(horizon, dt, "T")
    rng = path_rng(seed, path_index)
    inc = rng.standard_normal((d, n_neg + n_pos)) * math.sqrt(dt)
    if tail:
        edges = _tail_edges(left, tail_ratio, tail_span)
        widths = edges[:-1] - edges[1:]
        tail_inc = rng.standard_normal((d, widths.size)) * np.sqrt(widths)
    else:
        edges = np.zeros(0)
        tail_inc = np.zeros((d, 0))
    return BrownianLattice(d, float(dt), float(left), float(horizon), inc, int(seed), int(path_index), edges, tail_inc)


@functools.lru_cache(maxsize=64)
def _kbar_cached(H: float, dt: float, n: int) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    a = H + 0.5
    out = np.zeros(n + 1)
    out[1:] = dt ** (H - 0.5) * (k[1:] ** a - k[:-1] ** a) / a
    out.setflags(write=False)
    return out


def kernel_cell_average(H: float, dt: float, n: int) -> np.ndarray:
    """``out[m]`` = average of ``v**(H-1/2)`` over ``v in [(m-1)dt, m dt]``; ``out[0] = 0``."""
    return _kbar_cached(float(H), float(dt), int(n))


@functools.lru_cache(maxsize=64)
def _lattice_variance_cached(H: float, dt: float, n: int) -> np.ndarray:
    kb = kernel_cell_average(H, dt, n)
    out = dt * np.cumsum(kb**2)
    out.setflags(write=False)
    return out


def lattice_variance(H: float, dt: float, n: int) -> np.ndarray:
    """``out[m]`` = Var of the lattice W1 over m cells; tends to (m dt)^{2H}/(2H)."""
    return _lattice_variance_cached(float(H), float(dt), int(n))


def _powdiff(t: np.ndarray, a: np.ndarray, p: float) -> np.ndarray:
    """(t + a)^p - a^p for a > 0, t >= 0, without cancellation."""
    return a**p * np.expm1(p * np.log1p(t / a))


def _tail_weights(H: float, times: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Cell averages of (t - v)^{H-1/2} - (-v)^{H-1/2} over tail cells, shape (len(times), n_tail)."""
    if edges.size == 0:
        return np.zeros((times.size, 0))
    p = H + 0.5
    hi = -edges[:-1]  # |v| at the cell end nearest 0
    lo = -edges[1:]
    t = times[:, None]
    num = _powdiff(t, lo[None, :], p) - _powdiff(t, hi[None, :], p)
    return num / (p * (lo - hi))[None, :]


@dataclass
class FbmPath:
    """fBm values on an evaluation grid plus lazily built W1 pair tables."""

    lattice: BrownianLattice
    H: float
    index: np.ndarray  # lattice indices of the evaluation times
    values: np.ndarray  # (d, N+1)
    w2_origin: np.ndarray  # W2(0, t_i), (d, N+1)
    _pairs: np.ndarray | None = None
    _w2: np.ndarray | None = None

    @property
    def times(self) -> np.ndarray:
        return self.index * self.lattice.dt

    @property
    def d(self) -> int:
        return self.lattice.d

    def _locate(self, t: float) -> int:
        k = self.lattice.time_index(t)
        pos = np.searchsorted(self.index, k)
        if pos >= self.index.size or self.index[pos] != k:
            raise ValueError(f"time {t!r} is not on the evaluation grid")
        return int(pos)

    def pair_table(self) -> np.ndarray:
        """``P[j, a, b] = W1_j(t_a, t_b)`` for a <= b (zero below the diagonal).

        Built from per-r reverse cumulative sums; O(N * n_pos) time and memory.
        """
        if self._pairs is None:
            self._pairs = _pair_table(self.lattice, self.H, self.index)
        return self._pairs

    def w2_table(self) -> np.ndarray:
        """``Q[j, a, b] = W2_j(t_a, t_b)``, the part of W^H_j(t_b) driven by increments before t_a.

        Built as W2(0, t_b) plus forward cumulative sums over the cells before
        t_a, never as W^H - W1, so entry (a, b) is a function of the increments
        before t_a alone, bit for bit. For a > b the entry equals W^H(t_b).
        """
        if self._w2 is None:
            self._w2 = _w2_table(self)
        return self._w2

    def to_csv(self, path) -> None:
        cols = [self.times] + [self.values[j] for j in range(self.d)]
        header = ",".join(["t"] + [f"W{j + 1}" for j in range(self.d)])
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="")


def _pair_table(lat: BrownianLattice, H: float, index: np.ndarray) -> np.ndarray:
    n = lat.n_pos
    kb = kernel_cell_average(H, lat.dt, n)
    cells = np.arange(n)
    lag = index[:, None] - cells[None, :]  # (N+1, n): r index minus cell
    live = lag > 0
    kmat = np.where(live, kb[np.clip(lag, 0, n)], 0.0)
    out = np.empty((lat.d, index.size, index.size))
    for j in range(lat.d):
        prod = kmat * lat.positive[j][None, :]
        # rc[b, c] = sum over cells c..n-1 (only cells below index[b] are live)
        rc = np.cumsum(prod[:, ::-1], axis=1)[:, ::-1]
        rc = np.concatenate([rc, np.zeros((index.size, 1))], axis=1)
        tab = rc[:, index].T  # tab[a, b] = W1(t_a, t_b) when a <= b
        out[j] = np.triu(tab)
    return out


def fbm_from_lattice(lat: BrownianLattice, H: float, eval_grid=None) -> FbmPath:
    """Evaluate W^H on ``eval_grid`` (default: every nonnegative lattice point)."""
    if not (0.0 < H < 1.0) or H == 0.5:
        raise ValueError(f"Hurst index must lie in (0,1) minus 1/2, got {H!r}")
    if eval_grid is None:
        index = np.arange(lat.n_pos + 1)
    else:
        index = np.array([lat.time_index(float(t)) for t in np.atleast_1d(eval_grid)], dtype=int)
        if np.any(np.diff(index) <= 0):
            raise ValueError("evaluation grid must be strictly increasing")
    n, m = lat.n_pos, lat.n_neg
    kb = kernel_cell_average(H, lat.dt, n + m)
    times = index * lat.dt

    # Past part: sum over k = 1..m of [K(i + k) - K(k)] dB_{-k}.
    neg = lat.negative[:, ::-1]  # column k-1 holds the cell [-k dt, -(k-1) dt)
    w2 = np.empty((lat.d, index.size))
    if m > 0:
        base = neg @ kb[1 : m + 1]
        for j in range(lat.d):
            corr = _shift_corr(kb, neg[j], n, m)
            w2[j] = corr[index] - base[j]
    else:
        w2[:] = 0.0
    if lat.tail_increments.shape[1]:
        tw = _tail_weights(H, times, lat.tail_edges)
        w2 += lat.tail_increments @ tw.T
    w2[:, index == 0] = 0.0

    # Present part: W1(0, t_i) = sum_{c < i} K(i - c) dB_c.
    pos = lat.positive
    w1 = np.empty((lat.d, index.size))
    for j in range(lat.d):
        conv = signal.fftconvolve(kb[: n + 1], pos[j])[: n + 1] if n else np.zeros(1)
        # conv[i] = sum_c kb[i - c] pos[c]; kb[0] = 0 drops c = i.
        w1[j] = conv[index]
    w1[:, index == 0] = 0.0
    values = w1 + w2
    return FbmPath(lat, float(H), index, values, w2)


def _shift_corr(kb: np.ndarray, x: np.ndarray, n: int, m: int) -> np.ndarray:
    """``out[i] = sum_{k=1}^m kb[i + k] x[k - 1]`` for i = 0..n."""
    # Correlate kb[1:n+m+1] with x: out[i] = sum_k kb[1 + i + (k-1)] x[k-1].
    seg = kb[1 : n + m + 1]
    full = signal.fftconvolve(seg, x[::-1])
    return full[m - 1 : m - 1 + n + 1]


def w1(path: FbmPath, u: float, r: float) -> np.ndarray:
    """W1(u, r): the part of W^H(r) driven by increments in [u, r)."""
    if u > r:
        raise ValueError(f"need u <= r, got u={u!r} > r={r!r}")
    a, b = path._locate(u), path._locate(r)
    if a == b:
        return np.zeros(path.d)
    lat = path.lattice
    ia, ib = path.index[a], path.index[b]
    kb = kernel_cell_average(path.H, lat.dt, lat.n_pos)
    cells = np.arange(ia, ib)
    return lat.positive[:, ia:ib] @ kb[ib - cells]


def w2(path: FbmPath, u: float, r: float) -> np.ndarray:
    """W2(u, r) = W^H(r) - W1(u, r), measurable with respect to the past before u."""
    b = path._locate(r)
    return path.values[:, b] - w1(path, u, r)


def _w2_table(path: FbmPath) -> np.ndarray:
    lat = path.lattice
    kb = kernel_cell_average(path.H, lat.dt, lat.n_pos)
    idx = path.index
    cells = np.arange(lat.n_pos)
    lag = idx[:, None] - cells[None, :]
    kmat = np.where(lag > 0, kb[np.clip(lag, 0, lat.n_pos)], 0.0)  # (b, c)
    out = np.empty((lat.d, idx.size, idx.size))
    for j in range(lat.d):
        part = np.concatenate([np.zeros((idx.size, 1)), np.cumsum(kmat * lat.positive[j][None, :], axis=1)], axis=1)
        out[j] = path.w2_origin[j][None, :] + part[:, idx].T  # (a, b)
    return out


def decomposition_error(path: FbmPath) -> float:
    """max over grid pairs a <= b of |W1(t_a, t_b) + W2(t_a, t_b) - W^H(t_b)|.

    The three pieces are computed independently: W1 from the pair table
    (reverse cumulative sums), W2 from the adapted table (forward cumulative
    sums over the past cells) and W^H from the FFT convolution.
    """
    diff = path.pair_table() + path.w2_table() - path.values[:, None, :]
    return float(max(np.abs(np.triu(diff[j])).max() for j in range(path.d)))


@functools.lru_cache(maxsize=32)
def fbm_variance_constant(H: float) -> float:
    """Var W^H(1) for the unnormalized moving-average kernel, by 1-d quadrature."""
    a = H - 0.5

    def integrand(v):
        return ((1.0 + v) ** a - v**a) ** 2

    head, _ = integrate.quad(integrand, 0.0, 1.0, limit=200)
    tail, _ = integrate.quad(integrand, 1.0, np.inf, limit=200)
    return 1.0 / (2.0 * H) + head + tail


def cholesky_fbm(H: float, times: np.ndarray, n_paths: int, rng: np.random.Generator) -> np.ndarray:
    """Exact-covariance cross-check: c_H/2 (s^2H + t^2H - |t-s|^2H), shape (n_paths, len(times))."""
    t = np.asarray(times, dtype=float)
    s_, t_ = np.meshgrid(t, t, indexing="ij")
    cov = 0.5 * fbm_variance_constant(H) * (s_ ** (2 * H) + t_ ** (2 * H) - np.abs(s_ - t_) ** (2 * H))
    keep = t > 0
    out = np.zeros((n_paths, t.size))
    L = np.linalg.cholesky(cov[np.ix_(keep, keep)])
    out[:, keep] = rng.standard_normal((n_paths, keep.sum())) @ L.T
    return out
