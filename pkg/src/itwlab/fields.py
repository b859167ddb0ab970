"""Adapted cylindrical random fields with their heat actions and Malliavin data.

A field is f(t, y) = phi(t, B(g_1 ^ t), ..., B(g_n ^ t), y). The verifier needs,
for 0 <= u <= s, the conditional projection f^a(s, u, y) = E_u[f(s, y)] and
g_j(s, u, y) = E_u[(D_j f(s, y))(u)], each smoothed by the heat semigroup in y.

Most catalog entries are separable, f = theta(t) * psi(anchors) * profile(y),
which makes every one of those quantities closed form: the heat semigroup only
touches the profile and the conditioning only touches psi. A generic
cylindrical field falls back to Gauss-Hermite quadrature for both.

Spatial arrays carry the coordinate on the last axis: ``y.shape == (..., d)``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "SpatialProfile",
    "Constant",
    "Linear",
    "Polynomial",
    "FourierSeries",
    "GaussianBump",
    "Peano",
    "AnchorFactor",
    "UnitFactor",
    "LinearAnchor",
    "SquareAnchor",
    "PolynomialAnchor",
    "SeparableField",
    "CylindricalField",
    "FieldSample",
    "gauss_hermite",
    "make_field",
    "catalog_ids",
    "catalog_table",
    "weierstrass",
    "white_noise",
    "load_fourier_csv",
]

GH_NODES = 21


def gauss_hermite(n: int = GH_NODES) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E[h(Z)], Z ~ N(0, 1)."""
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return x, w / math.sqrt(2.0 * math.pi)


def _tau(tau, shape) -> np.ndarray:
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("heat time must be nonnegative")
    return np.broadcast_to(tau, shape)


# ---------------------------------------------------------------------------
# spatial profiles


class SpatialProfile:
    """Deterministic function of y with gradient and heat action.

    ``heat(tau, y, deriv)`` returns P_tau applied to the profile (deriv=0),
    its gradient (deriv=1, trailing axis d) or its Laplacian (deriv=2).
    The default implementation integrates against a Gaussian by tensorized
    Gauss-Hermite; subclasses override it with closed forms.
    """

    d: int = 1
    periodic: bool = False
    bounded: bool = True

    def value(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def laplacian(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sup_norm(self) -> float:
        return math.inf

    def heat_hessian(self, tau, y: np.ndarray) -> np.ndarray:
        """Hessian of P_tau applied to the profile, shape (..., d, d)."""
        y = np.asarray(y, dtype=float)
        tau = _tau(tau, y.shape[:-1])
        x, w = gauss_hermite()
        out = 0.0
        sd = np.sqrt(tau)[..., None]
        for idx in itertools.product(range(x.size), repeat=self.d):
            out = out + np.prod(w[list(idx)]) * self.hessian(y + sd * x[list(idx)])
        return out

    def heat(self, tau, y: np.ndarray, deriv: int = 0) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        tau = _tau(tau, y.shape[:-1])
        x, w = gauss_hermite()
        fn = {0: self.value, 1: self.grad, 2: self.laplacian}[deriv]
        out = 0.0
        sd = np.sqrt(tau)[..., None]
        for idx in itertools.product(range(x.size), repeat=self.d):
            z = x[list(idx)]
            out = out + np.prod(w[list(idx)]) * fn(y + sd * z)
        return out


class Constant(SpatialProfile):
    def __init__(self, c: float = 1.0, d: int = 1):
        self.c, self.d = float(c), d

    def value(self, y):
        return np.full(np.shape(y)[:-1], self.c)

    def grad(self, y):
        return np.zeros(np.shape(y))

    def laplacian(self, y):
        return np.zeros(np.shape(y)[:-1])

    def sup_norm(self):
        return abs(self.c)

    def heat_hessian(self, tau, y):
        return np.zeros(np.shape(y) + (np.shape(y)[-1],))

    def heat(self, tau, y, deriv=0):
        _tau(tau, np.shape(y)[:-1])
        return {0: self.value, 1: self.grad, 2: self.laplacian}[deriv](y)


class Linear(SpatialProfile):
    """a . y + c; invariant under the heat semigroup."""

    bounded = False

    def __init__(self, a, c: float = 0.0):
        self.a = np.atleast_1d(np.asarray(a, dtype=float))
        self.c = float(c)
        self.d = self.a.size

    def value(self, y):
        return np.asarray(y) @ self.a + self.c

    def grad(self, y):
        return np.broadcast_to(self.a, np.shape(y)).copy()

    def laplacian(self, y):
        return np.zeros(np.shape(y)[:-1])

    def heat(self, tau, y, deriv=0):
        _tau(tau, np.shape(y)[:-1])
        return {0: self.value, 1: self.grad, 2: self.laplacian}[deriv](y)

    def heat_hessian(self, tau, y):
        return np.zeros(np.shape(y) + (self.d,))


class Polynomial(SpatialProfile):
    """sum_n c_n y^n in one dimension; heat action via Gaussian moments."""

    bounded = False

    def __init__(self, coeffs):
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.d = 1

    def value(self, y):
        return np.polynomial.polynomial.polyval(np.asarray(y)[..., 0], self.coeffs)

    def grad(self, y):
        dc = np.polynomial.polynomial.polyder(self.coeffs)
        return np.polynomial.polynomial.polyval(np.asarray(y)[..., 0], dc)[..., None]

    def laplacian(self, y):
        dc = np.polynomial.polynomial.polyder(self.coeffs, 2)
        return np.polynomial.polynomial.polyval(np.asarray(y)[..., 0], dc)

    def heat_coeffs(self, tau: float) -> np.ndarray:
        """Coefficients of P_tau p for scalar tau: E[(y + sqrt(tau) Z)^n] expanded."""
        deg = self.coeffs.size - 1
        out = np.zeros(deg + 1)
        for n, c in enumerate(self.coeffs):
            for k in range(n // 2 + 1):
                out[n - 2 * k] += c * math.comb(n, 2 * k) * _double_factorial(2 * k - 1) * tau**k
        return out

    def heat(self, tau, y, deriv=0):
        y = np.asarray(y, dtype=float)
        tau = _tau(tau, y.shape[:-1])
        y0 = y[..., 0]
        out = np.zeros(y0.shape)
        base = self.coeffs
        if deriv:
            base = np.polynomial.polynomial.polyder(base, deriv)
        for n, c in enumerate(base):
            for k in range(n // 2 + 1):
                out = out + c * math.comb(n, 2 * k) * _double_factorial(2 * k - 1) * tau**k * y0 ** (n - 2 * k)
        return out[..., None] if deriv == 1 else out

    def heat_hessian(self, tau, y):
        return self.heat(tau, y, 2)[..., None, None]


def _double_factorial(n: int) -> int:
    return 1 if n <= 0 else n * _double_factorial(n - 2)


class FourierSeries(SpatialProfile):
    """sum_m a_m cos(k_m . y) + b_m sin(k_m . y) on the 2*pi-periodic torus."""

    periodic = True

    def __init__(self, wavevectors, a, b, circumference: float = 2 * math.pi):
        k = np.asarray(wavevectors, dtype=float)
        if k.ndim == 1:
            k = k[:, None]
        self.k = k * (2 * math.pi / circumference)
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.d = k.shape[1]
        self.circumference = circumference
        self.k2 = (self.k**2).sum(axis=1)

    @property
    def n_modes(self) -> int:
        return self.k2.size

    def sup_norm(self):
        return float(np.hypot(self.a, self.b).sum())

    def _phase(self, y):
        return np.asarray(y, dtype=float) @ self.k.T

    def heat(self, tau, y, deriv=0):
        y = np.asarray(y, dtype=float)
        tau = _tau(tau, y.shape[:-1])
        ph = self._phase(y)
        damp = np.exp(-0.5 * tau[..., None] * self.k2)
        c, s = np.cos(ph), np.sin(ph)
        if deriv == 0:
            return ((self.a * c + self.b * s) * damp).sum(axis=-1)
        if deriv == 1:
            return ((-self.a * s + self.b * c) * damp) @ self.k
        if deriv == 2:
            return (-(self.a * c + self.b * s) * damp * self.k2).sum(axis=-1)
        raise ValueError(deriv)

    def heat_jet(self, tau, y, order: int = 2) -> list:
        """[P f, grad P f, Hess P f] (up to ``order``) sharing one phase evaluation."""
        y = np.asarray(y, dtype=float)
        tau = _tau(tau, y.shape[:-1])
        ph = self._phase(y)
        damp = np.exp(-0.5 * tau[..., None] * self.k2)
        c, s = np.cos(ph), np.sin(ph)
        even = (self.a * c + self.b * s) * damp
        out = [even.sum(axis=-1)]
        if order >= 1:
            out.append(((-self.a * s + self.b * c) * damp) @ self.k)
        if order >= 2:
            out.append(-np.einsum("...m,mj,mk->...jk", even, self.k, self.k))
        return out

    def heat_hessian(self, tau, y):
        return self.heat_jet(tau, y, 2)[2]

    def value(self, y):
        return self.heat(0.0, y)

    def grad(self, y):
        return self.heat(0.0, y, 1)

    def laplacian(self, y):
        return self.heat(0.0, y, 2)

    def truncated(self, n_modes: int) -> "FourierSeries":
        out = FourierSeries.__new__(FourierSeries)
        out.k, out.a, out.b = self.k[:n_modes], self.a[:n_modes], self.b[:n_modes]
        out.d, out.circumference, out.k2 = self.d, self.circumference, self.k2[:n_modes]
        return out

    def sobolev_exponent_threshold(self) -> float:
        """Largest m with finite W^{m,2} norm in the K -> infinity limit, from the amplitude decay."""
        kk = np.sqrt(self.k2)
        amp = np.hypot(self.a, self.b)
        keep = (kk > 0) & (amp > 0)
        if keep.sum() < 2:
            return math.inf
        slope = np.polyfit(np.log(kk[keep]), np.log(amp[keep]), 1)[0]
        return -slope - 0.5 * self.d


class GaussianBump(SpatialProfile):
    """exp(-|y - c|^2 / (2 sigma^2))."""

    def __init__(self, sigma: float, center=None, d: int = 1):
        self.sigma = float(sigma)
        self.center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
        self.d = self.center.size

    def sup_norm(self):
        return 1.0

    def heat(self, tau, y, deriv=0):
        y = np.asarray(y, dtype=float) - self.center
        tau = _tau(tau, y.shape[:-1])
        v = self.sigma**2 + tau
        r2 = (y**2).sum(axis=-1)
        g = (self.sigma**2 / v) ** (0.5 * self.d) * np.exp(-0.5 * r2 / v)
        if deriv == 0:
            return g
        if deriv == 1:
            return -(y / v[..., None]) * g[..., None]
        if deriv == 2:
            return (r2 / v**2 - self.d / v) * g
        raise ValueError(deriv)

    def heat_hessian(self, tau, y):
        y = np.asarray(y, dtype=float) - self.center
        tau = _tau(tau, y.shape[:-1])
        v = (self.sigma**2 + tau)[..., None, None]
        g = self.heat(tau, y + self.center)[..., None, None]
        outer = y[..., :, None] * y[..., None, :]
        return g * (outer / v**2 - np.eye(self.d) / v)

    def value(self, y):
        return self.heat(0.0, y)

    def grad(self, y):
        return self.heat(0.0, y, 1)

    def laplacian(self, y):
        return self.heat(0.0, y, 2)


class Peano(SpatialProfile):
    """sqrt(2) sgn(y) sqrt|y|: the classical non-uniqueness drift, d = 1.

    From 0 the ODE x' = b(x) is solved by 0 and by +-(t - t0)^2 / 2 for t > t0.
    """

    bounded = False

    def __init__(self, scale: float = math.sqrt(2.0)):
        self.scale = scale
        self.d = 1

    def value(self, y):
        y0 = np.asarray(y, dtype=float)[..., 0]
        return self.scale * np.sign(y0) * np.sqrt(np.abs(y0))

    def grad(self, y):
        y0 = np.asarray(y, dtype=float)[..., 0]
        with np.errstate(divide="ignore"):
            return (0.5 * self.scale / np.sqrt(np.abs(y0)))[..., None]

    def laplacian(self, y):
        y0 = np.asarray(y, dtype=float)[..., 0]
        with np.errstate(divide="ignore"):
            return -0.25 * self.scale * np.sign(y0) * np.abs(y0) ** -1.5

    def hessian(self, y):
        return self.laplacian(y)[..., None, None]


# ---------------------------------------------------------------------------
# random factors psi(B(g_1 ^ t), ..., B(g_n ^ t))


def _bval(bpath: np.ndarray, dt: float, t) -> np.ndarray:
    """B(t) for lattice times t (any shape), bpath shape (d, n+1); result (..., d)."""
    idx = np.rint(np.asarray(t, dtype=float) / dt).astype(int)
    return np.moveaxis(bpath[:, idx], 0, -1)


class AnchorFactor:
    """psi of anchored Brownian values, with E_u and Malliavin data.

    ``cond_mean(s, u, bpath, dt)`` = E_u[psi(B(g ^ s))] and
    ``cond_grad(s, u, bpath, dt)`` = E_u[sum_i d psi / d b_{i,j} 1{u < g_i ^ s}]
    (trailing axis j), both for arrays of lattice times u <= s.
    ``cond_hess`` is the matching second derivative (trailing axes j, k); it is
    the diffusion coefficient of ``cond_grad`` and feeds the Milstein terms.
    """

    anchors: tuple = ()
    deterministic = False

    def value(self, t, bpath, dt) -> np.ndarray:
        raise NotImplementedError

    def cond_mean(self, s, u, bpath, dt) -> np.ndarray:
        raise NotImplementedError

    def cond_grad(self, s, u, bpath, dt) -> np.ndarray:
        raise NotImplementedError

    def cond_hess(self, s, u, bpath, dt) -> np.ndarray:
        shape = np.broadcast(np.asarray(s), np.asarray(u)).shape
        return np.zeros(shape + (self.d, self.d))


class UnitFactor(AnchorFactor):
    deterministic = True

    def __init__(self, d: int = 1):
        self.d = d

    def value(self, t, bpath, dt):
        return np.ones(np.shape(t))

    def cond_mean(self, s, u, bpath, dt):
        return np.ones(np.broadcast(np.asarray(s), np.asarray(u)).shape)

    def cond_grad(self, s, u, bpath, dt):
        shape = np.broadcast(np.asarray(s), np.asarray(u)).shape
        return np.zeros(shape + (self.d,))


class LinearAnchor(AnchorFactor):
    """C1 * B_k(g ^ t): the chain-rule product factor with upsilon = C1 1{theta <= g}."""

    def __init__(self, gamma: float, k: int = 0, c1: float = 1.0, d: int = 1):
        self.gamma, self.k, self.c1, self.d = float(gamma), int(k), float(c1), d
        self.anchors = (self.gamma,)

    def value(self, t, bpath, dt):
        return self.c1 * _bval(bpath, dt, np.minimum(t, self.gamma))[..., self.k]

    def cond_mean(self, s, u, bpath, dt):
        m = np.minimum(np.minimum(s, self.gamma), u)
        return self.c1 * _bval(bpath, dt, m)[..., self.k]

    def cond_grad(self, s, u, bpath, dt):
        s, u = np.broadcast_arrays(np.asarray(s, float), np.asarray(u, float))
        out = np.zeros(s.shape + (self.d,))
        out[..., self.k] = self.c1 * (u < np.minimum(s, self.gamma))
        return out


class SquareAnchor(AnchorFactor):
    """B_k(g ^ t)^2."""

    def __init__(self, gamma: float, k: int = 0, d: int = 1):
        self.gamma, self.k, self.d = float(gamma), int(k), d
        self.anchors = (self.gamma,)

    def value(self, t, bpath, dt):
        return _bval(bpath, dt, np.minimum(t, self.gamma))[..., self.k] ** 2

    def cond_mean(self, s, u, bpath, dt):
        top = np.minimum(s, self.gamma)
        m = np.minimum(top, u)
        return _bval(bpath, dt, m)[..., self.k] ** 2 + np.maximum(top - u, 0.0)

    def cond_grad(self, s, u, bpath, dt):
        s, u = np.broadcast_arrays(np.asarray(s, float), np.asarray(u, float))
        top = np.minimum(s, self.gamma)
        out = np.zeros(s.shape + (self.d,))
        live = u < top
        out[..., self.k] = 2.0 * _bval(bpath, dt, np.minimum(top, u))[..., self.k] * live
        return out

    def cond_hess(self, s, u, bpath, dt):
        s, u = np.broadcast_arrays(np.asarray(s, float), np.asarray(u, float))
        out = np.zeros(s.shape + (self.d, self.d))
        out[..., self.k, self.k] = 2.0 * (u < np.minimum(s, self.gamma))
        return out


class PolynomialAnchor(AnchorFactor):
    """Generic psi(b_1, ..., b_n) with b_i = B(g_i ^ t) in R^d; conditioning by Gauss-Hermite.

    ``psi(b)`` and ``dpsi(b)`` receive ``b`` of shape (..., n, d); ``dpsi``
    returns the same shape. The number of future Gaussian blocks is capped at 3
    because the verifier calls this inside its O(N^2) pair loop.
    """

    max_dim = 3

    def __init__(
        self, anchors, psi: Callable, dpsi: Callable, d: int = 1, nodes: int = GH_NODES, d2psi: Callable | None = None
    ):
        self.anchors = tuple(sorted(float(g) for g in anchors))
        self.psi, self.dpsi, self.d, self.nodes = psi, dpsi, d, nodes
        self.d2psi = d2psi
        if len(self.anchors) * d > self.max_dim:
            raise ValueError("Gauss-Hermite conditioning limited to 3 Gaussian dimensions")

    def value(self, t, bpath, dt):
        t = np.asarray(t, dtype=float)
        b = np.stack([_bval(bpath, dt, np.minimum(t, g)) for g in self.anchors], axis=-2)
        return self.psi(b)

    def _expect(self, fn, s, u, bpath, dt):
        s, u = np.broadcast_arrays(np.asarray(s, float), np.asarray(u, float))
        g = np.array(self.anchors)
        top = np.minimum(s[..., None], g)  # (..., n)
        known = _bval(bpath, dt, np.minimum(top, u[..., None]))  # (..., n, d)
        # variance of block i: increment between consecutive future points
        prev = np.concatenate([u[..., None], top[..., :-1]], axis=-1)
        var = np.maximum(top - np.maximum(prev, u[..., None]), 0.0)  # (..., n)
        x, w = gauss_hermite(self.nodes)
        n, d = len(self.anchors), self.d
        out = 0.0
        for idx in itertools.product(range(x.size), repeat=n * d):
            z = x[list(idx)].reshape(n, d)
            steps = np.sqrt(var)[..., None] * z  # (..., n, d)
            b = known + np.cumsum(steps, axis=-2)
            out = out + np.prod(w[list(idx)]) * fn(b, top, u)
        return out

    def cond_mean(self, s, u, bpath, dt):
        return self._expect(lambda b, top, u_: self.psi(b), s, u, bpath, dt)

    def cond_grad(self, s, u, bpath, dt):
        def fn(b, top, u_):
            live = (u_[..., None] < top)[..., None]
            return (self.dpsi(b) * live).sum(axis=-2)

        return self._expect(fn, s, u, bpath, dt)

    def cond_hess(self, s, u, bpath, dt):
        """Needs ``d2psi(b)`` of shape (..., n, n, d, d); zero when psi is affine."""
        if self.d2psi is None:
            raise NotImplementedError("cond_hess needs d2psi")

        def fn(b, top, u_):
            live = (u_[..., None] < top).astype(float)  # (..., n)
            mask = live[..., :, None, None, None] * live[..., None, :, None, None]
            return (self.d2psi(b) * mask).sum(axis=(-4, -3))

        return self._expect(fn, s, u, bpath, dt)


# ---------------------------------------------------------------------------
# fields


@dataclass
class SeparableField:
    """f(t, y) = time_factor(t) * factor(anchors) * profile(y)."""

    profile: SpatialProfile
    factor: AnchorFactor = None
    time_factor: Callable | None = None
    name: str = ""
    kind: str = "deterministic"
    regime: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.factor is None:
            self.factor = UnitFactor(self.profile.d)

    @property
    def d(self) -> int:
        return self.profile.d

    @property
    def deterministic(self) -> bool:
        return self.factor.deterministic

    @property
    def anchors(self) -> tuple:
        return self.factor.anchors

    def theta(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.ones(t.shape) if self.time_factor is None else self.time_factor(t)

    # The verifier's hooks; t, s, u are arrays of lattice times broadcasting against y[..., 0].
    def value(self, t, y, bpath, dt):
        return self.theta(t) * self.factor.value(t, bpath, dt) * self.profile.value(y)

    def heat_fa(self, tau, s, u, y, bpath, dt, deriv=0):
        """P_tau f^a(s, u, .) at y (deriv 0) or its spatial gradient (deriv 1)."""
        c = self.theta(s) * self.factor.cond_mean(s, u, bpath, dt)
        h = self.profile.heat(tau, y, deriv)
        return c[..., None] * h if deriv == 1 else c * h

    def heat_f(self, tau, s, y, bpath, dt):
        """P_tau f(s, .) at y with the randomness frozen at time s."""
        return self.theta(s) * self.factor.value(s, bpath, dt) * self.profile.heat(tau, y)

    def heat_g(self, tau, s, u, y, bpath, dt):
        """(P_tau g_j(s, u, .)(y))_j and P_tau sum_j d_j g_j(s, u, .)(y)."""
        gbar = self.theta(s)[..., None] * self.factor.cond_grad(s, u, bpath, dt)  # (..., d)
        if not np.any(gbar):
            z = np.zeros(np.shape(gbar)[:-1])
            return np.zeros(np.shape(gbar)), z
        h0 = self.profile.heat(tau, y)
        h1 = self.profile.heat(tau, y, 1)
        return gbar * h0[..., None], (gbar * h1).sum(axis=-1)

    def pair_jet(self, tau, s, u, y, bpath, dt, order: int = 2) -> dict:
        """Everything the verifier needs on a batch of (u, s) pairs.

        ``c`` = theta(s) E_u psi, ``gbar`` = theta(s) cond_grad, ``hbar`` =
        theta(s) cond_hess (the last two only for random factors) and the heat
        jet ``h`` = [P, grad P, Hess P] of the profile at y, up to ``order``.
        """
        th = self.theta(s)
        out = {"c": th * self.factor.cond_mean(s, u, bpath, dt)}
        if not self.deterministic:
            out["gbar"] = th[..., None] * self.factor.cond_grad(s, u, bpath, dt)
            if order >= 2:
                out["hbar"] = th[..., None, None] * self.factor.cond_hess(s, u, bpath, dt)
        if hasattr(self.profile, "heat_jet"):
            out["h"] = self.profile.heat_jet(tau, y, order)
        else:
            h = [self.profile.heat(tau, y), self.profile.heat(tau, y, 1)]
            if order >= 2:
                h.append(self.profile.heat_hessian(tau, y))
            out["h"] = h[: order + 1]
        return out


@dataclass
class CylindricalField:
    """Non-separable phi(t, b, y) with b of shape (..., n, d); everything by quadrature.

    ``grad_y`` and ``grad_b`` are the analytic partial derivatives of phi.
    Heat actions use tensorized Gauss-Hermite in y, conditioning uses
    Gauss-Hermite over the future anchor increments (at most 3 dimensions in
    total).
    """

    anchors_: tuple
    phi: Callable
    grad_y: Callable
    grad_b: Callable
    d: int = 1
    name: str = ""
    kind: str = "cylindrical"
    nodes: int = GH_NODES
    regime: dict = field(default_factory=dict)

    @property
    def anchors(self):
        return tuple(sorted(self.anchors_))

    @property
    def deterministic(self) -> bool:
        return len(self.anchors_) == 0

    def _b(self, t, bpath, dt):
        t = np.asarray(t, float)
        if not self.anchors:
            return np.zeros(t.shape + (0, self.d))
        return np.stack([_bval(bpath, dt, np.minimum(t, g)) for g in self.anchors], axis=-2)

    def value(self, t, y, bpath, dt):
        return self.phi(np.asarray(t, float), self._b(t, bpath, dt), np.asarray(y, float))

    def _cond(self, fn, s, u, bpath, dt):
        s, u = np.broadcast_arrays(np.asarray(s, float), np.asarray(u, float))
        n = len(self.anchors)
        if n == 0:
            return fn(np.zeros(s.shape + (0, self.d)), np.zeros(s.shape + (0,)), u)
        if n * self.d > 3:
            raise ValueError("Gauss-Hermite conditioning limited to 3 Gaussian dimensions")
        g = np.array(self.anchors)
        top = np.minimum(s[..., None], g)
        known = _bval(bpath, dt, np.minimum(top, u[..., None]))
        prev = np.concatenate([u[..., None], top[..., :-1]], axis=-1)
        var = np.maximum(top - np.maximum(prev, u[..., None]), 0.0)
        x, w = gauss_hermite(self.nodes)
        out = 0.0
        for idx in itertools.product(range(x.size), repeat=n * self.d):
            z = x[list(idx)].reshape(n, self.d)
            b = known + np.cumsum(np.sqrt(var)[..., None] * z, axis=-2)
            out = out + np.prod(w[list(idx)]) * fn(b, top, u)
        return out

    def _heat(self, tau, y, fn):
        y = np.asarray(y, float)
        tau = _tau(tau, y.shape[:-1])
        x, w = gauss_hermite(self.nodes)
        sd = np.sqrt(tau)[..., None]
        out = 0.0
        for idx in itertools.product(range(x.size), repeat=self.d):
            out = out + np.prod(w[list(idx)]) * fn(y + sd * x[list(idx)])
        return out

    def fa(self, s, u, y, bpath, dt, deriv=0):
        s = np.asarray(s, float)
        if deriv == 0:
            return self._cond(lambda b, top, u_: self.phi(s, b, y), s, u, bpath, dt)
        return self._cond(lambda b, top, u_: self.grad_y(s, b, y), s, u, bpath, dt)

    def g(self, s, u, y, bpath, dt, deriv=0):
        s = np.asarray(s, float)

        def fn(b, top, u_):
            live = (u_[..., None] < top)[..., None]
            gb = self.grad_b(s, b, y)  # (..., n, d)
            return (gb * live).sum(axis=-2)

        def fn_div(b, top, u_, h=1e-5):
            live = (u_[..., None] < top)[..., None]
            out = 0.0
            for j in range(self.d):
                e = np.zeros(self.d)
                e[j] = h
                gp = self.grad_b(s, b, y + e)[..., j]
                gm = self.grad_b(s, b, y - e)[..., j]
                out = out + ((gp - gm) / (2 * h) * live[..., 0]).sum(axis=-1)
            return out

        return self._cond(fn if deriv == 0 else fn_div, s, u, bpath, dt)

    def heat_fa(self, tau, s, u, y, bpath, dt, deriv=0):
        return self._heat(tau, y, lambda z: self.fa(s, u, z, bpath, dt, deriv))

    def heat_f(self, tau, s, y, bpath, dt):
        return self._heat(tau, y, lambda z: self.value(s, z, bpath, dt))

    def heat_g(self, tau, s, u, y, bpath, dt):
        g = self._heat(tau, y, lambda z: self.g(s, u, z, bpath, dt))
        div = self._heat(tau, y, lambda z: self.g(s, u, z, bpath, dt, deriv=1))
        return g, div


class FieldSample:
    """A field bound to one Brownian lattice; times must be lattice points in [0, T]."""

    def __init__(self, spec, lattice):
        self.spec = spec
        self.lattice = lattice
        self.bpath = lattice.brownian()
        self.dt = lattice.dt
        for g in spec.anchors:
            lattice.time_index(g)

    def _y(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape[-1] != self.spec.d:
            x = x[..., None]
        if getattr(getattr(self.spec, "profile", None), "periodic", False):
            circ = self.spec.profile.circumference
            if np.any(x < -circ) or np.any(x > 2 * circ):
                raise ValueError("point outside the periodic domain")
        return x

    def _t(self, *ts):
        for t in ts:
            self.lattice.time_index(t)

    def eval(self, t, x):
        self._t(t)
        return float(self.spec.value(np.asarray(t, float), self._y(x), self.bpath, self.dt))

    def eval_fa(self, s, t, x):
        if t > s:
            raise ValueError("need t <= s")
        self._t(s, t)
        y = self._y(x)
        if isinstance(self.spec, SeparableField):
            v = self.spec.heat_fa(0.0, np.asarray(s, float), np.asarray(t, float), y, self.bpath, self.dt)
        else:
            v = self.spec.fa(np.asarray(s, float), np.asarray(t, float), y, self.bpath, self.dt)
        return float(v)

    def eval_g(self, j, s, u, x):
        if u > s:
            raise ValueError("need u <= s")
        self._t(s, u)
        y = self._y(x)
        if isinstance(self.spec, SeparableField):
            g, _ = self.spec.heat_g(0.0, np.asarray(s, float), np.asarray(u, float), y, self.bpath, self.dt)
        else:
            g = self.spec.g(np.asarray(s, float), np.asarray(u, float), y, self.bpath, self.dt)
        return float(np.asarray(g)[..., j])

    def eval_divergence(self, s, u, x):
        if u > s:
            raise ValueError("need u <= s")
        self._t(s, u)
        y = self._y(x)
        if isinstance(self.spec, SeparableField):
            _, div = self.spec.heat_g(0.0, np.asarray(s, float), np.asarray(u, float), y, self.bpath, self.dt)
        else:
            div = self.spec.g(np.asarray(s, float), np.asarray(u, float), y, self.bpath, self.dt, deriv=1)
        return float(div)


# ---------------------------------------------------------------------------
# catalog


def weierstrass(s: float, n_terms: int = 8) -> FourierSeries:
    """Lacunary series sum_k 2^{-k s} cos(2^k y), k = 0..n_terms-1; in W^{m,2} iff m < s."""
    k = 2.0 ** np.arange(n_terms)
    return FourierSeries(k, 2.0 ** (-np.arange(n_terms) * s), np.zeros(n_terms))


def white_noise(n_modes: int, decay: float = 0.0, seed: int = 0) -> FourierSeries:
    """Unit-amplitude modes k = 1..K with seeded phases, amplitudes k^{-decay}."""
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0.0, 2 * math.pi, n_modes)
    k = np.arange(1, n_modes + 1, dtype=float)
    amp = k ** (-decay)
    return FourierSeries(k, amp * np.cos(phase), amp * np.sin(phase))


def load_fourier_csv(path) -> FourierSeries:
    """Coefficient table with columns k_1..k_d, re, im: term re*cos(k.y) - im*sin(k.y) (real part of c e^{ik.y})."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no coefficients")
    kcols = sorted((c for c in rows[0] if c.startswith("k_")), key=lambda c: int(c[2:]))
    k = np.array([[float(r[c]) for c in kcols] for r in rows])
    re = np.array([float(r["re"]) for r in rows])
    im = np.array([float(r["im"]) for r in rows])
    return FourierSeries(k, re, -im)


def _profile(name: str, opts: dict, d: int) -> SpatialProfile:
    if name == "sin":
        return FourierSeries([[1.0] + [0.0] * (d - 1)], [0.0], [1.0])
    if name == "cos":
        return FourierSeries([[1.0] + [0.0] * (d - 1)], [1.0], [0.0])
    if name == "sin1cos2":
        # sin(y1) cos(y2) = (sin(y1 + y2) + sin(y1 - y2)) / 2
        return FourierSeries([[1.0, 1.0], [1.0, -1.0]], [0.0, 0.0], [0.5, 0.5])
    if name == "one":
        return Constant(1.0, d)
    if name == "linear":
        return Linear([float(opts.get("a", 1.0))] + [0.0] * (d - 1))
    if name == "x2":
        return Polynomial([0.0, 0.0, 1.0])
    if name == "bump":
        return GaussianBump(float(opts.get("sigma", 0.5)), d=d)
    if name == "poly":
        return Polynomial([float(c) for c in opts["c"].split(",")])
    raise KeyError(name)


def _parse(field_id: str) -> tuple[list[str], dict]:
    parts = field_id.split(":")
    names = [p for p in parts if "=" not in p]
    opts = dict(p.split("=", 1) for p in parts if "=" in p)
    return names, opts


def make_field(field_id: str):
    """Build a catalog entry from its string id, e.g. ``product:cos:tau=0.5:k=1``."""
    names, opts = _parse(field_id)
    if not names:
        raise KeyError(field_id)
    kind = names[0]
    d = int(opts.get("d", 2 if "sin1cos2" in names else 1))
    try:
        if kind == "det":
            prof = _profile(names[1], opts, d)
            tf = np.cos if opts.get("t") == "cos" else None
            return SeparableField(prof, time_factor=tf, name=field_id)
        if kind == "rough":
            if names[1] == "weierstrass":
                prof = weierstrass(float(opts.get("s", 0.5)), int(opts.get("K", 8)))
                return SeparableField(prof, name=field_id, kind="rough", regime={"sobolev_below": float(opts.get("s", 0.5))})
            raise KeyError(field_id)
        if kind == "peano":
            return SeparableField(Peano(), name=field_id, kind="rough", regime={"holder": 0.5})
        if kind == "product":
            prof = _profile(names[1], opts, d)
            k = int(opts.get("k", 1)) - 1
            fac = LinearAnchor(float(opts.get("tau", 0.5)), k, float(opts.get("c1", 1.0)), d=prof.d)
            return SeparableField(prof, fac, name=field_id, kind="product", regime={"iota": 0.0, "tau_b": fac.gamma})
        if kind == "square":
            prof = _profile(names[1], opts, d)
            fac = SquareAnchor(float(opts.get("gamma", 0.5)), int(opts.get("k", 1)) - 1, d=prof.d)
            return SeparableField(prof, fac, name=field_id, kind="adapted")
        if kind == "fourier":
            K = int(opts.get("K", 256))
            if names[1] == "white":
                prof = white_noise(K, 0.0, int(opts.get("seed", 0)))
            elif names[1] == "decay":
                prof = white_noise(K, float(opts.get("s", 1.0)), int(opts.get("seed", 0)))
            else:
                raise KeyError(field_id)
            return SeparableField(prof, name=field_id, kind="distributional")
        if kind == "csv":
            return SeparableField(load_fourier_csv(field_id.split(":", 1)[1]), name=field_id, kind="distributional")
    except KeyError:
        raise KeyError(f"unknown catalog id {field_id!r}") from None
    raise KeyError(f"unknown catalog id {field_id!r}")


_CATALOG = [
    ("det:one", "deterministic", "f = 1"),
    ("det:linear", "deterministic", "f = y_1"),
    ("det:linear:a=-1", "deterministic", "f = -y_1, mean-reverting drift"),
    ("det:sin", "deterministic", "f = sin(y)"),
    ("det:cos", "deterministic", "f = cos(y)"),
    ("det:sin:t=cos", "deterministic", "f = sin(y) cos(t)"),
    ("det:sin1cos2", "deterministic", "f = sin(y1) cos(y2), d = 2"),
    ("det:bump:sigma=0.5", "deterministic", "Gaussian bump"),
    ("det:poly:c=0,1,0,1", "deterministic", "f = y + y^3"),
    ("rough:weierstrass:s=0.5:K=8", "rough", "lacunary series, W^{m,2} for m < s"),
    ("peano", "rough", "sqrt(2) sgn(y) sqrt|y|"),
    ("product:cos:tau=0.5:k=1", "product", "cos(y) B_1(0.5 ^ t), iota = 0"),
    ("product:sin:tau=0.4:k=1", "product", "sin(y) B_1(0.4 ^ t), iota = 0"),
    ("square:linear:gamma=0.5", "adapted", "B_1(0.5 ^ t)^2 y"),
    ("fourier:white:K=256", "distributional", "white-noise Fourier series, K modes"),
    ("fourier:decay:s=1.5:K=64", "distributional", "Fourier series with k^{-s} amplitudes"),
]

_FUNCTIONALS = [
    ("functional:B1", "clark-ocone", "F = B_1(t1)"),
    ("functional:B1sq", "clark-ocone", "F = B_1(t1)^2"),
    ("functional:expmart", "clark-ocone", "F = exp(B_1(t1) - t1/2)"),
]


def catalog_ids() -> list[str]:
    return [c[0] for c in _CATALOG] + [c[0] for c in _FUNCTIONALS]


def catalog_table() -> list[tuple[str, str, str]]:
    return list(_CATALOG) + list(_FUNCTIONALS)
