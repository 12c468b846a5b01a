"""Analytic oracles.

The flow of the scalar ODE dy/dt = f(y) run backwards, its general-generator
version through the transform F(y) = -int_y^inf dx / f(x), Keller-Osserman
constants, the exact half-line blow-up profile, and Laplace-transform formulas
for Brownian exit times from an interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special


class DivergentTransform(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    """Monotone generator f with f(0) = 0 and f(y) <= -kappa y^(1+q).

    ``kind="power"`` is f(y) = -kappa y |y|^q.  ``kind="tabulated"`` interpolates
    (y, f) nodes linearly, starting at y = 0; beyond the last node the tail is
    continued as c y^(1+q) with c matched at the last node.
    """

    q: float
    kappa: float = 1.0
    kind: str = "power"
    nodes: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.q <= 0:
            raise ValueError("q must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be nonnegative")
        if self.kind == "tabulated":
            y = np.asarray(self.nodes, dtype=float)
            f = np.asarray(self.values, dtype=float)
            if y.size < 2 or y.size != f.size or y[0] != 0.0 or f[0] != 0.0:
                raise ValueError("tabulated generator needs matching nodes starting at (0, 0)")
            if np.any(np.diff(y) <= 0) or np.any(np.diff(f) > 0):
                raise ValueError("tabulated generator must be nonincreasing on increasing nodes")
            if np.any(f > -self.kappa * y ** (1 + self.q) + 1e-12 * np.abs(f)):
                raise ValueError("tabulated generator violates f(y) <= -kappa y^(1+q)")
            if self.kappa <= 0:
                raise ValueError("tabulated generator needs kappa > 0")
        elif self.kind != "power":
            raise ValueError(f"unknown generator kind {self.kind!r}")

    @property
    def _tail_coef(self) -> float:
        return -self.values[-1] / self.nodes[-1] ** (1 + self.q)

    def f(self, y):
        y = np.asarray(y, dtype=float)
        if self.kind == "power":
            return -self.kappa * y * np.abs(y) ** self.q
        inside = np.interp(y, self.nodes, self.values)
        tail = -self._tail_coef * np.abs(y) ** (1 + self.q)
        return np.where(y <= self.nodes[-1], inside, tail)

    def df(self, y):
        """Derivative of f (one-sided for tabulated generators)."""
        y = np.asarray(y, dtype=float)
        if self.kind == "power":
            return -self.kappa * (1 + self.q) * np.abs(y) ** self.q
        nodes = np.asarray(self.nodes)
        slopes = np.diff(self.values) / np.diff(nodes)
        k = np.clip(np.searchsorted(nodes, y, side="right") - 1, 0, slopes.size - 1)
        tail = -self._tail_coef * (1 + self.q) * np.abs(y) ** self.q
        return np.where(y <= nodes[-1], slopes[k], tail)

    def describe(self) -> dict:
        out = {"kind": self.kind, "q": self.q, "kappa": self.kappa}
        if self.kind == "tabulated":
            out.update(nodes=list(self.nodes), values=list(self.values))
        return out


def power(q: float, kappa: float = 1.0) -> GeneratorSpec:
    return GeneratorSpec(q=q, kappa=kappa)


# ---------------------------------------------------------------------------
# backward ODE flow


def ode_flow_alpha(q, xi, tau, t):
    """alpha_t = (q (tau - tau ^ t) + xi^-q)^(-1/q) before tau, and xi from tau on.

    ``xi`` may be +inf; then alpha blows up as t -> tau.
    """
    xi = np.asarray(xi, dtype=float)
    tau = np.asarray(tau, dtype=float)
    t = np.asarray(t, dtype=float)
    remaining = tau - np.minimum(tau, t)
    with np.errstate(divide="ignore", over="ignore"):
        inv = q * remaining + np.where(np.isinf(xi), 0.0, xi ** (-q))
        alpha = np.where(inv > 0, inv ** (-1.0 / q), np.inf)
    out = np.where(t >= tau, xi, alpha)
    return out[()] if out.ndim == 0 else out


def f_transform(gen: GeneratorSpec, y):
    """F(y) = -int_y^inf dx / f(x) for y > 0."""
    if np.any(np.asarray(y) <= 0):
        raise ValueError("F is defined for y > 0")
    if gen.kappa == 0:
        raise DivergentTransform("F diverges for kappa = 0")
    if gen.kind == "power":
        y = np.asarray(y, dtype=float)
        out = y ** (-gen.q) / (gen.kappa * gen.q)
        return out[()] if out.ndim == 0 else out
    return _vectorize(lambda v: _f_transform_tab(gen, v), y)


def _vectorize(fn, y):
    arr = np.asarray(y, dtype=float)
    out = np.array([fn(float(v)) for v in arr.reshape(-1)]).reshape(arr.shape)
    return out[()] if out.ndim == 0 else out


def _f_transform_tab(gen: GeneratorSpec, y: float) -> float:
    y_last = gen.nodes[-1]
    tail_start = max(y, y_last)
    tail = tail_start ** (-gen.q) / (gen._tail_coef * gen.q)
    if y >= y_last:
        return tail
    nodes = np.asarray(gen.nodes)
    breaks = [y] + [v for v in nodes if y < v < y_last] + [y_last]
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        part, err = integrate.quad(lambda x: -1.0 / float(gen.f(x)), a, b, epsabs=0.0, epsrel=1e-12, limit=200)
        total += part
    if not np.isfinite(total):
        raise DivergentTransform("F diverges")
    return total + tail


def f_transform_inverse(gen: GeneratorSpec, v):
    """The unique y > 0 with F(y) = v."""
    if np.any(np.asarray(v) <= 0) or np.any(~np.isfinite(np.asarray(v, dtype=float))):
        raise ValueError("F takes values in (0, inf)")
    if gen.kind == "power":
        v = np.asarray(v, dtype=float)
        out = (gen.kappa * gen.q * v) ** (-1.0 / gen.q)
        return out[()] if out.ndim == 0 else out
    return _vectorize(lambda w: _f_inverse_tab(gen, w), v)


def _f_inverse_tab(gen, v: float, rtol: float = 1e-12) -> float:
    # F is decreasing; bracket in log y then bisect
    lo, hi = 1e-3, 1e3
    while _f_transform_tab(gen, lo) < v:
        lo *= 1e-3
        if lo < 1e-300:
            raise ValueError("value outside the range of F")
    while _f_transform_tab(gen, hi) > v:
        hi *= 1e3
        if hi > 1e300:
            raise ValueError("value outside the range of F")
    while hi / lo - 1.0 > rtol:
        mid = math.sqrt(lo * hi)
        if _f_transform_tab(gen, mid) > v:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


def general_flow(gen: GeneratorSpec, xi, horizon):
    """Y with F(Y) = F(xi) + horizon, F(+inf) = 0: the backward flow of dy = f(y) dt."""
    xi = np.asarray(xi, dtype=float)
    horizon = np.asarray(horizon, dtype=float)
    if np.any(horizon < 0):
        raise ValueError("horizon must be nonnegative")
    if gen.kind == "power":
        with np.errstate(divide="ignore", over="ignore"):
            inv = gen.kappa * gen.q * horizon + np.where(np.isinf(xi), 0.0, xi ** (-gen.q))
            out = np.where(inv > 0, inv ** (-1.0 / gen.q), np.inf)
        out = np.where(horizon == 0, xi, out)
        return out[()] if out.ndim == 0 else out

    def one(x, h):
        if h == 0:
            return x
        base = 0.0 if math.isinf(x) else _f_transform_tab(gen, x)
        return _f_inverse_tab(gen, base + h)

    xi_b, h_b = np.broadcast_arrays(xi, horizon)
    out = np.array([one(float(a), float(b)) for a, b in zip(xi_b.reshape(-1), h_b.reshape(-1))]).reshape(xi_b.shape)
    return out[()] if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Keller-Osserman majorant


@dataclass(frozen=True)
class MajorantSpec:
    C: float
    q: float
    eps: float = 0.0
    criterion: str = "brownian_ball"

    @property
    def exponent(self) -> float:
        return 2.0 / self.q


def keller_osserman_constant(
    q: float,
    d: int,
    setting: str = "brownian_ball",
    *,
    kappa: float = 1.0,
    sigma_scale: float = 1.0,
    sigma_sup: float | None = None,
    b_sup: float = 0.0,
    theta_sup: float = 1.0,
    grad_theta_sup: float = 1.0,
    trace_bound: float = 0.0,
) -> float:
    """Constant C of the a priori bound |Y| <= C / rho^(2/q).

    ``brownian_ball`` (zero drift, sigma = s Id, D a ball):
        kappa C^q = (4/q)(2/q + 1) s^2 + 4 d s^2 / q,
    the sum of the worst boundary (gradient) and centre (trace) terms, so it
    is admissible for every rho but not minimal.  ``generic`` uses the conservative
        kappa C^q = (2/q)(2/q+1) sigma_sup^2 + (2/q) theta_sup b_sup grad_theta_sup
                    + (1/q) theta_sup trace_bound
    where trace_bound bounds |Trace(sigma sigma^T D^2 theta)|.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    if d < 1:
        raise ValueError("dimension must be positive")
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if setting == "brownian_ball":
        s2 = sigma_scale**2
        cq = (4.0 / q) * (2.0 / q + 1.0) * s2 + 4.0 * d * s2 / q
    elif setting == "generic":
        sig = sigma_scale if sigma_sup is None else sigma_sup
        cq = (
            (2.0 / q) * (2.0 / q + 1.0) * sig**2
            + (2.0 / q) * theta_sup * b_sup * grad_theta_sup
            + (1.0 / q) * theta_sup * trace_bound
        )
    else:
        raise ValueError(f"unknown setting {setting!r}")
    return float((cq / kappa) ** (1.0 / q))


def ball_bracket(C, q, d, rho, R, eps=0.0, sigma_scale=1.0, kappa=1.0):
    """Left side of the Keller-Osserman inequality on a ball of radius R, zero drift.

    Uses theta_eps(x) = (R^2 + eps - |x - y|^2) / R, evaluated at distance rho
    from the boundary (|x - y| = R - rho).
    """
    rho = np.asarray(rho, dtype=float)
    r = R - rho
    theta = (R**2 + eps - r**2) / R
    grad_sq = 4.0 * r**2 / R**2 * sigma_scale**2
    trace = -2.0 * d * sigma_scale**2 / R
    return kappa * C**q - (1.0 / q) * (2.0 / q + 1.0) * grad_sq + theta / q * trace


def majorant_value(spec: MajorantSpec, rho):
    """C / (rho + eps)^(2/q), +inf where rho + eps = 0."""
    base = np.asarray(rho, dtype=float) + spec.eps
    with np.errstate(divide="ignore"):
        out = np.where(base > 0, spec.C / np.where(base > 0, base, 1.0) ** spec.exponent, np.inf)
    return out[()] if out.ndim == 0 else out


def halfline_blowup_coefficient(q: float, sigma: float, kappa: float = 1.0) -> float:
    """A with u(x) = A x^(-2/q) solving (sigma^2/2) u'' = kappa u^(1+q) on x > 0."""
    if q <= 0 or sigma <= 0 or kappa <= 0:
        raise ValueError("q, sigma and kappa must be positive")
    return float(((sigma**2 / (kappa * q)) * (2.0 / q + 1.0)) ** (1.0 / q))


# ---------------------------------------------------------------------------
# Brownian exit from an interval


def brownian_interval_mean_exit_time(x, a=0.0, b=1.0, sigma=1.0):
    """E tau = (x - a)(b - x) / sigma^2."""
    x = np.asarray(x, dtype=float)
    return (x - a) * (b - x) / sigma**2


def brownian_interval_laplace(lam, x, a=0.0, b=1.0, sigma=1.0):
    """E exp(-lam tau) for sigma B started at x in (a, b)."""
    k = np.sqrt(2.0 * np.asarray(lam, dtype=float)) / sigma
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    # cosh ratio written with exponentials to stay finite for large k
    e1 = np.exp(k * (abs(x - mid) - half))
    e2 = np.exp(-k * (abs(x - mid) + half))
    return (e1 + e2) / (1.0 + np.exp(-2.0 * k * half))


def brownian_interval_inverse_moment(x, s, a=0.0, b=1.0, sigma=1.0) -> float:
    """E tau^(-s), s > 0, from E tau^(-s) = Gamma(s)^-1 int_0^inf lam^(s-1) E e^(-lam tau) dlam."""
    if not a < x < b:
        raise ValueError("x must be interior")
    if s <= 0:
        raise ValueError("s must be positive")

    # substitute lam = w^2 / 2 to remove the sqrt in the exponent
    def integrand(w):
        lam = 0.5 * w * w
        return lam ** (s - 1.0) * w * brownian_interval_laplace(lam, x, a, b, sigma)

    scale = sigma / min(x - a, b - x)
    total = 0.0
    edges = [0.0, scale, 10 * scale, 100 * scale, np.inf]
    for lo, hi in zip(edges[:-1], edges[1:]):
        part, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-12, limit=400)
        total += part
    return float(total / special.gamma(s))
