"""Gauge-side geometry: anisotropic dilations, pseudo-gauge, vector fields,
fundamental solution, and the bidirectional field transform between the
extension coordinates (x, y) and the gauge coordinates (x, z).

The anisotropic dilations are delta_lambda(x, z) = (lambda^(alpha+1) x,
lambda z); the pseudo-gauge rho_alpha is homogeneous of degree one for
them.  All gauge-sphere integrals are computed either by pushforward to
weighted Euclidean spheres or, in one thin dimension, by a direct
adaptive quadrature along the gauge circle used as an independent route
in the correspondence checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .core import Field, WeightParams, h_derivative, h_inverse, h_transform
from .quadrature import sphere_rule, weighted_sphere_area

__all__ = [
    "rho_alpha", "dilate", "z_alpha_apply", "psi_alpha", "grad_rho_alpha",
    "GaugeGeometry", "c_alpha_constant", "fundamental_solution",
    "to_grushin", "from_grushin", "GrushinSideField", "ExtensionSideField",
    "commutator_check", "pushforward_integral", "gauge_sphere_integral",
    "gauge_ball_integral",
]


# --------------------------------------------------------------------------
# gauge, dilations, generator
# --------------------------------------------------------------------------

def rho_alpha(x, z, alpha: float):
    """Pseudo-gauge ((alpha+1)^2 |x|^2 + |z|^(2(alpha+1)))^(1/(2(alpha+1)))."""
    if alpha <= -0.5:
        raise ValueError("alpha must exceed -1/2")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = np.asarray(z, dtype=float)
    ap1 = alpha + 1.0
    return (ap1 ** 2 * np.sum(x ** 2, axis=1)
            + np.abs(z) ** (2 * ap1)) ** (1.0 / (2 * ap1))


def dilate(x, z, lam: float, alpha: float):
    """Anisotropic dilation (lambda^(alpha+1) x, lambda z)."""
    if lam <= 0:
        raise ValueError("dilation parameter must be positive")
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    return lam ** (alpha + 1.0) * x, lam * z


def psi_alpha(x, z, alpha: float):
    """Conformal factor |z|^(2 alpha) / rho_alpha^(2 alpha), in [0, 1] for
    alpha >= 0."""
    rho = rho_alpha(x, z, alpha)
    z = np.asarray(z, dtype=float)
    return np.abs(z) ** (2 * alpha) / rho ** (2 * alpha)


def grad_rho_alpha(x, z, alpha: float):
    """Euclidean gradient of the pseudo-gauge away from the origin."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = np.asarray(z, dtype=float)
    ap1 = alpha + 1.0
    rho = rho_alpha(x, z, alpha)
    gx = ap1 * x / rho[:, None] ** (2 * alpha + 1)
    gz = np.abs(z) ** (2 * alpha) * z / rho ** (2 * alpha + 1)
    return gx, gz


def z_alpha_apply(f, x, z, alpha: float):
    """Generator of the dilations: (alpha+1) sum x_i d/dx_i + z d/dz.

    Uses the object's analytic gradient when available, otherwise central
    differences.  On a homogeneous function of degree kappa the result is
    kappa * f."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    z = np.asarray(z, dtype=float)
    if hasattr(f, "gradient"):
        gx, gz = f.gradient(x, z)
    else:
        h = 1e-6
        gx = np.empty_like(x)
        for i in range(x.shape[1]):
            dx = np.zeros_like(x)
            dx[:, i] = h
            gx[:, i] = (np.asarray(f(x + dx, z)) - np.asarray(f(x - dx, z))) / (2 * h)
        gz = (np.asarray(f(x, z + h)) - np.asarray(f(x, z - h))) / (2 * h)
    return (alpha + 1.0) * np.sum(x * np.asarray(gx), axis=1) + z * np.asarray(gz)


@dataclass(frozen=True)
class GaugeGeometry:
    """Bundle of gauge evaluators for one parameter set."""

    params: WeightParams

    def rho(self, x, z):
        return rho_alpha(x, z, self.params.alpha)

    def psi(self, x, z):
        return psi_alpha(x, z, self.params.alpha)

    def dilate(self, x, z, lam):
        return dilate(x, z, lam, self.params.alpha)


# --------------------------------------------------------------------------
# fundamental solution
# --------------------------------------------------------------------------

@lru_cache(maxsize=64)
def c_alpha_constant(alpha: float, n: int) -> float:
    """Normalization constant of the gauge fundamental solution.

    1 / C = (Q + 2 alpha)(Q - 2) * I with
    I = integral over R^(n+1) of |z|^(2 alpha) / (rho^(2(alpha+1)) + 1)^p,
    p = 1 + (Q + 2 alpha) / (2 (alpha + 1)).  The integral reduces in
    gauge-polar form to one dimension; the head is integrated adaptively
    on a truncated range and the algebraic tail is bounded in closed form
    and kept below 1e-6 of the head.
    """
    a = alpha / (1.0 + alpha)  # inverse of alpha = a/(1-a)
    Q = (alpha + 1.0) * n + 1.0
    if Q <= 2.0:
        raise ValueError("fundamental solution requires Q > 2")
    sigma = (1.0 - a) ** n * weighted_sphere_area(n, a)
    p = 1.0 + (Q + 2 * alpha) / (2.0 * (alpha + 1.0))

    def g(rho):
        return rho ** (Q - 1 + 2 * alpha) * (rho ** (2 * (alpha + 1)) + 1.0) ** (-p)

    # head/tail split: g ~ rho^(-3 - 2 alpha) for large rho
    R = 10.0
    head, _ = integrate.quad(g, 0.0, R, limit=400)
    tail_bound = R ** (-2.0 - 2 * alpha) / (2.0 + 2 * alpha)
    while tail_bound > 1e-6 * head:
        R *= 4.0
        head, _ = integrate.quad(g, 0.0, R, limit=400)
        tail_bound = R ** (-2.0 - 2 * alpha) / (2.0 + 2 * alpha)
    tail, _ = integrate.quad(g, R, np.inf, limit=200)
    I = sigma * (head + tail)
    return 1.0 / ((Q + 2 * alpha) * (Q - 2.0) * I)


def fundamental_solution(x, z, alpha: float, n: int):
    """Gauge fundamental solution C_alpha / rho_alpha^(Q-2), singular at the
    origin."""
    rho = rho_alpha(x, z, alpha)
    if np.any(rho == 0.0):
        raise ValueError("fundamental solution singular at the origin")
    Q = (alpha + 1.0) * n + 1.0
    if Q <= 2.0:
        raise ValueError("fundamental solution requires Q > 2")
    return c_alpha_constant(alpha, n) / rho ** (Q - 2.0)


# --------------------------------------------------------------------------
# field transforms
# --------------------------------------------------------------------------

class ExtensionSideField(Field):
    """View a gauge-side function u(x, z) as the extension-side field
    u(x, h(y))."""

    def __init__(self, u, params: WeightParams, n: Optional[int] = None):
        self.u = u
        self.params = params
        self.n = n if n is not None else getattr(u, "n", params.n)

    def evaluate(self, x, y):
        z = h_transform(np.abs(np.asarray(y, dtype=float)), self.params)
        return _call_xz(self.u, x, z)

    def gradient(self, x, y):
        ya = np.abs(np.asarray(y, dtype=float))
        z = h_transform(ya, self.params)
        gx, gz = _grad_xz(self.u, x, z)
        hp = h_derivative(ya, self.params)
        sign = np.sign(np.asarray(y, dtype=float) + (np.asarray(y) == 0.0))
        return gx, gz * hp * sign


class GrushinSideField:
    """View an extension-side field as the gauge-side function
    u(x, z) = field(x, h^{-1}(z))."""

    def __init__(self, field: Field, params: WeightParams):
        self.field = field
        self.params = params
        self.n = field.n

    def evaluate(self, x, z):
        y = h_inverse(np.abs(np.asarray(z, dtype=float)), self.params)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.field.evaluate(x, y)

    def gradient(self, x, z):
        z = np.asarray(z, dtype=float)
        za = np.abs(z)
        y = h_inverse(za, self.params)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        gx, gy = self.field.gradient(x, y)
        # dh^{-1}/dz = z^alpha
        dz = za ** self.params.alpha
        sign = np.sign(z + (z == 0.0))
        return gx, gy * dz * sign

    def __call__(self, x, z):
        return self.evaluate(x, z)


def to_grushin(field: Field, params: WeightParams) -> GrushinSideField:
    return GrushinSideField(field, params)


def from_grushin(u, params: WeightParams, n: Optional[int] = None) -> ExtensionSideField:
    return ExtensionSideField(u, params, n=n)


def _call_xz(u, x, z):
    if hasattr(u, "evaluate"):
        return np.asarray(u.evaluate(x, z), dtype=float)
    return np.asarray(u(x, z), dtype=float)


def _grad_xz(u, x, z, h: float = 1e-6):
    if hasattr(u, "gradient"):
        gx, gz = u.gradient(x, z)
        return np.asarray(gx, dtype=float), np.asarray(gz, dtype=float)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    gx = np.empty_like(x)
    for i in range(x.shape[1]):
        dx = np.zeros_like(x)
        dx[:, i] = h
        gx[:, i] = (_call_xz(u, x + dx, z) - _call_xz(u, x - dx, z)) / (2 * h)
    gz = (_call_xz(u, x, z + h) - _call_xz(u, x, z - h)) / (2 * h)
    return gx, gz


# --------------------------------------------------------------------------
# commutator identity
# --------------------------------------------------------------------------

def commutator_check(j: int, monomials, alpha: float) -> float:
    """Verify [X_j, Z_alpha] = X_j symbolically on monomials x^beta z^m.

    X_j is |z|^alpha d/dx_j for j <= n and d/dz for j = n + 1; monomials
    are given as (beta, m) pairs.  Works on generalized terms whose
    z-exponent may pick up multiples of alpha; returns the largest leftover
    coefficient of X_j Z f - Z X_j f - X_j f, which is exactly zero.
    """
    def apply_xj(terms, n):
        out = {}
        for (beta, ze), c in terms.items():
            if j <= n:
                b = beta[j - 1]
                if b:
                    nb = list(beta)
                    nb[j - 1] -= 1
                    key = (tuple(nb), ze + alpha)
                    out[key] = out.get(key, 0.0) + c * b
            else:
                if ze:
                    key = (beta, ze - 1)
                    out[key] = out.get(key, 0.0) + c * ze
        return out

    def apply_z(terms):
        return {(beta, ze): c * ((alpha + 1.0) * sum(beta) + ze)
                for (beta, ze), c in terms.items()}

    worst = 0.0
    for beta, m in monomials:
        beta = tuple(beta)
        n = len(beta)
        if not (1 <= j <= n + 1):
            raise ValueError(f"vector field index {j} out of range")
        f = {(beta, float(m)): 1.0}
        lhs = apply_z(apply_xj(f, n))          # -Z(X_j f) will be subtracted
        rhs = apply_xj(apply_z(f), n)          # X_j(Z f)
        xf = apply_xj(f, n)
        keys = set(lhs) | set(rhs) | set(xf)
        for k in keys:
            dev = rhs.get(k, 0.0) - lhs.get(k, 0.0) - xf.get(k, 0.0)
            worst = max(worst, abs(dev))
    return worst


# --------------------------------------------------------------------------
# pushforward integrals (gauge <-> Euclidean)
# --------------------------------------------------------------------------

def _weighted_euclid_sphere(ftilde, rho: float, n: int, a: float) -> float:
    """Adaptive integral of ftilde * |y|^(-a) over S_e(rho).

    Transported integrands carry fractional powers of (1 - t^2) from the
    coordinate change, so a fixed Jacobi rule stalls at algebraic accuracy;
    the adaptive rule with the |y|^(-a) factor expressed as an algebraic
    endpoint weight resolves them.
    """
    expo = (-a - 1.0) / 2.0
    if n == 1:
        def g(t):
            y = rho * math.sqrt(max(1.0 - t * t, 0.0))
            return float(ftilde(np.array([[rho * t]]), np.array([y]))[0])

        val, _ = integrate.quad(g, -1.0, 1.0, weight="alg",
                                wvar=(expo, expo), limit=200)
        return 2.0 * rho ** (1.0 - a) * val
    if n == 2:
        n_psi = 64
        psi = 2.0 * np.pi * (np.arange(n_psi) + 0.5) / n_psi
        cs, sn = np.cos(psi), np.sin(psi)

        def g(t):
            w = rho * math.sqrt(max(1.0 - t * t, 0.0))
            x = np.column_stack([w * cs, w * sn])
            y = np.full(n_psi, rho * abs(t))
            return float(np.mean(ftilde(x, y)))

        val, _ = integrate.quad(g, 0.0, 1.0, weight="alg", wvar=(-a, 0.0),
                                limit=200)
        return 2.0 * (2.0 * np.pi) * rho ** (2.0 - a) * val
    raise ValueError("pushforward implemented for n in {1, 2}")


def pushforward_integral(f, r: float, params: WeightParams,
                         kind: str = "ball") -> float:
    """Gauge-side integral of f(x, z), f even in z, transported to the
    Euclidean picture at radius r (gauge radius h(r)).

    kind="ball":   integral of f over the gauge ball of radius h(r) with
                   the plain measure dx dz, equal to
                   (1-a)^a * integral_{B_e(r)} f(x, h(|y|)) |y|^{-a}.
    kind="sphere": integral of f / |grad rho| over the gauge sphere of
                   radius h(r) against dH_n, equal to
                   (1-a)^a / h'(r) * integral_{S_e(r)} f(x, h(|y|)) |y|^{-a}.
    """
    a = params.a
    n = params.n

    def ftilde(x, y):
        z = h_transform(np.abs(y), params)
        return _call_xz(f, x, z)

    if kind == "sphere":
        val = _weighted_euclid_sphere(ftilde, r, n, a)
        return (1.0 - a) ** a / float(h_derivative(r, params)) * val
    if kind == "ball":
        def shell(rho):
            return _weighted_euclid_sphere(ftilde, rho, n, a)

        val, _ = integrate.quad(shell, 0.0, r, limit=120)
        return (1.0 - a) ** a * val
    raise ValueError(f"unknown integral kind {kind!r}")


# --------------------------------------------------------------------------
# direct gauge-sphere quadrature (n = 1): independent of the pushforward
# --------------------------------------------------------------------------

def _circle_density(f_signed: Callable, z: np.ndarray, sx: float, sz: float,
                    g: float, alpha: float, weight: str) -> np.ndarray:
    """Integrand of the gauge-circle line integral, parametrized by z > 0 on
    one quadrant: f * w * sqrt(1 + x'(z)^2) / |grad rho|."""
    ap1 = alpha + 1.0
    zz = sz * z
    inner = np.maximum(g ** (2 * ap1) - np.abs(z) ** (2 * ap1), 0.0)
    xx = np.sqrt(inner) / ap1
    ok = xx > 0.0
    out = np.zeros_like(z)
    if not np.any(ok):
        return out
    x = (sx * xx[ok])[:, None]
    zq = zz[ok]
    dxdz = np.abs(zq) ** (2 * alpha + 1) / (ap1 * xx[ok])
    arc = np.sqrt(1.0 + dxdz ** 2)
    gxx, gzz = grad_rho_alpha(x, zq, alpha)
    grad_norm = np.sqrt(gxx[:, 0] ** 2 + gzz ** 2)
    w = (np.abs(zq) ** (2 * alpha) / g ** (2 * alpha)) if weight == "psi" \
        else np.ones_like(zq)
    vals = np.asarray(f_signed(x, zq), dtype=float)
    out[ok] = vals * w * arc / grad_norm
    return out


@lru_cache(maxsize=8)
def _leggauss(n: int):
    from numpy.polynomial.legendre import leggauss
    return leggauss(n)


def _gauge_circle_integral(f_signed: Callable, g: float, alpha: float,
                           weight: str, method: str = "fixed",
                           n_nodes: int = 80) -> float:
    """Line integral over the gauge circle rho_alpha = g in the (x, z)
    plane of f * w / |grad rho| dH_1, with w = psi_alpha ("psi") or 1
    ("one").  ``f_signed(xs, z)`` receives signed coordinates, so odd
    integrands cancel exactly.

    The default path is a vectorized two-panel rule: near z = 0 the
    substitution z = c eta^2 softens fractional weight powers, near z = g
    the substitution z = g - c xi^2 removes the square-root arc-length
    singularity where the circle meets the z-axis.  method="adaptive"
    retains the scalar adaptive rule for cross-checks.
    """
    if method == "adaptive":
        def integrand(z, sx, sz):
            return float(_circle_density(f_signed, np.array([z]), sx, sz, g,
                                         alpha, weight)[0])

        total = 0.0
        for sx in (+1.0, -1.0):
            for sz in (+1.0, -1.0):
                val, _ = integrate.quad(integrand, 0.0, g, args=(sx, sz),
                                        limit=200, epsabs=1e-12,
                                        epsrel=1e-11)
                total += val
        return total

    eta, weta = _leggauss(n_nodes)
    eta01 = (eta + 1.0) / 2.0
    w01 = weta / 2.0
    zmid = 0.5 * g
    # panel A: z = zmid * eta^2
    zA = zmid * eta01 ** 2
    wA = w01 * 2.0 * zmid * eta01
    # panel B: z = g - (g - zmid) * xi^2
    zB = g - (g - zmid) * eta01 ** 2
    wB = w01 * 2.0 * (g - zmid) * eta01
    z = np.concatenate([zA, zB])
    wz = np.concatenate([wA, wB])
    total = 0.0
    for sx in (+1.0, -1.0):
        for sz in (+1.0, -1.0):
            dens = _circle_density(f_signed, z, sx, sz, g, alpha, weight)
            total += float(np.dot(wz, dens))
    return total


def gauge_sphere_integral(f, g: float, params_or_alpha, weight: str = "psi") -> float:
    """Integral of f * psi_alpha / |grad rho| (or f / |grad rho|) over the
    gauge sphere of gauge radius g; one thin dimension only."""
    alpha = (params_or_alpha.alpha if isinstance(params_or_alpha, WeightParams)
             else float(params_or_alpha))

    def f_signed(x, z):
        return _call_xz(f, x, z)

    return _gauge_circle_integral(f_signed, g, alpha, weight)


def gauge_ball_integral(f, g: float, params_or_alpha, n_radial: int = 80) -> float:
    """Integral of f dx dz over the gauge ball of gauge radius g via the
    coarea factorization over gauge spheres; one thin dimension only."""
    alpha = (params_or_alpha.alpha if isinstance(params_or_alpha, WeightParams)
             else float(params_or_alpha))
    from numpy.polynomial.legendre import leggauss
    xi, w = leggauss(n_radial)
    taus = g * (xi + 1.0) / 2.0
    total = 0.0
    for tau, wk in zip(taus, w):
        total += wk * _gauge_circle_integral(lambda x, z: _call_xz(f, x, z),
                                             tau, alpha, weight="one")
    return total * g / 2.0
