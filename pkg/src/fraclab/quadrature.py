"""Weighted sphere and ball quadrature for the |y|^a surface measure.

The weight |y|^a is endpoint-singular on spheres when a < 0 and vanishes
to fractional order when a > 0, so it is absorbed into Gauss-Jacobi rules
in the polar angle rather than sampled in the integrand.  All rules act on
even-in-y integrands and return nodes in the closed upper half space with
weights that account for the mirror half.

n = 1: the circle of radius r is parametrized by t = x/r, giving
    integral f |y|^a dH = 2 r^(1+a) * int_{-1}^{1} f(rt, r sqrt(1-t^2))
                            (1-t^2)^((a-1)/2) dt,
a Jacobi weight with exponent (a-1)/2 on both endpoints.

n = 2: with y = r t and azimuth psi,
    integral f |y|^a dH = 2 r^(2+a) * int_0^1 int_0^{2pi}
                            f(...) t^a  dpsi dt,
a one-sided Jacobi weight t^a crossed with an exact trapezoid in psi.

Ball integrals use the coarea factorization with a radial Gauss-Jacobi
rule carrying the rho^(n+a) volume growth.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import roots_jacobi


@lru_cache(maxsize=256)
def _jacobi_rule(m: int, alpha: float, beta: float):
    x, w = roots_jacobi(m, alpha, beta)
    return x, w


@lru_cache(maxsize=64)
def weighted_sphere_area(n: int, a: float) -> float:
    """Surface integral of |y|^a over the unit sphere in R^(n+1).

    Computed by an adaptive 1D oracle in the polar variable; the value is
    cached per (n, a) and reported by the functional engine.
    """
    if n == 1:
        val, _ = integrate.quad(lambda t: 1.0, -1.0, 1.0,
                                weight="alg", wvar=((a - 1) / 2, (a - 1) / 2))
        return 2.0 * val
    if n == 2:
        val, _ = integrate.quad(lambda t: t ** a, 0.0, 1.0)
        return 4.0 * np.pi * val
    raise ValueError("weighted sphere area implemented for n in {1, 2}")


@dataclass
class SphereQuadrature:
    """Nodes and weights integrating f |y|^a over the sphere S_e(r).

    ``x`` has shape (m, n), ``y`` shape (m,) with y >= 0, and ``weights``
    already include the |y|^a factor, the surface element, and the even
    doubling, so sum(w * f(x, y)) approximates the full-sphere integral of
    f |y|^a for f even in y.
    """

    r: float
    n: int
    a: float
    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.x, self.y)))

    def integrate_values(self, vals: np.ndarray) -> float:
        return float(np.dot(self.weights, vals))


def sphere_rule(n: int, a: float, r: float, order: int = 48,
                n_azimuth: int = 96) -> SphereQuadrature:
    """Build the weighted sphere rule; exact for even-in-y polynomials of
    degree up to about 2*order - 1."""
    if r <= 0:
        raise ValueError("radius must be positive")
    if n == 1:
        t, w = _jacobi_rule(order, (a - 1) / 2.0, (a - 1) / 2.0)
        x = (r * t)[:, None]
        y = r * np.sqrt(np.maximum(1.0 - t ** 2, 0.0))
        weights = 2.0 * r ** (1 + a) * w
        return SphereQuadrature(r=r, n=1, a=a, x=x, y=y, weights=weights)
    if n == 2:
        xi, w = _jacobi_rule(order, 0.0, a)
        t = (1.0 + xi) / 2.0
        wt = w * 0.5 ** (1.0 + a)
        psi = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
        wpsi = 2.0 * np.pi / n_azimuth
        T, P = np.meshgrid(t, psi, indexing="ij")
        WT, _ = np.meshgrid(wt, psi, indexing="ij")
        rho = np.sqrt(np.maximum(1.0 - T ** 2, 0.0))
        x = np.column_stack([(r * rho * np.cos(P)).ravel(),
                             (r * rho * np.sin(P)).ravel()])
        y = (r * T).ravel()
        weights = 2.0 * r ** (2 + a) * (WT * wpsi).ravel()
        return SphereQuadrature(r=r, n=2, a=a, x=x, y=y, weights=weights)
    raise ValueError("sphere rule implemented for n in {1, 2}")


def ball_rule(n: int, a: float, r: float, order: int = 48,
              radial_order: int = 48, n_azimuth: int = 96):
    """Nodes/weights integrating F |y|^a over the ball B_e(r).

    Radial direction uses a Gauss-Jacobi rule with weight rho^(n+a) (the
    weighted volume growth), crossed with the unit sphere rule.
    """
    rho, wrad = radial_nodes(r, n, a, radial_order)
    unit = sphere_rule(n, a, 1.0, order=order, n_azimuth=n_azimuth)
    xs, ys, ws = [], [], []
    for rk, wk in zip(rho, wrad):
        xs.append(unit.x * rk)
        ys.append(unit.y * rk)
        # unit weights scaled to radius rk times the coarea radial weight
        ws.append(unit.weights * rk ** (n + a) * wk)
    return np.vstack(xs), np.concatenate(ys), np.concatenate(ws)


def radial_nodes(r: float, n: int, a: float, radial_order: int = 48):
    """Gauss-Jacobi radial nodes/weights for coarea-style ball integrals:
    int_0^r g(rho) rho^(n+a) drho = sum w_k g(rho_k) rho_k^(n+a)."""
    xi, wr = _jacobi_rule(radial_order, 0.0, n + a)
    rho = r * (1.0 + xi) / 2.0
    w = wr * (r / 2.0) ** (n + a + 1.0) / rho ** (n + a)
    return rho, w
