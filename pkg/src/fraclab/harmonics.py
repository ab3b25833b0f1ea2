"""Sparse homogeneous polynomial algebra for the weighted operator.

Provides the explicit even-in-y polynomial extension of boundary
polynomials that is annihilated by L_a = Lap_x + D_yy + (a/y) D_y,
bases of the resulting solid-harmonic spaces, the quadratic Grushin
model solution, trace nonnegativity certification, and the degeneracy
dimension of a blow-up polynomial.
"""

from __future__ import annotations

import json
import math
from itertools import combinations_with_replacement
from typing import Optional

import numpy as np

from .core import Field, WeightParams

__all__ = [
    "PolynomialOnRn", "XYPolynomial", "SolidHarmonic",
    "extension_coefficients", "extend_la_harmonic", "extend_polynomial",
    "la_apply", "basis_solid_harmonics", "nonneg_trace_check",
    "stratum_dimension", "grushin_model_solution", "GrushinModelSolution",
    "taylor_polynomial", "orthogonality_check",
]


# --------------------------------------------------------------------------
# thin-space polynomials
# --------------------------------------------------------------------------

class PolynomialOnRn:
    """Sparse polynomial on R^n keyed by multi-index."""

    def __init__(self, n: int, coeffs: Optional[dict] = None):
        self.n = n
        self.coeffs = {}
        for beta, c in (coeffs or {}).items():
            beta = tuple(int(b) for b in beta)
            if len(beta) != n or any(b < 0 for b in beta):
                raise ValueError(f"bad multi-index {beta}")
            if c != 0.0:
                self.coeffs[beta] = self.coeffs.get(beta, 0.0) + float(c)

    @classmethod
    def monomial(cls, n: int, beta, coef: float = 1.0) -> "PolynomialOnRn":
        return cls(n, {tuple(beta): coef})

    def degree(self) -> int:
        if not self.coeffs:
            return 0
        return max(sum(b) for b in self.coeffs)

    def is_homogeneous(self) -> bool:
        degs = {sum(b) for b in self.coeffs}
        return len(degs) <= 1

    def homogeneous_parts(self) -> dict:
        parts = {}
        for beta, c in self.coeffs.items():
            parts.setdefault(sum(beta), {})[beta] = c
        return {d: PolynomialOnRn(self.n, cs) for d, cs in parts.items()}

    def laplacian(self) -> "PolynomialOnRn":
        out = {}
        for beta, c in self.coeffs.items():
            for i in range(self.n):
                if beta[i] >= 2:
                    nb = list(beta)
                    nb[i] -= 2
                    nb = tuple(nb)
                    out[nb] = out.get(nb, 0.0) + c * beta[i] * (beta[i] - 1)
        return PolynomialOnRn(self.n, out)

    def partial(self, i: int) -> "PolynomialOnRn":
        out = {}
        for beta, c in self.coeffs.items():
            if beta[i] >= 1:
                nb = list(beta)
                nb[i] -= 1
                out[tuple(nb)] = out.get(tuple(nb), 0.0) + c * beta[i]
        return PolynomialOnRn(self.n, out)

    def evaluate(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for beta, c in self.coeffs.items():
            out += c * np.prod(x ** np.array(beta), axis=1)
        return out

    def scale(self, c: float) -> "PolynomialOnRn":
        return PolynomialOnRn(self.n, {b: c * v for b, v in self.coeffs.items()})

    def add(self, other: "PolynomialOnRn") -> "PolynomialOnRn":
        out = dict(self.coeffs)
        for b, v in other.coeffs.items():
            out[b] = out.get(b, 0.0) + v
        return PolynomialOnRn(self.n, out)

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def __repr__(self):
        return f"PolynomialOnRn(n={self.n}, terms={len(self.coeffs)})"


# --------------------------------------------------------------------------
# (x, y) polynomials, even in y
# --------------------------------------------------------------------------

class XYPolynomial(Field):
    """Sparse polynomial in (x, y) keyed by (multi-index, y-power)."""

    def __init__(self, n: int, coeffs: Optional[dict] = None):
        self.n = n
        self.coeffs = {}
        for (beta, m), c in (coeffs or {}).items():
            beta = tuple(int(b) for b in beta)
            m = int(m)
            if len(beta) != n or any(b < 0 for b in beta) or m < 0:
                raise ValueError(f"bad term ({beta}, {m})")
            if c != 0.0:
                key = (beta, m)
                self.coeffs[key] = self.coeffs.get(key, 0.0) + float(c)

    def degree(self) -> int:
        if not self.coeffs:
            return 0
        return max(sum(b) + m for b, m in self.coeffs)

    def is_even_in_y(self) -> bool:
        return all(m % 2 == 0 for _, m in self.coeffs)

    def is_homogeneous(self) -> bool:
        degs = {sum(b) + m for b, m in self.coeffs}
        return len(degs) <= 1

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(c) <= tol for c in self.coeffs.values())

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def trace(self) -> PolynomialOnRn:
        """Restriction to y = 0."""
        return PolynomialOnRn(
            self.n, {b: c for (b, m), c in self.coeffs.items() if m == 0})

    def scale(self, c: float) -> "XYPolynomial":
        return XYPolynomial(self.n, {k: c * v for k, v in self.coeffs.items()})

    def add(self, other: "XYPolynomial") -> "XYPolynomial":
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0.0) + v
        return XYPolynomial(self.n, out)

    def evaluate(self, x, y) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.abs(np.asarray(y, dtype=float))
        out = np.zeros(x.shape[0])
        for (beta, m), c in self.coeffs.items():
            term = c * np.ones(x.shape[0])
            for i, b in enumerate(beta):
                if b:
                    term = term * x[:, i] ** b
            if m:
                term = term * y ** m
            out += term
        return out

    def gradient(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ya = np.abs(np.asarray(y, dtype=float))
        m0 = x.shape[0]
        gx = np.zeros((m0, self.n))
        gy = np.zeros(m0)
        for (beta, m), c in self.coeffs.items():
            base = c * np.ones(m0)
            powed = [x[:, i] ** b for i, b in enumerate(beta)]
            ypow = ya ** m if m else np.ones(m0)
            for i, b in enumerate(beta):
                if b:
                    t = base * b * x[:, i] ** (b - 1) * ypow
                    for j, pj in enumerate(powed):
                        if j != i:
                            t = t * pj
                    gx[:, i] += t
            if m:
                t = base * m * ya ** (m - 1)
                for pj in powed:
                    t = t * pj
                gy += t
        sign = np.sign(np.asarray(y, dtype=float) + (np.asarray(y) == 0.0))
        return gx, gy * sign

    def to_json(self, s: Optional[float] = None) -> str:
        terms = [{"beta": list(b), "ypow": m, "coef": c}
                 for (b, m), c in sorted(self.coeffs.items())]
        doc = {"terms": terms}
        if s is not None:
            doc["s"] = s
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, n: Optional[int] = None) -> "XYPolynomial":
        d = json.loads(text)
        terms = d["terms"]
        if n is None:
            n = len(terms[0]["beta"]) if terms else 1
        return cls(n, {(tuple(t["beta"]), t["ypow"]): t["coef"] for t in terms})

    def __repr__(self):
        return f"XYPolynomial(n={self.n}, terms={len(self.coeffs)})"


class SolidHarmonic(XYPolynomial):
    """Homogeneous even-in-y polynomial annihilated by the weighted operator."""

    def __init__(self, n: int, coeffs: dict, params: WeightParams,
                 degree: Optional[int] = None):
        super().__init__(n, coeffs)
        if not self.is_even_in_y():
            raise ValueError("solid harmonic must be even in y")
        if not self.is_homogeneous():
            raise ValueError("solid harmonic must be homogeneous")
        self.params = params
        self.kappa = self.degree() if degree is None else int(degree)

    def __repr__(self):
        return (f"SolidHarmonic(n={self.n}, kappa={self.kappa}, "
                f"terms={len(self.coeffs)})")


# --------------------------------------------------------------------------
# extension and the operator
# --------------------------------------------------------------------------

def extension_coefficients(k_max: int, params: WeightParams) -> list[float]:
    """Running product c_{2k} = prod_{i<=k} (2i-1)/(2i-1+a).

    Computed term by term so that the telescoping cancellation against the
    operator's y-coefficient m (m-1+a) holds at machine precision.
    """
    a = params.a
    out = [1.0]
    for i in range(1, k_max + 1):
        out.append(out[-1] * (2 * i - 1) / ((2 * i - 1) + a))
    return out


def extend_la_harmonic(q: PolynomialOnRn, params: WeightParams) -> SolidHarmonic:
    """Even harmonic extension of a homogeneous boundary polynomial.

    Returns the unique even-in-y homogeneous polynomial of the same degree
    whose trace is q and on which the weighted operator vanishes.  The
    series sum_k (-1)^k c_{2k} Lap^k q * y^{2k} / (2k)! terminates once
    2k exceeds the degree.
    """
    if not q.is_homogeneous():
        raise ValueError("extend_la_harmonic requires a homogeneous polynomial")
    kappa = q.degree()
    cs = extension_coefficients(kappa // 2 + 1, params)
    coeffs = {}
    lap = q
    for k in range(0, kappa // 2 + 1):
        if k > 0:
            lap = lap.laplacian()
        if not lap.coeffs:
            break
        factor = (-1.0) ** k * cs[k] / math.factorial(2 * k)
        for beta, c in lap.coeffs.items():
            key = (beta, 2 * k)
            coeffs[key] = coeffs.get(key, 0.0) + factor * c
    return SolidHarmonic(q.n, coeffs, params, degree=kappa)


def extend_polynomial(q: PolynomialOnRn, params: WeightParams) -> XYPolynomial:
    """Harmonic extension of a general (non-homogeneous) polynomial,
    obtained by extending each homogeneous part and summing."""
    out = XYPolynomial(q.n)
    for _, part in sorted(q.homogeneous_parts().items()):
        out = out.add(extend_la_harmonic(part, params))
    return out


def la_apply(p: XYPolynomial, params: WeightParams) -> XYPolynomial:
    """Apply Lap_x + D_yy + (a/y) D_y to an even-in-y polynomial.

    The y-division is exact on even polynomials: D_y p carries a factor y,
    so each term c x^beta y^m maps to c m (m-1+a) x^beta y^{m-2} plus the
    thin Laplacian terms.  The result is the zero polynomial exactly when
    p is harmonic for the weighted operator.
    """
    if not p.is_even_in_y():
        raise ValueError("la_apply requires an even-in-y polynomial")
    a = params.a
    out = {}
    for (beta, m), c in p.coeffs.items():
        for i in range(p.n):
            if beta[i] >= 2:
                nb = list(beta)
                nb[i] -= 2
                key = (tuple(nb), m)
                out[key] = out.get(key, 0.0) + c * beta[i] * (beta[i] - 1)
        if m >= 2:
            key = (beta, m - 2)
            out[key] = out.get(key, 0.0) + c * m * ((m - 1) + a)
    return XYPolynomial(p.n, out)


def basis_solid_harmonics(kappa: int, n: int,
                          params: WeightParams) -> list[SolidHarmonic]:
    """Extensions of the normalized monomials x^beta / beta!, |beta| = kappa.

    The family is linearly independent (distinct traces) and spans the even
    solid harmonics of degree kappa with polynomial trace; its cardinality
    is C(kappa + n - 1, n - 1).
    """
    if kappa < 0:
        raise ValueError("degree must be >= 0")
    basis = []
    for combo in combinations_with_replacement(range(n), kappa):
        beta = [0] * n
        for i in combo:
            beta[i] += 1
        norm = 1.0
        for b in beta:
            norm *= math.factorial(b)
        q = PolynomialOnRn.monomial(n, beta, 1.0 / norm)
        basis.append(extend_la_harmonic(q, params))
    return basis


# --------------------------------------------------------------------------
# trace nonnegativity and stratum dimension
# --------------------------------------------------------------------------

def _unit_sphere_samples(n: int, count: int, seed: int = 7) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, n))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v


def nonneg_trace_check(p: XYPolynomial, budget: int = 10000) -> dict:
    """Certify nonnegativity of the trace p(., 0) where cheaply possible.

    Degree-2 traces are settled exactly through the eigenvalues of the
    quadratic form.  Even-monomial traces with nonnegative coefficients are
    certified by inspection.  Otherwise the unit sphere is sampled with
    ``budget`` points; a negative sample is returned as a witness, and a
    clean sweep yields the explicit outcome "undetermined".
    """
    trace = p.trace()
    n = p.n
    deg = trace.degree()
    if not trace.coeffs:
        return {"status": "certified-nonneg", "witness": None}
    if deg == 2 and trace.is_homogeneous():
        A = np.zeros((n, n))
        for beta, c in trace.coeffs.items():
            idx = [i for i, b in enumerate(beta) for _ in range(b)]
            i, j = idx
            if i == j:
                A[i, i] += c
            else:
                A[i, j] += c / 2.0
                A[j, i] += c / 2.0
        w, V = np.linalg.eigh(A)
        if w[0] >= -1e-12:
            return {"status": "certified-nonneg", "witness": None}
        return {"status": "certified-negative-witness",
                "witness": V[:, 0].copy()}
    if all(all(b % 2 == 0 for b in beta) and c >= 0
           for beta, c in trace.coeffs.items()):
        return {"status": "certified-nonneg", "witness": None}
    samples = _unit_sphere_samples(n, budget)
    vals = trace.evaluate(samples)
    k = int(np.argmin(vals))
    if vals[k] < -1e-12:
        return {"status": "certified-negative-witness",
                "witness": samples[k].copy()}
    return {"status": "undetermined", "witness": None}


def stratum_dimension(p: XYPolynomial) -> int:
    """Dimension of {xi : xi . grad_x p(., 0) == 0 identically}.

    This is the nullity of the linear map sending a direction xi to the
    coefficient vector of the directional derivative of the trace.
    """
    trace = p.trace()
    if not trace.coeffs:
        raise ValueError("stratum dimension undefined for zero trace")
    n = p.n
    partials = [trace.partial(i) for i in range(n)]
    keys = sorted({b for q in partials for b in q.coeffs})
    if not keys:
        # constant trace: every direction annihilates the gradient
        return n
    M = np.zeros((len(keys), n))
    for j, q in enumerate(partials):
        for i, b in enumerate(keys):
            M[i, j] = q.coeffs.get(b, 0.0)
    rank = np.linalg.matrix_rank(M, tol=1e-10 * max(1.0, np.abs(M).max()))
    return n - rank


# --------------------------------------------------------------------------
# Grushin model solution
# --------------------------------------------------------------------------

class GrushinModelSolution:
    """A |x|^2 - z^(2(alpha+1)) with A = (alpha+1)(2 alpha+1)/n.

    Annihilated by D_zz + |z|^(2 alpha) Lap_x and homogeneous of degree
    2 (alpha + 1) under the anisotropic dilations.  The z-exponent is not
    an integer in general, so this is a function object rather than a
    polynomial; when 2 (alpha + 1) is an even integer the object also
    exposes its polynomial form.
    """

    def __init__(self, n: int, alpha: float):
        if alpha <= -0.5:
            raise ValueError("alpha must exceed -1/2")
        self.n = n
        self.alpha = float(alpha)
        self.A = (alpha + 1.0) * (2.0 * alpha + 1.0) / n
        self.degree = 2.0 * (alpha + 1.0)

    def evaluate(self, x, z) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = np.asarray(z, dtype=float)
        return self.A * np.sum(x ** 2, axis=1) - np.abs(z) ** self.degree

    def gradient(self, x, z):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = np.asarray(z, dtype=float)
        gx = 2.0 * self.A * x
        gz = -self.degree * np.abs(z) ** (self.degree - 1.0) * np.sign(z)
        return gx, gz

    def as_polynomial(self) -> XYPolynomial:
        m = self.degree
        if abs(m - round(m)) > 1e-12 or round(m) % 2:
            raise ValueError("z-exponent is not an even integer")
        coeffs = {}
        for i in range(self.n):
            beta = tuple(2 if j == i else 0 for j in range(self.n))
            coeffs[(beta, 0)] = self.A
        coeffs[(tuple([0] * self.n), int(round(m)))] = -1.0
        return XYPolynomial(self.n, coeffs)

    def __call__(self, x, z):
        return self.evaluate(x, z)


def grushin_model_solution(n: int, alpha: float) -> GrushinModelSolution:
    return GrushinModelSolution(n, alpha)


# --------------------------------------------------------------------------
# Taylor polynomials of obstacles
# --------------------------------------------------------------------------

def _multi_indices(n: int, max_deg: int):
    if n == 1:
        for d in range(max_deg + 1):
            yield (d,)
        return
    for d in range(max_deg + 1):
        for combo in combinations_with_replacement(range(n), d):
            beta = [0] * n
            for i in combo:
                beta[i] += 1
            yield tuple(beta)


def taylor_polynomial(obstacle, x0, k: int) -> PolynomialOnRn:
    """Degree-k Taylor polynomial of the obstacle at x0.

    The returned polynomial is in the shifted variable delta = x - x0, so
    evaluating at delta reproduces phi(x0 + delta) up to the Hoelder
    remainder of order k + gamma.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = obstacle.n
    if k > obstacle.k:
        raise ValueError(f"obstacle only guarantees derivatives to order {obstacle.k}")
    coeffs = {}
    for beta in _multi_indices(n, k):
        d = obstacle.derivative(beta, x0[None, :])[0]
        if d != 0.0:
            norm = 1.0
            for b in beta:
                norm *= math.factorial(b)
            coeffs[beta] = d / norm
    return PolynomialOnRn(n, coeffs)


# --------------------------------------------------------------------------
# orthogonality of solid harmonics on gauge spheres
# --------------------------------------------------------------------------

def orthogonality_check(p, q, params: WeightParams, r: float,
                        degree_p: Optional[float] = None,
                        degree_q: Optional[float] = None) -> float:
    """Weighted gauge-sphere integral of the product of two solid harmonics.

    For homogeneous harmonic functions of distinct degrees the integral
    vanishes; the returned quadrature value should be at the quadrature
    noise floor.  Raises when the degrees coincide, since no cancellation
    is implied there.
    """
    from .grushin import gauge_sphere_integral

    dp = getattr(p, "degree", degree_p)
    dq = getattr(q, "degree", degree_q)
    dp = dp() if callable(dp) else dp
    dq = dq() if callable(dq) else dq
    if dp is None or dq is None:
        raise ValueError("supply degrees for plain callables")
    if abs(dp - dq) < 1e-12:
        raise ValueError("orthogonality statement requires distinct degrees")

    def f(x, z):
        return _eval_xz(p, x, z) * _eval_xz(q, x, z)

    return gauge_sphere_integral(f, r, params, weight="psi")


def _eval_xz(obj, x, z):
    if isinstance(obj, (int, float)):
        return float(obj) * np.ones(np.atleast_2d(x).shape[0])
    if hasattr(obj, "evaluate"):
        return obj.evaluate(x, z)
    return np.asarray(obj(x, z), dtype=float)
