"""Blow-up analysis at free-boundary points: obstacle normalization,
rescalings, frequency estimation with extrapolation, polynomial fits of
blow-up limits, coincidence-density profiles, point classification, and
stratification of the singular set.

Classification is a pipeline: normalize the solution against the
obstacle's harmonically extended Taylor polynomial, estimate the limiting
frequency from the radial profile, compare it to the admissible
homogeneities (1 + s for regular points, even integers for singular
ones), and at singular candidates fit the blow-up polynomial and read off
the stratum dimension from its trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .core import Field, GridSpec, ShiftedField, WeightParams
from .functionals import (FunctionalConfig, RadialProfile, frequency,
                          generalized_frequency, height, monneau,
                          monotonicity_report)
from .harmonics import (SolidHarmonic, XYPolynomial, basis_solid_harmonics,
                        extend_polynomial, nonneg_trace_check,
                        stratum_dimension, taylor_polynomial)
from .quadrature import sphere_rule

__all__ = [
    "RescaledField", "BlowupReport", "obstacle_normalize", "rescale",
    "frequency_at", "fit_blowup_polynomial", "coincidence_density",
    "classify", "stratify",
]


# --------------------------------------------------------------------------
# obstacle normalization
# --------------------------------------------------------------------------

class NormalizedField(Field):
    """solution(x0 + x, y) minus the extended-Taylor obstacle correction.

    The correction phi(x0+x) - q_k(x) + q_ext(x, y) (q_k the degree-k
    Taylor polynomial of the obstacle at x0, q_ext its even harmonic
    extension) leaves a field whose trace is the solution-obstacle gap and
    whose residual under the weighted operator is Hoelder-small.
    """

    def __init__(self, solution: Field, obstacle, x0, k: int,
                 params: WeightParams):
        self.n = solution.n
        self.x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        self.solution = solution
        self.obstacle = obstacle
        self.params = params
        self.k = k
        self.q_k = taylor_polynomial(obstacle, self.x0, k)
        self.q_ext = extend_polynomial(self.q_k, params)

    def evaluate(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        sol = self.solution.evaluate(x + self.x0, y)
        phi = self.obstacle.value(x + self.x0)
        return sol - phi + self.q_k.evaluate(x) - self.q_ext.evaluate(x, y)

    def gradient(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        gx, gy = self.solution.gradient(x + self.x0, y)
        gex, gey = self.q_ext.gradient(x, y)
        gx = gx - gex
        gy = gy - gey
        for i in range(self.n):
            beta = tuple(1 if j == i else 0 for j in range(self.n))
            gx[:, i] -= self.obstacle.derivative(beta, x + self.x0)
            gx[:, i] += self.q_k.partial(i).evaluate(x)
        return gx, gy


def obstacle_normalize(solution: Field, obstacle, x0, k: int,
                       params: WeightParams,
                       contact_mask=None, grid_spec: Optional[GridSpec] = None):
    """Centered field whose trace is the solution-obstacle gap at x0.

    With a zero obstacle this is just the recentred solution.  When a
    contact mask is supplied, x0 must lie on the free boundary (a contact
    node with a non-contact neighbor)."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if contact_mask is not None and grid_spec is not None:
        if not _on_free_boundary(contact_mask, grid_spec, x0):
            raise ValueError(f"{x0} is not on the discrete free boundary")
    if obstacle is None:
        return ShiftedField(solution, x0)
    return NormalizedField(solution, obstacle, x0, k, params)


def _on_free_boundary(mask: np.ndarray, spec: GridSpec, x0) -> bool:
    idx = []
    for c in np.atleast_1d(x0):
        j = int(round((c + spec.L) / spec.hx))
        if not (0 <= j < spec.nx):
            return False
        idx.append(j)
    idx = tuple(idx)
    if not mask[idx]:
        return False
    if mask.all():
        return False
    # some neighbor off the contact set
    for axis in range(mask.ndim):
        for d in (-1, 1):
            nb = list(idx)
            nb[axis] += d
            if 0 <= nb[axis] < mask.shape[axis] and not mask[tuple(nb)]:
                return True
    return False


# --------------------------------------------------------------------------
# rescalings
# --------------------------------------------------------------------------

class RescaledField(Field):
    """field(x0 + r x, r y) / d with d the height normalization
    (sqrt(H(r)/r^(n+a))) or the plain power r^kappa."""

    def __init__(self, base: Field, x0, r: float, params: WeightParams,
                 normalization: str = "almgren",
                 kappa: Optional[float] = None,
                 order: int = 48):
        self.base = base
        self.x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        self.r = float(r)
        self.n = base.n
        self.params = params
        self.normalization = normalization
        if normalization == "almgren":
            H = height(base, self.x0, r, params, order=order)
            d = math.sqrt(H / r ** (params.n + params.a))
            if d == 0.0:
                raise ValueError("field vanishes on the sphere: "
                                 "height normalization undefined")
        elif normalization == "kappa":
            if kappa is None:
                raise ValueError("kappa normalization needs kappa")
            d = r ** kappa
        else:
            raise ValueError(f"unknown normalization {normalization!r}")
        self.d = d

    def evaluate(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float)
        return self.base.evaluate(self.x0 + self.r * x, self.r * y) / self.d

    def gradient(self, x, y):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float)
        gx, gy = self.base.gradient(self.x0 + self.r * x, self.r * y)
        s = self.r / self.d
        return gx * s, gy * s


def rescale(field: Field, x0, r: float, params: WeightParams,
            normalization: str = "almgren",
            kappa: Optional[float] = None) -> RescaledField:
    return RescaledField(field, x0, r, params, normalization, kappa)


# --------------------------------------------------------------------------
# frequency estimation
# --------------------------------------------------------------------------

def _extrapolate_to_zero(radii: np.ndarray, values: np.ndarray) -> float:
    """Limit estimate at r -> 0+ from a geometric radii schedule.

    Assumes values ~ v0 + A r^p; fits p from three consecutive points at
    the small end when the increments behave, otherwise falls back to the
    smallest-radius value."""
    v = np.asarray(values, dtype=float)
    if len(v) < 3:
        return float(v[0])
    d0, d1 = v[1] - v[0], v[2] - v[1]
    if abs(d0) < 1e-12:
        return float(v[0])
    ratio = d1 / d0
    q = radii[1] / radii[0]
    if ratio <= 0 or abs(1.0 - ratio) < 1e-12:
        return float(v[0])
    p = math.log(ratio) / math.log(q)
    if p <= 0.05 or p > 50:
        return float(v[0])
    return float(v[0] - d0 / (q ** p - 1.0))


def frequency_at(v_field: Field, x0, params: WeightParams,
                 config: FunctionalConfig, k: Optional[int] = None,
                 gamma: Optional[float] = None, order: int = 48) -> dict:
    """Estimated limiting frequency at a point, with diagnostics.

    Zero-obstacle path: extrapolate the plain frequency profile.
    Generalized path (k, gamma given): extrapolate the truncated frequency
    and convert through kappa = (Phi(0+) - n - a) / 2.  A profile that
    decreases beyond the slack yields status "undetermined"."""
    radii = config.radii()
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    generalized = k is not None and gamma is not None
    values, branches = [], []
    for r in radii:
        if generalized:
            val, br = generalized_frequency(v_field, x0, config, k, gamma, r,
                                            params, order=order,
                                            return_branch=True)
            branches.append(br)
        else:
            val = frequency(v_field, x0, r, params, order=order)
        values.append(val)
    values = np.asarray(values)
    profile = RadialProfile(radii, values,
                            name="Phi" if generalized else "N")
    mono = monotonicity_report(profile, slack=config.slack)
    status = "ok"
    if mono["status"] != "nondecreasing-within-slack":
        status = "undetermined"
    if generalized:
        # divide out the known prefactor 1 + C0 r^theta before taking the
        # limit: the quotient varies slowly, the raw values do not
        quotient = values / (1.0 + config.C0 * radii ** config.theta)
        limit = _extrapolate_to_zero(radii, quotient)
        kappa_hat = (limit - params.n - params.a) / 2.0
    else:
        limit = _extrapolate_to_zero(radii, values)
        kappa_hat = limit
    truncation_active = any(b == "truncation" for b in branches)
    return {
        "kappa_hat": float(kappa_hat),
        "limit": float(limit),
        "status": status,
        "profile": profile,
        "monotonicity": mono,
        "branches": branches,
        "truncation_active": truncation_active,
    }


# --------------------------------------------------------------------------
# blow-up polynomial fit
# --------------------------------------------------------------------------

def fit_blowup_polynomial(rescaled: Field, m: int, params: WeightParams,
                          order: int = 48):
    """Least-squares projection of a rescaled field onto the degree-2m
    solid harmonics in the weighted sphere inner product at radius one.

    Returns (polynomial, residual, info); fits whose trace is certifiably
    negative somewhere are flagged in info["rejected"].  The residual is
    the weighted L2 distance on the unit sphere, i.e. the distance
    functional of the fit at r = 1.
    """
    basis = basis_solid_harmonics(2 * m, params.n, params)
    rule = sphere_rule(params.n, params.a, 1.0, order=order)
    B = np.column_stack([b.evaluate(rule.x, rule.y) for b in basis])
    fvals = rescaled.evaluate(rule.x, rule.y)
    W = rule.weights
    G = B.T @ (B * W[:, None])
    rhs = B.T @ (W * fvals)
    coef = np.linalg.solve(G, rhs)
    terms = {}
    for c, b in zip(coef, basis):
        for key, v in b.coeffs.items():
            terms[key] = terms.get(key, 0.0) + c * v
    poly = SolidHarmonic(params.n, terms, params, degree=2 * m)
    diff = fvals - poly.evaluate(rule.x, rule.y)
    residual = float(np.dot(W, diff ** 2))
    check = nonneg_trace_check(poly)
    info = {
        "coefficients": coef,
        "trace_check": check["status"],
        "rejected": check["status"] == "certified-negative-witness",
    }
    return poly, residual, info


# --------------------------------------------------------------------------
# coincidence density
# --------------------------------------------------------------------------

def coincidence_density(mask: np.ndarray, spec_or_nodes, x0,
                        radii) -> RadialProfile:
    """Fraction of contact nodes in thin balls around x0.

    ``spec_or_nodes`` is a GridSpec or a list of per-axis node arrays for
    the thin grid carrying the mask.  Radii below three mesh widths are
    excluded as unresolved."""
    if isinstance(spec_or_nodes, GridSpec):
        axes = [spec_or_nodes.x_nodes] * spec_or_nodes.n
    else:
        axes = [np.asarray(a, dtype=float) for a in spec_or_nodes]
    mask = np.asarray(mask, dtype=bool)
    h = max(float(np.max(np.diff(ax))) for ax in axes)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    mesh = np.meshgrid(*axes, indexing="ij")
    dist2 = np.zeros(mask.shape)
    for c, m in zip(x0, mesh):
        dist2 += (m - c) ** 2
    radii = np.asarray(radii, dtype=float)
    keep = radii >= 3.0 * h
    if not np.any(keep):
        raise ValueError("all radii below the 3h resolution floor")
    out_r, out_v = [], []
    for r in radii[keep]:
        inside = dist2 <= r * r
        total = int(np.count_nonzero(inside))
        hits = int(np.count_nonzero(mask & inside))
        out_r.append(r)
        out_v.append(hits / total if total else 0.0)
    return RadialProfile(np.asarray(out_r), np.asarray(out_v),
                         name="coincidence_density")


def _density_vanishes(profile: RadialProfile) -> bool:
    """Operational form of vanishing density: the profile is small at the
    coarsest resolved radius and decays with log-log slope below -1/2
    over its final decade."""
    r, v = profile.radii, np.maximum(profile.values, 1e-300)
    if v[-1] >= 0.1:
        return False
    lo = max(r[-1] / 10.0, r[0])
    sel = r >= lo * (1 - 1e-12)
    if np.count_nonzero(sel) < 2:
        sel = np.arange(len(r)) >= len(r) - 2
    lr, lv = np.log(r[sel]), np.log(v[sel])
    slope = np.polyfit(lr, lv, 1)[0]
    return slope < -0.5


# --------------------------------------------------------------------------
# classification
# --------------------------------------------------------------------------

@dataclass
class BlowupReport:
    x0: np.ndarray
    kappa_hat: float
    classification: str          # regular | singular | other | undetermined
    m: Optional[int] = None
    d: Optional[int] = None
    poly: Optional[XYPolynomial] = None
    fit_residual: Optional[float] = None
    fit_agreement: Optional[float] = None
    density: Optional[RadialProfile] = None
    branch_tag: str = "a"
    nondegeneracy: Optional[dict] = None
    diagnostics: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "x0": list(map(float, np.atleast_1d(self.x0))),
            "kappa_hat": self.kappa_hat,
            "branch": self.branch_tag,
            "classification": self.classification,
            "m": self.m,
            "d": self.d,
            "poly": None if self.poly is None else self.poly.to_json(),
            "residual": self.fit_residual,
            "fit_agreement": self.fit_agreement,
            "density": (None if self.density is None
                        else [list(map(float, self.density.radii)),
                              list(map(float, self.density.values))]),
            "nondegeneracy": self.nondegeneracy,
        }
        return out


def _sup_on_spheres(field: Field, radii, params, samples: int = 400) -> np.ndarray:
    sups = []
    for r in radii:
        rule = sphere_rule(params.n, params.a, r, order=24,
                           n_azimuth=48)
        vals = np.abs(field.evaluate(rule.x, rule.y))
        sups.append(float(vals.max()))
    return np.asarray(sups)


def classify(solution: Field, obstacle, x0, config: FunctionalConfig,
             params: WeightParams, contact_mask=None, grid_spec=None,
             thin_nodes=None, k: Optional[int] = None,
             gamma: Optional[float] = None, order: int = 48,
             kappa_tol: float = 0.05) -> BlowupReport:
    """Full pipeline at one free-boundary point.

    Errors in intermediate stages surface as classification
    "undetermined" with the failure recorded, never as a silent guess.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    v = obstacle_normalize(solution, obstacle, x0, k if k is not None else 2,
                           params) if obstacle is not None else \
        ShiftedField(solution, x0)
    origin = np.zeros(params.n)

    freq = frequency_at(v, origin, params, config, k=k, gamma=gamma,
                        order=order)
    kappa_hat = freq["kappa_hat"]

    density = None
    density_ok = None
    if contact_mask is not None and (grid_spec is not None or thin_nodes is not None):
        src = grid_spec if grid_spec is not None else thin_nodes
        try:
            density = coincidence_density(contact_mask, src, x0,
                                          config.radii())
            density_ok = _density_vanishes(density)
        except ValueError:
            density = None

    radii = config.radii()
    sups = _sup_on_spheres(v, radii, params)
    if np.all(sups > 0) and kappa_hat > 0:
        ratios = sups / radii ** kappa_hat
        nondeg = {"min_ratio": float(ratios.min()),
                  "max_ratio": float(ratios.max())}
    else:
        nondeg = {"min_ratio": 0.0, "max_ratio": 0.0}

    branch_tag = "b" if freq["truncation_active"] else "a"
    diagnostics = {"frequency": freq}
    if branch_tag == "b" and k is not None and gamma is not None:
        lr, lv = np.log(radii), np.log(np.maximum(sups, 1e-300))
        slope = float(np.polyfit(lr, lv, 1)[0])
        diagnostics["sup_growth_slope"] = slope
        diagnostics["sup_growth_ok"] = slope > (k + gamma - 0.1) - 1e-9

    if freq["status"] == "undetermined":
        return BlowupReport(x0=x0, kappa_hat=kappa_hat,
                            classification="undetermined", density=density,
                            branch_tag=branch_tag, nondegeneracy=nondeg,
                            diagnostics=diagnostics)

    s = params.s
    if abs(kappa_hat - (1.0 + s)) < kappa_tol:
        return BlowupReport(x0=x0, kappa_hat=kappa_hat,
                            classification="regular", density=density,
                            branch_tag=branch_tag, nondegeneracy=nondeg,
                            diagnostics=diagnostics)

    m = int(round(kappa_hat / 2.0))
    is_even = m >= 1 and abs(kappa_hat - 2 * m) < kappa_tol
    within_k = k is None or 2 * m <= k
    density_gate = density_ok if density_ok is not None else True
    if is_even and within_k and density_gate:
        r_fit = radii[len(radii) // 2]
        try:
            poly, resid, info = fit_blowup_polynomial(
                rescale(v, origin, r_fit, params), m, params, order=order)
            poly2, _, _ = fit_blowup_polynomial(
                rescale(v, origin, r_fit / 2.0, params), m, params,
                order=order)
        except ValueError:
            return BlowupReport(x0=x0, kappa_hat=kappa_hat,
                                classification="undetermined",
                                density=density, branch_tag=branch_tag,
                                nondegeneracy=nondeg, diagnostics=diagnostics)
        agree = _poly_distance(poly, poly2, params, order=order)
        if info["rejected"]:
            diagnostics["fit_rejected"] = True
            return BlowupReport(x0=x0, kappa_hat=kappa_hat,
                                classification="other", density=density,
                                poly=poly, fit_residual=resid,
                                fit_agreement=agree, branch_tag=branch_tag,
                                nondegeneracy=nondeg, diagnostics=diagnostics)
        d = stratum_dimension(poly)
        return BlowupReport(x0=x0, kappa_hat=kappa_hat,
                            classification="singular", m=m, d=d, poly=poly,
                            fit_residual=resid, fit_agreement=agree,
                            density=density, branch_tag=branch_tag,
                            nondegeneracy=nondeg, diagnostics=diagnostics)

    return BlowupReport(x0=x0, kappa_hat=kappa_hat, classification="other",
                        density=density, branch_tag=branch_tag,
                        nondegeneracy=nondeg, diagnostics=diagnostics)


def _poly_distance(p: XYPolynomial, q: XYPolynomial, params: WeightParams,
                   order: int = 48) -> float:
    rule = sphere_rule(params.n, params.a, 1.0, order=order)
    diff = p.evaluate(rule.x, rule.y) - q.evaluate(rule.x, rule.y)
    return float(np.dot(rule.weights, diff ** 2))


# --------------------------------------------------------------------------
# stratification
# --------------------------------------------------------------------------

def stratify(reports: list, params: Optional[WeightParams] = None) -> dict:
    """Group singular reports into strata keyed by (2m, d).

    Emits per-stratum point lists and, for nearby pairs inside one
    stratum, the weighted sphere distance between their blow-up
    polynomials (an empirical continuity-modulus table)."""
    strata = {}
    for rep in reports:
        if rep.classification != "singular":
            continue
        key = (2 * rep.m, rep.d)
        strata.setdefault(key, []).append(rep)
    out = {}
    for key, reps in sorted(strata.items()):
        pts = [list(map(float, np.atleast_1d(r.x0))) for r in reps]
        pairs = []
        if params is not None and len(reps) >= 2:
            for i in range(len(reps) - 1):
                a, b = reps[i], reps[i + 1]
                dist = _poly_distance(a.poly, b.poly, params)
                gap = float(np.linalg.norm(np.atleast_1d(a.x0)
                                           - np.atleast_1d(b.x0)))
                pairs.append({"x0": pts[i], "x0_prime": pts[i + 1],
                              "separation": gap, "poly_distance": dist})
        out[key] = {"points": pts, "count": len(reps),
                    "continuity_pairs": pairs}
    return out
