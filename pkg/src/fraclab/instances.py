"""Named exact instances: closed-form solutions used as oracles.

Each instance bundles an evaluable field with its exact trace, contact
indicator, free-boundary points, and homogeneity, so the functional and
classification pipelines can run against ground truth without a grid
solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .core import Field, WeightParams
from .harmonics import PolynomialOnRn, SolidHarmonic, extend_la_harmonic

__all__ = ["SignoriniField", "AnalyticInstance", "signorini_instance",
           "solid_harmonic_instance", "zero_instance", "named_instance"]


class SignoriniField(Field):
    """Classical half-line contact solution Re (x + i|y|)^(3/2) for s = 1/2.

    Harmonic off the half-line {y = 0, x <= 0}, where it vanishes; the
    weighted Neumann trace is (3/2) |x|^(1/2) there.  Homogeneous of
    degree 3/2 about the origin, which is a regular free-boundary point.
    """

    n = 1
    kappa = 1.5

    def _w(self, x, y):
        return x[:, 0] + 1j * np.abs(y)

    def evaluate(self, x, y):
        return np.real(self._w(x, y) ** 1.5)

    def gradient(self, x, y):
        half = self._w(x, y) ** 0.5
        gx = 1.5 * np.real(half)[:, None]
        sign = np.sign(np.asarray(y, dtype=float) + (np.asarray(y) == 0.0))
        gy = -1.5 * np.imag(half) * sign
        return gx, gy

    def trace(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))[:, 0]
        return np.where(x > 0, np.maximum(x, 0.0) ** 1.5, 0.0)

    def neumann(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))[:, 0]
        return np.where(x < 0, 1.5 * np.abs(x) ** 0.5, 0.0)


@dataclass
class AnalyticInstance:
    """Exact solution of a thin-obstacle instance with known structure."""

    name: str
    params: WeightParams
    field: Field
    contact_indicator: Callable  # (m, n) points -> bool array
    free_boundary_points: list
    obstacle: object = None      # None means zero obstacle
    kappa_at: Optional[dict] = None
    expected: Optional[dict] = None

    def trace(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.field.evaluate(x, np.zeros(x.shape[0]))

    def thin_contact_mask(self, x_nodes_nd) -> np.ndarray:
        """Contact mask on a tensor thin grid given per-axis nodes."""
        mesh = np.meshgrid(*x_nodes_nd, indexing="ij")
        pts = np.column_stack([m.ravel() for m in mesh])
        return self.contact_indicator(pts).reshape(mesh[0].shape)


def signorini_instance() -> AnalyticInstance:
    params = WeightParams.from_s(0.5, 1)
    f = SignoriniField()

    def contact(pts):
        return pts[:, 0] <= 1e-14

    return AnalyticInstance(
        name="signorini_32", params=params, field=f,
        contact_indicator=contact, free_boundary_points=[np.zeros(1)],
        kappa_at={(0.0,): 1.5},
        expected={"classification": "regular", "density_limit": 0.5},
    )


def solid_harmonic_instance(coeffs: dict, n: int, s: float,
                            name: str = "solid_harmonic") -> AnalyticInstance:
    """Global zero-obstacle solution given by the even harmonic extension of
    a nonnegative boundary polynomial (vanishing weighted Neumann trace)."""
    params = WeightParams.from_s(s, n)
    q = PolynomialOnRn(n, {tuple(b): c for b, c in coeffs.items()})
    ext = extend_la_harmonic(q, params)

    def contact(pts, _q=q):
        return np.abs(_q.evaluate(pts)) <= 1e-12

    # free-boundary points: zeros of the trace on the axes through 0
    return AnalyticInstance(
        name=name, params=params, field=ext,
        contact_indicator=contact, free_boundary_points=[np.zeros(n)],
        kappa_at={tuple(np.zeros(n)): float(q.degree())},
        expected={"classification": "singular", "m": q.degree() // 2},
    )


class _ZeroField(Field):
    def __init__(self, n):
        self.n = n

    def evaluate(self, x, y):
        return np.zeros(np.atleast_2d(x).shape[0])

    def gradient(self, x, y):
        x = np.atleast_2d(x)
        return np.zeros_like(x), np.zeros(x.shape[0])


def zero_instance(n: int, s: float) -> AnalyticInstance:
    params = WeightParams.from_s(s, n)

    def contact(pts):
        return np.zeros(pts.shape[0], dtype=bool)

    return AnalyticInstance(
        name="zero", params=params, field=_ZeroField(n),
        contact_indicator=contact, free_boundary_points=[],
        expected={"classification": None},
    )


def named_instance(name: str, n: int = 1, s: float = 0.5,
                   coeffs: Optional[dict] = None) -> AnalyticInstance:
    if name == "signorini_32":
        return signorini_instance()
    if name == "zero":
        return zero_instance(n, s)
    if name == "solid_harmonic":
        if coeffs is None:
            coeffs = {(2,) + (0,) * (n - 1): 1.0}
        return solid_harmonic_instance(coeffs, n, s)
    raise ValueError(f"unknown named instance {name!r}")
