"""Numerical laboratory for the thin-obstacle problem of the fractional
Laplacian in the weighted-extension formulation."""

from .core import (Field, GridField, GridSpec, ObstacleSpec, WeightParams,
                   gamma_ns, h_inverse, h_transform, jacobian_weight)
from .functionals import (FunctionalConfig, RadialProfile, dirichlet,
                          frequency, generalized_frequency, height, monneau,
                          monotonicity_report, weiss)
from .harmonics import (PolynomialOnRn, SolidHarmonic, XYPolynomial,
                        basis_solid_harmonics, extend_la_harmonic, la_apply,
                        stratum_dimension)
from .solver import ThinObstacleProblem, assemble, psor_solve

__version__ = "0.1.0"
