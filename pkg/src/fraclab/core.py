"""Shared parameter objects, grids, fields, and scalar coordinate transforms.

The package works with even-in-y functions on the upper half space
R^n x [0, inf).  Two coordinate pictures are used throughout:

* the *extension* picture with variables (x, y), where the operator is
  the weighted divergence-form operator div(|y|^a grad u), a in (-1, 1);
* the *gauge* (Grushin) picture with variables (x, z), where the operator
  is D_zz + |z|^{2 alpha} Lap_x, alpha = a / (1 - a).

The two pictures are linked by the strictly increasing scalar map
z = h(y) = (y / (1 - a))^(1 - a) implemented here.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import gamma as gamma_fn


# --------------------------------------------------------------------------
# parameters
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightParams:
    """Exponent family for one value of the fractional order s.

    Attributes
    ----------
    s : fractional order, in (0, 1).
    a : extension weight exponent, a = 1 - 2 s, in (-1, 1).
    alpha : gauge-side exponent, a / (1 - a), in (-1/2, inf).
    n : spatial dimension of the thin variable x.
    Q : homogeneous dimension of the gauge picture, 1 + n / (1 - a).
    Qtilde : homogeneous dimension of the extension picture, n + 1 + a.
    """

    s: float
    a: float
    alpha: float
    n: int
    Q: float
    Qtilde: float

    def __post_init__(self):
        if not (0.0 < self.s < 1.0):
            raise ValueError(f"s must lie in (0, 1), got {self.s}")
        if not (-1.0 < self.a < 1.0):
            raise ValueError(f"a must lie in (-1, 1), got {self.a}")
        if self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")

    @classmethod
    def from_s(cls, s: float, n: int) -> "WeightParams":
        if not (0.0 < s < 1.0):
            raise ValueError(f"s must lie in (0, 1), got {s}")
        a = 1.0 - 2.0 * s
        alpha = a / (1.0 - a)
        Q = 1.0 + n / (1.0 - a)
        Qtilde = n + 1.0 + a
        return cls(s=float(s), a=a, alpha=alpha, n=int(n), Q=Q, Qtilde=Qtilde)

    @classmethod
    def from_a(cls, a: float, n: int) -> "WeightParams":
        return cls.from_s((1.0 - a) / 2.0, n)


def h_transform(y, params: WeightParams):
    """Map extension height y >= 0 to gauge height z = (y/(1-a))^(1-a)."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("h_transform requires y >= 0")
    return (y / (1.0 - params.a)) ** (1.0 - params.a)


def h_inverse(z, params: WeightParams):
    """Inverse of :func:`h_transform`: y = (1-a) z^(1/(1-a))."""
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("h_inverse requires z >= 0")
    return (1.0 - params.a) * z ** (1.0 / (1.0 - params.a))


def h_derivative(y, params: WeightParams):
    """h'(y) = (1-a)^a y^(-a); used by the sphere pushforward."""
    y = np.asarray(y, dtype=float)
    a = params.a
    return (1.0 - a) ** a * y ** (-a)


def gamma_ns(n: int, s: float) -> float:
    """Normalization constant of the singular-integral fractional Laplacian.

    Chosen so that the operator has Fourier symbol (2 pi |xi|)^(2 s).
    """
    if not (0.0 < s < 1.0):
        raise ValueError(f"s must lie in (0, 1), got {s}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return s * 2.0 ** (2 * s) * gamma_fn(n / 2.0 + s) / (
        np.pi ** (n / 2.0) * gamma_fn(1.0 - s)
    )


def jacobian_weight(y, params: WeightParams):
    """Jacobian determinant (1-a)^a y^(-a) of the map (x, y) -> (x, h(y)).

    Singular at y = 0 when a > 0; callers integrating across y = 0 must
    absorb the weight into the quadrature rule instead of sampling it.
    """
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0) and params.a > 0:
        raise ValueError("jacobian_weight is singular at y = 0 for a > 0")
    if np.any(y < 0):
        raise ValueError("jacobian_weight requires y >= 0")
    a = params.a
    return (1.0 - a) ** a * y ** (-a)


# --------------------------------------------------------------------------
# fields
# --------------------------------------------------------------------------

class Field:
    """Evaluable even-in-y function on R^n x R.

    Concrete fields implement ``evaluate`` (vectorized) and, when an exact
    or accurate derivative is available, ``gradient``.  Points are passed
    as an (m, n) array of thin coordinates plus an (m,) array of heights;
    evenness in y is the caller-visible contract, so evaluate(x, -y) must
    equal evaluate(x, y).
    """

    n: int

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x: np.ndarray, y: np.ndarray):
        """Return (grad_x of shape (m, n), d/dy of shape (m,))."""
        return _fd_gradient(self, x, y)

    def __call__(self, x, y):
        x, y = _as_points(x, y, self.n)
        return self.evaluate(x, y)


def _as_points(x, y, n):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim == 1 and n == 1:
        x = x[:, None]
    elif x.ndim == 1 and len(x) == n:
        x = x[None, :]
    y = np.atleast_1d(np.asarray(y, dtype=float))
    return x, np.broadcast_to(y, (x.shape[0],)).astype(float)


def _fd_gradient(f: Field, x: np.ndarray, y: np.ndarray, h: float = 1e-6):
    m, n = x.shape
    gx = np.empty((m, n))
    for i in range(n):
        dx = np.zeros_like(x)
        dx[:, i] = h
        gx[:, i] = (f.evaluate(x + dx, y) - f.evaluate(x - dx, y)) / (2 * h)
    # keep the y stencil on one side of the axis; evenness makes |y| the
    # natural variable and the centered stencil would cross the kink
    yh = np.abs(y)
    step = np.minimum(h, np.maximum(yh / 2, 1e-12))
    gy = (f.evaluate(x, yh + step) - f.evaluate(x, yh - step)) / (2 * step)
    return gx, gy * np.sign(y + (y == 0.0))


class CallableField(Field):
    """Wrap a plain function (and optional gradient) as a Field."""

    def __init__(self, n: int, func: Callable, grad: Optional[Callable] = None):
        self.n = n
        self._func = func
        self._grad = grad

    def evaluate(self, x, y):
        return np.asarray(self._func(x, y), dtype=float)

    def gradient(self, x, y):
        if self._grad is None:
            return _fd_gradient(self, x, y)
        gx, gy = self._grad(x, y)
        return np.asarray(gx, dtype=float), np.asarray(gy, dtype=float)


class ShiftedField(Field):
    """field(x0 + x, y) for a fixed thin-space center x0."""

    def __init__(self, base: Field, x0):
        self.base = base
        self.x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        self.n = base.n
        if len(self.x0) != self.n:
            raise ValueError("center dimension mismatch")

    def evaluate(self, x, y):
        return self.base.evaluate(x + self.x0, y)

    def gradient(self, x, y):
        return self.base.gradient(x + self.x0, y)


class LinearCombinationField(Field):
    def __init__(self, terms: Sequence[tuple[float, Field]]):
        if not terms:
            raise ValueError("need at least one term")
        self.terms = [(float(c), f) for c, f in terms]
        self.n = self.terms[0][1].n

    def evaluate(self, x, y):
        out = np.zeros(x.shape[0])
        for c, f in self.terms:
            out += c * f.evaluate(x, y)
        return out

    def gradient(self, x, y):
        gx = np.zeros_like(x)
        gy = np.zeros(x.shape[0])
        for c, f in self.terms:
            gxi, gyi = f.gradient(x, y)
            gx += c * gxi
            gy += c * gyi
        return gx, gy


# --------------------------------------------------------------------------
# grids
# --------------------------------------------------------------------------

def graded_y_nodes(Y: float, ny: int, ratio: float = 1.15) -> np.ndarray:
    """Geometric y-mesh refined toward y = 0.

    Spacings grow by ``ratio`` away from the thin set, which is where the
    solution is only Hoelder-differentiable in y.
    """
    if ny < 2:
        raise ValueError("need at least 2 y-nodes")
    if ratio <= 0:
        raise ValueError("grading ratio must be positive")
    if abs(ratio - 1.0) < 1e-14:
        return np.linspace(0.0, Y, ny)
    w = ratio ** np.arange(ny - 1)
    dy = Y * w / w.sum()
    return np.concatenate([[0.0], np.cumsum(dy)])


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid over the half-space box [-L, L]^n x [0, Y].

    The y-nodes start at 0 and may be graded.  Only the upper half is
    stored anywhere; evaluation below the thin set goes through even
    reflection.
    """

    n: int
    L: float
    Y: float
    nx: int
    y_nodes: np.ndarray
    grading: float = 1.15

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError("gridded fields support n in {1, 2}")
        y = np.asarray(self.y_nodes, dtype=float)
        if y[0] != 0.0:
            raise ValueError("y-nodes must start at 0")
        if np.any(np.diff(y) <= 0):
            raise ValueError("y-nodes must be strictly increasing")
        if self.nx < 8 or len(y) < 8:
            raise ValueError("need at least 8 nodes per axis")
        object.__setattr__(self, "y_nodes", y)

    @classmethod
    def make(cls, n: int, L: float, Y: float, nx: int, ny: int,
             grading: float = 1.15) -> "GridSpec":
        return cls(n=n, L=float(L), Y=float(Y), nx=int(nx),
                   y_nodes=graded_y_nodes(float(Y), int(ny), grading),
                   grading=float(grading))

    @property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.nx)

    @property
    def hx(self) -> float:
        return 2.0 * self.L / (self.nx - 1)

    @property
    def ny(self) -> int:
        return len(self.y_nodes)

    def shape(self) -> tuple:
        return (self.nx,) * self.n + (self.ny,)

    def thin_shape(self) -> tuple:
        return (self.nx,) * self.n

    def refined(self) -> "GridSpec":
        """Halve both mesh widths (node count 2N-1).

        The grading ratio is replaced by its square root so that every
        spacing, including the coarsest, shrinks by half: a fixed ratio
        would pin the top spacing and stall refinement."""
        return GridSpec.make(self.n, self.L, self.Y, 2 * self.nx - 1,
                             2 * self.ny - 1, float(np.sqrt(self.grading)))


class GridField(Field):
    """Sampled even-in-y function on a :class:`GridSpec`.

    ``values`` has shape (nx,)*n + (ny,).  The optional ``contact_mask``
    and ``neumann`` arrays live on the y = 0 nodes.  Evaluation reflects
    evenly through y = 0 and interpolates multilinearly.
    """

    def __init__(self, spec: GridSpec, values: np.ndarray,
                 contact_mask: Optional[np.ndarray] = None,
                 neumann: Optional[np.ndarray] = None):
        values = np.asarray(values, dtype=float)
        if values.shape != spec.shape():
            raise ValueError(f"values shape {values.shape} != grid {spec.shape()}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.spec = spec
        self.values = values
        self.contact_mask = contact_mask
        self.neumann = neumann
        self.n = spec.n
        axes = [spec.x_nodes] * spec.n + [spec.y_nodes]
        self._interp = RegularGridInterpolator(
            tuple(axes), values, method="linear", bounds_error=False,
            fill_value=None)
        self._grad_interp = None

    def evaluate(self, x, y):
        pts = np.column_stack([x, np.abs(y)])
        return self._interp(pts)

    def _build_gradient(self):
        axes = [self.spec.x_nodes] * self.n + [self.spec.y_nodes]
        grads = np.gradient(self.values, *axes, edge_order=2)
        if self.n == 1:
            grads = list(grads)
        self._grad_interp = [
            RegularGridInterpolator(tuple(axes), g, method="linear",
                                    bounds_error=False, fill_value=None)
            for g in grads
        ]

    def gradient(self, x, y):
        if self._grad_interp is None:
            self._build_gradient()
        pts = np.column_stack([x, np.abs(y)])
        comps = [gi(pts) for gi in self._grad_interp]
        gx = np.column_stack(comps[:-1])
        gy = comps[-1] * np.sign(y + (y == 0.0))
        return gx, gy

    # -- serialization ------------------------------------------------------

    def to_csv(self) -> str:
        """Columns x1[, x2], y, value; one node per row."""
        axes = [self.spec.x_nodes] * self.n + [self.spec.y_nodes]
        mesh = np.meshgrid(*axes, indexing="ij")
        cols = [m.ravel() for m in mesh] + [self.values.ravel()]
        header = ",".join([f"x{i+1}" for i in range(self.n)] + ["y", "value"])
        buf = io.StringIO()
        buf.write(header + "\n")
        for row in zip(*cols):
            buf.write(",".join(format(v, ".17g") for v in row) + "\n")
        return buf.getvalue()

    def save_npz(self, path):
        np.savez(path, values=self.values, x_nodes=self.spec.x_nodes,
                 y_nodes=self.spec.y_nodes, n=self.spec.n,
                 contact_mask=(self.contact_mask
                               if self.contact_mask is not None else np.array([])),
                 neumann=(self.neumann
                          if self.neumann is not None else np.array([])))


# --------------------------------------------------------------------------
# obstacles
# --------------------------------------------------------------------------

def _parse_multi_index(key: str) -> tuple:
    return tuple(int(p) for p in key.split(","))


@dataclass
class ObstacleSpec:
    """Obstacle on the thin space with a derivative oracle up to order k.

    ``kind`` is "polynomial" (finitely many coefficients, multi-index keyed)
    or "callable" (value plus user-supplied partial-derivative oracle).
    ``k`` and ``gamma`` record the assumed Hoelder smoothness class.
    """

    kind: str
    n: int
    k: int
    gamma: float
    coefficients: Optional[dict] = None
    func: Optional[Callable] = None
    derivatives: Optional[dict] = None  # multi-index tuple -> callable

    def __post_init__(self):
        if self.kind not in ("polynomial", "callable"):
            raise ValueError(f"unknown obstacle kind {self.kind!r}")
        if self.k < 0:
            raise ValueError("smoothness order k must be >= 0")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must lie in (0, 1)")
        if self.kind == "polynomial":
            if not self.coefficients:
                raise ValueError("polynomial obstacle needs coefficients")
            coeffs = {}
            for key, c in self.coefficients.items():
                beta = _parse_multi_index(key) if isinstance(key, str) else tuple(key)
                if len(beta) != self.n:
                    raise ValueError(f"multi-index {beta} has wrong length")
                coeffs[beta] = float(c)
            self.coefficients = coeffs
        else:
            if self.func is None:
                raise ValueError("callable obstacle needs func")

    def value(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "polynomial":
            out = np.zeros(x.shape[0])
            for beta, c in self.coefficients.items():
                out += c * np.prod(x ** np.array(beta), axis=1)
            return out
        return np.asarray(self.func(x), dtype=float)

    def derivative(self, beta: tuple, x) -> np.ndarray:
        """Partial derivative d^beta phi at the points x."""
        beta = tuple(beta)
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "polynomial":
            out = np.zeros(x.shape[0])
            for mono, c in self.coefficients.items():
                factor = c
                new = []
                ok = True
                for b_i, m_i in zip(beta, mono):
                    if m_i < b_i:
                        ok = False
                        break
                    for j in range(b_i):
                        factor *= (m_i - j)
                    new.append(m_i - b_i)
                if ok:
                    out += factor * np.prod(x ** np.array(new), axis=1)
            return out
        if sum(beta) == 0:
            return self.value(x)
        if self.derivatives is None or beta not in self.derivatives:
            raise ValueError(f"derivative oracle missing multi-index {beta}")
        return np.asarray(self.derivatives[beta](x), dtype=float)

    def validate_oracle(self, x_samples, rtol: float = 1e-4):
        """Spot-check first derivatives against central differences."""
        x = np.atleast_2d(np.asarray(x_samples, dtype=float))
        h = 1e-5
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = h
            fd = (self.value(x + e) - self.value(x - e)) / (2 * h)
            beta = tuple(1 if j == i else 0 for j in range(self.n))
            an = self.derivative(beta, x)
            scale = np.maximum(np.abs(an), 1.0)
            if np.any(np.abs(fd - an) > rtol * scale):
                raise ValueError(f"derivative oracle inconsistent for {beta}")
        return True

    def to_json(self) -> str:
        if self.kind != "polynomial":
            raise ValueError("only polynomial obstacles serialize to JSON")
        coeffs = {",".join(map(str, beta)): c
                  for beta, c in sorted(self.coefficients.items())}
        return json.dumps({"kind": "polynomial", "n": self.n, "k": self.k,
                           "gamma": self.gamma, "coefficients": coeffs},
                          sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ObstacleSpec":
        d = json.loads(text)
        return cls(kind=d["kind"], n=d["n"], k=d["k"], gamma=d["gamma"],
                   coefficients=d["coefficients"])
