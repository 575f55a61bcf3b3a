"""Fuzzy-set boolean algebra on membership values in [0, 1].

Every public function accepts scalars or numpy arrays and broadcasts.
Inputs are range-checked; out-of-range memberships raise
:class:`~fuzzycsg.errors.ParameterError` rather than being clamped.

Boolean operation codes used throughout the package::

    INTERSECTION = 0, UNION = 1, DIFFERENCE = 2 (X minus Y), REVERSE_DIFFERENCE = 3 (Y minus X)

which is also the order of the barycentric weights ``c0..c3``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

INTERSECTION = 0
UNION = 1
DIFFERENCE = 2
REVERSE_DIFFERENCE = 3

OPERATION_NAMES = ("intersection", "union", "difference", "reverse_difference")

BARYCENTRIC_ATOL = 1e-9


def check_membership(x, name="x"):
    """Return ``x`` as a float64 array, raising if any entry leaves [0, 1]."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all((arr >= 0.0) & (arr <= 1.0)):
        raise ParameterError(f"{name} must lie in [0, 1]")
    return arr


def _scalar_or_array(value):
    return value[()] if isinstance(value, np.ndarray) and value.ndim == 0 else value


@dataclass(frozen=True)
class TNormKind:
    name: str
    p: float = None

    _NAMES = ("godel", "product", "lukasiewicz", "yager")

    def __post_init__(self):
        if self.name not in self._NAMES:
            raise ParameterError(f"unknown t-norm {self.name!r}")
        if self.name == "yager" and not (self.p is not None and np.isfinite(self.p) and self.p > 0):
            raise ParameterError("Yager t-norm requires p > 0")

    @classmethod
    def yager(cls, p):
        return cls("yager", p)


@dataclass(frozen=True)
class TConormKind:
    name: str
    p: float = None

    _NAMES = ("godel", "probabilistic_sum", "bounded_sum", "yager")

    def __post_init__(self):
        if self.name not in self._NAMES:
            raise ParameterError(f"unknown t-conorm {self.name!r}")
        if self.name == "yager" and not (self.p is not None and np.isfinite(self.p) and self.p > 0):
            raise ParameterError("Yager t-conorm requires p > 0")

    @classmethod
    def yager(cls, p):
        return cls("yager", p)


@dataclass(frozen=True)
class ComplementKind:
    name: str
    lam: float = None

    _NAMES = ("standard", "cosine", "sugeno", "yager")

    def __post_init__(self):
        if self.name not in self._NAMES:
            raise ParameterError(f"unknown complement {self.name!r}")
        if self.name == "sugeno" and not (self.lam is not None and self.lam > -1 and np.isfinite(self.lam)):
            raise ParameterError("Sugeno complement requires lambda > -1")
        if self.name == "yager" and not (self.lam is not None and self.lam > 0 and np.isfinite(self.lam)):
            raise ParameterError("Yager complement requires lambda > 0")

    @classmethod
    def sugeno(cls, lam):
        return cls("sugeno", lam)

    @classmethod
    def yager(cls, lam):
        return cls("yager", lam)


GODEL = TNormKind("godel")
PRODUCT = TNormKind("product")
LUKASIEWICZ = TNormKind("lukasiewicz")

GODEL_MAX = TConormKind("godel")
PROBABILISTIC_SUM = TConormKind("probabilistic_sum")
BOUNDED_SUM = TConormKind("bounded_sum")

STANDARD = ComplementKind("standard")
COSINE = ComplementKind("cosine")


def tnorm(kind, x, y):
    """Fuzzy intersection of two membership values under a t-norm family.

    The Yager member is ``max(1 - ((1-x)^p + (1-y)^p)^(1/p), 0)``.
    """
    x = check_membership(x, "x")
    y = check_membership(y, "y")
    if kind.name == "godel":
        out = np.minimum(x, y)
    elif kind.name == "product":
        out = x * y
    elif kind.name == "lukasiewicz":
        out = np.maximum(0.0, x + y - 1.0)
    else:
        p = kind.p
        out = np.maximum(1.0 - ((1.0 - x) ** p + (1.0 - y) ** p) ** (1.0 / p), 0.0)
    return _scalar_or_array(out)


def tconorm(kind, x, y):
    """Fuzzy union of two membership values under a t-conorm family."""
    x = check_membership(x, "x")
    y = check_membership(y, "y")
    if kind.name == "godel":
        out = np.maximum(x, y)
    elif kind.name == "probabilistic_sum":
        out = x + y - x * y
    elif kind.name == "bounded_sum":
        out = np.minimum(x + y, 1.0)
    else:
        p = kind.p
        out = np.minimum((x ** p + y ** p) ** (1.0 / p), 1.0)
    return _scalar_or_array(out)


def complement(kind, x):
    x = check_membership(x, "x")
    if kind.name == "standard":
        out = 1.0 - x
    elif kind.name == "cosine":
        out = 0.5 * (1.0 + np.cos(np.pi * x))
    elif kind.name == "sugeno":
        out = (1.0 - x) / (1.0 + kind.lam * x)
    else:
        lam = kind.lam
        out = (1.0 - x ** lam) ** (1.0 / lam)
    return _scalar_or_array(out)


def product_difference(x, y):
    """Product-logic difference X minus Y, i.e. ``x - x*y``."""
    x = check_membership(x, "x")
    y = check_membership(y, "y")
    return _scalar_or_array(x - x * y)


@dataclass(frozen=True)
class BarycentricWeights:
    """Point in operator-type space; ``c0..c3`` weight intersection, union, X-Y, Y-X."""

    c0: float
    c1: float
    c2: float
    c3: float

    def __post_init__(self):
        check_barycentric(self.as_array())

    def as_array(self):
        return np.array([self.c0, self.c1, self.c2, self.c3], dtype=np.float64)

    @classmethod
    def one_hot(cls, op):
        c = [0.0, 0.0, 0.0, 0.0]
        c[op] = 1.0
        return cls(*c)


def check_barycentric(c):
    """Validate a barycentric 4-vector and return it as a float64 array."""
    if isinstance(c, BarycentricWeights):
        return c.as_array()
    arr = np.asarray(c, dtype=np.float64)
    if arr.shape != (4,):
        raise ParameterError(f"barycentric weights need 4 entries, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ParameterError("barycentric weights must lie in [0, 1]")
    if abs(arr.sum() - 1.0) > BARYCENTRIC_ATOL:
        raise ParameterError(f"barycentric weights sum to {arr.sum()!r}, not 1")
    return arr


def blend_coefficients(c):
    """Coefficients ``(a, b, k)`` with ``B_c(x, y) = a*x + b*y + k*x*y``.

    ``c`` may carry leading batch axes; the last axis holds the four weights.
    """
    c = np.asarray(c)
    c0, c1, c2, c3 = c[..., 0], c[..., 1], c[..., 2], c[..., 3]
    return c1 + c2, c1 + c3, c0 - c1 - c2 - c3


def corner_values(x, y):
    """The four product-logic operators at ``(x, y)``, stacked on the last axis.

    Equals the gradient of the unified operator with respect to its weights.
    """
    xy = x * y
    return np.stack([xy, x + y - xy, x - xy, y - xy], axis=-1)


def unified_boolean(c, x, y):
    """Barycentric blend of intersection, union and both differences.

    ``B_c(x, y) = (c1 + c2) x + (c1 + c3) y + (c0 - c1 - c2 - c3) x y``.
    One-hot weights give back the product-logic operators exactly.
    """
    c = check_barycentric(c)
    x = check_membership(x, "x")
    y = check_membership(y, "y")
    a, b, k = blend_coefficients(c)
    return _scalar_or_array(a * x + b * y + k * x * y)


def unified_boolean_grad(c, x, y):
    """Partial derivatives of :func:`unified_boolean`.

    Returns ``(dB/dx, dB/dy, dB/dc)`` where ``dB/dc`` has a trailing axis of 4.
    """
    c = check_barycentric(c)
    x = check_membership(x, "x")
    y = check_membership(y, "y")
    a, b, k = blend_coefficients(c)
    dx = a + k * y
    dy = b + k * x
    dc = corner_values(x, y)
    return _scalar_or_array(dx), _scalar_or_array(dy), dc


# bilinear corners: (u, v) = (0, 0) union, (1, 0) intersection,
# (0, 1) Y minus X, (1, 1) X minus Y
def bilinear_to_barycentric(u, v):
    """Corner weights of the bilinear blend, in ``c0..c3`` order."""
    w_yx, w_union, w_xy, w_int = (1 - u) * v, (1 - u) * (1 - v), u * v, u * (1 - v)
    return np.stack(np.broadcast_arrays(w_int, w_union, w_xy, w_yx), axis=-1)


def bilinear_boolean(u, v, x, y):
    """Bilinear blend of the four product-logic operators over the unit square.

    Kept as the ablation baseline; it is not monotone along straight paths
    between corners the way :func:`unified_boolean` is along simplex edges.
    """
    u = check_membership(u, "u")
    v = check_membership(v, "v")
    x = check_membership(x, "x")
    y = check_membership(y, "y")
    w = bilinear_to_barycentric(u, v)
    return _scalar_or_array(np.sum(w * corner_values(x, y), axis=-1))


# Godel-logic operators for the fixed-operation ablation. Each is min/max of two
# operands; ties send the whole subgradient to the left operand.
def godel_boolean(op, x, y):
    if op == INTERSECTION:
        return np.minimum(x, y)
    if op == UNION:
        return np.maximum(x, y)
    if op == DIFFERENCE:
        return np.minimum(x, 1.0 - y)
    if op == REVERSE_DIFFERENCE:
        return np.minimum(y, 1.0 - x)
    raise ParameterError(f"unknown boolean operation {op!r}")


def godel_boolean_grad(op, x, y):
    """Subgradients ``(dx, dy)`` of :func:`godel_boolean` with the left-tie rule."""
    if op == INTERSECTION:
        left = (x <= y).astype(x.dtype)
        return left, 1.0 - left
    if op == UNION:
        left = (x >= y).astype(x.dtype)
        return left, 1.0 - left
    if op == DIFFERENCE:
        left = (x <= 1.0 - y).astype(x.dtype)
        return left, -(1.0 - left)
    if op == REVERSE_DIFFERENCE:
        left = (y <= 1.0 - x).astype(x.dtype)
        return -(1.0 - left), left
    raise ParameterError(f"unknown boolean operation {op!r}")
