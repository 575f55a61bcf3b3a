"""Implicit primitives mapped to soft occupancy through a sharpness-scaled sigmoid.

Fields are positive inside, so ``occupancy = sigmoid(s * field(p))`` exceeds 0.5
inside the shape when the sharpness ``s`` is positive. A negative ``s`` flips
inside and outside; the optimizer is free to use either sign.

Each primitive stores its trainable scalars in one flat ``params`` vector whose
last entry is always the sharpness. Arithmetic follows the dtype of
``params``, so a primitive holding ``np.longdouble`` parameters evaluates in
extended precision.
"""
import numpy as np
from scipy.special import expit

from .errors import ParameterError, ShapeError

QUADRIC_SLOTS = {
    2: np.array([0, 1, 3, 6, 7, 9]),
    3: np.arange(10),
}


def sigmoid(z):
    """Logistic function; stable for any magnitude and keeps extended precision."""
    return expit(z)


def softplus(z):
    return np.logaddexp(0.0, z)


def inverse_softplus(y):
    if y <= 0:
        raise ParameterError("softplus output must be positive")
    return float(y + np.log(-np.expm1(-y)))


def check_points(points, dim):
    """Coerce ``points`` to shape ``(n, dim)``; a single point becomes ``(1, dim)``."""
    pts = np.asarray(points)
    if pts.dtype.kind not in "fi":
        raise ShapeError("points must be numeric")
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ShapeError(f"expected points of dimension {dim}, got array of shape {np.shape(points)}")
    return pts


def quadric_features(points, dim):
    """Monomials of the active quadric slots, shape ``(n_slots, n_points)``.

    Slot order is ``x^2, y^2, z^2, xy, yz, zx, x, y, z, 1``; the 2D form keeps
    ``x^2, y^2, xy, x, y, 1``.
    """
    pts = points.T
    one = np.ones_like(pts[0])
    if dim == 2:
        x, y = pts
        return np.stack([x * x, y * y, x * y, x, y, one])
    x, y, z = pts
    return np.stack([x * x, y * y, z * z, x * y, y * z, z * x, x, y, z, one])


class Primitive:
    """Base class. Subclasses define ``family``, ``_field`` and ``_field_grad``."""

    family = None

    def __init__(self, dim, params, crisp=False):
        if dim not in (2, 3):
            raise ParameterError(f"dimension must be 2 or 3, got {dim}")
        params = np.asarray(params)
        params = params.astype(np.result_type(params.dtype, np.float64), copy=True)
        if params.shape != (self.n_params_for(dim),):
            raise ParameterError(
                f"{self.family} in {dim}D takes {self.n_params_for(dim)} parameters, got {params.shape}"
            )
        if not np.all(np.isfinite(params)):
            raise ParameterError(f"{self.family} parameters must be finite")
        self.dim = dim
        self.params = params
        self.crisp = bool(crisp)

    @classmethod
    def n_params_for(cls, dim):
        raise NotImplementedError

    @property
    def n_params(self):
        return self.params.shape[0]

    @property
    def sharpness(self):
        return self.params[-1]

    def with_params(self, params):
        return type(self)(self.dim, params, crisp=self.crisp)

    def field(self, points):
        return self._field(check_points(points, self.dim))

    def occupancy(self, points, crisp=None):
        return self.forward(check_points(points, self.dim), crisp=crisp)[0]

    def forward(self, pts, crisp=None, cache=None):
        """``(occupancy, field)`` for an already validated ``(n, dim)`` batch.

        ``cache`` is a dict shared by the leaves of one tree pass; quadrics
        keep their monomial features there.
        """
        f = self._field(pts, cache)
        z = self.sharpness * f
        if self.crisp if crisp is None else crisp:
            return (z > 0).astype(z.dtype), f
        return sigmoid(z), f

    def param_grad(self, pts, occ, f, adj, cache=None):
        """``sum_n adj[n] * d occ[n] / d params`` from stored forward values."""
        if self.crisp:
            return np.zeros(self.n_params, dtype=f.dtype)
        w = adj * occ * (1.0 - occ)
        out = np.empty(self.n_params, dtype=f.dtype)
        out[:-1] = np.sum(self._field_grad(pts, cache) * (w * self.sharpness), axis=1)
        out[-1] = np.sum(w * f)
        return out

    def occupancy_grad(self, points):
        """Occupancy and its gradient, ``(occ, d_occ/d_params)``.

        The gradient has shape ``(n_params, n_points)``; its last row is the
        sharpness derivative. Crisp primitives have zero gradient.
        """
        pts = check_points(points, self.dim)
        f = self._field(pts, None)
        s = self.sharpness
        if self.crisp:
            occ = (s * f > 0).astype(f.dtype)
            return occ, np.zeros((self.n_params, pts.shape[0]), dtype=f.dtype)
        occ = sigmoid(s * f)
        dsig = occ * (1.0 - occ)
        grad = np.empty((self.n_params, pts.shape[0]), dtype=f.dtype)
        grad[:-1] = self._field_grad(pts, None) * (dsig * s)
        grad[-1] = dsig * f
        return occ, grad

    def named_params(self):
        raise NotImplementedError

    @classmethod
    def from_named(cls, dim, named, crisp=False):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, params={self.params.tolist()!r})"


class QuadricPrimitive(Primitive):
    """Degree-2 polynomial field with ten coefficient slots plus sharpness.

    In 2D the z slots (2, 4, 5, 8) are not trainable and read as zero.
    """

    family = "quadric"

    @classmethod
    def n_params_for(cls, dim):
        return len(QUADRIC_SLOTS[dim]) + 1

    @classmethod
    def from_coefficients(cls, q, sharpness, dim=3, crisp=False):
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (10,):
            raise ParameterError("quadric needs 10 coefficients")
        unused = np.setdiff1d(np.arange(10), QUADRIC_SLOTS[dim])
        if np.any(q[unused] != 0):
            raise ParameterError(f"coefficients {unused.tolist()} must be zero in {dim}D")
        return cls(dim, np.append(q[QUADRIC_SLOTS[dim]], sharpness), crisp=crisp)

    @property
    def coefficients(self):
        q = np.zeros(10, dtype=self.params.dtype)
        q[QUADRIC_SLOTS[self.dim]] = self.params[:-1]
        return q

    def _features(self, pts, cache):
        if cache is None:
            return quadric_features(pts, self.dim)
        if "quadric" not in cache:
            cache["quadric"] = quadric_features(pts, self.dim)
        return cache["quadric"]

    def _field(self, pts, cache=None):
        return self.params[:-1] @ self._features(pts, cache)

    def _field_grad(self, pts, cache=None):
        return self._features(pts, cache)

    def named_params(self):
        return {"q": self.coefficients, "sharpness": self.params[-1]}

    @classmethod
    def from_named(cls, dim, named, crisp=False):
        return cls.from_coefficients(named["q"], named["sharpness"], dim=dim, crisp=crisp)


class SpherePrimitive(Primitive):
    """Ball (disk in 2D) with signed-distance field ``radius - |p - center|``.

    The radius is ``softplus(radius_raw)`` so it stays positive under
    unconstrained updates.
    """

    family = "sphere"

    @classmethod
    def n_params_for(cls, dim):
        return dim + 2

    @classmethod
    def from_geometry(cls, center, radius, sharpness, crisp=False):
        center = np.asarray(center, dtype=np.float64)
        if radius <= 0:
            raise ParameterError("sphere radius must be positive")
        return cls(center.shape[0], np.concatenate([center, [inverse_softplus(radius), sharpness]]), crisp=crisp)

    @property
    def center(self):
        return self.params[: self.dim]

    @property
    def radius(self):
        return softplus(self.params[self.dim])

    def _offsets(self, pts):
        diff = pts - self.center
        dist = np.sqrt(np.sum(diff * diff, axis=1))
        return diff, dist

    def _field(self, pts, cache=None):
        return self.radius - self._offsets(pts)[1]

    def _field_grad(self, pts, cache=None):
        diff, dist = self._offsets(pts)
        safe = np.where(dist > 0, dist, 1.0)
        grad = np.empty((self.dim + 1, pts.shape[0]), dtype=dist.dtype)
        # d(-|p - c|)/dc = (p - c)/|p - c|; zero at the center by convention
        grad[: self.dim] = (diff / safe[:, None]).T
        grad[self.dim] = sigmoid(self.params[self.dim])
        return grad

    def named_params(self):
        return {"center": self.center, "radius_raw": self.params[self.dim], "sharpness": self.params[-1]}

    @classmethod
    def from_named(cls, dim, named, crisp=False):
        center = np.asarray(named["center"], dtype=np.float64)
        if center.shape != (dim,):
            raise ParameterError(f"sphere center must have {dim} coordinates")
        return cls(dim, np.concatenate([center, [named["radius_raw"], named["sharpness"]]]), crisp=crisp)


class PlanePrimitive(Primitive):
    """Half-space with signed-distance field ``offset - n.p / |n|``."""

    family = "plane"

    def __init__(self, dim, params, crisp=False):
        super().__init__(dim, params, crisp=crisp)
        if not np.any(self.params[:dim] != 0):
            raise ParameterError("plane normal must be nonzero")

    @classmethod
    def n_params_for(cls, dim):
        return dim + 2

    @classmethod
    def from_geometry(cls, normal, offset, sharpness, crisp=False):
        normal = np.asarray(normal, dtype=np.float64)
        return cls(normal.shape[0], np.concatenate([normal, [offset, sharpness]]), crisp=crisp)

    @property
    def normal(self):
        return self.params[: self.dim]

    @property
    def offset(self):
        return self.params[self.dim]

    def _field(self, pts, cache=None):
        n = self.normal
        return self.offset - pts @ n / np.sqrt(n @ n)

    def _field_grad(self, pts, cache=None):
        n = self.normal
        norm = np.sqrt(n @ n)
        proj = pts @ n / norm
        grad = np.empty((self.dim + 1, pts.shape[0]), dtype=proj.dtype)
        # d(-n.p/|n|)/dn = -(p - (n.p/|n|) n/|n|)/|n|
        grad[: self.dim] = -(pts - proj[:, None] * (n / norm)).T / norm
        grad[self.dim] = 1.0
        return grad

    def named_params(self):
        return {"normal": self.normal, "offset": self.offset, "sharpness": self.params[-1]}

    @classmethod
    def from_named(cls, dim, named, crisp=False):
        normal = np.asarray(named["normal"], dtype=np.float64)
        if normal.shape != (dim,):
            raise ParameterError(f"plane normal must have {dim} coordinates")
        return cls(dim, np.concatenate([normal, [named["offset"], named["sharpness"]]]), crisp=crisp)


FAMILIES = {cls.family: cls for cls in (QuadricPrimitive, SpherePrimitive, PlanePrimitive)}


def quadric_field(prim, p):
    """Raw polynomial value of a quadric at one point or a batch of points."""
    out = prim.field(p)
    return out[0] if np.ndim(p) == 1 else out


def primitive_occupancy(prim, p):
    out = prim.occupancy(p)
    return out[0] if np.ndim(p) == 1 else out


def primitive_grad(prim, p):
    """Gradients of occupancy: ``(d_occ/d_shape_params, d_occ/d_sharpness)``."""
    _, grad = prim.occupancy_grad(p)
    if np.ndim(p) == 1:
        return grad[:-1, 0], grad[-1, 0]
    return grad[:-1], grad[-1]


def init_primitive(rng, family, dim):
    """Draw every trainable scalar uniformly from [-0.5, 0.5]."""
    if family not in FAMILIES:
        raise ParameterError(f"unknown primitive family {family!r}")
    cls = FAMILIES[family]
    while True:
        params = rng.uniform(-0.5, 0.5, size=cls.n_params_for(dim))
        if family != "plane" or np.any(params[:dim] != 0):
            return cls(dim, params)
