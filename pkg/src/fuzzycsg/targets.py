"""Ground-truth targets: analytic CSG trees, sampled datasets, bundled shapes."""
import json
import os

import numpy as np
from scipy.spatial import cKDTree

from . import fuzzy
from .errors import ParameterError, ParseError, SamplingError, SchemaError
from .formats import read_dataset
from .optimizer import TargetOracle
from .primitives import PlanePrimitive, QuadricPrimitive, SpherePrimitive
from .tree import BooleanNode, CsgTree, Leaf, one_hot_control, tree_from_dict

DEFAULT_BBOX_2D = ([-1.0, -1.0], [1.0, 1.0])
TARGET_SPEC_VERSION = 1


def default_bbox(dim):
    return (np.full(dim, -1.0), np.full(dim, 1.0))


def _soft_copy(tree):
    soft = tree.copy()
    for n in soft.postorder():
        if isinstance(n, Leaf):
            n.primitive.crisp = False
    return soft


def primitive_surface_points(prim, rng, count, bbox):
    """Points on the zero set of a sphere or plane inside ``bbox``."""
    dim = prim.dim
    if isinstance(prim, SpherePrimitive):
        dirs = rng.normal(size=(count, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return prim.center + prim.radius * dirs
    if isinstance(prim, PlanePrimitive):
        lo, hi = bbox
        pts = rng.uniform(lo, hi, size=(count, dim))
        unit = prim.normal / np.linalg.norm(prim.normal)
        return pts + prim.field(pts)[:, None] * unit
    raise ParameterError(f"no analytic surface sampler for {prim.family}")


def tree_surface_sampler(tree, bbox, band=0.25, budget_factor=100):
    """Sampler for trees whose leaves are all spheres or planes.

    Draws points on leaf surfaces and keeps those where the soft tree
    occupancy is within ``band`` of 0.5, i.e. on the composite boundary.
    Returns ``None`` when some leaf has no analytic surface.
    """
    leaves = [n.primitive for n in tree.postorder() if isinstance(n, Leaf)]
    if not leaves or any(not isinstance(p, (SpherePrimitive, PlanePrimitive)) for p in leaves):
        return None
    soft = _soft_copy(tree)
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bbox)

    def sample(rng, count):
        kept = []
        n_kept = drawn = 0
        budget = budget_factor * max(count, 1)
        while n_kept < count:
            if drawn >= budget:
                raise SamplingError(f"surface sampler kept {n_kept}/{count} points after {drawn} candidates")
            size = max(2 * count, 64)
            which = rng.integers(0, len(leaves), size=size)
            cand = np.empty((size, tree.dim))
            for i, prim in enumerate(leaves):
                mask = which == i
                if mask.any():
                    cand[mask] = primitive_surface_points(prim, rng, int(mask.sum()), (lo, hi))
            drawn += size
            inside = np.all((cand >= lo) & (cand <= hi), axis=1)
            cand = cand[inside]
            cand = cand[np.abs(soft.eval(cand) - 0.5) < band]
            kept.append(cand)
            n_kept += cand.shape[0]
        return np.concatenate(kept)[:count]

    return sample


def tree_target(tree, bbox=None, name="tree"):
    """Oracle backed by an analytic tree.

    Leaves flagged ``crisp`` contribute binary occupancy; the near-surface band
    is judged on the soft version of the tree so crisp targets still have one.
    """
    bbox = default_bbox(tree.dim) if bbox is None else bbox
    soft = _soft_copy(tree)
    return TargetOracle(
        occupancy=tree.eval,
        bbox=bbox,
        surface_sampler=tree_surface_sampler(tree, bbox),
        band_occupancy=soft.eval,
        name=name,
    )


def dataset_target(points, occupancy, bbox=None, name="dataset"):
    """Oracle backed by point samples.

    Queries return the occupancy of the nearest sample. Training draws come
    from the samples themselves.
    """
    points = np.asarray(points, dtype=np.float64)
    occupancy = fuzzy.check_membership(occupancy, "occupancy")
    if points.ndim != 2 or points.shape[0] != occupancy.shape[0] or points.shape[0] == 0:
        raise ParameterError("dataset needs one occupancy per point and at least one row")
    if bbox is None:
        bbox = default_bbox(points.shape[1])
    index = cKDTree(points)

    def query(pts):
        _, idx = index.query(pts)
        return occupancy[idx]

    return TargetOracle(occupancy=query, bbox=bbox, pool=points, name=name)


# -- bundled shapes ----------------------------------------------------------


def _bool(op, left, right):
    return BooleanNode(one_hot_control(op), left, right)


def ellipse(center, axes, sharpness, angle=0.0, crisp=False):
    """Quadric that is positive inside an ellipse, equal to 1 at its center."""
    cx, cy = center
    a, b = axes
    ca, sa = np.cos(angle), np.sin(angle)
    # 1 - (R^T (p - c))^T diag(1/a^2, 1/b^2) (R^T (p - c))
    m = np.array([[ca, -sa], [sa, ca]]) @ np.diag([1 / a ** 2, 1 / b ** 2]) @ np.array([[ca, sa], [-sa, ca]])
    c = np.array([cx, cy])
    q = np.zeros(10)
    q[0] = -m[0, 0]
    q[1] = -m[1, 1]
    q[3] = -2 * m[0, 1]
    lin = 2 * m @ c
    q[6], q[7] = lin
    q[9] = 1 - c @ m @ c
    return QuadricPrimitive.from_coefficients(q, sharpness, dim=2, crisp=crisp)


def halfplane_quadric(normal, offset, sharpness, crisp=False):
    """Linear quadric ``offset - n.p`` (unit ``n``), positive on the inner side."""
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    q = np.zeros(10)
    q[6], q[7] = -n
    q[9] = offset
    return QuadricPrimitive.from_coefficients(q, sharpness, dim=2, crisp=crisp)


def circle(center, radius, sharpness, crisp=False):
    return SpherePrimitive.from_geometry(center, radius, sharpness, crisp=crisp)


def two_circles(sharpness=20.0):
    """Soft union of two disjoint disks."""
    root = _bool(fuzzy.UNION, Leaf(circle([-0.45, 0.0], 0.3, sharpness)), Leaf(circle([0.4, 0.05], 0.35, sharpness)))
    return CsgTree(root, 2)


def four_primitive(sharpness=50.0):
    """Crisp ``(A u B) - (C n H)``: two disks minus the lower half of a third."""
    a = Leaf(circle([-0.3, 0.0], 0.45, sharpness, crisp=True))
    b = Leaf(circle([0.35, 0.1], 0.4, sharpness, crisp=True))
    c = Leaf(circle([0.0, 0.0], 0.25, sharpness, crisp=True))
    h = Leaf(PlanePrimitive.from_geometry([0.0, 1.0], 0.0, sharpness, crisp=True))
    root = _bool(fuzzy.DIFFERENCE, _bool(fuzzy.UNION, a, b), _bool(fuzzy.INTERSECTION, c, h))
    return CsgTree(root, 2)


def soft_blob():
    """Union of four disks, each with its own softness."""
    leaves = [
        Leaf(circle([-0.35, -0.1], 0.35, 6.0)),
        Leaf(circle([0.2, 0.25], 0.3, 12.0)),
        Leaf(circle([0.3, -0.3], 0.25, 4.0)),
        Leaf(circle([-0.1, 0.45], 0.2, 20.0)),
    ]
    root = _bool(fuzzy.UNION, _bool(fuzzy.UNION, leaves[0], leaves[1]), _bool(fuzzy.UNION, leaves[2], leaves[3]))
    return CsgTree(root, 2)


def eight_quadrics(sharpness=10.0):
    """Crisp depth-3 tree over eight quadrics: a slotted body with a tab."""
    e1 = Leaf(ellipse([-0.35, 0.1], [0.45, 0.3], sharpness, angle=0.3, crisp=True))
    e2 = Leaf(ellipse([0.3, 0.15], [0.35, 0.35], sharpness, crisp=True))
    e3 = Leaf(ellipse([0.3, 0.15], [0.15, 0.15], sharpness, crisp=True))
    h4 = Leaf(halfplane_quadric([0.0, -1.0], -0.05, sharpness, crisp=True))
    e5 = Leaf(ellipse([0.0, -0.55], [0.6, 0.2], sharpness, crisp=True))
    e6 = Leaf(ellipse([-0.55, -0.45], [0.2, 0.3], sharpness, crisp=True))
    h7 = Leaf(halfplane_quadric([1.0, 0.0], 0.45, sharpness, crisp=True))
    h8 = Leaf(halfplane_quadric([0.0, 1.0], -0.3, sharpness, crisp=True))
    body = _bool(fuzzy.DIFFERENCE, _bool(fuzzy.UNION, e1, e2), _bool(fuzzy.INTERSECTION, e3, h4))
    tab = _bool(fuzzy.INTERSECTION, _bool(fuzzy.UNION, e5, e6), _bool(fuzzy.INTERSECTION, h7, h8))
    return CsgTree(_bool(fuzzy.UNION, body, tab), 2)


BUNDLED = {
    "two-circles": two_circles,
    "four-primitive": four_primitive,
    "soft-blob": soft_blob,
    "eight-quadrics": eight_quadrics,
}


def bundled_tree(name):
    if name not in BUNDLED:
        raise ParameterError(f"unknown bundled target {name!r}; choose from {sorted(BUNDLED)}")
    return BUNDLED[name]()


def bundled_target(name):
    return tree_target(bundled_tree(name), name=name)


def load_target(spec, base_dir="."):
    """Build a :class:`TargetOracle` from a target spec.

    ``spec`` is a bundled target name, a path to a tree document, a path to a
    dataset CSV, a path to a target spec JSON, or an already-parsed spec dict::

        {"version": 1, "type": "bundled", "name": "two-circles"}
        {"version": 1, "type": "tree", "path": "gt.json", "crisp": true, "bbox": [[-1, -1], [1, 1]]}
        {"version": 1, "type": "dataset", "path": "samples.csv"}

    ``crisp`` (optional) overrides the per-primitive flags of a tree target.
    """
    if isinstance(spec, str):
        if spec in BUNDLED:
            return bundled_target(spec)
        if not os.path.exists(spec):
            raise ParseError(f"target {spec!r} is neither a bundled name nor an existing file", spec)
        base_dir = os.path.dirname(os.path.abspath(spec))
        if spec.endswith(".csv"):
            points, occ = read_dataset(spec)
            return dataset_target(points, occ, name=os.path.basename(spec))
        with open(spec, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}", spec) from None
        if isinstance(doc, dict) and doc.get("format") == "fuzzycsg-tree":
            return tree_target(tree_from_dict(doc), name=os.path.basename(spec))
        spec = doc
    if not isinstance(spec, dict):
        raise ParseError("target spec must be an object", "$")
    if spec.get("version", TARGET_SPEC_VERSION) != TARGET_SPEC_VERSION:
        raise SchemaError(f"unsupported target spec version {spec.get('version')!r}", "$.version")
    kind = spec.get("type")
    bbox = spec.get("bbox")
    if bbox is not None:
        try:
            bbox = (np.asarray(bbox[0], dtype=np.float64), np.asarray(bbox[1], dtype=np.float64))
        except (TypeError, ValueError, IndexError):
            raise SchemaError("bbox must be [[lo...], [hi...]]", "$.bbox") from None
    if kind == "bundled":
        tree = bundled_tree(spec.get("name"))
        return tree_target(tree, bbox=bbox, name=spec["name"])
    if kind == "tree":
        if "tree" in spec:
            tree = tree_from_dict(spec["tree"])
        elif "path" in spec:
            with open(os.path.join(base_dir, spec["path"]), encoding="utf-8") as fh:
                tree = tree_from_dict(json.load(fh))
        else:
            raise SchemaError("tree target needs 'tree' or 'path'", "$")
        if "crisp" in spec:
            for n in tree.postorder():
                if isinstance(n, Leaf):
                    n.primitive.crisp = bool(spec["crisp"])
        return tree_target(tree, bbox=bbox, name=spec.get("name", "tree"))
    if kind == "dataset":
        if "path" not in spec:
            raise SchemaError("dataset target needs 'path'", "$")
        points, occ = read_dataset(os.path.join(base_dir, spec["path"]))
        return dataset_target(points, occ, bbox=bbox, name=spec.get("name", spec["path"]))
    raise SchemaError(f"unknown target type {kind!r}", "$.type")
