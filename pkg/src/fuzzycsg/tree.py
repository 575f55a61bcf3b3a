"""CSG trees over fuzzy boolean nodes and primitive leaves.

A boolean node stores four raw controls ``c_raw``. Under the default
``"unified"`` mode they map to barycentric weights through
``softmax(sin(omega * c_raw) * temperature)`` and combine the children with the
unified operator. The other modes exist for ablations:

``fixed-product``  one product-logic operation per node, frozen
``fixed-godel``    one min/max operation per node, frozen
``bilinear``       ``u, v = (1 + sin(omega * c_raw[:2])) / 2`` drive the bilinear blend

Node ids are assigned in post-order when a tree is built and never change
afterwards, including across pruning and serialization.
"""
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import fuzzy
from .errors import NumericalError, ParameterError, ParseError, ResourceError, SchemaError, UnsupportedVersionError
from .primitives import FAMILIES, check_points, init_primitive, quadric_features, sigmoid

MODES = ("unified", "fixed-product", "fixed-godel", "bilinear")
FIXED_MODES = ("fixed-product", "fixed-godel")
DEFAULT_OMEGA = 10.0
DEFAULT_TEMPERATURE = 1e3
FORMAT_VERSION = 1
MAX_NODES = 2 ** 22


@dataclass
class BooleanControl:
    c_raw: np.ndarray
    omega: float = DEFAULT_OMEGA
    temperature: float = DEFAULT_TEMPERATURE

    def __post_init__(self):
        self.c_raw = np.asarray(self.c_raw, dtype=np.float64)
        if self.c_raw.shape != (4,):
            raise ParameterError("c_raw needs 4 entries")
        if not (self.omega > 0 and self.temperature > 0):
            raise ParameterError("omega and temperature must be positive")


def softmax_sin(c_raw, omega, temperature):
    """``softmax(sin(omega * c_raw) * temperature)`` over the last axis, max-shifted."""
    z = np.sin(omega * c_raw) * temperature
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def control_to_barycentric(ctrl):
    """Map a :class:`BooleanControl` to validated :class:`~fuzzycsg.fuzzy.BarycentricWeights`."""
    if not np.all(np.isfinite(ctrl.c_raw)):
        raise ParameterError("c_raw must be finite")
    return fuzzy.BarycentricWeights(*softmax_sin(ctrl.c_raw, ctrl.omega, ctrl.temperature))


def sin_to_unit(c_raw, omega):
    return 0.5 * (1.0 + np.sin(omega * c_raw))


class Node:
    id = None

    def is_leaf(self):
        return True


class Leaf(Node):
    __slots__ = ("id", "primitive")

    def __init__(self, primitive, id=None):
        self.primitive = primitive
        self.id = id

    def __repr__(self):
        return f"Leaf(id={self.id}, {self.primitive.family})"


class Constant(Node):
    """Full (1) or empty (0) occupancy left behind by pruning."""

    __slots__ = ("id", "value")

    def __init__(self, value, id=None):
        self.value = float(value)
        self.id = id

    def __repr__(self):
        return f"Constant(id={self.id}, {self.value})"


class BooleanNode(Node):
    __slots__ = ("id", "c_raw", "left", "right", "op")

    def __init__(self, c_raw, left, right, op=None, id=None):
        c_raw = np.asarray(c_raw)
        self.c_raw = c_raw.astype(np.result_type(c_raw.dtype, np.float64), copy=True)
        if self.c_raw.shape != (4,):
            raise ParameterError("c_raw needs 4 entries")
        self.left = left
        self.right = right
        self.op = op
        self.id = id

    def is_leaf(self):
        return False

    def __repr__(self):
        return f"BooleanNode(id={self.id}, left={self.left.id}, right={self.right.id})"


def one_hot_control(op, omega=DEFAULT_OMEGA):
    """Raw controls whose softmax weights are numerically one-hot on ``op``."""
    c = np.full(4, -np.pi / (2 * omega))
    c[op] = np.pi / (2 * omega)
    return c


def _postorder(root):
    out = []
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if node.is_leaf() or expanded:
            out.append(node)
        else:
            stack.append((node, True))
            stack.append((node.right, False))
            stack.append((node.left, False))
    return out


class LevelPlan(NamedTuple):
    """Gather indices for evaluating a full tree one level at a time.

    ``leaf_idx`` is ``(n_leaves, n_leaf_params)``, leaves left to right.
    ``levels`` runs bottom-up; each entry holds the boolean nodes of that
    level, their control indices (``None`` in fixed modes) and their ops.
    """

    leaf_idx: np.ndarray
    levels: list


class LevelForward(NamedTuple):
    output: np.ndarray
    leaves: np.ndarray
    fields: np.ndarray
    sharpness: np.ndarray
    features: np.ndarray
    stack: list


class CsgTree:
    """Binary CSG tree with a fixed dimension and a shared ``omega``/``temperature``."""

    def __init__(self, root, dim, omega=DEFAULT_OMEGA, temperature=DEFAULT_TEMPERATURE, mode="unified"):
        if dim not in (2, 3):
            raise ParameterError(f"dimension must be 2 or 3, got {dim}")
        if not (omega > 0 and temperature > 0):
            raise ParameterError("omega and temperature must be positive")
        if mode not in MODES:
            raise ParameterError(f"unknown boolean mode {mode!r}")
        self.root = root
        self.dim = dim
        self.omega = float(omega)
        self.temperature = float(temperature)
        self.mode = mode
        self._order = None
        self._derived = {}
        nodes = self.postorder()
        if any(n.id is None for n in nodes):
            used = {n.id for n in nodes if n.id is not None}
            next_id = max(used, default=-1) + 1
            for n in nodes:
                if n.id is None:
                    n.id = next_id
                    next_id += 1
        ids = [n.id for n in nodes]
        if len(set(ids)) != len(ids):
            raise ParameterError("node ids must be unique")
        for n in nodes:
            if isinstance(n, Leaf) and n.primitive.dim != dim:
                raise ParameterError(f"leaf {n.id} has dimension {n.primitive.dim}, tree has {dim}")
            if isinstance(n, BooleanNode) and mode in FIXED_MODES and n.op is None:
                n.op = int(np.argmax(self.weights(n)))

    def postorder(self):
        """Nodes in post-order. Cached; call :meth:`invalidate` after editing links."""
        if self._order is None:
            self._order = _postorder(self.root)
        return self._order

    def invalidate(self):
        self._order = None
        self._derived = {}

    def node(self, node_id):
        for n in self.postorder():
            if n.id == node_id:
                return n
        raise ParameterError(f"no node with id {node_id}")

    def parent_map(self):
        parents = {}
        for n in self.postorder():
            if isinstance(n, BooleanNode):
                parents[n.left.id] = n
                parents[n.right.id] = n
        return parents

    def height(self):
        depth = {}
        for n in self.postorder():
            depth[n.id] = 0 if n.is_leaf() else 1 + max(depth[n.left.id], depth[n.right.id])
        return depth[self.root.id]

    # -- boolean semantics ------------------------------------------------

    def weights(self, node):
        """Barycentric weights of a boolean node under the tree's mode."""
        if self.mode in FIXED_MODES and node.op is not None:
            w = np.zeros(4, dtype=node.c_raw.dtype)
            w[node.op] = 1.0
            return w
        if self.mode == "bilinear":
            u, v = sin_to_unit(node.c_raw[:2], self.omega)
            return fuzzy.bilinear_to_barycentric(u, v)
        return softmax_sin(node.c_raw, self.omega, self.temperature)

    def apply(self, node, x, y):
        """Output of boolean ``node`` for child occupancies ``x`` and ``y``."""
        if self.mode == "fixed-godel":
            return fuzzy.godel_boolean(node.op, x, y)
        a, b, k = fuzzy.blend_coefficients(self.weights(node))
        return a * x + b * y + k * x * y

    def with_mode(self, mode):
        """Copy of this tree under another boolean mode.

        Entering a fixed mode freezes each node at the operation with the
        largest unified weight.
        """
        tree = self.copy()
        for n in tree.postorder():
            if isinstance(n, BooleanNode):
                n.op = int(np.argmax(softmax_sin(n.c_raw, self.omega, self.temperature))) if mode in FIXED_MODES else None
        tree.mode = mode
        return tree

    # -- parameters -------------------------------------------------------

    def trainable_controls(self):
        return self.mode not in FIXED_MODES

    def parameter_layout(self):
        """Map node id to its slice of the flat parameter vector, in post-order."""
        layout = {}
        offset = 0
        for n in self.postorder():
            if isinstance(n, BooleanNode):
                if not self.trainable_controls():
                    continue
                size = 4
            elif isinstance(n, Leaf):
                size = n.primitive.n_params
            else:
                continue
            layout[n.id] = slice(offset, offset + size)
            offset += size
        return layout

    def n_params(self):
        layout = self.parameter_layout()
        return max((s.stop for s in layout.values()), default=0)

    def get_params(self):
        parts = []
        for n in self.postorder():
            if isinstance(n, BooleanNode) and self.trainable_controls():
                parts.append(n.c_raw)
            elif isinstance(n, Leaf):
                parts.append(n.primitive.params)
        if not parts:
            return np.zeros(0)
        return np.concatenate(parts)

    def set_params(self, vector):
        vector = np.asarray(vector)
        layout = self.parameter_layout()
        size = max((s.stop for s in layout.values()), default=0)
        if vector.shape != (size,):
            raise ParameterError(f"expected {size} parameters, got {vector.shape}")
        for n in self.postorder():
            if n.id not in layout:
                continue
            chunk = vector[layout[n.id]]
            if isinstance(n, BooleanNode):
                n.c_raw = np.array(chunk)
            else:
                n.primitive = n.primitive.with_params(chunk)

    def with_params(self, vector):
        tree = self.copy()
        tree.set_params(vector)
        return tree

    def copy(self):
        def clone(n):
            if isinstance(n, Leaf):
                return Leaf(n.primitive.with_params(n.primitive.params), id=n.id)
            if isinstance(n, Constant):
                return Constant(n.value, id=n.id)
            return BooleanNode(n.c_raw, clone(n.left), clone(n.right), op=n.op, id=n.id)

        return CsgTree(clone(self.root), self.dim, self.omega, self.temperature, self.mode)

    # -- evaluation -------------------------------------------------------

    def level_plan(self):
        """A :class:`LevelPlan` when every leaf is a soft quadric at the same depth, else ``None``."""
        if "level_plan" in self._derived:
            return self._derived["level_plan"]
        rows = [[self.root]]
        while all(isinstance(n, BooleanNode) for n in rows[-1]):
            rows.append([c for n in rows[-1] for c in (n.left, n.right)])
        plan = None
        leaves = rows[-1]
        if len(rows) > 1 and all(
            isinstance(n, Leaf) and n.primitive.family == "quadric" and not n.primitive.crisp for n in leaves
        ):
            layout = self.parameter_layout()

            def index(nodes):
                return np.array([np.arange(layout[n.id].start, layout[n.id].stop) for n in nodes])

            levels = []
            for row in rows[-2::-1]:
                ctrl = index(row) if self.trainable_controls() else None
                ops = np.array([-1 if n.op is None else n.op for n in row])
                levels.append((row, ctrl, ops))
            plan = LevelPlan(index(leaves), levels)
        self._derived["level_plan"] = plan
        return plan

    def _level_weights(self, ctrl, ops):
        if self.mode == "unified":
            return softmax_sin(ctrl, self.omega, self.temperature)
        if self.mode == "bilinear":
            u, v = sin_to_unit(ctrl[:, :2], self.omega).T
            return fuzzy.bilinear_to_barycentric(u, v)
        return np.eye(4)[ops]

    def forward_levels(self, plan, theta, pts):
        """Evaluate a full tree level by level from the flat parameter vector ``theta``.

        All leaves share one feature matrix and every level is a single
        array operation. Returns a :class:`LevelForward` holding what the
        backward pass needs.
        """
        feats = quadric_features(pts, self.dim)
        leaf = theta[plan.leaf_idx]
        sharp = leaf[:, -1:]
        fields = leaf[:, :-1] @ feats
        occ = sigmoid(sharp * fields)
        stack = []
        cur = occ
        for _, ctrl_idx, ops in plan.levels:
            x, y = cur[0::2], cur[1::2]
            if self.mode == "fixed-godel":
                cur = np.stack([fuzzy.godel_boolean(op, x[i], y[i]) for i, op in enumerate(ops)])
                stack.append((x, y, None, None))
                continue
            ctrl = None if ctrl_idx is None else theta[ctrl_idx]
            w = self._level_weights(ctrl, ops)
            a, b, k = (coef[:, None] for coef in fuzzy.blend_coefficients(w))
            stack.append((x, y, w, ctrl))
            cur = a * x + b * y + k * x * y
        return LevelForward(cur[0], occ, fields, sharp, feats, stack)

    def leaf_occupancy(self, node, pts, crisp=False, cache=None):
        if isinstance(node, Constant):
            return np.full(pts.shape[0], node.value, dtype=np.result_type(pts.dtype, np.float64))
        return node.primitive.forward(pts, crisp=True if crisp else None, cache=cache)[0]

    def eval(self, points, crisp=False):
        """Occupancy of the tree at a batch of points.

        Full trees of soft quadrics go level by level; anything else by
        recursive descent. ``crisp=True`` binarizes every primitive at
        occupancy 0.5.
        """
        pts = check_points(points, self.dim)
        plan = None if crisp else self.level_plan()
        if plan is not None:
            with np.errstate(all="ignore"):
                out = self.forward_levels(plan, self.get_params(), pts).output
            if np.all(np.isfinite(out)):
                return out
            # fall through so the error names the offending node
        cache = {}

        def rec(node):
            if node.is_leaf():
                return self.leaf_occupancy(node, pts, crisp, cache)
            return self.apply(node, rec(node.left), rec(node.right))

        out = rec(self.root)
        if not np.all(np.isfinite(out)):
            raise NumericalError("non-finite occupancy", node_id=self.root.id)
        return out

    def predict(self, points):
        return self.eval(points)

    def eval_stack(self, points, crisp=False, return_stats=False):
        """Post-order evaluation with an explicit stack of intermediate results.

        Reads every node exactly once, so it handles irregular pruned trees in
        linear time. ``points`` may be one point or a batch. With
        ``return_stats`` the result is ``(occupancy, visits, max_stack_depth)``.
        """
        single = np.ndim(points) == 1
        pts = check_points(points, self.dim)
        cache = {}
        stack = []
        visits = 0
        max_depth = 0
        for node in self.postorder():
            visits += 1
            if node.is_leaf():
                stack.append(self.leaf_occupancy(node, pts, crisp, cache))
            else:
                y = stack.pop()
                x = stack.pop()
                stack.append(self.apply(node, x, y))
            max_depth = max(max_depth, len(stack))
        out = stack.pop()
        if single:
            out = out[0]
        if return_stats:
            return out, visits, max_depth
        return out

    def to_expression(self):
        """Readable nested expression, e.g. ``union(quadric#0, sphere#1)``."""

        def rec(node):
            if isinstance(node, Leaf):
                return f"{node.primitive.family}#{node.id}"
            if isinstance(node, Constant):
                return f"const({node.value:g})"
            w = self.weights(node)
            op = int(np.argmax(w))
            name = fuzzy.OPERATION_NAMES[op]
            if self.mode not in FIXED_MODES and w[op] < 1 - 1e-6:
                name = f"{name}~{float(w[op]):.2f}"
            return f"{name}({rec(node.left)}, {rec(node.right)})"

        return rec(self.root)


def node_count(tree):
    """``(primitives, booleans)``; pruning constants count as neither."""
    prims = booleans = 0
    for n in tree.postorder():
        if isinstance(n, Leaf):
            prims += 1
        elif isinstance(n, BooleanNode):
            booleans += 1
    return prims, booleans


def build_full_tree(depth, family, dim, rng, omega=DEFAULT_OMEGA, temperature=DEFAULT_TEMPERATURE, mode="unified"):
    """Full binary tree with ``2**depth`` random leaves.

    Parameters are drawn uniformly from [-0.5, 0.5] in post-order, so a seeded
    generator reproduces the same tree.
    """
    if int(depth) != depth or depth < 0:
        raise ParameterError("depth must be a nonnegative integer")
    if 2 ** (depth + 1) - 1 > MAX_NODES:
        raise ResourceError(f"depth {depth} exceeds the node budget of {MAX_NODES}")
    counter = iter(range(2 ** (depth + 1)))

    def rec(level):
        if level == 0:
            return Leaf(init_primitive(rng, family, dim), id=next(counter))
        left = rec(level - 1)
        right = rec(level - 1)
        c_raw = rng.uniform(-0.5, 0.5, size=4)
        return BooleanNode(c_raw, left, right, id=next(counter))

    return CsgTree(rec(depth), dim, omega, temperature, mode)


# -- serialization ----------------------------------------------------------


def _num(x):
    # json writes floats with repr, the shortest string that reads back exactly
    return float(x)


def _parse_num(value, path):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", path)
    out = float(value)
    if not np.isfinite(out):
        raise ParseError(f"non-finite number {value!r}", path)
    return out


def _encode_params(named):
    out = {}
    for key, value in named.items():
        value = np.asarray(value)
        out[key] = [_num(v) for v in value] if value.ndim else _num(value)
    return out


def tree_to_dict(tree):
    nodes = []
    for n in tree.postorder():
        if isinstance(n, Leaf):
            entry = {"id": n.id, "kind": "primitive", "family": n.primitive.family,
                     "params": _encode_params(n.primitive.named_params())}
            if n.primitive.crisp:
                entry["crisp"] = True
        elif isinstance(n, Constant):
            entry = {"id": n.id, "kind": "constant", "value": _num(n.value)}
        else:
            entry = {"id": n.id, "kind": "boolean", "c_raw": [_num(v) for v in n.c_raw],
                     "children": [n.left.id, n.right.id]}
            if n.op is not None:
                entry["op"] = fuzzy.OPERATION_NAMES[n.op]
        nodes.append(entry)
    return {
        "format": "fuzzycsg-tree",
        "version": FORMAT_VERSION,
        "dimension": tree.dim,
        "mode": tree.mode,
        "omega": _num(tree.omega),
        "temperature": _num(tree.temperature),
        "root": tree.root.id,
        "nodes": nodes,
    }


def serialize(tree):
    """Versioned JSON document; every number reads back bit for bit."""
    return json.dumps(tree_to_dict(tree), indent=1)


def _decode_params(raw, path):
    if not isinstance(raw, dict):
        raise ParseError("params must be an object", path)
    out = {}
    for key, value in raw.items():
        if isinstance(value, list):
            out[key] = np.array([_parse_num(v, f"{path}.{key}[{i}]") for i, v in enumerate(value)])
        else:
            out[key] = _parse_num(value, f"{path}.{key}")
    return out


def tree_from_dict(doc):
    if not isinstance(doc, dict):
        raise ParseError("tree document must be an object", "$")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported tree format version {version!r} (expected {FORMAT_VERSION})", "$.version")
    for key in ("dimension", "root", "nodes"):
        if key not in doc:
            raise ParseError(f"missing field {key!r}", "$")
    dim = doc["dimension"]
    if dim not in (2, 3):
        raise SchemaError(f"dimension must be 2 or 3, got {dim!r}", "$.dimension")
    mode = doc.get("mode", "unified")
    if mode not in MODES:
        raise SchemaError(f"unknown mode {mode!r}", "$.mode")
    omega = _parse_num(doc.get("omega", DEFAULT_OMEGA), "$.omega")
    temperature = _parse_num(doc.get("temperature", DEFAULT_TEMPERATURE), "$.temperature")

    entries = {}
    for i, entry in enumerate(doc["nodes"]):
        path = f"$.nodes[{i}]"
        if not isinstance(entry, dict) or "id" not in entry or "kind" not in entry:
            raise ParseError("node needs 'id' and 'kind'", path)
        if entry["id"] in entries:
            raise ParseError(f"duplicate node id {entry['id']!r}", path)
        entries[entry["id"]] = (entry, path)

    built = {}
    used = set()

    def build(node_id, path):
        if node_id not in entries:
            raise ParseError(f"reference to missing node id {node_id!r}", path)
        if node_id in used:
            raise ParseError(f"node id {node_id!r} used more than once", path)
        used.add(node_id)
        entry, path = entries[node_id]
        kind = entry["kind"]
        if kind == "primitive":
            family = entry.get("family")
            if family not in FAMILIES:
                raise SchemaError(f"unknown primitive family {family!r}", f"{path}.family")
            named = _decode_params(entry.get("params"), f"{path}.params")
            try:
                prim = FAMILIES[family].from_named(dim, named, crisp=bool(entry.get("crisp", False)))
            except (KeyError, ParameterError) as exc:
                raise SchemaError(f"bad {family} parameters: {exc}", f"{path}.params") from None
            return Leaf(prim, id=node_id)
        if kind == "constant":
            value = _parse_num(entry.get("value"), f"{path}.value")
            if not 0.0 <= value <= 1.0:
                raise SchemaError("constant must lie in [0, 1]", f"{path}.value")
            return Constant(value, id=node_id)
        if kind == "boolean":
            children = entry.get("children")
            if not isinstance(children, list) or len(children) != 2:
                raise ParseError(f"boolean node {node_id} must have exactly two children", path)
            c_raw = entry.get("c_raw")
            if not isinstance(c_raw, list) or len(c_raw) != 4:
                raise ParseError(f"boolean node {node_id} needs 4 c_raw values", path)
            c_raw = [_parse_num(v, f"{path}.c_raw[{j}]") for j, v in enumerate(c_raw)]
            op = entry.get("op")
            if op is not None:
                if op not in fuzzy.OPERATION_NAMES:
                    raise SchemaError(f"unknown operation {op!r}", f"{path}.op")
                op = fuzzy.OPERATION_NAMES.index(op)
            for j, child in enumerate(children):
                if child not in entries:
                    raise ParseError(f"boolean node {node_id} references missing child {child!r}", f"{path}.children[{j}]")
            left = build(children[0], f"{path}.children[0]")
            right = build(children[1], f"{path}.children[1]")
            return BooleanNode(c_raw, left, right, op=op, id=node_id)
        raise SchemaError(f"unknown node kind {kind!r}", f"{path}.kind")

    root = build(doc["root"], "$.root")
    if len(used) != len(entries):
        raise ParseError(f"unreachable nodes {sorted(set(entries) - used)}", "$.nodes")
    try:
        return CsgTree(root, dim, omega, temperature, mode)
    except ParameterError as exc:
        raise SchemaError(str(exc), "$") from None


def deserialize(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}", "$") from None
    return tree_from_dict(doc)


def save_tree(tree, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(tree))
        fh.write("\n")


def load_tree(path):
    with open(path, encoding="utf-8") as fh:
        return deserialize(fh.read())
