"""Post-fit simplification of CSG trees.

A proper subtree is W-redundant when swapping its output for constant 1
leaves the root occupancy within a mean-squared tolerance, and empty-redundant
when constant 0 does. Redundant subtrees become :class:`~fuzzycsg.tree.Constant`
leaves; a boolean node whose constant operand turns it into the identity (or a
constant) is then folded away.
"""
import enum
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .errors import ParameterError
from .optimizer import SamplerConfig, sample_points
from .primitives import check_points
from .tree import Constant, CsgTree, node_count

logger = logging.getLogger(__name__)

DEFAULT_EVAL_POINTS = 200_000
FOLD_ATOL = 1e-12
_PROBES = np.linspace(0.0, 1.0, 5)


class RedundancyVerdict(enum.Enum):
    W_REDUNDANT = "W-redundant"
    EMPTY_REDUNDANT = "empty-redundant"
    NOT_REDUNDANT = "not-redundant"


@dataclass
class PruneConfig:
    threshold: float = 1e-3
    eval_points: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.threshold > 0:
            raise ParameterError("prune threshold must be positive")
        if self.eval_points is not None:
            self.eval_points = np.asarray(self.eval_points, dtype=np.float64)
            if self.eval_points.ndim != 2 or self.eval_points.shape[0] == 0:
                raise ParameterError("eval_points must be a nonempty (n, d) array")


@dataclass
class PruneReport:
    deleted: List[Tuple[int, RedundancyVerdict]] = field(default_factory=list)
    nodes_before: int = 0
    nodes_after: int = 0
    passes: int = 0
    deviation: float = 0.0
    deviation_bound: float = 0.0
    mse_before: Optional[float] = None
    mse_after: Optional[float] = None

    def to_text(self):
        lines = [
            f"nodes_before: {self.nodes_before}",
            f"nodes_after: {self.nodes_after}",
            f"passes: {self.passes}",
            f"deletions: {len(self.deleted)}",
        ]
        lines += [f"  node {node_id}: {verdict.value}" for node_id, verdict in self.deleted]
        lines.append(f"deviation_from_original: {self.deviation:.6g}")
        lines.append(f"deviation_bound: {self.deviation_bound:.6g}")
        if self.mse_before is not None:
            lines.append(f"mse_before: {self.mse_before:.6g}")
            lines.append(f"mse_after: {self.mse_after:.6g}")
        return "\n".join(lines) + "\n"


def _total_nodes(tree):
    return sum(node_count(tree))


def _node_values(tree, pts):
    values = {}
    cache = {}
    for n in tree.postorder():
        if n.is_leaf():
            values[n.id] = tree.leaf_occupancy(n, pts, cache=cache)
        else:
            values[n.id] = tree.apply(n, values[n.left.id], values[n.right.id])
    return values


def _root_with(tree, values, parents, node, constant):
    """Root occupancy when ``node`` outputs ``constant`` everywhere."""
    child = node
    out = np.full_like(values[node.id], constant)
    while child.id in parents:
        parent = parents[child.id]
        if parent.left is child:
            out = tree.apply(parent, out, values[parent.right.id])
        else:
            out = tree.apply(parent, values[parent.left.id], out)
        child = parent
    return out


def _verdict(tree, values, parents, node, threshold):
    root = values[tree.root.id]
    for constant, verdict in ((1.0, RedundancyVerdict.W_REDUNDANT), (0.0, RedundancyVerdict.EMPTY_REDUNDANT)):
        diff = _root_with(tree, values, parents, node, constant) - root
        if np.mean(diff * diff) <= threshold:
            return verdict
    return RedundancyVerdict.NOT_REDUNDANT


def _resolve_points(tree, cfg, target, rng):
    if cfg.eval_points is not None:
        return check_points(cfg.eval_points, tree.dim)
    if target is None:
        raise ParameterError("pruning needs eval_points or a target to sample them from")
    rng = np.random.default_rng(0) if rng is None else rng
    return sample_points(target, SamplerConfig(batch_size=DEFAULT_EVAL_POINTS), rng)[0]


def subtree_redundancy(tree, node_id, cfg, target=None, rng=None):
    """Classify the proper subtree rooted at ``node_id``.

    Both replacements are judged by their effect on the root output. A
    subtree that passes with either constant is reported W-redundant.
    """
    node = tree.node(node_id)
    if node is tree.root:
        raise ParameterError("the root is not a proper subtree")
    pts = _resolve_points(tree, cfg, target, rng)
    return _verdict(tree, _node_values(tree, pts), tree.parent_map(), node, cfg.threshold)


def _fold(tree, node):
    """Collapse ``node`` if a constant operand makes it the identity or a constant.

    Returns the replacement node, or ``node`` itself when nothing folds.
    """
    left_const = isinstance(node.left, Constant)
    right_const = isinstance(node.right, Constant)
    if left_const and right_const:
        value = tree.apply(node, np.array([node.left.value]), np.array([node.right.value]))[0]
        return Constant(value, id=node.id)
    if not (left_const or right_const):
        return node
    if right_const:
        sibling = node.left
        out = tree.apply(node, _PROBES, np.full_like(_PROBES, node.right.value))
    else:
        sibling = node.right
        out = tree.apply(node, np.full_like(_PROBES, node.left.value), _PROBES)
    if np.max(np.abs(out - _PROBES)) <= FOLD_ATOL:
        return sibling
    if np.max(np.abs(out - out[0])) <= FOLD_ATOL:
        return Constant(out[0], id=node.id)
    return node


def _replace(tree, parents, old, new):
    if old.id not in parents:
        tree.root = new
        return
    parent = parents[old.id]
    if parent.left is old:
        parent.left = new
    else:
        parent.right = new


def _delete(tree, node, verdict):
    """Swap ``node`` for its constant and fold boolean ancestors upward."""
    parents = tree.parent_map()
    const = Constant(1.0 if verdict is RedundancyVerdict.W_REDUNDANT else 0.0, id=node.id)
    _replace(tree, parents, node, const)
    current = parents.get(node.id)
    while current is not None:
        folded = _fold(tree, current)
        if folded is current:
            break
        _replace(tree, parents, current, folded)
        if not isinstance(folded, Constant):
            break
        current = parents.get(current.id)
    tree.invalidate()


def _prune_pass(tree, pts, threshold, deleted):
    changed = False
    values = _node_values(tree, pts)
    parents = tree.parent_map()
    alive = {id(n) for n in tree.postorder()}
    for node in list(tree.postorder()):
        if id(node) not in alive or node is tree.root or isinstance(node, Constant):
            continue
        verdict = _verdict(tree, values, parents, node, threshold)
        if verdict is RedundancyVerdict.NOT_REDUNDANT:
            continue
        deleted.append((node.id, verdict))
        _delete(tree, node, verdict)
        changed = True
        if tree.root.is_leaf():
            break
        values = _node_values(tree, pts)
        parents = tree.parent_map()
        alive = {id(n) for n in tree.postorder()}
    return changed


def prune(tree, cfg=None, target=None, rng=None, report=False):
    """Delete redundant subtrees in post-order until nothing else qualifies.

    The input tree is left untouched and surviving nodes keep their ids.
    Passes repeat until one deletes nothing, at most ``height + 1`` times.
    Evaluation points come from ``cfg.eval_points`` or, failing that, from
    the fitting sampler run against ``target``. With ``report=True`` the
    result is ``(pruned_tree, PruneReport)``.
    """
    cfg = PruneConfig() if cfg is None else cfg
    pts = _resolve_points(tree, cfg, target, rng)
    original = tree.eval(pts)
    pruned = tree.copy()
    rep = PruneReport(nodes_before=_total_nodes(tree))
    max_passes = tree.height() + 1
    while rep.passes < max_passes and not pruned.root.is_leaf():
        rep.passes += 1
        if not _prune_pass(pruned, pts, cfg.threshold, rep.deleted):
            break
    else:
        if not pruned.root.is_leaf():
            logger.warning("pruning stopped after %d passes without reaching a fixed point", rep.passes)
    pruned = CsgTree(pruned.root, pruned.dim, pruned.omega, pruned.temperature, pruned.mode)
    rep.nodes_after = _total_nodes(pruned)
    diff = pruned.eval(pts) - original
    rep.deviation = float(np.mean(diff * diff))
    rep.deviation_bound = 2.0 * cfg.threshold * len(rep.deleted)
    if target is not None:
        truth = target.occupancy(pts)
        rep.mse_before = float(np.mean((original - truth) ** 2))
        rep.mse_after = float(np.mean((original + diff - truth) ** 2))
    return (pruned, rep) if report else pruned
