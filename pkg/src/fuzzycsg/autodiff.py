"""Reverse-mode gradients of the occupancy MSE through a CSG tree.

The computation graph is the tree itself plus fixed elementwise maps, so each
node type gets a hand-written backward rule instead of a general tape.
Gradients land in a flat buffer laid out like ``CsgTree.get_params()``.
"""
from typing import NamedTuple

import numpy as np

from . import fuzzy
from .errors import NumericalError, ParameterError, ShapeError
from .primitives import check_points
from .tree import BooleanNode, Leaf, sin_to_unit


def loss_mse(pred, target):
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} does not match target shape {target.shape}")
    if pred.size == 0:
        raise ParameterError("loss of an empty batch is undefined")
    diff = pred - target
    return np.mean(diff * diff)


def softmax_backward(c, grad_c):
    """Gradient w.r.t. softmax logits given weights ``c`` and ``dL/dc``.

    Uses ``c_i * sum_j c_j (g_i - g_j)`` so a saturated winner does not lose
    its small gradient to cancellation.
    """
    return c * ((grad_c[:, None] - grad_c[None, :]) @ c)


def _boolean_backward(tree, node, w, x, y, adj):
    """Adjoints of both children and the control gradient (or ``None``)."""
    mode = tree.mode
    if mode == "fixed-godel":
        dx, dy = fuzzy.godel_boolean_grad(node.op, x, y)
        return adj * dx, adj * dy, None
    a, b, k = fuzzy.blend_coefficients(w)
    adj_x = adj * (a + k * y)
    adj_y = adj * (b + k * x)
    if mode == "fixed-product":
        return adj_x, adj_y, None
    adj_xy = adj * (x * y)
    sum_x = np.sum(adj * x)
    sum_y = np.sum(adj * y)
    sum_xy = np.sum(adj_xy)
    # dL/dc for the corners xy, x + y - xy, x - xy, y - xy
    grad_w = np.array([sum_xy, sum_x + sum_y - sum_xy, sum_x - sum_xy, sum_y - sum_xy])
    omega = tree.omega
    if mode == "bilinear":
        u, v = sin_to_unit(node.c_raw[:2], omega)
        d_u = grad_w @ np.array([1 - v, -(1 - v), v, -v])
        d_v = grad_w @ np.array([-u, -(1 - u), u, 1 - u])
        scale = 0.5 * omega * np.cos(omega * node.c_raw[:2])
        grad_c = np.zeros(4, dtype=grad_w.dtype)
        grad_c[:2] = np.array([d_u, d_v]) * scale
        return adj_x, adj_y, grad_c
    grad_z = softmax_backward(w, grad_w)
    grad_c = grad_z * tree.temperature * omega * np.cos(omega * node.c_raw)
    return adj_x, adj_y, grad_c


def _forward_backward_levels(tree, plan, theta, pts, target):
    fwd = tree.forward_levels(plan, theta, pts)
    diff = fwd.output - target
    loss = float(np.mean(diff * diff))
    grads = np.zeros(theta.shape[0], dtype=theta.dtype)
    adj = (2.0 / pts.shape[0]) * diff[None, :]
    omega = tree.omega
    godel = tree.mode == "fixed-godel"
    for (row, ctrl_idx, ops), (x, y, w, ctrl) in zip(reversed(plan.levels), reversed(fwd.stack)):
        below = np.empty((2 * len(row), adj.shape[1]), dtype=adj.dtype)
        if godel:
            for i, op in enumerate(ops):
                dx, dy = fuzzy.godel_boolean_grad(op, x[i], y[i])
                below[2 * i] = adj[i] * dx
                below[2 * i + 1] = adj[i] * dy
            adj = below
            continue
        a, b, k = (coef[:, None] for coef in fuzzy.blend_coefficients(w))
        below[0::2] = adj * (a + k * y)
        below[1::2] = adj * (b + k * x)
        if ctrl_idx is not None:
            sum_x = np.sum(adj * x, axis=1)
            sum_y = np.sum(adj * y, axis=1)
            sum_xy = np.sum(adj * (x * y), axis=1)
            grad_w = np.stack([sum_xy, sum_x + sum_y - sum_xy, sum_x - sum_xy, sum_y - sum_xy], axis=1)
            if tree.mode == "bilinear":
                u, v = sin_to_unit(ctrl[:, :2], omega).T
                d_u = np.sum(grad_w * np.stack([1 - v, -(1 - v), v, -v], axis=1), axis=1)
                d_v = np.sum(grad_w * np.stack([-u, -(1 - u), u, 1 - u], axis=1), axis=1)
                grad_c = np.zeros_like(ctrl)
                grad_c[:, :2] = np.stack([d_u, d_v], axis=1) * (0.5 * omega * np.cos(omega * ctrl[:, :2]))
            else:
                spread = grad_w[:, :, None] - grad_w[:, None, :]
                grad_z = w * (spread @ w[:, :, None])[:, :, 0]
                grad_c = grad_z * tree.temperature * omega * np.cos(omega * ctrl)
            grads[ctrl_idx] = grad_c
        adj = below

    occ = fwd.leaves
    dsig = adj * occ * (1.0 - occ)
    grads[plan.leaf_idx[:, :-1]] = (dsig * fwd.sharpness) @ fwd.features.T
    grads[plan.leaf_idx[:, -1]] = np.sum(dsig * fwd.fields, axis=1)
    return loss, grads


def forward_backward(tree, points, target, params=None):
    """Loss and gradient of ``mean((tree(points) - target)**2)``.

    Returns ``(loss, grads)`` where ``grads`` aligns with ``tree.get_params()``.
    ``params``, when given, replaces the tree's stored parameter vector for
    this call without modifying the tree. Raises :class:`NumericalError`
    naming the first node whose output or gradient is not finite.

    Full trees of soft quadrics are evaluated level by level with all nodes
    of a level in one array; other trees walk the nodes in post-order.
    """
    pts = check_points(points, tree.dim)
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (pts.shape[0],):
        raise ShapeError(f"target has shape {target.shape}, expected ({pts.shape[0]},)")
    if pts.shape[0] == 0:
        raise ParameterError("forward_backward needs a nonempty batch")
    if params is not None:
        params = np.asarray(params)
        if params.shape != (tree.n_params(),):
            raise ParameterError(f"expected {tree.n_params()} parameters, got {params.shape}")
    plan = tree.level_plan()
    if plan is not None:
        theta = tree.get_params() if params is None else params
        loss, grads = _forward_backward_levels(tree, plan, theta, pts, target)
        if np.isfinite(loss) and np.all(np.isfinite(grads)):
            return loss, grads
        # rerun node by node so the error names the offending node
    if params is not None:
        tree = tree.with_params(params)
    return _forward_backward_nodes(tree, pts, target)


def _forward_backward_nodes(tree, pts, target):
    order = tree.postorder()
    cache = {}
    values = {}
    fields = {}
    weights = {}
    for node in order:
        if isinstance(node, Leaf):
            out, fields[node.id] = node.primitive.forward(pts, cache=cache)
        elif node.is_leaf():
            out = tree.leaf_occupancy(node, pts)
        elif tree.mode == "fixed-godel":
            out = fuzzy.godel_boolean(node.op, values[node.left.id], values[node.right.id])
        else:
            w = weights[node.id] = tree.weights(node)
            a, b, k = fuzzy.blend_coefficients(w)
            x, y = values[node.left.id], values[node.right.id]
            out = a * x + b * y + k * x * y
        values[node.id] = out

    pred = values[tree.root.id]
    diff = pred - target
    loss = float(np.mean(diff * diff))
    if not np.isfinite(loss):
        _raise_first_nonfinite(order, values, "occupancy")

    layout = tree.parameter_layout()
    grads = np.zeros(max((s.stop for s in layout.values()), default=0))
    adjoints = {tree.root.id: (2.0 / pts.shape[0]) * diff}
    for node in reversed(order):
        adj = adjoints.pop(node.id)
        if isinstance(node, BooleanNode):
            adj_x, adj_y, grad_c = _boolean_backward(
                tree, node, weights.get(node.id), values[node.left.id], values[node.right.id], adj
            )
            adjoints[node.left.id] = adj_x
            adjoints[node.right.id] = adj_y
            if grad_c is not None and node.id in layout:
                grads[layout[node.id]] = grad_c
        elif isinstance(node, Leaf):
            grads[layout[node.id]] = node.primitive.param_grad(pts, values[node.id], fields[node.id], adj, cache)
    if not np.all(np.isfinite(grads)):
        _raise_first_nonfinite(order, {i: grads[s] for i, s in layout.items()}, "gradient")
    return loss, grads


def _raise_first_nonfinite(order, arrays, what):
    for node in order:
        if node.id in arrays and not np.all(np.isfinite(arrays[node.id])):
            raise NumericalError(f"non-finite {what} at node {node.id}", node_id=node.id)
    raise NumericalError(f"non-finite {what}")


class GradientCheck(NamedTuple):
    max_error: float
    index: int
    analytic: np.ndarray
    numeric: np.ndarray


def numeric_gradient(tree, points, target, step=1e-5):
    """Central-difference gradient with one Richardson extrapolation step.

    Evaluates the tree in extended precision through ``eval`` only, so no
    part of the backward pass in :func:`forward_backward` is involved.
    """
    if not step > 0:
        raise ParameterError("finite-difference step must be positive")
    ext = np.longdouble
    pts = check_points(points, tree.dim).astype(ext)
    target = np.asarray(target).astype(ext)
    theta = tree.get_params().astype(ext)
    probe = tree.with_params(theta)

    def loss_delta(i, h):
        up = theta.copy()
        up[i] += h
        down = theta.copy()
        down[i] -= h
        probe.set_params(up)
        p_up = probe.eval(pts)
        probe.set_params(down)
        p_down = probe.eval(pts)
        # (p+ - t)^2 - (p- - t)^2 without subtracting two full losses
        return np.mean((p_up - p_down) * (p_up + p_down - 2 * target)) / (2 * h)

    h = ext(step)
    out = np.empty(theta.shape[0])
    for i in range(theta.shape[0]):
        coarse = loss_delta(i, h)
        fine = loss_delta(i, h / 2)
        out[i] = float((4 * fine - coarse) / 3)
    return out


def finite_diff_check(tree, points, step=1e-5, target=None, return_details=False):
    """Largest relative gap between analytic and numeric gradients.

    Relative error per parameter is ``|a - n| / max(|a|, |n|, 1e-8)``. The
    target defaults to all zeros. With ``return_details`` a
    :class:`GradientCheck` carrying the arg-max index is returned.
    """
    pts = check_points(points, tree.dim)
    if target is None:
        target = np.zeros(pts.shape[0])
    _, analytic = forward_backward(tree, pts, target)
    numeric = numeric_gradient(tree, pts, target, step)
    if analytic.size == 0:
        result = GradientCheck(0.0, -1, analytic, numeric)
    else:
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
        rel = np.abs(analytic - numeric) / denom
        idx = int(np.argmax(rel))
        result = GradientCheck(float(rel[idx]), idx, analytic, numeric)
    return result if return_details else result.max_error
