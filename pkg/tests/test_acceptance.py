"""Acceptance criteria 1-10, one test each.

Every test records a PASS/FAIL line in ``RESULTS``; ``conftest.py`` prints
them at the end of the run. The lines are also printed directly, so
``pytest -s tests/test_acceptance.py`` shows them inline.
"""
import time

import numpy as np
import pytest

from fuzzycsg import fuzzy
from fuzzycsg.autodiff import finite_diff_check, forward_backward
from fuzzycsg.fuzzy import BarycentricWeights, TConormKind, TNormKind, bilinear_boolean, unified_boolean
from fuzzycsg.optimizer import FitConfig, SamplerConfig, fit, heldout_mse, sample_points
from fuzzycsg.primitives import PlanePrimitive, QuadricPrimitive, SpherePrimitive
from fuzzycsg.pruning import PruneConfig, prune
from fuzzycsg.targets import bundled_target, circle, tree_target, two_circles
from fuzzycsg.tree import BooleanNode, CsgTree, Leaf, build_full_tree, node_count, one_hot_control, serialize

from .helpers import random_irregular_tree

RESULTS = {}


def record(number, ok, detail, seconds):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  ({seconds:.1f} s)  {detail}"
    RESULTS[number] = line
    print(line)
    return ok


# -- 1. fuzzy axioms ----------------------------------------------------------


def _axiom_gaps(op, identity, x, y, z):
    """Largest violation of each t-norm/t-conorm axiom over the sample."""
    lo, hi = np.minimum(y, z), np.maximum(y, z)
    return {
        "boundary": np.max(np.abs(op(x, np.full_like(x, identity)) - x)),
        "monotonicity": np.max(op(x, lo) - op(x, hi)),
        "commutativity": np.max(np.abs(op(x, y) - op(y, x))),
        "associativity": np.max(np.abs(op(x, op(y, z)) - op(op(x, y), z))),
    }


def test_criterion_1_fuzzy_axioms():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    n = 100_000
    x, y, z = rng.uniform(size=(3, n))
    # include the corners and exact ties, where boundary cases live
    edge = np.array([0.0, 1.0, 0.5])
    x[:3], y[:3], z[:3] = edge, edge[::-1], edge
    cases = [
        ("product t-norm", fuzzy.PRODUCT, fuzzy.tnorm, 1.0, 1e-12),
        ("probabilistic sum", fuzzy.PROBABILISTIC_SUM, fuzzy.tconorm, 0.0, 1e-12),
    ]
    for p in (1, 2, 5):
        cases.append((f"yager t-norm p={p}", TNormKind.yager(p), fuzzy.tnorm, 1.0, 1e-9))
        cases.append((f"yager t-conorm p={p}", TConormKind.yager(p), fuzzy.tconorm, 0.0, 1e-9))
    worst = []
    ok = True
    for name, kind, fn, identity, tol in cases:
        gaps = _axiom_gaps(lambda a, b: fn(kind, a, b), identity, x, y, z)
        key = max(gaps, key=gaps.get)
        worst.append(f"{name} {gaps[key]:.1e}")
        ok &= all(g <= tol for g in gaps.values())
    c = fuzzy.complement
    comp_gap = max(
        abs(c(fuzzy.STANDARD, 0.0) - 1.0),
        abs(c(fuzzy.STANDARD, 1.0)),
        np.max(np.abs(c(fuzzy.STANDARD, c(fuzzy.STANDARD, x)) - x)),
    )
    lo, hi = np.minimum(x, y), np.maximum(x, y)
    strict = lo < hi
    comp_mono = np.all(c(fuzzy.STANDARD, lo[strict]) > c(fuzzy.STANDARD, hi[strict]))
    ok &= comp_gap <= 1e-12 and bool(comp_mono)
    seconds = time.perf_counter() - t0
    ok &= seconds < 10
    detail = f"{n} samples; worst gaps: " + ", ".join(worst) + f"; complement {comp_gap:.1e}"
    assert record(1, ok, detail, seconds)


# -- 2. one-hot reproduction ---------------------------------------------------


def test_criterion_2_one_hot_reproduces_product_logic():
    t0 = time.perf_counter()
    x, y = np.random.default_rng(102).uniform(size=(2, 10_000))
    expected = {
        fuzzy.INTERSECTION: x * y,
        fuzzy.UNION: x + y - x * y,
        fuzzy.DIFFERENCE: x * (1 - y),
        fuzzy.REVERSE_DIFFERENCE: y * (1 - x),
    }
    gaps = {k: float(np.max(np.abs(unified_boolean(BarycentricWeights.one_hot(k), x, y) - v))) for k, v in expected.items()}
    ok = max(gaps.values()) <= 1e-15
    assert record(2, ok, f"max gap {max(gaps.values()):.1e} over 10^4 points per operation", time.perf_counter() - t0)


# -- 3. De Morgan ----------------------------------------------------------------


def test_criterion_3_de_morgan():
    t0 = time.perf_counter()
    x, y = np.random.default_rng(103).uniform(size=(2, 10_000))
    lhs = 1 - fuzzy.tconorm(fuzzy.PROBABILISTIC_SUM, x, y)
    rhs = fuzzy.tnorm(fuzzy.PRODUCT, 1 - x, 1 - y)
    gap = float(np.max(np.abs(lhs - rhs)))
    assert record(3, gap <= 1e-15, f"max gap {gap:.1e} over 10^4 pairs", time.perf_counter() - t0)


# -- 4. barycentric linearity vs bilinear ---------------------------------------


def test_criterion_4_barycentric_linear_bilinear_not_monotone():
    t0 = time.perf_counter()
    rng = np.random.default_rng(104)
    a = rng.dirichlet(np.ones(4), size=1000)
    b = rng.dirichlet(np.ones(4), size=1000)
    x, y = rng.uniform(size=(2, 1000))

    def blend(w):
        return np.array([unified_boolean(wi, xi, yi) for wi, xi, yi in zip(w, x, y)])

    mid_gap = float(np.max(np.abs(blend((a + b) / 2) - (blend(a) + blend(b)) / 2)))
    # along a barycentric edge the output is a 1D convex combination: monotone
    t = np.linspace(0, 1, 201)
    edge = [unified_boolean(BarycentricWeights.one_hot(fuzzy.UNION).as_array() * (1 - s)
                            + BarycentricWeights.one_hot(fuzzy.DIFFERENCE).as_array() * s, 0.3, 0.6) for s in t]
    edge_monotone = bool(np.all(np.diff(edge) <= 1e-15) or np.all(np.diff(edge) >= -1e-15))
    # bilinear path from the union corner (0, 0) to the X\\Y corner (1, 1)
    grid = np.linspace(0, 1, 101)
    counterexample = None
    for xi in grid:
        for yi in grid:
            path = bilinear_boolean(t, t, xi, yi)
            d = np.diff(path)
            if d.max() > 1e-9 and d.min() < -1e-9:
                counterexample = (xi, yi)
                break
        if counterexample:
            break
    seconds = time.perf_counter() - t0
    ok = mid_gap <= 1e-12 and edge_monotone and counterexample is not None and seconds < 30
    where = "none" if counterexample is None else f"(x, y) = ({counterexample[0]:.2f}, {counterexample[1]:.2f})"
    assert record(4, ok, f"midpoint gap {mid_gap:.1e}; bilinear union to difference non-monotone at {where}", seconds)


# -- 5. gradient oracle ----------------------------------------------------------


def test_criterion_5_gradient_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(105)
    modes = ["unified", "fixed-product", "fixed-godel", "bilinear"]
    errors = []
    for i in range(50):
        dim = int(rng.integers(2, 4))
        tree = random_irregular_tree(rng, dim=dim, mode=modes[i % 4], max_depth=int(rng.integers(1, 5)))
        pts = rng.uniform(-1, 1, (64, dim))
        errors.append(finite_diff_check(tree, pts, 1e-5, target=rng.uniform(size=64)))
    seconds = time.perf_counter() - t0
    worst = max(errors)
    ok = worst < 1e-4 and seconds < 120
    assert record(5, ok, f"worst relative gradient error {worst:.1e} over 50 trees", seconds)


# -- 6. vanishing gradients ---------------------------------------------------------

FIG4_CFG = dict(iterations=5000, sampler=SamplerConfig(batch_size=1024))


def occluded_start(seed):
    """A large disk that hides a small one sitting where a target disk is missing."""
    j = np.random.default_rng(1000 + seed).uniform(-0.05, 0.05, 4)
    big = Leaf(circle([j[0], j[1]], 0.9, 20.0))
    small = Leaf(circle([-0.45 + j[2], j[3]], 0.1, 20.0))
    return CsgTree(BooleanNode(one_hot_control(fuzzy.UNION), small, big), 2)


def test_criterion_6_vanishing_gradients():
    t0 = time.perf_counter()
    target = tree_target(two_circles())
    # Goedel max: exact zero gradient for the dominated operand on every such batch
    zero_batches = dominated_batches = 0
    for seed in range(10):
        tree = occluded_start(seed).with_mode("fixed-godel")
        small = tree.root.left
        layout = tree.parameter_layout()
        rng = np.random.default_rng(seed)
        for _ in range(5):
            pts, occ = sample_points(target, SamplerConfig(batch_size=1024), rng)
            x = small.primitive.occupancy(pts)
            y = tree.root.right.primitive.occupancy(pts)
            if np.all(y > x):
                dominated_batches += 1
                _, grads = forward_backward(tree, pts, occ)
                zero_batches += not grads[layout[small.id]].any()
    godel_ok = dominated_batches > 0 and zero_batches == dominated_batches
    # unified: the product union keeps feeding the hidden disk and the fit succeeds
    mses = []
    for seed in range(10):
        result = fit(occluded_start(seed), target, FitConfig(mode="unified", seed=seed, **FIG4_CFG))
        mses.append(heldout_mse(result.tree, target, 200_000, np.random.default_rng([seed, 1])))
    wins = sum(m < 1e-3 for m in mses)
    seconds = time.perf_counter() - t0
    ok = godel_ok and wins >= 8 and seconds < 600
    detail = (
        f"godel: {zero_batches}/{dominated_batches} dominated batches with exactly zero gradient; "
        f"unified: {wins}/10 seeds below 1e-3 (median {np.median(mses):.1e})"
    )
    assert record(6, ok, detail, seconds)


# -- 7 and 8. desk-scale inverse CSG and pruning ----------------------------------------

C7_SEEDS = range(10)
C7_CFG = dict(iterations=10_000, lr=1e-2, sampler=SamplerConfig(batch_size=2048))


@pytest.fixture(scope="module")
def inverse_csg_runs():
    target = bundled_target("eight-quadrics")
    t0 = time.perf_counter()
    runs = {}
    for seed in C7_SEEDS:
        for mode in ("unified", "fixed-godel"):
            start = build_full_tree(4, "quadric", 2, np.random.default_rng(seed))
            result = fit(start, target, FitConfig(mode=mode, seed=seed, **C7_CFG))
            mse = heldout_mse(result.tree, target, 200_000, np.random.default_rng([seed, 7]))
            runs[seed, mode] = (result.tree, mse)
    return target, runs, time.perf_counter() - t0


def test_criterion_7_inverse_csg(inverse_csg_runs):
    target, runs, seconds = inverse_csg_runs
    seed0 = runs[0, "unified"][1]
    unified = np.array([runs[s, "unified"][1] for s in C7_SEEDS])
    godel = np.array([runs[s, "fixed-godel"][1] for s in C7_SEEDS])
    wins = int(np.sum(unified <= godel))
    ok = seed0 < 1e-2 and wins >= 8 and seconds < 1800
    detail = (
        f"seed 0 unified MSE {seed0:.4g}; unified <= godel on {wins}/10 seeds "
        f"(medians {np.median(unified):.3g} vs {np.median(godel):.3g})"
    )
    assert record(7, ok, detail, seconds)


def test_criterion_8_pruning(inverse_csg_runs):
    target, runs, _ = inverse_csg_runs
    t0 = time.perf_counter()
    tree, _ = runs[0, "unified"]
    cfg = PruneConfig(threshold=1e-3)
    pruned = prune(tree, cfg, target=target, rng=np.random.default_rng(8))
    again = prune(pruned, cfg, target=target, rng=np.random.default_rng(8))
    before, after = sum(node_count(tree)), sum(node_count(pruned))
    heldout = np.random.default_rng(88)
    pts = heldout.uniform(-1, 1, (200_000, 2))
    truth = target.occupancy(pts)
    delta = abs(np.mean((pruned.eval(pts) - truth) ** 2) - np.mean((tree.eval(pts) - truth) ** 2))
    idempotent = serialize(again) == serialize(pruned)
    seconds = time.perf_counter() - t0
    ok = after < before and delta < 5e-3 and idempotent and seconds < 120
    detail = f"nodes {before} -> {after}; held-out MSE change {delta:.1e}; idempotent {idempotent}"
    assert record(8, ok, detail, seconds)


# -- 9. stack evaluation ------------------------------------------------------------------


def test_criterion_9_stack_evaluation():
    t0 = time.perf_counter()
    rng = np.random.default_rng(109)
    worst = 0.0
    counters_ok = True
    pruned_count = 0
    for i in range(100):
        dim = int(rng.integers(2, 4))
        tree = random_irregular_tree(rng, dim=dim, mode=["unified", "fixed-product", "fixed-godel", "bilinear"][i % 4])
        pts = rng.uniform(-1, 1, (256, dim))
        if i % 2:
            tree = prune(tree, PruneConfig(threshold=1e-2, eval_points=pts))
            pruned_count += 1
        stacked, visits, depth = tree.eval_stack(pts, return_stats=True)
        worst = max(worst, float(np.max(np.abs(stacked - tree.eval(pts)))))
        counters_ok &= visits == len(tree.postorder()) and depth <= tree.height() + 1
    ok = worst <= 1e-12 and counters_ok
    detail = f"max gap {worst:.1e} over 100 trees ({pruned_count} pruned); single-visit counters {counters_ok}"
    assert record(9, ok, detail, time.perf_counter() - t0)


# -- 10. crisp limit ---------------------------------------------------------------------


def _random_crisp_leaf(rng):
    kind = rng.integers(3)
    s = float(rng.choice([-1.0, 1.0]) * rng.uniform(1, 50))
    if kind == 0:
        c, r = rng.uniform(-0.8, 0.8, 2), rng.uniform(0.1, 0.7)
        prim = SpherePrimitive.from_geometry(c, r, s, crisp=True)
        inside = lambda p, c=c, r=r, s=s: s * (r - np.sqrt(((p - c) ** 2).sum(axis=1))) > 0
    elif kind == 1:
        n, o = rng.normal(size=2), rng.uniform(-0.5, 0.5)
        prim = PlanePrimitive.from_geometry(n, o, s, crisp=True)
        inside = lambda p, n=n, o=o, s=s: s * (o - p @ (n / np.linalg.norm(n))) > 0
    else:
        q = np.zeros(10)
        q[[0, 1, 3, 6, 7, 9]] = rng.uniform(-1, 1, 6)
        prim = QuadricPrimitive.from_coefficients(q, s, dim=2, crisp=True)

        def inside(p, q=q, s=s):
            x, y = p[:, 0], p[:, 1]
            return s * (q[0] * x * x + q[1] * y * y + q[3] * x * y + q[6] * x + q[7] * y + q[9]) > 0

    return Leaf(prim), inside


SET_OPS = {
    fuzzy.INTERSECTION: lambda a, b: a & b,
    fuzzy.UNION: lambda a, b: a | b,
    fuzzy.DIFFERENCE: lambda a, b: a & ~b,
    fuzzy.REVERSE_DIFFERENCE: lambda a, b: b & ~a,
}


def _random_crisp_tree(rng, depth):
    if depth == 0 or rng.random() < 0.25:
        return _random_crisp_leaf(rng)
    (left, fl), (right, fr) = _random_crisp_tree(rng, depth - 1), _random_crisp_tree(rng, depth - 1)
    k = int(rng.integers(4))
    return BooleanNode(one_hot_control(k), left, right), (lambda p, fl=fl, fr=fr, k=k: SET_OPS[k](fl(p), fr(p)))


def test_criterion_10_crisp_limit():
    t0 = time.perf_counter()
    rng = np.random.default_rng(110)
    ticks = -1 + (np.arange(256) + 0.5) * (2 / 256)
    gx, gy = np.meshgrid(ticks, ticks)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    mismatches = 0
    trees = 0
    for mode in ("unified", "fixed-product"):
        for _ in range(10):
            root, oracle = _random_crisp_tree(rng, 4)
            if isinstance(root, Leaf):
                continue
            tree = CsgTree(root, 2) if mode == "unified" else CsgTree(root, 2).with_mode(mode)
            expected = oracle(pts).astype(float)
            mismatches += int(np.sum(tree.eval(pts) != expected))
            mismatches += int(np.sum(tree.eval_stack(pts) != expected))
            trees += 1
    ok = mismatches == 0 and trees >= 10
    assert record(10, ok, f"{trees} trees on a 256^2 grid; {mismatches} mismatching pixels", time.perf_counter() - t0)
