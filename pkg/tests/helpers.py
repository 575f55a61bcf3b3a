"""Shared builders for the test suite."""
import numpy as np

from fuzzycsg.primitives import init_primitive
from fuzzycsg.tree import BooleanNode, Constant, CsgTree, Leaf


def random_irregular_tree(rng, dim=2, mode="unified", max_depth=4, families=("quadric", "sphere", "plane"), constants=True):
    """Random tree with uneven branch depths, mixed families and optional constant leaves."""

    def rec(level):
        if level == 0 or (level < max_depth and rng.random() < 0.3):
            if constants and rng.random() < 0.1:
                return Constant(float(rng.integers(0, 2)))
            return Leaf(init_primitive(rng, families[rng.integers(len(families))], dim))
        left = rec(level - 1)
        right = rec(level - 1)
        return BooleanNode(rng.uniform(-0.5, 0.5, size=4), left, right)

    root = rec(max_depth)
    if not isinstance(root, BooleanNode):
        root = BooleanNode(rng.uniform(-0.5, 0.5, size=4), root, Leaf(init_primitive(rng, "sphere", dim)))
    tree = CsgTree(root, dim, mode="unified")
    return tree if mode == "unified" else tree.with_mode(mode)
