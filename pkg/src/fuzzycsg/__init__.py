"""Differentiable CSG on fuzzy-set occupancies, with an inverse-CSG fitter."""

__version__ = "0.1.0"

from .autodiff import finite_diff_check, forward_backward, loss_mse
from .errors import (
    FuzzyCSGError,
    NumericalError,
    ParameterError,
    ParseError,
    ResourceError,
    SamplingError,
    SchemaError,
    ShapeError,
    UnsupportedVersionError,
)
from .fuzzy import BarycentricWeights, bilinear_boolean, complement, tconorm, tnorm, unified_boolean
from .optimizer import AdamState, FitConfig, SamplerConfig, TargetOracle, adam_step, fit, sample_points
from .primitives import PlanePrimitive, QuadricPrimitive, SpherePrimitive
from .pruning import PruneConfig, RedundancyVerdict, prune, subtree_redundancy
from .targets import bundled_target, load_target
from .tree import BooleanNode, Constant, CsgTree, Leaf, build_full_tree, deserialize, node_count, serialize

__all__ = [
    "AdamState",
    "BarycentricWeights",
    "BooleanNode",
    "Constant",
    "CsgTree",
    "FitConfig",
    "FuzzyCSGError",
    "Leaf",
    "NumericalError",
    "ParameterError",
    "ParseError",
    "PlanePrimitive",
    "PruneConfig",
    "QuadricPrimitive",
    "RedundancyVerdict",
    "ResourceError",
    "SamplerConfig",
    "SamplingError",
    "SchemaError",
    "ShapeError",
    "SpherePrimitive",
    "TargetOracle",
    "UnsupportedVersionError",
    "adam_step",
    "bilinear_boolean",
    "build_full_tree",
    "bundled_target",
    "complement",
    "deserialize",
    "finite_diff_check",
    "fit",
    "forward_backward",
    "load_target",
    "loss_mse",
    "node_count",
    "prune",
    "sample_points",
    "serialize",
    "subtree_redundancy",
    "tconorm",
    "tnorm",
    "unified_boolean",
]
