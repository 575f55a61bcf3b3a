"""scikit-learn style wrapper around tree fitting."""
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import ParameterError
from .optimizer import FitConfig, SamplerConfig, fit
from .pruning import PruneConfig, prune
from .targets import dataset_target, default_bbox
from .tree import Leaf, build_full_tree


class FuzzyCSGRegressor(RegressorMixin, BaseEstimator):
    """Fit a full CSG tree to point samples of an occupancy function.

    ``X`` holds 2D or 3D points and ``y`` their occupancy in [0, 1]. Training
    batches are drawn from the samples with the near-surface schedule, so
    ``fit`` needs points on both sides of the boundary. ``prune_threshold``
    (optional) simplifies the fitted tree using ``X`` as evaluation points.
    """

    def __init__(
        self,
        depth=4,
        family="quadric",
        mode="unified",
        iterations=10000,
        learning_rate=1e-3,
        batch_size=4096,
        resample_every=10,
        near_band=0.4,
        omega=10.0,
        temperature=1e3,
        prune_threshold=None,
        random_state=0,
    ):
        self.depth = depth
        self.family = family
        self.mode = mode
        self.iterations = iterations
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.resample_every = resample_every
        self.near_band = near_band
        self.omega = omega
        self.temperature = temperature
        self.prune_threshold = prune_threshold
        self.random_state = random_state

    def _config(self):
        sampler = SamplerConfig(
            batch_size=self.batch_size, resample_every=self.resample_every, near_band=self.near_band
        )
        return FitConfig(
            iterations=self.iterations,
            sampler=sampler,
            lr=self.learning_rate,
            mode=self.mode,
            seed=self.random_state,
            depth=self.depth,
            family=self.family,
            omega=self.omega,
            temperature=self.temperature,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if X.shape[1] not in (2, 3):
            raise ParameterError(f"points must be 2D or 3D, got {X.shape[1]} features")
        lo, hi = default_bbox(X.shape[1])
        bbox = (np.minimum(lo, X.min(axis=0)), np.maximum(hi, X.max(axis=0)))
        return self.fit_target(dataset_target(X, y, bbox=bbox, name="samples"), eval_points=X)

    def fit_target(self, target, eval_points=None):
        """Fit against any :class:`~fuzzycsg.optimizer.TargetOracle`."""
        cfg = self._config()
        rng = np.random.default_rng(self.random_state)
        init = build_full_tree(self.depth, self.family, target.dim, rng, self.omega, self.temperature, self.mode)
        result = fit(init, target, cfg)
        tree = result.tree
        if self.prune_threshold is not None:
            tree = prune(tree, PruneConfig(self.prune_threshold, eval_points), target=target, rng=rng)
        self.tree_ = tree
        self.loss_history_ = result.history
        self.n_features_in_ = target.dim
        return self

    def _points(self, X):
        check_is_fitted(self, "tree_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ParameterError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def predict(self, X):
        """Soft occupancy of the fitted tree."""
        X = self._points(X)
        return self.tree_.eval(X)

    def transform(self, X):
        """Per-leaf occupancies, one column per primitive in post-order."""
        X = self._points(X)
        leaves = [n for n in self.tree_.postorder() if isinstance(n, Leaf)]
        if not leaves:
            return np.zeros((X.shape[0], 0))
        return np.stack([n.primitive.occupancy(X) for n in leaves], axis=1)
