"""Inverse-CSG fitting: target sampling, ADAM updates and the training loop."""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

from .autodiff import forward_backward
from .errors import NumericalError, ParameterError, SamplingError, ShapeError
from .primitives import check_points
from .tree import MODES

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 1e-3

    def __post_init__(self):
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ParameterError("beta1 and beta2 must lie in (0, 1)")
        if not self.lr > 0:
            raise ParameterError("learning rate must be positive")
        if np.shape(self.m) != np.shape(self.v):
            raise ShapeError("first and second moments must align")

    @classmethod
    def zeros(cls, n, **hyper):
        return cls(np.zeros(n), np.zeros(n), **hyper)


def adam_step(state, params, grads):
    """One bias-corrected ADAM update; returns ``(new_params, new_state)``.

    Entries whose gradient is exactly zero keep their parameter value while
    their moments still decay, so a zero gradient is an exact fixed point.
    Inputs are never modified.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ShapeError(f"params {params.shape}, grads {grads.shape} and moments {state.m.shape} must align")
    if not np.all(np.isfinite(grads)):
        raise NumericalError("non-finite gradient passed to adam_step")
    t = state.step_count + 1
    m = state.beta1 * state.m + (1 - state.beta1) * grads
    v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    new_params = np.where(grads != 0, params - update, params)
    return new_params, replace(state, m=m, v=v, step_count=t)


@dataclass
class SamplerConfig:
    batch_size: int = 4096
    frac_surface: float = 0.4
    frac_near: float = 0.4
    frac_volume: float = 0.2
    near_band: float = 0.4
    resample_every: int = 10
    budget_factor: int = 100

    def __post_init__(self):
        fracs = (self.frac_surface, self.frac_near, self.frac_volume)
        if min(fracs) < 0 or abs(sum(fracs) - 1) > 1e-9:
            raise ParameterError("sampling fractions must be nonnegative and sum to 1")
        if self.batch_size < 1 or self.resample_every < 1:
            raise ParameterError("batch_size and resample_every must be at least 1")
        if not 0 < self.near_band <= 0.5:
            raise ParameterError("near_band must lie in (0, 0.5]")

    def split(self):
        """Point counts ``(surface, near, volume)``; rounding goes to the volume share."""
        n = self.batch_size
        n_surface = math.floor(self.frac_surface * n + 0.5)
        n_near = min(math.floor(self.frac_near * n + 0.5), n - n_surface)
        return n_surface, n_near, n - n_surface - n_near


class TargetOracle:
    """Ground-truth occupancy to fit against.

    ``occupancy`` maps an ``(n, d)`` array to memberships in [0, 1].
    ``band_occupancy`` (default: ``occupancy``) decides which candidates count
    as near the surface; crisp targets pass their underlying soft field here.
    ``surface_sampler(rng, count)`` returns points on the boundary, when the
    target can produce them. ``pool`` restricts candidates to a fixed set of
    points, as for a sampled dataset.
    """

    def __init__(self, occupancy, bbox, surface_sampler=None, band_occupancy=None, pool=None, name="target"):
        lo, hi = (np.asarray(b, dtype=np.float64) for b in bbox)
        if lo.shape != hi.shape or lo.ndim != 1 or lo.shape[0] not in (2, 3) or np.any(hi <= lo):
            raise ParameterError("bbox must be a pair of 2D or 3D corners with lo < hi")
        self.bbox = (lo, hi)
        self.dim = lo.shape[0]
        self._occupancy = occupancy
        self._band = band_occupancy
        self.surface_sampler = surface_sampler
        self.pool = None if pool is None else check_points(pool, self.dim)
        self.name = name
        self._pool_band_cache = {}

    def occupancy(self, points):
        return np.asarray(self._occupancy(check_points(points, self.dim)), dtype=np.float64)

    def band_occupancy(self, points):
        if self._band is None:
            return self.occupancy(points)
        return np.asarray(self._band(check_points(points, self.dim)), dtype=np.float64)

    def uniform(self, rng, count):
        """Uniform candidates from the pool, or from the bounding box."""
        if self.pool is not None:
            return self.pool[rng.integers(0, self.pool.shape[0], size=count)]
        lo, hi = self.bbox
        return rng.uniform(lo, hi, size=(count, self.dim))

    def pool_band_indices(self, band):
        if band not in self._pool_band_cache:
            occ = self.band_occupancy(self.pool)
            self._pool_band_cache[band] = np.flatnonzero(np.abs(occ - 0.5) < band)
        return self._pool_band_cache[band]


def _near_surface(target, cfg, rng, count):
    if count == 0:
        return np.zeros((0, target.dim))
    if target.pool is not None:
        idx = target.pool_band_indices(cfg.near_band)
        if idx.size == 0:
            raise SamplingError("no dataset point has occupancy inside the near-surface band; widen near_band")
        return target.pool[rng.choice(idx, size=count)]
    budget = cfg.budget_factor * cfg.batch_size
    chunk = max(4 * count, 256)
    kept = []
    n_kept = drawn = 0
    while n_kept < count:
        if drawn >= budget:
            raise SamplingError(
                f"near-surface rejection kept {n_kept}/{count} points from {drawn} candidates; widen near_band"
            )
        size = min(chunk, budget - drawn)
        cand = target.uniform(rng, size)
        drawn += size
        hit = cand[np.abs(target.band_occupancy(cand) - 0.5) < cfg.near_band]
        kept.append(hit)
        n_kept += hit.shape[0]
    return np.concatenate(kept)[:count]


def sample_points(target, cfg, rng):
    """Training batch drawn on, near and away from the target surface.

    Returns ``(points, occupancy)``. Without a surface sampler the surface
    share is folded into the near-surface share.
    """
    n_surface, n_near, n_volume = cfg.split()
    parts = []
    if n_surface and target.surface_sampler is None:
        logger.info("target %s has no surface sampler; drawing %d extra near-surface points", target.name, n_surface)
        n_near += n_surface
        n_surface = 0
    if n_surface:
        surf = check_points(target.surface_sampler(rng, n_surface), target.dim)
        if surf.shape[0] != n_surface:
            raise SamplingError(f"surface sampler returned {surf.shape[0]} of {n_surface} points")
        parts.append(surf)
    parts.append(_near_surface(target, cfg, rng, n_near))
    parts.append(target.uniform(rng, n_volume))
    points = np.concatenate(parts)
    return points, target.occupancy(points)


def heldout_points(target, count, rng):
    """Uniform points over the target's bounding box."""
    lo, hi = target.bbox
    return rng.uniform(lo, hi, size=(count, target.dim))


def heldout_mse(tree, target, count=200_000, rng=None):
    rng = np.random.default_rng(0) if rng is None else rng
    pts = heldout_points(target, count, rng)
    diff = tree.eval(pts) - target.occupancy(pts)
    return float(np.mean(diff * diff))


@dataclass
class FitConfig:
    """Optimization settings. ``depth`` and ``family`` only matter when the
    caller asks for a fresh random tree (CLI and estimator)."""

    iterations: int = 10000
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    mode: str = "unified"
    seed: int = 0
    depth: int = 4
    family: str = "quadric"
    omega: float = 10.0
    temperature: float = 1e3
    holdout_points: int = 200_000

    def __post_init__(self):
        if isinstance(self.sampler, dict):
            self.sampler = SamplerConfig(**self.sampler)
        if self.iterations < 1:
            raise ParameterError("iterations must be at least 1")
        if self.mode not in MODES:
            raise ParameterError(f"unknown boolean mode {self.mode!r}")
        AdamState.zeros(0, beta1=self.beta1, beta2=self.beta2, eps=self.eps, lr=self.lr)


class FitResult(NamedTuple):
    tree: object
    history: np.ndarray


class FitAborted(NumericalError):
    """A numerical failure stopped :func:`fit`; carries the last good tree."""

    def __init__(self, cause, tree, history):
        super().__init__(f"fit aborted: {cause}", node_id=getattr(cause, "node_id", None))
        self.tree = tree
        self.history = np.asarray(history)


def fit(tree, target, cfg, callback: Optional[Callable] = None):
    """Fit ``tree`` to ``target`` by ADAM on the occupancy MSE.

    The input tree is not modified. Under a fixed mode the boolean operations
    are frozen at their initial argmax and drop out of the parameter vector.
    ``callback(iteration, loss, tree)`` runs after every step. Returns a
    :class:`FitResult`; the history holds the batch loss of every iteration.
    """
    if tree.dim != target.dim:
        raise ShapeError(f"tree dimension {tree.dim} does not match target dimension {target.dim}")
    rng = np.random.default_rng(cfg.seed)
    tree = tree.with_mode(cfg.mode) if tree.mode != cfg.mode else tree.copy()
    params = tree.get_params()
    state = AdamState.zeros(params.shape[0], beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps, lr=cfg.lr)
    batched = tree.level_plan() is not None
    history = []
    every = cfg.sampler.resample_every
    for it in range(cfg.iterations):
        if it % every == 0:
            points, occ = sample_points(target, cfg.sampler, rng)
        try:
            if batched:
                loss, grads = forward_backward(tree, points, occ, params=params)
            else:
                tree.set_params(params)
                loss, grads = forward_backward(tree, points, occ)
            new_params, state = adam_step(state, params, grads)
        except NumericalError as exc:
            tree.set_params(params)
            raise FitAborted(exc, tree, history) from exc
        params = new_params
        history.append(loss)
        if callback is not None:
            tree.set_params(params)
            callback(it, loss, tree)
    tree.set_params(params)
    return FitResult(tree, np.asarray(history))
