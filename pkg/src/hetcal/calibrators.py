"""Score transforms and the calibrators that fit them.

Every transform maps (score, partition) arrays to an output array. Scores
are on the logit scale. ``logit`` gives the output in logit space so that
transforms can be chained; for Platt this is the exact affine map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import expit, logit as _logit

from .score_model import PROB_CLAMP

PLATT_MAX_ITER = 100
PLATT_GTOL = 1e-10
PLATT_BOUND = 1e3


def _as_array(scores):
    return np.asarray(scores, dtype=float)


def _parts(partitions, scores):
    if partitions is None:
        return np.zeros(np.shape(scores), dtype=np.int64)
    return np.broadcast_to(np.asarray(partitions, dtype=np.int64), np.shape(scores))


def _clamped_logit(p):
    return _logit(np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP))


class Transform:
    """Base class. Subclasses implement ``__call__`` and ``to_dict``."""

    #: outputs are probabilities in [0, 1]
    is_probability = True
    #: output depends on the partition id
    partition_aware = False

    def __call__(self, scores, partitions=None) -> np.ndarray:
        raise NotImplementedError

    def logit(self, scores, partitions=None) -> np.ndarray:
        return _clamped_logit(self(scores, partitions))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Identity(Transform):
    is_probability = False

    def __call__(self, scores, partitions=None):
        return _as_array(scores).copy()

    def logit(self, scores, partitions=None):
        return _as_array(scores).copy()

    def to_dict(self):
        return {"variant": "identity"}


@dataclass(frozen=True)
class Platt(Transform):
    """``sigmoid(a * s + b)``."""

    a: float
    b: float

    def __call__(self, scores, partitions=None):
        return expit(self.a * _as_array(scores) + self.b)

    def logit(self, scores, partitions=None):
        return self.a * _as_array(scores) + self.b

    def to_dict(self):
        return {"variant": "platt", "a": float(self.a), "b": float(self.b)}


@dataclass(frozen=True)
class Isotonic(Transform):
    """Non-decreasing step function; left-constant between breakpoints.

    Scores below the first breakpoint take the first level.
    """

    x: tuple
    y: tuple

    def __post_init__(self):
        x, y = np.asarray(self.x, float), np.asarray(self.y, float)
        if x.size == 0 or x.shape != y.shape:
            raise ValueError("isotonic needs matching, non-empty breakpoints")
        if np.any(np.diff(x) <= 0):
            raise ValueError("isotonic breakpoints must be strictly increasing")
        if np.any(np.diff(y) < 0):
            raise ValueError("isotonic levels must be non-decreasing")

    def __call__(self, scores, partitions=None):
        x, y = np.asarray(self.x), np.asarray(self.y)
        idx = np.searchsorted(x, _as_array(scores), side="right") - 1
        return y[np.clip(idx, 0, x.size - 1)]

    def to_dict(self):
        return {"variant": "isotonic", "x": [float(v) for v in self.x], "y": [float(v) for v in self.y]}


@dataclass(frozen=True)
class Histogram(Transform):
    """Piecewise-constant bins. ``edges`` are the interior cut points; a score
    equal to a cut point belongs to the lower bin."""

    edges: tuple
    values: tuple

    def __post_init__(self):
        e, v = np.asarray(self.edges, float), np.asarray(self.values, float)
        if v.size != e.size + 1:
            raise ValueError("histogram needs len(values) == len(edges) + 1")
        if np.any(np.diff(e) <= 0):
            raise ValueError("histogram edges must be strictly increasing")
        if np.any((v < 0) | (v > 1)):
            raise ValueError("histogram values must lie in [0, 1]")

    def __call__(self, scores, partitions=None):
        idx = np.searchsorted(np.asarray(self.edges, float), _as_array(scores), side="left")
        return np.asarray(self.values, float)[idx]

    def to_dict(self):
        return {"variant": "histogram", "edges": [float(v) for v in self.edges],
                "values": [float(v) for v in self.values]}


@dataclass(frozen=True)
class Table(Transform):
    """Explicit (score, partition) -> value lookup. Unknown keys map to ``default``."""

    table: Mapping
    default: float = 0.0
    is_probability: bool = True
    partition_aware = True

    def __call__(self, scores, partitions=None):
        s = _as_array(scores)
        p = _parts(partitions, s)
        flat = [self.table.get((float(a), int(b)), self.default) for a, b in zip(s.ravel(), p.ravel())]
        return np.asarray(flat, dtype=float).reshape(s.shape)

    def to_dict(self):
        return {"variant": "table", "default": float(self.default), "is_probability": bool(self.is_probability),
                "entries": [[float(k[0]), int(k[1]), float(v)] for k, v in sorted(self.table.items())]}


@dataclass(frozen=True)
class PerPartition(Transform):
    """Dispatch on partition id; ids without an entry use ``fallback``."""

    transforms: Mapping
    fallback: Transform
    partition_aware = True

    @property
    def is_probability(self):
        return self.fallback.is_probability and all(t.is_probability for t in self.transforms.values())

    def _dispatch(self, method, scores, partitions):
        s = _as_array(scores)
        p = _parts(partitions, s)
        out = np.empty(s.shape, dtype=float)
        done = np.zeros(s.shape, dtype=bool)
        for pid, t in self.transforms.items():
            m = p == pid
            if m.any():
                out[m] = getattr(t, method)(s[m])
                done |= m
        if not done.all():
            out[~done] = getattr(self.fallback, method)(s[~done])
        return out

    def __call__(self, scores, partitions=None):
        return self._dispatch("__call__", scores, partitions)

    def logit(self, scores, partitions=None):
        return self._dispatch("logit", scores, partitions)

    def to_dict(self):
        return {"variant": "per_partition",
                "transforms": {str(k): v.to_dict() for k, v in sorted(self.transforms.items())},
                "fallback": self.fallback.to_dict()}


@dataclass(frozen=True)
class Composed(Transform):
    """``outer`` applied to the logit-space output of ``inner``.

    ``partitions`` may be a pair ``(inner_partitions, outer_partitions)`` when
    the two stages route on different partitionings.
    """

    outer: Transform
    inner: Transform
    partition_aware = True

    @property
    def is_probability(self):
        return self.outer.is_probability

    @staticmethod
    def _split(partitions):
        if isinstance(partitions, tuple) and len(partitions) == 2:
            return partitions
        return partitions, partitions

    def __call__(self, scores, partitions=None):
        pin, pout = self._split(partitions)
        return self.outer(self.inner.logit(scores, pin), pout)

    def logit(self, scores, partitions=None):
        pin, pout = self._split(partitions)
        return self.outer.logit(self.inner.logit(scores, pin), pout)

    def to_dict(self):
        return {"variant": "composed", "outer": self.outer.to_dict(), "inner": self.inner.to_dict()}


def apply(t: Transform, score, partition=None):
    """Evaluate ``t`` at a single point or on arrays."""
    out = t(score, partition)
    return float(out) if np.ndim(out) == 0 else out


def transform_from_dict(d: dict) -> Transform:
    v = d["variant"]
    if v == "identity":
        return Identity()
    if v == "platt":
        return Platt(float(d["a"]), float(d["b"]))
    if v == "isotonic":
        return Isotonic(tuple(d["x"]), tuple(d["y"]))
    if v == "histogram":
        return Histogram(tuple(d["edges"]), tuple(d["values"]))
    if v == "table":
        return Table({(float(s), int(p)): float(val) for s, p, val in d["entries"]},
                     float(d.get("default", 0.0)), bool(d.get("is_probability", True)))
    if v == "per_partition":
        return PerPartition({int(k): transform_from_dict(t) for k, t in d["transforms"].items()},
                            transform_from_dict(d["fallback"]))
    if v == "composed":
        return Composed(transform_from_dict(d["outer"]), transform_from_dict(d["inner"]))
    raise ValueError(f"unknown transform variant {v!r}")


# --------------------------------------------------------------------------
# fitting


def _check_xy(scores, labels):
    s = np.asarray(scores, dtype=float).reshape(-1)
    y = np.asarray(labels, dtype=float).reshape(-1)
    if s.shape != y.shape:
        raise ValueError("scores and labels must have equal length")
    return s, y


def _platt_objective(theta, s, y, w, reg):
    z = theta[0] * s + theta[1]
    return np.sum(w * (np.logaddexp(0.0, z) - y * z)) + 0.5 * reg * (theta @ theta)


def fit_platt(scores, labels, reg: float = 1e-6, sample_weight=None) -> Platt:
    """Ridge-regularised logistic regression of ``labels`` on ``scores``.

    Minimises the mean log-loss of ``sigmoid(a*s + b)`` plus
    ``reg/2 * (a**2 + b**2)`` by damped Newton steps. Using the mean (rather
    than the sum) makes the fit invariant to duplicating the data. Iteration
    stops when the gradient norm drops below 1e-10 or after 100 steps;
    parameters are kept within ``[-1e3, 1e3]``.
    """
    s, y = _check_xy(scores, labels)
    if s.size < 2:
        raise ValueError("Platt scaling needs at least 2 examples")
    w = np.full(s.size, 1.0 / s.size) if sample_weight is None else np.asarray(sample_weight, float) / np.sum(sample_weight)
    theta = np.zeros(2)
    f = _platt_objective(theta, s, y, w, reg)
    for _ in range(PLATT_MAX_ITER):
        p = expit(theta[0] * s + theta[1])
        r = w * (p - y)
        g = np.array([r @ s, r.sum()]) + reg * theta
        if np.linalg.norm(g) < PLATT_GTOL:
            break
        h = w * p * (1 - p)
        H = np.array([[h @ (s * s), h @ s], [h @ s, h.sum()]]) + reg * np.eye(2)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = g
        lr = 1.0
        while True:
            cand = np.clip(theta - lr * step, -PLATT_BOUND, PLATT_BOUND)
            fc = _platt_objective(cand, s, y, w, reg)
            if fc <= f or lr < 1e-10:
                break
            lr *= 0.5
        if np.array_equal(cand, theta):
            break
        theta, f = cand, fc
    return Platt(float(theta[0]), float(theta[1]))


def pool_adjacent_violators(y, w=None) -> np.ndarray:
    """Weighted least-squares non-decreasing fit of the sequence ``y``."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    means, weights, sizes = [], [], []
    for yi, wi in zip(y, w):
        means.append(yi)
        weights.append(wi)
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, n2 = means.pop(), weights.pop(), sizes.pop()
            wt = weights[-1] + w2
            means[-1] = (means[-1] * weights[-1] + m2 * w2) / wt
            weights[-1] = wt
            sizes[-1] += n2
    return np.repeat(means, sizes)


def fit_isotonic(scores, labels) -> Isotonic:
    """Pool-adjacent-violators fit; equal scores are pooled before fitting."""
    s, y = _check_xy(scores, labels)
    if s.size == 0:
        raise ValueError("isotonic fit needs at least one example")
    xs, inv, counts = np.unique(s, return_inverse=True, return_counts=True)
    ymean = np.bincount(inv, weights=y) / counts
    fitted = pool_adjacent_violators(ymean, counts)
    keep = np.ones(xs.size, dtype=bool)
    keep[1:] = fitted[1:] != fitted[:-1]
    return Isotonic(tuple(xs[keep].tolist()), tuple(fitted[keep].tolist()))


def fit_histogram(scores, labels, bins: int = 10) -> Histogram:
    """Equal-frequency histogram binning.

    Cut points are the ``k/bins`` sample quantiles (duplicates dropped). Each
    bin predicts its label mean; an empty bin copies the nearest non-empty
    bin (the lower one on a tie).
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    s, y = _check_xy(scores, labels)
    if s.size == 0:
        raise ValueError("histogram fit needs at least one example")
    cuts = np.unique(np.quantile(s, np.arange(1, bins) / bins)) if bins > 1 else np.empty(0)
    idx = np.searchsorted(cuts, s, side="left")
    k = cuts.size + 1
    cnt = np.bincount(idx, minlength=k)
    tot = np.bincount(idx, weights=y, minlength=k)
    values = np.full(k, np.nan)
    filled = cnt > 0
    values[filled] = tot[filled] / cnt[filled]
    full = np.flatnonzero(filled)
    for i in np.flatnonzero(~filled):
        j = full[np.argmin(np.abs(full - i))]
        values[i] = values[j]
    return Histogram(tuple(cuts.tolist()), tuple(values.tolist()))


FITTERS = {"platt": fit_platt, "isotonic": fit_isotonic, "histogram": fit_histogram}
