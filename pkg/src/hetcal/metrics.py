"""Exact ranking and probability metrics on finite distributions and datasets.

All distribution metrics take a transform ``t`` and evaluate it on every
atom; passing ``None`` means the raw score. AUC-type metrics count ties with
weight one half.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibrators import Transform
from .score_model import Dataset, DiscreteDistribution

TIE_WEIGHT = 0.5


class MetricError(ValueError):
    """Metric undefined for the input (e.g. only one label present)."""


@dataclass(frozen=True)
class RocThreshold:
    T: float
    q: float

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("q must lie in [0, 1]")


def _values(dist: DiscreteDistribution, t, partitioned: bool) -> np.ndarray:
    if t is None:
        return np.asarray(dist.score, dtype=float)
    parts = dist.partition if partitioned else None
    return np.asarray(t(dist.score, parts), dtype=float)


def _grouped(dist: DiscreteDistribution, v: np.ndarray):
    """Label-conditional masses per distinct transformed value, ascending."""
    m0, m1 = dist.label_mass(0), dist.label_mass(1)
    if m0 <= 0 or m1 <= 0:
        raise MetricError("metric needs positive mass on both labels")
    levels, inv = np.unique(v, return_inverse=True)
    g0 = np.bincount(inv, weights=np.where(dist.label == 0, dist.prob, 0.0), minlength=levels.size) / m0
    g1 = np.bincount(inv, weights=np.where(dist.label == 1, dist.prob, 0.0), minlength=levels.size) / m1
    return levels, g0, g1


def _auc_from_values(dist, v) -> float:
    _, g0, g1 = _grouped(dist, v)
    below0 = np.concatenate(([0.0], np.cumsum(g0)[:-1]))
    return float(np.sum(g1 * below0) + TIE_WEIGHT * np.sum(g1 * g0))


def auc(dist: DiscreteDistribution) -> float:
    """Probability a label-1 draw outscores a label-0 draw, ties counted half."""
    return _auc_from_values(dist, dist.score)


def calibrated_auc(dist: DiscreteDistribution, t: Transform) -> float:
    """AUC of ``t(score)``; the transform does not see partition ids."""
    return _auc_from_values(dist, _values(dist, t, partitioned=False))


def partition_calibrated_auc(dist: DiscreteDistribution, t: Transform, n_partitions: int | None = None) -> float:
    """AUC of ``t(score, partition)`` over all pairs of atoms."""
    if n_partitions is not None and dist.n_partitions > n_partitions:
        raise ValueError("distribution uses more partitions than declared")
    return _auc_from_values(dist, _values(dist, t, partitioned=True))


def roc_point(dist: DiscreteDistribution, t: Transform | None, th: RocThreshold) -> tuple[float, float]:
    """(FPR, TPR) at threshold ``T``, counting a fraction ``q`` of mass tied at ``T``."""
    v = _values(dist, t, partitioned=True)
    m0, m1 = dist.label_mass(0), dist.label_mass(1)
    if m0 <= 0 or m1 <= 0:
        raise MetricError("metric needs positive mass on both labels")
    w = (v > th.T) + th.q * (v == th.T)
    fpr = float(np.sum(dist.prob * w * (dist.label == 0)) / m0)
    tpr = float(np.sum(dist.prob * w * (dist.label == 1)) / m1)
    return fpr, tpr


@dataclass(frozen=True)
class RocCurve:
    """Step ROC curve from (0, 0) to (1, 1).

    Consecutive points bound one tie group of transformed values; moving the
    tie fraction ``q`` from 0 to 1 traces the straight segment between them.
    """

    fpr: np.ndarray
    tpr: np.ndarray

    def area(self) -> float:
        return float(np.sum(np.diff(self.fpr) * (self.tpr[1:] + self.tpr[:-1]) / 2.0))

    def points(self) -> list[list[float]]:
        return [[float(a), float(b)] for a, b in zip(self.fpr, self.tpr)]

    def tpr_at(self, x) -> np.ndarray:
        """Largest TPR reachable at FPR ``x`` (the curve read as TPR(FPR^-1(x)))."""
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        f, r = self.fpr, self.tpr
        i = np.searchsorted(f, x, side="right") - 1
        i = np.clip(i, 0, f.size - 1)
        j = np.minimum(i + 1, f.size - 1)
        on = f[i] == x
        df = f[j] - f[i]
        with np.errstate(invalid="ignore", divide="ignore"):
            lin = r[i] + (x - f[i]) * (r[j] - r[i]) / df
        return np.where(on | (df == 0), r[i], lin)

    def fpr_at(self, x) -> np.ndarray:
        """Smallest FPR at which TPR ``x`` is reached (FPR(TPR^-1(x)))."""
        flipped = RocCurve(self.tpr, self.fpr)
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        f, r = flipped.fpr, flipped.tpr
        i = np.searchsorted(f, x, side="left")
        i = np.clip(i, 0, f.size - 1)
        h = np.maximum(i - 1, 0)
        on = f[i] == x
        df = f[i] - f[h]
        with np.errstate(invalid="ignore", divide="ignore"):
            lin = r[h] + (x - f[h]) * (r[i] - r[h]) / df
        return np.where(on | (df == 0), r[i], lin)


def roc_curve(dist: DiscreteDistribution, t: Transform | None = None) -> RocCurve:
    """Sweep thresholds from the top transformed value down with q in {0, 1}."""
    _, g0, g1 = _grouped(dist, _values(dist, t, partitioned=True))
    fpr = np.concatenate(([0.0], np.cumsum(g0[::-1])))
    tpr = np.concatenate(([0.0], np.cumsum(g1[::-1])))
    fpr[-1] = tpr[-1] = 1.0
    return RocCurve(fpr, tpr)


def _int_x_over_linear(alpha: float, c: float, x0: float, x1: float) -> float:
    """Integral of x / (alpha*x + c) over [x0, x1]; alpha >= 1, alpha*x + c > 0 inside."""
    if c == 0.0:
        return (x1 - x0) / alpha
    return (x1 - x0) / alpha - (c / alpha ** 2) * math.log((alpha * x1 + c) / (alpha * x0 + c))


def pr_auc(dist: DiscreteDistribution, t: Transform | None = None) -> float:
    """Integral over recall x of x / (x + FPR(TPR^-1(x))), evaluated in closed form.

    On each ROC segment FPR is affine in TPR, so the integrand is
    x / (alpha*x + c) and integrates exactly.
    """
    curve = roc_curve(dist, t)
    total = 0.0
    for f0, f1, r0, r1 in zip(curve.fpr[:-1], curve.fpr[1:], curve.tpr[:-1], curve.tpr[1:]):
        if r1 <= r0:
            continue
        m = (f1 - f0) / (r1 - r0)
        total += _int_x_over_linear(1.0 + m, f0 - m * r0, r0, r1)
    return float(total)


def log_loss(dist: DiscreteDistribution, t: Transform | None = None) -> float:
    """Partition-calibrated log-loss of probability-valued ``t``.

    ``t=None`` scores ``sigmoid(score)``, the plain log-loss. Returns ``inf``
    when ``t`` puts probability 0 on an observed outcome.
    """
    if t is None:
        from scipy.special import expit
        v = expit(dist.score)
    else:
        v = _values(dist, t, partitioned=True)
    if np.any((v < 0) | (v > 1)):
        raise ValueError("log_loss needs a probability-valued transform")
    pos = dist.prob > 0
    y = dist.label[pos]
    p = np.where(y == 1, v[pos], 1.0 - v[pos])
    if np.any(p == 0):
        return math.inf
    return float(-np.sum(dist.prob[pos] * np.log(p)))


def expected_calibration_error(dist: DiscreteDistribution, t: Transform | None = None,
                               by_partition: bool = False) -> float:
    """Root of the mass-weighted squared gap between ``t(s)`` and P(y=1 | s).

    Groups atoms by score, or by (score, partition) when ``by_partition``.
    Without ``by_partition`` the transform must agree across partitions at a
    shared score.
    """
    if t is None:
        from scipy.special import expit
        v = expit(dist.score)
    else:
        v = _values(dist, t, partitioned=True)
    key = np.stack([dist.score, dist.partition.astype(float)], axis=1) if by_partition else dist.score[:, None]
    _, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    k = inv.max() + 1
    mass = np.bincount(inv, weights=dist.prob, minlength=k)
    pos = np.bincount(inv, weights=dist.prob * (dist.label == 1), minlength=k)
    vmin = np.full(k, np.inf)
    vmax = np.full(k, -np.inf)
    np.minimum.at(vmin, inv, v)
    np.maximum.at(vmax, inv, v)
    if np.any(vmax - vmin > 0):
        raise ValueError("transform varies across partitions at one score; use by_partition=True")
    live = mass > 0
    gap = vmin[live] - pos[live] / mass[live]
    return float(math.sqrt(np.sum(mass[live] * gap ** 2)))


# --------------------------------------------------------------------------
# empirical metrics


def _scores_labels(data, labels=None):
    if isinstance(data, Dataset):
        return data.scores, data.labels
    return np.asarray(data, dtype=float), np.asarray(labels)


def empirical_auc(data, labels=None) -> float:
    """Sort-based AUC of a dataset (or of ``scores, labels`` arrays).

    Equal scores are grouped and cross-label ties counted as half pairs, so
    the result matches explicit pair counting bit for bit.
    """
    s, y = _scores_labels(data, labels)
    y = np.asarray(y).astype(np.int64)
    n1 = int(y.sum())
    n0 = y.size - n1
    if n0 == 0 or n1 == 0:
        raise MetricError("AUC needs both labels present")
    _, inv = np.unique(s, return_inverse=True)
    c1 = np.bincount(inv, weights=y).astype(np.int64)
    c0 = np.bincount(inv).astype(np.int64) - c1
    below0 = np.concatenate(([0], np.cumsum(c0)[:-1]))
    # strict + tie/2 is an exact binary fraction, so this rounds once, like pair counting
    return (int(np.sum(c1 * below0)) + TIE_WEIGHT * int(np.sum(c1 * c0))) / (n0 * n1)


def binned_calibration_error(probs, labels, bins: int = 15) -> float:
    """Binned estimate of the expected calibration error with equal-mass bins."""
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels, dtype=float)
    order = np.argsort(p, kind="stable")
    groups = np.array_split(order, min(bins, p.size))
    sq = sum(g.size * (p[g].mean() - y[g].mean()) ** 2 for g in groups if g.size)
    return float(math.sqrt(sq / p.size))


def empirical_report(probs, labels, bins: int = 15) -> dict:
    """auc, pr_auc, log_loss, ece and the ROC points of predicted probabilities."""
    from .calibrators import Identity
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels)
    dist = DiscreteDistribution(p, np.zeros(p.size, dtype=np.int64), y, np.full(p.size, 1.0 / p.size),
                                normalize=True)
    ident = Identity()
    return {
        "auc": empirical_auc(p, y),
        "pr_auc": pr_auc(dist, ident),
        "log_loss": log_loss(dist, ident),
        "ece": binned_calibration_error(p, y, bins),
        "roc": roc_curve(dist, ident).points(),
    }
