"""Tree-partitioned calibration: fit, predict, evaluate, serialize.

A :class:`HeterogeneousCalibrator` routes each example to a leaf of a
partition tree and applies that leaf's calibrator to the logit score.
Three layouts are supported:

``single``
    one tree, one per-leaf transform.
``forest``
    several trees, each with its own per-leaf transform; probabilities are
    averaged across trees.
``boosted``
    two trees applied in sequence; the second stage calibrates the
    logit-space output of the first.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import expit, logit

from . import metrics
from .calibrators import FITTERS, Composed, PerPartition, Platt, Transform, transform_from_dict
from .partitioner import PartitionTree, TreeConfig, fit_forest, fit_tree
from .score_model import Dataset

MODEL_VERSION = 1
CALIBRATORS = tuple(FITTERS)


@dataclass(frozen=True)
class HetCalConfig:
    tree: TreeConfig = field(default_factory=lambda: TreeConfig(max_depth=3, min_samples_leaf=100))
    calibrator: str = "platt"
    min_calib_samples_per_partition: int = 50
    n_trees: int | None = None
    stages: int = 1
    platt_reg: float = 1e-6
    histogram_bins: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.calibrator not in CALIBRATORS:
            raise ValueError(f"calibrator must be one of {CALIBRATORS}")
        if self.min_calib_samples_per_partition < 2:
            raise ValueError("min_calib_samples_per_partition must be >= 2")
        if self.stages not in (1, 2):
            raise ValueError("stages must be 1 or 2")
        if self.n_trees is not None and self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.n_trees is not None and self.stages == 2:
            raise ValueError("forest and boosted layouts cannot be combined")

    @property
    def mode(self) -> str:
        if self.n_trees is not None:
            return "forest"
        return "boosted" if self.stages == 2 else "single"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "HetCalConfig":
        d = dict(d)
        d["tree"] = TreeConfig(**d["tree"])
        return cls(**d)


@dataclass(frozen=True)
class LeafReport:
    """Calibration rows seen by one leaf and whether it fell back."""

    stage: int
    leaf: int
    n_calib: int
    n_pos: int
    fallback: bool


@dataclass(frozen=True)
class HeterogeneousCalibrator:
    trees: tuple
    transforms: tuple
    config: HetCalConfig
    fallback: Transform
    leaf_reports: tuple = ()

    @property
    def mode(self) -> str:
        return self.config.mode

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    @property
    def composed(self) -> Transform:
        """The boosted layout as one transform taking ``(stage1_ids, stage2_ids)``."""
        if self.mode != "boosted":
            raise ValueError("only boosted calibrators compose")
        return Composed(self.transforms[1], self.transforms[0])

    def predict(self, features, scores) -> np.ndarray:
        return predict(self, features, scores)

    def to_dict(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "mode": self.mode,
            "config": self.config.to_dict(),
            "trees": [t.to_dict() for t in self.trees],
            "transforms": [t.to_dict() for t in self.transforms],
            "fallback": self.fallback.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HeterogeneousCalibrator":
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        return cls(
            tuple(PartitionTree.from_dict(t) for t in d["trees"]),
            tuple(transform_from_dict(t) for t in d["transforms"]),
            HetCalConfig.from_dict(d["config"]),
            transform_from_dict(d["fallback"]),
        )


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("HETCAL_THREADS", "1")))
    except ValueError:
        return 1


def _fit_one(cfg: HetCalConfig, s, y) -> Transform:
    if cfg.calibrator == "platt":
        return FITTERS["platt"](s, y, reg=cfg.platt_reg)
    if cfg.calibrator == "histogram":
        return FITTERS["histogram"](s, y, bins=cfg.histogram_bins)
    return FITTERS["isotonic"](s, y)


def _calibrate_leaves(cfg: HetCalConfig, n_leaves: int, leaf_of, s, y, fallback: Transform, stage: int = 0):
    """Per-leaf transforms for one tree; returns (PerPartition, reports)."""
    jobs, reports = [], []
    for leaf in range(n_leaves):
        m = leaf_of == leaf
        n, n_pos = int(m.sum()), int(y[m].sum())
        single_label = n_pos in (0, n)
        use_fallback = n < cfg.min_calib_samples_per_partition or (single_label and cfg.calibrator != "platt")
        reports.append(LeafReport(stage, leaf, n, n_pos, use_fallback))
        if not use_fallback:
            jobs.append((leaf, s[m], y[m]))
    threads = min(_threads(), max(1, len(jobs)))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            fitted = list(ex.map(lambda j: _fit_one(cfg, j[1], j[2]), jobs))
    else:
        fitted = [_fit_one(cfg, j[1], j[2]) for j in jobs]
    return PerPartition({j[0]: t for j, t in zip(jobs, fitted)}, fallback), reports


def _check_inputs(train: Dataset, calib: Dataset):
    if len(train) == 0 or len(calib) == 0:
        raise ValueError("train and calibration data must be nonempty")
    n_pos = int(calib.labels.sum())
    if n_pos in (0, len(calib)):
        raise ValueError("calibration data must contain both labels")
    if train.n_features != calib.n_features:
        raise ValueError("train and calibration data have different feature counts")


def fit(train: Dataset, calib: Dataset, cfg: HetCalConfig = HetCalConfig()) -> HeterogeneousCalibrator:
    """Grow the partition on ``train`` and calibrate each leaf on ``calib``.

    Leaves with fewer than ``min_calib_samples_per_partition`` calibration
    rows, or with a single label under isotonic or histogram calibration,
    use a global calibrator fitted on every calibration row.
    """
    if cfg.stages == 2:
        return fit_boosted(train, calib, cfg)
    _check_inputs(train, calib)
    s, y = calib.scores, calib.labels.astype(np.int64)
    fallback = _fit_one(cfg, s, y)
    if cfg.n_trees is None:
        trees = [fit_tree(train, cfg.tree)]
    else:
        trees = fit_forest(train, cfg.tree, cfg.n_trees, seed=cfg.seed)
    transforms, reports = [], []
    for i, tree in enumerate(trees):
        t, r = _calibrate_leaves(cfg, tree.n_leaves, tree.assign(calib.features), s, y, fallback, stage=i)
        transforms.append(t)
        reports.extend(r)
    return HeterogeneousCalibrator(tuple(trees), tuple(transforms), cfg, fallback, tuple(reports))


def fit_boosted(train: Dataset, calib: Dataset, cfg: HetCalConfig = HetCalConfig(stages=2),
                trees: tuple[PartitionTree, PartitionTree] | None = None) -> HeterogeneousCalibrator:
    """Two partitions applied in sequence.

    Stage one calibrates raw logit scores per leaf of the first tree; stage
    two calibrates the stage-one logits per leaf of the second tree, so a
    Platt pair gives ``sigmoid(a2 * (a1 * s + b1) + b2)``. Without ``trees``
    the first tree is grown on ``train`` and the second on a bootstrap of
    ``train`` drawn from ``cfg.seed``.
    """
    _check_inputs(train, calib)
    cfg = replace(cfg, stages=2, n_trees=None)
    if trees is None:
        rng = np.random.default_rng(cfg.seed)
        boot = train.subset(rng.integers(0, len(train), len(train)))
        trees = (fit_tree(train, cfg.tree), fit_tree(boot, cfg.tree))
    t1, t2 = trees
    s, y = calib.scores, calib.labels.astype(np.int64)
    fallback = _fit_one(cfg, s, y)
    first, r1 = _calibrate_leaves(cfg, t1.n_leaves, t1.assign(calib.features), s, y, fallback, stage=0)
    z = first.logit(s, t1.assign(calib.features))
    second, r2 = _calibrate_leaves(cfg, t2.n_leaves, t2.assign(calib.features), z, y, _fit_one(cfg, z, y), stage=1)
    return HeterogeneousCalibrator((t1, t2), (first, second), cfg, fallback, tuple(r1 + r2))


def predict(hc: HeterogeneousCalibrator, features, scores) -> np.ndarray:
    """Calibrated probabilities for rows of ``features`` with logit ``scores``."""
    s = np.asarray(scores, dtype=float)
    X = np.asarray(features, dtype=float).reshape(s.size, -1) if s.size else np.empty((0, hc.n_features))
    if X.shape[1] != hc.n_features:
        raise ValueError(f"expected {hc.n_features} features, got {X.shape[1]}")
    if hc.mode == "boosted":
        parts = (hc.trees[0].assign(X), hc.trees[1].assign(X))
        return hc.composed(s, parts)
    probs = np.array([t(s, tree.assign(X)) for tree, t in zip(hc.trees, hc.transforms)])
    # mean taken as offsets from the first tree so identical trees reproduce it bit for bit
    return probs[0] + np.mean(probs - probs[0], axis=0)


def evaluate(hc: HeterogeneousCalibrator, test: Dataset, bins: int = 15) -> dict:
    """Calibrated and baseline ``sigmoid(score)`` reports plus the relative AUC lift in percent."""
    probs = predict(hc, test.features, test.scores)
    return compare_to_baseline(probs, test.scores, test.labels, bins)


def compare_to_baseline(probs, scores, labels, bins: int = 15) -> dict:
    cal = metrics.empirical_report(probs, labels, bins)
    base = metrics.empirical_report(expit(np.asarray(scores, dtype=float)), labels, bins)
    return {"calibrated": cal, "baseline": base, "auc_lift_pct": auc_lift_pct(cal["auc"], base["auc"])}


def auc_lift_pct(calibrated: float, baseline: float) -> float:
    return 100.0 * (calibrated - baseline) / baseline


# --------------------------------------------------------------------------
# interpolation between the base model and the tree


def with_leaf_transforms(hc: HeterogeneousCalibrator, make) -> HeterogeneousCalibrator:
    """Copy of ``hc`` whose every leaf uses ``make(stage, leaf)``; no leaf falls back."""
    transforms = tuple(
        PerPartition({leaf: make(i, leaf) for leaf in range(tree.n_leaves)}, t.fallback)
        for i, (tree, t) in enumerate(zip(hc.trees, hc.transforms))
    )
    return replace(hc, transforms=transforms)


def as_base_model(hc: HeterogeneousCalibrator) -> HeterogeneousCalibrator:
    """Every leaf at Platt(1, 0): predictions become ``sigmoid(score)``."""
    return with_leaf_transforms(hc, lambda stage, leaf: Platt(1.0, 0.0))


def leaf_positive_rates(tree: PartitionTree, data: Dataset) -> np.ndarray:
    """Positive rate of ``data`` per leaf; NaN for leaves no row reaches."""
    leaf = tree.assign(data.features)
    n = np.bincount(leaf, minlength=tree.n_leaves)
    pos = np.bincount(leaf, weights=data.labels, minlength=tree.n_leaves)
    with np.errstate(invalid="ignore", divide="ignore"):
        return pos / n


def as_tree_model(hc: HeterogeneousCalibrator, data: Dataset) -> HeterogeneousCalibrator:
    """Every leaf at Platt(0, logit(p_i)) with ``p_i`` the leaf's positive rate in ``data``.

    Predictions become the leaf rates. Leaves ``data`` never reaches take
    its global rate. Single-stage and forest layouts only.
    """
    if hc.mode == "boosted":
        raise ValueError("tree interpolation is defined for single-stage layouts")
    overall = float(np.mean(data.labels))
    rates = [leaf_positive_rates(tree, data) for tree in hc.trees]

    def make(stage, leaf):
        p = rates[stage][leaf]
        with np.errstate(divide="ignore"):
            return Platt(0.0, float(logit(overall if np.isnan(p) else p)))

    return with_leaf_transforms(hc, make)


# --------------------------------------------------------------------------
# persistence


def save_model(hc: HeterogeneousCalibrator, path) -> None:
    """Atomic write of the model JSON (sorted keys)."""
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(hc.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def load_model(path) -> HeterogeneousCalibrator:
    with open(path, encoding="utf-8") as fh:
        return HeterogeneousCalibrator.from_dict(json.load(fh))
