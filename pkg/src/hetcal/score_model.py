"""Core data types: labelled examples, datasets and finite score distributions."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np
from scipy.special import logit

PROB_CLAMP = 1e-12


class SchemaError(ValueError):
    """A required CSV column is missing."""


class ParseError(ValueError):
    """A CSV cell could not be parsed as a number."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class ValidationError(ValueError):
    """Input parsed but violates a data invariant (label not in {0,1}, NaN score, ...)."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


@dataclass(frozen=True)
class LabeledExample:
    features: tuple[float, ...]
    label: int
    score: float

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValidationError(f"label must be 0 or 1, got {self.label!r}")
        if not math.isfinite(self.score):
            raise ValidationError(f"score must be finite, got {self.score!r}")


class Dataset:
    """Column-oriented, read-only collection of labelled examples.

    Parameters
    ----------
    features : array_like, shape (n, d)
    labels : array_like of {0, 1}, shape (n,)
    scores : array_like, shape (n,)
        Base model output on the logit scale.
    role : str
        Informational tag ("train", "calib", "test", ...).
    feature_names : sequence of str, optional
    """

    def __init__(self, features, labels, scores, role: str = "data", feature_names=None):
        labels = np.asarray(labels)
        scores = np.asarray(scores, dtype=float).reshape(-1)
        n = scores.shape[0]
        features = np.asarray(features, dtype=float)
        if features.ndim != 2:
            features = features.reshape(n, -1) if n else features.reshape(0, 0)
        if features.shape[0] != n or labels.shape[0] != n:
            raise ValidationError("features, labels and scores must have the same length")
        if n and not np.all((labels == 0) | (labels == 1)):
            bad = int(np.flatnonzero((labels != 0) & (labels != 1))[0])
            raise ValidationError(f"label at index {bad} is not 0 or 1", row=bad)
        if not np.all(np.isfinite(scores)):
            bad = int(np.flatnonzero(~np.isfinite(scores))[0])
            raise ValidationError(f"score at index {bad} is not finite", row=bad)
        self.features = features
        self.labels = labels.astype(np.int8)
        self.scores = scores
        for arr in (self.features, self.labels, self.scores):
            arr.setflags(write=False)
        self.role = role
        if feature_names is None:
            feature_names = [f"f{j}" for j in range(features.shape[1])]
        if len(feature_names) != features.shape[1]:
            raise ValidationError("feature_names length does not match feature arity")
        self.feature_names = tuple(feature_names)

    @classmethod
    def from_examples(cls, examples: Sequence[LabeledExample], role: str = "data", feature_names=None):
        arity = {len(e.features) for e in examples}
        if len(arity) > 1:
            raise ValidationError("examples disagree on feature arity")
        d = arity.pop() if arity else (len(feature_names) if feature_names else 0)
        feats = np.array([e.features for e in examples], dtype=float).reshape(len(examples), d)
        return cls(feats, [e.label for e in examples], [e.score for e in examples], role, feature_names)

    def __len__(self) -> int:
        return self.scores.shape[0]

    def __iter__(self) -> Iterator[LabeledExample]:
        for x, y, s in zip(self.features, self.labels, self.scores):
            yield LabeledExample(tuple(float(v) for v in x), int(y), float(s))

    def __getitem__(self, idx) -> LabeledExample:
        return LabeledExample(tuple(float(v) for v in self.features[idx]), int(self.labels[idx]), float(self.scores[idx]))

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, index, role: str | None = None) -> "Dataset":
        return Dataset(self.features[index], self.labels[index], self.scores[index],
                       role or self.role, self.feature_names)

    def __repr__(self):
        return f"Dataset(n={len(self)}, d={self.n_features}, role={self.role!r})"


def _parse_float(cell: str, row: int, column: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"row {row}: column {column!r} value {cell!r} is not numeric", row=row) from None


def load_csv(path, label_column: str = "label", score_column: str = "score",
             score_scale: str = "logit", role: str = "data") -> Dataset:
    """Read a headered CSV into a :class:`Dataset`.

    Every column other than the label and score columns is a feature, in file
    order. Rows are numbered from 1 (the first data row) in error messages.
    With ``score_scale="probability"`` scores are mapped through the logit
    after clamping to ``[1e-12, 1 - 1e-12]``.
    """
    if score_scale not in ("logit", "probability"):
        raise ValueError(f"unknown score scale {score_scale!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: file is empty, expected a header row") from None
        for col in (label_column, score_column):
            if col not in header:
                raise SchemaError(f"{path}: missing required column {col!r}")
        li, si = header.index(label_column), header.index(score_column)
        feat_idx = [j for j in range(len(header)) if j not in (li, si)]
        labels, scores, feats = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"row {row_no}: expected {len(header)} cells, got {len(row)}", row=row_no)
            y = _parse_float(row[li], row_no, label_column)
            if y not in (0.0, 1.0):
                raise ValidationError(f"row {row_no}: label {row[li]!r} is not 0 or 1", row=row_no)
            s = _parse_float(row[si], row_no, score_column)
            if not math.isfinite(s):
                raise ValidationError(f"row {row_no}: score {row[si]!r} is not finite", row=row_no)
            labels.append(int(y))
            scores.append(s)
            feats.append([_parse_float(row[j], row_no, header[j]) for j in feat_idx])
    scores = np.asarray(scores, dtype=float)
    if score_scale == "probability":
        scores = logit(np.clip(scores, PROB_CLAMP, 1 - PROB_CLAMP))
    feats = np.asarray(feats, dtype=float).reshape(len(labels), len(feat_idx))
    return Dataset(feats, np.asarray(labels, dtype=np.int8), scores, role,
                   [header[j] for j in feat_idx])


def write_csv(data: Dataset, path, extra_columns: Mapping[str, Sequence[float]] | None = None) -> None:
    """Write ``data`` as ``label,score,<features>,<extra>`` with round-trip float precision.

    The file is written to a temporary sibling and renamed into place.
    """
    extra = dict(extra_columns or {})
    header = ["label", "score", *data.feature_names, *extra]
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        cols = [np.asarray(v, dtype=float) for v in extra.values()]
        for i in range(len(data)):
            w.writerow([int(data.labels[i]), repr(float(data.scores[i])),
                        *(repr(float(v)) for v in data.features[i]),
                        *(repr(float(c[i])) for c in cols)])
    os.replace(tmp, path)


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite joint distribution over (score, partition, label).

    Duplicate (score, partition, label) triples are merged on construction and
    atoms are stored sorted by (partition, score, label). ``prob`` are joint
    masses summing to one.
    """

    score: np.ndarray
    partition: np.ndarray
    label: np.ndarray
    prob: np.ndarray
    _keys: tuple = field(default=None, repr=False, compare=False)

    def __init__(self, score, partition, label, prob, normalize: bool = False):
        score = np.asarray(score, dtype=float).reshape(-1)
        partition = np.asarray(partition, dtype=np.int64).reshape(-1)
        label = np.asarray(label, dtype=np.int64).reshape(-1)
        prob = np.asarray(prob, dtype=float).reshape(-1)
        if not (score.shape == partition.shape == label.shape == prob.shape):
            raise ValueError("atom arrays must have equal length")
        if score.size == 0:
            raise ValueError("distribution needs at least one atom")
        if np.any(prob < 0) or not np.all(np.isfinite(prob)):
            raise ValueError("atom probabilities must be finite and non-negative")
        if not np.all(np.isin(label, (0, 1))):
            raise ValueError("labels must be 0 or 1")
        if np.any(partition < 0):
            raise ValueError("partition ids must be non-negative")
        if normalize:
            prob = prob / prob.sum()
        if abs(prob.sum() - 1.0) > 1e-12:
            raise ValueError(f"atom probabilities sum to {prob.sum()!r}, expected 1")
        order = np.lexsort((label, score, partition))
        score, partition, label, prob = score[order], partition[order], label[order], prob[order]
        new = np.ones(score.size, dtype=bool)
        new[1:] = (score[1:] != score[:-1]) | (partition[1:] != partition[:-1]) | (label[1:] != label[:-1])
        grp = np.cumsum(new) - 1
        merged = np.zeros(grp[-1] + 1)
        np.add.at(merged, grp, prob)
        for name, arr in (("score", score[new]), ("partition", partition[new]),
                          ("label", label[new]), ("prob", merged)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_keys", None)

    def __len__(self):
        return self.score.size

    def label_mass(self, y: int) -> float:
        return float(self.prob[self.label == y].sum())

    @property
    def p0(self) -> np.ndarray:
        """Label-0 conditional mass of each atom (zero on label-1 atoms)."""
        m = self.label_mass(0)
        return np.where(self.label == 0, self.prob / m if m > 0 else 0.0, 0.0)

    @property
    def p1(self) -> np.ndarray:
        m = self.label_mass(1)
        return np.where(self.label == 1, self.prob / m if m > 0 else 0.0, 0.0)

    def keys(self):
        """Distinct (score, partition) keys with per-key masses.

        Returns
        -------
        score, partition : ndarray
            Key coordinates, sorted by (partition, score).
        joint0, joint1 : ndarray
            Joint masses P(y=0, key) and P(y=1, key).
        """
        if self._keys is None:
            new = np.ones(len(self), dtype=bool)
            new[1:] = (self.score[1:] != self.score[:-1]) | (self.partition[1:] != self.partition[:-1])
            grp = np.cumsum(new) - 1
            j0 = np.zeros(grp[-1] + 1)
            j1 = np.zeros(grp[-1] + 1)
            np.add.at(j0, grp[self.label == 0], self.prob[self.label == 0])
            np.add.at(j1, grp[self.label == 1], self.prob[self.label == 1])
            object.__setattr__(self, "_keys", (self.score[new], self.partition[new], j0, j1))
        return self._keys

    @property
    def n_partitions(self) -> int:
        return int(self.partition.max()) + 1


def empirical_distribution(data: Dataset, assignment=None) -> DiscreteDistribution:
    """Counting distribution of a dataset; ``assignment`` maps each row to a partition id."""
    n = len(data)
    if n == 0:
        raise ValueError("cannot build a distribution from an empty dataset")
    part = np.zeros(n, dtype=np.int64) if assignment is None else np.asarray(assignment, dtype=np.int64)
    if part.shape != (n,):
        raise ValueError("assignment must give one partition id per example")
    return DiscreteDistribution(data.scores, part, data.labels, np.full(n, 1.0 / n), normalize=True)


def split_dataset(data: Dataset, fractions=(0.6, 0.2, 0.2), seed: int = 0):
    """Shuffle and cut into (train, calib, test).

    Sizes are ``floor(f * n)`` for the first two parts; the remainder goes to
    the last. Deterministic for a fixed ``seed``.
    """
    fr = np.asarray(fractions, dtype=float)
    if fr.shape != (3,) or np.any(fr <= 0) or abs(fr.sum() - 1.0) > 1e-9:
        raise ValueError("fractions must be three positive numbers summing to 1")
    n = len(data)
    n_train = int(math.floor(fr[0] * n + 1e-9))
    n_calib = int(math.floor(fr[1] * n + 1e-9))
    n_test = n - n_train - n_calib
    if min(n_train, n_calib, n_test) == 0:
        raise ValueError(f"fractions {tuple(fr)} leave an empty split for n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    roles = ("train", "calib", "test")
    cuts = np.split(perm, [n_train, n_train + n_calib])
    return tuple(data.subset(np.sort(idx), role) for idx, role in zip(cuts, roles))
