"""Native classifiers over fingerprint vectors: KNN, CART tree, forest, voting.

All classifiers consume (range triple, cell label) training rows and emit
probability mass per label. Determinism rules shared by everything here:
every tie (neighbor distance, split quality, argmax) breaks toward the
lower label, lower feature index, or lower threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fingerprint import FingerprintDB, GridSpec, LabelOutOfRangeError, cell_vertex
from .geometry import PointMM, RangeTriple

__all__ = [
    "EmptyTrainingSetError",
    "KOutOfRangeError",
    "TrainingSet",
    "VoteWeights",
    "KnnClassifier",
    "TreeClassifier",
    "ForestClassifier",
    "SoftVoteClassifier",
    "argmax_label",
    "soft_vote",
    "localize",
]

ClassProbabilities = dict[int, float]


class EmptyTrainingSetError(ValueError):
    """No training rows were supplied."""


class KOutOfRangeError(ValueError):
    """k must satisfy 1 <= k <= number of training rows."""


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Fingerprint vectors with their cell labels.

    ``spec`` is optional; when present, labels are checked against it.
    """

    X: np.ndarray  # (n, 3) range vectors, anchors A/B/C
    y: np.ndarray  # (n,) cell labels
    spec: GridSpec | None = None

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] != 3 or y.shape != (X.shape[0],):
            raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
        if X.shape[0] == 0:
            raise EmptyTrainingSetError("training set is empty")
        if not np.all(np.isfinite(X)) or np.any(X <= 0.0):
            raise ValueError("training vectors must be finite and positive")
        if np.any(y < 0):
            raise LabelOutOfRangeError("labels must be non-negative")
        if self.spec is not None and np.any(y >= self.spec.cell_count):
            raise LabelOutOfRangeError(f"labels must be < {self.spec.cell_count}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return int(self.X.shape[0])

    @classmethod
    def from_rows(cls, rows: Sequence[tuple[RangeTriple, int]], spec: GridSpec | None = None) -> "TrainingSet":
        if len(rows) == 0:
            raise EmptyTrainingSetError("training set is empty")
        X = np.array([r.as_tuple() for r, _ in rows], dtype=float)
        y = np.array([label for _, label in rows], dtype=np.int64)
        return cls(X, y, spec)

    @classmethod
    def from_db(cls, db: FingerprintDB) -> "TrainingSet":
        """Each DB cell becomes one training row labeled with itself."""
        return cls(db.vectors, np.arange(len(db), dtype=np.int64), db.spec)


def argmax_label(probs: ClassProbabilities) -> int:
    """Label with the largest mass; equal masses go to the lower label."""
    if not probs:
        raise ValueError("empty probability mapping")
    best_label = -1
    best_mass = -math.inf
    for label in sorted(probs):
        if probs[label] > best_mass:
            best_mass = probs[label]
            best_label = label
    return best_label


class KnnClassifier:
    """Brute-force k-nearest-neighbor over fingerprint vectors.

    Neighbors are ranked by squared Euclidean distance, ties by lower
    label, and each of the k winners contributes 1/k probability mass.
    """

    def __init__(self, train: TrainingSet, k: int = 1):
        if not (1 <= k <= len(train)):
            raise KOutOfRangeError(f"k={k} with {len(train)} training rows")
        self._X = train.X
        self._y = train.y
        self.k = k

    def _neighbors(self, q: np.ndarray) -> np.ndarray:
        d2 = ((self._X - q) ** 2).sum(axis=1)
        order = np.lexsort((self._y, d2))
        return order[: self.k]

    def predict_proba(self, ranges: RangeTriple) -> ClassProbabilities:
        return self.predict_proba_batch(np.asarray([ranges.as_tuple()], dtype=float))[0]

    def predict(self, ranges: RangeTriple) -> int:
        return argmax_label(self.predict_proba(ranges))

    def predict_proba_batch(self, X: np.ndarray) -> list[ClassProbabilities]:
        X = np.asarray(X, dtype=float)
        out: list[ClassProbabilities] = []
        w = 1.0 / self.k
        for q in X:
            probs: ClassProbabilities = {}
            for r in self._neighbors(q):
                label = int(self._y[r])
                probs[label] = probs.get(label, 0.0) + w
            out.append(probs)
        return out

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return np.array([argmax_label(p) for p in self.predict_proba_batch(X)], dtype=np.int64)


def _occurrence_index(codes: np.ndarray) -> np.ndarray:
    """For each element, how many earlier elements carry the same code."""
    n = codes.shape[0]
    order = np.argsort(codes, kind="stable")
    sc = codes[order]
    first = np.ones(n, dtype=bool)
    first[1:] = sc[1:] != sc[:-1]
    group_start = np.maximum.accumulate(np.where(first, np.arange(n), 0))
    occ = np.empty(n, dtype=np.int64)
    occ[order] = np.arange(n) - group_start
    return occ


class TreeClassifier:
    """CART decision tree with Gini impurity over the three range features.

    Split thresholds are midpoints of consecutive sorted distinct values;
    rows with value <= threshold go left. Growth stops on pure nodes, at
    ``max_depth``, or when a node is smaller than 2 * ``min_leaf``; leaves
    keep their label frequencies. Given a feature RNG, every split attempt
    draws a fresh feature subset (DFS pre-order, left child first), which
    is how the forest decorrelates its members.
    """

    # Internal switch for the fast path on all-distinct-label nodes;
    # the equivalence with the generic sweep is covered by tests.
    _fast_unique_path = True

    def __init__(
        self,
        train: TrainingSet,
        max_depth: int | None = None,
        min_leaf: int = 1,
        *,
        feature_rng: np.random.Generator | None = None,
        features_per_split: int | None = None,
    ):
        if max_depth is not None and max_depth < 1:
            raise ValueError(f"max_depth must be >= 1 or None, got {max_depth}")
        if min_leaf < 1:
            raise ValueError(f"min_leaf must be >= 1, got {min_leaf}")
        if features_per_split is not None and not (1 <= features_per_split <= 3):
            raise ValueError(f"features_per_split must be in 1..3, got {features_per_split}")
        self._X = train.X
        self._y = train.y
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self._rng = feature_rng
        self._fps = features_per_split
        self._feature: list[int] = []
        self._threshold: list[float] = []
        self._left: list[int] = []
        self._right: list[int] = []
        self._leaf_labels: list[np.ndarray | None] = []
        self._leaf_probs: list[np.ndarray | None] = []
        self._build()
        # majority label per node (leaves only), argmax ties to lower label
        self._top = np.full(len(self._feature), -1, dtype=np.int64)
        for nid, labels in enumerate(self._leaf_labels):
            if labels is not None:
                self._top[nid] = labels[int(np.argmax(self._leaf_probs[nid]))]

    # -- construction ------------------------------------------------------

    def _new_node(self) -> int:
        self._feature.append(-1)
        self._threshold.append(math.nan)
        self._left.append(-1)
        self._right.append(-1)
        self._leaf_labels.append(None)
        self._leaf_probs.append(None)
        return len(self._feature) - 1

    def _make_leaf(self, nid: int, rows: np.ndarray) -> None:
        labels, counts = np.unique(self._y[rows], return_counts=True)
        self._leaf_labels[nid] = labels
        self._leaf_probs[nid] = counts / rows.shape[0]

    def _split_features(self) -> list[int]:
        if self._rng is None or self._fps is None or self._fps >= 3:
            return [0, 1, 2]
        picked = self._rng.choice(3, size=self._fps, replace=False)
        return sorted(int(f) for f in picked)

    def _build(self) -> None:
        n = self._X.shape[0]
        root = self._new_node()
        stack: list[tuple[int, np.ndarray, int]] = [(root, np.arange(n), 0)]
        while stack:
            nid, rows, depth = stack.pop()
            yn = self._y[rows]
            if (
                np.all(yn == yn[0])
                or (self.max_depth is not None and depth >= self.max_depth)
                or rows.shape[0] < 2 * self.min_leaf
            ):
                self._make_leaf(nid, rows)
                continue
            split = self._best_split(rows, self._split_features())
            if split is None:
                self._make_leaf(nid, rows)
                continue
            f, thr = split
            self._feature[nid] = f
            self._threshold[nid] = thr
            mask = self._X[rows, f] <= thr
            left = self._new_node()
            right = self._new_node()
            self._left[nid] = left
            self._right[nid] = right
            stack.append((right, rows[~mask], depth + 1))
            stack.append((left, rows[mask], depth + 1))

    def _best_split(self, rows: np.ndarray, features: list[int]) -> tuple[int, float] | None:
        n = rows.shape[0]
        codes = np.unique(self._y[rows], return_inverse=True)[1]
        n_classes = int(codes.max()) + 1

        if self._fast_unique_path and self.min_leaf == 1 and n_classes == n:
            # Every class occurs once, so every candidate split scores the
            # same weighted Gini of (n-2)/n and the generic sweep would pick
            # the first candidate of the first splittable feature.
            for f in features:
                col = self._X[rows, f]
                lo = col.min()
                above = col[col > lo]
                if above.shape[0] == 0:
                    continue
                return f, self._guarded_threshold(float(lo), float(above.min()))
            return None

        totals = np.bincount(codes, minlength=n_classes)
        best_imp = math.inf
        best: tuple[int, float] | None = None
        for f in features:
            col = self._X[rows, f]
            order = np.argsort(col, kind="stable")
            sv = col[order]
            sy = codes[order]
            change = np.flatnonzero(sv[1:] != sv[:-1]) + 1
            cand = change[(change >= self.min_leaf) & (change <= n - self.min_leaf)]
            if cand.shape[0] == 0:
                continue
            occ = _occurrence_index(sy)
            # moving row j left grows the left sum of squared counts by
            # 2*occ[j] + 1; same trick from the right for the right side
            left_sumsq = np.cumsum(2 * occ + 1)
            occ_r = totals[sy] - 1 - occ
            right_sumsq = np.concatenate(
                [np.cumsum((2 * occ_r + 1)[::-1])[::-1], np.zeros(1, dtype=np.int64)]
            )
            nl = cand.astype(float)
            nr = float(n) - nl
            imp = 1.0 - (left_sumsq[cand - 1] / nl + right_sumsq[cand] / nr) / n
            j = int(np.argmin(imp))
            if imp[j] < best_imp:
                best_imp = float(imp[j])
                best = (f, self._guarded_threshold(float(sv[cand[j] - 1]), float(sv[cand[j]])))
        return best

    @staticmethod
    def _guarded_threshold(lo: float, hi: float) -> float:
        # midpoint can round up to hi for adjacent floats; keep right side non-empty
        thr = (lo + hi) / 2.0
        return lo if thr >= hi else thr

    # -- prediction --------------------------------------------------------

    def apply_batch(self, X: np.ndarray) -> np.ndarray:
        """Leaf node id reached by each query row."""
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0], dtype=np.int64)
        stack: list[tuple[int, np.ndarray]] = [(0, np.arange(X.shape[0]))]
        while stack:
            nid, idxs = stack.pop()
            if idxs.shape[0] == 0:
                continue
            if self._feature[nid] < 0:
                out[idxs] = nid
                continue
            mask = X[idxs, self._feature[nid]] <= self._threshold[nid]
            stack.append((self._left[nid], idxs[mask]))
            stack.append((self._right[nid], idxs[~mask]))
        return out

    def predict_proba_batch(self, X: np.ndarray) -> list[ClassProbabilities]:
        out = []
        for nid in self.apply_batch(X):
            labels = self._leaf_labels[nid]
            probs = self._leaf_probs[nid]
            out.append({int(l): float(p) for l, p in zip(labels, probs)})
        return out

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return self._top[self.apply_batch(X)]

    def predict_proba(self, ranges: RangeTriple) -> ClassProbabilities:
        return self.predict_proba_batch(np.asarray([ranges.as_tuple()], dtype=float))[0]

    def predict(self, ranges: RangeTriple) -> int:
        return int(self.predict_batch(np.asarray([ranges.as_tuple()], dtype=float))[0])

    @property
    def node_count(self) -> int:
        return len(self._feature)


class ForestClassifier:
    """Bagged ensemble of CART trees with per-split feature sampling.

    Member i trains on a same-size bootstrap resample (unless ``bootstrap``
    is off) drawn from a generator seeded with ``seed + i``; the same
    generator then feeds that member's per-split feature subsets. The
    ensemble probability is the plain mean of the member probabilities.
    """

    def __init__(
        self,
        train: TrainingSet,
        n_trees: int = 100,
        features_per_split: int = 1,
        max_depth: int | None = None,
        min_leaf: int = 1,
        seed: int = 0,
        bootstrap: bool = True,
    ):
        if n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {n_trees}")
        if not (1 <= features_per_split <= 3):
            raise ValueError(f"features_per_split must be in 1..3, got {features_per_split}")
        self.n_trees = n_trees
        self._trees: list[TreeClassifier] = []
        n = len(train)
        for i in range(n_trees):
            rng = np.random.default_rng(seed + i)
            if bootstrap:
                idx = rng.integers(0, n, size=n)
                member_train = TrainingSet(train.X[idx], train.y[idx], train.spec)
            else:
                member_train = train
            self._trees.append(
                TreeClassifier(
                    member_train,
                    max_depth,
                    min_leaf,
                    feature_rng=rng,
                    features_per_split=features_per_split,
                )
            )

    def predict_proba_batch(self, X: np.ndarray) -> list[ClassProbabilities]:
        X = np.asarray(X, dtype=float)
        acc: list[ClassProbabilities] = [dict() for _ in range(X.shape[0])]
        for tree in self._trees:
            for qi, probs in enumerate(tree.predict_proba_batch(X)):
                bucket = acc[qi]
                for label, p in probs.items():
                    bucket[label] = bucket.get(label, 0.0) + p
        for bucket in acc:
            for label in bucket:
                bucket[label] /= self.n_trees
        return acc

    def predict_proba(self, ranges: RangeTriple) -> ClassProbabilities:
        return self.predict_proba_batch(np.asarray([ranges.as_tuple()], dtype=float))[0]

    def predict(self, ranges: RangeTriple) -> int:
        return argmax_label(self.predict_proba(ranges))

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return np.array([argmax_label(p) for p in self.predict_proba_batch(X)], dtype=np.int64)


@dataclass(frozen=True)
class VoteWeights:
    """Relative weights of the KNN and tree opinions in the soft vote."""

    w_knn: float = 3.0
    w_tree: float = 1.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.w_knn) and math.isfinite(self.w_tree)):
            raise ValueError("weights must be finite")
        if self.w_knn < 0.0 or self.w_tree < 0.0 or self.w_knn + self.w_tree <= 0.0:
            raise ValueError(f"weights must be >= 0 with a positive sum, got {self}")


def soft_vote(p_knn: ClassProbabilities, p_tree: ClassProbabilities, weights: VoteWeights) -> int:
    """Label with the largest weighted probability mass across both voters."""
    combined: ClassProbabilities = {}
    for label, p in p_knn.items():
        combined[label] = weights.w_knn * p
    for label, p in p_tree.items():
        combined[label] = combined.get(label, 0.0) + weights.w_tree * p
    return argmax_label(combined)


class SoftVoteClassifier:
    """Weighted probability vote between a KNN and a tree classifier."""

    def __init__(self, knn: KnnClassifier, tree: TreeClassifier, weights: VoteWeights):
        self.knn = knn
        self.tree = tree
        self.weights = weights

    def predict(self, ranges: RangeTriple) -> int:
        return soft_vote(self.knn.predict_proba(ranges), self.tree.predict_proba(ranges), self.weights)

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        pk = self.knn.predict_proba_batch(X)
        pt = self.tree.predict_proba_batch(X)
        return np.array(
            [soft_vote(a, b, self.weights) for a, b in zip(pk, pt)], dtype=np.int64
        )


def localize(label: int, spec: GridSpec) -> PointMM:
    """Map a predicted cell label back to its position (the cell vertex)."""
    return cell_vertex(spec, label)
