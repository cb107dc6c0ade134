"""Affine calibration of the ranging error from reference-point observations.

The tag is parked on four known reference points and repeatedly measures
its distance to the three anchors. Fitting a line through two such
measurements gives, per anchor, a model

    measured = a * true + b

whose inverse later turns grid distances into predicted fingerprints.
Four model variants differ only in which reference points, and whose
anchor's data, feed each anchor's line.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import FileFormatError
from .geometry import AnchorLayout, PointMM, distance
from .preprocess import MAD_SCALE_NORMAL, CorrectionPolicy, correct_range, mad_keep_mask
from .simulator import MeasurementSet

__all__ = [
    "DegeneratePairError",
    "NonPositiveSlopeError",
    "InsufficientDataError",
    "MissingReferencePointError",
    "ModelKind",
    "ANCHOR_NAMES",
    "REFERENCE_POINTS",
    "LinearRangingEq",
    "ObservationData",
    "CalibrationModel",
    "fit_pair",
    "fit_model",
    "predict_measured",
    "clean_observation_rows",
    "write_calibration",
    "read_calibration",
    "format_calibration",
    "parse_calibration",
]

ANCHOR_NAMES = ("A", "B", "C")

#: Default reference points: 100 mm inside each corner of the 1 m x 2 m area.
REFERENCE_POINTS = (
    PointMM(100.0, 100.0),
    PointMM(900.0, 100.0),
    PointMM(100.0, 1900.0),
    PointMM(900.0, 1900.0),
)


class DegeneratePairError(ValueError):
    """Both calibration points share the same true distance; no line fits."""


class NonPositiveSlopeError(ValueError):
    """A fitted slope came out <= 0, which no physical ranging error does."""


class InsufficientDataError(ValueError):
    """Not enough usable measurement sets to fit a model."""


class MissingReferencePointError(ValueError):
    """An observation file lacks rows for a required reference point."""


class ModelKind(str, Enum):
    """Which reference points feed each anchor's calibration line.

    one:   every anchor reuses anchor A's data; line through points 1 & 4
           for A and C, through points 2 & 3 for B. A and C coincide.
    two:   like ``one`` but each anchor uses its own data.
    three: per anchor, average of the three lines through point pairs
           (1,2), (1,3), (1,4) for A; (3,1), (3,2), (3,4) for B;
           (4,1), (4,2), (4,3) for C, each using that anchor's data.
    four:  anchors A and B as in ``three``, anchor C as in ``two``.
    """

    ONE = "one"
    TWO = "two"
    THREE = "three"
    FOUR = "four"


# (source anchor index, list of reference-point index pairs) per anchor.
# Point indices are 0-based; the docstring above uses the 1-based labels.
_THREE_PAIRING = {
    0: (0, ((0, 1), (0, 2), (0, 3))),
    1: (1, ((2, 0), (2, 1), (2, 3))),
    2: (2, ((3, 0), (3, 1), (3, 2))),
}
_PAIRINGS: dict[ModelKind, dict[int, tuple[int, tuple[tuple[int, int], ...]]]] = {
    ModelKind.ONE: {
        0: (0, ((0, 3),)),
        1: (0, ((1, 2),)),
        2: (0, ((0, 3),)),
    },
    ModelKind.TWO: {
        0: (0, ((0, 3),)),
        1: (1, ((1, 2),)),
        2: (2, ((0, 3),)),
    },
    ModelKind.THREE: _THREE_PAIRING,
    ModelKind.FOUR: {
        0: _THREE_PAIRING[0],
        1: _THREE_PAIRING[1],
        2: (2, ((0, 3),)),
    },
}


@dataclass(frozen=True)
class LinearRangingEq:
    """One anchor's affine ranging model: measured = a * true + b."""

    a: float
    b: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError(f"parameters must be finite, got a={self.a}, b={self.b}")
        if self.a <= 0.0:
            raise NonPositiveSlopeError(f"slope must be positive, got {self.a}")


def fit_pair(true1: float, meas1: float, true2: float, meas2: float) -> LinearRangingEq:
    """Fit the line through two (true, measured) distance pairs."""
    for v in (true1, meas1, true2, meas2):
        if not (math.isfinite(v) and v > 0.0):
            raise ValueError(f"distances must be finite and positive, got {v}")
    if true1 == true2:
        raise DegeneratePairError(f"both points have true distance {true1}")
    a = (meas2 - meas1) / (true2 - true1)
    if a <= 0.0:
        raise NonPositiveSlopeError(f"fitted slope {a} is not positive")
    return LinearRangingEq(a, meas1 - a * true1)


@dataclass(frozen=True, eq=False)
class ObservationData:
    """Cleaned reference-point measurements, aligned into synchronized sets.

    ``sets`` has shape (n_sets, 4, 3): set index, reference point index,
    anchor index. One set is a simultaneous reading of all four points
    against all three anchors, so per-set line fits combine values that
    belong together.
    """

    points: tuple[PointMM, PointMM, PointMM, PointMM]
    sets: np.ndarray

    def __post_init__(self) -> None:
        if len(self.points) != 4:
            raise ValueError(f"exactly 4 reference points required, got {len(self.points)}")
        arr = np.asarray(self.sets, dtype=float)
        if arr.ndim != 3 or arr.shape[1:] != (4, 3):
            raise ValueError(f"sets must have shape (n, 4, 3), got {arr.shape}")
        if arr.shape[0] < 1:
            raise InsufficientDataError("observation data holds no measurement sets")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
            raise ValueError("measured distances must be finite and positive")
        object.__setattr__(self, "sets", arr)

    @property
    def n_sets(self) -> int:
        return int(self.sets.shape[0])

    def series(self, point_index: int, anchor_index: int) -> np.ndarray:
        """The cleaned sample series of one (reference point, anchor) pair."""
        return self.sets[:, point_index, anchor_index]


def clean_observation_rows(
    rows: list[MeasurementSet],
    points: tuple[PointMM, ...] = REFERENCE_POINTS,
    *,
    mad_k: float = 3.0,
    mad_scale: float = MAD_SCALE_NORMAL,
    policy: CorrectionPolicy | None = None,
) -> ObservationData:
    """Group raw campaign rows by reference point and clean them into sets.

    Rows are matched to reference points by exact coordinates; a point
    without rows raises MissingReferencePointError. Reps are aligned
    across points (trimmed to the shortest), the MAD rule is evaluated
    per (point, anchor) column, and a set survives only if all twelve of
    its values pass. The correction policy, when given, is applied to the
    surviving measured values.
    """
    by_loc: dict[tuple[float, float], list[MeasurementSet]] = {}
    for row in rows:
        by_loc.setdefault(row.location.as_tuple(), []).append(row)

    groups = []
    for p in points:
        grp = by_loc.get(p.as_tuple())
        if not grp:
            raise MissingReferencePointError(f"no measurements at reference point {p.as_tuple()}")
        groups.append(grp)

    n = min(len(g) for g in groups)
    raw = np.empty((n, len(points), 3), dtype=float)
    for pi, grp in enumerate(groups):
        for si in range(n):
            raw[si, pi, :] = grp[si].ranges.as_tuple()

    keep = np.ones(n, dtype=bool)
    for pi in range(len(points)):
        for ai in range(3):
            keep &= mad_keep_mask(raw[:, pi, ai], mad_k, mad_scale)
    cleaned = raw[keep]
    if cleaned.shape[0] == 0:
        raise InsufficientDataError("outlier filtering removed every measurement set")

    if policy is not None:
        cleaned = np.where(cleaned > policy.threshold, cleaned * policy.ratio, cleaned)
    return ObservationData(tuple(points), cleaned)


@dataclass(frozen=True)
class CalibrationModel:
    """Fitted per-anchor ranging lines plus the variant that produced them."""

    kind: ModelKind
    eq_a: LinearRangingEq
    eq_b: LinearRangingEq
    eq_c: LinearRangingEq

    def equation(self, anchor: str) -> LinearRangingEq:
        """Look up one anchor's line by name ("A", "B" or "C")."""
        try:
            idx = ANCHOR_NAMES.index(anchor)
        except ValueError:
            raise ValueError(f"unknown anchor {anchor!r}, expected one of {ANCHOR_NAMES}") from None
        return (self.eq_a, self.eq_b, self.eq_c)[idx]


def fit_model(
    kind: ModelKind,
    obs: ObservationData,
    anchors: AnchorLayout,
    n_select: int = 60,
    seed: int = 0,
) -> CalibrationModel:
    """Fit one calibration model from cleaned observation data.

    ``n_select`` measurement sets are drawn uniformly without replacement
    (seeded); each selected set yields one (a, b) per anchor according to
    the model kind's pairing rule, and the final parameters are the means
    over selected sets. A set whose fit produces a non-positive slope is
    skipped and counted in a warning rather than failing the whole fit.
    """
    kind = ModelKind(kind)
    if n_select < 1:
        raise ValueError(f"n_select must be >= 1, got {n_select}")

    anchor_points = anchors.as_tuple()
    true_d = [[distance(p, a) for a in anchor_points] for p in obs.points]

    if obs.n_sets >= n_select:
        rng = np.random.default_rng(seed)
        selected = rng.choice(obs.n_sets, size=n_select, replace=False)
    else:
        warnings.warn(
            f"only {obs.n_sets} measurement sets available, wanted {n_select}; using all",
            stacklevel=2,
        )
        selected = np.arange(obs.n_sets)

    pairing = _PAIRINGS[kind]
    sums = [[0.0, 0.0] for _ in range(3)]
    used = 0
    skipped = 0
    for s in selected:
        per_anchor: list[tuple[float, float]] = []
        try:
            for ai in range(3):
                src, pairs = pairing[ai]
                fits = [
                    fit_pair(
                        true_d[i][src], float(obs.sets[s, i, src]),
                        true_d[j][src], float(obs.sets[s, j, src]),
                    )
                    for i, j in pairs
                ]
                a = sum(f.a for f in fits) / len(fits)
                b = sum(f.b for f in fits) / len(fits)
                per_anchor.append((a, b))
        except NonPositiveSlopeError:
            skipped += 1
            continue
        for ai, (a, b) in enumerate(per_anchor):
            sums[ai][0] += a
            sums[ai][1] += b
        used += 1

    if used == 0:
        raise InsufficientDataError("every selected measurement set failed to fit")
    if skipped:
        warnings.warn(f"skipped {skipped} measurement set(s) with non-positive fitted slope",
                      stacklevel=2)

    eqs = [LinearRangingEq(sa / used, sb / used) for sa, sb in sums]
    return CalibrationModel(kind, *eqs)


def predict_measured(model: CalibrationModel, anchor: str, true_distance: float) -> float:
    """What the tag would report for a given true distance to one anchor."""
    if not (math.isfinite(true_distance) and true_distance >= 0.0):
        raise ValueError(f"true distance must be finite and >= 0, got {true_distance}")
    eq = model.equation(anchor)
    return eq.a * true_distance + eq.b


def format_calibration(model: CalibrationModel) -> str:
    """Serialize a model: a kind header, then one full-precision line per anchor."""
    lines = [f"kind,{model.kind.value}"]
    for name in ANCHOR_NAMES:
        eq = model.equation(name)
        lines.append(f"{name},{eq.a!r},{eq.b!r}")
    return "\n".join(lines) + "\n"


def parse_calibration(text: str, origin: str = "<calibration>") -> CalibrationModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) != 4:
        raise FileFormatError(f"{origin}: expected 4 lines (kind + 3 anchors), got {len(lines)}")
    head = lines[0].split(",")
    if len(head) != 2 or head[0] != "kind":
        raise FileFormatError(f"{origin}:1: expected 'kind,<one|two|three|four>'")
    try:
        kind = ModelKind(head[1])
    except ValueError as exc:
        raise FileFormatError(f"{origin}:1: unknown model kind {head[1]!r}") from exc

    eqs: dict[str, LinearRangingEq] = {}
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 3 or parts[0] not in ANCHOR_NAMES:
            raise FileFormatError(f"{origin}:{ln}: expected '<A|B|C>,a,b'")
        try:
            eqs[parts[0]] = LinearRangingEq(float(parts[1]), float(parts[2]))
        except ValueError as exc:
            raise FileFormatError(f"{origin}:{ln}: {exc}") from exc
    if set(eqs) != set(ANCHOR_NAMES):
        raise FileFormatError(f"{origin}: anchors {sorted(eqs)} found, need all of {ANCHOR_NAMES}")
    return CalibrationModel(kind, eqs["A"], eqs["B"], eqs["C"])


def write_calibration(path: str, model: CalibrationModel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_calibration(model))


def read_calibration(path: str) -> CalibrationModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_calibration(fh.read(), origin=path)
