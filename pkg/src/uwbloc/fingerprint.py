"""The fingerprint grid: cell labels, vertices, and the predicted-range DB.

The test area is cut into square cells. Each cell is identified by the
integer label of its lower-left vertex, counted row-major from the
origin with x varying fastest. The fingerprint of a cell is the triple
of measured distances the calibration model predicts for its vertex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .calibration import ANCHOR_NAMES, CalibrationModel, predict_measured
from .errors import FileFormatError
from .geometry import AnchorLayout, PointMM, RangeTriple, distance

__all__ = [
    "LabelOutOfRangeError",
    "OutOfAreaError",
    "GridSpec",
    "DEFAULT_GRID",
    "FingerprintDB",
    "cell_vertex",
    "vertex_to_label",
    "build_db",
    "write_db",
    "read_db",
]

# Grid dimensions must divide into whole cells within this tolerance.
_DIVISIBILITY_TOL = 1e-9

# Predicted fingerprints are floored here (mm), mirroring the simulator's
# clamp; a vertex sitting exactly on an anchor would otherwise predict 0.
DB_PREDICTION_FLOOR = 1.0


class LabelOutOfRangeError(ValueError):
    """A cell label does not exist on this grid."""


class OutOfAreaError(ValueError):
    """A point lies outside the test area."""


@dataclass(frozen=True)
class GridSpec:
    """Rectangular test area of ``width`` x ``height`` mm, ``spacing``-mm cells."""

    width: float = 1000.0
    height: float = 2000.0
    spacing: float = 25.0

    def __post_init__(self) -> None:
        for v in (self.width, self.height, self.spacing):
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"grid dimensions must be positive, got {v}")
        for name, v in (("width", self.width), ("height", self.height)):
            ratio = v / self.spacing
            if abs(ratio - round(ratio)) > _DIVISIBILITY_TOL * max(1.0, ratio):
                raise ValueError(f"{name} {v} is not a whole multiple of spacing {self.spacing}")

    @property
    def cols(self) -> int:
        return round(self.width / self.spacing)

    @property
    def rows(self) -> int:
        return round(self.height / self.spacing)

    @property
    def cell_count(self) -> int:
        return self.cols * self.rows


#: The 1 m x 2 m area at 25 mm spacing used throughout the reference setup.
DEFAULT_GRID = GridSpec()


def cell_vertex(spec: GridSpec, label: int) -> PointMM:
    """The lower-left vertex of a cell, i.e. the position a label stands for."""
    if not (0 <= label < spec.cell_count):
        raise LabelOutOfRangeError(f"label {label} outside [0, {spec.cell_count})")
    col = label % spec.cols
    row = label // spec.cols
    return PointMM(col * spec.spacing, row * spec.spacing)


def vertex_to_label(spec: GridSpec, p: PointMM) -> int:
    """The label of the cell containing a point.

    Points on the far borders (x = width or y = height) belong to the last
    cell of their row/column; points outside the area are rejected.
    """
    if not p.is_within(spec.width, spec.height):
        raise OutOfAreaError(f"point {p.as_tuple()} outside {spec.width} x {spec.height} area")
    col = min(int(p.x // spec.spacing), spec.cols - 1)
    row = min(int(p.y // spec.spacing), spec.rows - 1)
    return row * spec.cols + col


@dataclass(frozen=True, eq=False)
class FingerprintDB:
    """Predicted range triples for every cell vertex, indexed by label."""

    spec: GridSpec
    vectors: np.ndarray  # shape (cell_count, 3), columns = anchors A, B, C

    def __post_init__(self) -> None:
        arr = np.asarray(self.vectors, dtype=float)
        if arr.shape != (self.spec.cell_count, 3):
            raise ValueError(f"expected shape {(self.spec.cell_count, 3)}, got {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
            raise ValueError("fingerprints must be finite and positive")
        object.__setattr__(self, "vectors", arr)

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    def triple(self, label: int) -> RangeTriple:
        if not (0 <= label < len(self)):
            raise LabelOutOfRangeError(f"label {label} outside [0, {len(self)})")
        return RangeTriple(*(float(v) for v in self.vectors[label]))


def build_db(model: CalibrationModel, spec: GridSpec, anchors: AnchorLayout) -> FingerprintDB:
    """Predict the measured range triple for every cell vertex.

    Fingerprints are the raw model predictions (the query-time correction
    is applied to live measurements, not to the DB), floored at
    ``DB_PREDICTION_FLOOR`` so every entry stays a valid range.
    """
    vectors = np.empty((spec.cell_count, 3), dtype=float)
    anchor_points = anchors.as_tuple()
    for label in range(spec.cell_count):
        v = cell_vertex(spec, label)
        for ai, name in enumerate(ANCHOR_NAMES):
            pred = predict_measured(model, name, distance(v, anchor_points[ai]))
            vectors[label, ai] = max(pred, DB_PREDICTION_FLOOR)
    return FingerprintDB(spec, vectors)


def write_db(path: str, db: FingerprintDB) -> None:
    """Write a DB file: grid header, then `label,x,y,fa,fb,fc` per cell."""
    s = db.spec
    lines = [f"{s.spacing!r},{s.width!r},{s.height!r}"]
    for label in range(len(db)):
        v = cell_vertex(s, label)
        fa, fb, fc = (float(x) for x in db.vectors[label])
        lines.append(f"{label},{v.x!r},{v.y!r},{fa!r},{fb!r},{fc!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_db(path: str) -> FingerprintDB:
    """Parse a DB file, checking labels arrive complete and in order."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FileFormatError(f"{path}: empty DB file")
    head = lines[0].split(",")
    if len(head) != 3:
        raise FileFormatError(f"{path}:1: expected 'spacing,width,height'")
    try:
        spacing, width, height = (float(v) for v in head)
        spec = GridSpec(width=width, height=height, spacing=spacing)
    except ValueError as exc:
        raise FileFormatError(f"{path}:1: {exc}") from exc

    vectors = np.empty((spec.cell_count, 3), dtype=float)
    seen = 0
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise FileFormatError(f"{path}:{ln}: expected 6 fields, got {len(parts)}")
        try:
            label = int(parts[0])
            x, y, fa, fb, fc = (float(p) for p in parts[1:])
        except ValueError as exc:
            raise FileFormatError(f"{path}:{ln}: {exc}") from exc
        if label != seen:
            raise FileFormatError(f"{path}:{ln}: expected label {seen}, got {label}")
        if label >= spec.cell_count:
            raise FileFormatError(f"{path}:{ln}: grid only has {spec.cell_count} cells")
        v = cell_vertex(spec, label)
        if (x, y) != v.as_tuple():
            raise FileFormatError(f"{path}:{ln}: vertex ({x}, {y}) does not match label {label}")
        vectors[label] = (fa, fb, fc)
        seen += 1
    if seen != spec.cell_count:
        raise FileFormatError(f"{path}: {seen} cells found, grid needs {spec.cell_count}")
    return FingerprintDB(spec, vectors)
