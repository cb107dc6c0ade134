"""End-to-end evaluation: baseline and fingerprint pipelines, reports, comparison.

Both pipelines measure the same thing: simulate repeated visits to a set
of test points, position each visit, and report the average and maximum
2-D error per point in millimeters. The baseline positions by plain
trilateration of the (corrected) measured ranges; the fingerprint
pipeline first fits a calibration model from a simulated reference-point
campaign, predicts a fingerprint DB over the grid, and classifies each
visit into a cell.

All randomness flows from ``PipelineConfig.seed``; observation campaign,
model-fit set selection, forest training, and test trials each use a
derived stage seed, so the two pipelines see identical test measurements.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .calibration import (
    REFERENCE_POINTS,
    ANCHOR_NAMES,
    ModelKind,
    clean_observation_rows,
    fit_model,
)
from .errors import FileFormatError
from .fingerprint import FingerprintDB, GridSpec, OutOfAreaError, build_db, cell_vertex
from .geometry import AnchorLayout, CollinearAnchorsError, PointMM, RangeTriple, distance, trilaterate
from .learners import (
    ForestClassifier,
    KnnClassifier,
    SoftVoteClassifier,
    TrainingSet,
    TreeClassifier,
    VoteWeights,
)
from .preprocess import MAD_SCALE_NORMAL, CorrectionPolicy, correct_triple
from .simulator import (
    Campaign,
    NoiseConfig,
    STAGE_AUGMENT,
    STAGE_FOREST,
    STAGE_OBSERVATION,
    STAGE_SELECTION,
    STAGE_TRIALS,
    derive_seed,
    measurement_stream,
    simulate_campaign,
    simulate_range,
)

__all__ = [
    "MismatchedTestPointsError",
    "TEST_POINTS",
    "PipelineConfig",
    "PointErrors",
    "ErrorReport",
    "ComparisonColumn",
    "ComparisonTable",
    "run_baseline",
    "run_ml",
    "compare",
    "format_report",
    "parse_report",
    "write_report",
    "read_report",
    "format_comparison",
    "write_comparison",
    "load_reference_report",
    "list_reference_reports",
]

#: The six positions used by the reference evaluation, in report order.
TEST_POINTS = (
    PointMM(250.0, 1500.0),
    PointMM(250.0, 500.0),
    PointMM(500.0, 0.0),
    PointMM(500.0, 2000.0),
    PointMM(750.0, 1500.0),
    PointMM(750.0, 500.0),
)

_CLASSIFIERS = ("knn", "tree", "forest", "vote")


class MismatchedTestPointsError(ValueError):
    """Reports cannot be compared point-by-point."""


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one evaluation run depends on.

    ``model_kind`` None selects the trilateration baseline; any other kind
    selects the fingerprint pipeline with the given classifier.
    """

    model_kind: ModelKind | None = None
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    correction: CorrectionPolicy = field(default_factory=CorrectionPolicy)
    classifier: str = "vote"
    vote_weights: VoteWeights = field(default_factory=VoteWeights)
    n_trials: int = 400
    test_points: tuple[PointMM, ...] = TEST_POINTS
    reference_points: tuple[PointMM, ...] = REFERENCE_POINTS
    seed: int = 0
    knn_k: int = 1
    tree_max_depth: int | None = None
    tree_min_leaf: int = 1
    forest_trees: int = 100
    forest_features: int = 1
    forest_bootstrap: bool = True
    obs_sets: int = 300
    n_select: int = 60
    mad_k: float = 3.0
    mad_scale: float = MAD_SCALE_NORMAL
    augment: int = 0

    def __post_init__(self) -> None:
        if self.classifier not in _CLASSIFIERS:
            raise ValueError(f"classifier must be one of {_CLASSIFIERS}, got {self.classifier!r}")
        if self.n_trials < 1:
            raise ValueError(f"n_trials must be >= 1, got {self.n_trials}")
        if len(self.test_points) == 0:
            raise ValueError("at least one test point required")
        if len(self.reference_points) != 4:
            raise ValueError(
                f"exactly 4 reference points required, got {len(self.reference_points)}"
            )
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        for n, v in (("knn_k", self.knn_k), ("tree_min_leaf", self.tree_min_leaf),
                     ("forest_trees", self.forest_trees), ("obs_sets", self.obs_sets),
                     ("n_select", self.n_select)):
            if v < 1:
                raise ValueError(f"{n} must be >= 1, got {v}")
        if self.augment < 0:
            raise ValueError("augment must be >= 0")

    def params_hash(self) -> str:
        """Stable digest of this configuration, stored in report metadata."""
        return hashlib.sha256(repr(self).encode("utf-8")).hexdigest()[:16]


def _round5(v: float) -> float:
    return round(float(v), 5)


@dataclass(frozen=True)
class PointErrors:
    """Aggregated positioning error at one test point (mm, 5 decimals).

    ``max_error`` may be None for externally sourced tables that only
    publish averages.
    """

    point: PointMM
    avg_error: float
    max_error: float | None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.avg_error) and self.avg_error >= 0.0):
            raise ValueError(f"avg_error must be finite and >= 0, got {self.avg_error}")
        if self.max_error is not None:
            if not math.isfinite(self.max_error):
                raise ValueError("max_error must be finite")
            if self.max_error < self.avg_error:
                raise ValueError(
                    f"max_error {self.max_error} smaller than avg_error {self.avg_error}"
                )


@dataclass(frozen=True)
class ErrorReport:
    """Per-point error statistics plus run metadata."""

    entries: tuple[PointErrors, ...]
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.entries) == 0:
            raise ValueError("report has no entries")

    @property
    def points(self) -> tuple[PointMM, ...]:
        return tuple(e.point for e in self.entries)

    def entry(self, point: PointMM) -> PointErrors:
        for e in self.entries:
            if e.point == point:
                return e
        raise KeyError(f"no entry for point {point.as_tuple()}")


def _aggregate(
    points: Sequence[PointMM],
    errors_per_point: Sequence[Sequence[float]],
    metadata: dict[str, str],
) -> ErrorReport:
    entries = []
    for p, errs in zip(points, errors_per_point):
        if len(errs) == 0:
            raise ValueError(f"every trial failed at point {p.as_tuple()}")
        entries.append(PointErrors(p, _round5(sum(errs) / len(errs)), _round5(max(errs))))
    return ErrorReport(tuple(entries), metadata)


def _simulate_trial(
    noise: NoiseConfig, trial_seed: int, point_index: int, trial: int,
    true_d: Sequence[float], correction: CorrectionPolicy,
) -> RangeTriple:
    vals = [
        simulate_range(true_d[ai], noise, measurement_stream(trial_seed, point_index, trial, ai))
        for ai in range(3)
    ]
    return correct_triple(RangeTriple(*vals), correction)


def run_baseline(cfg: PipelineConfig, anchors: AnchorLayout) -> ErrorReport:
    """Trilateration-only evaluation; the reference everything else beats."""
    if cfg.model_kind is not None:
        raise ValueError("baseline run must have model_kind None")
    trial_seed = derive_seed(cfg.seed, STAGE_TRIALS)
    anchor_points = anchors.as_tuple()
    per_point: list[list[float]] = []
    failed = 0
    for pi, p in enumerate(cfg.test_points):
        true_d = [distance(p, a) for a in anchor_points]
        errs: list[float] = []
        for t in range(cfg.n_trials):
            corrected = _simulate_trial(cfg.noise, trial_seed, pi, t, true_d, cfg.correction)
            try:
                est = trilaterate(anchors, corrected)
            except CollinearAnchorsError:
                failed += 1
                continue
            errs.append(distance(est, p))
        per_point.append(errs)
    metadata = {
        "pipeline": "baseline",
        "seed": str(cfg.seed),
        "n_trials": str(cfg.n_trials),
        "failed_trials": str(failed),
        "correction_ratio": repr(cfg.correction.ratio),
        "params_hash": cfg.params_hash(),
    }
    return _aggregate(cfg.test_points, per_point, metadata)


def _training_set(cfg: PipelineConfig, db: FingerprintDB, anchors: AnchorLayout) -> TrainingSet:
    base = TrainingSet.from_db(db)
    if cfg.augment == 0:
        return base
    # noisy copies of each cell, drawn like query-time measurements
    aug_seed = derive_seed(cfg.seed, STAGE_AUGMENT)
    anchor_points = anchors.as_tuple()
    extra_X = []
    extra_y = []
    for label in range(len(db)):
        v = cell_vertex(db.spec, label)
        true_d = [distance(v, a) for a in anchor_points]
        for j in range(cfg.augment):
            triple = _simulate_trial(cfg.noise, aug_seed, label, j, true_d, cfg.correction)
            extra_X.append(triple.as_tuple())
            extra_y.append(label)
    X = np.vstack([base.X, np.asarray(extra_X, dtype=float)])
    y = np.concatenate([base.y, np.asarray(extra_y, dtype=np.int64)])
    return TrainingSet(X, y, db.spec)


def _build_classifier(cfg: PipelineConfig, train: TrainingSet):
    if cfg.classifier == "knn":
        return KnnClassifier(train, cfg.knn_k)
    if cfg.classifier == "tree":
        return TreeClassifier(train, cfg.tree_max_depth, cfg.tree_min_leaf)
    if cfg.classifier == "forest":
        return ForestClassifier(
            train,
            n_trees=cfg.forest_trees,
            features_per_split=cfg.forest_features,
            max_depth=cfg.tree_max_depth,
            min_leaf=cfg.tree_min_leaf,
            seed=derive_seed(cfg.seed, STAGE_FOREST),
            bootstrap=cfg.forest_bootstrap,
        )
    knn = KnnClassifier(train, cfg.knn_k)
    tree = TreeClassifier(train, cfg.tree_max_depth, cfg.tree_min_leaf)
    return SoftVoteClassifier(knn, tree, cfg.vote_weights)


def run_ml(cfg: PipelineConfig, anchors: AnchorLayout, spec: GridSpec) -> ErrorReport:
    """Full fingerprint pipeline: observe, fit, build DB, train, evaluate."""
    if cfg.model_kind is None:
        raise ValueError("fingerprint run needs a model kind; use run_baseline for none")
    for p in cfg.test_points:
        if not p.is_within(spec.width, spec.height):
            raise OutOfAreaError(f"test point {p.as_tuple()} outside the grid area")

    for p in cfg.reference_points:
        if not p.is_within(spec.width, spec.height):
            raise OutOfAreaError(f"reference point {p.as_tuple()} outside the grid area")

    obs_noise = replace(cfg.noise, seed=derive_seed(cfg.seed, STAGE_OBSERVATION))
    campaign = Campaign(cfg.reference_points, cfg.obs_sets, anchors, obs_noise)
    obs = clean_observation_rows(
        simulate_campaign(campaign),
        cfg.reference_points,
        mad_k=cfg.mad_k,
        mad_scale=cfg.mad_scale,
        policy=cfg.correction,
    )
    model = fit_model(
        cfg.model_kind, obs, anchors,
        n_select=cfg.n_select,
        seed=derive_seed(cfg.seed, STAGE_SELECTION),
    )
    db = build_db(model, spec, anchors)
    clf = _build_classifier(cfg, _training_set(cfg, db, anchors))

    trial_seed = derive_seed(cfg.seed, STAGE_TRIALS)
    anchor_points = anchors.as_tuple()
    per_point: list[list[float]] = []
    for pi, p in enumerate(cfg.test_points):
        true_d = [distance(p, a) for a in anchor_points]
        queries = np.empty((cfg.n_trials, 3), dtype=float)
        for t in range(cfg.n_trials):
            queries[t] = _simulate_trial(cfg.noise, trial_seed, pi, t, true_d, cfg.correction).as_tuple()
        labels = clf.predict_batch(queries)
        per_point.append([distance(cell_vertex(spec, int(lb)), p) for lb in labels])

    metadata = {
        "pipeline": "fingerprint",
        "model": cfg.model_kind.value,
        "classifier": cfg.classifier,
        "seed": str(cfg.seed),
        "n_trials": str(cfg.n_trials),
        "failed_trials": "0",
        "correction_ratio": repr(cfg.correction.ratio),
        "params_hash": cfg.params_hash(),
    }
    for name in ANCHOR_NAMES:
        eq = model.equation(name)
        metadata[f"eq_{name}"] = f"{eq.a!r},{eq.b!r}"
    if cfg.classifier == "vote":
        metadata["vote_weights"] = f"{cfg.vote_weights.w_knn!r}:{cfg.vote_weights.w_tree!r}"
    return _aggregate(cfg.test_points, per_point, metadata)


# -- comparison -------------------------------------------------------------


@dataclass(frozen=True)
class ComparisonColumn:
    """One candidate report laid against the baseline."""

    avg: tuple[float, ...]
    max: tuple[float | None, ...]
    reduction_pct: tuple[float, ...]


@dataclass(frozen=True)
class ComparisonTable:
    points: tuple[PointMM, ...]
    baseline_avg: tuple[float, ...]
    candidates: tuple[ComparisonColumn, ...]


def compare(reports: Sequence[ErrorReport]) -> ComparisonTable:
    """Side-by-side error comparison; the first report is the baseline.

    Reduction is (baseline_avg - candidate_avg) / baseline_avg * 100 per
    point. All reports must cover the same points in the same order.
    """
    if len(reports) < 2:
        raise MismatchedTestPointsError(f"need at least two reports, got {len(reports)}")
    base = reports[0]
    points = base.points
    for r in reports[1:]:
        if r.points != points:
            raise MismatchedTestPointsError(
                f"test points differ: {[p.as_tuple() for p in points]} vs "
                f"{[p.as_tuple() for p in r.points]}"
            )
    baseline_avg = tuple(e.avg_error for e in base.entries)
    candidates = []
    for r in reports[1:]:
        avgs = tuple(e.avg_error for e in r.entries)
        maxes = tuple(e.max_error for e in r.entries)
        reductions = []
        for b, c in zip(baseline_avg, avgs):
            if b > 0.0:
                reductions.append((b - c) / b * 100.0)
            else:
                reductions.append(0.0 if c == 0.0 else math.nan)
        candidates.append(ComparisonColumn(avgs, maxes, tuple(reductions)))
    return ComparisonTable(points, baseline_avg, tuple(candidates))


# -- serialization ----------------------------------------------------------

REPORT_HEADER = "point_x,point_y,avg_error_mm,max_error_mm"
COMPARISON_HEADER = REPORT_HEADER + ",baseline_avg_mm,reduction_pct"


def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.5f}"


def format_report(report: ErrorReport, fmt: str = "delimited") -> str:
    """Render a report as 'delimited' (machine) or 'text' (human) output."""
    if fmt == "delimited":
        lines = [f"# {k} = {report.metadata[k]}" for k in sorted(report.metadata)]
        lines.append(REPORT_HEADER)
        for e in report.entries:
            lines.append(
                f"{e.point.x:.5f},{e.point.y:.5f},{_fmt(e.avg_error)},{_fmt(e.max_error)}"
            )
        return "\n".join(lines) + "\n"
    if fmt == "text":
        rows = [("Point", "Avg error (mm)", "Max error (mm)")]
        for e in report.entries:
            rows.append(
                (f"({e.point.x:g},{e.point.y:g})", f"{e.avg_error:.5f}",
                 "-" if e.max_error is None else f"{e.max_error:.5f}")
            )
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(text: str, origin: str = "<report>") -> ErrorReport:
    """Parse delimited report text; the inverse of format_report('delimited')."""
    metadata: dict[str, str] = {}
    entries: list[PointErrors] = []
    header_seen = False
    for ln, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            key, sep, value = body.partition("=")
            if not sep:
                raise FileFormatError(f"{origin}:{ln}: metadata line needs 'key = value'")
            metadata[key.strip()] = value.strip()
            continue
        if not header_seen:
            if line.strip() != REPORT_HEADER:
                raise FileFormatError(f"{origin}:{ln}: expected header '{REPORT_HEADER}'")
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise FileFormatError(f"{origin}:{ln}: expected 4 fields, got {len(parts)}")
        try:
            x, y, avg = float(parts[0]), float(parts[1]), float(parts[2])
            mx = None if parts[3] == "" else float(parts[3])
            entries.append(PointErrors(PointMM(x, y), avg, mx))
        except ValueError as exc:
            raise FileFormatError(f"{origin}:{ln}: {exc}") from exc
    if not header_seen:
        raise FileFormatError(f"{origin}: missing header '{REPORT_HEADER}'")
    if not entries:
        raise FileFormatError(f"{origin}: report has no data rows")
    return ErrorReport(tuple(entries), metadata)


def write_report(path: str, report: ErrorReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_report(report, "delimited"))


def read_report(path: str) -> ErrorReport:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_report(fh.read(), origin=path)


def format_comparison(table: ComparisonTable, fmt: str = "delimited") -> str:
    """Render a comparison table.

    The delimited single-candidate header is ``COMPARISON_HEADER``; each
    further candidate appends numbered avg/max/reduction columns.
    """
    if fmt == "delimited":
        header = COMPARISON_HEADER
        for j in range(2, len(table.candidates) + 1):
            header += f",avg_error_mm_{j},max_error_mm_{j},reduction_pct_{j}"
        lines = [header]
        for i, p in enumerate(table.points):
            first = table.candidates[0]
            cells = [
                f"{p.x:.5f}", f"{p.y:.5f}",
                _fmt(first.avg[i]), _fmt(first.max[i]),
                _fmt(table.baseline_avg[i]), f"{first.reduction_pct[i]:.2f}",
            ]
            for cand in table.candidates[1:]:
                cells += [_fmt(cand.avg[i]), _fmt(cand.max[i]), f"{cand.reduction_pct[i]:.2f}"]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"
    if fmt == "text":
        rows = [("Point", "Baseline avg", "Candidate avg", "Reduction")]
        for i, p in enumerate(table.points):
            for cand in table.candidates:
                rows.append(
                    (f"({p.x:g},{p.y:g})", f"{table.baseline_avg[i]:.5f}",
                     f"{cand.avg[i]:.5f}", f"{cand.reduction_pct[i]:.2f}%")
                )
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"
    raise ValueError(f"unknown comparison format {fmt!r}")


def write_comparison(path: str, table: ComparisonTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_comparison(table, "delimited"))


# -- shipped hardware reference tables --------------------------------------


def list_reference_reports() -> list[str]:
    """Names of the bundled hardware-measured error tables."""
    pkg = resources.files("uwbloc.fixtures")
    return sorted(p.name[: -len(".csv")] for p in pkg.iterdir() if p.name.endswith(".csv"))


def load_reference_report(name: str) -> ErrorReport:
    """Load one bundled hardware table (see list_reference_reports)."""
    pkg = resources.files("uwbloc.fixtures")
    res = pkg.joinpath(f"{name}.csv")
    try:
        text = res.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise KeyError(f"no reference table named {name!r}") from None
    return parse_report(text, origin=f"fixtures/{name}.csv")
