"""Flat key/value run configuration.

Config files are UTF-8 text, one ``section.key = value`` per line, with
``#`` comment lines and blank lines ignored. Every key has a default, so
an empty (or absent) file is a valid full configuration. Unknown keys
and duplicate keys are rejected with the offending line number; so is
any value that fails its key's validation.

A resolved :class:`RunConfig` knows which keys were set explicitly,
formats the full resolved configuration canonically (for report metadata
and hashing), and builds the domain objects the pipeline consumes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Mapping

from .calibration import REFERENCE_POINTS, ModelKind
from .evaluation import TEST_POINTS, PipelineConfig
from .fingerprint import GridSpec
from .geometry import AnchorLayout, CollinearAnchorsError, PointMM
from .learners import VoteWeights
from .preprocess import MAD_SCALE_NORMAL, CorrectionPolicy
from .simulator import Campaign, NoiseConfig, STAGE_OBSERVATION, derive_seed

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config_text", "resolve_config"]


class ConfigError(ValueError):
    """Invalid configuration: unknown key, bad value, or contradiction."""


# -- per-key value conversion ------------------------------------------------


def _to_int(s: str) -> int:
    try:
        return int(s, 10)
    except ValueError:
        raise ValueError(f"not an integer: {s!r}") from None


def _to_float(s: str) -> float:
    try:
        v = float(s)
    except ValueError:
        raise ValueError(f"not a number: {s!r}") from None
    if v != v or v in (float("inf"), float("-inf")):
        raise ValueError(f"not finite: {s!r}")
    return v


def _to_bool(s: str) -> bool:
    low = s.strip().lower()
    if low == "true":
        return True
    if low == "false":
        return False
    raise ValueError(f"expected true or false, got {s!r}")


def _to_points(s: str) -> tuple[PointMM, ...]:
    points = []
    for chunk in s.split(";"):
        chunk = chunk.strip()
        if not chunk:
            raise ValueError("empty point entry")
        parts = chunk.split(",")
        if len(parts) != 2:
            raise ValueError(f"point must be 'x,y', got {chunk!r}")
        points.append(PointMM(_to_float(parts[0]), _to_float(parts[1])))
    return tuple(points)


def _to_weights(s: str) -> VoteWeights:
    parts = s.split(":")
    if len(parts) != 2:
        raise ValueError(f"weights must be 'KNN:TREE', got {s!r}")
    return VoteWeights(_to_float(parts[0]), _to_float(parts[1]))


def _to_depth(s: str) -> int | None:
    if s.strip().lower() == "none":
        return None
    v = _to_int(s)
    if v < 1:
        raise ValueError(f"depth must be >= 1 or none, got {v}")
    return v


def _to_model_kind(s: str) -> ModelKind | None:
    low = s.strip().lower()
    if low == "none":
        return None
    try:
        return ModelKind(low)
    except ValueError:
        raise ValueError(
            f"expected one of one/two/three/four/none, got {s!r}"
        ) from None


def _to_classifier(s: str) -> str:
    low = s.strip().lower()
    if low not in ("knn", "tree", "forest", "vote"):
        raise ValueError(f"expected one of knn/tree/forest/vote, got {s!r}")
    return low


def _int_min(minimum: int) -> Callable[[str], int]:
    def conv(s: str) -> int:
        v = _to_int(s)
        if v < minimum:
            raise ValueError(f"must be >= {minimum}, got {v}")
        return v

    return conv


def _float_min(minimum: float, inclusive: bool = True) -> Callable[[str], float]:
    def conv(s: str) -> float:
        v = _to_float(s)
        if (v < minimum) if inclusive else (v <= minimum):
            op = ">=" if inclusive else ">"
            raise ValueError(f"must be {op} {minimum}, got {v}")
        return v

    return conv


def _to_ratio(s: str) -> float:
    v = _to_float(s)
    if not 0.0 < v <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {v}")
    return v


def _to_probability(s: str) -> float:
    v = _to_float(s)
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"must be in [0, 1], got {v}")
    return v


def _int_range(lo: int, hi: int) -> Callable[[str], int]:
    def conv(s: str) -> int:
        v = _to_int(s)
        if not lo <= v <= hi:
            raise ValueError(f"must be in {lo}..{hi}, got {v}")
        return v

    return conv


# -- canonical value formatting ----------------------------------------------


def _fmt_value(v: object) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, ModelKind):
        return v.value
    if isinstance(v, VoteWeights):
        return f"{v.w_knn!r}:{v.w_tree!r}"
    if isinstance(v, tuple):  # points
        return ";".join(f"{p.x!r},{p.y!r}" for p in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_DEFAULT_LOCATIONS = REFERENCE_POINTS + TEST_POINTS

# key -> (converter, default). Converters validate a single value; cross-key
# constraints are checked in resolve_config.
_SCHEMA: dict[str, tuple[Callable[[str], object], object]] = {
    "run.seed": (_int_min(0), 0),
    "grid.width": (_float_min(0.0, inclusive=False), 1000.0),
    "grid.height": (_float_min(0.0, inclusive=False), 2000.0),
    "grid.spacing": (_float_min(0.0, inclusive=False), 25.0),
    "anchors.ax": (_to_float, 0.0),
    "anchors.ay": (_to_float, 0.0),
    "anchors.bx": (_to_float, 0.0),
    "anchors.by": (_to_float, 2000.0),
    "anchors.cx": (_to_float, 1000.0),
    "anchors.cy": (_to_float, 0.0),
    "noise.slope": (_float_min(0.0, inclusive=False), 1.0),
    "noise.offset": (_to_float, 20.0),
    "noise.sigma": (_float_min(0.0), 30.0),
    "noise.inflation_threshold": (_float_min(0.0, inclusive=False), 1000.0),
    "noise.inflation_factor": (_float_min(1.0), 1.0 / 0.9),
    "noise.p_outlier": (_to_probability, 0.0),
    "correction.threshold": (_float_min(0.0, inclusive=False), 1000.0),
    "correction.ratio": (_to_ratio, 1.0),
    "preprocess.mad_k": (_float_min(0.0, inclusive=False), 3.0),
    "preprocess.mad_scale": (_float_min(0.0, inclusive=False), MAD_SCALE_NORMAL),
    "calibration.kind": (_to_model_kind, ModelKind.FOUR),
    "calibration.n_select": (_int_min(1), 60),
    "calibration.obs_sets": (_int_min(1), 300),
    "calibration.reference_points": (_to_points, REFERENCE_POINTS),
    "classifier.kind": (_to_classifier, "vote"),
    "classifier.k": (_int_min(1), 1),
    "classifier.max_depth": (_to_depth, None),
    "classifier.min_leaf": (_int_min(1), 1),
    "classifier.trees": (_int_min(1), 100),
    "classifier.features_per_split": (_int_range(1, 3), 1),
    "classifier.bootstrap": (_to_bool, True),
    "classifier.weights": (_to_weights, VoteWeights(3.0, 1.0)),
    "eval.n_trials": (_int_min(1), 400),
    "eval.test_points": (_to_points, TEST_POINTS),
    "campaign.reps": (_int_min(1), 500),
    "campaign.locations": (_to_points, _DEFAULT_LOCATIONS),
    "fingerprint.augment": (_int_min(0), 0),
}


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, str]:
    """Extract raw key/value strings, rejecting unknown and duplicate keys."""
    raw: dict[str, str] = {}
    first_line: dict[str, int] = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"{origin}:{ln}: expected 'key = value', got {stripped!r}")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{origin}:{ln}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(
                f"{origin}:{ln}: duplicate key {key!r} (first set on line {first_line[key]})"
            )
        raw[key] = value
        first_line[key] = ln
    return raw


@dataclass(frozen=True, eq=False)
class RunConfig:
    """A fully resolved configuration plus the set of explicitly given keys."""

    values: Mapping[str, object]
    explicit: frozenset[str]

    def get(self, key: str) -> object:
        return self.values[key]

    # builders ---------------------------------------------------------

    def seed(self) -> int:
        return self.values["run.seed"]  # type: ignore[return-value]

    def grid(self) -> GridSpec:
        v = self.values
        return GridSpec(v["grid.width"], v["grid.height"], v["grid.spacing"])

    def anchors(self) -> AnchorLayout:
        v = self.values
        return AnchorLayout(
            (v["anchors.ax"], v["anchors.ay"]),
            (v["anchors.bx"], v["anchors.by"]),
            (v["anchors.cx"], v["anchors.cy"]),
        )

    def noise(self) -> NoiseConfig:
        """Base noise model; pipeline stages re-seed it per stage."""
        v = self.values
        return NoiseConfig(
            slope=v["noise.slope"],
            offset=v["noise.offset"],
            sigma=v["noise.sigma"],
            inflation_threshold=v["noise.inflation_threshold"],
            inflation_factor=v["noise.inflation_factor"],
            p_outlier=v["noise.p_outlier"],
            seed=0,
        )

    def correction(self) -> CorrectionPolicy:
        v = self.values
        return CorrectionPolicy(v["correction.threshold"], v["correction.ratio"])

    def model_kind(self) -> ModelKind | None:
        return self.values["calibration.kind"]  # type: ignore[return-value]

    def pipeline(self) -> PipelineConfig:
        v = self.values
        return PipelineConfig(
            model_kind=v["calibration.kind"],
            noise=self.noise(),
            correction=self.correction(),
            classifier=v["classifier.kind"],
            vote_weights=v["classifier.weights"],
            n_trials=v["eval.n_trials"],
            test_points=v["eval.test_points"],
            reference_points=v["calibration.reference_points"],
            seed=v["run.seed"],
            knn_k=v["classifier.k"],
            tree_max_depth=v["classifier.max_depth"],
            tree_min_leaf=v["classifier.min_leaf"],
            forest_trees=v["classifier.trees"],
            forest_features=v["classifier.features_per_split"],
            forest_bootstrap=v["classifier.bootstrap"],
            obs_sets=v["calibration.obs_sets"],
            n_select=v["calibration.n_select"],
            mad_k=v["preprocess.mad_k"],
            mad_scale=v["preprocess.mad_scale"],
            augment=v["fingerprint.augment"],
        )

    def campaign(self) -> Campaign:
        """Measurement campaign for the simulate command.

        Uses the observation-stage seed, so a simulated file re-fed into
        the fit command reproduces the in-pipeline observation campaign
        when locations and reps line up.
        """
        v = self.values
        noise = NoiseConfig(
            slope=v["noise.slope"],
            offset=v["noise.offset"],
            sigma=v["noise.sigma"],
            inflation_threshold=v["noise.inflation_threshold"],
            inflation_factor=v["noise.inflation_factor"],
            p_outlier=v["noise.p_outlier"],
            seed=derive_seed(v["run.seed"], STAGE_OBSERVATION),
        )
        return Campaign(v["campaign.locations"], v["campaign.reps"], self.anchors(), noise)

    # canonical form ---------------------------------------------------

    def resolved_lines(self) -> list[str]:
        """Every key with its resolved value, canonically formatted, sorted."""
        return [f"{k} = {_fmt_value(self.values[k])}" for k in sorted(self.values)]

    def config_hash(self) -> str:
        text = "\n".join(self.resolved_lines())
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def resolve_config(
    raw: Mapping[str, str], origin: str = "<config>"
) -> RunConfig:
    """Convert raw strings, fill defaults, and cross-validate."""
    values: dict[str, object] = {}
    for key, (conv, default) in _SCHEMA.items():
        if key in raw:
            try:
                values[key] = conv(raw[key])
            except ValueError as exc:
                raise ConfigError(f"{origin}: {key}: {exc}") from None
        else:
            values[key] = default
    explicit = frozenset(raw)

    # cross-key constraints
    try:
        grid = GridSpec(values["grid.width"], values["grid.height"], values["grid.spacing"])
    except ValueError as exc:
        raise ConfigError(f"{origin}: grid: {exc}") from None
    try:
        AnchorLayout(
            (values["anchors.ax"], values["anchors.ay"]),
            (values["anchors.bx"], values["anchors.by"]),
            (values["anchors.cx"], values["anchors.cy"]),
        )
    except (CollinearAnchorsError, ValueError) as exc:
        raise ConfigError(f"{origin}: anchors: {exc}") from None

    refs = values["calibration.reference_points"]
    if len(refs) != 4:
        raise ConfigError(
            f"{origin}: calibration.reference_points: exactly 4 points required, got {len(refs)}"
        )
    if len(set(p.as_tuple() for p in refs)) != 4:
        raise ConfigError(f"{origin}: calibration.reference_points: points must be distinct")
    for group in ("calibration.reference_points", "eval.test_points", "campaign.locations"):
        pts = values[group]
        if len(pts) == 0:
            raise ConfigError(f"{origin}: {group}: at least one point required")
        for p in pts:
            if not p.is_within(grid.width, grid.height):
                raise ConfigError(
                    f"{origin}: {group}: point {p.as_tuple()} outside the "
                    f"{grid.width} x {grid.height} mm area"
                )

    if values["calibration.kind"] is None:
        clashing = sorted(k for k in explicit if k.startswith("classifier."))
        if clashing:
            raise ConfigError(
                f"{origin}: calibration.kind = none runs the trilateration baseline; "
                f"classifier settings have no effect: {', '.join(clashing)}"
            )

    return RunConfig(values, explicit)


def load_config(
    path: str | None, overrides: Mapping[str, str] | None = None
) -> RunConfig:
    """Read an optional config file, apply flag overrides, and resolve.

    Override values go through the same per-key validation as file values
    and count as explicitly set.
    """
    raw: dict[str, str] = {}
    origin = path if path is not None else "<defaults>"
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        raw = parse_config_text(text, origin=path)
    if overrides:
        for key, value in overrides.items():
            if key not in _SCHEMA:
                raise ConfigError(f"<override>: unknown key {key!r}")
            raw[key] = value
    return resolve_config(raw, origin=origin)
