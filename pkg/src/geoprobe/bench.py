"""Benchmark datasets, the localization metric suite, and report rendering.

Datasets are JSONL files (``*.bench.jsonl``) whose samples carry either a
real image path or an embedded synthetic scene descriptor, so generated
and photographed benchmarks share one format. Metrics are pure functions
of (predictions, samples); rounding to two decimals happens only when a
report is rendered, half-up, so stored values stay exact.

Missing predictions count as misses for every truth-based metric. Location
compliance is different: it never consults the truth and is computed over
the predictions that exist; methods that emit no city names at all get a
"/" placeholder instead of a number.
"""

from __future__ import annotations

import enum
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .errors import (
    ConfigError,
    DatasetError,
    EmptyDatasetError,
    EmptyPredictionsError,
    UnmatchedPredictionError,
)
from .executor import AblationConfig
from .geo import Gazetteer, GeoPoint, haversine_km, normalize_city_name, reverse_geocode
from .state import EpisodeStatus, Prediction
from .synthworld import ClueKind, Difficulty, SceneDescriptor, SynthWorld, sample_episode

DEFAULT_THRESHOLDS_KM: tuple[int, ...] = (1, 25, 200, 750, 2500)

DATASET_SUFFIX = ".bench.jsonl"

#: Default difficulty mix for generated benchmarks: medium-heavy, with the
#: medium share at 34/60 = 56.67% of samples.
DEFAULT_MIX: dict[Difficulty, float] = {
    Difficulty.EASY: 13 / 60,
    Difficulty.MEDIUM: 34 / 60,
    Difficulty.HARD: 13 / 60,
}


class SceneCategory(enum.Enum):
    RURAL = "Rural"
    URBAN = "Urban"
    AERIAL_DISTANT = "AerialDistant"
    CLOSE_UP = "CloseUp"


def classify_scene(desc: SceneDescriptor) -> SceneCategory:
    """Deterministic category for a synthetic scene from its clue profile.

    Readable signage or a named POI implies close range; built-environment
    clues imply an urban viewpoint; a single coarse clue reads as a distant
    aerial view; remaining macro-only scenes count as rural.
    """
    kinds = {c.kind for c in desc.clues}
    if ClueKind.SIGN_TEXT in kinds or ClueKind.POI in kinds:
        return SceneCategory.CLOSE_UP
    if ClueKind.ARCHITECTURE in kinds or ClueKind.VEHICLE in kinds:
        return SceneCategory.URBAN
    if len(desc.clues) <= 1:
        return SceneCategory.AERIAL_DISTANT
    return SceneCategory.RURAL


# -- samples and dataset files ----------------------------------------------


@dataclass(frozen=True)
class BenchmarkSample:
    """One benchmark item: media plus ground truth and annotations."""

    id: str
    truth_point: GeoPoint
    truth_city: str
    truth_province: str
    scene_category: SceneCategory
    difficulty: Difficulty
    image: str | None = None
    descriptor: SceneDescriptor | None = None
    clue_tags: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise ValueError("sample id must be non-empty")
        if (self.image is None) == (self.descriptor is None):
            raise ValueError("exactly one of image / descriptor must be present")

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "truth": self.truth_point.to_json(),
            "truth_city": self.truth_city,
            "truth_province": self.truth_province,
            "scene_category": self.scene_category.value,
            "difficulty": self.difficulty.value,
            "clue_tags": list(self.clue_tags),
        }
        if self.image is not None:
            out["image"] = self.image
        else:
            assert self.descriptor is not None
            out["descriptor"] = self.descriptor.to_json()
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "BenchmarkSample":
        desc = obj.get("descriptor")
        return cls(
            id=str(obj["id"]),
            truth_point=GeoPoint.from_json(obj["truth"]),
            truth_city=str(obj["truth_city"]),
            truth_province=str(obj["truth_province"]),
            scene_category=SceneCategory(obj["scene_category"]),
            difficulty=Difficulty(obj["difficulty"]),
            image=obj.get("image"),
            descriptor=SceneDescriptor.from_json(desc) if desc is not None else None,
            clue_tags=tuple(str(t) for t in obj.get("clue_tags", ())),
        )


_REQUIRED_FIELDS = ("id", "truth", "truth_city", "truth_province",
                    "scene_category", "difficulty")


def _sample_from_line(line_no: int, obj) -> BenchmarkSample:
    if not isinstance(obj, dict):
        raise DatasetError(line_no, "sample must be a JSON object")
    for name in _REQUIRED_FIELDS:
        if name not in obj:
            raise DatasetError(line_no, "missing required field", field=name)
    if ("image" in obj) == ("descriptor" in obj):
        raise DatasetError(
            line_no, "exactly one of image / descriptor must be present",
            field="image")
    try:
        truth = GeoPoint.from_json(obj["truth"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(line_no, f"bad truth point: {exc}", field="truth")
    try:
        category = SceneCategory(obj["scene_category"])
    except ValueError:
        raise DatasetError(
            line_no, f"unknown scene category: {obj['scene_category']!r}",
            field="scene_category")
    try:
        difficulty = Difficulty(obj["difficulty"])
    except ValueError:
        raise DatasetError(
            line_no, f"unknown difficulty: {obj['difficulty']!r}",
            field="difficulty")
    descriptor = None
    if "descriptor" in obj:
        try:
            descriptor = SceneDescriptor.from_json(obj["descriptor"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(line_no, f"bad descriptor: {exc}", field="descriptor")
    tags = obj.get("clue_tags", [])
    if not isinstance(tags, list) or not all(isinstance(t, str) for t in tags):
        raise DatasetError(line_no, "clue_tags must be a list of strings",
                           field="clue_tags")
    try:
        return BenchmarkSample(
            id=str(obj["id"]),
            truth_point=truth,
            truth_city=str(obj["truth_city"]),
            truth_province=str(obj["truth_province"]),
            scene_category=category,
            difficulty=difficulty,
            image=obj.get("image"),
            descriptor=descriptor,
            clue_tags=tuple(tags),
        )
    except ValueError as exc:
        raise DatasetError(line_no, str(exc))


def load_dataset(path) -> list[BenchmarkSample]:
    """Parse a ``*.bench.jsonl`` file; every error names its 1-based line."""
    import json

    path = Path(path)
    if not path.name.endswith(DATASET_SUFFIX):
        raise DatasetError(0, f"dataset file must end with {DATASET_SUFFIX!r}")
    if not path.exists():
        raise DatasetError(0, f"dataset file not found: {path}")
    samples: list[BenchmarkSample] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise DatasetError(line_no, f"invalid JSON: {exc}")
            sample = _sample_from_line(line_no, obj)
            if sample.id in seen:
                raise DatasetError(line_no, f"duplicate sample id {sample.id!r}",
                                   field="id")
            seen.add(sample.id)
            samples.append(sample)
    if not samples:
        raise EmptyDatasetError(f"no samples in {path}")
    return samples


def save_dataset(path, samples: Sequence[BenchmarkSample]) -> None:
    import json

    path = Path(path)
    if not path.name.endswith(DATASET_SUFFIX):
        raise DatasetError(0, f"dataset file must end with {DATASET_SUFFIX!r}")
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample.to_json(), sort_keys=True) + "\n")


# -- metric suite -----------------------------------------------------------


def _same_city(a: str, b: str, aliases: dict[str, str] | None = None) -> bool:
    return normalize_city_name(a, aliases=aliases) == normalize_city_name(b, aliases=aliases)


def _pair(
    preds: Sequence[Prediction], samples: Sequence[BenchmarkSample]
) -> dict[str, Prediction]:
    """Match predictions to samples by id. Samples without a prediction are
    allowed (they count as misses); predictions without a sample are not."""
    if not samples:
        raise EmptyDatasetError("no samples to evaluate")
    known = {s.id for s in samples}
    by_id: dict[str, Prediction] = {}
    for pred in preds:
        sid = pred.sample_id
        if sid is None or sid not in known:
            raise UnmatchedPredictionError(str(sid))
        if sid in by_id:
            raise UnmatchedPredictionError(sid)
        by_id[sid] = pred
    return by_id


def threshold_accuracy(
    preds: Sequence[Prediction],
    samples: Sequence[BenchmarkSample],
    thresholds: Iterable[int] = DEFAULT_THRESHOLDS_KM,
) -> dict[int, float]:
    """Percentage of predictions within each distance of the truth.

    Boundaries are inclusive, which makes accuracy exactly monotone in the
    threshold. Values are raw percentages; rounding happens at render time.
    """
    by_id = _pair(preds, samples)
    n = len(samples)
    out: dict[int, float] = {}
    for tau in sorted(set(thresholds)):
        hits = 0
        for sample in samples:
            pred = by_id.get(sample.id)
            if pred is None:
                continue
            if haversine_km(pred.point, sample.truth_point) <= tau:
                hits += 1
        out[tau] = 100.0 * hits / n
    return out


def acc_city(
    preds: Sequence[Prediction],
    samples: Sequence[BenchmarkSample],
    aliases: dict[str, str] | None = None,
) -> float:
    """Percentage whose predicted city name equals the truth city name.

    Name comparison goes through city-name normalization, so exonyms listed
    in the alias table count as matches.
    """
    by_id = _pair(preds, samples)
    hits = 0
    for sample in samples:
        pred = by_id.get(sample.id)
        if pred is None:
            continue
        if _same_city(pred.city_name, sample.truth_city, aliases):
            hits += 1
    return 100.0 * hits / len(samples)


def acc_loglat(
    preds: Sequence[Prediction],
    samples: Sequence[BenchmarkSample],
    g: Gazetteer,
    aliases: dict[str, str] | None = None,
) -> float:
    """Percentage whose predicted point reverse-geocodes to the truth city.

    A point that reverse-geocodes to nothing counts as a miss.
    """
    by_id = _pair(preds, samples)
    hits = 0
    for sample in samples:
        pred = by_id.get(sample.id)
        if pred is None:
            continue
        city = reverse_geocode(g, pred.point)
        if city is None:
            continue
        if _same_city(city.name, sample.truth_city, aliases):
            hits += 1
    return 100.0 * hits / len(samples)


def location_compliance(
    preds: Sequence[Prediction],
    g: Gazetteer,
    aliases: dict[str, str] | None = None,
) -> float:
    """Agreement between the stated city name and the coordinate-derived one.

    Truth is never consulted: this measures internal coherence of each
    prediction. A point that reverse-geocodes to nothing is non-compliant.
    """
    if not preds:
        raise EmptyPredictionsError("no predictions to check for compliance")
    hits = 0
    for pred in preds:
        city = reverse_geocode(g, pred.point)
        if city is None:
            continue
        if _same_city(city.name, pred.city_name, aliases):
            hits += 1
    return 100.0 * hits / len(preds)


# -- report assembly --------------------------------------------------------


def round2(value: float) -> float:
    """Half-up rounding to two decimals over the printed decimal value."""
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def _fmt(value: float | None) -> str:
    return "/" if value is None else f"{round2(value):.2f}"


@dataclass(frozen=True)
class MetricBlock:
    """The full metric set over one group of samples."""

    n: int
    threshold_acc: dict[int, float]
    acc_city: float
    acc_loglat: float
    location_compliance: float | None

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "threshold_acc": {
                str(t): round2(v) for t, v in sorted(self.threshold_acc.items())
            },
            "acc_city": round2(self.acc_city),
            "acc_loglat": round2(self.acc_loglat),
            "location_compliance": (
                None if self.location_compliance is None
                else round2(self.location_compliance)
            ),
        }


def _block(
    preds: Sequence[Prediction],
    samples: Sequence[BenchmarkSample],
    g: Gazetteer,
    thresholds: Iterable[int],
    aliases: dict[str, str] | None = None,
) -> MetricBlock:
    by_id = _pair(preds, samples)
    present = [by_id[s.id] for s in samples if s.id in by_id]
    if present and all(p.city_name == "" for p in present):
        compliance = None  # method emits no city names; rendered as "/"
    elif present:
        compliance = location_compliance(present, g, aliases)
    else:
        compliance = 0.0
    return MetricBlock(
        n=len(samples),
        threshold_acc=threshold_accuracy(preds, samples, thresholds),
        acc_city=acc_city(preds, samples, aliases),
        acc_loglat=acc_loglat(preds, samples, g, aliases),
        location_compliance=compliance,
    )


def stratify(
    preds: Sequence[Prediction],
    samples: Sequence[BenchmarkSample],
    g: Gazetteer,
    thresholds: Iterable[int] = DEFAULT_THRESHOLDS_KM,
    aliases: dict[str, str] | None = None,
) -> dict[str, dict[str, MetricBlock]]:
    """Recompute the metric set per scene category and per difficulty."""
    by_id = _pair(preds, samples)

    def group(key: Callable[[BenchmarkSample], str]) -> dict[str, MetricBlock]:
        buckets: dict[str, list[BenchmarkSample]] = {}
        for sample in samples:
            buckets.setdefault(key(sample), []).append(sample)
        out = {}
        for name in sorted(buckets):
            members = buckets[name]
            member_preds = [by_id[s.id] for s in members if s.id in by_id]
            out[name] = _block(member_preds, members, g, thresholds, aliases)
        return out

    return {
        "scene_category": group(lambda s: s.scene_category.value),
        "difficulty": group(lambda s: s.difficulty.value),
    }


@dataclass(frozen=True)
class MetricsReport:
    """Everything a benchmark run reports, before any rounding."""

    label: str
    overall: MetricBlock
    strata: dict[str, dict[str, MetricBlock]]

    @property
    def n(self) -> int:
        return self.overall.n

    @property
    def threshold_acc(self) -> dict[int, float]:
        return self.overall.threshold_acc

    @property
    def acc_city(self) -> float:
        return self.overall.acc_city

    @property
    def acc_loglat(self) -> float:
        return self.overall.acc_loglat

    @property
    def location_compliance(self) -> float | None:
        return self.overall.location_compliance

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "n": self.overall.n,
            "overall": self.overall.to_json(),
            "strata": {
                axis: {name: block.to_json() for name, block in groups.items()}
                for axis, groups in self.strata.items()
            },
        }


def compute_report(
    preds: Sequence[Prediction],
    samples: Sequence[BenchmarkSample],
    g: Gazetteer,
    *,
    label: str = "full",
    thresholds: Iterable[int] = DEFAULT_THRESHOLDS_KM,
    aliases: dict[str, str] | None = None,
) -> MetricsReport:
    return MetricsReport(
        label=label,
        overall=_block(preds, samples, g, thresholds, aliases),
        strata=stratify(preds, samples, g, thresholds, aliases),
    )


def render_text_table(report: MetricsReport) -> str:
    """Human-readable report. Pure function of the report contents.

    Rows use ``&``-separated cells with one header line per table, matching
    the column sets of the distance-threshold and city-level metric tables.
    """
    thresholds = sorted(report.overall.threshold_acc)
    km_cols = " & ".join(f"{t}km" for t in thresholds)
    city_cols = "ACC City & ACC Loglat & Location Compliance"

    def metric_cells(block: MetricBlock) -> tuple[str, str]:
        km = " & ".join(_fmt(block.threshold_acc[t]) for t in thresholds)
        city = " & ".join((
            _fmt(block.acc_city),
            _fmt(block.acc_loglat),
            _fmt(block.location_compliance),
        ))
        return km, city

    km_row, city_row = metric_cells(report.overall)
    lines = [
        f"condition: {report.label}",
        f"samples: {report.overall.n}",
        "",
        f"Method & {km_cols}",
        f"{report.label} & {km_row}",
        "",
        f"Method & {city_cols}",
        f"{report.label} & {city_row}",
    ]
    axis_titles = {"scene_category": "By scene category", "difficulty": "By difficulty"}
    for axis, groups in report.strata.items():
        if not groups:
            continue
        lines.append("")
        lines.append(axis_titles.get(axis, axis))
        lines.append(f"Stratum & n & {km_cols} & {city_cols}")
        for name, block in groups.items():
            km_row, city_row = metric_cells(block)
            lines.append(f"{name} & {block.n} & {km_row} & {city_row}")
    return "\n".join(lines) + "\n"


# -- synthetic dataset generation -------------------------------------------


def difficulty_counts(n: int, mix: Mapping[Difficulty, float]) -> dict[Difficulty, int]:
    """Integer counts per difficulty via largest-remainder apportionment."""
    if n <= 0:
        raise ConfigError("sample count must be >= 1")
    total = sum(mix.values())
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"difficulty mix must sum to 1, got {total}")
    if any(v < 0 for v in mix.values()):
        raise ConfigError("difficulty mix entries must be >= 0")
    order = [d for d in Difficulty if d in mix]
    floors = {d: int(n * mix[d]) for d in order}
    short = n - sum(floors.values())
    by_remainder = sorted(
        order, key=lambda d: (-(n * mix[d] - floors[d]), order.index(d)))
    for d in by_remainder[:short]:
        floors[d] += 1
    return floors


def make_benchmark(
    world: SynthWorld,
    n: int,
    seed: int,
    mix: Mapping[Difficulty, float] | None = None,
) -> list[BenchmarkSample]:
    """Generate a descriptor-embedded benchmark with the requested mix."""
    counts = difficulty_counts(n, DEFAULT_MIX if mix is None else mix)
    schedule: list[Difficulty] = []
    for difficulty in Difficulty:
        schedule.extend([difficulty] * counts.get(difficulty, 0))
    rng = random.Random(f"bench|{world.seed}|{seed}|{n}")
    rng.shuffle(schedule)
    g = world.gazetteer
    samples = []
    for i, difficulty in enumerate(schedule, start=1):
        desc = sample_episode(world, seed * 100_003 + i, difficulty)
        city = g.get(desc.truth.city_id)
        province = g.get(city.parent_id)
        samples.append(BenchmarkSample(
            id=f"s{i:04d}",
            truth_point=desc.truth.point,
            truth_city=city.name,
            truth_province=province.name,
            scene_category=classify_scene(desc),
            difficulty=difficulty,
            descriptor=desc,
            clue_tags=tuple(c.value for c in desc.clues),
        ))
    return samples


# -- benchmark execution ----------------------------------------------------


@dataclass(frozen=True)
class BenchEntry:
    """Outcome of one benchmark sample: a prediction or an exhaustion."""

    sample_id: str
    status: EpisodeStatus
    prediction: Prediction | None
    trace_path: str | None = None
    error: str | None = None

    def to_json(self) -> dict:
        out: dict = {"sample_id": self.sample_id, "status": self.status.value}
        if self.prediction is not None:
            out["prediction"] = self.prediction.to_json()
        if self.trace_path is not None:
            out["trace_path"] = self.trace_path
        if self.error is not None:
            out["error"] = self.error
        return out


@dataclass(frozen=True)
class BenchmarkRun:
    entries: tuple[BenchEntry, ...]
    report: MetricsReport

    @property
    def predictions(self) -> list[Prediction]:
        return [e.prediction for e in self.entries if e.prediction is not None]


def run_benchmark(
    samples: Sequence[BenchmarkSample],
    backend,
    world: SynthWorld | None = None,
    *,
    g: Gazetteer | None = None,
    adapters=None,
    tag_table=None,
    ablation: AblationConfig = AblationConfig(),
    max_steps: int | None = None,
    max_parallel: int = 4,
    context_budget: int | None = None,
    workers: int = 1,
    trace_dir=None,
    config_hash: str = "bench",
    thresholds: Iterable[int] = DEFAULT_THRESHOLDS_KM,
    aliases: dict[str, str] | None = None,
) -> BenchmarkRun:
    """Run every sample as one episode and aggregate the metric suite.

    Descriptor-embedded samples need ``world``; they run over in-process
    synthetic adapters unless ``adapters`` is given, in which case those
    adapters serve the tool calls and must resolve image refs of the form
    ``scene/<sample id>``. Image-path samples need ``adapters`` plus a
    gazetteer. A sample whose requirements are missing becomes an
    Exhausted entry.

    Episode-level parallelism: each worker owns its episode state, toolbox,
    and recorder, and results are assembled in dataset order, so a scripted
    backend yields byte-identical report JSON across runs regardless of the
    worker count. One sample's failure becomes an Exhausted entry; the run
    continues.
    """
    from .engine import (
        DEFAULT_CONTEXT_BUDGET,
        DEFAULT_MAX_STEPS,
        run_episode,
        run_synthetic_episode,
    )
    from .recorder import TraceHeader, TraceRecorder

    if not samples:
        raise EmptyDatasetError("no samples to run")
    gazetteer = world.gazetteer if world is not None else g
    if gazetteer is None:
        raise ConfigError("run_benchmark needs a world or a gazetteer")
    steps = DEFAULT_MAX_STEPS if max_steps is None else max_steps
    budget = DEFAULT_CONTEXT_BUDGET if context_budget is None else context_budget
    if trace_dir is not None:
        trace_dir = Path(trace_dir)
        trace_dir.mkdir(parents=True, exist_ok=True)

    def run_image_sample(sample: BenchmarkSample, trace_path: str | None):
        header = TraceHeader(
            gazetteer_hash=gazetteer.content_hash(),
            config_hash=config_hash,
            meta={"image_ref": sample.image, "sample_id": sample.id,
                  "label": ablation.label()},
        )
        recorder = TraceRecorder(header, trace_path)
        try:
            return run_episode(
                backend, adapters, gazetteer, recorder,
                image_ref=sample.image,
                tag_table=tag_table,
                max_steps=steps,
                max_parallel=max_parallel,
                context_budget=budget,
                ablation=ablation,
            )
        finally:
            recorder.close()

    def run_one(sample: BenchmarkSample) -> BenchEntry:
        trace_path = (
            str(trace_dir / f"{sample.id}.trace.jsonl") if trace_dir else None
        )
        try:
            if sample.descriptor is not None:
                if world is None:
                    return BenchEntry(
                        sample.id, EpisodeStatus.EXHAUSTED, None,
                        error="descriptor sample needs a synthetic world")
                result = run_synthetic_episode(
                    world, sample.descriptor, backend,
                    image_ref=f"scene/{sample.id}",
                    trace_path=trace_path,
                    config_hash=config_hash,
                    meta={"sample_id": sample.id, "label": ablation.label()},
                    max_steps=steps,
                    max_parallel=max_parallel,
                    context_budget=budget,
                    ablation=ablation,
                    adapters=adapters,
                )
            else:
                if adapters is None:
                    return BenchEntry(
                        sample.id, EpisodeStatus.EXHAUSTED, None,
                        error="image sample needs tool adapters; "
                              "sample has no embedded descriptor")
                result = run_image_sample(sample, trace_path)
        except Exception as exc:  # per-sample isolation: one failure never
            return BenchEntry(  # aborts the benchmark run
                sample.id, EpisodeStatus.EXHAUSTED, None,
                trace_path, error=f"{type(exc).__name__}: {exc}")
        prediction = result.prediction
        if prediction is None:
            return BenchEntry(sample.id, EpisodeStatus.EXHAUSTED, None,
                              trace_path, error="episode exhausted")
        prediction = replace(prediction, sample_id=sample.id, trace_ref=trace_path)
        return BenchEntry(sample.id, result.state.status, prediction, trace_path)

    if workers <= 1:
        entries = tuple(run_one(s) for s in samples)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = tuple(pool.map(run_one, samples))
    preds = [e.prediction for e in entries if e.prediction is not None]
    report = compute_report(
        preds, samples, gazetteer, label=ablation.label(),
        thresholds=thresholds, aliases=aliases)
    return BenchmarkRun(entries=entries, report=report)
