"""Keypoints to pseudo masks, with optional score-map evidence and iterative refinement."""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Protocol, Sequence

import numpy as np

from . import energy, skeleton
from .core import ImagePlane, LabelMask, PartTaxonomy, PersonKeypoints, ScoreMap, clamp_keypoints
from .evaluation import confusion_over, iou_report
from .graphcut import Labeling, alpha_expansion
from .scorer import LossWeights, ScorerModel, correlation_fuse, fit_scorer, predict_scores
from .skeleton import ConnectionTable, RegionEvidence
from .superpixels import AdjacencyGraph, SuperPixelPartition, build_adjacency, segment_graph_based

log = logging.getLogger(__name__)


class NoKeypointsWarning(UserWarning):
    pass


class HardConstraintViolation(AssertionError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    scale: float = 100.0
    min_size: int = 60
    smoothing_sigma: float = 0.5
    thickness_radius: float = 3.0
    background_distance: float = 50.0
    large_value: float = energy.LARGE_VALUE
    omega_color: float = 1.0
    omega_position: float = 1.0
    omega_texture: float = 1.0
    sigmas: tuple[float, float, float] | None = None  # None: estimate per image
    smoothness: float = 1.0
    mu: float = 1.0
    epsilon: float = 1e-8
    max_cycles: int = 10
    iterations: int = 3
    learning_rate: float = 1.0
    epochs: int = 300
    l2: float = 1e-4
    loss_part: float = 1.0
    loss_object: float = 1.0
    loss_refined: float = 1.0
    schema: str = "pascal"
    parts: tuple[str, ...] = ("head", "torso", "arm", "leg")
    connections: tuple[tuple[str, str, str], ...] | None = None  # overrides the schema rows

    def __post_init__(self) -> None:
        positive = ("scale", "large_value", "smoothness", "epsilon", "learning_rate")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        nonneg = ("smoothing_sigma", "thickness_radius", "background_distance", "mu", "l2",
                  "omega_color", "omega_position", "omega_texture",
                  "loss_part", "loss_object", "loss_refined")
        for name in nonneg:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.min_size < 1 or self.iterations < 1 or self.max_cycles < 1 or self.epochs < 0:
            raise ValueError("min_size, iterations and max_cycles must be >= 1")
        if self.schema not in skeleton.SCHEMAS:
            raise ValueError(f"unknown schema {self.schema!r}; supported: {sorted(skeleton.SCHEMAS)}")
        if self.sigmas is not None:
            sig = tuple(float(s) for s in self.sigmas)
            if len(sig) != 3 or min(sig) <= 0:
                raise ValueError("sigmas must be three positive numbers")
            object.__setattr__(self, "sigmas", sig)
        object.__setattr__(self, "parts", tuple(self.parts))
        if self.connections is not None:
            object.__setattr__(self, "connections", tuple(tuple(r) for r in self.connections))
        self.table  # validate connection rows early

    @property
    def taxonomy(self) -> PartTaxonomy:
        return PartTaxonomy(self.parts)

    @property
    def num_labels(self) -> int:
        return len(self.parts) + 1

    @property
    def table(self) -> ConnectionTable:
        base = skeleton.SCHEMAS[self.schema]
        if self.connections is None:
            return base
        tax = self.taxonomy
        rows = tuple((a, b, tax.index(part)) for a, b, part in self.connections)
        return ConnectionTable(base.name, base.keypoints, rows, base.derived, base.draw_order)

    @property
    def omegas(self) -> tuple[float, float, float]:
        return (self.omega_color, self.omega_position, self.omega_texture)

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.loss_part, self.loss_object, self.loss_refined)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class ImageContext:
    """Per-image quantities that do not change across refinement rounds."""

    image: ImagePlane
    partition: SuperPixelPartition
    graph: AdjacencyGraph
    features: energy.FeatureSet
    weights: energy.PairwiseWeights

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape


def prepare_image(image: ImagePlane, config: PipelineConfig) -> ImageContext:
    partition = segment_graph_based(image, config.scale, config.min_size, config.smoothing_sigma)
    graph = build_adjacency(partition)
    features = energy.extract_features(image, partition)
    sigmas = config.sigmas or energy.estimate_bandwidths(graph, features)
    weights = energy.pairwise(graph, features, config.omegas, sigmas, config.smoothness)
    return ImageContext(image, partition, graph, features, weights)


@dataclass(frozen=True)
class PseudoMaskResult:
    mask: LabelMask
    labeling: Labeling
    evidence: RegionEvidence
    partition: SuperPixelPartition


def check_hard_constraints(labels: np.ndarray, evidence: RegionEvidence) -> None:
    """Raise if a skeleton region lost its label or a background region took a part."""
    labels = np.asarray(labels)
    part = evidence.part_label > 0
    bad_part = np.flatnonzero(part & (labels != evidence.part_label))
    bad_bg = np.flatnonzero(evidence.background & (labels != 0))
    if len(bad_part) or len(bad_bg):
        raise HardConstraintViolation(
            f"regions {bad_part.tolist()} lost skeleton labels; regions {bad_bg.tolist()} left background"
        )


def _empty_evidence(n: int) -> RegionEvidence:
    return RegionEvidence(np.zeros(n, np.int64), np.zeros(n, bool), np.zeros((n, 1), np.int64))


def solve(
    ctx: ImageContext,
    persons: Sequence[PersonKeypoints],
    config: PipelineConfig,
    scores: ScoreMap | None = None,
    background_from_keypoints: bool = True,
) -> PseudoMaskResult:
    """Build the energy for one image and minimize it with alpha-expansion."""
    h, w = ctx.shape
    persons = clamp_keypoints(persons, w, h)
    has_keypoints = any(p.visible() for p in persons)
    if has_keypoints or background_from_keypoints:
        _, evidence = skeleton.region_evidence(
            ctx.partition, persons, config.table, config.num_labels,
            config.thickness_radius, config.background_distance,
        )
    else:
        evidence = _empty_evidence(ctx.partition.region_count)
    unary = energy.unary_skeleton(evidence, config.num_labels, config.large_value)
    if scores is not None:
        if scores.channels != config.num_labels:
            raise ValueError(f"score map has {scores.channels} channels, expected {config.num_labels}")
        unary = unary + energy.unary_score(scores, ctx.partition, config.mu, config.epsilon)
    labeling = alpha_expansion(unary, ctx.weights, max_cycles=config.max_cycles)
    check_hard_constraints(labeling.labels, evidence)
    mask = LabelMask(labeling.labels[ctx.partition.region_of], config.num_labels)
    return PseudoMaskResult(mask, labeling, evidence, ctx.partition)


def generate_pseudo_mask(
    image: ImagePlane,
    persons: Sequence[PersonKeypoints],
    config: PipelineConfig = PipelineConfig(),
    scores: ScoreMap | None = None,
    context: ImageContext | None = None,
) -> LabelMask:
    if not any(p.visible() for p in persons):
        warnings.warn("no visible keypoints; the pseudo mask is all background", NoKeypointsWarning, stacklevel=2)
    ctx = context or prepare_image(image, config)
    return solve(ctx, persons, config, scores).mask


def test_time_refine(
    image: ImagePlane,
    persons: Sequence[PersonKeypoints],
    scores: ScoreMap,
    config: PipelineConfig = PipelineConfig(),
    context: ImageContext | None = None,
) -> LabelMask:
    """Combine keypoints available at inference with predicted scores in one graph cut.

    With no visible keypoints the scores alone drive the labeling (no region is
    forced to background).
    """
    ctx = context or prepare_image(image, config)
    return solve(ctx, persons, config, scores, background_from_keypoints=False).mask


test_time_refine.__test__ = False  # not a pytest test despite the name


@dataclass(frozen=True)
class Sample:
    name: str
    image: ImagePlane
    persons: tuple[PersonKeypoints, ...]
    gt: LabelMask | None = None
    scores: ScoreMap | None = None


class ScoreProvider(Protocol):
    def fit(self, contexts: Sequence[ImageContext], region_labels: Sequence[np.ndarray]) -> bool:
        """Update from the latest pseudo labels; False means the provider is unusable this round."""

    def part_scores(self, index: int, ctx: ImageContext) -> ScoreMap: ...


@dataclass
class RegionScorerProvider:
    """Trains the region softmax scorer and serves its fused part probabilities."""

    config: PipelineConfig
    model: ScorerModel | None = None

    def fit(self, contexts, region_labels) -> bool:
        x = np.vstack([c.features.matrix() for c in contexts])
        y = np.concatenate([np.asarray(r) for r in region_labels])
        self.model = fit_scorer(
            x, y, self.config.num_labels, self.config.learning_rate,
            self.config.epochs, self.config.l2, self.config.loss_weights,
        )
        return not self.model.degenerate

    def part_scores(self, index, ctx) -> ScoreMap:
        part, obj = predict_scores(self.model, ctx.partition, ctx.features.matrix())
        return correlation_fuse(part, obj).normalized


@dataclass
class StaticScoreProvider:
    """Serves fixed per-image score maps (e.g. loaded from disk)."""

    maps: Sequence[ScoreMap]
    model: ScorerModel | None = None

    def fit(self, contexts, region_labels) -> bool:
        return True

    def part_scores(self, index, ctx) -> ScoreMap:
        return self.maps[index]


@dataclass(frozen=True)
class IterationMetrics:
    iteration: int
    mean_iou: float | None
    object_iou: float | None
    flagged: bool = False
    per_class: tuple[float, ...] | None = None


@dataclass
class RefinementResult:
    masks: list[LabelMask]
    model: ScorerModel | None
    metrics: list[IterationMetrics]
    history: list[list[LabelMask]] = field(default_factory=list)


def _solve_job(args):
    ctx, persons, config, scores = args
    return solve(ctx, persons, config, scores)


def _prepare_job(args):
    return prepare_image(*args)


def _map(fn: Callable, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _metrics(iteration: int, masks, samples, config, flagged=False) -> IterationMetrics:
    if not samples or any(s.gt is None for s in samples):
        return IterationMetrics(iteration, None, None, flagged)
    report = iou_report(confusion_over(zip(masks, (s.gt for s in samples)), config.num_labels), config.taxonomy)
    return IterationMetrics(iteration, report.mean, report.object, flagged, report.per_class)


def refine_iteratively(
    samples: Sequence[Sample],
    config: PipelineConfig = PipelineConfig(),
    provider: ScoreProvider | None = None,
    jobs: int = 1,
    contexts: Sequence[ImageContext] | None = None,
) -> RefinementResult:
    """Alternate graph-cut labeling and score-provider fitting for ``config.iterations`` rounds.

    Round 1 uses keypoints only. Each later round fits the provider on the
    previous round's region labels and adds its scores as a unary term. If the
    provider cannot be fitted, the previous masks are carried over and the
    round is flagged.
    """
    provider = provider if provider is not None else RegionScorerProvider(config)
    if contexts is None:
        contexts = _map(_prepare_job, [(s.image, config) for s in samples], jobs)
    for s in samples:
        if not any(p.visible() for p in s.persons):
            warnings.warn(f"{s.name}: no visible keypoints; pseudo mask is all background", NoKeypointsWarning)

    results = _map(_solve_job, [(c, s.persons, config, None) for c, s in zip(contexts, samples)], jobs)
    masks = [r.mask for r in results]
    history = [masks]
    metrics = [_metrics(1, masks, samples, config)]
    log.info("iteration 1: mIoU=%s", metrics[-1].mean_iou)

    for it in range(2, config.iterations + 1):
        ok = provider.fit(contexts, [r.labeling.labels for r in results])
        if not ok:
            log.warning("iteration %d: score provider degenerate, keeping previous masks", it)
            history.append(masks)
            metrics.append(_metrics(it, masks, samples, config, flagged=True))
            continue
        jobs_args = [
            (c, s.persons, config, provider.part_scores(i, c))
            for i, (c, s) in enumerate(zip(contexts, samples))
        ]
        results = _map(_solve_job, jobs_args, jobs)
        masks = [r.mask for r in results]
        history.append(masks)
        metrics.append(_metrics(it, masks, samples, config))
        log.info("iteration %d: mIoU=%s", it, metrics[-1].mean_iou)

    # the returned model is the one trained on the final masks
    provider.fit(contexts, [r.labeling.labels for r in results])
    return RefinementResult(masks, getattr(provider, "model", None), metrics, history)
