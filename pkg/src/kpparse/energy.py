"""Unary and pairwise terms of the superpixel labeling energy."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ImagePlane, ScoreMap, _frozen
from .skeleton import RegionEvidence
from .superpixels import AdjacencyGraph, SuperPixelPartition

LARGE_VALUE = 1e7
COLOR_BINS = 8
GRID = 4
ORIENTATION_BINS = 8
FEATURE_DIM = 3 * COLOR_BINS + GRID * GRID + ORIENTATION_BINS


@dataclass(frozen=True)
class FeatureSet:
    color: np.ndarray  # (n, 24)
    position: np.ndarray  # (n, 16)
    texture: np.ndarray  # (n, 8)

    @property
    def region_count(self) -> int:
        return len(self.color)

    def groups(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.color, self.position, self.texture

    def matrix(self) -> np.ndarray:
        return np.hstack([self.color, self.position, self.texture])


@dataclass(frozen=True)
class UnaryTable:
    costs: np.ndarray  # (n, K+1)
    hard: np.ndarray  # (n,) bool

    @property
    def region_count(self) -> int:
        return self.costs.shape[0]

    @property
    def num_labels(self) -> int:
        return self.costs.shape[1]

    def __add__(self, other: "UnaryTable") -> "UnaryTable":
        if self.costs.shape != other.costs.shape:
            raise ValueError("unary tables differ in shape")
        return UnaryTable(_frozen(self.costs + other.costs), _frozen(self.hard | other.hard))


@dataclass(frozen=True)
class PairwiseWeights:
    edges: np.ndarray  # (m, 2)
    weights: np.ndarray  # (m,)
    smoothness: float = 1.0

    @classmethod
    def zero(cls, graph: AdjacencyGraph) -> "PairwiseWeights":
        return cls(graph.edges, _frozen(np.zeros(graph.edge_count)), 1.0)

    def scaled(self) -> np.ndarray:
        return self.smoothness * self.weights


def _region_histogram(region: np.ndarray, bins: np.ndarray, nbins: int, n: int, weights=None) -> np.ndarray:
    return np.bincount(region * nbins + bins, weights=weights, minlength=n * nbins).reshape(n, nbins)


def _l1(hist: np.ndarray) -> np.ndarray:
    total = hist.sum(axis=1, keepdims=True)
    return hist / np.where(total > 0, total, 1.0)


def extract_features(image: ImagePlane, partition: SuperPixelPartition) -> FeatureSet:
    """Color, position and gradient-orientation histograms per region, each L1-normalized."""
    if image.shape != partition.shape:
        raise ValueError(f"image {image.shape} and partition {partition.shape} differ in size")
    h, w = image.shape
    n = partition.region_count
    region = partition.region_of.ravel().astype(np.int64)
    px = image.pixels.reshape(-1, 3).astype(np.int64)

    # one histogram per channel, each normalized on its own
    color = np.hstack(
        [_l1(_region_histogram(region, px[:, c] * COLOR_BINS // 256, COLOR_BINS, n).astype(np.float64)) for c in range(3)]
    )

    ys, xs = np.mgrid[0:h, 0:w]
    cx = np.minimum(GRID * xs.ravel() // w, GRID - 1)
    cy = np.minimum(GRID * ys.ravel() // h, GRID - 1)
    position = _region_histogram(region, cy * GRID + cx, GRID * GRID, n)

    lum = image.pixels.astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    gy, gx = np.gradient(lum) if min(h, w) > 1 else (np.zeros_like(lum), np.zeros_like(lum))
    mag = np.hypot(gx, gy).ravel()
    angle = np.arctan2(gy, gx).ravel()
    obin = np.floor((angle + np.pi) / (2 * np.pi) * ORIENTATION_BINS).astype(np.int64) % ORIENTATION_BINS
    texture = _region_histogram(region, obin, ORIENTATION_BINS, n, weights=mag)
    # zero-gradient pixels spread a unit weight evenly over all orientations
    flat_count = np.bincount(region, weights=(mag == 0).astype(np.float64), minlength=n)
    texture = texture + flat_count[:, None] / ORIENTATION_BINS

    return FeatureSet(
        color=_frozen(color),
        position=_frozen(_l1(position.astype(np.float64))),
        texture=_frozen(_l1(texture)),
    )


def unary_skeleton(evidence: RegionEvidence, num_labels: int, large_value: float = LARGE_VALUE) -> UnaryTable:
    """Hard constraints from skeleton and background evidence, uniform cost elsewhere."""
    if np.any((evidence.part_label > 0) & evidence.background):
        raise ValueError("a region cannot be both background-confident and part-labeled")
    n = evidence.region_count
    costs = np.full((n, num_labels), -np.log(1.0 / num_labels))
    for rows, label in ((evidence.part_label > 0, evidence.part_label), (evidence.background, 0)):
        costs[rows] = large_value
        costs[np.flatnonzero(rows), np.broadcast_to(label, n)[rows]] = 0.0
    hard = (evidence.part_label > 0) | evidence.background
    return UnaryTable(_frozen(costs), _frozen(hard))


def region_mean_scores(scores: ScoreMap, partition: SuperPixelPartition) -> np.ndarray:
    if scores.shape != partition.shape:
        raise ValueError(f"scores {scores.shape} and partition {partition.shape} differ in size")
    region = partition.region_of.ravel()
    n = partition.region_count
    sums = np.stack(
        [np.bincount(region, weights=ch.ravel(), minlength=n) for ch in scores.values], axis=1
    )
    return sums / partition.sizes[:, None]


def unary_score(
    scores: ScoreMap, partition: SuperPixelPartition, mu: float = 1.0, epsilon: float = 1e-8
) -> UnaryTable:
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    mean = region_mean_scores(scores, partition)
    with np.errstate(divide="ignore"):
        costs = -mu * np.log(mean + epsilon) if mu > 0 else np.zeros_like(mean)
    return UnaryTable(_frozen(costs), _frozen(np.zeros(len(mean), bool)))


def feature_distances(graph: AdjacencyGraph, features: FeatureSet) -> np.ndarray:
    """(m, 3) Euclidean distances per edge for the color, position and texture groups."""
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    return np.stack([np.linalg.norm(h[i] - h[j], axis=1) for h in features.groups()], axis=1)


def pairwise(
    graph: AdjacencyGraph,
    features: FeatureSet,
    omegas: tuple[float, float, float] = (1.0, 1.0, 1.0),
    sigmas: tuple[float, float, float] = (1.0, 1.0, 1.0),
    smoothness: float = 1.0,
) -> PairwiseWeights:
    """Contrast-sensitive edge weights, charged as a Potts penalty when labels differ."""
    sig = np.asarray(sigmas, dtype=np.float64)
    if np.any(sig <= 0):
        raise ValueError("bandwidths must be positive")
    d = feature_distances(graph, features)
    w = (np.asarray(omegas, dtype=np.float64) * np.exp(-(d**2) / (2 * sig**2))).sum(axis=1)
    return PairwiseWeights(graph.edges, _frozen(w.reshape(-1)), float(smoothness))


def estimate_bandwidths(graph: AdjacencyGraph, features: FeatureSet) -> tuple[float, float, float]:
    if graph.edge_count == 0:
        return (1.0, 1.0, 1.0)
    mean = feature_distances(graph, features).mean(axis=0)
    return tuple(float(m) if m > 0 else 1.0 for m in mean)


def total_energy(labeling, unary: UnaryTable, weights: PairwiseWeights) -> float:
    y = np.asarray(labeling, dtype=np.int64)
    if y.shape != (unary.region_count,):
        raise ValueError("labeling must assign every region")
    data = unary.costs[np.arange(len(y)), y].sum()
    e = weights.edges
    if len(e) == 0:
        return float(data)
    cut = y[e[:, 0]] != y[e[:, 1]]
    return float(data + weights.scaled()[cut].sum())
