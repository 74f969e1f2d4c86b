"""Graph-based superpixels (Felzenszwalb-Huttenlocher) and region adjacency."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import ImagePlane, _frozen

DEFAULT_SCALE = 100.0
DEFAULT_MIN_SIZE = 60
DEFAULT_SIGMA = 0.5


@dataclass(frozen=True)
class SuperPixelPartition:
    region_of: np.ndarray  # (H, W) int32, contiguous region ids
    region_count: int
    sizes: np.ndarray  # (n,) pixel counts
    bboxes: np.ndarray  # (n, 4) x0, y0, x1, y1 inclusive
    centroids: np.ndarray  # (n, 2) x, y

    @property
    def height(self) -> int:
        return self.region_of.shape[0]

    @property
    def width(self) -> int:
        return self.region_of.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.region_of.shape

    @classmethod
    def from_region_map(cls, region_of: np.ndarray) -> "SuperPixelPartition":
        """Build a partition from any integer map, renumbering ids by first appearance."""
        region_of = np.asarray(region_of)
        if region_of.ndim != 2 or region_of.size == 0:
            raise ValueError("region map must be a non-empty 2-D array")
        flat = region_of.ravel()
        _, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(order.size)
        ids = rank[inverse].reshape(region_of.shape).astype(np.int32)
        n = int(order.size)

        h, w = ids.shape
        ys, xs = np.mgrid[0:h, 0:w]
        flat_ids = ids.ravel()
        sizes = np.bincount(flat_ids, minlength=n)
        cx = np.bincount(flat_ids, xs.ravel(), minlength=n) / sizes
        cy = np.bincount(flat_ids, ys.ravel(), minlength=n) / sizes
        bboxes = np.empty((n, 4), np.int64)
        bboxes[:, 0] = w
        bboxes[:, 1] = h
        bboxes[:, 2] = -1
        bboxes[:, 3] = -1
        np.minimum.at(bboxes[:, 0], flat_ids, xs.ravel())
        np.minimum.at(bboxes[:, 1], flat_ids, ys.ravel())
        np.maximum.at(bboxes[:, 2], flat_ids, xs.ravel())
        np.maximum.at(bboxes[:, 3], flat_ids, ys.ravel())
        return cls(
            region_of=_frozen(ids),
            region_count=n,
            sizes=_frozen(sizes),
            bboxes=_frozen(bboxes),
            centroids=_frozen(np.stack([cx, cy], axis=1)),
        )


@dataclass(frozen=True)
class AdjacencyGraph:
    """Undirected region graph; ``edges`` rows are (i, j) with i < j, sorted."""

    node_count: int
    edges: np.ndarray  # (m, 2) int64

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.node_count)

    def neighbors(self, i: int) -> list[int]:
        e = self.edges
        return sorted(set(e[e[:, 0] == i, 1].tolist()) | set(e[e[:, 1] == i, 0].tolist()))


def _grid_edges(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(h * w).reshape(h, w)
    a = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    b = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    return a, b


class _DisjointSet:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.internal = [0.0] * n

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int, weight: float) -> int:
        # union by size; ties keep the smaller root id for determinism
        if self.size[a] < self.size[b] or (self.size[a] == self.size[b] and b < a):
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        self.internal[a] = weight
        return a


def segment_graph_based(
    image: ImagePlane,
    scale: float = DEFAULT_SCALE,
    min_size: int = DEFAULT_MIN_SIZE,
    smoothing_sigma: float = DEFAULT_SIGMA,
) -> SuperPixelPartition:
    """Felzenszwalb-Huttenlocher segmentation on the 4-connected pixel grid.

    Edge weights are Euclidean RGB distances after optional Gaussian
    smoothing. Edges are processed in ascending weight order with ties broken
    by (pixel a, pixel b); components smaller than ``min_size`` are then merged
    across their cheapest edges in the same order.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    if min_size < 1:
        raise ValueError("min_size must be >= 1")
    if smoothing_sigma < 0:
        raise ValueError("smoothing_sigma must be nonnegative")
    h, w = image.shape
    if h * w == 0:
        raise ValueError("zero-area image")

    px = image.pixels.astype(np.float64)
    if smoothing_sigma > 0:
        px = np.stack(
            [ndimage.gaussian_filter(px[..., c], smoothing_sigma, mode="nearest") for c in range(3)],
            axis=-1,
        )
    flat = px.reshape(-1, 3)
    a, b = _grid_edges(h, w)
    weight = np.sqrt(((flat[a] - flat[b]) ** 2).sum(axis=1))
    order = np.lexsort((b, a, weight))
    a_list = a[order].tolist()
    b_list = b[order].tolist()
    w_list = weight[order].tolist()

    ds = _DisjointSet(h * w)
    find = ds.find
    size = ds.size
    internal = ds.internal
    for u, v, wt in zip(a_list, b_list, w_list):
        ru, rv = find(u), find(v)
        if ru == rv:
            continue
        if wt <= min(internal[ru] + scale / size[ru], internal[rv] + scale / size[rv]):
            ds.union(ru, rv, wt)

    for u, v, wt in zip(a_list, b_list, w_list):
        ru, rv = find(u), find(v)
        if ru != rv and (size[ru] < min_size or size[rv] < min_size):
            ds.union(ru, rv, max(wt, internal[ru], internal[rv]))

    roots = np.fromiter((find(i) for i in range(h * w)), dtype=np.int64, count=h * w)
    return SuperPixelPartition.from_region_map(roots.reshape(h, w))


def build_adjacency(partition: SuperPixelPartition) -> AdjacencyGraph:
    r = partition.region_of
    pairs = np.concatenate(
        [
            np.stack([r[:, :-1].ravel(), r[:, 1:].ravel()], axis=1),
            np.stack([r[:-1, :].ravel(), r[1:, :].ravel()], axis=1),
        ]
    ).astype(np.int64)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    pairs.sort(axis=1)
    edges = np.unique(pairs, axis=0) if len(pairs) else np.empty((0, 2), np.int64)
    return AdjacencyGraph(partition.region_count, _frozen(edges.reshape(-1, 2), np.int64))
