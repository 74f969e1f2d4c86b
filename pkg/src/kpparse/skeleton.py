"""Keypoints to part-labeled skeleton rasters and per-region evidence."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy import ndimage

from .core import PersonKeypoints, _frozen
from .superpixels import SuperPixelPartition

HEAD, TORSO, ARM, LEG = 1, 2, 3, 4
DEFAULT_THICKNESS = 3
DEFAULT_BACKGROUND_DISTANCE = 50.0


@dataclass(frozen=True)
class ConnectionTable:
    """Keypoint pairs that form skeleton segments, each tagged with a part label.

    ``derived`` synthesizes a missing keypoint as the midpoint of two others
    (COCO has no neck). ``draw_order`` lists part labels from first drawn to
    last drawn; later labels overwrite earlier ones where capsules overlap.
    """

    name: str
    keypoints: tuple[str, ...]
    rows: tuple[tuple[str, str, int], ...]
    derived: Mapping[str, tuple[str, str]] = field(default_factory=dict)
    draw_order: tuple[int, ...] = (TORSO, LEG, ARM, HEAD)

    def __post_init__(self) -> None:
        names = set(self.keypoints) | set(self.derived)
        for a, b, label in self.rows:
            if a not in names or b not in names:
                raise ValueError(f"row ({a}, {b}) uses names outside schema {self.name!r}")
            if label < 1:
                raise ValueError(f"part label {label} must be >= 1")

    def draw_rank(self, label: int) -> int:
        try:
            return self.draw_order.index(label)
        except ValueError:
            return len(self.draw_order) + label


_LIMBS = (
    ("left_shoulder", "left_elbow", ARM),
    ("left_elbow", "left_wrist", ARM),
    ("right_shoulder", "right_elbow", ARM),
    ("right_elbow", "right_wrist", ARM),
    ("left_hip", "left_knee", LEG),
    ("left_knee", "left_ankle", LEG),
    ("right_hip", "right_knee", LEG),
    ("right_knee", "right_ankle", LEG),
)
_TORSO = (
    ("neck", "left_hip", TORSO),
    ("neck", "right_hip", TORSO),
    ("left_shoulder", "right_shoulder", TORSO),
    ("left_hip", "right_hip", TORSO),
    ("left_shoulder", "left_hip", TORSO),
    ("right_shoulder", "right_hip", TORSO),
)
_BODY = (
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)

PASCAL = ConnectionTable(
    name="pascal",
    keypoints=("forehead", "neck") + _BODY,
    rows=(("forehead", "neck", HEAD),) + _TORSO + _LIMBS,
)

COCO = ConnectionTable(
    name="coco",
    keypoints=("nose", "left_eye", "right_eye", "left_ear", "right_ear") + _BODY,
    rows=(
        ("nose", "neck", HEAD),
        ("nose", "left_eye", HEAD),
        ("nose", "right_eye", HEAD),
        ("left_eye", "left_ear", HEAD),
        ("right_eye", "right_ear", HEAD),
    )
    + _TORSO
    + _LIMBS,
    derived={"neck": ("left_shoulder", "right_shoulder")},
)

SCHEMAS = {"pascal": PASCAL, "coco": COCO}


@dataclass(frozen=True)
class Segment:
    a: tuple[float, float]
    b: tuple[float, float]
    label: int


@dataclass(frozen=True)
class SkeletonRaster:
    labels: np.ndarray  # (H, W) uint8, 0 = no skeleton
    provenance: np.ndarray  # (H, W) int32 segment index, -1 = none

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class RegionEvidence:
    part_label: np.ndarray  # (n,) int, 0 = no L_i
    background: np.ndarray  # (n,) bool
    overlap: np.ndarray  # (n, K+1) skeleton pixel counts per label; column 0 unused

    @property
    def region_count(self) -> int:
        return len(self.part_label)

    @property
    def committed(self) -> np.ndarray:
        return (self.part_label > 0) | self.background


def _point(person: PersonKeypoints, name: str, derived: Mapping[str, tuple[str, str]]):
    kp = person.get(name)
    if kp is not None:
        return (kp.x, kp.y) if kp.visible else None
    if name in derived:
        p, q = (_point(person, n, {}) for n in derived[name])
        if p is not None and q is not None:
            return ((p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0)
    return None


def build_segments(persons: Sequence[PersonKeypoints], table: ConnectionTable) -> list[Segment]:
    segments = []
    for person in persons:
        for a, b, label in table.rows:
            pa = _point(person, a, table.derived)
            pb = _point(person, b, table.derived)
            if pa is not None and pb is not None:
                segments.append(Segment(pa, pb, label))
    return segments


def _bresenham(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    pts = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        pts.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return pts
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def segment_pixels(seg: Segment, height: int, width: int, radius: float) -> np.ndarray:
    """Boolean mask of pixels within ``radius`` of the segment, plus its Bresenham line."""
    (ax, ay), (bx, by) = seg.a, seg.b
    x0 = max(int(np.floor(min(ax, bx) - radius)), 0)
    x1 = min(int(np.ceil(max(ax, bx) + radius)), width - 1)
    y0 = max(int(np.floor(min(ay, by) - radius)), 0)
    y1 = min(int(np.ceil(max(ay, by) + radius)), height - 1)
    mask = np.zeros((height, width), bool)
    if x0 <= x1 and y0 <= y1:
        ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1].astype(np.float64)
        dx, dy = bx - ax, by - ay
        length2 = dx * dx + dy * dy
        if length2 > 0:
            t = np.clip(((xs - ax) * dx + (ys - ay) * dy) / length2, 0.0, 1.0)
        else:
            t = np.zeros_like(xs)
        d2 = (xs - (ax + t * dx)) ** 2 + (ys - (ay + t * dy)) ** 2
        mask[y0 : y1 + 1, x0 : x1 + 1] = d2 <= radius * radius + 1e-9
    for x, y in _bresenham(int(round(ax)), int(round(ay)), int(round(bx)), int(round(by))):
        if 0 <= x < width and 0 <= y < height:
            mask[y, x] = True
    return mask


def rasterize(
    segments: Sequence[Segment],
    width: int,
    height: int,
    thickness_radius: float = DEFAULT_THICKNESS,
    table: ConnectionTable = PASCAL,
) -> SkeletonRaster:
    if thickness_radius < 0:
        raise ValueError("thickness_radius must be nonnegative")
    labels = np.zeros((height, width), np.uint8)
    provenance = np.full((height, width), -1, np.int32)
    order = sorted(range(len(segments)), key=lambda i: (table.draw_rank(segments[i].label), i))
    for i in order:
        m = segment_pixels(segments[i], height, width, thickness_radius)
        labels[m] = segments[i].label
        provenance[m] = i
    return SkeletonRaster(_frozen(labels), _frozen(provenance))


def assign_region_labels(
    partition: SuperPixelPartition, raster: SkeletonRaster, num_labels: int
) -> RegionEvidence:
    """Give each skeleton-touching region the part it overlaps most (smaller label on ties)."""
    if partition.shape != raster.shape:
        raise ValueError(f"partition {partition.shape} and raster {raster.shape} differ in size")
    n = partition.region_count
    region = partition.region_of.ravel().astype(np.int64)
    lab = raster.labels.ravel().astype(np.int64)
    on = lab > 0
    overlap = np.bincount(region[on] * num_labels + lab[on], minlength=n * num_labels)
    overlap = overlap.reshape(n, num_labels)
    overlap[:, 0] = 0
    part_label = np.where(overlap.sum(axis=1) > 0, overlap.argmax(axis=1), 0)
    return RegionEvidence(
        part_label=_frozen(part_label, np.int64),
        background=_frozen(np.zeros(n, bool)),
        overlap=_frozen(overlap),
    )


def keypoint_distance(persons: Sequence[PersonKeypoints], height: int, width: int) -> np.ndarray:
    """Exact Euclidean distance from each pixel to the nearest visible keypoint pixel."""
    seeds = np.zeros((height, width), bool)
    for person in persons:
        for kp in person.visible():
            x = min(max(int(round(kp.x)), 0), width - 1)
            y = min(max(int(round(kp.y)), 0), height - 1)
            seeds[y, x] = True
    if not seeds.any():
        return np.full((height, width), np.inf)
    return ndimage.distance_transform_edt(~seeds)


def background_regions(
    partition: SuperPixelPartition,
    persons: Sequence[PersonKeypoints],
    distance_threshold: float = DEFAULT_BACKGROUND_DISTANCE,
    evidence: RegionEvidence | None = None,
) -> RegionEvidence:
    """Flag regions whose every pixel lies farther than the threshold from all keypoints."""
    if distance_threshold < 0:
        raise ValueError("distance_threshold must be nonnegative")
    n = partition.region_count
    dist = keypoint_distance(persons, partition.height, partition.width)
    nearest = np.full(n, np.inf)
    np.minimum.at(nearest, partition.region_of.ravel(), dist.ravel())
    flagged = nearest > distance_threshold
    if evidence is None:
        evidence = RegionEvidence(
            part_label=_frozen(np.zeros(n, np.int64)),
            background=_frozen(np.zeros(n, bool)),
            overlap=_frozen(np.zeros((n, 1), np.int64)),
        )
    flagged &= evidence.part_label == 0
    return replace(evidence, background=_frozen(flagged))


def region_evidence(
    partition: SuperPixelPartition,
    persons: Sequence[PersonKeypoints],
    table: ConnectionTable,
    num_labels: int,
    thickness_radius: float = DEFAULT_THICKNESS,
    distance_threshold: float = DEFAULT_BACKGROUND_DISTANCE,
) -> tuple[SkeletonRaster, RegionEvidence]:
    raster = rasterize(
        build_segments(persons, table), partition.width, partition.height, thickness_radius, table
    )
    evidence = assign_region_labels(partition, raster, num_labels)
    return raster, background_regions(partition, persons, distance_threshold, evidence)
