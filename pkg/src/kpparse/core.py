"""Shared domain types: images, keypoints, label masks and score maps.

All containers are frozen dataclasses over read-only numpy arrays, so they can
be shared between threads and processes without copying defensively.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

BACKGROUND = 0
DEFAULT_PARTS = ("head", "torso", "arm", "leg")
SCORE_TOLERANCE = 1e-6


def _frozen(array: np.ndarray, dtype=None) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ImagePlane:
    """An 8-bit RGB image stored as an (height, width, 3) array."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixels, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must have at least one pixel")
        object.__setattr__(self, "pixels", _frozen(px, np.uint8))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape[:2]


@dataclass(frozen=True)
class PartTaxonomy:
    parts: tuple[str, ...] = DEFAULT_PARTS

    def __post_init__(self) -> None:
        parts = tuple(self.parts)
        if not parts:
            raise ValueError("taxonomy needs at least one part")
        if len(set(parts)) != len(parts):
            raise ValueError(f"duplicate part names in {parts}")
        if "background" in parts:
            raise ValueError("'background' is reserved for label 0")
        object.__setattr__(self, "parts", parts)

    @property
    def K(self) -> int:
        return len(self.parts)

    @property
    def num_labels(self) -> int:
        return len(self.parts) + 1

    @property
    def background_index(self) -> int:
        return BACKGROUND

    @property
    def label_names(self) -> tuple[str, ...]:
        return ("background",) + self.parts

    def index(self, name: str) -> int:
        if name in ("background", "bg"):
            return BACKGROUND
        return self.parts.index(name) + 1


@dataclass(frozen=True)
class Keypoint:
    name: str
    x: float
    y: float
    visible: bool = True


@dataclass(frozen=True)
class PersonKeypoints:
    keypoints: Mapping[str, Keypoint] = field(default_factory=dict)

    def __post_init__(self) -> None:
        kps = dict(self.keypoints)
        for name, kp in kps.items():
            if kp.name != name:
                raise ValueError(f"keypoint keyed as {name!r} is named {kp.name!r}")
        object.__setattr__(self, "keypoints", kps)

    @classmethod
    def from_points(cls, points: Iterable[Keypoint]) -> "PersonKeypoints":
        kps: dict[str, Keypoint] = {}
        for kp in points:
            if kp.name in kps:
                raise ValueError(f"duplicate keypoint {kp.name!r}")
            kps[kp.name] = kp
        return cls(kps)

    def get(self, name: str) -> Keypoint | None:
        return self.keypoints.get(name)

    def visible(self) -> list[Keypoint]:
        return [kp for kp in self.keypoints.values() if kp.visible]


@dataclass(frozen=True)
class LabelMask:
    """Per-pixel label indices; 0 is background, 1..K are parts."""

    labels: np.ndarray
    num_labels: int = len(DEFAULT_PARTS) + 1

    def __post_init__(self) -> None:
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise ValueError(f"expected a 2-D label array, got shape {lab.shape}")
        if lab.size and (lab.min() < 0 or lab.max() >= self.num_labels):
            raise ValueError(f"labels must lie in 0..{self.num_labels - 1}")
        object.__setattr__(self, "labels", _frozen(lab, np.uint8))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    @classmethod
    def background(cls, height: int, width: int, num_labels: int) -> "LabelMask":
        return cls(np.zeros((height, width), np.uint8), num_labels)


@dataclass(frozen=True)
class ScoreMap:
    """Per-pixel class probabilities stored channel-first as (C, H, W)."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[0] < 1:
            raise ValueError(f"expected (C, H, W) scores, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("scores must be finite")
        if v.min() < 0.0 or v.max() > 1.0 + SCORE_TOLERANCE:
            raise ValueError("scores must lie in [0, 1]")
        err = np.abs(v.sum(axis=0) - 1.0).max()
        if err > SCORE_TOLERANCE:
            raise ValueError(f"per-pixel channel sums deviate from 1 by {err:.3g}")
        object.__setattr__(self, "values", _frozen(v))

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[1:]

    @classmethod
    def uniform(cls, channels: int, height: int, width: int) -> "ScoreMap":
        return cls(np.full((channels, height, width), 1.0 / channels))

    @classmethod
    def normalized(cls, raw: np.ndarray) -> "ScoreMap":
        """Renormalize a nonnegative array per pixel; all-zero pixels become uniform."""
        raw = np.asarray(raw, dtype=np.float64)
        total = raw.sum(axis=0, keepdims=True)
        uniform = np.full_like(raw, 1.0 / raw.shape[0])
        out = np.where(total > 0, raw / np.where(total > 0, total, 1.0), uniform)
        return cls(out)


def clamp_keypoints(persons: Sequence[PersonKeypoints], width: int, height: int) -> list[PersonKeypoints]:
    """Move visible keypoints into [0, width-1] x [0, height-1]."""
    out = []
    for person in persons:
        kps = {}
        for name, kp in person.keypoints.items():
            if kp.visible:
                kp = replace(
                    kp,
                    x=float(min(max(kp.x, 0.0), width - 1)),
                    y=float(min(max(kp.y, 0.0), height - 1)),
                )
            kps[name] = kp
        out.append(PersonKeypoints(kps))
    return out


def mask_to_object(mask: LabelMask) -> LabelMask:
    return LabelMask((mask.labels > 0).astype(np.uint8), 2)
