"""Synthetic stick-figure images with exact part ground truth and PASCAL-style keypoints."""
from __future__ import annotations

import numpy as np

from .core import ImagePlane, Keypoint, LabelMask, PersonKeypoints
from .pipeline import Sample
from .skeleton import ARM, HEAD, LEG, TORSO

PART_COLORS = {
    HEAD: (224, 172, 72),
    TORSO: (196, 48, 48),
    ARM: (52, 156, 64),
    LEG: (48, 64, 176),
}


def _capsule(h, w, a, b, radius):
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    d = b - a
    length2 = float(d @ d)
    t = np.clip(((xs - a[0]) * d[0] + (ys - a[1]) * d[1]) / length2, 0, 1) if length2 > 0 else 0.0
    return (xs - a[0] - t * d[0]) ** 2 + (ys - a[1] - t * d[1]) ** 2 <= radius**2


def _convex_polygon(h, w, pts):
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    pos = np.ones((h, w), bool)
    neg = np.ones((h, w), bool)
    n = len(pts)
    for k in range(n):
        (x0, y0), (x1, y1) = pts[k], pts[(k + 1) % n]
        cross = (x1 - x0) * (ys - y0) - (y1 - y0) * (xs - x0)
        pos &= cross >= 0
        neg &= cross <= 0
    return pos | neg


def _limb(rng, start, down_angle, spread, length):
    theta = down_angle + rng.uniform(-spread, spread)
    return (start[0] + length * np.sin(theta), start[1] + length * np.cos(theta)), theta


def _pose(rng, size):
    # off-center so part of the image is farther than 50 px from every keypoint
    s = size / 128.0 * rng.uniform(0.55, 0.65)
    side = 1 if rng.random() < 0.5 else -1
    cx = size / 2 + side * size * rng.uniform(0.2, 0.26)
    top = size / 2 - 48 * s + rng.uniform(-10, 10) * s
    kp = {
        "forehead": (cx, top + 6 * s),
        "neck": (cx, top + 24 * s),
        "left_shoulder": (cx + 14 * s, top + 28 * s),
        "right_shoulder": (cx - 14 * s, top + 28 * s),
        "left_hip": (cx + 9 * s, top + 62 * s),
        "right_hip": (cx - 9 * s, top + 62 * s),
    }
    for side, sign in (("left", 1), ("right", -1)):
        elbow, th = _limb(rng, kp[f"{side}_shoulder"], sign * 0.9, 0.6, 22 * s)
        kp[f"{side}_elbow"] = elbow
        kp[f"{side}_wrist"], _ = _limb(rng, elbow, th, 0.5, 19 * s)
        knee, th = _limb(rng, kp[f"{side}_hip"], sign * 0.2, 0.25, 20 * s)
        kp[f"{side}_knee"] = knee
        kp[f"{side}_ankle"], _ = _limb(rng, knee, th, 0.2, 19 * s)
    return kp, s


def _background(rng, h, w, cells=64):
    """Voronoi patchwork of grays that all share one color-histogram bin per channel.

    Neighboring cells differ enough to become separate superpixels while their
    color histograms stay alike, unlike the saturated part colors.
    """
    seeds = rng.uniform(0, [w, h], size=(cells, 2))
    ys, xs = np.mgrid[0:h, 0:w]
    owner = ((xs[..., None] - seeds[:, 0]) ** 2 + (ys[..., None] - seeds[:, 1]) ** 2).argmin(axis=-1)
    colors = rng.uniform(101, 123, (cells, 3))
    return colors[owner]


def render_figure(rng: np.random.Generator, size: int = 128) -> tuple[np.ndarray, np.ndarray, dict]:
    """Return (rgb pixels, ground-truth labels, keypoint coordinates) for one figure."""
    h = w = size
    while True:
        kp, s = _pose(rng, size)
        pts = np.array(list(kp.values()))
        if pts.min() >= 2 and pts.max() <= size - 3:
            break

    labels = np.zeros((h, w), np.uint8)
    torso = _convex_polygon(
        h, w,
        [
            (kp["right_shoulder"][0] - 4, kp["neck"][1]),
            (kp["left_shoulder"][0] + 4, kp["neck"][1]),
            (kp["left_hip"][0] + 5, kp["left_hip"][1] + 4),
            (kp["right_hip"][0] - 5, kp["right_hip"][1] + 4),
        ],
    )
    labels[torso] = TORSO
    # limb widths are absolute so the 3 px skeleton capsules keep a margin inside them
    for side in ("left", "right"):
        leg = _capsule(h, w, kp[f"{side}_hip"], kp[f"{side}_knee"], 7.0)
        leg |= _capsule(h, w, kp[f"{side}_knee"], kp[f"{side}_ankle"], 6.5)
        labels[leg] = LEG
    for side in ("left", "right"):
        arm = _capsule(h, w, kp[f"{side}_shoulder"], kp[f"{side}_elbow"], 6.0)
        arm |= _capsule(h, w, kp[f"{side}_elbow"], kp[f"{side}_wrist"], 5.5)
        labels[arm] = ARM
    head_center = (kp["forehead"][0], kp["forehead"][1] + 4 * s)
    head = _capsule(h, w, head_center, head_center, 9.0)
    head |= _capsule(h, w, head_center, kp["neck"], 5.0)
    labels[head] = HEAD

    img = _background(rng, h, w)
    for label, color in PART_COLORS.items():
        jitter = rng.uniform(-10, 10, 3)
        img[labels == label] = np.clip(np.asarray(color) + jitter, 0, 255)
    img += rng.normal(0.0, 2.5, img.shape)
    pixels = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return pixels, labels, {k: (float(x), float(y)) for k, (x, y) in kp.items()}


def make_dataset(count: int = 20, size: int = 128, seed: int = 0) -> list[Sample]:
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(count):
        pixels, labels, kp = render_figure(rng, size)
        person = PersonKeypoints({k: Keypoint(k, x, y, True) for k, (x, y) in kp.items()})
        samples.append(Sample(f"synth_{i:04d}", ImagePlane(pixels), (person,), LabelMask(labels, 5)))
    return samples
