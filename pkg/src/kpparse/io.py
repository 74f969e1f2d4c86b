"""File formats: keypoint JSON, config JSON, mask PNGs, float32 score blobs, overlays, manifests."""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .core import ImagePlane, Keypoint, LabelMask, PersonKeypoints, ScoreMap
from .pipeline import PipelineConfig, Sample
from .scorer import ScorerModel
from .skeleton import SCHEMAS

log = logging.getLogger(__name__)

PALETTE = np.array(
    [(0, 0, 0), (255, 0, 0), (0, 255, 0), (0, 0, 255), (255, 255, 0)], dtype=np.int64
)
OVERLAY_ALPHA = 0.5
_SCORE_HEADER = struct.Struct("<III")


class DataError(Exception):
    """Input data that cannot be used (malformed, inconsistent or missing)."""


class KeypointFormatError(DataError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class KeypointDocument:
    schema: str
    images: dict[str, list[PersonKeypoints]]

    def persons_for(self, image: str) -> list[PersonKeypoints]:
        if image in self.images:
            return self.images[image]
        name = Path(image).name
        for key, persons in self.images.items():
            if Path(key).name == name:
                return persons
        return []


def parse_keypoints(text: str) -> KeypointDocument:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise KeypointFormatError(f"malformed keypoint JSON: {exc.msg}", exc.lineno, exc.colno) from exc
    if not isinstance(doc, dict) or "schema" not in doc or "images" not in doc:
        raise KeypointFormatError("keypoint document needs 'schema' and 'images' fields")
    schema = doc["schema"]
    if schema not in SCHEMAS:
        raise KeypointFormatError(f"unknown schema {schema!r}; supported: {', '.join(sorted(SCHEMAS))}")
    known = set(SCHEMAS[schema].keypoints)
    images: dict[str, list[PersonKeypoints]] = {}
    for i, entry in enumerate(doc["images"]):
        try:
            file = str(entry["file"])
            persons = []
            for j, person in enumerate(entry.get("persons", [])):
                kps = {}
                for name, triple in person["keypoints"].items():
                    if name not in known:
                        log.warning("images[%d].persons[%d]: ignoring unknown keypoint %r", i, j, name)
                        continue
                    x, y, v = triple
                    kps[name] = Keypoint(name, float(x), float(y), bool(v))
                persons.append(PersonKeypoints(kps))
        except (KeyError, TypeError, ValueError) as exc:
            raise KeypointFormatError(f"images[{i}]: bad entry ({exc!r})") from exc
        images.setdefault(file, []).extend(persons)
    return KeypointDocument(schema, images)


def load_keypoints(path) -> KeypointDocument:
    return parse_keypoints(Path(path).read_text())


def dump_keypoints(schema: str, images: dict[str, Sequence[PersonKeypoints]]) -> str:
    entries = [
        {
            "file": file,
            "persons": [
                {"keypoints": {k.name: [k.x, k.y, int(k.visible)] for k in p.keypoints.values()}}
                for p in persons
            ],
        }
        for file, persons in images.items()
    ]
    return json.dumps({"schema": schema, "images": entries}, indent=1)


def load_image(path) -> ImagePlane:
    with Image.open(path) as im:
        return ImagePlane(np.asarray(im.convert("RGB")))


def save_image(image: ImagePlane, path) -> None:
    Image.fromarray(image.pixels).save(path)


def save_mask(mask: LabelMask, path) -> None:
    Image.fromarray(np.ascontiguousarray(mask.labels)).save(path)


def load_mask(path, num_labels: int = 5) -> LabelMask:
    with Image.open(path) as im:
        if im.mode not in ("L", "P"):
            raise DataError(f"{path}: expected an 8-bit single-channel mask, got mode {im.mode}")
        labels = np.array(im)
    bad = np.argwhere(labels >= num_labels)
    if len(bad):
        y, x = bad[0]
        raise DataError(f"{path}: pixel (x={x}, y={y}) has label {labels[y, x]} > {num_labels - 1}")
    return LabelMask(labels, num_labels)


def save_scores(scores: ScoreMap, path) -> None:
    c, h, w = scores.values.shape
    with open(path, "wb") as f:
        f.write(_SCORE_HEADER.pack(w, h, c))
        f.write(scores.values.astype("<f4").tobytes(order="C"))


def load_scores(path) -> ScoreMap:
    data = Path(path).read_bytes()
    if len(data) < _SCORE_HEADER.size:
        raise DataError(f"{path}: truncated score header")
    w, h, c = _SCORE_HEADER.unpack_from(data)
    body = data[_SCORE_HEADER.size :]
    if len(body) != 4 * w * h * c:
        raise DataError(f"{path}: expected {w}x{h}x{c} float32 values, found {len(body) // 4}")
    values = np.frombuffer(body, dtype="<f4").reshape(c, h, w)
    try:
        return ScoreMap(values.astype(np.float64))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def load_config(path) -> PipelineConfig:
    try:
        return PipelineConfig.from_dict(json.loads(Path(path).read_text()))
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def save_config(config: PipelineConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=1) + "\n")


def save_model(model: ScorerModel, path) -> None:
    doc = {
        "part_weights": model.part_weights.tolist(),
        "object_weights": model.object_weights.tolist(),
        "final_loss": model.final_loss,
        "epochs": model.epochs,
        "degenerate": model.degenerate,
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_model(path) -> ScorerModel:
    doc = json.loads(Path(path).read_text())
    return ScorerModel(
        np.array(doc["part_weights"], np.float64),
        np.array(doc["object_weights"], np.float64),
        final_loss=doc["final_loss"],
        epochs=doc["epochs"],
        degenerate=doc["degenerate"],
    )


def palette(num_labels: int) -> np.ndarray:
    if num_labels <= len(PALETTE):
        return PALETTE[:num_labels]
    rng = np.random.default_rng(num_labels)
    extra = rng.integers(0, 256, (num_labels - len(PALETTE), 3))
    return np.vstack([PALETTE, extra])


def overlay(image: ImagePlane, mask: LabelMask, alpha: float = OVERLAY_ALPHA) -> np.ndarray:
    """Blend the label palette over the image, rounding halves up."""
    if image.shape != mask.shape:
        raise ValueError(f"image {image.shape} and mask {mask.shape} differ in size")
    colors = palette(mask.num_labels)[mask.labels]
    blend = (1 - alpha) * image.pixels.astype(np.float64) + alpha * colors
    return np.floor(blend + 0.5).astype(np.uint8)


def save_overlay(image: ImagePlane, mask: LabelMask, path) -> np.ndarray:
    out = overlay(image, mask)
    Image.fromarray(out).save(path)
    return out


@dataclass(frozen=True)
class ManifestRecord:
    image: Path
    key: str
    keypoints: Path
    gt_mask: Path | None = None
    scores: Path | None = None

    @property
    def stem(self) -> str:
        return self.image.stem


def load_manifest(path) -> list[ManifestRecord]:
    """Manifest JSON: {"keypoints": file, "records": [{"image", "gt_mask"?, "scores"?, "keypoints"?}]}."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed manifest ({exc.msg}, line {exc.lineno})") from exc
    root = path.parent
    records = []
    for i, rec in enumerate(doc.get("records", [])):
        if "image" not in rec:
            raise DataError(f"{path}: records[{i}] has no image")
        kp = rec.get("keypoints", doc.get("keypoints"))
        if kp is None:
            raise DataError(f"{path}: records[{i}] has no keypoint file")
        opt = lambda key: root / rec[key] if rec.get(key) else None
        records.append(ManifestRecord(root / rec["image"], rec["image"], root / kp, opt("gt_mask"), opt("scores")))
    stems = [r.stem for r in records]
    if len(set(stems)) != len(stems):
        raise DataError(f"{path}: image file names must be unique")
    for r in records:
        for p in (r.image, r.keypoints, r.gt_mask, r.scores):
            if p is not None and not p.exists():
                raise DataError(f"{path}: missing file {p}")
    return records


def load_dataset(records: Sequence[ManifestRecord], config: PipelineConfig) -> list[Sample]:
    docs: dict[Path, KeypointDocument] = {}
    samples = []
    for r in records:
        if r.keypoints not in docs:
            docs[r.keypoints] = load_keypoints(r.keypoints)
            if docs[r.keypoints].schema != config.schema:
                raise DataError(
                    f"{r.keypoints}: schema {docs[r.keypoints].schema!r} but config uses {config.schema!r}"
                )
        image = load_image(r.image)
        gt = load_mask(r.gt_mask, config.num_labels) if r.gt_mask else None
        scores = load_scores(r.scores) if r.scores else None
        for what, obj in (("ground truth", gt), ("score map", scores)):
            if obj is not None and obj.shape != image.shape:
                raise DataError(f"{r.image}: {what} is {obj.shape}, image is {image.shape}")
        persons = tuple(docs[r.keypoints].persons_for(r.key))
        samples.append(Sample(r.stem, image, persons, gt, scores))
    return samples
