"""Record types shared across the pipeline and their JSON/PNG storage.

Ground truth is stored COCO-style: ``images[]``, ``annotations[]`` with
``bbox = [x, y, w, h]`` and uncompressed column-major RLE segmentation,
one category named ``"window"``.  Detections are a flat JSON array.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .geometry import BBox, BinaryMask

WINDOW = "window"
WINDOW_CATEGORY_ID = 1


@dataclass(frozen=True, eq=False)
class TextureImage:
    """An RGB raster; ``pixels`` is a ``(height, width, 3)`` uint8 array."""

    id: str
    pixels: np.ndarray
    source: str = ""

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixels, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if px.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {px.dtype}")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    def __eq__(self, other):
        if not isinstance(other, TextureImage):
            return NotImplemented
        return (self.id == other.id and self.source == other.source
                and np.array_equal(self.pixels, other.pixels))

    __hash__ = None


@dataclass(frozen=True)
class WindowAnnotation:
    image_id: str
    bbox: BBox
    mask: BinaryMask
    class_label: str = WINDOW

    def __post_init__(self):
        if self.bbox.x2 > self.mask.width or self.bbox.y2 > self.mask.height:
            raise ValueError(f"bbox {self.bbox} exceeds image {self.mask.width}x{self.mask.height}")
        if self.mask.area < 1:
            raise ValueError("annotation mask is empty")
        outside = self.mask.dense.copy()
        outside[self.bbox.y:self.bbox.y2, self.bbox.x:self.bbox.x2] = False
        if outside.any():
            raise ValueError("annotation mask extends outside its bbox")

    @classmethod
    def from_mask(cls, image_id: str, dense: np.ndarray) -> "WindowAnnotation":
        mask = BinaryMask.from_dense(dense)
        box = mask.bbox()
        if box is None:
            raise ValueError("annotation mask is empty")
        return cls(image_id=image_id, bbox=box, mask=mask)

    @classmethod
    def from_box(cls, image_id: str, bbox: BBox, width: int, height: int) -> "WindowAnnotation":
        return cls(image_id=image_id, bbox=bbox, mask=bbox.to_mask(width, height))


@dataclass(frozen=True)
class Detection:
    image_id: str
    bbox: BBox
    score: float
    mask: BinaryMask | None = None
    class_label: str = WINDOW

    def __post_init__(self):
        score = float(self.score)
        if not math.isfinite(score) or not 0.0 <= score <= 1.0:
            raise ValueError(f"detection score must be finite in [0, 1], got {self.score!r}")
        object.__setattr__(self, "score", score)


# --------------------------------------------------------------------------
# COCO-style ground truth


@dataclass
class AnnotatedDataset:
    """Images (metadata only) plus their window annotations."""

    images: list[dict] = field(default_factory=list)
    annotations: list[WindowAnnotation] = field(default_factory=list)

    def image_ids(self) -> list[str]:
        return [img["id"] for img in self.images]

    def by_image(self) -> dict[str, list[WindowAnnotation]]:
        out: dict[str, list[WindowAnnotation]] = {i: [] for i in self.image_ids()}
        for ann in self.annotations:
            out.setdefault(ann.image_id, []).append(ann)
        return out


def annotation_to_coco(ann: WindowAnnotation, ann_id: int) -> dict:
    return {
        "id": ann_id,
        "image_id": ann.image_id,
        "category_id": WINDOW_CATEGORY_ID,
        "bbox": ann.bbox.to_list(),
        "area": ann.mask.area,
        "segmentation": ann.mask.to_coco(),
        "iscrowd": 0,
    }


def annotation_from_coco(rec: dict) -> WindowAnnotation:
    mask = BinaryMask.from_coco(rec["segmentation"])
    return WindowAnnotation(image_id=rec["image_id"], bbox=BBox.from_list(rec["bbox"]),
                            mask=mask)


def dataset_to_coco(ds: AnnotatedDataset) -> dict:
    return {
        "images": [dict(img) for img in ds.images],
        "annotations": [annotation_to_coco(a, i + 1) for i, a in enumerate(ds.annotations)],
        "categories": [{"id": WINDOW_CATEGORY_ID, "name": WINDOW}],
    }


def dataset_from_coco(doc: dict) -> AnnotatedDataset:
    cats = {c["id"]: c["name"] for c in doc.get("categories", [])}
    anns = []
    for rec in doc.get("annotations", []):
        if cats and cats.get(rec.get("category_id")) != WINDOW:
            continue
        anns.append(annotation_from_coco(rec))
    return AnnotatedDataset(images=[dict(img) for img in doc.get("images", [])],
                            annotations=anns)


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=False)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def save_coco(path, ds: AnnotatedDataset) -> None:
    write_json(path, dataset_to_coco(ds))


def load_coco(path) -> AnnotatedDataset:
    return dataset_from_coco(read_json(path))


# --------------------------------------------------------------------------
# detections


def detection_to_json(det: Detection) -> dict:
    rec = {"image_id": det.image_id, "bbox": det.bbox.to_list(), "score": det.score,
           "category": det.class_label}
    if det.mask is not None:
        rec["segmentation"] = det.mask.to_coco()
    return rec


def detection_from_json(rec: dict) -> Detection:
    seg = rec.get("segmentation")
    return Detection(
        image_id=rec["image_id"],
        bbox=BBox.from_list(rec["bbox"]),
        score=rec["score"],
        mask=BinaryMask.from_coco(seg) if seg is not None else None,
        class_label=rec.get("category", WINDOW),
    )


def save_detections(path, dets: Iterable[Detection]) -> None:
    write_json(path, [detection_to_json(d) for d in dets])


def load_detections(path) -> list[Detection]:
    doc = read_json(path)
    if not isinstance(doc, list):
        raise ValueError(f"{path}: detections file must hold a JSON array")
    return [detection_from_json(rec) for rec in doc]


# --------------------------------------------------------------------------
# rasters


def save_image(path, image: TextureImage) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image.pixels).save(path, format="PNG")


def load_image(path, image_id: str | None = None) -> TextureImage:
    path = Path(path)
    with Image.open(path) as im:
        pixels = np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    return TextureImage(id=image_id if image_id is not None else path.stem,
                        pixels=pixels, source=str(path))


def image_record(image: TextureImage, file_name: str, **extra) -> dict:
    rec = {"id": image.id, "file_name": file_name, "width": image.width,
           "height": image.height}
    rec.update(extra)
    return rec


def group_by_image(items: Sequence) -> dict[str, list[int]]:
    """Indices of ``items`` keyed by their ``image_id``, in first-seen order."""
    out: dict[str, list[int]] = {}
    for i, item in enumerate(items):
        out.setdefault(item.image_id, []).append(i)
    return out


# --------------------------------------------------------------------------
# dataset directories: images/<id>.png + annotations.json (+ optional extras)

ANNOTATIONS_FILE = "annotations.json"
IMAGES_DIR = "images"


def save_dataset_dir(out_dir, images: Sequence[TextureImage],
                     annotations: Sequence[WindowAnnotation], extra_image_fields=None) -> AnnotatedDataset:
    """Write PNGs and a COCO annotation file; returns what was written."""
    out = Path(out_dir)
    records = []
    for img in images:
        name = f"{IMAGES_DIR}/{img.id}.png"
        save_image(out / name, img)
        extra = (extra_image_fields or {}).get(img.id, {})
        records.append(image_record(img, name, **extra))
    ds = AnnotatedDataset(images=records, annotations=list(annotations))
    save_coco(out / ANNOTATIONS_FILE, ds)
    return ds


def load_dataset_dir(path) -> AnnotatedDataset:
    path = Path(path)
    ann_file = path / ANNOTATIONS_FILE if path.is_dir() else path
    if not ann_file.exists():
        raise FileNotFoundError(f"no {ANNOTATIONS_FILE} in {path}")
    return load_coco(ann_file)
