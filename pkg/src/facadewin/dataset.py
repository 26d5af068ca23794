"""Crop, normalise, augment and split labelled facade textures."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .annotations import TextureImage, WindowAnnotation
from .geometry import BBox, BinaryMask

MAX_OVERLAP = 0.10
SPLIT_RATIOS = (6, 2, 2)

# BT.601 luma weights, per mille so grey pixels stay exact in integers
_LUMA = np.array([299, 587, 114], dtype=np.int64)


class CropError(ValueError):
    pass


@dataclass(frozen=True)
class CropSpec:
    parent_id: str
    origin_x: int
    origin_y: int
    side: int
    index: int

    @property
    def id(self) -> str:
        return f"{self.parent_id}_c{self.index:03d}"

    @property
    def box(self) -> BBox:
        return BBox(self.origin_x, self.origin_y, self.side, self.side)

    def to_json(self) -> dict:
        return dict(asdict(self), id=self.id)


@dataclass(frozen=True)
class DatasetSplit:
    train: list
    val: list
    test: list
    seed: int
    ratios: tuple = SPLIT_RATIOS

    def to_json(self) -> dict:
        return {"train": list(self.train), "val": list(self.val), "test": list(self.test),
                "seed": self.seed}

    @classmethod
    def from_json(cls, doc: dict) -> "DatasetSplit":
        return cls(train=list(doc["train"]), val=list(doc["val"]), test=list(doc["test"]),
                   seed=int(doc["seed"]))

    def partition_of(self, item) -> str:
        for name in ("train", "val", "test"):
            if item in getattr(self, name):
                return name
        raise KeyError(item)


# --------------------------------------------------------------------------
# cropping


def crop_origins(dim: int, side: int) -> list[int]:
    """Origins along one axis: uniform stride ``ceil(0.9 * side)``, last one clamped."""
    if dim < side:
        raise CropError(f"image too small to crop: {dim} < {side}")
    stride = math.ceil((1.0 - MAX_OVERLAP) * side)
    origins = []
    o = 0
    while o + side < dim:
        origins.append(o)
        o += stride
    origins.append(dim - side)
    return sorted(set(origins))


def adaptive_crops(width: int, height: int, side: int, parent_id: str = "") -> list[CropSpec]:
    """Square crops covering a ``width x height`` image, row-major order.

    Consecutive interior crops overlap by ``side - ceil(0.9 * side)`` pixels per
    axis (at most 10%); the final crop on each axis is clamped to the image
    edge and may overlap its neighbour by more.
    """
    if width < side or height < side:
        raise CropError(f"image too small to crop: {width}x{height} < {side}")
    xs = crop_origins(width, side)
    ys = crop_origins(height, side)
    return [CropSpec(parent_id, x, y, side, i)
            for i, (y, x) in enumerate((y, x) for y in ys for x in xs)]


def crop_image(image: TextureImage, crop: CropSpec) -> TextureImage:
    px = image.pixels[crop.origin_y:crop.origin_y + crop.side,
                      crop.origin_x:crop.origin_x + crop.side]
    if px.shape[:2] != (crop.side, crop.side):
        raise CropError(f"crop {crop} not inside image {image.width}x{image.height}")
    return TextureImage(id=crop.id, pixels=px.copy(), source=f"{image.id}@{crop.origin_x},{crop.origin_y}")


def crop_annotations(annotations: Iterable[WindowAnnotation], crop: CropSpec,
                     min_visible: float = 0.5) -> list[WindowAnnotation]:
    """Clip windows to ``crop`` and translate them into crop coordinates.

    A window is kept when at least ``min_visible`` of its mask area lies inside
    the crop; its bbox becomes the tight box of the clipped mask.
    """
    out = []
    s = crop.side
    for ann in annotations:
        dense = ann.mask.dense
        area = ann.mask.area
        clipped = dense[crop.origin_y:crop.origin_y + s, crop.origin_x:crop.origin_x + s]
        visible = int(np.count_nonzero(clipped))
        if visible == 0 or visible < min_visible * area:
            continue
        out.append(WindowAnnotation.from_mask(crop.id, clipped))
    return out


# --------------------------------------------------------------------------
# histogram normalisation


def luminance(pixels: np.ndarray) -> np.ndarray:
    """BT.601 luminance as float, shape ``(H, W)``."""
    return (pixels.astype(np.int64) @ _LUMA) / 1000.0


def _luma_bins(pixels: np.ndarray) -> np.ndarray:
    y1000 = pixels.astype(np.int64) @ _LUMA
    return (y1000 + 500) // 1000


def luminance_lut(pixels: np.ndarray) -> np.ndarray | None:
    """CDF remap table for the luminance histogram; None for a single-level image."""
    bins = _luma_bins(pixels)
    hist = np.bincount(bins.ravel(), minlength=256)
    cdf = np.cumsum(hist)
    nonzero = cdf[hist > 0]
    if nonzero.size < 2:
        return None
    cdf_min = int(nonzero[0])
    total = int(cdf[-1])
    lut = np.floor((cdf - cdf_min) * 255.0 / (total - cdf_min) + 0.5)
    return np.clip(lut, 0, 255).astype(np.int64)


def equalize_histogram(image: TextureImage) -> TextureImage:
    """Equalise the luminance histogram, rescaling RGB proportionally."""
    px = image.pixels
    lut = luminance_lut(px)
    if lut is None:
        return TextureImage(id=image.id, pixels=px.copy(), source=image.source)
    y = luminance(px)
    target = lut[_luma_bins(px)].astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(y > 0, target / y, 0.0)
    out = np.floor(px.astype(np.float64) * gain[..., None] + 0.5)
    # black pixels have no chroma to preserve
    out = np.where((y == 0)[..., None], target[..., None], out)
    out = np.clip(out, 0, 255).astype(np.uint8)
    return TextureImage(id=image.id, pixels=out, source=image.source)


# --------------------------------------------------------------------------
# rotation augmentation


def rotate90(image: TextureImage, annotations: Sequence[WindowAnnotation], k: int,
             image_id: str | None = None) -> tuple[TextureImage, list[WindowAnnotation]]:
    """Rotate an image and its windows clockwise by ``k`` quarter turns."""
    if image.width != image.height:
        raise ValueError(f"rotation augmentation needs a square image, got {image.width}x{image.height}")
    k = k % 4
    new_id = image.id if image_id is None else image_id
    px = np.ascontiguousarray(np.rot90(image.pixels, k=-k, axes=(0, 1)))
    rotated = TextureImage(id=new_id, pixels=px, source=image.source)
    anns = []
    for ann in annotations:
        dense = np.rot90(ann.mask.dense, k=-k, axes=(0, 1))
        mask = BinaryMask.from_dense(dense)
        anns.append(WindowAnnotation(image_id=new_id, bbox=mask.bbox(), mask=mask,
                                     class_label=ann.class_label))
    return rotated, anns


def rotate90_augment(image: TextureImage, annotations: Sequence[WindowAnnotation],
                     suffix: bool = True) -> list[tuple[TextureImage, list[WindowAnnotation]]]:
    """The four quarter-turn variants ``k = 0..3`` of an image and its windows."""
    return [rotate90(image, annotations, k,
                     image_id=f"{image.id}_r{k}" if suffix else image.id)
            for k in range(4)]


# --------------------------------------------------------------------------
# splitting


def split_dataset(ids: Sequence[Hashable], seed: int,
                  groups: Mapping[Hashable, Hashable] | Sequence[Hashable] | None = None
                  ) -> DatasetSplit:
    """Shuffle and divide ``ids`` 6:2:2 into train/val/test.

    Boundaries are ``floor(0.6 n)`` and ``floor(0.2 n)``.  With ``groups`` (one
    key per id, e.g. the source texture of each crop) whole groups are shuffled
    and assigned together: a group goes to train while train is below its
    quota, then to val, then to test.
    """
    ids = list(ids)
    if not ids:
        raise ValueError("cannot split an empty id list")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ids in split input")
    n = len(ids)
    n_train = n * SPLIT_RATIOS[0] // sum(SPLIT_RATIOS)
    n_val = n * SPLIT_RATIOS[1] // sum(SPLIT_RATIOS)
    rng = np.random.default_rng(seed)

    if groups is None:
        perm = rng.permutation(n)
        shuffled = [ids[i] for i in perm]
        return DatasetSplit(train=shuffled[:n_train], val=shuffled[n_train:n_train + n_val],
                            test=shuffled[n_train + n_val:], seed=seed)

    if isinstance(groups, Mapping):
        keys = [groups[i] for i in ids]
    else:
        keys = list(groups)
        if len(keys) != n:
            raise ValueError("groups must have one key per id")
    members: dict = {}
    for i, key in zip(ids, keys):
        members.setdefault(key, []).append(i)
    order = list(members)
    perm = rng.permutation(len(order))
    train, val, test = [], [], []
    for gi in perm:
        group = members[order[gi]]
        if len(train) < n_train:
            train.extend(group)
        elif len(val) < n_val:
            val.extend(group)
        else:
            test.extend(group)
    return DatasetSplit(train=train, val=val, test=test, seed=seed)


# --------------------------------------------------------------------------
# full preparation


@dataclass
class PreparedDataset:
    images: list[TextureImage] = field(default_factory=list)
    annotations: list[WindowAnnotation] = field(default_factory=list)
    crops: list[CropSpec] = field(default_factory=list)
    parents: dict[str, str] = field(default_factory=dict)
    split: DatasetSplit | None = None


def prepare_dataset(textures: Sequence[TextureImage],
                    annotations: Mapping[str, Sequence[WindowAnnotation]],
                    side: int, seed: int, min_visible: float = 0.5,
                    paper_faithful: bool = False) -> PreparedDataset:
    """Crop, equalise, rotate and split whole labelled textures.

    Textures smaller than ``side`` are skipped.  Unless ``paper_faithful`` is
    set, every crop and rotation of one texture lands in the same partition.
    """
    out = PreparedDataset()
    for tex in textures:
        if tex.width < side or tex.height < side:
            continue
        anns = annotations.get(tex.id, [])
        for crop in adaptive_crops(tex.width, tex.height, side, parent_id=tex.id):
            out.crops.append(crop)
            cropped = equalize_histogram(crop_image(tex, crop))
            for img, rot_anns in rotate90_augment(cropped, crop_annotations(anns, crop, min_visible)):
                out.images.append(img)
                out.annotations.extend(rot_anns)
                out.parents[img.id] = tex.id
    if out.images:
        ids = [img.id for img in out.images]
        out.split = split_dataset(ids, seed, groups=None if paper_faithful else out.parents)
    return out
