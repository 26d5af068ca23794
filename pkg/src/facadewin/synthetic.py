"""Synthetic facades with exact window masks, and a noisy stand-in detector.

Scenes vary along the axes real facade textures vary on: exposure (gamma),
a darkened vertical shadow band and horizontal shear.  Shear is an integer
per-row shift, so ground-truth masks stay pixel-exact.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .annotations import Detection, TextureImage, WindowAnnotation
from .geometry import BBox, BinaryMask

WALL_RGB = (196, 176, 150)
WINDOW_RGB = (48, 58, 72)
SHADOW_GAIN = 0.5


class SceneError(ValueError):
    pass


@dataclass(frozen=True)
class FacadeSceneSpec:
    image_side: int = 128
    rows: int = 4
    cols: int = 4
    window_w: int = 12
    window_h: int = 12
    margin: int = 8
    spacing: int = 16
    gamma: float = 1.0
    shadow_fraction: float = 0.0
    shear: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.gamma <= 0:
            raise SceneError("gamma must be > 0")
        if not 0.0 <= self.shadow_fraction <= 1.0:
            raise SceneError("shadow_fraction must lie in [0, 1]")
        if min(self.rows, self.cols, self.window_w, self.window_h) < 1:
            raise SceneError("rows, cols and window size must be >= 1")
        if self.margin < 0 or self.spacing < 0:
            raise SceneError("margin and spacing must be >= 0")
        for extent in (self.grid_width, self.grid_height):
            if extent + 2 * self.margin > self.image_side:
                raise SceneError(
                    f"window grid overflows image: {extent} px + 2 x {self.margin} px margin "
                    f"> {self.image_side} px")

    @property
    def grid_width(self) -> int:
        return self.cols * self.window_w + (self.cols - 1) * self.spacing

    @property
    def grid_height(self) -> int:
        return self.rows * self.window_h + (self.rows - 1) * self.spacing

    def window_origins(self) -> list[tuple[int, int]]:
        """Unsheared top-left corners, row-major; the grid is centred."""
        x0 = (self.image_side - self.grid_width) // 2
        y0 = (self.image_side - self.grid_height) // 2
        return [(x0 + c * (self.window_w + self.spacing), y0 + r * (self.window_h + self.spacing))
                for r in range(self.rows) for c in range(self.cols)]

    def row_shift(self, y: int) -> int:
        """Horizontal pixel offset of image row ``y`` under the shear."""
        return int(math.floor(self.shear * (y - self.image_side / 2.0) + 0.5))

    def to_json(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DetectorNoiseSpec:
    drop_prob: float = 0.0
    dup_prob: float = 0.0
    jitter_px: int = 0
    score_range: tuple[float, float] = (0.9, 0.9)
    seed: int = 0
    dup_count: int = 1

    def __post_init__(self):
        object.__setattr__(self, "score_range", tuple(float(s) for s in self.score_range))
        lo, hi = self.score_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"score_range must satisfy 0 <= lo <= hi <= 1, got {self.score_range}")
        for name in ("drop_prob", "dup_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.jitter_px < 0 or self.dup_count < 1:
            raise ValueError("jitter_px must be >= 0 and dup_count >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        d["score_range"] = list(self.score_range)
        return d


def _label_map(spec: FacadeSceneSpec) -> np.ndarray:
    """Per-pixel window index (-1 for wall) after shear."""
    n = spec.image_side
    flat = np.full((n, n), -1, dtype=np.int64)
    for i, (x, y) in enumerate(spec.window_origins()):
        flat[y:y + spec.window_h, x:x + spec.window_w] = i
    if spec.shear == 0:
        return flat
    out = np.full_like(flat, -1)
    for y in range(n):
        s = spec.row_shift(y)
        row = flat[y]
        inside = row >= 0
        xs = np.flatnonzero(inside) + s
        if xs.size and (xs.min() < 0 or xs.max() >= n):
            raise SceneError(f"sheared window row {y} leaves the image (shift {s})")
        out[y, xs] = row[inside]
    return out


def generate_facade(spec: FacadeSceneSpec, image_id: str | None = None
                    ) -> tuple[TextureImage, list[WindowAnnotation]]:
    """Render a facade and return it with one exact annotation per window."""
    image_id = image_id or f"scene_{spec.seed}"
    rng = np.random.default_rng(spec.seed)
    n = spec.image_side
    labels = _label_map(spec)
    n_windows = spec.rows * spec.cols

    wall = np.clip(np.array(WALL_RGB) + rng.integers(-12, 13, size=3), 0, 255)
    shades = np.clip(np.array(WINDOW_RGB)[None, :] + rng.integers(-10, 11, size=(n_windows, 1)),
                     0, 255)
    px = np.empty((n, n, 3), dtype=np.float64)
    px[:] = wall
    win = labels >= 0
    px[win] = shades[labels[win]]

    px = 255.0 * (px / 255.0) ** spec.gamma
    shadow_cols = int(math.floor(spec.shadow_fraction * n))
    px[:, :shadow_cols] *= SHADOW_GAIN
    pixels = np.clip(np.floor(px + 0.5), 0, 255).astype(np.uint8)

    anns = [WindowAnnotation.from_mask(image_id, labels == i) for i in range(n_windows)]
    return TextureImage(id=image_id, pixels=pixels, source=f"synthetic:{spec.seed}"), anns


def _shift_mask(dense: np.ndarray, dx: int, dy: int) -> np.ndarray:
    h, w = dense.shape
    out = np.zeros_like(dense)
    src_y = slice(max(0, -dy), min(h, h - dy))
    dst_y = slice(max(0, dy), min(h, h + dy))
    src_x = slice(max(0, -dx), min(w, w - dx))
    dst_x = slice(max(0, dx), min(w, w + dx))
    out[dst_y, dst_x] = dense[src_y, src_x]
    return out


def _jittered(ann: WindowAnnotation, rng: np.random.Generator, noise: DetectorNoiseSpec
              ) -> Detection:
    j = noise.jitter_px
    e = rng.integers(-j, j + 1, size=4) if j else np.zeros(4, dtype=np.int64)
    score = float(rng.uniform(*noise.score_range))
    W, H = ann.mask.width, ann.mask.height
    b = ann.bbox
    x0 = int(np.clip(b.x + e[0], 0, W - 1))
    x1 = int(np.clip(b.x2 + e[1], x0 + 1, W))
    y0 = int(np.clip(b.y + e[2], 0, H - 1))
    y1 = int(np.clip(b.y2 + e[3], y0 + 1, H))
    box = BBox(x0, y0, x1 - x0, y1 - y0)
    dense = _shift_mask(ann.mask.dense, int(e[0] + e[1]) // 2, int(e[2] + e[3]) // 2)
    clip = np.zeros_like(dense)
    clip[y0:y1, x0:x1] = True
    return Detection(image_id=ann.image_id, bbox=box, score=score,
                     mask=BinaryMask.from_dense(dense & clip), class_label=ann.class_label)


def simulate_detector(annotations: Sequence[WindowAnnotation], noise: DetectorNoiseSpec,
                      drop_indices: Iterable[int] = ()) -> list[Detection]:
    """Noisy detections derived from ground truth.

    Every window consumes the same random draws whether or not it is dropped,
    so forcing extra drops through ``drop_indices`` leaves the other windows'
    detections unchanged.
    """
    rng = np.random.default_rng(noise.seed)
    forced = set(drop_indices)
    out = []
    for i, ann in enumerate(annotations):
        dropped = rng.random() < noise.drop_prob
        det = _jittered(ann, rng, noise)
        dups = [_jittered(ann, rng, noise) for _ in range(noise.dup_count)] \
            if rng.random() < noise.dup_prob else []
        if dropped or i in forced:
            continue
        out.append(det)
        out.extend(dups)
    return out
