"""Dataset, planning and evaluation tooling for window detection in facade textures."""

from .annotations import Detection, TextureImage, WindowAnnotation
from .geometry import BBox, BinaryMask, iou_box, iou_mask

__version__ = "0.1.0"

__all__ = ["BBox", "BinaryMask", "Detection", "TextureImage", "WindowAnnotation",
           "iou_box", "iou_mask"]
