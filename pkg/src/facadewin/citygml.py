"""Locate facade photo textures in CityGML appearance data.

Only ``app:ParameterizedTexture`` nodes are read.  Elements are matched by
local name so CityGML 1.0 and 2.0 namespaces both work.
"""

from __future__ import annotations

import json
import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

from .annotations import TextureImage, load_image

log = logging.getLogger(__name__)

GML_ID = "{http://www.opengis.net/gml}id"


class CityGMLParseError(ValueError):
    """Malformed XML; carries the 1-based line and 0-based column."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


@dataclass
class TextureManifestEntry:
    texture_path: str
    surface_id: str
    tex_coords: list[tuple[float, float]] = field(default_factory=list)
    image_width: int = 0
    image_height: int = 0

    def __post_init__(self):
        if not self.texture_path:
            raise ValueError("texture_path must be non-empty")
        self.tex_coords = [(float(u), float(v)) for u, v in self.tex_coords]
        if self.tex_coords and len(self.tex_coords) < 3:
            raise ValueError(f"need at least 3 texture coordinates, got {len(self.tex_coords)}")
        if not all(math.isfinite(c) for uv in self.tex_coords for c in uv):
            raise ValueError("texture coordinates must be finite")

    def to_json(self) -> dict:
        d = asdict(self)
        d["tex_coords"] = [list(uv) for uv in self.tex_coords]
        return d

    @classmethod
    def from_json(cls, doc: dict) -> "TextureManifestEntry":
        return cls(texture_path=doc["texture_path"], surface_id=doc["surface_id"],
                   tex_coords=[tuple(uv) for uv in doc.get("tex_coords", [])],
                   image_width=int(doc.get("image_width", 0)),
                   image_height=int(doc.get("image_height", 0)))


class ScanResult(NamedTuple):
    entries: list[TextureManifestEntry]
    skipped: int


def _local(tag) -> str:
    return tag.rsplit("}", 1)[-1] if isinstance(tag, str) else ""


def _children(elem, name):
    return [c for c in elem if _local(c.tag) == name]


def _text(elem, name) -> str | None:
    for c in _children(elem, name):
        if c.text and c.text.strip():
            return c.text.strip()
    return None


def _coords(target) -> list[tuple[float, float]] | None:
    for tcl in _children(target, "TexCoordList"):
        for tc in _children(tcl, "textureCoordinates"):
            vals = [float(v) for v in (tc.text or "").split()]
            if len(vals) % 2:
                return None
            return list(zip(vals[0::2], vals[1::2]))
    return []


def scan_citygml(document: str | bytes) -> ScanResult:
    """Manifest entries in document order plus the number of skipped textures.

    A texture with several targets yields one entry per target surface.
    Textures without an ``imageURI``, and targets with unusable coordinates,
    are skipped and counted.
    """
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        line, col = getattr(exc, "position", (None, None))
        raise CityGMLParseError(f"malformed CityGML: {exc.msg}", line, col) from None

    entries, skipped = [], 0
    for tex in root.iter():
        if _local(tex.tag) != "ParameterizedTexture":
            continue
        uri = _text(tex, "imageURI")
        if uri is None:
            skipped += 1
            log.warning("ParameterizedTexture %s has no imageURI, skipped", tex.get(GML_ID))
            continue
        targets = _children(tex, "target")
        if not targets:
            entries.append(TextureManifestEntry(uri, tex.get(GML_ID, "")))
            continue
        for target in targets:
            surface = (target.get("uri") or "").lstrip("#")
            try:
                coords = _coords(target)
                if coords is None:
                    raise ValueError("odd number of texture coordinate values")
                entries.append(TextureManifestEntry(uri, surface, coords))
            except ValueError as exc:
                skipped += 1
                log.warning("texture %s target %s skipped: %s", uri, surface, exc)
    return ScanResult(entries, skipped)


def parse_citygml(document: str | bytes) -> list[TextureManifestEntry]:
    return scan_citygml(document).entries


def manifest_to_json(entries: Sequence[TextureManifestEntry]) -> str:
    return json.dumps([e.to_json() for e in entries], indent=1, ensure_ascii=False) + "\n"


def manifest_from_json(text: str) -> list[TextureManifestEntry]:
    doc = json.loads(text)
    if not isinstance(doc, list):
        raise ValueError("manifest must be a JSON array")
    return [TextureManifestEntry.from_json(d) for d in doc]


def write_manifest(path, entries: Sequence[TextureManifestEntry]) -> None:
    Path(path).write_text(manifest_to_json(entries), encoding="utf-8")


def read_manifest(path) -> list[TextureManifestEntry]:
    return manifest_from_json(Path(path).read_text(encoding="utf-8"))


class LoadResult(NamedTuple):
    images: list[TextureImage]
    missing: list[str]


def load_textures(manifest: Sequence[TextureManifestEntry], root_dir) -> LoadResult:
    """Load every resolvable texture under ``root_dir`` and fill in its size.

    Unreadable or missing files are collected in ``missing`` instead of
    raising; only a missing ``root_dir`` is fatal.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"texture root {root} does not exist")
    images, missing = [], []
    for entry in manifest:
        path = root / entry.texture_path
        try:
            img = load_image(path, image_id=entry.surface_id or Path(entry.texture_path).stem)
        except (OSError, ValueError) as exc:
            log.warning("texture %s not loaded: %s", path, exc)
            missing.append(entry.texture_path)
            continue
        entry.image_width, entry.image_height = img.width, img.height
        images.append(img)
    return LoadResult(images, missing)
