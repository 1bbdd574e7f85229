"""Pixel-level primitives: image I/O, resampling, polygon masks, stickers.

All operations are pure functions over immutable values, so they are safe to
call from concurrent workers. Images are 8-bit RGB; masks are boolean grids
where true marks the sign region.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from PIL import Image

from . import _kernels
from .errors import (
    InvalidAnnotationError,
    InvalidInputError,
    InvalidRectError,
)

BLACK = "black"
WHITE = "white"
STICKER_VALUES = {BLACK: 0, WHITE: 255}


class Rect(NamedTuple):
    """Axis-aligned pixel rectangle, top-left anchored."""

    x: int
    y: int
    w: int
    h: int


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PixelImage:
    """RGB raster; ``pixels`` is a read-only (height, width, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
            raise InvalidInputError(
                f"image must be (h, w, 3) uint8, got {arr.shape} {arr.dtype}"
            )
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInputError("image dimensions must be >= 1")
        object.__setattr__(self, "pixels", _freeze(arr))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def full(cls, width: int, height: int, rgb=(0, 0, 0)) -> "PixelImage":
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:] = np.asarray(rgb, dtype=np.uint8)
        return cls(arr)


@dataclass(frozen=True)
class BinaryMask:
    """Per-pixel sign-region indicator; ``bits`` is read-only (h, w) bool."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2 or arr.dtype != np.bool_:
            raise InvalidInputError(f"mask must be (h, w) bool, got {arr.shape} {arr.dtype}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInputError("mask dimensions must be >= 1")
        object.__setattr__(self, "bits", _freeze(arr))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def true_count(self) -> int:
        return int(self.bits.sum())

    @property
    def true_fraction(self) -> float:
        return self.true_count / self.bits.size


@dataclass(frozen=True)
class PolygonAnnotation:
    """Sign outline in normalized [0, 1] image coordinates plus its label."""

    vertices: tuple[tuple[float, float], ...]
    label: str

    def __post_init__(self):
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise InvalidAnnotationError(f"polygon needs >= 3 vertices, got {len(verts)}")
        for x, y in verts:
            if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
                raise InvalidAnnotationError(f"vertex ({x}, {y}) outside [0, 1]")
        object.__setattr__(self, "vertices", verts)


def load_image(path) -> PixelImage:
    """Load a PNG (or any Pillow-readable raster) as 8-bit RGB, alpha discarded."""
    with Image.open(path) as im:
        return PixelImage(np.asarray(im.convert("RGB"), dtype=np.uint8))


def save_image(img: PixelImage, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img.pixels).save(path)


def sidecar_path(image_path) -> Path:
    """Annotation sidecar path for an image: <dir>/<stem>.mask.json."""
    p = Path(image_path)
    return p.with_name(p.stem + ".mask.json")


def load_annotation(path) -> PolygonAnnotation:
    try:
        payload = json.loads(Path(path).read_text())
        vertices = tuple((float(x), float(y)) for x, y in payload["polygon"])
        label = str(payload["label"])
    except InvalidAnnotationError:
        raise
    except Exception as exc:
        raise InvalidAnnotationError(f"cannot parse annotation {path}: {exc}") from exc
    return PolygonAnnotation(vertices=vertices, label=label)


def save_annotation(ann: PolygonAnnotation, path) -> None:
    payload = {"label": ann.label, "polygon": [[x, y] for x, y in ann.vertices]}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def rasterize_polygon_px(vertices: np.ndarray, width: int, height: int) -> BinaryMask:
    """Even-odd rasterization of a polygon given in pixel coordinates.

    A pixel is set iff its center (col + 0.5, row + 0.5) lies inside the
    polygon. Vertices may fall outside the frame.
    """
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 2)
    if len(verts) < 3:
        raise InvalidAnnotationError("polygon needs >= 3 vertices")
    cy = np.arange(height, dtype=np.float64) + 0.5
    cx = np.arange(width, dtype=np.float64) + 0.5
    inside = np.zeros((height, width), dtype=bool)
    for i in range(len(verts)):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % len(verts)]
        crosses = (y1 > cy) != (y2 > cy)
        if not crosses.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (x2 - x1) * (cy - y1) / (y2 - y1) + x1
        inside ^= crosses[:, None] & (cx[None, :] < xint[:, None])
    return BinaryMask(inside)


def rasterize_polygon(poly: PolygonAnnotation, width: int, height: int) -> BinaryMask:
    """Rasterize a normalized-coordinate annotation into a width x height mask."""
    if width < 1 or height < 1:
        raise InvalidInputError("mask dimensions must be >= 1")
    verts = np.asarray(poly.vertices, dtype=np.float64) * [width, height]
    return rasterize_polygon_px(verts, width, height)


def resize_image(img: PixelImage, width: int, height: int) -> PixelImage:
    """Bilinear resample to the requested dimensions."""
    if width < 1 or height < 1:
        raise InvalidInputError("target dimensions must be >= 1")
    if width == img.width and height == img.height:
        return img
    return PixelImage(_kernels.resize_bilinear_rgb8(img.pixels, width, height))


def resize_mask(mask: BinaryMask, width: int, height: int) -> BinaryMask:
    """Nearest-neighbor resample; masks stay binary."""
    if width < 1 or height < 1:
        raise InvalidInputError("target dimensions must be >= 1")
    if width == mask.width and height == mask.height:
        return mask
    ix = np.floor((np.arange(width) + 0.5) * (mask.width / width)).astype(np.int64)
    iy = np.floor((np.arange(height) + 0.5) * (mask.height / height)).astype(np.int64)
    np.clip(ix, 0, mask.width - 1, out=ix)
    np.clip(iy, 0, mask.height - 1, out=iy)
    return BinaryMask(mask.bits[iy][:, ix])


def merge_masks(masks: Sequence[BinaryMask]) -> BinaryMask:
    """Pixelwise AND of equally-sized masks: the universal perturbation region."""
    if not masks:
        raise InvalidInputError("merge_masks needs at least one mask")
    shape = masks[0].bits.shape
    for m in masks:
        if m.bits.shape != shape:
            raise InvalidInputError(
                f"mask dimensions differ: {m.bits.shape} vs {shape}"
            )
    return BinaryMask(np.logical_and.reduce([m.bits for m in masks]))


def _check_rect(rect: Rect, width: int, height: int) -> Rect:
    x, y, w, h = (int(v) for v in rect)
    if w < 1 or h < 1:
        raise InvalidRectError(f"rect must have positive size, got {rect}")
    if x < 0 or y < 0 or x + w > width or y + h > height:
        raise InvalidRectError(f"rect {rect} outside {width}x{height} image")
    return Rect(x, y, w, h)


def apply_sticker(img: PixelImage, rect: Rect, color: str) -> PixelImage:
    """Paint an opaque black or white rectangle; the input is not mutated."""
    if color not in STICKER_VALUES:
        raise InvalidInputError(f"unknown sticker color {color!r}")
    x, y, w, h = _check_rect(rect, img.width, img.height)
    out = img.pixels.copy()
    out[y : y + h, x : x + w] = STICKER_VALUES[color]
    return PixelImage(out)


def composite_stickers(img: PixelImage, placements: Sequence[tuple[Rect, str]]) -> PixelImage:
    """Apply several stickers in order (later ones win on overlap)."""
    out = img
    for rect, color in placements:
        out = apply_sticker(out, rect, color)
    return out


def _rects_array(placements: Sequence[tuple[Rect, str]], width: int, height: int) -> np.ndarray:
    rows = []
    for rect, color in placements:
        if color not in STICKER_VALUES:
            raise InvalidInputError(f"unknown sticker color {color!r}")
        x, y, w, h = _check_rect(rect, width, height)
        rows.append((x, y, x + w, y + h, STICKER_VALUES[color]))
    return np.asarray(rows, dtype=np.int64).reshape(-1, 5)


def resize_with_stickers(
    img: PixelImage, placements: Sequence[tuple[Rect, str]], width: int, height: int
) -> PixelImage:
    """Fused composite + bilinear downscale for the search hot loop.

    Bit-identical to ``resize_image(composite_stickers(img, placements), ...)``
    without materializing the full-resolution composite.
    """
    if width < 1 or height < 1:
        raise InvalidInputError("target dimensions must be >= 1")
    rects = _rects_array(placements, img.width, img.height)
    return PixelImage(_kernels.composite_resize_rgb8(img.pixels, rects, width, height))


def crop_resample(
    img: PixelImage, box: tuple[float, float, float, float], width: int, height: int
) -> PixelImage:
    """Bilinearly resample a float-valued crop box (x0, y0, w, h) to width x height.

    The box may extend past the image; out-of-range samples clamp to the edge.
    """
    x0, y0, bw, bh = (float(v) for v in box)
    if bw <= 0 or bh <= 0 or width < 1 or height < 1:
        raise InvalidInputError(f"invalid crop box {box} or target size")
    sx = x0 + (np.arange(width, dtype=np.float64) + 0.5) * (bw / width) - 0.5
    sy = y0 + (np.arange(height, dtype=np.float64) + 0.5) * (bh / height) - 0.5
    np.clip(sx, 0.0, img.width - 1.0, out=sx)
    np.clip(sy, 0.0, img.height - 1.0, out=sy)
    ix0 = np.floor(sx).astype(np.int64)
    iy0 = np.floor(sy).astype(np.int64)
    fx = (sx - ix0)[None, :, None]
    fy = (sy - iy0)[:, None, None]
    ix1 = np.minimum(ix0 + 1, img.width - 1)
    iy1 = np.minimum(iy0 + 1, img.height - 1)
    p = img.pixels.astype(np.float64)
    top = (1.0 - fx) * p[iy0][:, ix0] + fx * p[iy0][:, ix1]
    bot = (1.0 - fx) * p[iy1][:, ix0] + fx * p[iy1][:, ix1]
    v = (1.0 - fy) * top + fy * bot
    return PixelImage(np.floor(v + 0.5).astype(np.uint8))


def mask_to_image(mask: BinaryMask) -> PixelImage:
    """Render a mask as a black/white RGB image (true pixels white)."""
    arr = np.where(mask.bits[:, :, None], 255, 0).astype(np.uint8)
    return PixelImage(np.repeat(arr, 3, axis=2))
