"""Sign-set ingestion and a procedural synthetic generator.

Ingestion crops each photo to its polygon bounding box (plus a 5% margin per
side, sampled with edge clamping), resamples the crop to the 256x256
canonical frame, and rasterizes the polygon into the same frame. The
generator renders parametric sign scenes with seeded jitter so the whole
pipeline runs without any external dataset.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import imaging
from .errors import IngestError, InvalidInputError

CANONICAL_SIZE = 256
CROP_MARGIN = 0.05


@dataclass(frozen=True)
class SignRecord:
    """One sign in the canonical frame: crop, mask, and ground-truth label."""

    id: str
    image: imaging.PixelImage
    mask: imaging.BinaryMask
    true_label: str

    def __post_init__(self):
        if (self.image.width, self.image.height) != (self.mask.width, self.mask.height):
            raise InvalidInputError(f"record {self.id}: image/mask dimensions differ")
        if self.mask.true_count == 0:
            raise InvalidInputError(f"record {self.id}: mask is empty")


@dataclass(frozen=True)
class SignSet:
    records: tuple[SignRecord, ...]
    class_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("record ids are not unique")
        for r in self.records:
            if r.true_label not in self.class_names:
                raise InvalidInputError(f"label {r.true_label!r} not in class_names")
        dims = {(r.image.width, r.image.height) for r in self.records}
        if len(dims) > 1:
            raise InvalidInputError(f"records are not canonically aligned: {dims}")

    def labels_as_ids(self) -> list[int]:
        index = {name: i for i, name in enumerate(self.class_names)}
        return [index[r.true_label] for r in self.records]


def build_record(
    img: imaging.PixelImage,
    ann: imaging.PolygonAnnotation,
    record_id: str,
    canonical: int = CANONICAL_SIZE,
) -> SignRecord:
    """Crop to the polygon bbox + margin and rasterize the mask in that frame."""
    verts = np.asarray(ann.vertices, dtype=np.float64) * [img.width, img.height]
    x0, y0 = verts.min(axis=0)
    x1, y1 = verts.max(axis=0)
    bw, bh = x1 - x0, y1 - y0
    if bw <= 0 or bh <= 0:
        raise IngestError(f"{record_id}: degenerate polygon bounding box")
    cx0 = x0 - CROP_MARGIN * bw
    cy0 = y0 - CROP_MARGIN * bh
    cw = bw * (1 + 2 * CROP_MARGIN)
    ch = bh * (1 + 2 * CROP_MARGIN)
    image = imaging.crop_resample(img, (cx0, cy0, cw, ch), canonical, canonical)
    frame_verts = (verts - [cx0, cy0]) / [cw, ch] * canonical
    mask = imaging.rasterize_polygon_px(frame_verts, canonical, canonical)
    if mask.true_count == 0:
        raise IngestError(f"{record_id}: polygon rasterized to an empty mask")
    return SignRecord(id=record_id, image=image, mask=mask, true_label=ann.label)


def ingest(image_paths: Sequence, canonical: int = CANONICAL_SIZE) -> SignSet:
    """Build a SignSet from image files with `<id>.mask.json` sidecars."""
    records = []
    for path in image_paths:
        path = Path(path)
        sidecar = imaging.sidecar_path(path)
        if not path.exists():
            raise IngestError(f"missing image file: {path}")
        if not sidecar.exists():
            raise IngestError(f"missing annotation sidecar for {path} (expected {sidecar})")
        ann = imaging.load_annotation(sidecar)
        records.append(build_record(imaging.load_image(path), ann, record_id=path.stem,
                                    canonical=canonical))
    if not records:
        raise IngestError("no images to ingest")
    class_names = tuple(sorted({r.true_label for r in records}))
    return SignSet(records=tuple(records), class_names=class_names)


def ingest_dir(directory, canonical: int = CANONICAL_SIZE) -> SignSet:
    paths = sorted(Path(directory).glob("*.png"))
    if not paths:
        raise IngestError(f"no .png files in {directory}")
    return ingest(paths, canonical=canonical)


# --- synthetic generator ---

# Unit outlines spanning [-0.5, 0.5]^2 (y grows downward, matching images).
_SHAPES: dict[str, tuple[tuple[float, float], ...]] = {}


def _regular(n: int, phase_deg: float) -> tuple[tuple[float, float], ...]:
    pts = []
    for k in range(n):
        a = math.radians(phase_deg + 360.0 * k / n)
        pts.append((0.5 * math.cos(a), 0.5 * math.sin(a)))
    return tuple(pts)


def _octagon() -> tuple[tuple[float, float], ...]:
    r = 0.5 / math.cos(math.pi / 8)  # flat-to-flat width 1
    pts = []
    for k in range(8):
        a = math.pi / 8 + k * math.pi / 4
        pts.append((r * math.cos(a), r * math.sin(a)))
    return tuple(pts)


_SHAPES["octagon"] = _octagon()
_SHAPES["triangle"] = ((-0.5, -0.5), (0.5, -0.5), (0.0, 0.5))  # point-down
_SHAPES["diamond"] = ((0.0, -0.5), (0.5, 0.0), (0.0, 0.5), (-0.5, 0.0))
_SHAPES["rectangle"] = ((-0.4, -0.5), (0.4, -0.5), (0.4, 0.5), (-0.4, 0.5))
_SHAPES["pentagon"] = _regular(5, -90.0)


@dataclass(frozen=True)
class ShapeSpec:
    """A sign class: label, outline shape, concentric paint layers, and glyph
    rectangles (legend/text proxies) in the outline's unit box."""

    label: str
    shape: str
    layers: tuple[tuple[float, tuple[int, int, int]], ...]
    glyphs: tuple[tuple[float, float, float, float, tuple[int, int, int]], ...] = ()


DEFAULT_CLASSES: tuple[ShapeSpec, ...] = (
    ShapeSpec("Stop", "octagon",
              ((1.0, (178, 34, 52)), (0.90, (240, 240, 240)), (0.78, (178, 34, 52))),
              ((-0.30, -0.09, 0.30, 0.09, (246, 246, 246)),)),
    ShapeSpec("Yield", "triangle",
              ((1.0, (196, 30, 58)), (0.62, (246, 246, 246))),
              ((-0.05, -0.30, 0.05, 0.02, (196, 30, 58)),)),
    ShapeSpec("Merge", "diamond",
              ((1.0, (24, 24, 24)), (0.93, (255, 208, 0))),
              ((-0.05, -0.16, 0.05, 0.16, (24, 24, 24)),
               (-0.18, -0.16, -0.05, -0.04, (24, 24, 24)))),
    ShapeSpec("Speed Limit 25", "rectangle",
              ((1.0, (40, 40, 40)), (0.90, (250, 250, 250))),
              ((-0.22, -0.14, -0.04, 0.16, (40, 40, 40)),
               (0.06, -0.14, 0.24, 0.16, (40, 40, 40)))),
    # same outline and field as Merge on purpose: only the legend separates
    # the two warning classes, so the victim must rely on the sign center
    ShapeSpec("Ped. Crossing", "diamond",
              ((1.0, (24, 24, 24)), (0.93, (255, 208, 0))),
              ((-0.16, -0.16, 0.16, -0.04, (24, 24, 24)),
               (-0.05, 0.00, 0.05, 0.16, (24, 24, 24)))),
)


def slugify(label: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", label.lower()).strip("_")


@dataclass(frozen=True)
class Scene:
    """A rendered full-frame sign photo plus its polygon annotation."""

    id: str
    image: imaging.PixelImage
    annotation: imaging.PolygonAnnotation


def _render_scene(spec: ShapeSpec, rng: np.random.Generator, scene_size: int) -> tuple[
        imaging.PixelImage, imaging.PolygonAnnotation]:
    if spec.shape not in _SHAPES:
        raise InvalidInputError(
            f"unknown shape {spec.shape!r}; choose from {sorted(_SHAPES)}"
        )
    unit = np.asarray(_SHAPES[spec.shape], dtype=np.float64)

    # jitter: position +-5% of the frame, scale +-10%, brightness +-20%;
    # backgrounds span the gamut of plausible street scenery
    dx = rng.uniform(-0.05, 0.05) * scene_size
    dy = rng.uniform(-0.05, 0.05) * scene_size
    size = 0.62 * scene_size * (1.0 + rng.uniform(-0.10, 0.10))
    brightness = 1.0 + rng.uniform(-0.20, 0.20)
    bg = rng.uniform(40, 200, size=3)

    center = np.array([scene_size / 2 + dx, scene_size / 2 + dy])
    canvas = np.empty((scene_size, scene_size, 3), dtype=np.float64)
    canvas[:] = bg
    for scale, rgb in spec.layers:
        verts = center + unit * (size * scale)
        layer = imaging.rasterize_polygon_px(verts, scene_size, scene_size)
        canvas[layer.bits] = np.asarray(rgb, dtype=np.float64)
    for gx0, gy0, gx1, gy1, rgb in spec.glyphs:
        x0 = int(round(center[0] + gx0 * size))
        x1 = int(round(center[0] + gx1 * size))
        y0 = int(round(center[1] + gy0 * size))
        y1 = int(round(center[1] + gy1 * size))
        canvas[max(0, y0) : y1, max(0, x0) : x1] = np.asarray(rgb, dtype=np.float64)
    canvas = np.clip(canvas * brightness, 0, 255)
    image = imaging.PixelImage(np.floor(canvas + 0.5).astype(np.uint8))

    outer = center + unit * size
    norm = np.clip(outer / scene_size, 0.0, 1.0)
    ann = imaging.PolygonAnnotation(
        vertices=tuple((float(x), float(y)) for x, y in norm), label=spec.label
    )
    return image, ann


def generate_scenes(
    classes: Sequence[ShapeSpec] = DEFAULT_CLASSES,
    count_per_class: int = 10,
    seed: int = 0,
    scene_size: int = 384,
) -> list[Scene]:
    """Render `count_per_class` jittered scenes per class, deterministically."""
    if count_per_class < 1:
        raise InvalidInputError("count_per_class must be >= 1")
    if not classes:
        raise InvalidInputError("classes must be non-empty")
    rng = np.random.default_rng(seed)
    scenes = []
    for spec in classes:
        slug = slugify(spec.label)
        for i in range(count_per_class):
            image, ann = _render_scene(spec, rng, scene_size)
            scenes.append(Scene(id=f"{slug}_{i:03d}", image=image, annotation=ann))
    return scenes


def scenes_to_sign_set(scenes: Sequence[Scene], canonical: int = CANONICAL_SIZE) -> SignSet:
    records = tuple(
        build_record(s.image, s.annotation, s.id, canonical=canonical) for s in scenes
    )
    class_names = tuple(sorted({r.true_label for r in records}))
    return SignSet(records=records, class_names=class_names)


def generate_synthetic(
    classes: Sequence[ShapeSpec] = DEFAULT_CLASSES,
    count_per_class: int = 10,
    seed: int = 0,
    scene_size: int = 384,
) -> SignSet:
    """Synthetic SignSet in the canonical frame (scenes rendered then ingested)."""
    return scenes_to_sign_set(generate_scenes(classes, count_per_class, seed, scene_size))


def split_sign_set(signs: SignSet, train_per_class: int, test_per_class: int) -> tuple[
        SignSet, SignSet]:
    """Deterministic per-class split: first N records train, next M test."""
    by_label: dict[str, list[SignRecord]] = {}
    for r in signs.records:
        by_label.setdefault(r.true_label, []).append(r)
    train, test = [], []
    for label in signs.class_names:
        recs = by_label.get(label, [])
        if len(recs) < train_per_class + test_per_class:
            raise InvalidInputError(
                f"class {label!r} has {len(recs)} records, need "
                f"{train_per_class + test_per_class}"
            )
        train.extend(recs[:train_per_class])
        test.extend(recs[train_per_class : train_per_class + test_per_class])
    return (
        SignSet(records=tuple(train), class_names=signs.class_names),
        SignSet(records=tuple(test), class_names=signs.class_names),
    )


def write_scenes(scenes: Sequence[Scene], directory) -> None:
    """Write scenes in the on-disk layout: <id>.png + <id>.mask.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for scene in scenes:
        imaging.save_image(scene.image, directory / f"{scene.id}.png")
        imaging.save_annotation(scene.annotation, directory / f"{scene.id}.mask.json")
