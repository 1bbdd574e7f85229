"""stickerforge: universal black/white sticker attacks on sign classifiers.

Pipeline: ingest sign photos (or generate synthetic ones), intersect their
region masks into the universal perturbation region, exhaustively sweep
sticker sizes and anchors common to every sign against a black-box
classifier, and report the best universal configurations as tables and
annotated images.
"""

from ._kernels import BACKEND as KERNEL_BACKEND
from .attack import (
    CandidatePlacement,
    CandidateResult,
    StickerSpec,
    SweepGrid,
    enumerate_anchors,
    evaluate_candidate,
    merged_mask,
    search,
)
from .imaging import (
    BLACK,
    WHITE,
    BinaryMask,
    PixelImage,
    PolygonAnnotation,
    Rect,
    apply_sticker,
    load_image,
    merge_masks,
    rasterize_polygon,
    resize_image,
    resize_mask,
    save_image,
)
from .signs import SignRecord, SignSet, generate_synthetic, ingest, ingest_dir

__version__ = "0.1.0"

__all__ = [
    "BLACK",
    "BinaryMask",
    "CandidatePlacement",
    "CandidateResult",
    "KERNEL_BACKEND",
    "PixelImage",
    "PolygonAnnotation",
    "Rect",
    "SignRecord",
    "SignSet",
    "StickerSpec",
    "SweepGrid",
    "WHITE",
    "apply_sticker",
    "enumerate_anchors",
    "evaluate_candidate",
    "generate_synthetic",
    "ingest",
    "ingest_dir",
    "load_image",
    "merge_masks",
    "merged_mask",
    "rasterize_polygon",
    "resize_image",
    "resize_mask",
    "save_image",
    "search",
]
