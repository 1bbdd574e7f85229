"""Universal sticker search: enumerate placements common to all signs inside
the merged mask, score each against the classifier, keep the best.

Sizes and anchors are percentages of the canonical frame. A candidate is one
or two same-size rectangles; pairs stack vertically with a gap and move as a
rigid unit whose full footprint (gap included) must lie inside the merged
mask. The objective is the mean over signs of the classifier's confidence on
wrongly predicted signs (unflipped signs contribute zero). All reductions are
order-independent with lexicographic (h, w, y, x) tie-breaks, so results do
not depend on the worker count.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import imaging
from .errors import InvalidInputError, NoFeasibleRegionError, StickerForgeError
from .imaging import BLACK, WHITE, BinaryMask, Rect
from .signs import SignRecord, SignSet
from .victim.backends import materialize

DEFAULT_SIZES = tuple(range(5, 55, 5))
DEFAULT_STRIDE_PCT = 2.0
DEFAULT_GAP_PCT = 5.0
DEFAULT_MIN_AREA_PCT = 1.0

SKIPPED = "-"
INFEASIBLE = "×"  # multiplication sign, as in the sweep tables

PATTERNS = {
    "black": (BLACK,),
    "white": (WHITE,),
    "black_black": (BLACK, BLACK),
    "black_white": (BLACK, WHITE),
    "white_black": (WHITE, BLACK),
    "white_white": (WHITE, WHITE),
}
DEFAULT_PATTERNS = tuple(PATTERNS)


def pattern_colors(name: str) -> tuple[str, ...]:
    try:
        return PATTERNS[name]
    except KeyError:
        raise InvalidInputError(
            f"unknown pattern {name!r}; choose from {sorted(PATTERNS)}"
        ) from None


def pattern_id(colors: Sequence[str]) -> str:
    return "_".join(colors)


@dataclass(frozen=True)
class StickerSpec:
    """One opaque rectangle: color plus size as percent of the frame."""

    color: str
    width_pct: float
    height_pct: float

    def __post_init__(self):
        if self.color not in imaging.STICKER_VALUES:
            raise InvalidInputError(f"unknown sticker color {self.color!r}")
        if self.width_pct <= 0 or self.height_pct <= 0:
            raise InvalidInputError("sticker size percentages must be > 0")


@dataclass(frozen=True)
class CandidatePlacement:
    """1-2 stickers anchored at a shared top-left position (frame percent)."""

    stickers: tuple[StickerSpec, ...]
    anchor: tuple[float, float]
    gap_pct: float = DEFAULT_GAP_PCT

    def __post_init__(self):
        object.__setattr__(self, "stickers", tuple(self.stickers))
        if not 1 <= len(self.stickers) <= 2:
            raise InvalidInputError("placement takes one or two stickers")
        x, y = self.anchor
        if not (0 <= x <= 100 and 0 <= y <= 100):
            raise InvalidInputError(f"anchor {self.anchor} outside [0, 100]")
        if self.gap_pct < 0:
            raise InvalidInputError("gap_pct must be >= 0")

    def colors(self) -> tuple[str, ...]:
        return tuple(s.color for s in self.stickers)


@dataclass(frozen=True)
class PerSignOutcome:
    sign_id: str
    label_name: str
    confidence_pct: float
    flipped: bool


@dataclass(frozen=True)
class CandidateResult:
    placement: CandidatePlacement
    per_sign: tuple[PerSignOutcome, ...]
    objective: float
    feasible: bool


@dataclass(frozen=True)
class SweepGrid:
    """(height, width)-indexed best objectives with '-' / 'x' markers.

    Cell values are stored rounded to two decimals (the reporting precision);
    ``best`` is selected on full-precision objectives before rounding.
    """

    heights: tuple[float, ...]
    widths: tuple[float, ...]
    cells: tuple[tuple[object, ...], ...]
    best: tuple[float, float] | None

    def cell(self, h, w):
        return self.cells[self.heights.index(h)][self.widths.index(w)]


def px(pct: float, frame: int) -> int:
    """Percent of frame -> pixels, round-half-up (shared with the oracles)."""
    return int(math.floor(pct * frame / 100.0 + 0.5))


def sticker_rects(placement: CandidatePlacement, frame: int) -> list[tuple[Rect, str]]:
    """Pixel rectangles for each sticker, pair stacked top-then-bottom."""
    x = px(placement.anchor[0], frame)
    y = px(placement.anchor[1], frame)
    out = []
    for spec in placement.stickers:
        w = max(1, px(spec.width_pct, frame))
        h = max(1, px(spec.height_pct, frame))
        out.append((Rect(x, y, w, h), spec.color))
        y += h + px(placement.gap_pct, frame)
    return out


def footprint_rect(
    anchor: tuple[float, float], size: tuple[float, float], count: int,
    gap_pct: float, frame: int,
) -> Rect:
    """Bounding rectangle of the whole candidate, gap included."""
    h_pct, w_pct = size
    x = px(anchor[0], frame)
    y = px(anchor[1], frame)
    w = max(1, px(w_pct, frame))
    h = max(1, px(h_pct, frame))
    total_h = h if count == 1 else 2 * h + px(gap_pct, frame)
    return Rect(x, y, w, total_h)


def _anchor_grid(stride_pct: float) -> list[float]:
    if stride_pct <= 0:
        raise InvalidInputError("stride_pct must be > 0")
    return [k * stride_pct for k in range(int(100.0 / stride_pct) + 1)
            if k * stride_pct <= 100.0]


def _integral(mask: BinaryMask) -> np.ndarray:
    ii = np.zeros((mask.height + 1, mask.width + 1), dtype=np.int64)
    np.cumsum(np.cumsum(mask.bits, axis=0), axis=1, out=ii[1:, 1:])
    return ii


def _rect_all_true(ii: np.ndarray, rect: Rect) -> bool:
    x, y, w, h = rect
    total = ii[y + h, x + w] - ii[y, x + w] - ii[y + h, x] + ii[y, x]
    return int(total) == w * h


def enumerate_anchors(
    merged: BinaryMask,
    size: tuple[float, float],
    stride_pct: float = DEFAULT_STRIDE_PCT,
    count: int = 1,
    gap_pct: float = DEFAULT_GAP_PCT,
) -> list[tuple[float, float]]:
    """Grid anchors whose full footprint lies inside the merged mask.

    Returned as (x_pct, y_pct) tuples ordered lexicographically by (y, x).
    """
    frame = merged.width
    ii = _integral(merged)
    grid = _anchor_grid(stride_pct)
    anchors = []
    for y_pct in grid:
        for x_pct in grid:
            rect = footprint_rect((x_pct, y_pct), size, count, gap_pct, frame)
            if rect.x + rect.w > merged.width or rect.y + rect.h > merged.height:
                continue
            if _rect_all_true(ii, rect):
                anchors.append((x_pct, y_pct))
    return anchors


def merged_mask(signs: SignSet) -> BinaryMask:
    return imaging.merge_masks([r.mask for r in signs.records])


def _classify_composited(record: SignRecord, placement: CandidatePlacement, classifier):
    rects = sticker_rects(placement, record.image.width)
    size = getattr(classifier, "input_size", None)
    if size:
        img = imaging.resize_with_stickers(record.image, rects, size, size)
    else:
        img = imaging.composite_stickers(record.image, rects)
    try:
        return classifier.predict(img)
    except StickerForgeError as exc:
        raise type(exc)(f"while classifying sign {record.id!r}: {exc}") from exc


def _evaluate(records: Sequence[SignRecord], placement: CandidatePlacement,
              classifier) -> CandidateResult:
    outcomes = []
    total = 0.0
    for record in records:
        verdict = _classify_composited(record, placement, classifier)
        flipped = verdict.label_name != record.true_label
        if flipped:
            total += verdict.confidence_pct
        outcomes.append(
            PerSignOutcome(
                sign_id=record.id,
                label_name=verdict.label_name,
                confidence_pct=verdict.confidence_pct,
                flipped=flipped,
            )
        )
    return CandidateResult(
        placement=placement,
        per_sign=tuple(outcomes),
        objective=total / len(records),
        feasible=True,
    )


def evaluate_candidate(signs: SignSet, placement: CandidatePlacement,
                       classifier) -> CandidateResult:
    """Composite the candidate onto every sign and average flip confidence."""
    frame = signs.records[0].image.width
    size = (placement.stickers[0].height_pct, placement.stickers[0].width_pct)
    rect = footprint_rect(placement.anchor, size, len(placement.stickers),
                          placement.gap_pct, frame)
    merged = merged_mask(signs)
    inside = (rect.x + rect.w <= frame and rect.y + rect.h <= frame
              and _rect_all_true(_integral(merged), rect))
    if not inside:
        raise InvalidInputError(
            f"candidate at {placement.anchor} does not fit the merged mask"
        )
    live = materialize(classifier)
    try:
        return _evaluate(signs.records, placement, live)
    finally:
        if live is not classifier and hasattr(live, "close"):
            live.close()


def _make_placement(colors, size, anchor, gap_pct) -> CandidatePlacement:
    h_pct, w_pct = size
    stickers = tuple(
        StickerSpec(color=c, width_pct=w_pct, height_pct=h_pct) for c in colors
    )
    return CandidatePlacement(stickers=stickers, anchor=anchor, gap_pct=gap_pct)


def _eval_size(records, colors, size, anchors, gap_pct, classifier):
    """Best candidate over one size cell; anchors come pre-ordered by (y, x)."""
    best = None
    for anchor in anchors:
        result = _evaluate(records, _make_placement(colors, size, anchor, gap_pct),
                           classifier)
        if best is None or result.objective > best.objective:
            best = result
    return best


_WORKER: dict = {}


def _worker_init(records, classifier_ref, colors, gap_pct):
    _WORKER["records"] = records
    _WORKER["colors"] = colors
    _WORKER["gap_pct"] = gap_pct
    classifier = materialize(classifier_ref)
    _WORKER["classifier"] = classifier
    if hasattr(classifier, "close"):
        import atexit

        atexit.register(classifier.close)


def _worker_eval(task):
    size, anchors = task
    return _eval_size(
        _WORKER["records"], _WORKER["colors"], size, anchors,
        _WORKER["gap_pct"], _WORKER["classifier"],
    )


def search(
    signs: SignSet,
    colors: Sequence[str],
    classifier,
    sizes: Sequence[float] = DEFAULT_SIZES,
    stride_pct: float = DEFAULT_STRIDE_PCT,
    gap_pct: float = DEFAULT_GAP_PCT,
    min_area_pct: float = DEFAULT_MIN_AREA_PCT,
    workers: int = 1,
) -> tuple[CandidateResult | None, SweepGrid]:
    """Exhaustive sweep over sizes x anchors; returns the best result and grid.

    ``classifier`` may be a live backend or a picklable spec with .create();
    with workers > 1 each worker materializes its own instance. The best
    candidate maximizes the objective with ties broken lexicographically by
    (height, width, anchor y, anchor x); the result is identical for any
    worker count.
    """
    colors = tuple(colors)
    if not colors or any(c not in imaging.STICKER_VALUES for c in colors):
        raise InvalidInputError(f"invalid color pattern {colors!r}")
    if len(colors) > 2:
        raise InvalidInputError("at most two stickers are supported")
    if not signs.records:
        raise InvalidInputError("empty sign set")
    merged = merged_mask(signs)
    if merged.true_count == 0:
        raise NoFeasibleRegionError("no feasible region: merged mask is empty")

    sizes = tuple(sorted(float(s) for s in set(sizes)))
    if not sizes:
        raise InvalidInputError("size set is empty")
    count = len(colors)

    cells: dict[tuple[float, float], object] = {}
    tasks = []
    for h in sizes:
        for w in sizes:
            if count * h * w / 100.0 < min_area_pct:
                cells[(h, w)] = SKIPPED
                continue
            anchors = enumerate_anchors(merged, (h, w), stride_pct, count, gap_pct)
            if not anchors:
                cells[(h, w)] = INFEASIBLE
                continue
            tasks.append(((h, w), anchors))

    if workers > 1 and len(tasks) > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(
            processes=min(workers, len(tasks)),
            initializer=_worker_init,
            initargs=(signs.records, classifier, colors, gap_pct),
        ) as pool:
            outcomes = pool.map(_worker_eval, tasks, chunksize=1)
    else:
        live = materialize(classifier)
        try:
            outcomes = [
                _eval_size(signs.records, colors, size, anchors, gap_pct, live)
                for size, anchors in tasks
            ]
        finally:
            if live is not classifier and hasattr(live, "close"):
                live.close()

    best: CandidateResult | None = None
    best_size: tuple[float, float] | None = None
    for (size, _), result in zip(tasks, outcomes):
        cells[size] = round(result.objective, 2)
        if best is None or result.objective > best.objective:
            best, best_size = result, size

    grid = SweepGrid(
        heights=sizes,
        widths=sizes,
        cells=tuple(tuple(cells[(h, w)] for w in sizes) for h in sizes),
        best=best_size,
    )
    return best, grid
