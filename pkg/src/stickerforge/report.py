"""Rendered outputs: baseline and best-candidate tables, sweep grids,
annotated attack images, and the machine-readable run summary.

The JSON summary is the single source of truth; every table is a derived
view. Confidences are formatted with exactly two decimals; sweep cells keep
the "-" (skipped by the minimum-area rule) and "x" (no feasible anchor)
literals. Timing data lives in its own subtree so determinism checks can
exclude it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import imaging
from .attack import (
    CandidatePlacement,
    CandidateResult,
    INFEASIBLE,
    PerSignOutcome,
    SKIPPED,
    StickerSpec,
    SweepGrid,
    pattern_id,
    sticker_rects,
)
from .errors import InvalidInputError
from .signs import SignSet
from .victim.cnn import ClassifierVerdict


@dataclass(frozen=True)
class BaselineEntry:
    sign_id: str
    true_label: str
    verdict: ClassifierVerdict


@dataclass(frozen=True)
class PatternOutcome:
    best: CandidateResult | None
    grid: SweepGrid

    @property
    def succeeded(self) -> bool:
        return self.best is not None and self.best.objective > 0


@dataclass(frozen=True)
class RunSummary:
    """Everything one attack run produced, minus the images themselves."""

    config: dict
    baseline: tuple[BaselineEntry, ...]
    patterns: dict[str, PatternOutcome]
    timings: dict = field(default_factory=dict)

    def pattern_order(self) -> list[str]:
        configured = self.config.get("patterns")
        if configured:
            return [p for p in configured if p in self.patterns]
        return sorted(self.patterns)


def _fmt(value: float) -> str:
    return f"{value:.2f}"


# --- JSON encoding ---


def _placement_to_dict(p: CandidatePlacement) -> dict:
    return {
        "stickers": [
            {"color": s.color, "width_pct": s.width_pct, "height_pct": s.height_pct}
            for s in p.stickers
        ],
        "anchor": [p.anchor[0], p.anchor[1]],
        "gap_pct": p.gap_pct,
    }


def _placement_from_dict(d: dict) -> CandidatePlacement:
    return CandidatePlacement(
        stickers=tuple(
            StickerSpec(s["color"], s["width_pct"], s["height_pct"])
            for s in d["stickers"]
        ),
        anchor=(d["anchor"][0], d["anchor"][1]),
        gap_pct=d["gap_pct"],
    )


def _result_to_dict(r: CandidateResult) -> dict:
    return {
        "placement": _placement_to_dict(r.placement),
        "per_sign": [
            {
                "sign_id": o.sign_id,
                "label_name": o.label_name,
                "confidence_pct": o.confidence_pct,
                "flipped": o.flipped,
            }
            for o in r.per_sign
        ],
        "objective": r.objective,
        "feasible": r.feasible,
    }


def _result_from_dict(d: dict) -> CandidateResult:
    return CandidateResult(
        placement=_placement_from_dict(d["placement"]),
        per_sign=tuple(
            PerSignOutcome(
                sign_id=o["sign_id"],
                label_name=o["label_name"],
                confidence_pct=o["confidence_pct"],
                flipped=o["flipped"],
            )
            for o in d["per_sign"]
        ),
        objective=d["objective"],
        feasible=d["feasible"],
    )


def _grid_to_dict(g: SweepGrid) -> dict:
    return {
        "heights": list(g.heights),
        "widths": list(g.widths),
        "cells": [list(row) for row in g.cells],
        "best_cell": list(g.best) if g.best is not None else None,
    }


def _grid_from_dict(d: dict) -> SweepGrid:
    return SweepGrid(
        heights=tuple(d["heights"]),
        widths=tuple(d["widths"]),
        cells=tuple(tuple(row) for row in d["cells"]),
        best=tuple(d["best_cell"]) if d["best_cell"] is not None else None,
    )


def summary_to_dict(summary: RunSummary) -> dict:
    return {
        "config": summary.config,
        "baseline": [
            {
                "sign_id": b.sign_id,
                "true_label": b.true_label,
                "label_id": b.verdict.label_id,
                "label_name": b.verdict.label_name,
                "confidence_pct": b.verdict.confidence_pct,
                "probs": list(b.verdict.probs),
            }
            for b in summary.baseline
        ],
        "patterns": {
            name: {
                "best": _result_to_dict(p.best) if p.best is not None else None,
                "grid": _grid_to_dict(p.grid),
                "attack_succeeded": p.succeeded,
            }
            for name, p in summary.patterns.items()
        },
        "timings": summary.timings,
    }


def summary_from_dict(d: dict) -> RunSummary:
    baseline = tuple(
        BaselineEntry(
            sign_id=b["sign_id"],
            true_label=b["true_label"],
            verdict=ClassifierVerdict(
                label_id=b["label_id"],
                label_name=b["label_name"],
                confidence_pct=b["confidence_pct"],
                probs=tuple(b["probs"]),
            ),
        )
        for b in d["baseline"]
    )
    patterns = {
        name: PatternOutcome(
            best=_result_from_dict(p["best"]) if p["best"] is not None else None,
            grid=_grid_from_dict(p["grid"]),
        )
        for name, p in d["patterns"].items()
    }
    return RunSummary(
        config=d["config"], baseline=baseline, patterns=patterns,
        timings=d.get("timings", {}),
    )


def write_summary(summary: RunSummary, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary_to_dict(summary), indent=2, sort_keys=True) + "\n")


def load_summary(path) -> RunSummary:
    return summary_from_dict(json.loads(Path(path).read_text()))


# --- tables ---


def _grid_cell_text(cell) -> str:
    if isinstance(cell, str):
        return cell
    return _fmt(cell)


def render_sweep_table(grid: SweepGrid, fmt: str = "csv") -> str:
    """Sweep grid as text: heights down, widths across, best cell flagged.

    CSV keeps cells numeric-parseable and records the best cell on a trailing
    sidecar comment line; markdown bolds the best cell in place.
    """
    if fmt == "csv":
        lines = ["height\\width," + ",".join(_num(w) for w in grid.widths)]
        for h, row in zip(grid.heights, grid.cells):
            lines.append(_num(h) + "," + ",".join(_grid_cell_text(c) for c in row))
        if grid.best is not None:
            lines.append(f"# best,{_num(grid.best[0])},{_num(grid.best[1])}")
        return "\n".join(lines) + "\n"
    if fmt == "markdown":
        header = "| height\\width | " + " | ".join(_num(w) for w in grid.widths) + " |"
        sep = "| --- |" + " --- |" * len(grid.widths)
        lines = [header, sep]
        for h, row in zip(grid.heights, grid.cells):
            cells = []
            for w, cell in zip(grid.widths, row):
                text = _grid_cell_text(cell)
                if grid.best is not None and (h, w) == tuple(grid.best):
                    text = f"**{text}**"
                cells.append(text)
            lines.append("| " + _num(h) + " | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"
    raise InvalidInputError(f"unknown table format {fmt!r}")


def _num(v: float) -> str:
    return f"{v:g}"


def parse_sweep_csv(text: str) -> SweepGrid:
    """Inverse of render_sweep_table(fmt='csv')."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    best = None
    if lines and lines[-1].startswith("# best,"):
        _, h, w = lines.pop().split(",")
        best = (float(h), float(w))
    widths = tuple(float(v) for v in lines[0].split(",")[1:])
    heights = []
    cells = []
    for line in lines[1:]:
        parts = line.split(",")
        heights.append(float(parts[0]))
        row = []
        for cell in parts[1:]:
            row.append(cell if cell in (SKIPPED, INFEASIBLE) else float(cell))
        cells.append(tuple(row))
    return SweepGrid(heights=tuple(heights), widths=widths, cells=tuple(cells), best=best)


def render_baseline_table(summary: RunSummary, fmt: str = "csv") -> str:
    rows = [
        (b.sign_id, b.verdict.label_name, _fmt(b.verdict.confidence_pct))
        for b in summary.baseline
    ]
    return _simple_table(("sign", "predicted_label", "confidence_pct"), rows, fmt)


def render_best_tables(summary: RunSummary, fmt: str = "csv") -> tuple[str, str]:
    """(confidence table, label table): one row per sign, one column per pattern.

    Signs the best candidate failed to flip show "x" in the confidence table
    and their (still correct) predicted label in the label table.
    """
    patterns = summary.pattern_order()
    if not patterns:
        header = ("sign",)
        return _simple_table(header, [], fmt), _simple_table(header, [], fmt)
    conf_rows = []
    label_rows = []
    for entry in summary.baseline:
        conf_row = [entry.sign_id]
        label_row = [entry.sign_id]
        for name in patterns:
            outcome = summary.patterns[name]
            per_sign = {
                o.sign_id: o for o in (outcome.best.per_sign if outcome.best else ())
            }
            o = per_sign.get(entry.sign_id)
            if o is None:
                conf_row.append(INFEASIBLE)
                label_row.append("")
            elif o.flipped:
                conf_row.append(_fmt(o.confidence_pct))
                label_row.append(o.label_name)
            else:
                conf_row.append(INFEASIBLE)
                label_row.append(o.label_name)
        conf_rows.append(tuple(conf_row))
        label_rows.append(tuple(label_row))
    header = ("sign", *patterns)
    return (
        _simple_table(header, conf_rows, fmt),
        _simple_table(header, label_rows, fmt),
    )


def _simple_table(header: Sequence[str], rows: Sequence[Sequence[str]], fmt: str) -> str:
    if fmt == "csv":
        lines = [",".join(header)]
        lines.extend(",".join(str(c) for c in row) for row in rows)
        return "\n".join(lines) + "\n"
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |", "| --- |" + " --- |" * (len(header) - 1)]
        lines.extend("| " + " | ".join(str(c) for c in row) + " |" for row in rows)
        return "\n".join(lines) + "\n"
    raise InvalidInputError(f"unknown table format {fmt!r}")


# --- annotated images ---


def _draw_cross(pixels: np.ndarray, cx: int, cy: int, arm: int = 9) -> None:
    h, w = pixels.shape[:2]
    for d in range(-arm, arm + 1):
        for t in (-1, 0, 1):  # 3 px thick strokes, black core with white edges
            for x, y in ((cx + d + t, cy + d), (cx + d + t, cy - d)):
                if 0 <= x < w and 0 <= y < h:
                    pixels[y, x] = 255 if t else 0


def annotate_images(
    signs: SignSet,
    best: CandidateResult,
    outdir,
    overlay_marker: bool = False,
) -> list[Path]:
    """Write one composited PNG per sign for the winning candidate.

    The optional cross-mark only illustrates the shared anchor; it is not
    part of the attack and defaults to off.
    """
    if not best.feasible:
        raise InvalidInputError("cannot annotate an infeasible candidate")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    name = pattern_id(best.placement.colors())
    written = []
    for record in signs.records:
        rects = sticker_rects(best.placement, record.image.width)
        composited = imaging.composite_stickers(record.image, rects)
        if overlay_marker:
            pixels = composited.pixels.copy()
            anchor_rect = rects[0][0]
            _draw_cross(pixels, anchor_rect.x, anchor_rect.y)
            composited = imaging.PixelImage(pixels)
        path = outdir / f"{record.id}_{name}.png"
        imaging.save_image(composited, path)
        written.append(path)
    return written


# --- full report directory ---


def write_report(summary: RunSummary, outdir, signs: SignSet | None = None,
                 overlay_marker: bool = False) -> None:
    """Materialize summary.json, tables/*.{csv,md}, and images/ under outdir."""
    outdir = Path(outdir)
    tables = outdir / "tables"
    tables.mkdir(parents=True, exist_ok=True)
    write_summary(summary, outdir / "summary.json")

    for fmt, ext in (("csv", "csv"), ("markdown", "md")):
        (tables / f"baseline.{ext}").write_text(render_baseline_table(summary, fmt))
        conf, labels = render_best_tables(summary, fmt)
        (tables / f"best_confidence.{ext}").write_text(conf)
        (tables / f"best_labels.{ext}").write_text(labels)
        for name in summary.pattern_order():
            grid = summary.patterns[name].grid
            (tables / f"sweep_{name}.{ext}").write_text(render_sweep_table(grid, fmt))

    if signs is not None:
        for name in summary.pattern_order():
            best = summary.patterns[name].best
            if best is not None:
                annotate_images(signs, best, outdir / "images",
                                overlay_marker=overlay_marker)
