import numpy as np
import pytest

from stickerforge import attack, imaging
from stickerforge.attack import (
    INFEASIBLE,
    SKIPPED,
    CandidatePlacement,
    StickerSpec,
    enumerate_anchors,
    evaluate_candidate,
    merged_mask,
    pattern_colors,
    search,
    sticker_rects,
)
from stickerforge.errors import (
    BackendUnavailableError,
    InvalidInputError,
    NoFeasibleRegionError,
)
from stickerforge.signs import SignRecord, SignSet
from stickerforge.victim.cnn import ClassifierVerdict

import oracles
from conftest import rect_mask

FRAME = 256

# sign identity is encoded in the top-left pixel so stubs can recover the
# ground truth from the composited image alone (stickers stay off the corner)
CORNER_LABELS = {5: "L0", 6: "L1", 7: "L2"}


def make_records(mask_bits_list, labels=("L0", "L1", "L2")):
    records = []
    for i, bits in enumerate(mask_bits_list):
        pixels = np.full((FRAME, FRAME, 3), 128, dtype=np.uint8)
        pixels[0, 0] = (5 + i, 0, 0)
        records.append(
            SignRecord(
                id=f"s{i}",
                image=imaging.PixelImage(pixels),
                mask=imaging.BinaryMask(bits),
                true_label=labels[i],
            )
        )
    return SignSet(records=tuple(records), class_names=tuple(sorted(set(labels))))


def central_mask(margin):
    bits = np.zeros((FRAME, FRAME), dtype=bool)
    bits[margin : FRAME - margin, margin : FRAME - margin] = True
    return bits


def _true_label(img):
    return CORNER_LABELS[int(img.pixels[0, 0, 0])]


def _verdict(label, conf):
    return ClassifierVerdict(label_id=0, label_name=label,
                             confidence_pct=conf, probs=(conf / 100.0, 1 - conf / 100.0))


class NeverFlip:
    """Always answers the sign's own label at 90%."""

    input_size = None

    def predict(self, img):
        return _verdict(_true_label(img), 90.0)


class AlwaysFlip:
    input_size = None

    def __init__(self, confidence=50.0):
        self.confidence = confidence

    def predict(self, img):
        return _verdict("Wrong Way", self.confidence)


class FlipOnPixel:
    """Flips iff the probe pixel is pure black; else answers the truth."""

    input_size = None

    def __init__(self, x, y, confidence=80.0):
        self.x, self.y, self.confidence = x, y, confidence

    def predict(self, img):
        if (img.pixels[self.y, self.x] == 0).all():
            return _verdict("Wrong Way", self.confidence)
        return _verdict(_true_label(img), 90.0)


class FlipSomeSigns:
    """Flips a fixed subset of signs (by corner id) at a fixed confidence."""

    input_size = None

    def __init__(self, flip_labels, confidence):
        self.flip_labels = set(flip_labels)
        self.confidence = confidence

    def predict(self, img):
        label = _true_label(img)
        if label in self.flip_labels:
            return _verdict("Wrong Way", self.confidence)
        return _verdict(label, 90.0)


class ExplodingBackend:
    input_size = None

    def predict(self, img):
        raise BackendUnavailableError("backend fell over")


class TestEnumerateAnchors:
    def test_all_true_mask_50pct_stride_50(self):
        mask = imaging.BinaryMask(np.ones((FRAME, FRAME), dtype=bool))
        anchors = enumerate_anchors(mask, (50, 50), stride_pct=50)
        assert anchors == [(0, 0), (50, 0), (0, 50), (50, 50)]

    def test_all_false_mask_is_empty(self):
        mask = imaging.BinaryMask(np.zeros((FRAME, FRAME), dtype=bool))
        assert enumerate_anchors(mask, (10, 10), stride_pct=25) == []

    def test_sticker_larger_than_mask_bbox_is_empty(self):
        mask = rect_mask(FRAME, 100, 100, 40, 40)  # bbox ~15.6% of frame
        assert enumerate_anchors(mask, (20, 20), stride_pct=5) == []

    def test_anchors_ordered_by_y_then_x(self):
        mask = imaging.BinaryMask(np.ones((FRAME, FRAME), dtype=bool))
        anchors = enumerate_anchors(mask, (10, 10), stride_pct=30)
        assert anchors == sorted(anchors, key=lambda a: (a[1], a[0]))

    def test_every_anchor_footprint_inside_mask(self, rng):
        for _ in range(20):
            bits = np.zeros((FRAME, FRAME), dtype=bool)
            x, y = int(rng.integers(0, 120)), int(rng.integers(0, 120))
            w, h = int(rng.integers(30, 130)), int(rng.integers(30, 130))
            bits[y : y + h, x : x + w] = True
            bits &= rng.random((FRAME, FRAME)) < 0.98  # poke holes
            mask = imaging.BinaryMask(bits)
            for count in (1, 2):
                anchors = enumerate_anchors(mask, (15, 10), stride_pct=10,
                                            count=count, gap_pct=5)
                for ax, ay in anchors:
                    fx, fy, fw, fh = oracles.footprint(ax, ay, 15, 10, count, 5, FRAME)
                    assert oracles.rect_fits(bits, fx, fy, fw, fh)

    def test_pair_footprint_includes_gap(self):
        # two 20% stickers + 5% gap need 2*51 + 13 = 115 rows
        assert enumerate_anchors(rect_mask(FRAME, 0, 0, 60, 114), (20, 20),
                                 stride_pct=5, count=2, gap_pct=5) == []
        anchors = enumerate_anchors(rect_mask(FRAME, 0, 0, 60, 115), (20, 20),
                                    stride_pct=5, count=2, gap_pct=5)
        assert anchors == [(0, 0)]

    def test_bad_stride_rejected(self):
        mask = imaging.BinaryMask(np.ones((8, 8), dtype=bool))
        with pytest.raises(InvalidInputError):
            enumerate_anchors(mask, (10, 10), stride_pct=0)


class TestEvaluateCandidate:
    def setup_method(self):
        self.signs = make_records([central_mask(20)] * 3)
        self.placement = CandidatePlacement(
            stickers=(StickerSpec("black", 20, 20),), anchor=(40, 40), gap_pct=5
        )

    def test_never_flip_gives_zero_objective(self):
        result = evaluate_candidate(self.signs, self.placement, NeverFlip())
        assert result.objective == 0.0
        assert all(not o.flipped for o in result.per_sign)
        assert result.feasible

    def test_all_flip_at_80_gives_80(self):
        clf = FlipOnPixel(128, 128, confidence=80.0)  # sticker covers (128,128)
        result = evaluate_candidate(self.signs, self.placement, clf)
        assert result.objective == pytest.approx(80.0)
        assert all(o.flipped for o in result.per_sign)

    def test_two_of_three_at_60_gives_40(self):
        clf = FlipSomeSigns({"L0", "L1"}, confidence=60.0)
        result = evaluate_candidate(self.signs, self.placement, clf)
        assert result.objective == pytest.approx(40.0)
        assert [o.flipped for o in result.per_sign] == [True, True, False]

    def test_infeasible_candidate_rejected(self):
        bad = CandidatePlacement(
            stickers=(StickerSpec("black", 20, 20),), anchor=(0, 0), gap_pct=5
        )  # anchor sits outside the central mask
        with pytest.raises(InvalidInputError):
            evaluate_candidate(self.signs, bad, NeverFlip())

    def test_backend_failure_carries_sign_id(self):
        with pytest.raises(BackendUnavailableError, match="s0"):
            evaluate_candidate(self.signs, self.placement, ExplodingBackend())

    def test_sticker_pixels_are_painted(self):
        rects = sticker_rects(self.placement, FRAME)
        assert len(rects) == 1
        rect, color = rects[0]
        assert color == "black"
        assert (rect.x, rect.y) == (102, 102)
        assert (rect.w, rect.h) == (51, 51)


class TestSearch:
    def test_flip_on_pixel_matches_brute_force_oracle(self):
        signs = make_records([central_mask(30), central_mask(40), central_mask(35)])
        clf = FlipOnPixel(128, 128, confidence=80.0)
        sizes = (20, 30, 40)
        best, grid = search(signs, ("black",), classifier=clf, sizes=sizes,
                            stride_pct=25, gap_pct=5, min_area_pct=1.0)

        def oracle_predict(arr):
            if (arr[128, 128] == 0).all():
                return "Wrong Way", 80.0
            return CORNER_LABELS[int(arr[0, 0, 0])], 90.0

        records = [
            {"image": r.image.pixels, "mask": r.mask.bits, "true_label": r.true_label}
            for r in signs.records
        ]
        best_key, best_obj, oracle_grid = oracles.brute_force_search(
            records, ("black",), sizes, 25, 5, 1.0, oracle_predict, FRAME
        )
        assert best is not None
        assert best.objective == pytest.approx(best_obj)
        h, w = best_key[0], best_key[1]
        assert grid.best == (h, w)
        assert best.placement.anchor == (best_key[3], best_key[2])
        for i, hh in enumerate(grid.heights):
            for j, ww in enumerate(grid.widths):
                assert grid.cells[i][j] == oracle_grid[(hh, ww)]
        # the winning sticker really covers the probe pixel
        rect, _ = sticker_rects(best.placement, FRAME)[0]
        assert rect.x <= 128 < rect.x + rect.w
        assert rect.y <= 128 < rect.y + rect.h

    def test_never_flip_gives_zero_grid(self):
        signs = make_records([central_mask(30)] * 3)
        best, grid = search(signs, ("white",), classifier=NeverFlip(),
                            sizes=(20, 40), stride_pct=25)
        assert best is not None and best.objective == 0.0
        for row in grid.cells:
            for cell in row:
                assert cell in (0.0, SKIPPED, INFEASIBLE)

    def test_tie_break_is_lexicographic(self):
        signs = make_records([central_mask(10)] * 3)
        best, grid = search(signs, ("black",), classifier=AlwaysFlip(50.0),
                            sizes=(20, 40), stride_pct=25)
        # every feasible candidate scores 50, so the first (h, w, y, x) wins
        assert grid.best == (20, 20)
        assert best.placement.anchor == (25, 25)  # first feasible anchor of (20,20)

    def test_oversize_cells_marked_infeasible(self):
        # mask bounding box is 40% of the frame: anything over 40% cannot fit
        signs = make_records([rect_mask(FRAME, 0, 0, 102, 102).bits] * 3)
        best, grid = search(signs, ("black",), classifier=AlwaysFlip(),
                            sizes=(40, 45, 50), stride_pct=10, min_area_pct=0.0)
        assert grid.cell(40, 40) != INFEASIBLE
        for h, w in [(40, 45), (45, 40), (45, 45), (50, 40), (40, 50), (50, 50)]:
            assert grid.cell(h, w) == INFEASIBLE

    def test_min_area_rule_marks_skipped(self):
        signs = make_records([central_mask(10)] * 3)
        _, grid = search(signs, ("black",), classifier=AlwaysFlip(),
                         sizes=(5, 20), stride_pct=25, min_area_pct=1.0)
        assert grid.cell(5, 5) == SKIPPED        # 0.25% of frame
        assert grid.cell(5, 20) != SKIPPED       # exactly 1%
        assert grid.cell(20, 20) != SKIPPED

    def test_empty_merged_mask_raises_no_feasible_region(self):
        left = rect_mask(FRAME, 0, 0, 100, 256)
        right = rect_mask(FRAME, 156, 0, 100, 256)
        signs = make_records([left.bits, right.bits, np.ones((FRAME, FRAME), bool)])
        with pytest.raises(NoFeasibleRegionError):
            search(signs, ("black",), classifier=NeverFlip())

    def test_worker_counts_agree(self):
        signs = make_records([central_mask(30)] * 3)
        clf = FlipOnPixel(120, 130, confidence=72.5)
        kwargs = dict(sizes=(20, 30, 40), stride_pct=20, gap_pct=5)
        best1, grid1 = search(signs, ("black",), classifier=clf, workers=1, **kwargs)
        best3, grid3 = search(signs, ("black",), classifier=clf, workers=3, **kwargs)
        assert grid1 == grid3
        assert best1 == best3

    def test_two_sticker_search_matches_oracle(self):
        signs = make_records([central_mask(30), central_mask(45), central_mask(20)])
        clf = FlipOnPixel(100, 100, confidence=65.0)
        sizes = (15, 30)
        best, grid = search(signs, ("white", "black"), classifier=clf, sizes=sizes,
                            stride_pct=25, gap_pct=5, min_area_pct=1.0)

        def oracle_predict(arr):
            if (arr[100, 100] == 0).all():
                return "Wrong Way", 65.0
            return CORNER_LABELS[int(arr[0, 0, 0])], 90.0

        records = [
            {"image": r.image.pixels, "mask": r.mask.bits, "true_label": r.true_label}
            for r in signs.records
        ]
        best_key, best_obj, oracle_grid = oracles.brute_force_search(
            records, ("white", "black"), sizes, 25, 5, 1.0, oracle_predict, FRAME
        )
        for i, hh in enumerate(grid.heights):
            for j, ww in enumerate(grid.widths):
                assert grid.cells[i][j] == oracle_grid[(hh, ww)]
        if best_key is None:
            assert best is None or best.objective == 0.0
        else:
            assert best.objective == pytest.approx(best_obj)
            assert grid.best == (best_key[0], best_key[1])

    def test_objective_bounds_property(self, rng):
        signs = make_records([central_mask(25)] * 3)
        for conf in (0.5, 33.3, 99.9):
            flip_set = {f"L{i}" for i in range(3) if rng.random() < 0.5}
            clf = FlipSomeSigns(flip_set, conf)
            best, _ = search(signs, ("black",), classifier=clf,
                             sizes=(20,), stride_pct=50)
            assert 0.0 <= best.objective <= 100.0
            if best.objective > 0:
                assert any(o.flipped for o in best.per_sign)

    def test_monotone_infeasibility(self, rng):
        for _ in range(5):
            x, y = int(rng.integers(0, 100)), int(rng.integers(0, 100))
            w, h = int(rng.integers(20, 140)), int(rng.integers(20, 140))
            signs = make_records([rect_mask(FRAME, x, y, w, h).bits] * 3)
            _, grid = search(signs, ("black",), classifier=NeverFlip(),
                             sizes=tuple(range(5, 55, 5)), stride_pct=10,
                             min_area_pct=0.0)
            for i, hh in enumerate(grid.heights):
                for j, ww in enumerate(grid.widths):
                    if grid.cells[i][j] == INFEASIBLE:
                        for i2 in range(i, len(grid.heights)):
                            for j2 in range(j, len(grid.widths)):
                                assert grid.cells[i2][j2] == INFEASIBLE


class TestPatterns:
    def test_pattern_colors(self):
        assert pattern_colors("black") == ("black",)
        assert pattern_colors("white_black") == ("white", "black")

    def test_unknown_pattern_rejected(self):
        with pytest.raises(InvalidInputError):
            pattern_colors("plaid")

    def test_placement_validation(self):
        with pytest.raises(InvalidInputError):
            CandidatePlacement(stickers=(), anchor=(0, 0))
        with pytest.raises(InvalidInputError):
            CandidatePlacement(stickers=(StickerSpec("black", 10, 10),),
                               anchor=(0, 101))
        with pytest.raises(InvalidInputError):
            StickerSpec("red", 10, 10)
