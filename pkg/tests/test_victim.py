import math

import numpy as np
import pytest

from stickerforge.errors import InvalidInputError, ShapeError
from stickerforge.imaging import PixelImage
from stickerforge.victim import cnn
from stickerforge.victim.cnn import (
    ClassifierVerdict,
    CnnArchitecture,
    ConvSpec,
    TrainConfig,
    default_architecture,
    forward,
    init_params,
    loss_and_grads,
    param_manifest,
    softmax,
    train,
    verdict_from_probs,
)
from stickerforge.victim.weights import WeightBundle

from conftest import solid_image


def micro_arch(**overrides):
    base = dict(
        input_size=6,
        conv_layers=(ConvSpec(2, 3, stride=1, pool=True),),
        fc_units=0,
        num_classes=3,
    )
    base.update(overrides)
    return CnnArchitecture(**base)


def zero_bundle(arch, class_names):
    params = {name: np.zeros(shape, dtype=np.float32)
              for name, shape in param_manifest(arch)}
    return WeightBundle.create(arch, params, class_names)


class TestSoftmax:
    def test_sums_to_one_on_random_logits(self, rng):
        for _ in range(1000):
            logits = rng.standard_normal(int(rng.integers(2, 20))) * 10
            assert abs(softmax(logits).sum() - 1.0) <= 1e-6

    def test_shift_invariant(self, rng):
        logits = rng.standard_normal(8)
        np.testing.assert_allclose(softmax(logits), softmax(logits + 123.0),
                                   rtol=0, atol=1e-12)


class TestVerdict:
    def test_argmax_and_confidence(self):
        v = verdict_from_probs([0.1, 0.6, 0.3], ["a", "b", "c"])
        assert (v.label_id, v.label_name) == (1, "b")
        assert v.confidence_pct == pytest.approx(60.0)

    def test_tie_breaks_to_lowest_index(self):
        v = verdict_from_probs([0.4, 0.4, 0.2], ["a", "b", "c"])
        assert v.label_id == 0

    def test_rejects_bad_vectors(self):
        with pytest.raises(InvalidInputError):
            verdict_from_probs([0.5, 0.3], ["a", "b"])  # sums to 0.8
        with pytest.raises(InvalidInputError):
            verdict_from_probs([1.2, -0.2], ["a", "b"])  # negative entry
        with pytest.raises(InvalidInputError):
            verdict_from_probs([0.5, 0.5], ["a"])  # length mismatch


class TestForward:
    def test_zero_weights_give_uniform_probs_label_zero(self, rng):
        arch = default_architecture(5)
        bundle = zero_bundle(arch, ["a", "b", "c", "d", "e"])
        img = PixelImage(rng.integers(0, 256, (32, 32, 3), dtype=np.uint8))
        v = forward(bundle, img)
        assert v.label_id == 0
        np.testing.assert_allclose(v.probs, [0.2] * 5, atol=1e-12)

    def test_bias_shift_leaves_probs_unchanged(self, rng):
        arch = micro_arch()
        params = init_params(arch, np.random.default_rng(7))
        bundle = WeightBundle.create(arch, params, ["a", "b", "c"])
        shifted = dict(params)
        shifted["output.bias"] = params["output.bias"] + np.float32(3.5)
        bundle2 = WeightBundle.create(arch, shifted, ["a", "b", "c"])
        img = PixelImage(rng.integers(0, 256, (6, 6, 3), dtype=np.uint8))
        v1, v2 = forward(bundle, img), forward(bundle2, img)
        assert v1.label_id == v2.label_id
        np.testing.assert_allclose(v1.probs, v2.probs, atol=1e-6)

    def test_hand_evaluated_forward_pass(self):
        # 1x1 identity conv (channel passthrough, no pool) into a 2-class FC
        arch = CnnArchitecture(
            input_size=2,
            conv_layers=(ConvSpec(3, 1, stride=1, pool=False),),
            fc_units=0,
            num_classes=2,
        )
        conv_w = np.zeros((3, 3, 1, 1), dtype=np.float32)
        for c in range(3):
            conv_w[c, c, 0, 0] = 1.0
        fc_w = np.array(
            [
                [0.1, -0.2, 0.3, -0.4, 0.5, -0.6, 0.7, -0.8, 0.9, -1.0, 1.1, -1.2],
                [-0.3, 0.4, -0.5, 0.6, -0.7, 0.8, -0.9, 1.0, -1.1, 1.2, -1.3, 1.4],
            ],
            dtype=np.float32,
        )
        fc_b = np.array([0.05, -0.05], dtype=np.float32)
        params = {
            "conv1.weight": conv_w,
            "conv1.bias": np.zeros(3, dtype=np.float32),
            "output.weight": fc_w,
            "output.bias": fc_b,
        }
        bundle = WeightBundle.create(arch, params, ["a", "b"])
        pixels = np.array(
            [[[10, 20, 30], [40, 50, 60]], [[70, 80, 90], [120, 130, 140]]],
            dtype=np.uint8,
        )
        v = forward(bundle, PixelImage(pixels))

        # oracle: scalar arithmetic straight from the definitions
        feats = []
        for c in range(3):  # CHW flatten order
            for row in range(2):
                for col in range(2):
                    feats.append(pixels[row, col, c] / 255.0)
        logits = []
        for k in range(2):
            acc = float(fc_b[k])
            for i, f in enumerate(feats):
                acc += float(fc_w[k, i]) * f
            logits.append(acc)
        m = max(logits)
        exps = [math.exp(l - m) for l in logits]
        expected = [e / sum(exps) for e in exps]

        np.testing.assert_allclose(v.probs, expected, rtol=1e-5, atol=1e-7)
        assert v.label_id == int(np.argmax(expected))

    def test_wrong_input_size_rejected(self, rng):
        arch = micro_arch()
        bundle = zero_bundle(arch, ["a", "b", "c"])
        img = PixelImage(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8))
        with pytest.raises(ShapeError):
            forward(bundle, img)

    def test_repeated_calls_bit_identical(self, rng):
        arch = micro_arch()
        params = init_params(arch, np.random.default_rng(3))
        bundle = WeightBundle.create(arch, params, ["a", "b", "c"])
        img = PixelImage(rng.integers(0, 256, (6, 6, 3), dtype=np.uint8))
        first = forward(bundle, img)
        for _ in range(5):
            assert forward(bundle, img).probs == first.probs


class TestArchitecture:
    def test_collapsed_feature_map_rejected(self):
        with pytest.raises(InvalidInputError):
            CnnArchitecture(input_size=4,
                            conv_layers=(ConvSpec(4, 5, stride=1, pool=True),),
                            fc_units=0, num_classes=2)

    def test_default_preset_is_three_conv_one_fc(self):
        arch = default_architecture(16)
        assert len(arch.conv_layers) == 3
        assert arch.fc_units == 0  # single FC layer straight to the classes
        assert arch.input_size == 32
        names = [n for n, _ in param_manifest(arch)]
        assert names == [
            "conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias",
            "conv3.weight", "conv3.bias", "output.weight", "output.bias",
        ]

    def test_roundtrips_through_dict(self):
        arch = default_architecture(7)
        assert CnnArchitecture.from_dict(arch.to_dict()) == arch


class TestTrain:
    def _toy_set(self):
        images = [solid_image(6, 6, (0, 0, 0)) for _ in range(8)]
        images += [solid_image(6, 6, (255, 255, 255)) for _ in range(8)]
        labels = [0] * 8 + [1] * 8
        return images, labels

    def test_separable_toy_set_reaches_99pct(self):
        images, labels = self._toy_set()
        arch = micro_arch(num_classes=2)
        bundle = train(images, labels, ["dark", "bright"], arch=arch,
                       cfg=TrainConfig(epochs=5, seed=1))
        assert cnn.accuracy(bundle, images, labels) >= 0.99

    def test_same_seed_bit_identical(self):
        images, labels = self._toy_set()
        arch = micro_arch(num_classes=2)
        cfg = TrainConfig(epochs=2, seed=42)
        b1 = train(images, labels, ["dark", "bright"], arch=arch, cfg=cfg)
        b2 = train(images, labels, ["dark", "bright"], arch=arch, cfg=cfg)
        assert b1.checksum == b2.checksum
        for (n1, t1), (n2, t2) in zip(b1.tensors, b2.tensors):
            assert n1 == n2
            assert t1.tobytes() == t2.tobytes()

    def test_empty_dataset_rejected(self):
        with pytest.raises(InvalidInputError):
            train([], [], ["a", "b"], arch=micro_arch(num_classes=2))

    def test_label_out_of_range_rejected(self):
        images, _ = self._toy_set()
        with pytest.raises(InvalidInputError):
            train(images, [0] * 15 + [5], ["a", "b"],
                  arch=micro_arch(num_classes=2))

    def test_bad_config_rejected(self):
        with pytest.raises(InvalidInputError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(InvalidInputError):
            TrainConfig(epochs=0)


def fd_gradients(params, arch, x, y, step=1e-5):
    """Central finite differences over every parameter, float64."""
    grads = {}
    for name in params:
        flat = params[name].astype(np.float64).ravel()
        g = np.zeros_like(flat)
        for i in range(flat.size):
            for sign in (+1, -1):
                trial = {k: v.astype(np.float64).copy() for k, v in params.items()}
                tflat = trial[name].ravel()
                tflat[i] += sign * step
                loss, _ = loss_and_grads(trial, arch, x, y, dtype=np.float64)
                g[i] += sign * loss
            g[i] /= 2 * step
        grads[name] = g.reshape(params[name].shape)
    return grads


GRAD_CHECK_ARCHES = [
    micro_arch(),
    micro_arch(conv_layers=(ConvSpec(2, 3, stride=2, pool=False),)),
    micro_arch(fc_units=5),
    micro_arch(input_size=8,
               conv_layers=(ConvSpec(2, 3, pool=True), ConvSpec(3, 2, pool=False))),
]


@pytest.mark.parametrize("arch", GRAD_CHECK_ARCHES)
def test_analytic_gradients_match_finite_differences(arch):
    rng = np.random.default_rng(17)
    n_params = sum(int(np.prod(s)) for _, s in param_manifest(arch))
    assert n_params <= 500
    params = {k: v.astype(np.float64) for k, v in init_params(arch, rng).items()}
    x = rng.uniform(0, 1, size=(4, 3, arch.input_size, arch.input_size))
    y = rng.integers(0, arch.num_classes, size=4)
    _, analytic = loss_and_grads(params, arch, x, y, dtype=np.float64)
    numeric = fd_gradients(params, arch, x, y)
    worst = 0.0
    for name in params:
        a, n = analytic[name].ravel(), numeric[name].ravel()
        rel = np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1e-8)
        worst = max(worst, float(rel.max()))
    assert worst < 1e-4
