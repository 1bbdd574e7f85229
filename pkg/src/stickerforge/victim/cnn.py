"""Small traffic-sign CNN: architecture description, forward pass, trainer.

The default preset is three conv+pool stages followed by a single fully
connected layer. Inference runs through the kernel backend; training and the
float64 gradient-check mode use the batched NumPy path below.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .. import _kernels, imaging
from ..errors import InvalidInputError, ShapeError


@dataclass(frozen=True)
class ConvSpec:
    """One convolution stage: valid padding, ReLU, optional 2x2 max pool."""

    out_channels: int
    kernel_size: int
    stride: int = 1
    pool: bool = True


@dataclass(frozen=True)
class CnnArchitecture:
    input_size: int
    conv_layers: tuple[ConvSpec, ...]
    fc_units: int
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "conv_layers", tuple(self.conv_layers))
        if self.input_size < 1 or self.num_classes < 1 or self.fc_units < 0:
            raise InvalidInputError("invalid architecture dimensions")
        self.feature_shapes()  # fail fast if a stage collapses below 1x1

    def feature_shapes(self) -> list[tuple[int, int, int]]:
        """(channels, height, width) after each conv stage, input first."""
        shapes = [(3, self.input_size, self.input_size)]
        c, h, w = shapes[0]
        for layer in self.conv_layers:
            h = (h - layer.kernel_size) // layer.stride + 1
            w = (w - layer.kernel_size) // layer.stride + 1
            if layer.pool:
                h, w = h // 2, w // 2
            c = layer.out_channels
            if h < 1 or w < 1:
                raise InvalidInputError("feature map collapsed below 1x1")
            shapes.append((c, h, w))
        return shapes

    def flat_features(self) -> int:
        c, h, w = self.feature_shapes()[-1]
        return c * h * w

    def to_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "conv_layers": [
                {
                    "out_channels": l.out_channels,
                    "kernel_size": l.kernel_size,
                    "stride": l.stride,
                    "pool": l.pool,
                }
                for l in self.conv_layers
            ],
            "fc_units": self.fc_units,
            "num_classes": self.num_classes,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CnnArchitecture":
        layers = tuple(
            ConvSpec(
                out_channels=int(l["out_channels"]),
                kernel_size=int(l["kernel_size"]),
                stride=int(l["stride"]),
                pool=bool(l["pool"]),
            )
            for l in d["conv_layers"]
        )
        return cls(
            input_size=int(d["input_size"]),
            conv_layers=layers,
            fc_units=int(d["fc_units"]),
            num_classes=int(d["num_classes"]),
        )


def default_architecture(num_classes: int) -> CnnArchitecture:
    """Three conv layers + one fully connected layer on 32x32 RGB input."""
    return CnnArchitecture(
        input_size=32,
        conv_layers=(ConvSpec(16, 5), ConvSpec(32, 5), ConvSpec(64, 3)),
        fc_units=0,
        num_classes=num_classes,
    )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InvalidInputError("learning_rate must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidInputError("epochs and batch_size must be >= 1")


def param_manifest(arch: CnnArchitecture) -> list[tuple[str, tuple[int, ...]]]:
    """Ordered (name, shape) pairs; fixes serialization and init order."""
    names = []
    c_in = 3
    for i, layer in enumerate(arch.conv_layers, start=1):
        k = layer.kernel_size
        names.append((f"conv{i}.weight", (layer.out_channels, c_in, k, k)))
        names.append((f"conv{i}.bias", (layer.out_channels,)))
        c_in = layer.out_channels
    flat = arch.flat_features()
    if arch.fc_units > 0:
        names.append(("hidden.weight", (arch.fc_units, flat)))
        names.append(("hidden.bias", (arch.fc_units,)))
        flat = arch.fc_units
    names.append(("output.weight", (arch.num_classes, flat)))
    names.append(("output.bias", (arch.num_classes,)))
    return names


def init_params(arch: CnnArchitecture, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """He-uniform weights, zero biases, drawn in manifest order."""
    params = {}
    for name, shape in param_manifest(arch):
        if name.endswith(".bias"):
            params[name] = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = int(np.prod(shape[1:]))
            limit = float(np.sqrt(6.0 / fan_in))
            params[name] = rng.uniform(-limit, limit, size=shape).astype(np.float32)
    return params


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax in float64."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class ClassifierVerdict:
    label_id: int
    label_name: str
    confidence_pct: float
    probs: tuple[float, ...]


def verdict_from_probs(probs, class_names: Sequence[str]) -> ClassifierVerdict:
    """Build a verdict, enforcing the probability-vector invariants."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or len(p) < 1 or len(p) != len(class_names):
        raise InvalidInputError("probability vector does not match class names")
    if not np.isfinite(p).all() or (p < 0).any():
        raise InvalidInputError("probabilities must be finite and >= 0")
    if abs(float(p.sum()) - 1.0) > 1e-6:
        raise InvalidInputError(f"probabilities sum to {float(p.sum()):.8f}, not 1")
    label_id = int(np.argmax(p))
    return ClassifierVerdict(
        label_id=label_id,
        label_name=str(class_names[label_id]),
        confidence_pct=float(100.0 * p[label_id]),
        probs=tuple(float(v) for v in p),
    )


# --- single-image inference through the kernel backend ---


def forward_logits(params: Mapping[str, np.ndarray], arch: CnnArchitecture,
                   x: np.ndarray) -> np.ndarray:
    """Logits for one normalized CHW float32 image."""
    a = np.ascontiguousarray(x, dtype=np.float32)
    for i, layer in enumerate(arch.conv_layers, start=1):
        a = _kernels.conv2d_valid(
            a, params[f"conv{i}.weight"], params[f"conv{i}.bias"], layer.stride
        )
        np.maximum(a, 0.0, out=a)
        if layer.pool:
            a = _kernels.maxpool2(a)
    f = a.reshape(-1)
    if arch.fc_units > 0:
        f = np.maximum(params["hidden.weight"] @ f + params["hidden.bias"], 0.0)
    return params["output.weight"] @ f + params["output.bias"]


def normalize_image(img: imaging.PixelImage) -> np.ndarray:
    """uint8 HWC image -> CHW float32 in [0, 1] (divide by 255)."""
    return np.ascontiguousarray(
        img.pixels.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0)
    )


def forward(bundle, img: imaging.PixelImage) -> ClassifierVerdict:
    """Classify an image already at the architecture's input size."""
    arch = bundle.architecture
    if img.width != arch.input_size or img.height != arch.input_size:
        raise ShapeError(
            f"expected {arch.input_size}x{arch.input_size} input, got "
            f"{img.width}x{img.height}"
        )
    logits = forward_logits(bundle.tensors_dict(), arch, normalize_image(img))
    return verdict_from_probs(softmax(logits), bundle.class_names)


# --- batched NumPy path: training forward/backward ---


def _im2col(x: np.ndarray, k: int, stride: int):
    b, c = x.shape[0], x.shape[1]
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    oh, ow = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b, oh * ow, c * k * k)
    return np.ascontiguousarray(cols), oh, ow


def _col2im(dcols, x_shape, k, stride, oh, ow):
    b, c, h, w = x_shape
    dx = np.zeros(x_shape, dtype=dcols.dtype)
    d = dcols.reshape(b, oh, ow, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    for ky in range(k):
        for kx in range(k):
            dx[:, :, ky : ky + stride * oh : stride, kx : kx + stride * ow : stride] += d[
                :, :, ky, kx
            ]
    return dx


def _maxpool_fwd(x):
    b, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    grouped = (
        x[:, :, : h2 * 2, : w2 * 2]
        .reshape(b, c, h2, 2, w2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h2, w2, 4)
    )
    idx = grouped.argmax(axis=-1)
    out = np.take_along_axis(grouped, idx[..., None], axis=-1)[..., 0]
    return out, idx, (h, w)


def _maxpool_bwd(dout, idx, in_shape, dtype):
    b, c, h2, w2 = dout.shape
    h, w = in_shape
    buf = np.zeros((b, c, h2, w2, 4), dtype=dtype)
    np.put_along_axis(buf, idx[..., None], dout[..., None], axis=-1)
    dx = np.zeros((b, c, h, w), dtype=dtype)
    dx[:, :, : h2 * 2, : w2 * 2] = (
        buf.reshape(b, c, h2, w2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, h2 * 2, w2 * 2)
    )
    return dx


def batch_logits(params, arch, x, caches=None):
    """Batched forward over (b, 3, s, s) inputs; fills caches for backward."""
    a = x
    for i, layer in enumerate(arch.conv_layers, start=1):
        w = params[f"conv{i}.weight"]
        bvec = params[f"conv{i}.bias"]
        k = layer.kernel_size
        cols, oh, ow = _im2col(a, k, layer.stride)
        z = cols @ w.reshape(w.shape[0], -1).T + bvec
        z = z.transpose(0, 2, 1).reshape(a.shape[0], w.shape[0], oh, ow)
        r = np.maximum(z, 0.0)
        entry = {"x_shape": a.shape, "cols": cols, "z": z, "oh": oh, "ow": ow}
        if layer.pool:
            r, idx, in_hw = _maxpool_fwd(r)
            entry["pool_idx"] = idx
            entry["pool_in_hw"] = in_hw
        if caches is not None:
            caches.append(entry)
        a = r
    flat = a.reshape(a.shape[0], -1)
    if caches is not None:
        caches.append({"flat": flat})
    if arch.fc_units > 0:
        hpre = flat @ params["hidden.weight"].T + params["hidden.bias"]
        hact = np.maximum(hpre, 0.0)
        if caches is not None:
            caches[-1]["hpre"] = hpre
            caches[-1]["hact"] = hact
        flat = hact
    return flat @ params["output.weight"].T + params["output.bias"]


def loss_and_grads(params, arch, x, y, dtype=np.float32):
    """Mean cross-entropy loss and gradients for a labeled minibatch."""
    params = {k: np.asarray(v, dtype=dtype) for k, v in params.items()}
    x = np.asarray(x, dtype=dtype)
    caches: list[dict] = []
    logits = batch_logits(params, arch, x, caches)
    b = x.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)
    loss = float(-np.log(probs[np.arange(b), y]).mean())

    grads = {}
    dlogits = probs.copy()
    dlogits[np.arange(b), y] -= 1.0
    dlogits /= b
    dlogits = dlogits.astype(dtype)

    tail = caches.pop()
    flat = tail["flat"]
    if arch.fc_units > 0:
        hact = tail["hact"]
        grads["output.weight"] = dlogits.T @ hact
        grads["output.bias"] = dlogits.sum(axis=0)
        dh = (dlogits @ params["output.weight"]) * (tail["hpre"] > 0)
        grads["hidden.weight"] = dh.T @ flat
        grads["hidden.bias"] = dh.sum(axis=0)
        dflat = dh @ params["hidden.weight"]
    else:
        grads["output.weight"] = dlogits.T @ flat
        grads["output.bias"] = dlogits.sum(axis=0)
        dflat = dlogits @ params["output.weight"]

    c_out, h_out, w_out = arch.feature_shapes()[-1]
    da = dflat.reshape(b, c_out, h_out, w_out)
    for i in range(len(arch.conv_layers), 0, -1):
        layer = arch.conv_layers[i - 1]
        entry = caches.pop()
        if layer.pool:
            da = _maxpool_bwd(da, entry["pool_idx"], entry["pool_in_hw"], dtype)
        dz = da * (entry["z"] > 0)
        w = params[f"conv{i}.weight"]
        f = w.shape[0]
        dz_mat = dz.reshape(b, f, entry["oh"] * entry["ow"]).transpose(0, 2, 1)
        grads[f"conv{i}.weight"] = np.tensordot(
            dz_mat, entry["cols"], axes=([0, 1], [0, 1])
        ).reshape(w.shape)
        grads[f"conv{i}.bias"] = dz_mat.sum(axis=(0, 1))
        dcols = dz_mat @ w.reshape(f, -1)
        da = _col2im(dcols, entry["x_shape"], layer.kernel_size, layer.stride,
                     entry["oh"], entry["ow"])
    return loss, {k: np.asarray(v, dtype=dtype) for k, v in grads.items()}


def prepare_input(img: imaging.PixelImage, input_size: int) -> np.ndarray:
    return normalize_image(imaging.resize_image(img, input_size, input_size))


def train(
    images: Sequence[imaging.PixelImage],
    labels: Sequence[int],
    class_names: Sequence[str],
    arch: CnnArchitecture | None = None,
    cfg: TrainConfig = TrainConfig(),
):
    """Minibatch SGD with cross-entropy; deterministic for a fixed config.

    Returns a WeightBundle; import stays local to avoid a module cycle.
    """
    from .weights import WeightBundle

    if len(images) == 0:
        raise InvalidInputError("training set is empty")
    if len(images) != len(labels):
        raise InvalidInputError("images and labels differ in length")
    if arch is None:
        arch = default_architecture(len(class_names))
    y = np.asarray(labels, dtype=np.int64)
    if (y < 0).any() or (y >= arch.num_classes).any():
        raise InvalidInputError("label out of range for the architecture")
    if len(class_names) != arch.num_classes:
        raise InvalidInputError("class_names length != num_classes")

    rng = np.random.default_rng(cfg.seed)
    params = init_params(arch, rng)
    x = np.stack([prepare_input(img, arch.input_size) for img in images])
    n = len(x)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            _, grads = loss_and_grads(params, arch, x[sel], y[sel])
            for name in params:
                params[name] -= np.float32(cfg.learning_rate) * grads[name]
    return WeightBundle.create(arch, params, class_names)


def batch_predict_ids(bundle, images: Sequence[imaging.PixelImage]) -> np.ndarray:
    """Argmax label ids for many images at once (evaluation helper)."""
    arch = bundle.architecture
    x = np.stack([prepare_input(img, arch.input_size) for img in images])
    logits = batch_logits(bundle.tensors_dict(), arch, x)
    return logits.argmax(axis=1)


def accuracy(bundle, images: Sequence[imaging.PixelImage], labels: Sequence[int]) -> float:
    pred = batch_predict_ids(bundle, images)
    return float((pred == np.asarray(labels)).mean())
