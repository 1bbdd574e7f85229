"""Portable weight files: JSON header + little-endian float32 payload + checksum.

Layout: magic ``STWB``, u32 header length, UTF-8 JSON header, raw payload
(tensors concatenated in manifest order), trailing u64 FNV-1a checksum of the
payload. The header records format version, architecture, class names, tensor
manifest, and the input normalization, so files are self-describing.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..errors import (
    CorruptWeightsError,
    InvalidInputError,
    UnsupportedVersionError,
    WeightFormatError,
)
from .cnn import CnnArchitecture, param_manifest

MAGIC = b"STWB"
FORMAT_VERSION = 1
NORMALIZATION = "divide_255"

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a over a byte string."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class WeightBundle:
    """Architecture plus ordered named float32 tensors and class names."""

    architecture: CnnArchitecture
    tensors: tuple[tuple[str, np.ndarray], ...]
    class_names: tuple[str, ...]
    checksum: int

    def tensors_dict(self) -> dict[str, np.ndarray]:
        return dict(self.tensors)

    def payload(self) -> bytes:
        return b"".join(arr.astype("<f4").tobytes() for _, arr in self.tensors)

    @classmethod
    def create(
        cls,
        arch: CnnArchitecture,
        params: Mapping[str, np.ndarray],
        class_names: Sequence[str],
    ) -> "WeightBundle":
        if len(class_names) != arch.num_classes:
            raise InvalidInputError("class_names length != num_classes")
        tensors = []
        for name, shape in param_manifest(arch):
            if name not in params:
                raise InvalidInputError(f"missing tensor {name}")
            arr = np.ascontiguousarray(params[name], dtype=np.float32)
            if arr.shape != shape:
                raise InvalidInputError(
                    f"tensor {name} has shape {arr.shape}, expected {shape}"
                )
            tensors.append((name, arr))
        bundle = cls(
            architecture=arch,
            tensors=tuple(tensors),
            class_names=tuple(str(c) for c in class_names),
            checksum=0,
        )
        object.__setattr__(bundle, "checksum", fnv1a64(bundle.payload()))
        return bundle


def save_weights(bundle: WeightBundle, path) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "architecture": bundle.architecture.to_dict(),
        "class_names": list(bundle.class_names),
        "normalization": NORMALIZATION,
        "tensors": [
            {"name": name, "shape": list(arr.shape)} for name, arr in bundle.tensors
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = bundle.payload()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)
        fh.write(struct.pack("<Q", fnv1a64(payload)))


def load_weights(path) -> WeightBundle:
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 4 or blob[: len(MAGIC)] != MAGIC:
        raise WeightFormatError(f"{path}: not a weight file (bad magic)")
    (header_len,) = struct.unpack_from("<I", blob, len(MAGIC))
    header_start = len(MAGIC) + 4
    header_end = header_start + header_len
    if header_end + 8 > len(blob):
        raise WeightFormatError(f"{path}: truncated header")
    try:
        header = json.loads(blob[header_start:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightFormatError(f"{path}: unreadable header: {exc}") from exc

    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: unknown format version {version!r}")
    try:
        arch = CnnArchitecture.from_dict(header["architecture"])
        class_names = tuple(str(c) for c in header["class_names"])
        manifest = [(str(t["name"]), tuple(int(v) for v in t["shape"]))
                    for t in header["tensors"]]
    except (KeyError, TypeError, ValueError, InvalidInputError) as exc:
        raise WeightFormatError(f"{path}: malformed header: {exc}") from exc

    if manifest != [(n, tuple(s)) for n, s in param_manifest(arch)]:
        raise WeightFormatError(f"{path}: tensor manifest does not match architecture")
    if len(class_names) != arch.num_classes:
        raise WeightFormatError(f"{path}: class_names length != num_classes")

    expected_payload = sum(int(np.prod(shape)) * 4 for _, shape in manifest)
    payload = blob[header_end:-8]
    if len(payload) != expected_payload:
        raise WeightFormatError(
            f"{path}: payload is {len(payload)} bytes, manifest requires "
            f"{expected_payload}"
        )
    (stored_checksum,) = struct.unpack_from("<Q", blob, len(blob) - 8)
    actual = fnv1a64(payload)
    if actual != stored_checksum:
        raise CorruptWeightsError(
            f"{path}: checksum mismatch (stored {stored_checksum:#018x}, "
            f"computed {actual:#018x})"
        )

    tensors = []
    offset = 0
    for name, shape in manifest:
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        tensors.append((name, arr.reshape(shape).astype(np.float32)))
        offset += count * 4
    return WeightBundle(
        architecture=arch,
        tensors=tuple(tensors),
        class_names=class_names,
        checksum=stored_checksum,
    )
