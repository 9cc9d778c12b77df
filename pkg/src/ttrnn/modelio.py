"""Versioned binary container for trained models and TT matrices.

Layout: 4-byte magic, u32 little-endian manifest length, UTF-8 JSON
manifest (canonical: sorted keys, compact separators), u64 little-endian
float64 count, the raw little-endian float64 blob of every weight in the
order the manifest declares, and a trailing CRC-32 over all preceding
bytes.  The manifest embeds the vocabulary (with its own CRC-32) so a
model file is self-contained for prediction; floats round-trip bitwise.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .autodiff import Variable
from .cells import CellSpec, CellWeights, weight_templates
from .errors import ChecksumMismatch, FormatVersionMismatch, ParseError, ShapeMismatch
from .tensor import DenseTensor
from .textpipe import Vocabulary
from .ttcore import ModeFactorization, TTMatrix

MAGIC = b"TTRN"
FORMAT_VERSION = 1


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode(
        "utf-8"
    )


def vocab_crc32(vocab: Vocabulary) -> int:
    return zlib.crc32(_canonical_json(vocab.to_dict()))


def _write_container(path: str, manifest: dict, arrays) -> None:
    payload = _canonical_json(manifest)
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    count = sum(a.size for a in arrays)
    body = (
        MAGIC
        + struct.pack("<I", len(payload))
        + payload
        + struct.pack("<Q", count)
        + blob
    )
    with open(path, "wb") as f:
        f.write(body + struct.pack("<I", zlib.crc32(body)))


def _read_container(path: str):
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 12 or data[:4] != MAGIC:
        raise ChecksumMismatch("%s is not a model container (bad header)" % path)
    if zlib.crc32(data[:-4]) != struct.unpack("<I", data[-4:])[0]:
        raise ChecksumMismatch("%s failed its integrity check" % path)
    offset = 4
    (manifest_len,) = struct.unpack_from("<I", data, offset)
    offset += 4
    manifest = json.loads(data[offset : offset + manifest_len].decode("utf-8"))
    offset += manifest_len
    (count,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    flat = np.frombuffer(data, dtype="<f8", count=count, offset=offset)

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(found=version, supported=FORMAT_VERSION)

    arrays = []
    pos = 0
    for entry in manifest["weights"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape, dtype=np.int64))
        if pos + n > flat.size:
            raise ChecksumMismatch("weight blob shorter than the manifest declares")
        arrays.append(flat[pos : pos + n].reshape(shape).copy())
        pos += n
    if pos != flat.size:
        raise ChecksumMismatch("weight blob longer than the manifest declares")
    return manifest, arrays


@dataclass
class ModelBundle:
    """A trained model plus everything needed to run it on raw text."""

    spec: CellSpec
    weights: CellWeights
    vocab: Vocabulary
    task: str
    labels: tuple
    max_len: int
    train_config: dict | None = None
    metrics: dict | None = None
    split: dict | None = None

    def manifest(self) -> dict:
        m = {
            "format_version": FORMAT_VERSION,
            "kind": "model",
            "cell": self.spec.to_dict(),
            "task": self.task,
            "labels": list(self.labels),
            "max_len": self.max_len,
            "vocab": self.vocab.to_dict(),
            "vocab_crc32": vocab_crc32(self.vocab),
            "weights": [
                {"name": name, "shape": list(shape)}
                for name, shape in weight_templates(self.spec)
            ],
        }
        if self.train_config is not None:
            m["train_config"] = self.train_config
        if self.metrics is not None:
            m["metrics"] = self.metrics
        if self.split is not None:
            m["split"] = self.split
        return m


def save_model(bundle: ModelBundle, path: str) -> None:
    arrays = [v.value.array for v in bundle.weights.params()]
    _write_container(path, bundle.manifest(), arrays)


def load_model(path: str) -> ModelBundle:
    manifest, arrays = _read_container(path)
    if manifest.get("kind") != "model":
        raise ChecksumMismatch("%s holds a %r, not a model" % (path, manifest.get("kind")))
    spec = CellSpec.from_dict(manifest["cell"])
    expected = weight_templates(spec)
    declared = [(e["name"], tuple(e["shape"])) for e in manifest["weights"]]
    if declared != expected:
        raise ChecksumMismatch("weight list does not match the declared cell")
    vocab = Vocabulary.from_dict(manifest["vocab"])
    if vocab_crc32(vocab) != manifest["vocab_crc32"]:
        raise ChecksumMismatch("vocabulary failed its integrity check")
    values = {
        name: Variable(DenseTensor(arr)) for (name, _), arr in zip(expected, arrays)
    }
    return ModelBundle(
        spec=spec,
        weights=CellWeights(spec, values),
        vocab=vocab,
        task=manifest["task"],
        labels=tuple(manifest["labels"]),
        max_len=int(manifest["max_len"]),
        train_config=manifest.get("train_config"),
        metrics=manifest.get("metrics"),
        split=manifest.get("split"),
    )


def save_ttmatrix(tt: TTMatrix, path: str, extra: dict | None = None) -> None:
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": "ttmatrix",
        "tt": {
            "out_modes": list(tt.facto.out_modes),
            "in_modes": list(tt.facto.in_modes),
            "ranks": list(tt.ranks),
        },
        "weights": [
            {"name": "core%d" % k, "shape": list(core.shape)}
            for k, core in enumerate(tt.cores)
        ],
    }
    if extra:
        manifest.update(extra)
    _write_container(path, manifest, [c.array for c in tt.cores])


def load_ttmatrix(path: str):
    manifest, arrays = _read_container(path)
    if manifest.get("kind") != "ttmatrix":
        raise ChecksumMismatch(
            "%s holds a %r, not a ttmatrix" % (path, manifest.get("kind"))
        )
    info = manifest["tt"]
    facto = ModeFactorization(tuple(info["out_modes"]), tuple(info["in_modes"]))
    tt = TTMatrix(
        facto,
        tuple(info["ranks"]),
        tuple(DenseTensor(a) for a in arrays),
    )
    return tt, manifest


def load_matrix_csv(path: str) -> DenseTensor:
    """Plain numeric CSV, one matrix row per line."""
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as e:
        raise ParseError("could not parse %s as a numeric CSV matrix: %s" % (path, e))
    return DenseTensor(arr)
