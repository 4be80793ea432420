"""Bit-exact container for named matrices plus the model manifest.

File layout: 8 magic bytes, a little-endian u64 header length, a UTF-8 JSON
header mapping each tensor name to ``{dtype, shape, byte_offset, byte_len}``,
then the raw payload (little-endian, row-major). Offsets are relative to the
start of the payload. Only ``f32`` and ``f64`` matrices are stored; matrices
come back as float64 (float32 values convert exactly).
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ManifestError, TensorFormatError

MAGIC = b"OBSLIMV1"

_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}
_TAG_FOR = {np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}


def write_tensor_file(tensors: dict, path) -> None:
    """Write a name -> matrix map; round-trips bit-exactly through read_tensor_file.

    Matrices must be 2-D, finite, and float32 or float64 (the dtype is
    preserved on disk).
    """
    entries = {}
    chunks = []
    offset = 0
    for name, value in tensors.items():
        if not isinstance(name, str) or not name:
            raise TensorFormatError(f"tensor name must be a non-empty string, got {name!r}")
        arr = np.asarray(value)
        tag = _TAG_FOR.get(arr.dtype)
        if tag is None:
            raise TensorFormatError(f"{name}: unsupported dtype {arr.dtype}, expected f32/f64")
        if arr.ndim != 2:
            raise TensorFormatError(f"{name}: expected a 2-D matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise TensorFormatError(f"{name}: non-finite values rejected")
        data = np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes()
        entries[name] = {
            "dtype": tag,
            "shape": [int(arr.shape[0]), int(arr.shape[1])],
            "byte_offset": offset,
            "byte_len": len(data),
        }
        chunks.append(data)
        offset += len(data)
    header = json.dumps(entries, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for chunk in chunks:
            fh.write(chunk)


def _parse_header(raw: bytes) -> dict:
    def reject_duplicates(pairs):
        out = {}
        for key, val in pairs:
            if key in out:
                raise TensorFormatError(f"duplicate tensor name {key!r} in header")
            out[key] = val
        return out

    try:
        header = json.loads(raw.decode("utf-8"), object_pairs_hook=reject_duplicates)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TensorFormatError(f"header is not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise TensorFormatError("header must be a JSON object")
    return header


def read_tensor_file(path) -> dict:
    """Read a container back into a name -> float64 matrix map.

    Raises:
        TensorFormatError: bad magic, malformed header, unknown dtype, or
            payload bounds violations (overlap, overflow, length mismatch).
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise TensorFormatError(f"bad magic: expected {MAGIC!r}")
    if len(blob) < len(MAGIC) + 8:
        raise TensorFormatError("file truncated before header length")
    (header_len,) = struct.unpack_from("<Q", blob, len(MAGIC))
    header_end = len(MAGIC) + 8 + header_len
    if header_end > len(blob):
        raise TensorFormatError("header length exceeds file size")
    header = _parse_header(blob[len(MAGIC) + 8 : header_end])
    payload = blob[header_end:]

    tensors = {}
    extents = []
    for name, entry in header.items():
        try:
            tag = entry["dtype"]
            rows, cols = (int(v) for v in entry["shape"])
            off = int(entry["byte_offset"])
            length = int(entry["byte_len"])
        except (KeyError, TypeError, ValueError) as exc:
            raise TensorFormatError(f"{name}: malformed header entry ({exc})") from exc
        dtype = _DTYPES.get(tag)
        if dtype is None:
            raise TensorFormatError(f"{name}: unknown dtype {tag!r}")
        if rows < 0 or cols < 0:
            raise TensorFormatError(f"{name}: negative shape {rows}x{cols}")
        if rows * cols * dtype.itemsize != length:
            raise TensorFormatError(
                f"{name}: byte_len {length} inconsistent with shape {rows}x{cols} ({tag})"
            )
        if off < 0 or off + length > len(payload):
            raise TensorFormatError(f"{name}: payload bounds exceeded")
        extents.append((off, off + length, name))
        arr = np.frombuffer(payload, dtype=dtype, count=rows * cols, offset=off)
        tensors[name] = arr.reshape(rows, cols).astype(np.float64)
    extents.sort()
    for (_, prev_end, prev_name), (start, _, name) in zip(extents, extents[1:]):
        if start < prev_end:
            raise TensorFormatError(f"overlapping payload: {prev_name!r} and {name!r}")
    return tensors


@dataclass
class LayerEntry:
    """One layer of the manifest: anchor tensors, coupled tensors, head layout."""

    attn_out: str
    attn_coupled: list
    ffn_down: str
    ffn_coupled: list
    n_head: int
    d_head: int
    activations: dict | None = None  # optional {"attn": name, "ffn": name}

    def to_dict(self) -> dict:
        out = {
            "attn_out": self.attn_out,
            "attn_coupled": list(self.attn_coupled),
            "ffn_down": self.ffn_down,
            "ffn_coupled": list(self.ffn_coupled),
            "head_layout": [self.n_head, self.d_head],
        }
        if self.activations is not None:
            out["activations"] = dict(self.activations)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "LayerEntry":
        try:
            n_head, d_head = (int(v) for v in data["head_layout"])
            return cls(
                attn_out=data["attn_out"],
                attn_coupled=list(data["attn_coupled"]),
                ffn_down=data["ffn_down"],
                ffn_coupled=list(data["ffn_coupled"]),
                n_head=n_head,
                d_head=d_head,
                activations=dict(data["activations"]) if "activations" in data else None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"malformed layer entry: {exc}") from exc


@dataclass
class ModelManifest:
    """Describes which tensors form each layer and how they are coupled.

    The attention anchor's columns (``attn_out``) are one-to-one with the
    rows of every tensor in ``attn_coupled``; likewise for ``ffn_down`` and
    ``ffn_coupled``.
    """

    n_layers: int
    layers: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {"n_layers": self.n_layers, "layers": [e.to_dict() for e in self.layers]},
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "ModelManifest":
        try:
            data = json.loads(text)
            manifest = cls(
                n_layers=int(data["n_layers"]),
                layers=[LayerEntry.from_dict(e) for e in data["layers"]],
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise ManifestError(f"malformed manifest: {exc}") from exc
        return manifest

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ModelManifest":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def validate_manifest(manifest: ModelManifest, tensors: dict) -> None:
    """Check layer structure against the actual tensor shapes.

    Raises:
        ManifestError: missing tensors, head layout not matching the anchor
            width, or a coupled tensor whose rows mismatch the anchor columns.
    """
    if manifest.n_layers != len(manifest.layers):
        raise ManifestError(
            f"n_layers {manifest.n_layers} != layer entries {len(manifest.layers)}"
        )
    for idx, entry in enumerate(manifest.layers):
        def shape_of(name):
            if name not in tensors:
                raise ManifestError(f"layer {idx}: tensor {name!r} missing")
            return tensors[name].shape

        attn_cols = shape_of(entry.attn_out)[1]
        if attn_cols != entry.n_head * entry.d_head:
            raise ManifestError(
                f"layer {idx}: attn_out has {attn_cols} columns, "
                f"head layout implies {entry.n_head * entry.d_head}"
            )
        for name in entry.attn_coupled:
            rows = shape_of(name)[0]
            if rows != attn_cols:
                raise ManifestError(
                    f"layer {idx}: coupled tensor {name!r} has {rows} rows, "
                    f"anchor {entry.attn_out!r} has {attn_cols} columns"
                )
        ffn_cols = shape_of(entry.ffn_down)[1]
        for name in entry.ffn_coupled:
            rows = shape_of(name)[0]
            if rows != ffn_cols:
                raise ManifestError(
                    f"layer {idx}: coupled tensor {name!r} has {rows} rows, "
                    f"anchor {entry.ffn_down!r} has {ffn_cols} columns"
                )
