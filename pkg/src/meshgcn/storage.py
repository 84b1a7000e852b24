"""Dataset and checkpoint files.

Dataset file layout::

    MESHGCN-DATASET 1\\n
    <one-line JSON header: format_version, count, feature_width, config, seed>\\n
    record * count

    record   := u32 payload_length | payload | u32 crc32(payload)
    payload  := u64 id | u32 num_nodes | u32 num_edges | u8 has_positions
                | f64 target | u32 meta_length | meta (UTF-8 JSON)
                | f64[num_nodes * F] features
                | u32[num_edges * 2] edges (directed (src, dst) pairs)
                | f64[num_nodes * 2] positions (if has_positions)

Checkpoint file layout::

    MESHGCN-CHECKPOINT 1\\n
    <one-line JSON header: config, seed, target scaling, tensor table>\\n
    f64 little-endian tensor data concatenated in table order
    u32 crc32 of the tensor data

All integers and floats are little-endian. Writers go through a temporary
file and an atomic rename; on failure a ``<path>.FAILED`` marker is left
instead of a partial file.
"""

from __future__ import annotations

import contextlib
import json
import os
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .graph import Graph, build_graph

DATASET_MAGIC = b"MESHGCN-DATASET 1\n"
CHECKPOINT_MAGIC = b"MESHGCN-CHECKPOINT 1\n"
FORMAT_VERSION = 1

_REC_HEAD = struct.Struct("<QIIBdI")


class FormatError(ValueError):
    pass


class ChecksumError(FormatError):
    def __init__(self, record_index: int, record_id=None):
        who = f"record {record_index}" + (f" (id {record_id})" if record_id is not None else "")
        super().__init__(f"checksum mismatch in {who}")
        self.record_index = record_index
        self.record_id = record_id


@dataclass
class Record:
    id: int
    graph: Graph
    target: float
    metadata: dict = field(default_factory=dict)

    def __eq__(self, other):
        return (
            isinstance(other, Record)
            and self.id == other.id
            and self.graph == other.graph
            and self.target == other.target
            and self.metadata == other.metadata
        )


class Dataset:
    """Ordered collection of (graph, target) records."""

    def __init__(self, records, header: dict | None = None):
        self.records: list[Record] = list(records)
        self.header = dict(header or {})

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other):
        return isinstance(other, Dataset) and self.records == other.records

    @property
    def graphs(self) -> list[Graph]:
        return [r.graph for r in self.records]

    @property
    def targets(self) -> np.ndarray:
        return np.array([r.target for r in self.records], dtype=np.float64)

    def subset(self, indices) -> Dataset:
        return Dataset([self.records[int(i)] for i in indices], self.header)

    @property
    def feature_width(self) -> int:
        return self.records[0].graph.num_features if self.records else 0


# ---------------------------------------------------------------- atomic writes


@contextlib.contextmanager
def atomic_write(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    marker = path.with_name(path.name + ".FAILED")
    if marker.exists():
        marker.unlink()
    try:
        with open(tmp, "wb") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException as exc:
        with contextlib.suppress(FileNotFoundError):
            tmp.unlink()
        marker.write_text(f"{type(exc).__name__}: {exc}\n")
        raise


def _json_line(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode()


# ---------------------------------------------------------------- datasets


def encode_record(rec: Record) -> bytes:
    g = rec.graph
    meta = json.dumps(rec.metadata, sort_keys=True, separators=(",", ":")).encode()
    has_pos = g.positions is not None
    parts = [
        _REC_HEAD.pack(rec.id, g.num_nodes, g.num_edges, int(has_pos), float(rec.target), len(meta)),
        meta,
        np.ascontiguousarray(g.features, dtype="<f8").tobytes(),
        np.ascontiguousarray(g.edges, dtype="<u4").tobytes(),
    ]
    if has_pos:
        parts.append(np.ascontiguousarray(g.positions, dtype="<f8").tobytes())
    payload = b"".join(parts)
    return struct.pack("<I", len(payload)) + payload + struct.pack("<I", zlib.crc32(payload))


def decode_record(payload: bytes, feature_width: int) -> Record:
    rid, n, e, has_pos, target, mlen = _REC_HEAD.unpack_from(payload, 0)
    off = _REC_HEAD.size
    meta = json.loads(payload[off:off + mlen].decode())
    off += mlen
    expected = off + 8 * n * feature_width + 8 * e + (16 * n if has_pos else 0)
    if expected != len(payload):
        raise FormatError(f"record id {rid}: declared counts do not match payload length")
    feats = np.frombuffer(payload, "<f8", n * feature_width, off).reshape(n, feature_width)
    off += 8 * n * feature_width
    edges = np.frombuffer(payload, "<u4", 2 * e, off).reshape(e, 2).astype(np.int64)
    off += 8 * e
    pos = np.frombuffer(payload, "<f8", 2 * n, off).reshape(n, 2).copy() if has_pos else None
    g = build_graph(feats, edges, pos)
    if not np.array_equal(g.edges, edges):
        raise FormatError(f"record id {rid}: edge list is not canonical")
    return Record(int(rid), g, float(target), meta)


def dataset_header(count: int, feature_width: int, config=None, seed=None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "count": count,
        "feature_width": feature_width,
        "config": config or {},
        "seed": seed,
    }


def write_dataset(path, records, header: dict):
    """Stream ``records`` (any iterable) to ``path``; ``header['count']`` must match."""
    written = 0
    with atomic_write(path) as fh:
        fh.write(DATASET_MAGIC)
        fh.write(_json_line(header))
        for rec in records:
            if rec.graph.num_features != header["feature_width"]:
                raise FormatError(f"record {rec.id} has feature width {rec.graph.num_features}")
            fh.write(encode_record(rec))
            written += 1
        if written != header["count"]:
            raise FormatError(f"header declares {header['count']} records, wrote {written}")


def save_dataset(path, dataset: Dataset, config=None, seed=None):
    header = dataset_header(len(dataset), dataset.feature_width, config, seed)
    write_dataset(path, dataset.records, header)


def read_dataset(path) -> Dataset:
    data = Path(path).read_bytes()
    if not data.startswith(DATASET_MAGIC):
        raise FormatError(f"{path}: not a dataset file")
    off = len(DATASET_MAGIC)
    nl = data.index(b"\n", off)
    header = json.loads(data[off:nl].decode())
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported dataset format version {header.get('format_version')}")
    off = nl + 1
    width = int(header["feature_width"])
    records = []
    for k in range(int(header["count"])):
        if off + 4 > len(data):
            raise FormatError(f"truncated file at record {k}")
        (plen,) = struct.unpack_from("<I", data, off)
        payload = data[off + 4:off + 4 + plen]
        if len(payload) != plen or off + 8 + plen > len(data):
            raise FormatError(f"truncated file at record {k}")
        (crc,) = struct.unpack_from("<I", data, off + 4 + plen)
        if zlib.crc32(payload) != crc:
            rid = struct.unpack_from("<Q", payload, 0)[0] if plen >= 8 else None
            raise ChecksumError(k, rid)
        records.append(decode_record(payload, width))
        off += 8 + plen
    if off != len(data):
        raise FormatError("trailing bytes after the last record")
    return Dataset(records, header)


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(path, params, extra: dict | None = None):
    """Write every parameter tensor plus model config and target scaling."""
    table = []
    blobs = []
    for name, t in params.named_parameters():
        table.append({"name": name, "shape": list(t.shape)})
        blobs.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    blob = b"".join(blobs)
    header = {
        "format_version": FORMAT_VERSION,
        "model": asdict(params.config),
        "target_mean": params.target_mean,
        "target_std": params.target_std,
        "tensors": table,
        **(extra or {}),
    }
    with atomic_write(path) as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(_json_line(header))
        fh.write(blob)
        fh.write(struct.pack("<I", zlib.crc32(blob)))


def load_checkpoint(path):
    """Return ``(ModelParams, header)``."""
    from .model import ModelConfig, ModelParams

    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise FormatError(f"{path}: not a checkpoint file")
    off = len(CHECKPOINT_MAGIC)
    nl = data.index(b"\n", off)
    header = json.loads(data[off:nl].decode())
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint format version {header.get('format_version')}")
    blob = data[nl + 1:-4]
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(blob) != crc:
        raise ChecksumError(0)
    mc = dict(header["model"])
    mc["fc_widths"] = tuple(mc["fc_widths"])
    params = ModelParams.init(ModelConfig(**mc), 0)
    named = dict(params.named_parameters())
    pos = 0
    for entry in header["tensors"]:
        t = named.pop(entry["name"], None)
        if t is None or list(t.shape) != entry["shape"]:
            raise FormatError(f"checkpoint tensor {entry['name']} does not fit the model config")
        size = int(np.prod(entry["shape"], dtype=np.int64))
        t.data[...] = np.frombuffer(blob, "<f8", size, pos).reshape(entry["shape"])
        pos += 8 * size
    if named or pos != len(blob):
        raise FormatError("checkpoint tensor table incomplete")
    params.target_mean = float(header["target_mean"])
    params.target_std = float(header["target_std"])
    return params, header
