"""Binary checkpoint files.

Layout (all integers little-endian):

    bytes 0-3   magic "LDLN"
    u32         format version (currently 1)
    u32         header length
    bytes       header: UTF-8 JSON {"spec": {...}, "iteration": int, "records": int}
    records     one per named tensor:
                    u32 name length, name bytes (UTF-8),
                    u32 rank, rank x u64 dims,
                    prod(dims) x f32 raw values

Values are stored as 32-bit floats, the training precision, so a save/load
round trip is bit-exact. Running batch-norm statistics are stored as records
alongside the parameters under their ``*.running_mean`` / ``*.running_var``
names.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CheckpointError,
    CheckpointMagicError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from .network import NetworkSpec

MAGIC = b"LDLN"
VERSION = 1


@dataclass
class Checkpoint:
    spec: NetworkSpec
    state: dict = field(default_factory=dict)   # name -> float32 ndarray
    iteration: int = 0

    @classmethod
    def from_network(cls, network, iteration=0):
        state = {k: np.asarray(v, dtype=np.float32) for k, v in network.state_dict().items()}
        return cls(spec=network.spec, state=state, iteration=iteration)


def _spec_to_dict(spec):
    return {
        "block_counts": list(spec.block_counts),
        "stage_widths": list(spec.stage_widths),
        "block_kind": spec.block_kind,
        "skip_connections": spec.skip_connections,
        "input_size": spec.input_size,
        "num_labels": spec.num_labels,
        "stem_kernel": spec.stem_kernel,
        "stem_stride": spec.stem_stride,
        "stem_pool_window": spec.stem_pool_window,
        "stem_pool_stride": spec.stem_pool_stride,
        "stem_pool_pad": spec.stem_pool_pad,
    }


def _spec_from_dict(d):
    d = dict(d)
    d["block_counts"] = tuple(d["block_counts"])
    d["stage_widths"] = tuple(d["stage_widths"])
    return NetworkSpec(**d)


def save(ckpt, path):
    header = json.dumps({
        "spec": _spec_to_dict(ckpt.spec),
        "iteration": int(ckpt.iteration),
        "records": len(ckpt.state),
    }).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for name in sorted(ckpt.state):
            arr = np.ascontiguousarray(ckpt.state[name], dtype=np.float32)
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes(order="C"))


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointTruncatedError(
            f"file ended while reading {what} ({len(buf)} of {n} bytes)")
    return buf


def load(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version = struct.unpack("<I", _read_exact(fh, 4, "version"))[0]
        if version != VERSION:
            raise CheckpointVersionError(
                f"file version {version} is not the supported version {VERSION}")
        hlen = struct.unpack("<I", _read_exact(fh, 4, "header length"))[0]
        try:
            header = json.loads(_read_exact(fh, hlen, "header").decode("utf-8"))
            spec = _spec_from_dict(header["spec"])
            iteration = int(header["iteration"])
            n_records = int(header["records"])
        except CheckpointTruncatedError:
            raise
        except Exception as exc:
            raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc

        state = {}
        for i in range(n_records):
            nlen = struct.unpack("<I", _read_exact(fh, 4, f"record {i} name length"))[0]
            name = _read_exact(fh, nlen, f"record {i} name").decode("utf-8")
            rank = struct.unpack("<I", _read_exact(fh, 4, f"record {i} rank"))[0]
            dims = struct.unpack(f"<{rank}Q", _read_exact(fh, 8 * rank, f"record {i} dims"))
            count = 1
            for d in dims:
                count *= d
            raw = _read_exact(fh, 4 * count, f"record {i} values ({name})")
            state[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
        if fh.read(1):
            raise CheckpointError("trailing bytes after the declared records")
    return Checkpoint(spec=spec, state=state, iteration=iteration)
