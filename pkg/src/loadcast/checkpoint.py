"""Binary checkpoint container.

Layout (all integers little-endian)::

    magic       14 bytes  b"LOADCAST-CKPT\\n"
    header_len   8 bytes  uint64
    header       header_len bytes of UTF-8 JSON
    body         float64 little-endian values of every array, in header order

The header records ``version``, ``kind``, ``input_dim``, the ordered
``arrays`` list (``name`` and ``shape`` each), ``body_bytes``,
``body_sha256`` and a free-form ``meta`` object (seed, training config...).
"""

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from loadcast.baselines import MLP_DEPTHS, mlp_forward
from loadcast.errors import CheckpointError
from loadcast.seqmodels import CELL_KINDS, Network, network_from_arrays

MAGIC = b"LOADCAST-CKPT\n"
VERSION = 1


@dataclass
class MlpModel:
    kind: str
    params: dict
    meta: dict = field(default_factory=dict)

    def predict(self, X):
        return mlp_forward(self.params, X)


def write_checkpoint(path, kind, arrays, input_dim=1, meta=None):
    names = list(arrays)
    body = b"".join(np.ascontiguousarray(arrays[k], dtype="<f8").tobytes() for k in names)
    header = {
        "version": VERSION,
        "kind": kind,
        "input_dim": int(input_dim),
        "arrays": [{"name": k, "shape": list(np.shape(arrays[k]))} for k in names],
        "body_bytes": len(body),
        "body_sha256": hashlib.sha256(body).hexdigest(),
        "meta": meta or {},
    }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        fh.write(body)


def read_checkpoint(path):
    """Return ``(header, arrays)``; raises CheckpointError on any inconsistency."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a loadcast checkpoint")
    pos = len(MAGIC)
    if len(blob) < pos + 8:
        raise CheckpointError(f"{path}: truncated header")
    (hlen,) = struct.unpack("<Q", blob[pos:pos + 8])
    pos += 8
    if len(blob) < pos + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    if header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    body = blob[pos + hlen:]
    if len(body) != header["body_bytes"]:
        raise CheckpointError(f"{path}: body is {len(body)} bytes, header says {header['body_bytes']}")
    if hashlib.sha256(body).hexdigest() != header["body_sha256"]:
        raise CheckpointError(f"{path}: body checksum mismatch")
    arrays = {}
    off = 0
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape, dtype=np.int64)) * 8
        if off + n > len(body):
            raise CheckpointError(f"{path}: array {spec['name']} overruns the body")
        arrays[spec["name"]] = np.frombuffer(body, dtype="<f8", count=n // 8, offset=off).astype(np.float64).reshape(shape)
        off += n
    if off != len(body):
        raise CheckpointError(f"{path}: {len(body) - off} unexplained trailing bytes")
    return header, arrays


def save_checkpoint(model, path, meta=None):
    """Save a recurrent Network or an MlpModel."""
    info = dict(model.meta)
    info.update(meta or {})
    if isinstance(model, Network):
        write_checkpoint(path, model.kind, model.param_dict(), model.input_dim, info)
    elif isinstance(model, MlpModel):
        write_checkpoint(path, model.kind, model.params, 1, info)
    else:
        raise TypeError(f"cannot checkpoint {type(model).__name__}")


def load_checkpoint(path, expect_kind=None):
    header, arrays = read_checkpoint(path)
    kind = header["kind"]
    if expect_kind is not None and kind != expect_kind:
        raise CheckpointError(f"{path}: checkpoint holds a {kind} model, expected {expect_kind}")
    meta = header.get("meta", {})
    if kind in CELL_KINDS:
        try:
            return network_from_arrays(kind, arrays, header["input_dim"], meta)
        except (KeyError, ValueError) as exc:
            raise CheckpointError(f"{path}: inconsistent {kind} parameters ({exc})") from None
    if kind in MLP_DEPTHS:
        n = len(arrays) // 2
        if sorted(arrays) != sorted([f"w{i}" for i in range(n)] + [f"b{i}" for i in range(n)]):
            raise CheckpointError(f"{path}: inconsistent {kind} parameters")
        for i in range(n):
            w, b = arrays[f"w{i}"], arrays[f"b{i}"]
            if b.shape != (w.shape[0],) or (i and w.shape[1] != arrays[f"w{i - 1}"].shape[0]):
                raise CheckpointError(f"{path}: layer {i} shapes do not conform")
        return MlpModel(kind, arrays, meta)
    raise CheckpointError(f"{path}: unknown model kind {kind!r}")
