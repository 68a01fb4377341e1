"""
Checkpoint file: parameters, Adam moments and counters in one file.

Layout::

    b"CLGC" | u32 header length | 32-byte sha256 of header | JSON header | payload

The JSON header carries the NetConfig, step, optimizer hyper-parameters,
the byte offset of every tensor inside the payload and a sha256 of the
payload.  Tensors use the CLGT binary format.
"""

import hashlib
import json
import struct
from pathlib import Path
from typing import Optional, Tuple

from .errors import IntegrityError
from .io import tensor_from_bytes, tensor_to_bytes
from .layers import ModelParams, NetConfig, param_layout
from .tensor import Tensor
from .trainer import AdamState

MAGIC = b"CLGC"
FORMAT_VERSION = 1


def save_checkpoint(path, params: ModelParams, state: Optional[AdamState] = None, step: int = 0,
                    extra: Optional[dict] = None) -> None:
    chunks, entries, offset = [], [], 0
    groups = [("param", params.tensors)]
    if state is not None:
        groups += [("m", state.m), ("v", state.v)]
    for kind, tensors in groups:
        for name, t in tensors.items():
            blob = tensor_to_bytes(t)
            entries.append({"kind": kind, "path": name, "offset": offset, "nbytes": len(blob)})
            chunks.append(blob)
            offset += len(blob)
    payload = b"".join(chunks)
    header = {
        "version": FORMAT_VERSION,
        "config": params.config.to_dict(),
        "model_seed": params.seed,
        "step": step,
        "adam": state.hyper() if state is not None else None,
        "entries": entries,
        "payload_nbytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
        "extra": extra or {},
    }
    raw = json.dumps(header, sort_keys=True).encode()
    blob = MAGIC + struct.pack("<I", len(raw)) + hashlib.sha256(raw).digest() + raw + payload
    Path(path).write_bytes(blob)


def load_checkpoint(path) -> Tuple[ModelParams, Optional[AdamState], dict]:
    """Returns (params, adam state or None, header). Raises IntegrityError on damage."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise IntegrityError(f"{path}: not a clgnet checkpoint")
    if len(buf) < 40:
        raise IntegrityError(f"{path}: truncated header")
    (n,) = struct.unpack_from("<I", buf, 4)
    digest = buf[8:40]
    raw = buf[40:40 + n]
    if len(raw) != n or hashlib.sha256(raw).digest() != digest:
        raise IntegrityError(f"{path}: header checksum mismatch")
    header = json.loads(raw.decode())
    payload = buf[40 + n:]
    if len(payload) != header["payload_nbytes"] or hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise IntegrityError(f"{path}: payload truncated or corrupt")

    cfg = NetConfig(**header["config"])
    groups = {"param": {}, "m": {}, "v": {}}
    for e in header["entries"]:
        t, end = tensor_from_bytes(payload, e["offset"])
        if end - e["offset"] != e["nbytes"]:
            raise IntegrityError(f"{path}: entry {e['path']} has inconsistent size")
        groups[e["kind"]][e["path"]] = t
    expected = [p for p, _ in param_layout(cfg)]
    if list(groups["param"]) != expected:
        raise IntegrityError(f"{path}: parameter set does not match the recorded NetConfig")
    for t in groups["param"].values():
        t.requires_grad = True
    params = ModelParams(cfg, header["model_seed"], groups["param"])
    state = None
    if header["adam"] is not None:
        hyper = dict(header["adam"])
        state = AdamState(
            {k: t.data for k, t in groups["m"].items()},
            {k: t.data for k, t in groups["v"].items()},
            **hyper,
        )
    return params, state, header


def checkpoint_roundtrip(params: ModelParams, state: Optional[AdamState], path, step: int = 0):
    save_checkpoint(path, params, state, step)
    p, s, _ = load_checkpoint(path)
    return p, s
