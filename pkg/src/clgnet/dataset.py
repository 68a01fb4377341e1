"""
On-disk dataset of simulated pairs.

Layout::

    DIR/manifest.json
    DIR/pairs/train/{index}.clgt
    DIR/pairs/val/{index}.clgt

Each ``.clgt`` file is a u32 little-endian length, a JSON manifest whose
``entries`` list names gt / input / mask with byte offsets, then the three
tensors in the CLGT binary format.
"""

import json
import struct
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .errors import ContractError, IntegrityError
from .io import tensor_from_bytes, tensor_to_bytes
from .mrisim import SamplePair, SamplingMask, cartesian_mask, make_pair, phantom

TRAIN_FRACTION = 0.8


def pair_to_bytes(pair: SamplePair, meta: dict = None) -> bytes:
    blobs = [
        ("gt", tensor_to_bytes(pair.gt)),
        ("input", tensor_to_bytes(pair.input)),
        ("mask", tensor_to_bytes(pair.mask.columns.astype(np.float64))),
    ]
    entries, offset = [], 0
    for name, blob in blobs:
        entries.append({"name": name, "offset": offset, "nbytes": len(blob)})
        offset += len(blob)
    header = {
        "entries": entries,
        "acceleration": pair.mask.acceleration,
        "center_fraction": pair.mask.center_fraction,
        "mask_seed": pair.mask.seed,
    }
    if meta:
        header.update(meta)
    raw = json.dumps(header, sort_keys=True).encode()
    return struct.pack("<I", len(raw)) + raw + b"".join(b for _, b in blobs)


def pair_from_bytes(buf: bytes) -> Tuple[SamplePair, dict]:
    try:
        (n,) = struct.unpack_from("<I", buf, 0)
        header = json.loads(buf[4:4 + n].decode())
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError):
        raise IntegrityError("unreadable pair header") from None
    base = 4 + n
    tensors = {}
    for e in header["entries"]:
        t, end = tensor_from_bytes(buf, base + e["offset"])
        if end - (base + e["offset"]) != e["nbytes"]:
            raise IntegrityError(f"entry {e['name']} size mismatch")
        tensors[e["name"]] = t
    mask = SamplingMask(
        tensors["mask"].data > 0.5, header["acceleration"], header["center_fraction"], header["mask_seed"]
    )
    return SamplePair(tensors["gt"], tensors["input"], mask), header


def split_counts(count: int) -> Tuple[int, int]:
    n_train = int(round(TRAIN_FRACTION * count))
    return n_train, count - n_train


def pair_seeds(seed: int, count: int) -> List[Tuple[int, int]]:
    """(phantom seed, mask seed) per index, derived from one master seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [tuple(int(v) for v in c.generate_state(2)) for c in children]


def generate_dataset(
    out_dir,
    count: int,
    H: int,
    W: int,
    acceleration: int,
    center_fraction: float,
    seed: int,
    force: bool = False,
) -> dict:
    """Write ``count`` pairs split 80/20 by index into train/val."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()) and not force:
        raise ContractError(f"{out} exists and is not empty (use force)")
    # with force, drop pair files of an earlier run so no stale index survives
    for old in (out / "pairs").glob("*/*.clgt"):
        old.unlink()
    n_train, _ = split_counts(count)
    seeds = pair_seeds(seed, count)
    for split in ("train", "val"):
        (out / "pairs" / split).mkdir(parents=True, exist_ok=True)
    files = []
    for idx, (ph_seed, mk_seed) in enumerate(seeds):
        gt = phantom(H, W, ph_seed)
        mask = cartesian_mask(W, acceleration, center_fraction, mk_seed)
        pair = make_pair(gt, mask)
        split = "train" if idx < n_train else "val"
        path = out / "pairs" / split / f"{idx}.clgt"
        path.write_bytes(pair_to_bytes(pair, {"index": idx, "phantom_seed": ph_seed}))
        files.append(str(path.relative_to(out)))
    manifest = {
        "H": H,
        "W": W,
        "R": acceleration,
        "center_fraction": center_fraction,
        "seed": seed,
        "count": count,
        "splits": {"train": n_train, "val": count - n_train},
        "pair_seeds": [list(s) for s in seeds],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_split(data_dir, split: str) -> List[SamplePair]:
    root = Path(data_dir)
    if not (root / "manifest.json").is_file():
        raise ContractError(f"no dataset manifest in {root}")
    files = sorted((root / "pairs" / split).glob("*.clgt"), key=lambda p: int(p.stem))
    return [pair_from_bytes(p.read_bytes())[0] for p in files]


def build_pairs(count: int, H: int, W: int, acceleration: int, center_fraction: float, seed: int) -> List[SamplePair]:
    """In-memory equivalent of :func:`generate_dataset` (all pairs, index order)."""
    return [
        make_pair(phantom(H, W, ph), cartesian_mask(W, acceleration, center_fraction, mk))
        for ph, mk in pair_seeds(seed, count)
    ]
