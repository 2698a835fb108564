"""Binary checkpoints.

Layout (all integers little-endian)::

    b"SANASCKPT"            9 bytes
    version                 u32
    header length           u64
    header                  UTF-8 JSON, keys sorted
    payload                 float64 LE arrays, in header order

The header lists every array (name, shape, byte offset into the payload)
along with the embedded graph, the resolved run config, its hash, the
baseline, optimizer step, epoch, generator state and a SHA-256 of the
payload. Encoding is canonical, so save -> load -> save reproduces the file
byte for byte.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import FormatError, InputError
from .numcore import ParamStore

MAGIC = b"SANASCKPT"
VERSION = 1
_PREFIX = struct.Struct("<IQ")
_GROUPS = ("param", "adam_m", "adam_v")


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(graph: dict, config: dict) -> str:
    return hashlib.sha256(canonical_json({"config": config, "graph": graph}).encode()).hexdigest()


@dataclass
class Checkpoint:
    graph: dict
    config: dict
    store: ParamStore
    baseline: float = 0.0
    epoch: int = 0
    rng_state: dict | None = None
    normalizer: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = VERSION

    @property
    def config_hash(self) -> str:
        return config_hash(self.graph, self.config)

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for group, table in zip(_GROUPS, (self.store.params, self.store.m, self.store.v)):
            out.extend((f"{group}/{n}", table[n]) for n in self.store.params)
        out.extend((f"norm/{k}", self.normalizer[k]) for k in sorted(self.normalizer))
        return out


def _encode(ckpt: Checkpoint) -> bytes:
    entries, chunks, offset = [], [], 0
    for name, arr in ckpt.arrays():
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "format": "sanas-checkpoint",
        "version": ckpt.version,
        "graph": ckpt.graph,
        "config": ckpt.config,
        "config_hash": ckpt.config_hash,
        "baseline": float(ckpt.baseline),
        "step": int(ckpt.store.step),
        "epoch": int(ckpt.epoch),
        "rng_state": ckpt.rng_state,
        "tensors": entries,
        "payload_bytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    head = canonical_json(header).encode("utf-8")
    return MAGIC + _PREFIX.pack(ckpt.version, len(head)) + head + payload


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    """Write atomically: a crash mid-write never leaves a half file behind."""
    path = Path(path)
    data = _encode(ckpt)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def read_header(path: str | Path) -> dict:
    return _split(Path(path))[0]


def _split(path: Path) -> tuple[dict, bytes]:
    try:
        blob = path.read_bytes()
    except OSError as err:
        raise InputError(f"cannot read checkpoint {path}: {err}") from err
    if blob[:len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    pos = len(MAGIC)
    if len(blob) < pos + _PREFIX.size:
        raise FormatError(f"{path}: truncated before header")
    version, hlen = _PREFIX.unpack_from(blob, pos)
    if version != VERSION:
        raise FormatError(f"{path}: format version {version}, this build reads {VERSION}")
    pos += _PREFIX.size
    if len(blob) < pos + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = json.loads(blob[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, ValueError) as err:
        raise FormatError(f"{path}: unreadable header ({err})") from err
    if not isinstance(header, dict) or header.get("version") != version:
        raise FormatError(f"{path}: header does not match the container version")
    return header, blob[pos + hlen:]


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read and validate; any inconsistency raises :class:`FormatError`."""
    path = Path(path)
    header, payload = _split(path)
    try:
        entries = header["tensors"]
        if len(payload) != header["payload_bytes"]:
            raise FormatError(f"{path}: payload is {len(payload)} bytes, header says {header['payload_bytes']}")
        if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
            raise FormatError(f"{path}: payload checksum mismatch")
        if config_hash(header["graph"], header["config"]) != header["config_hash"]:
            raise FormatError(f"{path}: config hash does not match the embedded config")
        arrays: dict[str, np.ndarray] = {}
        expected = 0
        for e in entries:
            shape = tuple(int(s) for s in e["shape"])
            nbytes = 8 * int(np.prod(shape, dtype=np.int64))
            if e["offset"] != expected or e["nbytes"] != nbytes:
                raise FormatError(f"{path}: tensor {e['name']} has inconsistent shape/offset")
            raw = payload[e["offset"]:e["offset"] + nbytes]
            arrays[e["name"]] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
            expected += nbytes
        if expected != len(payload):
            raise FormatError(f"{path}: payload length does not match the tensor table")
        store = ParamStore()
        names = [k.split("/", 1)[1] for k in arrays if k.startswith("param/")]
        for n in names:
            store.params[n] = arrays[f"param/{n}"].copy()
            store.m[n] = arrays[f"adam_m/{n}"].copy()
            store.v[n] = arrays[f"adam_v/{n}"].copy()
            store.grads[n] = np.zeros_like(store.params[n])
        store.step = int(header["step"])
        norm = {k.split("/", 1)[1]: v.copy() for k, v in arrays.items() if k.startswith("norm/")}
        return Checkpoint(header["graph"], header["config"], store, float(header["baseline"]),
                          int(header["epoch"]), header["rng_state"], norm, int(header["version"]))
    except (KeyError, TypeError, ValueError) as err:
        if isinstance(err, FormatError):
            raise
        raise FormatError(f"{path}: malformed header ({err!r})") from err


@dataclass
class Restored:
    """Everything needed to run a checkpointed model."""

    model: Any
    store: ParamStore
    normalizer: Any
    arch: Any
    checkpoint: Checkpoint


def check_graph(ckpt: Checkpoint, spec) -> None:
    """Hard error when ``spec`` is not the graph the checkpoint was trained on."""
    theirs = ckpt.graph
    ours = spec.to_json()
    if theirs == ours:
        return
    diffs = [k for k in sorted(set(theirs) | set(ours)) if theirs.get(k) != ours.get(k)]
    raise FormatError(f"checkpoint was trained on graph {theirs.get('name')!r}, "
                      f"got {ours.get('name')!r}; fields differ: {diffs}")


def restore(ckpt: Checkpoint, spec=None) -> Restored:
    from dataclasses import fields as dc_fields

    from .audio.features import FeatureNormalizer
    from .controller import ModelConfig, SanasModel
    from .supernet import ArchSample, build_graph

    graph = build_graph(ckpt.graph)
    if spec is not None:
        check_graph(ckpt, spec)
    mc = ckpt.config.get("model", {})
    model = SanasModel(graph, ModelConfig(**{f.name: mc[f.name] for f in dc_fields(ModelConfig) if f.name in mc}))
    expected = model.init_params(np.random.default_rng(0))
    for name in expected.names():
        if name not in ckpt.store or ckpt.store[name].shape != expected[name].shape:
            raise FormatError(f"checkpoint tensor {name!r} missing or misshapen for its graph")
    if set(ckpt.store.names()) != set(expected.names()):
        raise FormatError("checkpoint carries parameters its graph does not define")
    norm = None
    if ckpt.normalizer:
        norm = FeatureNormalizer(ckpt.normalizer["mean"], ckpt.normalizer["std"])
    static = ckpt.config.get("static")
    arch = None
    if static == "backbone":
        arch = ArchSample(graph.backbone_mask())
    elif static == "full":
        arch = ArchSample(graph.full_mask())
    return Restored(model, ckpt.store, norm, arch, ckpt)
