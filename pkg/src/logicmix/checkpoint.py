"""Checkpoint persistence: a canonical JSON header plus length-prefixed
binary sections, so save -> load -> save is byte-identical and resumed
training continues the exact metric stream."""

from __future__ import annotations

import hashlib
import json
import struct

import torch

MAGIC = b"LMCK"
FORMAT_VERSION = 1

_DTYPE_TAGS = {torch.float64: b"f8", torch.float32: b"f4", torch.int64: b"i8",
               torch.uint8: b"u1", torch.bool: b"b1"}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


class CheckpointError(RuntimeError):
    pass


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def pack_tensors(named: dict) -> bytes:
    """Deterministic encoding of an ordered name->tensor mapping."""
    out = bytearray()
    out += struct.pack("<I", len(named))
    for name, t in named.items():
        t = t.detach().contiguous()
        if t.dtype not in _DTYPE_TAGS:
            raise CheckpointError(f"unsupported tensor dtype {t.dtype} for {name}")
        nb = name.encode("utf-8")
        out += struct.pack("<H", len(nb)) + nb
        out += _DTYPE_TAGS[t.dtype]
        out += struct.pack("<B", t.dim())
        for d in t.shape:
            out += struct.pack("<q", d)
        data = t.numpy().tobytes()
        out += struct.pack("<Q", len(data)) + data
    return bytes(out)


def unpack_tensors(blob: bytes) -> dict:
    import numpy as np

    named = {}
    off = 0
    (count,) = struct.unpack_from("<I", blob, off)
    off += 4
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + nlen].decode("utf-8")
        off += nlen
        tag = blob[off:off + 2]
        off += 2
        dtype = _TAG_DTYPES[tag]
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = []
        for _ in range(ndim):
            (d,) = struct.unpack_from("<q", blob, off)
            off += 8
            shape.append(d)
        (dlen,) = struct.unpack_from("<Q", blob, off)
        off += 8
        np_dtype = {b"f8": np.float64, b"f4": np.float32, b"i8": np.int64,
                    b"u1": np.uint8, b"b1": np.bool_}[tag]
        arr = np.frombuffer(blob[off:off + dlen], dtype=np_dtype).copy()
        off += dlen
        named[name] = torch.from_numpy(arr).reshape(shape).to(dtype)
    return named


class Checkpoint:
    """Header dict + ordered named binary sections."""

    def __init__(self, header: dict, sections: dict[str, bytes]):
        self.header = header
        self.sections = sections

    def save(self, path):
        header = dict(self.header)
        header["sections"] = list(self.sections)
        hb = canonical_json(header)
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", FORMAT_VERSION))
            f.write(struct.pack("<I", len(hb)))
            f.write(hb)
            f.write(struct.pack("<I", len(self.sections)))
            for name, data in self.sections.items():
                nb = name.encode("utf-8")
                f.write(struct.pack("<H", len(nb)))
                f.write(nb)
                f.write(struct.pack("<Q", len(data)))
                f.write(data)
        return path

    @classmethod
    def load(cls, path) -> "Checkpoint":
        with open(path, "rb") as f:
            blob = f.read()
        if blob[:4] != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        (version,) = struct.unpack_from("<I", blob, 4)
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: format version {version} != supported {FORMAT_VERSION}"
            )
        (hlen,) = struct.unpack_from("<I", blob, 8)
        off = 12
        header = json.loads(blob[off:off + hlen])
        off += hlen
        (count,) = struct.unpack_from("<I", blob, off)
        off += 4
        sections = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", blob, off)
            off += 2
            name = blob[off:off + nlen].decode("utf-8")
            off += nlen
            (dlen,) = struct.unpack_from("<Q", blob, off)
            off += 8
            sections[name] = blob[off:off + dlen]
            off += dlen
        header.pop("sections", None)
        return cls(header, sections)

    def json_section(self, name: str):
        return json.loads(self.sections[name])

    def tensor_section(self, name: str) -> dict:
        return unpack_tensors(self.sections[name])


def _flatten_optimizer(opt_state: dict):
    tensors, meta = {}, {"param_groups": opt_state["param_groups"], "state_keys": {}}
    for idx, entry in opt_state["state"].items():
        meta["state_keys"][str(idx)] = sorted(entry)
        for key in sorted(entry):
            val = entry[key]
            if torch.is_tensor(val):
                tensors[f"{idx}.{key}"] = val
            else:  # scalar step counters
                tensors[f"{idx}.{key}"] = torch.tensor(float(val), dtype=torch.float64)
    return tensors, meta


def _unflatten_optimizer(tensors: dict, meta: dict) -> dict:
    state = {}
    for idx_str, keys in meta["state_keys"].items():
        entry = {}
        for key in keys:
            entry[key] = tensors[f"{idx_str}.{key}"]
        state[int(idx_str)] = entry
    return {"state": state, "param_groups": meta["param_groups"]}


def build_checkpoint(trainer, run_config: dict, sources: dict[str, str]) -> Checkpoint:
    """Snapshot everything needed for exact resume and standalone eval."""
    state = trainer.state_dict()
    opt_tensors, opt_meta = _flatten_optimizer(state["optimizer"])
    header = {
        "format_version": FORMAT_VERSION,
        "config": run_config,
        "rule_hashes": {
            name: hashlib.sha256(text.encode("utf-8")).hexdigest()
            for name, text in sources.items()
        },
        "global_step": state["global_step"],
    }
    sections = {
        "policy": pack_tensors(state["policy"]),
        "optimizer_tensors": pack_tensors(opt_tensors),
        "optimizer_meta": canonical_json(opt_meta),
        "sampler_rng": bytes(state["sampler"].numpy().tobytes()),
        "env_states": canonical_json(state["envs"]),
        "trainer_meta": canonical_json(
            {"iteration": state["iteration"], "global_step": state["global_step"]}
        ),
        "next_obs": pack_tensors({"x": state["next_x"], "z": state["next_z"]}),
    }
    for name, text in sources.items():
        sections[f"src_{name}"] = text.encode("utf-8")
    return Checkpoint(header, sections)


def restore_trainer(trainer, ckpt: Checkpoint):
    import numpy as np

    meta = ckpt.json_section("trainer_meta")
    opt = _unflatten_optimizer(
        ckpt.tensor_section("optimizer_tensors"), ckpt.json_section("optimizer_meta")
    )
    sampler = torch.from_numpy(
        np.frombuffer(ckpt.sections["sampler_rng"], dtype=np.uint8).copy()
    )
    obs = ckpt.tensor_section("next_obs")
    trainer.load_state_dict({
        "iteration": meta["iteration"],
        "global_step": meta["global_step"],
        "policy": ckpt.tensor_section("policy"),
        "optimizer": opt,
        "sampler": sampler,
        "envs": ckpt.json_section("env_states"),
        "next_x": obs["x"],
        "next_z": obs["z"],
    })
    return trainer
