"""Versioned checkpoint container.

One .npz file per checkpoint: a JSON header (version, kind, config echo,
training metadata, tensor manifest) plus a single flat float64 blob holding
every state tensor — parameters *and* buffers, in sorted state_dict order —
so a reload restores eval-mode behavior exactly.
"""

import json

import numpy as np
import torch

FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path, kind: str, config: dict, module: torch.nn.Module, metadata: dict = None):
    """Persist module state under a config echo; returns the path."""
    names, shapes, chunks = [], [], []
    for name, t in sorted(module.state_dict().items()):
        names.append(name)
        shapes.append(list(t.shape))
        chunks.append(t.detach().cpu().numpy().astype(np.float64).ravel())
    blob = np.concatenate(chunks) if chunks else np.zeros(0)
    header = {
        "version": FORMAT_VERSION,
        "kind": kind,
        "config": config,
        "metadata": metadata or {},
        "tensors": [{"name": n, "shape": s} for n, s in zip(names, shapes)],
    }
    with open(path, "wb") as f:
        np.savez(f, header=np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8),
                 blob=blob)
    return path


def read_header(path) -> dict:
    with np.load(str(path)) as z:
        if "header" not in z:
            raise CheckpointError(f"{path}: not a checkpoint (no header)")
        header = json.loads(bytes(z["header"]).decode("utf-8"))
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    return header


def load_checkpoint(path, module: torch.nn.Module = None):
    """Read (header, state_dict); if module is given, load state into it."""
    with np.load(str(path)) as z:
        if "header" not in z or "blob" not in z:
            raise CheckpointError(f"{path}: not a checkpoint")
        header = json.loads(bytes(z["header"]).decode("utf-8"))
        blob = z["blob"]
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {header.get('version')}")
    sizes = [int(np.prod(e["shape"])) if e["shape"] else 1 for e in header["tensors"]]
    if sum(sizes) != blob.size:
        raise CheckpointError(f"{path}: blob size mismatch ({sum(sizes)} != {blob.size})")
    state, offset = {}, 0
    for entry, n in zip(header["tensors"], sizes):
        arr = blob[offset : offset + n].reshape(entry["shape"])
        state[entry["name"]] = torch.from_numpy(arr.copy())
        offset += n
    if module is not None:
        ref = module.state_dict()
        cast = {k: v.to(ref[k].dtype) if k in ref else v for k, v in state.items()}
        module.load_state_dict(cast)
    return header, state
