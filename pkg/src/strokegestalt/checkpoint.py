"""Checkpoint container shared by the recognizer, evaluator, and SR models.

A checkpoint is a single binary file holding a config dict (JSON-safe),
named parameter arrays, and training metadata. Loading can enforce that the
stroke-table hash recorded at training time matches the dataset in use.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import torch


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(
    path: str | Path,
    *,
    kind: str,
    config: dict,
    state_dict: dict,
    meta: dict,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "kind": kind,
            "config": config,
            "state_dict": {k: v.cpu() for k, v in state_dict.items()},
            "meta": meta,
        },
        path,
    )
    return path


def load_checkpoint(path: str | Path, *, expect_kind: str | None = None) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if expect_kind is not None and blob.get("kind") != expect_kind:
        raise CheckpointError(
            f"{path}: expected a {expect_kind!r} checkpoint, found {blob.get('kind')!r}"
        )
    return blob


def verify_table_hash(blob: dict, table_hash: str, path: str = "<checkpoint>") -> None:
    recorded = blob.get("meta", {}).get("stroke_table_hash")
    if recorded is not None and recorded != table_hash:
        raise CheckpointError(
            f"{path}: stroke-table hash mismatch "
            f"(checkpoint {recorded[:12]}..., dataset {table_hash[:12]}...)"
        )


def state_dict_hash(state_dict: dict) -> str:
    """Byte-level hash of all parameters, used by the frozen-recognizer contract."""
    h = hashlib.sha256()
    for name in sorted(state_dict):
        h.update(name.encode())
        h.update(state_dict[name].detach().cpu().numpy().tobytes())
    return h.hexdigest()
