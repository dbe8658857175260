"""Self-contained checkpoint archives for the translator.

A checkpoint is a zip holding `meta.json` (config snapshot, epoch, loss
history, tensor index) and one raw little-endian float32 buffer per named
parameter tensor. Nothing in the format depends on the training framework,
and re-serializing a loaded checkpoint is byte-identical.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

FORMAT_VERSION = 1
_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)  # fixed timestamps keep archives stable


@dataclass
class TranslationCheckpoint:
    """Named parameter tensors plus the configuration that produced them."""

    params: dict[str, np.ndarray]
    config: dict
    epoch: int = 0
    loss_history: list[dict] = field(default_factory=list)

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        names = sorted(self.params)
        index = []
        buffers = []
        for i, name in enumerate(names):
            arr = np.ascontiguousarray(self.params[name], dtype="<f4")
            file_name = f"tensors/{i:04d}.bin"
            index.append({"name": name, "shape": list(arr.shape),
                          "file": file_name})
            buffers.append((file_name, arr.tobytes()))
        meta = {
            "format_version": FORMAT_VERSION,
            "config": self.config,
            "epoch": self.epoch,
            "loss_history": self.loss_history,
            "tensors": index,
        }
        payload = json.dumps(meta, sort_keys=True, indent=1).encode()
        with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
            zf.writestr(zipfile.ZipInfo("meta.json", _ZIP_EPOCH), payload)
            for file_name, blob in buffers:
                zf.writestr(zipfile.ZipInfo(file_name, _ZIP_EPOCH), blob)
        return path

    @classmethod
    def load(cls, path) -> "TranslationCheckpoint":
        path = Path(path)
        try:
            with zipfile.ZipFile(path) as zf:
                meta = json.loads(zf.read("meta.json"))
                params = {}
                for entry in meta["tensors"]:
                    blob = zf.read(entry["file"])
                    arr = np.frombuffer(blob, dtype="<f4").reshape(
                        entry["shape"]).copy()
                    params[entry["name"]] = arr
        except (OSError, KeyError, ValueError, json.JSONDecodeError,
                zipfile.BadZipFile) as exc:
            raise CheckpointError(
                f"cannot load checkpoint {path}: {exc}") from exc
        if meta.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint format {meta.get('format_version')}"
            )
        return cls(params=params, config=meta["config"],
                   epoch=meta["epoch"], loss_history=meta["loss_history"])

    def payload_bytes(self) -> bytes:
        """Concatenated raw tensor bytes in canonical order."""
        out = io.BytesIO()
        for name in sorted(self.params):
            out.write(np.ascontiguousarray(self.params[name],
                                           dtype="<f4").tobytes())
        return out.getvalue()
