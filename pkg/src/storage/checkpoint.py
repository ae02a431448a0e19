"""
Checkpoints: named float32 parameters plus a versioned JSON manifest

On disk a checkpoint is a directory holding manifest.json and params.bin;
the blob is the little-endian float32 tensors concatenated in manifest order.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from src.core.config import ModelSpec, config_hash
from src.core.errors import DataFormatError, StateError
from src.core.logger import get_logger

logger = get_logger(__name__)

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
BLOB = "params.bin"
WIRE_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    """Model spec, parameters in canonical order, stage tag and training metadata"""

    spec: ModelSpec
    params: Dict[str, np.ndarray]
    stage: str
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        return config_hash(self.spec)

    def copy(self) -> "Checkpoint":
        return Checkpoint(
            spec=self.spec,
            params={k: v.copy() for k, v in self.params.items()},
            stage=self.stage,
            metadata=json.loads(json.dumps(self.metadata)),
        )

    def manifest(self) -> Dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "stage": self.stage,
            "config_hash": self.config_hash,
            "model_spec": self.spec.model_dump(mode="json"),
            "tensors": [{"name": k, "shape": list(v.shape)} for k, v in self.params.items()],
            "metadata": self.metadata,
        }

    def to_bytes(self) -> bytes:
        return b"".join(np.ascontiguousarray(v, dtype=WIRE_DTYPE).tobytes() for v in self.params.values())


def save_checkpoint(checkpoint: Checkpoint, path: str) -> Path:
    """Write manifest.json and params.bin under path"""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / MANIFEST, "w", encoding="utf-8") as f:
        json.dump(checkpoint.manifest(), f, indent=2, sort_keys=True)
        f.write("\n")
    (out / BLOB).write_bytes(checkpoint.to_bytes())
    logger.info(f"Saved {checkpoint.stage} checkpoint to {out}")
    return out


def load_checkpoint(path: str, expected: Optional[ModelSpec] = None) -> Checkpoint:
    """
    Read a checkpoint and verify its blob length and config hash

    Raises:
        DataFormatError: missing files, unknown version, blob/manifest mismatch
        StateError: hash does not match the stored spec or the expected spec
    """
    root = Path(path)
    try:
        with open(root / MANIFEST, encoding="utf-8") as f:
            manifest = json.load(f)
        blob = (root / BLOB).read_bytes()
    except FileNotFoundError as e:
        raise DataFormatError(f"checkpoint incomplete at {root}: {e.filename} missing") from e
    except json.JSONDecodeError as e:
        raise DataFormatError(f"checkpoint manifest at {root} is not valid JSON: {e}") from e

    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataFormatError(f"unsupported checkpoint format {manifest.get('format_version')}")

    spec = ModelSpec.model_validate(manifest["model_spec"])
    if config_hash(spec) != manifest["config_hash"]:
        raise StateError(f"config hash in {root} does not match its model spec")
    if expected is not None and config_hash(expected) != manifest["config_hash"]:
        raise StateError(f"checkpoint {root} was built for a different model configuration")

    sizes = [int(np.prod(t["shape"], dtype=np.int64)) for t in manifest["tensors"]]
    if sum(sizes) * WIRE_DTYPE.itemsize != len(blob):
        raise DataFormatError(
            f"blob length {len(blob)} does not match manifest ({sum(sizes) * WIRE_DTYPE.itemsize} bytes)"
        )

    flat = np.frombuffer(blob, dtype=WIRE_DTYPE)
    params: Dict[str, np.ndarray] = {}
    offset = 0
    for tensor, size in zip(manifest["tensors"], sizes):
        params[tensor["name"]] = flat[offset : offset + size].reshape(tensor["shape"]).astype(np.float32)
        offset += size

    return Checkpoint(spec=spec, params=params, stage=manifest["stage"], metadata=manifest.get("metadata", {}))
