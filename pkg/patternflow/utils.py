import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Union

import numpy as np

from patternflow.core.errors import InvalidInputError, OutputFileError


def content_digest(payload: dict) -> str:
    """SHA-256 of the canonical JSON rendering of ``payload``."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def purpose_key(purpose: str) -> int:
    return int(hashlib.sha256(purpose.encode("utf-8")).hexdigest()[:16], 16)


def derive_rng(seed: int, purpose: str) -> np.random.Generator:
    """
    Independent, reproducible stream for one (seed, purpose) pair.

    Streams for different purposes never overlap because the purpose hash goes
    into the SeedSequence spawn key rather than being mixed into the seed.
    """
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(purpose_key(purpose),))
    return np.random.Generator(np.random.PCG64(seq))


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
                handle.write(text)
            os.replace(tmp_name, path)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise
    except OSError as e:
        raise OutputFileError(f"Failed to write {path}: {e}", path=path) from e
    return path


def parse_float_list(text: str) -> list[float]:
    """'0.9,0.05,0.05' -> [0.9, 0.05, 0.05]"""
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise InvalidInputError(f"Expected comma separated numbers, got {text!r}") from e
