"""Atomic file output and stage manifests."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import pandas as pd

from .errors import InputError


def write_text(text: str, path) -> Path:
    """Write ``text`` to a temp file next to ``path``, then rename over it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(df: pd.DataFrame, path, index: bool = False) -> Path:
    # default float formatting is the shortest round-trip repr
    return write_text(df.to_csv(index=index, lineterminator="\n"), path)


def write_json(obj, path) -> Path:
    return write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n", path)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def read_manifest(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"missing stage manifest {path}; run the earlier stage first")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: unreadable manifest ({exc})") from None


def check_manifest(path, expected: dict, stage: str) -> dict:
    """Compare the recorded fingerprint of a stage with ``expected``."""
    found = read_manifest(path)
    got = found.get("fingerprint")
    if got != expected:
        keys = sorted(k for k in set(got or {}) | set(expected) if (got or {}).get(k) != expected.get(k))
        raise InputError(f"stale {stage} dumps in {Path(path).parent} (changed: {', '.join(keys) or 'format'}); "
                         f"rerun the {stage} stage")
    return found
