"""Stage manifests: enough to replay a stage, nothing that breaks replay.

Each pipeline stage directory gets a ``manifest.json`` recording the
semantic configuration (hashed), the content hashes of the files the
stage read, and of the files it wrote. Execution-only knobs (parallelism,
output location) and timestamps are deliberately absent so identical
runs produce byte-identical manifests.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Mapping

from qgforge import __version__
from qgforge.kernels import BACKEND


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _hash_files(paths: Iterable[Path], root: Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for path in paths:
        path = Path(path)
        try:
            name = path.relative_to(root).as_posix()
        except ValueError:
            name = path.name
        out[name] = file_sha256(path)
    return out


def write_manifest(
    stage_dir: Path,
    stage: str,
    config: Mapping[str, object],
    inputs: Iterable[Path],
    outputs: Iterable[Path],
    root: Path,
) -> Path:
    config_bytes = json.dumps(config, sort_keys=True).encode()
    manifest = {
        "stage": stage,
        "config": dict(config),
        "config_hash": hashlib.sha256(config_bytes).hexdigest(),
        "inputs": _hash_files(inputs, root),
        "outputs": _hash_files(outputs, root),
        "tool": {"name": "qgforge", "version": __version__, "kernel_backend": BACKEND},
    }
    path = stage_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
