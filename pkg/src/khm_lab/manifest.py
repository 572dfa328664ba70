"""Reproducibility manifest: config hash, thread count, file checksums."""

from __future__ import annotations

import hashlib
import json
import os
from datetime import datetime, timezone


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build_manifest(config_path, seed: int, out_files, started: str,
                   finished: str | None = None) -> dict:
    from . import __version__

    return {
        "config_sha256": sha256_of(config_path),
        "code_version": __version__,
        "thread_count": int(os.environ.get("KHM_THREADS", "1")),
        "seed": seed,
        "started": started,
        "finished": finished or utc_now(),
        "files": [
            {"path": str(p), "sha256": sha256_of(p), "bytes": os.path.getsize(p)}
            for p in sorted(str(q) for q in out_files)
        ],
    }


def write_manifest(path, manifest: dict) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()
