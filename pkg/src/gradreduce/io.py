"""CSV output with bit-stable number formatting, and run manifests."""
from __future__ import annotations

import hashlib
import json
import platform
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    """17 significant digits, enough to round-trip any double."""
    if isinstance(x, (str, bytes)):
        return x if isinstance(x, str) else x.decode()
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header, rows) -> Path:
    """Write ``rows`` under ``header`` with '\\n' line endings."""
    path = Path(path)
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        lines.append(",".join(fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_csv(path):
    """Header and float array of a CSV written by :func:`write_csv` (numeric columns only)."""
    text = Path(path).read_text(encoding="utf-8").splitlines()
    header = text[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:]], dtype=float)
    return header, data.reshape(-1, len(header))


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config_sha256: str
    seed: int | None
    version: str
    config: dict
    started: str = field(default_factory=_now)
    finished: str = ""
    python: str = field(default_factory=platform.python_version)
    outputs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def add_output(self, path):
        path = Path(path)
        self.outputs.append({"file": path.name, "sha256": sha256_file(path),
                             "bytes": path.stat().st_size})

    def write(self, directory) -> Path:
        self.finished = _now()
        out = Path(directory) / "manifest.json"
        out.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=_plain) + "\n",
                       encoding="utf-8")
        return out

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text(encoding="utf-8")))

    def checksums(self) -> dict:
        return {o["file"]: o["sha256"] for o in self.outputs}


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
