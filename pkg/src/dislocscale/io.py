"""CSV emission, run manifests and report files."""
from __future__ import annotations

import csv
import hashlib
import json
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def _fmt(v) -> str:
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Sequence], units: Sequence[str] | None = None, meta: dict | None = None) -> Path:
    """Write a CSV with optional ``# key: value`` metadata lines, a ``# units:`` line and a header row.

    Floats are written with ``repr`` so identical runs give identical bytes.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k}: {v}\n")
        if units is not None:
            if len(units) != len(columns):
                raise ValueError("units and columns must have the same length")
            fh.write("# units: " + ",".join(units) + "\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(v) for v in r])
    return path


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    """Header and rows of a CSV written by write_csv (comment lines skipped)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_manifest(out_dir: Path, config_text: str, extra_files: Sequence[Path] = ()) -> Path:
    """manifest.txt: the config echo followed by ``sha256  relative/path`` for every file in out_dir."""
    out_dir = Path(out_dir)
    files = sorted(p for p in out_dir.rglob("*") if p.is_file() and p.name != "manifest.txt")
    files += [Path(p) for p in extra_files if Path(p) not in files]
    path = out_dir / "manifest.txt"
    with open(path, "w") as fh:
        fh.write("# config\n")
        for line in config_text.splitlines():
            fh.write(f"#   {line}\n")
        fh.write("# files (sha256  path)\n")
        for p in files:
            fh.write(f"{sha256(p)}  {os.path.relpath(p, out_dir)}\n")
    return path
