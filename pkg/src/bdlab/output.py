"""CSV tables with a commented header block, and run manifests."""

from __future__ import annotations

import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy


def write_csv(path, columns: dict, header: dict | None = None) -> Path:
    """Write equal-length columns; ``header`` entries become ``# key: value`` lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    data = np.column_stack([np.asarray(columns[n], dtype=float) for n in names]) if names else None
    with open(path, "w") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}: {v}\n")
        fh.write(",".join(names) + "\n")
        if data is not None and data.size:
            np.savetxt(fh, data, delimiter=",", fmt="%.17g")
    return path


def read_csv(path) -> dict:
    """Inverse of :func:`write_csv` (header block returned under ``'#'``)."""
    header, names, rows = {}, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].partition(":")
            header[k.strip()] = v.strip()
        elif names is None:
            names = line.split(",")
        elif line:
            rows.append([float(t) for t in line.split(",")])
    arr = np.array(rows).reshape(-1, len(names))
    out = {n: arr[:, i] for i, n in enumerate(names)}
    out["#"] = header
    return out


def versions() -> dict:
    from . import __version__
    return {"bdlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": sys.version.split()[0], "platform": platform.platform()}


def write_manifest(output: Path, command: list[str], config: dict, seed, extra: dict | None = None) -> Path:
    """Record how an output was produced, next to it as ``<name>.manifest.json``."""
    output = Path(output)
    path = output.with_name(output.name + ".manifest.json")
    doc = {"command": command, "config": config, "seed": seed, "versions": versions()}
    if extra:
        doc["summary"] = extra
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, default=_jsonable) + "\n")
    return path


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)
