"""CSV and JSON writers shared by the samplers and the command-line driver.

Every file starts with ``#``-prefixed metadata lines (schema version,
package version, seed, full config) so that it can be regenerated
exactly.  Floats are written with 17 significant digits, which round-trips
IEEE doubles; output is byte-identical for identical inputs.
"""

from __future__ import annotations

import json
import os

import numpy as np

from . import __version__

CSV_SCHEMA_VERSION = 1


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def metadata_lines(schema: str, metadata: dict | None = None):
    meta = {"schema": schema, "schema_version": CSV_SCHEMA_VERSION, "version": __version__}
    meta.update(metadata or {})
    return [f"# {k}: {json.dumps(v, sort_keys=True, default=_default)}" for k, v in meta.items()]


def _default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_csv(path, schema: str, header, rows, metadata: dict | None = None):
    """Write ``rows`` under ``header`` with a metadata preamble; returns the path."""
    lines = metadata_lines(schema, metadata)
    lines.append(",".join(header))
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return os.fspath(path)


def write_json(path, doc: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, default=_default)
        fh.write("\n")
    return os.fspath(path)


def read_csv(path):
    """Parse a file written by :func:`write_csv` into ``(metadata, header, float array)``."""
    meta, header, rows = {}, None, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                k, _, v = line[2:].partition(": ")
                meta[k] = json.loads(v)
            elif header is None:
                header = line.split(",")
            elif line:
                rows.append(line.split(","))
    data = np.array([[_parse(c) for c in r] for r in rows], dtype=object) if rows else np.zeros((0, len(header)))
    return meta, header, data


def _parse(cell):
    try:
        return float(cell)
    except ValueError:
        return cell
