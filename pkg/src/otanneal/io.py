"""CSV and manifest writers.

CSVs use a header row, LF line endings and floats printed with 17
significant digits, so parsing a file back reproduces every value exactly.
Each CSV is paired with a ``<basename>.json`` manifest.
"""

import csv
import json
import math
import os
from importlib import resources

import numpy as np

__all__ = ["emit_csv", "format_value", "load_schemas", "read_csv", "write_manifest"]


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def emit_csv(header, rows, path):
    """Write ``rows`` under ``header`` to ``path``; returns the path."""
    header = list(header)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            row = list(row)
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
            w.writerow([format_value(v) for v in row])
    return path


def read_csv(path):
    """Header and rows of a CSV with numeric fields parsed as float."""
    with open(path, encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = []
        for row in r:
            out = []
            for v in row:
                try:
                    out.append(float(v))
                except ValueError:
                    out.append(v)
            rows.append(out)
    return header, rows


def write_manifest(csv_path, manifest):
    """Write the manifest next to ``csv_path`` with the same basename."""
    path = os.path.splitext(csv_path)[0] + ".json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return path


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def load_schemas():
    """Column schemas of every CSV the command line writes."""
    text = resources.files("otanneal").joinpath("schemas/csv_schemas.json").read_text("utf-8")
    return json.loads(text)
