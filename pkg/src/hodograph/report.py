"""Run reports: canonical JSON, schema validation, CSV emitters.

Reports must be byte-identical for identical configurations, so floats
are serialized with a fixed 15-significant-digit format and keys are
written in sorted order by a small serializer of our own; json.dumps
float repr would be stable too, but pinning the format here keeps the
guarantee explicit and independent of interpreter details.
"""

from __future__ import annotations

import csv
import json
from importlib import resources

import numpy as np


def _fmt_float(x: float) -> str:
    if x != x:
        raise ValueError("NaN is not allowed in reports")
    if x in (float("inf"), float("-inf")):
        raise ValueError("infinities are not allowed in reports")
    if x == int(x) and abs(x) < 1e15:
        # keep integral floats readable and stable
        return f"{x:.1f}"
    return format(x, ".15g")


def canonical_json(obj, indent=0) -> str:
    pad = "  " * indent
    pad_in = "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, complex):
        return canonical_json({"re": obj.real, "im": obj.imag}, indent)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = []
        for k in sorted(obj):
            items.append(f"{pad_in}{json.dumps(str(k))}: {canonical_json(obj[k], indent + 1)}")
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        items = [f"{pad_in}{canonical_json(v, indent + 1)}" for v in seq]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_report(path, report: dict):
    text = canonical_json(report) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
    return text


def load_schema():
    with resources.files("hodograph").joinpath("report_schema.json").open() as fh:
        return json.load(fh)


def validate_report(report: dict):
    import jsonschema

    jsonschema.validate(report, load_schema())


def write_points_csv(path, points):
    """Critical points as x, y, multiplicity rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "multiplicity"])
        for z, m in points:
            w.writerow([_fmt_float(float(np.real(z))), _fmt_float(float(np.imag(z))), int(m)])


def write_curves_csv(path, curves):
    """Polylines as x, y, segment-id rows; curves is {segment_id: complex array}."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "segment_id"])
        for name in curves:
            for z in curves[name]:
                w.writerow([_fmt_float(float(np.real(z))), _fmt_float(float(np.imag(z))), name])
