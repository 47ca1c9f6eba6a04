"""Report emission: CSV with an echoed config header, JSON mirror, timing sidecar.

Reports contain only quantities fixed by (config, seed); wall-clock time
and worker count go to `<out>.timing.json` so reports stay byte-identical
across runs and pool sizes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

STATUS = {True: "PASS", False: "FAIL", None: "INFO"}


@dataclass
class RunResult:
    rows: list                       # list of flat dicts, one per table row
    summary: dict = field(default_factory=dict)
    passed: bool | None = None
    plot: tuple | None = None        # (kind, data) for plotting.render

    @property
    def status(self):
        return STATUS[self.passed]


def _plain(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def _fmt(v):
    v = _plain(v)
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    if isinstance(v, list):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def render_csv(echo, result: RunResult):
    buf = io.StringIO()
    for k, v in echo.items():
        buf.write(f"# {k}={_fmt(v)}\n")
    buf.write(f"# status={result.status}\n")
    for k, v in result.summary.items():
        buf.write(f"# result.{k}={_fmt(v)}\n")
    cols = []
    for r in result.rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in result.rows:
        w.writerow([_fmt(r.get(k, "")) for k in cols])
    return buf.getvalue()


def _json_safe(v):
    v = _plain(v)
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, list):
        return [_json_safe(x) for x in v]
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    return v


def render_json(echo, result: RunResult):
    doc = {"config": _json_safe(echo), "status": result.status,
           "summary": _json_safe(result.summary), "rows": _json_safe(result.rows)}
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def render(echo, result, fmt="csv"):
    return render_csv(echo, result) if fmt == "csv" else render_json(echo, result)


def error_record(echo, exc, fmt="csv"):
    res = RunResult([{"error": type(exc).__name__, "message": str(exc)}], passed=None)
    text = render(echo, res, fmt)
    return text.replace("status=INFO", "status=ERROR").replace('"status": "INFO"',
                                                               '"status": "ERROR"')


def write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def write_timing(path, runtime, workers, n_paths):
    write(path + ".timing.json", json.dumps({"runtime_s": runtime, "workers": workers,
                                             "paths": n_paths}, indent=2) + "\n")
