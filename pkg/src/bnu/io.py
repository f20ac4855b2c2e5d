"""Matrix CSV IO, run configuration files, and result emission."""

import json
import os
from dataclasses import fields
from pathlib import Path

import numpy as np

from .exceptions import InputError, ParseError


def _is_number(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def load_matrix(path):
    """Read a comma-separated numeric matrix, one row per line.

    A single leading header line is skipped when its first token is not a
    number.  Blank lines are ignored.

    Raises
    ------
    ParseError
        On an empty file, a ragged row or a non-numeric cell; the message
        names the offending line.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    rows = []
    width = None
    first = True
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        cells = [c.strip() for c in line.split(",")]
        if first:
            first = False
            if not _is_number(cells[0]):
                continue
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(f"expected {width} columns, found {len(cells)}", line=lineno)
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            bad = next(c for c in cells if not _is_number(c))
            raise ParseError(f"non-numeric cell {bad!r}", line=lineno) from None
    if not rows:
        # point at the line after the last one read (1 for an empty file)
        raise ParseError(f"{path} contains no numeric rows", line=len(text.splitlines()) + 1 if text.strip() else 1)
    return np.array(rows, dtype=float)


def format_float(x):
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(x))


def save_matrix(path, M, header=None):
    M = np.atleast_2d(np.asarray(M, float))
    with open(path, "w") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in M:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_trace(path, trace):
    with open(path, "w") as fh:
        for rec in trace:
            fh.write(json.dumps(_json_ready(rec.as_dict())) + "\n")


def write_plotdata(out_dir, trace):
    plot = Path(out_dir) / "plotdata"
    plot.mkdir(parents=True, exist_ok=True)
    series = {"K_vs_sweep": "K", "log_posterior_vs_sweep": "log_posterior",
              "sigma_z2_vs_sweep": "sigma_z2"}
    for name, attr in series.items():
        with open(plot / f"{name}.csv", "w") as fh:
            fh.write("x,y\n")
            for rec in trace:
                fh.write(f"{rec.sweep},{format_float(getattr(rec, attr))}\n")


def save_result(result, out_dir, ground_truth=None):
    """Write endmembers, abundances, trace, plot series and a JSON report.

    Parameters
    ----------
    result : UnmixingResult
    out_dir : path
        Created if missing.
    ground_truth : GroundTruth, optional
        When given, the report also carries the matched-endmember metrics.

    Returns
    -------
    dict
        The report written to ``report.json``.
    """
    from .metrics import evaluate

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_matrix(out / "endmembers.csv", result.endmembers)
    save_matrix(out / "abundances.csv", result.abundances)
    write_trace(out / "trace.jsonl", result.trace)
    write_plotdata(out, result.trace)
    report = {
        "estimated_K": int(result.estimated_K),
        "map_log_posterior": float(result.map_log_posterior),
        "map_sweep": int(result.map_sweep),
        "sigma_z2": float(result.map_state.sigma_z2),
    }
    if ground_truth is not None:
        report.update(evaluate(result.endmembers, result.abundances,
                               ground_truth.F_true, ground_truth.S_true).as_dict())
    with open(out / "report.json", "w") as fh:
        json.dump(_json_ready(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


# ---------------------------------------------------------------- config files

def parse_config_text(text):
    """Parse flat ``key = value`` lines; ``#`` starts a comment.

    Returns a dict of raw string values.  Duplicate keys keep the last value.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {raw.strip()!r}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParseError("empty key", line=lineno)
        out[key.replace("-", "_")] = value
    return out


def read_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def coerce(value, kind, key="value"):
    """Convert a raw config string to ``kind`` (bool, int, float, str or optional float)."""
    if not isinstance(value, str):
        return value
    v = value.strip()
    try:
        if kind is bool:
            low = v.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(v)
        if kind is int:
            f = float(v)
            if f != int(f):
                raise ValueError(v)
            return int(f)
        if kind is float:
            return float(v)
        if kind == "optional_float":
            return None if v.lower() in ("", "none", "null") else float(v)
    except ValueError:
        raise InputError(f"{key}: cannot interpret {value!r} as {getattr(kind, '__name__', kind)}") from None
    return v


def dataclass_kwargs(cls, raw, kinds=None):
    """Pick the entries of ``raw`` that name fields of dataclass ``cls`` and coerce them."""
    kinds = kinds or {}
    out = {}
    for f in fields(cls):
        if f.name in raw:
            kind = kinds.get(f.name)
            if kind is None:
                kind = f.type if f.type in (bool, int, float, str) else {
                    "bool": bool, "int": int, "float": float, "str": str}.get(f.type, str)
            out[f.name] = coerce(raw[f.name], kind, f.name)
    return out


def write_resolved_config(path, values):
    """Write ``values`` as sorted ``key = value`` lines."""
    with open(path, "w") as fh:
        for key in sorted(values):
            v = values[key]
            if isinstance(v, float):
                v = format_float(v)
            fh.write(f"{key} = {v}\n")


def ensure_writable_dir(path):
    """Create ``path`` if needed and check that files can be written there."""
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {p}: {exc}") from exc
    if not os.access(p, os.W_OK):
        raise InputError(f"output directory {p} is not writable")
    return p
