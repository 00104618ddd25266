"""CSV and JSON helpers with line-numbered error reporting."""

import csv
import hashlib
import json
import math

import numpy as np

FORMAT_VERSION = 1


class CSVFormatError(ValueError):
    """Malformed CSV input; the message names the offending line."""


def fmt(x):
    """Format a float with 17 significant digits (round-trip exact)."""
    return f"{float(x):.17g}"


def _open(path_or_file, mode):
    if isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__"):
        return open(path_or_file, mode, newline=""), True
    return path_or_file, False


def read_table(path_or_file, positive=True):
    """Read a CSV of a date label column followed by numeric asset columns.

    Returns
    -------
    labels : list of str
    columns : list of str
        Asset names from the header row.
    values : ndarray, shape (n_rows, n_assets)
    """
    fh, own = _open(path_or_file, "r")
    try:
        rows = list(csv.reader(fh))
    finally:
        if own:
            fh.close()
    rows = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r) and not r[0].startswith("#")]
    if not rows:
        raise CSVFormatError("empty file")
    lineno, header = rows[0]
    header = [h.strip() for h in header]
    if len(header) < 2:
        raise CSVFormatError(f"line {lineno}: header needs a label column and at least one asset column")
    try:
        float(header[1])
    except ValueError:
        pass
    else:
        raise CSVFormatError(f"line {lineno}: missing header row (found numeric value {header[1]!r})")
    labels, values = [], []
    for lineno, row in rows[1:]:
        if len(row) != len(header):
            raise CSVFormatError(f"line {lineno}: expected {len(header)} fields, found {len(row)}")
        try:
            vals = [float(c) for c in row[1:]]
        except ValueError:
            raise CSVFormatError(f"line {lineno}: non-numeric value in {row[1:]!r}") from None
        for name, v in zip(header[1:], vals):
            if not math.isfinite(v) or (positive and v <= 0):
                raise CSVFormatError(f"line {lineno}: value for {name!r} must be a strictly positive number, got {v!r}")
        labels.append(row[0].strip())
        values.append(vals)
    if not values:
        raise CSVFormatError("no data rows")
    return labels, header[1:], np.array(values, dtype=float)


def write_table(path_or_file, header, labels, values, comment=None):
    fh, own = _open(path_or_file, "w")
    try:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for lab, row in zip(labels, values):
            w.writerow([lab] + [fmt(v) for v in row])
    finally:
        if own:
            fh.close()


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return to_jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def fingerprint(config):
    """SHA-256 of the canonical JSON form of ``config``."""
    blob = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def dump_json(obj, path_or_file):
    """Write JSON; floats use ``repr`` which round-trips exactly."""
    obj = {"format_version": FORMAT_VERSION, **to_jsonable(obj)}
    fh, own = _open(path_or_file, "w")
    try:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")
    finally:
        if own:
            fh.close()


def load_json(path_or_file):
    fh, own = _open(path_or_file, "r")
    try:
        obj = json.load(fh)
    finally:
        if own:
            fh.close()
    if obj.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {obj.get('format_version')!r}")
    return obj
