"""Flat key=value files and CSV tables with parameter headers."""

import csv
import os

from . import __version__


def format_value(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(format_value(x) for x in v)
    return str(v)


def read_keyvalue(path):
    out = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{path}:{n}: expected key=value, got {line!r}")
            out[key.strip()] = value.strip()
    return out


def write_keyvalue(path, items):
    with open(path, "w") as fh:
        for k, v in items.items():
            fh.write(f"{k}={format_value(v)}\n")


def write_table(path, columns, rows, params):
    """CSV with ``# key=value`` header lines for every parameter and the code version."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        for k, v in params.items():
            fh.write(f"# {k}={format_value(v)}\n")
        fh.write(f"# code_version={__version__}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(x) for x in row])


def read_table(path):
    """Return ``(params, columns, rows)`` with rows as lists of strings."""
    params, body = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                params[k.strip()] = v.strip()
            else:
                body.append(line)
    rows = list(csv.reader(body))
    return params, rows[0], rows[1:]
