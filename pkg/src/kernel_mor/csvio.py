"""CSV helpers shared by all artifact writers.

Floats are written with 17 significant digits so every value parses back
to the identical double.
"""
import csv
import io

import numpy as np


def fmt(x) -> str:
    return format(float(x), ".17g")


def write_rows(path, header, rows, comments=()):
    buf = io.StringIO(newline="")
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def read_rows(path):
    """Return ``(comments, header, rows)`` with rows as lists of strings."""
    comments, lines = [], []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            else:
                lines.append(line)
    reader = csv.reader(lines)
    header = next(reader)
    return comments, header, [row for row in reader if row]


def write_matrix(path, A, prefix="c"):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    write_rows(path, [f"{prefix}{j + 1}" for j in range(A.shape[1])], A.tolist())


def read_matrix(path):
    _, header, rows = read_rows(path)
    return np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(len(rows), len(header))
