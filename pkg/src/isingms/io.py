"""Reading and writing samples, matrices, graphs and tables."""
from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path

import numpy as np

from .recovery import ConfidenceGraph

FLOAT_FORMAT = "%.17g"
ENCODINGS = ("pm1", "01")


class InputError(ValueError):
    """Malformed user input; carries a 1-based row/column when known."""

    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        where = ""
        if row is not None:
            where = f" at row {row}" + (f" col {col}" if col is not None else "")
        super().__init__(message + where)
        self.row, self.col = row, col


def parse_samples(text: str, encoding: str = "pm1") -> np.ndarray:
    """Parse CSV text of integers into an N x n int8 matrix of +-1.

    ``encoding='01'`` (alias ``zero_one``) maps 0 -> -1 and 1 -> +1.
    """
    if encoding == "zero_one":
        encoding = "01"
    if encoding not in ENCODINGS:
        raise InputError(f"unknown encoding {encoding!r}")
    allowed = {"pm1": {"1": 1, "+1": 1, "-1": -1}, "01": {"0": -1, "1": 1}}[encoding]
    rows = []
    width = None
    for r, line in enumerate(csv.reader(_io.StringIO(text)), start=1):
        if not line or all(not cell.strip() for cell in line):
            continue
        if width is None:
            width = len(line)
        elif len(line) != width:
            raise InputError(f"ragged input: expected {width} columns, found {len(line)}", r)
        row = []
        for c, cell in enumerate(line, start=1):
            value = allowed.get(cell.strip())
            if value is None:
                raise InputError(f"entry {cell.strip()!r} is not valid for encoding {encoding}", r, c)
            row.append(value)
        rows.append(row)
    if not rows:
        raise InputError("no samples in input")
    if width < 2:
        raise InputError("need at least two columns (spins)")
    return np.asarray(rows, dtype=np.int8)


def read_samples(path, encoding: str = "pm1") -> np.ndarray:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_samples(text, encoding)


def write_samples(path, data) -> None:
    np.savetxt(path, np.asarray(data, dtype=int), fmt="%d", delimiter=",")


def write_matrix(path, matrix) -> None:
    np.savetxt(path, np.asarray(matrix, dtype=float), fmt=FLOAT_FORMAT, delimiter=",")


def read_matrix(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_rows(path, rows: list[dict], columns: list[str] | None = None) -> None:
    """CSV with a header; floats printed with 17 significant digits."""
    if columns is None:
        columns = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])


def _cell(value):
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    if isinstance(value, np.integer):
        return int(value)
    return "" if value is None else value


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no infinities; a complete graph has an infinite ratio
        return v if np.isfinite(v) else str(v)
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n")


def graph_edge_list(graph: ConfidenceGraph) -> list[dict]:
    """Every pair i < j with its confidence and decision."""
    n = graph.n_nodes
    eta = graph.eta
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            out.append({"i": i, "j": j, "eta": float(eta[i, j]), "bond": bool(graph.adjacency[i, j])})
    return out


def write_graph(out_dir, graph: ConfidenceGraph, meta: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix(out / "eta.csv", graph.eta)
    write_json(out / "edges.json", graph_edge_list(graph))
    if meta is not None:
        write_json(out / "meta.json", meta)


def write_decision_table(path, table: dict) -> None:
    cols = ["n_pp", "n_pm", "n_mp", "n_mm", "m1", "m2", "c12", "eta"]
    arrays = [table[c] for c in cols]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for row in zip(*(a.tolist() for a in arrays)):
            fh.write("%d,%d,%d,%d," % row[:4] + ",".join(FLOAT_FORMAT % v for v in row[4:]) + "\n")


def write_roc(path, rows) -> None:
    """``rows`` of ``(parameter, RecoveryMetrics)`` or dicts with extra keys."""
    flat = []
    for row in rows:
        if isinstance(row, dict):
            flat.append(row)
        else:
            param, m = row
            flat.append({"parameter": float(param), "tpr": m.tpr, "tnr": m.tnr, "fpr": m.fpr, "fnr": m.fnr})
    extra = [k for k in (flat[0] if flat else {}) if k not in ("parameter", "tpr", "tnr", "fpr", "fnr")]
    write_rows(path, flat, extra + ["parameter", "tpr", "tnr", "fpr", "fnr"])
