"""File formats: delimited tables, IDX tensors, alpha vectors, edge lists,
benchmark report CSVs, and training-report JSON.

Every reader turns malformed input into a :class:`ParseError` carrying the
path plus the line/column or byte offset where parsing stopped — arbitrary
bytes must never escalate into an unlocated exception.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass

import numpy as np

from .data import CLASSIFICATION, REGRESSION, Dataset
from .trainer import TrainReport

REPORT_HEADER = ("run_id", "seed", "method", "learner", "dataset", "metric", "value")

_DELIMITERS = {".csv": ",", ".tsv": "\t", ".txt": "\t"}


class ParseError(ValueError):
    """A located file-format error."""

    def __init__(self, path, message, line=None, column=None, offset=None):
        where = str(path)
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        if offset is not None:
            where += f" (byte offset {offset})"
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line
        self.column = column
        self.offset = offset


def _delimiter_for(path, delimiter):
    if delimiter is not None:
        return delimiter
    suffix = str(path)[str(path).rfind("."):].lower() if "." in str(path) else ""
    return _DELIMITERS.get(suffix, ",")


def _read_table(path, delimiter):
    """All rows of a delimited file, rectangular, as strings."""
    try:
        with open(path, newline="", encoding="utf-8", errors="strict") as fh:
            rows = list(csv.reader(fh, delimiter=delimiter))
    except UnicodeDecodeError as exc:
        raise ParseError(path, f"not valid UTF-8 text: {exc.reason}",
                         offset=exc.start) from exc
    except csv.Error as exc:
        raise ParseError(path, f"malformed delimited data: {exc}") from exc
    if not rows:
        raise ParseError(path, "empty file")
    width = len(rows[0])
    for i, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ParseError(path, f"ragged row: expected {width} fields, got {len(row)}",
                             line=i)
    if width == 0:
        raise ParseError(path, "rows contain no fields", line=1)
    return rows


def _parse_cell(path, token, line, column):
    try:
        value = float(token)
    except ValueError:
        raise ParseError(path, f"malformed number {token!r}", line=line,
                         column=column) from None
    if not np.isfinite(value):
        raise ParseError(path, f"non-finite value {token!r}", line=line, column=column)
    return value


def read_delimited(path, has_header: bool = True, target_column=-1,
                   delimiter: str | None = None, task: str | None = None) -> Dataset:
    """Parse a delimited numeric table into a Dataset.

    The delimiter comes from the extension (.csv comma, .tsv/.txt tab)
    unless given. ``target_column`` is a position (negative allowed) or,
    with a header, a column name. A target whose values all parse as
    numbers is treated as regression; anything else becomes classification
    with labels densely re-mapped in sorted order. ``task`` overrides the
    inference: "classification" re-maps numeric labels too.
    """
    delimiter = _delimiter_for(path, delimiter)
    rows = _read_table(path, delimiter)
    header = None
    first_data_line = 1
    if has_header:
        header = rows[0]
        rows = rows[1:]
        first_data_line = 2
        if not rows:
            raise ParseError(path, "no data rows after the header")
    width = len(rows[0])

    if isinstance(target_column, str):
        if header is None:
            raise ParseError(path, f"target column {target_column!r} needs a header")
        try:
            t_idx = header.index(target_column)
        except ValueError:
            raise ParseError(
                path, f"target column {target_column!r} not in header {header}") from None
    else:
        t_idx = int(target_column)
        if not -width <= t_idx < width:
            raise ParseError(path, f"target column {t_idx} out of range for {width} fields")
        t_idx %= width
    if width < 2:
        raise ParseError(path, "need at least one feature column besides the target")

    if task is not None and task not in (REGRESSION, CLASSIFICATION):
        raise ValueError(f"unknown task {task!r}")

    n = len(rows)
    features = np.empty((n, width - 1))
    raw_target = []
    for i, row in enumerate(rows):
        line = first_data_line + i
        k = 0
        for c, token in enumerate(row):
            if c == t_idx:
                raw_target.append(token.strip())
                continue
            features[i, k] = _parse_cell(path, token.strip(), line, c + 1)
            k += 1

    numeric = True
    values = np.empty(n)
    for i, token in enumerate(raw_target):
        try:
            values[i] = float(token)
        except ValueError:
            numeric = False
            break
    if numeric and not np.all(np.isfinite(values)):
        raise ParseError(path, f"non-finite target value in column {t_idx + 1}")

    if task == REGRESSION or (task is None and numeric):
        if not numeric:
            raise ParseError(path, "regression target contains non-numeric labels")
        return Dataset(features, values, REGRESSION)

    labels = values if numeric else np.asarray(raw_target)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ParseError(path, f"target column has a single distinct label "
                               f"({classes[0]!r}); need at least two classes")
    remap = {label: idx for idx, label in enumerate(classes.tolist())}
    target = np.array([remap[label] for label in labels.tolist()], dtype=np.int64)
    return Dataset(features, target, CLASSIFICATION, class_count=classes.size)


def write_delimited(path, data: Dataset, delimiter: str | None = None) -> None:
    """Write a Dataset with a generic header, target last, full precision."""
    delimiter = _delimiter_for(path, delimiter)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow([f"x{j}" for j in range(data.n_features)] + ["target"])
        for i in range(data.n_samples):
            row = [repr(float(v)) for v in data.features[i]]
            if data.task_kind == CLASSIFICATION:
                row.append(str(int(data.target[i])))
            else:
                row.append(repr(float(data.target[i])))
            writer.writerow(row)


def read_matrix(path, delimiter: str | None = None):
    """A fully numeric table with a header row: returns (matrix, names)."""
    delimiter = _delimiter_for(path, delimiter)
    rows = _read_table(path, delimiter)
    names = [token.strip() for token in rows[0]]
    body = rows[1:]
    if not body:
        raise ParseError(path, "no data rows after the header")
    matrix = np.empty((len(body), len(names)))
    for i, row in enumerate(body):
        for c, token in enumerate(row):
            matrix[i, c] = _parse_cell(path, token.strip(), i + 2, c + 1)
    return matrix, names


# --- IDX tensors -----------------------------------------------------------

_IDX_UBYTE = 0x08


def read_idx(path, scale: bool = True) -> np.ndarray:
    """An IDX unsigned-byte tensor (1-3 dimensions, big-endian sizes).

    Values are scaled from 0-255 to [0, 1] unless ``scale`` is False
    (label files want the raw class bytes).
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise ParseError(path, f"truncated header: expected at least 4 bytes, "
                               f"got {len(blob)}", offset=len(blob))
    if blob[0] != 0 or blob[1] != 0:
        raise ParseError(path, f"bad magic bytes 0x{blob[0]:02x} 0x{blob[1]:02x} "
                               f"(expected 0x00 0x00)", offset=0)
    if blob[2] != _IDX_UBYTE:
        raise ParseError(path, f"unsupported type code 0x{blob[2]:02x} "
                               f"(only unsigned byte 0x08)", offset=2)
    ndim = blob[3]
    if not 1 <= ndim <= 3:
        raise ParseError(path, f"dimension count {ndim} outside 1-3", offset=3)
    header_len = 4 + 4 * ndim
    if len(blob) < header_len:
        raise ParseError(path, f"truncated dimension sizes: expected {header_len} "
                               f"header bytes, got {len(blob)}", offset=len(blob))
    dims = struct.unpack(f">{ndim}I", blob[4:header_len])
    if 0 in dims:
        raise ParseError(path, f"zero-sized dimension in {dims}", offset=4)
    expected = 1  # python ints: fuzzed dimension sizes can overflow int64
    for d in dims:
        expected *= d
    actual = len(blob) - header_len
    if actual != expected:
        raise ParseError(path, f"payload holds {actual} bytes but dimensions "
                               f"{dims} require {expected}", offset=header_len + min(actual, expected))
    tensor = np.frombuffer(blob, dtype=np.uint8, offset=header_len).reshape(dims)
    if scale:
        return tensor.astype(np.float64) / 255.0
    return tensor.copy()


def write_idx(path, tensor) -> None:
    """Write an unsigned-byte tensor in IDX layout."""
    arr = np.asarray(tensor)
    if arr.dtype != np.uint8:
        raise ValueError("IDX writer takes uint8 tensors")
    if not 1 <= arr.ndim <= 3:
        raise ValueError("IDX tensors have 1-3 dimensions")
    with open(path, "wb") as fh:
        fh.write(bytes([0, 0, _IDX_UBYTE, arr.ndim]))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr).tobytes())


def as_feature_matrix(tensor: np.ndarray) -> np.ndarray:
    """Flatten an image tensor to one row-major feature row per image."""
    t = np.asarray(tensor)
    if t.ndim == 1:
        return t[:, None]
    return t.reshape(t.shape[0], -1)


# --- alpha vectors ---------------------------------------------------------


def write_alpha(path, alpha) -> None:
    """One probability per line, full decimal precision."""
    a = np.asarray(alpha, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError("alpha must be a vector")
    with open(path, "w", encoding="utf-8") as fh:
        for v in a:
            fh.write(repr(float(v)) + "\n")


def read_alpha(path) -> np.ndarray:
    """Read a probability-per-line file, validating every value into [0, 1]."""
    values = []
    with open(path, encoding="utf-8", errors="replace") as fh:
        for i, raw in enumerate(fh, start=1):
            token = raw.strip()
            if not token:
                raise ParseError(path, "blank line", line=i)
            try:
                v = float(token)
            except ValueError:
                raise ParseError(path, f"malformed number {token!r}", line=i) from None
            if not np.isfinite(v) or not 0.0 <= v <= 1.0:
                raise ParseError(path, f"value {token} outside [0, 1]", line=i)
            values.append(v)
    if not values:
        raise ParseError(path, "empty file")
    return np.array(values)


# --- edge lists ------------------------------------------------------------


def read_edges(path) -> set:
    """Gold edges from `regulator<TAB>target<TAB>{0,1}` lines; keeps the 1s."""
    edges = set()
    with open(path, encoding="utf-8", errors="replace") as fh:
        for i, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ParseError(path, f"expected 3 tab-separated fields, "
                                       f"got {len(fields)}", line=i)
            reg, tgt, flag = (f.strip() for f in fields)
            if flag not in ("0", "1"):
                raise ParseError(path, f"edge flag must be 0 or 1, got {flag!r}",
                                 line=i, column=3)
            if not reg or not tgt:
                raise ParseError(path, "empty gene token", line=i)
            if flag == "1":
                edges.add((reg, tgt))
    return edges


def resolve_edge_names(edges, names) -> set:
    """Map (name, name) pairs to gene indices via the expression header."""
    lookup = {name: i for i, name in enumerate(names)}
    resolved = set()
    for reg, tgt in edges:
        try:
            resolved.add((lookup[reg], lookup[tgt]))
        except KeyError as exc:
            raise ValueError(f"edge gene {exc.args[0]!r} not among the "
                             f"{len(names)} expression columns") from None
    return resolved


def write_edges(path, ranking, names=None) -> None:
    """Edge ranking as `regulator<TAB>target<TAB>weight`, heaviest first."""

    def name(i):
        return names[i] if names is not None else str(i)

    with open(path, "w", encoding="utf-8") as fh:
        for reg, tgt, weight in ranking:
            fh.write(f"{name(reg)}\t{name(tgt)}\t{repr(float(weight))}\n")


# --- benchmark report rows -------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    run_id: str
    seed: int
    method: str
    learner: str
    dataset: str
    metric: str
    value: float


def write_report(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for r in rows:
            writer.writerow([r.run_id, r.seed, r.method, r.learner, r.dataset,
                             r.metric, repr(float(r.value))])


def read_report(path) -> list:
    rows = _read_table(path, ",")
    if tuple(rows[0]) != REPORT_HEADER:
        raise ParseError(path, f"expected header {','.join(REPORT_HEADER)}", line=1)
    out = []
    for i, row in enumerate(rows[1:], start=2):
        try:
            out.append(ReportRow(row[0], int(row[1]), row[2], row[3], row[4],
                                 row[5], float(row[6])))
        except ValueError as exc:
            raise ParseError(path, f"bad report row: {exc}", line=i) from None
    return out


# --- training reports ------------------------------------------------------


def write_train_report(path, report: TrainReport) -> None:
    payload = {
        "objective_per_epoch": report.objective_per_epoch.tolist(),
        "retrain_steps": report.retrain_steps.tolist(),
        "teff_trace": report.teff_trace.tolist(),
        "final_alpha": report.final_alpha.tolist(),
        "selection_score": report.selection_score,
        "seed": report.seed,
        "eta": report.eta,
        "restart_index": report.restart_index,
        "selection_scores": [None if not np.isfinite(s) else s
                             for s in report.selection_scores],
        "collapse_events": report.collapse_events,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def read_train_report(path) -> TrainReport:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(path, f"invalid JSON: {exc.msg}", line=exc.lineno,
                             column=exc.colno) from None
    try:
        return TrainReport(
            objective_per_epoch=np.asarray(payload["objective_per_epoch"], dtype=np.float64),
            retrain_steps=np.asarray(payload["retrain_steps"], dtype=np.int64),
            teff_trace=np.asarray(payload["teff_trace"], dtype=np.float64),
            final_alpha=np.asarray(payload["final_alpha"], dtype=np.float64),
            selection_score=float(payload["selection_score"]),
            seed=int(payload["seed"]),
            eta=float(payload["eta"]),
            restart_index=int(payload["restart_index"]),
            selection_scores=[float("nan") if s is None else float(s)
                              for s in payload["selection_scores"]],
            collapse_events=int(payload["collapse_events"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(path, f"invalid training report: {exc!r}") from None
