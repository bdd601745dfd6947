"""CSV and key=value formats for series, annotations, scores, reports and run configs.

Floats are written with ``repr``, the shortest string that parses back to
the same double, so every writer round-trips exactly and is byte-stable.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .core import Annotation, TimeSeries
from .detect import DetectionResult, ScoreSeries
from .metrics import EvalReport


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_rows(path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------- series


def read_series(path) -> TimeSeries:
    """Read a ``t,x1,...,xd`` CSV. The ``t`` column is optional.

    A file whose first row is numeric is read as headerless data. Time
    indices must be consecutive integers; the first one becomes
    ``start_index``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: empty series file")
    header = [c.strip() for c in rows[0][1]]
    try:
        [float(c) for c in header]
        has_header = False
    except ValueError:
        has_header = True
    has_t = has_header and header[0].lower() == "t"
    body = rows[1:] if has_header else rows
    width = len(header)
    values, times = [], []
    for lineno, row in body:
        if len(row) != width:
            raise ValueError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
        try:
            nums = [float(c) for c in row]
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed row {','.join(row)!r}") from None
        if not all(math.isfinite(v) for v in nums):
            raise ValueError(f"{path}:{lineno}: non-finite value")
        if has_t:
            if not nums[0].is_integer():
                raise ValueError(f"{path}:{lineno}: time index must be an integer")
            times.append(int(nums[0]))
            nums = nums[1:]
        values.append(nums)
    if not values or not values[0]:
        raise ValueError(f"{path}: no observations")
    start = 1
    if has_t:
        t = np.asarray(times)
        if np.any(np.diff(t) <= 0):
            raise ValueError(f"{path}: time index must be strictly increasing")
        if np.any(np.diff(t) != 1):
            raise ValueError(f"{path}: irregular time index is not supported")
        start = int(t[0])
    return TimeSeries(np.asarray(values, dtype=float), start_index=start)


def write_series(series: TimeSeries, path) -> None:
    header = ["t"] + [f"x{j + 1}" for j in range(series.d)]
    _write_rows(path, header, ([t, *row] for t, row in zip(series.index, series.values)))


# ---------------------------------------------------------------- annotations


def read_annotation(path) -> Annotation:
    """One integer change point per line, strictly increasing."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"annotation file not found: {path}")
    cps = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            cps.append(int(line))
        except ValueError:
            raise ValueError(f"{path}:{lineno}: not an integer: {line!r}") from None
    if any(b <= a for a, b in zip(cps, cps[1:])):
        raise ValueError(f"{path}: change points must be sorted and unique")
    return Annotation(tuple(cps))


def write_annotation(cps, path) -> None:
    cps = list(cps)
    Path(path).write_text("".join(f"{int(c)}\n" for c in cps))


# ---------------------------------------------------------------- scores

SCORE_COLUMNS = ("t", "d_raw", "d_bar", "d_bar_shifted", "is_detection")


def write_scores(result: DetectionResult, path) -> None:
    """Score CSV on the union of the online and shifted step grids.

    ``d_raw`` and ``d_bar`` are given at online time ``t``;
    ``d_bar_shifted`` is ``d_bar(t + l + n)``. Undefined cells are empty.
    ``is_detection`` marks detected positions (shifted time index).
    """
    score = result.score
    if not score.shifted:
        raise ValueError("write_scores expects a shifted score series")
    online = score.online_times
    if online.size == 0:
        _write_rows(path, SCORE_COLUMNS, [])
        return
    step = score.n
    grid = np.arange(score.times[0], online[-1] + 1, step)
    raw = dict(zip(online.tolist(), score.raw.tolist()))
    bar = dict(zip(online.tolist(), score.smoothed.tolist()))
    shifted = dict(zip(score.times.tolist(), score.smoothed.tolist()))
    det = set(int(c) for c in result.detected_cps)
    rows = [(t, raw.get(t), bar.get(t), shifted.get(t), int(t in det)) for t in grid.tolist()]
    _write_rows(path, SCORE_COLUMNS, rows)


def read_scores(path, l: int | None = None, n: int | None = None) -> tuple[ScoreSeries, np.ndarray]:
    """Inverse of :func:`write_scores`: the shifted ScoreSeries and the detections."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != SCORE_COLUMNS:
            raise ValueError(f"{path}: not a score file (header {header!r})")
        rows = [r for r in reader if r]

    def num(c):
        return float(c) if c != "" else math.nan

    t = np.array([int(r[0]) for r in rows], dtype=np.int64)
    raw = np.array([num(r[1]) for r in rows])
    bar = np.array([num(r[2]) for r in rows])
    sh = np.array([num(r[3]) for r in rows])
    det = t[np.array([r[4] == "1" for r in rows], dtype=bool)] if rows else np.array([], dtype=np.int64)
    have_sh = ~np.isnan(sh)
    have_on = ~np.isnan(raw)
    if n is None:
        n = int(t[1] - t[0]) if t.size > 1 else 1
    if l is None:
        # online times are shifted times + l + n
        l = int(t[have_on][0] - t[have_sh][0]) - n if have_on.any() else 0
    score = ScoreSeries(times=t[have_sh], raw=raw[have_on], smoothed=sh[have_sh], l=l, n=n, shifted=True)
    return score, det


def read_detections(path) -> np.ndarray:
    """Detections from a score CSV or a plain one-per-line file."""
    path = Path(path)
    first = path.read_text().split("\n", 1)[0]
    if first.startswith("t,"):
        return read_scores(path)[1]
    return np.asarray(read_annotation(path).true_cps, dtype=np.int64)


# ---------------------------------------------------------------- reports

REPORT_KEYS = ("tp_count", "n_true", "n_detected", "precision", "recall", "f1", "rand_index", "margin", "pairs")


def report_csv_header() -> str:
    return ",".join(REPORT_KEYS)


def report_csv_row(report: EvalReport) -> str:
    d = report.as_dict()
    return ",".join(d[k] if k == "pairs" else _fmt(d[k]) for k in REPORT_KEYS)


def format_report(report: EvalReport) -> str:
    d = report.as_dict()
    return "".join(f"{k}={d[k] if k == 'pairs' else _fmt(d[k])}\n" for k in REPORT_KEYS)


def write_report(report: EvalReport, path) -> None:
    """``key=value`` lines at ``path`` and a one-row CSV next to it (``.csv`` suffix)."""
    path = Path(path)
    path.write_text(format_report(report))
    path.with_suffix(".csv").write_text(report_csv_header() + "\n" + report_csv_row(report) + "\n")


def read_report(path) -> EvalReport:
    kv = read_kv(path)
    pairs = tuple(tuple(int(x) for x in p.split(":")) for p in kv.get("pairs", "").split())
    ints = {"tp_count", "n_true", "n_detected", "margin"}
    vals = {k: (int(v) if k in ints else float(v)) for k, v in kv.items() if k != "pairs"}
    return EvalReport(pairs=pairs, **vals)


# ---------------------------------------------------------------- key=value config


def read_kv(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment, blank lines are skipped."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ValueError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _int_tuple(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.replace(",", " ").split())


# key -> (parser, required)
RUN_CONFIG_SCHEMA = {
    "algo": (str, True),
    "k": (int, False),
    "n": (int, False),
    "l": (int, False),
    "n_epochs": (int, False),
    "lr": (float, False),
    "alpha": (float, False),
    "hidden": (_int_tuple, False),
    "activation": (str, False),
    "scale": (str, False),
    "ratio_head": (str, False),
    "seed": (int, False),
    "threshold": (float, False),
    "min_distance": (int, False),
    "margin": (int, False),
    "scores": (str, False),
    "plot": (str, False),
}


def read_run_config(path) -> dict:
    """Parse and validate a run configuration against :data:`RUN_CONFIG_SCHEMA`."""
    raw = read_kv(path)
    unknown = sorted(set(raw) - set(RUN_CONFIG_SCHEMA))
    if unknown:
        raise ValueError(f"{path}: unknown keys {unknown}")
    missing = sorted(k for k, (_, req) in RUN_CONFIG_SCHEMA.items() if req and k not in raw)
    if missing:
        raise ValueError(f"{path}: missing required keys {missing}")
    out = {}
    for key, value in raw.items():
        parse = RUN_CONFIG_SCHEMA[key][0]
        try:
            out[key] = parse(value)
        except ValueError:
            raise ValueError(f"{path}: bad value for {key!r}: {value!r}") from None
    return out


def write_run_config(cfg: dict, path) -> None:
    unknown = sorted(set(cfg) - set(RUN_CONFIG_SCHEMA))
    if unknown:
        raise ValueError(f"unknown keys {unknown}")
    lines = []
    for key in RUN_CONFIG_SCHEMA:
        if key in cfg and cfg[key] is not None:
            v = cfg[key]
            v = " ".join(map(str, v)) if isinstance(v, tuple) else (_fmt(v) if isinstance(v, float) else v)
            lines.append(f"{key}={v}")
    Path(path).write_text("\n".join(lines) + "\n")

