"""Change-point detection quality metrics.

Positions follow one convention everywhere: a change point ``c`` is the
last index of the old segment, so observation ``i`` belongs to segment
``#{c_j : c_j < i}``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import check_positions

DEFAULT_MARGIN = 50


@dataclass(frozen=True)
class EvalReport:
    tp_count: int
    n_true: int
    n_detected: int
    precision: float
    recall: float
    f1: float
    rand_index: float
    margin: int = DEFAULT_MARGIN
    pairs: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["pairs"] = " ".join(f"{a}:{b}" for a, b in self.pairs)
        return out


def match_change_points(true_cps: Sequence[int], detected_cps: Sequence[int],
                        margin: int = DEFAULT_MARGIN) -> list[tuple[int, int]]:
    """One-to-one matching of true and detected change points.

    Candidate pairs with ``|detected - true| < margin`` are taken in order of
    increasing distance (ties: earlier detection, then earlier true point);
    each point is used at most once. Returns ``(true, detected)`` pairs
    sorted by the true position.
    """
    if margin < 1:
        raise ValueError("margin must be >= 1")
    true_cps = check_positions(true_cps, "true_cps")
    detected_cps = check_positions(detected_cps, "detected_cps")
    cand = []
    for i, tau in enumerate(true_cps):
        lo = np.searchsorted(detected_cps, tau - margin, side="right")
        hi = np.searchsorted(detected_cps, tau + margin, side="left")
        for j in range(lo, hi):
            cand.append((abs(int(detected_cps[j]) - int(tau)), int(detected_cps[j]), int(tau), i, j))
    cand.sort()
    used_t, used_d, pairs = set(), set(), []
    for _, det, tau, i, j in cand:
        if i in used_t or j in used_d:
            continue
        used_t.add(i)
        used_d.add(j)
        pairs.append((tau, det))
    return sorted(pairs)


def precision_recall_f1(tp_count: int, m: int, n_true: int) -> tuple[float, float, float]:
    if n_true == 0:
        raise ValueError("no true change points to evaluate")
    if tp_count > min(m, n_true):
        raise ValueError("tp_count exceeds the number of true or detected points")
    precision = tp_count / m if m else 0.0
    recall = tp_count / n_true
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def _segment_bounds(cps: np.ndarray, T: int) -> np.ndarray:
    if cps.size and (cps[0] < 1 or cps[-1] > T):
        raise ValueError("change point outside [1, T]")
    return np.concatenate([[0], cps, [T]])


def _pairs(x):
    x = np.asarray(x, dtype=np.int64)
    return x * (x - 1) // 2


def rand_index(true_cps: Sequence[int], detected_cps: Sequence[int], T: int) -> float:
    """Rand index between the segmentations induced by two change-point lists.

    Counts pairs on which both segmentations agree (same segment in both or
    different segments in both) through segment sizes and overlaps, without
    touching individual observation pairs.
    """
    if T < 2:
        raise ValueError("too few observations")
    a = _segment_bounds(check_positions(true_cps, "true_cps"), T)
    b = _segment_bounds(check_positions(detected_cps, "detected_cps"), T)
    # overlaps of the two interval partitions are the intervals of the merged boundary set
    merged = np.union1d(a, b)
    together_true = _pairs(np.diff(a)).sum()
    together_det = _pairs(np.diff(b)).sum()
    together_both = _pairs(np.diff(merged)).sum()
    total = T * (T - 1) // 2
    agree = total - together_true - together_det + 2 * together_both
    return float(agree / total)


def rand_index_bruteforce(true_cps: Sequence[int], detected_cps: Sequence[int], T: int) -> float:
    """O(T^2) reference implementation of :func:`rand_index`."""
    if T < 2:
        raise ValueError("too few observations")
    for cps in (true_cps, detected_cps):
        if any(c < 1 or c > T for c in cps):
            raise ValueError("change point outside [1, T]")

    def labels(cps):
        return [sum(1 for c in cps if c < i) for i in range(1, T + 1)]

    la, lb = labels(true_cps), labels(detected_cps)
    agree = 0
    for i in range(T):
        for j in range(i + 1, T):
            agree += (la[i] == la[j]) == (lb[i] == lb[j])
    return agree / (T * (T - 1) / 2)


def evaluate(true_cps: Sequence[int], detected_cps: Sequence[int], T: int,
             margin: int = DEFAULT_MARGIN) -> EvalReport:
    pairs = match_change_points(true_cps, detected_cps, margin)
    precision, recall, f1 = precision_recall_f1(len(pairs), len(detected_cps), len(true_cps))
    return EvalReport(tp_count=len(pairs), n_true=len(true_cps), n_detected=len(detected_cps),
                      precision=precision, recall=recall, f1=f1,
                      rand_index=rand_index(true_cps, detected_cps, T), margin=margin,
                      pairs=tuple(pairs))
