"""
Distances between cadlag paths and the weighted history norm
"""
import itertools
import logging
from typing import Iterator, Optional, Tuple, Union

import numpy as np

from .errors import ContractViolation, RangeError
from .manifold import HistoryFn, weighted_sup
from .models import PathDistanceReport
from .noise import CadlagPath

logger = logging.getLogger(__name__)

Window = Union[float, Tuple[float, float]]


def _window(window: Window) -> Tuple[float, float]:
    lo, hi = (0.0, float(window)) if np.isscalar(window) else (float(window[0]), float(window[1]))
    if not lo < hi:
        raise RangeError(f"empty window [{lo}, {hi}]")
    return lo, hi


def _inner(path: CadlagPath, lo: float, hi: float) -> np.ndarray:
    return path.times[(path.times > lo) & (path.times < hi)]


def _sup_gap(p1: CadlagPath, p2: CadlagPath, t: np.ndarray, mapped: np.ndarray) -> float:
    """max of |p1(t) - p2(mapped)| over right values and left limits"""
    right = np.abs(np.asarray(p1(t)) - np.asarray(p2(mapped)))
    left = np.abs(np.asarray(p1.left_limit(t)) - np.asarray(p2.left_limit(mapped)))
    return float(max(right.max(), left.max()))


def uniform_distance(p1: CadlagPath, p2: CadlagPath, window: Window) -> float:
    """sup over the window of |p1 - p2|, checked at the union of both grids"""
    lo, hi = _window(window)
    for path in (p1, p2):
        if not path.covers(lo, hi):
            raise RangeError(
                f"window [{lo}, {hi}] outside path horizon [{path.start}, {path.end}]",
                needed=max(path.start - lo, hi - path.end, 0.0),
            )
    grid = np.union1d(np.union1d(_inner(p1, lo, hi), _inner(p2, lo, hi)), [lo, hi])
    return _sup_gap(p1, p2, grid, grid)


# ===============================
# J1
# ===============================

def _j1_objective(p1: CadlagPath, p2: CadlagPath, src: np.ndarray, dst: np.ndarray) -> float:
    """Objective for the piecewise-linear time change with knots src -> dst"""
    slopes = np.diff(dst) / np.diff(src)
    stretch = float(np.max(np.abs(np.log(slopes))))
    lo, hi = src[0], src[-1]
    back = np.interp(_inner(p2, lo, hi), dst, src)
    t = np.union1d(np.union1d(_inner(p1, lo, hi), back), src)
    mapped = np.clip(np.interp(t, src, dst), lo, hi)
    return _sup_gap(p1, p2, t, mapped) + stretch


def _matchings(j1: np.ndarray, j2: np.ndarray) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Order-preserving pairings of jump times, largest pairings first"""
    for m in range(min(j1.size, j2.size), 0, -1):
        for a in itertools.combinations(range(j1.size), m):
            for b in itertools.combinations(range(j2.size), m):
                yield j1[list(a)], j2[list(b)]


def j1_distance_upper(p1: CadlagPath, p2: CadlagPath, window: Window, budget: int = 1000) -> PathDistanceReport:
    """
    Upper bound on the Skorokhod J1 distance.

    Candidates are the identity and piecewise-linear time changes sending
    chosen jump times of p1 onto jump times of p2, in order; at most `budget`
    of them are tried.
    """
    lo, hi = _window(window)
    d_uniform = uniform_distance(p1, p2, (lo, hi))
    best = d_uniform
    best_knots = np.array([[lo, lo], [hi, hi]])
    tried = 1
    exhausted = False

    j1 = p1.jump_times(lo, hi)
    j2 = p2.jump_times(lo, hi)
    j1 = j1[(j1 > lo) & (j1 < hi)]
    j2 = j2[(j2 > lo) & (j2 < hi)]
    for a, b in _matchings(j1, j2):
        if tried >= budget:
            exhausted = True
            break
        src = np.concatenate([[lo], a, [hi]])
        dst = np.concatenate([[lo], b, [hi]])
        value = _j1_objective(p1, p2, src, dst)
        tried += 1
        if value < best:
            best = value
            best_knots = np.column_stack([src, dst])

    if exhausted:
        logger.debug(f"J1 search stopped after {tried} candidates (budget {budget})")
    if best_knots.shape[0] == 2:
        description = "identity"
    else:
        description = "piecewise-linear " + ", ".join(f"{s:.6g}->{d:.6g}" for s, d in best_knots[1:-1])
    return PathDistanceReport(
        d_uniform=d_uniform,
        d_j1_upper=best,
        lambda_used=description,
        knots=best_knots.tolist(),
        candidates_tried=tried,
        budget_exhausted=exhausted,
    )


# ===============================
# HISTORY NORM
# ===============================

def weighted_history_norm(h: HistoryFn, beta: Optional[float] = None) -> float:
    """max over the grid of e^{beta s - Z(s)} ||h(s)||_sigma"""
    if h.weight_path is None:
        raise ContractViolation("history has no weight path; the weighted norm is undefined")
    return weighted_sup(h.grid, h.weight_path, h.beta if beta is None else beta, h.spec.norm(h.states))
