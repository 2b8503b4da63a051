"""
Stationary Ornstein-Uhlenbeck process z(theta_t omega) driven by a cadlag path:
z(theta_t omega) = omega(t) - int_{-inf}^0 e^s omega(t + s) ds
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from .config import sim_config
from .errors import DomainError, RangeError
from .models import GrowthReport
from .noise import ArrayLike, CadlagPath, NoiseScenario, build_scenario

logger = logging.getLogger(__name__)

# runner(fn, keys) -> {key: fn(key)}; services pass a worker-pool fan-out
Runner = Callable[[Callable, Sequence], Dict]


def run_serial(fn: Callable, keys: Iterable) -> Dict:
    return {key: fn(key) for key in keys}


def _segment_slopes(path: CadlagPath) -> Tuple[np.ndarray, np.ndarray]:
    """Cell lengths h_i and driver increments d_i inside each cell (0 for step paths)"""
    h = np.diff(path.times)
    d = np.diff(path.values) if path.kind == "linear" else np.zeros_like(h)
    return h, d


def _cell_forcing(v: np.ndarray, h: np.ndarray, d: np.ndarray) -> np.ndarray:
    """int over one cell of e^{r - t_(i+1)} omega(r) dr, exact for the cell's piece"""
    em = np.exp(-h)
    return v * (1.0 - em) + (d / h) * (h - 1.0 + em)


# ===============================
# POINTWISE EVALUATION
# ===============================

def stationary_z(path: CadlagPath, t: float, tail: Optional[float] = None) -> Tuple[float, float]:
    """
    z(theta_t omega) with the history integral truncated at t - tail.

    The driver is frozen at omega(t - tail) before the cut, which keeps z of a
    constant path exactly 0. Returns (value, error bound).
    """
    tail = sim_config.ou_tail if tail is None else tail
    if tail <= 0:
        raise DomainError(f"tail must be positive, got {tail}")
    lo = t - tail
    if lo < path.start or t > path.end:
        needed = max(path.start - lo, t - path.end, 0.0)
        raise RangeError(f"stationary z at t = {t} needs the path on [{lo}, {t}]", needed=needed)

    window = path.restrict(lo, t)
    h, d = _segment_slopes(window)
    forcing = _cell_forcing(window.values[:-1], h, d)
    decay = np.exp(-(t - window.times[1:]))
    history = np.exp(-tail) * window.values[0] + float(np.sum(decay * forcing))
    value = float(path(t)) - history
    return value, tail_error_bound(path, t, tail)


def tail_error_bound(path: CadlagPath, t: float, tail: float) -> float:
    """2 e^{-tail} sup |omega| over the stored part of (-inf, t - tail]"""
    cut = t - tail
    if cut <= path.start:
        return float(2.0 * np.exp(-tail) * abs(path.values[0]))
    return float(2.0 * np.exp(-tail) * path.sup_abs(path.start, cut))


# ===============================
# WHOLE-PATH OU
# ===============================

@dataclass(frozen=True, eq=False)
class OuPath:
    """
    z(theta_t omega) on the grid of its driving path.

    Off-grid values and the running integral Z(t) = int_0^t z use the exact
    solution of dz = -z dt + d omega on each cell. Values are trusted from
    base.start + tail_horizon onward.
    """
    base: CadlagPath
    times: np.ndarray
    values: np.ndarray
    tail_horizon: float
    tail_bound: float
    slopes: np.ndarray = field(repr=False)
    left_values: np.ndarray = field(repr=False)
    cumulative: np.ndarray = field(repr=False)
    origin: float = field(default=0.0, repr=False)

    @property
    def start(self) -> float:
        return float(self.base.start + self.tail_horizon)

    @property
    def end(self) -> float:
        return self.base.end

    def _locate(self, t: ArrayLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        arr = np.asarray(t, dtype=float)
        flat = np.atleast_1d(arr)
        if flat.size and (flat.min() < self.start - 1e-12 or flat.max() > self.end):
            needed = max(self.start - float(flat.min()), float(flat.max()) - self.end, 0.0)
            raise RangeError(
                f"OU evaluation range [{flat.min()}, {flat.max()}] outside trusted window "
                f"[{self.start}, {self.end}]",
                needed=needed,
            )
        idx = np.clip(np.searchsorted(self.times, flat, side="right") - 1, 0, self.times.size - 1)
        return arr, idx, flat - self.times[idx]

    def __call__(self, t: ArrayLike) -> Union[float, np.ndarray]:
        arr, idx, delta = self._locate(t)
        em = np.exp(-delta)
        out = self.values[idx] * em + self.slopes[idx] * (1.0 - em)
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def left_limit(self, t: ArrayLike) -> Union[float, np.ndarray]:
        """z(t-): differs from z(t) where the driver jumps"""
        arr, idx, delta = self._locate(t)
        em = np.exp(-delta)
        out = np.where(delta == 0.0, self.left_values[idx],
                       self.values[idx] * em + self.slopes[idx] * (1.0 - em))
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def integral(self, t: ArrayLike) -> Union[float, np.ndarray]:
        """Z(t) = int_0^t z(theta_r omega) dr, exact on the piecewise representation"""
        arr, idx, delta = self._locate(t)
        out = _running_integral(self, idx, delta) - self.origin
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def grid_values(self, lo: float, hi: float, left_limits: bool = False) -> Tuple[np.ndarray, np.ndarray]:
        """(times, z) at the grid points inside [lo, hi] plus the endpoints"""
        inner = self.times[(self.times > lo) & (self.times < hi)]
        grid = np.concatenate([[lo], inner, [hi]])
        vals = self.left_limit(grid) if left_limits else self(grid)
        return grid, np.asarray(vals)

    def sup_abs(self, lo: float, hi: float) -> float:
        _, right = self.grid_values(lo, hi)
        _, left = self.grid_values(lo, hi, left_limits=True)
        return float(max(np.max(np.abs(right)), np.max(np.abs(left))))


def _running_integral(ou: OuPath, idx: np.ndarray, delta: np.ndarray) -> np.ndarray:
    em = np.exp(-delta)
    return ou.cumulative[idx] + ou.values[idx] * (1.0 - em) + ou.slopes[idx] * (delta - 1.0 + em)


def ou_path(path: CadlagPath, tail: Optional[float] = None) -> OuPath:
    """Run dz = -z dt + d omega along the whole path, history frozen before path.start"""
    tail = sim_config.ou_min_tail if tail is None else tail
    if path.end - path.start <= tail:
        raise RangeError(
            f"path of length {path.end - path.start:.3f} cannot host an OU tail of {tail}",
            needed=tail - (path.end - path.start),
        )
    h, d = _segment_slopes(path)
    forcing = _cell_forcing(path.values[:-1], h, d)
    history = np.empty(path.times.size)
    history[0] = path.values[0]
    if np.allclose(h, h[0], rtol=1e-9, atol=0.0):
        # uniform grid: I_(i+1) = e^{-h} I_i + f_i is a first-order IIR filter
        a = np.exp(-h[0])
        filtered, _ = lfilter([1.0], [1.0, -a], forcing, zi=np.array([a * history[0]]))
        history[1:] = filtered
    else:
        for i in range(h.size):
            history[i + 1] = np.exp(-h[i]) * history[i] + forcing[i]
    values = path.values - history

    em = np.exp(-h)
    slopes = np.append(d / h, 0.0)
    left_values = np.concatenate([[values[0]], values[:-1] * em + slopes[:-1] * (1.0 - em)])
    cell_int = values[:-1] * (1.0 - em) + slopes[:-1] * (h - 1.0 + em)
    cumulative = np.concatenate([[0.0], np.cumsum(cell_int)])
    for arr in (values, slopes, left_values, cumulative):
        arr.setflags(write=False)

    bound = float(2.0 * np.exp(-tail) * np.max(np.abs(path.values)))
    ou = OuPath(path, path.times, values, float(tail), bound, slopes, left_values, cumulative)
    if path.start <= 0.0 <= path.end:
        idx = np.clip(np.searchsorted(path.times, [0.0], side="right") - 1, 0, path.times.size - 1)
        origin = float(_running_integral(ou, idx, 0.0 - path.times[idx])[0])
        object.__setattr__(ou, "origin", origin)
    return ou


def scenario_ou(scenario: NoiseScenario, tail: Optional[float] = None) -> OuPath:
    """OU path of the scenario's driver W(S_t) (W itself at alpha = 2)"""
    return ou_path(scenario.subordinated, tail)


# ===============================
# DIAGNOSTICS
# ===============================

def verify_growth(ou: OuPath, T_probe: float, tolerance: float = 0.25) -> GrowthReport:
    """Sublinear growth of z and of its running mean at +/- T_probe (soft gate)"""
    if T_probe <= 0:
        raise DomainError(f"T_probe must be positive, got {T_probe}")
    ratios = []
    for sign in (1.0, -1.0):
        lo, hi = sorted((sign * T_probe / 2.0, sign * T_probe))
        grid, vals = ou.grid_values(lo, hi)
        ratios.append(np.max(np.abs(vals) / np.abs(grid)))
    max_ratio = float(max(ratios))
    mean_plus = abs(float(ou.integral(T_probe))) / T_probe
    mean_minus = abs(float(ou.integral(-T_probe))) / T_probe
    passed = max(max_ratio, mean_plus, mean_minus) < tolerance
    if not passed:
        logger.warning(
            f"Growth check at T={T_probe}: ratio={max_ratio:.4g}, means=({mean_plus:.4g}, {mean_minus:.4g}) "
            f"exceed {tolerance}"
        )
    return GrowthReport(T_probe=T_probe, max_ratio=max_ratio, mean_plus=mean_plus,
                        mean_minus=mean_minus, passed=bool(passed))


def sup_difference(a: OuPath, b: OuPath, lo: float, hi: float) -> float:
    """sup over [lo, hi] of |a - b| at the union of both grids, right values and left limits"""
    inner = np.union1d(a.times, b.times)
    grid = np.concatenate([[lo], inner[(inner > lo) & (inner < hi)], [hi]])
    right = np.abs(np.asarray(a(grid)) - np.asarray(b(grid)))
    left = np.abs(np.asarray(a.left_limit(grid)) - np.asarray(b.left_limit(grid)))
    return float(max(right.max(), left.max()))


def coupled_ou_distance(alpha: float, seed: int, T: float, tail: Optional[float] = None,
                        mesh: Optional[float] = None) -> float:
    """sup_{[-T, T]} |z^alpha - z| for one seed, alpha scenario and its Brownian twin"""
    tail = sim_config.ou_min_tail if tail is None else tail
    scenario = build_scenario(alpha, seed, horizon=(T + tail + 1.0, T), mesh=mesh)
    if scenario.is_brownian:
        return 0.0
    z_alpha = scenario_ou(scenario, tail)
    z_two = scenario_ou(scenario.brownian_twin(), tail)
    return sup_difference(z_alpha, z_two, -T, T)


def ou_convergence_table(
    alphas: Sequence[float],
    p: float,
    T: float,
    n: int,
    seed0: int = 0,
    mesh: Optional[float] = None,
    tail: Optional[float] = None,
    runner: Runner = run_serial,
) -> pd.DataFrame:
    """Monte Carlo estimate of E sup_{[-T, T]} |z^alpha - z|^p per alpha (columns alpha,p,T,n,estimate,stderr)"""
    if not (0.0 < p < 2.0):
        raise DomainError(f"moment p must lie in (0, 2), got {p}", {"p": p})
    for alpha in alphas:
        if not (1.0 < alpha <= 2.0):
            raise DomainError(f"alpha must lie in (1, 2], got {alpha}", {"alpha": alpha})
    if n < 1:
        raise DomainError(f"sample count must be positive, got {n}")

    keys = [(alpha, seed0 + i) for alpha in alphas for i in range(n)]
    results = runner(lambda key: coupled_ou_distance(key[0], key[1], T, tail, mesh), keys)

    rows: List[Dict] = []
    for alpha in alphas:
        sample = np.array([results[(alpha, seed0 + i)] for i in range(n)]) ** p
        stderr = float(sample.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        rows.append({"alpha": alpha, "p": p, "T": T, "n": n,
                     "estimate": float(sample.mean()), "stderr": stderr})
        logger.info(f"OU convergence alpha={alpha}: estimate={rows[-1]['estimate']:.6g} (stderr {stderr:.3g})")
    return pd.DataFrame(rows, columns=["alpha", "p", "T", "n", "estimate", "stderr"])
