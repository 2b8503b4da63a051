"""
Coupled two-sided noise paths: Brownian motion W, the alpha/2-stable subordinator S
and the subordinated process L_t = W(S_t), plus the shift cocycle theta_t
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.special import gamma

from .config import sim_config
from .errors import ConfigError, DomainError, RangeError

logger = logging.getLogger(__name__)

PathKind = Literal["constant", "linear"]
ArrayLike = Union[float, Sequence[float], np.ndarray]

# Stream tags for np.random.default_rng([seed, tag, ...]); fixed so paths are reproducible
_STREAM_W_POS = 0
_STREAM_W_NEG = 1
_STREAM_S_POS = 2
_STREAM_S_NEG = 3
_STREAM_BRIDGE = 4


def alpha_key(alpha: float) -> int:
    """Integer key identifying alpha in RNG stream seeds"""
    return int(round(alpha * 1_000_000))


# ===============================
# PATHS
# ===============================

@dataclass(frozen=True, eq=False)
class CadlagPath:
    """
    Real path on a strictly increasing time grid.

    kind = "constant" is right-continuous with left limits: the value at t is the
    value at the largest grid point <= t. kind = "linear" interpolates linearly.
    """
    times: np.ndarray
    values: np.ndarray
    kind: PathKind = "linear"
    anchor: float = 0.0
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise ConfigError(f"times and values must be 1-d of equal length, got {times.shape} vs {values.shape}")
        if times.size < 2:
            raise ConfigError("a path needs at least two grid points")
        if np.any(np.diff(times) <= 0):
            raise ConfigError("path times must be strictly increasing")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def covers(self, lo: float, hi: float) -> bool:
        return self.start <= lo and hi <= self.end

    def _check_range(self, t: np.ndarray) -> None:
        if t.size and (t.min() < self.start or t.max() > self.end):
            lo, hi = float(t.min()), float(t.max())
            needed = max(self.start - lo, hi - self.end, 0.0)
            raise RangeError(
                f"evaluation range [{lo}, {hi}] outside path horizon [{self.start}, {self.end}]",
                needed=needed,
            )

    def __call__(self, t: ArrayLike) -> Union[float, np.ndarray]:
        arr = np.asarray(t, dtype=float)
        flat = np.atleast_1d(arr)
        self._check_range(flat)
        if self.kind == "constant":
            idx = np.searchsorted(self.times, flat, side="right") - 1
            out = self.values[idx]
        else:
            out = np.interp(flat, self.times, self.values)
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def left_limit(self, t: ArrayLike) -> Union[float, np.ndarray]:
        """Value just before t (differs from path(t) only at jumps of a constant path)"""
        arr = np.asarray(t, dtype=float)
        flat = np.atleast_1d(arr)
        self._check_range(flat)
        if self.kind == "constant":
            idx = np.clip(np.searchsorted(self.times, flat, side="left") - 1, 0, None)
            out = self.values[idx]
        else:
            out = np.interp(flat, self.times, self.values)
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def jump_times(self, lo: Optional[float] = None, hi: Optional[float] = None) -> np.ndarray:
        """Grid times in [lo, hi] where a constant path changes value"""
        if self.kind != "constant":
            return np.empty(0)
        lo = self.start if lo is None else lo
        hi = self.end if hi is None else hi
        jumps = self.times[1:][np.diff(self.values) != 0]
        return jumps[(jumps >= lo) & (jumps <= hi)]

    def restrict(self, lo: float, hi: float) -> "CadlagPath":
        """Sub-path on [lo, hi]; endpoints are added to the grid"""
        if not self.covers(lo, hi):
            raise RangeError(f"window [{lo}, {hi}] outside path horizon [{self.start}, {self.end}]")
        inner = self.times[(self.times > lo) & (self.times < hi)]
        grid = np.concatenate([[lo], inner, [hi]])
        return CadlagPath(grid, self(grid), self.kind, self.anchor, dict(self.meta))

    def sup_abs(self, lo: float, hi: float) -> float:
        sub = self.restrict(lo, hi)
        return float(np.max(np.abs(sub.values)))


def shift(path: CadlagPath, t: float) -> CadlagPath:
    """
    Shift cocycle: (theta_t path)(s) = path(t + s) - path(t).

    The grid is moved by -t; s = 0 is inserted when t is not a grid point.
    """
    if not (path.start <= t <= path.end):
        raise RangeError(f"shift {t} outside path horizon [{path.start}, {path.end}]",
                         needed=max(path.start - t, t - path.end))
    base = path(t)
    times = path.times - t
    values = path.values - base
    if not np.any(times == 0.0):
        pos = int(np.searchsorted(times, 0.0))
        times = np.insert(times, pos, 0.0)
        values = np.insert(values, pos, 0.0)
    meta = dict(path.meta)
    meta["shift"] = meta.get("shift", 0.0) + t
    return CadlagPath(times, values, path.kind, path.anchor, meta)


# ===============================
# STABLE LAW
# ===============================

def levy_intensity_constant(alpha: float) -> float:
    """C(alpha) = 2^-(1 - alpha/2) * alpha / Gamma(1 - alpha/2), alpha in (0, 2)"""
    if not (0.0 < alpha < 2.0):
        raise DomainError(f"alpha must lie in (0, 2), got {alpha}", {"alpha": alpha})
    return float(2.0 ** (-(1.0 - alpha / 2.0)) * alpha / gamma(1.0 - alpha / 2.0))


def levy_measure_density(alpha: float, x: ArrayLike) -> Union[float, np.ndarray]:
    """Density C(alpha) / x^(1 + alpha/2) of the subordinator's Levy measure on (0, inf)"""
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0):
        raise DomainError("Levy measure density is defined for x > 0 only")
    out = levy_intensity_constant(alpha) / arr ** (1.0 + alpha / 2.0)
    return float(out) if arr.ndim == 0 else out


def positive_stable_variates(index: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """
    Standard totally skewed stable variates with Laplace transform exp(-lam^index).

    Chambers-Mallows-Stuck sampling specialised to beta = 1 (Kanter's form),
    index in (0, 1).
    """
    if not (0.0 < index < 1.0):
        raise DomainError(f"positive stable index must lie in (0, 1), got {index}")
    u = rng.uniform(0.0, np.pi, size)
    e = rng.standard_exponential(size)
    a = index
    left = np.sin(a * u) / np.sin(u) ** (1.0 / a)
    right = (np.sin((1.0 - a) * u) / e) ** ((1.0 - a) / a)
    return left * right


def subordinator_increments(alpha: float, dt: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Increments of S over windows of length dt: dt^(2/alpha) times a standard alpha/2-stable variate"""
    if not (1.0 < alpha < 2.0):
        raise DomainError(f"alpha must lie in (1, 2) for a stable subordinator, got {alpha}")
    if dt <= 0:
        raise ConfigError(f"mesh must be positive, got {dt}", field="mesh")
    return dt ** (2.0 / alpha) * positive_stable_variates(alpha / 2.0, size, rng)


def laplace_check(alpha: float, lambdas: Sequence[float], n: int, seed: int) -> pd.DataFrame:
    """Empirical Laplace transform of a unit-time increment against exp(-lam^(alpha/2))"""
    rng = np.random.default_rng([seed, _STREAM_S_POS, alpha_key(alpha)])
    sample = subordinator_increments(alpha, 1.0, n, rng)
    rows = []
    for lam in lambdas:
        vals = np.exp(-lam * sample)
        estimate = float(vals.mean())
        stderr = float(vals.std(ddof=1) / np.sqrt(n))
        exact = float(np.exp(-lam ** (alpha / 2.0)))
        rows.append({
            "alpha": alpha,
            "lambda": lam,
            "estimate": estimate,
            "exact": exact,
            "stderr": stderr,
            "z_score": (estimate - exact) / stderr if stderr > 0 else 0.0,
        })
    return pd.DataFrame(rows)


# ===============================
# BROWNIAN FIELD
# ===============================

class BrownianField:
    """
    Two-sided Brownian motion stored on a uniform grid and grown in fixed chunks.

    Chunk k of side +/- is drawn from its own stream, so the path does not depend
    on when (or whether) it was extended. Off-grid values come from Brownian-bridge
    refinement.
    """

    def __init__(self, seed: int, mesh: float, chunk_length: Optional[float] = None, scale: float = 1.0):
        if mesh <= 0:
            raise ConfigError(f"mesh must be positive, got {mesh}", field="mesh")
        self.seed = seed
        self.mesh = mesh
        self.scale = scale
        chunk_length = chunk_length or sim_config.chunk_length
        self.chunk_points = max(int(round(chunk_length / mesh)), 1)
        self._values = {1: np.zeros(1), -1: np.zeros(1)}

    def reach(self, side: int) -> float:
        return (self._values[side].size - 1) * self.mesh

    def extend(self, side: int, reach: float) -> None:
        """Grow side +1/-1 until it covers |s| <= reach"""
        vals = self._values[side]
        added = 0
        while (vals.size - 1) * self.mesh < reach:
            k = (vals.size - 1) // self.chunk_points
            tag = _STREAM_W_POS if side > 0 else _STREAM_W_NEG
            rng = np.random.default_rng([self.seed, tag, k])
            inc = rng.standard_normal(self.chunk_points) * np.sqrt(self.mesh) * self.scale
            vals = np.concatenate([vals, vals[-1] + np.cumsum(inc)])
            added += 1
        if added:
            logger.debug(f"Brownian side {side:+d} extended by {added} chunk(s) to reach {self.reach(side):.3f}")
        self._values[side] = vals

    def grid_path(self, n_minus: int, n_plus: int) -> CadlagPath:
        """W on the grid i*mesh, i = -n_minus..n_plus, as a piecewise-linear path"""
        self.extend(1, n_plus * self.mesh)
        self.extend(-1, n_minus * self.mesh)
        neg = self._values[-1][1:n_minus + 1][::-1]
        pos = self._values[1][:n_plus + 1]
        times = np.arange(-n_minus, n_plus + 1) * self.mesh
        return CadlagPath(times, np.concatenate([neg, pos]), "linear", 0.0,
                          {"seed": self.seed, "mesh": self.mesh, "source": "brownian"})

    def evaluate(self, s: np.ndarray, rng: np.random.Generator, allow_extend: bool = True) -> np.ndarray:
        """W at arbitrary times s, sampling bridge points jointly with the stored grid"""
        s = np.asarray(s, dtype=float)
        out = np.empty_like(s)
        for side in (1, -1):
            mask = s >= 0 if side > 0 else s < 0
            if not np.any(mask):
                continue
            mags = np.abs(s[mask])
            need = float(mags.max()) + self.mesh
            if need > self.reach(side):
                if not allow_extend:
                    raise RangeError(
                        f"subordinator range {side * mags.max():.4f} exceeds Brownian domain",
                        needed=need - self.reach(side),
                    )
                self.extend(side, need)
            out[mask] = self._bridge(self._values[side], mags, rng)
        return out

    def _bridge(self, grid_vals: np.ndarray, mags: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        order = np.argsort(mags, kind="stable")
        ms = mags[order]
        k = np.floor(ms / self.mesh).astype(np.int64)
        off = ms - k * self.mesh
        w_left = grid_vals[k]
        w_right = grid_vals[k + 1]

        new_group = np.ones(ms.size, dtype=bool)
        new_group[1:] = k[1:] != k[:-1]
        prev_off = np.where(new_group, 0.0, np.concatenate([[0.0], off[:-1]]))
        inc = rng.standard_normal(ms.size) * np.sqrt(np.maximum(off - prev_off, 0.0)) * self.scale

        # grouped cumulative sum: free Brownian motion B started at each left grid point
        csum = np.cumsum(inc)
        starts = np.flatnonzero(new_group)
        group_id = np.cumsum(new_group) - 1
        base = np.where(starts > 0, csum[starts - 1], 0.0)
        b_vals = csum - base[group_id]

        ends = np.concatenate([starts[1:] - 1, [ms.size - 1]])
        tail = rng.standard_normal(starts.size) * np.sqrt(np.maximum(self.mesh - off[ends], 0.0)) * self.scale
        b_end = b_vals[ends] + tail

        frac = off / self.mesh
        bridged = w_left + b_vals - frac * (b_end[group_id] - (w_right - w_left))
        out = np.empty_like(bridged)
        out[order] = bridged
        return out


# ===============================
# SCENARIO
# ===============================

def sample_subordinator(alpha: float, horizon: Tuple[float, float], mesh: float, seed: int) -> CadlagPath:
    """
    Two-sided alpha/2-stable subordinator on the grid i*mesh.

    Two independent one-sided increment streams are glued at 0; the negative side
    is mirrored (S(-t) = -S'(t)) so the path is nondecreasing on the whole line.
    """
    if mesh <= 0:
        raise ConfigError(f"mesh must be positive, got {mesh}", field="mesh")
    t_minus, t_plus = horizon
    if t_minus <= 0 or t_plus <= 0:
        raise ConfigError(f"horizon lengths must be positive, got {horizon}", field="horizon")
    n_minus, n_plus = int(round(t_minus / mesh)), int(round(t_plus / mesh))
    key = alpha_key(alpha)
    pos = subordinator_increments(alpha, mesh, n_plus, np.random.default_rng([seed, _STREAM_S_POS, key]))
    neg = subordinator_increments(alpha, mesh, n_minus, np.random.default_rng([seed, _STREAM_S_NEG, key]))
    values = np.concatenate([-np.cumsum(neg)[::-1], [0.0], np.cumsum(pos)])
    times = np.arange(-n_minus, n_plus + 1) * mesh
    return CadlagPath(times, values, "constant", 0.0,
                      {"alpha": alpha, "seed": seed, "mesh": mesh, "source": "subordinator"})


@dataclass(frozen=True, eq=False)
class NoiseScenario:
    """One noise realisation omega = (W, S^alpha) on [-T-, T+]"""
    alpha: float
    seed: int
    horizon: Tuple[float, float]
    mesh: float
    brownian_field: BrownianField
    brownian: CadlagPath
    subordinator: Optional[CadlagPath]

    @property
    def is_brownian(self) -> bool:
        return self.subordinator is None

    @cached_property
    def subordinated(self) -> CadlagPath:
        return subordinated_bm(self)

    def brownian_twin(self) -> "NoiseScenario":
        """The alpha = 2 scenario sharing this scenario's Brownian path"""
        return NoiseScenario(2.0, self.seed, self.horizon, self.mesh, self.brownian_field, self.brownian, None)


def build_scenario(
    alpha: float,
    seed: int,
    horizon: Optional[Tuple[float, float]] = None,
    mesh: Optional[float] = None,
    brownian_scale: float = 1.0,
) -> NoiseScenario:
    """Generate the coupled scenario for (alpha, seed); the Brownian member depends on seed only"""
    if not (1.0 < alpha <= 2.0):
        raise DomainError(f"alpha must lie in (1, 2], got {alpha}", {"alpha": alpha})
    horizon = horizon or (sim_config.horizon_minus, sim_config.horizon_plus)
    mesh = mesh or sim_config.mesh
    if mesh <= 0:
        raise ConfigError(f"mesh must be positive, got {mesh}", field="mesh")
    bfield = BrownianField(seed, mesh, scale=brownian_scale)
    brownian = bfield.grid_path(int(round(horizon[0] / mesh)), int(round(horizon[1] / mesh)))
    subordinator = None if alpha == 2.0 else sample_subordinator(alpha, horizon, mesh, seed)
    return NoiseScenario(alpha, seed, tuple(horizon), mesh, bfield, brownian, subordinator)


def subordinated_bm(scenario: NoiseScenario, allow_extend: bool = True) -> CadlagPath:
    """L_t = W(S_t) on the scenario grid; identical to W when alpha = 2"""
    if scenario.is_brownian:
        return scenario.brownian
    sub = scenario.subordinator
    rng = np.random.default_rng([scenario.seed, _STREAM_BRIDGE, alpha_key(scenario.alpha)])
    values = scenario.brownian_field.evaluate(sub.values, rng, allow_extend=allow_extend)
    values[sub.times == 0.0] = 0.0
    return CadlagPath(sub.times, values, "constant", 0.0,
                      {"alpha": scenario.alpha, "seed": scenario.seed, "mesh": scenario.mesh,
                       "source": "subordinated"})


# ===============================
# CSV INTERFACE
# ===============================

def path_to_csv(path: CadlagPath, target: Union[str, Path]) -> Path:
    """Write `t,value` rows under a one-line header comment with kind/alpha/seed/mesh"""
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    header = (f"# kind={path.kind} alpha={path.meta.get('alpha', 2.0)} "
              f"seed={path.meta.get('seed', '')} mesh={path.meta.get('mesh', '')}\n")
    frame = pd.DataFrame({"t": path.times, "value": path.values})
    with target.open("w", encoding="utf-8") as fh:
        fh.write(header)
        frame.to_csv(fh, index=False, float_format="%.17g")
    return target


def path_from_csv(source: Union[str, Path]) -> CadlagPath:
    source = Path(source)
    with source.open("r", encoding="utf-8") as fh:
        header = fh.readline().lstrip("#").split()
    meta: Dict[str, Any] = dict(item.split("=", 1) for item in header if "=" in item)
    kind = meta.pop("kind", "linear")
    for key in ("alpha", "mesh"):
        if meta.get(key):
            meta[key] = float(meta[key])
    if meta.get("seed"):
        meta["seed"] = int(meta["seed"])
    frame = pd.read_csv(source, comment="#", float_precision="round_trip")
    return CadlagPath(frame["t"].to_numpy(), frame["value"].to_numpy(), kind, 0.0, meta)
