"""
Random inertial manifold by Lyapunov-Perron iteration.

A history u(s), s in [-T-, 0], is a fixed point of

    P u(t) = e^{-At + Z(t)} xi - int_t^0 e^{-A(t-s) + Z(t) - Z(s)} P G(s, u(s)) ds
    Q u(t) = int_{-T-}^t e^{-A(t-s) + Z(t) - Z(s)} Q G(s, u(s)) ds

with Z(t) = int_0^t z(theta_r omega) dr; the graph is psi(omega, xi) = Q u(0).
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import linregress

from .config import sim_config
from .dynamics import Trajectory, conjugated_dg, conjugated_g, integrate
from .errors import ContractViolation, DomainError, GapViolationError, NumericalError
from .models import GapReport, SolveCertificate
from .noise import NoiseScenario, build_scenario
from .nonlinearity import Nonlinearity
from .ou import OuPath, Runner, run_serial, scenario_ou
from .quadrature import backward_convolve, forward_convolve, phi1
from .spectral import Spectrum, check_gap

logger = logging.getLogger(__name__)

# residuals below this multiple of machine epsilon are rounding noise
_RATIO_FLOOR = 1e3 * np.finfo(float).eps


def default_t_minus(spec: Spectrum, beta: float) -> float:
    """40 / (lambda_(N+1) - beta): the dropped Q tail weighs below e^{-40}"""
    return 40.0 / (spec.lambda_N1 - beta)


def history_grid(t_minus: float, h0: float, growth: float, h_max: float, uniform_span: float) -> np.ndarray:
    """Ascending grid on [-t_minus, 0]: step h0 on [-uniform_span, 0], then growing geometrically up to h_max"""
    if t_minus <= 0 or h0 <= 0:
        raise DomainError(f"history grid needs positive T- and step, got {t_minus}, {h0}")
    points = [0.0]
    t, h = 0.0, h0
    while t > -t_minus:
        if -t >= uniform_span - 1e-12:
            h = min(h * growth, h_max)
        t = max(t - h, -t_minus)
        points.append(t)
    grid = np.array(points[::-1])
    if grid.size > 2 and grid[1] - grid[0] < 0.1 * h0:
        grid = np.delete(grid, 1)
    return grid


@dataclass(frozen=True, eq=False)
class HistoryFn:
    """States on a time grid with the weight e^{beta s - Z(s)} of the history norm"""
    grid: np.ndarray
    states: np.ndarray
    beta: float
    weight_path: Optional[np.ndarray]
    spec: Spectrum
    certificate: Optional[SolveCertificate] = None

    def at_zero(self) -> np.ndarray:
        idx = int(np.argmin(np.abs(self.grid)))
        return self.states[idx]


def weighted_sup(grid: np.ndarray, Z: np.ndarray, beta: float, norms: np.ndarray) -> float:
    return float(np.max(np.exp(beta * grid - Z) * norms))


def empirical_contraction(residuals: Sequence[float], scale: float = 1.0) -> float:
    """Largest ratio of successive residuals, skipping those at rounding level"""
    ratios = [
        residuals[k] / residuals[k - 1]
        for k in range(1, len(residuals))
        if residuals[k - 1] > _RATIO_FLOOR * max(scale, 1.0)
    ]
    return float(max(ratios)) if ratios else 0.0


# ===============================
# GRAPH
# ===============================

class ManifoldGraph:
    """
    psi(theta_offset omega, .) for one scenario.

    Solved histories are cached per xi. The cache is a plain dict: entries are
    deterministic, so concurrent duplicate solves only repeat work.
    """

    def __init__(
        self,
        scenario: Optional[NoiseScenario],
        spec: Spectrum,
        nl: Nonlinearity,
        mu: Optional[float] = None,
        tol_fp: Optional[float] = None,
        max_iter: Optional[int] = None,
        t_minus: Optional[float] = None,
        ou: Optional[OuPath] = None,
        offset: float = 0.0,
        gap: Optional[GapReport] = None,
    ):
        self.scenario = scenario
        self.spec = spec
        self.nl = nl
        if not spec.has_split:
            raise DomainError(f"a manifold graph needs 1 <= N < K, got N = {spec.N}, K = {spec.K}", {"N": spec.N})
        self.mu = sim_config.mu if mu is None else mu
        self.tol_fp = sim_config.tol_fp if tol_fp is None else tol_fp
        self.max_iter = sim_config.max_iter if max_iter is None else max_iter

        self.gap = gap or check_gap(spec, nl.lipschitz, self.mu)
        if not self.gap.satisfied:
            raise GapViolationError(
                f"spectral gap condition fails at N={spec.N}: lambda_(N+1) - lambda_N = {self.gap.lhs:.6g} "
                f"< {self.gap.rhs:.6g}",
                details=self.gap.model_dump(),
            )
        self.beta = self.gap.beta
        recommended = default_t_minus(spec, self.beta)
        self.t_minus = recommended if t_minus is None else t_minus
        if self.t_minus < recommended and offset == 0.0:
            logger.warning(f"T- = {self.t_minus:.4g} is shorter than the recommended {recommended:.4g}")

        if ou is None:
            if scenario is None:
                raise ContractViolation("a manifold graph needs a scenario or a prebuilt OU path")
            ou = scenario_ou(scenario)
        self.ou = ou
        self.offset = offset

        self.grid = history_grid(self.t_minus, **sim_config.get_grid_params())
        absolute = offset + self.grid
        self.z = np.asarray(ou(absolute))
        self.Z = np.asarray(ou.integral(absolute)) - float(ou.integral(offset))
        self._cache: Dict[bytes, HistoryFn] = {}
        self._deriv_cache: Dict[bytes, np.ndarray] = {}

    @property
    def z0(self) -> float:
        """z(theta_offset omega)"""
        return float(self.z[-1])

    def shifted(self, t: float) -> "ManifoldGraph":
        """Graph of theta_t of this graph's noise"""
        return ManifoldGraph(self.scenario, self.spec, self.nl, self.mu, self.tol_fp, self.max_iter,
                             self.t_minus, self.ou, self.offset + t, self.gap)

    def lift(self, xi: np.ndarray) -> np.ndarray:
        """P-block coordinates (length N or K) to a full state with zero Q part"""
        xi = np.asarray(xi, dtype=float)
        N, K = self.spec.N, self.spec.K
        if xi.shape not in ((N,), (K,)):
            raise DomainError(f"xi must have {N} (or {K}) coefficients, got shape {xi.shape}")
        full = np.zeros(K)
        full[:N] = xi[:N]
        return full

    def weighted_norm(self, states: np.ndarray) -> float:
        return weighted_sup(self.grid, self.Z, self.beta, self.spec.norm(states))

    def linear_history(self, xi_full: np.ndarray) -> np.ndarray:
        """e^{-As + Z(s)} xi, the fixed point for F = 0; the Q block stays exactly zero"""
        N = self.spec.N
        states = np.zeros((self.grid.size, self.spec.K))
        lam_p = self.spec.lambdas[None, :N]
        states[:, :N] = np.exp(-lam_p * self.grid[:, None] + self.Z[:, None]) * xi_full[None, :N]
        return states

    def apply_map(self, states: np.ndarray, xi_p: np.ndarray) -> np.ndarray:
        N = self.spec.N
        lam = self.spec.lambdas
        G = conjugated_g(self.nl, self.z, states)
        out = np.empty_like(states)
        out[:, :N] = backward_convolve(self.grid, lam[:N], self.Z, G[:, :N], final=xi_p)
        out[:, N:] = forward_convolve(self.grid, lam[N:], self.Z, G[:, N:], init=0.0)
        return out

    def _certify(self, residuals: List[float], scale: float, what: str) -> Tuple[float, bool]:
        contraction = empirical_contraction(residuals, scale)
        if contraction > 1.0:
            raise NumericalError(
                f"{what} iteration does not contract: successive residual ratio {contraction:.4f} > 1",
                details={"residuals": residuals[-10:], "mu": self.mu},
            )
        certified = contraction <= self.mu + sim_config.contraction_slack
        if not certified:
            logger.warning(f"{what} contraction {contraction:.4f} above mu + slack = "
                           f"{self.mu + sim_config.contraction_slack:.4f}")
        return contraction, certified


# ===============================
# LYAPUNOV-PERRON SOLVES
# ===============================

def lp_solve(graph: ManifoldGraph, xi: np.ndarray) -> HistoryFn:
    """Fixed point of the Lyapunov-Perron map for the P-block data xi"""
    xi_full = graph.lift(xi)
    key = xi_full.tobytes()
    cached = graph._cache.get(key)
    if cached is not None:
        return cached

    N = graph.spec.N
    states = graph.linear_history(xi_full)
    residuals: List[float] = []
    iterations = 0
    if not graph.nl.is_zero:
        for iterations in range(1, graph.max_iter + 1):
            new = graph.apply_map(states, xi_full[:N])
            residual = graph.weighted_norm(new - states)
            scale = max(1.0, graph.weighted_norm(new))
            states = new
            if not np.isfinite(residual):
                raise NumericalError("Lyapunov-Perron iterate is not finite", details={"iteration": iterations})
            residuals.append(residual)
            logger.debug(f"LP iteration {iterations}: residual={residual:.3e}")
            if residual <= graph.tol_fp * scale:
                break
        else:
            raise NumericalError(
                f"Lyapunov-Perron iteration did not reach {graph.tol_fp:.1e} in {graph.max_iter} iterations",
                details={"residuals": residuals[-10:]},
            )

    norm = graph.weighted_norm(states)
    contraction, certified = graph._certify(residuals, norm, "Lyapunov-Perron")
    tail = float(np.exp(-(graph.spec.lambda_N1 - graph.beta) * graph.t_minus) * norm)
    if tail > graph.tol_fp * max(1.0, norm):
        logger.warning(f"Truncated Q-tail bound {tail:.3e} exceeds the fixed-point tolerance; "
                       f"T- = {graph.t_minus:.4g} is too short")
    certificate = SolveCertificate(
        iterations=iterations,
        residual=residuals[-1] if residuals else 0.0,
        contraction=contraction,
        certified=certified,
        tail_bound=tail,
    )
    states.setflags(write=False)
    history = HistoryFn(graph.grid, states, graph.beta, graph.Z, graph.spec, certificate)
    graph._cache[key] = history
    return history


def psi(graph: ManifoldGraph, xi: np.ndarray) -> np.ndarray:
    """psi(omega, xi) = Q u(0), returned as the K - N Q-block coefficients"""
    return np.array(lp_solve(graph, xi).states[-1, graph.spec.N:])


def transformed_graph(graph: ManifoldGraph, xi: np.ndarray) -> np.ndarray:
    """Graph of the original equation: e^{z(omega)} psi(omega, e^{-z(omega)} xi)"""
    scale = np.exp(graph.z0)
    return scale * psi(graph, np.asarray(xi, dtype=float) / scale)


def _matrix_weighted_norm(graph: ManifoldGraph, D: np.ndarray) -> float:
    """History norm of P -> full linear maps, measured sigma-to-sigma"""
    w = graph.spec.weights
    N = graph.spec.N
    scaled = w[None, :, None] * D / w[None, None, :N]
    return weighted_sup(graph.grid, graph.Z, graph.beta, np.linalg.norm(scaled, ord=2, axis=(1, 2)))


def d_psi(graph: ManifoldGraph, xi: np.ndarray) -> np.ndarray:
    """D_xi psi(omega, xi) as a (K - N) x N matrix, from the linearised fixed point"""
    xi_full = graph.lift(xi)
    key = xi_full.tobytes()
    cached = graph._deriv_cache.get(key)
    if cached is not None:
        return cached.copy()

    spec = graph.spec
    N, K = spec.N, spec.K
    lam = spec.lambdas
    history = lp_solve(graph, xi_full)
    # Q columns start at exactly zero
    D = np.zeros((graph.grid.size, K, N))
    D[:, :N, :] = np.exp(-lam[None, :N] * graph.grid[:, None] + graph.Z[:, None])[:, :, None] * np.eye(N)[None, :, :]

    residuals: List[float] = []
    if not graph.nl.is_zero:
        DG = conjugated_dg(graph.nl, graph.z, history.states)
        for iteration in range(1, graph.max_iter + 1):
            src = DG @ D
            new = np.empty_like(D)
            new[:, :N, :] = backward_convolve(graph.grid, lam[:N], graph.Z, src[:, :N, :], final=np.eye(N))
            new[:, N:, :] = forward_convolve(graph.grid, lam[N:], graph.Z, src[:, N:, :], init=0.0)
            residual = _matrix_weighted_norm(graph, new - D)
            scale = max(1.0, _matrix_weighted_norm(graph, new))
            D = new
            residuals.append(residual)
            if residual <= graph.tol_fp * scale:
                break
        else:
            raise NumericalError(
                f"derivative iteration did not reach {graph.tol_fp:.1e} in {graph.max_iter} iterations",
                details={"residuals": residuals[-10:]},
            )
        graph._certify(residuals, _matrix_weighted_norm(graph, D), "derivative")

    block = np.array(D[-1, N:, :])
    graph._deriv_cache[key] = block
    return block.copy()


def d_psi_operator_norm(spec: Spectrum, block: np.ndarray) -> float:
    """sigma-to-sigma operator norm of a (K - N) x N block"""
    w = spec.weights
    N = spec.N
    return float(np.linalg.norm(w[N:, None] * block / w[None, :N], ord=2))


# ===============================
# ATTRACTION
# ===============================

@dataclass(frozen=True)
class TrackingResult:
    frame: pd.DataFrame
    slope: float
    beta: float
    fit_points: int

    @property
    def slope_gate(self) -> float:
        """largest accepted log-slope, -beta/2 plus a 0.2 beta margin"""
        return -self.beta / 2.0 + 0.2 * self.beta

    @property
    def passes_gate(self) -> bool:
        return bool(np.isfinite(self.slope) and self.slope <= self.slope_gate)


def q_norm(spec: Spectrum, q_block: np.ndarray) -> float:
    full = np.zeros(spec.K)
    full[spec.N:] = q_block
    return float(spec.norm(full))


def tracking_defect(graph: ManifoldGraph, x: np.ndarray, T: float, dt: float = 1e-3,
                    sample_every: int = 100, floor: float = 1e-3) -> TrackingResult:
    """
    d(t) = ||Q u(t) - psi(theta_t omega, P u(t))||_sigma along the forward solution from x.

    The log-slope is fitted over the samples taken before d first falls below floor * d(0).
    """
    spec = graph.spec
    N = spec.N
    traj = integrate(graph.scenario, spec, graph.nl, x, T, dt, offset=graph.offset, ou=graph.ou)
    picks = np.arange(0, traj.times.size, sample_every)
    defects = []
    for i in picks:
        t = float(traj.times[i])
        local = graph if t == 0.0 else graph.shifted(t)
        u = traj.states[i]
        defects.append(q_norm(spec, u[N:] - psi(local, u[:N])))
    defects = np.array(defects)
    times = traj.times[picks]
    log_defect = np.log(np.maximum(defects, np.finfo(float).tiny))

    below = np.flatnonzero(defects < floor * defects[0]) if defects[0] > 0 else np.array([0])
    stop = int(below[0]) if below.size else defects.size
    slope = float(linregress(times[:stop], log_defect[:stop]).slope) if stop >= 2 else float("nan")
    logger.info(f"Tracking defect: d(0)={defects[0]:.3e}, slope={slope:.4g} over {stop} points, beta={graph.beta:.4g}")
    frame = pd.DataFrame({"t": times, "defect": defects, "log_defect": log_defect})
    return TrackingResult(frame, slope, graph.beta, stop)


@dataclass(frozen=True, eq=False)
class ForwardTrack:
    shadow: np.ndarray
    history: HistoryFn
    outer_iterations: int
    outer_change: float


def _forward_lp(graph: ManifoldGraph, times: np.ndarray, z: np.ndarray, Z: np.ndarray,
                base: np.ndarray, q: np.ndarray) -> Tuple[np.ndarray, SolveCertificate]:
    """Difference y with Q y(0) = q decaying at rate beta: P part integrated back from T+, Q part forward"""
    spec = graph.spec
    N = spec.N
    lam = spec.lambdas
    y = np.zeros_like(base)
    y[:, N:] = np.exp(-lam[None, N:] * times[:, None] + Z[:, None]) * q[None, :]
    residuals: List[float] = []
    iterations = 0
    g_base = conjugated_g(graph.nl, z, base)
    if not graph.nl.is_zero:
        for iterations in range(1, graph.max_iter + 1):
            dG = conjugated_g(graph.nl, z, base + y) - g_base
            new = np.empty_like(y)
            new[:, :N] = backward_convolve(times, lam[:N], Z, dG[:, :N], final=0.0)
            new[:, N:] = forward_convolve(times, lam[N:], Z, dG[:, N:], init=q)
            residual = weighted_sup(times, Z, graph.beta, spec.norm(new - y))
            scale = max(1.0, weighted_sup(times, Z, graph.beta, spec.norm(new)))
            y = new
            residuals.append(residual)
            if residual <= graph.tol_fp * scale:
                break
        else:
            raise NumericalError("forward tracking iteration did not converge",
                                 details={"residuals": residuals[-10:]})
    norm = weighted_sup(times, Z, graph.beta, spec.norm(y))
    contraction, certified = graph._certify(residuals, norm, "forward tracking")
    return y, SolveCertificate(iterations=iterations, residual=residuals[-1] if residuals else 0.0,
                               contraction=contraction, certified=certified)


def forward_track_solve(graph: ManifoldGraph, x: np.ndarray, T_plus: Optional[float] = None,
                        dt: float = 5e-3, tol: float = 1e-8, max_outer: int = 200) -> ForwardTrack:
    """
    Shadow point x~ = x + y(0) on the manifold whose solution tracks the one from x.

    The P part of x~ is found by plain iteration: q = psi(P x~) - Q x, y solved for q,
    P x~ = P x + P y(0), until q stops moving.
    """
    spec = graph.spec
    N = spec.N
    x = np.asarray(x, dtype=float)
    T_plus = float(np.log(1.0 / graph.tol_fp) / graph.beta) if T_plus is None else T_plus
    traj = integrate(graph.scenario, spec, graph.nl, x, T_plus, dt, offset=graph.offset, ou=graph.ou)
    times = traj.times
    absolute = graph.offset + times
    z = np.asarray(graph.ou(absolute))
    Z = np.asarray(graph.ou.integral(absolute)) - float(graph.ou.integral(graph.offset))

    x_p, x_q = x[:N], x[N:]
    q = psi(graph, x_p) - x_q
    change = 0.0
    for outer in range(1, max_outer + 1):
        y, _ = _forward_lp(graph, times, z, Z, traj.states, q)
        q_new = psi(graph, x_p + y[0, :N]) - x_q
        change = q_norm(spec, q_new - q)
        q = q_new
        logger.debug(f"Forward tracking outer iteration {outer}: change={change:.3e}")
        if not np.isfinite(change):
            raise NumericalError("forward tracking outer iteration diverged", details={"iteration": outer})
        if change <= tol * max(1.0, q_norm(spec, q)):
            break
    else:
        raise NumericalError(
            f"forward tracking outer iteration did not settle in {max_outer} iterations (last change {change:.3e})",
            details={"change": change},
        )

    y, certificate = _forward_lp(graph, times, z, Z, traj.states, q)
    shadow = x + y[0]
    y.setflags(write=False)
    history = HistoryFn(times, y, graph.beta, Z, spec, certificate)
    return ForwardTrack(shadow, history, outer, change)


# ===============================
# REDUCED DYNAMICS
# ===============================

def inertial_form(graph: ManifoldGraph, p0: np.ndarray, T: float, dt: float) -> Trajectory:
    """
    Exponential Euler for dp/dt + A_P p = z p + P G(p + psi(theta_t omega, p)),
    lifted back to p + psi(theta_t omega, p).
    """
    spec = graph.spec
    N = spec.N
    lam = spec.lambdas[:N]
    n_steps = int(round(T / dt))
    times = np.arange(n_steps + 1) * dt
    z = np.asarray(graph.ou(graph.offset + times))
    decay = np.exp(-lam * dt)
    weight = phi1(-lam * dt) * dt

    p = np.asarray(p0, dtype=float)[:N]
    states = np.empty((n_steps + 1, spec.K))
    states[0, :N] = p
    states[0, N:] = psi(graph, p)
    for n in range(n_steps):
        g = conjugated_g(graph.nl, z[n], states[n])
        p = decay * np.exp(z[n] * dt) * p + weight * g[:N]
        states[n + 1, :N] = p
        states[n + 1, N:] = psi(graph.shifted(float(times[n + 1])), p)
    states.setflags(write=False)
    return Trajectory(times, states, "conjugated", graph.scenario, graph.ou, graph.offset)


# ===============================
# CONVERGENCE EXPERIMENT
# ===============================

def coupled_manifold_errors(
    alpha: float,
    seed: int,
    spec: Spectrum,
    nl: Nonlinearity,
    xis: np.ndarray,
    mu: Optional[float] = None,
    tol_fp: Optional[float] = None,
    t_minus: Optional[float] = None,
    mesh: Optional[float] = None,
) -> Dict[str, float]:
    """Largest psi, D psi and transformed-graph differences over xis for one coupled seed"""
    if alpha == 2.0:
        return {"psi": 0.0, "d_psi": 0.0, "graph": 0.0}
    gap = check_gap(spec, nl.lipschitz, sim_config.mu if mu is None else mu)
    span = default_t_minus(spec, gap.beta) if t_minus is None else t_minus
    tail = sim_config.ou_min_tail
    scenario = build_scenario(alpha, seed, horizon=(span + tail + 1.0, 1.0), mesh=mesh)
    twin = scenario.brownian_twin()
    g_alpha = ManifoldGraph(scenario, spec, nl, mu, tol_fp, t_minus=span, ou=scenario_ou(scenario, tail), gap=gap)
    g_two = ManifoldGraph(twin, spec, nl, mu, tol_fp, t_minus=span, ou=scenario_ou(twin, tail), gap=gap)

    out = {"psi": 0.0, "d_psi": 0.0, "graph": 0.0}
    for xi in xis:
        out["psi"] = max(out["psi"], q_norm(spec, psi(g_alpha, xi) - psi(g_two, xi)))
        out["d_psi"] = max(out["d_psi"], d_psi_operator_norm(spec, d_psi(g_alpha, xi) - d_psi(g_two, xi)))
        out["graph"] = max(out["graph"], q_norm(spec, transformed_graph(g_alpha, xi) - transformed_graph(g_two, xi)))
    return out


def manifold_convergence(
    alphas: Sequence[float],
    spec: Spectrum,
    nl: Nonlinearity,
    xis: np.ndarray,
    n_seeds: int,
    seed0: int = 0,
    mu: Optional[float] = None,
    tol_fp: Optional[float] = None,
    t_minus: Optional[float] = None,
    mesh: Optional[float] = None,
    runner: Runner = run_serial,
) -> pd.DataFrame:
    """Medians over seeds of the three manifold differences per alpha"""
    gap = check_gap(spec, nl.lipschitz, sim_config.mu if mu is None else mu)
    if not gap.satisfied:
        raise GapViolationError(f"spectral gap condition fails: lhs={gap.lhs:.6g} < rhs={gap.rhs:.6g}",
                                details=gap.model_dump())
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    keys = [(alpha, seed0 + i) for alpha in alphas for i in range(n_seeds)]
    results = runner(
        lambda key: coupled_manifold_errors(key[0], key[1], spec, nl, xis, mu, tol_fp, t_minus, mesh), keys
    )
    rows = []
    for alpha in alphas:
        per_seed = [results[(alpha, seed0 + i)] for i in range(n_seeds)]
        row = {"alpha": alpha}
        for name in ("psi", "d_psi", "graph"):
            row[f"median_{name}_diff"] = float(np.median([r[name] for r in per_seed]))
        row["n"] = n_seeds
        rows.append(row)
        logger.info(f"Manifold convergence alpha={alpha}: psi={row['median_psi_diff']:.4g} "
                    f"dpsi={row['median_d_psi_diff']:.4g} graph={row['median_graph_diff']:.4g}")
    return pd.DataFrame(rows, columns=["alpha", "median_psi_diff", "median_d_psi_diff", "median_graph_diff", "n"])
