"""
Conjugated random evolution equation du/dt + Au = z(theta_t omega) u + G(theta_t omega, u),
its exponential Euler integrator and the conjugation v = e^{z} u back to the original equation
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Literal, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid

from .config import sim_config
from .errors import ContractViolation, DivergenceError, DomainError
from .noise import NoiseScenario, build_scenario
from .nonlinearity import Nonlinearity
from .ou import OuPath, Runner, run_serial, scenario_ou
from .quadrature import phi1
from .spectral import Spectrum, apriori_bound

logger = logging.getLogger(__name__)

Frame = Literal["conjugated", "original"]


def conjugated_g(nl: Nonlinearity, z_val, u: np.ndarray) -> np.ndarray:
    """G(omega, u) = e^{-z} F(e^{z} u); z_val broadcasts against the leading axes of u"""
    u = np.asarray(u, dtype=float)
    scale = np.exp(np.asarray(z_val, dtype=float))[..., None] if np.ndim(z_val) else np.exp(float(z_val))
    return nl(scale * u) / scale


def conjugated_dg(nl: Nonlinearity, z_val, u: np.ndarray) -> np.ndarray:
    """D_u G(omega, u) = DF(e^{z} u)"""
    u = np.asarray(u, dtype=float)
    scale = np.exp(np.asarray(z_val, dtype=float))[..., None] if np.ndim(z_val) else np.exp(float(z_val))
    return nl.deriv(scale * u)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States on times in [0, T]; absolute time is offset + times"""
    times: np.ndarray
    states: np.ndarray
    frame: Frame
    scenario: Optional[NoiseScenario]
    ou: OuPath = field(repr=False)
    offset: float = 0.0

    @property
    def z_values(self) -> np.ndarray:
        return np.asarray(self.ou(self.offset + self.times))

    def norms(self, spec: Spectrum) -> np.ndarray:
        return spec.norm(self.states)

    def long_frame(self) -> pd.DataFrame:
        """CSV form t,k,coeff"""
        n, K = self.states.shape
        return pd.DataFrame({
            "t": np.repeat(self.times, K),
            "k": np.tile(np.arange(1, K + 1), n),
            "coeff": self.states.reshape(-1),
        })

    def norm_frame(self, spec: Spectrum) -> pd.DataFrame:
        """CSV form t,norm_sigma"""
        return pd.DataFrame({"t": self.times, "norm_sigma": self.norms(spec)})


# ===============================
# INTEGRATOR
# ===============================

def integrate(
    scenario: Optional[NoiseScenario],
    spec: Spectrum,
    nl: Nonlinearity,
    x: np.ndarray,
    T: float,
    dt: float,
    offset: float = 0.0,
    ou: Optional[OuPath] = None,
) -> Trajectory:
    """
    Exponential Euler: u_(n+1) = e^{(-A + z_n) dt} u_n + phi1(-A dt) dt G(z_n, u_n).

    z_n is the right-continuous value z(theta_(offset + t_n) omega), so a nonzero
    offset integrates against the shifted scenario.
    """
    if dt <= 0 or T <= 0:
        raise DomainError(f"T and dt must be positive, got T={T}, dt={dt}")
    if ou is None:
        if scenario is None:
            raise ContractViolation("integrate needs a scenario or a prebuilt OU path")
        ou = scenario_ou(scenario)
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.K,):
        raise DomainError(f"initial state must have {spec.K} coefficients, got shape {x.shape}")

    n_steps = int(round(T / dt))
    times = np.arange(n_steps + 1) * dt
    z = np.asarray(ou(offset + times))
    lam = spec.lambdas
    decay = np.exp(-lam * dt)
    weight = phi1(-lam * dt) * dt
    threshold = sim_config.divergence_threshold

    states = np.empty((n_steps + 1, spec.K))
    states[0] = x
    u = x
    for n in range(n_steps):
        u = decay * np.exp(z[n] * dt) * u
        if not nl.is_zero:
            u = u + weight * conjugated_g(nl, z[n], states[n])
        norm = float(spec.norm(u))
        if not np.isfinite(norm) or norm > threshold:
            raise DivergenceError(
                f"state sigma-norm {norm:.3g} exceeded {threshold:.1e} at step {n + 1}",
                step=n + 1,
                details={"t": float(times[n + 1]), "z": float(z[n])},
            )
        states[n + 1] = u
    states.setflags(write=False)
    return Trajectory(times, states, "conjugated", scenario, ou, offset)


def to_original(traj: Trajectory, scenario: Optional[NoiseScenario] = None) -> Trajectory:
    """v(t) = e^{z(theta_t omega)} u(t)"""
    if traj.frame != "conjugated":
        raise ContractViolation(f"to_original expects a conjugated trajectory, got {traj.frame}")
    ou = traj.ou if scenario is None or scenario is traj.scenario else scenario_ou(scenario)
    states = traj.states * np.exp(np.asarray(ou(traj.offset + traj.times)))[:, None]
    return replace(traj, states=states, frame="original", scenario=scenario or traj.scenario, ou=ou)


def to_conjugated(traj: Trajectory, scenario: Optional[NoiseScenario] = None) -> Trajectory:
    """u(t) = e^{-z(theta_t omega)} v(t)"""
    if traj.frame != "original":
        raise ContractViolation(f"to_conjugated expects an original-frame trajectory, got {traj.frame}")
    ou = traj.ou if scenario is None or scenario is traj.scenario else scenario_ou(scenario)
    states = traj.states * np.exp(-np.asarray(ou(traj.offset + traj.times)))[:, None]
    return replace(traj, states=states, frame="conjugated", scenario=scenario or traj.scenario, ou=ou)


def solve_original(scenario: NoiseScenario, spec: Spectrum, nl: Nonlinearity, x: np.ndarray,
                   T: float, dt: float, ou: Optional[OuPath] = None) -> Trajectory:
    """v(t, omega, x) = e^{z(theta_t omega)} u(t, omega, e^{-z(omega)} x)"""
    ou = scenario_ou(scenario) if ou is None else ou
    x = np.asarray(x, dtype=float)
    conj = integrate(scenario, spec, nl, np.exp(-float(ou(0.0))) * x, T, dt, ou=ou)
    return to_original(conj)


def apriori_envelope(traj: Trajectory, spec: Spectrum, L: float) -> pd.DataFrame:
    """
    ||u(t)||_sigma next to the a-priori bound at each t.

    The path factor is exp(int_0^t |z| dr); it also absorbs the e^{int z} growth near t = 0.
    """
    if traj.frame != "conjugated":
        raise ContractViolation("the a-priori bound applies to conjugated trajectories")
    z_abs = np.abs(traj.z_values)
    path_factor = np.exp(cumulative_trapezoid(z_abs, traj.times, initial=0.0))
    x_norm = float(spec.norm(traj.states[0]))
    bounds = np.array([
        apriori_bound(spec, L, x_norm, float(t), float(n_path)) for t, n_path in zip(traj.times, path_factor)
    ])
    return pd.DataFrame({"t": traj.times, "norm_sigma": traj.norms(spec), "bound": bounds})


# ===============================
# CONVERGENCE EXPERIMENT
# ===============================

def sup_error(a: Trajectory, b: Trajectory, spec: Spectrum) -> float:
    if a.frame != b.frame:
        raise ContractViolation(f"cannot compare {a.frame} and {b.frame} trajectories")
    if a.times.shape != b.times.shape:
        raise ContractViolation("trajectories live on different time grids")
    return float(np.max(spec.norm(a.states - b.states)))


def coupled_solution_errors(alpha: float, seed: int, spec: Spectrum, nl: Nonlinearity, x: np.ndarray,
                            T: float, dt: float, mesh: Optional[float] = None) -> Dict[str, float]:
    """sup_{[0, T]} errors of u^alpha vs u and of v^alpha vs v for one coupled seed"""
    if alpha == 2.0:
        return {"conjugated": 0.0, "original": 0.0}
    tail = sim_config.ou_min_tail
    scenario = build_scenario(alpha, seed, horizon=(tail + 1.0, T + 1.0), mesh=mesh)
    twin = scenario.brownian_twin()
    ou_a, ou_2 = scenario_ou(scenario, tail), scenario_ou(twin, tail)
    conj = sup_error(integrate(scenario, spec, nl, x, T, dt, ou=ou_a),
                     integrate(twin, spec, nl, x, T, dt, ou=ou_2), spec)
    orig = sup_error(solve_original(scenario, spec, nl, x, T, dt, ou=ou_a),
                     solve_original(twin, spec, nl, x, T, dt, ou=ou_2), spec)
    return {"conjugated": conj, "original": orig}


def solution_convergence(
    alphas: Sequence[float],
    spec: Spectrum,
    nl: Nonlinearity,
    x: np.ndarray,
    T: float,
    n_seeds: int,
    dt: float = 1e-3,
    eps: float = 0.05,
    seed0: int = 0,
    mesh: Optional[float] = None,
    runner: Runner = run_serial,
) -> pd.DataFrame:
    """Median sup-error and fraction below eps per alpha, conjugated and original frames"""
    keys = [(alpha, seed0 + i) for alpha in alphas for i in range(n_seeds)]
    results = runner(lambda key: coupled_solution_errors(key[0], key[1], spec, nl, x, T, dt, mesh), keys)

    rows: List[Dict] = []
    for frame in ("conjugated", "original"):
        for alpha in alphas:
            errs = np.array([results[(alpha, seed0 + i)][frame] for i in range(n_seeds)])
            rows.append({
                "frame": frame,
                "alpha": alpha,
                "median_sup_error": float(np.median(errs)),
                "frac_below_eps": float(np.mean(errs < eps)),
                "eps": eps,
                "n": n_seeds,
            })
            logger.info(f"Solution convergence [{frame}] alpha={alpha}: median={rows[-1]['median_sup_error']:.6g}")
    return pd.DataFrame(rows, columns=["frame", "alpha", "median_sup_error", "frac_below_eps", "eps", "n"])
