"""
Service for forward integration and the solution convergence experiment
"""
import logging
from functools import partial
from pathlib import Path
from typing import List

import numpy as np

from core.models import ExperimentConfig
from core.noise import build_scenario
from core.dynamics import apriori_envelope, integrate, solution_convergence, to_original
from core.ou import scenario_ou
from utils.artifacts import write_table
from utils.plotting import emit_plot_data
from utils.pool import fan_out
from services.spectral_service import nonlinearity_from_config, spectrum_from_config

logger = logging.getLogger(__name__)


def initial_state(config: ExperimentConfig, K: int) -> np.ndarray:
    """params.x0 when given, else x_k = 1/k"""
    if config.params.x0 is not None:
        return np.array(config.params.x0, dtype=float)
    return 1.0 / np.arange(1, K + 1)


class DynamicsService:
    """Service for integrate and converge-solutions runs"""

    def run_integrate(self, config: ExperimentConfig, out_dir: Path, progress: bool = False) -> List[Path]:
        """
        One trajectory of the conjugated equation for the first configured alpha,
        its original-frame counterpart and the a-priori envelope.
        """
        spec = spectrum_from_config(config)
        nl = nonlinearity_from_config(config, spec)
        x = initial_state(config, spec.K)
        alpha = config.noise.alphas[0]
        T = config.params.horizon
        tail = config.solver.ou_tail

        scenario = build_scenario(alpha, config.noise.seed, horizon=(tail + 1.0, T + 1.0), mesh=config.noise.mesh)
        ou = scenario_ou(scenario, tail)
        logger.info(f"Integrating alpha={alpha} seed={config.noise.seed} on [0, {T}] with dt={config.solver.dt}")
        traj = integrate(scenario, spec, nl, x, T, config.solver.dt, ou=ou)

        artifacts = [
            write_table(traj.long_frame(), out_dir, "trajectory_conjugated"),
            write_table(to_original(traj).long_frame(), out_dir, "trajectory_original"),
        ]
        envelope = apriori_envelope(traj, spec, nl.lipschitz)
        violations = int(np.sum(envelope["norm_sigma"] > envelope["bound"] * (1.0 + 1e-9)))
        if violations:
            logger.warning(f"A-priori bound exceeded at {violations} of {len(envelope)} times")
        artifacts.append(write_table(envelope, out_dir, "apriori_envelope"))
        return artifacts

    def run_converge_solutions(self, config: ExperimentConfig, out_dir: Path, progress: bool = False) -> List[Path]:
        spec = spectrum_from_config(config)
        nl = nonlinearity_from_config(config, spec)
        noise, params = config.noise, config.params
        runner = partial(fan_out, threads=config.threads, progress=progress, desc="converge-solutions")
        table = solution_convergence(
            noise.alphas, spec, nl, initial_state(config, spec.K), params.horizon, noise.n_seeds,
            dt=config.solver.dt, eps=params.eps_threshold, seed0=noise.seed, mesh=noise.mesh, runner=runner,
        )
        artifacts = [write_table(table, out_dir, "solution_convergence")]
        wide = table.pivot(index="alpha", columns="frame", values="median_sup_error").reset_index()
        artifacts += emit_plot_data(wide, "alpha", ["conjugated", "original"], Path(out_dir) / "solution_convergence",
                                    title="median sup-error vs alpha")
        return artifacts


# Global dynamics service instance
dynamics_service = DynamicsService()
