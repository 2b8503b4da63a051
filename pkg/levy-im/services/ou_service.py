"""
Service for the OU convergence experiment
"""
import logging
from functools import partial
from pathlib import Path
from typing import List

import pandas as pd

from core.models import ExperimentConfig
from core.noise import build_scenario
from core.ou import ou_convergence_table, scenario_ou, verify_growth
from utils.artifacts import write_table
from utils.plotting import emit_plot_data
from utils.pool import fan_out

logger = logging.getLogger(__name__)


class OuService:
    """Service for ou-converge runs"""

    def run_ou_converge(self, config: ExperimentConfig, out_dir: Path, progress: bool = False) -> List[Path]:
        """E sup |z^alpha - z|^p per alpha, plus a growth report for the first seed"""
        noise, params = config.noise, config.params
        runner = partial(fan_out, threads=config.threads, progress=progress, desc="ou-converge")
        table = ou_convergence_table(
            noise.alphas, params.p, params.window, noise.n_seeds,
            seed0=noise.seed, mesh=noise.mesh, tail=config.solver.ou_tail, runner=runner,
        )
        artifacts = [write_table(table, out_dir, "ou_convergence")]
        artifacts += emit_plot_data(table, "alpha", ["estimate"], Path(out_dir) / "ou_convergence",
                                    title=f"E sup |z^alpha - z|^{params.p:g} on [-{params.window:g}, {params.window:g}]")

        probe = noise.t_plus
        rows = []
        for alpha in noise.alphas:
            scenario = build_scenario(alpha, noise.seed, horizon=(probe + config.solver.ou_tail + 1.0, probe),
                                      mesh=noise.mesh)
            report = verify_growth(scenario_ou(scenario, config.solver.ou_tail), probe)
            rows.append({"alpha": alpha, **report.model_dump()})
        artifacts.append(write_table(pd.DataFrame(rows), out_dir, "ou_growth"))
        return artifacts


# Global OU service instance
ou_service = OuService()
