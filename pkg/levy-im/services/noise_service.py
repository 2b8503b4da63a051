"""
Service for noise-layer statistics: subordinator Laplace transforms, the Levy measure
normalisation and sample paths of the subordinated Brownian motion
"""
import logging
from pathlib import Path
from typing import List

import numpy as np
import pandas as pd

from core.models import ExperimentConfig
from core.noise import build_scenario, laplace_check, levy_intensity_constant, path_to_csv
from utils.artifacts import write_table

logger = logging.getLogger(__name__)


class NoiseService:
    """Service for noise-stats runs"""

    def intensity_table(self, alphas: List[float]) -> pd.DataFrame:
        """
        C(alpha) next to C(alpha) / (2 - alpha), which tends to 1 as alpha -> 2.

        The doubled ratio 2 C(alpha) / (2 - alpha) tends to 2 for this C and is listed too.
        """
        rows = []
        for alpha in alphas:
            if alpha >= 2.0:
                continue
            C = levy_intensity_constant(alpha)
            rows.append({"alpha": alpha, "C": C, "normalised": C / (2.0 - alpha), "doubled": 2.0 * C / (2.0 - alpha)})
        return pd.DataFrame(rows, columns=["alpha", "C", "normalised", "doubled"])

    def run_noise_stats(self, config: ExperimentConfig, out_dir: Path, progress: bool = False) -> List[Path]:
        alphas = [a for a in config.noise.alphas if a < 2.0]
        params = config.params
        artifacts: List[Path] = []

        frames = [
            laplace_check(alpha, params.laplace_lambdas, params.laplace_samples, config.noise.seed)
            for alpha in alphas
        ]
        laplace = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
            columns=["alpha", "lambda", "estimate", "exact", "stderr", "z_score"])
        if not laplace.empty:
            worst = float(np.max(np.abs(laplace["z_score"])))
            logger.info(f"Laplace check: largest |z-score| {worst:.3f} over {len(laplace)} rows")
            if worst > 3.0:
                logger.warning(f"Laplace transform off by more than 3 standard errors (|z| = {worst:.3f})")
        artifacts.append(write_table(laplace, out_dir, "laplace_check"))

        probe = sorted(set(config.noise.alphas) | {1.999})
        artifacts.append(write_table(self.intensity_table(probe), out_dir, "levy_intensity"))

        horizon = (params.window, params.window)
        for alpha in config.noise.alphas:
            scenario = build_scenario(alpha, config.noise.seed, horizon=horizon, mesh=config.noise.mesh)
            target = Path(out_dir) / f"subordinated_alpha{alpha:g}_seed{config.noise.seed}.csv"
            artifacts.append(path_to_csv(scenario.subordinated, target))
            logger.info(f"Sample path for alpha={alpha} written to {target}")
        return artifacts


# Global noise service instance
noise_service = NoiseService()
