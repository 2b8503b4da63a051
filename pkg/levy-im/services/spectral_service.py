"""
Service for the spectral gap check and the shared spectrum / nonlinearity setup
"""
import logging
from pathlib import Path
from typing import List

import numpy as np
import pandas as pd

from core.errors import GapViolationError
from core.models import ExperimentConfig, GapReport
from core.nonlinearity import Nonlinearity, build_nonlinearity
from core.spectral import Spectrum, check_gap, dichotomy_bounds
from utils.artifacts import write_table

logger = logging.getLogger(__name__)


def spectrum_from_config(config: ExperimentConfig) -> Spectrum:
    section = config.spectrum
    if section.eigenvalues is not None:
        return Spectrum(np.array(section.eigenvalues, dtype=float), section.N, section.sigma)
    return Spectrum.power_family(section.K, section.power, section.N, section.sigma)


def nonlinearity_from_config(config: ExperimentConfig, spec: Spectrum) -> Nonlinearity:
    section = config.nonlinearity
    return build_nonlinearity(section.preset, spec, section.eps, section.source, section.target)


class SpectralService:
    """Service for spectral gap reports"""

    def gap_report(self, config: ExperimentConfig) -> GapReport:
        """Gap report for the configured spectrum, preset Lipschitz constant and mu"""
        spec = spectrum_from_config(config)
        nl = nonlinearity_from_config(config, spec)
        return check_gap(spec, nl.lipschitz, config.solver.mu)

    def require_gap(self, config: ExperimentConfig) -> GapReport:
        """Raise GapViolationError unless the gap condition holds"""
        report = self.gap_report(config)
        if not report.satisfied:
            raise GapViolationError(
                f"spectral gap condition fails at N={report.N}: lambda_(N+1) - lambda_N = {report.lhs:.10g} "
                f"< {report.rhs:.10g} (margin {report.margin:.10g})",
                details=report.model_dump(),
            )
        return report

    def run_check_gap(self, config: ExperimentConfig, out_dir: Path, progress: bool = False) -> List[Path]:
        spec = spectrum_from_config(config)
        report = self.gap_report(config)
        logger.info(
            f"Gap check N={report.N}: lhs={report.lhs:.10g} rhs={report.rhs:.10g} "
            f"margin={report.margin:.10g} beta={report.beta:.10g} satisfied={report.satisfied}"
        )
        artifacts = [write_table(pd.DataFrame([report.model_dump()]), out_dir, "gap_report")]

        probe_times = np.array([-1.0, -0.1, 0.1, 1.0])
        rows = []
        for t in probe_times:
            p_bound, q_bound, q_sigma = dichotomy_bounds(spec, float(t))
            rows.append({"t": t, "p_sigma_bound": p_bound, "q_bound": q_bound, "q_sigma_bound": q_sigma})
        artifacts.append(write_table(pd.DataFrame(rows), out_dir, "dichotomy_bounds"))

        if not report.satisfied:
            self.require_gap(config)
        return artifacts


# Global spectral service instance
spectral_service = SpectralService()
