"""
Configuration settings and environment variables
"""
from typing import Any, Dict

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class SimulationSettings(BaseSettings):
    """Process-level settings for the experiment runner (env prefix LEVY_IM_)"""

    model_config = SettingsConfigDict(env_prefix="LEVY_IM_", env_file=".env", extra="ignore")

    # Runner settings
    log_level: str = Field(default="INFO", description="Logging level")
    output_dir: str = Field(default="results", description="Default artifact directory")
    threads: int = Field(default=1, ge=1, description="Default worker count")
    code_version: str = Field(default="0.3.0", description="Recorded in manifest.json")

    # Noise defaults
    mesh: float = Field(default=2.0 ** -10, gt=0, description="Base time step of noise paths")
    horizon_minus: float = Field(default=50.0, gt=0, description="Backward horizon T-")
    horizon_plus: float = Field(default=10.0, gt=0, description="Forward horizon T+")
    chunk_length: float = Field(default=16.0, gt=0, description="Brownian chunk length for on-demand extension")

    # OU defaults
    ou_tail: float = Field(default=40.0, gt=0, description="Truncation length of the stationary integral")
    ou_min_tail: float = Field(default=30.0, gt=0, description="Minimum effective tail for whole-path builds")

    # Manifold solver defaults
    mu: float = Field(default=0.9, gt=0, lt=1, description="Contraction target")
    tol_fp: float = Field(default=1e-10, gt=0, description="Fixed-point tolerance (weighted norm)")
    max_iter: int = Field(default=200, ge=1, description="Fixed-point iteration cap")
    contraction_slack: float = Field(default=0.05, ge=0, description="Allowed excess of the empirical factor over mu")
    grid_h0: float = Field(default=0.01, gt=0, description="History grid step near 0")
    grid_growth: float = Field(default=1.05, ge=1, description="Geometric growth of history steps")
    grid_h_max: float = Field(default=0.25, gt=0, description="Largest history step")
    grid_uniform_span: float = Field(default=1.0, ge=0, description="Length of uniform block next to 0")

    # Integrator defaults
    divergence_threshold: float = Field(default=1e12, gt=0, description="sigma-norm that aborts integration")

    def get_grid_params(self) -> Dict[str, Any]:
        """Get history grid parameters for the Lyapunov-Perron solver"""
        return {
            "h0": self.grid_h0,
            "growth": self.grid_growth,
            "h_max": self.grid_h_max,
            "uniform_span": self.grid_uniform_span,
        }


# Create global config instance
sim_config = SimulationSettings()
