# core/models.py - Data Structures
"""
Data models: experiment configuration and report schemas
"""

from typing import Annotated, List, Dict, Any, Optional, Literal
from pydantic import BaseModel, ConfigDict, Field, model_validator
from datetime import datetime

from .config import sim_config

# ===============================
# EXPERIMENT CONFIG MODELS
# ===============================

ExperimentName = Literal[
    "noise-stats",
    "ou-converge",
    "check-gap",
    "integrate",
    "solve-manifold",
    "d-psi-check",
    "track-defect",
    "converge-solutions",
    "converge-manifolds",
]

PresetName = Literal["zero", "linear-diagonal", "cross-couple", "saturating"]

StabilityIndex = Annotated[float, Field(gt=1.0, le=2.0, description="alpha in (1, 2]")]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SpectrumConfig(_Section):
    """Either an explicit eigenvalue list or the family lambda_k = k^power, k = 1..K"""
    eigenvalues: Optional[List[float]] = None
    power: float = 2.0
    K: int = Field(default=8, ge=2)
    N: int = Field(default=2, ge=1)
    sigma: float = Field(default=0.0, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def split_inside_spectrum(self):
        size = len(self.eigenvalues) if self.eigenvalues is not None else self.K
        if self.N >= size:
            raise ValueError(f"N = {self.N} must be smaller than the number of eigenvalues ({size})")
        return self


class NonlinearityConfig(_Section):
    """Preset id and parameters; cross-couple maps component `source` into `target` (1-based)"""
    preset: PresetName = "saturating"
    eps: float = Field(default=0.5, ge=0.0)
    source: int = Field(default=1, ge=1)
    target: int = Field(default=3, ge=1)


class NoiseConfig(_Section):
    alphas: List[StabilityIndex] = Field(default_factory=lambda: [1.5, 1.9, 1.99, 2.0], min_length=1)
    seed: int = Field(default=0, ge=0)
    n_seeds: int = Field(default=20, ge=1)
    t_plus: float = Field(default=10.0, gt=0.0, description="Probe time of the OU growth check")
    mesh: float = Field(default=2.0 ** -10, gt=0.0)


class SolverConfig(_Section):
    mu: float = Field(default=0.9, gt=0.0, lt=1.0)
    tol_fp: float = Field(default=1e-10, gt=0.0)
    max_iter: int = Field(default=200, ge=1)
    t_back: Optional[float] = Field(default=None, gt=0.0, description="T- of the history grid; auto when unset")
    dt: float = Field(default=1e-3, gt=0.0, description="Integrator step")
    ou_tail: float = Field(default=40.0, gt=0.0)


class ExperimentParams(_Section):
    """Parameters shared by the experiment families; unused ones are ignored"""
    p: float = Field(default=1.0, gt=0.0)
    window: float = Field(default=1.0, gt=0.0, description="T of sup over [-T, T] / [0, T]")
    horizon: float = Field(default=1.0, gt=0.0, description="Forward horizon of integration / tracking")
    eps_threshold: float = Field(default=0.05, gt=0.0)
    lipschitz_pairs: int = Field(default=100, ge=1)
    fd_step: float = Field(default=1e-5, gt=0.0)
    n_xi: int = Field(default=5, ge=1)
    xi_scale: float = Field(default=1.0, gt=0.0)
    xi_grid: List[float] = Field(default_factory=lambda: [-1.0, -0.5, 0.0, 0.5, 1.0])
    x0: Optional[List[float]] = None
    laplace_lambdas: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    laplace_samples: int = Field(default=100_000, ge=10)
    sample_every: int = Field(default=100, ge=1, description="Tracking samples every n integrator steps")


class ExperimentConfig(_Section):
    """Full experiment description (one TOML file)"""
    experiment: ExperimentName = "check-gap"
    output_dir: str = Field(default_factory=lambda: sim_config.output_dir)
    threads: int = Field(default_factory=lambda: sim_config.threads, ge=1)
    spectrum: SpectrumConfig = Field(default_factory=SpectrumConfig)
    nonlinearity: NonlinearityConfig = Field(default_factory=NonlinearityConfig)
    noise: NoiseConfig = Field(default_factory=NoiseConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    params: ExperimentParams = Field(default_factory=ExperimentParams)

    @model_validator(mode="after")
    def preset_indices_inside_spectrum(self):
        K = len(self.spectrum.eigenvalues) if self.spectrum.eigenvalues is not None else self.spectrum.K
        nl = self.nonlinearity
        if nl.preset == "cross-couple" and max(nl.source, nl.target) > K:
            raise ValueError(f"cross-couple indices {nl.source}->{nl.target} exceed K = {K}")
        if self.params.x0 is not None and len(self.params.x0) != K:
            raise ValueError(f"x0 has {len(self.params.x0)} entries, expected K = {K}")
        return self


# ===============================
# REPORT MODELS
# ===============================

class GapReport(BaseModel):
    """Spectral gap condition evaluated for one (spectrum, L, mu)"""
    lhs: float
    rhs: float
    satisfied: bool
    beta: float
    margin: float
    L: float
    mu: float
    N: int
    contraction_bound: float = 0.0


class PathDistanceReport(BaseModel):
    """Uniform distance and the best J1 upper bound found"""
    d_uniform: float
    d_j1_upper: float
    lambda_used: str
    knots: List[List[float]] = Field(default_factory=list)
    candidates_tried: int = 0
    budget_exhausted: bool = False


class GrowthReport(BaseModel):
    """Sublinear-growth diagnostics of the stationary OU path"""
    T_probe: float
    max_ratio: float
    mean_plus: float
    mean_minus: float
    passed: bool


class SolveCertificate(BaseModel):
    """Convergence record of one fixed-point solve"""
    iterations: int
    residual: float
    contraction: float
    certified: bool
    tail_bound: float = 0.0


class Manifest(BaseModel):
    """Run record written next to the artifacts"""
    experiment: ExperimentName
    config_hash: str
    code_version: str
    seeds: List[int]
    wall_time: float
    artifacts: List[str]
    exit_status: int = 0
    started_at: datetime = Field(default_factory=datetime.now)
    extra: Dict[str, Any] = Field(default_factory=dict)
