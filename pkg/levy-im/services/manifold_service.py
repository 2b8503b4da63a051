"""
Service for the random inertial manifold experiments: graph samples, derivative
checks, invariance/attraction defects and the alpha -> 2 convergence table
"""
import itertools
import logging
from functools import partial
from pathlib import Path
from typing import List, Tuple

import numpy as np
import pandas as pd

from core.dynamics import integrate
from core.manifold import (
    ManifoldGraph,
    d_psi,
    d_psi_operator_norm,
    default_t_minus,
    forward_track_solve,
    lp_solve,
    manifold_convergence,
    psi,
    q_norm,
    tracking_defect,
    transformed_graph,
)
from core.models import ExperimentConfig
from core.noise import build_scenario
from core.ou import scenario_ou
from core.spectral import Spectrum
from utils.artifacts import write_table
from utils.plotting import emit_plot_data
from utils.pool import fan_out
from services.dynamics_service import initial_state
from services.spectral_service import nonlinearity_from_config, spectral_service, spectrum_from_config

logger = logging.getLogger(__name__)


def xi_columns(spec: Spectrum) -> List[str]:
    return [f"xi_{k}" for k in range(1, spec.N + 1)]


def psi_columns(spec: Spectrum) -> List[str]:
    return [f"psi_{k}" for k in range(spec.N + 1, spec.K + 1)]


def random_xis(config: ExperimentConfig, N: int, stream: int = 1) -> np.ndarray:
    """n_xi points of the P-block, seeded by the noise seed"""
    rng = np.random.default_rng([config.noise.seed, stream])
    return config.params.xi_scale * rng.normal(size=(config.params.n_xi, N))


class ManifoldService:
    """Service for solve-manifold, d-psi-check, track-defect and converge-manifolds runs"""

    def build_graph(self, config: ExperimentConfig, forward: float = 1.0) -> Tuple[ManifoldGraph, Spectrum]:
        """
        Graph for the first configured alpha and the base seed.

        The scenario covers the history span plus the OU tail backwards and `forward`
        time units ahead for shifted graphs.
        """
        gap = spectral_service.require_gap(config)
        spec = spectrum_from_config(config)
        nl = nonlinearity_from_config(config, spec)
        solver = config.solver
        span = solver.t_back if solver.t_back is not None else default_t_minus(spec, gap.beta)
        alpha = config.noise.alphas[0]
        scenario = build_scenario(alpha, config.noise.seed, horizon=(span + solver.ou_tail + 1.0, forward + 1.0),
                                  mesh=config.noise.mesh)
        graph = ManifoldGraph(scenario, spec, nl, solver.mu, solver.tol_fp, solver.max_iter, t_minus=span,
                              ou=scenario_ou(scenario, solver.ou_tail), gap=gap)
        logger.info(f"Manifold graph alpha={alpha} seed={config.noise.seed}: T-={span:.4g}, beta={gap.beta:.6g}")
        return graph, spec

    def run_solve_manifold(self, config: ExperimentConfig, out_dir: Path, progress: bool = False) -> List[Path]:
        """Graph samples on the tensor grid xi_grid^N, solver certificates and the graph Lipschitz check"""
        graph, spec = self.build_graph(config)
        xis = np.array(list(itertools.product(config.params.xi_grid, repeat=spec.N)), dtype=float)

        def solve(i: int):
            return lp_solve(graph, xis[i])

        histories = fan_out(solve, range(len(xis)), threads=config.threads, progress=progress, desc="solve-manifold")
        values = np.array([histories[i].states[-1, spec.N:] for i in range(len(xis))])
        graph_table = pd.DataFrame(np.hstack([xis, values]), columns=xi_columns(spec) + psi_columns(spec))
        original = np.array([transformed_graph(graph, xi) for xi in xis])
        original_table = pd.DataFrame(np.hstack([xis, original]), columns=xi_columns(spec) + psi_columns(spec))

        certificates = pd.DataFrame([histories[i].certificate.model_dump() for i in range(len(xis))])
        certificates.insert(0, "row", np.arange(len(xis)))
        uncertified = int((~certificates["certified"]).sum())
        if uncertified:
            logger.warning(f"{uncertified} of {len(xis)} solves not certified at mu={graph.mu}")

        lipschitz = self.graph_lipschitz(graph, config)
        return [
            write_table(graph_table, out_dir, "manifold_graph"),
            write_table(original_table, out_dir, "manifold_graph_original"),
            write_table(certificates, out_dir, "lp_certificates"),
            write_table(lipschitz, out_dir, "graph_lipschitz"),
        ]

    def graph_lipschitz(self, graph: ManifoldGraph, config: ExperimentConfig) -> pd.DataFrame:
        """Largest ||psi(xi1) - psi(xi2)|| / ||xi1 - xi2|| over random pairs against mu / (2 (1 - mu))"""
        spec = graph.spec
        rng = np.random.default_rng([config.noise.seed, 2])
        pairs = config.params.xi_scale * rng.normal(size=(config.params.lipschitz_pairs, 2, spec.N))
        ratios = []
        for a, b in pairs:
            full = np.zeros(spec.K)
            full[:spec.N] = a - b
            ratios.append(q_norm(spec, psi(graph, a) - psi(graph, b)) / float(spec.norm(full)))
        bound = graph.mu / (2.0 * (1.0 - graph.mu))
        ratio = float(max(ratios))
        if ratio > bound + 1e-6:
            logger.warning(f"Empirical graph Lipschitz ratio {ratio:.6g} exceeds {bound:.6g}")
        return pd.DataFrame([{"pairs": len(ratios), "max_ratio": ratio, "bound": bound,
                              "within_bound": ratio <= bound + 1e-6}])

    def run_d_psi_check(self, config: ExperimentConfig, out_dir: Path, progress: bool = False) -> List[Path]:
        """D psi from the linearised fixed point against central differences of psi"""
        graph, spec = self.build_graph(config)
        step = config.params.fd_step
        rows = []
        for xi in random_xis(config, spec.N):
            exact = d_psi(graph, xi)
            fd = np.empty_like(exact)
            for k in range(spec.N):
                e = np.zeros(spec.N)
                e[k] = step
                fd[:, k] = (psi(graph, xi + e) - psi(graph, xi - e)) / (2.0 * step)
            rel = float(np.linalg.norm(exact - fd) / max(np.linalg.norm(exact), np.finfo(float).tiny))
            row = dict(zip(xi_columns(spec), xi))
            row.update({"rel_error": rel, "d_psi_norm": d_psi_operator_norm(spec, exact)})
            rows.append(row)
        table = pd.DataFrame(rows)
        worst = float(table["rel_error"].max())
        logger.info(f"Derivative check: worst relative error {worst:.3e} over {len(table)} points")
        if worst >= 1e-4:
            logger.warning(f"D psi disagrees with finite differences (relative error {worst:.3e})")
        return [write_table(table, out_dir, "d_psi_check")]

    def run_track_defect(self, config: ExperimentConfig, out_dir: Path, progress: bool = False) -> List[Path]:
        """Defect of the forward solution from x0 and the shadowing distance to its manifold point"""
        T = config.params.horizon
        solver = config.solver
        gap = spectral_service.require_gap(config)
        t_plus = max(T, float(np.log(1.0 / solver.tol_fp) / gap.beta))
        graph, spec = self.build_graph(config, forward=t_plus)
        x = initial_state(config, spec.K)

        result = tracking_defect(graph, x, T, dt=solver.dt, sample_every=config.params.sample_every)
        summary = pd.DataFrame([{
            "slope": result.slope,
            "beta": result.beta,
            "target_slope": -result.beta / 2.0,
            "slope_gate": result.slope_gate,
            "passes_gate": result.passes_gate,
            "fit_points": result.fit_points,
            "initial_defect": float(result.frame["defect"].iloc[0]),
        }])
        artifacts = [
            write_table(result.frame, out_dir, "tracking_defect"),
            write_table(summary, out_dir, "tracking_summary"),
        ]
        if not result.passes_gate:
            logger.warning(f"Tracking slope {result.slope:.4g} misses the gate {result.slope_gate:.4g} (beta = {result.beta:.4g})")

        shadowing = self.shadowing_distance(graph, x, T, solver.dt, config.params.sample_every, t_plus)
        artifacts.append(write_table(shadowing, out_dir, "shadowing"))
        return artifacts

    def shadowing_distance(self, graph: ManifoldGraph, x: np.ndarray, T: float, dt: float,
                           sample_every: int, t_plus: float) -> pd.DataFrame:
        """||u(t, x) - u(t, x~)||_sigma with x~ the manifold point that shadows x"""
        spec = graph.spec
        track = forward_track_solve(graph, x, T_plus=t_plus)
        logger.info(f"Shadow point found after {track.outer_iterations} outer iterations "
                    f"(change {track.outer_change:.3e})")
        a = integrate(graph.scenario, spec, graph.nl, x, T, dt, ou=graph.ou)
        b = integrate(graph.scenario, spec, graph.nl, track.shadow, T, dt, ou=graph.ou)
        picks = np.arange(0, a.times.size, sample_every)
        distance = spec.norm(a.states[picks] - b.states[picks])
        return pd.DataFrame({
            "t": a.times[picks],
            "distance": distance,
            "bound_rate": np.exp(-graph.beta * a.times[picks] / 2.0),
        })

    def run_converge_manifolds(self, config: ExperimentConfig, out_dir: Path, progress: bool = False) -> List[Path]:
        spectral_service.require_gap(config)
        spec = spectrum_from_config(config)
        nl = nonlinearity_from_config(config, spec)
        noise, solver = config.noise, config.solver
        runner = partial(fan_out, threads=config.threads, progress=progress, desc="converge-manifolds")
        table = manifold_convergence(
            noise.alphas, spec, nl, random_xis(config, spec.N), noise.n_seeds,
            seed0=noise.seed, mu=solver.mu, tol_fp=solver.tol_fp, t_minus=solver.t_back,
            mesh=noise.mesh, runner=runner,
        )
        artifacts = [write_table(table, out_dir, "manifold_convergence")]
        artifacts += emit_plot_data(
            table, "alpha", ["median_psi_diff", "median_d_psi_diff", "median_graph_diff"],
            Path(out_dir) / "manifold_convergence", title="manifold differences vs alpha",
        )
        return artifacts


# Global manifold service instance
manifold_service = ManifoldService()
