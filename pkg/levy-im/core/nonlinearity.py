"""
Nonlinearity presets F: D(A^sigma) -> H with certified Lipschitz constants
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

import numpy as np
from scipy.fft import dct

from .errors import ConfigError
from .spectral import Spectrum

logger = logging.getLogger(__name__)

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """
    F with its derivative and declared Lipschitz constant.

    eval maps (..., K) -> (..., K); deriv maps (..., K) -> (..., K, K).
    lipschitz bounds ||F(u1) - F(u2)|| by L ||u1 - u2||_sigma.
    """
    name: str
    K: int
    lipschitz: float
    eval: ArrayFn
    deriv: ArrayFn
    params: Dict[str, Any] = field(default_factory=dict)
    linear: bool = False

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.eval(np.asarray(u, dtype=float))

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"


def _zeros(K: int) -> Nonlinearity:
    return Nonlinearity(
        "zero", K, 0.0,
        eval=lambda u: np.zeros_like(u),
        deriv=lambda u: np.zeros(u.shape + (K,)),
        linear=True,
    )


def _linear(name: str, matrix: np.ndarray, lipschitz: float, params: Dict[str, Any]) -> Nonlinearity:
    K = matrix.shape[0]
    return Nonlinearity(
        name, K, lipschitz,
        eval=lambda u: u @ matrix.T,
        deriv=lambda u: np.broadcast_to(matrix, u.shape[:-1] + (K, K)).copy(),
        params=params,
        linear=True,
    )


def linear_diagonal(spec: Spectrum, eps: float) -> Nonlinearity:
    """F(u) = eps u; keeps P and Q invariant"""
    L = eps * spec.lambdas[0] ** (-spec.sigma)
    return _linear("linear-diagonal", eps * np.eye(spec.K), float(L), {"eps": eps})


def cross_couple(spec: Spectrum, eps: float, source: int, target: int) -> Nonlinearity:
    """F(u) = eps <u, e_source> e_target (1-based indices)"""
    if not (1 <= source <= spec.K and 1 <= target <= spec.K):
        raise ConfigError(f"cross-couple indices {source}->{target} outside 1..{spec.K}", field="nonlinearity")
    matrix = np.zeros((spec.K, spec.K))
    matrix[target - 1, source - 1] = eps
    L = eps * spec.lambdas[source - 1] ** (-spec.sigma)
    return _linear("cross-couple", matrix, float(L), {"eps": eps, "source": source, "target": target})


def saturating(spec: Spectrum, eps: float) -> Nonlinearity:
    """
    F(u) = eps C tanh(u) with C the orthonormal DCT-II matrix.

    C is an isometry and tanh is 1-Lipschitz, so L = eps lambda_1^(-sigma);
    C couples every mode to every other one.
    """
    K = spec.K
    C = dct(np.eye(K), axis=0, norm="ortho")

    def evaluate(u: np.ndarray) -> np.ndarray:
        return eps * dct(np.tanh(u), axis=-1, norm="ortho")

    def derivative(u: np.ndarray) -> np.ndarray:
        sech2 = 1.0 - np.tanh(u) ** 2
        return eps * C * sech2[..., None, :]

    L = eps * spec.lambdas[0] ** (-spec.sigma)
    return Nonlinearity("saturating", K, float(L), evaluate, derivative, {"eps": eps})


def build_nonlinearity(
    preset: str,
    spec: Spectrum,
    eps: float = 0.0,
    source: Optional[int] = None,
    target: Optional[int] = None,
) -> Nonlinearity:
    """Construct a preset by id"""
    if eps < 0:
        raise ConfigError(f"eps must be nonnegative, got {eps}", field="nonlinearity.eps")
    if preset == "zero":
        nl = _zeros(spec.K)
    elif preset == "linear-diagonal":
        nl = linear_diagonal(spec, eps)
    elif preset == "cross-couple":
        nl = cross_couple(spec, eps, source or 1, target or spec.N + 1)
    elif preset == "saturating":
        nl = saturating(spec, eps)
    else:
        raise ConfigError(f"unknown nonlinearity preset '{preset}'", field="nonlinearity.preset")
    logger.debug(f"Nonlinearity {nl.name} {nl.params} with L={nl.lipschitz:.6g}")
    return nl


# ===============================
# CHECKS
# ===============================

def empirical_lipschitz(nl: Nonlinearity, spec: Spectrum, n_pairs: int, rng: np.random.Generator,
                        scale: float = 1.0) -> float:
    """max ||F(u1) - F(u2)|| / ||u1 - u2||_sigma over random pairs"""
    u1 = rng.normal(scale=scale, size=(n_pairs, spec.K))
    u2 = rng.normal(scale=scale, size=(n_pairs, spec.K))
    num = np.linalg.norm(nl(u1) - nl(u2), axis=-1)
    den = spec.norm(u1 - u2)
    return float(np.max(num / den))


def derivative_mismatch(nl: Nonlinearity, u: np.ndarray, step: float = 1e-5) -> float:
    """Relative gap between deriv(u) and central differences of eval at u"""
    u = np.asarray(u, dtype=float)
    K = u.size
    fd = np.empty((K, K))
    for k in range(K):
        e = np.zeros(K)
        e[k] = step
        fd[:, k] = (nl(u + e) - nl(u - e)) / (2.0 * step)
    exact = nl.deriv(u)
    scale = max(np.linalg.norm(exact), 1e-300)
    return float(np.linalg.norm(exact - fd) / scale)
