"""
Diagonal operator A: spectrum, P/Q projectors, semigroup actions, dichotomy
estimates, spectral gap check and the E_sigma series
"""
import logging
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np
from scipy.special import gamma, gammaln

from .errors import ContractViolation, DomainError
from .models import GapReport

logger = logging.getLogger(__name__)

Part = Literal["P", "Q", "full"]


def sigma_pow_sigma(sigma: float) -> float:
    """sigma^sigma with the limit value 1 at sigma = 0"""
    return 1.0 if sigma == 0.0 else float(sigma ** sigma)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues lambda_1 <= ... <= lambda_K of A, split index N and exponent sigma"""
    lambdas: np.ndarray
    N: int
    sigma: float = 0.0

    def __post_init__(self):
        lam = np.array(self.lambdas, dtype=float)
        if lam.ndim != 1 or lam.size < 1:
            raise DomainError("spectrum needs at least one eigenvalue")
        if np.any(lam <= 0):
            raise DomainError("eigenvalues must be positive")
        if np.any(np.diff(lam) < 0):
            raise DomainError("eigenvalues must be nondecreasing")
        # N = K means no split: Q is empty
        if not (1 <= self.N <= lam.size):
            raise DomainError(f"split index N must lie in [1, K], got {self.N}")
        if self.N < lam.size and not lam[self.N - 1] < lam[self.N]:
            raise DomainError(f"lambda_N < lambda_(N+1) is required at N = {self.N}")
        if not (0.0 <= self.sigma < 1.0):
            raise DomainError(f"sigma must lie in [0, 1), got {self.sigma}")
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)

    @classmethod
    def power_family(cls, K: int, power: float = 2.0, N: int = 1, sigma: float = 0.0) -> "Spectrum":
        """lambda_k = k^power, k = 1..K (powers of the Dirichlet Laplacian for even power)"""
        return cls(np.arange(1, K + 1, dtype=float) ** power, N, sigma)

    @property
    def K(self) -> int:
        return int(self.lambdas.size)

    @property
    def lambda_N(self) -> float:
        return float(self.lambdas[self.N - 1])

    @property
    def has_split(self) -> bool:
        return self.N < self.K

    @property
    def lambda_N1(self) -> float:
        if not self.has_split:
            raise ContractViolation(f"no eigenvalue above the split N = K = {self.N}")
        return float(self.lambdas[self.N])

    @property
    def weights(self) -> np.ndarray:
        """lambda_k^sigma, the factors of the sigma-norm"""
        return self.lambdas ** self.sigma

    def mask(self, part: Part) -> np.ndarray:
        m = np.zeros(self.K, dtype=bool)
        if part == "P":
            m[:self.N] = True
        elif part == "Q":
            m[self.N:] = True
        else:
            m[:] = True
        return m

    def project(self, v: np.ndarray, part: Part) -> np.ndarray:
        """P v, Q v or v; works on the last axis"""
        v = np.asarray(v, dtype=float)
        return np.where(self.mask(part), v, 0.0)

    def norm(self, v: np.ndarray) -> np.ndarray:
        """sigma-norm (sum lambda_k^(2 sigma) v_k^2)^(1/2) over the last axis"""
        v = np.asarray(v, dtype=float)
        return np.sqrt(np.sum((self.weights * v) ** 2, axis=-1))


# ===============================
# SEMIGROUP
# ===============================

def semigroup_apply(spec: Spectrum, t: float, v: np.ndarray, part: Part = "full", power: float = 0.0) -> np.ndarray:
    """
    lambda_k^power * exp(-lambda_k t) * v_k on the selected block.

    The Q block (and so the full operator) only evolves forward: t < 0 is rejected.
    """
    if part in ("Q", "full") and t < 0:
        raise ContractViolation(f"backward evolution of the {part} semigroup (t = {t}) is undefined")
    factors = spec.lambdas ** power * np.exp(-spec.lambdas * t)
    return np.where(spec.mask(part), factors * np.asarray(v, dtype=float), 0.0)


def dichotomy_bounds(spec: Spectrum, t: float) -> Tuple[float, Optional[float], Optional[float]]:
    """
    Right-hand sides of the three dichotomy estimates at time t:
    ||A^s e^{-At} P|| (any t), ||e^{-At} Q|| and ||A^s e^{-At} Q|| (t > 0 only, else None).
    """
    s = spec.sigma
    p_bound = spec.lambda_N ** s * np.exp(spec.lambda_N * abs(t))
    if t <= 0:
        return float(p_bound), None, None
    q_bound = np.exp(-spec.lambda_N1 * t)
    q_sigma = ((s / t) ** s if s > 0 else 1.0) + spec.lambda_N1 ** s
    return float(p_bound), float(q_bound), float(q_sigma * np.exp(-spec.lambda_N1 * t))


# ===============================
# SPECTRAL GAP
# ===============================

def gap_rhs(spec: Spectrum, L: float, mu: float) -> float:
    s = spec.sigma
    diff = spec.lambda_N1 - spec.lambda_N
    return (2.0 * L / mu) * (spec.lambda_N ** s + sigma_pow_sigma(s) * gamma(1.0 - s) * diff ** s
                             + spec.lambda_N1 ** s)


def contraction_bound(spec: Spectrum, L: float, beta: float) -> float:
    """Bound on the Lyapunov-Perron map's contraction constant in the beta-weighted norm"""
    s = spec.sigma
    if not (spec.lambda_N < beta < spec.lambda_N1):
        return float("inf")
    return float(L * (spec.lambda_N ** s / (beta - spec.lambda_N)
                      + sigma_pow_sigma(s) * gamma(1.0 - s) / (spec.lambda_N1 - beta) ** (1.0 - s)
                      + spec.lambda_N1 ** s / (spec.lambda_N1 - beta)))


def check_gap(spec: Spectrum, L: float, mu: float) -> GapReport:
    """Evaluate the spectral gap condition and the rate beta"""
    if not (0.0 < mu < 1.0):
        raise DomainError(f"mu must lie in (0, 1), got {mu}", {"mu": mu})
    if L < 0:
        raise DomainError(f"Lipschitz constant must be nonnegative, got {L}", {"L": L})
    if not spec.has_split:
        raise DomainError(f"the gap check needs 1 <= N < K, got N = {spec.N}, K = {spec.K}", {"N": spec.N})
    lhs = spec.lambda_N1 - spec.lambda_N
    rhs = gap_rhs(spec, L, mu)
    beta = spec.lambda_N + (2.0 / mu) * L * spec.lambda_N ** spec.sigma
    satisfied = bool(lhs >= rhs)
    report = GapReport(
        lhs=float(lhs),
        rhs=float(rhs),
        satisfied=satisfied,
        beta=float(beta),
        margin=float(lhs - rhs),
        L=float(L),
        mu=float(mu),
        N=spec.N,
        contraction_bound=contraction_bound(spec, L, beta) if L > 0 else 0.0,
    )
    logger.debug(f"Gap check N={spec.N}: lhs={lhs:.6g} rhs={rhs:.6g} beta={beta:.6g} satisfied={satisfied}")
    return report


# ===============================
# A-PRIORI BOUND
# ===============================

def e_sigma_series(sigma: float, x: float, rtol: float = 1e-12, max_terms: int = 100_000) -> float:
    """E_sigma(x) = sum_n x^(n(1-sigma)) / Gamma(n(1-sigma) + 1); equals e^x at sigma = 0"""
    if x < 0:
        raise DomainError(f"E_sigma is evaluated for x >= 0 only, got {x}")
    if not (0.0 <= sigma < 1.0):
        raise DomainError(f"sigma must lie in [0, 1), got {sigma}")
    if x == 0:
        return 1.0
    a = 1.0 - sigma
    log_x = np.log(x)
    total = 0.0
    n = 0
    while n < max_terms:
        term = float(np.exp(n * a * log_x - gammaln(n * a + 1.0)))
        total += term
        # terms decrease monotonically past the peak at n*a ~ x
        if n * a > x + 1 and term <= rtol * total:
            break
        n += 1
    return total


def apriori_bound(
    spec: Spectrum,
    L: float,
    x_norm: float,
    T: float,
    N_path: float,
    M: float = 1.0,
    kappa: Optional[float] = None,
) -> float:
    """
    e^{kappa T} M N x_norm E_sigma(theta T) with theta = [M L N Gamma(1-sigma)]^(1/(1-sigma)).

    Bounds e^{kappa t} ||u(t)||_sigma on [0, T]; diagonal A gives M = 1, kappa = lambda_1.
    """
    if spec.sigma >= 1.0:
        raise DomainError("the a-priori bound needs sigma < 1")
    if min(L, x_norm, T, N_path) < 0 or M < 1:
        raise DomainError("a-priori bound arguments must be nonnegative with M >= 1")
    kappa = float(spec.lambdas[0]) if kappa is None else kappa
    s = spec.sigma
    theta = (M * L * N_path * gamma(1.0 - s)) ** (1.0 / (1.0 - s))
    return float(np.exp(kappa * T) * M * N_path * x_norm * e_sigma_series(s, theta * T))

