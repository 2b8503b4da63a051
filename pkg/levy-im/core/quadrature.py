"""
Exponential quadrature on nonuniform grids.

Integrals of e^{c r} against linear interpolants are done in closed form, so the
stiff factor e^{-lambda h} never needs resolving by the grid.
"""
import numpy as np

# below this |x| the closed forms lose digits to cancellation
_SERIES_CUTOFF = 1e-3


def phi1(x: np.ndarray) -> np.ndarray:
    """(e^x - 1) / x with phi1(0) = 1"""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x / 2.0 + x * x / 6.0 + x ** 3 / 24.0, np.expm1(safe) / safe)


def phi_ramp(x: np.ndarray) -> np.ndarray:
    """(e^x (x - 1) + 1) / x^2 with value 1/2 at 0; h^2 phi_ramp(c h) = int_0^h r e^{c r} dr"""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    closed = (np.exp(safe) * (safe - 1.0) + 1.0) / (safe * safe)
    return np.where(small, 0.5 + x / 3.0 + x * x / 8.0 + x ** 3 / 30.0, closed)


def exp_linear_integral(c: np.ndarray, h: float, f0: np.ndarray, f1: np.ndarray) -> np.ndarray:
    """int_0^h e^{c r} (f0 + (f1 - f0) r / h) dr"""
    ch = np.asarray(c, dtype=float) * h
    return h * (f0 * phi1(ch) + (f1 - f0) * phi_ramp(ch))


def _rates(lam: np.ndarray, ndim: int) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    return lam.reshape(lam.shape + (1,) * (ndim - 2))


def forward_convolve(times: np.ndarray, lam: np.ndarray, Z: np.ndarray, src: np.ndarray, init=0.0) -> np.ndarray:
    """
    J(t_j) = e^{-lam (t_j - t_0) + Z_j - Z_0} init + int_{t_0}^{t_j} e^{-lam (t_j - s) + Z_j - Z(s)} src(s) ds.

    src has shape (M+1, k, ...) with lam of shape (k,); the factor e^{Z_j - Z(s)} src(s)
    is interpolated linearly on each cell.
    """
    src = np.asarray(src, dtype=float)
    rate = _rates(lam, src.ndim)
    out = np.empty_like(src)
    out[0] = init
    for j in range(1, times.size):
        h = times[j] - times[j - 1]
        carry = np.exp(Z[j] - Z[j - 1])
        f0 = src[j]
        f1 = carry * src[j - 1]
        out[j] = np.exp(-rate * h) * carry * out[j - 1] + exp_linear_integral(-rate, h, f0, f1)
    return out


def backward_convolve(times: np.ndarray, lam: np.ndarray, Z: np.ndarray, src: np.ndarray, final=0.0) -> np.ndarray:
    """
    V(t_j) = e^{-lam (t_j - t_M) + Z_j - Z_M} final - int_{t_j}^{t_M} e^{-lam (t_j - s) + Z_j - Z(s)} src(s) ds.

    This is the variation-of-constants solution run backward from its value at t_M.
    """
    src = np.asarray(src, dtype=float)
    rate = _rates(lam, src.ndim)
    out = np.empty_like(src)
    out[-1] = final
    for j in range(times.size - 1, 0, -1):
        h = times[j] - times[j - 1]
        carry = np.exp(Z[j - 1] - Z[j])
        f0 = src[j - 1]
        f1 = carry * src[j]
        out[j - 1] = np.exp(rate * h) * carry * out[j] - exp_linear_integral(rate, h, f0, f1)
    return out
