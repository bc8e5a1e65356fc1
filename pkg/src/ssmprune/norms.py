"""Closed-form and brute-force H-infinity norms, signal energies, Parseval checks."""

from __future__ import annotations

import numpy as np

from .core import DtLayer
from .discretize import check_dt_stability, is_stable
from .errors import UnstableLayer, UnstableState
from .simulate import FreqGrid, Signal, frequency_response, pad_for_decay, run_recursion

# Guard against zero denominators in relative errors.
EPS = 1e-300

DEFAULT_GRID = 4096
DEFAULT_REFINE = 60


def effective_c_sq(dt: DtLayer, i: int) -> float:
    """Squared read-out norm of state i; bidirectional layers average both."""
    cf = float(np.sum(np.abs(dt.c_fwd[:, i]) ** 2))
    if dt.c_bwd is None:
        return cf
    cb = float(np.sum(np.abs(dt.c_bwd[:, i]) ** 2))
    return 0.5 * (cf + cb)


def effective_b_sq(dt: DtLayer, i: int) -> float:
    """Squared input norm of state i; taken as 1 when B was frozen in training."""
    if dt.b_fixed:
        return 1.0
    return float(np.sum(np.abs(dt.b_bar[i, :]) ** 2))


def subsystem_hinf(dt: DtLayer, i: int) -> float:
    """Closed-form H-infinity norm of the rank-1 subsystem of state i.

    The outer product C_i B_bar_i has spectral norm ||C_i|| * ||B_bar_i||, so
    the norm is that product over 1 - |lambda_bar_i|.
    """
    mag = abs(dt.lambda_bar[i])
    if not mag < 1.0:
        raise UnstableState(i)
    return float(np.sqrt(effective_c_sq(dt, i) * effective_b_sq(dt, i)) / (1.0 - mag))


def _sigma_max(g: np.ndarray) -> np.ndarray:
    """Largest singular value per grid point, shape (K, h, h) -> (K,)."""
    h = g.shape[-1]
    if h == 1:
        return np.abs(g[:, 0, 0])
    if h <= 8:
        gram = np.einsum("kij,kil->kjl", np.conj(g), g)
        eig = np.linalg.eigvalsh(gram)
        return np.sqrt(np.maximum(eig[:, -1], 0.0))
    return _power_sigma_max(g)


def _power_sigma_max(g: np.ndarray, tol: float = 1e-10, max_iter: int = 500) -> np.ndarray:
    K, h, _ = g.shape
    rng = np.random.default_rng(0)
    v = rng.standard_normal((K, h)) + 1j * rng.standard_normal((K, h))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    prev = np.zeros(K)
    for _ in range(max_iter):
        w = np.einsum("kij,kj->ki", g, v)
        v = np.einsum("kji,kj->ki", np.conj(g), w)
        sigma = np.sqrt(np.linalg.norm(v, axis=1))
        norms = np.linalg.norm(v, axis=1, keepdims=True)
        v = np.where(norms > 0, v / np.maximum(norms, EPS), v)
        if np.max(np.abs(sigma - prev) / np.maximum(sigma, EPS)) < tol:
            break
        prev = sigma
    return sigma


def _gain_at(dt: DtLayer, subset, theta: float, include_feedthrough: bool) -> float:
    z = np.exp(1j * theta)
    if subset is None:
        subset = np.arange(dt.n)
    subset = np.asarray(subset, dtype=int)
    if subset.size == 0:
        g = np.zeros((dt.h, dt.h), dtype=np.complex128)
    else:
        w = 1.0 / (z - dt.lambda_bar[subset])
        g = (dt.c_fwd[:, subset] * w[None, :]) @ dt.b_bar[subset, :]
        if dt.c_bwd is not None:
            wb = 1.0 / (np.conj(z) - dt.lambda_bar[subset])
            g = g + (dt.c_bwd[:, subset] * wb[None, :]) @ dt.b_bar[subset, :]
    if include_feedthrough:
        g = g + dt.d
    return float(_sigma_max(g[None])[0])


_INV_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def hinf_bruteforce(
    dt: DtLayer,
    subset=None,
    grid_size: int = DEFAULT_GRID,
    refine_iters: int = DEFAULT_REFINE,
    include_feedthrough: bool = False,
) -> float:
    """Sup of the largest singular value of G(e^{j theta}) over the circle.

    Coarse maximum over a uniform grid, then golden-section refinement inside
    the best grid cell.  The result is a lower bound that converges to the
    true norm as the grid and refinement grow.
    """
    if not is_stable(dt):
        raise UnstableLayer(f"min stability margin {float(np.min(check_dt_stability(dt)))}")
    if subset is not None and np.asarray(subset).size == 0:
        return 0.0
    grid = FreqGrid.uniform(grid_size)
    gains = _sigma_max(frequency_response(dt, subset, grid, include_feedthrough))
    best = int(np.argmax(gains))
    step = 2.0 * np.pi / grid_size
    lo = grid.thetas[best] - step
    hi = grid.thetas[best] + step
    peak = float(gains[best])

    # Golden-section search for the maximum inside [lo, hi].
    a, b = lo, hi
    x1 = b - _INV_GOLDEN * (b - a)
    x2 = a + _INV_GOLDEN * (b - a)
    f1 = _gain_at(dt, subset, x1, include_feedthrough)
    f2 = _gain_at(dt, subset, x2, include_feedthrough)
    for _ in range(refine_iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_GOLDEN * (b - a)
            f2 = _gain_at(dt, subset, x2, include_feedthrough)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_GOLDEN * (b - a)
            f1 = _gain_at(dt, subset, x1, include_feedthrough)
    return max(peak, f1, f2)


def signal_energy(u: Signal) -> float:
    """Sum of squared entries over all times and channels."""
    return float(np.sum(u.data**2))


def parseval_check(u: Signal) -> float:
    """Relative gap between time-domain and unitary-DFT-domain energy."""
    e_time = signal_energy(u)
    spectrum = np.fft.fft(u.data, axis=0, norm="ortho")
    e_freq = float(np.sum(np.abs(spectrum) ** 2))
    return abs(e_time - e_freq) / max(e_time, e_freq, EPS)


def energy_gain_check(
    dt: DtLayer,
    u: Signal,
    grid_size: int = DEFAULT_GRID,
    refine_iters: int = DEFAULT_REFINE,
) -> dict:
    """Check the output-energy bound ||y||^2 <= ||G||_inf^2 ||u||^2.

    The input is zero-padded so transients decay before energy is read; the
    norm comes from the brute-force sweep with feedthrough included.
    """
    padded = pad_for_decay(u, dt)
    y = run_recursion(dt, padded)
    include_d = bool(np.any(dt.d))
    hinf = hinf_bruteforce(
        dt, grid_size=grid_size, refine_iters=refine_iters, include_feedthrough=include_d
    )
    output_energy = signal_energy(y)
    bound = hinf**2 * signal_energy(u)
    return {
        "output_energy": output_energy,
        "bound": bound,
        "slack": bound - output_energy,
        "hinf": hinf,
    }
