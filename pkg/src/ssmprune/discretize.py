"""Zero-order-hold discretization, DT stability margins and timescale rescaling."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .core import Arch, CtLayer, DtLayer, MIMO, validate_layer
from .errors import NonHurwitz, NonPositiveRatio

# Below this |lambda * delta| the closed form (lbar - 1) / lambda cancels
# catastrophically; switch to a Taylor series of (e^z - 1) / z.
_SERIES_THRESHOLD = 1e-6


def _phi(z: np.ndarray) -> np.ndarray:
    """(e^z - 1) / z, with a 4-term series fallback near z = 0."""
    out = np.empty_like(z)
    small = np.abs(z) < _SERIES_THRESHOLD
    zs = z[small]
    out[small] = 1.0 + zs / 2.0 + zs**2 / 6.0 + zs**3 / 24.0
    zl = z[~small]
    out[~small] = (np.exp(zl) - 1.0) / zl
    return out


def zoh_discretize(ct: CtLayer, arch: Arch = MIMO) -> DtLayer:
    """Discretize a continuous-time layer by zero-order hold.

    lambda_bar[i] = exp(lambda[i] * delta[i]) and
    b_bar[i, :] = (lambda_bar[i] - 1) / lambda[i] * b[i, :].
    A Hurwitz input always yields |lambda_bar| < 1.
    """
    report = validate_layer(ct)
    if report:
        raise NonHurwitz(f"continuous-time layer invalid: {'; '.join(str(v) for v in report)}")
    z = ct.lam * ct.delta
    lambda_bar = np.exp(z)
    b_bar = (_phi(z) * ct.delta)[:, None] * ct.b
    return DtLayer(
        lambda_bar=lambda_bar,
        b_bar=b_bar,
        c_fwd=ct.c_fwd.copy(),
        c_bwd=None if ct.c_bwd is None else ct.c_bwd.copy(),
        d=ct.d.copy(),
        arch=arch,
        b_fixed=ct.b_fixed,
    )


def check_dt_stability(dt: DtLayer) -> np.ndarray:
    """Per-state stability margins 1 - |lambda_bar[i]|; stable iff min > 0."""
    return 1.0 - np.abs(dt.lambda_bar)


def is_stable(dt: DtLayer) -> bool:
    return bool(np.all(check_dt_stability(dt) > 0.0))


def rescale_timescales(ct: CtLayer, rate_ratio: float) -> CtLayer:
    """Adapt learned timescales to a sampling-rate shift.

    ``rate_ratio`` is f_train / f_new; downsampling 16 kHz audio to 8 kHz
    means a ratio of 2 and doubles every delta.  Composes multiplicatively.
    """
    if not rate_ratio > 0:
        raise NonPositiveRatio(f"rate ratio must be positive, got {rate_ratio}")
    return replace(ct, delta=ct.delta * float(rate_ratio))
