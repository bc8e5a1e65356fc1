"""Time-domain recursion, nonlinear forward passes and frequency responses."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .core import Activation, DtLayer, Model
from .errors import ChannelMismatch, DimensionMismatch


@dataclass(frozen=True, eq=False)
class Signal:
    """Real time-major signal, shape (T, h)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise DimensionMismatch(f"signal must be 2-D (T, h), got shape {arr.shape}")
        object.__setattr__(self, "data", arr)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def h(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True, eq=False)
class FreqGrid:
    """Ascending angles in [0, 2*pi], starting at 0."""

    thetas: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.thetas, dtype=np.float64).reshape(-1)
        if t.size == 0 or t[0] != 0.0 or t[-1] > 2.0 * np.pi or np.any(np.diff(t) < 0):
            raise DimensionMismatch("grid must be sorted in [0, 2*pi] and start at 0")
        object.__setattr__(self, "thetas", t)

    @classmethod
    def uniform(cls, size: int) -> "FreqGrid":
        return cls(np.linspace(0.0, 2.0 * np.pi, size, endpoint=False))


def activation_apply(act: Activation, x):
    """Apply the activation elementwise; GELU uses the exact Gaussian-CDF form."""
    x = np.asarray(x, dtype=np.float64)
    if act is Activation.IDENTITY:
        return x
    if act is Activation.RELU:
        return np.maximum(x, 0.0)
    if act is Activation.GELU:
        return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))
    raise ValueError(f"unknown activation {act!r}")


def decay_pad_length(dt: DtLayer, tol: float = 1e-12) -> int:
    """Steps after which the slowest mode has decayed below ``tol``."""
    mags = np.abs(dt.lambda_bar)
    mx = float(np.max(mags)) if mags.size else 0.0
    if mx <= 0.0:
        return 1
    return int(math.ceil(math.log(tol) / math.log(mx)))


def pad_for_decay(u: Signal, layers: DtLayer | list[DtLayer], tol: float = 1e-12) -> Signal:
    """Append a zero tail long enough for transients to die below ``tol``."""
    if isinstance(layers, DtLayer):
        layers = [layers]
    pad = max(decay_pad_length(l, tol) for l in layers)
    tail = np.zeros((pad, u.h))
    return Signal(np.concatenate([u.data, tail], axis=0))


def _masked_matrices(dt: DtLayer, keep):
    b_bar, c_fwd, c_bwd = dt.b_bar, dt.c_fwd, dt.c_bwd
    if keep is not None:
        keep = np.asarray(keep, dtype=bool)
        b_bar = np.where(keep[:, None], b_bar, 0.0)
        c_fwd = np.where(keep[None, :], c_fwd, 0.0)
        if c_bwd is not None:
            c_bwd = np.where(keep[None, :], c_bwd, 0.0)
    return b_bar, c_fwd, c_bwd


def _linear_pass(lambda_bar, b_bar, c, u):
    """x_{k+1} = diag(lambda_bar) x_k + b_bar u_k with x_0 = 0; returns C x."""
    T = u.shape[0]
    n = lambda_bar.shape[0]
    bu = u @ b_bar.T
    states = np.empty((T, n), dtype=np.complex128)
    x = np.zeros(n, dtype=np.complex128)
    for k in range(T):
        states[k] = x
        x = lambda_bar * x + bu[k]
    return states @ c.T


def run_recursion(dt: DtLayer, u: Signal, keep=None) -> Signal:
    """Run the state recursion; masked states contribute nothing.

    The imaginary residue left after summing conjugate-pair contributions is
    discarded.  Bidirectional layers add a time-reversed pass through c_bwd.
    """
    if u.h != dt.h:
        raise ChannelMismatch(f"signal has {u.h} channels, layer expects {dt.h}")
    b_bar, c_fwd, c_bwd = _masked_matrices(dt, keep)
    y = _linear_pass(dt.lambda_bar, b_bar, c_fwd, u.data)
    if c_bwd is not None:
        y_rev = _linear_pass(dt.lambda_bar, b_bar, c_bwd, u.data[::-1])
        y = y + y_rev[::-1]
    return Signal(y.real + u.data @ dt.d.T)


def layer_forward(dt: DtLayer, act: Activation, u: Signal, keep=None) -> Signal:
    """Linear recursion followed by the elementwise activation."""
    return Signal(activation_apply(act, run_recursion(dt, u, keep=keep).data))


def model_forward(model: Model, u: Signal, masks=None) -> Signal:
    """Compose layer_forward over the whole stack in order.

    ``masks`` may be a PruneMask (keep vectors or element masks per layer) or
    a plain list of per-layer keep vectors / None.
    """
    from .pruning import PruneMask, apply_element_mask  # local import to avoid a cycle

    out = u
    for l, layer in enumerate(model.layers):
        keep = None
        if masks is not None:
            if isinstance(masks, PruneMask):
                if masks.element_masks is not None:
                    layer = apply_element_mask(layer, masks.element_masks[l])
                else:
                    keep = masks.keep[l]
            else:
                keep = masks[l]
        out = layer_forward(layer, model.activation, out, keep=keep)
    return out


def frequency_response(
    dt: DtLayer, subset, grid: FreqGrid, include_feedthrough: bool = False
) -> np.ndarray:
    """G(e^{j theta}) restricted to a state subset, one h-by-h matrix per angle.

    The response is the sum of rank-1 subsystem responses
    C_i B_bar_i / (z - lambda_bar_i) over the subset; the feed-forward D term
    is excluded unless requested.  Bidirectional layers use the forward and
    conjugate-reversed backward read-outs, matching the time-domain sum.
    """
    if subset is None:
        subset = np.arange(dt.n)
    subset = np.asarray(subset, dtype=int)
    z = np.exp(1j * grid.thetas)
    K, h = z.shape[0], dt.h
    if subset.size == 0:
        g = np.zeros((K, h, h), dtype=np.complex128)
    else:
        w = 1.0 / (z[:, None] - dt.lambda_bar[subset][None, :])  # (K, m)
        cf = dt.c_fwd[:, subset]
        bs = dt.b_bar[subset, :]
        g = np.einsum("im,km,mj->kij", cf, w, bs)
        if dt.c_bwd is not None:
            # Reverse-run-reverse composition evaluates the backward read-out
            # at z^{-1}.
            wb = 1.0 / (np.conj(z)[:, None] - dt.lambda_bar[subset][None, :])
            cb = dt.c_bwd[:, subset]
            g = g + np.einsum("im,km,mj->kij", cb, wb, bs)
    if include_feedthrough:
        g = g + dt.d[None, :, :]
    return g
