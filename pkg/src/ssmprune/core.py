"""Domain types for diagonal state space layers, model assembly and validation.

Layers are stored with the full spectrum: complex-conjugate pole pairs appear
as two explicit states, so recursions and frequency responses can be evaluated
literally without an implicit doubling convention.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AmbiguousPairingWarning, DimensionMismatch, UnpairedState


class Activation(enum.Enum):
    GELU = "gelu"
    RELU = "relu"
    IDENTITY = "identity"


class ArchKind(enum.Enum):
    MIMO = "mimo"
    MULTI_SISO = "multi_siso"


@dataclass(frozen=True)
class Arch:
    """Layer architecture tag: one MIMO system, or h stacked SISO systems."""

    kind: ArchKind
    n_s: int | None = None
    h: int | None = None


MIMO = Arch(ArchKind.MIMO)


def _as_complex(a) -> np.ndarray:
    return np.asarray(a, dtype=np.complex128)


def _as_real(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class CtLayer:
    """Continuous-time diagonal layer (Lambda, B, C, D, Delta).

    ``lam`` holds the diagonal of the state matrix (one complex pole per
    state, 1/time units) and ``delta`` the per-state timescales (time units).
    ``c_bwd`` is present only for bidirectional layers.  ``b_fixed`` marks a
    B matrix that was frozen during training, which simplifies importance
    scoring downstream.
    """

    lam: np.ndarray
    b: np.ndarray
    c_fwd: np.ndarray
    d: np.ndarray
    delta: np.ndarray
    c_bwd: np.ndarray | None = None
    b_fixed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lam", _as_complex(self.lam).reshape(-1))
        object.__setattr__(self, "b", _as_complex(self.b))
        object.__setattr__(self, "c_fwd", _as_complex(self.c_fwd))
        object.__setattr__(self, "d", _as_real(self.d))
        object.__setattr__(self, "delta", _as_real(self.delta).reshape(-1))
        if self.c_bwd is not None:
            object.__setattr__(self, "c_bwd", _as_complex(self.c_bwd))

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    @property
    def h(self) -> int:
        return self.c_fwd.shape[0]

    @property
    def bidirectional(self) -> bool:
        return self.c_bwd is not None


@dataclass(frozen=True, eq=False)
class DtLayer:
    """ZOH-discretized diagonal layer with architecture metadata."""

    lambda_bar: np.ndarray
    b_bar: np.ndarray
    c_fwd: np.ndarray
    d: np.ndarray
    c_bwd: np.ndarray | None = None
    arch: Arch = MIMO
    conj_pairs: tuple[tuple[int, int], ...] | None = None
    b_fixed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "lambda_bar", _as_complex(self.lambda_bar).reshape(-1))
        object.__setattr__(self, "b_bar", _as_complex(self.b_bar))
        object.__setattr__(self, "c_fwd", _as_complex(self.c_fwd))
        object.__setattr__(self, "d", _as_real(self.d))
        if self.c_bwd is not None:
            object.__setattr__(self, "c_bwd", _as_complex(self.c_bwd))
        if self.conj_pairs is not None:
            object.__setattr__(
                self, "conj_pairs", tuple((int(i), int(j)) for i, j in self.conj_pairs)
            )

    @property
    def n(self) -> int:
        return self.lambda_bar.shape[0]

    @property
    def h(self) -> int:
        return self.c_fwd.shape[0]

    @property
    def bidirectional(self) -> bool:
        return self.c_bwd is not None

    def with_pairs(self, pairs) -> "DtLayer":
        return replace(self, conj_pairs=tuple(tuple(p) for p in pairs))


@dataclass(frozen=True, eq=False)
class Model:
    """Ordered stack of discrete-time layers sharing one activation."""

    layers: tuple[DtLayer, ...]
    activation: Activation = Activation.GELU
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def h(self) -> int:
        return self.layers[0].h


@dataclass(frozen=True)
class Violation:
    """One failed invariant: which field, at which index, with what value."""

    field: str
    index: int | None
    observed: object
    message: str

    def __str__(self):
        where = f"[{self.index}]" if self.index is not None else ""
        return f"{self.field}{where}: {self.message} (observed {self.observed})"


# Tolerance separating true conjugate pairs from coincidences in 32-bit
# trained parameters after 64-bit expansion.
PAIRING_TOL = 1e-9


def _check_dims(layer, report):
    n, h = layer.n, layer.h
    b = layer.b if isinstance(layer, CtLayer) else layer.b_bar
    b_name = "b" if isinstance(layer, CtLayer) else "b_bar"
    if b.shape != (n, h):
        report.append(Violation(b_name, None, b.shape, f"expected shape ({n}, {h})"))
    if layer.c_fwd.shape != (h, n):
        report.append(Violation("c_fwd", None, layer.c_fwd.shape, f"expected shape ({h}, {n})"))
    if layer.c_bwd is not None and layer.c_bwd.shape != (h, n):
        report.append(Violation("c_bwd", None, layer.c_bwd.shape, f"expected shape ({h}, {n})"))
    if layer.d.shape != (h, h):
        report.append(Violation("d", None, layer.d.shape, f"expected shape ({h}, {h})"))


def _check_finite(name, arr, report):
    if arr is not None and not np.all(np.isfinite(arr)):
        report.append(Violation(name, None, "non-finite", "entries must be finite"))


def validate_layer(layer: CtLayer | DtLayer, tol: float = PAIRING_TOL) -> list[Violation]:
    """Check all type invariants; returns an empty list iff the layer is valid."""
    report: list[Violation] = []
    _check_dims(layer, report)
    if isinstance(layer, CtLayer):
        _check_finite("lam", layer.lam, report)
        _check_finite("b", layer.b, report)
        for i, lam in enumerate(layer.lam):
            if not lam.real < 0:
                report.append(Violation("lam", i, lam, f"Re(lambda[{i}]) >= 0, not Hurwitz"))
        if layer.delta.shape[0] != layer.n:
            report.append(Violation("delta", None, layer.delta.shape, f"expected length {layer.n}"))
        else:
            for i, dt in enumerate(layer.delta):
                if not dt > 0:
                    report.append(Violation("delta", i, dt, f"delta[{i}] <= 0"))
    else:
        _check_finite("lambda_bar", layer.lambda_bar, report)
        _check_finite("b_bar", layer.b_bar, report)
        for i, lb in enumerate(layer.lambda_bar):
            if not abs(lb) < 1.0:
                report.append(Violation("lambda_bar", i, lb, f"|lambda_bar[{i}]| >= 1, unstable"))
        if layer.conj_pairs is not None:
            report.extend(_check_pairing(layer, tol))
    _check_finite("c_fwd", layer.c_fwd, report)
    _check_finite("c_bwd", layer.c_bwd, report)
    _check_finite("d", layer.d, report)
    return report


def _check_pairing(layer: DtLayer, tol: float) -> list[Violation]:
    report = []
    seen = np.zeros(layer.n, dtype=bool)
    for i, j in layer.conj_pairs:
        if not (0 <= i < layer.n and 0 <= j < layer.n) or i == j or seen[i] or seen[j]:
            report.append(Violation("conj_pairs", None, (i, j), "not a perfect matching"))
            continue
        seen[i] = seen[j] = True
        scale = max(1.0, abs(layer.lambda_bar[i]))
        if abs(layer.lambda_bar[i] - np.conj(layer.lambda_bar[j])) > tol * scale:
            report.append(
                Violation("lambda_bar", i, layer.lambda_bar[i], f"not conjugate to state {j}")
            )
        b_scale = max(1.0, float(np.max(np.abs(layer.b_bar[i]))) if layer.h else 1.0)
        if np.max(np.abs(layer.b_bar[i] - np.conj(layer.b_bar[j]))) > tol * b_scale:
            report.append(Violation("b_bar", i, None, f"row not conjugate to row {j}"))
        for name, c in (("c_fwd", layer.c_fwd), ("c_bwd", layer.c_bwd)):
            if c is None:
                continue
            c_scale = max(1.0, float(np.max(np.abs(c[:, i]))))
            if np.max(np.abs(c[:, i] - np.conj(c[:, j]))) > tol * c_scale:
                report.append(Violation(name, i, None, f"column not conjugate to column {j}"))
    if not np.all(seen):
        missing = int(np.flatnonzero(~seen)[0])
        report.append(Violation("conj_pairs", missing, None, "state not covered by any pair"))
    return report


def pair_conjugates(layer: DtLayer, tol: float = PAIRING_TOL) -> tuple[tuple[int, int], ...]:
    """Match states into conjugate pairs by pole value.

    Greedy over ascending indices: each unmatched state claims its nearest
    unmatched conjugate within ``tol`` (relative).  Equidistant candidates are
    resolved toward the lowest index with a warning.  Raises
    :class:`UnpairedState` when a state has no partner.
    """
    poles = layer.lambda_bar
    n = poles.shape[0]
    matched = np.zeros(n, dtype=bool)
    pairs = []
    for i in range(n):
        if matched[i]:
            continue
        scale = max(1.0, abs(poles[i]))
        best_j, best_d = None, None
        tie = False
        for j in range(n):
            if j == i or matched[j]:
                continue
            dist = abs(poles[i] - np.conj(poles[j]))
            if dist <= tol * scale:
                if best_d is None or dist < best_d:
                    best_j, best_d, tie = j, dist, False
                elif dist == best_d:
                    tie = True
        if best_j is None:
            raise UnpairedState(i)
        if tie:
            warnings.warn(
                f"ambiguous conjugate pairing for state {i}; lowest index {best_j} chosen",
                AmbiguousPairingWarning,
            )
        matched[i] = matched[best_j] = True
        pairs.append((i, best_j))
    return tuple(pairs)


def siso_block_to_mimo(siso_systems: list[DtLayer]) -> DtLayer:
    """Assemble h single-channel systems into one block-diagonal MIMO layer.

    System k feeds from and writes to channel k only, so each channel of the
    result reproduces the corresponding SISO output with identical arithmetic.
    """
    h = len(siso_systems)
    if h == 0:
        raise DimensionMismatch("need at least one SISO system")
    n_s = siso_systems[0].n
    bidir = siso_systems[0].bidirectional
    for k, sys in enumerate(siso_systems):
        if sys.h != 1:
            raise DimensionMismatch(f"system {k} has {sys.h} channels, expected 1")
        if sys.n != n_s:
            raise DimensionMismatch(f"system {k} has order {sys.n}, expected {n_s}")
        if sys.bidirectional != bidir:
            raise DimensionMismatch(f"system {k} mixes bidirectional variants")
    n = n_s * h
    lambda_bar = np.concatenate([s.lambda_bar for s in siso_systems])
    b_bar = np.zeros((n, h), dtype=np.complex128)
    c_fwd = np.zeros((h, n), dtype=np.complex128)
    c_bwd = np.zeros((h, n), dtype=np.complex128) if bidir else None
    d = np.zeros((h, h), dtype=np.float64)
    pairs = []
    have_pairs = all(s.conj_pairs is not None for s in siso_systems)
    for k, sys in enumerate(siso_systems):
        sl = slice(k * n_s, (k + 1) * n_s)
        b_bar[sl, k] = sys.b_bar[:, 0]
        c_fwd[k, sl] = sys.c_fwd[0, :]
        if bidir:
            c_bwd[k, sl] = sys.c_bwd[0, :]
        d[k, k] = sys.d[0, 0]
        if have_pairs:
            pairs.extend((i + k * n_s, j + k * n_s) for i, j in sys.conj_pairs)
    return DtLayer(
        lambda_bar=lambda_bar,
        b_bar=b_bar,
        c_fwd=c_fwd,
        c_bwd=c_bwd,
        d=d,
        arch=Arch(ArchKind.MULTI_SISO, n_s=n_s, h=h),
        conj_pairs=tuple(pairs) if have_pairs else None,
        b_fixed=all(s.b_fixed for s in siso_systems),
    )
