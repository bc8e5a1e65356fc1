"""Empirical verification of the energy-loss bounds on synthetic models."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import Activation, CtLayer, DtLayer, Model, pair_conjugates
from .discretize import is_stable, zoh_discretize
from .errors import UnstableLayer
from .norms import EPS, hinf_bruteforce, signal_energy, subsystem_hinf
from .pruning import (
    Criterion,
    PruneMask,
    hinf_table,
    last_scores,
    select_global,
    select_uniform,
)
from .simulate import Signal, layer_forward, model_forward, pad_for_decay

# Keep the slowest synthetic mode below this magnitude so padded horizons
# stay desk-sized (|lambda_bar| = 0.99 pads ~2,750 steps at 1e-12).
MAX_POLE_MAG = 0.99


def random_ct_layer(rng: np.random.Generator, n: int, h: int, bidirectional: bool = False) -> CtLayer:
    """Random Hurwitz continuous-time layer with conjugate-paired poles.

    Pole decay rates are log-uniform in [0.001, 1], oscillation frequencies
    log-uniform in [0.1, 10] with signs paired; input/read-out entries are
    standard complex normal (conjugate across pairs) and timescales are
    log-uniform in [0.001, 0.1], shared within a pair.
    """
    if n % 2:
        raise ValueError("state dimension must be even for conjugate pairing")
    half = n // 2
    decay = np.exp(rng.uniform(math.log(0.001), math.log(1.0), half))
    freq = np.exp(rng.uniform(math.log(0.1), math.log(10.0), half))
    lam_half = -decay + 1j * freq
    delta_half = np.exp(rng.uniform(math.log(0.001), math.log(0.1), half))
    # Cap the slowest discretized mode so verification horizons stay short.
    slow = -lam_half.real * delta_half < -math.log(MAX_POLE_MAG)
    delta_half[slow] = -math.log(MAX_POLE_MAG) / (-lam_half.real[slow])

    b_half = (rng.standard_normal((half, h)) + 1j * rng.standard_normal((half, h))) / math.sqrt(2)
    c_half = (rng.standard_normal((h, half)) + 1j * rng.standard_normal((h, half))) / math.sqrt(2)
    cb_half = None
    if bidirectional:
        cb_half = (rng.standard_normal((h, half)) + 1j * rng.standard_normal((h, half))) / math.sqrt(2)

    def expand(a, axis):
        return np.concatenate([a, np.conj(a)], axis=axis)

    return CtLayer(
        lam=expand(lam_half, 0),
        b=expand(b_half, 0),
        c_fwd=expand(c_half, 1),
        c_bwd=None if cb_half is None else expand(cb_half, 1),
        d=np.zeros((h, h)),
        delta=np.concatenate([delta_half, delta_half]),
    )


def random_dt_layer(rng: np.random.Generator, n: int, h: int, bidirectional: bool = False) -> DtLayer:
    dt = zoh_discretize(random_ct_layer(rng, n, h, bidirectional))
    return dt.with_pairs(pair_conjugates(dt))


def random_model(
    rng: np.random.Generator,
    num_layers: int,
    n: int,
    h: int,
    activation: Activation = Activation.RELU,
) -> Model:
    layers = tuple(random_dt_layer(rng, n, h) for _ in range(num_layers))
    return Model(layers=layers, activation=activation)


def probe_inputs(rng: np.random.Generator, dt: DtLayer, count: int, horizon: int = 128) -> list[Signal]:
    """White-noise probes plus one impulse and one peak-frequency sinusoid."""
    probes = []
    impulse = np.zeros((horizon, dt.h))
    impulse[0, 0] = 1.0
    probes.append(Signal(impulse))
    theta = _peak_theta(dt)
    t = np.arange(horizon)
    sinus = np.zeros((horizon, dt.h))
    sinus[:, 0] = np.cos(theta * t)
    probes.append(Signal(sinus))
    while len(probes) < count:
        probes.append(Signal(rng.standard_normal((horizon, dt.h))))
    return probes[:count]


def _peak_theta(dt: DtLayer, grid_size: int = 512) -> float:
    from .simulate import FreqGrid, frequency_response
    from .norms import _sigma_max

    grid = FreqGrid.uniform(grid_size)
    gains = _sigma_max(frequency_response(dt, None, grid))
    return float(grid.thetas[int(np.argmax(gains))])


@dataclass(frozen=True)
class BoundReport:
    measured: float
    bound: float
    ratio: float


def layer_bound_report(dt: DtLayer, pruned, inputs: list[Signal], act: Activation) -> BoundReport:
    """Distortion from pruning a state set vs the summed subsystem-norm bound.

    measured is the worst output-energy distortion over the inputs; the bound
    is the sum of squared pruned subsystem norms times the input energy.
    """
    if not is_stable(dt):
        raise UnstableLayer("layer has a pole on or outside the unit circle")
    pruned = np.asarray(pruned, dtype=int)
    keep = np.ones(dt.n, dtype=bool)
    keep[pruned] = False
    norm_sq = float(sum(subsystem_hinf(dt, int(i)) ** 2 for i in pruned))
    measured = 0.0
    worst_bound = 0.0
    worst_ratio = 0.0
    for u in inputs:
        padded = pad_for_decay(u, dt)
        y_full = layer_forward(dt, act, padded)
        y_pruned = layer_forward(dt, act, padded, keep=keep)
        dist = signal_energy(Signal(y_full.data - y_pruned.data))
        bound = norm_sq * signal_energy(u)
        ratio = dist / max(bound, EPS)
        if dist > measured:
            measured, worst_bound = dist, bound
        worst_ratio = max(worst_ratio, ratio)
    return BoundReport(measured=measured, bound=worst_bound, ratio=worst_ratio)


@dataclass(frozen=True)
class StepBound:
    layer: int
    states: tuple[int, ...]
    measured: float
    bound: float
    ratio: float


@dataclass(frozen=True)
class ModelBoundReport:
    steps: list[StepBound]
    total_measured: float
    total_bound: float


def model_bound_report(
    model: Model,
    masks: PruneMask,
    inputs: list[Signal],
    grid_size: int = 1024,
    refine_iters: int = 40,
) -> ModelBoundReport:
    """Per-step and total model-level bound comparison.

    Pruned states are removed one unit (conjugate pair or state) at a time in
    selection order; each step's measured distortion between consecutive
    models is compared to the product bound built from brute-force layer
    norms of the remaining subsystems, and the full mask's distortion to the
    summed per-step bounds.
    """
    keeps = [k.copy() for k in masks.keep]
    current = [np.ones(k.size, dtype=bool) for k in keeps]
    steps_to_take = []
    for l, k in enumerate(keeps):
        pruned_idx = list(np.flatnonzero(~k))
        pairs = model.layers[l].conj_pairs
        if pairs is not None:
            for i, j in sorted(pairs, key=lambda p: min(p)):
                if i in pruned_idx and j in pruned_idx:
                    steps_to_take.append((l, (min(i, j), max(i, j))))
        else:
            steps_to_take.extend((l, (i,)) for i in pruned_idx)

    padded_inputs = [pad_for_decay(u, list(model.layers)) for u in inputs]
    u_energies = [signal_energy(u) for u in inputs]

    def layer_norms(keep_vectors):
        out = []
        for l, dt in enumerate(model.layers):
            sub = np.flatnonzero(keep_vectors[l])
            out.append(
                hinf_bruteforce(dt, subset=sub, grid_size=grid_size, refine_iters=refine_iters)
            )
        return out

    steps = []
    total_bound = 0.0
    for l, states in steps_to_take:
        norms = layer_norms(current)
        sub_norm_sq = float(sum(subsystem_hinf(model.layers[l], i) ** 2 for i in states))
        product = 1.0
        for k, nk in enumerate(norms):
            if k != l:
                product *= nk**2
        before = [c.copy() for c in current]
        for i in states:
            current[l][i] = False
        measured = 0.0
        bound = 0.0
        for u, eu in zip(padded_inputs, u_energies):
            y_a = model_forward(model, u, masks=before)
            y_b = model_forward(model, u, masks=current)
            dist = signal_energy(Signal(y_a.data - y_b.data))
            measured = max(measured, dist)
            bound = max(bound, sub_norm_sq * product * eu)
        total_bound += bound
        steps.append(
            StepBound(
                layer=l,
                states=states,
                measured=measured,
                bound=bound,
                ratio=measured / max(bound, EPS),
            )
        )

    total_measured = 0.0
    for u in padded_inputs:
        y_full = model_forward(model, u)
        y_pruned = model_forward(model, u, masks=current)
        total_measured = max(total_measured, signal_energy(Signal(y_full.data - y_pruned.data)))
    return ModelBoundReport(steps=steps, total_measured=total_measured, total_bound=total_bound)


def make_scale_gap_model(
    rng: np.random.Generator,
    num_layers: int = 2,
    n: int = 16,
    h: int = 2,
    scale_gap: float = 1.0,
    activation: Activation = Activation.RELU,
) -> Model:
    """Random layers with the read-outs of the back half shrunk by the gap.

    Larger gaps separate the pooled raw importance scores by layer while
    leaving each layer's normalized score distribution unchanged.  At gap 1
    the layers are exact copies of one draw, so raw and normalized global
    selection tie-break identically and produce the same mask.
    """
    weak_from = num_layers - num_layers // 2 if num_layers > 1 else 1
    base = random_dt_layer(rng, n, h)
    layers = []
    for l in range(num_layers):
        if scale_gap != 1.0 and l > 0:
            base = random_dt_layer(rng, n, h)
        scale = 1.0 / scale_gap if l >= weak_from else 1.0
        layers.append(
            replace(
                base,
                c_fwd=base.c_fwd * scale,
                c_bwd=None if base.c_bwd is None else base.c_bwd * scale,
            )
        )
    return Model(layers=tuple(layers), activation=activation)


@dataclass(frozen=True)
class AblationResult:
    distortion: dict  # criterion name -> worst distortion over inputs
    remaining_dims: dict  # criterion name -> list of surviving state counts
    floor_hits: dict  # criterion name -> list of bool per layer


def ablation_scale_mismatch(
    seed: int,
    scale_gap: float,
    ratio: float,
    num_layers: int = 2,
    n: int = 16,
    h: int = 2,
    num_inputs: int = 5,
    horizon: int = 128,
) -> AblationResult:
    """Synthetic scale-gap experiment comparing uniform, raw-global and
    normalized-global pruning at a fixed ratio."""
    rng = np.random.default_rng(seed)
    model = make_scale_gap_model(rng, num_layers=num_layers, n=n, h=h, scale_gap=scale_gap)
    inputs = [Signal(rng.standard_normal((horizon, h))) for _ in range(num_inputs)]
    padded = [pad_for_decay(u, list(model.layers)) for u in inputs]
    full_outputs = [model_forward(model, u) for u in padded]

    masks = {
        "uniform-hinf": select_uniform(model, hinf_table(model, Criterion.UNIFORM_HINF), ratio),
        "global-hinf": select_global(model, hinf_table(model), ratio),
        "last": select_global(model, last_scores(model), ratio),
    }
    distortion, remaining, floors = {}, {}, {}
    for name, mask in masks.items():
        worst = 0.0
        for u, y_full in zip(padded, full_outputs):
            y = model_forward(model, u, masks=mask)
            worst = max(worst, signal_energy(Signal(y_full.data - y.data)))
        distortion[name] = worst
        remaining[name] = [int(np.sum(k)) for k in mask.keep]
        floor = 2 if model.layers[0].conj_pairs is not None else 1
        floors[name] = [int(np.sum(k)) <= floor for k in mask.keep]
    return AblationResult(distortion=distortion, remaining_dims=remaining, floor_hits=floors)
