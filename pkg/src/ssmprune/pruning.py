"""Importance scoring and prune-mask selection.

Scores follow the layer-adaptive scheme: per-state squared H-infinity norms,
their prefix-sum-normalized form for cross-layer comparison, and magnitude
baselines.  Selection respects conjugate pairs (both members share one mask
bit) and a per-layer survival floor of one pair.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .core import DtLayer, Model
from .errors import BudgetTooLarge, DegenerateLayerWarning, EmptyLayer, UnstableState
from .norms import effective_b_sq, effective_c_sq


class Criterion(enum.Enum):
    UNIFORM_HINF = "uniform-hinf"
    GLOBAL_HINF = "global-hinf"
    LAST = "last"
    UNIFORM_MAGNITUDE = "uniform-magnitude"
    GLOBAL_MAGNITUDE = "global-magnitude"
    LAMP = "lamp"
    RANDOM_STRUCTURED = "random-structured"
    RANDOM_UNSTRUCTURED = "random-unstructured"


@dataclass(frozen=True, eq=False)
class LayerScores:
    """Per-layer score vectors in original state order.

    ``rank`` sorts states by hinf_sq descending (stable, ties by index);
    ``selection`` is the criterion-specific value used for mask selection.
    """

    hinf_sq: np.ndarray
    last: np.ndarray
    rank: np.ndarray
    selection: np.ndarray
    degenerate: bool = False


@dataclass(frozen=True, eq=False)
class ScoreTable:
    layers: tuple[LayerScores, ...]
    criterion: Criterion


@dataclass(frozen=True)
class PrunePlan:
    criterion: Criterion
    ratio: float
    seed: int | None = None


@dataclass(frozen=True, eq=False)
class ElementMask:
    """Per-element keep masks for unstructured pruning (dimensions unchanged)."""

    lambda_keep: np.ndarray  # (n,) bool
    b_keep: np.ndarray  # (n, h) bool
    c_keep: np.ndarray  # (h, n) bool


@dataclass(frozen=True, eq=False)
class PruneMask:
    """Per-layer keep vectors plus the plan that produced them."""

    keep: tuple[np.ndarray, ...]
    plan: PrunePlan
    element_masks: tuple[ElementMask, ...] | None = None

    @property
    def realized_ratio(self) -> float:
        total = sum(k.size for k in self.keep)
        pruned = sum(int(np.sum(~k)) for k in self.keep)
        return pruned / total if total else 0.0

    @property
    def per_layer_ratios(self) -> list[float]:
        return [float(np.sum(~k)) / k.size for k in self.keep]

    @property
    def reported_ratio(self) -> float:
        """Average per-layer pruned fraction (the convention for
        layer-adaptive methods)."""
        return float(np.mean(self.per_layer_ratios)) if self.keep else 0.0


def hinf_scores(dt: DtLayer) -> np.ndarray:
    """Squared subsystem H-infinity norms, one per state.

    Conjugate-pair members receive the identical score (evaluated once per
    pair); the fixed-B and bidirectional variants are handled by the
    effective norms.
    """
    mags = np.abs(dt.lambda_bar)
    if np.any(mags >= 1.0):
        raise UnstableState(int(np.argmax(mags >= 1.0)))
    scores = np.array(
        [effective_c_sq(dt, i) * effective_b_sq(dt, i) / (1.0 - mags[i]) ** 2 for i in range(dt.n)]
    )
    if dt.conj_pairs is not None:
        for i, j in dt.conj_pairs:
            shared = 0.5 * (scores[i] + scores[j])
            scores[i] = scores[j] = shared
    return scores


def magnitude_scores(dt: DtLayer) -> np.ndarray:
    """Magnitude baseline |lambda_bar_i| * ||b_bar_i|| * ||c_i|| per state."""
    scores = np.array(
        [
            abs(dt.lambda_bar[i]) * math.sqrt(effective_b_sq(dt, i) * effective_c_sq(dt, i))
            for i in range(dt.n)
        ]
    )
    if dt.conj_pairs is not None:
        for i, j in dt.conj_pairs:
            shared = 0.5 * (scores[i] + scores[j])
            scores[i] = scores[j] = shared
    return scores


def _rank_descending(values: np.ndarray) -> np.ndarray:
    # Stable sort; ties resolved by ascending original index.
    return np.argsort(-values, kind="stable")


def _prefix_normalize(values: np.ndarray, layer_index: int) -> tuple[np.ndarray, np.ndarray, bool]:
    """Sort descending and divide each value by the prefix sum up to its rank."""
    rank = _rank_descending(values)
    sorted_vals = values[rank]
    degenerate = bool(np.all(sorted_vals == 0.0))
    if degenerate:
        warnings.warn(
            f"layer {layer_index}: all scores are zero; treating states as equally "
            "unimportant (non-compressible ordering by index)",
            DegenerateLayerWarning,
        )
        normalized = np.zeros_like(values)
        return normalized, rank, True
    prefix = np.cumsum(sorted_vals)
    normalized_sorted = np.divide(
        sorted_vals, prefix, out=np.zeros_like(sorted_vals), where=prefix > 0
    )
    normalized = np.empty_like(values)
    normalized[rank] = normalized_sorted
    return normalized, rank, False


def _share_pairs(values: np.ndarray, dt: DtLayer) -> np.ndarray:
    """Give both conjugate-pair members the higher-ranked member's value."""
    if dt.conj_pairs is None:
        return values
    out = values.copy()
    for i, j in dt.conj_pairs:
        out[i] = out[j] = max(values[i], values[j])
    return out


def _table(model: Model, seed_scores, criterion: Criterion, use_normalized: bool) -> ScoreTable:
    layers = []
    for l, dt in enumerate(model.layers):
        h_sq = hinf_scores(dt)
        last, rank, degenerate = _prefix_normalize(h_sq, l)
        last = _share_pairs(last, dt)
        raw = seed_scores(dt)
        if use_normalized:
            sel, _, deg2 = _prefix_normalize(raw, l)
            sel = _share_pairs(sel, dt)
            degenerate = degenerate or deg2
        else:
            sel = raw
        layers.append(
            LayerScores(hinf_sq=h_sq, last=last, rank=rank, selection=sel, degenerate=degenerate)
        )
    return ScoreTable(layers=tuple(layers), criterion=criterion)


def hinf_table(model: Model, criterion: Criterion = Criterion.GLOBAL_HINF) -> ScoreTable:
    return _table(model, hinf_scores, criterion, use_normalized=False)


def last_scores(model: Model) -> ScoreTable:
    """LAST scores: per-layer H-infinity scores normalized by descending
    prefix sums, making importances comparable across layers."""
    return _table(model, hinf_scores, Criterion.LAST, use_normalized=True)


def magnitude_table(model: Model, criterion: Criterion = Criterion.GLOBAL_MAGNITUDE) -> ScoreTable:
    return _table(model, magnitude_scores, criterion, use_normalized=False)


def lamp_scores(model: Model) -> ScoreTable:
    """Magnitude baseline with the same prefix-sum machinery, seeded by
    squared magnitude scores."""
    return _table(model, lambda dt: magnitude_scores(dt) ** 2, Criterion.LAMP, use_normalized=True)


def score_table(model: Model, criterion: Criterion) -> ScoreTable:
    if criterion in (Criterion.UNIFORM_HINF, Criterion.GLOBAL_HINF):
        return hinf_table(model, criterion)
    if criterion is Criterion.LAST:
        return last_scores(model)
    if criterion in (Criterion.UNIFORM_MAGNITUDE, Criterion.GLOBAL_MAGNITUDE):
        return magnitude_table(model, criterion)
    if criterion is Criterion.LAMP:
        return lamp_scores(model)
    raise ValueError(f"criterion {criterion} does not define a score table")


# ---------------------------------------------------------------------------
# Selection units: a unit is one conjugate pair (cost 2) or one state (cost 1)


@dataclass(frozen=True)
class _Unit:
    layer: int
    states: tuple[int, ...]
    score: float

    @property
    def cost(self) -> int:
        return len(self.states)


def _layer_units(dt: DtLayer, layer_index: int, selection: np.ndarray) -> list[_Unit]:
    units = []
    if dt.conj_pairs is not None:
        for i, j in sorted(dt.conj_pairs, key=lambda p: min(p)):
            lo, hi = min(i, j), max(i, j)
            units.append(_Unit(layer_index, (lo, hi), float(selection[lo])))
    else:
        units = [_Unit(layer_index, (i,), float(selection[i])) for i in range(dt.n)]
    return units


def _floor_cost(dt: DtLayer) -> int:
    # Survival floor: one conjugate pair, or one state when unpaired.
    return 2 if dt.conj_pairs is not None else 1


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def _prune_order(units: list[_Unit]) -> list[_Unit]:
    # Ascending score; ties by lower layer index then lower state index.
    return sorted(units, key=lambda u: (u.score, u.layer, u.states[0]))


def _mask_from_pruned(model: Model, pruned: set[tuple[int, int]], plan: PrunePlan) -> PruneMask:
    keep = []
    for l, dt in enumerate(model.layers):
        k = np.ones(dt.n, dtype=bool)
        for ll, i in pruned:
            if ll == l:
                k[i] = False
        if not np.any(k):
            raise EmptyLayer(f"layer {l} would lose all states")
        keep.append(k)
    return PruneMask(keep=tuple(keep), plan=plan)


def select_uniform(model: Model, table: ScoreTable, ratio: float) -> PruneMask:
    """Prune the same fraction of states in every layer.

    Per layer, the round(ratio * n) lowest-scoring states are pruned, the
    count rounded down to pair granularity; ratio 1.0 leaves exactly the
    survival floor (one pair) per layer.
    """
    _check_ratio(ratio)
    pruned: set[tuple[int, int]] = set()
    for l, dt in enumerate(model.layers):
        budget = _round_half_away(ratio * dt.n)
        budget = min(budget, dt.n - _floor_cost(dt))
        units = _prune_order(_layer_units(dt, l, table.layers[l].selection))
        spent = 0
        for unit in units:
            if spent + unit.cost > budget:
                continue
            pruned.update((l, i) for i in unit.states)
            spent += unit.cost
    return _mask_from_pruned(model, pruned, PrunePlan(table.criterion, ratio))


def select_global(model: Model, table: ScoreTable, ratio: float) -> PruneMask:
    """Pool states across layers and prune the globally lowest-scoring ones.

    The global budget is round(ratio * total states), adjusted down to pair
    granularity; a per-layer floor of one surviving pair is enforced, with the
    budget redistributed to the next-lowest states when a floor binds.
    """
    _check_ratio(ratio)
    units = []
    remaining = {}
    for l, dt in enumerate(model.layers):
        units.extend(_layer_units(dt, l, table.layers[l].selection))
        remaining[l] = dt.n
    total = sum(remaining.values())
    budget = _round_half_away(ratio * total)
    pruned: set[tuple[int, int]] = set()
    spent = 0
    for unit in _prune_order(units):
        floor = _floor_cost(model.layers[unit.layer])
        if spent + unit.cost > budget:
            continue
        if remaining[unit.layer] - unit.cost < floor:
            continue
        pruned.update((unit.layer, i) for i in unit.states)
        remaining[unit.layer] -= unit.cost
        spent += unit.cost
    return _mask_from_pruned(model, pruned, PrunePlan(table.criterion, ratio))


def select_random(model: Model, ratio: float, seed: int, structured: bool = True) -> PruneMask:
    """Random pruning baselines.

    Structured: uniformly random per-layer state subsets at the per-layer
    ratio, pair-respecting.  Unstructured: per-element masks on the pole,
    input and read-out matrices at the same parameter-count budget, leaving
    layer dimensions unchanged.
    """
    _check_ratio(ratio)
    rng = np.random.default_rng(seed)
    if structured:
        pruned: set[tuple[int, int]] = set()
        for l, dt in enumerate(model.layers):
            budget = min(_round_half_away(ratio * dt.n), dt.n - _floor_cost(dt))
            units = _layer_units(dt, l, np.zeros(dt.n))
            order = rng.permutation(len(units))
            spent = 0
            for idx in order:
                unit = units[idx]
                if spent + unit.cost > budget:
                    continue
                pruned.update((l, i) for i in unit.states)
                spent += unit.cost
        plan = PrunePlan(Criterion.RANDOM_STRUCTURED, ratio, seed)
        return _mask_from_pruned(model, pruned, plan)

    keep = tuple(np.ones(dt.n, dtype=bool) for dt in model.layers)
    element_masks = []
    for dt in model.layers:
        n, h = dt.n, dt.h
        # One state costs 1 (pole) + h (input row) + h (read-out column)
        # elements; the unstructured budget matches that count.
        state_budget = min(_round_half_away(ratio * n), n - _floor_cost(dt))
        element_budget = state_budget * (1 + 2 * h)
        total_elements = n + n * h + h * n
        flat = np.ones(total_elements, dtype=bool)
        drop = rng.choice(total_elements, size=min(element_budget, total_elements), replace=False)
        flat[drop] = False
        element_masks.append(
            ElementMask(
                lambda_keep=flat[:n].copy(),
                b_keep=flat[n : n + n * h].reshape(n, h).copy(),
                c_keep=flat[n + n * h :].reshape(h, n).copy(),
            )
        )
    plan = PrunePlan(Criterion.RANDOM_UNSTRUCTURED, ratio, seed)
    return PruneMask(keep=keep, plan=plan, element_masks=tuple(element_masks))


def _check_ratio(ratio: float):
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"pruning ratio must be in [0, 1], got {ratio}")


def apply_element_mask(dt: DtLayer, mask: ElementMask) -> DtLayer:
    """Zero individual elements of the pole, input and read-out matrices."""
    return replace(
        dt,
        lambda_bar=np.where(mask.lambda_keep, dt.lambda_bar, 0.0),
        b_bar=np.where(mask.b_keep, dt.b_bar, 0.0),
        c_fwd=np.where(mask.c_keep, dt.c_fwd, 0.0),
        c_bwd=None if dt.c_bwd is None else np.where(mask.c_keep, dt.c_bwd, 0.0),
        conj_pairs=None,
    )


def apply_mask(dt: DtLayer, keep, mode: str = "masked") -> DtLayer:
    """Apply a keep-vector to one layer.

    ``masked`` zeroes the pruned rows of b_bar and columns of c; ``compacted``
    physically removes the states.  D is untouched in both modes.
    """
    keep = np.asarray(keep, dtype=bool)
    if keep.shape != (dt.n,):
        raise ValueError(f"keep vector has shape {keep.shape}, expected ({dt.n},)")
    if not np.any(keep):
        raise EmptyLayer("keep vector is all-false")
    if mode == "masked":
        return replace(
            dt,
            b_bar=np.where(keep[:, None], dt.b_bar, 0.0),
            c_fwd=np.where(keep[None, :], dt.c_fwd, 0.0),
            c_bwd=None if dt.c_bwd is None else np.where(keep[None, :], dt.c_bwd, 0.0),
        )
    if mode == "compacted":
        idx = np.flatnonzero(keep)
        remap = {int(old): new for new, old in enumerate(idx)}
        pairs = None
        if dt.conj_pairs is not None:
            pairs = tuple(
                (remap[i], remap[j]) for i, j in dt.conj_pairs if i in remap and j in remap
            )
        return replace(
            dt,
            lambda_bar=dt.lambda_bar[idx],
            b_bar=dt.b_bar[idx, :],
            c_fwd=dt.c_fwd[:, idx],
            c_bwd=None if dt.c_bwd is None else dt.c_bwd[:, idx],
            conj_pairs=pairs,
        )
    raise ValueError(f"unknown mode {mode!r}")


def apply_mask_model(model: Model, mask: PruneMask, mode: str = "masked") -> Model:
    if mask.element_masks is not None:
        layers = [apply_element_mask(dt, m) for dt, m in zip(model.layers, mask.element_masks)]
        return replace(model, layers=tuple(layers))
    layers = [apply_mask(dt, k, mode=mode) for dt, k in zip(model.layers, mask.keep)]
    return replace(model, layers=tuple(layers))


def greedy_last_trace(model: Model, budget: int) -> list[tuple[int, int]]:
    """Greedy one-state-at-a-time pruning by recomputed LAST scores.

    Each step recomputes LAST on the remaining states of every layer and
    prunes the global minimum (whole conjugate pair when paired).  Returns
    the ordered (layer, state) trace; its set should coincide with the
    one-shot global LAST selection of the same budget.
    """
    floors = {l: _floor_cost(dt) for l, dt in enumerate(model.layers)}
    max_budget = sum(dt.n - floors[l] for l, dt in enumerate(model.layers))
    if budget > max_budget:
        raise BudgetTooLarge(f"budget {budget} exceeds prunable total {max_budget}")
    remaining = {l: list(range(dt.n)) for l, dt in enumerate(model.layers)}
    trace: list[tuple[int, int]] = []
    spent = 0
    while spent < budget:
        candidates = []
        for l, dt in enumerate(model.layers):
            idx = np.asarray(remaining[l], dtype=int)
            if idx.size <= floors[l]:
                continue
            sub = apply_mask(dt, np.isin(np.arange(dt.n), idx), mode="compacted")
            last, _, degenerate = _prefix_normalize(hinf_scores(sub), l)
            for unit in _layer_units(sub, l, last):
                states = tuple(int(idx[s]) for s in unit.states)
                if idx.size - unit.cost < floors[l]:
                    continue
                if spent + unit.cost > budget:
                    continue
                candidates.append(_Unit(l, states, unit.score))
        if not candidates:
            break
        best = min(candidates, key=lambda u: (u.score, u.layer, u.states[0]))
        trace.extend((best.layer, i) for i in best.states)
        remaining[best.layer] = [i for i in remaining[best.layer] if i not in best.states]
        spent += best.cost
    return trace
