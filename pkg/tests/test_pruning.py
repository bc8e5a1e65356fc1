import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssmprune.core import Activation, Model
from ssmprune.errors import BudgetTooLarge, DegenerateLayerWarning, EmptyLayer
from ssmprune.pruning import (
    Criterion,
    apply_element_mask,
    apply_mask,
    apply_mask_model,
    greedy_last_trace,
    hinf_scores,
    hinf_table,
    lamp_scores,
    last_scores,
    magnitude_scores,
    magnitude_table,
    select_global,
    select_random,
    select_uniform,
)
from ssmprune.simulate import Signal, layer_forward, model_forward
from ssmprune.verify import random_dt_layer, random_model

from conftest import model_of, real_dt_layer, scalar_layer


def unpaired_two_layer(scores1=(4.0, 1.0), scores2=(4000.0, 1000.0)):
    """Two unpaired single-channel layers whose squared H-inf scores are given.

    With lambda_bar = 0 and c = 1 the score of state i is b_i^2.
    """
    l1 = real_dt_layer([0.0, 0.0], [[np.sqrt(scores1[0])], [np.sqrt(scores1[1])]], [[1.0, 1.0]])
    l2 = real_dt_layer([0.0, 0.0], [[np.sqrt(scores2[0])], [np.sqrt(scores2[1])]], [[1.0, 1.0]])
    return model_of(l1, l2)


class TestScores:
    def test_scalar_hinf_score(self):
        assert hinf_scores(scalar_layer(0.5, 0.5, 1.0))[0] == pytest.approx(1.0, rel=1e-15)

    def test_b_fixed_score_uses_unit_input(self):
        layer = real_dt_layer([0.5], [[7.0]], [[1.0]], b_fixed=True)
        assert hinf_scores(layer)[0] == pytest.approx(4.0, rel=1e-15)

    def test_bidirectional_score_averages_readouts(self):
        from dataclasses import replace
        layer = real_dt_layer([0.0], [[1.0]], [[np.sqrt(2.0)]])
        layer = replace(layer, c_bwd=np.array([[2.0 + 0j]]))
        assert hinf_scores(layer)[0] == pytest.approx(3.0, rel=1e-15)

    def test_conjugate_pairs_share_scores(self, rng):
        dt = random_dt_layer(rng, 8, 2)
        scores = hinf_scores(dt)
        for i, j in dt.conj_pairs:
            assert scores[i] == scores[j]

    def test_magnitude_examples(self):
        assert magnitude_scores(scalar_layer(0.5, 0.5, 1.0))[0] == pytest.approx(0.25)
        assert magnitude_scores(scalar_layer(0.0, 123.0, 456.0))[0] == 0.0
        assert magnitude_scores(scalar_layer(1.0 - 1e-12, 1.0, 1.0))[0] == pytest.approx(1.0)

    def test_last_two_state_example(self):
        model = model_of(real_dt_layer([0.0, 0.0], [[2.0], [1.0]], [[1.0, 1.0]]))
        table = last_scores(model)
        np.testing.assert_allclose(table.layers[0].selection, [1.0, 0.2], rtol=1e-15)

    def test_last_single_state_is_one(self):
        model = model_of(scalar_layer())
        assert last_scores(model).layers[0].selection[0] == 1.0

    def test_last_cross_layer_scale_invariance(self):
        model = unpaired_two_layer()
        table = last_scores(model)
        np.testing.assert_allclose(table.layers[0].selection, [1.0, 0.2], rtol=1e-15)
        np.testing.assert_allclose(table.layers[1].selection, [1.0, 0.2], rtol=1e-15)

    def test_lamp_example(self):
        model = model_of(real_dt_layer(
            [0.5, 0.25], [[1.0], [1.0]], [[1.0, 1.0]]))
        table = lamp_scores(model)
        np.testing.assert_allclose(table.layers[0].selection, [1.0, 0.2], rtol=1e-12)

    def test_lamp_equal_magnitudes_harmonic(self):
        n = 5
        model = model_of(real_dt_layer([0.5] * n, [[1.0]] * n, [[1.0] * n]))
        table = lamp_scores(model)
        np.testing.assert_allclose(
            table.layers[0].selection, [1.0 / (k + 1) for k in range(n)], rtol=1e-12
        )

    def test_degenerate_layer_warns_and_zeroes(self):
        model = model_of(real_dt_layer([0.5, 0.5], [[0.0], [0.0]], [[0.0, 0.0]]))
        with pytest.warns(DegenerateLayerWarning):
            table = last_scores(model)
        assert table.layers[0].degenerate
        np.testing.assert_array_equal(table.layers[0].selection, [0.0, 0.0])

    @given(st.integers(min_value=0, max_value=2**31))
    @settings(max_examples=30, deadline=None)
    def test_last_range_and_monotonicity(self, seed):
        rng = np.random.default_rng(seed)
        dt = random_dt_layer(rng, 8, 2)
        model = model_of(dt)
        layer = last_scores(model).layers[0]
        assert np.all(layer.selection > 0) and np.all(layer.selection <= 1.0)
        assert layer.selection[layer.rank[0]] == 1.0
        ordered = layer.selection[layer.rank]
        assert np.all(np.diff(ordered) <= 1e-15)

    def test_layer_scale_equivariance(self, rng):
        from dataclasses import replace
        model = random_model(rng, 2, 8, 2)
        scaled_layers = list(model.layers)
        scaled_layers[0] = replace(scaled_layers[0], c_fwd=scaled_layers[0].c_fwd * 3.0)
        scaled = Model(layers=tuple(scaled_layers), activation=model.activation)
        base_h = hinf_table(model).layers[0].selection
        scaled_h = hinf_table(scaled).layers[0].selection
        np.testing.assert_allclose(scaled_h, base_h * 9.0, rtol=1e-12)
        np.testing.assert_allclose(
            last_scores(scaled).layers[0].selection,
            last_scores(model).layers[0].selection,
            rtol=1e-12,
        )


class TestSelectUniform:
    def test_paired_ratio_prunes_pairs(self, rng):
        model = model_of(random_dt_layer(rng, 10, 2), random_dt_layer(rng, 10, 2))
        mask = select_uniform(model, hinf_table(model, Criterion.UNIFORM_HINF), 0.4)
        for k in mask.keep:
            assert int(np.sum(~k)) == 4

    def test_ratio_zero_keeps_all(self, rng):
        model = model_of(random_dt_layer(rng, 6, 2))
        mask = select_uniform(model, hinf_table(model, Criterion.UNIFORM_HINF), 0.0)
        assert all(np.all(k) for k in mask.keep)

    def test_ratio_one_leaves_one_pair(self, rng):
        model = model_of(random_dt_layer(rng, 64, 2))
        mask = select_uniform(model, hinf_table(model, Criterion.UNIFORM_HINF), 1.0)
        assert int(np.sum(mask.keep[0])) == 2
        i, j = np.flatnonzero(mask.keep[0])
        assert (int(i), int(j)) in {tuple(sorted(p)) for p in model.layers[0].conj_pairs}

    def test_prunes_lowest_scores(self, rng):
        dt = random_dt_layer(rng, 8, 2)
        model = model_of(dt)
        table = hinf_table(model, Criterion.UNIFORM_HINF)
        mask = select_uniform(model, table, 0.5)
        scores = table.layers[0].selection
        kept = scores[mask.keep[0]]
        dropped = scores[~mask.keep[0]]
        assert dropped.max() <= kept.min()


class TestSelectGlobal:
    def test_floor_redistributes_budget_under_raw_scores(self):
        model = unpaired_two_layer()
        mask = select_global(model, hinf_table(model), 0.5)
        np.testing.assert_array_equal(mask.keep[0], [True, False])
        np.testing.assert_array_equal(mask.keep[1], [True, False])

    def test_last_spreads_across_layers(self):
        model = unpaired_two_layer()
        mask = select_global(model, last_scores(model), 0.5)
        np.testing.assert_array_equal(mask.keep[0], [True, False])
        np.testing.assert_array_equal(mask.keep[1], [True, False])

    def test_raw_concentrates_without_floor_pressure(self):
        model = unpaired_two_layer(scores1=(4.0, 1.0, 0.5), scores2=(4000.0, 1000.0, 500.0))
        # Rebuild with 3 states per layer so the floor does not bind at 1/3.
        l1 = real_dt_layer([0.0] * 3, [[2.0], [1.0], [np.sqrt(0.5)]], [[1.0] * 3])
        l2 = real_dt_layer([0.0] * 3, [[np.sqrt(4000)], [np.sqrt(1000)], [np.sqrt(500)]],
                           [[1.0] * 3])
        model = model_of(l1, l2)
        mask = select_global(model, hinf_table(model), 1.0 / 3.0)
        # Budget 2, both lowest raw scores sit in layer 1.
        assert int(np.sum(~mask.keep[0])) == 2
        assert int(np.sum(~mask.keep[1])) == 0

    def test_ratio_zero_keeps_all(self, rng):
        model = random_model(rng, 2, 6, 2)
        mask = select_global(model, hinf_table(model), 0.0)
        assert all(np.all(k) for k in mask.keep)

    def test_pair_members_share_mask_bits(self, rng):
        model = random_model(rng, 2, 8, 2)
        mask = select_global(model, last_scores(model), 0.5)
        for k, dt in zip(mask.keep, model.layers):
            for i, j in dt.conj_pairs:
                assert k[i] == k[j]


class TestSelectRandom:
    def test_ratio_zero_keeps_all(self, rng):
        model = random_model(rng, 2, 6, 2)
        mask = select_random(model, 0.0, seed=3)
        assert all(np.all(k) for k in mask.keep)

    def test_fixed_seed_reproduces_mask(self, rng):
        model = random_model(rng, 2, 8, 2)
        m1 = select_random(model, 0.5, seed=11)
        m2 = select_random(model, 0.5, seed=11)
        for a, b in zip(m1.keep, m2.keep):
            np.testing.assert_array_equal(a, b)

    def test_structured_respects_pairs(self, rng):
        model = random_model(rng, 2, 8, 2)
        mask = select_random(model, 0.5, seed=5, structured=True)
        for k, dt in zip(mask.keep, model.layers):
            for i, j in dt.conj_pairs:
                assert k[i] == k[j]

    def test_unstructured_budget_matches_structured_parameter_count(self, rng):
        model = random_model(rng, 2, 8, 2)
        structured = select_random(model, 0.5, seed=5, structured=True)
        unstructured = select_random(model, 0.5, seed=5, structured=False)
        for k, em, dt in zip(structured.keep, unstructured.element_masks, model.layers):
            pruned_states = int(np.sum(~k))
            dropped = (
                int(np.sum(~em.lambda_keep))
                + int(np.sum(~em.b_keep))
                + int(np.sum(~em.c_keep))
            )
            assert dropped == pruned_states * (1 + 2 * dt.h)


class TestApplyMask:
    def test_all_keep_is_identity(self, rng):
        dt = random_dt_layer(rng, 6, 2)
        out = apply_mask(dt, np.ones(6, dtype=bool), mode="masked")
        np.testing.assert_array_equal(out.b_bar, dt.b_bar)
        np.testing.assert_array_equal(out.c_fwd, dt.c_fwd)
        out_c = apply_mask(dt, np.ones(6, dtype=bool), mode="compacted")
        np.testing.assert_array_equal(out_c.lambda_bar, dt.lambda_bar)
        assert out_c.conj_pairs == dt.conj_pairs

    def test_complement_single_state(self, rng):
        dt = random_dt_layer(rng, 6, 2)
        keep = np.ones(6, dtype=bool)
        keep[2] = False
        out = apply_mask(dt, keep, mode="compacted")
        assert out.n == 5
        np.testing.assert_array_equal(out.lambda_bar, dt.lambda_bar[keep])

    def test_all_false_rejected(self, rng):
        dt = random_dt_layer(rng, 4, 2)
        with pytest.raises(EmptyLayer):
            apply_mask(dt, np.zeros(4, dtype=bool))

    def test_masked_vs_compacted_simulation(self, rng):
        dt = random_dt_layer(rng, 8, 2)
        keep = np.ones(8, dtype=bool)
        i, j = dt.conj_pairs[0]
        keep[[i, j]] = False
        u = Signal(rng.standard_normal((64, 2)))
        y_masked = layer_forward(apply_mask(dt, keep, "masked"), Activation.RELU, u)
        y_compact = layer_forward(apply_mask(dt, keep, "compacted"), Activation.RELU, u)
        scale = max(1.0, np.abs(y_masked.data).max())
        np.testing.assert_allclose(y_masked.data, y_compact.data, rtol=0, atol=1e-12 * scale)

    def test_element_mask_zeroes_entries(self, rng):
        model = random_model(rng, 1, 8, 2)
        mask = select_random(model, 0.5, seed=5, structured=False)
        out = apply_element_mask(model.layers[0], mask.element_masks[0])
        em = mask.element_masks[0]
        assert np.all(out.lambda_bar[~em.lambda_keep] == 0)
        assert np.all(out.b_bar[~em.b_keep] == 0)
        assert np.all(out.c_fwd[~em.c_keep] == 0)


class TestGreedyTrace:
    def test_zero_budget_empty_trace(self, rng):
        model = random_model(rng, 2, 6, 2)
        assert greedy_last_trace(model, 0) == []

    def test_budget_one_pair_is_global_minimum(self, rng):
        model = random_model(rng, 2, 6, 2)
        trace = greedy_last_trace(model, 2)
        mask = select_global(model, last_scores(model), 2 / 12)
        pruned = {(l, int(i)) for l, k in enumerate(mask.keep) for i in np.flatnonzero(~k)}
        assert set(trace) == pruned

    def test_over_budget_rejected(self, rng):
        model = random_model(rng, 2, 6, 2)
        with pytest.raises(BudgetTooLarge):
            greedy_last_trace(model, 11)

    def test_trace_matches_one_shot_selection(self):
        mismatches = []
        for seed in range(30):
            rng = np.random.default_rng(seed)
            model = random_model(rng, 3, 8, 2)
            mask = select_global(model, last_scores(model), 0.5)
            budget = sum(int(np.sum(~k)) for k in mask.keep)
            trace = set(greedy_last_trace(model, budget))
            oneshot = {(l, int(i)) for l, k in enumerate(mask.keep)
                       for i in np.flatnonzero(~k)}
            if trace != oneshot:
                mismatches.append(seed)
        # Report any divergence between the greedy trace and the one-shot
        # selection; empirically the two coincide.
        assert mismatches == [], f"greedy/one-shot divergence on seeds {mismatches}"


class TestRatioAccounting:
    def test_reported_ratio_is_layer_average(self, rng):
        model = model_of(random_dt_layer(rng, 4, 2), random_dt_layer(rng, 8, 2))
        mask = select_global(model, last_scores(model), 0.5)
        per_layer = [float(np.sum(~k)) / k.size for k in mask.keep]
        assert mask.reported_ratio == pytest.approx(np.mean(per_layer))
        total = sum(k.size for k in mask.keep)
        pruned = sum(int(np.sum(~k)) for k in mask.keep)
        assert mask.realized_ratio == pytest.approx(pruned / total)
