import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from ssmprune import io
from ssmprune.cli import main
from ssmprune.errors import MalformedFile, SchemaMismatch, ValidationFailed
from ssmprune.simulate import Signal
from ssmprune.verify import random_model


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def model_file(tmp_path, rng):
    path = tmp_path / "model.json"
    io.save_model(random_model(rng, 2, 6, 2), path)
    return path


class TestCheckpointRoundTrip:
    def test_bitwise_numeric_round_trip(self, tmp_path, rng):
        model = random_model(rng, 2, 6, 2)
        path = tmp_path / "m.json"
        io.save_model(model, path)
        loaded = io.load_model(path)
        for a, b in zip(model.layers, loaded.layers):
            np.testing.assert_array_equal(a.lambda_bar, b.lambda_bar)
            np.testing.assert_array_equal(a.b_bar, b.b_bar)
            np.testing.assert_array_equal(a.c_fwd, b.c_fwd)
            np.testing.assert_array_equal(a.d, b.d)
            assert a.conj_pairs == b.conj_pairs
        # Re-serialization is byte-identical.
        second = tmp_path / "m2.json"
        io.save_model(loaded, second)
        assert path.read_bytes() == second.read_bytes()

    def test_ct_checkpoint_discretizes_on_load(self, tmp_path, rng):
        from ssmprune.core import MIMO, Activation
        from ssmprune.verify import random_ct_layer
        ckpt = io.Checkpoint(domain="ct", arch=MIMO, activation=Activation.GELU,
                             ct_layers=(random_ct_layer(rng, 4, 2),))
        path = tmp_path / "ct.json"
        io.save_checkpoint(ckpt, path)
        model = io.load_model(path)
        assert np.all(np.abs(model.layers[0].lambda_bar) < 1.0)
        assert model.layers[0].conj_pairs is not None

    def test_unstable_pole_fails_validation_naming_state(self, tmp_path):
        doc = {
            "schema_version": io.SCHEMA_VERSION,
            "domain": "ct",
            "architecture": {"kind": "mimo"},
            "activation": "relu",
            "layers": [{
                "lambda": [[0.25, 0.0]],
                "b": [[[1.0, 0.0]]],
                "c_fwd": [[[1.0, 0.0]]],
                "d": [[0.0]],
                "delta": [0.01],
            }],
        }
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        with pytest.raises(ValidationFailed) as exc:
            io.load_checkpoint(path)
        assert "0" in str(exc.value)

    def test_unknown_schema_version(self, tmp_path, model_file):
        doc = json.loads(model_file.read_text())
        doc["schema_version"] = "ssm-ckpt-99"
        bad = tmp_path / "v.json"
        bad.write_text(json.dumps(doc))
        with pytest.raises(SchemaMismatch):
            io.load_checkpoint(bad)

    def test_garbage_file(self, tmp_path):
        bad = tmp_path / "g.json"
        bad.write_text("not json{")
        with pytest.raises(MalformedFile):
            io.load_checkpoint(bad)


class TestSignals:
    def test_binary_round_trip(self, tmp_path, rng):
        u = Signal(rng.standard_normal((64, 3)))
        path = tmp_path / "u.sig"
        io.write_signal(u, path)
        back = io.read_signal(path)
        np.testing.assert_array_equal(u.data, back.data)

    def test_csv_round_trip(self, tmp_path, rng):
        u = Signal(rng.standard_normal((16, 2)))
        path = tmp_path / "u.csv"
        io.write_signal(u, path)
        back = io.read_signal(path)
        np.testing.assert_array_equal(u.data, back.data)

    def test_truncated_binary_rejected(self, tmp_path, rng):
        u = Signal(rng.standard_normal((16, 2)))
        path = tmp_path / "u.sig"
        io.write_signal(u, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(MalformedFile):
            io.read_signal(path)

    def test_signals_dir_sorted(self, tmp_path, rng):
        for name in ("b.sig", "a.sig", "c.csv"):
            io.write_signal(Signal(rng.standard_normal((8, 1))), tmp_path / name)
        names = [n for n, _ in io.load_signals_dir(tmp_path)]
        assert names == ["a.sig", "b.sig", "c.csv"]


class TestCli:
    def test_gen_then_inspect(self, runner, tmp_path):
        out = tmp_path / "m.json"
        res = runner.invoke(main, ["gen-synthetic", "--layers", "2", "--state-dim", "6",
                                   "--channels", "2", "--seed", "1", "--out", str(out)])
        assert res.exit_code == 0, res.output
        res = runner.invoke(main, ["inspect", str(out)])
        assert res.exit_code == 0
        assert "layers: 2" in res.output

    def test_score_csv_schema_and_figure(self, runner, model_file, tmp_path):
        out = tmp_path / "scores.csv"
        res = runner.invoke(main, ["score", str(model_file), "--criterion", "last",
                                   "--out", str(out)])
        assert res.exit_code == 0, res.output
        header = out.read_text().splitlines()[0]
        assert header.startswith("layer,state,hinf_sq,last,rank")
        assert out.with_suffix(".png").exists()

    def test_no_plot_skips_figure(self, runner, model_file, tmp_path):
        out = tmp_path / "scores.csv"
        res = runner.invoke(main, ["score", str(model_file), "--criterion", "hinf",
                                   "--out", str(out), "--no-plot"])
        assert res.exit_code == 0
        assert not out.with_suffix(".png").exists()

    def test_prune_ratio_zero_compacted_is_identity(self, runner, model_file, tmp_path):
        out = tmp_path / "p.json"
        res = runner.invoke(main, ["prune", str(model_file), "--criterion", "last",
                                   "--ratio", "0", "--mode", "compacted", "--out", str(out)])
        assert res.exit_code == 0, res.output
        full = io.load_model(model_file)
        pruned = io.load_model(out)
        for a, b in zip(full.layers, pruned.layers):
            np.testing.assert_array_equal(a.lambda_bar, b.lambda_bar)
            np.testing.assert_array_equal(a.b_bar, b.b_bar)
            np.testing.assert_array_equal(a.c_fwd, b.c_fwd)

    def test_prune_writes_mask_sidecar(self, runner, model_file, tmp_path):
        out = tmp_path / "p.json"
        res = runner.invoke(main, ["prune", str(model_file), "--criterion", "global-hinf",
                                   "--ratio", "0.5", "--out", str(out)])
        assert res.exit_code == 0, res.output
        sidecar = json.loads((tmp_path / "p.mask.json").read_text())
        assert sidecar["plan"]["criterion"] == "global-hinf"
        assert len(sidecar["layers"]) == 2
        meta = io.load_model(out).meta["pruning"]
        assert meta["surviving_indices"] == [
            layer["surviving_indices"] for layer in sidecar["layers"]
        ]

    def test_score_order_consistent_with_prune(self, runner, model_file, tmp_path):
        scores_csv = tmp_path / "s.csv"
        pruned = tmp_path / "p.json"
        runner.invoke(main, ["score", str(model_file), "--criterion", "last",
                             "--out", str(scores_csv), "--no-plot"])
        runner.invoke(main, ["prune", str(model_file), "--criterion", "last",
                             "--ratio", "0.5", "--out", str(pruned)])
        rows = [line.split(",") for line in scores_csv.read_text().splitlines()[1:]]
        by_score = sorted(rows, key=lambda r: (float(r[5]), int(r[0]), int(r[1])))
        mask = json.loads((tmp_path / "p.mask.json").read_text())
        pruned_set = {
            (l, i)
            for l, layer in enumerate(mask["layers"])
            for i, keep in enumerate(layer["keep"])
            if not keep
        }
        budget = len(pruned_set)
        lowest = {(int(r[0]), int(r[1])) for r in by_score[:budget]}
        assert lowest == pruned_set

    def test_eval_distortion_with_generated_signals(self, runner, model_file, tmp_path):
        pruned = tmp_path / "p.json"
        runner.invoke(main, ["prune", str(model_file), "--criterion", "last",
                             "--ratio", "0.5", "--out", str(pruned)])
        out = tmp_path / "d.csv"
        res = runner.invoke(main, ["eval-distortion", str(model_file), str(pruned),
                                   "--signals", "gen:count=2,len=32,seed=0",
                                   "--out", str(out)])
        assert res.exit_code == 0, res.output
        lines = out.read_text().splitlines()
        assert lines[0] == "input_id,energy_full,energy_pruned,distortion,bound,ratio"
        assert len(lines) == 3
        for line in lines[1:]:
            fields = line.split(",")
            assert float(fields[3]) <= float(fields[4]) * (1 + 1e-8)

    def test_verify_bounds_deterministic(self, runner, model_file, tmp_path):
        outputs = []
        for name in ("v1.csv", "v2.csv"):
            out = tmp_path / name
            res = runner.invoke(main, ["verify-bounds", str(model_file), "--suite", "layer",
                                       "--trials", "5", "--seed", "7", "--out", str(out),
                                       "--no-plot"])
            assert res.exit_code == 0, res.output
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_freqresp_csv(self, runner, model_file, tmp_path):
        out = tmp_path / "fr.csv"
        res = runner.invoke(main, ["freqresp", str(model_file), "--layer", "1",
                                   "--grid", "16", "--out", str(out), "--no-plot"])
        assert res.exit_code == 0, res.output
        lines = out.read_text().splitlines()
        assert len(lines) == 17
        assert lines[0].startswith("theta,sigma_max")

    def test_rescale_ct_checkpoint(self, runner, tmp_path):
        ct = tmp_path / "ct.json"
        out = tmp_path / "ct2.json"
        runner.invoke(main, ["gen-synthetic", "--layers", "1", "--state-dim", "4",
                             "--channels", "2", "--seed", "2", "--domain", "ct",
                             "--out", str(ct)])
        res = runner.invoke(main, ["rescale", str(ct), "--rate-ratio", "2", "--out", str(out)])
        assert res.exit_code == 0, res.output
        before = io.load_checkpoint(ct)
        after = io.load_checkpoint(out)
        np.testing.assert_allclose(
            after.ct_layers[0].delta, 2.0 * before.ct_layers[0].delta, rtol=1e-15
        )

    def test_rescale_rejects_dt_checkpoint(self, runner, model_file, tmp_path):
        res = runner.invoke(main, ["rescale", str(model_file), "--rate-ratio", "2",
                                   "--out", str(tmp_path / "x.json")])
        assert res.exit_code != 0

    def test_machine_readable_error_on_bad_file(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{}")
        res = runner.invoke(main, ["inspect", str(bad)])
        assert res.exit_code == 1
        err = json.loads(res.stderr.strip().splitlines()[-1])
        assert err["error"] == "SchemaMismatch"
