"""Command-line surface.

Every command is a pure function of its flags and input files: fixed seeds
give byte-identical outputs.  Errors exit nonzero with one machine-readable
JSON object on stderr.
"""

from __future__ import annotations

import functools
import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import io, plots
from .core import Activation, ArchKind
from .discretize import check_dt_stability, rescale_timescales
from .errors import SsmError
from .norms import EPS, hinf_bruteforce, signal_energy, subsystem_hinf
from .pruning import (
    Criterion,
    PruneMask,
    apply_mask_model,
    hinf_table,
    lamp_scores,
    last_scores,
    magnitude_table,
    score_table,
    select_global,
    select_random,
    select_uniform,
)
from .simulate import FreqGrid, Signal, frequency_response, model_forward, pad_for_decay
from .verify import (
    ablation_scale_mismatch,
    layer_bound_report,
    model_bound_report,
    probe_inputs,
    random_ct_layer,
    random_dt_layer,
    random_model,
    make_scale_gap_model,
)
from .norms import _sigma_max


def _fail_on_ssm_error(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except SsmError as exc:
            payload = {"error": type(exc).__name__, "message": str(exc)}
            click.echo(json.dumps(payload), err=True)
            sys.exit(1)

    return wrapper


@click.group()
def main():
    """State pruning toolkit for diagonal deep state space models."""


@main.command()
@click.argument("model_path", type=click.Path(exists=True))
@_fail_on_ssm_error
def inspect(model_path):
    """Print dimensions, stability margins and importance summaries."""
    ckpt = io.load_checkpoint(model_path)
    model = ckpt.to_model()
    click.echo(f"domain: {ckpt.domain}  activation: {model.activation.value}  "
               f"layers: {model.num_layers}")
    table = hinf_table(model)
    for l, dt in enumerate(model.layers):
        margins = check_dt_stability(dt)
        scores = table.layers[l].hinf_sq
        arch = dt.arch.kind.value
        if dt.arch.kind is ArchKind.MULTI_SISO:
            arch += f"(n_s={dt.arch.n_s}, h={dt.arch.h})"
        click.echo(
            f"layer {l}: n={dt.n} h={dt.h} arch={arch} "
            f"paired={dt.conj_pairs is not None} "
            f"min_margin={margins.min():.6g} "
            f"hinf_sq[min/med/max]={np.min(scores):.6g}/"
            f"{np.median(scores):.6g}/{np.max(scores):.6g}"
        )


_SCORE_CRITERIA = {
    "hinf": lambda m: hinf_table(m),
    "last": last_scores,
    "magnitude": lambda m: magnitude_table(m),
    "lamp": lamp_scores,
}


@main.command()
@click.argument("model_path", type=click.Path(exists=True))
@click.option("--criterion", type=click.Choice(sorted(_SCORE_CRITERIA)), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
@_fail_on_ssm_error
def score(model_path, criterion, out_path, plot):
    """Emit the per-layer, per-state score table as CSV (plus a spectra figure)."""
    model = io.load_model(model_path)
    table = _SCORE_CRITERIA[criterion](model)
    rows = []
    for l, layer in enumerate(table.layers):
        rank_pos = np.empty(layer.rank.size, dtype=int)
        rank_pos[layer.rank] = np.arange(layer.rank.size)
        for i in range(layer.rank.size):
            rows.append(
                (l, i, float(layer.hinf_sq[i]), float(layer.last[i]), int(rank_pos[i]),
                 float(layer.selection[i]))
            )
    io.write_csv(out_path, ["layer", "state", "hinf_sq", "last", "rank", "score"], rows)
    if plot:
        plots.render_score_spectra(table, plots.figure_path(out_path))


_PRUNE_DISPATCH = {
    "uniform-hinf": lambda m, r, s: select_uniform(m, hinf_table(m, Criterion.UNIFORM_HINF), r),
    "global-hinf": lambda m, r, s: select_global(m, hinf_table(m), r),
    "last": lambda m, r, s: select_global(m, last_scores(m), r),
    "uniform-magnitude": lambda m, r, s: select_uniform(
        m, magnitude_table(m, Criterion.UNIFORM_MAGNITUDE), r
    ),
    "global-magnitude": lambda m, r, s: select_global(m, magnitude_table(m), r),
    "lamp": lambda m, r, s: select_global(m, lamp_scores(m), r),
    "random-structured": lambda m, r, s: select_random(m, r, seed=s, structured=True),
    "random-unstructured": lambda m, r, s: select_random(m, r, seed=s, structured=False),
}


def _mask_to_json(mask: PruneMask) -> dict:
    doc = {
        "plan": {
            "criterion": mask.plan.criterion.value,
            "ratio": mask.plan.ratio,
            "seed": mask.plan.seed,
        },
        "layers": [
            {
                "keep": [bool(v) for v in k],
                "pruned_fraction": float(np.sum(~k)) / k.size,
                "surviving_indices": [int(i) for i in np.flatnonzero(k)],
            }
            for k in mask.keep
        ],
        "realized_ratio": mask.realized_ratio,
        "reported_ratio": mask.reported_ratio,
    }
    if mask.element_masks is not None:
        doc["element_masks"] = [
            {
                "lambda_keep": [bool(v) for v in m.lambda_keep],
                "b_keep": [[bool(v) for v in row] for row in m.b_keep],
                "c_keep": [[bool(v) for v in row] for row in m.c_keep],
            }
            for m in mask.element_masks
        ]
    return doc


@main.command()
@click.argument("model_path", type=click.Path(exists=True))
@click.option("--criterion", type=click.Choice(sorted(_PRUNE_DISPATCH)), required=True)
@click.option("--ratio", type=float, required=True)
@click.option("--mode", type=click.Choice(["masked", "compacted"]), default="masked",
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@_fail_on_ssm_error
def prune(model_path, criterion, ratio, mode, seed, out_path):
    """Prune a model and write the result plus a mask JSON alongside it.

    The reported ratio for layer-adaptive criteria is the average pruned
    fraction across layers.
    """
    model = io.load_model(model_path)
    mask = _PRUNE_DISPATCH[criterion](model, ratio, seed)
    if mask.element_masks is not None and mode == "compacted":
        raise click.UsageError("unstructured masks cannot be compacted")
    pruned = apply_mask_model(model, mask, mode=mode)
    pruned.meta["pruning"] = {
        "criterion": mask.plan.criterion.value,
        "ratio": mask.plan.ratio,
        "mode": mode,
        "keep": [[bool(v) for v in k] for k in mask.keep],
        "surviving_indices": [[int(i) for i in np.flatnonzero(k)] for k in mask.keep],
    }
    io.save_model(pruned, out_path)
    mask_path = Path(out_path).with_suffix(".mask.json")
    mask_path.write_text(json.dumps(_mask_to_json(mask), indent=1) + "\n")
    click.echo(f"reported pruning ratio: {mask.reported_ratio:.4f} "
               f"(realized global {mask.realized_ratio:.4f})")


def _resolve_signals(spec: str, h: int) -> list[tuple[str, Signal]]:
    if spec.startswith("gen:"):
        params = {"count": 10, "len": 128, "seed": 0}
        body = spec[4:]
        if body:
            for part in body.split(","):
                key, _, value = part.partition("=")
                if key not in params:
                    raise click.UsageError(f"unknown signal generator key {key!r}")
                params[key] = int(value)
        rng = np.random.default_rng(params["seed"])
        return [
            (f"gen{i:04d}", Signal(rng.standard_normal((params["len"], h))))
            for i in range(params["count"])
        ]
    return io.load_signals_dir(spec)


def _bound_factor(full, keep_vectors, grid_size=1024, refine_iters=40):
    """Summed sequential per-step bound factor (bound = factor * ||u||^2)."""
    current = [np.ones(dt.n, dtype=bool) for dt in full.layers]
    steps = []
    for l, keep in enumerate(keep_vectors):
        pruned_idx = list(np.flatnonzero(~np.asarray(keep, dtype=bool)))
        pairs = full.layers[l].conj_pairs
        if pairs is not None:
            for i, j in sorted(pairs, key=lambda p: min(p)):
                if i in pruned_idx and j in pruned_idx:
                    steps.append((l, (min(i, j), max(i, j))))
        else:
            steps.extend((l, (i,)) for i in pruned_idx)
    factor = 0.0
    for l, states in steps:
        norms = [
            hinf_bruteforce(dt, subset=np.flatnonzero(current[k]), grid_size=grid_size,
                            refine_iters=refine_iters)
            for k, dt in enumerate(full.layers)
        ]
        sub = sum(subsystem_hinf(full.layers[l], i) ** 2 for i in states)
        product = 1.0
        for k, nk in enumerate(norms):
            if k != l:
                product *= nk**2
        factor += sub * product
        for i in states:
            current[l][i] = False
    return factor


@main.command("eval-distortion")
@click.argument("full_path", type=click.Path(exists=True))
@click.argument("pruned_path", type=click.Path(exists=True))
@click.option("--signals", required=True,
              help="Signal directory, or gen:count=N,len=T,seed=S for white noise.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@_fail_on_ssm_error
def eval_distortion(full_path, pruned_path, signals, out_path):
    """Compare full and pruned model outputs over a signal set."""
    full = io.load_model(full_path)
    pruned = io.load_model(pruned_path)
    sigs = _resolve_signals(signals, full.h)
    info = pruned.meta.get("pruning")
    factor = None
    if info is not None and "keep" in info:
        factor = _bound_factor(full, info["keep"])
    rows = []
    for name, u in sigs:
        padded = pad_for_decay(u, list(full.layers) + list(pruned.layers))
        y_full = model_forward(full, padded)
        y_pruned = model_forward(pruned, padded)
        dist = signal_energy(Signal(y_full.data - y_pruned.data))
        e_u = signal_energy(u)
        if factor is None:
            bound, ratio = "", ""
        else:
            bound = factor * e_u
            ratio = dist / max(bound, EPS)
        rows.append((name, signal_energy(y_full), signal_energy(y_pruned), dist, bound, ratio))
    io.write_csv(
        out_path,
        ["input_id", "energy_full", "energy_pruned", "distortion", "bound", "ratio"],
        rows,
    )


@main.command("verify-bounds")
@click.argument("model_path", type=click.Path(exists=True))
@click.option("--suite", type=click.Choice(["layer", "model", "ablation"]), required=True)
@click.option("--trials", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--scale-gap", type=float, default=1000.0, show_default=True,
              help="Cross-layer score gap for the ablation suite.")
@click.option("--ratio", type=float, default=0.5, show_default=True,
              help="Pruning ratio for the model/ablation suites.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
@_fail_on_ssm_error
def verify_bounds(model_path, suite, trials, seed, scale_gap, ratio, out_path, plot):
    """Run the randomized bound-verification suites; model dims are the template."""
    model = io.load_model(model_path)
    n, h = model.layers[0].n, model.layers[0].h
    num_layers = model.num_layers
    rng = np.random.default_rng(seed)
    if suite == "layer":
        rows = []
        ratios = []
        for t in range(trials):
            dt = random_dt_layer(rng, n, h)
            pairs = sorted(dt.conj_pairs, key=lambda p: min(p))
            count = max(1, len(pairs) // 4)
            chosen = rng.choice(len(pairs), size=count, replace=False)
            pruned = sorted(i for c in chosen for i in pairs[c])
            inputs = probe_inputs(rng, dt, count=5)
            report = layer_bound_report(dt, pruned, inputs, model.activation)
            rows.append((t, report.measured, report.bound, report.ratio))
            ratios.append(report.ratio)
        io.write_csv(out_path, ["trial", "measured", "bound", "ratio"], rows)
        if plot:
            plots.render_bound_ratios(ratios, plots.figure_path(out_path),
                                      "layer-level bound ratios")
    elif suite == "model":
        rows = []
        ratios = []
        for t in range(trials):
            m = random_model(rng, num_layers, n, h, activation=model.activation)
            mask = select_random(m, ratio, seed=int(rng.integers(2**31)), structured=True)
            inputs = probe_inputs(rng, m.layers[0], count=3)
            report = model_bound_report(m, mask, inputs)
            for s in report.steps:
                rows.append((t, s.layer, ";".join(map(str, s.states)), s.measured, s.bound,
                             s.ratio))
                ratios.append(s.ratio)
            rows.append((t, "total", "", report.total_measured, report.total_bound,
                         report.total_measured / max(report.total_bound, EPS)))
        io.write_csv(out_path, ["trial", "layer", "states", "measured", "bound", "ratio"], rows)
        if plot:
            plots.render_bound_ratios(ratios, plots.figure_path(out_path),
                                      "model-level per-step bound ratios")
    else:
        rows = []
        methods = ("uniform-hinf", "global-hinf", "last")
        sums = {m: None for m in methods}
        dist_sums = {m: 0.0 for m in methods}
        for t in range(trials):
            result = ablation_scale_mismatch(seed + t, scale_gap, ratio,
                                             num_layers=num_layers, n=n, h=h)
            for method in methods:
                dims = result.remaining_dims[method]
                rows.append((t, method, result.distortion[method],
                             ";".join(map(str, dims)),
                             ";".join("1" if f else "0" for f in result.floor_hits[method])))
                dist_sums[method] += result.distortion[method]
                sums[method] = dims if sums[method] is None else [
                    a + b for a, b in zip(sums[method], dims)
                ]
        io.write_csv(out_path,
                     ["trial", "method", "distortion", "remaining_dims", "floor_hits"], rows)
        if plot:
            mean_dims = {m: [v / trials for v in sums[m]] for m in methods}
            mean_dist = {m: dist_sums[m] / trials for m in methods}
            plots.render_ablation(mean_dims, mean_dist, plots.figure_path(out_path))


@main.command()
@click.argument("model_path", type=click.Path(exists=True))
@click.option("--layer", "layer_index", type=int, default=0, show_default=True)
@click.option("--grid", "grid_size", type=int, default=1024, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--plot/--no-plot", default=True, show_default=True)
@_fail_on_ssm_error
def freqresp(model_path, layer_index, grid_size, out_path, plot):
    """Tabulate G(e^{j theta}) for one layer over a uniform grid."""
    model = io.load_model(model_path)
    if not 0 <= layer_index < model.num_layers:
        raise click.UsageError(f"layer index {layer_index} out of range")
    dt = model.layers[layer_index]
    grid = FreqGrid.uniform(grid_size)
    g = frequency_response(dt, None, grid)
    sigma = _sigma_max(g)
    header = ["theta", "sigma_max"]
    for i in range(dt.h):
        for j in range(dt.h):
            header += [f"g{i}{j}_re", f"g{i}{j}_im"]
    rows = []
    for k, theta in enumerate(grid.thetas):
        row = [float(theta), float(sigma[k])]
        for i in range(dt.h):
            for j in range(dt.h):
                row += [float(g[k, i, j].real), float(g[k, i, j].imag)]
        rows.append(tuple(row))
    io.write_csv(out_path, header, rows)
    if plot:
        plots.render_freqresp(grid.thetas, sigma, plots.figure_path(out_path), layer_index)


@main.command("gen-synthetic")
@click.option("--layers", "num_layers", type=int, default=3, show_default=True)
@click.option("--state-dim", type=int, default=8, show_default=True)
@click.option("--channels", type=int, default=2, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--scale-gap", type=float, default=1.0, show_default=True)
@click.option("--domain", type=click.Choice(["dt", "ct"]), default="dt", show_default=True)
@click.option("--activation", type=click.Choice([a.value for a in Activation]),
              default="relu", show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@_fail_on_ssm_error
def gen_synthetic(num_layers, state_dim, channels, seed, scale_gap, domain, activation, out_path):
    """Generate a random stable model checkpoint."""
    rng = np.random.default_rng(seed)
    act = Activation(activation)
    meta = {"generator": {"seed": seed, "scale_gap": scale_gap, "domain": domain}}
    if domain == "ct":
        layers = []
        for l in range(num_layers):
            ct = random_ct_layer(rng, state_dim, channels)
            if scale_gap != 1.0 and l >= num_layers - num_layers // 2:
                ct = replace(ct, c_fwd=ct.c_fwd / scale_gap)
            layers.append(ct)
        ckpt = io.Checkpoint(domain="ct", arch=io.MIMO, activation=act,
                             ct_layers=tuple(layers), meta=meta)
        io.save_checkpoint(ckpt, out_path)
    else:
        if scale_gap != 1.0:
            model = make_scale_gap_model(rng, num_layers=num_layers, n=state_dim, h=channels,
                                         scale_gap=scale_gap, activation=act)
        else:
            model = random_model(rng, num_layers, state_dim, channels, activation=act)
        model.meta.update(meta)
        io.save_model(model, out_path)


@main.command()
@click.argument("model_path", type=click.Path(exists=True))
@click.option("--rate-ratio", type=float, required=True,
              help="f_train / f_new; 2 when downsampling 16 kHz to 8 kHz.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@_fail_on_ssm_error
def rescale(model_path, rate_ratio, out_path):
    """Rescale the timescales of a continuous-time checkpoint."""
    ckpt = io.load_checkpoint(model_path)
    if ckpt.domain != "ct":
        raise click.UsageError("rescale requires a continuous-time checkpoint")
    layers = tuple(rescale_timescales(ct, rate_ratio) for ct in ckpt.ct_layers)
    out = io.Checkpoint(domain="ct", arch=ckpt.arch, activation=ckpt.activation,
                        ct_layers=layers, conj_paired=ckpt.conj_paired,
                        meta={**ckpt.meta, "rescaled_by": rate_ratio})
    io.save_checkpoint(out, out_path)


if __name__ == "__main__":
    main()
