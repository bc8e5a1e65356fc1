"""Table-driven decoding of training checkpoints into interchange JSON.

Each supported architecture tag maps to an explicit table of expected keys
and decode transforms.  Decoding never guesses: an archive whose key tree
does not match the declared table fails loudly with the tree attached.
"""

from __future__ import annotations

import json
import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import StabilityViolation, UnrecognizedLayout

SCHEMA_VERSION = "ssm-ckpt-1"


# ---------------------------------------------------------------------------
# Archive loading: both formats are flattened to {"layers.<i>.<field>": array}


def load_archive(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path, allow_pickle=False) as archive:
            return {k: archive[k] for k in archive.files}
    with path.open("rb") as fh:
        tree = pickle.load(fh)
    flat: dict[str, np.ndarray] = {}
    _flatten(tree, "", flat)
    return flat


def _flatten(node, prefix: str, out: dict) -> None:
    if isinstance(node, dict):
        for key, value in node.items():
            _flatten(value, f"{prefix}{key}.", out)
    elif isinstance(node, (list, tuple)):
        for i, value in enumerate(node):
            _flatten(value, f"{prefix}{i}.", out)
    else:
        out[prefix[:-1]] = np.asarray(node)


def group_layers(flat: dict[str, np.ndarray]) -> list[dict[str, np.ndarray]]:
    layers: dict[int, dict[str, np.ndarray]] = {}
    for key, value in flat.items():
        parts = key.split(".")
        if len(parts) < 3 or parts[0] != "layers" or not parts[1].isdigit():
            continue
        layers.setdefault(int(parts[1]), {})[".".join(parts[2:])] = value
    if not layers:
        raise UnrecognizedLayout("no layers.<i>.<field> entries found", sorted(flat))
    return [layers[i] for i in sorted(layers)]


# ---------------------------------------------------------------------------
# Decode tables


@dataclass(frozen=True)
class Layout:
    required: tuple[str, ...]
    optional: tuple[str, ...]
    decode: callable


def _check_keys(layer: dict, layout: Layout, index: int) -> None:
    missing = [k for k in layout.required if k not in layer]
    unknown = [k for k in layer if k not in layout.required + layout.optional]
    if missing or unknown:
        raise UnrecognizedLayout(
            f"layer {index}: missing {missing or 'nothing'}, unexpected {unknown or 'nothing'}",
            sorted(layer),
        )


def _complex_pairs(arr: np.ndarray):
    arr = np.asarray(arr, dtype=np.complex128)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def _expand_half(arr: np.ndarray, axis: int) -> np.ndarray:
    return np.concatenate([arr, np.conj(arr)], axis=axis)


def _as_complex(value: np.ndarray, name: str, index: int) -> np.ndarray:
    value = np.asarray(value)
    if value.dtype.kind in "fi" and value.shape and value.shape[-1] == 2:
        return value[..., 0].astype(np.complex128) + 1j * value[..., 1]
    if value.dtype.kind in "cfi":
        return value.astype(np.complex128)
    raise UnrecognizedLayout(f"layer {index}: field {name} has dtype {value.dtype}", [name])


def decode_s4d(layer: dict, index: int):
    """S4D storage: shared half-spectrum A per layer, per-channel C and
    log-timescales, fixed B when absent.  Emits the block-diagonal multi-SISO
    expansion."""
    log_a_real = np.asarray(layer["log_A_real"], dtype=np.float64)
    a_imag = np.asarray(layer["A_imag"], dtype=np.float64)
    c_half = _as_complex(layer["C"], "C", index)
    log_dt = np.asarray(layer["log_dt"], dtype=np.float64).reshape(-1)
    h = c_half.shape[0]
    half = log_a_real.size
    n_s = 2 * half
    steps = [
        "lambda_half = -exp(log_A_real) + 1j * A_imag",
        "lambda = concat(lambda_half, conj(lambda_half)) per channel block",
        "delta = exp(log_dt) broadcast per-channel to per-state",
        "c = concat(C_half, conj(C_half)) placed on the channel block diagonal",
    ]
    lam_half = -np.exp(log_a_real) + 1j * a_imag
    lam_block = _expand_half(lam_half, 0)

    b_fixed = "B" not in layer
    if b_fixed:
        b_block_half = np.ones((half, 1), dtype=np.complex128)
        steps.append("b fixed to ones (B absent from archive)")
    else:
        b_block_half = _as_complex(layer["B"], "B", index).reshape(half, 1)
        steps.append("b = concat(B_half, conj(B_half)) on the channel block diagonal")
    b_block = _expand_half(b_block_half, 0)

    d_diag = np.asarray(layer.get("D", np.zeros(h)), dtype=np.float64).reshape(-1)

    n = n_s * h
    lam = np.tile(lam_block, h)
    delta = np.repeat(np.exp(log_dt), n_s)
    b = np.zeros((n, h), dtype=np.complex128)
    c = np.zeros((h, n), dtype=np.complex128)
    for k in range(h):
        sl = slice(k * n_s, (k + 1) * n_s)
        b[sl, k] = b_block[:, 0]
        c[k, sl] = _expand_half(c_half[k], 0)
    d = np.diag(d_diag)

    doc = {
        "lambda": _complex_pairs(lam),
        "b": _complex_pairs(b),
        "c_fwd": _complex_pairs(c),
        "c_bwd": None,
        "d": d.tolist(),
        "delta": delta.tolist(),
        "b_fixed": b_fixed,
    }
    return doc, lam, steps, {"n_s": n_s, "h": h}


def decode_s5(layer: dict, index: int):
    """S5 storage: half-spectrum Lambda, dense complex B and C, per-state
    log-timescales.  Emits the conjugate-completed MIMO layer."""
    lam_half = (
        np.asarray(layer["Lambda_re"], dtype=np.float64)
        + 1j * np.asarray(layer["Lambda_im"], dtype=np.float64)
    )
    b_half = _as_complex(layer["B"], "B", index)
    c_half = _as_complex(layer["C"], "C", index)
    log_step = np.asarray(layer["log_step"], dtype=np.float64).reshape(-1)
    h = c_half.shape[0]
    steps = [
        "lambda_half = Lambda_re + 1j * Lambda_im",
        "lambda = concat(lambda_half, conj(lambda_half))",
        "b = concat(B_half, conj(B_half))",
        "c_fwd = concat(C_half, conj(C_half))",
        "delta = exp(log_step) tiled across the conjugate halves",
    ]
    lam = _expand_half(lam_half, 0)
    b = _expand_half(b_half, 0)
    c = _expand_half(c_half, 1)
    delta = np.tile(np.exp(log_step), 2)

    c_bwd = None
    if "C_bwd" in layer:
        c_bwd = _expand_half(_as_complex(layer["C_bwd"], "C_bwd", index), 1)
        steps.append("c_bwd = concat(C_bwd_half, conj(C_bwd_half))")

    d_raw = np.asarray(layer.get("D", np.zeros(h)), dtype=np.float64)
    d = np.diag(d_raw) if d_raw.ndim == 1 else d_raw

    doc = {
        "lambda": _complex_pairs(lam),
        "b": _complex_pairs(b),
        "c_fwd": _complex_pairs(c),
        "c_bwd": None if c_bwd is None else _complex_pairs(c_bwd),
        "d": d.tolist(),
        "delta": delta.tolist(),
        "b_fixed": False,
    }
    return doc, lam, steps, None


LAYOUTS = {
    "s4d": Layout(
        required=("log_A_real", "A_imag", "C", "log_dt"),
        optional=("B", "D"),
        decode=decode_s4d,
    ),
    "s5": Layout(
        required=("Lambda_re", "Lambda_im", "B", "C", "log_step"),
        optional=("C_bwd", "D"),
        decode=decode_s5,
    ),
}


def convert(in_path, arch: str, out_path, activation: str = "gelu", force: bool = False) -> dict:
    """Decode an archive and write the interchange checkpoint JSON."""
    if arch not in LAYOUTS:
        raise UnrecognizedLayout(f"unknown architecture tag {arch!r}", sorted(LAYOUTS))
    layout = LAYOUTS[arch]
    flat = load_archive(in_path)
    layers = group_layers(flat)

    out_layers = []
    manifest = []
    arch_doc = {"kind": "mimo"}
    b_fixed_all = True
    bidirectional = False
    for i, layer in enumerate(layers):
        _check_keys(layer, layout, i)
        source = {
            k: {"dtype": str(v.dtype), "shape": list(v.shape)} for k, v in layer.items()
        }
        doc, lam, steps, siso = layout.decode(layer, i)
        unstable = np.flatnonzero(lam.real >= 0)
        if unstable.size and not force:
            raise StabilityViolation(
                f"layer {i}: non-Hurwitz poles at state indices {unstable.tolist()}; "
                "re-run with --force to emit anyway"
            )
        if siso is not None:
            arch_doc = {"kind": "multi_siso", "n_s": siso["n_s"], "h": siso["h"]}
        b_fixed_all = b_fixed_all and doc["b_fixed"]
        bidirectional = bidirectional or doc["c_bwd"] is not None
        out_layers.append(doc)
        manifest.append({"layer": i, "steps": steps, "source": source})

    doc = {
        "schema_version": SCHEMA_VERSION,
        "domain": "ct",
        "architecture": arch_doc,
        "activation": activation,
        "flags": {
            "b_fixed": b_fixed_all,
            "bidirectional": bidirectional,
            "conj_paired": True,
        },
        "layers": out_layers,
        "meta": {
            "converter": {
                "arch": arch,
                "source": Path(in_path).name,
                "manifest": manifest,
            }
        },
    }
    Path(out_path).write_text(json.dumps(doc, indent=1) + "\n")
    return doc


def reencode(doc: dict) -> dict[str, np.ndarray]:
    """Invert the decode steps of a converted checkpoint.

    Returns the flat source arrays implied by the manifest, cast back to the
    recorded source dtypes and shapes; comparing them to the original archive
    verifies that conversion was lossless.
    """
    converter = doc["meta"]["converter"]
    arch = converter["arch"]
    flat: dict[str, np.ndarray] = {}
    for entry, layer in zip(converter["manifest"], doc["layers"]):
        i = entry["layer"]
        source = entry["source"]
        lam = _pairs_to_complex(layer["lambda"])
        delta = np.asarray(layer["delta"], dtype=np.float64)
        c = _pairs_to_complex(layer["c_fwd"])
        fields: dict[str, np.ndarray] = {}
        if arch == "s4d":
            h = len(layer["d"])
            n_s = lam.size // h
            half = n_s // 2
            lam_half = lam[:half]
            fields["log_A_real"] = np.log(-lam_half.real)
            fields["A_imag"] = lam_half.imag
            fields["log_dt"] = np.log(delta[::n_s])
            fields["C"] = np.stack([c[k, k * n_s : k * n_s + half] for k in range(h)])
            if not layer["b_fixed"]:
                fields["B"] = _pairs_to_complex(layer["b"])[:half, 0]
            fields["D"] = np.diag(np.asarray(layer["d"]))
        else:
            half = lam.size // 2
            fields["Lambda_re"] = lam[:half].real
            fields["Lambda_im"] = lam[:half].imag
            fields["B"] = _pairs_to_complex(layer["b"])[:half]
            fields["C"] = c[:, :half]
            fields["log_step"] = np.log(delta[:half])
            if layer.get("c_bwd") is not None:
                fields["C_bwd"] = _pairs_to_complex(layer["c_bwd"])[:, :half]
            d = np.asarray(layer["d"])
            fields["D"] = np.diag(d) if len(source.get("D", {}).get("shape", [0, 0])) == 1 else d
        for name, value in fields.items():
            if name not in source:
                continue
            info = source[name]
            flat[f"layers.{i}.{name}"] = value.astype(info["dtype"]).reshape(info["shape"])
    return flat


def _pairs_to_complex(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return arr[..., 0] + 1j * arr[..., 1]
