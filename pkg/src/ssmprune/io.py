"""Interchange checkpoint format, signal files and report CSVs.

Checkpoints are JSON with complex numbers stored as two-element [re, im]
arrays; floats serialize via their shortest round-trip representation, so a
save/load cycle is bit-for-bit lossless.  Long signals use a small binary
format; CSV is accepted as an equivalent for both signals and reports.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    Activation,
    Arch,
    ArchKind,
    CtLayer,
    DtLayer,
    MIMO,
    Model,
    pair_conjugates,
    validate_layer,
)
from .discretize import zoh_discretize
from .errors import MalformedFile, SchemaMismatch, ValidationFailed
from .simulate import Signal

SCHEMA_VERSION = "ssm-ckpt-1"

_SIGNAL_MAGIC = b"SSIG"
_SIGNAL_VERSION = 1


def _complex_out(arr: np.ndarray):
    stacked = np.stack([arr.real, arr.imag], axis=-1)
    return stacked.tolist()


def _complex_in(data, name: str) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.shape[-1] != 2:
        raise MalformedFile(f"{name}: complex entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


@dataclass(frozen=True, eq=False)
class Checkpoint:
    """In-memory image of a checkpoint file (CT or DT domain)."""

    domain: str  # "ct" | "dt"
    arch: Arch
    activation: Activation
    ct_layers: tuple[CtLayer, ...] | None = None
    dt_layers: tuple[DtLayer, ...] | None = None
    conj_paired: bool = True
    meta: dict = field(default_factory=dict)

    def to_model(self) -> Model:
        """Discretize (if needed), attach conjugate pairs, and build the model."""
        if self.domain == "dt":
            layers = self.dt_layers
        else:
            layers = tuple(zoh_discretize(ct, arch=self.arch) for ct in self.ct_layers)
            if self.conj_paired:
                layers = tuple(l.with_pairs(pair_conjugates(l)) for l in layers)
        return Model(layers=tuple(layers), activation=self.activation, meta=dict(self.meta))


def _arch_out(arch: Arch):
    if arch.kind is ArchKind.MIMO:
        return {"kind": "mimo"}
    return {"kind": "multi_siso", "n_s": arch.n_s, "h": arch.h}


def _arch_in(data) -> Arch:
    if not isinstance(data, dict) or "kind" not in data:
        raise MalformedFile("architecture must be an object with a 'kind'")
    if data["kind"] == "mimo":
        return MIMO
    if data["kind"] == "multi_siso":
        return Arch(ArchKind.MULTI_SISO, n_s=int(data["n_s"]), h=int(data["h"]))
    raise MalformedFile(f"unknown architecture kind {data['kind']!r}")


def _ct_layer_out(layer: CtLayer) -> dict:
    return {
        "lambda": _complex_out(layer.lam),
        "b": _complex_out(layer.b),
        "c_fwd": _complex_out(layer.c_fwd),
        "c_bwd": None if layer.c_bwd is None else _complex_out(layer.c_bwd),
        "d": layer.d.tolist(),
        "delta": layer.delta.tolist(),
        "b_fixed": layer.b_fixed,
    }


def _ct_layer_in(data: dict) -> CtLayer:
    return CtLayer(
        lam=_complex_in(data["lambda"], "lambda"),
        b=_complex_in(data["b"], "b"),
        c_fwd=_complex_in(data["c_fwd"], "c_fwd"),
        c_bwd=None if data.get("c_bwd") is None else _complex_in(data["c_bwd"], "c_bwd"),
        d=np.asarray(data["d"], dtype=np.float64),
        delta=np.asarray(data["delta"], dtype=np.float64),
        b_fixed=bool(data.get("b_fixed", False)),
    )


def _dt_layer_out(layer: DtLayer) -> dict:
    return {
        "lambda_bar": _complex_out(layer.lambda_bar),
        "b_bar": _complex_out(layer.b_bar),
        "c_fwd": _complex_out(layer.c_fwd),
        "c_bwd": None if layer.c_bwd is None else _complex_out(layer.c_bwd),
        "d": layer.d.tolist(),
        "conj_pairs": None if layer.conj_pairs is None else [list(p) for p in layer.conj_pairs],
        "b_fixed": layer.b_fixed,
    }


def _dt_layer_in(data: dict, arch: Arch) -> DtLayer:
    pairs = data.get("conj_pairs")
    return DtLayer(
        lambda_bar=_complex_in(data["lambda_bar"], "lambda_bar"),
        b_bar=_complex_in(data["b_bar"], "b_bar"),
        c_fwd=_complex_in(data["c_fwd"], "c_fwd"),
        c_bwd=None if data.get("c_bwd") is None else _complex_in(data["c_bwd"], "c_bwd"),
        d=np.asarray(data["d"], dtype=np.float64),
        arch=arch,
        conj_pairs=None if pairs is None else tuple((int(i), int(j)) for i, j in pairs),
        b_fixed=bool(data.get("b_fixed", False)),
    )


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    layers = (
        [_ct_layer_out(l) for l in ckpt.ct_layers]
        if ckpt.domain == "ct"
        else [_dt_layer_out(l) for l in ckpt.dt_layers]
    )
    bidir = any(
        l.c_bwd is not None for l in (ckpt.ct_layers if ckpt.domain == "ct" else ckpt.dt_layers)
    )
    b_fixed = all(
        l.b_fixed for l in (ckpt.ct_layers if ckpt.domain == "ct" else ckpt.dt_layers)
    )
    doc = {
        "schema_version": SCHEMA_VERSION,
        "domain": ckpt.domain,
        "architecture": _arch_out(ckpt.arch),
        "activation": ckpt.activation.value,
        "flags": {"b_fixed": b_fixed, "bidirectional": bidir, "conj_paired": ckpt.conj_paired},
        "layers": layers,
        "meta": ckpt.meta,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def save_model(model: Model, path, conj_paired: bool | None = None) -> None:
    if conj_paired is None:
        conj_paired = all(l.conj_pairs is not None for l in model.layers)
    ckpt = Checkpoint(
        domain="dt",
        arch=model.layers[0].arch,
        activation=model.activation,
        dt_layers=model.layers,
        conj_paired=conj_paired,
        meta=model.meta,
    )
    save_checkpoint(ckpt, path)


def load_checkpoint(path, validate: bool = True) -> Checkpoint:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedFile(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedFile("checkpoint root must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaMismatch(f"unknown schema_version {version!r}, expected {SCHEMA_VERSION!r}")
    domain = doc.get("domain")
    if domain not in ("ct", "dt"):
        raise MalformedFile(f"domain must be 'ct' or 'dt', got {domain!r}")
    arch = _arch_in(doc.get("architecture", {}))
    try:
        activation = Activation(doc.get("activation", "gelu"))
    except ValueError as exc:
        raise MalformedFile(f"unknown activation {doc.get('activation')!r}") from exc
    try:
        if domain == "ct":
            layers = tuple(_ct_layer_in(l) for l in doc["layers"])
        else:
            layers = tuple(_dt_layer_in(l, arch) for l in doc["layers"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedFile(f"malformed layer data: {exc}") from exc
    if validate:
        for idx, layer in enumerate(layers):
            report = validate_layer(layer)
            if report:
                raise ValidationFailed(report, f"layer {idx} invalid: "
                                       + "; ".join(str(v) for v in report))
    flags = doc.get("flags", {})
    return Checkpoint(
        domain=domain,
        arch=arch,
        activation=activation,
        ct_layers=layers if domain == "ct" else None,
        dt_layers=layers if domain == "dt" else None,
        conj_paired=bool(flags.get("conj_paired", True)),
        meta=doc.get("meta", {}),
    )


def load_model(path) -> Model:
    return load_checkpoint(path).to_model()


# ---------------------------------------------------------------------------
# Signals


def write_signal(u: Signal, path) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            for row in u.data:
                writer.writerow([repr(float(v)) for v in row])
        return
    with path.open("wb") as fh:
        fh.write(_SIGNAL_MAGIC)
        fh.write(struct.pack("<IQQ", _SIGNAL_VERSION, u.T, u.h))
        fh.write(u.data.astype("<f8").tobytes())


def read_signal(path) -> Signal:
    path = Path(path)
    if path.suffix == ".csv":
        try:
            data = np.loadtxt(path, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise MalformedFile(f"bad signal CSV {path}: {exc}") from exc
        return Signal(data)
    raw = path.read_bytes()
    if len(raw) < 24 or raw[:4] != _SIGNAL_MAGIC:
        raise MalformedFile(f"{path} is not a signal file")
    version, t, h = struct.unpack("<IQQ", raw[4:24])
    if version != _SIGNAL_VERSION:
        raise SchemaMismatch(f"unknown signal file version {version}")
    expected = 24 + t * h * 8
    if len(raw) != expected:
        raise MalformedFile(f"{path}: byte length {len(raw)} does not match header ({expected})")
    data = np.frombuffer(raw[24:], dtype="<f8").reshape(t, h)
    return Signal(data.copy())


def load_signals_dir(path) -> list[tuple[str, Signal]]:
    path = Path(path)
    files = sorted(p for p in path.iterdir() if p.suffix in (".sig", ".csv"))
    if not files:
        raise MalformedFile(f"no .sig or .csv signals in {path}")
    return [(p.name, read_signal(p)) for p in files]


# ---------------------------------------------------------------------------
# Report CSVs: floats written via repr for deterministic byte-stable output


def write_csv(path, header: list[str], rows) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
