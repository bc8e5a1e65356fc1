"""Command line entry point for checkpoint conversion."""

import sys

import click

from .convert import LAYOUTS, convert
from .errors import ConvertError


@click.command()
@click.option("--arch", "arch", required=True, type=click.Choice(sorted(LAYOUTS)),
              help="Architecture tag selecting the decode table.")
@click.option("--in", "in_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Source archive (.npz or pickle).")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False),
              help="Destination checkpoint JSON.")
@click.option("--activation", default="gelu",
              type=click.Choice(["identity", "relu", "gelu"]),
              help="Activation recorded in the emitted checkpoint.")
@click.option("--force", is_flag=True,
              help="Emit even if decoded poles are not Hurwitz.")
def main(arch, in_path, out_path, activation, force):
    """Convert a training checkpoint archive to interchange JSON."""
    try:
        doc = convert(in_path, arch, out_path, activation=activation, force=force)
    except ConvertError as exc:
        click.echo(f"{type(exc).__name__}: {exc}", err=True)
        sys.exit(1)
    n_layers = len(doc["layers"])
    n_states = sum(len(l["lambda"]) for l in doc["layers"])
    click.echo(f"wrote {out_path}: {n_layers} layers, {n_states} states ({arch})")


if __name__ == "__main__":
    main()
