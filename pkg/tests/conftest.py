"""Shared builders for layer and model fixtures."""

import numpy as np
import pytest

from ssmprune.core import MIMO, Activation, DtLayer, Model


def real_dt_layer(lambda_bar, b_bar, c, d=None, b_fixed=False):
    """Unpaired diagonal layer from plain nested lists (complex allowed)."""
    lam = np.asarray(lambda_bar, dtype=np.complex128)
    b = np.asarray(b_bar, dtype=np.complex128)
    c = np.asarray(c, dtype=np.complex128)
    h = c.shape[0]
    if d is None:
        d = np.zeros((h, h))
    return DtLayer(
        lambda_bar=lam,
        b_bar=b,
        c_fwd=c,
        d=np.asarray(d, dtype=np.float64),
        arch=MIMO,
        b_fixed=b_fixed,
    )


def scalar_layer(lam=0.5, b=0.5, c=1.0, d=0.0):
    """Order-1 SISO layer, the worked-example workhorse."""
    return real_dt_layer([lam], [[b]], [[c]], [[d]])


def model_of(*layers, activation=Activation.IDENTITY):
    return Model(layers=tuple(layers), activation=activation)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
