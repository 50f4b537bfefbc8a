"""The numba kernels and the numpy fallback must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from morseflow import _kernels_numba as nb
from morseflow import _kernels_numpy as npk
from morseflow.cocycle import named_field


@pytest.fixture
def data():
    rng = np.random.default_rng(0)
    x = np.concatenate([rng.uniform(-1, 1, 50), [-1.0, 0.0, 1.0, 1e-300]])
    z = np.concatenate([rng.normal(0, 5, 30), [-800.0, 800.0, 0.0]])
    return x, z


def test_double_well_grid(data):
    x, z = data
    np.testing.assert_allclose(nb.double_well_grid(x, z), npk.double_well_grid(x, z), rtol=1e-14, atol=1e-300)


def test_double_well_pairs(data):
    x, z = data
    zz = np.resize(z, x.shape)
    np.testing.assert_allclose(nb.double_well_pairs(x, zz), npk.double_well_pairs(x, zz), rtol=1e-14, atol=1e-300)


@pytest.mark.parametrize("dim", [1, 2])
def test_heun_forward_and_inverse(dim):
    rng = np.random.default_rng(dim)
    if dim == 1:
        f = g = named_field("double-well")
    else:
        f, g = named_field("double-well-2d"), named_field("double-well-2d-noise")
    X = rng.uniform(-0.9, 0.9, (17, dim))
    W = np.concatenate([[0.0], np.cumsum(rng.normal(0, 0.03, 200))])
    args = (W, 1e-3, f.coef, f.powers, g.coef, g.powers)
    Ya, Yb = nb.heun_forward(X, *args), npk.heun_forward(X, *args)
    np.testing.assert_allclose(Ya, Yb, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(nb.heun_inverse(Ya, *args), npk.heun_inverse(Yb, *args), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(npk.heun_inverse(Yb, *args), X, atol=1e-12)


def test_env_flag_selects_numpy():
    code = "import morseflow._accel as a; print(a.BACKEND)"
    env = dict(os.environ, MORSEFLOW_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env.pop("MORSEFLOW_DISABLE_NUMBA")
    env.pop("NUMBA_DISABLE_JIT", None)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"
