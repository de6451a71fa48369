import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geodamage import _kernels_py as py
from geodamage import kernels

compiled = pytest.importorskip("geodamage._kernels")

PARAMS = [(0, 0.7, 0.0), (1, 0.8, 0.5)]


def _inputs(seed, N=40, scale=2.0):
    rng = np.random.default_rng(seed)
    Z = np.ascontiguousarray(scale * rng.normal(size=(N, 3)))
    lam = rng.uniform(0.05, 2.0, size=N)
    return Z, lam


def test_compiled_backend_selected_by_default():
    assert kernels.BACKEND == "compiled"


def test_pure_python_switch():
    env = dict(os.environ, GEODAMAGE_PURE_PYTHON="1")
    r = subprocess.run([sys.executable, "-c", "from geodamage import kernels; print(kernels.BACKEND)"],
                       capture_output=True, text=True, env=env)
    assert r.returncode == 0 and r.stdout.strip() == "python"


@pytest.mark.parametrize("kind, a, b", PARAMS)
@given(seed=st.integers(0, 2**31 - 1))
def test_support_agrees(kind, a, b, seed):
    Z, _ = _inputs(seed)
    x = py.support_nodes(Z, kind, a, b, 2)
    y = compiled.support_nodes(Z, kind, a, b, 2)
    assert np.array_equal(np.isinf(x), np.isinf(y))
    fin = np.isfinite(x)
    assert np.allclose(x[fin], y[fin], rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("kind, a, b", PARAMS)
@given(seed=st.integers(0, 2**31 - 1))
def test_prox_and_jacobian_agree(kind, a, b, seed):
    Z, lam = _inputs(seed)
    assert np.allclose(py.prox_nodes(Z, lam, kind, a, b, 2), compiled.prox_nodes(Z, lam, kind, a, b, 2),
                       rtol=1e-12, atol=1e-13)
    assert np.allclose(py.prox_jacobian_nodes(Z, lam, kind, a, b, 2),
                       compiled.prox_jacobian_nodes(Z, lam, kind, a, b, 2), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("kind, a, b", PARAMS)
def test_grid_scan_agrees(kind, a, b):
    rng = np.random.default_rng(5)
    C = np.diag([3.0, 1.0, 2.0])
    C[0, 1] = C[1, 0] = 1.0
    eps = rng.normal(size=3)
    p_prev = np.zeros(3)
    args = (np.zeros(3), 0.1, 21, C, eps, 0.5, 0.3, p_prev, kind, a, b, 2)
    v1, p1 = py.grid_scan(*args)
    v2, p2 = compiled.grid_scan(*args)
    assert v1 == pytest.approx(v2, rel=1e-12)
    assert np.allclose(p1, p2, atol=1e-12)


def test_full_step_agrees_across_backends():
    code = (
        "import numpy as np\n"
        "from geodamage.config import RunConfig\n"
        "from geodamage.evolution import run_viscous\n"
        "c = RunConfig(nx=3, ny=3)\n"
        "tr = run_viscous(c.load(), c.law(), c.fe(), 6, 0.05)\n"
        "print(repr(float(tr.energy_totals()[-1])), repr(float(tr.alpha.min())))\n"
    )
    outs = []
    for flag in ("0", "1"):
        env = dict(os.environ, GEODAMAGE_PURE_PYTHON=flag)
        r = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env)
        assert r.returncode == 0, r.stderr
        outs.append([float(x) for x in r.stdout.split()])
    assert np.allclose(outs[0], outs[1], rtol=1e-9, atol=1e-12)
