import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import logsumexp

from univcode import _pykernels, kernels
from univcode.channels import make_dmc_family
from univcode.combinatorics import CompositionType
from univcode.infomeasures import RateParameters
from univcode.mixtures import PriorSpec
from univcode.simulator import _all_outputs, assemble_code, decode_many

try:
    from univcode import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [pytest.param(_pykernels, id="python"),
            pytest.param(_ckernels, id="cython",
                         marks=pytest.mark.skipif(_ckernels is None, reason="compiled core not built"))]


@pytest.mark.parametrize("impl", BACKENDS)
def test_logsumexp_affine_reference(impl):
    rng = np.random.default_rng(0)
    A = rng.normal(size=(50, 3)) * 5
    B = rng.normal(size=(200, 3))
    logw = np.log(rng.dirichlet(np.ones(200)))
    ref = logsumexp(A @ B.T + logw, axis=1)
    assert np.allclose(impl.logsumexp_affine(A, B, logw), ref, rtol=0, atol=1e-12)


@pytest.mark.parametrize("impl", BACKENDS)
def test_logsumexp_affine_neg_inf(impl):
    A = np.array([[1.0, 0.0], [0.0, 1.0]])
    B = np.array([[0.0, 2.0], [1.0, 3.0]])
    out = impl.logsumexp_affine(A, B, np.array([-np.inf, 0.0]))
    assert out == pytest.approx([1.0, 3.0], abs=1e-14)
    assert np.all(impl.logsumexp_affine(A, B, np.full(2, -np.inf)) == -np.inf)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(1, 60), st.integers(1, 4), st.integers(0, 2**31))
def test_backends_agree_logsumexp(S, N, k, seed):
    if _ckernels is None:
        return
    rng = np.random.default_rng(seed)
    A, B, logw = rng.normal(size=(S, k)) * 10, rng.normal(size=(N, k)), rng.normal(size=N)
    assert np.allclose(_pykernels.logsumexp_affine(A, B, logw), _ckernels.logsumexp_affine(A, B, logw),
                       rtol=0, atol=1e-12)


def _code(M, n, seed, R1):
    fam = make_dmc_family(3, 2)
    code = assemble_code(fam, CompositionType((n - n // 3 - n // 4, n // 3, n // 4)), RateParameters(R=0.1, R1=R1),
                         PriorSpec("dirichlet"), rng=np.random.default_rng(seed), M=M)
    return code


@pytest.mark.skipif(_ckernels is None, reason="compiled core not built")
@pytest.mark.parametrize("R1", [-0.2, 0.05, 0.3])
def test_backends_agree_decode(R1):
    code = _code(12, 7, 1, R1)
    ys = _all_outputs(3, 7)
    args = (code.codebook.words, ys) + code.decoder_tables() + (code.threshold,)
    a = _pykernels.first_match_decode(*args)
    b = _ckernels.first_match_decode(*args)
    assert np.array_equal(a, b)
    assert (a == -1).any() or R1 < 0


def test_active_backend_used(monkeypatch):
    code = _code(5, 6, 2, 0.05)
    ys = _all_outputs(3, 6)
    active = decode_many(code, ys)
    monkeypatch.setattr(kernels, "first_match_decode", _pykernels.first_match_decode)
    assert np.array_equal(decode_many(code, ys), active)


@pytest.mark.parametrize("value,expected", [("1", "python"), ("0", None)])
def test_env_selects_backend(value, expected):
    env = dict(os.environ, UNIVCODE_PURE_PYTHON=value)
    out = subprocess.run([sys.executable, "-c", "from univcode import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True).stdout.strip()
    if expected is None:
        expected = "cython" if _ckernels is not None else "python"
    assert out == expected
