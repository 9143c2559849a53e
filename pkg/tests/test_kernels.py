import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from culgen import _kernels_py, kernels
from oracles import softmax_row

try:
    from culgen import _kernels as _kernels_c
except ImportError:  # pragma: no cover
    _kernels_c = None

BACKENDS = [pytest.param(_kernels_py, id="python"),
            pytest.param(_kernels_c, id="cython",
                         marks=pytest.mark.skipif(_kernels_c is None, reason="extension not built"))]


def _oracle_forward(q, k, v, scale):
    out = np.zeros((q.shape[0], v.shape[1]))
    w = np.zeros((q.shape[0], k.shape[0]))
    for i in range(q.shape[0]):
        w[i] = softmax_row([float(q[i] @ k[j]) * scale for j in range(k.shape[0])])
        out[i] = sum(w[i, j] * v[j] for j in range(k.shape[0]))
    return out, w


@pytest.mark.parametrize("mod", BACKENDS)
@pytest.mark.parametrize("shape", [(1, 1, 1, 1), (3, 2, 4, 5), (6, 7, 3, 2), (9, 1, 8, 8)])
def test_forward_matches_oracle(mod, shape, rng):
    lq, lk, dk, dv = shape
    q, k, v = rng.normal(size=(lq, dk)), rng.normal(size=(lk, dk)), rng.normal(size=(lk, dv))
    out, w = mod.attention_forward(q, k, v, 0.7)
    ref_out, ref_w = _oracle_forward(q, k, v, 0.7)
    np.testing.assert_allclose(out, ref_out, atol=1e-12)
    np.testing.assert_allclose(w, ref_w, atol=1e-12)


@pytest.mark.parametrize("mod", BACKENDS)
def test_backward_matches_finite_differences(mod, rng):
    q, k, v = rng.normal(size=(3, 4)), rng.normal(size=(5, 4)), rng.normal(size=(5, 2))
    g = rng.normal(size=(3, 2))
    scale = 0.5

    def loss():
        return float(np.sum(mod.attention_forward(q, k, v, scale)[0] * g))

    _, w = mod.attention_forward(q, k, v, scale)
    grads = mod.attention_backward(g, w, q, k, v, scale)
    for arr, grad in zip((q, k, v), grads):
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + 1e-6
            fp = loss()
            arr[idx] = old - 1e-6
            fm = loss()
            arr[idx] = old
            assert abs((fp - fm) / 2e-6 - grad[idx]) < 1e-6


@pytest.mark.skipif(_kernels_c is None, reason="extension not built")
@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_backends_agree(lq, lk, d, seed):
    r = np.random.default_rng(seed)
    q, k, v, g = (r.normal(size=s) for s in ((lq, d), (lk, d), (lk, d), (lq, d)))
    out_c, w_c = _kernels_c.attention_forward(q, k, v, 0.3)
    out_p, w_p = _kernels_py.attention_forward(q, k, v, 0.3)
    np.testing.assert_allclose(out_c, out_p, atol=1e-12)
    for a, b in zip(_kernels_c.attention_backward(g, w_c, q, k, v, 0.3),
                    _kernels_py.attention_backward(g, w_p, q, k, v, 0.3)):
        np.testing.assert_allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("mod", BACKENDS)
def test_softmax_is_stable_for_large_scores(mod):
    q = np.array([[1000.0, 0.0]])
    k = np.array([[1.0, 0.0], [0.0, 1.0]])
    v = np.eye(2)
    out, w = mod.attention_forward(q, k, v, 1.0)
    assert np.all(np.isfinite(w))
    np.testing.assert_allclose(w, [[1.0, 0.0]])


def test_wrapper_accepts_non_contiguous_and_large_inputs(rng):
    big_q = rng.normal(size=(64, 32))
    k = rng.normal(size=(20, 32))
    out, w = kernels.attention_forward(big_q[:, ::1], k, k, 0.1)
    ref, _ = _kernels_py.attention_forward(big_q, k, k, 0.1)
    np.testing.assert_allclose(out, ref, atol=1e-12)
    q_t = np.asfortranarray(rng.normal(size=(3, 4)))
    out, _ = kernels.attention_forward(q_t, k[:5, :4], k[:5, :4], 0.5)
    ref, _ = _kernels_py.attention_forward(np.ascontiguousarray(q_t), k[:5, :4].copy(), k[:5, :4].copy(), 0.5)
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_forced_python_backend():
    code = "import culgen.kernels as k; print(k.BACKEND)"
    env = {**os.environ, "CULGEN_KERNELS": "python"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.mark.skipif(_kernels_c is None, reason="extension not built")
def test_default_backend_is_compiled_when_built():
    env = {k: v for k, v in os.environ.items() if k != "CULGEN_KERNELS"}
    out = subprocess.run([sys.executable, "-c", "from culgen import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "cython"


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        _kernels_py.attention_forward(np.ones((2, 3)), np.ones((2, 4)), np.ones((2, 4)), 1.0)
    if _kernels_c is not None:
        with pytest.raises(ValueError):
            _kernels_c.attention_forward(np.ones((2, 3)), np.ones((2, 4)), np.ones((2, 4)), 1.0)
