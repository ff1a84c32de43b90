"""The compiled kernels and the plain-python reference must agree
within tight float64 tolerance (transcendental functions may differ
in the last bits between the two paths); the reference (emoctc.kernels._impl) is always importable
regardless of the EMOCTC_NUMBA flag."""
import subprocess
import sys

import numpy as np
import pytest

from emoctc import kernels
from emoctc.kernels import _impl


def rand_lstm_args(rng, T=12, D=6, H=5):
    x = rng.standard_normal((T, D))
    wx = rng.standard_normal((D, 4 * H)) * 0.1
    wh = rng.standard_normal((H, 4 * H)) * 0.1
    b = rng.standard_normal(4 * H) * 0.1
    return x, wx, wh, b


def test_lstm_forward_paths_identical():
    rng = np.random.default_rng(0)
    args = rand_lstm_args(rng)
    h1, c1, g1 = kernels.lstm_forward(*args)
    h2, c2, g2 = _impl.lstm_forward(*args)
    np.testing.assert_allclose(h1, h2, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(c1, c2, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-15)


def test_lstm_backward_paths_identical():
    rng = np.random.default_rng(1)
    x, wx, wh, b = rand_lstm_args(rng)
    h, c, g = _impl.lstm_forward(x, wx, wh, b)
    dh = rng.standard_normal(h.shape)
    out1 = kernels.lstm_backward(x, wx, wh, h, c, g, dh)
    out2 = _impl.lstm_backward(x, wx, wh, h, c, g, dh)
    for a, b_ in zip(out1, out2):
        np.testing.assert_allclose(a, b_, rtol=1e-12, atol=1e-15)


def test_ctc_kernel_paths_identical():
    rng = np.random.default_rng(2)
    for _ in range(10):
        T, k = int(rng.integers(2, 9)), 3
        Y = rng.random((T, k + 1)) + 1e-3
        Y /= Y.sum(axis=1, keepdims=True)
        logy = np.log(Y)
        labels = np.array([0, 1], dtype=np.int64)
        lp1, g1 = kernels.ctc_forward_backward(logy, labels, k)
        lp2, g2 = _impl.ctc_forward_backward(logy, labels, k)
        assert lp1 == pytest.approx(lp2, rel=1e-12)
        np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-15)


@pytest.mark.skipif(not kernels.USING_NUMBA,
                    reason="compiled path not active")
def test_env_flag_selects_numpy_fallback():
    code = ("import emoctc.kernels as k; "
            "import sys; sys.exit(0 if not k.USING_NUMBA else 1)")
    proc = subprocess.run(
        [sys.executable, "-c", code],
        env={"PATH": "/usr/bin:/bin", "EMOCTC_NUMBA": "0"},
        capture_output=True)
    assert proc.returncode == 0, proc.stderr.decode()
