"""Kernel dispatch: numba-compiled versions of the hot loops by default,
pure numpy/Python fallback when EMOCTC_NUMBA is set to 0/false/off or
numba is unavailable.  benchmarks/bench_kernels.py compares the two paths.
"""
import os

from . import _impl


def _numba_enabled():
    flag = os.environ.get("EMOCTC_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off"):
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USING_NUMBA = _numba_enabled()

if USING_NUMBA:
    from numba import njit

    ctc_forward_backward = njit(cache=True)(_impl.ctc_forward_backward)
    lstm_forward = njit(cache=True)(_impl.lstm_forward)
    lstm_backward = njit(cache=True)(_impl.lstm_backward)
else:
    ctc_forward_backward = _impl.ctc_forward_backward
    lstm_forward = _impl.lstm_forward
    lstm_backward = _impl.lstm_backward

__all__ = [
    "USING_NUMBA",
    "ctc_forward_backward",
    "lstm_forward",
    "lstm_backward",
]
