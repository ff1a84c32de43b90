"""Compare the compiled kernels against the pure numpy/Python reference.

Run: python3 benchmarks/bench_kernels.py
"""
import time

import numpy as np

from emoctc import kernels
from emoctc.kernels import _impl


def timeit(fn, *args, repeat=50):
    fn(*args)  # warmup / JIT compile
    start = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - start) / repeat


def bench_ctc(rng, T=78, k=4):
    Y = rng.random((T, k + 1)) + 1e-3
    Y /= Y.sum(axis=1, keepdims=True)
    logy = np.log(Y)
    labels = np.array([0], dtype=np.int64)
    rows = []
    for name, fn in (("compiled", kernels.ctc_forward_backward),
                     ("numpy", _impl.ctc_forward_backward)):
        rows.append((f"ctc_forward_backward T={T}", name,
                     timeit(fn, logy, labels, k)))
    return rows


def bench_lstm(rng, T=78, D=34, H=64):
    x = rng.standard_normal((T, D))
    wx = rng.standard_normal((D, 4 * H)) * 0.05
    wh = rng.standard_normal((H, 4 * H)) * 0.05
    b = rng.standard_normal(4 * H) * 0.05
    rows = []
    for name, fwd, bwd in (("compiled", kernels.lstm_forward,
                            kernels.lstm_backward),
                           ("numpy", _impl.lstm_forward,
                            _impl.lstm_backward)):
        rows.append((f"lstm_forward T={T} H={H}", name,
                     timeit(fwd, x, wx, wh, b)))
        h, c, g = fwd(x, wx, wh, b)
        dh = rng.standard_normal(h.shape)
        rows.append((f"lstm_backward T={T} H={H}", name,
                     timeit(bwd, x, wx, wh, h, c, g, dh)))
    return rows


def main():
    print(f"compiled path active: {kernels.USING_NUMBA}")
    if not kernels.USING_NUMBA:
        print("(EMOCTC_NUMBA disabled or numba missing; 'compiled' rows "
              "below fall back to numpy)")
    rng = np.random.default_rng(0)
    rows = bench_ctc(rng) + bench_lstm(rng)
    by_kernel = {}
    for kernel, path, secs in rows:
        by_kernel.setdefault(kernel, {})[path] = secs
    width = max(len(k) for k in by_kernel)
    print(f"{'kernel':<{width}}  {'compiled':>10}  {'numpy':>10}  speedup")
    for kernel, paths in by_kernel.items():
        speedup = paths["numpy"] / paths["compiled"]
        print(f"{kernel:<{width}}  {paths['compiled']*1e3:>8.3f}ms  "
              f"{paths['numpy']*1e3:>8.3f}ms  {speedup:>6.1f}x")


if __name__ == "__main__":
    main()
