"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--samples 2048]

Kernel shapes are those of a LeNet minibatch of 64 on 28x28 inputs. The
last rows time one training epoch on random data with each backend.
"""
import argparse
import time

import numpy as np

from subbandnet import cnn, kernels
from subbandnet.data import Dataset


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_cases(rng):
    x1 = rng.standard_normal((64, 1, 28, 28)).astype(np.float32)
    x2 = rng.standard_normal((64, 20, 12, 12)).astype(np.float32)
    cols2 = kernels.im2col(x2, 5)
    p1 = rng.standard_normal((64, 20, 24, 24)).astype(np.float32)
    pooled, arg = kernels.maxpool_forward(p1)
    dy = rng.standard_normal(pooled.shape).astype(np.float32)
    return {
        "im2col conv1": lambda: kernels.im2col(x1, 5),
        "im2col conv2": lambda: kernels.im2col(x2, 5),
        "col2im conv2": lambda: kernels.col2im(cols2, x2.shape, 5),
        "maxpool forward": lambda: kernels.maxpool_forward(p1),
        "maxpool backward": lambda: kernels.maxpool_backward(dy, arg, p1.shape),
    }


def epoch_case(samples):
    rng = np.random.default_rng(0)
    ds = Dataset(rng.random((samples, 1, 28, 28), dtype=np.float32), rng.integers(0, 10, samples))

    def run():
        net = cnn.build_lenet((1, 28, 28), rng=np.random.default_rng(1))
        cnn.train_epoch(net, ds, cnn.TrainConfig(epochs=1), np.random.default_rng(2))
    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--samples", type=int, default=2048, help="training samples in the epoch timing")
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; timing the python backend only")
    timings = {}
    for name in backends:
        kernels.set_backend(name)
        cases = kernel_cases(np.random.default_rng(0))
        for label, fn in cases.items():
            timings[label, name] = best_of(fn, args.repeat)
        timings[f"train epoch ({args.samples} samples)", name] = best_of(epoch_case(args.samples), 1)

    labels = list(dict.fromkeys(label for label, _ in timings))
    print(f"{'case':32s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for label in labels:
        row = [timings[label, b] for b in backends]
        line = f"{label:32s}" + "".join(f"{1e3 * t:10.2f}ms" for t in row)
        if len(backends) > 1:
            line += f"{timings[label, 'python'] / timings[label, 'compiled']:11.2f}x"
        print(line)


if __name__ == "__main__":
    main()
