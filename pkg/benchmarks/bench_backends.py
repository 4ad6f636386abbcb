"""Compare the compiled and NumPy correlation backends.

Times the two primitives on three representative workloads:

* dense stride-1 correlation on a 32^3 volume (texture training extraction),
* strided (2) correlation of a 64^3 volume with 9^3 kernels (nodule-scale),
* single-voxel projection with a large kernel (toy-experiment analysis).

Run from the repository root:

    python benchmarks/bench_backends.py
"""

import time

import numpy as np

from solidsph import _conv_numpy, conv


def timeit(fn, repeats):
    fn()  # warm-up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats * 1e3


def bench_case(name, vol, kernels, repeats, runner):
    kmat = _conv_numpy._kernel_matrix(kernels)
    rows = []
    rows.append(("numpy", timeit(lambda: runner("numpy", vol, kernels, kmat),
                                 repeats)))
    if conv._conv_core is not None:
        rows.append(("compiled", timeit(
            lambda: runner("compiled", vol, kernels, kmat), repeats)))
    print(f"\n{name}")
    for backend, ms in rows:
        print(f"  {backend:9s} {ms:9.2f} ms")
    if len(rows) == 2:
        print(f"  ratio numpy/compiled = {rows[0][1] / rows[1][1]:.2f}")


def run_correlate(stride):
    def runner(backend, vol, kernels, kmat):
        if backend == "numpy":
            _conv_numpy.correlate3d(vol, kernels, stride, True)
        else:
            conv._conv_core.correlate3d_kmat(vol, kmat, kernels.shape[1],
                                             kernels.shape[0], stride, True)
    return runner


def run_project(positions):
    def runner(backend, vol, kernels, kmat):
        if backend == "numpy":
            _conv_numpy.project_at_voxels(vol, kernels, positions)
        else:
            conv._conv_core.project_at_voxels_kmat(
                vol, kmat, kernels.shape[1], kernels.shape[0],
                positions.astype(np.intp))
    return runner


def main():
    rng = np.random.default_rng(0)
    print(f"backend policy: {conv.POLICY} "
          f"(compiled core {'present' if conv._conv_core else 'missing'})")
    print(f"auto routing: correlate -> {conv.backend_for('correlate')}, "
          f"project -> {conv.backend_for('project')}")

    vol32 = rng.standard_normal((32, 32, 32))
    k7 = rng.standard_normal((36, 7, 7, 7)) + 1j * rng.standard_normal((36, 7, 7, 7))
    bench_case("dense correlate: 32^3 volume, 36 complex 7^3 kernels, stride 1",
               vol32, k7, 5, run_correlate(1))

    vol64 = rng.standard_normal((64, 64, 64))
    k9 = rng.standard_normal((120, 9, 9, 9)) + 1j * rng.standard_normal((120, 9, 9, 9))
    bench_case("strided correlate: 64^3 volume, 120 complex 9^3 kernels, stride 2",
               vol64, k9, 2, run_correlate(2))

    k33 = rng.standard_normal((10, 33, 33, 33)) + 1j * rng.standard_normal((10, 33, 33, 33))
    center = np.array([[16, 16, 16]])
    bench_case("center projection: 32^3 volume, 10 complex 33^3 kernels, 1 voxel",
               vol32, k33, 20, run_project(center))


if __name__ == "__main__":
    main()
