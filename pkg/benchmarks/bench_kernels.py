"""Time the numba kernels against their numpy counterparts.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both versions live side by side in ``vitqmc.kernels`` (``*_nb`` / ``*_np``), so one
process can compare them; outputs are also checked for agreement.
"""
import argparse
import time

import numpy as np

from vitqmc import kernels
from vitqmc._accel import NUMBA_ENABLED
from vitqmc.hamiltonian import all_configurations, lr_ising


def best_of(fn, repeat):
    fn()  # warm-up (and JIT compilation)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    chains = np.arange(4096)
    model = lr_ising(50, 2.5, -2.09)
    spins = np.where(rng.random((4096, 50)) < 0.5, 1, -1).astype(np.int8)
    row = model.coupling.coupling_row
    n_ed = 14
    diag = lr_ising(n_ed, 2.5, -2.09).diagonal_energies(all_configurations(n_ed))
    v = rng.standard_normal(2 ** n_ed)
    sizes = (50, 100, 150)
    x = np.concatenate([np.sort(rng.uniform(-3, 3, 200)) for _ in sizes])
    y = 1.0 / (1.0 + x ** 2)
    dy = np.full_like(x, 0.01)
    starts = np.array([0, 200, 400, 600])
    yield ("counter_uniforms 4096x3", lambda k: k.counter_uniforms_nb(7, chains, 11, 3),
           lambda k: k.counter_uniforms_np(7, chains, 11, 3))
    yield ("pair_energies 4096xN=50", lambda k: k.pair_energies_nb(spins, row),
           lambda k: k.pair_energies_np(spins, row))
    yield ("tfim_matvec N=14", lambda k: k.tfim_matvec_nb(diag, 1.0, n_ed, v),
           lambda k: k.tfim_matvec_np(diag, 1.0, n_ed, v))
    yield ("autoscale_quality 3x200", lambda k: k.autoscale_quality_nb(x, y, dy, starts, 1e-12),
           lambda k: k.autoscale_quality_np(x, y, dy, starts, 1e-12))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if not NUMBA_ENABLED:
        print("numba disabled (VITQMC_DISABLE_NUMBA set or numba missing); both columns use numpy")
    print(f"{'kernel':28s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speed-up':>9s}  agree")
    for name, nb, np_ in cases():
        a, b = nb(kernels), np_(kernels)
        agree = all(np.allclose(u, w, rtol=1e-12, atol=1e-12) for u, w in zip(np.atleast_1d(a), np.atleast_1d(b))) \
            if isinstance(a, tuple) else np.allclose(a, b, rtol=1e-12, atol=1e-12)
        t_nb = best_of(lambda: nb(kernels), args.repeat)
        t_np = best_of(lambda: np_(kernels), args.repeat)
        print(f"{name:28s} {1e3 * t_nb:11.3f} {1e3 * t_np:11.3f} {t_np / t_nb:9.1f}  {agree}")


if __name__ == "__main__":
    main()
