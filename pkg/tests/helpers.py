import numpy as np

ACCEPTANCE = []


def record(criterion, ok, detail):
    """Log one acceptance line; shown in the terminal summary and printed immediately."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def random_spins(rng, batch, n):
    return np.where(rng.random((batch, n)) < 0.5, 1, -1).astype(np.int8)


def table_fn(log_psi_all):
    """Batch callback reading log-amplitudes from a full basis table."""
    from vitqmc.hamiltonian import config_index
    lp = np.asarray(log_psi_all, dtype=np.float64)
    return lambda s: lp[config_index(np.atleast_2d(s))]


def ground_state_fn(solution):
    return table_fn(np.log(np.abs(solution.vector) + 1e-300))


def synthetic_scaling(J_c=1.0, nu=1.0, beta=0.125, sizes=(50, 100, 150), n_J=60, half_width=0.03,
                      noise=0.01, seed=0):
    """Records m2 = N^(-2 beta/nu) f(N^(1/nu)(J - J_c)), f(x) = 1/(1+x^2).

    Error bars are ``noise`` (1% when zero) of the clean value; noise is added only when
    ``noise`` is non-zero.
    """
    from vitqmc.fssa import ScalingDataset
    rng = np.random.default_rng(seed)
    N, J, v, e = [], [], [], []
    for n in sizes:
        Js = np.linspace(J_c - half_width, J_c + half_width, n_J)
        clean = n ** (-2 * beta / nu) / (1 + (n ** (1 / nu) * (Js - J_c)) ** 2)
        err = (noise or 0.01) * clean
        N += [n] * n_J
        J += list(Js)
        v += list(clean + (err * rng.standard_normal(n_J) if noise else 0))
        e += list(err)
    return ScalingDataset(np.array(N, float), np.array(J), np.array(v), np.array(e))
