"""Monte Carlo estimators: staggered magnetisation, Renyi-2 entropy (swap trick), V-score."""
from dataclasses import dataclass

import numpy as np

LN2 = np.log(2.0)


@dataclass
class MagnetizationResult:
    q: float
    m2_mean: float
    stderr: float


@dataclass
class RenyiResult:
    n_a: int
    s2: float
    stderr: float
    swap_mean: float
    undersampled: bool = False


def order_wavevector(J):
    """q = 0 for ferromagnetic (J < 0), pi for antiferromagnetic couplings."""
    return 0.0 if J <= 0 else np.pi


def phase_factors(n, q):
    if q == 0:
        return np.ones(n)
    if np.isclose(q, np.pi):
        return (-1.0) ** np.arange(n)
    raise ValueError(f"only q = 0 or q = pi are supported, got {q}")


def staggered_magnetization(s, q):
    """(1/N) sum_j s_j cos(q j), sites numbered from 0; works on batches."""
    s = np.asarray(s, dtype=np.float64)
    return s @ phase_factors(s.shape[-1], q) / s.shape[-1]


def batch_stderr(values, n_blocks=32):
    """Standard error of the mean from contiguous block averages."""
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if n < 2:
        return float("nan")
    k = min(n_blocks, n)
    blocks = np.array([b.mean() for b in np.array_split(values, k)])
    return float(blocks.std(ddof=1) / np.sqrt(k))


def chain_stderr(values, n_chains):
    """Standard error using per-chain means; ``values`` ordered [round][chain]."""
    values = np.asarray(values, dtype=np.float64)
    if n_chains < 2 or values.shape[0] % n_chains:
        return batch_stderr(values)
    per_chain = values.reshape(-1, n_chains).mean(axis=0)
    return float(per_chain.std(ddof=1) / np.sqrt(n_chains))


def m_squared_estimator(samples, q, n_chains=None):
    samples = np.atleast_2d(samples)
    if samples.shape[0] < 2:
        raise ValueError("need at least two samples")
    m2 = staggered_magnetization(samples, q) ** 2
    err = chain_stderr(m2, n_chains) if n_chains else batch_stderr(m2)
    return MagnetizationResult(float(q), float(m2.mean()), err)


def swap_ratios(log_psi_fn, first, second, n_a=None):
    """Amplitude cross-ratio psi(a, b') psi(a', b) / (psi(a, b) psi(a', b')) per pair."""
    first = np.atleast_2d(first)
    second = np.atleast_2d(second)
    if first.shape != second.shape:
        raise ValueError(f"sample streams differ in shape: {first.shape} vs {second.shape}")
    n = first.shape[1]
    n_a = n // 2 if n_a is None else n_a
    mixed1 = np.concatenate([first[:, :n_a], second[:, n_a:]], axis=1)
    mixed2 = np.concatenate([second[:, :n_a], first[:, n_a:]], axis=1)
    lp = log_psi_fn(np.concatenate([mixed1, mixed2, first, second]))
    m = first.shape[0]
    with np.errstate(invalid="ignore"):   # -inf - -inf marks an unvisited pair
        log_ratio = lp[:m] + lp[m:2 * m] - lp[2 * m:3 * m] - lp[3 * m:]
    return np.exp(log_ratio)


def renyi2_swap_estimator(log_psi_fn, first, second, n_a=None):
    """S_2 = -log2 <swap> from two independent |psi|^2 sample streams, paired row by row."""
    first = np.atleast_2d(first)
    ratios = swap_ratios(log_psi_fn, first, second, n_a)
    n_a = first.shape[1] // 2 if n_a is None else n_a
    mean = float(ratios.mean())
    err = batch_stderr(ratios)
    if not mean > 0:
        return RenyiResult(n_a, float("nan"), float("nan"), mean, undersampled=True)
    return RenyiResult(n_a, float(-np.log(mean) / LN2), float(err / (mean * LN2)), mean)


def renyi2_from_batch(log_psi_fn, samples, n_a=None, n_chains=None):
    """Swap estimate from one batch split into two replicas.

    With ``n_chains`` (samples ordered [round][chain]) the first half of the chains is
    paired with the second half within each round, so the replicas never share a chain.
    Otherwise sample k is paired with sample k + M/2.
    """
    samples = np.atleast_2d(samples)
    if n_chains and n_chains >= 2 and samples.shape[0] % n_chains == 0:
        h = n_chains // 2
        rounds = samples.reshape(-1, n_chains, samples.shape[1])
        first = rounds[:, :h].reshape(-1, samples.shape[1])
        second = rounds[:, h:2 * h].reshape(-1, samples.shape[1])
        return renyi2_swap_estimator(log_psi_fn, first, second, n_a)
    half = samples.shape[0] // 2
    return renyi2_swap_estimator(log_psi_fn, samples[:half], samples[half:2 * half], n_a)


def exact_renyi2_of_ansatz(log_psi_all, n_sites, n_a=None):
    """Renyi-2 of an ansatz by exhaustive summation over all 2^N amplitudes."""
    from .exact import exact_renyi2

    lp = np.asarray(log_psi_all, dtype=np.float64)
    return exact_renyi2(np.exp(lp - lp.max()), n_sites, n_a)


def v_score(local_energies, n_sites, rel_tol=1e-12):
    """N Var(E_loc) / <E_loc>^2; NaN when the mean energy is indistinguishable from zero."""
    e = np.asarray(local_energies, dtype=np.float64)
    mean = e.mean()
    noise = e.std() / np.sqrt(e.shape[0])
    if abs(mean) <= max(noise, rel_tol * np.abs(e).max(initial=0.0)):
        return float("nan")
    return float(n_sites * e.var() / mean ** 2)


def measure(model, ansatz, params, sampler_config, state=None, partition=None):
    """Sample one batch from a trained ansatz and evaluate energy, <m^2>, S_2 and V-score.

    ``state`` (a SamplerState) is continued in place when given, otherwise fresh chains
    are burned in.
    """
    from .hamiltonian import local_energies
    from .sampler import init_state, sample_batch

    fn = ansatz.batch_fn(params)
    if state is None:
        state = init_state(sampler_config, model.n_sites, fn)
    else:
        state.log_psi = np.asarray(fn(state.spins), dtype=np.float64)
    spins, lps = sample_batch(state, fn, sampler_config)
    eloc = local_energies(model, spins, fn, lps)
    q = order_wavevector(model.coupling.coupling_strength)
    m2 = m_squared_estimator(spins, q, sampler_config.n_chains)
    out = {
        "energy": float(eloc.mean()),
        "energy_err": chain_stderr(eloc, sampler_config.n_chains),
        "v_score": v_score(eloc, model.n_sites),
        "q": q,
        "m2": m2.m2_mean,
        "m2_err": m2.stderr,
    }
    if model.n_sites >= 2:
        s2 = renyi2_from_batch(fn, spins, partition, sampler_config.n_chains)
        out.update(renyi2=s2.s2, renyi2_err=s2.stderr, renyi2_partition=s2.n_a,
                   renyi2_undersampled=s2.undersampled)
    return out
