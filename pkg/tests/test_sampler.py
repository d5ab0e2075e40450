import csv

import numpy as np
import pytest

from vitqmc.exact import ground_state
from vitqmc.hamiltonian import NonFiniteAmplitudeError, all_configurations, config_index, local_energies, lr_ising
from vitqmc.observables import staggered_magnetization
from vitqmc.sampler import (AcceptanceLog, SamplerConfig, SamplerState, check_cached_log_psi, init_state,
                            metropolis_step, propose_global_inversion, propose_local_flip, sample_batch)

from helpers import ground_state_fn, table_fn


def uniform(s):
    return np.zeros(np.atleast_2d(s).shape[0])


def test_config_validation():
    with pytest.raises(ValueError, match="multiple"):
        SamplerConfig(n_chains=3, samples_per_iteration=10)
    with pytest.raises(ValueError):
        SamplerConfig(local_weight=0)
    c = SamplerConfig()
    assert (c.n_chains, c.samples_per_iteration) == (1024, 4096)
    assert c.global_probability == 0.25
    assert c.burn_in_steps(8) == 80 and c.sweep_steps(8) == 8


def test_local_flip_examples(rng):
    assert np.array_equal(propose_local_flip(np.array([[1]]), np.array([0.3])), [[-1]])
    s = np.where(rng.random((500, 10)) < 0.5, 1, -1)
    cand = propose_local_flip(s, rng.random(500))
    assert np.all((cand != s).sum(axis=1) == 1)


def test_local_flip_site_frequencies():
    from vitqmc.kernels import counter_uniforms
    u = counter_uniforms(5, np.arange(100000), 1, 1)[:, 0]
    s = np.ones((100000, 10), dtype=np.int8)
    sites = np.argmax(propose_local_flip(s, u) != s, axis=1)
    freq = np.bincount(sites, minlength=10) / sites.size
    sigma = np.sqrt(0.1 * 0.9 / sites.size)
    assert np.all(np.abs(freq - 0.1) < 3.5 * sigma)


def test_global_inversion_examples():
    neel = np.array([[1, -1, 1, -1]])
    assert np.array_equal(propose_global_inversion(neel), -neel)
    assert np.array_equal(propose_global_inversion(propose_global_inversion(neel)), neel)
    assert staggered_magnetization(-neel, np.pi) == -staggered_magnetization(neel, np.pi)


def test_uniform_psi_accepts_everything():
    cfg = SamplerConfig(n_chains=16, samples_per_iteration=16, seed=2)
    st = init_state(cfg, 5, uniform)
    for _ in range(50):
        metropolis_step(st, uniform, cfg)
    assert np.array_equal(st.accepted, st.proposed)


def test_vanishing_amplitude_is_never_entered():
    # psi(all up) = 0: chains that are not there never move there
    def fn(s):
        s = np.atleast_2d(s)
        return np.where(np.all(s == 1, axis=1), -np.inf, 0.0)

    cfg = SamplerConfig(n_chains=32, samples_per_iteration=32, burn_in=0, seed=1)
    st = init_state(cfg, 3, lambda s: np.zeros(np.atleast_2d(s).shape[0]))
    st.spins[:] = -1
    st.log_psi = fn(st.spins)
    for _ in range(200):
        metropolis_step(st, fn, cfg)
        assert not np.any(np.all(st.spins == 1, axis=1))
    assert st.rejected_nonfinite > 0


def test_two_spin_visit_frequencies():
    lp = np.log(np.sqrt(np.array([0.1, 0.2, 0.3, 0.4])))
    fn = table_fn(lp)
    cfg = SamplerConfig(n_chains=1000, samples_per_iteration=1000 * 500, sweep=2, seed=3)
    st = init_state(cfg, 2, fn)
    spins, _ = sample_batch(st, fn, cfg)
    counts = np.bincount(config_index(spins), minlength=4)
    p = counts / counts.sum()
    exact = np.array([0.1, 0.2, 0.3, 0.4])
    # chain samples are correlated; inflate the binomial sigma modestly
    sigma = np.sqrt(exact * (1 - exact) / counts.sum()) * 2.0
    assert np.all(np.abs(p - exact) < 3 * sigma)


def test_exact_ground_state_gives_zero_variance():
    m = lr_ising(8, 2.5, -1.0)
    sol = ground_state(m)
    fn = ground_state_fn(sol)
    cfg = SamplerConfig(n_chains=64, samples_per_iteration=256, seed=4)
    st = init_state(cfg, 8, fn)
    spins, lps = sample_batch(st, fn, cfg)
    e = local_energies(m, spins, fn, lps)
    assert np.allclose(e, sol.energy, atol=1e-8)
    assert np.ones(len(spins)).mean() == 1.0


def test_uniform_state_m2_at_n4():
    cfg = SamplerConfig(n_chains=512, samples_per_iteration=512 * 40, seed=5)
    st = init_state(cfg, 4, uniform)
    spins, _ = sample_batch(st, uniform, cfg)
    m2 = staggered_magnetization(spins, 0.0) ** 2
    exact = np.mean(staggered_magnetization(all_configurations(4), 0.0) ** 2)
    assert exact == pytest.approx(0.25)
    assert abs(m2.mean() - exact) < 3 * m2.std() / np.sqrt(m2.size) * 1.5


def test_streams_independent_of_chain_grouping(rng):
    lp = rng.normal(size=2 ** 6)
    fn = table_fn(lp)
    cfg = SamplerConfig(n_chains=8, samples_per_iteration=32, seed=9)
    full = init_state(cfg, 6, fn)
    a, _ = sample_batch(full, fn, cfg)
    a = a.reshape(-1, 8, 6)
    for ids in (np.arange(0, 4), np.arange(4, 8), np.array([6, 1])):
        sub_cfg = SamplerConfig(n_chains=len(ids), samples_per_iteration=4 * len(ids), seed=9)
        part = init_state(sub_cfg, 6, fn, chain_ids=ids)
        b, _ = sample_batch(part, fn, sub_cfg, chain_ids=ids)
        assert np.array_equal(b.reshape(-1, len(ids), 6), a[:, ids])


def test_same_seed_same_stream_and_cache_consistency(rng):
    fn = table_fn(rng.normal(size=2 ** 5))
    cfg = SamplerConfig(n_chains=16, samples_per_iteration=64, seed=11)
    s1, l1 = sample_batch(init_state(cfg, 5, fn), fn, cfg)
    st = init_state(cfg, 5, fn)
    s2, l2 = sample_batch(st, fn, cfg)
    assert np.array_equal(s1, s2) and np.array_equal(l1, l2)
    assert check_cached_log_psi(st, fn)


def test_state_roundtrip_and_counters():
    st = SamplerState(np.ones((2, 3), dtype=np.int8), np.zeros(2))
    st.proposed[:] = [3, 1]
    st.accepted[:] = [1, 1]
    assert st.acceptance() == {"local": pytest.approx(1 / 3), "global": 1.0}
    back = SamplerState.from_arrays(st.to_arrays())
    assert np.array_equal(back.spins, st.spins) and back.step == st.step
    st.reset_counters()
    assert np.isnan(st.acceptance()["local"])


def test_nonfinite_initial_amplitude_names_chain():
    cfg = SamplerConfig(n_chains=4, samples_per_iteration=4)
    with pytest.raises(NonFiniteAmplitudeError, match="chain 0"):
        init_state(cfg, 3, lambda s: np.full(np.atleast_2d(s).shape[0], np.nan))


def test_acceptance_log(tmp_path):
    cfg = SamplerConfig(n_chains=8, samples_per_iteration=8)
    st = init_state(cfg, 4, uniform)
    metropolis_step(st, uniform, cfg)
    log = AcceptanceLog(tmp_path / "acc.csv")
    log.record(0, st)
    AcceptanceLog(tmp_path / "acc.csv", append=True).record(1, st)
    rows = list(csv.DictReader(open(tmp_path / "acc.csv")))
    assert [r["move_type"] for r in rows] == ["local", "global"] * 2
    assert sum(int(r["proposed"]) for r in rows[:2]) == 8
