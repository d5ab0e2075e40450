"""End-to-end acceptance checks. Each test prints one PASS/FAIL line via ``record``."""
import json
import time

import numpy as np
import pytest
import scipy.special

from vitqmc import FFNN, RBM, ViT, OptimizerConfig, SamplerConfig, check_gradients, lr_ising, train
from vitqmc.cli import main
from vitqmc.exact import exact_m_squared, exact_renyi2, ground_state, variational_energy
from vitqmc.fssa import ScalingDataset, derived_critical_quantities, fit_critical
from vitqmc.hamiltonian import all_configurations, build_coupling, config_index, local_energies
from vitqmc.observables import renyi2_from_batch, v_score
from vitqmc.sampler import init_state, sample_batch

from helpers import ground_state_fn, random_spins, record, synthetic_scaling, table_fn

# learning-rate schedule that is stable at N=10 (see README)
DESK = dict(lr_initial=0.02, lr_peak=0.2)
TRAIN_POINTS = {-2.09: 300, 0.0: 150, 4.75: 300}


def test_criterion_1_gradients(rng):
    t0 = time.process_time()
    worst, pairs = 0.0, 0
    for n in (6, 10, 50):
        for ansatz in (ViT(n), RBM(n), FFNN(n, widths=(20, 10) if n == 50 else None)):
            for k in range(12):
                p = ansatz.init_params(int(rng.integers(1 << 30)))
                p = p.replace(p.values + 0.1 * rng.normal(size=p.values.shape))
                worst = max(worst, check_gradients(ansatz, p, random_spins(rng, 1, n)[0]))
                pairs += 1
    elapsed = time.process_time() - t0
    ok = worst < 1e-5 and pairs >= 100 and elapsed < 60
    record(1, ok, f"{pairs} pairs, max rel err {worst:.2e}, {elapsed:.1f}s")
    assert ok


@pytest.fixture(scope="module")
def trained():
    """ViT at N=10, alpha=2.5 for the three couplings, with exact references."""
    out = {}
    for J, iters in TRAIN_POINTS.items():
        model = lr_ising(10, 2.5, J)
        vit = ViT(10)
        t0 = time.process_time()
        res = train(model, vit, SamplerConfig(), OptimizerConfig(max_iter=iters, **DESK))
        elapsed = time.process_time() - t0
        e_var = variational_energy(model, vit.log_psi(res.params, all_configurations(10)))
        out[J] = dict(model=model, ansatz=vit, result=res, e_var=e_var, e0=ground_state(model).energy,
                      elapsed=elapsed, iterations=iters)
    return out


def test_criterion_2_energies(trained):
    lines, ok = [], True
    for J, r in trained.items():
        rel = abs(r["e_var"] - r["e0"]) / abs(r["e0"])
        ok &= rel <= 1e-3 and r["iterations"] <= 500 and r["elapsed"] < 600
        lines.append(f"J={J:g}: rel err {rel:.1e} ({r['iterations']} it, {r['elapsed']:.0f}s)")
    record(2, ok, "; ".join(lines))
    assert ok


def test_criterion_3_v_score(trained):
    model = lr_ising(10, 2.5, 4.75)
    sol = ground_state(model)
    exact = v_score(local_energies(model, all_configurations(10), ground_state_fn(sol)), 10)
    final = {J: float(np.median([row["v_score"] for row in r["result"].trace[-20:]])) for J, r in trained.items()}
    # same fluctuations measured against the energy without the constant J b N / N~ term;
    # diagnostic only, the criterion uses the energy as reported
    shifted = {J: float(np.median([10 * row["variance"] / (row["energy"] - r["model"].self_energy) ** 2
                                   for row in r["result"].trace[-20:]])) for J, r in trained.items()}
    ok = exact < 1e-10 and all(v <= 1e-3 for v in final.values())
    record(3, ok, f"eigenstate {exact:.1e}; trained (median of last 20) "
           + ", ".join(f"J={J:g}: {final[J]:.1e} [{shifted[J]:.1e} without constant]" for J in final))
    assert ok


def test_criterion_4_renyi():
    t0 = time.process_time()
    lines, ok = [], True
    cfg = SamplerConfig(n_chains=512, samples_per_iteration=512 * 64, seed=11)
    for J in (0.0, -10.0, -2.1):
        sol = ground_state(lr_ising(8, 2.5, J))
        fn = ground_state_fn(sol)
        spins, _ = sample_batch(init_state(cfg, 8, fn), fn, cfg)
        est = renyi2_from_batch(fn, spins, n_chains=cfg.n_chains)
        exact = exact_renyi2(sol.vector, 8)
        sigma = max(est.stderr, 1e-12)
        ok &= abs(est.s2 - exact) <= 3 * sigma
        lines.append(f"J={J:g}: {est.s2:.4f}+-{est.stderr:.4f} vs {exact:.4f}")
    elapsed = time.process_time() - t0
    ok &= elapsed < 300
    record(4, ok, "; ".join(lines))
    assert ok


def test_criterion_5_sampler(rng):
    lp = rng.normal(size=16)
    target = np.exp(2 * lp)
    target /= target.sum()
    cfg = SamplerConfig(n_chains=1000, samples_per_iteration=1000 * 1000, burn_in=20, sweep=1, seed=5)
    state = init_state(cfg, 4, table_fn(lp))
    spins, _ = sample_batch(state, table_fn(lp), cfg)
    freq = np.bincount(config_index(spins), minlength=16) / spins.shape[0]
    tv = 0.5 * np.abs(freq - target).sum()
    n_loc, n_glob = state.proposed
    p = n_glob / (n_loc + n_glob)
    ratio, sigma = n_loc / n_glob, np.sqrt(p * (1 - p) / (n_loc + n_glob)) / p ** 2
    ok = tv < 0.01 and abs(ratio - 3.0) <= 3 * sigma and min(state.accepted) > 0
    record(5, ok, f"TV {tv:.4f} over {spins.shape[0]} steps; local:global {ratio:.4f} (3 +- {sigma:.4f})")
    assert ok


def test_criterion_6_kac_table():
    kac = build_coupling(6.0, 1.0, b=1.0, N=100001).kac_factor
    fm = derived_critical_quantities(-2.963, kac)["h_tilde_c"]
    afm = derived_critical_quantities(3.143, kac)["h_tilde_c"]
    ok = abs(fm / 1.0242 - 1) < 5e-3 and abs(afm / 0.9655 - 1) < 5e-3
    record(6, ok, f"N~={kac:.4f} (1+2 zeta(6) = {1 + 2 * scipy.special.zeta(6):.4f}); "
           f"h~_c FM {fm:.4f}, AFM {afm:.4f}")
    assert ok


def test_criterion_7_fssa_synthetic():
    t0 = time.process_time()
    dev = []
    for seed in range(10):
        fit = fit_critical(synthetic_scaling(seed=seed), (1.01, 1.2, 0.1))
        dev.append((abs(fit.J_c - 1.0), abs(fit.nu - 1.0), abs(fit.beta / 0.125 - 1)))
    dev = np.array(dev).max(axis=0)
    elapsed = time.process_time() - t0
    ok = dev[0] < 0.01 and dev[1] < 0.05 and dev[2] < 0.05 and elapsed < 60
    record(7, ok, f"worst of 10: |dJ_c| {dev[0]:.1e}, nu {dev[1]:.1%}, beta {dev[2]:.1%}; {elapsed:.1f}s")
    assert ok


def test_criterion_8_fssa_exact():
    rows = []
    for n in (8, 10, 12):
        for J in np.linspace(2.0, 4.5, 26):
            m2 = exact_m_squared(ground_state(lr_ising(n, 6.0, J)), np.pi)
            rows.append((n, J, m2, 0.01 * m2))
    data = ScalingDataset.from_records(rows)
    fit = fit_critical(data, (3.0, 1.0, 0.125), window=(2.5, 4.0))
    ok = abs(fit.J_c / 3.143 - 1) <= 0.15 and 0.6 <= fit.nu <= 1.6
    record(8, ok, f"J_c {fit.J_c:.3f} ({abs(fit.J_c / 3.143 - 1):.1%} from 3.143), nu {fit.nu:.3f}, "
           f"beta {fit.beta:.3f}, quality {fit.quality:.3f}")
    assert ok


def test_criterion_9_symmetries(rng):
    worst_vit = 0.0
    for n in (10, 50):
        vit = ViT(n)
        d = vit.hyper.token_dim
        p = vit.init_params(3)
        s = random_spins(rng, 16, n)
        base = vit.log_psi(p, s)
        for t in range(1, vit.hyper.n_tokens):
            worst_vit = max(worst_vit, np.abs(vit.log_psi(p, np.roll(s, t * d, axis=1)) - base).max())
    worst_diag = 0.0
    for alpha in (0.5, 2.5, 6.0):
        model = lr_ising(13, alpha, 1.3)
        s = random_spins(rng, 32, 13)
        e = model.diagonal_energies(s)
        scale = np.abs(e).max()
        for t in range(13):
            worst_diag = max(worst_diag, np.abs(model.diagonal_energies(np.roll(s, t, axis=1)) - e).max() / scale)
        worst_diag = max(worst_diag, np.abs(model.diagonal_energies(-s) - e).max() / scale)
    ok = worst_vit < 1e-12 and worst_diag < 1e-13
    record(9, ok, f"ViT token-shift max |d log psi| {worst_vit:.1e}; diagonal energy shift/flip {worst_diag:.1e}")
    assert ok


def test_criterion_10_determinism():
    def run():
        model = lr_ising(10, 2.5, -2.09)
        cfg = SamplerConfig(n_chains=128, samples_per_iteration=1024, seed=9)
        res = train(model, ViT(10), cfg, OptimizerConfig(max_iter=8, **DESK), param_seed=4)
        return [row["energy"] for row in res.trace], res.params.values
    (ta, pa), (tb, pb) = run(), run()
    ok = ta == tb and np.array_equal(pa, pb)
    record(10, ok, f"{len(ta)} iterations, traces {'identical' if ta == tb else 'differ'}")
    assert ok


def test_criterion_11_compare(tmp_path):
    budget = 2.0
    out = tmp_path / "compare"
    t0 = time.process_time()
    code = main(["compare", "--out", str(out), "--J-grid=-3.0:1.5:0.5", "--budget", str(budget),
                 "--set", "model.N=50", "--set", "model.alpha=2.5",
                 "--set", "sampler.n_chains=64", "--set", "sampler.samples_per_iteration=256",
                 "--set", "sampler.burn_in=50", "--set", "sampler.sweep=10",
                 "--set", "optimizer.lr_initial=0.02", "--set", "optimizer.lr_peak=0.2"])
    elapsed = time.process_time() - t0
    summary = json.loads((out / "compare_summary.json").read_text())
    import csv
    with open(out / "compare.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    counts = summary["parameter_counts"]
    per_point = max(float(r["elapsed"]) for r in rows if r["status"] == "ok")
    ok = (code == 0 and len(rows) == 40 and all(r["status"] == "ok" for r in rows)
          and counts["rbm1"] == 5100 and counts["vit"] == sum(summary["vit_breakdown"].values())
          and per_point <= 1.5 * budget and (out / "compare_vscore.svg").exists())
    better = sum(summary["vit_lower_v_score_than_every_rbm"].values())
    record(11, ok, f"40 runs in {elapsed:.0f}s (budget {budget}s each, slowest {per_point:.1f}s); "
           f"counts {counts} vs reference ViT 1133; ViT best at {better}/10 J points")
    assert ok
