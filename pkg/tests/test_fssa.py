import numpy as np
import pytest
import scipy.signal

from vitqmc.fssa import (CollapseError, ScalingDataset, collapse_quality, derived_critical_quantities,
                         fit_critical, inverse_transform, read_dataset, savitzky_golay, scale_transform,
                         write_dataset)

from helpers import synthetic_scaling


def test_scale_transform_examples():
    assert scale_transform(100, 1.1, 0.5, 1.0, 1.0, 0.0) == pytest.approx((10.0, 0.5))
    x, y = scale_transform(16, 2.0, 0.25, 2.0, 2.0, 0.5)
    assert x == 0.0 and y == pytest.approx(0.25 * 16 ** 0.5)
    x, y = scale_transform(np.array([50, 80]), np.array([0.9, 1.2]), np.array([0.3, 0.1]), 1.0, 1.3, 0.2)
    J, v = inverse_transform(np.array([50, 80]), x, y, 1.0, 1.3, 0.2)
    assert np.allclose(J, [0.9, 1.2]) and np.allclose(v, [0.3, 0.1])


def test_quality_of_exact_and_noisy_collapse():
    clean = synthetic_scaling(noise=0.0)
    assert collapse_quality(clean, 1.0, 1.0, 0.125) < 0.05   # only interpolation bias remains
    noisy = synthetic_scaling(noise=0.01, seed=3)
    q = collapse_quality(noisy, 1.0, 1.0, 0.125)
    assert 0.7 < q < 1.3
    assert collapse_quality(noisy, 1.0, 3.0, 0.125) > 10 * q
    for p in [(1.0, 1.2, 0.125), (1.0, 1.0, 0.15)]:
        assert collapse_quality(noisy, *p) > q


def test_quality_ignores_row_order(rng):
    d = synthetic_scaling(noise=0.01, seed=1)
    o = rng.permutation(len(d))
    shuffled = ScalingDataset(d.N[o], d.J[o], d.value[o], d.error[o])
    assert collapse_quality(shuffled, 1.0, 1.0, 0.125) == collapse_quality(d, 1.0, 1.0, 0.125)


def test_dataset_validation():
    J = np.linspace(0, 1, 6)
    with pytest.raises(ValueError, match="sizes"):
        ScalingDataset(np.full(6, 10.0), J, J, np.ones(6))
    with pytest.raises(ValueError):
        ScalingDataset(np.repeat([8.0, 10, 12], 6), np.tile(J, 3), np.tile(J, 3), np.zeros(18))


def test_disjoint_ranges_raise():
    d = synthetic_scaling(noise=0.0)
    with pytest.raises(CollapseError, match="overlap"):
        collapse_quality(d, 5.0, 0.2, 0.1)


def test_fit_recovers_known_exponents():
    fit = fit_critical(synthetic_scaling(seed=0), (1.01, 1.2, 0.1))
    assert fit.J_c == pytest.approx(1.0, abs=1e-3)
    assert fit.nu == pytest.approx(1.0, rel=0.03)
    assert fit.beta == pytest.approx(0.125, rel=0.06)
    assert 0.5 < fit.quality < 1.5 and fit.J_c_err > 0


def test_bootstrap_errors():
    fit = fit_critical(synthetic_scaling(seed=2, n_J=30), (1.0, 1.0, 0.125), bootstrap=4, seed=1)
    assert fit.error_method == "bootstrap"
    assert np.isfinite([fit.J_c_err, fit.nu_err, fit.beta_err]).all()


def test_savitzky_golay_matches_scipy(rng):
    y = rng.normal(size=80)
    ours = savitzky_golay(y, 11, 3)
    ref = scipy.signal.savgol_filter(y, 11, 3)
    assert np.allclose(ours[5:-5], ref[5:-5])
    t = np.arange(40.0)
    assert np.allclose(savitzky_golay(0.5 * t ** 2 - t, 7, 2), 0.5 * t ** 2 - t)
    assert np.allclose(savitzky_golay(np.full(9, 3.0), 5, 1), 3.0)
    with pytest.raises(ValueError):
        savitzky_golay(y, 4, 2)


def test_smoothing_reduces_noise(rng):
    t = np.linspace(0, 2 * np.pi, 200)
    noisy = np.sin(t) + 0.1 * rng.normal(size=200)
    assert np.abs(savitzky_golay(noisy, 21, 3) - np.sin(t)).mean() < np.abs(noisy - np.sin(t)).mean()


def test_derived_quantities():
    fm = derived_critical_quantities(-2.963, 3.0346)
    assert fm["h_tilde_c"] == pytest.approx(1.0242, abs=5e-4)
    assert fm["theta_c"] == pytest.approx(0.7734, abs=5e-4)
    assert derived_critical_quantities(3.143, 3.0346)["h_tilde_c"] == pytest.approx(0.9655, abs=5e-4)
    assert derived_critical_quantities(2.0, 2.0)["theta_c"] == pytest.approx(np.pi / 4)


def test_csv_round_trip(tmp_path):
    d = synthetic_scaling(n_J=6, noise=0.01)
    write_dataset(tmp_path / "d.csv", d)
    back = read_dataset(tmp_path / "d.csv")
    assert np.array_equal(back.value, d.value) and np.array_equal(back.N, d.N)
    (tmp_path / "bad.csv").write_text("N,J,value,error\n8,1.0,x\n")
    with pytest.raises(ValueError, match="line 2"):
        read_dataset(tmp_path / "bad.csv")
