"""Analytics tests.

The PSD path is checked against a periodogram computed directly from the
DFT definition, and the indicator errors against literal moment
formulas, so the scipy-backed implementations never grade themselves.
"""

import numpy as np
import pytest

from meterpriv.analytics import (
    IndicatorErrors,
    balanced_accuracy,
    evaluate_operating_point,
    mismatch_sweep,
    peak_preservation,
    point_seed,
    quality_indicators,
    tradeoff_sweep,
    welch_psd,
    write_mismatch_csv,
    write_psd_csv,
    write_tradeoff_csv,
)
from meterpriv.data import SyntheticConfig, generate, split
from meterpriv.errors import ConfigError, DegenerateInputError, UsageError
from meterpriv.training import TrainConfig, train, train_test_attacker


def direct_periodogram(x):
    """One-sided periodogram straight from the DFT definition."""
    n = x.size
    fs = float(n)
    spectrum = np.abs(np.fft.rfft(x)) ** 2 / (fs * n)
    spectrum[1:] *= 2.0
    if n % 2 == 0:
        spectrum[-1] /= 2.0
    freqs = np.arange(spectrum.size) * fs / n
    return freqs, spectrum


class TestWelchPsd:
    def test_constant_signal_keeps_power_at_zero_frequency(self):
        est = welch_psd(np.full((1, 24), 3.0), segment_len=24, window="rectangular")
        df = est.freqs[1] - est.freqs[0]
        assert abs(est.density[0] * df - 9.0) < 1e-9
        assert np.all(est.density[1:] < 1e-18)

    def test_sinusoid_matches_direct_periodogram(self):
        t = np.arange(24)
        x = np.sin(2.0 * np.pi * 3.0 * t / 24.0)
        est = welch_psd(x[None, :], segment_len=24, window="rectangular")
        freqs, ref = direct_periodogram(x)
        assert np.allclose(est.freqs, freqs, atol=1e-12)
        peak = int(est.density.argmax())
        assert est.freqs[peak] == 3.0
        assert abs(est.density[peak] - ref[peak]) <= 1e-6 * ref[peak]
        assert np.allclose(est.density, ref, atol=1e-12)

    def test_total_power_equals_mean_square(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=48)
        est = welch_psd(x[None, :], segment_len=48, window="rectangular")
        df = est.freqs[1] - est.freqs[0]
        total = float(np.sum(est.density) * df)
        ms = float(np.mean(x**2))
        assert abs(total - ms) <= 1e-9 * ms

    def test_hann_defaults_shape_and_sign(self):
        rng = np.random.default_rng(1)
        est = welch_psd(rng.normal(size=(3, 72)))
        assert est.segment_len == 24 and est.overlap == 0.5 and est.window == "hann"
        assert est.freqs.shape == (13,)
        assert est.freqs[0] == 0.0 and est.freqs[-1] == 36.0
        assert np.all(np.diff(est.freqs) > 0)
        assert np.all(est.density >= 0.0)

    def test_average_over_signals_is_mean_of_singles(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=96), rng.normal(size=96)
        joint = welch_psd(np.vstack([a, b]))
        singles = (welch_psd(a[None, :]).density + welch_psd(b[None, :]).density) / 2.0
        assert np.allclose(joint.density, singles, atol=1e-15)

    def test_averaging_shrinks_per_bin_variance(self):
        rng = np.random.default_rng(3)
        single, averaged = [], []
        for _ in range(30):
            single.append(welch_psd(rng.normal(size=(1, 96))).density)
            averaged.append(welch_psd(rng.normal(size=(10, 96))).density)
        var_single = np.var(np.array(single), axis=0).mean()
        var_avg = np.var(np.array(averaged), axis=0).mean()
        assert var_avg < var_single / 3.0

    def test_bad_arguments_rejected(self):
        x = np.zeros((1, 24))
        with pytest.raises(UsageError):
            welch_psd(x, segment_len=25)
        with pytest.raises(ConfigError):
            welch_psd(x, segment_len=1)
        with pytest.raises(ConfigError):
            welch_psd(x, overlap=1.0)
        with pytest.raises(ConfigError):
            welch_psd(x, window="hamming")


class TestBalancedAccuracy:
    def test_perfect_predictor(self):
        labels = np.array([[0, 1, 1], [1, 0, 0]])
        assert balanced_accuracy(labels, labels, 2) == 1.0

    def test_constant_predictor_on_imbalanced_labels(self):
        labels = np.array([0, 0, 0, 0, 0, 0, 1, 1])
        preds = np.zeros(8, dtype=int)
        assert balanced_accuracy(preds, labels, 2) == 0.5

    def test_hand_worked_value(self):
        labels = np.array([0, 0, 1, 1])
        preds = np.array([0, 1, 1, 1])
        assert balanced_accuracy(preds, labels, 2) == 0.75

    def test_label_permutation_counts_fixed_points(self):
        rng = np.random.default_rng(4)
        labels = rng.integers(0, 3, size=300)
        perm = np.array([1, 0, 2])  # one fixed point out of three classes
        preds = perm[labels]
        assert np.isclose(balanced_accuracy(preds, labels, 3), 1.0 / 3.0)

    def test_absent_class_warns_and_is_excluded(self):
        labels = np.array([0, 0, 1, 1])
        preds = np.array([0, 0, 1, 0])
        with pytest.warns(UserWarning, match="absent"):
            acc = balanced_accuracy(preds, labels, 3)
        assert acc == 0.75

    def test_bad_inputs_rejected(self):
        with pytest.raises(UsageError):
            balanced_accuracy(np.zeros(3, dtype=int), np.zeros(4, dtype=int), 2)
        with pytest.raises(ConfigError):
            balanced_accuracy(np.zeros(3, dtype=int), np.zeros(3, dtype=int), 1)


def literal_indicators(v):
    """The five pooled indicators written out with textbook formulas."""
    v = np.asarray(v, dtype=float).ravel()
    mu = v.sum() / v.size
    var = ((v - mu) ** 2).sum() / v.size
    sd = var**0.5
    m3 = ((v - mu) ** 3).sum() / v.size
    m4 = ((v - mu) ** 4).sum() / v.size
    return np.array([mu, m3 / sd**3, m4 / sd**4, sd / mu, v.max() / mu])


class TestQualityIndicators:
    def test_identical_signals_have_zero_error(self):
        rng = np.random.default_rng(5)
        y = rng.gamma(2.0, 1.0, size=200)
        assert quality_indicators(y, y).as_tuple() == (0.0,) * 5

    def test_doubling_moves_only_the_mean(self):
        rng = np.random.default_rng(6)
        y = rng.gamma(2.0, 1.0, size=200)
        errs = quality_indicators(y, 2.0 * y)
        assert np.isclose(errs.mean, 100.0)
        for value in (errs.skewness, errs.kurtosis, errs.std_over_mean, errs.max_over_mean):
            assert abs(value) < 1e-9

    def test_matches_literal_moment_formulas(self):
        rng = np.random.default_rng(7)
        y = rng.gamma(2.0, 1.0, size=300)
        z = y + rng.normal(scale=0.3, size=300)
        got = np.array(quality_indicators(y, z).as_tuple())
        iy, iz = literal_indicators(y), literal_indicators(z)
        want = 100.0 * np.abs(iz - iy) / np.abs(iy)
        assert np.allclose(got, want, rtol=1e-12)

    def test_shift_keeps_shape_indicators(self):
        rng = np.random.default_rng(8)
        y = rng.gamma(2.0, 1.0, size=500)
        errs = quality_indicators(y, y + 0.7)
        assert abs(errs.skewness) < 1e-7
        assert abs(errs.kurtosis) < 1e-7
        assert errs.mean > 0 and errs.std_over_mean > 0

    def test_degenerate_reference_rejected(self):
        with pytest.raises(DegenerateInputError):
            quality_indicators(np.full(10, 2.0), np.ones(10))
        with pytest.raises(DegenerateInputError):
            quality_indicators(np.array([-1.0, 1.0]), np.ones(2))


class TestPeakPreservation:
    def test_identical_releases_preserve_everything(self):
        rng = np.random.default_rng(9)
        y = rng.gamma(2.0, 1.0, size=(20, 24))
        assert peak_preservation(y, y) == 1.0

    def test_zero_release_preserves_nothing(self):
        rng = np.random.default_rng(10)
        y = rng.gamma(2.0, 1.0, size=(20, 24)) + 0.1
        assert peak_preservation(y, np.zeros_like(y)) == 0.0

    def test_one_step_shift_is_tolerated(self):
        t = np.arange(24)
        y = np.exp(-0.5 * ((t - 12.0) / 2.0) ** 2)[None, :]
        z = np.roll(y, 1, axis=1)
        assert peak_preservation(y, z) == 1.0
        assert peak_preservation(y, np.roll(y, 2, axis=1)) == 0.0

    def test_magnitude_violation_fails(self):
        rng = np.random.default_rng(11)
        y = rng.gamma(2.0, 1.0, size=(10, 24)) + 0.1
        assert peak_preservation(y, 1.3 * y) == 0.0
        assert peak_preservation(y, 1.1 * y) == 1.0

    def test_bad_tolerances_rejected(self):
        y = np.ones((2, 4))
        with pytest.raises(ConfigError):
            peak_preservation(y, y, magnitude_tol=0.0)
        with pytest.raises(UsageError):
            peak_preservation(y, np.ones((2, 5)))


def sweep_config(**overrides):
    base = dict(
        batch_size=8,
        attacker_steps=2,
        noise_dim=2,
        clip=1.0,
        recurrent_l2=0.5,
        lam=1.0,
        p=2.0,
        releaser_hidden=(4,),
        attacker_hidden=(3,),
        test_attacker_hidden=(3,),
        iterations=2,
        test_attacker_epochs=1,
        seed=5,
    )
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def sweep_dataset():
    return generate(SyntheticConfig(houses=2, seq_len=6, seed=21), days_per_house=30)


class TestSweeps:
    def test_tradeoff_sweep_plumbing(self, sweep_dataset):
        points = tradeoff_sweep([1.0, 0.0], sweep_config(), sweep_dataset, release_draws=2)
        assert [p.lam for p in points] == [0.0, 1.0]
        for p in points:
            assert p.ne_2 >= 0.0 and p.ne_4 >= 0.0
            assert 0.0 <= p.accuracy <= 1.0
            assert all(np.isfinite(v) for v in p.indicators.as_tuple())

    def test_grid_validation(self, sweep_dataset):
        cfg = sweep_config()
        with pytest.raises(ConfigError, match="nonempty"):
            tradeoff_sweep([], cfg, sweep_dataset)
        with pytest.raises(ConfigError, match="include 0"):
            tradeoff_sweep([0.5, 1.0], cfg, sweep_dataset)
        with pytest.raises(ConfigError, match="duplicates"):
            tradeoff_sweep([0.0, 1.0, 1.0], cfg, sweep_dataset)

    def test_matched_mismatch_reduces_to_tradeoff(self, sweep_dataset):
        cfg = sweep_config()
        houses = set(sweep_dataset.houses)
        a = tradeoff_sweep([0.0], cfg, sweep_dataset, release_draws=1)
        b = mismatch_sweep([0.0], cfg, sweep_dataset, houses, houses, release_draws=1)
        assert a == b

    def test_disjoint_houses_run(self, sweep_dataset):
        points = mismatch_sweep(
            [0.0], sweep_config(), sweep_dataset, {1}, {2}, release_draws=1
        )
        assert len(points) == 1
        assert 0.0 <= points[0].accuracy <= 1.0

    def test_point_seed_is_deterministic_and_distinct(self):
        assert point_seed(3, 0) == point_seed(3, 0)
        assert point_seed(3, 0) != point_seed(3, 1)
        assert point_seed(3, 0) != point_seed(4, 0)

    def test_evaluation_is_deterministic(self, sweep_dataset):
        cfg = sweep_config()
        train_ds, val_ds, test_ds = split(sweep_dataset, seed=2)
        result = train(cfg, train_ds, val_ds)
        attacker = train_test_attacker(result.releaser, result.standardizer, cfg, train_ds, val_ds)
        p1 = evaluate_operating_point(
            result.releaser, attacker, result.standardizer, cfg, test_ds, release_draws=2
        )
        p2 = evaluate_operating_point(
            result.releaser, attacker, result.standardizer, cfg, test_ds, release_draws=2
        )
        assert p1 == p2


class TestCsvWriters:
    def test_tradeoff_csv(self, tmp_path):
        errs = IndicatorErrors(1.0, 2.0, 3.0, 4.0, 5.0)
        from meterpriv.analytics import TradeoffPoint

        points = [TradeoffPoint(0.0, 0.1, 0.2, 0.9, errs), TradeoffPoint(1.0, 0.3, 0.4, 0.6, errs)]
        path = tmp_path / "tradeoff.csv"
        write_tradeoff_csv(points, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("lambda,ne_2,ne_4,accuracy,err_mean")
        assert len(lines) == 3
        assert lines[1].split(",")[0] == "0"
        assert float(lines[2].split(",")[3]) == 0.6

    def test_mismatch_csv(self, tmp_path):
        errs = IndicatorErrors(0.0, 0.0, 0.0, 0.0, 0.0)
        from meterpriv.analytics import TradeoffPoint

        tables = {
            "full": [TradeoffPoint(0.0, 0.1, 0.2, 0.9, errs)],
            "disjoint": [TradeoffPoint(0.0, 0.1, 0.2, 0.5, errs)],
        }
        path = tmp_path / "mismatch.csv"
        write_mismatch_csv(tables, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "scenario,lambda,ne_2,ne_4,accuracy"
        assert lines[1].startswith("disjoint,")
        assert lines[2].startswith("full,")

    def test_psd_csv(self, tmp_path):
        est = welch_psd(np.random.default_rng(0).normal(size=(2, 48)))
        path = tmp_path / "psd.csv"
        write_psd_csv(est, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "frequency_cycles_per_day,density"
        assert len(lines) == 1 + est.freqs.size
