"""Post-training evaluation: accuracy, trade-off sweeps, PSD, indicators.

Sweeps retrain from scratch at every lambda with a seed derived from the
master seed and the point index, so points are independent and the whole
sweep is reproducible.  Accuracy is always the test attacker's balanced
accuracy on held-out days; the training attacker never scores runs.

All CSV output uses 9 significant digits.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import signal as sp_signal
from scipy import stats as sp_stats

from .data import Dataset, partition_by_house, split
from .errors import ConfigError, DegenerateInputError, UsageError
from .lstm import LayerStackParams
from .objectives import ne_p
from .training import (
    TAG_EVAL_NOISE,
    TrainConfig,
    Standardizer,
    attack_predictions,
    draw_noise,
    make_release,
    stream_rng,
    train,
    train_test_attacker,
)

WINDOWS = {"hann": "hann", "rectangular": "boxcar"}


def balanced_accuracy(predictions: np.ndarray, labels: np.ndarray, n_classes: int) -> float:
    """Mean per-class recall; classes absent from the labels are skipped."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise UsageError(
            f"predictions shape {predictions.shape} does not match labels {labels.shape}"
        )
    if n_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {n_classes}")
    if labels.size == 0:
        raise UsageError("empty label array")
    recalls = []
    missing = []
    for c in range(n_classes):
        mask = labels == c
        if not np.any(mask):
            missing.append(c)
            continue
        recalls.append(float((predictions[mask] == c).mean()))
    if missing:
        warnings.warn(
            f"classes {missing} absent from labels; excluded from balanced accuracy",
            UserWarning,
            stacklevel=2,
        )
    return float(np.mean(recalls))


@dataclass
class PsdEstimate:
    freqs: np.ndarray  # cycles/day, ascending
    density: np.ndarray  # power per cycles/day
    segment_len: int
    overlap: float
    window: str


def welch_psd(
    signals: np.ndarray,
    segment_len: int = 24,
    overlap: float = 0.5,
    window: str = "hann",
) -> PsdEstimate:
    """Welch PSD of each signal (no detrending), averaged over signals.

    ``signals`` is (N, T) with T samples covering one day, so
    frequencies come out in cycles/day.
    """
    signals = np.atleast_2d(np.asarray(signals, dtype=float))
    n, seq_len = signals.shape
    if segment_len > seq_len:
        raise UsageError(f"segment length {segment_len} exceeds signal length {seq_len}")
    if segment_len < 2:
        raise ConfigError(f"segment length must be >= 2, got {segment_len}")
    if not (0.0 <= overlap < 1.0):
        raise ConfigError(f"overlap must be in [0, 1), got {overlap}")
    if window not in WINDOWS:
        raise ConfigError(f"unknown window {window!r}; choose from {sorted(WINDOWS)}")
    freqs, density = sp_signal.welch(
        signals,
        fs=float(seq_len),
        window=WINDOWS[window],
        nperseg=segment_len,
        noverlap=int(round(overlap * segment_len)),
        detrend=False,
        scaling="density",
        axis=-1,
    )
    return PsdEstimate(freqs, density.mean(axis=0), segment_len, overlap, window)


INDICATOR_NAMES = ("mean", "skewness", "kurtosis", "std_over_mean", "max_over_mean")


@dataclass(frozen=True)
class IndicatorErrors:
    """Absolute relative errors (percent) of the five pooled indicators."""

    mean: float
    skewness: float
    kurtosis: float
    std_over_mean: float
    max_over_mean: float

    def as_tuple(self) -> tuple[float, ...]:
        return (self.mean, self.skewness, self.kurtosis, self.std_over_mean, self.max_over_mean)


def _five_indicators(values: np.ndarray) -> np.ndarray:
    mu = values.mean()
    sd = values.std()
    if sd == 0.0:
        skew, kurt = 0.0, 0.0  # constant signal: no shape to speak of
    else:
        skew = float(sp_stats.skew(values, bias=True))
        kurt = float(sp_stats.kurtosis(values, fisher=False, bias=True))
    return np.array([mu, skew, kurt, sd / mu, values.max() / mu])


def quality_indicators(y: np.ndarray, z: np.ndarray) -> IndicatorErrors:
    """Pooled-indicator discrepancies |ind(z) - ind(y)| / |ind(y)| in percent."""
    y = np.asarray(y, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if y.size == 0 or z.size == 0:
        raise UsageError("empty inputs")
    if y.mean() == 0.0 or y.std() == 0.0:
        raise DegenerateInputError("reference signal has zero mean or zero variance")
    ind_y = _five_indicators(y)
    ind_z = _five_indicators(z)
    out = []
    for name, vy, vz in zip(INDICATOR_NAMES, ind_y, ind_z):
        diff = abs(vz - vy)
        if diff == 0.0:
            out.append(0.0)
        elif vy == 0.0:
            raise DegenerateInputError(f"indicator {name} is zero for the reference signal")
        else:
            out.append(100.0 * diff / abs(vy))
    return IndicatorErrors(*out)


def peak_preservation(
    y_days: np.ndarray,
    z_days: np.ndarray,
    magnitude_tol: float = 0.2,
    location_tol: int = 1,
) -> float:
    """Fraction of days whose release keeps the daily peak.

    Preserved when the release's argmax is within ``location_tol`` steps
    of the true argmax and the release's max is within
    ``magnitude_tol`` (relative) of the true max.
    """
    if magnitude_tol <= 0 or location_tol <= 0:
        raise ConfigError("peak tolerances must be positive")
    y_days = np.atleast_2d(np.asarray(y_days, dtype=float))
    z_days = np.atleast_2d(np.asarray(z_days, dtype=float))
    if y_days.shape != z_days.shape:
        raise UsageError(f"shape mismatch {y_days.shape} vs {z_days.shape}")
    t_true = y_days.argmax(axis=1)
    t_rel = z_days.argmax(axis=1)
    m_true = y_days.max(axis=1)
    m_rel = z_days.max(axis=1)
    loc_ok = np.abs(t_rel - t_true) <= location_tol
    mag_ok = np.abs(m_rel - m_true) <= magnitude_tol * np.abs(m_true)
    return float((loc_ok & mag_ok).mean())


@dataclass
class TradeoffPoint:
    lam: float
    ne_2: float
    ne_4: float
    accuracy: float
    indicators: IndicatorErrors
    checkpoint: str | None = None


def pooled_release(
    releaser: LayerStackParams,
    standardizer: Standardizer,
    config: TrainConfig,
    dataset: Dataset,
    release_draws: int = 4,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Draw independent releases of every day and pool them.

    Returns (y, z, z standardized, labels), each with
    ``release_draws * n_days`` rows, in de-standardized units except the
    third.  Deterministic given the config seed.
    """
    if release_draws < 1:
        raise ConfigError(f"release_draws must be >= 1, got {release_draws}")
    if dataset.n_days == 0:
        raise UsageError("empty dataset")
    rng = stream_rng(config.seed, TAG_EVAL_NOISE)
    w = standardizer.apply(dataset.y)
    x_in = dataset.x.astype(float) if config.include_private_in_input else None
    z_std_draws = []
    for _ in range(release_draws):
        u = draw_noise(rng, dataset.n_days, dataset.seq_len, config.noise_dim)
        z_std_draws.append(make_release(releaser, w, u, x_in))
    z_std_all = np.vstack(z_std_draws)
    y_all = np.tile(dataset.y, (release_draws, 1))
    labels_all = np.tile(dataset.x, (release_draws, 1))
    return y_all, standardizer.invert(z_std_all), z_std_all, labels_all


def evaluate_operating_point(
    releaser: LayerStackParams,
    test_attacker: LayerStackParams,
    standardizer: Standardizer,
    config: TrainConfig,
    test_ds: Dataset,
    release_draws: int = 4,
    return_arrays: bool = False,
):
    """Score a trained releaser on held-out days.

    Pools several independent releases per day, shrinking the noise of
    every estimate.  With ``return_arrays`` also hands back the pooled
    (y, z) pair for downstream spectral and peak analysis.
    """
    y_all, z_all, z_std_all, labels_all = pooled_release(
        releaser, standardizer, config, test_ds, release_draws
    )
    preds_all = attack_predictions(test_attacker, z_std_all)
    point = TradeoffPoint(
        lam=config.lam,
        ne_2=ne_p(z_all, y_all, 2),
        ne_4=ne_p(z_all, y_all, 4),
        accuracy=balanced_accuracy(preds_all, labels_all, test_ds.alphabet_size),
        indicators=quality_indicators(y_all, z_all),
    )
    if return_arrays:
        return point, (y_all, z_all)
    return point


def point_seed(master_seed: int, index: int) -> int:
    """Independent per-point seed derived from the master seed."""
    return int(np.random.SeedSequence([master_seed, 10_000 + index]).generate_state(1)[0])


SPLIT_TAG = 77


def house_split(dataset: Dataset, houses: set[int], master_seed: int):
    """Deterministic train/val/test split of one house subset.

    The split seed depends only on the master seed and the (sorted)
    house set, so two sweeps over the same houses see identical days
    regardless of how the rest of their configs differ.
    """
    (sub,) = partition_by_house(dataset, [houses])
    seed = int(
        np.random.SeedSequence([master_seed, SPLIT_TAG, *sorted(houses)]).generate_state(1)[0]
    )
    return split(sub, seed)


def mismatch_sweep(
    lambda_grid: list[float],
    config: TrainConfig,
    dataset: Dataset,
    releaser_houses: set[int],
    attacker_houses: set[int],
    release_draws: int = 4,
) -> list[TradeoffPoint]:
    """Trade-off sweep with the test attacker restricted to its own houses.

    The releaser trains on the releaser houses' train/validation days;
    the test attacker trains only on releases of the attacker houses'
    train/validation days; scoring uses the attacker houses' held-out
    days.  With equal house sets this is exactly the standard sweep.
    """
    if not lambda_grid:
        raise ConfigError("lambda grid must be nonempty")
    if min(lambda_grid) != 0.0:
        raise ConfigError("lambda grid must include 0 (the no-privacy anchor)")
    if len(set(lambda_grid)) != len(lambda_grid):
        raise ConfigError("lambda grid has duplicates")
    rel_train, rel_val, _ = house_split(dataset, releaser_houses, config.seed)
    att_train, att_val, att_test = house_split(dataset, attacker_houses, config.seed)
    points = []
    for i, lam in enumerate(sorted(lambda_grid)):
        cfg = replace(config, lam=float(lam), seed=point_seed(config.seed, i))
        try:
            result = train(cfg, rel_train, rel_val)
            test_att = train_test_attacker(
                result.releaser, result.standardizer, cfg, att_train, att_val
            )
            point = evaluate_operating_point(
                result.releaser, test_att, result.standardizer, cfg, att_test, release_draws
            )
        except Exception as exc:
            exc.args = (f"at lambda={lam}: {exc}",)
            raise
        points.append(point)
    return points


def tradeoff_sweep(
    lambda_grid: list[float],
    config: TrainConfig,
    dataset: Dataset,
    release_draws: int = 4,
) -> list[TradeoffPoint]:
    """Standard sweep: releaser and attacker share all houses."""
    houses = set(dataset.houses)
    return mismatch_sweep(lambda_grid, config, dataset, houses, houses, release_draws)


def write_tradeoff_csv(points: list[TradeoffPoint], path) -> None:
    header = (
        "lambda,ne_2,ne_4,accuracy,"
        "err_mean,err_skewness,err_kurtosis,err_std_over_mean,err_max_over_mean"
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for p in points:
            nums = (p.lam, p.ne_2, p.ne_4, p.accuracy, *p.indicators.as_tuple())
            fh.write(",".join(f"{v:.9g}" for v in nums) + "\n")


def write_mismatch_csv(tables: dict[str, list[TradeoffPoint]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("scenario,lambda,ne_2,ne_4,accuracy\n")
        for scenario in sorted(tables):
            for p in tables[scenario]:
                fh.write(
                    f"{scenario},{p.lam:.9g},{p.ne_2:.9g},{p.ne_4:.9g},{p.accuracy:.9g}\n"
                )


def write_psd_csv(estimate: PsdEstimate, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("frequency_cycles_per_day,density\n")
        for f, d in zip(estimate.freqs, estimate.density):
            fh.write(f"{f:.9g},{d:.9g}\n")
