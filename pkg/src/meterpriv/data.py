"""Synthetic smart-meter data, CSV ingestion, and dataset splitting.

The generator produces daily sequences: a two-state occupancy Markov
chain (absent=0, present=1) started from its stationary distribution,
and a consumption signal

    y_t = max(0, base + x_t * boost + sum_j amp_j sin(2 pi c_j t/T + phase_j) + noise)

Per-house variation comes from a multiplicative jitter on the load
parameters (base, boost, amplitudes, noise std), not on the chain.

CSV schema: header ``house_id,day_index,step,x,y``, one row per step,
LF endings, '.' decimals.  A JSON sidecar at ``<path>.meta.json`` holds
``{"T": ..., "alphabet_size": ..., "houses": [...]}``.  Values written
with ``repr`` so a write/load round trip is exact.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataFormatError, MissingFileError, UsageError

CSV_HEADER = ["house_id", "day_index", "step", "x", "y"]
LABEL_MODES = ("occupancy", "house", "base_tercile")


@dataclass(frozen=True)
class Harmonic:
    amplitude: float
    cycles_per_day: float
    phase: float = 0.0


@dataclass(frozen=True)
class SyntheticConfig:
    seq_len: int = 24
    p_arrive: float = 0.2  # P(absent -> present)
    p_leave: float = 0.1  # P(present -> absent)
    base_load: float = 0.3
    occupancy_boost: float = 0.8
    harmonics: tuple[Harmonic, ...] = (Harmonic(0.2, 1.0), Harmonic(0.1, 2.0))
    noise_std: float = 0.1
    houses: int = 5
    house_jitter: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.seq_len < 1:
            raise ConfigError(f"seq_len must be >= 1, got {self.seq_len}")
        for name, p in (("p_arrive", self.p_arrive), ("p_leave", self.p_leave)):
            if not (0.0 <= p <= 1.0):
                raise ConfigError(f"{name} must be in [0, 1], got {p}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be >= 0, got {self.noise_std}")
        if any(h.amplitude < 0 for h in self.harmonics):
            raise ConfigError("harmonic amplitudes must be >= 0")
        if self.houses < 1:
            raise ConfigError(f"houses must be >= 1, got {self.houses}")
        if not (0.0 <= self.house_jitter < 1.0):
            raise ConfigError(f"house_jitter must be in [0, 1), got {self.house_jitter}")

    @property
    def stationary_presence(self) -> float:
        s = self.p_arrive + self.p_leave
        return self.p_arrive / s if s > 0 else 0.5


@dataclass
class Dataset:
    """Daily sequences: private labels x, consumption y, keyed by (house, day)."""

    house_ids: np.ndarray  # (N,)
    day_index: np.ndarray  # (N,)
    x: np.ndarray  # (N, T) ints in [0, alphabet_size)
    y: np.ndarray  # (N, T) reals, kW
    alphabet_size: int

    def __post_init__(self):
        self.house_ids = np.asarray(self.house_ids, dtype=int)
        self.day_index = np.asarray(self.day_index, dtype=int)
        self.x = np.asarray(self.x, dtype=int)
        self.y = np.asarray(self.y, dtype=float)
        n = self.house_ids.shape[0]
        if self.day_index.shape != (n,) or self.x.shape[0] != n or self.y.shape != self.x.shape:
            raise ConfigError("dataset field shapes are inconsistent")
        if n > 0:
            if self.x.min() < 0 or self.x.max() >= self.alphabet_size:
                raise ConfigError("labels outside the declared alphabet")
            if self.y.min() < 0:
                raise ConfigError("consumption must be non-negative")

    @property
    def n_days(self) -> int:
        return self.house_ids.shape[0]

    @property
    def seq_len(self) -> int:
        return self.x.shape[1]

    @property
    def houses(self) -> list[int]:
        return sorted(np.unique(self.house_ids).tolist())

    def take(self, indices: np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(
            self.house_ids[idx], self.day_index[idx], self.x[idx], self.y[idx], self.alphabet_size
        )


def generate(config: SyntheticConfig, days_per_house: int) -> Dataset:
    """Sample ``days_per_house`` daily sequences for each house."""
    if days_per_house < 1:
        raise ConfigError(f"days_per_house must be >= 1, got {days_per_house}")
    seq_len = config.seq_len
    t_grid = np.arange(seq_len)
    house_ids, day_idx, xs, ys = [], [], [], []
    for house in range(1, config.houses + 1):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, house]))
        j = config.house_jitter
        base = config.base_load * (1.0 + j * rng.uniform(-1, 1))
        boost = config.occupancy_boost * (1.0 + j * rng.uniform(-1, 1))
        amps = [h.amplitude * (1.0 + j * rng.uniform(-1, 1)) for h in config.harmonics]
        noise_std = max(0.0, config.noise_std * (1.0 + j * rng.uniform(-1, 1)))
        profile = np.zeros(seq_len)
        for amp, h in zip(amps, config.harmonics):
            profile += amp * np.sin(2.0 * np.pi * h.cycles_per_day * t_grid / seq_len + h.phase)

        x = np.empty((days_per_house, seq_len), dtype=int)
        x[:, 0] = rng.random(days_per_house) < config.stationary_presence
        for t in range(1, seq_len):
            stay_draw = rng.random(days_per_house)
            arrived = (x[:, t - 1] == 0) & (stay_draw < config.p_arrive)
            stayed = (x[:, t - 1] == 1) & (stay_draw >= config.p_leave)
            x[:, t] = (arrived | stayed).astype(int)
        noise = rng.normal(0.0, noise_std, size=(days_per_house, seq_len)) if noise_std > 0 else 0.0
        y = np.maximum(0.0, base + boost * x + profile + noise)

        house_ids.append(np.full(days_per_house, house))
        day_idx.append(np.arange(days_per_house))
        xs.append(x)
        ys.append(y)
    return Dataset(
        np.concatenate(house_ids),
        np.concatenate(day_idx),
        np.vstack(xs),
        np.vstack(ys),
        alphabet_size=2,
    )


def _sidecar_path(path: str | os.PathLike) -> str:
    return f"{os.fspath(path)}.meta.json"


def save_csv(dataset: Dataset, path: str | os.PathLike) -> None:
    """Write the dataset plus its JSON sidecar."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for i in range(dataset.n_days):
            for t in range(dataset.seq_len):
                writer.writerow(
                    [
                        dataset.house_ids[i],
                        dataset.day_index[i],
                        t,
                        dataset.x[i, t],
                        repr(float(dataset.y[i, t])),
                    ]
                )
    meta = {
        "T": dataset.seq_len,
        "alphabet_size": dataset.alphabet_size,
        "houses": dataset.houses,
    }
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True)
        fh.write("\n")


def load_csv(path: str | os.PathLike) -> Dataset:
    """Read a dataset written by ``save_csv`` (or matching its schema)."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise MissingFileError(f"dataset file not found: {path}")
    sidecar = _sidecar_path(path)
    if not os.path.exists(sidecar):
        raise MissingFileError(f"dataset sidecar not found: {sidecar}")
    with open(sidecar, encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"malformed sidecar {sidecar}: {exc}") from exc
    try:
        seq_len = int(meta["T"])
        alphabet_size = int(meta["alphabet_size"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"sidecar {sidecar} missing T/alphabet_size") from exc

    rows: dict[tuple[int, int], dict[int, tuple[int, float, int]]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: empty file")
        if header != CSV_HEADER:
            raise DataFormatError(f"{path}: bad header {header!r}, expected {CSV_HEADER!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise DataFormatError(f"{path}:{lineno}: expected 5 columns, got {len(row)}")
            try:
                house, day, step = int(row[0]), int(row[1]), int(row[2])
                x_val, y_val = int(row[3]), float(row[4])
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from exc
            if not (0 <= x_val < alphabet_size):
                raise DataFormatError(
                    f"{path}:{lineno}: label {x_val} outside alphabet of size {alphabet_size}"
                )
            if not np.isfinite(y_val) or y_val < 0:
                raise DataFormatError(f"{path}:{lineno}: consumption must be finite and >= 0")
            if not (0 <= step < seq_len):
                raise DataFormatError(f"{path}:{lineno}: step {step} outside [0, {seq_len - 1}]")
            day_rows = rows.setdefault((house, day), {})
            if step in day_rows:
                raise DataFormatError(f"{path}:{lineno}: duplicate step {step} for house {house} day {day}")
            day_rows[step] = (x_val, y_val, lineno)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")

    keys = sorted(rows)
    house_ids = np.empty(len(keys), dtype=int)
    day_index = np.empty(len(keys), dtype=int)
    x = np.empty((len(keys), seq_len), dtype=int)
    y = np.empty((len(keys), seq_len))
    for i, key in enumerate(keys):
        day_rows = rows[key]
        if len(day_rows) != seq_len:
            missing = sorted(set(range(seq_len)) - set(day_rows))
            first_line = min(r[2] for r in day_rows.values())
            raise DataFormatError(
                f"{path}: house {key[0]} day {key[1]} has {len(day_rows)} of {seq_len} steps "
                f"(missing {missing[:4]}...; day starts near line {first_line})"
            )
        house_ids[i], day_index[i] = key
        for t in range(seq_len):
            x[i, t], y[i, t] = day_rows[t][0], day_rows[t][1]
    return Dataset(house_ids, day_index, x, y, alphabet_size)


def split(dataset: Dataset, seed: int) -> tuple[Dataset, Dataset, Dataset]:
    """85:15 train-pool:test by whole days, then 10% of the pool as validation."""
    if dataset.n_days == 0:
        raise UsageError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(dataset.n_days)
    n_test = int(round(0.15 * dataset.n_days))
    pool, test_idx = perm[: dataset.n_days - n_test], perm[dataset.n_days - n_test :]
    n_val = int(round(0.10 * pool.size))
    val_idx, train_idx = pool[:n_val], pool[n_val:]
    return dataset.take(train_idx), dataset.take(val_idx), dataset.take(test_idx)


def partition_by_house(dataset: Dataset, house_sets: list[set[int]]) -> list[Dataset]:
    """Restrict the dataset to each requested set of house ids."""
    known = set(dataset.houses)
    out = []
    for house_set in house_sets:
        unknown = set(house_set) - known
        if unknown:
            raise UsageError(f"unknown house ids {sorted(unknown)}; dataset has {sorted(known)}")
        mask = np.isin(dataset.house_ids, sorted(house_set))
        out.append(dataset.take(np.flatnonzero(mask)))
    return out


def with_labels(dataset: Dataset, mode: str) -> Dataset:
    """Re-key the private labels.

    occupancy: keep x as generated (|X| = 2).
    house: constant per-day label = house id rank (|X| = number of houses).
    base_tercile: houses ranked by mean consumption, split into three
    groups of near-equal size (|X| = 3); a coarse consumption-class label.
    """
    if mode not in LABEL_MODES:
        raise ConfigError(f"unknown label mode {mode!r}; choose from {LABEL_MODES}")
    if mode == "occupancy":
        return dataset
    houses = dataset.houses
    if mode == "house":
        rank = {h: i for i, h in enumerate(houses)}
        labels = np.array([rank[h] for h in dataset.house_ids])
        alphabet = len(houses)
    else:
        means = {h: dataset.y[dataset.house_ids == h].mean() for h in houses}
        ordered = sorted(houses, key=lambda h: means[h])
        tercile = {}
        for i, group in enumerate(np.array_split(np.array(ordered), 3)):
            for h in group:
                tercile[int(h)] = i
        labels = np.array([tercile[h] for h in dataset.house_ids])
        alphabet = 3
    x = np.repeat(labels[:, None], dataset.seq_len, axis=1)
    return Dataset(dataset.house_ids, dataset.day_index, x, dataset.y, alphabet)
