"""Run configuration files.

A run config is a JSON object with five sections: data, model, train,
eval, mismatch.  Every key has a default, so an empty object is a valid
config; unknown keys are rejected by their full dotted path.  Resolving
a config materializes all defaults, and a resolved config loads back to
exactly itself, so the resolved_config.json written next to run outputs
pins the run completely.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .data import LABEL_MODES, Harmonic, SyntheticConfig
from .errors import ConfigError, MissingFileError
from .training import TrainConfig

RESOLVED_CONFIG_NAME = "resolved_config.json"


def _build(cls, raw: dict, prefix: str):
    """Construct a section dataclass from a JSON dict, naming bad keys."""
    if not isinstance(raw, dict):
        raise ConfigError(f"section {prefix} must be an object, got {type(raw).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown config key {prefix}.{key}")
    return cls(**raw)


@dataclass(frozen=True)
class DataSection:
    """Synthetic data generation and labeling."""

    seq_len: int = 24
    p_arrive: float = 0.2
    p_leave: float = 0.1
    base_load: float = 0.3
    occupancy_boost: float = 0.8
    harmonics: tuple = (
        {"amplitude": 0.2, "cycles_per_day": 1.0, "phase": 0.0},
        {"amplitude": 0.1, "cycles_per_day": 2.0, "phase": 0.0},
    )
    noise_std: float = 0.1
    houses: int = 5
    house_jitter: float = 0.1
    seed: int = 0
    days_per_house: int = 200
    label_mode: str = "occupancy"

    def __post_init__(self):
        object.__setattr__(self, "harmonics", tuple(self.harmonics))
        if self.days_per_house < 1:
            raise ConfigError(f"data.days_per_house must be >= 1, got {self.days_per_house}")
        if self.label_mode not in LABEL_MODES:
            raise ConfigError(
                f"data.label_mode must be one of {LABEL_MODES}, got {self.label_mode!r}"
            )
        self.synthetic_config()  # validate the generator fields eagerly

    def synthetic_config(self) -> SyntheticConfig:
        harmonics = []
        for i, h in enumerate(self.harmonics):
            harmonics.append(Harmonic(**_checked_harmonic(h, f"data.harmonics[{i}]")))
        return SyntheticConfig(
            seq_len=self.seq_len,
            p_arrive=self.p_arrive,
            p_leave=self.p_leave,
            base_load=self.base_load,
            occupancy_boost=self.occupancy_boost,
            harmonics=tuple(harmonics),
            noise_std=self.noise_std,
            houses=self.houses,
            house_jitter=self.house_jitter,
            seed=self.seed,
        )


def _checked_harmonic(raw, prefix: str) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"{prefix} must be an object")
    known = {"amplitude", "cycles_per_day", "phase"}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown config key {prefix}.{key}")
    return dict(raw)


@dataclass(frozen=True)
class ModelSection:
    """Architectures of the releaser and both attackers."""

    releaser_hidden: tuple = (64, 64, 64, 64)
    attacker_hidden: tuple = (32, 32)
    test_attacker_hidden: tuple = (32, 32, 32)
    noise_dim: int = 8
    include_private_in_input: bool = False

    def __post_init__(self):
        for name in ("releaser_hidden", "attacker_hidden", "test_attacker_hidden"):
            object.__setattr__(self, name, tuple(getattr(self, name)))


@dataclass(frozen=True)
class TrainSection:
    """Alternating-loop hyperparameters."""

    batch_size: int = 128
    attacker_steps: int = 4
    iterations: int = 500
    test_attacker_epochs: int = 8
    lr: float = 0.001
    rho: float = 0.9
    eps_opt: float = 1e-8
    clip: float = 1.0
    recurrent_l2: float = 1.5
    lam: float = 1.0
    p: float = 2.0
    entropy_term: str = "predictive"
    seed: int = 0


@dataclass(frozen=True)
class EvalSection:
    """Sweep grid, release draws, PSD options, and peak tolerances."""

    lambda_grid: tuple = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)
    release_draws: int = 4
    psd_segment_len: int = 24
    psd_overlap: float = 0.5
    psd_window: str = "hann"
    peak_magnitude_tol: float = 0.2
    peak_location_tol: int = 1

    def __post_init__(self):
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
        if not self.lambda_grid:
            raise ConfigError("eval.lambda_grid must be nonempty")
        if min(self.lambda_grid) != 0.0:
            raise ConfigError("eval.lambda_grid must include 0")
        if len(set(self.lambda_grid)) != len(self.lambda_grid):
            raise ConfigError("eval.lambda_grid has duplicates")
        if self.release_draws < 1:
            raise ConfigError(f"eval.release_draws must be >= 1, got {self.release_draws}")
        if self.psd_segment_len < 2:
            raise ConfigError("eval.psd_segment_len must be >= 2")
        if not (0.0 <= self.psd_overlap < 1.0):
            raise ConfigError("eval.psd_overlap must be in [0, 1)")
        if self.psd_window not in ("hann", "rectangular"):
            raise ConfigError(f"eval.psd_window must be hann or rectangular, got {self.psd_window!r}")
        if self.peak_magnitude_tol <= 0 or self.peak_location_tol <= 0:
            raise ConfigError("eval peak tolerances must be positive")


@dataclass(frozen=True)
class ScenarioSpec:
    releaser_houses: tuple
    attacker_houses: tuple

    def __post_init__(self):
        for name in ("releaser_houses", "attacker_houses"):
            houses = tuple(int(v) for v in getattr(self, name))
            if not houses:
                raise ConfigError(f"scenario {name} must be nonempty")
            if len(set(houses)) != len(houses):
                raise ConfigError(f"scenario {name} has duplicates")
            object.__setattr__(self, name, houses)


def _default_scenarios() -> dict:
    return {
        "full": ScenarioSpec((1, 2, 3, 4, 5), (1, 2, 3, 4, 5)),
        "partial": ScenarioSpec((1, 2, 3, 4), (3, 4, 5)),
        "disjoint": ScenarioSpec((1, 2, 3, 4), (5,)),
    }


@dataclass(frozen=True)
class MismatchSection:
    """Named (releaser houses, attacker houses) scenarios."""

    scenarios: dict = field(default_factory=_default_scenarios)

    def __post_init__(self):
        built = {}
        for name, raw in self.scenarios.items():
            if isinstance(raw, ScenarioSpec):
                built[name] = raw
            else:
                built[name] = _build(ScenarioSpec, raw, f"mismatch.scenarios.{name}")
        object.__setattr__(self, "scenarios", built)
        if not built:
            raise ConfigError("mismatch.scenarios must be nonempty")


SECTION_TYPES = {
    "data": DataSection,
    "model": ModelSection,
    "train": TrainSection,
    "eval": EvalSection,
    "mismatch": MismatchSection,
}


@dataclass(frozen=True)
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    mismatch: MismatchSection = field(default_factory=MismatchSection)

    def __post_init__(self):
        self.train_config()  # validate the cross-section combination eagerly

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.train.batch_size,
            attacker_steps=self.train.attacker_steps,
            noise_dim=self.model.noise_dim,
            clip=self.train.clip,
            recurrent_l2=self.train.recurrent_l2,
            lam=self.train.lam,
            p=self.train.p,
            releaser_hidden=self.model.releaser_hidden,
            attacker_hidden=self.model.attacker_hidden,
            test_attacker_hidden=self.model.test_attacker_hidden,
            iterations=self.train.iterations,
            test_attacker_epochs=self.train.test_attacker_epochs,
            seed=self.train.seed,
            lr=self.train.lr,
            rho=self.train.rho,
            eps_opt=self.train.eps_opt,
            entropy_term=self.train.entropy_term,
            include_private_in_input=self.model.include_private_in_input,
        )

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError(f"config root must be an object, got {type(raw).__name__}")
        for key in raw:
            if key not in SECTION_TYPES:
                raise ConfigError(f"unknown config section {key}")
        sections = {
            name: _build(section_cls, raw.get(name, {}), name)
            for name, section_cls in SECTION_TYPES.items()
        }
        return cls(**sections)

    def to_dict(self) -> dict:
        out = {}
        for name in SECTION_TYPES:
            section = getattr(self, name)
            if name == "mismatch":
                out[name] = {
                    "scenarios": {
                        sc_name: {
                            "releaser_houses": list(sc.releaser_houses),
                            "attacker_houses": list(sc.attacker_houses),
                        }
                        for sc_name, sc in section.scenarios.items()
                    }
                }
            else:
                d = dataclasses.asdict(section)
                for key, value in d.items():
                    if isinstance(value, tuple):
                        d[key] = [dict(v) if isinstance(v, dict) else v for v in value]
                out[name] = d
        return out


def load_config(path: str | os.PathLike) -> RunConfig:
    if not os.path.exists(path):
        raise MissingFileError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    try:
        return RunConfig.from_dict(raw)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def save_resolved(config: RunConfig, out_dir: str | os.PathLike) -> str:
    path = os.path.join(out_dir, RESOLVED_CONFIG_NAME)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
