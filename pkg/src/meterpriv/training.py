"""Alternating minimax training of the releaser/attacker pair.

Per outer iteration: k clipped-RMSprop steps on the attacker's
cross-entropy, then one step on the releaser's loss (normalized lp
distortion minus lam times the attacker's entropy term), with the
entropy gradient flowing through the frozen attacker into the release
and back through the releaser.  Recurrent l2 (beta) applies to the
releaser update only.

The observed signal fed to the releaser is the standardized consumption
(train-split statistics); seed noise is uniform [0,1]^m, drawn fresh per
minibatch.  Every random choice comes from a stream derived from
(config.seed, stream tag), so a run is bit-reproducible.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .errors import ConfigError, DegenerateInputError, NumericError, UsageError
from .lstm import LayerStackParams, init_params, stack_backward, stack_forward
from .objectives import (
    attacker_xent_with_grad,
    normalized_distortion_with_grad,
    predictive_entropy_rate_with_grad,
)
from .optim import RmspropState, optimizer_step

ENTROPY_TERMS = ("predictive", "adversarial_xent")

# rng stream tags (SeedSequence([seed, tag]))
TAG_RELEASER_INIT = 0
TAG_ATTACKER_INIT = 1
TAG_BATCH = 2
TAG_NOISE = 3
TAG_VAL_NOISE = 4
TAG_TEST_ATTACKER_INIT = 5
TAG_TEST_ATTACKER_BATCH = 6
TAG_TEST_ATTACKER_NOISE = 7
TAG_EVAL_NOISE = 8


def stream_rng(seed: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, tag]))


@dataclass
class TrainConfig:
    """Hyperparameters of the alternating loop and both architectures."""

    batch_size: int = 128
    attacker_steps: int = 4  # k
    noise_dim: int = 8  # m
    clip: float = 1.0  # C
    recurrent_l2: float = 1.5  # beta, releaser update only
    lam: float = 1.0
    p: float = 2.0
    releaser_hidden: tuple[int, ...] = (64, 64, 64, 64)
    attacker_hidden: tuple[int, ...] = (32, 32)
    test_attacker_hidden: tuple[int, ...] = (32, 32, 32)
    iterations: int = 500
    test_attacker_epochs: int = 8
    seed: int = 0
    lr: float = 0.001
    rho: float = 0.9
    eps_opt: float = 1e-8
    entropy_term: str = "predictive"
    include_private_in_input: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.attacker_steps < 1:
            raise ConfigError(f"attacker_steps must be >= 1, got {self.attacker_steps}")
        if self.attacker_steps == 1:
            warnings.warn(
                "attacker_steps=1 lets the attacker lag the releaser; "
                "use more steps per round",
                UserWarning,
                stacklevel=2,
            )
        if self.noise_dim < 0:
            raise ConfigError(f"noise_dim must be >= 0, got {self.noise_dim}")
        if self.clip <= 0:
            raise ConfigError(f"clip must be > 0, got {self.clip}")
        if self.recurrent_l2 < 0:
            raise ConfigError(f"recurrent_l2 must be >= 0, got {self.recurrent_l2}")
        if self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if self.p < 2:
            raise ConfigError(f"distortion order p must be >= 2, got {self.p}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.test_attacker_epochs < 1:
            raise ConfigError(f"test_attacker_epochs must be >= 1, got {self.test_attacker_epochs}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.lr <= 0 or self.eps_opt <= 0 or not (0 < self.rho < 1):
            raise ConfigError("optimizer hyperparameters out of range")
        if self.entropy_term not in ENTROPY_TERMS:
            raise ConfigError(
                f"entropy_term must be one of {ENTROPY_TERMS}, got {self.entropy_term!r}"
            )
        if not self.releaser_hidden or not self.attacker_hidden or not self.test_attacker_hidden:
            raise ConfigError("all three architectures need at least one layer")

    @property
    def releaser_input_size(self) -> int:
        return 1 + self.noise_dim + (1 if self.include_private_in_input else 0)


@dataclass(frozen=True)
class Standardizer:
    """Affine map fitted on the train split's pooled consumption."""

    mean: float
    std: float

    @classmethod
    def fit(cls, y: np.ndarray) -> "Standardizer":
        std = float(np.std(y))
        if std < 1e-12:
            raise DegenerateInputError("train consumption has (near-)zero variance")
        return cls(float(np.mean(y)), std)

    def apply(self, y: np.ndarray) -> np.ndarray:
        return (y - self.mean) / self.std

    def invert(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(float(d["mean"]), float(d["std"]))


@dataclass
class RunRecord:
    iteration: int
    attacker_loss: float
    releaser_loss: float
    distortion: float
    entropy_term: float
    wall_clock: float  # seconds since run start; not serialized


@dataclass
class RunHistory:
    records: list[RunRecord] = field(default_factory=list)

    CSV_HEADER = "iteration,attacker_loss,releaser_loss,distortion,entropy_term"

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.CSV_HEADER + "\n")
            for r in self.records:
                fh.write(
                    f"{r.iteration},{r.attacker_loss:.9g},{r.releaser_loss:.9g},"
                    f"{r.distortion:.9g},{r.entropy_term:.9g}\n"
                )

    def numeric_rows(self) -> list[tuple]:
        """The deterministic part of the history (wall-clock excluded)."""
        return [
            (r.iteration, r.attacker_loss, r.releaser_loss, r.distortion, r.entropy_term)
            for r in self.records
        ]


class MinibatchSampler:
    """Without-replacement minibatches, reshuffled each epoch."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        if n < 1:
            raise UsageError("cannot sample from an empty dataset")
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self._queue: list[np.ndarray] = []

    def next(self) -> np.ndarray:
        if not self._queue:
            perm = self.rng.permutation(self.n)
            n_full = self.n // self.batch_size
            self._queue = [
                perm[i * self.batch_size : (i + 1) * self.batch_size] for i in range(n_full)
            ]
        return self._queue.pop(0)


def release_inputs(
    w: np.ndarray, u: np.ndarray, x: np.ndarray | None = None
) -> np.ndarray:
    """Stack per-step releaser inputs: [w_t || u_t] (|| x_t when enabled)."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2:
        raise UsageError(f"observed signal must be (B, T), got ndim={w.ndim}")
    parts = [w[..., None]]
    if u.shape[2] > 0:
        if u.shape[:2] != w.shape:
            raise UsageError(f"noise shape {u.shape} does not match signal {w.shape}")
        parts.append(u)
    if x is not None:
        if x.shape != w.shape:
            raise UsageError(f"private labels shape {x.shape} does not match signal {w.shape}")
        parts.append(np.asarray(x, dtype=float)[..., None])
    return np.concatenate(parts, axis=2)


def make_release(
    releaser: LayerStackParams,
    w: np.ndarray,
    u: np.ndarray,
    x: np.ndarray | None = None,
) -> np.ndarray:
    """Forward the releaser over a batch; returns the (B, T) release."""
    out, _ = stack_forward(releaser, release_inputs(w, u, x))
    return out[..., 0]


def draw_noise(rng: np.random.Generator, batch: int, seq_len: int, dim: int) -> np.ndarray:
    return rng.random((batch, seq_len, dim)) if dim > 0 else np.zeros((batch, seq_len, 0))


def attacker_gradients(
    attacker: LayerStackParams, z: np.ndarray, labels: np.ndarray
) -> tuple[dict[str, np.ndarray], float]:
    """Cross-entropy loss and its gradient w.r.t. the attacker parameters."""
    probs, tape = stack_forward(attacker, z[..., None])
    loss, dprobs = attacker_xent_with_grad(probs, labels)
    grads, _ = stack_backward(attacker, tape, dprobs)
    return grads, loss


def releaser_gradients(
    releaser: LayerStackParams,
    attacker: LayerStackParams,
    w: np.ndarray,
    y: np.ndarray,
    labels: np.ndarray,
    u: np.ndarray,
    config: TrainConfig,
    x_input: np.ndarray | None = None,
) -> tuple[dict[str, np.ndarray], float, float, float]:
    """Gradient of the releaser loss w.r.t. theta on one batch.

    Returns (grads, loss, distortion, entropy term).  The attacker is
    evaluated but never modified; with lam = 0 it is not even run.
    """
    z3, rel_tape = stack_forward(releaser, release_inputs(w, u, x_input))
    z = z3[..., 0]
    d_val, d_grad = normalized_distortion_with_grad(z, y, config.p)
    if config.lam > 0:
        probs, att_tape = stack_forward(attacker, z[..., None])
        if config.entropy_term == "predictive":
            h_val, dprobs = predictive_entropy_rate_with_grad(probs)
        else:
            h_val, dprobs = attacker_xent_with_grad(probs, labels)
        _, dz_entropy = stack_backward(attacker, att_tape, -config.lam * dprobs)
        dz = d_grad + dz_entropy[..., 0]
        loss = d_val - config.lam * h_val
    else:
        dz = d_grad
        h_val = 0.0
        loss = d_val
    grads, _ = stack_backward(releaser, rel_tape, dz[..., None])
    return grads, loss, d_val, h_val


@dataclass
class TrainResult:
    releaser: LayerStackParams
    attacker: LayerStackParams
    history: RunHistory
    standardizer: Standardizer
    best_val_loss: float
    best_iteration: int


def _check_splits(config: TrainConfig, train_ds: Dataset, val_ds: Dataset) -> None:
    if train_ds.n_days == 0 or val_ds.n_days == 0:
        raise UsageError("train and validation splits must be nonempty")
    if train_ds.seq_len != val_ds.seq_len:
        raise UsageError("train/validation sequence lengths differ")
    if train_ds.alphabet_size != val_ds.alphabet_size:
        raise UsageError("train/validation alphabets differ")


def train(config: TrainConfig, train_ds: Dataset, val_ds: Dataset) -> TrainResult:
    """Run the alternating loop; returns best-validation parameters.

    Raises a numeric error naming the iteration if any loss goes
    non-finite.
    """
    _check_splits(config, train_ds, val_ds)
    t0 = time.monotonic()
    std = Standardizer.fit(train_ds.y)
    w_train = std.apply(train_ds.y)
    w_val = std.apply(val_ds.y)
    labels_train = train_ds.x
    labels_val = val_ds.x
    x_train = train_ds.x.astype(float) if config.include_private_in_input else None
    x_val = val_ds.x.astype(float) if config.include_private_in_input else None

    releaser = init_params(
        config.releaser_input_size,
        list(config.releaser_hidden),
        1,
        "linear",
        stream_rng(config.seed, TAG_RELEASER_INIT),
    )
    attacker = init_params(
        1,
        list(config.attacker_hidden),
        train_ds.alphabet_size,
        "softmax",
        stream_rng(config.seed, TAG_ATTACKER_INIT),
    )
    rel_state = RmspropState.for_stack(
        releaser, lr=config.lr, rho=config.rho, eps=config.eps_opt, clip=config.clip
    )
    att_state = RmspropState.for_stack(
        attacker, lr=config.lr, rho=config.rho, eps=config.eps_opt, clip=config.clip
    )
    sampler = MinibatchSampler(
        train_ds.n_days, config.batch_size, stream_rng(config.seed, TAG_BATCH)
    )
    noise_rng = stream_rng(config.seed, TAG_NOISE)
    val_noise_rng = stream_rng(config.seed, TAG_VAL_NOISE)

    history = RunHistory()
    best_val = np.inf
    best_iteration = 0
    best_releaser = releaser.copy()
    best_attacker = attacker.copy()

    for it in range(1, config.iterations + 1):
        try:
            att_losses = []
            for _ in range(config.attacker_steps):
                idx = sampler.next()
                u = draw_noise(noise_rng, idx.size, train_ds.seq_len, config.noise_dim)
                x_in = x_train[idx] if x_train is not None else None
                z = make_release(releaser, w_train[idx], u, x_in)
                grads, loss = attacker_gradients(attacker, z, labels_train[idx])
                optimizer_step(attacker, grads, att_state, beta=0.0)
                att_losses.append(loss)

            idx = sampler.next()
            u = draw_noise(noise_rng, idx.size, train_ds.seq_len, config.noise_dim)
            x_in = x_train[idx] if x_train is not None else None
            grads, rel_loss, d_val, h_val = releaser_gradients(
                releaser, attacker, w_train[idx], w_train[idx], labels_train[idx], u, config, x_in
            )
            optimizer_step(releaser, grads, rel_state, beta=config.recurrent_l2)

            att_loss = float(np.mean(att_losses))
            if not all(np.isfinite(v) for v in (att_loss, rel_loss, d_val, h_val)):
                raise NumericError("non-finite loss")
            history.records.append(
                RunRecord(it, att_loss, rel_loss, d_val, h_val, time.monotonic() - t0)
            )

            u_val = draw_noise(val_noise_rng, val_ds.n_days, val_ds.seq_len, config.noise_dim)
            _, val_loss, _, _ = releaser_gradients(
                releaser, attacker, w_val, w_val, labels_val, u_val, config, x_val
            )
        except NumericError as exc:
            raise NumericError(f"at iteration {it}: {exc}") from None
        if val_loss < best_val:
            best_val = val_loss
            best_iteration = it
            best_releaser = releaser.copy()
            best_attacker = attacker.copy()

    return TrainResult(best_releaser, best_attacker, history, std, float(best_val), best_iteration)


def attack_predictions(attacker: LayerStackParams, z: np.ndarray) -> np.ndarray:
    """Per-step argmax labels from the attacker run on a (B, T) release."""
    probs, _ = stack_forward(attacker, z[..., None])
    return probs.argmax(axis=-1)


def train_test_attacker(
    releaser: LayerStackParams,
    standardizer: Standardizer,
    config: TrainConfig,
    train_ds: Dataset,
    val_ds: Dataset,
) -> LayerStackParams:
    """Train a fresh attacker against the frozen releaser.

    Epochs over the train split's releases (fresh noise per batch);
    returns the epoch snapshot with the best validation balanced
    accuracy.  The releaser is never modified.
    """
    from .analytics import balanced_accuracy  # late import; analytics builds on this module

    _check_splits(config, train_ds, val_ds)
    w_train = standardizer.apply(train_ds.y)
    w_val = standardizer.apply(val_ds.y)
    x_train = train_ds.x.astype(float) if config.include_private_in_input else None
    x_val = val_ds.x.astype(float) if config.include_private_in_input else None

    attacker = init_params(
        1,
        list(config.test_attacker_hidden),
        train_ds.alphabet_size,
        "softmax",
        stream_rng(config.seed, TAG_TEST_ATTACKER_INIT),
    )
    state = RmspropState.for_stack(
        attacker, lr=config.lr, rho=config.rho, eps=config.eps_opt, clip=config.clip
    )
    sampler = MinibatchSampler(
        train_ds.n_days, config.batch_size, stream_rng(config.seed, TAG_TEST_ATTACKER_BATCH)
    )
    noise_rng = stream_rng(config.seed, TAG_TEST_ATTACKER_NOISE)
    batches_per_epoch = max(1, train_ds.n_days // min(config.batch_size, train_ds.n_days))

    best_acc = -1.0
    best = attacker.copy()
    for epoch in range(1, config.test_attacker_epochs + 1):
        try:
            for _ in range(batches_per_epoch):
                idx = sampler.next()
                u = draw_noise(noise_rng, idx.size, train_ds.seq_len, config.noise_dim)
                x_in = x_train[idx] if x_train is not None else None
                z = make_release(releaser, w_train[idx], u, x_in)
                grads, loss = attacker_gradients(attacker, z, train_ds.x[idx])
                if not np.isfinite(loss):
                    raise NumericError("non-finite test-attacker loss")
                optimizer_step(attacker, grads, state, beta=0.0)
            u_val = draw_noise(noise_rng, val_ds.n_days, val_ds.seq_len, config.noise_dim)
            z_val = make_release(releaser, w_val, u_val, x_val)
            acc = balanced_accuracy(
                attack_predictions(attacker, z_val), val_ds.x, val_ds.alphabet_size
            )
        except NumericError as exc:
            raise NumericError(f"at epoch {epoch}: {exc}") from None
        if acc > best_acc:
            best_acc = acc
            best = attacker.copy()
    return best
