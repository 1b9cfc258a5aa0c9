"""Losses and metrics for the release/attack game.

Conventions: losses and entropies are in nats; probabilities are floored
at PROB_FLOOR inside every log; distortion batches are (B, T) arrays of
scalar per-step signals (a single (T,) sequence is promoted to B=1).

The ``*_with_grad`` variants return the analytic gradient alongside the
value; the trainer chains them through the networks' BPTT.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateInputError, UsageError

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class DistortionSpec:
    """Distortion order p, privacy weight lambda, sequence length T."""

    p: float
    lam: float
    seq_len: int

    def __post_init__(self):
        if self.p < 2:
            raise ConfigError(f"distortion order must be >= 2, got {self.p}")
        if self.lam < 0:
            raise ConfigError(f"privacy weight must be >= 0, got {self.lam}")
        if self.seq_len < 1:
            raise ConfigError(f"sequence length must be >= 1, got {self.seq_len}")


def _as_batch(z: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if z.shape != y.shape:
        raise UsageError(f"shape mismatch: release {z.shape} vs signal {y.shape}")
    if z.ndim == 1:
        z, y = z[None], y[None]
    if z.ndim != 2:
        raise UsageError(f"expected (T,) or (B, T) arrays, got ndim={z.ndim}")
    if z.shape[0] == 0 or z.shape[1] == 0:
        raise UsageError("empty batch")
    return z, y


def _lp_norms(u: np.ndarray, p: float) -> np.ndarray:
    """Row-wise lp norms of (B, T), factored by the row max for stability."""
    m = np.abs(u).max(axis=1)
    norms = np.zeros(u.shape[0])
    nz = m > 0
    if np.any(nz):
        scaled = np.abs(u[nz]) / m[nz, None]
        norms[nz] = m[nz] * np.power(np.power(scaled, p).sum(axis=1), 1.0 / p)
    return norms


def lp_distance(z: np.ndarray, y: np.ndarray, p: float) -> float:
    """d(z, y) = (sum_t |z_t - y_t|^p)^(1/p) for one sequence."""
    if p < 1:
        raise ConfigError(f"lp order must be >= 1, got {p}")
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if z.shape != y.shape or z.ndim != 1:
        raise UsageError(f"expected equal-length 1-d sequences, got {z.shape} and {y.shape}")
    return float(_lp_norms((z - y)[None], p)[0])


def normalized_distortion(z: np.ndarray, y: np.ndarray, p: float) -> float:
    """Batch-mean lp distortion divided by the sequence length."""
    value, _ = normalized_distortion_with_grad(z, y, p)
    return value


def normalized_distortion_with_grad(
    z: np.ndarray, y: np.ndarray, p: float
) -> tuple[float, np.ndarray]:
    """Normalized distortion and its gradient w.r.t. the release z.

    d(d)/d(z_t) = (|u_t| / d)^(p-1) * sign(u_t) with u = z - y, taken as
    0 where d = 0; dividing by batch size and T gives the gradient of
    the batch value.
    """
    if p < 1:
        raise ConfigError(f"lp order must be >= 1, got {p}")
    zb, yb = _as_batch(z, y)
    batch, seq_len = zb.shape
    u = zb - yb
    norms = _lp_norms(u, p)
    grad = np.zeros_like(u)
    nz = norms > 0
    if np.any(nz):
        ratio = np.abs(u[nz]) / norms[nz, None]  # in [0, 1]
        grad[nz] = np.power(ratio, p - 1.0) * np.sign(u[nz])
    grad /= batch * seq_len
    value = float(norms.mean() / seq_len)
    if np.asarray(z).ndim == 1:
        grad = grad[0]
    return value, grad


def ne_p(z: np.ndarray, y: np.ndarray, p: float) -> float:
    """Normalized error: mean ||y - z||_p over mean ||y||_p."""
    if p < 1:
        raise ConfigError(f"lp order must be >= 1, got {p}")
    zb, yb = _as_batch(z, y)
    denom = _lp_norms(yb, p).mean()
    if denom == 0.0:
        raise DegenerateInputError("signal batch is identically zero; normalized error undefined")
    return float(_lp_norms(zb - yb, p).mean() / denom)


def _check_probs_labels(probs: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    if probs.ndim != 3:
        raise UsageError(f"probabilities must be (B, T, |X|), got ndim={probs.ndim}")
    if labels.shape != probs.shape[:2]:
        raise UsageError(f"labels shape {labels.shape} does not match probs {probs.shape[:2]}")
    if not np.issubdtype(labels.dtype, np.integer):
        raise UsageError("labels must be integers")
    k = probs.shape[2]
    if labels.min() < 0 or labels.max() >= k:
        raise UsageError(f"labels must lie in [0, {k - 1}]")
    return probs, labels


def attacker_xent(probs: np.ndarray, labels: np.ndarray) -> float:
    """Per-step cross-entropy of the attacker's guesses against the truth."""
    value, _ = attacker_xent_with_grad(probs, labels)
    return value


def attacker_xent_with_grad(
    probs: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Cross-entropy (1/(B*T)) sum -log p[label] and its gradient in p."""
    probs, labels = _check_probs_labels(probs, labels)
    batch, seq_len, _ = probs.shape
    b_idx, t_idx = np.ogrid[:batch, :seq_len]
    picked = np.maximum(probs[b_idx, t_idx, labels], PROB_FLOOR)
    value = float(-np.log(picked).mean())
    grad = np.zeros_like(probs)
    grad[b_idx, t_idx, labels] = -1.0 / (picked * batch * seq_len)
    return value, grad


def predictive_entropy_rate(probs: np.ndarray) -> float:
    """Mean Shannon entropy of the per-step output distributions (nats)."""
    value, _ = predictive_entropy_rate_with_grad(probs)
    return value


def predictive_entropy_rate_with_grad(probs: np.ndarray) -> tuple[float, np.ndarray]:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 3:
        raise UsageError(f"probabilities must be (B, T, |X|), got ndim={probs.ndim}")
    batch, seq_len, _ = probs.shape
    logs = np.log(np.maximum(probs, PROB_FLOOR))
    value = float(-(probs * logs).sum(axis=2).mean())
    grad = -(logs + 1.0) / (batch * seq_len)
    return value, grad


def releaser_loss(distortion: float, entropy_rate: float, lam: float) -> float:
    """Distortion minus lam times the attacker's entropy rate."""
    if lam < 0:
        raise ConfigError(f"privacy weight must be >= 0, got {lam}")
    return float(distortion - lam * entropy_rate)
