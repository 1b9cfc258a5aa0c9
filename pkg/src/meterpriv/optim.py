"""RMSprop with per-component gradient clipping and recurrent-weight decay.

Update order is fixed for determinism: clip the raw gradients to
[-C, C], add the l2 penalty gradient (2*beta*K, recurrent matrices
only, unclipped), then apply the RMSprop rule

    a <- rho*a + (1 - rho)*g^2
    theta <- theta - lr * g / (sqrt(a) + eps)

``optimizer_step`` performs exactly that sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError, UsageError
from .lstm import LayerStackParams


@dataclass
class RmspropState:
    """Per-parameter squared-gradient accumulators plus hyperparameters."""

    accumulators: dict[str, np.ndarray]
    lr: float = 0.001
    rho: float = 0.9
    eps: float = 1e-8
    clip: float = 1.0
    step_count: int = 0

    @classmethod
    def for_stack(
        cls,
        stack: LayerStackParams,
        lr: float = 0.001,
        rho: float = 0.9,
        eps: float = 1e-8,
        clip: float = 1.0,
    ) -> "RmspropState":
        if not (0.0 < rho < 1.0):
            raise ConfigError(f"rmsprop decay must be in (0,1), got {rho}")
        if lr <= 0 or eps <= 0 or clip <= 0:
            raise ConfigError("learning rate, stabilizer and clip value must be > 0")
        acc = {name: np.zeros_like(arr) for name, arr in stack.named_arrays()}
        return cls(acc, lr=lr, rho=rho, eps=eps, clip=clip)


def clip_gradients(grads: dict[str, np.ndarray], clip: float) -> dict[str, np.ndarray]:
    """Clip every gradient component to [-clip, clip]."""
    if clip <= 0:
        raise ConfigError(f"clip value must be > 0, got {clip}")
    return {name: np.clip(g, -clip, clip) for name, g in grads.items()}


def add_recurrent_l2(
    grads: dict[str, np.ndarray], stack: LayerStackParams, beta: float
) -> dict[str, np.ndarray]:
    """Add the gradient of beta * sum of squared recurrent weights.

    Only the recurrent matrices K receive the 2*beta*K term; input
    weights, biases and the head are untouched.
    """
    if beta < 0:
        raise ConfigError(f"recurrent l2 weight must be >= 0, got {beta}")
    params = dict(stack.named_arrays())
    out = {}
    for name, g in grads.items():
        if name.endswith(".w_rec"):
            out[name] = g + 2.0 * beta * params[name]
        else:
            out[name] = g.copy()
    return out


def rmsprop_step(
    stack: LayerStackParams, grads: dict[str, np.ndarray], state: RmspropState
) -> None:
    """Apply one RMSprop update to the stack in place."""
    params = dict(stack.named_arrays())
    if set(grads) != set(params) or set(state.accumulators) != set(params):
        raise UsageError("gradient/accumulator names do not match stack parameters")
    for name, arr in params.items():
        g = grads[name]
        if g.shape != arr.shape or state.accumulators[name].shape != arr.shape:
            raise UsageError(f"shape mismatch for {name}")
        acc = state.accumulators[name]
        acc *= state.rho
        acc += (1.0 - state.rho) * g * g
        update = state.lr * g / (np.sqrt(acc) + state.eps)
        if not np.all(np.isfinite(update)):
            raise NumericError(f"non-finite optimizer update for {name}")
        arr -= update
    state.step_count += 1


def optimizer_step(
    stack: LayerStackParams,
    grads: dict[str, np.ndarray],
    state: RmspropState,
    beta: float = 0.0,
) -> None:
    """Clip, add recurrent l2, then RMSprop; the one true update order."""
    clipped = clip_gradients(grads, state.clip)
    regularized = add_recurrent_l2(clipped, stack, beta)
    rmsprop_step(stack, regularized, state)
