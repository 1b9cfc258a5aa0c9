"""Exact information measures on small finite-alphabet release processes.

A JointProcessSpec pins down p(x^T, z^T, xhat^T) through the causal
factorization

    p(x^T) * prod_t p(z_t | x^t) * prod_t q(xhat_t | z^t)

with full probability tables (alphabets <= 4, T <= 4, so enumeration is
exact and fast).  On top of the enumerated joint we compute directed
information, causally conditional entropy, and machine-check the two
inequality chains the training objective is derived from: the
distortion-entropy surrogate bound and the cross-entropy >= entropy-rate
bound.

Directed information is computed twice on purpose: once via entropy
combinations and once via a literal conditional-mutual-information sum.
The two routes share no arithmetic and must agree to 1e-10; do not
"simplify" one into the other.

All values in nats; ``to_bits`` converts exactly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

MAX_SEQ_LEN = 4
MAX_ALPHABET = 4
NORM_TOL = 1e-12


def to_bits(nats: float) -> float:
    return nats / math.log(2.0)


@dataclass
class JointProcessSpec:
    """Source pmf, per-step release kernels, per-step attacker kernels.

    source: shape (nx,)*T, sums to 1.
    release[t]: shape (nx,)*(t+1) + (nz,); p(z_t | x_1..x_{t+1}), last
    axis normalized.
    attacker[t]: shape (nz,)*(t+1) + (nxhat,); q(xhat_t | z_1..z_{t+1}).
    """

    seq_len: int
    nx: int
    nz: int
    nxhat: int
    source: np.ndarray
    release: list[np.ndarray]
    attacker: list[np.ndarray]

    def validate(self) -> None:
        if not (1 <= self.seq_len <= MAX_SEQ_LEN):
            raise ConfigError(f"seq_len must be in [1, {MAX_SEQ_LEN}], got {self.seq_len}")
        for name, n in (("nx", self.nx), ("nz", self.nz), ("nxhat", self.nxhat)):
            if not (1 <= n <= MAX_ALPHABET):
                raise ConfigError(f"{name} must be in [1, {MAX_ALPHABET}], got {n}")
        if self.source.shape != (self.nx,) * self.seq_len:
            raise ConfigError(f"source table has shape {self.source.shape}")
        if self.source.min() < 0 or abs(self.source.sum() - 1.0) > NORM_TOL:
            raise ConfigError("source pmf must be non-negative and sum to 1 within 1e-12")
        if len(self.release) != self.seq_len or len(self.attacker) != self.seq_len:
            raise ConfigError("need one release and one attacker kernel per step")
        for t, table in enumerate(self.release):
            want = (self.nx,) * (t + 1) + (self.nz,)
            if table.shape != want:
                raise ConfigError(f"release[{t}] has shape {table.shape}, expected {want}")
            if table.min() < 0 or np.abs(table.sum(axis=-1) - 1.0).max() > NORM_TOL:
                raise ConfigError(f"release[{t}] rows must be pmfs normalized within 1e-12")
        for t, table in enumerate(self.attacker):
            want = (self.nz,) * (t + 1) + (self.nxhat,)
            if table.shape != want:
                raise ConfigError(f"attacker[{t}] has shape {table.shape}, expected {want}")
            if table.min() < 0 or np.abs(table.sum(axis=-1) - 1.0).max() > NORM_TOL:
                raise ConfigError(f"attacker[{t}] rows must be pmfs normalized within 1e-12")


@dataclass
class JointPmf:
    """Full table over (x^T, z^T, xhat^T); axes x_1..x_T, z_1..z_T, xhat_1..xhat_T."""

    table: np.ndarray
    seq_len: int
    nx: int
    nz: int
    nxhat: int

    def marginal(self, x_steps=(), z_steps=(), xhat_steps=()) -> np.ndarray:
        """Marginalize down to the given (0-based) step axes, order preserved."""
        keep = (
            [s for s in x_steps]
            + [self.seq_len + s for s in z_steps]
            + [2 * self.seq_len + s for s in xhat_steps]
        )
        drop = tuple(a for a in range(3 * self.seq_len) if a not in keep)
        return self.table.sum(axis=drop)


def joint_pmf(spec: JointProcessSpec) -> JointPmf:
    """Enumerate the full joint distribution of the factorized process."""
    spec.validate()
    T, nx, nz, nxh = spec.seq_len, spec.nx, spec.nz, spec.nxhat
    table = np.zeros((nx,) * T + (nz,) * T + (nxh,) * T)
    q_by_z = {}
    for z in itertools.product(range(nz), repeat=T):
        q = np.ones(())
        for t in range(T):
            q = np.multiply.outer(q, spec.attacker[t][z[: t + 1]])
        q_by_z[z] = q
    for x in itertools.product(range(nx), repeat=T):
        px = float(spec.source[x])
        if px == 0.0:
            continue
        for z in itertools.product(range(nz), repeat=T):
            w = px
            for t in range(T):
                w *= float(spec.release[t][x[: t + 1] + (z[t],)])
                if w == 0.0:
                    break
            if w > 0.0:
                table[x + z] = w * q_by_z[z]
    return JointPmf(table, T, nx, nz, nxh)


def _entropy(pmf: np.ndarray) -> float:
    p = np.asarray(pmf).ravel()
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def directed_information_terms(joint: JointPmf) -> list[float]:
    """Per-step terms I(X^t; Xhat_t | Xhat^{t-1}) via entropy combinations."""
    terms = []
    for t in range(joint.seq_len):
        steps = range(t + 1)
        m = joint.marginal(x_steps=steps, xhat_steps=steps)
        # axes: x_1..x_{t+1}, xhat_1..xhat_{t+1}; last axis is xhat_{t+1}
        x_axes = tuple(range(t + 1))
        h_abc = _entropy(m)
        h_ac = _entropy(m.sum(axis=-1))
        m_hat = m.sum(axis=x_axes)
        h_bc = _entropy(m_hat)
        h_c = _entropy(m_hat.sum(axis=-1))
        terms.append(h_bc - h_c - h_abc + h_ac)
    return terms


def directed_information(joint: JointPmf) -> float:
    """I(X^T -> Xhat^T) = sum_t I(X^t; Xhat_t | Xhat^{t-1}), in nats."""
    return float(sum(directed_information_terms(joint)))


def _literal_cmi(p_abc: np.ndarray) -> float:
    """I(A;B|C) = sum p(a,b,c) log( p(a,b|c) / (p(a|c) p(b|c)) ), written out."""
    p_c = p_abc.sum(axis=(0, 1))
    p_ac = p_abc.sum(axis=1)
    p_bc = p_abc.sum(axis=0)
    total = 0.0
    na, nb, nc = p_abc.shape
    for a in range(na):
        for b in range(nb):
            for c in range(nc):
                p = p_abc[a, b, c]
                if p > 0.0:
                    p_ab_given_c = p / p_c[c]
                    p_a_given_c = p_ac[a, c] / p_c[c]
                    p_b_given_c = p_bc[b, c] / p_c[c]
                    total += p * math.log(p_ab_given_c / (p_a_given_c * p_b_given_c))
    return total


def directed_information_literal(joint: JointPmf) -> float:
    """Dual route: the same sum with each term as a literal CMI triple sum."""
    total = 0.0
    for t in range(joint.seq_len):
        steps = range(t + 1)
        m = joint.marginal(x_steps=steps, xhat_steps=steps)
        n_ax = t + 1
        # reorder to (A=x^t block, B=xhat_t, C=xhat^{t-1} block) and flatten
        order = list(range(n_ax)) + [2 * n_ax - 1] + list(range(n_ax, 2 * n_ax - 1))
        m_perm = np.transpose(m, order)
        a_size = joint.nx ** n_ax
        c_size = joint.nxhat ** (n_ax - 1)
        total += _literal_cmi(m_perm.reshape(a_size, joint.nxhat, c_size))
    return total


def causally_conditional_entropy(joint: JointPmf) -> float:
    """H(Xhat^T || Z^T) = sum_t H(Xhat_t | Xhat^{t-1}, Z^t), in nats."""
    total = 0.0
    for t in range(joint.seq_len):
        m = joint.marginal(z_steps=range(t + 1), xhat_steps=range(t + 1))
        total += _entropy(m) - _entropy(m.sum(axis=-1))
    return total


def causally_conditional_entropy_simplified(joint: JointPmf) -> float:
    """sum_t H(Xhat_t | Z^t); equals the general form under the factorization."""
    total = 0.0
    for t in range(joint.seq_len):
        m = joint.marginal(z_steps=range(t + 1), xhat_steps=[t])
        total += _entropy(m) - _entropy(m.sum(axis=-1))
    return total


@dataclass
class BoundChainReport:
    """Quantities and slacks of the surrogate bound chain.

    di <= middle <= upper must hold (up to enumeration round-off):
    middle = sum_t [H(Xhat_t|Xhat^{t-1}) - H(Xhat_t|Z^t)],
    upper = T log|X| - H(Xhat^T || Z^T).
    """

    di: float
    middle: float
    upper: float
    ccent_general: float
    ccent_simplified: float

    @property
    def slack_lower(self) -> float:
        return self.middle - self.di

    @property
    def slack_upper(self) -> float:
        return self.upper - self.middle


def verify_bound_chain(spec: JointProcessSpec) -> BoundChainReport:
    spec.validate()
    if spec.nxhat != spec.nx:
        raise ConfigError(
            f"bound chain needs |Xhat| = |X|, got {spec.nxhat} vs {spec.nx}"
        )
    joint = joint_pmf(spec)
    di = directed_information(joint)
    middle = 0.0
    for t in range(joint.seq_len):
        m_hat = joint.marginal(xhat_steps=range(t + 1))
        h_given_past = _entropy(m_hat) - _entropy(m_hat.sum(axis=-1))
        m_z = joint.marginal(z_steps=range(t + 1), xhat_steps=[t])
        h_given_release = _entropy(m_z) - _entropy(m_z.sum(axis=-1))
        middle += h_given_past - h_given_release
    ccent = causally_conditional_entropy(joint)
    upper = joint.seq_len * math.log(spec.nx) - ccent
    return BoundChainReport(
        di=di,
        middle=middle,
        upper=upper,
        ccent_general=ccent,
        ccent_simplified=causally_conditional_entropy_simplified(joint),
    )


@dataclass
class XentBoundReport:
    """Attacker cross-entropy vs the causally conditional entropy rate."""

    xent: float
    entropy_rate: float

    @property
    def slack(self) -> float:
        return self.xent - self.entropy_rate


def verify_xent_bound(spec: JointProcessSpec) -> XentBoundReport:
    spec.validate()
    if spec.nxhat != spec.nx:
        raise ConfigError(
            f"cross-entropy bound needs |Xhat| = |X|, got {spec.nxhat} vs {spec.nx}"
        )
    joint = joint_pmf(spec)
    T = spec.seq_len
    xent = 0.0
    for t in range(T):
        m = joint.marginal(x_steps=[t], z_steps=range(t + 1))
        # to (z_1..z_{t+1}, x_{t+1}) aligning with attacker[t]'s layout
        p = np.moveaxis(m, 0, -1)
        q = spec.attacker[t]
        mass = p > 0
        if np.any(q[mass] == 0.0):
            xent = math.inf
            break
        xent += float(-(p[mass] * np.log(q[mass])).sum())
    entropy_rate = causally_conditional_entropy(joint) / T
    return XentBoundReport(
        xent=xent / T if math.isfinite(xent) else xent, entropy_rate=entropy_rate
    )


def true_posterior_attacker(spec: JointProcessSpec) -> JointProcessSpec:
    """Replace the attacker kernels by the exact posteriors p(x_t | z^t).

    This is the equality case of the cross-entropy bound: with
    q = p(x_t|z^t) and Xhat drawn from q, the bound is tight.
    """
    spec.validate()
    if spec.nxhat != spec.nx:
        raise ConfigError("true-posterior attacker needs |Xhat| = |X|")
    joint = joint_pmf(spec)
    new_attacker = []
    for t in range(spec.seq_len):
        m = joint.marginal(x_steps=[t], z_steps=range(t + 1))
        p = np.moveaxis(m, 0, -1)  # (z_1..z_{t+1}, x)
        pz = p.sum(axis=-1, keepdims=True)
        q = np.where(pz > 0, p / np.where(pz > 0, pz, 1.0), 1.0 / spec.nx)
        q /= q.sum(axis=-1, keepdims=True)
        new_attacker.append(q)
    return JointProcessSpec(
        spec.seq_len, spec.nx, spec.nz, spec.nxhat, spec.source, spec.release, new_attacker
    )


def random_spec(
    rng: np.random.Generator, seq_len: int = 3, nx: int = 2, nz: int = 2, nxhat: int = 2
) -> JointProcessSpec:
    """A fully random factorized spec (uniform draws, renormalized)."""

    def pmf_table(shape):
        t = rng.random(shape) + 1e-3  # bound away from zero rows
        return t / t.sum(axis=-1, keepdims=True)

    source = rng.random((nx,) * seq_len) + 1e-3
    source /= source.sum()
    release = [pmf_table((nx,) * (t + 1) + (nz,)) for t in range(seq_len)]
    attacker = [pmf_table((nz,) * (t + 1) + (nxhat,)) for t in range(seq_len)]
    return JointProcessSpec(seq_len, nx, nz, nxhat, source, release, attacker)
