"""Transducer negative log-likelihood via forward-backward recursion.

The forward variable alpha(t, u) is the total probability of emitting the
first u labels while consuming frames 1..t; the backward variable
beta(t, u) is the total probability of emitting the remaining labels over
frames t..T.  Both satisfy first-order recurrences over the alignment
lattice::

    alpha(t, u) = y(t, u-1) * alpha(t, u-1) + b(t-1, u) * alpha(t-1, u)
    beta(t, u)  = y(t, u)   * beta(t, u+1)  + b(t, u)   * beta(t+1, u)

with boundaries alpha(1, 0) = 1 and beta(T, U) = b(T, U); out-of-range
terms contribute probability zero.  Everything is computed in log space
with -inf as the exact zero, so products of hundreds of step
probabilities never underflow.

The total probability is alpha(T, U) * b(T, U) = beta(1, 0), and equals
the sum of alpha * beta over any anti-diagonal {(t, u): t + u = n}
because every complete alignment crosses each diagonal exactly once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .lattice import BLANK_ID, NEG_INF, JointLattice

__all__ = [
    "AlphaBetaTables",
    "LossGradients",
    "forward",
    "backward",
    "loss",
    "node_posterior",
    "gradients",
    "chain_through_softmax",
    "diagonal_log_likelihoods",
]


def _logaddexp(a: float, b: float) -> float:
    # Scalar log(e^a + e^b); passes -inf through exactly so lattice
    # borders never produce NaN.
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@dataclass(frozen=True)
class AlphaBetaTables:
    """Forward/backward tables in log space plus the sequence log-likelihood."""

    log_alpha: np.ndarray  # (T, U+1)
    log_beta: np.ndarray  # (T, U+1)
    log_likelihood: float

    @property
    def impossible(self) -> bool:
        """True when no alignment path has nonzero probability."""
        return self.log_likelihood == NEG_INF


@dataclass(frozen=True)
class LossGradients:
    """Gradients of the (optionally regularized) NLL.

    ``d_log_label[t, u]`` is the derivative with respect to the log
    label-emission probability at node (t, u) (zero in column U where no
    label remains); ``d_log_blank`` likewise for the blank.  ``d_logits``
    chains both through each node's softmax.  When the loss is infinite
    there is no signal to propagate: all tables are zero and
    ``degenerate`` is set.
    """

    d_log_label: np.ndarray  # (T, U+1)
    d_log_blank: np.ndarray  # (T, U+1)
    d_logits: np.ndarray  # (T, U+1, V+1)
    degenerate: bool = False


def forward(lattice: JointLattice, labels: Sequence[int]) -> np.ndarray:
    """Fill the log alpha table in topological order, shape (T, U+1)."""
    T, U = lattice.num_frames, lattice.num_labels
    ly = lattice.label_log_probs(labels).tolist()  # (T, U)
    lb = lattice.blank_log_probs().tolist()  # (T, U+1)
    la = [[NEG_INF] * (U + 1) for _ in range(T)]
    la[0][0] = 0.0
    for t in range(T):
        row = la[t]
        for u in range(U + 1):
            if t == 0 and u == 0:
                continue
            emit = row[u - 1] + ly[t][u - 1] if u > 0 else NEG_INF
            stay = la[t - 1][u] + lb[t - 1][u] if t > 0 else NEG_INF
            row[u] = _logaddexp(emit, stay)
    return np.array(la)


def backward(lattice: JointLattice, labels: Sequence[int]) -> np.ndarray:
    """Fill the log beta table from the (T, U) boundary, shape (T, U+1)."""
    T, U = lattice.num_frames, lattice.num_labels
    ly = lattice.label_log_probs(labels).tolist()
    lb = lattice.blank_log_probs().tolist()
    lbeta = [[NEG_INF] * (U + 1) for _ in range(T)]
    lbeta[T - 1][U] = lb[T - 1][U]
    for t in range(T - 1, -1, -1):
        row = lbeta[t]
        for u in range(U, -1, -1):
            if t == T - 1 and u == U:
                continue
            emit = row[u + 1] + ly[t][u] if u < U else NEG_INF
            stay = lbeta[t + 1][u] + lb[t][u] if t < T - 1 else NEG_INF
            row[u] = _logaddexp(emit, stay)
    return np.array(lbeta)


def loss(lattice: JointLattice, labels: Sequence[int]) -> tuple[float, AlphaBetaTables]:
    """Negative log-likelihood of ``labels`` plus the alpha/beta tables.

    An infinite NLL (every path has zero probability, possible only for
    hand-built lattices with exact zeros) is reported as +inf with
    ``tables.impossible`` set, not as an error.
    """
    la = forward(lattice, labels)
    lbeta = backward(lattice, labels)
    T, U = lattice.num_frames, lattice.num_labels
    ll = float(la[T - 1, U] + lattice.log_probs[T - 1, U, BLANK_ID])
    tables = AlphaBetaTables(log_alpha=la, log_beta=lbeta, log_likelihood=ll)
    return -ll, tables


def diagonal_log_likelihoods(tables: AlphaBetaTables) -> np.ndarray:
    """Per-diagonal logsumexp of alpha + beta, one entry per n in 1..T+U.

    Every entry equals the sequence log-likelihood up to roundoff; exposed
    as a diagnostic for the diagonal-invariance self-check.
    """
    la, lb = tables.log_alpha, tables.log_beta
    T, Up1 = la.shape
    combined = la + lb
    out = np.empty(T + Up1 - 1)
    for n in range(1, T + Up1):
        # nodes with t + u = n, 1 <= t <= T, 0 <= u <= U
        ts = np.arange(max(1, n - Up1 + 1), min(T, n) + 1)
        vals = combined[ts - 1, n - ts]
        m = vals.max()
        if m == NEG_INF:
            out[n - 1] = NEG_INF
        else:
            out[n - 1] = m + math.log(np.exp(vals - m).sum())
    return out


def node_posterior(tables: AlphaBetaTables, t: int, u: int) -> float:
    """Probability that a complete alignment passes through node (t, u)."""
    T, Up1 = tables.log_alpha.shape
    if not (1 <= t <= T and 0 <= u <= Up1 - 1):
        raise ValueError(f"node (t={t}, u={u}) outside lattice ({T}, {Up1 - 1})")
    if tables.impossible:
        return 0.0
    return float(
        np.exp(tables.log_alpha[t - 1, u] + tables.log_beta[t - 1, u] - tables.log_likelihood)
    )


def gradients(
    lattice: JointLattice,
    labels: Sequence[int],
    tables: AlphaBetaTables,
    lam: float = 0.0,
) -> LossGradients:
    """Closed-form NLL gradients, optionally with label-gradient scaling.

    With respect to the node log-probabilities::

        d/d log y(t, u) = -alpha(t, u) y(t, u) beta(t, u+1) / P
        d/d log b(t, u) = -alpha(t, u) b(t, u) beta(t+1, u) / P

    where the (T, U) blank uses its boundary form (derivative exactly -1)
    and out-of-range beta terms are zero.  ``lam`` scales the label
    gradient by (1 + lam) before the softmax chain rule; the blank
    gradient is never touched.  Both tables are therefore <= 0
    everywhere, and each node's d_logits row sums to zero.
    """
    if lam < 0:
        raise ValueError(f"regularization weight must be >= 0, got {lam}")
    T, U = lattice.num_frames, lattice.num_labels
    la, lb, ll = tables.log_alpha, tables.log_beta, tables.log_likelihood
    if tables.impossible or not np.isfinite(ll):
        zeros2 = np.zeros((T, U + 1))
        zeros3 = np.zeros_like(lattice.log_probs)
        return LossGradients(zeros2, zeros2, zeros3, degenerate=True)

    log_b = lattice.blank_log_probs()

    # label term: alpha(t, u) + log y(t, u) + beta(t, u+1); empty at u = U
    ly_full = np.full((T, U + 1), NEG_INF)
    beta_right = np.full((T, U + 1), NEG_INF)
    if U > 0:
        ly_full[:, :U] = lattice.label_log_probs(labels)
        beta_right[:, :U] = lb[:, 1:]
    d_label = -np.exp(la + ly_full + beta_right - ll)

    # blank term: alpha(t, u) + log b(t, u) + beta(t+1, u); the final
    # blank at (T, U) has no successor node and contributes -alpha b / P
    beta_down = np.full((T, U + 1), NEG_INF)
    beta_down[:-1, :] = lb[1:, :]
    d_blank = -np.exp(la + log_b + beta_down - ll)
    d_blank[T - 1, U] = -np.exp(la[T - 1, U] + log_b[T - 1, U] - ll)

    d_label_scaled = (1.0 + lam) * d_label
    d_logits = chain_through_softmax(lattice, labels, d_label_scaled, d_blank)
    return LossGradients(d_label_scaled, d_blank, d_logits)


def chain_through_softmax(
    lattice: JointLattice,
    labels: Sequence[int],
    d_log_label: np.ndarray,
    d_log_blank: np.ndarray,
) -> np.ndarray:
    """Chain per-node (label, blank) log-prob gradients through the softmax.

    Each node's loss contribution touches exactly two entries of its
    log-softmax row, so with p = exp(log_probs)::

        d_logits[k] = g_y * (1[k = label] - p[k]) + g_b * (1[k = blank] - p[k])

    The softmax Jacobian annihilates constants, hence every row of the
    result sums to zero.
    """
    T, U = lattice.num_frames, lattice.num_labels
    probs = np.exp(lattice.log_probs)
    g_sum = d_log_label + d_log_blank  # (T, U+1)
    d_logits = -g_sum[:, :, None] * probs
    d_logits[:, :, BLANK_ID] += d_log_blank
    if U > 0:
        toks = [int(k) for k in labels]
        if len(toks) != U:
            raise ValueError(f"label sequence length {len(toks)} != U={U}")
        d_logits[:, np.arange(U), toks] += d_log_label[:, :U]
    return d_logits
