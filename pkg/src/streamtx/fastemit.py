"""Sequence-level emission regularization for transducer training.

The probability of all complete alignments through a node splits into a
blank part and a label part::

    alpha(t, u) beta(t, u) = alpha(t, u) b(t, u) beta(t+1, u)    # blank
                           + alpha(t, u) y(t, u) beta(t, u+1)    # label

The regularizer additionally rewards the label part, summed over any
anti-diagonal, with weight ``lam``.  Its entire training-time effect is a
(1 + lam) scaling of the label-emission gradient; the blank gradient is
untouched, so regularized training costs nothing extra.

The regularized objective itself depends on which diagonal n is chosen,
so it is exposed only as a diagnostic; the scalar reported during
training stays the plain NLL.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import transducer
from .lattice import NEG_INF, JointLattice, lattice_from_logits
from .transducer import AlphaBetaTables, LossGradients

__all__ = [
    "FastEmitConfig",
    "predict_label_mass",
    "regularized_loss_diagnostic",
    "fastemit_gradients",
    "measure_diagnostic_gradient_gap",
]


@dataclass(frozen=True)
class FastEmitConfig:
    """Regularization weight plus the diagonal used by the diagnostic.

    ``diagnostic_diagonal`` is either an integer n in 1..T+U or "all",
    in which case the diagnostic reports one value per diagonal.
    """

    lam: float = 0.0
    diagnostic_diagonal: Union[int, str] = "all"

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError(f"regularization weight must be >= 0, got {self.lam}")
        if isinstance(self.diagnostic_diagonal, str) and self.diagnostic_diagonal != "all":
            raise ValueError(
                f"diagnostic_diagonal must be an integer or 'all', "
                f"got {self.diagnostic_diagonal!r}"
            )


def predict_label_mass(
    lattice: JointLattice,
    labels: Sequence[int],
    tables: AlphaBetaTables,
    t: int,
    u: int,
) -> float:
    """Probability mass of alignments that take the label step at (t, u).

    Returns alpha(t, u) * y(t, u) * beta(t, u+1); exactly zero at u = U
    where no label remains to emit.  This is one of the two decomposition
    terms of the node posterior, so it never exceeds it.
    """
    T, U = lattice.num_frames, lattice.num_labels
    if not (1 <= t <= T and 0 <= u <= U):
        raise ValueError(f"node (t={t}, u={u}) outside lattice ({T}, {U})")
    if u == U:
        return 0.0
    ly = lattice.label_log_probs(labels)
    return float(
        np.exp(tables.log_alpha[t - 1, u] + ly[t - 1, u] + tables.log_beta[t - 1, u + 1])
    )


def regularized_loss_diagnostic(
    lattice: JointLattice,
    labels: Sequence[int],
    tables: AlphaBetaTables,
    config: FastEmitConfig,
) -> Union[float, np.ndarray]:
    """Regularized loss per diagonal: -log sum (P_node + lam * P_label).

    With lam = 0 this reduces to the plain NLL for every diagonal.  For
    lam > 0 the value genuinely depends on n, which is why this is a
    diagnostic and not the training objective; gradients come from
    :func:`fastemit_gradients`.
    """
    T, U = lattice.num_frames, lattice.num_labels
    la, lb = tables.log_alpha, tables.log_beta
    log_lam = math.log(config.lam) if config.lam > 0 else NEG_INF

    # log of (P(A_tu) + lam * P_label(A_tu)) per node
    node = la + lb
    label_mass = np.full((T, U + 1), NEG_INF)
    if U > 0:
        label_mass[:, :U] = la[:, :U] + lattice.label_log_probs(labels) + lb[:, 1:]
    combined = np.logaddexp(node, log_lam + label_mass)

    def diag_value(n: int) -> float:
        if not 1 <= n <= T + U:
            raise ValueError(f"diagonal n={n} outside 1..{T + U}")
        ts = np.arange(max(1, n - U), min(T, n) + 1)
        vals = combined[ts - 1, n - ts]
        m = float(vals.max())
        if m == NEG_INF:
            return math.inf
        return -(m + math.log(np.exp(vals - m).sum()))

    if config.diagnostic_diagonal == "all":
        return np.array([diag_value(n) for n in range(1, T + U + 1)])
    return diag_value(int(config.diagnostic_diagonal))


def fastemit_gradients(
    lattice: JointLattice,
    labels: Sequence[int],
    tables: AlphaBetaTables,
    lam: float,
) -> LossGradients:
    """Regularized gradients: label gradient scaled by (1 + lam), blank as-is.

    Delegates to the transducer-loss gradients, which apply the scaling at
    the log-probability level before the softmax chain rule, so the
    scaling laws hold exactly (not merely to tolerance).
    """
    return transducer.gradients(lattice, labels, tables, lam=lam)


def measure_diagnostic_gradient_gap(
    logits: np.ndarray,
    labels: Sequence[int],
    lam: float,
    n: int,
    step: float = 1e-5,
) -> float:
    """Gap between the gradient-scaling rule and autodiff of the diagnostic.

    Central finite differences of the fixed-diagonal regularized loss are
    compared against the (1 + lam)-scaled analytic gradients.  Returns the
    max absolute difference normalized by the largest gradient magnitude.
    The two coincide at lam = 0 but not in general; this measures, without
    judging, how far apart they are.
    """
    arr = np.asarray(logits, dtype=np.float64)
    cfg = FastEmitConfig(lam=lam, diagnostic_diagonal=n)

    def diag_loss(x: np.ndarray) -> float:
        lat = lattice_from_logits(x)
        _, tabs = transducer.loss(lat, labels)
        return float(regularized_loss_diagnostic(lat, labels, tabs, cfg))

    fd = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        bump = np.zeros_like(arr)
        bump[idx] = step
        fd[idx] = (diag_loss(arr + bump) - diag_loss(arr - bump)) / (2 * step)
        it.iternext()

    lat = lattice_from_logits(arr)
    _, tabs = transducer.loss(lat, labels)
    analytic = fastemit_gradients(lat, labels, tabs, lam).d_logits
    scale = max(np.abs(fd).max(), np.abs(analytic).max(), 1.0)
    return float(np.abs(fd - analytic).max() / scale)
