"""Brute-force reference implementations used by the test surface.

Everything here is deliberately naive: exhaustive path enumeration, a
likelihood that literally sums every alignment, and central-difference
gradients.  None of it shares code with the dynamic-programming loss, so
agreement between the two is meaningful evidence.
"""

from __future__ import annotations

import math
from itertools import combinations
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from . import transducer
from . import model as model_mod
from .lattice import BLANK_ID, AlignmentPath, JointLattice, lattice_from_logits

#: Enumeration guards; binomial(T+U-1, U) paths are materialized.
MAX_FRAMES = 8
MAX_LABELS = 6


def path_count(num_frames: int, num_labels: int) -> int:
    """Closed-form number of complete alignments for a (T, U) lattice."""
    return math.comb(num_frames + num_labels - 1, num_labels)


def enumerate_paths(
    num_frames: int, num_labels: int, labels: Optional[Sequence[int]] = None
) -> list[AlignmentPath]:
    """All complete alignment paths, one per choice of label positions.

    A path is T blanks and U labels with the final step forced to be the
    blank at (T, U), so the U label steps are an arbitrary subset of the
    first T+U-1 positions.  When ``labels`` is omitted, label steps emit
    token 1; pass the real sequence when probabilities matter.
    """
    T, U = num_frames, num_labels
    if T > MAX_FRAMES or U > MAX_LABELS:
        raise ValueError(
            f"enumeration guard exceeded (T={T} > {MAX_FRAMES} or U={U} > "
            f"{MAX_LABELS}); would enumerate {path_count(T, U)} paths"
        )
    toks = tuple(labels) if labels is not None else (1,) * U
    if len(toks) != U:
        raise ValueError(f"label sequence length {len(toks)} != U={U}")
    paths = []
    for label_positions in combinations(range(T + U - 1), U):
        label_set = set(label_positions)
        steps = []
        t, u = 1, 0
        for i in range(T + U - 1):
            if i in label_set:
                steps.append((t, u, toks[u]))
                u += 1
            else:
                steps.append((t, u, BLANK_ID))
                t += 1
        steps.append((T, U, BLANK_ID))
        paths.append(AlignmentPath(steps=tuple(steps)))
    return paths


def brute_force_likelihood(lattice: JointLattice, labels: Sequence[int]) -> float:
    """log P of the label sequence by summing every alignment explicitly."""
    from .lattice import path_probability

    paths = enumerate_paths(lattice.num_frames, lattice.num_labels, labels)
    return float(logsumexp([path_probability(lattice, p, labels) for p in paths]))


def finite_difference_gradients(
    logits: np.ndarray, labels: Sequence[int], step: float = 1e-5
) -> np.ndarray:
    """Central differences of the NLL with respect to every raw logit.

    Independent of the analytic gradient path: each entry is estimated
    from two full loss evaluations.  O(step^2) accurate.
    """
    arr = np.asarray(logits, dtype=np.float64)
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")

    def nll(x: np.ndarray) -> float:
        value, _ = transducer.loss(lattice_from_logits(x), labels)
        return value

    grads = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        bump = np.zeros_like(arr)
        bump[idx] = step
        grads[idx] = (nll(arr + bump) - nll(arr - bump)) / (2 * step)
        it.iternext()
    return grads


def finite_difference_parameter_gradients(
    params: dict[str, np.ndarray],
    frames: np.ndarray,
    labels: Sequence[int],
    step: float = 1e-5,
) -> dict[str, np.ndarray]:
    """Central differences of the full-chain NLL with respect to parameters.

    Every scalar parameter is perturbed in both directions and the whole
    model (encoder, predictor, joint, loss) is re-evaluated, so this
    checks the hand-written backward pass end to end.
    """

    def objective(p: dict[str, np.ndarray]) -> float:
        logits, _ = model_mod.model_forward(p, frames, labels)
        nll, _ = transducer.loss(lattice_from_logits(logits), labels)
        return nll

    grads = {}
    for name in sorted(params):
        ref = params[name]
        g = np.zeros_like(ref)
        it = np.nditer(ref, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            bumped = dict(params)
            plus = ref.copy()
            plus[idx] += step
            bumped[name] = plus
            f_plus = objective(bumped)
            minus = ref.copy()
            minus[idx] -= step
            bumped[name] = minus
            f_minus = objective(bumped)
            g[idx] = (f_plus - f_minus) / (2 * step)
            it.iternext()
        grads[name] = g
    return grads
