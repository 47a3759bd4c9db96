"""Alignment-lattice data model shared by the loss, regularizer and decoder.

The lattice is a grid of nodes (t, u) where t is the frame index and u is
the number of labels already emitted::

        u=0   u=1   u=2        (U = 2)
    t=1  .----->.----->.        up    = emit label u+1, stay on frame t
         |      |      |        right = emit blank, advance to frame t+1
         v      v      v        (drawn transposed: right steps go down here)
    t=2  .----->.----->.
         |      |      |
         v      v      v
    t=3  .----->.----->$        every complete path ends with the blank
                                taken at node (T, U)

Frames are 1-based (t in 1..T) so that the boundary conditions read
alpha(1, 0) = 1 and beta(T, U) = b(T, U); numpy arrays are indexed with
t - 1.  Each node stores a normalized log-probability distribution over
the extended vocabulary: index 0 is the blank token, indices 1..V are
labels.  The last label index may be reserved for the end-of-query token
when endpointing is enabled.

All probabilities live in log space; -inf is the exact representation of
probability zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

NEG_INF = float("-inf")

#: Reserved index of the blank ("output nothing, advance one frame") token.
BLANK_ID = 0

#: Tolerance for the per-node normalization check.
NORMALIZATION_ATOL = 1e-9


def eos_token_id(vocab_size: int) -> int:
    """Index of the end-of-query token: the last entry of the vocabulary."""
    return vocab_size


def validate_labels(
    labels: Sequence[int], vocab_size: int, endpointer_mode: bool = False
) -> tuple[int, ...]:
    """Validate a label sequence and return it as a tuple.

    Labels must be in 1..vocab_size (blank is never a label).  When
    ``endpointer_mode`` is set, a nonempty sequence must end with the
    end-of-query token and must not contain it anywhere else.
    """
    toks = tuple(int(k) for k in labels)
    for i, k in enumerate(toks):
        if k == BLANK_ID:
            raise ValueError(f"label sequence contains blank at position {i}")
        if not 1 <= k <= vocab_size:
            raise ValueError(
                f"label {k} at position {i} outside vocabulary 1..{vocab_size}"
            )
    if endpointer_mode and toks:
        eos = eos_token_id(vocab_size)
        if toks[-1] != eos:
            raise ValueError(
                f"endpointer mode requires the final label to be the "
                f"end-of-query token {eos}, got {toks[-1]}"
            )
        if eos in toks[:-1]:
            raise ValueError("end-of-query token appears before the final position")
    return toks


@dataclass(frozen=True)
class JointLattice:
    """Per-node log-probabilities over the extended vocabulary.

    ``log_probs`` has shape (T, U+1, V+1); entry [t-1, u, k] is the log
    probability of emitting token k at node (t, u).  Every node is a
    normalized distribution; -inf entries (exact zeros) are permitted so
    that degenerate single-path lattices can be built by hand.
    """

    log_probs: np.ndarray

    def __post_init__(self) -> None:
        lp = np.asarray(self.log_probs, dtype=np.float64)
        if lp.ndim != 3:
            raise ValueError(f"log_probs must be (T, U+1, V+1), got shape {lp.shape}")
        if lp.shape[0] < 1:
            raise ValueError("lattice needs at least one frame (T >= 1)")
        if lp.shape[2] < 2:
            raise ValueError("extended vocabulary needs blank plus one label")
        if np.isnan(lp).any():
            raise ValueError("log_probs contains NaN")
        if (lp > NORMALIZATION_ATOL).any():
            raise ValueError("log_probs contains positive entries")
        norms = _logsumexp_lastaxis(lp)
        if (np.abs(norms) > NORMALIZATION_ATOL).any():
            t, u = np.unravel_index(int(np.argmax(np.abs(norms))), norms.shape)
            raise ValueError(
                f"node (t={t + 1}, u={u}) is not normalized: logsumexp={norms[t, u]!r}"
            )
        object.__setattr__(self, "log_probs", lp)

    @property
    def num_frames(self) -> int:
        return self.log_probs.shape[0]

    @property
    def num_labels(self) -> int:
        return self.log_probs.shape[1] - 1

    @property
    def vocab_size(self) -> int:
        return self.log_probs.shape[2] - 1

    def blank_log_probs(self) -> np.ndarray:
        """log b(t, u) for all nodes, shape (T, U+1)."""
        return self.log_probs[:, :, BLANK_ID]

    def label_log_probs(self, labels: Sequence[int]) -> np.ndarray:
        """log y(t, u) = log-probability of emitting label u+1 at (t, u).

        Shape (T, U): column u holds the probability of the (u+1)-th label
        of ``labels``.  Defined only for u < U.
        """
        toks = validate_labels(labels, self.vocab_size)
        if len(toks) != self.num_labels:
            raise ValueError(
                f"label sequence length {len(toks)} does not match lattice U="
                f"{self.num_labels}"
            )
        if not toks:
            return np.zeros((self.num_frames, 0))
        return self.log_probs[:, np.arange(len(toks)), list(toks)]


def lattice_from_logits(logits: np.ndarray) -> JointLattice:
    """Normalize raw joint-network logits into a :class:`JointLattice`.

    Applies a per-node log-softmax over the extended vocabulary.  The
    result is shift-invariant: adding a constant to a node's logits does
    not change its log-probabilities.
    """
    arr = np.asarray(logits, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"logits must be (T, U+1, V+1), got shape {arr.shape}")
    bad = ~np.isfinite(arr)
    if bad.any():
        t, u, k = (int(i) for i in np.argwhere(bad)[0])
        raise ValueError(
            f"non-finite logit {arr[t, u, k]!r} at (t={t + 1}, u={u}, k={k})"
        )
    return JointLattice(arr - _logsumexp_lastaxis(arr)[..., None])


def _logsumexp_lastaxis(x: np.ndarray) -> np.ndarray:
    """Stable logsumexp over the last axis; -inf rows reduce to -inf."""
    m = np.max(x, axis=-1)
    safe_m = np.where(np.isfinite(m), m, 0.0)
    out = safe_m + np.log(np.sum(np.exp(x - safe_m[..., None]), axis=-1))
    return np.where(np.isfinite(m), out, m)


@dataclass(frozen=True)
class AlignmentPath:
    """One complete monotone alignment through the lattice.

    ``steps`` is an ordered tuple of (t, u, token): the path sits at node
    (t, u) and emits ``token``.  A blank moves to (t+1, u); a label moves
    to (t, u+1).  A complete path for a (T, U) lattice has exactly T
    blank steps and U label steps and ends with the blank at (T, U).
    """

    steps: tuple[tuple[int, int, int], ...]

    def validate(
        self, num_frames: int, num_labels: int, labels: Optional[Sequence[int]] = None
    ) -> None:
        """Check structural validity; raise ValueError on the first defect."""
        T, U = num_frames, num_labels
        if len(self.steps) != T + U:
            raise ValueError(
                f"path has {len(self.steps)} steps, expected T+U = {T + U}"
            )
        emitted = []
        t, u = 1, 0
        for i, (st, su, tok) in enumerate(self.steps):
            if (st, su) != (t, u):
                raise ValueError(
                    f"step {i} at node ({st}, {su}) but path position is ({t}, {u})"
                )
            if not (1 <= t <= T and 0 <= u <= U):
                raise ValueError(f"step {i} node ({t}, {u}) outside the lattice")
            if tok == BLANK_ID:
                t += 1
            else:
                emitted.append(tok)
                u += 1
        if (t, u) != (T + 1, U):
            raise ValueError(
                f"path ends at ({t}, {u}); expected the final blank at ({T}, {U})"
            )
        if self.steps[-1][2] != BLANK_ID:
            raise ValueError("final step must be the blank at (T, U)")
        if labels is not None and tuple(emitted) != tuple(labels):
            raise ValueError(
                f"path emits {tuple(emitted)} which does not match labels "
                f"{tuple(labels)}"
            )


def path_probability(
    lattice: JointLattice,
    path: AlignmentPath,
    labels: Optional[Sequence[int]] = None,
) -> float:
    """Log-probability of a single alignment path.

    Sums the node log-probability of each emitted token.  The path is
    validated first; when ``labels`` is given, the path must also spell
    that label sequence once blanks are removed.
    """
    path.validate(lattice.num_frames, lattice.num_labels, labels)
    lp = lattice.log_probs
    return float(sum(lp[t - 1, u, tok] for t, u, tok in path.steps))
