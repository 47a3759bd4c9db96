"""Frame-synchronous greedy decoding with emission timestamps.

At every frame the decoder repeatedly takes the argmax of the joint
distribution given the current predictor state.  A non-blank argmax emits
the token, stamps it with the current frame index, and advances the
predictor; blank (or hitting the per-frame symbol cap) advances to the
next frame.  Emission timestamps are what the latency metrics consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import model as model_mod
from .lattice import BLANK_ID


@dataclass(frozen=True)
class EmissionTrace:
    """Ordered (token, frame) pairs emitted for one utterance.

    Frames are 1-based and non-decreasing.  Blanks are never recorded, so
    the token column is the hypothesis itself.
    """

    emissions: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        frames = [f for _, f in self.emissions]
        if any(b < a for a, b in zip(frames, frames[1:])):
            raise ValueError("emission frame indices must be non-decreasing")

    @property
    def tokens(self) -> tuple[int, ...]:
        return tuple(tok for tok, _ in self.emissions)

    @property
    def frames(self) -> tuple[int, ...]:
        return tuple(f for _, f in self.emissions)

    def content_emissions(self, eos_id: Optional[int] = None) -> tuple[tuple[int, int], ...]:
        """Emissions with the end-of-query token (if any) removed."""
        if eos_id is None:
            return self.emissions
        return tuple(e for e in self.emissions if e[0] != eos_id)

    def eos_frame_emitted(self, eos_id: int) -> Optional[int]:
        """Frame at which the end-of-query token was emitted, if it was."""
        for tok, frame in self.emissions:
            if tok == eos_id:
                return frame
        return None


def greedy_decode(
    params: dict[str, np.ndarray],
    frames: np.ndarray,
    max_symbols_per_frame: int = 5,
    eos_id: Optional[int] = None,
) -> EmissionTrace:
    """Greedy frame-synchronous decode of one utterance.

    Ties in the argmax break toward the lowest token index, which makes
    decoding fully deterministic.  When ``eos_id`` is given, emitting it
    ends decoding immediately (the endpointer closing the microphone).
    Always terminates: at most T * max_symbols_per_frame emissions.
    """
    if max_symbols_per_frame < 1:
        raise ValueError(f"max_symbols_per_frame must be >= 1, got {max_symbols_per_frame}")
    enc_states = model_mod.encode(params, frames)
    pred_state = params["pred_start"]
    emissions: list[tuple[int, int]] = []
    for t in range(1, enc_states.shape[0] + 1):
        enc_t = enc_states[t - 1]
        for _ in range(max_symbols_per_frame):
            logits = model_mod.joint_row(params, enc_t, pred_state)
            best = int(np.argmax(logits))  # first max wins: lowest token id
            if best == BLANK_ID:
                break
            emissions.append((best, t))
            pred_state = model_mod.predictor_step(params, pred_state, best)
            if eos_id is not None and best == eos_id:
                return EmissionTrace(tuple(emissions))
    return EmissionTrace(tuple(emissions))
