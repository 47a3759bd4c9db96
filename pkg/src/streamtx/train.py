"""Deterministic training loop for the toy transducer.

One step: sample a batch of utterances, accumulate per-utterance NLL and
parameter gradients (seeded with the regularized lattice gradients),
average, clip by global norm, apply Adam.  Given the same seed and
corpus, two runs produce bit-identical parameter trajectories.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import fastemit as fastemit_mod
from . import transducer
from . import model as model_mod
from .config import RunConfig
from .datagen import Utterance
from .lattice import lattice_from_logits
from .model import NumericalError


@dataclass(frozen=True)
class StepRecord:
    step: int
    nll: float
    grad_norm: float


def utterance_gradients(
    params: dict[str, np.ndarray],
    utt: Utterance,
    lam: float,
) -> tuple[float, dict[str, np.ndarray]]:
    """NLL of one utterance and the regularized parameter gradients."""
    logits, cache = model_mod.model_forward(params, utt.frames, utt.labels)
    lattice = lattice_from_logits(logits)
    nll, tables = transducer.loss(lattice, utt.labels)
    lattice_grads = fastemit_mod.fastemit_gradients(lattice, utt.labels, tables, lam)
    grads = model_mod.backprop(
        params, utt.frames, utt.labels, lattice_grads.d_logits, cache=cache
    )
    return nll, grads


def train(
    run_config: RunConfig,
    utterances: Sequence[Utterance],
    log_path: Optional[Union[str, Path]] = None,
    progress: Optional[Callable[[StepRecord], None]] = None,
    config_hash: Optional[str] = None,
) -> tuple[dict[str, np.ndarray], list[StepRecord]]:
    """Train for run_config.n_steps; returns final parameters and the log.

    The step log is flushed line by line so it survives an abort.  A
    non-finite batch loss raises NumericalError with the log retained.
    """
    if not utterances:
        raise ValueError("training corpus is empty")
    params = model_mod.init_parameters(run_config.model_config())
    opt_state = model_mod.adam_init(params)
    hyper = run_config.optimizer_config()
    rng = np.random.default_rng(run_config.training_seed())
    lam = run_config.fastemit_lambda

    history: list[StepRecord] = []
    log_file = None
    writer = None
    if log_path is not None:
        log_file = open(log_path, "w", newline="", encoding="utf-8")
        if config_hash is not None:
            log_file.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(log_file)
        writer.writerow(["step", "nll", "grad_norm"])
        log_file.flush()

    try:
        for step in range(1, run_config.n_steps + 1):
            batch = rng.integers(0, len(utterances), size=run_config.batch_size)
            total_nll = 0.0
            acc: Optional[dict[str, np.ndarray]] = None
            for idx in batch:
                nll, grads = utterance_gradients(params, utterances[int(idx)], lam)
                total_nll += nll
                if acc is None:
                    acc = grads
                else:
                    for name in acc:
                        acc[name] += grads[name]
            scale = 1.0 / run_config.batch_size
            mean_grads = {name: g * scale for name, g in acc.items()}
            mean_nll = total_nll * scale

            clipped, norm = model_mod.clip_by_global_norm(mean_grads, hyper.grad_clip_norm)
            record = StepRecord(step=step, nll=mean_nll, grad_norm=norm)
            history.append(record)
            if writer is not None:
                writer.writerow([record.step, repr(record.nll), repr(record.grad_norm)])
                log_file.flush()
            if not np.isfinite(mean_nll):
                raise NumericalError(f"non-finite training loss at step {step}: {mean_nll}")
            params, opt_state = model_mod.adam_step(params, clipped, opt_state, hyper)
            if progress is not None and (
                step % run_config.eval_every == 0 or step == run_config.n_steps
            ):
                progress(record)
    finally:
        if log_file is not None:
            log_file.close()
    return params, history
