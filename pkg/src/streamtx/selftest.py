"""Built-in numerical self-checks runnable from the CLI.

Each suite evaluates a cross-implementation identity on random small
instances with fixed seeds and reports its worst-case error.  These are
the same identities the test suite pins down, packaged so that an
installed build can vouch for itself in seconds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fastemit as fastemit_mod
from . import transducer
from . import model as model_mod
from . import oracle as oracle_mod
from .lattice import lattice_from_logits
from .model import ModelConfig


@dataclass(frozen=True)
class SuiteResult:
    name: str
    max_error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.threshold


def _random_case(rng: np.random.Generator, max_t=5, max_u=4, max_v=5):
    T = int(rng.integers(1, max_t + 1))
    U = int(rng.integers(0, max_u + 1))
    V = int(rng.integers(1, max_v + 1))
    logits = rng.normal(0.0, 1.5, size=(T, U + 1, V + 1))
    labels = tuple(int(k) for k in rng.integers(1, V + 1, size=U))
    return logits, labels


def run_selftest(seed: int = 0, n_lattices: int = 200) -> list[SuiteResult]:
    """Run every suite; the caller decides what to do with failures."""
    results = [
        _suite_oracle_equivalence(seed, n_lattices),
        _suite_diagonal_invariance(seed, n_lattices),
        _suite_decomposition(seed, n_lattices),
        _suite_lattice_gradients(seed),
        _suite_model_gradients(seed),
        _suite_scaling_law(seed),
    ]
    return results


def diagnostic_gradient_gaps(seed: int = 0, lams=(0.01, 0.04)) -> list[tuple[float, int, float]]:
    """Measured (lam, diagonal, gap) between the scaling rule and autodiff
    of the fixed-diagonal regularized loss.  Informational only: the two
    are not claimed to coincide for lam > 0."""
    rng = np.random.default_rng(seed)
    logits = rng.normal(0.0, 1.0, size=(3, 3, 3))
    labels = (1, 2)
    out = []
    for lam in lams:
        for n in (1, 3, 5):
            gap = fastemit_mod.measure_diagnostic_gradient_gap(logits, labels, lam, n)
            out.append((lam, n, gap))
    return out


def _suite_oracle_equivalence(seed: int, n: int) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        logits, labels = _random_case(rng)
        lat = lattice_from_logits(logits)
        nll, _ = transducer.loss(lat, labels)
        brute = oracle_mod.brute_force_likelihood(lat, labels)
        worst = max(worst, abs(-nll - brute))
    return SuiteResult("forward-backward vs exhaustive path sum", worst, 1e-10)


def _suite_diagonal_invariance(seed: int, n: int) -> SuiteResult:
    rng = np.random.default_rng(seed + 1)
    worst = 0.0
    for _ in range(n):
        logits, labels = _random_case(rng)
        lat = lattice_from_logits(logits)
        _, tables = transducer.loss(lat, labels)
        diags = transducer.diagonal_log_likelihoods(tables)
        worst = max(worst, float(np.abs(diags - tables.log_likelihood).max()))
    return SuiteResult("per-diagonal alpha+beta sum vs log-likelihood", worst, 1e-9)


def _suite_decomposition(seed: int, n: int) -> SuiteResult:
    rng = np.random.default_rng(seed + 2)
    worst = 0.0
    for _ in range(n):
        logits, labels = _random_case(rng)
        lat = lattice_from_logits(logits)
        _, tb = transducer.loss(lat, labels)
        la, lb = tb.log_alpha, tb.log_beta
        T, U = lat.num_frames, lat.num_labels
        if T < 2 or U < 1:
            continue
        ly = lat.label_log_probs(labels)
        lbk = lat.blank_log_probs()
        lhs = la[: T - 1, :U] + lb[: T - 1, :U]
        blank_part = la[: T - 1, :U] + lbk[: T - 1, :U] + lb[1:, :U]
        label_part = la[: T - 1, :U] + ly[: T - 1, :] + lb[: T - 1, 1:]
        rhs = np.logaddexp(blank_part, label_part)
        worst = max(worst, float(np.abs(np.expm1(rhs - lhs)).max()))
    return SuiteResult("node posterior = blank part + label part", worst, 1e-9)


def _suite_lattice_gradients(seed: int, n: int = 20) -> SuiteResult:
    rng = np.random.default_rng(seed + 3)
    worst = 0.0
    for _ in range(n):
        logits, labels = _random_case(rng, max_t=4, max_u=3, max_v=4)
        lat = lattice_from_logits(logits)
        _, tables = transducer.loss(lat, labels)
        analytic = transducer.gradients(lat, labels, tables).d_logits
        fd = oracle_mod.finite_difference_gradients(logits, labels, step=1e-5)
        scale = max(1.0, float(np.abs(fd).max()))
        worst = max(worst, float(np.abs(analytic - fd).max()) / scale)
    return SuiteResult("analytic lattice gradients vs central differences", worst, 1e-6)


def _suite_model_gradients(seed: int) -> SuiteResult:
    rng = np.random.default_rng(seed + 4)
    cfg = ModelConfig(
        feature_dim=3, encoder_dim=4, predictor_dim=3, joint_dim=4, vocab_size=3, seed=seed
    )
    params = model_mod.init_parameters(cfg)
    # nudge away from the zero-bias init so tanh derivatives are generic
    params = {k: v + rng.normal(0, 0.05, size=v.shape) for k, v in params.items()}
    frames = rng.normal(0, 1, size=(5, cfg.feature_dim))
    labels = (1, 3)
    logits, cache = model_mod.model_forward(params, frames, labels)
    lat = lattice_from_logits(logits)
    _, tables = transducer.loss(lat, labels)
    seed_grads = transducer.gradients(lat, labels, tables).d_logits
    analytic = model_mod.backprop(params, frames, labels, seed_grads, cache=cache)
    fd = oracle_mod.finite_difference_parameter_gradients(params, frames, labels, step=1e-5)
    worst = 0.0
    for name in params:
        scale = max(1.0, float(np.abs(fd[name]).max()))
        worst = max(worst, float(np.abs(analytic[name] - fd[name]).max()) / scale)
    return SuiteResult("model parameter gradients vs central differences", worst, 1e-5)


def _suite_scaling_law(seed: int) -> SuiteResult:
    rng = np.random.default_rng(seed + 5)
    worst = 0.0
    for lam in (0.001, 0.01, 0.04):
        logits, labels = _random_case(rng)
        lat = lattice_from_logits(logits)
        _, tables = transducer.loss(lat, labels)
        base = transducer.gradients(lat, labels, tables, lam=0.0)
        reg = fastemit_mod.fastemit_gradients(lat, labels, tables, lam)
        label_gap = np.abs(reg.d_log_label - (1.0 + lam) * base.d_log_label).max()
        blank_gap = np.abs(reg.d_log_blank - base.d_log_blank).max()
        worst = max(worst, float(label_gap), float(blank_gap))
    return SuiteResult("label-gradient scaling law (exact)", worst, 0.0)
