"""A small hand-differentiated streaming transducer.

Three pieces, all strictly causal and all float64:

* encoder: tanh recurrence over feature frames, h_t = tanh(Wx x_t + Wh h_{t-1} + b)
* predictor: the same recurrence over embedded label tokens, with a learned
  start state at position 0
* joint: additive combination tanh(We e_t + Wp p_u + bj) projected to V+1 logits

The backward pass is written out by hand (no autodiff) and is seeded with
the loss gradient with respect to the logits, so emission regularization
reaches the parameters purely through that seed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .lattice import validate_labels

CHECKPOINT_MAGIC = b"STXCKPT1\n"

#: Weight matrices are initialized uniform in [-INIT_SCALE, INIT_SCALE].
INIT_SCALE = 0.08


class NumericalError(RuntimeError):
    """Raised when activations or the loss stop being finite."""


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int
    encoder_dim: int
    predictor_dim: int
    joint_dim: int
    vocab_size: int
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("feature_dim", "encoder_dim", "predictor_dim", "joint_dim", "vocab_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")


# (name, shape builder, is_weight) in a fixed declaration order; the order
# pins the RNG draw sequence, so checkpoints are reproducible by seed.
_PARAM_SPECS = (
    ("enc_w_in", lambda c: (c.feature_dim, c.encoder_dim), True),
    ("enc_w_rec", lambda c: (c.encoder_dim, c.encoder_dim), True),
    ("enc_b", lambda c: (c.encoder_dim,), False),
    ("embed", lambda c: (c.vocab_size + 1, c.predictor_dim), True),
    ("pred_start", lambda c: (c.predictor_dim,), True),
    ("pred_w_in", lambda c: (c.predictor_dim, c.predictor_dim), True),
    ("pred_w_rec", lambda c: (c.predictor_dim, c.predictor_dim), True),
    ("pred_b", lambda c: (c.predictor_dim,), False),
    ("joint_w_enc", lambda c: (c.encoder_dim, c.joint_dim), True),
    ("joint_w_pred", lambda c: (c.predictor_dim, c.joint_dim), True),
    ("joint_b", lambda c: (c.joint_dim,), False),
    ("out_w", lambda c: (c.joint_dim, c.vocab_size + 1), True),
    ("out_b", lambda c: (c.vocab_size + 1,), False),
)


def init_parameters(config: ModelConfig) -> dict[str, np.ndarray]:
    """Fresh parameters: uniform weights, zero biases, deterministic in seed."""
    rng = np.random.default_rng(config.seed)
    params = {}
    for name, shape_fn, is_weight in _PARAM_SPECS:
        shape = shape_fn(config)
        if is_weight:
            params[name] = rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)
        else:
            params[name] = np.zeros(shape)
    return params


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    return {name: shape_fn(config) for name, shape_fn, _ in _PARAM_SPECS}


def _check_finite(name: str, x: np.ndarray) -> None:
    if not np.isfinite(x).all():
        raise NumericalError(f"non-finite values in {name}")


def encode(params: dict[str, np.ndarray], frames: np.ndarray) -> np.ndarray:
    """Causal encoder states, shape (T, encoder_dim).

    State t depends only on frames 1..t; h_0 = 0.
    """
    x = np.asarray(frames, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"frames must be (T, feature_dim) with T >= 1, got {x.shape}")
    w_in, w_rec, b = params["enc_w_in"], params["enc_w_rec"], params["enc_b"]
    drive = x @ w_in + b
    states = np.empty((x.shape[0], w_in.shape[1]))
    h = np.zeros(w_in.shape[1])
    for t in range(x.shape[0]):
        h = np.tanh(drive[t] + h @ w_rec)
        states[t] = h
    _check_finite("encoder states", states)
    return states


def predict(params: dict[str, np.ndarray], labels: Sequence[int]) -> np.ndarray:
    """Predictor states, shape (U+1, predictor_dim); row 0 is the start state."""
    vocab_size = params["embed"].shape[0] - 1
    toks = validate_labels(labels, vocab_size)
    w_in, w_rec, b = params["pred_w_in"], params["pred_w_rec"], params["pred_b"]
    states = np.empty((len(toks) + 1, w_in.shape[1]))
    states[0] = params["pred_start"]
    for u, tok in enumerate(toks, start=1):
        states[u] = np.tanh(params["embed"][tok] @ w_in + states[u - 1] @ w_rec + b)
    _check_finite("predictor states", states)
    return states


def predictor_step(params: dict[str, np.ndarray], state: np.ndarray, token: int) -> np.ndarray:
    """Advance the predictor by one emitted token (used by the decoder)."""
    return np.tanh(
        params["embed"][token] @ params["pred_w_in"]
        + state @ params["pred_w_rec"]
        + params["pred_b"]
    )


def joint(
    params: dict[str, np.ndarray], enc_states: np.ndarray, pred_states: np.ndarray
) -> np.ndarray:
    """Joint-network logits, shape (T, U+1, V+1); a function of (e_t, p_u) only."""
    pre = (
        (enc_states @ params["joint_w_enc"])[:, None, :]
        + (pred_states @ params["joint_w_pred"])[None, :, :]
        + params["joint_b"]
    )
    return np.tanh(pre) @ params["out_w"] + params["out_b"]


def joint_row(
    params: dict[str, np.ndarray], enc_state: np.ndarray, pred_state: np.ndarray
) -> np.ndarray:
    """Logits for a single (frame, predictor-state) pair, shape (V+1,)."""
    pre = (
        enc_state @ params["joint_w_enc"]
        + pred_state @ params["joint_w_pred"]
        + params["joint_b"]
    )
    return np.tanh(pre) @ params["out_w"] + params["out_b"]


class ForwardCache(NamedTuple):
    """Activations saved by the forward pass for reuse in backprop."""

    frames: np.ndarray
    enc_states: np.ndarray
    pred_states: np.ndarray
    joint_act: np.ndarray  # tanh of the joint pre-activation, (T, U+1, J)


def model_forward(
    params: dict[str, np.ndarray], frames: np.ndarray, labels: Sequence[int]
) -> tuple[np.ndarray, ForwardCache]:
    """Run encoder, predictor and joint; return logits plus the cache."""
    frames = np.asarray(frames, dtype=np.float64)
    enc_states = encode(params, frames)
    pred_states = predict(params, labels)
    pre = (
        (enc_states @ params["joint_w_enc"])[:, None, :]
        + (pred_states @ params["joint_w_pred"])[None, :, :]
        + params["joint_b"]
    )
    act = np.tanh(pre)
    logits = act @ params["out_w"] + params["out_b"]
    return logits, ForwardCache(frames, enc_states, pred_states, act)


def backprop(
    params: dict[str, np.ndarray],
    frames: np.ndarray,
    labels: Sequence[int],
    d_logits: np.ndarray,
    cache: Optional[ForwardCache] = None,
) -> dict[str, np.ndarray]:
    """Exact reverse-mode parameter gradients seeded by d_logits.

    ``d_logits`` must come from the same forward pass (pass ``cache`` to
    avoid recomputing it).  The result has one entry per parameter with
    matching shape.
    """
    vocab_size = params["embed"].shape[0] - 1
    toks = validate_labels(labels, vocab_size)
    if cache is None:
        _, cache = model_forward(params, frames, labels)
    d_logits = np.asarray(d_logits, dtype=np.float64)
    expected = (cache.enc_states.shape[0], len(toks) + 1, vocab_size + 1)
    if d_logits.shape != expected:
        raise ValueError(f"d_logits shape {d_logits.shape}, expected {expected}")

    enc, pred, act = cache.enc_states, cache.pred_states, cache.joint_act
    grads = {name: np.zeros_like(params[name]) for name in params}

    # output projection and joint combiner
    grads["out_w"] = np.einsum("tuj,tuv->jv", act, d_logits)
    grads["out_b"] = d_logits.sum(axis=(0, 1))
    d_act = d_logits @ params["out_w"].T
    d_pre = d_act * (1.0 - act * act)  # (T, U+1, J)
    grads["joint_w_enc"] = np.einsum("td,tuj->dj", enc, d_pre)
    grads["joint_w_pred"] = np.einsum("ud,tuj->dj", pred, d_pre)
    grads["joint_b"] = d_pre.sum(axis=(0, 1))
    d_enc = d_pre.sum(axis=1) @ params["joint_w_enc"].T  # (T, De)
    d_pred = d_pre.sum(axis=0) @ params["joint_w_pred"].T  # (U+1, Dp)

    # encoder backward through time
    w_rec = params["enc_w_rec"]
    carry = np.zeros(enc.shape[1])
    frames64 = cache.frames
    for t in range(enc.shape[0] - 1, -1, -1):
        dz = (d_enc[t] + carry) * (1.0 - enc[t] * enc[t])
        grads["enc_w_in"] += np.outer(frames64[t], dz)
        h_prev = enc[t - 1] if t > 0 else np.zeros(enc.shape[1])
        grads["enc_w_rec"] += np.outer(h_prev, dz)
        grads["enc_b"] += dz
        carry = dz @ w_rec.T

    # predictor backward through time; state 0 is the raw start parameter
    p_rec = params["pred_w_rec"]
    carry = np.zeros(pred.shape[1])
    for u in range(len(toks), 0, -1):
        dz = (d_pred[u] + carry) * (1.0 - pred[u] * pred[u])
        emb = params["embed"][toks[u - 1]]
        grads["pred_w_in"] += np.outer(emb, dz)
        grads["pred_w_rec"] += np.outer(pred[u - 1], dz)
        grads["pred_b"] += dz
        grads["embed"][toks[u - 1]] += dz @ params["pred_w_in"].T
        carry = dz @ p_rec.T
    grads["pred_start"] = d_pred[0] + carry
    return grads


# ---------------------------------------------------------------------------
# optimization


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip_norm: float = 5.0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1/beta2 must lie in (0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be > 0")


@dataclass
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


def adam_init(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        step=0,
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
    )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    hyper: OptimizerConfig,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; inputs are not mutated."""
    t = state.step + 1
    bc1 = 1.0 - hyper.beta1**t
    bc2 = 1.0 - hyper.beta2**t
    new_params, new_m, new_v = {}, {}, {}
    for name in params:
        g = grads[name]
        m = hyper.beta1 * state.m[name] + (1.0 - hyper.beta1) * g
        v = hyper.beta2 * state.v[name] + (1.0 - hyper.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + hyper.eps)
        new_params[name] = params[name] - hyper.learning_rate * update
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(step=t, m=new_m, v=new_v)


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for _, g in sorted(grads.items()))))


def clip_by_global_norm(
    grads: dict[str, np.ndarray], max_norm: float
) -> tuple[dict[str, np.ndarray], float]:
    """Scale all gradients so the global norm is at most max_norm.

    Returns the (possibly rescaled) gradients and the pre-clip norm.
    """
    norm = global_grad_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        return {k: g * scale for k, g in grads.items()}, norm
    return grads, norm


# ---------------------------------------------------------------------------
# checkpoint container: magic line, one JSON header line, then the raw
# row-major little-endian float64 payloads in header order.


def save_checkpoint(
    path: Union[str, Path], config: ModelConfig, params: dict[str, np.ndarray]
) -> None:
    names = [name for name, _, _ in _PARAM_SPECS]
    header = {
        "format_version": 1,
        "config": asdict(config),
        "tensors": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }
    blob = bytearray(CHECKPOINT_MAGIC)
    blob += json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob += b"\n"
    for n in names:
        blob += np.ascontiguousarray(params[n], dtype="<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_checkpoint(path: Union[str, Path]) -> tuple[ModelConfig, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a model checkpoint (bad magic)")
    body = raw[len(CHECKPOINT_MAGIC):]
    header_line, _, payload = body.partition(b"\n")
    header = json.loads(header_line.decode("utf-8"))
    if header.get("format_version") != 1:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('format_version')}")
    config = ModelConfig(**header["config"])
    params = {}
    offset = 0
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        chunk = payload[offset : offset + 8 * count]
        if len(chunk) != 8 * count:
            raise ValueError(f"{path}: truncated payload for tensor {spec['name']}")
        params[spec["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += 8 * count
    if offset != len(payload):
        raise ValueError(f"{path}: {len(payload) - offset} trailing payload bytes")
    expected = parameter_shapes(config)
    if {n: p.shape for n, p in params.items()} != expected:
        raise ValueError(f"{path}: tensor shapes do not match the config header")
    return config, params
