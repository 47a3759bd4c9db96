"""Run configuration: one flat key-value file drives every command.

File format: `key = value` lines, `#` comments, blank lines ignored.
CLI flags override file values, which override the built-in defaults.
The configuration hash is a SHA-256 over the canonical serialization of
every field, so any change to any field changes the hash.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Union

from .datagen import CorpusConfig
from .model import ModelConfig, OptimizerConfig

DEFAULT_LAMBDA_GRID = (0.0, 0.001, 0.004, 0.008, 0.01, 0.02, 0.04)


@dataclass(frozen=True)
class RunConfig:
    # corpus
    n_train: int = 1000
    n_test: int = 200
    vocab_size: int = 16
    u_min: int = 2
    u_max: int = 10
    frames_per_token_min: int = 2
    frames_per_token_max: int = 5
    trailing_silence_min: int = 3
    trailing_silence_max: int = 8
    feature_noise_sigma: float = 0.1
    feature_dim: int = 17
    endpointer: bool = True
    # model
    encoder_dim: int = 32
    predictor_dim: int = 32
    joint_dim: int = 32
    # regularization
    fastemit_lambda: float = 0.0
    # optimizer
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip_norm: float = 5.0
    # training
    n_steps: int = 3000
    batch_size: int = 8
    eval_every: int = 200
    # decoding and metrics
    max_symbols_per_frame: int = 5
    frame_ms: float = 10.0
    # run
    seed: int = 0
    output_dir: str = "runs/default"
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID

    def __post_init__(self) -> None:
        if self.fastemit_lambda < 0:
            raise ValueError("fastemit_lambda must be >= 0")
        if self.n_steps < 1 or self.batch_size < 1:
            raise ValueError("n_steps and batch_size must be >= 1")
        if not self.lambda_grid:
            raise ValueError("lambda_grid must be nonempty")
        # constructing the component configs surfaces their own validation
        self.corpus_config(self.n_train)
        self.model_config()
        self.optimizer_config()

    def corpus_config(self, n_utterances: int, seed_stream: int = 0) -> CorpusConfig:
        return CorpusConfig(
            n_utterances=n_utterances,
            vocab_size=self.vocab_size,
            u_range=(self.u_min, self.u_max),
            frames_per_token_range=(self.frames_per_token_min, self.frames_per_token_max),
            trailing_silence_range=(self.trailing_silence_min, self.trailing_silence_max),
            feature_noise_sigma=self.feature_noise_sigma,
            feature_dim=self.feature_dim,
            seed=_derive_seed(self.seed, seed_stream),
            endpointer_mode=self.endpointer,
        )

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            feature_dim=self.feature_dim,
            encoder_dim=self.encoder_dim,
            predictor_dim=self.predictor_dim,
            joint_dim=self.joint_dim,
            vocab_size=self.vocab_size,
            seed=_derive_seed(self.seed, 2),
        )

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            learning_rate=self.learning_rate,
            beta1=self.adam_beta1,
            beta2=self.adam_beta2,
            eps=self.adam_eps,
            grad_clip_norm=self.grad_clip_norm,
        )

    def training_seed(self) -> int:
        return _derive_seed(self.seed, 3)


# seed streams: 0 = train corpus, 1 = test corpus, 2 = model init, 3 = batching
def _derive_seed(seed: int, stream: int) -> int:
    return seed * 1000 + stream


_BOOL_VALUES = {"on": True, "true": True, "1": True, "yes": True,
                "off": False, "false": False, "0": False, "no": False}


def _coerce(name: str, kind: type, raw: str):
    raw = raw.strip()
    if kind is bool:
        try:
            return _BOOL_VALUES[raw.lower()]
        except KeyError:
            raise ValueError(f"{name}: expected on/off, got {raw!r}") from None
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    if kind is str:
        return raw
    # remaining field kind: tuple of floats
    parts = [p for p in raw.replace(",", " ").split() if p]
    return tuple(float(p) for p in parts)


_FIELD_TYPES = {
    "n_train": int, "n_test": int, "vocab_size": int, "u_min": int, "u_max": int,
    "frames_per_token_min": int, "frames_per_token_max": int,
    "trailing_silence_min": int, "trailing_silence_max": int,
    "feature_noise_sigma": float, "feature_dim": int, "endpointer": bool,
    "encoder_dim": int, "predictor_dim": int, "joint_dim": int,
    "fastemit_lambda": float, "learning_rate": float, "adam_beta1": float,
    "adam_beta2": float, "adam_eps": float, "grad_clip_norm": float,
    "n_steps": int, "batch_size": int, "eval_every": int,
    "max_symbols_per_frame": int, "frame_ms": float, "seed": int,
    "output_dir": str, "lambda_grid": tuple,
}


def parse_config_file(path: Union[str, Path]) -> dict:
    """Parse a flat key-value file into a typed field dict."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, _FIELD_TYPES[key], raw)
    return values


def load_run_config(path: Union[str, Path, None] = None, overrides: dict = None) -> RunConfig:
    """Defaults, then file values, then overrides; returns a validated RunConfig."""
    values = {}
    if path is not None:
        values.update(parse_config_file(path))
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = val
    return RunConfig(**values)


def config_hash(config: RunConfig) -> str:
    """SHA-256 of the canonical field serialization (order-independent)."""
    lines = []
    for f in sorted(fields(config), key=lambda f: f.name):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(repr(v) for v in value)
        lines.append(f"{f.name}={value!r}")
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()


def config_to_dict(config: RunConfig) -> dict:
    d = asdict(config)
    d["lambda_grid"] = list(d["lambda_grid"])
    return d
