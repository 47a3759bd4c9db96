"""Synthetic streaming-speech corpus with exact emission ground truth.

Each utterance is a sequence of token "acoustics": token k holds its
embedding vector for a few frames, then the utterance trails off into
silence.  Because the generator knows every token boundary and the exact
end-of-speech frame, latency can be measured without any forced
alignment.

Feature layout: content token k occupies one-hot coordinate k-1; the last
coordinate is a silence indicator that is hot only after speech ends.
All frames carry i.i.d. Gaussian noise on top.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .lattice import eos_token_id, validate_labels

CORPUS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class CorpusConfig:
    n_utterances: int
    vocab_size: int = 16
    u_range: tuple[int, int] = (2, 10)
    frames_per_token_range: tuple[int, int] = (2, 5)
    trailing_silence_range: tuple[int, int] = (3, 8)
    feature_noise_sigma: float = 0.1
    feature_dim: int = 17
    seed: int = 0
    endpointer_mode: bool = True

    def __post_init__(self) -> None:
        for name in ("u_range", "frames_per_token_range", "trailing_silence_range"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < (1 if name != "trailing_silence_range" else 0):
                raise ValueError(f"{name} {getattr(self, name)} is empty or invalid")
        if self.feature_noise_sigma < 0:
            raise ValueError("feature_noise_sigma must be >= 0")
        if self.n_utterances < 0:
            raise ValueError("n_utterances must be >= 0")
        if self.endpointer_mode and self.vocab_size < 2:
            raise ValueError("endpointer mode needs the end-of-query token plus one content token")
        n_content = len(self.content_tokens())
        if n_content > self.feature_dim - 1:
            raise ValueError(
                f"{n_content} content tokens exceed the one-hot capacity of "
                f"feature_dim={self.feature_dim} (one coordinate is reserved "
                f"for silence)"
            )

    def content_tokens(self) -> tuple[int, ...]:
        """Token ids that have acoustic realizations (excludes the EOQ token)."""
        top = self.vocab_size - 1 if self.endpointer_mode else self.vocab_size
        return tuple(range(1, top + 1))

    def token_embedding(self, token: int) -> np.ndarray:
        """Unit-norm one-hot feature vector of a content token."""
        if token not in self.content_tokens():
            raise ValueError(f"token {token} has no acoustic embedding")
        vec = np.zeros(self.feature_dim)
        vec[token - 1] = 1.0
        return vec

    def silence_vector(self) -> np.ndarray:
        """Silence frames: zero token part, hot silence-indicator coordinate."""
        vec = np.zeros(self.feature_dim)
        vec[self.feature_dim - 1] = 1.0
        return vec


@dataclass(frozen=True)
class Utterance:
    """Feature frames plus exact ground truth for latency measurement.

    ``eos_frame`` is the 1-based index of the last speech frame;
    ``token_spans`` are inclusive 1-based (start, end) frame ranges, one
    per content label, contiguous from frame 1 through eos_frame.
    """

    id: str
    frames: np.ndarray  # (T, feature_dim)
    labels: tuple[int, ...]
    eos_frame: int
    token_spans: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ValueError("frames must be a (T, feature_dim) array with T >= 1")
        if not 0 <= self.eos_frame <= self.frames.shape[0]:
            raise ValueError("eos_frame outside the utterance")
        pos = 1
        for start, end in self.token_spans:
            if start != pos or end < start:
                raise ValueError("token spans must be contiguous, ordered and nonempty")
            pos = end + 1
        if self.token_spans and self.token_spans[-1][1] != self.eos_frame:
            raise ValueError("token spans must end at eos_frame")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def generate(config: CorpusConfig) -> list[Utterance]:
    """Sample a corpus; pure in (config, seed, utterance index)."""
    return [_generate_one(config, i) for i in range(config.n_utterances)]


def _generate_one(config: CorpusConfig, index: int) -> Utterance:
    rng = np.random.default_rng((config.seed, index))
    content = config.content_tokens()
    u = int(rng.integers(config.u_range[0], config.u_range[1] + 1))
    tokens = [int(content[i]) for i in rng.integers(0, len(content), size=u)]
    durations = rng.integers(
        config.frames_per_token_range[0], config.frames_per_token_range[1] + 1, size=u
    )
    silence = int(
        rng.integers(config.trailing_silence_range[0], config.trailing_silence_range[1] + 1)
    )

    spans = []
    rows = []
    pos = 1
    for tok, dur in zip(tokens, durations):
        emb = config.token_embedding(tok)
        rows.extend([emb] * int(dur))
        spans.append((pos, pos + int(dur) - 1))
        pos += int(dur)
    eos_frame = pos - 1
    rows.extend([config.silence_vector()] * silence)
    frames = np.array(rows)
    if config.feature_noise_sigma > 0:
        frames = frames + rng.normal(0.0, config.feature_noise_sigma, size=frames.shape)

    labels = tuple(tokens)
    if config.endpointer_mode:
        labels = labels + (eos_token_id(config.vocab_size),)
    validate_labels(labels, config.vocab_size, endpointer_mode=config.endpointer_mode)
    return Utterance(
        id=f"utt{index:06d}",
        frames=frames,
        labels=labels,
        eos_frame=eos_frame,
        token_spans=tuple(spans),
    )


# ---------------------------------------------------------------------------
# line-delimited corpus container: a header record, then one record per
# utterance with the frame payload base64-encoded as raw little-endian
# float64 bytes (bit-exact round trip).


def save_corpus(
    path: Union[str, Path],
    config: CorpusConfig,
    utterances: list[Utterance],
    config_hash: Optional[str] = None,
) -> None:
    header = {
        "record": "header",
        "format_version": CORPUS_FORMAT_VERSION,
        "config": _config_to_jsonable(config),
        "n_utterances": len(utterances),
    }
    if config_hash is not None:
        header["config_hash"] = config_hash
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for utt in utterances:
        payload = base64.b64encode(
            np.ascontiguousarray(utt.frames, dtype="<f8").tobytes()
        ).decode("ascii")
        record = {
            "record": "utterance",
            "id": utt.id,
            "n_frames": utt.num_frames,
            "feature_dim": utt.frames.shape[1],
            "frames_b64": payload,
            "labels": list(utt.labels),
            "eos_frame": utt.eos_frame,
            "token_spans": [list(s) for s in utt.token_spans],
        }
        lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_corpus(path: Union[str, Path]) -> tuple[CorpusConfig, list[Utterance]]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("record") != "header":
            raise ValueError(f"{path}: missing corpus header record")
        if header.get("format_version") != CORPUS_FORMAT_VERSION:
            raise ValueError(
                f"{path}: unsupported corpus format version {header.get('format_version')}"
            )
        config = _config_from_jsonable(header["config"])
        utterances = []
        for line in fh:
            rec = json.loads(line)
            if rec.get("record") != "utterance":
                raise ValueError(f"{path}: unexpected record kind {rec.get('record')!r}")
            frames = np.frombuffer(
                base64.b64decode(rec["frames_b64"]), dtype="<f8"
            ).reshape(rec["n_frames"], rec["feature_dim"]).copy()
            utterances.append(
                Utterance(
                    id=rec["id"],
                    frames=frames,
                    labels=tuple(rec["labels"]),
                    eos_frame=rec["eos_frame"],
                    token_spans=tuple(tuple(s) for s in rec["token_spans"]),
                )
            )
    if len(utterances) != header["n_utterances"]:
        raise ValueError(
            f"{path}: header promises {header['n_utterances']} utterances, "
            f"found {len(utterances)}"
        )
    return config, utterances


def _config_to_jsonable(config: CorpusConfig) -> dict:
    d = asdict(config)
    for key in ("u_range", "frames_per_token_range", "trailing_silence_range"):
        d[key] = list(d[key])
    return d


def _config_from_jsonable(d: dict) -> CorpusConfig:
    kwargs = dict(d)
    for key in ("u_range", "frames_per_token_range", "trailing_silence_range"):
        kwargs[key] = tuple(kwargs[key])
    return CorpusConfig(**kwargs)
