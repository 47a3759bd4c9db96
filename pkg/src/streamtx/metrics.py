"""Emission-latency metrics and token error rate.

Two signed latencies per utterance, both in milliseconds relative to the
ground-truth end of speech:

* partial-recognition (PR) latency: last content-token emission minus the
  end-of-speech frame.  Negative when the recognizer finishes the
  hypothesis before the speech ends.
* endpointer (EP) latency: emission of the end-of-query token minus the
  end-of-speech frame.  Structurally at least the PR latency, since the
  end-of-query token is always the final emission.

Aggregation reports nearest-rank P50/P90 percentiles.  Utterances where a
latency is undefined (nothing emitted, or no end-of-query token) are
excluded from that percentile and tallied, never silently dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .decoder import EmissionTrace

SCHEMA_FIELDS = (
    "wer",
    "pr50_ms",
    "pr90_ms",
    "ep50_ms",
    "ep90_ms",
    "n_utt",
    "n_excluded_pr",
    "n_excluded_ep",
    "deletion_share",
)


def pr_latency(
    trace: EmissionTrace,
    eos_frame: int,
    frame_ms: float,
    eos_id: Optional[int] = None,
) -> Optional[float]:
    """Signed milliseconds between the last content emission and end of speech.

    The end-of-query token does not count as content.  Returns None when
    the hypothesis is empty (the caller tallies the exclusion).
    """
    content = trace.content_emissions(eos_id)
    if not content:
        return None
    last_frame = content[-1][1]
    return (last_frame - eos_frame) * frame_ms


def ep_latency(
    trace: EmissionTrace,
    eos_frame: int,
    frame_ms: float,
    eos_id: int,
) -> Optional[float]:
    """Signed milliseconds between the end-of-query emission and end of speech.

    None when the end-of-query token was never emitted.
    """
    emitted = trace.eos_frame_emitted(eos_id)
    if emitted is None:
        return None
    return (emitted - eos_frame) * frame_ms


def percentile(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * N)-th smallest value.

    p = 0 maps to the minimum.  Order statistics only, no interpolation,
    so the result is always one of the inputs.
    """
    if len(values) == 0:
        raise ValueError("percentile of an empty sequence is undefined")
    if not 0 <= p <= 100:
        raise ValueError(f"p must be in [0, 100], got {p}")
    ranked = sorted(values)
    k = max(1, math.ceil(p / 100.0 * len(ranked)))
    return ranked[k - 1]


@dataclass(frozen=True)
class EditStats:
    """Levenshtein alignment counts accumulated over a corpus."""

    substitutions: int
    insertions: int
    deletions: int
    ref_tokens: int

    @property
    def total_errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def error_rate(self) -> float:
        if self.ref_tokens == 0:
            return 0.0 if self.total_errors == 0 else math.inf
        return self.total_errors / self.ref_tokens

    @property
    def deletion_share(self) -> float:
        """Fraction of all errors that are deletions (0 when error-free)."""
        if self.total_errors == 0:
            return 0.0
        return self.deletions / self.total_errors


def _align_counts(ref: Sequence[int], hyp: Sequence[int]) -> tuple[int, int, int]:
    """(substitutions, insertions, deletions) of one minimal alignment.

    Standard edit-distance DP; on cost ties the backtrace prefers the
    diagonal, then deletion, so the split is deterministic (the total is
    the edit distance regardless).
    """
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1])
            dele = dist[i - 1][j] + 1
            ins = dist[i][j - 1] + 1
            dist[i][j] = min(sub, dele, ins)
    subs = inss = dels = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            inss += 1
            j -= 1
    return subs, inss, dels


def edit_statistics(
    hypotheses: Sequence[Sequence[int]], references: Sequence[Sequence[int]]
) -> EditStats:
    """Corpus-level alignment counts over paired hypothesis/reference lists."""
    if len(hypotheses) != len(references):
        raise ValueError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    subs = inss = dels = ref_tokens = 0
    for hyp, ref in zip(hypotheses, references):
        s, i, d = _align_counts(ref, hyp)
        subs += s
        inss += i
        dels += d
        ref_tokens += len(ref)
    return EditStats(subs, inss, dels, ref_tokens)


def token_error_rate(
    hypotheses: Sequence[Sequence[int]], references: Sequence[Sequence[int]]
) -> float:
    """(substitutions + insertions + deletions) / reference tokens.

    Corpus-level: edit counts and reference lengths are summed before the
    ratio.  Values above 1 are legal (more errors than reference tokens).
    """
    return edit_statistics(hypotheses, references).error_rate


@dataclass(frozen=True)
class LatencyReport:
    """Fixed-schema evaluation summary for one decoded corpus.

    Latency percentiles are None when every utterance was excluded for
    that metric (serialized as JSON null / empty CSV cell).
    """

    wer: float
    pr50_ms: Optional[float]
    pr90_ms: Optional[float]
    ep50_ms: Optional[float]
    ep90_ms: Optional[float]
    n_utt: int
    n_excluded_pr: int
    n_excluded_ep: int
    deletion_share: float
    frame_ms: float

    def __post_init__(self) -> None:
        if self.pr50_ms is not None and self.pr90_ms is not None:
            if self.pr50_ms > self.pr90_ms:
                raise ValueError("pr50_ms exceeds pr90_ms")
        if self.ep50_ms is not None and self.ep90_ms is not None:
            if self.ep50_ms > self.ep90_ms:
                raise ValueError("ep50_ms exceeds ep90_ms")
        if self.wer < 0:
            raise ValueError("wer must be >= 0")

    def schema_dict(self) -> dict:
        return {name: getattr(self, name) for name in SCHEMA_FIELDS}


def build_latency_report(
    traces: Sequence[EmissionTrace],
    references: Sequence[Sequence[int]],
    eos_frames: Sequence[int],
    frame_ms: float,
    eos_id: Optional[int] = None,
) -> LatencyReport:
    """Aggregate decoded traces against ground truth into a LatencyReport.

    The error rate is computed over content tokens (the end-of-query
    token is stripped from both sides; its timing is measured by EP
    latency instead).  Every utterance counts toward the error rate even
    when excluded from a latency percentile.
    """
    if not (len(traces) == len(references) == len(eos_frames)):
        raise ValueError("traces, references and eos_frames must align")
    pr_values, ep_values = [], []
    n_excl_pr = n_excl_ep = 0
    hyps, refs = [], []
    for trace, ref, eos in zip(traces, references, eos_frames):
        pr = pr_latency(trace, eos, frame_ms, eos_id)
        if pr is None:
            n_excl_pr += 1
        else:
            pr_values.append(pr)
        if eos_id is not None:
            ep = ep_latency(trace, eos, frame_ms, eos_id)
            if ep is None:
                n_excl_ep += 1
            else:
                ep_values.append(ep)
        hyps.append([tok for tok, _ in trace.content_emissions(eos_id)])
        refs.append([k for k in ref if eos_id is None or k != eos_id])
    stats = edit_statistics(hyps, refs)
    return LatencyReport(
        wer=stats.error_rate,
        pr50_ms=percentile(pr_values, 50) if pr_values else None,
        pr90_ms=percentile(pr_values, 90) if pr_values else None,
        ep50_ms=percentile(ep_values, 50) if ep_values else None,
        ep90_ms=percentile(ep_values, 90) if ep_values else None,
        n_utt=len(traces),
        n_excluded_pr=n_excl_pr,
        n_excluded_ep=n_excl_ep,
        deletion_share=stats.deletion_share,
        frame_ms=frame_ms,
    )
