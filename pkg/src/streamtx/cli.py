"""Command-line entry point.

Subcommands::

    generate   write train/test corpora plus a manifest
    train      train one model, logging NLL per step
    eval       decode a corpus with a checkpoint, write reports + figure
    sweep      train/eval once per regularization weight, write sweep.csv
    selftest   run the numerical self-checks

Configuration comes from a flat key-value file (--config); individual
flags override file values.  Exit codes: 0 success, 1 usage error,
2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import datagen, metrics, report, selftest, train as train_mod
from .config import RunConfig, config_hash, config_to_dict, load_run_config
from .decoder import greedy_decode
from .lattice import eos_token_id
from .model import NumericalError, load_checkpoint, save_checkpoint

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2


class UsageError(Exception):
    pass


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamtx",
        description="Streaming-transducer training, decoding and latency benchmarking.",
    )
    parser.set_defaults(command=None)
    sub = parser.add_subparsers(dest="command")

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, default=None, help="flat key=value config file")
        p.add_argument("--lambda", dest="fastemit_lambda", type=float, default=None,
                       help="emission-regularization weight")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--output-dir", type=Path, default=None)
        p.add_argument("--frame-ms", dest="frame_ms", type=float, default=None,
                       help="milliseconds per feature frame")
        p.add_argument("--endpointer", choices=("on", "off"), default=None,
                       help="append/expect the end-of-query token")

    p_gen = sub.add_parser("generate", help="write train/test corpora and a manifest")
    add_common(p_gen)
    p_gen.set_defaults(func=cmd_generate)

    p_train = sub.add_parser("train", help="train a model on an existing corpus")
    add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="decode a corpus and report latency/error")
    add_common(p_eval)
    p_eval.add_argument("--checkpoint", type=Path, required=True)
    p_eval.add_argument("--corpus", type=Path, required=True)
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="train+eval across a lambda grid")
    add_common(p_sweep)
    p_sweep.add_argument("--grid", type=str, default=None,
                         help="comma-separated lambda values (default: built-in grid)")
    p_sweep.set_defaults(func=cmd_sweep)

    p_self = sub.add_parser("selftest", help="run numerical self-checks")
    p_self.add_argument("--seed", type=int, default=0)
    p_self.set_defaults(func=cmd_selftest)
    return parser


def _resolve_config(args: argparse.Namespace, extra: Optional[dict] = None) -> RunConfig:
    overrides = dict(extra or {})
    for key in ("fastemit_lambda", "seed", "frame_ms"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "output_dir", None) is not None:
        overrides["output_dir"] = str(args.output_dir)
    if getattr(args, "endpointer", None) is not None:
        overrides["endpointer"] = args.endpointer == "on"
    config_path = getattr(args, "config", None)
    if config_path is not None and not Path(config_path).exists():
        raise UsageError(f"config file not found: {config_path}")
    try:
        return load_run_config(config_path, overrides)
    except ValueError as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


# ---------------------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = config_hash(cfg)

    files = {}
    for split, n, stream in (("train", cfg.n_train, 0), ("test", cfg.n_test, 1)):
        corpus_cfg = cfg.corpus_config(n, seed_stream=stream)
        utts = datagen.generate(corpus_cfg)
        path = out / f"{split}.jsonl"
        datagen.save_corpus(path, corpus_cfg, utts, config_hash=digest)
        files[split] = path.name
        print(f"wrote {path} ({len(utts)} utterances)")

    manifest = {
        "config": config_to_dict(cfg),
        "config_hash": digest,
        "files": files,
        "seed": cfg.seed,
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote {manifest_path}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    out = Path(cfg.output_dir)
    corpus_path = out / "train.jsonl"
    if not corpus_path.exists():
        raise UsageError(f"training corpus not found: {corpus_path} (run generate first)")
    _, utterances = datagen.load_corpus(corpus_path)
    digest = config_hash(cfg)
    out.mkdir(parents=True, exist_ok=True)

    def progress(rec: train_mod.StepRecord) -> None:
        print(f"step {rec.step:6d}  nll {rec.nll:10.4f}  grad_norm {rec.grad_norm:8.4f}")

    params, history = train_mod.train(
        cfg,
        utterances,
        log_path=out / "training_log.csv",
        progress=progress,
        config_hash=digest,
    )
    ckpt_path = out / "checkpoint.ckpt"
    save_checkpoint(ckpt_path, cfg.model_config(), params)
    print(f"wrote {ckpt_path} (final nll {history[-1].nll:.4f})")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if not args.checkpoint.exists():
        raise UsageError(f"checkpoint not found: {args.checkpoint}")
    if not args.corpus.exists():
        raise UsageError(f"corpus not found: {args.corpus}")
    model_cfg, params = load_checkpoint(args.checkpoint)
    corpus_cfg, utterances = datagen.load_corpus(args.corpus)
    if model_cfg.vocab_size != corpus_cfg.vocab_size:
        raise UsageError(
            f"vocabulary mismatch: checkpoint has {model_cfg.vocab_size} tokens, "
            f"corpus has {corpus_cfg.vocab_size}"
        )
    if model_cfg.feature_dim != corpus_cfg.feature_dim:
        raise UsageError(
            f"feature mismatch: checkpoint expects dim {model_cfg.feature_dim}, "
            f"corpus has {corpus_cfg.feature_dim}"
        )
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    digest = config_hash(cfg)
    eos = eos_token_id(corpus_cfg.vocab_size) if corpus_cfg.endpointer_mode else None

    traces = [
        greedy_decode(params, utt.frames, cfg.max_symbols_per_frame, eos_id=eos)
        for utt in utterances
    ]
    _write_traces(out / "traces.jsonl", utterances, traces)
    rep = metrics.build_latency_report(
        traces,
        [utt.labels for utt in utterances],
        [utt.eos_frame for utt in utterances],
        cfg.frame_ms,
        eos_id=eos,
    )
    json_path, csv_path = report.write_report(rep, out, digest)
    print(f"wrote {json_path}")
    print(f"wrote {csv_path}")

    pr_vals, ep_vals = [], []
    for utt, trace in zip(utterances, traces):
        pr = metrics.pr_latency(trace, utt.eos_frame, cfg.frame_ms, eos)
        if pr is not None:
            pr_vals.append(pr)
        if eos is not None:
            ep = metrics.ep_latency(trace, utt.eos_frame, cfg.frame_ms, eos)
            if ep is not None:
                ep_vals.append(ep)
    fig = report.render_latency_figure(pr_vals, ep_vals, out / "latency_hist.png", cfg.frame_ms)
    if fig is not None:
        print(f"wrote {fig}")
    return EXIT_OK


def _write_traces(path: Path, utterances, traces) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for utt, trace in zip(utterances, traces):
            rec = {
                "id": utt.id,
                "tokens": list(trace.tokens),
                "frames": list(trace.frames),
                "eos_frame": utt.eos_frame,
                "reference": list(utt.labels),
            }
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def cmd_sweep(args: argparse.Namespace) -> int:
    extra = {}
    if args.grid is not None:
        try:
            grid = tuple(float(v) for v in args.grid.replace(",", " ").split())
        except ValueError:
            raise UsageError(f"cannot parse --grid {args.grid!r}") from None
        if not grid:
            raise UsageError("--grid must contain at least one value")
        extra["lambda_grid"] = grid
    cfg = _resolve_config(args, extra)
    out = Path(cfg.output_dir)
    digest = config_hash(cfg)

    train_path = out / "train.jsonl"
    if not train_path.exists():
        raise UsageError(f"training corpus not found: {train_path} (run generate first)")
    test_path = out / "test.jsonl"
    if not test_path.exists():
        raise UsageError(f"test corpus not found: {test_path} (run generate first)")

    rows = []
    for lam in sorted(set(cfg.lambda_grid)):
        member_dir = out / f"lambda_{lam:g}"
        row = {"lambda": lam, "status": "ok"}
        try:
            rep = _run_sweep_member(cfg, lam, member_dir, train_path, test_path)
            row.update(rep.schema_dict())
        except (NumericalError, ValueError, OSError) as exc:
            row["status"] = f"failed: {exc}"
            print(f"lambda={lam:g} failed: {exc}", file=sys.stderr)
        rows.append(row)
        if row["status"] == "ok":
            print(
                f"lambda={lam:g}  wer={row['wer']:.4f}  "
                f"pr50={_fmt_ms(row['pr50_ms'])}  pr90={_fmt_ms(row['pr90_ms'])}"
            )

    sweep_path = report.write_sweep(rows, out, digest)
    print(f"wrote {sweep_path}")
    fig = report.render_sweep_figure(rows, out / "sweep_tradeoff.png")
    if fig is not None:
        print(f"wrote {fig}")
    return EXIT_OK


def _fmt_ms(value) -> str:
    return "n/a" if value is None else f"{value:+.0f}ms"


def _run_sweep_member(
    cfg: RunConfig, lam: float, member_dir: Path, train_path: Path, test_path: Path
) -> metrics.LatencyReport:
    from dataclasses import replace

    member_cfg = replace(cfg, fastemit_lambda=lam, output_dir=str(member_dir))
    member_dir.mkdir(parents=True, exist_ok=True)
    digest = config_hash(member_cfg)
    _, train_utts = datagen.load_corpus(train_path)
    params, _ = train_mod.train(
        member_cfg, train_utts, log_path=member_dir / "training_log.csv", config_hash=digest
    )
    save_checkpoint(member_dir / "checkpoint.ckpt", member_cfg.model_config(), params)

    corpus_cfg, test_utts = datagen.load_corpus(test_path)
    eos = eos_token_id(corpus_cfg.vocab_size) if corpus_cfg.endpointer_mode else None
    traces = [
        greedy_decode(params, utt.frames, member_cfg.max_symbols_per_frame, eos_id=eos)
        for utt in test_utts
    ]
    _write_traces(member_dir / "traces.jsonl", test_utts, traces)
    rep = metrics.build_latency_report(
        traces,
        [utt.labels for utt in test_utts],
        [utt.eos_frame for utt in test_utts],
        member_cfg.frame_ms,
        eos_id=eos,
    )
    report.write_report(rep, member_dir, digest)
    return rep


def cmd_selftest(args: argparse.Namespace) -> int:
    results = selftest.run_selftest(seed=args.seed)
    all_ok = True
    for res in results:
        status = "pass" if res.passed else "FAIL"
        print(f"[{status}] {res.name}: max error {res.max_error:.3e} (limit {res.threshold:g})")
        all_ok = all_ok and res.passed
    print("-- informational: scaling rule vs fixed-diagonal autodiff --")
    for lam, n, gap in selftest.diagnostic_gradient_gaps(seed=args.seed):
        print(f"    lam={lam:g} diagonal n={n}: normalized gap {gap:.3e}")
    if not all_ok:
        print("selftest FAILED", file=sys.stderr)
        return EXIT_NUMERICAL
    print("selftest passed")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
