"""Command-line entry point: pretrain, finetune, eval, compare, serve.

Exit codes: 0 ok, 2 configuration error, 3 checkpoint/config incompatibility,
4 corrupt checkpoint, 5 comparison mismatch. PREFSLIDER_OUT_DIR, when set,
re-roots relative output paths.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config
from .pareto import FrontReport, ParetoError, compare_fronts
from .runs import (
    ArchitectureMismatch,
    eval_grid,
    run_finetune,
    run_pretrain,
    samples_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPAT = 3
EXIT_CORRUPT = 4
EXIT_COMPARE = 5

OUT_DIR_ENV = "PREFSLIDER_OUT_DIR"


def _resolve_out(path: str) -> Path:
    p = Path(path)
    override = os.environ.get(OUT_DIR_ENV)
    if override and not p.is_absolute():
        return Path(override) / p
    return p


def _load_cfg(path: str, seed: int | None) -> RunConfig:
    cfg = load_config(path)
    if seed is not None:
        cfg = cfg.model_copy(deep=True)
        cfg.run.seed = seed
    return cfg


def cmd_pretrain(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args.config, args.seed)
    triple, losses = run_pretrain(cfg)
    out = _resolve_out(args.out)
    ck_id = save_checkpoint(out, triple, cfg, step=0)
    final = losses[-1] if losses else float("nan")
    print(f"pretrained {cfg.pretrain.steps} steps, final flow loss {final:.6f}")
    print(f"checkpoint {ck_id} -> {out}")
    curve = out.with_suffix(out.suffix + ".losses.json")
    curve.write_text(json.dumps(losses) + "\n")
    return EXIT_OK


def cmd_finetune(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args.config, args.seed)
    base = load_checkpoint(args.checkpoint)
    out = _resolve_out(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = out.with_suffix(out.suffix + ".log.jsonl")
    if base.step == 0 and log_path.exists():
        log_path.unlink()  # fresh run; resumed runs append
    triple, opt, lines = run_finetune(cfg, base, log_path=log_path)
    ck_id = save_checkpoint(out, triple, cfg, step=cfg.morl.finetune_steps, opt_state=opt)
    print(f"finetuned {cfg.morl.finetune_steps - base.step} outer steps ({len(lines)} groups)")
    print(f"checkpoint {ck_id} -> {out}")
    print(f"log -> {log_path}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    result = eval_grid(
        ckpt.config, ckpt.triple.current, args.grid_k, args.samples, seed=args.seed
    )
    out = _resolve_out(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(result.report.to_json())
    csv_path = out.with_suffix(out.suffix + ".samples.csv")
    csv_path.write_text(samples_csv(result))
    nondom = sum(result.report.nondominated_mask)
    print(
        f"evaluated {len(result.report.points)} preference points: "
        f"HV={result.report.hypervolume:.4f}, {nondom} non-dominated"
    )
    print(f"report -> {out}")
    print(f"samples -> {csv_path}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    reports = []
    for path in args.reports:
        p = Path(path)
        if not p.exists():
            raise ParetoError(f"report not found: {p}")
        try:
            reports.append(FrontReport.from_json_dict(json.loads(p.read_text())))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParetoError(f"malformed report {p}: {exc}") from exc
    rows = compare_fronts(reports)
    header = f"{'method':<24} {'HV':>8} {'NonDom':>7} {'Pts':>5}"
    print(header)
    print("-" * len(header))
    for row in rows:
        print(f"{row.label:<24} {row.hypervolume:>8.4f} {row.nondominated:>7d} {row.n_points:>5d}")
    if args.out:
        out = _resolve_out(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        doc = {
            "methods": [
                {
                    "label": r.label,
                    "hypervolume": r.hypervolume,
                    "nondominated": r.nondominated,
                    "n_points": r.n_points,
                }
                for r in rows
            ]
        }
        out.write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")
        print(f"table -> {out}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    from .service import serve

    load_checkpoint(args.checkpoint)  # surface corruption before binding the port
    serve(args.checkpoint, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prefslider")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="flow-matching warm start from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("finetune", help="multi-reward fine-tuning from a base checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("eval", help="preference-grid sweep -> front report + samples CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--grid-k", type=int, default=5)
    p.add_argument("--samples", type=int, default=512)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("compare", help="pooled hypervolume table over front reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("serve", help="run the slider inference service")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--port", type=int, default=8787)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArchitectureMismatch as exc:
        print(f"incompatible checkpoint: {exc}", file=sys.stderr)
        return EXIT_COMPAT
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except ParetoError as exc:
        print(f"comparison error: {exc}", file=sys.stderr)
        return EXIT_COMPARE


if __name__ == "__main__":
    sys.exit(main())
