"""Command-line surface: dataset generation, training, evaluation and
attention-map export.

Exit codes: 0 success, 2 usage, 3 data or parse failure, 4 numeric
failure.
"""

import argparse
import os
import sys

from .config import format_config, parse_config_file, resolve_config
from .errors import (DataFormatError, GenerationError, InputError,
                     NumericError, UsageError)
from .evaluate import ablation_grid, delta_sweep, evaluate, summarize
from .model import Model, ModelConfig
from .scenes import GenConfig, generate_dataset, load_dataset, save_dataset
from .text import words
from .train import TrainConfig, load_model, train
from .viz import export_attention

EVAL_CSV_COLUMNS = ["section", "label", "seed", "top1", "source_acc",
                    "n_scenes"]


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fetchground",
        description="Fetch-instruction grounding on synthetic desk scenes.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic dataset")
    gen.add_argument("--out", required=True)
    gen.add_argument("--config")
    gen.add_argument("--seed")
    gen.add_argument("--scenes")
    gen.add_argument("--mode")
    gen.add_argument("--candidates")

    tr = sub.add_parser("train", help="train a model on a dataset")
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True)
    tr.add_argument("--config")
    tr.add_argument("--resume", metavar="CKPT")
    for key in ("seed", "epochs", "batch_size", "lr", "beta1", "beta2",
                "eps", "clip_norm", "delta", "lab", "tab", "ncab"):
        tr.add_argument(f"--{key.replace('_', '-')}", dest=key)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--data", required=True)
    ev.add_argument("--ckpt")
    ev.add_argument("--out")
    ev.add_argument("--config")
    ev.add_argument("--delta-sweep", metavar="D0,D1,...")
    ev.add_argument("--ablation", action="store_true")
    ev.add_argument("--train-data")
    for key in ("seed", "epochs", "batch_size", "lr", "beta1", "beta2",
                "eps", "clip_norm", "delta", "seeds"):
        ev.add_argument(f"--{key.replace('_', '-')}", dest=key)

    vz = sub.add_parser("viz", help="export attention maps for a scene")
    vz.add_argument("--data", required=True)
    vz.add_argument("--ckpt", required=True)
    vz.add_argument("--out", required=True)
    vz.add_argument("--scene", type=int, required=True)
    vz.add_argument("--candidate", type=int, required=True)
    vz.add_argument("--config")
    vz.add_argument("--delta", dest="delta")
    return parser


def _resolve(args, command: str) -> dict:
    """flags > config file > defaults for the command's schema keys."""
    file_values = parse_config_file(args.config) if args.config else None
    table_keys = resolve_config(command).keys()
    overrides = {k: getattr(args, k) for k in table_keys
                 if getattr(args, k, None) is not None}
    return resolve_config(command, file_values, overrides)


def _echo_config(out_dir, cfg: dict):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(format_config(cfg))


def _parse_int_list(text: str, what: str) -> list:
    try:
        items = [int(p) for p in text.split(",") if p.strip() != ""]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated integers, "
                         f"got {text!r}") from None
    if not items:
        raise UsageError(f"{what} is empty")
    return items


def cmd_gen(args) -> int:
    cfg = _resolve(args, "gen")
    gcfg = GenConfig(n_candidates=cfg["candidates"],
                     ambiguity_mode=cfg["mode"])
    scenes = generate_dataset(cfg["seed"], cfg["scenes"], gcfg)
    meta = {"seed": cfg["seed"], "scenes": cfg["scenes"],
            "mode": cfg["mode"], "candidates": cfg["candidates"]}
    save_dataset(scenes, args.out, meta)
    _echo_config(args.out, cfg)
    n = len(scenes)
    avg_cands = sum(len(sc.candidates) for sc in scenes) / n
    avg_words = sum(len(words(sc.instruction)) for sc in scenes) / n
    print(f"wrote {n} scenes to {args.out}")
    print(f"average candidates per scene: {avg_cands:.2f}")
    print(f"average words per instruction: {avg_words:.2f}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve(args, "train")
    scenes, vocab = load_dataset(args.data)
    tcfg = TrainConfig(epochs=cfg["epochs"], batch_size=cfg["batch_size"],
                       lr=cfg["lr"], beta1=cfg["beta1"], beta2=cfg["beta2"],
                       eps=cfg["eps"], clip_norm=cfg["clip_norm"],
                       delta_c=cfg["delta"], seed=cfg["seed"])
    if args.resume:
        model = load_model(args.resume)
    else:
        model = Model(ModelConfig(vocab_size=len(vocab),
                                  use_lab=cfg["lab"], use_tab=cfg["tab"],
                                  use_ncab=cfg["ncab"]),
                      seed=cfg["seed"])
    _echo_config(args.out, cfg)
    rows = train(model, scenes, vocab, tcfg, out_dir=args.out,
                 resume_from=args.resume, log=print)
    if rows:
        last = rows[-1]
        print(f"finished epoch {last['epoch']}: "
              f"J_total={last['J_total']:.6f} "
              f"train_top1={last['train_top1']:.3f}")
    print(f"checkpoint: {os.path.join(args.out, 'last.ckpt')}")
    return 0


def _write_eval_csv(out_dir, rows):
    path = os.path.join(out_dir, "eval.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(EVAL_CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(str(row[c]) for c in EVAL_CSV_COLUMNS) + "\n")
    return path


def _print_rows(rows):
    widths = [max(len(str(r[c])) for r in rows + [dict(zip(
        EVAL_CSV_COLUMNS, EVAL_CSV_COLUMNS))]) for c in EVAL_CSV_COLUMNS]
    header = "  ".join(c.ljust(w) for c, w in zip(EVAL_CSV_COLUMNS, widths))
    print(header)
    for row in rows:
        print("  ".join(str(row[c]).ljust(w)
                        for c, w in zip(EVAL_CSV_COLUMNS, widths)))


def _row(section, label, seed, top1, source_acc, n_scenes):
    return {"section": section, "label": label, "seed": seed,
            "top1": repr(float(top1)), "source_acc": repr(float(source_acc)),
            "n_scenes": n_scenes}


def cmd_eval(args) -> int:
    cfg = _resolve(args, "eval")
    scenes, vocab = load_dataset(args.data)
    rows = []

    if args.ablation:
        if not args.train_data:
            raise UsageError("--ablation needs --train-data")
        train_scenes, train_vocab = load_dataset(args.train_data)
        seeds = _parse_int_list(cfg["seeds"], "seeds")
        model_cfg = ModelConfig(vocab_size=len(train_vocab))
        tcfg = TrainConfig(epochs=cfg["epochs"],
                           batch_size=cfg["batch_size"], lr=cfg["lr"],
                           beta1=cfg["beta1"], beta2=cfg["beta2"],
                           eps=cfg["eps"], clip_norm=cfg["clip_norm"],
                           delta_c=cfg["delta"])
        grid = ablation_grid(train_scenes, scenes, train_vocab, model_cfg,
                             tcfg, seeds, log=print)
        for r in grid:
            rows.append(_row("cell", r["cell"], r["seed"], r["top1"],
                             r["source_acc"], len(scenes)))
        top1_stats = summarize(grid, "cell", "top1")
        src_stats = summarize(grid, "cell", "source_acc")
        for cell in top1_stats:
            t, s = top1_stats[cell], src_stats[cell]
            rows.append(_row("cell_mean", cell, "", t["mean"], s["mean"],
                             len(scenes)))
            if t["n"] >= 2:
                rows.append(_row("cell_std", cell, "", t["std"], s["std"],
                                 len(scenes)))
    else:
        if not args.ckpt:
            raise UsageError("eval needs --ckpt (or --ablation)")
        model = load_model(args.ckpt)
        model.set_mode("eval")
        if args.delta_sweep:
            deltas = _parse_int_list(args.delta_sweep, "--delta-sweep")
            for r in delta_sweep(model, scenes, vocab, deltas):
                rows.append(_row("delta", r["delta"], "", r["top1"],
                                 r["source_acc"], r["n_scenes"]))
        else:
            res = evaluate(model, scenes, vocab, delta=cfg["delta"])
            rows.append(_row("overall", "all", "", res.top1, res.source_acc,
                             res.n_scenes))
            for mode in sorted(res.per_mode):
                rows.append(_row("mode", mode, "", res.per_mode[mode],
                                 res.source_acc, res.n_scenes))

    _print_rows(rows)
    if args.out:
        _echo_config(args.out, cfg)
        path = _write_eval_csv(args.out, rows)
        print(f"report: {path}")
    return 0


def cmd_viz(args) -> int:
    cfg = _resolve(args, "viz")
    scenes, vocab = load_dataset(args.data)
    if not (0 <= args.scene < len(scenes)):
        raise UsageError(f"scene index {args.scene} out of range for a "
                         f"dataset with {len(scenes)} scenes")
    model = load_model(args.ckpt)
    model.set_mode("eval")
    paths = export_attention(model, scenes[args.scene], vocab,
                             args.candidate, cfg["delta"], args.out)
    _echo_config(args.out, cfg)
    for name in ("context", "attention", "sidecar"):
        print(f"{name}: {paths[name]}")
    return 0


_COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval,
             "viz": cmd_viz}


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, InputError, GenerationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
