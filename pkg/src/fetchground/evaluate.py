"""Evaluation: cosine-ranked top-1 target accuracy, source accuracy from
the top-ranked candidate, context-margin sweeps and the ablation grid."""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .losses import rank_candidates
from .model import Model
from .scenes import context_crop, crop_to_input, relation_features, target_crop
from .tensor import no_grad
from .text import tokenize


@dataclass
class EvalResult:
    top1: float
    source_acc: float
    n_scenes: int
    per_mode: dict


def scene_scores(model: Model, scene, vocab, delta: int):
    """Rank all candidates of one scene; returns (order, sims,
    predicted_source, source_probs)."""
    size = model.cfg.input_size
    with no_grad():
        lang = model.encode_language([tokenize(scene.instruction, vocab)])
        tps, cps, rels = [], [], []
        for idx in range(len(scene.candidates)):
            tps.append(crop_to_input(target_crop(scene, idx), size))
            cps.append(crop_to_input(context_crop(scene, idx, delta), size))
            rels.append(relation_features(scene, idx))
        vis = model.encode_visual(np.stack(tps), np.stack(cps), np.stack(rels))
        order, sims = rank_candidates(T.reshape(lang["zl"], (-1,)), vis["zv"])
        top = order[0]
        probs = model.predict_source(T.narrow(vis["zv"], 0, top, 1),
                                     lang["zl"]).data[0]
    return order, sims, int(np.argmax(probs)), probs


def evaluate(model: Model, scenes, vocab, delta: int) -> EvalResult:
    """Assumes the model is already in eval mode."""
    hits, src_hits = 0, 0
    mode_hits, mode_counts = {}, {}
    for sc in scenes:
        order, _, pred_src, _ = scene_scores(model, sc, vocab, delta)
        ok = order[0] == sc.target_index
        hits += ok
        src_hits += pred_src == sc.source_index
        mode_counts[sc.mode] = mode_counts.get(sc.mode, 0) + 1
        mode_hits[sc.mode] = mode_hits.get(sc.mode, 0) + ok
    n = len(scenes)
    per_mode = {m: mode_hits[m] / mode_counts[m] for m in mode_counts}
    return EvalResult(top1=hits / n if n else 0.0,
                      source_acc=src_hits / n if n else 0.0,
                      n_scenes=n, per_mode=per_mode)


def delta_sweep(model: Model, scenes, vocab, deltas) -> list:
    """Re-crop context windows at each margin; returns one result row per
    margin value."""
    rows = []
    for d in deltas:
        res = evaluate(model, scenes, vocab, delta=int(d))
        rows.append({"delta": int(d), "top1": res.top1,
                     "source_acc": res.source_acc, "n_scenes": res.n_scenes})
    return rows


ABLATION_CELLS = [
    ("none", dict(use_lab=False, use_tab=False, use_ncab=False)),
    ("lab", dict(use_lab=True, use_tab=False, use_ncab=False)),
    ("lab+tab", dict(use_lab=True, use_tab=True, use_ncab=False)),
    ("lab+tab+ncab", dict(use_lab=True, use_tab=True, use_ncab=True)),
]


def ablation_grid(train_scenes, val_scenes, vocab, model_cfg, train_cfg,
                  seeds, log=None) -> list:
    """Train one model per (cell, seed) and evaluate each; returns rows of
    {cell, seed, top1, source_acc}."""
    from dataclasses import replace

    from .train import TrainConfig, train  # noqa: F401 (type reference)

    rows = []
    for cell_name, flags in ABLATION_CELLS:
        for seed in seeds:
            cfg = replace(model_cfg, **flags)
            tcfg = replace(train_cfg, seed=int(seed))
            model = Model(cfg, seed=int(seed))
            train(model, train_scenes, vocab, tcfg)
            model.set_mode("eval")
            res = evaluate(model, val_scenes, vocab, delta=tcfg.delta_c)
            rows.append({"cell": cell_name, "seed": int(seed),
                         "top1": res.top1, "source_acc": res.source_acc})
            if log:
                log(f"ablation {cell_name} seed {seed}: top1={res.top1:.3f}")
    return rows


def summarize(rows, key: str, value: str = "top1") -> dict:
    """Group rows by `key`; mean and population std of `value` per group."""
    out = {}
    for row in rows:
        out.setdefault(row[key], []).append(row[value])
    return {k: {"mean": float(np.mean(v)),
                "std": float(np.std(v)) if len(v) > 1 else 0.0,
                "n": len(v)}
            for k, v in out.items()}
