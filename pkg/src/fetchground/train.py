"""Training loop: in-image negative sampling, batched forward over both
modalities, the five-term loss, Adam updates, metrics CSV and
resumable checkpoints."""

import os
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .checkpoint import load_params, save_params
from .errors import DataFormatError, NumericError
from .losses import (LossWeights, cross_entropy, masked_sum_hinge,
                     total_loss)
from .model import Model, ModelConfig
from .optim import Adam, clip_global_norm
from .rng import SplitMix64
from .scenes import (context_crop, crop_to_input, generate_instruction,
                     relation_features, target_crop)
from .tensor import Tensor, backward, find_first_nonfinite
from .text import tokenize


@dataclass
class TripletSample:
    scene_index: int
    i: int  # anchor candidate (the target)
    j: int  # in-image visual negative, j != i
    k: int  # in-image linguistic negative, k != i (j may equal k)


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 32
    lr: float = 2e-4
    beta1: float = 0.99
    beta2: float = 0.9
    eps: float = 1e-8
    clip_norm: float = 5.0
    delta_c: int = 12
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    train_top1_scenes: int = 200


def sample_triplet(scene, scene_index: int, rng: SplitMix64):
    """Uniform in-image negatives; None when the scene has one candidate."""
    n = len(scene.candidates)
    i = scene.target_index
    if n < 2:
        return None
    j = rng.randint(n - 1)
    j = j if j < i else j + 1
    k = rng.randint(n - 1)
    k = k if k < i else k + 1
    return TripletSample(scene_index=scene_index, i=i, j=j, k=k)


def _visual_rows(scenes, picks, size, delta):
    """picks: list of (scene, candidate) pairs -> stacked input arrays."""
    tps, cps, rels = [], [], []
    for sc, idx in picks:
        tps.append(crop_to_input(target_crop(sc, idx), size))
        cps.append(crop_to_input(context_crop(sc, idx, delta), size))
        rels.append(relation_features(sc, idx))
    return np.stack(tps), np.stack(cps), np.stack(rels)


def batch_losses(model: Model, scenes, batch_idx, vocab, tcfg: TrainConfig,
                 rng: SplitMix64):
    """Forward one minibatch and return its LossReport.

    Language rows: [anchor sentences; negative sentences].  Visual rows:
    [target candidates; negative candidates].  Scenes with a single
    candidate keep their source term but are masked out of all hinges.
    """
    b = len(batch_idx)
    anchors, negs, mask, picks_i, picks_j, src_labels = [], [], [], [], [], []
    for si in batch_idx:
        sc = scenes[si]
        trip = sample_triplet(sc, si, rng)
        if trip is None:
            i = j = k = sc.target_index
            mask.append(0.0)
        else:
            i, j, k = trip.i, trip.j, trip.k
            mask.append(1.0)
        anchors.append(tokenize(sc.instruction, vocab))
        negs.append(tokenize(generate_instruction(sc, k, rng), vocab))
        picks_i.append((sc, i))
        picks_j.append((sc, j))
        src_labels.append(sc.source_index)

    lang = model.encode_language(anchors + negs)
    tp, cp, xr = _visual_rows(scenes, picks_i + picks_j,
                              model.cfg.input_size, tcfg.delta_c)
    vis = model.encode_visual(tp, cp, xr)

    def split(t):
        return T.narrow(t, 0, 0, b), T.narrow(t, 0, b, b)

    zl_i, zl_k = split(lang["zl"])
    lab_i, lab_k = split(lang["lab_main"])
    zv_i, zv_j = split(vis["zv"])
    tab_i, tab_j = split(vis["tab_main"])
    pool_i, pool_j = split(vis["pooled"])

    m = tcfg.weights.margin
    pos = T.cosine_rows(zl_i, zv_i)
    neg_v = T.cosine_rows(zl_i, zv_j)
    neg_l = T.cosine_rows(zl_k, zv_i)
    J_p = T.add(masked_sum_hinge(m, pos, neg_v, mask),
                masked_sum_hinge(m, pos, neg_l, mask))

    zero = Tensor(0.0)
    if model.cfg.use_tab:
        pt_i, pt_j = model.proj_t(tab_i), model.proj_t(tab_j)
        J_t = masked_sum_hinge(m, T.cosine_rows(zl_i, pt_i),
                               T.cosine_rows(zl_i, pt_j), mask)
    else:
        J_t = zero
    if model.cfg.use_ncab:
        pc_i, pc_j = model.proj_c(pool_i), model.proj_c(pool_j)
        J_c = masked_sum_hinge(m, T.cosine_rows(zl_i, pc_i),
                               T.cosine_rows(zl_i, pc_j), mask)
    else:
        J_c = zero
    if model.cfg.use_lab:
        pl_i, pl_k = model.proj_l(lab_i), model.proj_l(lab_k)
        J_l = masked_sum_hinge(m, T.cosine_rows(zv_i, pl_i),
                               T.cosine_rows(zv_i, pl_k), mask)
    else:
        J_l = zero

    probs = model.predict_source(zv_i, zl_i)
    J_src = cross_entropy(probs, src_labels)
    return total_loss(J_c, J_t, J_l, J_p, J_src, tcfg.weights)


def train_epoch(model: Model, scenes, vocab, tcfg: TrainConfig,
                rng: SplitMix64, opt: Adam) -> dict:
    """One pass over a shuffled permutation of the dataset; returns the
    per-batch means of each loss term."""
    order = list(range(len(scenes)))
    rng.shuffle(order)
    sums = {k: 0.0 for k in ("J_c", "J_t", "J_l", "J_p", "J_src", "J_total")}
    n_batches = 0
    for start in range(0, len(order), tcfg.batch_size):
        batch = order[start:start + tcfg.batch_size]
        opt.zero_grad()
        report = batch_losses(model, scenes, batch, vocab, tcfg, rng)
        if not np.isfinite(report.J_total.data):
            bad = find_first_nonfinite(report.J_total)
            where = bad._op if bad is not None else "unknown"
            raise NumericError(f"non-finite loss; first bad tensor from "
                               f"op '{where}'")
        backward(report.J_total)
        clip_global_norm(opt.params, tcfg.clip_norm)
        opt.step()
        for k, v in report.values().items():
            sums[k] += v
        n_batches += 1
    return {k: v / max(1, n_batches) for k, v in sums.items()}


METRIC_COLUMNS = ["epoch", "J_c", "J_t", "J_l", "J_p", "J_src", "J_total",
                  "train_top1"]

# model hyperparameters serialized into every checkpoint so a model can
# be rebuilt from the file alone
_CFG_SCALARS = ["vocab_size", "embed_dim", "lstm_hidden", "lstm_layers",
                "max_tokens", "input_size", "target_dim", "embed_out",
                "mlp_hidden", "relation_dim", "n_sources"]
_CFG_FLAGS = ["use_lab", "use_tab", "use_ncab"]


def model_config_arrays(cfg: ModelConfig) -> dict:
    out = {f"cfg.{k}": np.array([float(getattr(cfg, k))]) for k in _CFG_SCALARS}
    for k in _CFG_FLAGS:
        out[f"cfg.{k}"] = np.array([1.0 if getattr(cfg, k) else 0.0])
    out["cfg.conv_channels"] = np.array([float(c) for c in cfg.conv_channels])
    return out


def model_config_from_arrays(arrays: dict) -> ModelConfig:
    try:
        kw = {k: int(arrays[f"cfg.{k}"][0]) for k in _CFG_SCALARS}
        for k in _CFG_FLAGS:
            kw[k] = bool(arrays[f"cfg.{k}"][0])
        kw["conv_channels"] = tuple(int(c) for c in arrays["cfg.conv_channels"])
    except KeyError as e:
        raise DataFormatError(f"checkpoint lacks model config record {e}")
    return ModelConfig(**kw)


def save_training_checkpoint(path, model: Model, opt: Adam, rng: SplitMix64,
                             epoch: int):
    extra = opt.state_arrays()
    extra["epoch"] = np.array([float(epoch)])
    extra.update(model_config_arrays(model.cfg))
    save_params(path, model.parameters(), extra=extra,
                rng_state=rng.getstate())


def load_model(path) -> Model:
    """Rebuild a model purely from a checkpoint file."""
    from .checkpoint import load_arrays
    arrays, _ = load_arrays(path)
    cfg = model_config_from_arrays(arrays)
    model = Model(cfg, seed=0)
    for p in model.parameters():
        if p.name not in arrays:
            raise DataFormatError(f"{path}: missing parameter '{p.name}'")
        if arrays[p.name].shape != p.data.shape:
            raise DataFormatError(f"{path}: shape mismatch for '{p.name}'")
        p.data[...] = arrays[p.name]
    return model


def resume_training(path, model: Model, opt: Adam, rng: SplitMix64) -> int:
    """Restore params, optimizer and rng in place; returns epochs done."""
    extras, rng_state = load_params(path, model.parameters())
    opt.load_state_arrays(extras)
    if rng_state is None:
        raise DataFormatError(f"{path}: checkpoint has no generator state, "
                              "cannot resume deterministically")
    rng.setstate(rng_state)
    return int(extras["epoch"][0])


def format_metric(v: float) -> str:
    return repr(float(v))


def train(model: Model, scenes, vocab, tcfg: TrainConfig,
          out_dir=None, resume_from=None, log=None) -> list:
    """Full training run; returns one metrics dict per epoch.

    With out_dir set, writes metrics.csv and last.ckpt after every epoch.
    Resuming restores parameters, optimizer state and the generator, so
    the remaining epochs match an uninterrupted run exactly.
    """
    from .evaluate import evaluate

    opt = Adam(model.parameters(), lr=tcfg.lr, beta1=tcfg.beta1,
               beta2=tcfg.beta2, eps=tcfg.eps)
    rng = SplitMix64(tcfg.seed)
    start_epoch = 0
    rows = []
    if resume_from is not None:
        start_epoch = resume_training(resume_from, model, opt, rng)

    csv_path = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "metrics.csv")
    if csv_path and start_epoch == 0:
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write(",".join(METRIC_COLUMNS) + "\n")

    probe = scenes[:min(tcfg.train_top1_scenes, len(scenes))]
    for epoch in range(start_epoch + 1, tcfg.epochs + 1):
        model.set_mode("train")
        metrics = train_epoch(model, scenes, vocab, tcfg, rng, opt)
        model.set_mode("eval")
        result = evaluate(model, probe, vocab, delta=tcfg.delta_c)
        metrics["train_top1"] = result.top1
        metrics["epoch"] = epoch
        rows.append(metrics)
        if log:
            log(f"epoch {epoch}: J_total={metrics['J_total']:.4f} "
                f"train_top1={metrics['train_top1']:.3f}")
        if out_dir:
            with open(csv_path, "a", encoding="utf-8") as fh:
                fh.write(",".join([str(epoch)] +
                                  [format_metric(metrics[c])
                                   for c in METRIC_COLUMNS[1:]]) + "\n")
            save_training_checkpoint(os.path.join(out_dir, "last.ckpt"),
                                     model, opt, rng, epoch)
    return rows
