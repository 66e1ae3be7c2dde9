"""Target-fetching classifier: a linguistic branch (recurrent encoder +
attention over its feature map), a target branch and a neighboring-context
branch (CNN features + attention masks), and a perception stage that
embeds both modalities into one space and classifies the source box.

Every attended output obeys o = a * f with a strictly inside (0,1); a
disabled branch skips only its mask and loss head, never the feature
pipeline, so downstream shapes do not depend on the ablation flags.
"""

from dataclasses import dataclass

import numpy as np

from . import conv as C
from . import tensor as T
from .errors import DimensionError
from .nn import (MLP, BiLSTM, Conv1d, Conv2d, Embedding, Linear, Module,
                 check_unique_names, set_training)
from .rng import SplitMix64
from .tensor import Tensor


@dataclass
class ModelConfig:
    vocab_size: int = 64
    embed_dim: int = 32
    lstm_hidden: int = 64
    lstm_layers: int = 1
    max_tokens: int = 32
    input_size: int = 32          # square side of target/context inputs
    conv_channels: tuple = (8, 16, 32)
    target_dim: int = 64          # f_t length
    embed_out: int = 64           # joint embedding length
    mlp_hidden: int = 128
    relation_dim: int = 9
    n_sources: int = 4
    use_lab: bool = True
    use_tab: bool = True
    use_ncab: bool = True

    @property
    def feature_columns(self):
        # one column per (layer, direction) of the recurrent encoder
        return 2 * self.lstm_layers

    @property
    def feature_channels(self):
        # each column stacks the final hidden and cell state
        return 2 * self.lstm_hidden

    @property
    def context_channels(self):
        return self.conv_channels[-1]

    def as_dict(self):
        d = self.__dict__.copy()
        d["conv_channels"] = ",".join(str(c) for c in self.conv_channels)
        return d


def pad_token_batch(token_lists, max_tokens):
    """Right-pad id lists to a common length; returns (ids [B,L], lengths)."""
    clipped = [ids[:max_tokens] for ids in token_lists]
    lengths = np.array([len(ids) for ids in clipped], dtype=np.int64)
    L = int(lengths.max())
    out = np.zeros((len(clipped), L), dtype=np.int64)
    for r, ids in enumerate(clipped):
        out[r, :len(ids)] = ids
    return out, lengths


class LinguisticBranch(Module):
    """Tokens -> recurrent feature map f_l -> attention mask a_l -> o_l."""

    def __init__(self, cfg: ModelConfig, rng: SplitMix64):
        super().__init__()
        self.cfg = cfg
        self.embedding = self.add_child(
            Embedding("lang.embed", cfg.vocab_size, cfg.embed_dim, rng))
        self.lstm = self.add_child(
            BiLSTM("lang.lstm", cfg.embed_dim, cfg.lstm_hidden,
                   cfg.lstm_layers, rng))
        ch = cfg.feature_channels
        half = ch // 2
        self.conv1 = self.add_child(Conv1d("lab.conv1", ch, half, 1, rng))
        self.conv2 = self.add_child(Conv1d("lab.conv2", half, half, 1, rng))
        self.conv3 = self.add_child(Conv1d("lab.conv3", half, ch, 1, rng))
        self.side = self.add_child(Conv1d("lab.side", half, ch, 1, rng))

    def encode(self, ids_padded, lengths) -> Tensor:
        """f_l: [B, 2H, 2L] — column (layer, direction) holds the final
        hidden state stacked on the final cell state."""
        emb = self.embedding(ids_padded)
        _, finals = self.lstm.forward_batch(emb, lengths)
        cols = []
        for (fh, fc), (bh, bc) in finals:
            cols.append(T.concat([fh, fc], axis=1))
            cols.append(T.concat([bh, bc], axis=1))
        bsz = ids_padded.shape[0]
        stacked = [T.reshape(c, (bsz, self.cfg.feature_channels, 1)) for c in cols]
        return T.concat(stacked, axis=2)

    def attend(self, f_l: Tensor):
        """Returns (a_l, o_l, main) with main the third conv's output."""
        h1 = T.relu(self.conv1(f_l))
        h2 = T.relu(self.conv2(h1))
        main = self.conv3(h2)
        if self.cfg.use_lab:
            a_l = T.sigmoid(self.side(h2))
            o_l = T.hadamard(a_l, f_l)
        else:
            a_l = None
            o_l = f_l
        return a_l, o_l, main


class TargetBranch(Module):
    """Target crop -> f_t -> FC trunk with a mask tap on the second
    layer -> o_t."""

    def __init__(self, cfg: ModelConfig, rng: SplitMix64):
        super().__init__()
        self.cfg = cfg
        c1, c2, c3 = cfg.conv_channels
        self.conv1 = self.add_child(Conv2d("tgt.conv1", 3, c1, 2, rng, stride=2))
        self.conv2 = self.add_child(Conv2d("tgt.conv2", c1, c2, 2, rng, stride=2))
        self.conv3 = self.add_child(Conv2d("tgt.conv3", c2, c3, 2, rng, stride=2))
        side = cfg.input_size // 8
        flat = c3 * side * side
        self.to_vec = self.add_child(Linear("tgt.to_vec", flat, cfg.target_dim, rng))
        d = cfg.target_dim
        self.fc = [self.add_child(Linear(f"tab.fc{i + 1}", d, d, rng))
                   for i in range(5)]
        self.side = self.add_child(Linear("tab.side", d, d, rng))

    def extract(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != self.cfg.input_size:
            raise DimensionError(
                f"target branch expects [B,3,{self.cfg.input_size},"
                f"{self.cfg.input_size}], got {x.shape}")
        h = T.relu(self.conv1(x))
        h = T.relu(self.conv2(h))
        h = T.relu(self.conv3(h))
        return self.to_vec(T.reshape(h, (x.shape[0], -1)))

    def attend(self, f_t: Tensor):
        """Returns (a_t, o_t, main) with main the fifth FC output."""
        h = T.relu(self.fc[0](f_t))
        h2 = T.relu(self.fc[1](h))
        h = T.relu(self.fc[2](h2))
        h = T.relu(self.fc[3](h))
        main = self.fc[4](h)
        if self.cfg.use_tab:
            a_t = T.sigmoid(self.side(h2))
            o_t = T.hadamard(a_t, f_t)
        else:
            a_t = None
            o_t = f_t
        return a_t, o_t, main


class ContextBranch(Module):
    """Context crop -> spatial f_c -> conv trunk with a single-channel
    mask tap on the third layer -> o_c plus a pooled trunk vector."""

    def __init__(self, cfg: ModelConfig, rng: SplitMix64):
        super().__init__()
        self.cfg = cfg
        c1, c2, c3 = cfg.conv_channels
        self.conv1 = self.add_child(Conv2d("ctx.conv1", 3, c1, 2, rng, stride=2))
        self.conv2 = self.add_child(Conv2d("ctx.conv2", c1, c2, 2, rng, stride=2))
        self.conv3 = self.add_child(Conv2d("ctx.conv3", c2, c3, 2, rng, stride=2))
        cc = cfg.context_channels
        self.trunk = [self.add_child(Conv2d(f"ncab.conv{i + 1}", cc, cc, 3, rng,
                                            padding=1))
                      for i in range(4)]
        self.side = self.add_child(Conv2d("ncab.side", cc, 1, 1, rng))

    def extract(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != self.cfg.input_size:
            raise DimensionError(
                f"context branch expects [B,3,{self.cfg.input_size},"
                f"{self.cfg.input_size}], got {x.shape}")
        h = T.relu(self.conv1(x))
        h = T.relu(self.conv2(h))
        return T.relu(self.conv3(h))

    def attend(self, f_c: Tensor):
        """Returns (a_c, o_c, pooled)."""
        h = T.relu(self.trunk[0](f_c))
        h = T.relu(self.trunk[1](h))
        h3 = T.relu(self.trunk[2](h))
        pooled = C.global_avg_pool(self.trunk[3](h3))
        if self.cfg.use_ncab:
            a_c = T.sigmoid(self.side(h3))
            o_c = T.hadamard(a_c, f_c)
        else:
            a_c = None
            o_c = f_c
        return a_c, o_c, pooled


class Model(Module):
    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = SplitMix64(seed)
        self.language = self.add_child(LinguisticBranch(cfg, rng))
        self.target = self.add_child(TargetBranch(cfg, rng))
        self.context = self.add_child(ContextBranch(cfg, rng))
        cc = cfg.context_channels
        dz = cfg.embed_out
        vis_in = cfg.target_dim + 2 * cc + cfg.relation_dim
        lin_in = cfg.feature_channels * cfg.feature_columns
        hid = cfg.mlp_hidden
        self.visual_mlp = self.add_child(
            MLP("fuse.vmlp", [vis_in, hid, hid, dz], rng))
        self.linguistic_mlp = self.add_child(
            MLP("fuse.lmlp", [lin_in, hid, hid, dz], rng))
        self.source_mlp = self.add_child(
            MLP("fuse.src", [2 * dz, dz, dz, cfg.n_sources], rng))
        self.proj_l = self.add_child(Linear("head.proj_l", lin_in, dz, rng))
        self.proj_t = self.add_child(Linear("head.proj_t", cfg.target_dim, dz, rng))
        self.proj_c = self.add_child(Linear("head.proj_c", cc, dz, rng))
        check_unique_names(self.parameters())

    def set_mode(self, mode: str, freeze_stats: bool = False):
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got '{mode}'")
        set_training(self, mode == "train", freeze_stats)

    def encode_language(self, token_lists) -> dict:
        """Batch of token id lists -> zl [B,Dz] plus branch internals."""
        ids, lengths = pad_token_batch(token_lists, self.cfg.max_tokens)
        f_l = self.language.encode(ids, lengths)
        a_l, o_l, main = self.language.attend(f_l)
        bsz = ids.shape[0]
        zl = self.linguistic_mlp(T.reshape(o_l, (bsz, -1)))
        return {"f_l": f_l, "a_l": a_l, "o_l": o_l,
                "lab_main": T.reshape(main, (bsz, -1)), "zl": zl}

    def encode_visual(self, target_px, context_px, relations) -> dict:
        """target_px, context_px: [B,3,S,S] arrays; relations: [B,9].

        Returns zv [B,Dz] plus branch internals.
        """
        xt = target_px if isinstance(target_px, Tensor) else Tensor(target_px)
        xc = context_px if isinstance(context_px, Tensor) else Tensor(context_px)
        xr = relations if isinstance(relations, Tensor) else Tensor(relations)
        f_t = self.target.extract(xt)
        a_t, o_t, tab_main = self.target.attend(f_t)
        f_c = self.context.extract(xc)
        a_c, o_c, pooled = self.context.attend(f_c)
        gap_oc = C.global_avg_pool(o_c)
        zv = self.visual_mlp(T.concat([o_t, gap_oc, pooled, xr], axis=1))
        return {"f_t": f_t, "a_t": a_t, "o_t": o_t, "tab_main": tab_main,
                "f_c": f_c, "a_c": a_c, "o_c": o_c, "pooled": pooled,
                "zv": zv}

    def predict_source(self, zv: Tensor, zl: Tensor) -> Tensor:
        """Source-box probabilities [B, M]."""
        logits = self.source_mlp(T.concat([zv, zl], axis=1))
        return T.softmax(logits, axis=1)


def count_parameters(model: Module) -> int:
    return sum(int(np.prod(p.data.shape)) for p in model.parameters()
               if p.trainable)
