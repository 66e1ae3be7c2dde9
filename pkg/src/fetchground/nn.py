"""Layers built on the tensor core: linear, conv wrappers, batch norm,
embedding table and a multi-layer bidirectional LSTM.

All weights are drawn uniform in [-s, s] with s = 1/sqrt(fan_in) from the
caller's generator; biases start at zero except the LSTM forget gate,
which starts at 1.0.
"""

import numpy as np

from . import tensor as T
from . import conv as C
from .errors import DimensionError, InputError, UsageError
from .rng import SplitMix64
from .tensor import Tensor


class Parameter:
    """Named trainable (or frozen) array owned by exactly one layer."""

    __slots__ = ("tensor", "name", "trainable")

    def __init__(self, data, name: str, trainable: bool = True):
        self.tensor = Tensor(np.array(data, dtype=np.float64))
        self.tensor.requires_grad = trainable
        self.tensor.ensure_grad()
        self.name = name
        self.trainable = trainable

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self) -> np.ndarray:
        return self.tensor.grad

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.tensor.shape})"


def uniform_init(rng: SplitMix64, shape, fan_in: int) -> np.ndarray:
    s = 1.0 / np.sqrt(fan_in)
    n = int(np.prod(shape))
    return rng.uniform_array(n, -s, s).reshape(shape)


class Module:
    """Tiny base: children and parameters are tracked explicitly."""

    def __init__(self):
        self._params: list[Parameter] = []
        self._children: list["Module"] = []

    def register(self, param: Parameter) -> Parameter:
        self._params.append(param)
        return param

    def add_child(self, child: "Module") -> "Module":
        self._children.append(child)
        return child

    def parameters(self) -> list[Parameter]:
        out = list(self._params)
        for ch in self._children:
            out.extend(ch.parameters())
        return out

    def zero_grad(self):
        for p in self.parameters():
            p.tensor.zero_grad()


class Linear(Module):
    def __init__(self, name: str, in_features: int, out_features: int, rng: SplitMix64):
        super().__init__()
        self.w = self.register(Parameter(
            uniform_init(rng, (in_features, out_features), in_features), f"{name}.weight"))
        self.b = self.register(Parameter(
            np.zeros(out_features), f"{name}.bias"))

    def __call__(self, x: Tensor) -> Tensor:
        return T.linear(x, self.w.tensor, self.b.tensor)


class Conv2d(Module):
    def __init__(self, name: str, cin: int, cout: int, k: int, rng: SplitMix64,
                 stride: int = 1, padding: int = 0):
        super().__init__()
        self.stride, self.padding = stride, padding
        self.w = self.register(Parameter(
            uniform_init(rng, (cout, cin, k, k), cin * k * k), f"{name}.weight"))
        self.b = self.register(Parameter(np.zeros(cout), f"{name}.bias"))

    def __call__(self, x: Tensor) -> Tensor:
        y = C.conv2d(x, self.w.tensor, stride=self.stride, padding=self.padding)
        bias = T.reshape(self.b.tensor, (-1, 1, 1))
        return T.add(y, bias)


class Conv1d(Module):
    def __init__(self, name: str, cin: int, cout: int, k: int, rng: SplitMix64,
                 stride: int = 1, padding: int = 0):
        super().__init__()
        self.stride, self.padding = stride, padding
        self.w = self.register(Parameter(
            uniform_init(rng, (cout, cin, k), cin * k), f"{name}.weight"))
        self.b = self.register(Parameter(np.zeros(cout), f"{name}.bias"))

    def __call__(self, x: Tensor) -> Tensor:
        y = C.conv1d(x, self.w.tensor, stride=self.stride, padding=self.padding)
        bias = T.reshape(self.b.tensor, (-1, 1))
        return T.add(y, bias)


class BatchNorm(Module):
    """1-D batch norm over the row axis of a [B, D] activation.

    Training mode normalizes with per-batch statistics and refreshes the
    running averages (momentum 0.9) unless stats are frozen; eval mode
    always uses the running averages, so a single row is fine there.
    """

    MOMENTUM = 0.9
    EPS = 1e-5

    def __init__(self, name: str, dim: int):
        super().__init__()
        self.gamma = self.register(Parameter(np.ones(dim), f"{name}.gamma"))
        self.beta = self.register(Parameter(np.zeros(dim), f"{name}.beta"))
        self.running_mean = self.register(Parameter(
            np.zeros(dim), f"{name}.running_mean", trainable=False))
        self.running_var = self.register(Parameter(
            np.ones(dim), f"{name}.running_var", trainable=False))
        self.training = True
        self.freeze_stats = False

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 2:
            raise DimensionError(f"BatchNorm expects [B,D], got {x.shape}")
        g = T.reshape(self.gamma.tensor, (1, -1))
        b = T.reshape(self.beta.tensor, (1, -1))
        if self.training:
            mu = T.tmean(x, axis=0, keepdims=True)
            xc = T.sub(x, mu)
            var = T.tmean(T.mul(xc, xc), axis=0, keepdims=True)
            inv = T.div(Tensor(1.0), T.sqrt(T.add(var, Tensor(self.EPS))))
            y = T.add(T.mul(T.mul(xc, inv), g), b)
            if not self.freeze_stats:
                m = self.MOMENTUM
                self.running_mean.data[:] = m * self.running_mean.data + (1 - m) * mu.data[0]
                self.running_var.data[:] = m * self.running_var.data + (1 - m) * var.data[0]
            return y
        rm = Tensor(self.running_mean.data[None, :])
        rinv = Tensor(1.0 / np.sqrt(self.running_var.data[None, :] + self.EPS))
        return T.add(T.mul(T.mul(T.sub(x, rm), rinv), g), b)


class Embedding(Module):
    """Trainable token lookup table; row 0 (PAD) starts at zero."""

    def __init__(self, name: str, vocab_size: int, dim: int, rng: SplitMix64,
                 pad_id: int = 0):
        super().__init__()
        table = uniform_init(rng, (vocab_size, dim), dim)
        table[pad_id] = 0.0
        self.table = self.register(Parameter(table, f"{name}.table"))
        self.vocab_size = vocab_size

    def __call__(self, ids) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise IndexError(f"embedding id out of range [0, {self.vocab_size})")
        flat = T.take_rows(self.table.tensor, ids.reshape(-1))
        return T.reshape(flat, (*ids.shape, -1))


class LSTMDirection(Module):
    """Single-direction LSTM layer; gate order (input, forget, cell, output)."""

    def __init__(self, name: str, input_dim: int, hidden: int, rng: SplitMix64):
        super().__init__()
        self.hidden = hidden
        fan_in = input_dim + hidden
        self.w = self.register(Parameter(
            uniform_init(rng, (fan_in, 4 * hidden), fan_in), f"{name}.weight"))
        bias = np.zeros(4 * hidden)
        bias[hidden:2 * hidden] = 1.0  # forget gate bias
        self.b = self.register(Parameter(bias, f"{name}.bias"))

    def step(self, x_t: Tensor, h: Tensor, c: Tensor):
        z = T.linear(T.concat([x_t, h], axis=1), self.w.tensor, self.b.tensor)
        hd = self.hidden
        i = T.sigmoid(T.narrow(z, 1, 0, hd))
        f = T.sigmoid(T.narrow(z, 1, hd, hd))
        gc = T.tanh(T.narrow(z, 1, 2 * hd, hd))
        o = T.sigmoid(T.narrow(z, 1, 3 * hd, hd))
        c_new = T.add(T.mul(f, c), T.mul(i, gc))
        h_new = T.mul(o, T.tanh(c_new))
        return h_new, c_new

    def run(self, xs: list, masks: list, reverse: bool):
        """xs: per-step [B,E] tensors; masks: per-step [B,H] 0/1 constants.

        Masked steps freeze the state, so right-padded batches yield the
        same finals as per-sequence runs.  Returns (outputs per step in
        original order, final h, final c).
        """
        bsz = xs[0].shape[0]
        h = Tensor(np.zeros((bsz, self.hidden)))
        c = Tensor(np.zeros((bsz, self.hidden)))
        order = range(len(xs) - 1, -1, -1) if reverse else range(len(xs))
        outs = [None] * len(xs)
        for t in order:
            h_new, c_new = self.step(xs[t], h, c)
            m = masks[t]
            km = Tensor(1.0 - m.data)
            h = T.add(T.mul(m, h_new), T.mul(km, h))
            c = T.add(T.mul(m, c_new), T.mul(km, c))
            outs[t] = h
        return outs, h, c


class BiLSTM(Module):
    """Stacked bidirectional LSTM; layer l > 0 consumes the 2H-wide
    concatenation of layer l-1's per-step outputs."""

    def __init__(self, name: str, input_dim: int, hidden: int, layers: int,
                 rng: SplitMix64):
        super().__init__()
        self.hidden = hidden
        self.layers = layers
        self.dirs = []
        for l in range(layers):
            dim = input_dim if l == 0 else 2 * hidden
            fwd = LSTMDirection(f"{name}.l{l}.fwd", dim, hidden, rng)
            bwd = LSTMDirection(f"{name}.l{l}.bwd", dim, hidden, rng)
            self.add_child(fwd)
            self.add_child(bwd)
            self.dirs.append((fwd, bwd))

    def forward_batch(self, embedded: Tensor, lengths) -> tuple[list, list]:
        """embedded: [B,L,E], right-padded; lengths: per-row true lengths.

        Returns (per-step [B,2H] outputs of the top layer,
        finals as [((h_f,c_f),(h_b,c_b)) per layer]).
        """
        bsz, seq_len, _ = embedded.shape
        if seq_len == 0:
            raise InputError("BiLSTM on an empty sequence")
        lengths = np.asarray(lengths)
        masks = [Tensor(np.repeat((lengths > t).astype(np.float64)[:, None],
                                  self.hidden, axis=1))
                 for t in range(seq_len)]
        xs = [T.reshape(T.narrow(embedded, 1, t, 1), (bsz, -1)) for t in range(seq_len)]
        finals = []
        for fwd, bwd in self.dirs:
            fo, fh, fc = fwd.run(xs, masks, reverse=False)
            bo, bh, bc = bwd.run(xs, masks, reverse=True)
            finals.append(((fh, fc), (bh, bc)))
            xs = [T.concat([f, b], axis=1) for f, b in zip(fo, bo)]
        return xs, finals


def bilstm_forward(sequence, params: BiLSTM):
    """Single-sequence surface: list of [E] tensors -> ([L,2H] states, finals).

    finals is a list over layers of ((h_fwd, c_fwd), (h_bwd, c_bwd)),
    each a 1-D [H] tensor.
    """
    if len(sequence) == 0:
        raise InputError("bilstm_forward needs a nonempty sequence")
    rows = [T.reshape(x, (1, -1)) for x in sequence]
    stacked = T.concat([T.reshape(r, (1, 1, -1)) for r in rows], axis=1)
    outs, finals = params.forward_batch(stacked, [len(sequence)])
    states = T.concat(outs, axis=0)
    flat_finals = [tuple(tuple(T.reshape(s, (-1,)) for s in pair) for pair in layer)
                   for layer in finals]
    return states, flat_finals


class MLP(Module):
    """Stack of linear layers; hidden layers get batch norm + ReLU, the
    output layer stays linear so heads can expose their bias exactly."""

    def __init__(self, name: str, dims: list[int], rng: SplitMix64,
                 batch_norm: bool = True):
        super().__init__()
        self.blocks = []
        for idx in range(len(dims) - 1):
            lin = self.add_child(Linear(f"{name}.fc{idx + 1}", dims[idx], dims[idx + 1], rng))
            last = idx == len(dims) - 2
            bn = None
            if batch_norm and not last:
                bn = self.add_child(BatchNorm(f"{name}.bn{idx + 1}", dims[idx + 1]))
            self.blocks.append((lin, bn, last))

    def __call__(self, x: Tensor) -> Tensor:
        for lin, bn, last in self.blocks:
            x = lin(x)
            if not last:
                if bn is not None:
                    x = bn(x)
                x = T.relu(x)
        return x


def set_training(module: Module, training: bool, freeze_stats: bool = False):
    """Flip mode flags on every BatchNorm beneath `module`."""
    if isinstance(module, BatchNorm):
        module.training = training
        module.freeze_stats = freeze_stats
    for ch in module._children:
        set_training(ch, training, freeze_stats)


def check_unique_names(params: list[Parameter]):
    seen = set()
    for p in params:
        if p.name in seen:
            raise UsageError(f"duplicate parameter name '{p.name}'")
        seen.add(p.name)
