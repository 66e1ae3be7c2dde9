"""1-D and 2-D cross-correlation plus global average pooling.

Forward uses strided window views contracted with tensordot; the input
gradient is computed as a full correlation of the stride-dilated output
gradient with the spatially flipped kernel.  Both accept an optional
leading batch axis.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import DimensionError, InputError
from .tensor import Tensor, _node, _accum


def _windows2d(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    b, c, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    sb, sc, sh, sw = xp.strides
    return as_strided(
        xp, (b, c, ho, wo, kh, kw),
        (sb, sc, sh * stride, sw * stride, sh, sw), writeable=False)


def _corr2d(xp: np.ndarray, k: np.ndarray, stride: int) -> np.ndarray:
    win = _windows2d(xp, k.shape[2], k.shape[3], stride)
    y = np.tensordot(win, k, axes=([1, 4, 5], [1, 2, 3]))  # (B,Ho,Wo,Cout)
    return np.ascontiguousarray(y.transpose(0, 3, 1, 2))


def conv2d(x: Tensor, k: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of x:[C,H,W] (or [B,C,H,W]) with k:[Cout,Cin,Kh,Kw]."""
    batched = x.ndim == 4
    if x.ndim not in (3, 4) or k.ndim != 4:
        raise DimensionError(f"conv2d expects x:[B,C,H,W] or [C,H,W] and k:[Cout,Cin,Kh,Kw]; "
                             f"got {x.shape} and {k.shape}")
    xd = x.data if batched else x.data[None]
    b, c, h, w = xd.shape
    cout, cin, kh, kw = k.shape
    if cin != c:
        raise DimensionError(f"conv2d: input has {c} channels, kernel expects {cin}")
    if kh > h + 2 * padding or kw > w + 2 * padding:
        raise DimensionError(f"conv2d: kernel {kh}x{kw} larger than padded input "
                             f"{h + 2 * padding}x{w + 2 * padding}")
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    y = _corr2d(xp, k.data, stride)
    ho, wo = y.shape[2], y.shape[3]

    def back():
        g = out.grad if batched else out.grad[None]
        win = _windows2d(xp, kh, kw, stride)
        dk = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))  # (Cout,Cin,Kh,Kw)
        _accum(k, dk)
        if x.requires_grad:
            # dilate by stride, then pad so a full correlation with the
            # flipped kernel reproduces the padded-input gradient
            rh = (h + 2 * padding - kh) % stride
            rw = (w + 2 * padding - kw) % stride
            gd = np.zeros((b, cout, (ho - 1) * stride + 1 + rh,
                           (wo - 1) * stride + 1 + rw))
            gd[:, :, ::stride, ::stride][:, :, :ho, :wo] = g
            gp = np.pad(gd, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
            kf = np.ascontiguousarray(k.data[:, :, ::-1, ::-1].swapaxes(0, 1))
            dxp = _corr2d(gp, kf, 1)
            dx = dxp[:, :, padding:padding + h, padding:padding + w]
            _accum(x, dx if batched else dx[0])

    out = _node(y if batched else y[0], (x, k), "conv2d", back)
    return out


def conv1d(x: Tensor, k: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of x:[C,L] (or [B,C,L]) with k:[Cout,Cin,K]."""
    batched = x.ndim == 3
    if x.ndim not in (2, 3) or k.ndim != 3:
        raise DimensionError(f"conv1d expects x:[B,C,L] or [C,L] and k:[Cout,Cin,K]; "
                             f"got {x.shape} and {k.shape}")
    # reuse the 2-D machinery with a unit height axis
    xd = x.data if batched else x.data[None]
    b, c, l = xd.shape
    cout, cin, kl = k.shape
    if cin != c:
        raise DimensionError(f"conv1d: input has {c} channels, kernel expects {cin}")
    if kl > l + 2 * padding:
        raise DimensionError(f"conv1d: kernel length {kl} larger than padded input "
                             f"{l + 2 * padding}")
    xp = np.pad(xd[:, :, None, :], ((0, 0), (0, 0), (0, 0), (padding, padding))) if padding \
        else xd[:, :, None, :]
    y = _corr2d(xp, k.data[:, :, None, :], stride)[:, :, 0, :]

    def back():
        g = (out.grad if batched else out.grad[None])[:, :, None, :]
        win = _windows2d(xp, 1, kl, stride)
        dk = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))[:, :, 0, :]
        _accum(k, dk)
        if x.requires_grad:
            lo = y.shape[-1]
            r = (l + 2 * padding - kl) % stride
            gd = np.zeros((b, cout, 1, (lo - 1) * stride + 1 + r))
            gd[:, :, :, ::stride][:, :, :, :lo] = g
            gp = np.pad(gd, ((0, 0), (0, 0), (0, 0), (kl - 1, kl - 1)))
            kf = np.ascontiguousarray(k.data[:, :, None, ::-1].swapaxes(0, 1))
            dxp = _corr2d(gp, kf, 1)[:, :, 0, :]
            dx = dxp[:, :, padding:padding + l]
            _accum(x, dx if batched else dx[0])

    out = _node(y if batched else y[0], (x, k), "conv1d", back)
    return out


def global_avg_pool(x: Tensor) -> Tensor:
    """Per-channel spatial mean: [C,H,W] -> [C] or [B,C,H,W] -> [B,C]."""
    if x.ndim == 3:
        axes, count = (1, 2), x.shape[1] * x.shape[2]
    elif x.ndim == 4:
        axes, count = (2, 3), x.shape[2] * x.shape[3]
    else:
        raise DimensionError(f"global_avg_pool expects [C,H,W] or [B,C,H,W], got {x.shape}")
    if x.data.size == 0:
        raise InputError("global_avg_pool on an empty tensor")
    out_data = x.data.mean(axis=axes)

    def back():
        g = np.expand_dims(np.expand_dims(out.grad, -1), -1)
        _accum(x, np.broadcast_to(g, x.shape) / count)

    out = _node(out_data, (x,), "global_avg_pool", back)
    return out
