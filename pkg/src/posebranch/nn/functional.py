"""Stateless forward/backward kernels for the layer types used by every model.

All arrays are NCHW (images) or NC (vectors) in float64. Backward functions
take the upstream gradient plus whatever the forward pass cached and return
gradients with the same shapes as the forward inputs.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _check_4d(x: np.ndarray, what: str) -> None:
    if x.ndim != 4:
        raise ValueError(f"{what}: expected a 4-d NCHW array, got shape {x.shape}")


def conv_output_size(size: int, kernel: int, stride: int, pad: int) -> int:
    out = (size + 2 * pad - kernel) // stride + 1
    if out < 1:
        raise ValueError(
            f"kernel {kernel} with stride {stride} and pad {pad} does not fit input extent {size}"
        )
    return out


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # (N, C, Ho, Wo, kh, kw) view, no copy
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d_forward(x, weight, bias, stride=1, pad=0, groups=1):
    """Grouped 2-d cross-correlation.

    ``weight`` has shape (out_channels, in_channels // groups, kH, kW).
    Returns ``(out, cache)``; the cache feeds :func:`conv2d_backward`.
    """
    _check_4d(x, "conv2d input")
    n, c, h, w = x.shape
    oc, cg, kh, kw = weight.shape
    if c % groups:
        raise ValueError(f"conv2d: input channels {c} not divisible by groups {groups}")
    if oc % groups:
        raise ValueError(f"conv2d: output channels {oc} not divisible by groups {groups}")
    if cg != c // groups:
        raise ValueError(
            f"conv2d: weight in_channels/groups is {cg}, input supplies {c // groups} per group"
        )
    if bias is not None and bias.shape != (oc,):
        raise ValueError(f"conv2d: bias shape {bias.shape} does not match out_channels {oc}")
    ho = conv_output_size(h, kh, stride, pad)
    wo = conv_output_size(w, kw, stride, pad)

    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = _windows(xp, kh, kw, stride)[:, :, :ho, :wo]
    og = oc // groups
    # cols: (G, N*Ho*Wo, Cg*kh*kw)
    cols = win.reshape(n, groups, cg, ho, wo, kh, kw).transpose(1, 0, 3, 4, 2, 5, 6)
    cols = np.ascontiguousarray(cols).reshape(groups, n * ho * wo, cg * kh * kw)
    wmat = weight.reshape(groups, og, cg * kh * kw)
    out = np.matmul(cols, wmat.transpose(0, 2, 1))  # (G, NHoWo, Og)
    out = out.reshape(groups, n, ho, wo, og).transpose(1, 0, 4, 2, 3).reshape(n, oc, ho, wo)
    if bias is not None:
        out = out + bias[None, :, None, None]
    cache = (x.shape, cols, weight, stride, pad, groups)
    return np.ascontiguousarray(out), cache


def conv2d_backward(dout, cache):
    """Return ``(dx, dweight, dbias)`` for a cached :func:`conv2d_forward` call."""
    x_shape, cols, weight, stride, pad, groups = cache
    n, c, h, w = x_shape
    oc, cg, kh, kw = weight.shape
    og = oc // groups
    ho =conv_output_size(h, kh, stride, pad)
    wo = conv_output_size(w, kw, stride, pad)
    if dout.shape != (n, oc, ho, wo):
        raise ValueError(f"conv2d backward: upstream shape {dout.shape} != {(n, oc, ho, wo)}")

    dbias = dout.sum(axis=(0, 2, 3))
    # (G, NHoWo, Og)
    dmat = dout.reshape(n, groups, og, ho, wo).transpose(1, 0, 3, 4, 2).reshape(groups, n * ho * wo, og)
    dw = np.matmul(dmat.transpose(0, 2, 1), cols).reshape(oc, cg, kh, kw)

    wmat = weight.reshape(groups, og, cg * kh * kw)
    dcols = np.matmul(dmat, wmat)  # (G, NHoWo, Cg*kh*kw)
    dcols = dcols.reshape(groups, n, ho, wo, cg, kh, kw).transpose(1, 0, 4, 5, 6, 2, 3)
    dcols = dcols.reshape(n, c, kh, kw, ho, wo)

    hp, wp = h + 2 * pad, w + 2 * pad
    dxp = np.zeros((n, c, hp, wp))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, :, i, j]
    dx = dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp
    return np.ascontiguousarray(dx), dw, dbias


def maxpool_forward(x, kernel, stride):
    _check_4d(x, "maxpool input")
    n, c, h, w = x.shape
    ho = conv_output_size(h, kernel, stride, 0)
    wo = conv_output_size(w, kernel, stride, 0)
    win = _windows(x, kernel, kernel, stride)[:, :, :ho, :wo]
    flat = win.reshape(n, c, ho, wo, kernel * kernel)
    # argmax returns the first maximal element in row-major window order
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, idx, kernel, stride)


def maxpool_backward(dout, cache):
    x_shape, idx, k, stride = cache
    n, c, h, w = x_shape
    ho, wo = idx.shape[2], idx.shape[3]
    if dout.shape != idx.shape:
        raise ValueError(f"maxpool backward: upstream shape {dout.shape} != {idx.shape}")
    dx = np.zeros(x_shape)
    di, dj = np.divmod(idx, k)
    rows = np.arange(ho)[None, None, :, None] * stride + di
    cols = np.arange(wo)[None, None, None, :] * stride + dj
    nn_ = np.arange(n)[:, None, None, None]
    cc = np.arange(c)[None, :, None, None]
    np.add.at(dx, (nn_, cc, rows, cols), dout)
    return dx


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    if dout.shape != mask.shape:
        raise ValueError(f"relu backward: upstream shape {dout.shape} != {mask.shape}")
    return dout * mask


def fc_forward(x, weight, bias):
    """Fully connected layer; ``weight`` is (out_dim, in_dim). Input is flattened per sample."""
    x2 = x.reshape(x.shape[0], -1)
    if x2.shape[1] != weight.shape[1]:
        raise ValueError(
            f"fully connected: input dimension {x2.shape[1]} != weight in_dim {weight.shape[1]}"
        )
    out = x2 @ weight.T
    if bias is not None:
        out = out + bias
    return out, (x.shape, x2, weight)


def fc_backward(dout, cache):
    x_shape, x2, weight = cache
    if dout.shape != (x2.shape[0], weight.shape[0]):
        raise ValueError(f"fully connected backward: upstream shape {dout.shape} mismatched")
    dw = dout.T @ x2
    db = dout.sum(axis=0)
    dx = (dout @ weight).reshape(x_shape)
    return dx, dw, db


def dropout_forward(x, rate, train, rng=None):
    """Inverted dropout: scales kept units by 1/keep at train time, identity at eval."""
    if not train or rate == 0.0:
        return x, None
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep) / keep
    return x * mask, mask


def dropout_backward(dout, mask):
    if mask is None:
        return dout
    return dout * mask


def lrn_forward(x, size=5, alpha=1e-4, beta=0.75, k=1.0):
    """Cross-channel local response normalization (AlexNet form)."""
    _check_4d(x, "lrn input")
    c = x.shape[1]
    sq = x * x
    half = size // 2
    padded = np.pad(sq, ((0, 0), (half, size - 1 - half), (0, 0), (0, 0)))
    csum = np.cumsum(padded, axis=1)
    csum = np.concatenate([np.zeros_like(csum[:, :1]), csum], axis=1)
    window = csum[:, size:size + c] - csum[:, :c]
    scale = k + (alpha / size) * window
    out = x * scale ** (-beta)
    return out, (x, scale, size, alpha, beta)


def lrn_backward(dout, cache):
    x, scale, size, alpha, beta = cache
    if dout.shape != x.shape:
        raise ValueError(f"lrn backward: upstream shape {dout.shape} != {x.shape}")
    c = x.shape[1]
    half = size // 2
    # d out_i / d x_j = delta_ij s_i^-b - 2 b (alpha/size) x_i x_j s_i^(-b-1) for j in window(i)
    t = dout * x * scale ** (-beta - 1.0)
    # the window of i contains j iff the window of j (reflected) contains i
    padded = np.pad(t, ((0, 0), (size - 1 - half, half), (0, 0), (0, 0)))
    csum = np.cumsum(padded, axis=1)
    csum = np.concatenate([np.zeros_like(csum[:, :1]), csum], axis=1)
    gathered = csum[:, size:size + c] - csum[:, :c]
    return dout * scale ** (-beta) - 2.0 * beta * (alpha / size) * x * gathered
