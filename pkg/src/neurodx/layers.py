"""Feed-forward layers with explicit forward/backward pairs.

Every forward returns (output, cache); the matching backward consumes the
cache plus the upstream gradient and returns exact gradients. Convolution
is cross-correlation (no kernel flip) implemented via im2col; "same"
padding pads floor((k-1)/2) before and ceil((k-1)/2) after.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass
class Conv2DParams:
    weights: np.ndarray  # (out_channels, in_channels, kh, kw)
    bias: np.ndarray     # (out_channels,)
    stride: tuple = (1, 1)
    padding: str = "same"  # "same" | "valid"


@dataclass
class Pool2DParams:
    window: tuple = (2, 2)
    stride: tuple = (2, 2)


@dataclass
class DenseParams:
    weights: np.ndarray  # (in_features, out_features)
    bias: np.ndarray     # (out_features,)


def _pad_amounts(k):
    return (k - 1) // 2, k - 1 - (k - 1) // 2


def _im2col(xp, kh, kw, sh, sw, oh, ow):
    # xp: padded input (n, c, H, W) -> (n, c*kh*kw, oh*ow), row-major taps
    n, c = xp.shape[:2]
    cols = np.empty((n, c, kh, kw, oh, ow), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + sh * oh:sh, j:j + sw * ow:sw]
    return cols.reshape(n, c * kh * kw, oh * ow)


def _col2im(cols, xp_shape, kh, kw, sh, sw, oh, ow):
    n, c, H, W = xp_shape
    gxp = np.zeros(xp_shape, dtype=cols.dtype)
    cols6 = cols.reshape(n, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            gxp[:, :, i:i + sh * oh:sh, j:j + sw * ow:sw] += cols6[:, :, i, j]
    return gxp


def conv2d_forward(x, p: Conv2DParams):
    x = np.asarray(x)
    if x.ndim != 4:
        raise DimensionError(f"conv2d: expected 4-D input, got shape {x.shape}")
    n, c_in, h, w = x.shape
    c_out, c_in_w, kh, kw = p.weights.shape
    if c_in != c_in_w:
        raise DimensionError(
            f"conv2d: input has {c_in} channels but weights expect {c_in_w}")
    sh, sw = p.stride
    if p.padding == "same":
        pt, pb = _pad_amounts(kh)
        pl, pr = _pad_amounts(kw)
        xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    elif p.padding == "valid":
        xp = x
    else:
        raise DimensionError(f"conv2d: unknown padding {p.padding!r}")
    H, W = xp.shape[2], xp.shape[3]
    if H < kh or W < kw:
        raise DimensionError(f"conv2d: input {x.shape[2:]} smaller than kernel ({kh},{kw})")
    oh = (H - kh) // sh + 1
    ow = (W - kw) // sw + 1
    cols = _im2col(xp, kh, kw, sh, sw, oh, ow)
    w2 = p.weights.reshape(c_out, -1)
    out = np.matmul(w2, cols) + p.bias[:, None]
    out = out.reshape(n, c_out, oh, ow)
    cache = (cols, xp.shape, p, (oh, ow))
    return out, cache


def conv2d_backward(cache, upstream):
    cols, xp_shape, p, (oh, ow) = cache
    upstream = np.asarray(upstream)
    n = xp_shape[0]
    c_out = p.weights.shape[0]
    if upstream.shape != (n, c_out, oh, ow):
        raise DimensionError(
            f"conv2d backward: upstream shape {upstream.shape} != {(n, c_out, oh, ow)}")
    g = upstream.reshape(n, c_out, oh * ow)
    grad_b = g.sum(axis=(0, 2))
    grad_w = np.einsum("ncl,nkl->ck", g, cols).reshape(p.weights.shape)
    w2 = p.weights.reshape(c_out, -1)
    gcols = np.matmul(w2.T, g)
    kh, kw = p.weights.shape[2], p.weights.shape[3]
    sh, sw = p.stride
    gxp = _col2im(gcols, xp_shape, kh, kw, sh, sw, oh, ow)
    if p.padding == "same":
        pt, _ = _pad_amounts(kh)
        pl, _ = _pad_amounts(kw)
        h = xp_shape[2] - (kh - 1)
        w = xp_shape[3] - (kw - 1)
        grad_x = gxp[:, :, pt:pt + h, pl:pl + w]
    else:
        grad_x = gxp
    return grad_x, grad_w, grad_b


def maxpool_forward(x, p: Pool2DParams):
    x = np.asarray(x)
    n, c, h, w = x.shape
    wh, ww = p.window
    sh, sw = p.stride
    if h < wh or w < ww:
        raise DimensionError(f"maxpool: input {h}x{w} smaller than window {wh}x{ww}")
    oh = (h - wh) // sh + 1
    ow = (w - ww) // sw + 1
    # taps stacked in row-major window order so argmax breaks ties toward
    # the first element of the window
    windows = np.stack(
        [x[:, :, i:i + sh * oh:sh, j:j + sw * ow:sw]
         for i in range(wh) for j in range(ww)],
        axis=-1)
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    cache = (x.shape, p, idx, (oh, ow))
    return out, cache


def maxpool_backward(cache, upstream):
    x_shape, p, idx, (oh, ow) = cache
    upstream = np.asarray(upstream)
    n, c = x_shape[:2]
    if upstream.shape != (n, c, oh, ow):
        raise DimensionError(
            f"maxpool backward: upstream shape {upstream.shape} != {(n, c, oh, ow)}")
    wh, ww = p.window
    sh, sw = p.stride
    ni, ci, oi, oj = np.indices(idx.shape)
    rows = oi * sh + idx // ww
    cols = oj * sw + idx % ww
    grad = np.zeros(x_shape, dtype=upstream.dtype)
    np.add.at(grad, (ni, ci, rows, cols), upstream)
    return grad


def relu(x):
    x = np.asarray(x)
    return np.maximum(x, 0), x


def relu_backward(cache, upstream):
    # gradient at exactly 0 is 0
    return np.where(cache > 0, upstream, 0)


def flatten(x):
    x = np.asarray(x)
    n = x.shape[0]
    return x.reshape(n, -1), x.shape


def flatten_backward(cache, upstream):
    return np.asarray(upstream).reshape(cache)


def dense_forward(x, p: DenseParams):
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != p.weights.shape[0]:
        raise DimensionError(
            f"dense: input shape {x.shape} does not match weights {p.weights.shape}")
    out = x @ p.weights + p.bias
    return out, (x, p)


def dense_backward(cache, upstream):
    x, p = cache
    upstream = np.asarray(upstream)
    if upstream.shape != (x.shape[0], p.weights.shape[1]):
        raise DimensionError(
            f"dense backward: upstream shape {upstream.shape} != "
            f"{(x.shape[0], p.weights.shape[1])}")
    grad_x = upstream @ p.weights.T
    grad_w = x.T @ upstream
    grad_b = upstream.sum(axis=0)
    return grad_x, grad_w, grad_b


def softmax(logits):
    """Row-wise softmax, stabilized by max subtraction."""
    logits = np.asarray(logits)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(probs, upstream):
    """Jacobian-vector product of row-wise softmax."""
    dot = (upstream * probs).sum(axis=-1, keepdims=True)
    return probs * (upstream - dot)
