"""Dense array primitives: 3D cross-correlation and bfloat16 rounding.

Tensors are plain ``float64`` numpy arrays in row-major order. The
functions here are stateless; layers in :mod:`cloudgan.tensor.layers`
compose them.
"""

from __future__ import annotations

import numpy as np

PRECISIONS = ("full", "bfloat16")

_BF16_MANTISSA_BITS = 7
_BF16_MIN_EXP = -126
_BF16_OVERFLOW = 2.0**128


def round_to_bfloat16(t) -> np.ndarray:
    """Round every value to the nearest bfloat16 value, ties to even.

    bfloat16 has the float32 exponent range with 7 explicit mantissa bits.
    The result is returned as float64 holding exactly representable values.
    Signed zeros and infinities pass through, NaN stays NaN, subnormals are
    rounded on the fixed 2**-133 grid and values past the largest finite
    bfloat16 round to infinity.
    """
    x = np.asarray(t, dtype=np.float64)
    out = x.copy()
    finite = np.isfinite(x) & (x != 0.0)
    if not finite.any():
        return out
    v = x[finite]
    _, exp = np.frexp(v)  # v = m * 2**exp, 0.5 <= |m| < 1
    exp = np.maximum(exp - 1, _BF16_MIN_EXP)
    quantum = np.ldexp(1.0, exp - _BF16_MANTISSA_BITS)
    r = np.rint(v / quantum) * quantum
    r = np.where(np.abs(r) >= _BF16_OVERFLOW, np.copysign(np.inf, v), r)
    out[finite] = r
    return out


def maybe_round(t: np.ndarray, precision: str) -> np.ndarray:
    if precision == "full":
        return t
    if precision == "bfloat16":
        return round_to_bfloat16(t)
    raise ValueError(f"unknown precision mode {precision!r}; expected one of {PRECISIONS}")


def same_padding(size: int, k: int, stride: int) -> tuple[int, int]:
    """(low, high) padding for 'same'; the odd extra cell goes on the high side."""
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


def conv3d_output_shape(in_spatial, k_spatial, stride: int, padding: str):
    pads = _pads(in_spatial, k_spatial, stride, padding)
    out = []
    for n, k, (lo, hi) in zip(in_spatial, k_spatial, pads):
        padded = n + lo + hi
        if k > padded:
            raise ValueError(f"kernel extent {k} exceeds padded input extent {padded}")
        out.append((padded - k) // stride + 1)
    return tuple(out), pads


def _pads(in_spatial, k_spatial, stride, padding):
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if padding == "valid":
        return [(0, 0)] * 3
    if padding == "same":
        return [same_padding(n, k, stride) for n, k in zip(in_spatial, k_spatial)]
    raise ValueError(f"padding must be 'valid' or 'same', got {padding!r}")


def _window(start: int, count: int, stride: int) -> slice:
    return slice(start, start + stride * (count - 1) + 1, stride)


def conv3d_forward(x, k, stride: int = 1, padding: str = "valid", precision: str = "full"):
    """Cross-correlate ``x[N,C,D,H,W]`` with ``k[K,C,kd,kh,kw]`` -> ``[N,K,D',H',W']``."""
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if x.ndim != 5 or k.ndim != 5:
        raise ValueError(f"expected 5-d input and kernel, got {x.shape} and {k.shape}")
    if x.shape[1] != k.shape[1]:
        raise ValueError(f"channel mismatch: input has {x.shape[1]}, kernel expects {k.shape[1]}")
    (od, oh, ow), pads = conv3d_output_shape(x.shape[2:], k.shape[2:], stride, padding)
    xp = np.pad(x, [(0, 0), (0, 0), *pads])
    xp = maybe_round(xp, precision)
    k = maybe_round(k, precision)
    n = x.shape[0]
    kk, _, kd, kh, kw = k.shape
    out = np.zeros((kk, n, od, oh, ow))
    for a in range(kd):
        for b in range(kh):
            for c in range(kw):
                xs = xp[:, :, _window(a, od, stride), _window(b, oh, stride), _window(c, ow, stride)]
                out += np.tensordot(k[:, :, a, b, c], xs, axes=([1], [1]))
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3, 4))


def conv3d_backward(x, k, grad_out, stride: int = 1, padding: str = "valid", precision: str = "full"):
    """Gradients of the cross-correlation w.r.t. input and kernel.

    In bfloat16 mode the multiply inputs (padded input, kernel, upstream
    gradient) are rounded, mirroring the forward pass.
    """
    x = np.asarray(x, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    (od, oh, ow), pads = conv3d_output_shape(x.shape[2:], k.shape[2:], stride, padding)
    xp = maybe_round(np.pad(x, [(0, 0), (0, 0), *pads]), precision)
    kr = maybe_round(k, precision)
    g = maybe_round(np.asarray(grad_out, dtype=np.float64), precision)
    kk, _, kd, kh, kw = k.shape
    gxp = np.zeros_like(xp)
    gk = np.zeros_like(k)
    for a in range(kd):
        for b in range(kh):
            for c in range(kw):
                sl = (slice(None), slice(None), _window(a, od, stride), _window(b, oh, stride), _window(c, ow, stride))
                gk[:, :, a, b, c] = np.tensordot(g, xp[sl], axes=([0, 2, 3, 4], [0, 2, 3, 4]))
                # (N,D',H',W',C) -> (N,C,D',H',W')
                contrib = np.tensordot(g, kr[:, :, a, b, c], axes=([1], [0]))
                gxp[sl] += contrib.transpose(0, 4, 1, 2, 3)
    d, h, w = x.shape[2:]
    (d0, _), (h0, _), (w0, _) = pads
    gx = gxp[:, :, d0:d0 + d, h0:h0 + h, w0:w0 + w]
    return np.ascontiguousarray(gx), gk
