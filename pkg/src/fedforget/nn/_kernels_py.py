"""Numpy fallback for the convolution/pooling kernels.

Same contract as the compiled extension: float32 or float64 tensors,
reductions accumulated in float64, results cast back to the input dtype.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    # (B, Cin, Ho, Wo, K, K) view -> (B*Ho*Wo, Cin*K*K) float64 copy
    b, cin, h, w = x.shape
    ho, wo = h - k + 1, w - k + 1
    win = sliding_window_view(x, (k, k), axis=(2, 3))
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, cin * k * k)
    return cols.astype(np.float64)


def conv2d_forward(x: np.ndarray, w: np.ndarray, bias: np.ndarray) -> np.ndarray:
    b, cin, h, wdt = x.shape
    cout, _, k, _ = w.shape
    ho, wo = h - k + 1, wdt - k + 1
    cols = _im2col(x, k)
    out = cols @ w.reshape(cout, -1).T.astype(np.float64)
    out += bias.astype(np.float64)
    return out.reshape(b, ho, wo, cout).transpose(0, 3, 1, 2).astype(x.dtype)


def conv2d_backward(
    x: np.ndarray, w: np.ndarray, dout: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    b, cin, h, wdt = x.shape
    cout, _, k, _ = w.shape
    ho, wo = h - k + 1, wdt - k + 1
    cols = _im2col(x, k)
    dout_mat = dout.transpose(0, 2, 3, 1).reshape(b * ho * wo, cout).astype(np.float64)

    db = dout_mat.sum(axis=0)
    dw = (dout_mat.T @ cols).reshape(w.shape)
    dcols = (dout_mat @ w.reshape(cout, -1).astype(np.float64)).reshape(b, ho, wo, cin, k, k)

    dx = np.zeros((b, cin, h, wdt), dtype=np.float64)
    for kh in range(k):
        for kw in range(k):
            dx[:, :, kh : kh + ho, kw : kw + wo] += dcols[:, :, :, :, kh, kw].transpose(0, 3, 1, 2)
    return dx.astype(x.dtype), dw.astype(x.dtype), db.astype(x.dtype)


def maxpool2_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    win = (
        x[:, :, : ho * 2, : wo * 2]
        .reshape(b, c, ho, 2, wo, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, ho, wo, 4)
    )
    arg = win.argmax(axis=-1).astype(np.uint8)
    out = np.take_along_axis(win, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg


def maxpool2_backward(x_shape: tuple[int, ...], arg: np.ndarray, dout: np.ndarray) -> np.ndarray:
    b, c, h, w = x_shape
    ho, wo = h // 2, w // 2
    dwin = np.zeros((b, c, ho, wo, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, arg[..., None].astype(np.intp), dout[..., None], axis=-1)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    dx[:, :, : ho * 2, : wo * 2] = (
        dwin.reshape(b, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho * 2, wo * 2)
    )
    return dx
