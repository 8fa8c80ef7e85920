"""LSTM recurrence, forward and backward-through-time.

Gate layout in the stacked parameter matrices is [input, forget, candidate,
output] along the first axis: W maps the step input (4H x D), U the
previous hidden state (4H x H), b is the gate bias (4H,). The reverse flag
runs the sequence back-to-front and returns outputs re-aligned to the
original time order.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_forward(inputs, W, U, b, reverse=False, want_cache=False):
    """Run the recurrence over (B, T, D) (or a single (T, D)) inputs.

    Returns the hidden sequence (B, T, H) aligned to input order, plus a
    backward cache when requested.
    """
    x = np.asarray(inputs)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3:
        raise ShapeError(f"lstm inputs must be (T,D) or (B,T,D), got {x.shape}")
    B, T, D = x.shape
    H4, Din = W.shape
    H = H4 // 4
    if Din != D or U.shape != (H4, H) or b.shape != (H4,):
        raise ShapeError(
            f"lstm parameter shapes {W.shape}/{U.shape}/{b.shape} do not fit input dim {D}"
        )
    xs = x[:, ::-1] if reverse else x

    h = np.zeros((B, H), dtype=x.dtype)
    c = np.zeros((B, H), dtype=x.dtype)
    hs = np.empty((B, T, H), dtype=x.dtype)
    steps = [] if want_cache else None
    for t in range(T):
        xt = xs[:, t]
        z = xt @ W.T + h @ U.T + b
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = _sigmoid(z[:, 3 * H :])
        c_prev = c
        c = f * c_prev + i * g
        tanh_c = np.tanh(c)
        h_prev_cache = h
        h = o * tanh_c
        hs[:, t] = h
        if want_cache:
            steps.append((xt, h_prev_cache, c_prev, i, f, g, o, tanh_c))
    out = hs[:, ::-1] if reverse else hs
    if squeeze:
        out = out[0]
    if want_cache:
        return out, (steps, (W, U), reverse, x.shape)
    return out


def lstm_backward(dh_out, cache):
    """Backprop through time.

    dh_out is the gradient of the output sequence in original time order;
    returns (dx, dW, dU, db) with dx aligned to the original order too.
    """
    steps, (W, U), reverse, x_shape = cache
    B, T, D = x_shape
    H = W.shape[0] // 4
    d = np.asarray(dh_out)
    squeeze = d.ndim == 2
    if squeeze:
        d = d[None]
    ds = d[:, ::-1] if reverse else d

    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * H, dtype=W.dtype)
    dxs = np.zeros((B, T, D), dtype=W.dtype)
    dh_next = np.zeros((B, H), dtype=W.dtype)
    dc_next = np.zeros((B, H), dtype=W.dtype)
    for t in range(T - 1, -1, -1):
        xt, h_prev, c_prev, i, f, g, o, tanh_c = steps[t]
        dh = ds[:, t] + dh_next
        do = dh * tanh_c
        dc = dh * o * (1.0 - tanh_c**2) + dc_next
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g**2),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        dW += dz.T @ xt
        dU += dz.T @ h_prev
        db += dz.sum(axis=0)
        dxs[:, t] = dz @ W
        dh_next = dz @ U
    dx = dxs[:, ::-1] if reverse else dxs
    if squeeze:
        dx = dx[0]
    return dx, dW, dU, db
