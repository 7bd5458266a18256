"""Pure-numpy LSTM forward and backward-through-time kernels.

Reference implementation of the kernel contract shared with the compiled
extension: single-layer LSTM, gate order (input, forget, cell, output),
one shared bias vector, loss gradient arriving only through the final
hidden state.

Shapes:
    x      (B, T, D)   input sequences
    w_ih   (4H, D)     input-to-hidden weights, gate blocks stacked [i f g o]
    w_hh   (4H, H)     hidden-to-hidden weights
    b      (4H,)       bias
    cache  (G, C, Hs)  post-activation gates (B, T, 4H), cell states (B, T, H),
                       hidden states (B, T, H)
"""

from __future__ import annotations

import numpy as np


def _sigmoid(z):
    # clip keeps exp in range; exact to f64 precision for |z| < 60
    return 1.0 / (1.0 + np.exp(-np.clip(z, -60.0, 60.0)))


def lstm_forward(x, w_ih, w_hh, b):
    """Run the recurrence; return (final hidden state (B, H), cache)."""
    B, T, D = x.shape
    H = b.shape[0] // 4
    G = np.empty((B, T, 4 * H))
    C = np.empty((B, T, H))
    Hs = np.empty((B, T, H))

    xw = x @ w_ih.T + b  # (B, T, 4H): input contribution for every step at once
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        z = xw[:, t, :] + h @ w_hh.T
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = _sigmoid(z[:, 3 * H :])
        c = f * c + i * g
        h = o * np.tanh(c)
        G[:, t, :H] = i
        G[:, t, H : 2 * H] = f
        G[:, t, 2 * H : 3 * H] = g
        G[:, t, 3 * H :] = o
        C[:, t, :] = c
        Hs[:, t, :] = h
    return h, (G, C, Hs)


def lstm_backward(x, w_ih, w_hh, b, cache, dh_last):
    """Backprop through time given d(loss)/d(final hidden state).

    Returns (dw_ih, dw_hh, db) with the same shapes as the weights.
    """
    G, C, Hs = cache
    B, T, D = x.shape
    H = b.shape[0] // 4

    dz_all = np.empty((B, T, 4 * H))
    dh = np.array(dh_last, dtype=float, copy=True)
    dc = np.zeros((B, H))
    zeros = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i = G[:, t, :H]
        f = G[:, t, H : 2 * H]
        g = G[:, t, 2 * H : 3 * H]
        o = G[:, t, 3 * H :]
        c_prev = C[:, t - 1, :] if t > 0 else zeros

        tc = np.tanh(C[:, t, :])
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev

        dz = dz_all[:, t, :]
        dz[:, :H] = di * i * (1.0 - i)
        dz[:, H : 2 * H] = df * f * (1.0 - f)
        dz[:, 2 * H : 3 * H] = dg * (1.0 - g * g)
        dz[:, 3 * H :] = do * o * (1.0 - o)

        dc = dc * f
        dh = dz @ w_hh

    dw_ih = np.einsum("btk,btd->kd", dz_all, x)
    h_prev = np.concatenate([np.zeros((B, 1, H)), Hs[:, :-1, :]], axis=1)
    dw_hh = np.einsum("btk,bth->kh", dz_all, h_prev)
    db = dz_all.sum(axis=(0, 1))
    return dw_ih, dw_hh, db
