# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled LSTM forward/backward kernels.

Drop-in replacement for the pure-numpy module: same signatures, same cache
layout, same gate order (input, forget, cell, output).  Plain C loops over
(batch, time, hidden); no BLAS, no threading — the sequences are short and
narrow enough that loop overhead, not FLOPs, dominates the numpy version.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()


cdef inline double _sig(double z) nogil:
    if z > 60.0:
        z = 60.0
    elif z < -60.0:
        z = -60.0
    return 1.0 / (1.0 + exp(-z))


def lstm_forward(double[:, :, ::1] x, double[:, ::1] w_ih, double[:, ::1] w_hh,
                 double[::1] b):
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], D = x.shape[2]
    cdef Py_ssize_t H = b.shape[0] // 4
    cdef Py_ssize_t bi, t, k, j, d

    G_arr = np.empty((B, T, 4 * H))
    C_arr = np.empty((B, T, H))
    H_arr = np.empty((B, T, H))
    h_last = np.empty((B, H))
    z_buf = np.empty(4 * H)
    cdef double[:, :, ::1] G = G_arr
    cdef double[:, :, ::1] C = C_arr
    cdef double[:, :, ::1] Hs = H_arr
    cdef double[:, ::1] hL = h_last
    cdef double[::1] z = z_buf
    cdef double acc, ig, fg, gg, og, cv, hp, cp

    with nogil:
        for bi in range(B):
            for t in range(T):
                for k in range(4 * H):
                    acc = b[k]
                    for d in range(D):
                        acc += w_ih[k, d] * x[bi, t, d]
                    if t > 0:
                        for j in range(H):
                            acc += w_hh[k, j] * Hs[bi, t - 1, j]
                    z[k] = acc
                for k in range(H):
                    ig = _sig(z[k])
                    fg = _sig(z[H + k])
                    gg = tanh(z[2 * H + k])
                    og = _sig(z[3 * H + k])
                    cp = C[bi, t - 1, k] if t > 0 else 0.0
                    cv = fg * cp + ig * gg
                    G[bi, t, k] = ig
                    G[bi, t, H + k] = fg
                    G[bi, t, 2 * H + k] = gg
                    G[bi, t, 3 * H + k] = og
                    C[bi, t, k] = cv
                    Hs[bi, t, k] = og * tanh(cv)
            for k in range(H):
                hL[bi, k] = Hs[bi, T - 1, k]
    return h_last, (G_arr, C_arr, H_arr)


def lstm_backward(double[:, :, ::1] x, double[:, ::1] w_ih, double[:, ::1] w_hh,
                  double[::1] b, cache, double[:, ::1] dh_last):
    G_arr, C_arr, H_arr = cache
    cdef double[:, :, ::1] G = G_arr
    cdef double[:, :, ::1] C = C_arr
    cdef double[:, :, ::1] Hs = H_arr
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], D = x.shape[2]
    cdef Py_ssize_t H = b.shape[0] // 4
    cdef Py_ssize_t bi, t, k, j, d

    dwih_arr = np.zeros((4 * H, D))
    dwhh_arr = np.zeros((4 * H, H))
    db_arr = np.zeros(4 * H)
    dh_buf = np.empty(H)
    dc_buf = np.empty(H)
    dz_buf = np.empty(4 * H)
    cdef double[:, ::1] dwih = dwih_arr
    cdef double[:, ::1] dwhh = dwhh_arr
    cdef double[::1] db = db_arr
    cdef double[::1] dh = dh_buf
    cdef double[::1] dc = dc_buf
    cdef double[::1] dz = dz_buf
    cdef double ig, fg, gg, og, tc, cp, ddc, v

    with nogil:
        for bi in range(B):
            for k in range(H):
                dh[k] = dh_last[bi, k]
                dc[k] = 0.0
            for t in range(T - 1, -1, -1):
                for k in range(H):
                    ig = G[bi, t, k]
                    fg = G[bi, t, H + k]
                    gg = G[bi, t, 2 * H + k]
                    og = G[bi, t, 3 * H + k]
                    tc = tanh(C[bi, t, k])
                    cp = C[bi, t - 1, k] if t > 0 else 0.0
                    ddc = dc[k] + dh[k] * og * (1.0 - tc * tc)
                    dz[k] = ddc * gg * ig * (1.0 - ig)
                    dz[H + k] = ddc * cp * fg * (1.0 - fg)
                    dz[2 * H + k] = ddc * ig * (1.0 - gg * gg)
                    dz[3 * H + k] = dh[k] * tc * og * (1.0 - og)
                    dc[k] = ddc * fg
                for k in range(4 * H):
                    v = dz[k]
                    db[k] += v
                    for d in range(D):
                        dwih[k, d] += v * x[bi, t, d]
                    if t > 0:
                        for j in range(H):
                            dwhh[k, j] += v * Hs[bi, t - 1, j]
                for j in range(H):
                    v = 0.0
                    for k in range(4 * H):
                        v += dz[k] * w_hh[k, j]
                    dh[j] = v
    return dwih_arr, dwhh_arr, db_arr
