"""LSTM kernel dispatch: compiled extension when available, numpy otherwise.

The two backends share one contract (see _lstm_numpy for shapes); tests
assert their outputs agree to near machine precision.  `backend=` lets
benchmarks and tests pin one explicitly.
"""

from __future__ import annotations

import numpy as np

from . import _lstm_numpy

try:
    from . import _lstm_cy

    _DEFAULT = _lstm_cy
    BACKEND = "cython"
except ImportError:  # extension not built; pure-python install still works
    _lstm_cy = None
    _DEFAULT = _lstm_numpy
    BACKEND = "numpy"


def available_backends():
    out = ["numpy"]
    if _lstm_cy is not None:
        out.append("cython")
    return out


def _module(backend):
    if backend is None:
        return _DEFAULT
    if backend == "numpy":
        return _lstm_numpy
    if backend == "cython":
        if _lstm_cy is None:
            raise RuntimeError("compiled kernel requested but the extension is not built")
        return _lstm_cy
    raise ValueError(f"unknown kernel backend {backend!r}")


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def lstm_forward(x, w_ih, w_hh, b, backend=None):
    mod = _module(backend)
    return mod.lstm_forward(_c(x), _c(w_ih), _c(w_hh), _c(b))


def lstm_backward(x, w_ih, w_hh, b, cache, dh_last, backend=None):
    mod = _module(backend)
    return mod.lstm_backward(_c(x), _c(w_ih), _c(w_hh), _c(b), cache, _c(dh_last))
