"""Per-gate detection kernels.

Two interchangeable implementations draw from the same ``numpy.random.Generator``:
a scalar loop compiled with numba, and a chunked vectorised numpy version.
They consume the stream differently, so the same seed gives statistically
equivalent but not identical counts across backends.

``PHASEREMAP_BACKEND=numpy`` forces the fallback; otherwise numba is used when
it imports.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


BACKENDS = ("numba", "numpy")
CHUNK = 1 << 20


def default_backend() -> str:
    env = os.environ.get("PHASEREMAP_BACKEND", "").strip().lower()
    if env == "numpy" or not HAVE_NUMBA:
        return "numpy"
    if env not in ("", "numba"):
        raise ValueError(f"PHASEREMAP_BACKEND must be one of {BACKENDS}, got {env!r}")
    return "numba"


@njit(cache=True, nogil=True)
def _sp_numba(gen, n, a, b, y0):
    # a: P(photon detected at Det1); b: P(photon detected anywhere)
    d1 = 0
    d2 = 0
    both = 0
    for _ in range(n):
        u = gen.random()
        c1 = u < a
        c2 = (u >= a) and (u < b)
        if gen.random() < y0:
            c1 = True
        if gen.random() < y0:
            c2 = True
        if c1:
            d1 += 1
        if c2:
            d2 += 1
        if c1 and c2:
            both += 1
    return d1, d2, both


@njit(cache=True, nogil=True)
def _wcp_numba(gen, n, mu, q1, q2c, y0):
    # q1: P(photon detected at Det1); q2c: P(Det2 detection | not detected at Det1)
    d1 = 0
    d2 = 0
    both = 0
    for _ in range(n):
        i = gen.poisson(mu)
        k1 = 0
        k2 = 0
        if i > 0:
            k1 = gen.binomial(i, q1)
            if i - k1 > 0:
                k2 = gen.binomial(i - k1, q2c)
        c1 = k1 > 0
        c2 = k2 > 0
        if gen.random() < y0:
            c1 = True
        if gen.random() < y0:
            c2 = True
        if c1:
            d1 += 1
        if c2:
            d2 += 1
        if c1 and c2:
            both += 1
    return d1, d2, both


def _sp_numpy(gen, n, a, b, y0):
    d1 = d2 = both = 0
    for start in range(0, n, CHUNK):
        m = min(CHUNK, n - start)
        u = gen.random(m)
        c1 = u < a
        c2 = (u >= a) & (u < b)
        dark = gen.random((2, m)) < y0
        c1 |= dark[0]
        c2 |= dark[1]
        d1 += int(np.count_nonzero(c1))
        d2 += int(np.count_nonzero(c2))
        both += int(np.count_nonzero(c1 & c2))
    return d1, d2, both


def _wcp_numpy(gen, n, mu, q1, q2c, y0):
    d1 = d2 = both = 0
    for start in range(0, n, CHUNK):
        m = min(CHUNK, n - start)
        i = gen.poisson(mu, m)
        k1 = gen.binomial(i, q1)
        k2 = gen.binomial(i - k1, q2c)
        dark = gen.random((2, m)) < y0
        c1 = (k1 > 0) | dark[0]
        c2 = (k2 > 0) | dark[1]
        d1 += int(np.count_nonzero(c1))
        d2 += int(np.count_nonzero(c2))
        both += int(np.count_nonzero(c1 & c2))
    return d1, d2, both


def count_single_photon(gen, n, p_det1, eta, y0, backend):
    a = eta * p_det1
    b = eta
    if backend == "numba":
        return tuple(int(x) for x in _sp_numba(gen, n, a, b, y0))
    return _sp_numpy(gen, n, a, b, y0)


def count_weak_coherent(gen, n, p_det1, eta, y0, mu, backend):
    q1 = eta * p_det1
    q2c = eta * (1.0 - p_det1) / (1.0 - q1) if q1 < 1.0 else 0.0
    q2c = min(max(q2c, 0.0), 1.0)
    if backend == "numba":
        return tuple(int(x) for x in _wcp_numba(gen, n, mu, q1, q2c, y0))
    return _wcp_numpy(gen, n, mu, q1, q2c, y0)
