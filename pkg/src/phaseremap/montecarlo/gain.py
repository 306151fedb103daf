"""Closed-form gains and QBERs for single-photon and weak-coherent sources."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..attack import ERROR_WEIGHTS
from ..core import DomainError, EveBasis
from .models import CountRecord, DetectorParams


def _weights(basis: EveBasis) -> np.ndarray:
    if basis is EveBasis.BASE0:
        raise DomainError("gain/QBER formulas need Base1 or Base2")
    return np.asarray(ERROR_WEIGHTS[basis])


def gain_qber_sp(p_states: Sequence[float], params: DetectorParams, basis: EveBasis):
    """Per-state gains ``eta P + Y0`` and the sifted QBER for a single-photon source."""
    p = np.asarray(p_states, dtype=float)
    w = _weights(basis)
    eta, y0 = params.eta_bob, params.dark_yield
    gain = eta * p + y0
    qber = (eta * np.dot(w, p) + w.sum() * y0) / (eta * p.sum() + 4 * y0)
    return gain, float(qber)


def gain_qber_wcp(p_states: Sequence[float], params: DetectorParams, mu: float, basis: EveBasis):
    """Per-state gains ``1 - exp(-mu eta P) + Y0`` and the sifted QBER for a weak coherent source."""
    if not mu > 0:
        raise DomainError(f"mu must be > 0, got {mu!r}")
    p = np.asarray(p_states, dtype=float)
    w = _weights(basis)
    y0 = params.dark_yield
    # -expm1 keeps precision when mu * eta * P is tiny
    signal = -np.expm1(-mu * params.eta_bob * p)
    gain = signal + y0
    qber = (np.dot(w, signal) + w.sum() * y0) / (signal.sum() + 4 * y0)
    return gain, float(qber)


def balanced_qbers(configs: Sequence[tuple[Sequence[float], EveBasis]], params: DetectorParams, mu: float):
    """Mean SP and WCP QBERs over equally weighted attack configurations."""
    if not configs:
        raise DomainError("need at least one configuration")
    sp = [gain_qber_sp(p, params, b)[1] for p, b in configs]
    wcp = [gain_qber_wcp(p, params, mu, b)[1] for p, b in configs]
    return float(np.mean(sp)), float(np.mean(wcp))


def delta_qber_sp_wcp(configs: Sequence[tuple[Sequence[float], EveBasis]], params: DetectorParams, mu: float) -> float:
    sp, wcp = balanced_qbers(configs, params, mu)
    return sp - wcp


def invert_wcp_gain(d1: float, n_gates: float, params: DetectorParams, mu: float) -> float:
    """Interference probability P whose WCP gain reproduces ``d1 / n_gates``, clamped to [0, 1]."""
    signal = (d1 - n_gates * params.dark_yield) / n_gates
    if signal <= 0:
        return 0.0
    if signal >= 1:
        return 1.0
    return min(1.0, -math.log1p(-signal) / (mu * params.eta_bob))


def p_states_from_records(records: Sequence[CountRecord], params: DetectorParams, mu: float) -> list[float]:
    return [invert_wcp_gain(r.d1, r.n_gates, params, mu) for r in records]
