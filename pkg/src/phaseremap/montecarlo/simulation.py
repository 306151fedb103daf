"""Seeded per-gate simulation of Eve's and Bob's detector clicks."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from ..attack import AttackConfig, expected_click_probs
from ..core import Bb84State, DomainError, EveBasis, detection_probabilities
from ..modulator import ModulationProfile, TimingLayout, remap_phases
from . import _kernels
from .models import CountRecord, DetectorParams, SourceKind, SourceModel

CELLS_PER_TABLE = 12


def make_generator(seed: int, stream: int = 0) -> np.random.Generator:
    """PCG64 generator for substream ``stream`` of ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


def click_probabilities(p_det1: float, params: DetectorParams, source: SourceModel) -> tuple[float, float, float]:
    """Exact per-gate probabilities of (Det1 click, Det2 click, both)."""
    eta = params.eta_effective
    y0 = params.dark_yield
    if source.kind is SourceKind.SINGLE_PHOTON:
        s1, s2 = eta * p_det1, eta * (1.0 - p_det1)
        q1 = 1.0 - (1.0 - s1) * (1.0 - y0)
        q2 = 1.0 - (1.0 - s2) * (1.0 - y0)
        qb = s1 * y0 + s2 * y0 + (1.0 - eta) * y0 * y0
        return q1, q2, qb
    # Poisson thinning makes the two detectors independent.
    q1 = 1.0 - math.exp(-source.mu * eta * p_det1) * (1.0 - y0)
    q2 = 1.0 - math.exp(-source.mu * eta * (1.0 - p_det1)) * (1.0 - y0)
    return q1, q2, q1 * q2


def simulate_counts(
    p_det1: float,
    params: DetectorParams,
    source: SourceModel,
    n_gates: int,
    seed: int,
    stream: int = 0,
    state: Bb84State = Bb84State.ZERO1,
    eve_basis: EveBasis = EveBasis.BASE0,
    backend: str | None = None,
    table: str = "",
) -> CountRecord:
    """Tally clicks over ``n_gates`` gates where Det1's interference probability is ``p_det1``."""
    if not 0.0 <= p_det1 <= 1.0:
        raise DomainError(f"p_det1 must lie in [0, 1], got {p_det1!r}")
    if n_gates < 1:
        raise DomainError(f"n_gates must be >= 1, got {n_gates}")
    backend = backend or _kernels.default_backend()
    if backend not in _kernels.BACKENDS:
        raise DomainError(f"unknown backend {backend!r}")
    gen = make_generator(seed, stream)
    if source.kind is SourceKind.SINGLE_PHOTON:
        d1, d2, both = _kernels.count_single_photon(
            gen, int(n_gates), p_det1, params.eta_effective, params.dark_yield, backend
        )
    else:
        d1, d2, both = _kernels.count_weak_coherent(
            gen, int(n_gates), p_det1, params.eta_effective, params.dark_yield, source.mu, backend
        )
    return CountRecord(state, eve_basis, d1, d2, both, int(n_gates), seed, stream, table)


def cell_stream(state: Bb84State, basis: EveBasis, stream_base: int = 0) -> int:
    return stream_base + state.index * 3 + list(EveBasis).index(basis)


def expected_table(
    profile: ModulationProfile,
    timing: TimingLayout,
    attack: AttackConfig,
    params: DetectorParams,
    source: SourceModel,
) -> dict[tuple[Bb84State, EveBasis], float]:
    """Per-gate Det1 click probability for every cell of a 4 x 3 table."""
    rps = attack.remapped(profile, timing)
    out = {}
    for basis in EveBasis:
        p = expected_click_probs(rps, basis, params.visibility)
        for state in Bb84State.ordered():
            out[state, basis] = click_probabilities(float(p[state.index]), params, source)[0]
    return out


def run_experiment(
    profile: ModulationProfile,
    timing: TimingLayout,
    attack: AttackConfig,
    params: DetectorParams,
    source: SourceModel,
    n_gates: int,
    seed: int,
    stream_base: int = 0,
    table: str = "",
    backend: str | None = None,
    workers: int = 1,
) -> list[CountRecord]:
    """Simulate the full 4-state x 3-basis count table for one delay setting.

    Every cell draws from its own substream, so the result does not depend on
    ``workers``.
    """
    rps = attack.remapped(profile, timing)
    jobs = []
    for state in Bb84State.ordered():
        for basis in EveBasis:
            p = float(expected_click_probs(rps, basis, params.visibility)[state.index])
            jobs.append((p, state, basis, cell_stream(state, basis, stream_base)))

    def run(job):
        p, state, basis, stream = job
        return simulate_counts(p, params, source, n_gates, seed, stream, state, basis, backend, table)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, jobs))
    return [run(j) for j in jobs]


def run_honest(
    profile: ModulationProfile,
    timing: TimingLayout,
    params: DetectorParams,
    source: SourceModel,
    n_gates: int,
    seed: int,
    stream_base: int = 0,
    table: str = "",
    backend: str | None = None,
) -> list[CountRecord]:
    """Bob's own measurement of each state in the matching basis, without Eve.

    Only sifted events are simulated: Bob applies 0 for basis-1 states and pi/2
    for basis-2 states, so a Det1 click reads as bit 1.
    """
    rps = remap_phases(profile, timing.shifted(0.0))
    out = []
    for state in Bb84State.ordered():
        bob_phase = 0.0 if state.basis == 1 else math.pi / 2
        p, _ = detection_probabilities(rps[state], bob_phase, params.visibility)
        out.append(simulate_counts(p, params, source, n_gates, seed, stream_base + state.index,
                                   state, None, backend, table))
    return out


def records_by_basis(records: Sequence[CountRecord], basis: EveBasis) -> list[CountRecord]:
    """The four records measured in ``basis``, in state order."""
    chosen = {r.state: r for r in records if r.eve_basis is basis}
    missing = [s.value for s in Bb84State.ordered() if s not in chosen]
    if missing:
        raise DomainError(f"no {basis.value} record for states {missing}")
    return [chosen[s] for s in Bb84State.ordered()]


def calibrate_transmittance(records: Sequence[CountRecord], params: DetectorParams, source: SourceModel) -> float:
    """Extra channel transmittance that reproduces the mean observed D1 + D2 per gate.

    Each cell's interference probability is taken from its own D1 / (D1 + D2), so
    the result depends only on the measured totals.
    """
    from scipy.optimize import brentq

    obs = np.mean([r.total / r.n_gates for r in records])
    ps = [r.d1 / r.total if r.total else 0.5 for r in records]

    def excess(t):
        trial = DetectorParams(params.dark_yield, params.eta_bob, params.e_det, params.visibility, t)
        pred = [sum(click_probabilities(p, trial, source)[:2]) for p in ps]
        return float(np.mean(pred)) - obs

    if excess(1.0) < 0:
        return 1.0
    if excess(0.0) > 0:
        return 0.0
    return float(brentq(excess, 0.0, 1.0, xtol=1e-12))
