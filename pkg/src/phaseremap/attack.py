"""Eve's click-conditioned intercept-and-resend strategy on remapped states."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    Bb84State,
    DomainError,
    EveBasis,
    NoDiscriminationError,
    RemappedPhaseSet,
    detection_probabilities,
)
from .modulator import ModulationProfile, OpticalPulse, Polarization, TimingLayout, remap_phases

# Probability that Bob's sifted bit disagrees with Alice's, per state Alice sent,
# given Eve resent the state her click singles out.
ERROR_WEIGHTS = {
    EveBasis.BASE1: (0.5, 1.0, 0.5, 0.0),  # Eve resends 1_2
    EveBasis.BASE2: (0.0, 0.5, 1.0, 0.5),  # Eve resends 0_1
}
RESEND_STATE = {EveBasis.BASE1: Bb84State.ONE2, EveBasis.BASE2: Bb84State.ZERO1}


class AttackType(enum.Enum):
    NONE = "none"  # no time shift: normal timing
    TYPE1 = "type1"  # backward pulse on a rising edge
    TYPE2 = "type2"  # backward pulse on the settled plateau, orthogonal polarization


@dataclass(frozen=True)
class AttackConfig:
    attack_type: AttackType
    vodl_delay: float  # ns
    polarization: Polarization = Polarization.ORTHOGONAL
    eve_basis: EveBasis = EveBasis.BASE1

    def check(self, profile: ModulationProfile, timing: TimingLayout) -> None:
        """Raise :class:`DomainError` if the shifted backward pulse contradicts the attack type."""
        if self.attack_type is AttackType.NONE:
            if self.vodl_delay != 0:
                raise DomainError(f"attack type 'none' needs zero delay, got {self.vodl_delay} ns")
            return
        t = timing.shifted(self.vodl_delay).backward_time
        regions = [lvl.region(t) for lvl in profile.levels]
        if self.attack_type is AttackType.TYPE1:
            if "rising" not in regions:
                raise DomainError(f"type1 attack needs the backward pulse on a rising edge; regions {regions}")
        else:
            if self.polarization is not Polarization.ORTHOGONAL:
                raise DomainError("type2 attack needs orthogonal polarization")
            if any(r not in ("overshoot", "plateau") for r in regions):
                raise DomainError(f"type2 attack needs the backward pulse past every rising edge; regions {regions}")

    def remapped(
        self, profile: ModulationProfile, timing: TimingLayout, width_fwhm: float = 500.0
    ) -> RemappedPhaseSet:
        pulse = OpticalPulse(center_time=0.0, width_fwhm=width_fwhm, polarization=self.polarization)
        return remap_phases(profile, timing.shifted(self.vodl_delay), pulse, double_pass=True)


@dataclass(frozen=True)
class ResendDecision:
    """Either ``Resend(state)`` or ``Discard`` (``state is None``)."""

    state: Bb84State | None

    @property
    def discard(self) -> bool:
        return self.state is None

    def __str__(self) -> str:
        return "Discard" if self.state is None else f"Resend({self.state.value})"


def eve_applied_phase(basis: EveBasis, rps: RemappedPhaseSet) -> float:
    return basis.applied_phase(rps)


def expected_click_probs(rps: RemappedPhaseSet, basis: EveBasis, visibility: float = 1.0) -> np.ndarray:
    """Det1 click probability at Eve's interferometer for each state Alice may send."""
    p1, _ = detection_probabilities(np.asarray(rps.phi_e), eve_applied_phase(basis, rps), visibility)
    return np.asarray(p1, dtype=float)


def resend_decision(basis: EveBasis, det1_clicked: bool) -> ResendDecision:
    if basis is EveBasis.BASE0:
        raise DomainError("Base0 is diagnostic only; Eve never resends from it")
    return ResendDecision(RESEND_STATE[basis] if det1_clicked else None)


def strategy_qber(rps: RemappedPhaseSet, basis: EveBasis, visibility: float = 1.0) -> float:
    """QBER Bob sees when Eve resends on every Det1 click under ``basis``."""
    if basis is EveBasis.BASE0:
        raise DomainError("strategy QBER is defined for Base1 and Base2 only")
    p = expected_click_probs(rps, basis, visibility)
    total = p.sum()
    if total == 0.0:
        raise NoDiscriminationError("Eve's detector never clicks; no discrimination possible")
    return float(np.dot(p, ERROR_WEIGHTS[basis]) / total)


def strategy_yield(rps: RemappedPhaseSet, basis: EveBasis, visibility: float = 1.0) -> float:
    """Expected number of resends per four signals (one of each state)."""
    return float(expected_click_probs(rps, basis, visibility).sum())


def combined_strategy(qber_a: float, qber_b: float, weight_a: float = 0.5) -> float:
    if not 0.0 <= weight_a <= 1.0:
        raise DomainError(f"weight must lie in [0, 1], got {weight_a}")
    return weight_a * qber_a + (1.0 - weight_a) * qber_b


@dataclass(frozen=True)
class StrategyChoice:
    delay: float
    basis: EveBasis
    qber: float
    yield_: float


@dataclass(frozen=True)
class OptimizedAttack:
    """Best delay per resend basis and the bit-balanced mix of the two."""

    choices: dict[EveBasis, StrategyChoice]
    attack_probability: dict[EveBasis, float]
    overall_qber: float | None


def optimize_delay(
    profile: ModulationProfile,
    timing: TimingLayout,
    delay_grid: Sequence[float],
    bases: Sequence[EveBasis] = (EveBasis.BASE1, EveBasis.BASE2),
    visibility: float = 1.0,
    polarization: Polarization = Polarization.ORTHOGONAL,
) -> OptimizedAttack:
    """Pick, for each basis, the grid delay with the lowest strategy QBER.

    Eve then mixes the two configurations with probabilities that make Bob
    receive bits 0 and 1 equally often: ``w * yield_1 = (1 - w) * yield_2``.
    Equal resend counts mean the overall QBER is the plain mean of the two.
    Ties go to the smaller delay.
    """
    if len(delay_grid) == 0:
        raise DomainError("delay grid is empty")
    bases = [b for b in bases]
    if any(b is EveBasis.BASE0 for b in bases):
        raise DomainError("Base0 is diagnostic only")
    pulse = OpticalPulse(center_time=0.0, polarization=polarization)
    best: dict[EveBasis, StrategyChoice] = {}
    for delay in sorted(float(d) for d in delay_grid):
        rps = remap_phases(profile, timing.shifted(delay), pulse)
        for basis in bases:
            try:
                q = strategy_qber(rps, basis, visibility)
            except NoDiscriminationError:
                continue
            if basis not in best or q < best[basis].qber:
                best[basis] = StrategyChoice(delay, basis, q, strategy_yield(rps, basis, visibility))
    if not best:
        raise NoDiscriminationError("no grid delay gives Eve any discrimination")
    ordered = {b: best[b] for b in (EveBasis.BASE1, EveBasis.BASE2) if b in best}
    if len(ordered) == 2:
        y1 = ordered[EveBasis.BASE1].yield_
        y2 = ordered[EveBasis.BASE2].yield_
        w = y2 / (y1 + y2)
        share = w * y1 / (w * y1 + (1 - w) * y2)
        overall = combined_strategy(ordered[EveBasis.BASE1].qber, ordered[EveBasis.BASE2].qber, share)
        probs = {EveBasis.BASE1: w, EveBasis.BASE2: 1 - w}
    else:
        (only,) = ordered
        probs = {only: 1.0}
        overall = None
    return OptimizedAttack(ordered, probs, overall)
