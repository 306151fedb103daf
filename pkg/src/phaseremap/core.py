"""Closed-form interference, phase-extraction and QBER formulas.

Angles are radians throughout; degrees only appear at I/O boundaries.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

#: Maximum tolerable QBER for BB84 under the cited security proof.
SECURITY_BOUND = 0.200


class DomainError(ValueError):
    """An input lies outside the domain of a formula."""


class NoDiscriminationError(DomainError):
    """Eve's measurement cannot tell any state apart (all click weights vanish)."""


class DarkDominatedWarning(RuntimeWarning):
    """Detector counts do not exceed the dark-count expectation."""


class LimitValueWarning(RuntimeWarning):
    """A formula was evaluated at a removable singularity; its limit was returned."""


class Bb84State(enum.Enum):
    """The four phase-coding BB84 states, in protocol order."""

    ZERO1 = "0_1"
    ZERO2 = "0_2"
    ONE1 = "1_1"
    ONE2 = "1_2"

    @property
    def index(self) -> int:
        return _STATE_ORDER.index(self)

    @property
    def nominal_phase(self) -> float:
        return self.index * math.pi / 2

    @property
    def bit(self) -> int:
        return 0 if self in (Bb84State.ZERO1, Bb84State.ZERO2) else 1

    @property
    def basis(self) -> int:
        return 1 if self in (Bb84State.ZERO1, Bb84State.ONE1) else 2

    @classmethod
    def ordered(cls) -> tuple["Bb84State", ...]:
        return _STATE_ORDER

    @classmethod
    def parse(cls, text: str) -> "Bb84State":
        key = text.strip().upper().replace("_", "")
        for state in cls:
            if key in (state.name, state.value.replace("_", "")):
                return state
        raise DomainError(f"unknown BB84 state {text!r}")


_STATE_ORDER = (Bb84State.ZERO1, Bb84State.ZERO2, Bb84State.ONE1, Bb84State.ONE2)


@dataclass(frozen=True)
class RemappedPhaseSet:
    """Encoding phases after Eve's time shift, one per state in protocol order.

    ``phi_e[0]`` is the global phase reference and is always zero.
    """

    phi_e: tuple[float, float, float, float]
    no_modulation: bool = field(default=False, compare=False)

    def __post_init__(self):
        phi = tuple(float(p) for p in self.phi_e)
        if len(phi) != 4:
            raise DomainError(f"expected four phases, got {len(phi)}")
        if not all(math.isfinite(p) for p in phi):
            raise DomainError("phases must be finite")
        if phi[0] != 0.0:
            raise DomainError(f"phi_e[Zero1] must be 0 by convention, got {phi[0]!r}")
        phase_differences(phi)
        object.__setattr__(self, "phi_e", phi)

    @classmethod
    def from_differences(cls, phi_1: float, phi_2: float, phi_3: float) -> "RemappedPhaseSet":
        return cls((0.0, phi_1, phi_1 + phi_2, phi_1 + phi_2 + phi_3))

    @classmethod
    def standard(cls) -> "RemappedPhaseSet":
        return cls(tuple(s.nominal_phase for s in Bb84State.ordered()))

    @property
    def differences(self) -> tuple[float, float, float]:
        return phase_differences(self.phi_e)

    @property
    def phi_1(self) -> float:
        return self.differences[0]

    @property
    def phi_2(self) -> float:
        return self.differences[1]

    @property
    def phi_3(self) -> float:
        return self.differences[2]

    def __getitem__(self, state: Bb84State) -> float:
        return self.phi_e[state.index]


class EveBasis(enum.Enum):
    """Eve's measurement setting: the phase she puts on the reference pulse."""

    BASE0 = "Base0"
    BASE1 = "Base1"
    BASE2 = "Base2"

    def applied_phase(self, rps: RemappedPhaseSet) -> float:
        if self is EveBasis.BASE0:
            return 0.0
        if self is EveBasis.BASE1:
            return rps.phi_e[1]
        return rps.phi_e[2]

    @classmethod
    def parse(cls, text: str) -> "EveBasis":
        key = text.strip().lower()
        for basis in cls:
            if key in (basis.value.lower(), basis.name.lower(), basis.value[-1]):
                return basis
        raise DomainError(f"unknown Eve basis {text!r}")


def detection_probabilities(phase_a, phase_b, visibility=1.0):
    """Click probabilities of the two interferometer outputs.

    ``p_det1 = (1 - V cos(phase_a - phase_b)) / 2`` and ``p_det2 = 1 - p_det1``.
    Works elementwise on arrays.
    """
    if not 0.0 <= visibility <= 1.0:
        raise DomainError(f"visibility must lie in [0, 1], got {visibility!r}")
    # (1 - V cos d) / 2 written with half-angle terms to avoid cancellation at small d
    half = np.subtract(phase_a, phase_b) / 2.0
    floor = (1.0 - visibility) / 2.0
    p1 = floor + visibility * np.sin(half) ** 2
    p2 = floor + visibility * np.cos(half) ** 2
    if np.ndim(p1) == 0:
        return float(p1), float(p2)
    return p1, p2


def phase_from_counts(d1: float, d2: float, n_gates: float, dark_yield: float) -> float:
    """Remapped phase from Base0 click counts after dark-count subtraction.

    Returns ``2 atan(sqrt((D1 - N Y0) / (D2 - N Y0)))`` in ``[0, pi]``. When the Det1
    signal is at or below the dark level the phase is clamped to 0 and a
    :class:`DarkDominatedWarning` is emitted.
    """
    dark = n_gates * dark_yield
    s1 = d1 - dark
    s2 = d2 - dark
    if s2 <= 0:
        raise DomainError(f"Det2 counts {d2} do not exceed the dark level {dark:g}")
    if s1 < 0:
        warnings.warn(
            f"Det1 counts {d1} below dark level {dark:g}; phase clamped to 0",
            DarkDominatedWarning,
            stacklevel=2,
        )
        return 0.0
    return 2.0 * math.atan(math.sqrt(s1 / s2))


def phase_differences(phi_e) -> tuple[float, float, float]:
    """Consecutive differences of four non-decreasing phases."""
    phi = [float(p) for p in phi_e]
    if len(phi) != 4:
        raise DomainError(f"expected four phases, got {len(phi)}")
    diffs = tuple(phi[i] - phi[i - 1] for i in range(1, 4))
    for i, d in enumerate(diffs, start=1):
        if d < 0:
            raise DomainError(f"phases decrease at index {i}: {phi[i - 1]!r} -> {phi[i]!r}")
    return diffs


def _s2(x):
    return np.sin(np.asarray(x) / 2.0) ** 2


def qber_general(phi_1: float, phi_2: float, phi_3: float) -> tuple[float, float]:
    """QBERs of the Base1 and Base2 intercept-resend strategies for arbitrary remapping."""
    for name, p in (("phi_1", phi_1), ("phi_2", phi_2), ("phi_3", phi_3)):
        if not 0.0 <= p <= math.pi:
            raise DomainError(f"{name} must lie in [0, pi], got {p!r}")
    a, b, c = float(_s2(phi_1)), float(_s2(phi_2)), float(_s2(phi_3))
    den1 = float(_s2(phi_2 + phi_3)) + b + a
    den2 = float(_s2(phi_1 + phi_2)) + b + c
    if den1 == 0.0 or den2 == 0.0:
        raise NoDiscriminationError("all remapped phase differences vanish; no discrimination possible")
    return (a / 2 + b / 2) / den1, (b / 2 + c / 2) / den2


def qber_symmetric(phi):
    """Average QBER when all three remapped differences equal ``phi``.

    Evaluated as ``1 / (6 - 4 sin^2(phi/2))``, the simplified form of
    ``sin^2(phi/2) / (sin^2(phi) + 2 sin^2(phi/2))``. At ``phi = 0`` the limit 1/6 is
    returned with a :class:`LimitValueWarning`. Accepts arrays.
    """
    arr = np.asarray(phi, dtype=float)
    if np.any(arr < 0) or np.any(arr > math.pi) or not np.all(np.isfinite(arr)):
        raise DomainError("phi must lie in [0, pi]")
    if np.any(arr == 0):
        warnings.warn("qber_symmetric evaluated at phi=0; returning the 1/6 limit", LimitValueWarning, stacklevel=2)
    out = 1.0 / (6.0 - 4.0 * _s2(arr))
    return float(out) if out.ndim == 0 else out
