"""Source, detector and count-record types shared by simulation and analysis."""
from __future__ import annotations

import enum
from dataclasses import dataclass

from ..core import Bb84State, DomainError, EveBasis

#: Default detector and source parameters.
DEFAULT_DARK_YIELD = 2.11e-5
DEFAULT_E_DET = 0.38e-2
DEFAULT_ETA_BOB = 5.82e-2
DEFAULT_MU = 1.39


class SourceKind(enum.Enum):
    SINGLE_PHOTON = "single_photon"
    WEAK_COHERENT = "weak_coherent"


@dataclass(frozen=True)
class SourceModel:
    kind: SourceKind
    mu: float | None = None

    def __post_init__(self):
        if self.kind is SourceKind.WEAK_COHERENT:
            if self.mu is None or not self.mu > 0:
                raise DomainError(f"weak coherent source needs mu > 0, got {self.mu!r}")
        elif self.mu is not None:
            raise DomainError("single-photon source takes no mu")

    @classmethod
    def single_photon(cls) -> "SourceModel":
        return cls(SourceKind.SINGLE_PHOTON)

    @classmethod
    def weak_coherent(cls, mu: float = DEFAULT_MU) -> "SourceModel":
        return cls(SourceKind.WEAK_COHERENT, float(mu))


@dataclass(frozen=True)
class DetectorParams:
    """Detection-side parameters.

    ``visibility`` defaults to ``1 - 2 * e_det``. ``transmittance`` is an extra
    loss factor (coupling, attenuation) applied on top of ``eta_bob`` in the
    Monte Carlo only; the closed-form gain formulas use ``eta_bob`` alone.
    """

    dark_yield: float = DEFAULT_DARK_YIELD
    eta_bob: float = DEFAULT_ETA_BOB
    e_det: float = DEFAULT_E_DET
    visibility: float | None = None
    transmittance: float = 1.0

    def __post_init__(self):
        if self.visibility is None:
            object.__setattr__(self, "visibility", 1.0 - 2.0 * self.e_det)
        for name in ("dark_yield", "eta_bob", "e_det", "visibility", "transmittance"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v!r}")

    @property
    def eta_effective(self) -> float:
        return self.eta_bob * self.transmittance


@dataclass(frozen=True)
class CountRecord:
    """Click tallies for one (state, Eve basis) cell over ``n_gates`` gates.

    ``eve_basis`` is ``None`` for an honest channel, where Bob measures directly
    in the basis Alice used.
    """

    state: Bb84State
    eve_basis: EveBasis | None
    d1: int
    d2: int
    d_both: int
    n_gates: int
    seed: int | None = None
    stream: int | None = None
    table: str = ""

    def __post_init__(self):
        if min(self.d1, self.d2, self.d_both) < 0 or self.n_gates < 1:
            raise DomainError(f"counts must be non-negative and n_gates >= 1: {self}")
        if self.d1 + self.d2 > self.n_gates + self.d_both:
            raise DomainError(f"d1 + d2 exceeds n_gates + d_both: {self}")

    @property
    def total(self) -> int:
        return self.d1 + self.d2
