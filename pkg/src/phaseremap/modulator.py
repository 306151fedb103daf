"""Time- and polarization-dependent response of Alice's phase modulator.

Each encoding level (pi/2, pi, 3pi/2) has its own piecewise-linear drive shape:
a linear rise to an optional overshoot peak, a linear decay back to the
plateau, the plateau itself, and a linear fall. Times are in ns with the
modulation trigger at t = 0.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import Bb84State, DomainError, RemappedPhaseSet

SPEED_OF_LIGHT_M_PER_NS = 0.299792458
FIBER_GROUP_INDEX = 1.468
_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class Polarization(enum.Enum):
    ALIGNED = "aligned"
    ORTHOGONAL = "orthogonal"

    @property
    def rotated(self) -> "Polarization":
        # Faraday mirror swaps the two principal axes on the return trip.
        return Polarization.ORTHOGONAL if self is Polarization.ALIGNED else Polarization.ALIGNED


class Pass(enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


class SamplingRule(enum.Enum):
    CENTER = "center"
    INTEGRATED = "integrated"


@dataclass(frozen=True)
class LevelResponse:
    """Drive shape for one encoding level.

    ``level`` is the nominal double-pass phase in radians; the aligned single-pass
    plateau follows from the profile's polarization ratio.
    """

    level: float
    start_time: float
    rise_time: float
    overshoot_fraction: float = 0.0
    overshoot_duration: float = 0.0
    plateau_duration: float = 60.0
    fall_time: float = 5.0

    def __post_init__(self):
        if self.rise_time <= 0:
            raise DomainError(f"rise_time must be > 0, got {self.rise_time}")
        if self.plateau_duration <= 0:
            raise DomainError(f"plateau_duration must be > 0, got {self.plateau_duration}")
        if self.overshoot_fraction < 0 or self.overshoot_duration < 0 or self.fall_time < 0:
            raise DomainError("overshoot_fraction, overshoot_duration and fall_time must be >= 0")

    @property
    def end_time(self) -> float:
        return (
            self.start_time + self.rise_time + self.overshoot_duration + self.plateau_duration + self.fall_time
        )

    def region(self, t: float) -> str:
        """Name of the drive segment containing time ``t``."""
        tau = t - self.start_time
        edges = (
            ("before", 0.0),
            ("rising", self.rise_time),
            ("overshoot", self.overshoot_duration),
            ("plateau", self.plateau_duration),
            ("falling", self.fall_time),
        )
        acc = 0.0
        for name, width in edges:
            acc += width
            if tau < acc:
                return name
        return "after"


@dataclass(frozen=True)
class ModulationProfile:
    """Per-level drive shapes plus the orthogonal:aligned modulation ratio."""

    levels: tuple[LevelResponse, LevelResponse, LevelResponse]
    polarization_ratio: float = 1.0 / 3.0
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if len(self.levels) != 3:
            raise DomainError("a profile needs exactly three levels (pi/2, pi, 3pi/2)")
        if not 0.0 < self.polarization_ratio <= 1.0:
            raise DomainError(f"polarization_ratio must lie in (0, 1], got {self.polarization_ratio}")
        object.__setattr__(self, "levels", tuple(self.levels))

    def response(self, state: Bb84State) -> LevelResponse | None:
        """Drive shape used for ``state``; ``None`` for Zero1, which is never modulated."""
        if state is Bb84State.ZERO1:
            return None
        return self.levels[state.index - 1]

    def plateau_level(self, level: LevelResponse) -> float:
        """Aligned single-pass plateau phase; aligned + orthogonal passes add up to ``level.level``."""
        return level.level / (1.0 + self.polarization_ratio)


@dataclass(frozen=True)
class OpticalPulse:
    center_time: float
    width_fwhm: float = 500.0  # ps
    polarization: Polarization = Polarization.ORTHOGONAL
    pass_: Pass = Pass.BACKWARD

    def __post_init__(self):
        if self.width_fwhm <= 0:
            raise DomainError(f"width_fwhm must be > 0, got {self.width_fwhm}")


@dataclass(frozen=True)
class TimingLayout:
    """Pulse timing at Alice's modulator.

    The modulation trigger fires ``delta_t1`` after the reference pulse. The signal
    pulse trails the reference by ``delta_t3`` and returns from the Faraday mirror
    ``mirror_delay`` later. Eve's delay line shortens the reference-signal
    separation by ``vodl_passes * vodl_delay``.
    """

    delta_t1: float = 20.0
    delta_t3: float = 54.0
    mirror_delay: float = 16.0
    vodl_delay: float = 0.0
    vodl_passes: int = 1

    def __post_init__(self):
        if self.vodl_delay < 0:
            raise DomainError(f"vodl_delay must be >= 0, got {self.vodl_delay}")
        if self.vodl_passes not in (1, 2):
            raise DomainError(f"vodl_passes must be 1 or 2, got {self.vodl_passes}")

    @property
    def forward_time(self) -> float:
        return self.delta_t3 - self.vodl_passes * self.vodl_delay - self.delta_t1

    @property
    def backward_time(self) -> float:
        return self.forward_time + self.mirror_delay

    def shifted(self, vodl_delay: float) -> "TimingLayout":
        return replace(self, vodl_delay=vodl_delay)


def _level_curve(tau, peak, plateau, rise, od, pd, fall):
    """Vectorised drive shape of one level, ``tau`` measured from its start."""
    tau = np.asarray(tau, dtype=float)
    out = np.zeros_like(tau)
    t1 = rise
    t2 = t1 + od
    t3 = t2 + pd
    t4 = t3 + fall
    m = (tau >= 0) & (tau < t1)
    out[m] = peak * tau[m] / rise
    if od > 0:
        m = (tau >= t1) & (tau < t2)
        out[m] = peak + (plateau - peak) * (tau[m] - t1) / od
    m = (tau >= t2) & (tau < t3)
    out[m] = plateau
    if fall > 0:
        m = (tau >= t3) & (tau < t4)
        out[m] = plateau * (1.0 - (tau[m] - t3) / fall)
    return out


def phase_at(profile: ModulationProfile, level: Bb84State, t, polarization: Polarization):
    """Single-pass phase (rad) imprinted at time ``t`` on a pulse with ``polarization``.

    Zero outside the modulation window and for the unmodulated Zero1 state.
    """
    resp = profile.response(level)
    if resp is None:
        return 0.0 if np.ndim(t) == 0 else np.zeros(np.shape(t))
    plateau = profile.plateau_level(resp)
    if polarization is Polarization.ORTHOGONAL:
        plateau *= profile.polarization_ratio
    peak = plateau * (1.0 + resp.overshoot_fraction)
    out = _level_curve(
        np.asarray(t, dtype=float) - resp.start_time,
        peak,
        plateau,
        resp.rise_time,
        resp.overshoot_duration,
        resp.plateau_duration,
        resp.fall_time,
    )
    return float(out) if out.ndim == 0 else out


_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite_e.hermegauss(96)
_GH_WEIGHTS = _GH_WEIGHTS / _GH_WEIGHTS.sum()


def pulse_phase(
    profile: ModulationProfile,
    level: Bb84State,
    pulse: OpticalPulse,
    rule: SamplingRule = SamplingRule.CENTER,
) -> float:
    """Phase picked up by a finite pulse.

    The center rule samples the drive at the pulse center. The integrated rule
    averages it over a Gaussian intensity envelope with 96-node Gauss-Hermite
    quadrature.
    """
    if rule is SamplingRule.CENTER:
        return phase_at(profile, level, pulse.center_time, pulse.polarization)
    sigma = pulse.width_fwhm * 1e-3 * _FWHM_TO_SIGMA
    ts = pulse.center_time + sigma * _GH_NODES
    return float(np.dot(_GH_WEIGHTS, phase_at(profile, level, ts, pulse.polarization)))


def remap_phases(
    profile: ModulationProfile,
    timing: TimingLayout,
    pulse_template: OpticalPulse | None = None,
    double_pass: bool = True,
    rule: SamplingRule = SamplingRule.CENTER,
) -> RemappedPhaseSet:
    """Encoding phases actually applied to the signal pulse for each state.

    The backward pass carries the template's polarization. With ``double_pass``
    the forward pass (Faraday-rotated polarization) is added too. Whatever lands
    outside the drive window contributes nothing, so a shifted-out forward pulse
    drops out on its own. Phases are referenced to the Zero1 value.
    """
    if pulse_template is None:
        pulse_template = OpticalPulse(center_time=0.0)
    back = replace(pulse_template, center_time=timing.backward_time, pass_=Pass.BACKWARD)
    fwd = replace(
        pulse_template,
        center_time=timing.forward_time,
        polarization=pulse_template.polarization.rotated,
        pass_=Pass.FORWARD,
    )
    raw = []
    for state in Bb84State.ordered():
        phase = pulse_phase(profile, state, back, rule)
        if double_pass:
            phase += pulse_phase(profile, state, fwd, rule)
        raw.append(phase)
    ref = raw[0]
    phi = tuple(p - ref for p in raw)
    return RemappedPhaseSet(phi, no_modulation=all(p == 0.0 for p in raw))


def delay_from_fiber_length(length: float, group_index: float = FIBER_GROUP_INDEX) -> float:
    """Propagation delay (ns) of ``length`` metres of fibre."""
    if length < 0:
        raise DomainError(f"fiber length must be >= 0, got {length}")
    if group_index < 1:
        raise DomainError(f"group_index must be >= 1, got {group_index}")
    return group_index * length / SPEED_OF_LIGHT_M_PER_NS


def standard_profile(
    rise_times: Sequence[float] = (6.12, 7.82, 9.47),
    start_times: Sequence[float] = (10.0, 10.0, 10.0),
    polarization_ratio: float = 1.0 / 3.0,
) -> ModulationProfile:
    """Overshoot-free profile with the given rise and start times."""
    levels = tuple(
        LevelResponse(level=(i + 1) * math.pi / 2, start_time=s, rise_time=r)
        for i, (s, r) in enumerate(zip(start_times, rise_times))
    )
    return ModulationProfile(levels, polarization_ratio)


@dataclass(frozen=True)
class ProfileFit:
    profile: ModulationProfile
    residuals_deg: tuple[tuple[float, float], ...]  # (A, B) per level
    sse_deg2: float


def fit_profile(
    targets_a_deg: Sequence[float],
    targets_b_deg: Sequence[float],
    delay_a: float,
    delay_b: float,
    rise_times: Sequence[float] = (6.12, 7.82, 9.47),
    timing: TimingLayout = TimingLayout(),
    polarization: Polarization = Polarization.ORTHOGONAL,
    ratio_grid: Sequence[float] = tuple(np.round(np.arange(0.15, 0.4001, 0.01), 4)),
    start_step: float = 0.05,
    margin: float = 0.5,
) -> ProfileFit:
    """Grid-search start times, overshoot shape and polarization ratio.

    ``targets_*_deg`` are the three remapped phases (0_2, 1_1, 1_2) observed at the
    two delay-line settings. The search keeps only shapes that are physically
    consistent with ``timing``: during the attack the forward pass lies before
    every window, and in normal operation both passes sit on the plateau.
    """
    tb_a = timing.shifted(delay_a).backward_time
    tb_b = timing.shifted(delay_b).backward_time
    tf_a = timing.shifted(delay_a).forward_time
    tf_0 = timing.shifted(0.0).forward_time
    tb_0 = timing.shifted(0.0).backward_time
    ta = np.radians(np.asarray(targets_a_deg, dtype=float))
    tb = np.radians(np.asarray(targets_b_deg, dtype=float))

    starts = np.arange(tf_a + margin, tf_0 - min(rise_times) - margin, start_step)
    fracs = np.arange(0.0, 0.8001, 0.01)
    ods = np.concatenate([[0.0], np.arange(0.25, 20.001, 0.25)])
    S, F, O = np.meshgrid(starts, fracs, ods, indexing="ij")
    S, F, O = S.ravel(), F.ravel(), O.ravel()

    best = None
    for r in ratio_grid:
        total = 0.0
        chosen = []
        for i, rise in enumerate(rise_times):
            level = (i + 1) * math.pi / 2
            plateau = level / (1.0 + r)
            if polarization is Polarization.ORTHOGONAL:
                plateau *= r
            # normal operation: forward pass must already be on the plateau
            ok = S + rise + O <= tf_0 - margin
            s, f, o = S[ok], F[ok], O[ok]
            peak = plateau * (1.0 + f)
            pa = _curve_many(tb_a - s, peak, plateau, rise, o)
            pb = _curve_many(tb_b - s, peak, plateau, rise, o)
            err = (pa - ta[i]) ** 2 + (pb - tb[i]) ** 2
            k = int(np.argmin(err))
            total += float(err[k])
            chosen.append((float(s[k]), float(f[k]), float(o[k]), float(pa[k]), float(pb[k])))
            if best is not None and total >= best[0]:
                break
        else:
            if best is None or total < best[0]:
                best = (total, float(r), chosen)

    total, r, chosen = best
    levels = []
    resid = []
    for i, (rise, (s, f, o, pa, pb)) in enumerate(zip(rise_times, chosen)):
        plateau_end = tb_0 + 10.0
        levels.append(
            LevelResponse(
                level=(i + 1) * math.pi / 2,
                start_time=round(s, 6),
                rise_time=rise,
                overshoot_fraction=round(f, 6),
                overshoot_duration=round(o, 6),
                plateau_duration=round(plateau_end - (s + rise + o), 6),
                fall_time=5.0,
            )
        )
        resid.append((math.degrees(pa - ta[i]), math.degrees(pb - tb[i])))
    profile = ModulationProfile(tuple(levels), r)
    return ProfileFit(profile, tuple(resid), total * (180.0 / math.pi) ** 2)


def _curve_many(tau, peak, plateau, rise, od):
    """Rise and overshoot segments for many candidate shapes at once (plateau beyond)."""
    out = np.where(tau < rise, peak * np.clip(tau, 0, None) / rise, plateau)
    in_os = (tau >= rise) & (tau < rise + od)
    with np.errstate(divide="ignore", invalid="ignore"):
        decay = peak + (plateau - peak) * (tau - rise) / np.where(od > 0, od, 1.0)
    out = np.where(in_os, decay, out)
    return np.where(tau < 0, 0.0, out)
