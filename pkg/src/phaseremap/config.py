"""JSON config files for profiles, detector parameters and attack experiments.

Times are in ns, phases in degrees, fibre lengths in metres. A string value of
the form ``"bundled:<name>"`` refers to a file shipped in ``phaseremap/data``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

from .attack import AttackConfig, AttackType
from .core import DomainError, EveBasis
from .modulator import (
    FIBER_GROUP_INDEX,
    LevelResponse,
    ModulationProfile,
    Polarization,
    TimingLayout,
    delay_from_fiber_length,
)
from .montecarlo.models import DetectorParams, SourceModel


class ConfigError(DomainError):
    def __init__(self, issues: list[str], source: str = ""):
        self.issues = issues
        head = f"invalid config {source}" if source else "invalid config"
        super().__init__(head + ":\n" + "\n".join(f"  {i}" for i in issues))


def bundled_path(name: str):
    return resources.files("phaseremap.data").joinpath(name)


def bundled_text(name: str) -> str:
    return bundled_path(name).read_text(encoding="utf-8")


def _resolve(ref: str, base: Path | None) -> tuple[dict, Path | None, str]:
    if ref.startswith("bundled:"):
        name = ref.split(":", 1)[1]
        if not name.endswith(".json"):
            name += ".json"
        return json.loads(bundled_text(name)), None, ref
    path = Path(ref)
    if base is not None and not path.is_absolute():
        path = base / path
    return json.loads(path.read_text(encoding="utf-8")), path.parent, str(path)


class _Reader:
    """Collects every validation problem instead of stopping at the first."""

    def __init__(self, data: Any, path: str = ""):
        self.data = data
        self.path = path
        self.issues: list[str] = []

    def num(self, obj, key, path, *, required=True, default=None, lo=None, hi=None, lo_open=False, integer=False):
        where = f"{path}.{key}" if path else key
        if not isinstance(obj, dict) or key not in obj:
            if required:
                self.issues.append(f"{where}: missing")
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            self.issues.append(f"{where}: expected a number, got {v!r}")
            return default
        if integer and int(v) != v:
            self.issues.append(f"{where}: expected an integer, got {v!r}")
            return default
        if lo is not None and (v <= lo if lo_open else v < lo):
            self.issues.append(f"{where}: must be {'>' if lo_open else '>='} {lo}, got {v!r}")
            return None
        if hi is not None and v > hi:
            self.issues.append(f"{where}: must be <= {hi}, got {v!r}")
            return None
        return int(v) if integer else float(v)

    def choice(self, obj, key, path, parse, *, required=True, default=None):
        where = f"{path}.{key}" if path else key
        if not isinstance(obj, dict) or key not in obj:
            if required:
                self.issues.append(f"{where}: missing")
            return default
        try:
            return parse(obj[key])
        except (DomainError, ValueError, KeyError, AttributeError) as exc:
            self.issues.append(f"{where}: {exc}")
            return default

    def raise_if_any(self, source: str = ""):
        if self.issues:
            raise ConfigError(self.issues, source)


def _enum(cls):
    def parse(v):
        for m in cls:
            if str(v).strip().lower() in (m.value.lower(), m.name.lower()):
                return m
        raise ValueError(f"expected one of {[m.value for m in cls]}, got {v!r}")

    return parse


def profile_from_dict(d: dict, source: str = "") -> tuple[ModulationProfile, TimingLayout, float, float]:
    """Returns ``(profile, timing, pulse_width_ps, fiber_group_index)``."""
    rd = _Reader(d)
    ratio = rd.num(d, "polarization_ratio", "", lo=0.0, lo_open=True, hi=1.0)
    levels_raw = d.get("levels") if isinstance(d, dict) else None
    levels = []
    if not isinstance(levels_raw, list) or len(levels_raw) != 3:
        rd.issues.append("levels: expected a list of three level objects")
    else:
        for i, lv in enumerate(levels_raw):
            p = f"levels[{i}]"
            deg = rd.num(lv, "level_deg", p)
            if deg is not None and abs(deg - 90.0 * (i + 1)) > 1e-9:
                rd.issues.append(f"{p}.level_deg: expected {90 * (i + 1)}, got {deg}")
            vals = dict(
                start_time=rd.num(lv, "start_time_ns", p),
                rise_time=rd.num(lv, "rise_time_ns", p, lo=0.0, lo_open=True),
                overshoot_fraction=rd.num(lv, "overshoot_fraction", p, required=False, default=0.0, lo=0.0),
                overshoot_duration=rd.num(lv, "overshoot_duration_ns", p, required=False, default=0.0, lo=0.0),
                plateau_duration=rd.num(lv, "plateau_duration_ns", p, lo=0.0, lo_open=True),
                fall_time=rd.num(lv, "fall_time_ns", p, required=False, default=5.0, lo=0.0),
            )
            if None not in vals.values():
                levels.append(LevelResponse(level=(i + 1) * math.pi / 2, **vals))
    t = d.get("timing", {}) if isinstance(d, dict) else {}
    timing_vals = dict(
        delta_t1=rd.num(t, "delta_t1_ns", "timing"),
        delta_t3=rd.num(t, "delta_t3_ns", "timing"),
        mirror_delay=rd.num(t, "mirror_delay_ns", "timing", lo=0.0),
        vodl_passes=rd.num(t, "vodl_passes", "timing", required=False, default=1, lo=1, hi=2, integer=True),
    )
    pulse = d.get("pulse", {}) if isinstance(d, dict) else {}
    width = rd.num(pulse, "width_fwhm_ps", "pulse", required=False, default=500.0, lo=0.0, lo_open=True)
    gi = rd.num(d, "fiber_group_index", "", required=False, default=FIBER_GROUP_INDEX, lo=1.0)
    rd.raise_if_any(source)
    meta = {k: d[k] for k in ("name", "derived", "note", "fit") if k in d}
    return ModulationProfile(tuple(levels), ratio, meta), TimingLayout(**timing_vals), width, gi


def profile_to_dict(profile: ModulationProfile, timing: TimingLayout, width_ps: float = 500.0,
                    group_index: float = FIBER_GROUP_INDEX) -> dict:
    out = dict(profile.meta)
    out.update(
        polarization_ratio=profile.polarization_ratio,
        levels=[
            {
                "level_deg": round(math.degrees(lv.level), 9),
                "start_time_ns": lv.start_time,
                "rise_time_ns": lv.rise_time,
                "overshoot_fraction": lv.overshoot_fraction,
                "overshoot_duration_ns": lv.overshoot_duration,
                "plateau_duration_ns": lv.plateau_duration,
                "fall_time_ns": lv.fall_time,
            }
            for lv in profile.levels
        ],
        timing={
            "delta_t1_ns": timing.delta_t1,
            "delta_t3_ns": timing.delta_t3,
            "mirror_delay_ns": timing.mirror_delay,
            "vodl_passes": timing.vodl_passes,
        },
        pulse={"width_fwhm_ps": width_ps},
        fiber_group_index=group_index,
    )
    return out


def params_from_dict(d: dict, path: str = "", rd: _Reader | None = None) -> DetectorParams | None:
    own = rd is None
    rd = rd or _Reader(d)
    vals = dict(
        dark_yield=rd.num(d, "dark_yield", path, lo=0.0, hi=1.0),
        eta_bob=rd.num(d, "eta_bob", path, lo=0.0, hi=1.0),
        e_det=rd.num(d, "e_det", path, required=False, default=0.0038, lo=0.0, hi=1.0),
        visibility=rd.num(d, "visibility", path, required=False, default=None, lo=0.0, hi=1.0),
        transmittance=rd.num(d, "transmittance", path, required=False, default=1.0, lo=0.0, hi=1.0),
    )
    if own:
        rd.raise_if_any()
    if rd.issues:
        return None
    return DetectorParams(**vals)


def source_from_dict(d: dict, path: str, rd: _Reader) -> SourceModel | None:
    kind = rd.choice(d, "kind", path, lambda v: {"single_photon": "sp", "weak_coherent": "wcp"}[str(v)])
    if kind == "wcp":
        mu = rd.num(d, "mu", path, lo=0.0, lo_open=True)
        return SourceModel.weak_coherent(mu) if mu is not None else None
    if kind == "sp":
        return SourceModel.single_photon()
    return None


def attack_from_dict(d: dict, path: str, rd: _Reader, group_index: float) -> AttackConfig | None:
    atype = rd.choice(d, "attack_type", path, _enum(AttackType))
    if isinstance(d, dict) and "vodl_delay_ns" in d:
        delay = rd.num(d, "vodl_delay_ns", path, lo=0.0)
    else:
        length = rd.num(d, "vodl_length_m", path, lo=0.0)
        delay = delay_from_fiber_length(length, group_index) if length is not None else None
    pol = rd.choice(d, "polarization", path, _enum(Polarization), required=False, default=Polarization.ORTHOGONAL)
    basis = rd.choice(d, "eve_basis", path, EveBasis.parse, required=False, default=EveBasis.BASE1)
    if atype is None or delay is None or pol is None or basis is None:
        return None
    return AttackConfig(atype, delay, pol, basis)


def attack_to_dict(cfg: AttackConfig) -> dict:
    return {
        "attack_type": cfg.attack_type.value,
        "vodl_delay_ns": cfg.vodl_delay,
        "polarization": cfg.polarization.value,
        "eve_basis": cfg.eve_basis.value,
    }


@dataclass(frozen=True)
class Session:
    """One delay-line setting of an experiment, producing one count table."""

    label: str
    attack: AttackConfig
    params: DetectorParams
    eavesdropper: bool = True


@dataclass(frozen=True)
class Experiment:
    profile: ModulationProfile
    timing: TimingLayout
    source: SourceModel
    sessions: tuple[Session, ...]
    base_params: DetectorParams
    n_gates: int = 10_000_000
    seed: int = 0
    group_index: float = FIBER_GROUP_INDEX
    pulse_width_ps: float = 500.0
    raw: dict = field(default_factory=dict, compare=False, repr=False)


def experiment_from_dict(d: dict, base: Path | None = None, source: str = "") -> Experiment:
    """Build an :class:`Experiment` from a parsed config.

    ``profile`` and ``params`` may be inline objects or references to other
    config files. Each entry of ``sessions`` may override detector fields under
    ``detector``.
    """
    if not isinstance(d, dict):
        raise ConfigError(["<root>: expected an object"], source)
    rd = _Reader(d)
    prof_ref = d.get("profile", "bundled:paper_profile")
    try:
        pdict, pbase, psrc = _resolve(prof_ref, base) if isinstance(prof_ref, str) else (prof_ref, base, "profile")
        profile, timing, width, gi = profile_from_dict(pdict, psrc)
    except ConfigError as exc:
        rd.issues.extend(f"profile.{i}" for i in exc.issues)
        profile = timing = None
        width, gi = 500.0, FIBER_GROUP_INDEX
    except (OSError, json.JSONDecodeError) as exc:
        rd.issues.append(f"profile: cannot load {prof_ref!r}: {exc}")
        profile = timing = None
        width, gi = 500.0, FIBER_GROUP_INDEX
    par_ref = d.get("params", "bundled:paper_params")
    try:
        par = _resolve(par_ref, base)[0] if isinstance(par_ref, str) else par_ref
    except (OSError, json.JSONDecodeError) as exc:
        rd.issues.append(f"params: cannot load {par_ref!r}: {exc}")
        par = {}
    base_params = params_from_dict(par, "params", rd)
    src = source_from_dict(d.get("source", {"kind": "weak_coherent", "mu": 1.39}), "source", rd)
    n_gates = rd.num(d, "n_gates", "", required=False, default=10_000_000, lo=1, integer=True)
    seed = rd.num(d, "seed", "", required=False, default=0, lo=0, integer=True)
    sessions = []
    raw_sessions = d.get("sessions")
    if not isinstance(raw_sessions, list) or not raw_sessions:
        rd.issues.append("sessions: expected a non-empty list")
        raw_sessions = []
    labels = set()
    for i, s in enumerate(raw_sessions):
        p = f"sessions[{i}]"
        label = s.get("label", str(i)) if isinstance(s, dict) else str(i)
        if label in labels:
            rd.issues.append(f"{p}.label: duplicate label {label!r}")
        labels.add(label)
        eve = s.get("eavesdropper", True) if isinstance(s, dict) else True
        if not isinstance(eve, bool):
            rd.issues.append(f"{p}.eavesdropper: expected true or false, got {eve!r}")
            eve = True
        if eve:
            atk = attack_from_dict(s, p, rd, gi)
        else:
            if isinstance(s, dict) and s.get("attack_type", "none") != "none":
                rd.issues.append(f"{p}.attack_type: an eavesdropper-free session cannot carry an attack")
            atk = AttackConfig(AttackType.NONE, 0.0)
        sp = base_params
        over = s.get("detector", {}) if isinstance(s, dict) else {}
        if over and base_params is not None:
            merged = {
                "dark_yield": base_params.dark_yield,
                "eta_bob": base_params.eta_bob,
                "e_det": base_params.e_det,
                "visibility": base_params.visibility,
                "transmittance": base_params.transmittance,
            }
            merged.update(over)
            sp = params_from_dict(merged, f"{p}.detector", rd)
        if atk is not None and sp is not None:
            if profile is not None and s.get("check_attack_type", True):
                try:
                    atk.check(profile, timing)
                except DomainError as exc:
                    rd.issues.append(f"{p}.attack_type: {exc}")
            sessions.append(Session(str(label), atk, sp, eve))
    rd.raise_if_any(source)
    return Experiment(profile, timing, src, tuple(sessions), base_params, n_gates, seed, gi, width, d)


def load_experiment(ref: str) -> Experiment:
    try:
        d, base, src = _resolve(ref, None)
    except FileNotFoundError as exc:
        raise ConfigError([f"<file>: {exc}"], ref) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<file>: not valid JSON: {exc}"], ref) from None
    return experiment_from_dict(d, base, src)


def load_profile(ref: str) -> tuple[ModulationProfile, TimingLayout, float, float]:
    d, _, src = _resolve(ref, None)
    return profile_from_dict(d, src)


def load_params(ref: str) -> DetectorParams:
    d, _, _ = _resolve(ref, None)
    return params_from_dict(d)


def with_overrides(exp: Experiment, **kw) -> Experiment:
    return replace(exp, **kw)
