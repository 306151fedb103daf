"""From count tables to phases, QBERs and countermeasure verdicts."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .attack import ERROR_WEIGHTS
from .core import (
    SECURITY_BOUND,
    Bb84State,
    DomainError,
    EveBasis,
    NoDiscriminationError,
    phase_from_counts,
    qber_general,
)
from .io import group_tables
from .montecarlo.models import CountRecord, DetectorParams
from .montecarlo.simulation import records_by_basis


class Verdict(enum.Enum):
    PASS = "Pass"
    ALARM = "Alarm"


def _check_basis(records: Sequence[CountRecord]) -> EveBasis:
    bases = {r.eve_basis for r in records}
    if None in bases:
        raise DomainError("records come from an honest channel, not from Eve")
    if len(bases) != 1:
        raise DomainError(f"records mix Eve bases: {sorted(b.value for b in bases)}")
    if len({r.n_gates for r in records}) != 1:
        raise DomainError("records have different n_gates")
    states = [r.state for r in records]
    if sorted(s.index for s in states) != [0, 1, 2, 3]:
        raise DomainError(f"need one record per state, got {[s.value for s in states]}")
    return bases.pop()


def qber_from_counts(records: Sequence[CountRecord]) -> float:
    """Count-based QBER: Det1 clicks weighted by the per-state error probability."""
    basis = _check_basis(records)
    if basis is EveBasis.BASE0:
        raise DomainError("count-based QBER needs Base1 or Base2 records")
    d1 = np.zeros(4)
    for r in records:
        d1[r.state.index] = r.d1
    total = d1.sum()
    if total == 0:
        raise NoDiscriminationError("no signal: Det1 never clicked")
    return float(np.dot(ERROR_WEIGHTS[basis], d1) / total)


@dataclass(frozen=True)
class PhaseEstimate:
    """Remapped phases (rad) with first-order statistical standard errors."""

    phi_e: tuple[float, ...]
    phi_e_err: tuple[float, ...]
    phi: tuple[float, ...]
    phi_err: tuple[float, ...]
    dark_dominated: tuple[Bb84State, ...] = ()
    unwrapped: tuple[Bb84State, ...] = ()


def _phase_and_error(d1: float, d2: float, n: float, y0: float) -> tuple[float, float, str]:
    """Phase, standard error and a flag ("", "dark-dominated" or "det2-dark")."""
    dark = n * y0
    a, b = d1 - dark, d2 - dark
    var1 = d1 * (1.0 - d1 / n)
    var2 = d2 * (1.0 - d2 / n)
    if a <= 0:
        # one-sigma upper excursion of the clamped estimate
        up = 2.0 * math.atan(math.sqrt(math.sqrt(var1) / b)) if b > 0 else math.pi / 2
        return 0.0, up, "dark-dominated"
    if b <= 0:
        return math.pi, math.pi - 2.0 * math.atan(math.sqrt(a / math.sqrt(var2))) if var2 > 0 else 0.0, "det2-dark"
    phi = phase_from_counts(d1, d2, n, y0)
    x = a / b
    dphi_dx = 1.0 / (math.sqrt(x) * (1.0 + x))
    var_x = var1 / b**2 + (a / b**2) ** 2 * var2
    return phi, dphi_dx * math.sqrt(var_x), ""


def phases_with_uncertainty(base0_records: Sequence[CountRecord], dark_yield: float) -> PhaseEstimate:
    """Remapped phases from Base0 counts.

    Counts only give each phase up to its sign, so a state whose raw phase falls
    below its predecessor's is placed on the ``2 pi - phi`` branch (flagged as
    unwrapped), which keeps the sequence non-decreasing.

    Zero1 is the global reference and is pinned to 0 with zero error. Its residual
    Det1 counts are attributed to imperfect visibility (see :func:`fit_visibility`).
    Errors come from binomial count variance pushed through the atan/sqrt chain.
    Differences combine their two endpoints in quadrature.
    """
    basis = _check_basis(base0_records)
    if basis is not EveBasis.BASE0:
        raise DomainError("phase extraction needs Base0 records")
    by_state = {r.state: r for r in base0_records}
    phi_e, err, dark, unwrapped = [0.0], [0.0], [], []
    for state in Bb84State.ordered()[1:]:
        r = by_state[state]
        p, e, flag = _phase_and_error(r.d1, r.d2, r.n_gates, dark_yield)
        if flag == "dark-dominated":
            dark.append(state)
        # interference fixes the phase only up to its sign; pick the branch that keeps phases ordered
        if p < phi_e[-1] and 2.0 * math.pi - p >= phi_e[-1]:
            p = 2.0 * math.pi - p
            unwrapped.append(state)
        phi_e.append(p)
        err.append(e)
    diffs = tuple(phi_e[i] - phi_e[i - 1] for i in range(1, 4))
    diff_err = tuple(math.hypot(err[i], err[i - 1]) for i in range(1, 4))
    return PhaseEstimate(tuple(phi_e), tuple(err), diffs, diff_err, tuple(dark), tuple(unwrapped))


def fit_visibility(base0_records: Sequence[CountRecord], dark_yield: float) -> tuple[float, bool]:
    """Interference visibility from the Zero1/Base0 cell, where ideal Det1 counts are dark only.

    Returns ``(V, dark_dominated)``; a dark-dominated cell gives ``V = 1``.
    """
    r = next((r for r in base0_records if r.state is Bb84State.ZERO1 and r.eve_basis is EveBasis.BASE0), None)
    if r is None:
        raise DomainError("no Zero1/Base0 record")
    dark = r.n_gates * dark_yield
    a, b = r.d1 - dark, r.d2 - dark
    if a <= 0:
        return 1.0, True
    if a + b <= 0:
        return 0.0, False
    v = 1.0 - 2.0 * a / (a + b)
    return min(1.0, max(0.0, v)), False


@dataclass
class TableReport:
    label: str
    phi_e_deg: tuple[float, ...]
    phi_e_err_deg: tuple[float, ...]
    phi_deg: tuple[float, ...]
    phi_err_deg: tuple[float, ...]
    qber_base1: float | None
    qber_base2: float | None
    qber_theory_base1: float | None
    qber_theory_base2: float | None
    visibility_fit: float
    totals_spread: float
    flags: list[str] = field(default_factory=list)


@dataclass
class QberReport:
    tables: list[TableReport]
    combined_qber: float | None
    combined_inputs: tuple[tuple[str, str], ...]
    security_bound: float = SECURITY_BOUND
    flags: list[str] = field(default_factory=list)

    @property
    def below_bound(self) -> bool | None:
        if self.combined_qber is None:
            return None
        return self.combined_qber < self.security_bound

    @property
    def degenerate(self) -> bool:
        return "degenerate" in self.flags

    def table(self, label: str) -> TableReport:
        for t in self.tables:
            if t.label == label:
                return t
        raise KeyError(label)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["below_bound"] = self.below_bound
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        return format_report(self)


def _table_report(label: str, records: Sequence[CountRecord], params: DetectorParams) -> TableReport:
    have = {(r.state, r.eve_basis) for r in records}
    missing = [f"{s.value}/{b.value}" for s in Bb84State.ordered() for b in EveBasis if (s, b) not in have]
    if missing:
        raise DomainError(f"table {label!r} is incomplete; missing cells: {', '.join(missing)}")
    flags = []
    base0 = records_by_basis(records, EveBasis.BASE0)
    est = phases_with_uncertainty(base0, params.dark_yield)
    if est.dark_dominated:
        flags.append("dark-dominated:" + ",".join(s.value for s in est.dark_dominated))
    if est.unwrapped:
        flags.append("unwrapped:" + ",".join(s.value for s in est.unwrapped))
    vis, vis_dark = fit_visibility(base0, params.dark_yield)
    if vis_dark:
        flags.append("visibility-dark-dominated")
    qb = {}
    for basis in (EveBasis.BASE1, EveBasis.BASE2):
        try:
            qb[basis] = qber_from_counts(records_by_basis(records, basis))
        except NoDiscriminationError:
            qb[basis] = None
            flags.append(f"no-signal:{basis.value}")
    try:
        th1, th2 = qber_general(*[min(max(p, 0.0), math.pi) for p in est.phi])
    except NoDiscriminationError:
        th1 = th2 = None
    if th1 is None or all(p == 0 for p in est.phi):
        flags.append("degenerate")
    totals = np.array([r.total for r in records], dtype=float)
    spread = float((totals.max() - totals.min()) / totals.mean()) if totals.mean() > 0 else 0.0
    deg = tuple(math.degrees(x) for x in est.phi_e)
    return TableReport(
        label=label,
        phi_e_deg=deg,
        phi_e_err_deg=tuple(math.degrees(x) for x in est.phi_e_err),
        phi_deg=tuple(math.degrees(x) for x in est.phi),
        phi_err_deg=tuple(math.degrees(x) for x in est.phi_err),
        qber_base1=qb[EveBasis.BASE1],
        qber_base2=qb[EveBasis.BASE2],
        qber_theory_base1=th1,
        qber_theory_base2=th2,
        visibility_fit=vis,
        totals_spread=spread,
        flags=flags,
    )


def full_report(records: Iterable[CountRecord], params: DetectorParams | None = None) -> QberReport:
    """Analyse one or more 12-cell tables (split by their ``table`` label).

    The combined QBER averages the lowest Base1 QBER and the lowest Base2 QBER
    across tables. Those two configurations are what Eve mixes with bit-balanced
    probabilities.
    """
    params = params or DetectorParams()
    grouped = group_tables(records)
    if not grouped:
        raise DomainError("no records")
    tables = [_table_report(label, recs, params) for label, recs in grouped.items()]
    flags = []
    if any("degenerate" in t.flags for t in tables):
        flags.append("degenerate")
    picks = []
    for attr, basis in (("qber_base1", EveBasis.BASE1), ("qber_base2", EveBasis.BASE2)):
        cands = [(getattr(t, attr), i) for i, t in enumerate(tables) if getattr(t, attr) is not None]
        if cands:
            q, i = min(cands)
            picks.append((q, tables[i].label, basis.value))
    if len(picks) == 2:
        combined = (picks[0][0] + picks[1][0]) / 2
        inputs = tuple((lab, b) for _, lab, b in picks)
    else:
        combined, inputs = None, ()
    return QberReport(tables, combined, inputs, flags=flags)


def _pct(x: float | None) -> str:
    return "n/a" if x is None else f"{100 * x:.1f}%"


def format_report(report: QberReport) -> str:
    lines = []
    for t in report.tables:
        name = t.label or "(unlabelled)"
        lines.append(f"Table {name}")
        states = [s.value for s in Bb84State.ordered()]
        for s, p, e in zip(states, t.phi_e_deg, t.phi_e_err_deg):
            lines.append(f"  phi_E[{s}] = {p:6.2f} deg +/- {e:.2f} (stat)")
        for i, (p, e) in enumerate(zip(t.phi_deg, t.phi_err_deg), start=1):
            lines.append(f"  phi_{i} = {p:6.2f} deg +/- {e:.2f} (stat)")
        lines.append(f"  visibility = {t.visibility_fit:.4f}")
        lines.append(f"  QBER Base1 (counts) = {_pct(t.qber_base1)}   theory = {_pct(t.qber_theory_base1)}")
        lines.append(f"  QBER Base2 (counts) = {_pct(t.qber_base2)}   theory = {_pct(t.qber_theory_base2)}")
        lines.append(f"  D1+D2 spread = {100 * t.totals_spread:.1f}%")
        if t.flags:
            lines.append(f"  flags: {', '.join(t.flags)}")
    if report.combined_qber is not None:
        src = " + ".join(f"{lab or '-'}:{b}" for lab, b in report.combined_inputs)
        verdict = "below" if report.below_bound else "NOT below"
        lines.append(f"Combined QBER ({src}) = {_pct(report.combined_qber)}")
        lines.append(f"  {verdict} the {100 * report.security_bound:.1f}% security bound")
    if report.flags:
        lines.append(f"flags: {', '.join(report.flags)}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class HonestReport:
    label: str
    qber: float
    security_bound: float = SECURITY_BOUND
    eavesdropper: bool = False

    @property
    def below_bound(self) -> bool:
        return self.qber < self.security_bound

    def to_text(self) -> str:
        return (
            f"Honest channel {self.label or '(unlabelled)'}\n"
            f"  QBER = {_pct(self.qber)} ({'below' if self.below_bound else 'NOT below'} "
            f"the {100 * self.security_bound:.1f}% bound), eavesdropper: no\n"
        )


def honest_qber(records: Sequence[CountRecord]) -> float:
    """Sifted QBER of Bob's own measurements; double clicks are discarded."""
    err = good = 0
    for r in records:
        if r.eve_basis is not None:
            raise DomainError("honest QBER needs eavesdropper-free records")
        wrong, right = (r.d1, r.d2) if r.state.bit == 0 else (r.d2, r.d1)
        err += wrong - r.d_both
        good += right - r.d_both
    if err + good <= 0:
        raise NoDiscriminationError("no single-click events")
    return err / (err + good)


def countermeasure_timing(observed_dt: float, expected_dt: float, tolerance: float) -> Verdict:
    """Alarm when the reference-signal separation drifts beyond ``tolerance`` (ns)."""
    if not tolerance > 0:
        raise DomainError(f"tolerance must be > 0, got {tolerance!r}")
    return Verdict.ALARM if abs(observed_dt - expected_dt) > tolerance else Verdict.PASS


@dataclass(frozen=True)
class StateStatsResult:
    verdict: Verdict
    p_value: float
    statistic: float


def countermeasure_state_stats(histogram: Sequence[int], significance: float = 0.01) -> StateStatsResult:
    """Chi-square test of the received-state histogram against a uniform four-state source."""
    h = np.asarray(histogram, dtype=float)
    if h.shape != (4,) or np.any(h < 0):
        raise DomainError("histogram needs four non-negative counts")
    if h.sum() <= 0:
        raise DomainError("histogram is empty")
    if not 0.0 < significance < 1.0:
        raise DomainError(f"significance must lie in (0, 1), got {significance!r}")
    res = stats.chisquare(h)
    p = float(res.pvalue)
    return StateStatsResult(Verdict.ALARM if p < significance else Verdict.PASS, p, float(res.statistic))
