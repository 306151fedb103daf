"""Command-line entry point: ``phaseremap <command> ...``.

Exit codes: 0 ok, 1 usage, 2 validation (bad config / CSV / domain), 3 runtime.
Every run that writes files also writes a JSON manifest that ``replay`` can
rerun and check byte for byte.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import io
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import DATA_VERSION, __version__
from .analysis import (
    HonestReport,
    countermeasure_state_stats,
    countermeasure_timing,
    full_report,
    honest_qber,
)
from .config import ConfigError, Experiment, load_experiment, load_params
from .core import SECURITY_BOUND, DomainError, qber_symmetric
from .io import CsvSchemaError, format_counts_csv, group_tables, read_counts_csv
from .montecarlo import _kernels
from .montecarlo.simulation import CELLS_PER_TABLE, run_experiment, run_honest

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2, 3
DEFAULT_EXPERIMENT = "bundled:paper_experiment"
DEFAULT_PARAMS = "bundled:paper_params"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")

    def exit(self, status=0, message=None):
        if message:
            sys.stderr.write(message)
        raise SystemExit(status)


@dataclass
class RunManifest:
    command: str
    argv: list[str]
    seed: int | None
    config: str | None
    config_sha256: str | None
    backend: str | None
    outputs: dict[str, str] = field(default_factory=dict)  # file name -> sha256
    tool_version: str = __version__
    data_version: str = DATA_VERSION
    timestamp: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        d = json.loads(text)
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _config_sha(ref: str | None) -> str | None:
    if ref is None:
        return None
    from .config import bundled_text

    try:
        if ref.startswith("bundled:"):
            name = ref.split(":", 1)[1]
            text = bundled_text(name if name.endswith(".json") else name + ".json")
        else:
            text = Path(ref).read_text(encoding="utf-8")
    except OSError:
        return None
    return _sha256(text.encode())


class _Outputs:
    """Collects output files so they are hashed and listed in the manifest."""

    def __init__(self, directory: Path):
        self.dir = directory
        self.hashes: dict[str, str] = {}

    def write(self, name: str, text: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        path = self.dir / name
        path.write_bytes(data)
        self.hashes[name] = _sha256(data)
        return path


def _write_manifest(args, outs: _Outputs, name: str = "manifest.json", backend: str | None = None) -> None:
    m = RunManifest(
        command=args.command,
        argv=list(args._argv),
        seed=args.seed,
        config=args.config,
        config_sha256=_config_sha(args.config),
        backend=backend,
        outputs=dict(outs.hashes),
        timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    )
    outs.dir.mkdir(parents=True, exist_ok=True)
    (outs.dir / name).write_text(m.to_json(), encoding="utf-8")


# sweep -----------------------------------------------------------------------

def sweep_csv(phi_min: float, phi_max: float, steps: int) -> str:
    if not (0.0 < phi_min < phi_max <= 180.0):
        raise UsageError(f"need 0 < phi-min < phi-max <= 180, got {phi_min}, {phi_max}")
    if steps < 2:
        raise UsageError(f"steps must be >= 2, got {steps}")
    phis = np.linspace(phi_min, phi_max, steps)
    q = qber_symmetric(np.radians(phis))
    buf = io.StringIO()
    buf.write("phi_deg,qber,below_bound\n")
    for p, v in zip(phis, np.atleast_1d(q)):
        buf.write(f"{float(p)!r},{float(v)!r},{int(v < SECURITY_BOUND)}\n")
    return buf.getvalue()


def cmd_sweep(args) -> int:
    text = sweep_csv(args.phi_min, args.phi_max, args.steps)
    if args.output in (None, "-"):
        sys.stdout.write(text)
        return EXIT_OK
    out = Path(args.output)
    outs = _Outputs(out.parent if str(out.parent) else Path("."))
    outs.write(out.name, text)
    _write_manifest(args, outs, name=out.name + ".manifest.json")
    print(f"wrote {out}")
    return EXIT_OK


# simulate / attack -----------------------------------------------------------

def _experiment(args) -> Experiment:
    exp = load_experiment(args.config or DEFAULT_EXPERIMENT)
    if args.seed is not None:
        exp = replace(exp, seed=args.seed)
    if getattr(args, "n_gates", None) is not None:
        if args.n_gates < 1:
            raise UsageError("--n-gates must be >= 1")
        exp = replace(exp, n_gates=args.n_gates)
    return exp


def simulate_experiment(exp: Experiment, backend: str, workers: int = 1) -> list:
    records = []
    for i, sess in enumerate(exp.sessions):
        base = i * CELLS_PER_TABLE
        if sess.eavesdropper:
            records += run_experiment(
                exp.profile, exp.timing, sess.attack, sess.params, exp.source,
                exp.n_gates, exp.seed, base, sess.label, backend, workers,
            )
        else:
            records += run_honest(
                exp.profile, exp.timing, sess.params, exp.source,
                exp.n_gates, exp.seed, base, sess.label, backend,
            )
    return records


def analyze_records(records, params) -> tuple[str, dict]:
    """Text and JSON reports for a mix of attacked and eavesdropper-free tables."""
    grouped = group_tables(records)
    honest = {k: v for k, v in grouped.items() if all(r.eve_basis is None for r in v)}
    attacked = [r for k, v in grouped.items() if k not in honest for r in v]
    text, data = "", {}
    for label, recs in honest.items():
        rep = HonestReport(label, honest_qber(recs))
        text += rep.to_text()
        data.setdefault("honest", []).append({**asdict(rep), "below_bound": rep.below_bound})
    if attacked:
        if any(r.eve_basis is None for r in attacked):
            raise DomainError("a table mixes eavesdropper-free and attacked records")
        rep = full_report(attacked, params)
        text += rep.to_text()
        data["attack"] = rep.to_dict()
    return text, data


def _headline(data: dict) -> str:
    if "attack" in data and data["attack"]["combined_qber"] is not None:
        q = data["attack"]["combined_qber"]
        below = data["attack"]["below_bound"]
        return f"combined QBER = {100 * q:.2f}% ({'below' if below else 'NOT below'} the 20.0% bound)"
    if "honest" in data:
        parts = [f"{h['label']}: QBER = {100 * h['qber']:.2f}% (below bound: {h['below_bound']}, eavesdropper: no)"
                 for h in data["honest"]]
        return "; ".join(parts)
    return "no combined QBER available"


def cmd_simulate(args, analyze: bool = False) -> int:
    exp = _experiment(args)
    backend = _kernels.default_backend()
    records = simulate_experiment(exp, backend, args.workers)
    outs = _Outputs(Path(args.out))
    outs.write("counts.csv", format_counts_csv(records))
    if analyze:
        text, data = analyze_records(records, exp.base_params)
        outs.write("report.txt", text)
        outs.write("report.json", json.dumps(data, indent=2, sort_keys=True) + "\n")
        print(_headline(data))
    _write_manifest(args, outs, backend=backend)
    print(f"wrote {', '.join(sorted(outs.hashes))} and manifest.json to {outs.dir}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    records = read_counts_csv(args.counts)
    params = load_params(args.params)
    text, data = analyze_records(records, params)
    sys.stdout.write(text)
    if args.out:
        outs = _Outputs(Path(args.out))
        outs.write("report.txt", text)
        outs.write("report.json", json.dumps(data, indent=2, sort_keys=True) + "\n")
        _write_manifest(args, outs)
    return EXIT_OK


def cmd_countermeasure(args) -> int:
    if args.check == "timing":
        if args.tolerance <= 0:
            raise UsageError("--tolerance must be > 0")
        v = countermeasure_timing(args.observed_dt, args.expected_dt, args.tolerance)
        print(f"timing check: {v.value} (|{args.observed_dt} - {args.expected_dt}| ns vs tolerance {args.tolerance} ns)")
    else:
        if not 0.0 < args.significance < 1.0:
            raise UsageError("--significance must lie in (0, 1)")
        res = countermeasure_state_stats(args.counts, args.significance)
        print(f"state statistics check: {res.verdict.value} (chi2 = {res.statistic:.4g}, p = {res.p_value:.4g})")
    return EXIT_OK


def _argv_with_out(argv: list[str], new_out: str) -> list[str]:
    out = list(argv)
    for flag in ("--out", "-o", "--output"):
        if flag in out:
            i = out.index(flag)
            out[i + 1] = new_out if flag == "--out" else str(Path(new_out) / Path(out[i + 1]).name)
            return out
    return out


def cmd_replay(args) -> int:
    path = Path(args.manifest)
    try:
        m = RunManifest.from_json(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise DomainError(f"cannot read manifest {path}: {exc}") from None
    if m.command == "replay":
        raise DomainError("cannot replay a replay")
    if m.config_sha256 is not None and _config_sha(m.config) != m.config_sha256:
        raise DomainError(f"config {m.config} changed since the recorded run")
    target = args.out or tempfile.mkdtemp(prefix="phaseremap-replay-")
    argv = _argv_with_out(m.argv, target)
    saved = os.environ.get("PHASEREMAP_BACKEND")
    if m.backend:
        os.environ["PHASEREMAP_BACKEND"] = m.backend
    try:
        code = main(argv)
    finally:
        if saved is None:
            os.environ.pop("PHASEREMAP_BACKEND", None)
        else:
            os.environ["PHASEREMAP_BACKEND"] = saved
    if code != EXIT_OK:
        print(f"replay: rerun exited with {code}", file=sys.stderr)
        return EXIT_RUNTIME
    bad = []
    for name, digest in sorted(m.outputs.items()):
        p = Path(target) / name
        got = _sha256(p.read_bytes()) if p.exists() else None
        status = "identical" if got == digest else "DIFFERS"
        if got != digest:
            bad.append(name)
        print(f"{name}: {status}")
    if bad:
        print(f"replay: {len(bad)} output(s) differ", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"replay: all {len(m.outputs)} output(s) byte-identical ({target})")
    return EXIT_OK


# parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="phaseremap", description="Phase-remapping attack simulator and analysis toolkit.")
    p.add_argument("--version", action="version",
                   version=f"phaseremap {__version__} (bundled data {DATA_VERSION})")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--config", default=None, help=f"experiment config (default {DEFAULT_EXPERIMENT})")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sweep", help="QBER of the symmetric remapping versus phase (deg)")
    s.add_argument("--phi-min", type=float, default=1.0)
    s.add_argument("--phi-max", type=float, default=180.0)
    s.add_argument("--steps", type=int, default=180)
    s.add_argument("-o", "--output", default=None, help="CSV path (default stdout)")

    for name, helptext in (("simulate", "simulate count tables"), ("attack", "simulate and analyse an attack")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--n-gates", type=int, default=None)
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--out", default="phaseremap-out")

    s = sub.add_parser("analyze", help="analyse a counts CSV")
    s.add_argument("counts")
    s.add_argument("--params", default=DEFAULT_PARAMS)
    s.add_argument("--out", default=None)

    s = sub.add_parser("countermeasure", help="run a countermeasure check")
    cm = s.add_subparsers(dest="check", required=True, parser_class=_Parser)
    t = cm.add_parser("timing")
    t.add_argument("--observed-dt", type=float, required=True, help="ns")
    t.add_argument("--expected-dt", type=float, required=True, help="ns")
    t.add_argument("--tolerance", type=float, default=0.1, help="ns")
    t = cm.add_parser("states")
    t.add_argument("counts", type=int, nargs=4, metavar="N")
    t.add_argument("--significance", type=float, default=0.01)

    s = sub.add_parser("replay", help="rerun a manifest and compare outputs")
    s.add_argument("manifest")
    s.add_argument("--out", default=None)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        args._argv = argv
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "attack":
            return cmd_simulate(args, analyze=True)
        if args.command == "analyze":
            return cmd_analyze(args)
        if args.command == "countermeasure":
            return cmd_countermeasure(args)
        return cmd_replay(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CsvSchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConfigError, DomainError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION if isinstance(exc, (FileNotFoundError, json.JSONDecodeError)) else EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
