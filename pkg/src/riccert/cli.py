"""Command-line front end driven by TOML problem files.

Exit codes: 0 success, 1 refuted or verification failure, 2 inconclusive,
3 input error, 4 numerical failure (stalled integration).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import tomli

from . import __version__
from .criteria import (CERTIFIED, REFUTED, THEOREMS, Comparison, Problem, certify)
from .errors import (EmptyRegionError, MissingComparisonError, ParseError, PreconditionError,
                     RiccertError, StalledError, UnsupportedTheoremError)
from .expr import parse
from .harness import sample_admissible_ics, verify_conclusion
from .ode import STALLED, integrate, sample
from .quadrature import uniform_grid
from .riccati import RiccatiCoefficients, assemble_field
from .transform import LinearSystem3

EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_INPUT, EXIT_STALLED = 0, 1, 2, 3, 4
RICCATI_KEYS = ("a", "b", "c", "d", "e")
SYSTEM_KEYS = tuple(f"a{j}{k}" for j in (1, 2, 3) for k in (1, 2, 3))


class InputError(Exception):
    """Problem file or flag validation failure (exit code 3)."""


@dataclass
class ProblemConfig:
    kind: str
    formulas: dict
    span: tuple
    horizon: float
    partition: Optional[list] = None
    theorems: list = field(default_factory=list)
    theorem_params: dict = field(default_factory=dict)
    grid_n: int = 2001
    rtol: float = 1e-10
    atol: float = 1e-12
    condition_tol: float = 1e-9
    d_mode: str = "corrected"
    ics: Optional[list] = None
    ic_count: int = 20
    states: Optional[list] = None
    comparisons: dict = field(default_factory=dict)
    out_dir: Optional[str] = None
    source: Optional[str] = None

    def coefficients(self) -> RiccatiCoefficients:
        return RiccatiCoefficients.of(**{k: self.formulas.get(k, "0") for k in RICCATI_KEYS})

    def system(self) -> LinearSystem3:
        return LinearSystem3.from_dict({k: v for k, v in self.formulas.items()})

    def problem(self) -> Problem:
        if self.kind == "system3":
            return Problem.system3(self.system(), self.span, partition=self.partition)
        return Problem.riccati(self.coefficients(), self.span, partition=self.partition,
                               comparisons=self.comparisons)

    def params(self) -> dict:
        p = {"grid_n": self.grid_n, "tol": self.condition_tol, "d_mode": self.d_mode}
        if self.partition:
            p["partition"] = self.partition
        p.update(self.theorem_params)
        return p


def _section(doc, name, required=False):
    sec = doc.get(name)
    if sec is None:
        if required:
            raise InputError(f"missing section [{name}]")
        return {}
    if not isinstance(sec, dict):
        raise InputError(f"[{name}] must be a table")
    return sec


def _number(sec, key, default, kind=float, section=""):
    if key not in sec:
        return default
    try:
        return kind(sec[key])
    except (TypeError, ValueError):
        raise InputError(f"{section}.{key} must be a number") from None


def _formula(text, where):
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return str(text)
    if not isinstance(text, str):
        raise InputError(f"{where} must be a formula string or a number")
    try:
        parse(text)
    except ParseError as exc:
        raise InputError(f"{where}: {exc}") from None
    return text


def load_problem(path) -> ProblemConfig:
    """Parse and validate a problem file; raises :class:`InputError`."""
    path = Path(path)
    try:
        doc = tomli.loads(path.read_text())
    except FileNotFoundError:
        raise InputError(f"problem file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise InputError(f"invalid TOML in {path}: {exc}") from None

    prob = _section(doc, "problem", required=True)
    kind = prob.get("kind", "riccati")
    if kind not in ("riccati", "system3"):
        raise InputError(f"problem.kind must be 'riccati' or 'system3', got {kind!r}")
    span = prob.get("span")
    if (not isinstance(span, list) or len(span) != 2
            or not all(isinstance(x, (int, float)) for x in span)):
        raise InputError("problem.span must be a two-element numeric list [t0, t1]")
    span = (float(span[0]), float(span[1]))
    if not span[1] > span[0]:
        raise InputError("problem.span must be nonempty (t1 > t0)")
    horizon = _number(prob, "horizon", span[1], section="problem")
    partition = prob.get("partition")
    if partition is not None:
        if not isinstance(partition, list) or len(partition) < 2:
            raise InputError("problem.partition must be a list of at least two points")
        partition = [float(x) for x in partition]

    coeffs = _section(doc, "coefficients", required=True)
    keys = RICCATI_KEYS if kind == "riccati" else SYSTEM_KEYS
    unknown = sorted(set(coeffs) - set(keys))
    if unknown:
        raise InputError(f"unknown coefficient key(s) for kind {kind}: {', '.join(unknown)}")
    if kind == "riccati" and "a" not in coeffs:
        raise InputError("missing coefficient key 'a'")
    if kind == "system3":
        for need in ("a12", "a23"):
            if need not in coeffs:
                raise InputError(f"missing coefficient key {need!r}")
    formulas = {k: _formula(v, f"coefficients.{k}") for k, v in coeffs.items()}

    num = _section(doc, "numerics")
    d_mode = num.get("d_mode", "corrected")
    if d_mode not in ("paper", "corrected"):
        raise InputError("numerics.d_mode must be 'paper' or 'corrected'")
    cfg = ProblemConfig(
        kind, formulas, span, horizon, partition,
        grid_n=_number(num, "grid_n", 2001, int, "numerics"),
        rtol=_number(num, "rtol", 1e-10, section="numerics"),
        atol=_number(num, "atol", 1e-12, section="numerics"),
        condition_tol=_number(num, "condition_tol", 1e-9, section="numerics"),
        d_mode=d_mode, source=str(path))

    th = _section(doc, "theorems")
    ids = th.get("ids", [])
    if not isinstance(ids, list) or not all(isinstance(x, str) for x in ids):
        raise InputError("theorems.ids must be a list of theorem identifiers")
    for tid in ids:
        if tid not in THEOREMS:
            raise InputError(f"unknown theorem identifier {tid!r}")
    cfg.theorems = ids
    cfg.theorem_params = {k: v for k, v in th.items() if k != "ids"}

    init = _section(doc, "initial")
    if "ics" in init:
        ics = init["ics"]
        if not isinstance(ics, list) or not all(isinstance(p, list) and len(p) == 2 for p in ics):
            raise InputError("initial.ics must be a list of [y0, dy0] pairs")
        cfg.ics = [(float(a), float(b)) for a, b in ics]
    if "states" in init:
        st = init["states"]
        if not isinstance(st, list) or not all(isinstance(p, list) and len(p) == 3 for p in st):
            raise InputError("initial.states must be a list of [phi, psi, chi] triples")
        cfg.states = [tuple(float(x) for x in p) for p in st]
    cfg.ic_count = _number(init, "count", 20, int, "initial")

    comp = _section(doc, "comparison")
    for key, sec in comp.items():
        if key not in ("y1", "y2") or not isinstance(sec, dict):
            raise InputError("comparison sections must be [comparison.y1] or [comparison.y2]")
        if "solution" not in sec:
            raise InputError(f"comparison.{key}.solution is required")
        sol = _formula(sec["solution"], f"comparison.{key}.solution")
        co_f = {k: _formula(sec.get(k, formulas.get(k, "0")), f"comparison.{key}.{k}") for k in RICCATI_KEYS}
        cfg.comparisons[key] = Comparison.of(RiccatiCoefficients.of(**co_f), sol)

    out = _section(doc, "output")
    cfg.out_dir = out.get("dir")
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) for x in r])
    return buf.getvalue()


class Run:
    def __init__(self, cfg: ProblemConfig, out: Path, argv):
        self.cfg, self.out, self.argv = cfg, out, list(argv)
        self.files = []

    def write(self, name, text):
        _atomic_write(self.out / name, text)
        self.files.append(name)

    def finish(self, command, code):
        manifest = {"command": command, "exit_code": code, "files": sorted(self.files),
                    "problem": self.cfg.source}
        self.write("manifest.json", _json(manifest))
        info = {"argv": self.argv, "version": __version__, "finished_unix": time.time(),
                "python": sys.version.split()[0]}
        _atomic_write(self.out / "run_info.json", _json(info))
        return code


def _aggregate(verdicts) -> int:
    if verdicts and all(v == CERTIFIED for v in verdicts):
        return EXIT_OK
    if any(v == REFUTED for v in verdicts):
        return EXIT_FAIL
    return EXIT_INCONCLUSIVE


def _theorems(cfg):
    if cfg.theorems:
        return cfg.theorems
    return ["T5.1"] if cfg.kind == "system3" else ["T4.1"]


def _certify_all(cfg):
    prob = cfg.problem()
    return [certify(prob, tid, cfg.params()) for tid in _theorems(cfg)]


def cmd_check(run: Run) -> int:
    certs = _certify_all(run.cfg)
    payload = {c.theorem: [ev.to_dict() for ev in c.evidences] for c in certs}
    run.write("evidence.json", _json(payload))
    for c in certs:
        for ev in c.evidences:
            flag = "ok  " if ev.passed else "FAIL"
            print(f"{c.theorem:5s} {flag} {ev.name:28s} min={ev.min_margin:.6g} at t={ev.argmin:.6g}")
    return _aggregate([c.verdict for c in certs])


def cmd_certify(run: Run) -> int:
    certs = _certify_all(run.cfg)
    for c in certs:
        run.write(f"certificate_{c.theorem}.json", _json(c.to_dict()))
        print(f"{c.theorem}: {c.verdict}")
    return _aggregate([c.verdict for c in certs])


def cmd_integrate(run: Run) -> int:
    cfg = run.cfg
    t0, t1 = cfg.span[0], cfg.horizon
    code = EXIT_OK
    if cfg.kind == "riccati":
        ics = cfg.ics or [(0.0, 0.0)]
        field_, header, starts = assemble_field(cfg.coefficients()), ("t", "y", "dy"), ics
    else:
        if not cfg.states:
            raise InputError("integrate on a system3 problem needs initial.states")
        field_, header, starts = cfg.system().field(), ("t", "phi", "psi", "chi"), cfg.states
    summary = []
    for i, s0 in enumerate(starts):
        tr = integrate(field_, s0, (t0, t1), cfg.rtol, cfg.atol,
                       escape_threshold=1e8 if cfg.kind == "riccati" else 1e250)
        t = np.union1d(tr.t, uniform_grid((t0, tr.t_end), 501))
        st = sample(tr, t)
        run.write(f"trajectory_{i}.csv", _csv(header, np.column_stack((t, st))))
        summary.append({"index": i, "initial": list(s0), "status": tr.status, "t_end": tr.t_end,
                        "message": tr.message})
        print(f"trajectory {i}: {tr.status} at t={tr.t_end:.10g}")
        if tr.status == STALLED:
            code = EXIT_STALLED
    run.write("integration.json", _json(summary))
    return code


def _verify(run: Run, verbose=True):
    cfg = run.cfg
    certs = _certify_all(cfg)
    results = []
    for c in certs:
        run.write(f"certificate_{c.theorem}.json", _json(c.to_dict()))
        if c.verdict != CERTIFIED:
            results.append((c, None, None))
            continue
        try:
            ics = cfg.ics if cfg.ics else sample_admissible_ics(c, cfg.ic_count)
        except EmptyRegionError as exc:
            results.append((c, None, str(exc)))
            continue
        rep = verify_conclusion(c, ics, cfg.horizon, rtol=cfg.rtol, atol=cfg.atol)
        run.write(f"verification_{c.theorem}.json", _json(rep.to_dict()))
        results.append((c, rep, None))
    return results


def _verify_code(results) -> int:
    codes = []
    for c, rep, err in results:
        if c.verdict == REFUTED:
            codes.append(EXIT_FAIL)
        elif c.verdict != CERTIFIED:
            codes.append(EXIT_INCONCLUSIVE)
        elif err is not None:
            codes.append(EXIT_FAIL)
        elif rep.stalled:
            codes.append(EXIT_STALLED)
        else:
            codes.append(EXIT_OK if rep.passed else EXIT_FAIL)
    for pref in (EXIT_STALLED, EXIT_FAIL, EXIT_INCONCLUSIVE):
        if pref in codes:
            return pref
    return EXIT_OK


def _line(c, rep, err):
    if rep is None:
        return f"{c.theorem}: {c.verdict}" + (f" ({err})" if err else "")
    state = "verified" if rep.passed else "VERIFICATION FAILED"
    return (f"{c.theorem}: {c.verdict}, {state} on {len(rep.outcomes)} ICs, "
            f"min bound margin {rep.min_margin:.3g}, min nu margin {rep.min_nu_margin:.3g}")


def cmd_verify(run: Run) -> int:
    results = _verify(run)
    for r in results:
        print(_line(*r))
    return _verify_code(results)


def cmd_report(run: Run) -> int:
    results = _verify(run)
    cfg = run.cfg
    lines = [f"problem: {cfg.source}", f"kind: {cfg.kind}", f"span: [{cfg.span[0]}, {cfg.span[1]}]",
             f"horizon: {cfg.horizon}", "coefficients:"]
    lines += [f"  {k} = {v}" for k, v in sorted(cfg.formulas.items())]
    lines.append("results:")
    for c, rep, err in results:
        lines.append("  " + _line(c, rep, err))
        for ev in c.evidences:
            lines.append(f"    [{'pass' if ev.passed else 'fail'}] {ev.name}: min margin {ev.min_margin:.6g} "
                         f"at t={ev.argmin:.6g}")
    code = _verify_code(results)
    lines.append(f"exit code: {code}")
    text = "\n".join(lines) + "\n"
    run.write("summary.txt", text)
    run.write("report.json", _json({
        "certificates": [c.to_dict() for c, _, _ in results],
        "verifications": [rep.to_dict() if rep else None for _, rep, _ in results],
        "exit_code": code}))
    sys.stdout.write(text)
    return code


COMMANDS = {"check": cmd_check, "certify": cmd_certify, "integrate": cmd_integrate,
            "verify": cmd_verify, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="riccert", description="Certify and verify Riccati comparison criteria.")
    ap.add_argument("--version", action="version", version=f"riccert {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("problem", help="TOML problem file")
        sp.add_argument("--grid", type=int, help="grid points per span")
        sp.add_argument("--rtol", type=float)
        sp.add_argument("--atol", type=float)
        sp.add_argument("--horizon", type=float)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--theorem", action="append", help="theorem id (repeatable)")
        sp.add_argument("--d-mode", choices=("paper", "corrected"))
        sp.add_argument("--count", type=int, help="number of sampled initial conditions")
    return ap


def _apply_flags(cfg: ProblemConfig, args):
    if args.grid is not None:
        if args.grid < 2:
            raise InputError("--grid must be at least 2")
        cfg.grid_n = args.grid
    if args.rtol is not None:
        cfg.rtol = args.rtol
    if args.atol is not None:
        cfg.atol = args.atol
    if cfg.rtol <= 0 or cfg.atol <= 0:
        raise InputError("tolerances must be positive")
    if args.horizon is not None:
        cfg.horizon = args.horizon
    if cfg.horizon <= cfg.span[0]:
        raise InputError("horizon must exceed the span start")
    if args.theorem:
        for tid in args.theorem:
            if tid not in THEOREMS:
                raise InputError(f"unknown theorem identifier {tid!r}")
        cfg.theorems = list(args.theorem)
    if args.d_mode:
        cfg.d_mode = args.d_mode
    if args.count is not None:
        cfg.ic_count = args.count


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        cfg = load_problem(args.problem)
        _apply_flags(cfg, args)
        out = Path(args.out or cfg.out_dir or "riccert_out")
        r = Run(cfg, out, argv)
        code = COMMANDS[args.command](r)
        return r.finish(args.command, code)
    except (InputError, ParseError, MissingComparisonError, UnsupportedTheoremError) as exc:
        print(f"riccert: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PreconditionError as exc:
        print(f"riccert: precondition failed: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except StalledError as exc:
        print(f"riccert: integration stalled: {exc}", file=sys.stderr)
        return EXIT_STALLED
    except RiccertError as exc:
        print(f"riccert: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main():
    sys.exit(run())
