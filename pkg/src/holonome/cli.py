"""Command-line entry point.

Every subcommand writes JSON or CSV to stdout (or ``--output``). The exit
status is EXIT_OK or EXIT_FAIL for the check itself; bad arguments give
EXIT_USAGE. A ``--config`` JSON file may supply any flag, keyed by its long
name.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fault_injection, gate_programs, holonomy, schedules
from .codes import CodeSpec, build_bacon_shor

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_GATE_NAMES = {
    "x": "X", "y": "Y", "z": "Z", "h": "H", "s": "S", "sdg": "Sdg", "t": "T_pi8", "pi8": "T_pi8",
    "t_pi8": "T_pi8", "tdg": "Tdg", "cnot": "CNOT", "cnot_xform": "CNOT_xform", "cond(x)": "COND(X)",
    "cat_prep": "cat_prep", "cat_parity": "cat_parity", "toffoli": "toffoli_on_cat",
    "toffoli_on_cat": "toffoli_on_cat",
}


class UsageError(Exception):
    pass


@dataclass
class ExperimentConfig:
    command: str
    code: str = "physical"
    schedule: str = "linear"
    ratios: list = field(default_factory=list)
    samples: int = 8193
    tol: float = 1e-8
    out: str = "json"
    output: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.tol <= 0:
            raise UsageError("tolerances must be positive")
        if self.samples < 3:
            raise UsageError("samples must be at least 3")


def complex_pairs(m) -> list:
    """Row-major [re, im] pairs."""
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.atleast_2d(np.asarray(m))]


def load_code(selector: str) -> CodeSpec | None:
    if selector in ("physical", "none"):
        return None
    if selector == "bacon-shor-9":
        return build_bacon_shor()
    if selector.startswith("file:"):
        return CodeSpec.from_json(Path(selector[5:]).read_text())
    raise UsageError(f"unknown code selector {selector!r}")


def _gate(name: str) -> str:
    try:
        return _GATE_NAMES[name.lower()]
    except KeyError:
        raise UsageError(f"unknown gate {name!r}") from None


def build_program(gate: str, code: CodeSpec | None) -> gate_programs.PathProgram:
    g = _gate(gate)
    if code is None:
        return gate_programs.compile(g)
    if g in ("X", "Y", "Z", "H"):
        return gate_programs.bs_encoded(g, code)
    if g == "CNOT":
        return gate_programs.bs_transversal_cnot(code)
    raise UsageError(f"gate {gate!r} has no encoded program for this code")


def _emit(cfg: ExperimentConfig, text: str) -> None:
    if cfg.output:
        Path(cfg.output).write_text(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


# subcommands ----------------------------------------------------------------------

def cmd_verify_gate(args, cfg: ExperimentConfig) -> int:
    program = build_program(args.gate, load_code(cfg.code))
    ratios = cfg.ratios if args.mode == "finite-T" else []
    if args.mode == "finite-T" and not ratios:
        raise UsageError("finite-T mode needs --T")
    rep = gate_programs.verify(program, ratios)
    doc = {
        "gate": program.name, "mode": args.mode, "fidelity": rep.fidelity,
        "stage_fidelities": list(rep.stage_fidelities), "max_weight": rep.max_weight,
        "finite_T": {repr(k): v for k, v in rep.finite_T.items()}, "whole_program": rep.whole_program,
    }
    _emit(cfg, _json(doc))
    ok = rep.fidelity > 1 - cfg.tol
    return EXIT_OK if ok else EXIT_FAIL


def cmd_holonomy(args, cfg: ExperimentConfig) -> int:
    if args.gate.lower() != "z":
        raise UsageError("only the Z-gate loop has closed-form frames")
    res = holonomy.z_gate_holonomy(args.interp, cfg.samples)
    phases = res.holonomy.phases()
    doc = {
        "interp": args.interp, "samples": cfg.samples,
        "holonomy": complex_pairs(res.holonomy.matrix),
        "phases": [float(p) for p in phases],
        "berry_phases": complex_pairs(res.berry_phases),
    }
    _emit(cfg, _json(doc))
    want = np.array([np.pi / 2, 3 * np.pi / 2])
    return EXIT_OK if np.max(np.abs(phases - want)) < max(cfg.tol, 1e-6) else EXIT_FAIL


def cmd_sweep(args, cfg: ExperimentConfig) -> int:
    kind = schedules.Schedule(cfg.schedule).kind
    if not cfg.ratios:
        raise UsageError("--ratios is required")
    rows = []
    for r in cfg.ratios:
        m = schedules.path_metrics(kind, float(r))
        rows.append([cfg.schedule, float(r), m.delta, m.gap_min, m.ratio])
    _emit(cfg, _csv(["schedule", "T_over_Td", "delta", "gap_min", "ratio"], rows))
    return EXIT_OK


def cmd_fault_scan(args, cfg: ExperimentConfig) -> int:
    code = load_code(cfg.code)
    if code is None:
        raise UsageError("fault-scan needs a code")
    program = build_program(args.gate, code)
    scan = fault_injection.fault_scan(program, code, fractions=args.fractions, seed=cfg.seed,
                                      tol=max(cfg.tol, 1e-6))
    rows = []
    for rep in scan.reports:
        ev = rep.events[0]
        rows.append([ev.qubit, ev.pauli, ev.segment, float(ev.fraction),
                     rep.logical_fidelity_after_recovery, "pass" if rep.verdict else "fail"])
    _emit(cfg, _csv(["qubit", "pauli", "segment", "fraction", "fidelity", "verdict"], rows))
    return EXIT_OK if scan.passed else EXIT_FAIL


def cmd_weight_audit(args, cfg: ExperimentConfig) -> int:
    if args.program:
        program = gate_programs.program_from_json(Path(args.program).read_text())
    elif args.gate:
        program = build_program(args.gate, load_code(cfg.code))
    else:
        raise UsageError("weight-audit needs --program or --gate")
    audit = gate_programs.weight_audit(program)
    ok = args.budget is None or audit.overall <= args.budget
    _emit(cfg, _json({"program": program.name, "per_segment": list(audit.per_segment),
                      "max_weight": audit.overall, "budget": args.budget, "passed": ok}))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_toffoli(args, cfg: ExperimentConfig) -> int:
    chk = gate_programs.toffoli_identity_check(min(cfg.tol, 1e-12))
    _emit(cfg, _json({"max_abs_dev": max(chk.flip_identity_dev, chk.word_dev),
                      "flip_identity_dev": chk.flip_identity_dev, "word_dev": chk.word_dev}))
    return EXIT_OK if chk.passed else EXIT_FAIL


# parser -------------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="holonome", description="Holonomic gate compilation and verification.")
    p.add_argument("--config", help="JSON file whose keys mirror the long flags")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, out="json"):
        sp.add_argument("--out", choices=("json", "csv"), default=out, help="output format")
        sp.add_argument("--output", help="write here instead of stdout")
        sp.add_argument("--tol", type=float, default=1e-8)
        sp.add_argument("--seed", type=int, default=0)
        return sp

    v = common(sub.add_parser("verify-gate", help="exact or finite-T fidelity of a compiled gate"))
    v.add_argument("--gate", required=True)
    v.add_argument("--code", default="physical")
    v.add_argument("--mode", choices=("exact", "finite-T"), default="exact")
    v.add_argument("--T", dest="ratios", type=_floats, default=[], help="segment duration(s) in units of T_d")
    v.set_defaults(func=cmd_verify_gate)

    h = common(sub.add_parser("holonomy", help="Z-gate loop holonomy and Berry phases"))
    h.add_argument("--gate", default="z")
    h.add_argument("--interp", choices=holonomy.INTERPOLATIONS, default="linear")
    h.add_argument("--samples", type=int, default=8193)
    h.set_defaults(func=cmd_holonomy)

    s = common(sub.add_parser("sweep-adiabatic", help="leakage versus slowdown"), out="csv")
    s.add_argument("--schedule", choices=("linear", "trig", "bump"), default="linear")
    s.add_argument("--ratios", type=_floats, default=[])
    s.set_defaults(func=cmd_sweep)

    f = common(sub.add_parser("fault-scan", help="single-fault sweep with ideal recovery"), out="csv")
    f.add_argument("--gate", required=True)
    f.add_argument("--code", default="bacon-shor-9")
    f.add_argument("--fractions", type=_floats, default=list(fault_injection.DEFAULT_FRACTIONS))
    f.set_defaults(func=cmd_fault_scan)

    w = common(sub.add_parser("weight-audit", help="largest Hamiltonian weight of a program"))
    w.add_argument("--program", help="PathProgram JSON file")
    w.add_argument("--gate")
    w.add_argument("--code", default="physical")
    w.add_argument("--budget", type=int)
    w.set_defaults(func=cmd_weight_audit)

    t = common(sub.add_parser("toffoli-check", help="Toffoli word and C-NOT flip identities"))
    t.set_defaults(func=cmd_toffoli, tol=1e-12)
    return p


def _apply_config(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    try:
        doc = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    defaults = {k.replace("-", "_"): v for k, v in doc.items() if k != "command"}
    if "T" in defaults:
        defaults["ratios"] = defaults.pop("T")
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            sp.set_defaults(**defaults)
            for act in sp._actions:
                if act.dest in defaults:
                    act.required = False


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        ratios = args.ratios if hasattr(args, "ratios") else []
        if isinstance(ratios, (int, float)):
            ratios = [float(ratios)]
        cfg = ExperimentConfig(
            command=args.command, code=getattr(args, "code", "physical"),
            schedule=getattr(args, "schedule", "linear"), ratios=list(ratios),
            samples=getattr(args, "samples", 8193), tol=args.tol, out=args.out,
            output=args.output, seed=args.seed)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"holonome: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except gate_programs.CompilationError as exc:
        print(f"holonome: compilation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
