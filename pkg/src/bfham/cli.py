"""Command-line interface: ``bfham analyze | bracket | verify``.

Exit codes: 0 success, 1 verification mismatch, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import jsonschema

from .analysis import Analysis, classify_constraints, count_dof
from .checks import (
    Check,
    check_brackets,
    check_classification,
    check_dof,
    check_gauge,
    check_hamiltonian,
    check_reducibilities,
    swap_exhibit,
)
from .dsl import DSLError, ModelDef, parse_model, validate_model
from .expr import StructureError, render
from .models import BUILTINS, Fixture, builtin, fixture
from .oracle import check_matrix
from .phase_space import localize, placeholders
from .report import Options, build_report, render_text, schema, to_json

TWINS = {"second_chern": "euler", "euler": "second_chern"}
ORACLE_LATTICE = {"bf_ym": 3, "martellini": 3}


class UsageError(Exception):
    """Bad input: reported on stderr with exit code 2."""


def load_model(ref: str) -> tuple[ModelDef, str | None]:
    """``builtin:NAME`` or a path; returns the model and the builtin name if any."""
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        if name not in BUILTINS:
            raise UsageError(f"unknown built-in model {name!r}; available: {', '.join(BUILTINS)}")
        return builtin(name), name
    path = Path(ref)
    if not path.is_file():
        raise UsageError(f"file not found: {ref}")
    try:
        m = parse_model(path.read_text(encoding="utf-8"))
    except DSLError as exc:
        raise UsageError(f"{ref}:{exc.line}:{exc.col}: {exc.message}") from exc
    except UnicodeDecodeError as exc:
        raise UsageError(f"{ref}: not UTF-8 text") from exc
    diags = validate_model(m)
    if diags:
        raise UsageError("\n".join(f"{ref}:{d}" for d in diags))
    return m, None


def _load_fixture(name: str, path: str | None) -> Fixture:
    if path is None:
        return fixture(name)
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise UsageError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if name not in data.get("models", {}):
        raise UsageError(f"{path}: no fixture for model {name!r}")
    return Fixture(model=name, **data["models"][name])


def fixture_checks(an: Analysis, fx: Fixture) -> list[Check]:
    rep = classify_constraints(an)
    out = check_brackets(an, fx)
    out.append(check_classification(rep, fx))
    out.append(check_reducibilities(an, rep, fx))
    out.append(check_dof(count_dof(an, rep), fx))
    out += check_hamiltonian(an, fx)
    out += check_gauge(an, rep, fx)
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_analyze(args) -> int:
    m, name = load_model(args.model)
    opts = Options(
        convention=args.sign_convention,
        oracle=args.oracle == "on",
        oracle_seeds=args.oracle_seeds,
        lattice=args.lattice,
        group_n=args.group_n,
    )
    fx = fixture(name) if name else None
    twin = builtin(TWINS[name]) if name in TWINS else None
    report, an = build_report(m, opts, fx, source=args.model, twin=twin)
    status = 0
    if fx is not None:
        checks = fixture_checks(an, fx)
        report["fixture_checks"] = [c.as_dict() for c in checks]
        status = 0 if all(c.ok for c in checks) else 1
    if "oracle" in report and not report["oracle"]["passed"]:
        status = 1
    jsonschema.validate(report, schema())
    text = to_json(report) if args.format == "json" else render_text(report)
    if args.format == "text" and "fixture_checks" in report:
        bad = [c for c in report["fixture_checks"] if not c["ok"]]
        text += f"\nfixture checks: {len(report['fixture_checks']) - len(bad)} passed, {len(bad)} failed\n"
        text += "".join(f"  FAIL {c['name']}: {c['detail']}\n" for c in bad)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return status


def cmd_bracket(args) -> int:
    m, _ = load_model(args.model)
    an = Analysis(m, args.sign_convention)
    labels = m.labels
    for lab in (args.a, args.b):
        if lab not in labels:
            raise UsageError(f"unknown constraint {lab!r}; available: {', '.join(labels)}")
    raw = an.bracket(args.a, args.b)
    res = an.entry(args.a, args.b)
    ca, cb = an.constraint(args.a), an.constraint(args.b)
    print(f"{{{args.a}[{an.lam}], {args.b}[{an.mu}]}}")
    print(f"  smeared:    {render(raw.body) or '0'}")
    if not raw.is_zero():
        kernel = localize(raw, placeholders(ca.slots, "x"), placeholders(cb.slots, "y"))
        print(f"  localized:  {render(kernel)}")
    print(f"  weakly:     {render(res.combination()) or '0'}")
    for k, v in sorted(res.coefficients.items()):
        print(f"    on {k}: {render(v)}")
    print(f"  remainder:  {render(res.remainder.body) or '0'}")
    print(f"  {'first-class pair (weakly zero)' if res.weakly_zero else 'not weakly zero'}")
    return 0


def cmd_verify(args) -> int:
    names = list(BUILTINS) if not args.only else [n.strip() for n in args.only.split(",") if n.strip()]
    unknown = [n for n in names if n not in BUILTINS]
    if unknown:
        raise UsageError(f"unknown built-in model(s) {unknown}; available: {', '.join(BUILTINS)}")
    rows: list[tuple[str, Check]] = []
    analyses: dict[str, Analysis] = {}
    for name in names:
        an = Analysis(builtin(name))
        analyses[name] = an
        fx = _load_fixture(name, args.fixtures)
        checks = fixture_checks(an, fx)
        if args.oracle == "on" and args.oracle_seeds > 0:
            second = classify_constraints(an).second_class
            o = check_matrix(an, L=ORACLE_LATTICE.get(name, 4), N=2, seeds=range(args.oracle_seeds),
                             second_class=second)
            detail = f"max rel err {o.max_error:.2e} over {len(o.errors)} entries x {args.oracle_seeds} seeds"
            if o.rank is not None:
                detail += f"; rank margin {o.rank.margin:.2e}"
            checks.append(Check("oracle", o.passed, detail))
        rows += [(name, c) for c in checks]
    if "second_chern" in analyses and "euler" in analyses:
        s = swap_exhibit(analyses["second_chern"], analyses["euler"])
        ok = s["second_chern"]["closes_on"] == ["psi"] and s["euler"]["closes_on"] == ["phi"]
        rows.append(("euler", Check("phi-psi closure swap", ok,
                                    f"second_chern -> {s['second_chern']['closes_on']}, euler -> {s['euler']['closes_on']}")))
    failed = [r for r in rows if not r[1].ok]
    if args.format == "json":
        out = [{"model": n, **c.as_dict()} for n, c in rows]
        sys.stdout.write(json.dumps({"checks": out, "passed": not failed}, indent=2, sort_keys=True) + "\n")
    else:
        width = max(len(c.name) for _, c in rows)
        for n, c in rows:
            print(f"{'PASS' if c.ok else 'FAIL'}  {n:<13} {c.name:<{width}}  {c.detail if not c.ok or c.name in ('oracle', 'dof') else ''}".rstrip())
        print(f"\n{len(rows) - len(failed)} passed, {len(failed)} failed")
    return 1 if failed else 0


def cmd_schema(args) -> int:
    sys.stdout.write(json.dumps(schema(), indent=1) + "\n")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _positive(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bfham", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    conv = dict(choices=("printed", "kinetic"), default=None, dest="sign_convention",
                help="symplectic convention (default: the model's own)")

    a = sub.add_parser("analyze", help="full constraint analysis of a model")
    a.add_argument("model", help="builtin:NAME or a model file path")
    a.add_argument("--format", choices=("json", "text"), default="text")
    a.add_argument("--oracle", choices=("on", "off"), default="off")
    a.add_argument("--oracle-seeds", type=_positive, default=5)
    a.add_argument("--lattice", type=int, default=4)
    a.add_argument("--group-n", type=int, default=2)
    a.add_argument("--sign-convention", **conv)
    a.add_argument("--output", "-o", help="write the report to a file")
    a.set_defaults(fn=cmd_analyze)

    b = sub.add_parser("bracket", help="one smeared bracket and its weak projection")
    b.add_argument("model")
    b.add_argument("a")
    b.add_argument("b")
    b.add_argument("--sign-convention", **conv)
    b.set_defaults(fn=cmd_bracket)

    v = sub.add_parser("verify", help="check every builtin against its fixture and the oracle")
    v.add_argument("--only", help="comma-separated builtin names")
    v.add_argument("--oracle", choices=("on", "off"), default="on")
    v.add_argument("--oracle-seeds", type=_positive, default=5)
    v.add_argument("--fixtures", help="alternative fixtures.json")
    v.add_argument("--format", choices=("json", "text"), default="text")
    v.set_defaults(fn=cmd_verify)

    s = sub.add_parser("schema", help="print the JSON report schema")
    s.set_defaults(fn=cmd_schema)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "lattice", 4) < 2 or getattr(args, "group_n", 2) < 2:
        parser.error("--lattice and --group-n must be at least 2")
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except StructureError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
