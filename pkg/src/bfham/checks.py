"""Compare analysis results with the expected values shipped in the fixtures."""

from __future__ import annotations

from dataclasses import dataclass

import sympy

from .analysis import (
    Analysis,
    ClassificationReport,
    DofReport,
    gauge_transform,
    hamiltonian_projection,
    is_zero_mod_identities,
)
from .dsl import parse_expression
from .expr import N, Expression, Field, Index, canonicalize, render, substitute_field
from .models import Fixture
from .phase_space import Param, normal_form


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "ok": self.ok, "detail": self.detail}


def sym(text: str) -> sympy.Expr:
    return sympy.expand(sympy.sympify(str(text).replace("^", "**"), locals={"N": N}))


def equal_mod_identities(a: Expression, b: Expression, constants, params=()) -> bool:
    d = a - b
    if params:
        d = normal_form(d, tuple(params))
    return is_zero_mod_identities(d, constants)


def _params(an: Analysis, a: str, b: str) -> tuple[Param, Param]:
    return Param(an.lam, an.constraint(a).slots), Param(an.mu, an.constraint(b).slots)


def check_brackets(an: Analysis, fx: Fixture) -> list[Check]:
    """Each fixture entry: weakly zero remainder and matching structure functions."""
    out = []
    for key, entry in sorted(fx.brackets.items()):
        a, b = key.split(",")
        lam, mu = _params(an, a, b)
        expected = parse_expression(an.model, entry["expected"], {"lam": (lam.slots, ()), "mu": (mu.slots, ())})
        res = an.entry(a, b)
        got = res.combination()
        ok = res.weakly_zero and equal_mod_identities(got, expected, an.constants, (lam, mu))
        detail = f"got {render(got) or '0'}; expected {entry['expected']}"
        if not res.weakly_zero:
            detail += f"; remainder {render(res.remainder.body)}"
        out.append(Check(f"bracket {{{a},{b}}}", ok, detail))
    return out


def check_classification(rep: ClassificationReport, fx: Fixture) -> Check:
    exp = fx.classification
    ok = rep.first_class == exp["first_class"] and rep.second_class == exp["second_class"]
    return Check(
        "classification", ok,
        f"first {rep.first_class} second {rep.second_class}; expected "
        f"{exp['first_class']} / {exp['second_class']}",
    )


def _leading(rel: Expression, coords: set[str]) -> Expression:
    return canonicalize([t for t in rel.terms if not any(isinstance(f, Field) and f.name in coords for f in t.factors)])


def _proportional(a: Expression, b: Expression) -> bool:
    if a.is_zero() or b.is_zero() or len(a.terms) != len(b.terms):
        return False
    c = a.terms[0].coeff * b.terms[0].coeff.inverse()
    return (a - b.scale(c)).is_zero()


def check_reducibilities(an: Analysis, rep: ClassificationReport, fx: Fixture) -> Check:
    exp = fx.reducibilities
    count = sum((r.multiplicity for r in rep.reducibilities), sympy.Integer(0))
    ok = sympy.expand(count - sym(exp["count"])) == 0
    coords = {f.name for f in an.model.fields_of_kind("coordinate")}
    missing = []
    for text in exp.get("leading", []):
        hit = False
        for r in rep.reducibilities:
            target = normal_form(parse_expression(an.model, text, {r.param.name: (r.param.slots, ())}), (r.param,))
            lead = normal_form(_leading(r.relation, coords), (r.param,))
            hit = hit or _proportional(lead, target)
        if not hit:
            missing.append(text)
    ok = ok and not missing
    rels = "; ".join(render(r.relation) for r in rep.reducibilities) or "none"
    return Check("reducibility", ok, f"{count} relations ({rels})" + (f"; missing {missing}" if missing else ""))


def check_dof(d: DofReport, fx: Fixture) -> Check:
    exp = fx.dof
    got = {
        "variables": d.variables, "first_class": d.first_class, "second_class": d.second_class,
        "reducibilities": d.reducibilities, "dof": d.dof,
    }
    bad = [k for k, v in got.items() if sympy.expand(v - sym(exp[k])) != 0]
    detail = ", ".join(f"{k}={v}" for k, v in got.items())
    return Check("dof", not bad, detail + (f"; mismatched {bad}" if bad else ""))


def check_hamiltonian(an: Analysis, fx: Fixture) -> list[Check]:
    rem = hamiltonian_projection(an).remainder.body
    exp = parse_expression(an.model, fx.hamiltonian_remainder["expected"])
    out = [Check("hamiltonian remainder", equal_mod_identities(rem, exp, an.constants),
                 f"remainder {render(rem) or '0'}")]
    sub = fx.hamiltonian_on_shell
    if sub:
        rule = sub["substitute"]
        fam = [an.model.family_of_letter(x) for x in rule["indices"]]
        slots = tuple(Index(f, x) for f, x in zip(fam, rule["indices"]))
        onshell = substitute_field(rem, rule["field"], slots, parse_expression(an.model, rule["body"]))
        exp2 = parse_expression(an.model, sub["expected"])
        out.append(Check("hamiltonian on shell", equal_mod_identities(onshell, exp2, an.constants),
                         f"{rule['field']} -> {rule['body']}: {render(onshell)}"))
    return out


def check_gauge(an: Analysis, rep: ClassificationReport, fx: Fixture) -> list[Check]:
    if not fx.gauge:
        return []
    gen = [tuple(x) for x in fx.gauge["generator"]]
    extra = {p: (an.constraint(lab).slots, ()) for lab, p in gen}
    out = []
    for name, law in sorted(fx.gauge["laws"].items()):
        got = gauge_transform(an, gen, name, rep.first_class)
        exp = parse_expression(an.model, law["expected"], extra)
        out.append(Check(f"gauge {name}", equal_mod_identities(got, exp, an.constants),
                         f"delta {name} = {render(got)}"))
    return out


def swap_exhibit(sc: Analysis, eu: Analysis, a: str = "phi", b: str = "psi") -> dict:
    """Which constraint closes ``{a, b}`` in each of two models with the same constraints."""
    def closes(an: Analysis) -> list[str]:
        return sorted(an.entry(a, b).coefficients)

    s, e = closes(sc), closes(eu)
    return {
        "bracket": f"{{{a},{b}}}",
        sc.model.name: {"closes_on": s, "structure": render(sc.entry(a, b).combination())},
        eu.model.name: {"closes_on": e, "structure": render(eu.entry(a, b).combination())},
        "swapped": s != e,
    }
