"""Assemble the analysis report (JSON-ready dict) and its text rendering."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from . import __version__
from .analysis import (
    Analysis,
    classify_constraints,
    count_dof,
    fresh_name,
    gauge_transform,
    hamiltonian_projection,
)
from .checks import swap_exhibit
from .dsl import ModelDef
from .expr import render
from .models import Fixture
from .oracle import check_matrix

SCHEMA_VERSION = 1


@dataclass
class Options:
    convention: str | None = None
    oracle: bool = False
    oracle_seeds: int = 5
    lattice: int = 4
    group_n: int = 2


def schema() -> dict:
    return json.loads(resources.files("bfham").joinpath("report_schema.json").read_text(encoding="utf-8"))


def _s(e) -> str:
    return render(e) if not e.is_zero() else "0"


def _sympy(x) -> str:
    return str(x).replace("**", "^")


def gauge_laws(an: Analysis, first_class: list[str], fx: Fixture | None = None) -> dict:
    """Gauge variation of every canonical variable under all first-class constraints."""
    if not first_class:
        return {"generator": [], "laws": {}}
    if fx is not None and fx.gauge and [g[0] for g in fx.gauge["generator"]] == first_class:
        gen = [tuple(g) for g in fx.gauge["generator"]]
    else:
        taken: set[str] = set()
        gen = []
        for lab in first_class:
            p = fresh_name(an.model, f"e{lab}", taken)
            taken.add(p)
            gen.append((lab, p))
    laws = {}
    for pr in an.structure.pairings:
        for name in (pr.q, pr.p):
            laws[name] = _s(gauge_transform(an, gen, name, first_class))
    return {"generator": [list(g) for g in gen], "laws": laws}


def build_report(
    m: ModelDef,
    opts: Options,
    fx: Fixture | None = None,
    source: str = "",
    twin: ModelDef | None = None,
) -> tuple[dict, Analysis]:
    """Full pipeline.  ``twin`` (same constraints, other symplectic form) adds
    the closure comparison of ``{phi, psi}``."""
    an = Analysis(m, opts.convention)
    rep = classify_constraints(an)
    dof = count_dof(an, rep)
    ham = hamiltonian_projection(an)
    matrix = []
    for (a, b), r in rep.matrix.items():
        matrix.append({
            "a": a,
            "b": b,
            "structure": _s(r.combination()),
            "closes_on": sorted(r.coefficients),
            "remainder": _s(r.remainder.body),
            "weakly_zero": r.weakly_zero,
        })
    assumptions = list(rep.assumptions)
    assumptions.append(f"symplectic structure from the {an.structure.convention} convention")
    assumptions.append("structure functions are unique up to the Jacobi and three-dimensional Schouten identities")
    assumptions.append("projection ansatz: coefficients built from smearing parameters, invariant tensors, at most one derivative")
    out = {
        "schema_version": SCHEMA_VERSION,
        "engine_version": __version__,
        "model": {
            "name": m.name,
            "source": source,
            "constants": list(m.constants),
            "families": {
                n: {"dimension": _sympy(f.dimension), "epsilon": f.has_epsilon, "structure": f.has_structure_constants}
                for n, f in m.families.items()
            },
            "sign_convention": an.structure.convention,
        },
        "symplectic": [
            {"q": pr.q, "p": pr.p, "coeff": pr.coeff.render(), "antisym": [list(g) for g in pr.antisym]}
            for pr in an.structure.pairings
        ],
        "constraints": [
            {"label": c.label, "indices": [i.name for i in c.indices], "body": _s(c.body),
             "components": _sympy(c.multiplicity)}
            for c in an.constraints
        ],
        "smearing": {"left": an.lam, "right": an.mu},
        "matrix": matrix,
        "classification": {"first_class": rep.first_class, "second_class": rep.second_class},
        "reducibilities": [
            {"param": r.param.name, "relation": _s(r.relation), "components": _sympy(r.multiplicity)}
            for r in rep.reducibilities
        ],
        "dof": {k: _sympy(getattr(dof, k)) for k in ("variables", "first_class", "second_class", "reducibilities", "dof")},
        "hamiltonian": {
            "coefficients": {k: _s(v) for k, v in sorted(ham.coefficients.items())},
            "remainder": _s(ham.remainder.body),
            "pure_constraint_combination": ham.weakly_zero,
        },
        "gauge": gauge_laws(an, rep.first_class, fx),
        "assumptions": assumptions,
    }
    if twin is not None:
        other = Analysis(twin)
        if {"phi", "psi"} <= set(m.labels) & set(twin.labels):
            out["swap"] = swap_exhibit(an, other)
    if opts.oracle:
        out["oracle"] = check_matrix(
            an, L=opts.lattice, N=opts.group_n, seeds=range(opts.oracle_seeds), second_class=rep.second_class
        ).as_dict()
    return out, an


def to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def render_text(r: dict) -> str:
    lines = [f"model {r['model']['name']}  (convention: {r['model']['sign_convention']})", ""]
    lines.append("symplectic structure:")
    for p in r["symplectic"]:
        lines.append(f"  {{{p['q']}, {p['p']}}} = {p['coeff']}")
    lines.append("")
    lines.append(f"bracket matrix ({r['smearing']['left']} on the left, {r['smearing']['right']} on the right):")
    for e in r["matrix"]:
        tail = "" if e["weakly_zero"] else f"   + remainder {e['remainder']}"
        lines.append(f"  {{{e['a']},{e['b']}}} ~ {e['structure']}{tail}")
    c = r["classification"]
    lines += ["", f"first class:  {', '.join(c['first_class']) or '-'}",
              f"second class: {', '.join(c['second_class']) or '-'}", "", "reducibilities:"]
    for red in r["reducibilities"] or [{"relation": "none", "components": "0"}]:
        lines.append(f"  [{red['components']}]  {red['relation']}")
    d = {k: (f"({v})" if " " in v else v) for k, v in r["dof"].items()}
    lines += ["", f"dof = 1/2 [{d['variables']} - 2 ({d['first_class']} - {d['reducibilities']}) - {d['second_class']}]"
              f" = {r['dof']['dof']}"]
    h = r["hamiltonian"]
    lines += ["", "extended Hamiltonian:"]
    for k, v in h["coefficients"].items():
        lines.append(f"  on {k}: {v}")
    lines.append(f"  remainder: {h['remainder']}")
    g = r["gauge"]
    if g["laws"]:
        lines += ["", "gauge generator: " + " + ".join(f"{p}*{lab}" for lab, p in g["generator"])]
        for k, v in g["laws"].items():
            lines.append(f"  delta {k} = {v}")
    if "swap" in r:
        s = r["swap"]
        lines += ["", f"closure of {s['bracket']}: " + "; ".join(
            f"{k} -> {', '.join(v['closes_on'])}" for k, v in s.items() if isinstance(v, dict))]
    if "oracle" in r:
        o = r["oracle"]
        lines += ["", f"lattice oracle (L={o['lattice']}, N={o['group_n']}, seeds {o['seeds']}): "
                  f"max rel err {o['max_relative_error']:.2e} -> {'pass' if o['passed'] else 'FAIL'}"]
        if "rank_check" in o:
            rc = o["rank_check"]
            lines.append(f"  second-class rank check: size {rc['size']}, margin {rc['min_margin']:.2e}, "
                         f"{'full rank' if rc['full_rank'] else 'DEFICIENT'}")
    lines += ["", "assumptions:"] + [f"  - {a}" for a in r["assumptions"]]
    return "\n".join(lines) + "\n"
