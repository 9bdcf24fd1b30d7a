from __future__ import annotations

import copy
import dataclasses

import pytest
import sympy

from bfham.analysis import (
    ClassificationReport,
    InconsistentCountError,
    count_dof,
    gauge_transform,
    hamiltonian_projection,
)
from bfham.checks import (
    check_brackets,
    check_classification,
    check_dof,
    check_gauge,
    check_hamiltonian,
    check_reducibilities,
    swap_exhibit,
    sym,
)
from bfham.dsl import parse_expression
from bfham.expr import N, StructureError, render
from bfham.models import BUILTINS, fixture
from bfham.phase_space import Param, functional
from conftest import analysis_of, classification_of


def test_projection_recovers_a_known_combination():
    an = analysis_of("second_chern")
    so3 = an.model.families["so3"]
    text = "lam[i]*(phi[i] - 3*Xi*psi[i])"
    placeholder = parse_expression(an.model, text, {"lam": ((so3,), ())})
    F = functional(an.model.expand_constraints(placeholder), (Param("lam", (so3,)),))
    res = an.project(F)
    assert res.weakly_zero
    assert set(res.coefficients) == {"phi", "psi"}
    assert res.combination() == placeholder


def test_projection_leaves_a_remainder_off_the_constraint_surface():
    an = analysis_of("second_chern")
    so3 = an.model.families["so3"]
    body = parse_expression(an.model, "lam[i]*eps(i,j,k)*omega[a,j]*Upsilon[k,a]", {"lam": ((so3,), ())})
    res = an.project(functional(body, (Param("lam", (so3,)),)))
    assert not res.weakly_zero
    assert res.remainder.body == body


@pytest.mark.parametrize(
    "name, first, second",
    [
        ("second_chern", ["phi", "psi", "Phi", "Psi"], []),
        ("euler", ["phi", "psi", "Phi", "Psi"], []),
        ("bf_ym", ["gamma0", "gamma"], ["chi", "chi0", "chiB", "phiB"]),
    ],
)
def test_classification(name, first, second):
    rep = classification_of(name)
    assert rep.first_class == first
    assert rep.second_class == second


def test_martellini_second_class_block():
    rep = classification_of("martellini")
    assert rep.first_class == ["gamma0", "gamma"]
    assert len(rep.second_class) == len(analysis_of("martellini").model.labels) - 2


@pytest.mark.parametrize("name", ["second_chern", "euler"])
def test_topological_models_have_two_reducibility_families(name):
    rep = classification_of(name)
    assert len(rep.reducibilities) == 2
    assert sum(r.multiplicity for r in rep.reducibilities) == 6


@pytest.mark.parametrize(
    "name, variables, first, second, red, dof",
    [
        ("second_chern", 36, 24, 0, 6, 0),
        ("euler", 36, 24, 0, 6, 0),
        ("bf_ym", 20 * (N**2 - 1), 2 * (N**2 - 1), 12 * (N**2 - 1), 0, 2 * (N**2 - 1)),
        ("martellini", 20 * (N**2 - 1), 2 * (N**2 - 1), 12 * (N**2 - 1), 0, 2 * (N**2 - 1)),
    ],
)
def test_dof_counting(name, variables, first, second, red, dof):
    d = count_dof(analysis_of(name), classification_of(name))
    got = (d.variables, d.first_class, d.second_class, d.reducibilities, d.dof)
    for g, e in zip(got, (variables, first, second, red, dof)):
        assert sympy.expand(g - e) == 0


def test_inconsistent_count_is_reported():
    an = analysis_of("second_chern")
    rep = classification_of("second_chern")
    bogus = ClassificationReport(rep.first_class * 3, [], rep.matrix, [])
    with pytest.raises(InconsistentCountError):
        count_dof(an, bogus)


@pytest.mark.parametrize("name", ["second_chern", "euler"])
def test_topological_hamiltonian_is_pure_constraints(name):
    assert hamiltonian_projection(analysis_of(name)).weakly_zero


@pytest.mark.parametrize("name", ["bf_ym", "martellini"])
def test_yang_mills_hamiltonian_keeps_its_density(name):
    res = hamiltonian_projection(analysis_of(name))
    assert not res.weakly_zero
    assert {"gamma0", "gamma"} >= set(res.coefficients)


def test_second_class_gauge_generator_is_rejected():
    an = analysis_of("bf_ym")
    with pytest.raises(StructureError):
        gauge_transform(an, [("chi", "e")], "A", classification_of("bf_ym").first_class)


def test_gauss_law_rotates_the_connection():
    an = analysis_of("bf_ym")
    got = gauge_transform(an, [("gamma", "epsilon")], "A")
    adj = an.model.families["adj"]
    exp = parse_expression(an.model, "-d_i(epsilon[a]) - f(a,b,c)*A[i,b]*epsilon[c]", {"epsilon": ((adj,), ())})
    assert got == exp, render(got)


@pytest.mark.parametrize("name", BUILTINS)
def test_fixture_checks_pass(name):
    an, rep, fx = analysis_of(name), classification_of(name), fixture(name)
    checks = check_brackets(an, fx)
    checks.append(check_classification(rep, fx))
    checks.append(check_reducibilities(an, rep, fx))
    checks.append(check_dof(count_dof(an, rep), fx))
    checks += check_hamiltonian(an, fx)
    checks += check_gauge(an, rep, fx)
    bad = [c for c in checks if not c.ok]
    assert not bad, [(c.name, c.detail) for c in bad]


def test_flipped_fixture_sign_is_caught():
    an, fx = analysis_of("second_chern"), fixture("second_chern")
    broken = copy.deepcopy(fx.brackets)
    broken["phi,psi"]["expected"] = "-" + broken["phi,psi"]["expected"]
    bad = check_brackets(an, dataclasses.replace(fx, brackets=broken))
    assert [c.name for c in bad if not c.ok] == ["bracket {phi,psi}"]


def test_wrong_dof_fixture_is_caught():
    an, rep, fx = analysis_of("bf_ym"), classification_of("bf_ym"), fixture("bf_ym")
    dof = dict(fx.dof, dof="3*N^2-3")
    assert not check_dof(count_dof(an, rep), dataclasses.replace(fx, dof=dof)).ok
    assert sym("2*N^2 - 2") == sym(fx.dof["dof"])


def test_phi_psi_closure_swaps_between_twins():
    s = swap_exhibit(analysis_of("second_chern"), analysis_of("euler"))
    assert s["second_chern"]["closes_on"] == ["psi"]
    assert s["euler"]["closes_on"] == ["phi"]
    assert s["swapped"]
