from __future__ import annotations

import pytest

from bfham.models import BUILTINS, UnknownModelError, builtin, describe, fixture, model_text


def test_four_builtins():
    assert BUILTINS == ("second_chern", "euler", "bf_ym", "martellini")


def test_unknown_builtin():
    with pytest.raises(UnknownModelError) as info:
        model_text("maxwell")
    assert "second_chern" in str(info.value)
    with pytest.raises(UnknownModelError):
        fixture("maxwell")


def test_builtin_returns_fresh_copies():
    a, b = builtin("euler"), builtin("euler")
    assert a == b and a is not b
    a.constraints.clear()
    assert builtin("euler").labels == ["phi", "psi", "Phi", "Psi"]


@pytest.mark.parametrize(
    "name, labels",
    [
        ("second_chern", ["phi", "psi", "Phi", "Psi"]),
        ("euler", ["phi", "psi", "Phi", "Psi"]),
        ("bf_ym", ["gamma0", "gamma", "chi", "chi0", "chiB", "phiB"]),
    ],
)
def test_constraint_labels(name, labels):
    assert builtin(name).labels == labels


def test_twins_share_constraints_but_not_kinetic_terms():
    sc, eu = builtin("second_chern"), builtin("euler")
    assert [c.body for c in sc.constraints] == [c.body for c in eu.constraints]
    assert sc.kinetic != eu.kinetic
    assert eu.sign_convention == "printed"


@pytest.mark.parametrize("name", BUILTINS)
def test_every_fixture_entry_has_a_source_note(name):
    fx = fixture(name)
    assert len(fx.pairings) >= 2
    for section in (fx.brackets.values(), [fx.classification, fx.reducibilities, fx.dof, fx.hamiltonian_remainder]):
        for entry in section:
            assert entry.get("source"), entry


@pytest.mark.parametrize("name", ["second_chern", "euler"])
def test_topological_fixtures_list_all_ten_brackets(name):
    fx = fixture(name)
    assert len(fx.brackets) == 10
    assert fx.bracket("phi", "psi") is not None


def test_describe():
    d = describe(builtin("bf_ym"))
    assert d["name"] == "bf_ym"
    assert d["fields"]["lambda0"] == "multiplier"
    assert "Pi" in d["hamiltonian"]
