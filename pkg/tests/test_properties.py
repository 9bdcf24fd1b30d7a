"""Bracket identities over every constraint combination of every builtin."""

from __future__ import annotations

import pytest

from bfham.models import BUILTINS
from identities import antisymmetry_failures, jacobi_failures, leibniz_failures


@pytest.mark.parametrize("name", BUILTINS)
def test_jacobi_identity_all_triples(name):
    assert jacobi_failures(name) == []


@pytest.mark.parametrize("name", BUILTINS)
def test_antisymmetry_all_pairs(name):
    assert antisymmetry_failures(name) == []


@pytest.mark.parametrize("name", BUILTINS)
def test_leibniz_rule_all_constraints_and_variable_pairs(name):
    assert leibniz_failures(name) == []
