from __future__ import annotations

import itertools

import numpy as np
import pytest

from bfham.oracle import (
    LatticeConfig,
    OracleConfigError,
    check_matrix,
    levi_civita,
    numeric_bracket,
    numeric_functional,
    random_assignment,
    random_smearings,
    rank_check,
    relative_error,
    structure_constants,
)
from bfham.phase_space import Param, functional
from bfham.dsl import parse_expression
from conftest import analysis_of, classification_of


def test_levi_civita_and_su2_structure_constants_agree():
    np.testing.assert_allclose(structure_constants(2), levi_civita(3), atol=1e-12)


@pytest.mark.parametrize("n", [3, 4])
def test_structure_constants_are_antisymmetric_and_satisfy_jacobi(n):
    f = structure_constants(n)
    assert f.shape == (n * n - 1,) * 3
    np.testing.assert_allclose(f, -np.swapaxes(f, 0, 1), atol=1e-12)
    np.testing.assert_allclose(f, -np.swapaxes(f, 1, 2), atol=1e-12)
    jac = (np.einsum("abe,ecd->abcd", f, f) + np.einsum("bce,ead->abcd", f, f)
           + np.einsum("cae,ebd->abcd", f, f))
    np.testing.assert_allclose(jac, 0, atol=1e-10)


@pytest.mark.parametrize("kw", [dict(L=1), dict(N=1), dict(scheme="upwind"), dict(constants=(("Xi", 0),))])
def test_bad_configurations(kw):
    with pytest.raises(OracleConfigError):
        LatticeConfig(**kw)


def test_missing_constant_value():
    with pytest.raises(OracleConfigError):
        LatticeConfig().value("Xi")
    assert LatticeConfig().value("I") == 1j
    cfg = LatticeConfig(seed=3).with_constants(["Xi", "Omega"])
    assert all(0.5 <= abs(v) <= 1.5 for _, v in cfg.constants)


def test_relative_error_floor():
    assert relative_error(1.0, 1.0, 5.0) == 0.0
    assert relative_error(1e-12, 0.0, 1.0) == pytest.approx(1e-8)


def _sc():
    an = analysis_of("second_chern")
    cfg = LatticeConfig(L=4, seed=2).with_constants(an.constants)
    return an, cfg, random_assignment(an.model, cfg)


def test_linear_functional_is_the_site_average():
    an, cfg, data = _sc()
    slots = (an.model.families["space"], an.model.families["so3"])
    body = parse_expression(an.model, "lam[a,i]*pi[a,i]", {"lam": (slots, ())})
    F = functional(body, (Param("lam", slots),))
    ones = {"lam": np.ones((3, 3, 4, 4, 4))}
    expected = data.values["pi"].sum(axis=(0, 1)).mean()
    assert numeric_functional(F, cfg, data, ones) == pytest.approx(expected, rel=1e-12)


def test_zero_functional():
    an, cfg, data = _sc()
    F = functional(parse_expression(an.model, "0"), ())
    assert numeric_functional(F, cfg, data) == 0


def test_central_scheme_matches_hand_expansion():
    """Smeared Gauss-type constraint on a 3^3 lattice, expanded by explicit loops."""
    an = analysis_of("second_chern")
    cfg = LatticeConfig(L=3, seed=5, scheme="central").with_constants(an.constants)
    data = random_assignment(an.model, cfg).values
    F = an.smeared("phi", "lam")
    lam = random_smearings(F.params, cfg)["lam"]
    pi, P, om, Up = data["pi"], data["P"], data["omega"], data["Upsilon"]
    eps = levi_civita(3)
    L = 3
    total = 0.0
    for x, y, z in itertools.product(range(L), repeat=3):
        site = (x, y, z)
        for i in range(3):
            div = 0.0
            for a in range(3):
                fwd, bwd = list(site), list(site)
                fwd[a] = (fwd[a] + 1) % L
                bwd[a] = (bwd[a] - 1) % L
                div += (pi[(a, i) + tuple(fwd)] - pi[(a, i) + tuple(bwd)]) * L / 2
            rest = 0.0
            for j, k, a in itertools.product(range(3), repeat=3):
                e = eps[i, j, k]
                if e:
                    rest += e * (P[(a, k) + site] * om[(a, j) + site] + Up[(j, a) + site] * pi[(a, k) + site])
            total += lam[(i,) + site] * (div + rest)
    total /= L**3
    got = numeric_functional(F, cfg, random_assignment(an.model, cfg), {"lam": lam})
    assert got == pytest.approx(total, rel=1e-12)


def test_self_bracket_vanishes_numerically():
    an, cfg, data = _sc()
    F = an.smeared("Phi", "lam")
    sm = random_smearings(F.params, cfg)
    assert abs(numeric_bracket(F, F, an.structure, cfg, data, sm)) < 1e-10


def test_bracket_is_bilinear():
    an, cfg, data = _sc()
    F, G = an.smeared("phi", "lam"), an.smeared("Psi", "mu")
    sm = random_smearings(F.params + G.params, cfg)
    v1 = numeric_bracket(F, G, an.structure, cfg, data, sm)
    sm2 = dict(sm, lam=3 * sm["lam"])
    assert numeric_bracket(F, G, an.structure, cfg, data, sm2) == pytest.approx(3 * v1, rel=1e-12)


def test_matrix_agreement_second_chern_one_seed():
    rep = check_matrix(analysis_of("second_chern"), L=4, seeds=[0])
    assert len(rep.errors) == 16
    assert rep.max_error < 1e-9
    assert rep.passed


def test_rank_check_second_class_block_is_invertible():
    an = analysis_of("bf_ym")
    v = rank_check(an, classification_of("bf_ym").second_class, LatticeConfig(L=3, seed=1), trials=1)
    assert v.full_rank and v.size > 0


def test_rank_check_flags_first_class_block():
    an = analysis_of("bf_ym")
    v = rank_check(an, ["gamma0", "gamma"], LatticeConfig(L=3, seed=1), trials=1)
    assert not v.full_rank


def test_report_dict_is_json_ready():
    rep = check_matrix(analysis_of("bf_ym"), L=3, seeds=[0], second_class=["chi0", "chiB"], rank_trials=1)
    d = rep.as_dict()
    assert d["lattice"] == 3 and d["seeds"] == [0]
    assert set(d["rank_check"]) == {"full_rank", "size", "min_margin", "threshold"}
