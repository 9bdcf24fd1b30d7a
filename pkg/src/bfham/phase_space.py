"""Symplectic structures and Poisson brackets of smeared local functionals."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .dsl import ConstraintDecl, ModelDef, kinetic_pairs
from .expr import (
    ZERO,
    Coeff,
    Delta,
    DeltaDist,
    Expression,
    Field,
    Index,
    IndexFamily,
    StructureError,
    Term,
    _raw_derivatives,
    _rename_dummies,
    canonicalize,
    multiply,
    relabel_free,
)

MAX_DELTA_DERIVATIVES = 2


class NonDarbouxError(StructureError):
    """Kinetic term not of the form constant * dot(q) * p."""


@dataclass(frozen=True)
class Pairing:
    """``{q(x), p(y)} = coeff * prod(delta) * delta3(x - y)``.

    ``slot_map[k]`` is the momentum slot matched with coordinate slot ``k``;
    ``antisym`` lists coordinate slot pairs carrying the projector
    ``1/2 (delta delta - delta delta)``.
    """

    q: str
    p: str
    coeff: Coeff
    q_slots: tuple[IndexFamily, ...]
    slot_map: tuple[int, ...]
    antisym: tuple[tuple[int, ...], ...] = ()


@dataclass(frozen=True)
class SymplecticStructure:
    pairings: tuple[Pairing, ...]
    convention: str = "kinetic"

    def by_field(self) -> dict[str, Pairing]:
        out = {}
        for pr in self.pairings:
            out[pr.q] = pr
            out[pr.p] = pr
        return out

    @property
    def variable_names(self) -> list[str]:
        return [n for pr in self.pairings for n in (pr.q, pr.p)]


def extract_symplectic(m: ModelDef, convention: str | None = None) -> SymplecticStructure:
    """Read the canonical pairings off the kinetic term.

    With ``convention="printed"`` a pairing listed under ``printed_bracket`` in
    the model file uses the printed coefficient instead of the inverse of the
    kinetic coefficient.
    """
    convention = convention or m.sign_convention
    out = []
    seen: set[str] = set()
    for c, q, p in kinetic_pairs(m):
        if q.name in seen or p.name in seen:
            raise NonDarbouxError(f"non-Darboux kinetic term: {q.name!r} or {p.name!r} paired twice")
        seen |= {q.name, p.name}
        if len(q.indices) != len(p.indices):
            raise NonDarbouxError(f"non-Darboux kinetic term: {q.name}/{p.name} slot mismatch")
        slot_map = []
        for i in q.indices:
            if i not in p.indices:
                raise NonDarbouxError(f"non-Darboux kinetic term: index {i.name} of {q.name} unpaired")
            slot_map.append(p.indices.index(i))
        coeff = c.inverse()
        if convention == "printed" and (q.name, p.name) in m.printed_brackets:
            coeff = m.printed_brackets[(q.name, p.name)]
        decl = m.fields[q.name]
        out.append(
            Pairing(q.name, p.name, coeff, decl.slots, tuple(slot_map), decl.antisym)
        )
    return SymplecticStructure(tuple(out), convention)


# ---------------------------------------------------------------------------
# Smeared functionals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Param:
    name: str
    slots: tuple[IndexFamily, ...] = ()


@dataclass(frozen=True)
class SmearedFunctional:
    """``integral body d^3x`` with ``body`` linear in each smearing parameter.

    Always held in integration-by-parts normal form: in every term the first
    parameter (in ``params`` order) that occurs carries no derivative.
    """

    params: tuple[Param, ...]
    body: Expression

    def __add__(self, other: "SmearedFunctional") -> "SmearedFunctional":
        return functional(self.body + other.body, _merge(self.params, other.params))

    def __sub__(self, other: "SmearedFunctional") -> "SmearedFunctional":
        return functional(self.body - other.body, _merge(self.params, other.params))

    def scale(self, c: Coeff) -> "SmearedFunctional":
        return SmearedFunctional(self.params, self.body.scale(c))

    def is_zero(self) -> bool:
        return self.body.is_zero()

    def reorder(self, params: tuple[Param, ...]) -> "SmearedFunctional":
        return functional(self.body, params)

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)


def _merge(a: tuple[Param, ...], b: tuple[Param, ...]) -> tuple[Param, ...]:
    out = list(a)
    for p in b:
        if p.name not in {x.name for x in out}:
            out.append(p)
    return tuple(out)


def normal_form(body: Expression, params: tuple[Param, ...]) -> Expression:
    """Move derivatives off the leading parameter of each term (boundary terms dropped)."""
    order = {p.name: k for k, p in enumerate(params)}
    if body.free:
        raise StructureError(
            "smeared functional must be a scalar; free indices "
            + ", ".join(sorted(i.name for i in body.free))
        )
    out: list[Term] = []
    pending = list(body.terms)
    while pending:
        t = pending.pop()
        occ = [
            (order[f.name], k)
            for k, f in enumerate(t.factors)
            if isinstance(f, Field) and f.name in order
        ]
        if not occ:
            out.append(t)
            continue
        _, k = min(occ)
        lead = t.factors[k]
        if not lead.derivs:
            out.append(t)
            continue
        if len(lead.derivs) > MAX_DELTA_DERIVATIVES + 1:
            raise StructureError("derivative order on smearing parameter exceeds the cap")
        rest = t.factors[:k] + t.factors[k + 1 :]
        sign = -1 if len(lead.derivs) % 2 else 1
        moved = _raw_derivatives([Term(t.coeff, rest)], lead.derivs)
        bare = lead._replace(derivs=())
        for r in moved:
            out.append(Term(Coeff.make(sign) * r.coeff, r.factors + (bare,)))
    return canonicalize(out)


def functional(body: Expression, params: tuple[Param, ...] | list[Param]) -> SmearedFunctional:
    params = tuple(params)
    names = {p.name for p in params}
    for t in body.terms:
        for f in t.factors:
            if isinstance(f, Field) and f.name in names and f.point:
                raise StructureError("smeared functional has an unintegrated point label")
    return SmearedFunctional(params, normal_form(body, params))


def smear_constraint(c: ConstraintDecl, param: str) -> SmearedFunctional:
    """``integral param^{idx} C_{idx}``."""
    ref = Expression((Term(Coeff.make(1), (Field(param, c.indices),)),), frozenset(c.indices))
    body = multiply(ref, c.body)
    return functional(body, (Param(param, c.slots),))


# ---------------------------------------------------------------------------
# Variational derivative and Poisson bracket
# ---------------------------------------------------------------------------


def placeholders(slots: tuple[IndexFamily, ...], stem: str) -> tuple[Index, ...]:
    return tuple(Index(fam, f"{stem}{k}") for k, fam in enumerate(slots))


def variational_derivative(
    F: SmearedFunctional,
    name: str,
    slots: tuple[Index, ...],
    point: str = "",
) -> Expression:
    """Functional derivative of ``F`` with respect to field ``name``.

    ``slots`` are the free indices of the result, one per field slot.  A
    derivative occurrence contributes ``(-1)^n`` times the derivatives of the
    remaining factors.  Components are treated as independent; projectors for
    antisymmetric slots are applied by the bracket.
    """
    out: list[Term] = []
    for t in _rename_dummies(F.body, "v"):
        for k, f in enumerate(t.factors):
            if not (isinstance(f, Field) and f.name == name):
                continue
            if len(f.indices) != len(slots):
                raise StructureError(f"field {name!r} has {len(f.indices)} slots, got {len(slots)}")
            rest = t.factors[:k] + t.factors[k + 1 :]
            deltas = tuple(Delta((a, b)) for a, b in zip(f.indices, slots))
            sign = -1 if len(f.derivs) % 2 else 1
            for r in _raw_derivatives([Term(t.coeff, rest + deltas)], f.derivs):
                out.append(Term(Coeff.make(sign) * r.coeff, r.factors))
    e = canonicalize(out)
    if point:
        e = _set_point(e, point)
    return e


def _set_point(e: Expression, point: str) -> Expression:
    return canonicalize(
        Term(t.coeff, tuple(f._replace(point=point) if isinstance(f, Field) else f for f in t.factors))
        for t in e.terms
    )


def _projected_product(dq: Expression, dp: Expression, ph: tuple[Index, ...], pr: Pairing) -> Expression:
    """dq[ph] * P dp[ph'] where P is the antisymmetrizing projector on paired slots."""
    prod = multiply(dq, dp)
    if not pr.antisym:
        return prod
    acc = ZERO
    for choice in itertools.product((0, 1), repeat=len(pr.antisym)):
        swap = {}
        sign = 1
        for g, c in zip(pr.antisym, choice):
            if c:
                a, b = ph[g[0]], ph[g[1]]
                swap[a], swap[b] = b, a
                sign = -sign
        piece = multiply(dq, relabel_free(dp, swap)) if swap else prod
        acc = acc + piece.scale(Coeff.make(Fraction(sign, 2 ** len(pr.antisym))))
    return acc


def poisson_bracket(
    F: SmearedFunctional, G: SmearedFunctional, s: SymplecticStructure
) -> SmearedFunctional:
    """``{F, G}`` as a smeared functional in normal form."""
    fF, fG = F.body.fields(), G.body.fields()
    acc = ZERO
    for pr in s.pairings:
        if not ((pr.q in fF and pr.p in fG) or (pr.p in fF and pr.q in fG)):
            continue
        ph_q = placeholders(pr.q_slots, "zq")
        ph_p = [None] * len(ph_q)
        for k, j in enumerate(pr.slot_map):
            ph_p[j] = ph_q[k]
        ph_p = tuple(ph_p)
        term = ZERO
        if pr.q in fF and pr.p in fG:
            term = term + _projected_product(
                variational_derivative(F, pr.q, ph_q), variational_derivative(G, pr.p, ph_p), ph_q, pr
            )
        if pr.p in fF and pr.q in fG:
            term = term - _projected_product(
                variational_derivative(G, pr.q, ph_q), variational_derivative(F, pr.p, ph_p), ph_q, pr
            )
        acc = acc + term.scale(pr.coeff)
    return functional(acc, _merge(F.params, G.params))


# ---------------------------------------------------------------------------
# Distributional kernels
# ---------------------------------------------------------------------------


def localize(
    F: SmearedFunctional,
    left: tuple[Index, ...],
    right: tuple[Index, ...],
    points: tuple[str, str] = ("x", "y"),
) -> Expression:
    """Kernel ``K(x, y)`` with ``F = integral lambda(x) mu(y) K(x, y)``.

    Derivatives on the second parameter become derivatives (in ``x``) of
    ``delta3(x, y)``; fields are evaluated at ``x``.
    """
    if len(F.params) != 2:
        raise StructureError(f"localize needs a bilinear functional, got {len(F.params)} parameters")
    lam, mu = F.params
    out: list[Term] = []
    for t in _rename_dummies(F.body, "k"):
        fl = [f for f in t.factors if isinstance(f, Field) and f.name == lam.name]
        fm = [f for f in t.factors if isinstance(f, Field) and f.name == mu.name]
        if len(fl) != 1 or len(fm) != 1:
            raise StructureError("localize needs every term bilinear in the two parameters")
        (a,), (b,) = fl, fm
        if a.derivs:
            raise StructureError("functional not in normal form")
        if len(b.derivs) > MAX_DELTA_DERIVATIVES:
            raise StructureError("delta-derivative order exceeds the cap")
        rest = tuple(
            f._replace(point=points[0]) if isinstance(f, Field) else f
            for f in t.factors
            if f is not a and f is not b
        )
        extra = tuple(Delta((i, j)) for i, j in zip(a.indices, left))
        extra += tuple(Delta((i, j)) for i, j in zip(b.indices, right))
        out.append(Term(t.coeff, rest + extra + (DeltaDist(points, b.derivs),)))
    return canonicalize(out)


def smear(
    kernel: Expression,
    lam: Param,
    mu: Param,
    left: tuple[Index, ...],
    right: tuple[Index, ...],
) -> SmearedFunctional:
    """Inverse of :func:`localize`."""
    out: list[Term] = []
    for t in _rename_dummies(kernel, "s"):
        dd = [f for f in t.factors if isinstance(f, DeltaDist)]
        if len(dd) != 1:
            raise StructureError("kernel term without a delta distribution")
        rest = tuple(
            f._replace(point="") if isinstance(f, Field) else f
            for f in t.factors
            if not isinstance(f, DeltaDist)
        )
        out.append(
            Term(t.coeff, rest + (Field(lam.name, left), Field(mu.name, right, dd[0].derivs)))
        )
    return functional(canonicalize(out), (lam, mu))
