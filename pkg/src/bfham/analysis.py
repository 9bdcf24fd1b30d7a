"""Weak projection, classification, reducibility, DOF counting and gauge laws."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import sympy
from sympy.polys.domains import QQ_I

from .dsl import ConstraintDecl, ModelDef
from .expr import (
    IMAGINARY,
    ONE,
    ZERO,
    Coeff,
    Delta,
    Eps,
    Expression,
    Field,
    Index,
    IndexFamily,
    Struct,
    StructureError,
    Term,
    _factor_key,
    _relabel_factor,
    canonicalize,
    coeff_from_sympy,
    factor_indices,
    relabel_free,
    substitute_field,
)
from .phase_space import (
    Param,
    SmearedFunctional,
    SymplecticStructure,
    extract_symplectic,
    functional,
    normal_form,
    poisson_bracket,
    smear_constraint,
)


class InconsistentCountError(ValueError):
    """Negative degree-of-freedom count."""


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constraint:
    label: str
    indices: tuple[Index, ...]
    body: Expression
    antisym: tuple[tuple[int, int], ...] = ()

    @property
    def slots(self) -> tuple[IndexFamily, ...]:
        return tuple(i.family for i in self.indices)

    @property
    def multiplicity(self) -> sympy.Expr:
        return component_count(self.slots, self.antisym)

    def decl(self) -> ConstraintDecl:
        return ConstraintDecl(self.label, self.indices, self.body)


def component_count(slots, antisym=()) -> sympy.Expr:
    out = sympy.Integer(1)
    paired = {k for g in antisym for k in g}
    for g in antisym:
        d = slots[g[0]].dimension
        out *= d * (d - 1) / 2
    for k, fam in enumerate(slots):
        if k not in paired:
            out *= fam.dimension
    return sympy.expand(out)


def constraints_of(m: ModelDef) -> list[Constraint]:
    """Model constraints with antisymmetric slot pairs detected from the bodies."""
    out = []
    for c in m.constraints:
        groups = []
        for p, q in itertools.combinations(range(len(c.indices)), 2):
            a, b = c.indices[p], c.indices[q]
            if a.family != b.family or c.body.is_zero():
                continue
            if relabel_free(c.body, {a: b, b: a}) == -c.body:
                groups.append((p, q))
        # keep disjoint pairs only
        used: set[int] = set()
        keep = []
        for g in groups:
            if not used & set(g):
                keep.append(g)
                used |= set(g)
        out.append(Constraint(c.label, c.indices, c.body, tuple(keep)))
    return out


def spatial_family(m: ModelDef) -> IndexFamily:
    """Family of spatial derivative indices (first declared family by default)."""
    for c in m.constraints:
        for t in c.body.terms:
            for f in t.factors:
                if isinstance(f, Field) and f.derivs:
                    return f.derivs[0].family
    if not m.families:
        raise StructureError("model declares no index family")
    return next(iter(m.families.values()))


def fresh_name(m: ModelDef, stem: str, taken: set[str] = frozenset()) -> str:
    used = set(m.fields) | set(m.labels) | set(m.constants) | set(taken)
    if stem not in used:
        return stem
    k = 1
    while f"{stem}{k}" in used:
        k += 1
    return f"{stem}{k}"


# ---------------------------------------------------------------------------
# Linear algebra over the field of constants
# ---------------------------------------------------------------------------


class _Field:
    """Exact arithmetic in Q(i)(constants) with Coeff conversion."""

    def __init__(self, constants):
        gens = [sympy.Symbol(c) for c in sorted(constants) if c != IMAGINARY]
        base = QQ_I
        self.K = base.frac_field(*gens) if gens else base

    def of(self, c: Coeff):
        return self.K.from_sympy(c.to_sympy())

    def coeffs(self, x) -> list[Coeff]:
        return coeff_from_sympy(self.K.to_sympy(x))


def _row_key(factors) -> tuple:
    return tuple(_factor_key(f) for f in factors)


def _vector(e: Expression, F: _Field) -> dict:
    out: dict = {}
    for t in e.terms:
        v = out.get(t.factors, F.K.zero) + F.of(t.coeff)
        if F.K.is_zero(v):
            out.pop(t.factors, None)
        else:
            out[t.factors] = v
    return out


class _Echelon:
    """Incrementally built echelon basis of a column space.

    Rows are integers (smaller = eliminated first); each basis vector has a
    distinct pivot (its first nonzero row) and records its expression in the
    input columns.
    """

    def __init__(self, F: _Field):
        self.K = F.K
        self.basis: dict[int, tuple[dict, dict]] = {}  # pivot row -> (vector, combo)

    def reduce(self, v: dict, combo: dict) -> tuple[dict, dict]:
        """Full reduction: afterwards ``v`` vanishes on every pivot row."""
        v, combo = dict(v), dict(combo)
        K, basis = self.K, self.basis
        heap = [r for r in v if r in basis]
        heapq.heapify(heap)
        while heap:
            p = heapq.heappop(heap)
            x = v.get(p)
            if x is None:
                continue
            bv, bc = basis[p]
            s = x / bv[p]
            for r, y in bv.items():
                z = v.get(r)
                if z is None:
                    v[r] = -s * y
                    if r in basis and r != p:
                        heapq.heappush(heap, r)
                else:
                    z = z - s * y
                    if K.is_zero(z):
                        del v[r]
                    else:
                        v[r] = z
            for col, y in bc.items():
                z = combo.get(col, K.zero) - s * y
                if K.is_zero(z):
                    combo.pop(col, None)
                else:
                    combo[col] = z
        return v, combo

    def add(self, v: dict, col) -> bool:
        v, combo = self.reduce(v, {col: self.K.one})
        if not v:
            return False
        self.basis[min(v)] = (v, combo)
        return True


def _index_rows(vectors: list[dict]) -> tuple[list[dict], dict]:
    rows = set()
    for v in vectors:
        rows |= set(v)
    order = {r: k for k, r in enumerate(sorted(rows, key=_row_key))}
    return [{order[r]: x for r, x in v.items()} for v in vectors], order


def _component(columns: list[dict], b: dict, Fd: _Field, identities: bool = True,
               cap: int = 20000) -> tuple[list[int], list[dict]]:
    """Columns (and lazily generated identity relations) connected to the rows of ``b``.

    Columns outside this component cannot change the reduction of ``b``.
    """
    by_row: dict = {}
    for k, c in enumerate(columns):
        for r in c:
            by_row.setdefault(r, []).append(k)
    selected: set[int] = set()
    seen: set = set()
    ids: list[dict] = []
    id_keys: set = set()
    frontier = list(b)
    while frontier:
        r = frontier.pop()
        if r in seen:
            continue
        seen.add(r)
        for k in by_row.get(r, ()):
            if k not in selected:
                selected.add(k)
                frontier.extend(columns[k])
        if identities and len(ids) < cap:
            for rel in identity_relations([r]):
                key = rel.terms
                if key in id_keys:
                    continue
                id_keys.add(key)
                v = _vector(rel, Fd)
                if v:
                    ids.append(v)
                    frontier.extend(v)
    return sorted(selected), ids


def _solve(columns: list[dict], b: dict, F: _Field, identities: bool = True) -> tuple[dict, dict]:
    """(coefficients per column, remainder) with remainder zero on pivot rows."""
    sel, ids = _component(columns, b, F, identities)
    vecs, order = _index_rows([columns[k] for k in sel] + ids + [b])
    ech = _Echelon(F)
    for j, v in enumerate(vecs[:-1]):
        ech.add(v, j)
    rem, combo = ech.reduce(vecs[-1], {})
    # b - rem = sum_k x_k col_k  with  x = -combo
    x = {sel[j]: -v for j, v in combo.items() if j < len(sel) and not F.K.is_zero(v)}
    back = {k: r for r, k in order.items()}
    return x, {back[k]: v for k, v in rem.items()}


def _null_space(columns: list[dict], F: _Field) -> list[dict]:
    """Basis of {x : sum x_k col_k = 0}, in reduced form."""
    vecs, _ = _index_rows(columns)
    ech = _Echelon(F)
    out = []
    for k, c in enumerate(vecs):
        v, combo = ech.reduce(c, {k: F.K.one})
        if not v:
            out.append(combo)
        else:
            ech.add(c, k)
    return out


# ---------------------------------------------------------------------------
# Ansatz
# ---------------------------------------------------------------------------


def _matchings(ix: list[Index]):
    if not ix:
        yield []
        return
    a, rest = ix[0], ix[1:]
    for k, b in enumerate(rest):
        for m in _matchings(rest[:k] + rest[k + 1 :]):
            yield [(a, b)] + m


def _contractions(open_ix: list[Index]):
    """All index contractions with <= 1 epsilon / structure constant per family.

    Yields (mapping, extra factors): ``mapping`` sends one index of each
    contracted pair to its partner.
    """
    by_fam: dict[IndexFamily, list[Index]] = {}
    for i in open_ix:
        by_fam.setdefault(i.family, []).append(i)
    per_family = []
    for fam, ix in by_fam.items():
        opts = []
        if len(ix) % 2 == 0:
            for m in _matchings(ix):
                opts.append(({b: a for a, b in m}, ()))
        else:
            cls = Eps if fam.has_epsilon else Struct if fam.has_structure_constants else None
            if cls is not None:
                for tri in itertools.combinations(ix, 3):
                    rest = [i for i in ix if i not in tri]
                    for m in _matchings(rest):
                        opts.append(({b: a for a, b in m}, (cls(fam, tri),)))
        if not opts:
            return
        per_family.append(opts)
    for combo in itertools.product(*per_family):
        mapping: dict = {}
        extra: tuple = ()
        for mp, ex in combo:
            mapping.update(mp)
            extra += ex
        yield mapping, extra


@dataclass(frozen=True)
class _Element:
    label: str
    expr: Expression  # scalar, contains the placeholder factor ``label``


def ansatz_elements(
    params: list[Param],
    lead: str | None,
    constraints: list[Constraint],
    spatial: IndexFamily,
    max_deriv: int = 1,
    extra_fields: list[tuple[str, tuple[IndexFamily, ...], tuple]] = (),
    max_fields: int = 0,
) -> list[_Element]:
    """Scalar monomials ``(params) * (<= max_fields fields) * C`` with invariant tensors.

    At most ``max_deriv`` spatial derivatives, never on the leading parameter.
    """
    out: dict = {}
    for c in constraints:
        for nf in range(max_fields + 1):
            for extra in itertools.combinations_with_replacement(extra_fields, nf):
                specs = [(p.name, p.slots, ()) for p in params] + [(c.label, c.slots, ())]
                specs += list(extra)
                targets = [k for k, s in enumerate(specs) if s[0] != lead]
                placements = [()]
                if max_deriv >= 1:
                    placements += [(k,) for k in targets]
                for place in placements:
                    n = itertools.count()
                    factors = []
                    open_ix = []
                    for k, (name, slots, anti) in enumerate(specs):
                        ix = tuple(Index(fam, f"z{next(n)}") for fam in slots)
                        dv = tuple(Index(spatial, f"z{next(n)}") for _ in place if _ == k)
                        open_ix += list(ix) + list(dv)
                        factors.append(Field(name, ix, dv, "", anti))
                    for mapping, extras in _contractions(open_ix):
                        facs = tuple(_relabel_factor(f, mapping) for f in factors) + extras
                        e = canonicalize([Term(ONE, facs)])
                        if e.is_zero():
                            continue
                        t = e.terms[0]
                        key = (c.label, t.factors)
                        if key not in out:
                            out[key] = _Element(c.label, Expression((Term(ONE, t.factors),), frozenset()))
    return [out[k] for k in sorted(out, key=lambda k: (k[0], _row_key(k[1])))]


def expand(e: Expression, constraints: list[Constraint]) -> Expression:
    for c in constraints:
        if c.label in e.fields():
            e = substitute_field(e, c.label, c.indices, c.body)
    return e


# ---------------------------------------------------------------------------
# Identities not applied by canonicalization
# ---------------------------------------------------------------------------


def _index_positions(factors):
    """(factor position, 'i'|'d', slot, Index) for every index occurrence."""
    out = []
    for k, f in enumerate(factors):
        if isinstance(f, Field):
            out += [(k, "i", s, i) for s, i in enumerate(f.indices)]
            out += [(k, "d", s, i) for s, i in enumerate(f.derivs)]
        elif isinstance(f, (Eps, Struct)):
            out += [(k, "i", s, i) for s, i in enumerate(f.indices)]
        else:
            out += [(k, "i", s, i) for s, i in enumerate(factor_indices(f))]
    return out


def _set_index(factors, pos, new: Index):
    k, kind, s, _ = pos
    f = factors[k]
    if kind == "d":
        d = list(f.derivs)
        d[s] = new
        g = f._replace(derivs=tuple(d))
    else:
        ix = list(f.indices)
        ix[s] = new
        g = f._replace(indices=tuple(ix))
    return factors[:k] + (g,) + factors[k + 1 :]


def identity_relations(rows) -> list[Expression]:
    """Jacobi relations of structure constants and three-dimensional Schouten relations.

    Each returned expression is identically zero but not canonically zero;
    one relation per applicable pattern in the given term shapes.
    """
    out: dict = {}
    for factors in rows:
        positions = _index_positions(factors)
        # Jacobi: f_{abe} f_{ecd} + f_{ace} f_{edb} + f_{ade} f_{ebc} = 0
        structs = [k for k, f in enumerate(factors) if isinstance(f, Struct)]
        for k1, k2 in itertools.combinations(structs, 2):
            f1, f2 = factors[k1], factors[k2]
            shared = set(f1.indices) & set(f2.indices)
            if len(shared) != 1:
                continue
            (e,) = shared
            a, b = [i for i in f1.indices if i != e]
            # orient: f1 = +-f_{a b e}, f2 = +-f_{e c d}
            c, d = [i for i in f2.indices if i != e]
            rest = tuple(f for j, f in enumerate(factors) if j not in (k1, k2))
            fam = f1.family
            terms = [
                Term(ONE, rest + (Struct(fam, (a, b, e)), Struct(fam, (e, c, d)))),
                Term(ONE, rest + (Struct(fam, (a, c, e)), Struct(fam, (e, d, b)))),
                Term(ONE, rest + (Struct(fam, (a, d, e)), Struct(fam, (e, b, c)))),
            ]
            rel = canonicalize(terms)
            if not rel.is_zero():
                out.setdefault(rel.terms, rel)
        # Schouten: antisymmetrization over four indices of a 3-dim family vanishes
        for k, f in enumerate(factors):
            if not isinstance(f, Eps):
                continue
            eps_pos = [p for p in positions if p[0] == k]
            for p in positions:
                if p[0] == k or p[3].family != f.family:
                    continue
                variants = [(1, factors)]
                for s, q in enumerate(eps_pos):
                    g = _set_index(factors, q, p[3])
                    g = _set_index(g, p, q[3])
                    variants.append((-1, g))
                try:
                    rel = canonicalize([Term(Coeff.make(sg), g) for sg, g in variants])
                except StructureError:
                    continue
                if not rel.is_zero():
                    out.setdefault(rel.terms, rel)
    return [out[k] for k in sorted(out, key=lambda ts: [_row_key(t.factors) for t in ts])]


def _identity_columns(vectors: list[dict], Fd: _Field) -> list[dict]:
    rows: dict = {}
    for v in vectors:
        rows.update(dict.fromkeys(v, Fd.K.one))
    return _component([], rows, Fd)[1]


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------


@dataclass
class ProjectionResult:
    """``input = sum_k coefficients[k] + remainder`` modulo tensor identities.

    Each coefficient is an expression in smearing parameters and invariant
    tensors times the placeholder factor of its constraint.
    """

    coefficients: dict[str, Expression]
    remainder: SmearedFunctional
    params: tuple[Param, ...] = ()

    @property
    def weakly_zero(self) -> bool:
        return self.remainder.is_zero()

    def combination(self) -> Expression:
        acc = ZERO
        for e in self.coefficients.values():
            acc = acc + e
        return acc

    def reconstruct(self, constraints: list[Constraint]) -> SmearedFunctional:
        body = expand(self.combination(), constraints) + self.remainder.body
        return functional(body, self.params)


def project_weakly(
    F: SmearedFunctional,
    constraints: list[Constraint],
    spatial: IndexFamily,
    constants=(),
    max_deriv: int = 1,
) -> ProjectionResult:
    """Write ``F`` as constraints times parameter-built coefficients plus a remainder."""
    Fd = _Field(constants)
    names = [p.name for p in F.params]
    groups: list[tuple[str, ...]] = []
    for t in F.body.terms:
        present = tuple(n for n in names if any(isinstance(f, Field) and f.name == n for f in t.factors))
        if present and present not in groups:
            groups.append(present)
    elements: list[_Element] = []
    pmap = {p.name: p for p in F.params}
    for g in groups:
        elements += ansatz_elements([pmap[n] for n in g], g[0], constraints, spatial, max_deriv)
    columns = [_vector(normal_form(expand(el.expr, constraints), F.params), Fd) for el in elements]
    b = _vector(F.body, Fd)
    x, rem = _solve(columns, b, Fd)
    coeffs: dict[str, list[Term]] = {}
    for k, v in sorted(x.items()):
        if k >= len(elements):
            continue
        el = elements[k]
        for c in Fd.coeffs(v):
            coeffs.setdefault(el.label, []).extend(Term(c * t.coeff, t.factors) for t in el.expr.terms)
    coefficients = {lab: canonicalize(ts) for lab, ts in coeffs.items()}
    coefficients = {k: v for k, v in coefficients.items() if not v.is_zero()}
    rem_terms = [Term(c, r) for r, v in rem.items() for c in Fd.coeffs(v)]
    remainder = SmearedFunctional(F.params, canonicalize(rem_terms))
    return ProjectionResult(coefficients, remainder, F.params)


def is_zero_mod_identities(e: Expression, constants=()) -> bool:
    """True when ``e`` vanishes after Jacobi / Schouten relations."""
    if e.is_zero():
        return True
    Fd = _Field(constants)
    _, rem = _solve([], _vector(e, Fd), Fd)
    return not rem


# ---------------------------------------------------------------------------
# Model-level analysis
# ---------------------------------------------------------------------------


@dataclass
class Analysis:
    """Cached per-model context: structure, constraints and parameter names."""

    model: ModelDef
    convention: str | None = None

    def __post_init__(self) -> None:
        self.structure: SymplecticStructure = extract_symplectic(self.model, self.convention)
        self.constraints = constraints_of(self.model)
        self.spatial = spatial_family(self.model)
        self.lam = fresh_name(self.model, "lam")
        self.mu = fresh_name(self.model, "mu", {self.lam})
        self._matrix: dict = {}

    @property
    def constants(self) -> tuple[str, ...]:
        return tuple(self.model.constants) + (IMAGINARY,)

    def constraint(self, label: str) -> Constraint:
        for c in self.constraints:
            if c.label == label:
                return c
        raise KeyError(label)

    def smeared(self, label: str, param: str) -> SmearedFunctional:
        return smear_constraint(self.constraint(label).decl(), param)

    def bracket(self, a: str, b: str) -> SmearedFunctional:
        return poisson_bracket(self.smeared(a, self.lam), self.smeared(b, self.mu), self.structure)

    def project(self, F: SmearedFunctional) -> ProjectionResult:
        return project_weakly(F, self.constraints, self.spatial, self.constants)

    def entry(self, a: str, b: str) -> ProjectionResult:
        if (a, b) not in self._matrix:
            self._matrix[(a, b)] = self.project(self.bracket(a, b))
        return self._matrix[(a, b)]

    def bracket_matrix(self) -> dict[tuple[str, str], ProjectionResult]:
        labels = self.model.labels
        return {(a, b): self.entry(a, b) for a in labels for b in labels}


def bracket_matrix(m: ModelDef, convention: str | None = None) -> dict[tuple[str, str], ProjectionResult]:
    return Analysis(m, convention).bracket_matrix()


def hamiltonian_projection(an: Analysis) -> ProjectionResult:
    """Project the extended Hamiltonian onto the constraints, multipliers as parameters.

    Terms free of multipliers cannot be absorbed and land in the remainder.
    """
    mult = tuple(Param(f.name, f.slots) for f in an.model.fields_of_kind("multiplier"))
    return an.project(functional(an.model.extended_hamiltonian(), mult))


@dataclass
class Reducibility:
    """``relation`` is an identically vanishing combination of constraint placeholders."""

    param: Param
    relation: Expression
    multiplicity: sympy.Expr


@dataclass
class ClassificationReport:
    first_class: list[str]
    second_class: list[str]
    matrix: dict[tuple[str, str], ProjectionResult]
    reducibilities: list[Reducibility] = field(default_factory=list)
    assumptions: list[str] = field(default_factory=list)


def classify_constraints(an: Analysis) -> ClassificationReport:
    mat = an.bracket_matrix()
    labels = an.model.labels
    first = [a for a in labels if all(mat[(a, b)].weakly_zero for b in labels)]
    second = [a for a in labels if a not in first]
    rep = ClassificationReport(first, second, mat)
    if second:
        rep.assumptions.append(
            "second-class block invertibility is checked numerically (lattice rank check)"
        )
    rep.reducibilities = find_reducibility(an, first)
    return rep


def find_reducibility(an: Analysis, labels: list[str] | None = None) -> list[Reducibility]:
    """Independent identities ``sum_A K_A C_A = 0`` among the given constraints.

    Coefficients: one smearing parameter (at most one derivative), invariant
    tensors and at most one coordinate field (covariant completion).
    """
    labels = an.model.labels if labels is None else labels
    cons = [c for c in an.constraints if c.label in labels]
    if not cons:
        return []
    Fd = _Field(an.constants)
    coords = [
        (f.name, f.slots, f.antisym) for f in an.model.fields.values() if f.kind == "coordinate"
    ]
    sigs: list[tuple] = []
    for c in cons:
        key = (c.slots, c.antisym)
        if key not in sigs:
            sigs.append(key)
    out = []
    pname = fresh_name(an.model, "mu")
    for slots, anti in sigs:
        p = Param(pname, slots)
        elements = _placeholder_basis(
            ansatz_elements([p], None, cons, an.spatial, 1, coords, 1), (p,), Fd
        )
        columns = [_vector(normal_form(expand(el.expr, cons), (p,)), Fd) for el in elements]
        null = _null_space(columns + _identity_columns(columns, Fd), Fd)
        rels = []
        for vec in null:
            terms = []
            for k, v in sorted(vec.items()):
                if k >= len(elements):
                    continue
                for c in Fd.coeffs(v):
                    terms += [Term(c * t.coeff, t.factors) for t in elements[k].expr.terms]
            rel = canonicalize(terms)
            if not rel.is_zero():
                rels.append(rel)
        rels = _independent(rels, Fd)
        for rel in rels:
            out.append(Reducibility(p, rel, component_count(slots, anti)))
    return out


def _placeholder_basis(elements: list[_Element], params, Fd: _Field) -> list[_Element]:
    """Integration-by-parts normal forms of the elements, reduced to an independent set.

    Combinations that are total derivatives at the placeholder level would
    otherwise show up as trivial relations.
    """
    nfs = [normal_form(el.expr, params) for el in elements]
    vecs, _ = _index_rows([_vector(e, Fd) for e in nfs])
    ech = _Echelon(Fd)
    out = []
    for el, e, v in zip(elements, nfs, vecs):
        if ech.add(v, len(out)):
            out.append(_Element(el.label, e))
    return out


def _independent(rels: list[Expression], Fd: _Field) -> list[Expression]:
    """Drop relations that are combinations of earlier ones or mere tensor identities."""
    cols = [_vector(r, Fd) for r in rels]
    ids = _identity_columns(cols, Fd)
    vecs, _ = _index_rows(ids + cols)
    ids, cols = vecs[: len(ids)], vecs[len(ids) :]
    ech = _Echelon(Fd)
    for k, c in enumerate(ids):
        ech.add(c, ("id", k))
    keep = []
    for r, c in zip(rels, cols):
        if ech.add(c, len(keep)):
            keep.append(r)
    return keep


@dataclass
class DofReport:
    variables: sympy.Expr
    first_class: sympy.Expr
    second_class: sympy.Expr
    reducibilities: sympy.Expr
    dof: sympy.Expr


def count_dof(an: Analysis, rep: ClassificationReport) -> DofReport:
    variables = sympy.Integer(0)
    for pr in an.structure.pairings:
        decl = an.model.fields[pr.q]
        variables += 2 * component_count(decl.slots, decl.antisym)
    mult = {c.label: c.multiplicity for c in an.constraints}
    first = sum((mult[a] for a in rep.first_class), sympy.Integer(0))
    second = sum((mult[a] for a in rep.second_class), sympy.Integer(0))
    red = sum((r.multiplicity for r in rep.reducibilities), sympy.Integer(0))
    dof = sympy.expand((variables - 2 * (first - red) - second) / 2)
    n = sympy.Symbol("N", positive=True, integer=True)
    vals = [dof.subs(n, k) if dof.free_symbols else dof for k in range(2, 6)]
    if all(v < 0 for v in vals):
        raise InconsistentCountError(
            f"negative dof: vars={variables}, first={first}, reducible={red}, second={second}"
        )
    return DofReport(*(sympy.expand(v) for v in (variables, first, second, red, dof)))


# ---------------------------------------------------------------------------
# Gauge transformations
# ---------------------------------------------------------------------------


def gauge_generator(an: Analysis, terms: list[tuple[str, str]]) -> SmearedFunctional:
    """``sum integral param * C`` for (constraint label, parameter name) pairs."""
    G = None
    for label, pname in terms:
        g = an.smeared(label, pname)
        G = g if G is None else G + g
    return G if G is not None else SmearedFunctional((), ZERO)


def gauge_transform(
    an: Analysis,
    generator: list[tuple[str, str]],
    name: str,
    first_class: list[str] | None = None,
) -> Expression:
    """``delta field = {field, G}`` with free indices named after the field's letters."""
    if first_class is not None:
        bad = [lab for lab, _ in generator if lab not in first_class]
        if bad:
            raise StructureError(f"gauge generator contains second-class constraints {bad}")
    decl = an.model.fields[name]
    G = gauge_generator(an, generator)
    probe = fresh_name(an.model, "rho", {p for _, p in generator})
    out_ix = _field_letters(decl.slots)
    body = canonicalize([Term(ONE, (Field(probe, out_ix, (), "", decl.antisym), Field(name, out_ix, (), "", decl.antisym)))])
    F = functional(body, (Param(probe, decl.slots),))
    R = poisson_bracket(F, G, an.structure).reorder((Param(probe, decl.slots),) + G.params)
    return strip_param(R, probe, out_ix)


def _field_letters(slots) -> tuple[Index, ...]:
    used: dict = {}
    out = []
    for fam in slots:
        k = used.get(fam, 0)
        used[fam] = k + 1
        out.append(Index(fam, fam.letters[k] if k < len(fam.letters) else f"{fam.letters[0]}{k}"))
    return tuple(out)


def strip_param(R: SmearedFunctional, probe: str, out_ix: tuple[Index, ...]) -> Expression:
    """Coefficient of the undifferentiated probe parameter, as an expression with free ``out_ix``."""
    terms = []
    for t in R.body.terms:
        occ = [f for f in t.factors if isinstance(f, Field) and f.name == probe]
        if len(occ) != 1 or occ[0].derivs:
            raise StructureError("probe parameter not in normal form")
        rest = tuple(f for f in t.factors if f is not occ[0])
        ties = tuple(Delta((a, b)) for a, b in zip(occ[0].indices, out_ix))
        terms.append(Term(t.coeff, rest + ties))
    return canonicalize(terms)
