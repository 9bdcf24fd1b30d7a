"""Tensor expressions with exact scalar coefficients and a canonical normal form.

An :class:`Expression` is a finite sum of terms.  Each term is a
:class:`Coeff` (exact rational times a Laurent monomial in named constants)
multiplying a tuple of factors: field occurrences, Levi-Civita symbols,
structure constants, Kronecker deltas and delta distributions.  Indices
occurring twice in a term are summed; indices occurring once are free.

Every public constructor returns canonical expressions, so structural
equality of two expressions is equality of the tensors they denote (up to
the identities that are not applied confluently: the Jacobi identity of the
structure constants and the dimension-specific Schouten identity, which are
handled as linear relations by the projection code).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, NamedTuple, Union

import sympy

IMAGINARY = "I"
DUMMY_PREFIX = "~"
DOT_PREFIX = "dot."


class StructureError(ValueError):
    """Malformed expression: index arity, family or multiplicity violation."""


# ---------------------------------------------------------------------------
# Index families and indices
# ---------------------------------------------------------------------------

N = sympy.Symbol("N", positive=True, integer=True)


@dataclass(frozen=True, eq=False)
class IndexFamily:
    """A set of index values sharing a range.

    Families compare and hash by name only; a model never declares two
    families with the same name.
    """

    name: str
    dimension: sympy.Expr
    has_epsilon: bool = False
    has_structure_constants: bool = False
    letters: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        dim = sympy.sympify(self.dimension, locals={"N": N})
        object.__setattr__(self, "dimension", dim)
        if self.has_epsilon and dim != 3:
            raise StructureError(
                f"family {self.name!r}: epsilon symbol requires dimension 3, got {dim}"
            )

    def __eq__(self, other: object) -> bool:
        return isinstance(other, IndexFamily) and other.name == self.name

    def __hash__(self) -> int:
        return hash(self.name)

    def __lt__(self, other: "IndexFamily") -> bool:
        return self.name < other.name

    def __repr__(self) -> str:
        return f"IndexFamily({self.name!r})"

    @property
    def concrete_dimension(self) -> int | None:
        return int(self.dimension) if self.dimension.is_Integer else None

    def same_as(self, other: "IndexFamily") -> bool:
        return (
            self.name == other.name
            and sympy.simplify(self.dimension - other.dimension) == 0
            and self.has_epsilon == other.has_epsilon
            and self.has_structure_constants == other.has_structure_constants
            and self.letters == other.letters
        )


class Index(NamedTuple):
    family: IndexFamily
    name: str

    @property
    def is_dummy_name(self) -> bool:
        return self.name.startswith(DUMMY_PREFIX)


# ---------------------------------------------------------------------------
# Scalar coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Coeff:
    """Exact rational times a monomial in named constants.

    ``mono`` is a sorted tuple of ``(constant, exponent)``.  The imaginary
    unit ``I`` is folded so its exponent is 0 or 1.
    """

    rational: Fraction
    mono: tuple[tuple[str, int], ...] = ()

    @staticmethod
    def make(rational: Union[int, Fraction], mono: Mapping[str, int] | Iterable = ()) -> "Coeff":
        r = Fraction(rational)
        exps: dict[str, int] = {}
        items = mono.items() if isinstance(mono, Mapping) else mono
        for name, e in items:
            exps[name] = exps.get(name, 0) + int(e)
        if IMAGINARY in exps:
            e = exps[IMAGINARY]
            if (e // 2) % 2:
                r = -r
            exps[IMAGINARY] = e % 2
        if r == 0:
            return ZERO_COEFF
        return Coeff(r, tuple(sorted((k, v) for k, v in exps.items() if v)))

    def __mul__(self, other: "Coeff") -> "Coeff":
        return Coeff.make(self.rational * other.rational, self.mono + other.mono)

    def __neg__(self) -> "Coeff":
        return Coeff(-self.rational, self.mono)

    def inverse(self) -> "Coeff":
        if self.rational == 0:
            raise ZeroDivisionError("zero coefficient is not invertible")
        mono = [(k, -v) for k, v in self.mono]
        r = 1 / self.rational
        if (IMAGINARY, 1) in self.mono:
            # 1/I = -I
            mono = [(k, v) for k, v in mono if k != IMAGINARY] + [(IMAGINARY, 1)]
            r = -r
        return Coeff.make(r, mono)

    def is_zero(self) -> bool:
        return self.rational == 0

    def to_sympy(self) -> sympy.Expr:
        out = sympy.Rational(self.rational.numerator, self.rational.denominator)
        for name, e in self.mono:
            base = sympy.I if name == IMAGINARY else sympy.Symbol(name)
            out *= base**e
        return out

    def render(self) -> str:
        r = self.rational
        parts = []
        if r.denominator == 1:
            parts.append(str(abs(r.numerator)))
        else:
            parts.append(f"{abs(r.numerator)}/{r.denominator}")
        for name, e in self.mono:
            parts.append(name if e == 1 else f"{name}^{e}")
        if len(parts) > 1 and parts[0] == "1":
            parts = parts[1:]
        body = "*".join(parts)
        return ("-" if r < 0 else "") + body


ZERO_COEFF = Coeff(Fraction(0))
ONE = Coeff(Fraction(1))


def coeff_from_sympy(value: sympy.Expr) -> list[Coeff]:
    """Split a sympy Laurent polynomial in the constants into monomial coefficients."""
    value = sympy.expand(value)
    out: list[Coeff] = []
    for term in sympy.Add.make_args(value):
        if term == 0:
            continue
        rat = Fraction(1)
        mono: list[tuple[str, int]] = []
        for f in sympy.Mul.make_args(term):
            if f.is_Rational:
                rat *= Fraction(int(f.p), int(f.q))
            elif f == sympy.I:
                mono.append((IMAGINARY, 1))
            elif f.is_Pow and f.base.is_Symbol and f.exp.is_Integer:
                mono.append((f.base.name, int(f.exp)))
            elif f.is_Symbol:
                mono.append((f.name, 1))
            elif f.is_Pow and f.base == sympy.I:
                mono.append((IMAGINARY, int(f.exp)))
            else:
                raise StructureError(f"coefficient {term} is not a monomial in the constants")
        out.append(Coeff.make(rat, mono))
    return out


# ---------------------------------------------------------------------------
# Factors
# ---------------------------------------------------------------------------


class Field(NamedTuple):
    """Occurrence of a field (or smearing parameter) with spatial derivatives."""

    name: str
    indices: tuple[Index, ...]
    derivs: tuple[Index, ...] = ()
    point: str = ""
    antisym: tuple[tuple[int, ...], ...] = ()


class Eps(NamedTuple):
    family: IndexFamily
    indices: tuple[Index, ...]


class Struct(NamedTuple):
    family: IndexFamily
    indices: tuple[Index, ...]


class Delta(NamedTuple):
    indices: tuple[Index, Index]


class DeltaDist(NamedTuple):
    points: tuple[str, str]
    derivs: tuple[Index, ...] = ()


Factor = Union[Field, Eps, Struct, Delta, DeltaDist]
_RANK = {Field: 0, Eps: 1, Struct: 2, Delta: 3, DeltaDist: 4}


def factor_indices(f: Factor) -> tuple[Index, ...]:
    if isinstance(f, Field):
        return f.indices + f.derivs
    if isinstance(f, DeltaDist):
        return f.derivs
    return f.indices


def _relabel_factor(f: Factor, m: Mapping[Index, Index]) -> Factor:
    g = lambda ix: tuple(m.get(i, i) for i in ix)  # noqa: E731
    if isinstance(f, Field):
        return f._replace(indices=g(f.indices), derivs=g(f.derivs))
    if isinstance(f, DeltaDist):
        return f._replace(derivs=g(f.derivs))
    return f._replace(indices=g(f.indices))


def _parity(seq: tuple) -> int:
    inv = 0
    for a in range(len(seq)):
        for b in range(a + 1, len(seq)):
            if seq[b] < seq[a]:
                inv += 1
    return -1 if inv % 2 else 1


def _index_key(i: Index) -> tuple:
    return (i.family.name, i.name)


def _sorted_with_sign(ix: tuple[Index, ...]) -> tuple[int, tuple[Index, ...]]:
    keys = tuple(_index_key(i) for i in ix)
    return _parity(keys), tuple(sorted(ix, key=_index_key))


def _normalize_factor(f: Factor) -> tuple[int, Factor | None]:
    """Order symmetric/antisymmetric slots; returns sign and factor (None if zero)."""
    if isinstance(f, (Eps, Struct)):
        if len(set(f.indices)) < len(f.indices):
            return 0, None
        s, ix = _sorted_with_sign(f.indices)
        return s, f._replace(indices=ix)
    if isinstance(f, Delta):
        return 1, f._replace(indices=tuple(sorted(f.indices, key=_index_key)))
    if isinstance(f, DeltaDist):
        return 1, f._replace(derivs=tuple(sorted(f.derivs, key=_index_key)))
    sign = 1
    ix = list(f.indices)
    for group in f.antisym:
        vals = tuple(ix[p] for p in group)
        if len(set(vals)) < len(vals):
            return 0, None
        s, sv = _sorted_with_sign(vals)
        sign *= s
        for p, v in zip(group, sv):
            ix[p] = v
    return sign, f._replace(indices=tuple(ix), derivs=tuple(sorted(f.derivs, key=_index_key)))


def _factor_key(f: Factor) -> tuple:
    if isinstance(f, Field):
        return (
            0,
            f.name,
            tuple(_index_key(i) for i in f.derivs),
            f.point,
            tuple(_index_key(i) for i in f.indices),
        )
    if isinstance(f, DeltaDist):
        return (4, f.points, tuple(_index_key(i) for i in f.derivs))
    if isinstance(f, (Eps, Struct)):
        return (_RANK[type(f)], f.family.name, tuple(_index_key(i) for i in f.indices))
    return (3, tuple(_index_key(i) for i in f.indices))


# ---------------------------------------------------------------------------
# Term canonicalization
# ---------------------------------------------------------------------------


def _count(factors: Iterable[Factor]) -> dict[Index, int]:
    counts: dict[Index, int] = {}
    for f in factors:
        for i in factor_indices(f):
            counts[i] = counts.get(i, 0) + 1
    return counts


def _check_counts(factors: tuple[Factor, ...]) -> dict[Index, int]:
    counts = _count(factors)
    for i, c in counts.items():
        if c > 2:
            culprit = next(f for f in factors if i in factor_indices(f))
            raise StructureError(f"index {i.name!r} occurs {c} times in a term (at {culprit})")
    return counts


def _expand_epsilons(factors: tuple[Factor, ...]) -> list[tuple[int, tuple[Factor, ...]]]:
    """Rewrite each same-family epsilon pair as a determinant of deltas."""
    for a, fa in enumerate(factors):
        if not isinstance(fa, Eps):
            continue
        for b in range(a + 1, len(factors)):
            fb = factors[b]
            if isinstance(fb, Eps) and fb.family == fa.family:
                rest = tuple(f for k, f in enumerate(factors) if k not in (a, b))
                out = []
                for perm in itertools.permutations(range(3)):
                    sign = _parity(perm)
                    deltas = tuple(
                        Delta((fa.indices[r], fb.indices[perm[r]])) for r in range(3)
                    )
                    for s2, sub in _expand_epsilons(rest + deltas):
                        out.append((sign * s2, sub))
                return out
    return [(1, factors)]


def _contract_deltas(factors: tuple[Factor, ...]) -> tuple[Fraction, tuple[Factor, ...]] | None:
    """Execute Kronecker contractions. Returns (multiplier, factors)."""
    mult = Fraction(1)
    facs = list(factors)
    changed = True
    while changed:
        changed = False
        counts = _count(facs)
        for k, f in enumerate(facs):
            if not isinstance(f, Delta):
                continue
            i, j = f.indices
            if i.family != j.family:
                raise StructureError(f"delta between families {i.family.name} and {j.family.name}")
            if i == j:
                dim = i.family.concrete_dimension
                if dim is None:
                    raise StructureError(
                        f"trace over symbolic family {i.family.name!r} is not supported"
                    )
                mult *= dim
                del facs[k]
                changed = True
                break
            if counts[i] == 2 or counts[j] == 2:
                old, new = (i, j) if counts[i] == 2 else (j, i)
                del facs[k]
                facs = [_relabel_factor(g, {old: new}) for g in facs]
                changed = True
                break
    return mult, tuple(facs)


def _occurrence_classes(factors: tuple[Factor, ...], dummies: set[Index]) -> dict[Index, str]:
    """Relabeling-invariant colour of each dummy index."""

    def sig(ix: tuple[Index, ...]) -> tuple:
        return tuple(("~", i.family.name) if i in dummies else (i.family.name, i.name) for i in ix)

    fsigs = []
    for f in factors:
        if isinstance(f, Field):
            ix = list(sig(f.indices))
            for g in f.antisym:
                vals = sorted(ix[p] for p in g)
                for p, v in zip(g, vals):
                    ix[p] = v
            fsigs.append(repr((0, f.name, tuple(ix), tuple(sorted(sig(f.derivs))), f.point, f.antisym)))
        elif isinstance(f, DeltaDist):
            fsigs.append(repr((4, f.points, tuple(sorted(sig(f.derivs))))))
        else:
            fsigs.append(repr((_RANK[type(f)], tuple(sorted(sig(f.indices))))))
    occ: dict[Index, list[str]] = {d: [] for d in dummies}
    for fs, f in zip(fsigs, factors):
        if isinstance(f, Field):
            grp = {p: g for g, grp in enumerate(f.antisym) for p in grp}
            for p, i in enumerate(f.indices):
                if i in dummies:
                    occ[i].append(fs + (f"|g{grp[p]}" if p in grp else f"|p{p}"))
            for i in f.derivs:
                if i in dummies:
                    occ[i].append(fs + "|d")
        else:
            for i in factor_indices(f):
                if i in dummies:
                    occ[i].append(fs + "|s")
    return {d: "&".join(sorted(v)) for d, v in occ.items()}


_MAX_LABELINGS = 200_000


@lru_cache(maxsize=500_000)
def canonical_term(factors: tuple[Factor, ...]) -> tuple[tuple[Fraction, tuple[Factor, ...]], ...]:
    """Canonicalize one monomial; returns a tuple of (multiplier, factors) pieces.

    Epsilon pairs expand into several pieces; an empty result means zero.
    """
    _check_counts(factors)
    pieces: dict[tuple[Factor, ...], Fraction] = {}
    for sign, facs in _expand_epsilons(factors):
        res = _contract_deltas(facs)
        if res is None:
            continue
        mult, facs = res
        one = _canon_labeling(facs)
        if one is None:
            continue
        s2, key = one
        pieces[key] = pieces.get(key, Fraction(0)) + sign * s2 * mult
    return tuple((v, k) for k, v in pieces.items() if v != 0)


def _canon_labeling(factors: tuple[Factor, ...]) -> tuple[int, tuple[Factor, ...]] | None:
    counts = _check_counts(factors)
    for f in factors:
        s, g = _normalize_factor(f)
        if g is None:
            return None
    dummies = {i for i, c in counts.items() if c == 2}
    colours = _occurrence_classes(factors, dummies)
    classes: dict[tuple[str, str], list[Index]] = {}
    for d in sorted(dummies, key=_index_key):
        classes.setdefault((d.family.name, colours[d]), []).append(d)
    ordered = sorted(classes.items())
    total = 1
    for _, members in ordered:
        for k in range(2, len(members) + 1):
            total *= k
    if total > _MAX_LABELINGS:
        raise StructureError(f"term too symmetric to canonicalize ({total} labelings)")

    best_key = None
    best_sign = 0
    best_facs: tuple[Factor, ...] = ()
    perms = [list(itertools.permutations(members)) for _, members in ordered]
    for choice in itertools.product(*perms):
        mapping: dict[Index, Index] = {}
        counter: dict[str, int] = {}
        for members in choice:
            for d in members:
                n = counter.get(d.family.name, 0)
                counter[d.family.name] = n + 1
                mapping[d] = Index(d.family, f"{DUMMY_PREFIX}{n}")
        sign = 1
        out = []
        for f in factors:
            s, g = _normalize_factor(_relabel_factor(f, mapping))
            sign *= s
            out.append(g)
        out.sort(key=_factor_key)
        key = tuple(_factor_key(g) for g in out)
        if best_key is None or key < best_key:
            best_key, best_sign, best_facs = key, sign, tuple(out)
        elif key == best_key and sign != best_sign:
            return None
    return best_sign, best_facs


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


class Term(NamedTuple):
    coeff: Coeff
    factors: tuple[Factor, ...]


def _term_key(t: Term) -> tuple:
    return (tuple(_factor_key(f) for f in t.factors), t.coeff.mono, t.coeff.rational)


def _free_of(factors: tuple[Factor, ...]) -> frozenset[Index]:
    return frozenset(i for i, c in _count(factors).items() if c == 1)


@dataclass(frozen=True, eq=False)
class Expression:
    """Canonical sum of terms.  Construct through :func:`canonicalize` or the helpers."""

    terms: tuple[Term, ...] = ()
    free: frozenset[Index] = field(default=frozenset())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Expression) and self.terms == other.terms

    def __hash__(self) -> int:
        return hash(self.terms)

    def __bool__(self) -> bool:
        return bool(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "Expression") -> "Expression":
        return add(self, other)

    def __sub__(self, other: "Expression") -> "Expression":
        return add(self, other.scale(Coeff.make(-1)))

    def __neg__(self) -> "Expression":
        return self.scale(Coeff.make(-1))

    def __mul__(self, other: "Expression") -> "Expression":
        return multiply(self, other)

    def scale(self, c: Coeff) -> "Expression":
        if c.is_zero():
            return ZERO
        return canonicalize([Term(t.coeff * c, t.factors) for t in self.terms])

    def fields(self) -> set[str]:
        return {f.name for t in self.terms for f in t.factors if isinstance(f, Field)}

    def __repr__(self) -> str:
        return f"Expression({render(self)!r})"


ZERO = Expression()


def canonicalize(terms: Iterable[Term] | Expression) -> Expression:
    """Return the unique normal form of a sum of (not necessarily canonical) terms."""
    if isinstance(terms, Expression):
        terms = terms.terms
    acc: dict[tuple[tuple[Factor, ...], tuple], Fraction] = {}
    free_sig: frozenset[Index] | None = None
    for t in terms:
        if t.coeff.is_zero():
            continue
        fs = _free_of(t.factors)
        if free_sig is None:
            free_sig = fs
        elif fs != free_sig:
            raise StructureError(
                "terms with different free indices: "
                f"{sorted(i.name for i in free_sig)} vs {sorted(i.name for i in fs)}"
            )
        for mult, facs in canonical_term(tuple(t.factors)):
            key = (facs, t.coeff.mono)
            acc[key] = acc.get(key, Fraction(0)) + t.coeff.rational * mult
    out = [Term(Coeff(v, mono), facs) for (facs, mono), v in acc.items() if v != 0]
    out.sort(key=_term_key)
    return Expression(tuple(out), free_sig if out and free_sig is not None else frozenset())


def from_factors(factors: Iterable[Factor], coeff: Coeff = ONE) -> Expression:
    return canonicalize([Term(coeff, tuple(factors))])


def scalar(c: Coeff | int | Fraction) -> Expression:
    if not isinstance(c, Coeff):
        c = Coeff.make(c)
    return canonicalize([Term(c, ())])


def add(*exprs: Expression) -> Expression:
    terms = [t for e in exprs for t in e.terms]
    return canonicalize(terms)


def _rename_dummies(e: Expression | Iterable[Term], tag: str) -> list[Term]:
    """Rename summed indices of every term to tagged temporaries."""
    terms = e.terms if isinstance(e, Expression) else e
    out = []
    for t in terms:
        counts = _count(t.factors)
        m = {
            i: Index(i.family, f"{DUMMY_PREFIX}{tag}{i.name.lstrip(DUMMY_PREFIX)}")
            for i, c in counts.items()
            if c == 2
        }
        out.append(Term(t.coeff, tuple(_relabel_factor(f, m) for f in t.factors)))
    return out


def multiply(a: Expression, b: Expression) -> Expression:
    """Distributed product; shared free index names contract."""
    if a.is_zero() or b.is_zero():
        return ZERO
    ta = _rename_dummies(a, "a")
    tb = _rename_dummies(b, "b")
    return canonicalize(Term(x.coeff * y.coeff, x.factors + y.factors) for x in ta for y in tb)


def product(*exprs: Expression) -> Expression:
    out = scalar(1)
    for e in exprs:
        out = multiply(out, e)
    return out


def relabel_free(e: Expression, mapping: Mapping[Index, Index]) -> Expression:
    """Rename free indices (targets must not collide with dummies)."""
    if not mapping:
        return e
    return canonicalize(
        Term(t.coeff, tuple(_relabel_factor(f, mapping) for f in t.factors)) for t in e.terms
    )


def derivative(e: Expression, index: Index) -> Expression:
    """Spatial partial derivative, applied by the Leibniz rule."""
    out = []
    for t in _rename_dummies(e, "d"):
        for k, f in enumerate(t.factors):
            if isinstance(f, Field):
                g = f._replace(derivs=f.derivs + (index,))
                out.append(Term(t.coeff, t.factors[:k] + (g,) + t.factors[k + 1 :]))
            elif isinstance(f, DeltaDist):
                g = f._replace(derivs=f.derivs + (index,))
                out.append(Term(t.coeff, t.factors[:k] + (g,) + t.factors[k + 1 :]))
    return canonicalize(out)


def derivatives(e: Expression, indices: Iterable[Index]) -> Expression:
    for i in indices:
        e = derivative(e, i)
    return e


def fresh_index(family: IndexFamily, taken: set[str], stem: str = "u") -> Index:
    k = 0
    while f"{stem}{k}" in taken:
        k += 1
    taken.add(f"{stem}{k}")
    return Index(family, f"{stem}{k}")


def substitute_field(
    e: Expression,
    name: str,
    slots: tuple[Index, ...],
    replacement: Expression,
) -> Expression:
    """Replace every occurrence of field ``name``.

    ``slots`` names the free indices of ``replacement`` in the field's slot
    order.  Derivative occurrences receive the derivative of the replacement.
    """
    if not replacement.is_zero() and set(slots) != set(replacement.free):
        raise StructureError(
            f"replacement for {name!r} has free indices "
            f"{sorted(i.name for i in replacement.free)}, expected {[i.name for i in slots]}"
        )
    if len(set(slots)) != len(slots):
        raise StructureError("substitution slots must be distinct")
    out: list[Term] = []
    for t in _rename_dummies(e, "t"):
        occ = [f for f in t.factors if isinstance(f, Field) and f.name == name]
        if not occ:
            out.append(t)
            continue
        rest = tuple(f for f in t.factors if not (isinstance(f, Field) and f.name == name))
        acc = [Term(t.coeff, rest)]
        for n_occ, f in enumerate(occ):
            if len(f.indices) != len(slots) or any(
                a.family != b.family for a, b in zip(f.indices, slots)
            ):
                raise StructureError(f"occurrence of {name!r} does not match the slot signature")
            rep = _rename_dummies(replacement, f"r{n_occ}_")
            mapping = dict(zip(slots, f.indices))
            rep = [Term(r.coeff, tuple(_relabel_factor(x, mapping) for x in r.factors)) for r in rep]
            rep = _raw_derivatives(rep, f.derivs)
            acc = [Term(x.coeff * y.coeff, x.factors + y.factors) for x in acc for y in rep]
        out.extend(acc)
    return canonicalize(out)


def _raw_derivatives(terms: list[Term], derivs: tuple[Index, ...]) -> list[Term]:
    for d in derivs:
        nxt = []
        for t in terms:
            for k, f in enumerate(t.factors):
                if isinstance(f, (Field, DeltaDist)):
                    g = f._replace(derivs=f.derivs + (d,))
                    nxt.append(Term(t.coeff, t.factors[:k] + (g,) + t.factors[k + 1 :]))
        terms = nxt
    return terms


def field_names(e: Expression) -> set[str]:
    return e.fields()


def map_terms(e: Expression, fn) -> Expression:
    """Apply ``fn(term) -> iterable of terms`` and recanonicalize."""
    return canonicalize(t2 for t in e.terms for t2 in fn(t))


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _dummy_names(e_terms: Iterable[Term], free: frozenset[Index]) -> dict[Index, str]:
    taken = {i.name for i in free}
    names: dict[Index, str] = {}
    per_family: dict[IndexFamily, list[Index]] = {}
    for t in e_terms:
        for f in t.factors:
            for i in factor_indices(f):
                if i.is_dummy_name and i not in names:
                    per_family.setdefault(i.family, []).append(i)
                    names[i] = ""
    for fam, dums in per_family.items():
        pool = [x for x in fam.letters if x not in taken] or ["x"]
        dums = sorted(set(dums), key=lambda i: (len(i.name), i.name))
        for k, d in enumerate(dums):
            if k < len(pool):
                names[d] = pool[k]
            else:
                base = pool[0]
                n = k - len(pool) + 1
                while f"{base}{n}" in taken:
                    n += 1
                names[d] = f"{base}{n}"
            taken.add(names[d])
    return names


def _render_factor(f: Factor, nm) -> str:
    if isinstance(f, Field):
        body = f.name[len(DOT_PREFIX):] if f.name.startswith(DOT_PREFIX) else f.name
        if f.indices:
            body += "[" + ",".join(nm(i) for i in f.indices) + "]"
        if f.point:
            body += "@" + f.point
        if f.name.startswith(DOT_PREFIX):
            body = f"dot({body})"
        for d in reversed(f.derivs):
            body = f"d_{nm(d)}({body})"
        return body
    if isinstance(f, Eps):
        return "eps(" + ",".join(nm(i) for i in f.indices) + ")"
    if isinstance(f, Struct):
        return "f(" + ",".join(nm(i) for i in f.indices) + ")"
    if isinstance(f, Delta):
        return "delta(" + ",".join(nm(i) for i in f.indices) + ")"
    body = f"delta3({f.points[0]},{f.points[1]})"
    for d in reversed(f.derivs):
        body = f"d_{nm(d)}({body})"
    return body


def render(e: Expression) -> str:
    """Stable text form of a canonical expression (DSL expression syntax)."""
    if e.is_zero():
        return "0"
    names = _dummy_names(e.terms, e.free)
    nm = lambda i: names.get(i, i.name)  # noqa: E731
    out = []
    for k, t in enumerate(e.terms):
        c = t.coeff.render()
        neg = c.startswith("-")
        c = c.lstrip("-")
        facs = [_render_factor(f, nm) for f in t.factors]
        if c == "1" and facs:
            body = "*".join(facs)
        else:
            body = "*".join([c] + facs)
        if k == 0:
            out.append(("-" if neg else "") + body)
        else:
            out.append((" - " if neg else " + ") + body)
    return "".join(out)


def to_sympy_terms(e: Expression) -> dict[tuple[Factor, ...], sympy.Expr]:
    """Group terms by factor structure, coefficients as sympy Laurent polynomials."""
    out: dict[tuple[Factor, ...], sympy.Expr] = {}
    for t in e.terms:
        out[t.factors] = out.get(t.factors, sympy.Integer(0)) + t.coeff.to_sympy()
    return out
