"""Model-definition language: parse, validate and serialize extended actions.

A model file is line oriented.  Each non-blank line starts with a keyword::

    model second_chern
    constants Xi
    family so3 dim 3 epsilon letters i j k l m n
    field Upsilon coordinate so3 space
    kinetic dot(Upsilon[i,a])*pi[a,i]
    constraint phi[i] := d_a(pi[a,i]) + eps(i,j,k)*P[a,k]*omega[a,j]
    coupling tau[i]*phi[i]
    hamiltonian 1/2*Pi[i,a]*Pi[i,a]

A trailing backslash continues a line; ``#`` starts a comment.  The full
token set is in ``grammar.ebnf`` next to this module.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import sympy

from .expr import (
    DOT_PREFIX,
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
    N,
    StructureError,
    Struct,
    canonicalize,
    derivative,
    from_factors,
    multiply,
    render,
    scalar,
)

KINDS = ("coordinate", "momentum", "multiplier")
RESERVED = {"eps", "f", "delta", "delta3", "dot", "d", "I"}
CONVENTIONS = ("kinetic", "printed")


class DSLError(ValueError):
    """Parse or resolution failure, with a source position."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Diagnostic:
    message: str
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.message}"


@dataclass
class FieldDecl:
    name: str
    kind: str
    slots: tuple[IndexFamily, ...]
    antisym: tuple[tuple[int, ...], ...] = ()
    weight: int = 0
    pos: tuple[int, int] = field(default=(0, 0), compare=False)

    def occurrence(self, indices: tuple[Index, ...], derivs: tuple[Index, ...] = ()) -> Field:
        return Field(self.name, indices, derivs, "", self.antisym)


@dataclass
class ConstraintDecl:
    label: str
    indices: tuple[Index, ...]
    body: Expression
    pos: tuple[int, int] = field(default=(0, 0), compare=False)

    @property
    def slots(self) -> tuple[IndexFamily, ...]:
        return tuple(i.family for i in self.indices)

    def reference(self, indices: tuple[Index, ...] | None = None) -> Field:
        """A placeholder factor standing for this constraint."""
        return Field(self.label, indices if indices is not None else self.indices)


@dataclass
class ModelDef:
    name: str
    constants: tuple[str, ...] = ()
    families: dict[str, IndexFamily] = field(default_factory=dict)
    fields: dict[str, FieldDecl] = field(default_factory=dict)
    kinetic: Expression = ZERO
    constraints: list[ConstraintDecl] = field(default_factory=list)
    couplings: Expression = ZERO
    hamiltonian: Expression = ZERO
    sign_convention: str = "kinetic"
    printed_brackets: dict[tuple[str, str], Coeff] = field(default_factory=dict)
    positions: dict[str, tuple[int, int]] = field(default_factory=dict, compare=False)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ModelDef):
            return NotImplemented
        return (
            self.name == other.name
            and self.constants == other.constants
            and self.families.keys() == other.families.keys()
            and all(f.same_as(other.families[k]) for k, f in self.families.items())
            and self.fields == other.fields
            and self.kinetic == other.kinetic
            and self.constraints == other.constraints
            and self.couplings == other.couplings
            and self.hamiltonian == other.hamiltonian
            and self.sign_convention == other.sign_convention
            and self.printed_brackets == other.printed_brackets
        )

    def fields_of_kind(self, kind: str) -> list[FieldDecl]:
        return [f for f in self.fields.values() if f.kind == kind]

    def constraint(self, label: str) -> ConstraintDecl:
        for c in self.constraints:
            if c.label == label:
                return c
        raise KeyError(label)

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.constraints]

    def family_of_letter(self, name: str) -> IndexFamily | None:
        base = name.rstrip("0123456789")
        for fam in self.families.values():
            if base in fam.letters:
                return fam
        return None

    def expand_constraints(self, e: Expression) -> Expression:
        """Replace constraint placeholders by their bodies."""
        from .expr import substitute_field

        for c in self.constraints:
            if c.label in e.fields():
                e = substitute_field(e, c.label, c.indices, c.body)
        return e

    def extended_hamiltonian(self) -> Expression:
        return self.hamiltonian + self.expand_constraints(self.couplings)


# ---------------------------------------------------------------------------
# Tokenizer and expression parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t]+)
  | (?P<deriv>d_[A-Za-z][A-Za-z0-9]*)
  | (?P<num>\d+)
  | (?P<name>[A-Za-z][A-Za-z0-9]*)
  | (?P<op>:=|[-+*/^()\[\],@])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


def _tokenize(text: str, line: int, col0: int) -> list[_Tok]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise DSLError(f"unexpected character {text[pos]!r}", line, col0 + pos)
        kind = m.lastgroup
        if kind != "ws":
            out.append(_Tok(kind, m.group(), col0 + pos))
        pos = m.end()
    out.append(_Tok("end", "", col0 + pos))
    return out


class ExprParser:
    """Recursive-descent parser for one expression.

    ``symbols`` maps factor names to their slot families and antisymmetry;
    names not found there must be declared constants.
    """

    def __init__(self, model: ModelDef, symbols: dict[str, tuple], line: int, allow_dot=False):
        self.model = model
        self.symbols = symbols
        self.line = line
        self.allow_dot = allow_dot

    def parse(self, text: str, col0: int = 1) -> Expression:
        self.toks = _tokenize(text, self.line, col0)
        self.k = 0
        e = self._sum()
        if self._peek().kind != "end":
            self._fail(f"unexpected {self._peek().text!r}")
        return e

    # helpers
    def _peek(self) -> _Tok:
        return self.toks[self.k]

    def _next(self) -> _Tok:
        t = self.toks[self.k]
        self.k += 1
        return t

    def _fail(self, msg: str, tok: _Tok | None = None):
        tok = tok or self._peek()
        raise DSLError(msg, self.line, tok.col)

    def _expect(self, text: str) -> _Tok:
        t = self._next()
        if t.text != text:
            self._fail(f"expected {text!r}, found {t.text!r}", t)
        return t

    def _wrap(self, fn, tok):
        try:
            return fn()
        except StructureError as exc:
            raise DSLError(str(exc), self.line, tok.col) from exc

    # grammar
    def _sum(self) -> Expression:
        tok = self._peek()
        sign = 1
        if tok.text in "+-" and tok.kind == "op":
            self._next()
            sign = -1 if tok.text == "-" else 1
        acc = self._product()
        if sign < 0:
            acc = -acc
        while self._peek().text in ("+", "-") and self._peek().kind == "op":
            op = self._next()
            rhs = self._product()
            acc = self._wrap(lambda: acc + rhs if op.text == "+" else acc - rhs, op)
        return acc

    def _product(self) -> Expression:
        acc = self._unary()
        while self._peek().text in ("*", "/") and self._peek().kind == "op":
            op = self._next()
            rhs = self._unary()
            if op.text == "*":
                acc = self._wrap(lambda: multiply(acc, rhs), op)
            else:
                c = _as_coeff(rhs)
                if c is None:
                    self._fail("division only by a scalar monomial", op)
                acc = acc.scale(c.inverse())
        return acc

    def _unary(self) -> Expression:
        if self._peek().text == "-" and self._peek().kind == "op":
            self._next()
            return -self._unary()
        return self._power()

    def _power(self) -> Expression:
        base = self._atom()
        if self._peek().text == "^":
            op = self._next()
            neg = False
            if self._peek().text == "-":
                self._next()
                neg = True
            t = self._next()
            if t.kind != "num":
                self._fail("exponent must be an integer", t)
            c = _as_coeff(base)
            if c is None:
                self._fail("only scalar monomials can be raised to a power", op)
            e = int(t.text)
            out = ONE
            for _ in range(e):
                out = out * c
            if neg:
                out = out.inverse()
            return scalar(out)
        return base

    def _indices(self, close: str) -> list[tuple[Index, _Tok]]:
        out = []
        if self._peek().text == close:
            self._next()
            return out
        while True:
            t = self._next()
            if t.kind != "name":
                self._fail(f"expected index name, found {t.text!r}", t)
            fam = self.model.family_of_letter(t.text)
            if fam is None:
                self._fail(f"unknown index family for index {t.text!r}", t)
            out.append((Index(fam, t.text), t))
            sep = self._next()
            if sep.text == close:
                return out
            if sep.text != ",":
                self._fail(f"expected ',' or {close!r}", sep)

    def _atom(self) -> Expression:
        t = self._next()
        if t.kind == "num":
            val = Fraction(int(t.text))
            return scalar(val)
        if t.text == "(":
            e = self._sum()
            self._expect(")")
            return e
        if t.kind == "deriv":
            name = t.text[2:]
            fam = self.model.family_of_letter(name)
            if fam is None:
                self._fail(f"unknown index family for derivative index {name!r}", t)
            self._expect("(")
            inner = self._sum()
            self._expect(")")
            return self._wrap(lambda: derivative(inner, Index(fam, name)), t)
        if t.kind != "name":
            self._fail(f"unexpected {t.text!r}", t)
        name = t.text
        if name == "dot":
            if not self.allow_dot:
                self._fail("time derivatives are only allowed in the kinetic term", t)
            self._expect("(")
            inner = self._atom()
            self._expect(")")
            if len(inner.terms) != 1 or len(inner.terms[0].factors) != 1:
                self._fail("dot() takes a single field occurrence", t)
            f = inner.terms[0].factors[0]
            if not isinstance(f, Field):
                self._fail("dot() takes a single field occurrence", t)
            return from_factors([f._replace(name=DOT_PREFIX + f.name)], inner.terms[0].coeff)
        if name in ("eps", "f", "delta"):
            self._expect("(")
            ix = self._indices(")")
            idx = tuple(i for i, _ in ix)
            if name == "delta":
                if len(idx) != 2 or idx[0].family != idx[1].family:
                    self._fail("delta takes two indices of one family", t)
                return self._wrap(lambda: from_factors([Delta(idx)]), t)
            fam = idx[0].family if idx else None
            if len(idx) != 3 or any(i.family != fam for i in idx):
                self._fail(f"{name} takes three indices of one family", t)
            if name == "eps" and not fam.has_epsilon:
                self._fail(f"family {fam.name!r} has no epsilon symbol", t)
            if name == "f" and not fam.has_structure_constants:
                self._fail(f"family {fam.name!r} has no structure constants", t)
            cls = Eps if name == "eps" else Struct
            return self._wrap(lambda: from_factors([cls(fam, idx)]), t)
        if name == IMAGINARY:
            return scalar(Coeff.make(1, {IMAGINARY: 1}))
        if name in self.symbols:
            slots, antisym = self.symbols[name]
            ix: list = []
            if self._peek().text == "[":
                self._next()
                ix = self._indices("]")
            if len(ix) != len(slots):
                self._fail(f"{name} takes {len(slots)} indices, got {len(ix)}", t)
            for (i, it), fam in zip(ix, slots):
                if i.family != fam:
                    self._fail(f"index {i.name!r} is not in family {fam.name!r}", it)
            point = ""
            if self._peek().text == "@":
                self._next()
                point = self._next().text
            occ = Field(name, tuple(i for i, _ in ix), (), point, antisym)
            return self._wrap(lambda: from_factors([occ]), t)
        if name in self.model.constants:
            return scalar(Coeff.make(1, {name: 1}))
        self._fail(f"unknown symbol {name!r}", t)


def _as_coeff(e: Expression) -> Coeff | None:
    if len(e.terms) == 1 and not e.terms[0].factors:
        return e.terms[0].coeff
    return None


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------


def _logical_lines(text: str) -> Iterator[tuple[int, str]]:
    buf = ""
    start = 0
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not buf:
            start = n
        if line.endswith("\\"):
            buf += line[:-1] + " "
            continue
        buf += line
        if buf.strip():
            yield start, buf
        buf = ""
    if buf.strip():
        yield start, buf


def symbol_table(m: ModelDef, extra: dict[str, tuple] | None = None, constraints=True) -> dict:
    table = {f.name: (f.slots, f.antisym) for f in m.fields.values()}
    if constraints:
        for c in m.constraints:
            table[c.label] = (c.slots, ())
    if extra:
        table.update(extra)
    return table


def parse_expression(
    m: ModelDef, text: str, extra: dict[str, tuple] | None = None, line: int = 0
) -> Expression:
    """Parse an expression in the context of a model (fields, constraints, extras)."""
    return ExprParser(m, symbol_table(m, extra), line).parse(text)


def parse_model(text: str) -> ModelDef:
    """Parse a model file.  Raises :class:`DSLError` on the first hard error."""
    m = ModelDef(name="")
    seen_header = False
    kinetic: list[Expression] = []
    couplings: list[Expression] = []
    hamiltonian: list[Expression] = []
    for line, src in _logical_lines(text):
        stripped = src.lstrip()
        col0 = len(src) - len(stripped) + 1
        kw, _, rest = stripped.partition(" ")
        rest_col = col0 + len(kw) + 1
        rest = rest.strip()
        if kw == "model":
            if seen_header:
                raise DSLError("duplicate model header", line, col0)
            if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", rest):
                raise DSLError("model name must be an identifier", line, rest_col)
            m.name = rest
            seen_header = True
            continue
        if not seen_header:
            raise DSLError("file must start with 'model <name>'", line, col0)
        if kw == "constants":
            for name in rest.split():
                if name in m.constants or name in RESERVED:
                    raise DSLError(f"duplicate or reserved constant {name!r}", line, rest_col)
                m.constants = m.constants + (name,)
                m.positions[f"constant:{name}"] = (line, rest_col)
        elif kw == "family":
            _parse_family(m, rest, line, rest_col)
        elif kw == "field":
            _parse_field(m, rest, line, rest_col)
        elif kw == "kinetic":
            p = ExprParser(m, symbol_table(m, constraints=False), line, allow_dot=True)
            kinetic.append(p.parse(rest, rest_col))
            m.positions.setdefault("kinetic", (line, col0))
        elif kw == "constraint":
            _parse_constraint(m, rest, line, rest_col)
        elif kw == "coupling":
            couplings.append(ExprParser(m, symbol_table(m), line).parse(rest, rest_col))
            m.positions.setdefault("coupling", (line, col0))
        elif kw == "hamiltonian":
            hamiltonian.append(
                ExprParser(m, symbol_table(m, constraints=False), line).parse(rest, rest_col)
            )
            m.positions.setdefault("hamiltonian", (line, col0))
        elif kw == "sign_convention":
            if rest not in CONVENTIONS:
                raise DSLError(f"sign_convention must be one of {CONVENTIONS}", line, rest_col)
            m.sign_convention = rest
        elif kw == "printed_bracket":
            mt = re.fullmatch(r"(\w+)\s+(\w+)\s*:=\s*(.+)", rest)
            if not mt:
                raise DSLError("expected 'printed_bracket <q> <p> := <coeff>'", line, rest_col)
            q, p, ctext = mt.groups()
            for nm in (q, p):
                if nm not in m.fields:
                    raise DSLError(f"unknown field {nm!r}", line, rest_col)
            e = ExprParser(m, {}, line).parse(ctext, rest_col + mt.start(3))
            c = _as_coeff(e)
            if c is None:
                raise DSLError("printed bracket coefficient must be a scalar monomial", line, rest_col)
            m.printed_brackets[(q, p)] = c
        else:
            raise DSLError(f"unknown keyword {kw!r}", line, col0)
    if not seen_header:
        raise DSLError("empty model file (missing 'model <name>')", 1, 1)
    m.kinetic = canonicalize([t for e in kinetic for t in e.terms])
    m.couplings = canonicalize([t for e in couplings for t in e.terms])
    m.hamiltonian = canonicalize([t for e in hamiltonian for t in e.terms])
    _check_kinetic_pairs(m)
    return m


def _parse_family(m: ModelDef, rest: str, line: int, col: int) -> None:
    mt = re.fullmatch(
        r"(\w+)\s+dim\s+(\S+)((?:\s+(?:epsilon|structure))*)\s+letters((?:\s+[A-Za-z]+)+)", rest
    )
    if not mt:
        raise DSLError(
            "expected 'family <name> dim <d> [epsilon] [structure] letters <l>...'", line, col
        )
    name, dim, flags, letters = mt.groups()
    if name in m.families:
        raise DSLError(f"duplicate family {name!r}", line, col)
    try:
        dimension = sympy.sympify(dim.replace("^", "**"), locals={"N": N})
    except (sympy.SympifyError, SyntaxError) as exc:
        raise DSLError(f"bad dimension {dim!r}", line, col) from exc
    letters_t = tuple(letters.split())
    for other in m.families.values():
        clash = set(other.letters) & set(letters_t)
        if clash:
            raise DSLError(
                f"index letters {sorted(clash)} already belong to family {other.name!r}", line, col
            )
    try:
        fam = IndexFamily(name, dimension, "epsilon" in flags, "structure" in flags, letters_t)
    except StructureError as exc:
        raise DSLError(str(exc), line, col) from exc
    m.families[name] = fam
    m.positions[f"family:{name}"] = (line, col)


def _parse_field(m: ModelDef, rest: str, line: int, col: int) -> None:
    words = rest.split()
    if len(words) < 2:
        raise DSLError("expected 'field <name> <kind> <family>...'", line, col)
    name, kind, *tail = words
    if name in m.fields or name in RESERVED or name in m.constants:
        raise DSLError(f"duplicate or reserved field name {name!r}", line, col)
    if not re.fullmatch(r"[A-Za-z][A-Za-z0-9]*", name):
        raise DSLError(f"bad field name {name!r}", line, col)
    if kind not in KINDS:
        raise DSLError(f"field kind must be one of {KINDS}", line, col)
    slots: list[IndexFamily] = []
    antisym: list[tuple[int, ...]] = []
    weight = 0
    k = 0
    while k < len(tail):
        w = tail[k]
        if w == "antisym":
            try:
                p, q = int(tail[k + 1]), int(tail[k + 2])
            except (IndexError, ValueError) as exc:
                raise DSLError("antisym takes two slot positions", line, col) from exc
            antisym.append((p, q))
            k += 3
        elif w == "weight":
            try:
                weight = int(tail[k + 1])
            except (IndexError, ValueError) as exc:
                raise DSLError("weight takes an integer", line, col) from exc
            k += 2
        else:
            if w not in m.families:
                raise DSLError(f"unknown index family {w!r}", line, col)
            slots.append(m.families[w])
            k += 1
    for g in antisym:
        if max(g) >= len(slots) or slots[g[0]] != slots[g[1]] or g[0] == g[1]:
            raise DSLError("antisym slots must be two distinct slots of one family", line, col)
    m.fields[name] = FieldDecl(name, kind, tuple(slots), tuple(antisym), weight, (line, col))


def _parse_constraint(m: ModelDef, rest: str, line: int, col: int) -> None:
    mt = re.fullmatch(r"([A-Za-z][A-Za-z0-9]*)\s*(\[[^\]]*\])?\s*:=\s*(.*)", rest)
    if not mt:
        raise DSLError("expected 'constraint <label>[idx] := <expr>'", line, col)
    label, ixs, body_text = mt.groups()
    if label in m.fields or label in RESERVED or any(c.label == label for c in m.constraints):
        raise DSLError(f"duplicate constraint label {label!r}", line, col)
    indices = []
    if ixs:
        for nm in [x.strip() for x in ixs[1:-1].split(",") if x.strip()]:
            fam = m.family_of_letter(nm)
            if fam is None:
                raise DSLError(f"unknown index family for index {nm!r}", line, col)
            indices.append(Index(fam, nm))
    if len(set(indices)) != len(indices):
        raise DSLError("constraint indices must be distinct", line, col)
    body = ExprParser(m, symbol_table(m, constraints=False), line).parse(
        body_text, col + mt.start(3)
    )
    if not body.is_zero() and body.free != frozenset(indices):
        raise DSLError(
            f"constraint {label!r} body has free indices "
            f"{sorted(i.name for i in body.free)}, declared {[i.name for i in indices]}",
            line,
            col,
        )
    m.constraints.append(ConstraintDecl(label, tuple(indices), body, (line, col)))


def kinetic_pairs(m: ModelDef) -> list[tuple[Coeff, Field, Field]]:
    """(coefficient, q occurrence, p occurrence) for each kinetic term."""
    out = []
    for t in m.kinetic.terms:
        dots = [f for f in t.factors if isinstance(f, Field) and f.name.startswith(DOT_PREFIX)]
        rest = [f for f in t.factors if not (isinstance(f, Field) and f.name.startswith(DOT_PREFIX))]
        if len(dots) != 1 or len(rest) != 1 or not isinstance(rest[0], Field):
            raise DSLError("kinetic term must be coeff * dot(q) * p", *m.positions.get("kinetic", (0, 0)))
        out.append((t.coeff, dots[0]._replace(name=dots[0].name[len(DOT_PREFIX):]), rest[0]))
    return out


def _check_kinetic_pairs(m: ModelDef) -> None:
    pos = m.positions.get("kinetic", (0, 0))
    paired: set[str] = set()
    for _, q, p in kinetic_pairs(m):
        for occ in (q, p):
            if occ.derivs:
                raise DSLError("kinetic term may not contain spatial derivatives", *pos)
            if occ.name in paired:
                raise DSLError(f"field {occ.name!r} appears in two kinetic pairings", *pos)
            paired.add(occ.name)
        if m.fields[q.name].kind != "coordinate" or m.fields[p.name].kind != "momentum":
            raise DSLError(f"kinetic pairing {q.name}/{p.name} must be dot(coordinate)*momentum", *pos)
    for f in m.fields.values():
        if f.kind == "momentum" and f.name not in paired:
            raise DSLError(f"unpaired momentum {f.name!r}", *f.pos)
        if f.kind == "coordinate" and f.name not in paired:
            raise DSLError(f"unpaired coordinate {f.name!r}", *f.pos)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def validate_model(m: ModelDef) -> list[Diagnostic]:
    """One diagnostic per violated model invariant; empty when valid."""
    diags: list[Diagnostic] = []
    multipliers = {f.name for f in m.fields_of_kind("multiplier")}
    labels = {c.label for c in m.constraints}

    def at(key: str, default=(0, 0)) -> tuple[int, int]:
        return m.positions.get(key, default)

    for c in m.constraints:
        used = c.body.fields()
        bad = sorted(used & multipliers)
        if bad:
            diags.append(Diagnostic(f"multiplier inside constraint {c.label!r}: {bad}", *c.pos))
        if any(n.startswith(DOT_PREFIX) for n in used):
            diags.append(Diagnostic(f"time derivative inside constraint {c.label!r}", *c.pos))
        unknown = sorted(used - set(m.fields))
        if unknown:
            diags.append(Diagnostic(f"unknown fields in constraint {c.label!r}: {unknown}", *c.pos))
    ham_fields = m.hamiltonian.fields()
    if ham_fields & multipliers:
        diags.append(
            Diagnostic(f"multiplier inside Hamiltonian remainder: {sorted(ham_fields & multipliers)}",
                       *at("hamiltonian"))
        )
    if m.couplings.free:
        diags.append(
            Diagnostic(
                "uncontracted index in coupling: "
                + ", ".join(sorted(i.name for i in m.couplings.free)),
                *at("coupling"),
            )
        )
    if m.hamiltonian.free:
        diags.append(
            Diagnostic(
                "uncontracted index in hamiltonian: "
                + ", ".join(sorted(i.name for i in m.hamiltonian.free)),
                *at("hamiltonian"),
            )
        )
    for t in m.couplings.terms:
        mult = [f for f in t.factors if isinstance(f, Field) and f.name in multipliers]
        refs = [f for f in t.factors if isinstance(f, Field) and f.name in labels]
        if len(mult) != 1 or len(refs) != 1:
            diags.append(
                Diagnostic("coupling term must be coeff * multiplier * constraint", *at("coupling"))
            )
    try:
        pairs = kinetic_pairs(m)
    except DSLError as exc:
        diags.append(Diagnostic(exc.message, exc.line, exc.col))
        pairs = []
    paired = {q.name for _, q, _ in pairs} | {p.name for _, _, p in pairs}
    for f in m.fields.values():
        if f.kind != "multiplier" and f.name not in paired:
            diags.append(Diagnostic(f"unpaired {f.kind} {f.name!r}", *f.pos))
    for _, q, p in pairs:
        fq, fp = m.fields.get(q.name), m.fields.get(p.name)
        if fq is None or fp is None:
            continue
        if sorted(s.name for s in fq.slots) != sorted(s.name for s in fp.slots):
            diags.append(Diagnostic(f"pairing {q.name}/{p.name} has mismatched slots", *fq.pos))
    return diags


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _render_dim(d: sympy.Expr) -> str:
    return str(d).replace("**", "^").replace(" ", "")


def _render_lines(keyword: str, e: Expression) -> list[str]:
    if e.is_zero():
        return []
    out = []
    for t in e.terms:
        out.append(f"{keyword} {render(Expression((t,), e.free))}")
    return out


def serialize_model(m: ModelDef) -> str:
    """Deterministic text form; ``parse_model(serialize_model(m)) == m``."""
    lines = [f"model {m.name}"]
    if m.constants:
        lines.append("constants " + " ".join(m.constants))
    for fam in m.families.values():
        flags = (" epsilon" if fam.has_epsilon else "") + (
            " structure" if fam.has_structure_constants else ""
        )
        lines.append(
            f"family {fam.name} dim {_render_dim(fam.dimension)}{flags} letters "
            + " ".join(fam.letters)
        )
    for f in m.fields.values():
        parts = [f"field {f.name} {f.kind}"] + [s.name for s in f.slots]
        for g in f.antisym:
            parts.append(f"antisym {g[0]} {g[1]}")
        if f.weight:
            parts.append(f"weight {f.weight}")
        lines.append(" ".join(parts))
    if m.sign_convention != "kinetic":
        lines.append(f"sign_convention {m.sign_convention}")
    for (q, p), c in m.printed_brackets.items():
        lines.append(f"printed_bracket {q} {p} := {c.render()}")
    lines += _render_lines("kinetic", m.kinetic)
    for c in m.constraints:
        ix = "[" + ",".join(i.name for i in c.indices) + "]" if c.indices else ""
        lines.append(f"constraint {c.label}{ix} := {render(c.body)}")
    lines += _render_lines("coupling", m.couplings)
    lines += _render_lines("hamiltonian", m.hamiltonian)
    return "\n".join(lines) + "\n"
