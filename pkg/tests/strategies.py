"""Hypothesis strategies for random tensor monomials and a plain numeric evaluator."""

from __future__ import annotations

import string
from collections import Counter
from fractions import Fraction

import numpy as np
from hypothesis import strategies as st

from bfham.expr import Coeff, Delta, Eps, Field, Index, IndexFamily, Struct, Term, factor_indices

SPACE = IndexFamily("space", 3, True, False, tuple("abcdegh"))
SO3 = IndexFamily("so3", 3, True, False, tuple("ijklmnopq"))
ADJ = IndexFamily("adj", "N^2-1", False, True, tuple("rstuvwxyz"))
FAMILIES = (SPACE, SO3, ADJ)

# name -> slot families
FIELDS = {
    "X": (SO3,),
    "Y": (SPACE, SO3),
    "Z": (SO3, SO3),
    "W": (ADJ,),
    "V": (SPACE, ADJ),
    "s": (),
}


@st.composite
def monomials(draw, max_factors: int = 5):
    """A random term: fields (at most one spatial derivative), eps, f, deltas.

    Every index name occurs at most twice; repeated names become dummies.
    """
    kinds = draw(st.lists(st.sampled_from(["field", "field", "field", "eps", "f", "delta"]),
                          min_size=1, max_size=max_factors))
    used: dict[IndexFamily, list[str]] = {f: [] for f in FAMILIES}
    once: dict[IndexFamily, list[str]] = {f: [] for f in FAMILIES}

    def index(fam: IndexFamily) -> Index:
        if once[fam] and draw(st.booleans()):
            name = draw(st.sampled_from(once[fam]))
            once[fam].remove(name)
        else:
            free = [c for c in fam.letters if c not in used[fam]]
            if not free:
                name = once[fam].pop() if once[fam] else fam.letters[0]
            else:
                name = free[0]
                used[fam].append(name)
                once[fam].append(name)
        return Index(fam, name)

    factors = []
    for kind in kinds:
        if kind == "field":
            name = draw(st.sampled_from(sorted(FIELDS)))
            ix = tuple(index(f) for f in FIELDS[name])
            derivs = (index(SPACE),) if draw(st.integers(0, 3)) == 0 else ()
            factors.append(Field(name, ix, derivs))
        elif kind == "eps":
            fam = draw(st.sampled_from([SPACE, SO3]))
            factors.append(Eps(fam, tuple(index(fam) for _ in range(3))))
        elif kind == "f":
            factors.append(Struct(ADJ, tuple(index(ADJ) for _ in range(3))))
        else:
            fam = draw(st.sampled_from(FAMILIES))
            factors.append(Delta((index(fam), index(fam))))
    rat = Fraction(draw(st.integers(-5, 5).filter(bool)), draw(st.integers(1, 4)))
    mono = {"I": 1} if draw(st.integers(0, 4)) == 0 else {}
    return Term(Coeff.make(rat, mono), tuple(factors))


def _eps3() -> np.ndarray:
    e = np.zeros((3, 3, 3))
    for (a, b, c), s in {(0, 1, 2): 1, (1, 2, 0): 1, (2, 0, 1): 1, (0, 2, 1): -1, (2, 1, 0): -1, (1, 0, 2): -1}.items():
        e[a, b, c] = s
    return e


EPS = _eps3()


def random_data(seed: int) -> dict[tuple[str, int], np.ndarray]:
    """Component values: (name, 0) for the field, (name, 1) for its spatial gradient."""
    rng = np.random.default_rng(seed)
    out = {}
    for name, slots in FIELDS.items():
        shape = (3,) * len(slots)  # every family has three values at N = 2
        out[(name, 0)] = rng.standard_normal(shape)
        out[(name, 1)] = rng.standard_normal((3,) + shape)
    return out


def free_indices(term: Term) -> list[Index]:
    """Indices occurring once, in a fixed order."""
    counts = Counter(i for f in term.factors for i in factor_indices(f))
    return sorted((i for i, n in counts.items() if n == 1), key=lambda i: (i.family.name, i.name))


SYMBOLS = {"I": 1j, "N": 2}


def coeff_value(c: Coeff) -> complex:
    v = complex(float(c.rational))
    for name, power in c.mono:
        v *= SYMBOLS[name] ** power
    return v


def evaluate(terms, free: list[Index], data) -> np.ndarray:
    """Sum of terms as an array over ``free`` (full component contraction)."""
    total = np.zeros((3,) * len(free), complex)
    for t in terms:
        letters: dict[Index, str] = {}

        def sub(ix) -> str:
            for i in ix:
                letters.setdefault(i, string.ascii_letters[len(letters)])
            return "".join(letters[i] for i in ix)

        ops, subs = [], []
        for f in t.factors:
            if isinstance(f, Field):
                ops.append(data[(f.name, len(f.derivs))])
                subs.append(sub(f.derivs + f.indices))
            elif isinstance(f, (Eps, Struct)):
                ops.append(EPS)
                subs.append(sub(f.indices))
            else:
                ops.append(np.eye(3))
                subs.append(sub(f.indices))
        out = sub(free)
        c = coeff_value(t.coeff)
        if not ops:
            total += c
            continue
        total += c * np.einsum(",".join(subs) + "->" + out, *ops)
    return total


# ---------------------------------------------------------------------------
# Random model files
# ---------------------------------------------------------------------------

MODEL_FAMILIES = {
    "space": ("3 epsilon", "ijklmn"),
    "adj": ("N^2-1 structure", "abcdeg"),
    "flav": ("4", "rstuvw"),
}


def _occurrence(name: str, slots: tuple[str, ...], pool: dict[str, list[str]]) -> str:
    if not slots:
        return name
    return f"{name}[{','.join(pool[s].pop(0) for s in slots)}]"


def _square(name: str, slots: tuple[str, ...], pool: dict[str, list[str]]) -> str:
    if not slots:
        return f"{name}*{name}"
    ix = [pool[s].pop(0) for s in slots]
    occ = f"{name}[{','.join(ix)}]"
    return f"{occ}*{occ}"


def _coeff(draw) -> str:
    n = draw(st.integers(1, 4))
    d = draw(st.sampled_from([1, 1, 2, 3]))
    sign = draw(st.sampled_from(["", "-"]))
    return f"{sign}{n}" + (f"/{d}" if d > 1 else "")


@st.composite
def model_texts(draw) -> str:
    """Random but valid model file: paired fields, constraints, couplings, Hamiltonian."""
    fams = ["space"] + draw(st.lists(st.sampled_from(["adj", "flav"]), unique=True, max_size=2))
    constants = draw(st.lists(st.sampled_from(["Xi", "Omega", "g"]), unique=True, max_size=2))
    lines = [f"model m{draw(st.integers(0, 999))}"]
    if constants:
        lines.append("constants " + " ".join(constants))
    for f in fams:
        dim, letters = MODEL_FAMILIES[f]
        lines.append(f"family {f} dim {dim} letters {' '.join(letters)}")
    npairs = draw(st.integers(1, 3))
    pairs = []
    for n in range(npairs):
        slots = tuple(draw(st.lists(st.sampled_from(fams), max_size=2)))
        anti = len(slots) == 2 and slots[0] == slots[1] and draw(st.booleans())
        pairs.append((f"q{n}", f"p{n}", slots))
        tail = " antisym 0 1" if anti else ""
        lines.append(f"field q{n} coordinate {' '.join(slots)}{tail}".rstrip())
        lines.append(f"field p{n} momentum {' '.join(slots)}{tail}".rstrip())
    kin = []
    for q, p, slots in pairs:
        pool = {f: list(MODEL_FAMILIES[f][1]) for f in fams}
        ix = _occurrence("", slots, pool)
        kin.append(f"dot({q}{ix})*{p}{ix}")
    ncons = draw(st.integers(1, 3))
    cons = []
    for n in range(ncons):
        q, p, slots = draw(st.sampled_from(pairs))
        lines.append(f"field lam{n} multiplier {' '.join(slots)}".rstrip())
        cons.append((f"c{n}", q, p, slots))
    lines.append("kinetic " + " + ".join(kin))
    if draw(st.booleans()):
        lines.append("sign_convention printed")
    for label, q, p, slots in cons:
        pool = {f: list(MODEL_FAMILIES[f][1]) for f in fams}
        ix = _occurrence("", slots, pool)
        body = f"{_coeff(draw)}*{p}{ix}"
        if draw(st.booleans()):
            body += f" + {_coeff(draw)}*{q}{ix}"
        if draw(st.booleans()):
            oq, _, oslots = draw(st.sampled_from(pairs))
            if len(oslots) + len(slots) <= 3:
                c = f"*{draw(st.sampled_from(constants))}" if constants else ""
                body += f" + {_coeff(draw)}{c}*{p}{ix}*{_square(oq, oslots, pool)}"
        lines.append(f"constraint {label}{ix} := {body}")
    for n, (label, _, _, slots) in enumerate(cons):
        pool = {f: list(MODEL_FAMILIES[f][1]) for f in fams}
        ix = _occurrence("", slots, pool)
        lines.append(f"coupling {_coeff(draw)}*lam{n}{ix}*{label}{ix}")
    q, p, slots = draw(st.sampled_from(pairs))
    pool = {f: list(MODEL_FAMILIES[f][1]) for f in fams}
    lines.append(f"hamiltonian {_coeff(draw)}*{_square(p, slots, pool)}")
    return "\n".join(lines) + "\n"
