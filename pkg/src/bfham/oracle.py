"""Numeric cross-check of symbolic brackets on a periodic lattice.

Every functional is compiled by full component expansion (one ``einsum`` per
term, no canonicalization) and evaluated on concrete data.  Brackets are
computed by differentiating the compiled polynomial with respect to every
grid value of every field component, so the check does not share code with
the symbolic variational derivative.

Two schemes are available:

``spectral`` (default)
    Random Gaussian site values on an ``L^3`` lattice are trigonometrically
    interpolated (the Nyquist mode of an even lattice is dropped) and sampled
    on a finer grid chosen so that every product is resolved.  Derivatives
    are spectral.  On band-limited data the grid sum equals the continuum
    integral exactly and the Leibniz rule holds, so symbolic and numeric
    results agree to rounding.
``central``
    Site values with periodic central differences.  Summation by parts is
    exact but the Leibniz rule is not, so agreement with the symbolic result
    is only ``O(h^2)``; useful as a smoke test, not for the 1e-9 criterion.
"""

from __future__ import annotations

import itertools
import string
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import sympy

from .dsl import ModelDef
from .expr import IMAGINARY, N, Coeff, Delta, DeltaDist, Eps, Expression, Field, IndexFamily, Struct
from .phase_space import SmearedFunctional, SymplecticStructure

SCHEMES = ("spectral", "central")
RANK_THRESHOLD = 1e-8
SCALE_FLOOR = 1e-4


class OracleConfigError(ValueError):
    """Lattice configuration cannot evaluate the requested functional."""


@dataclass(frozen=True)
class LatticeConfig:
    """Periodic ``L^3`` lattice, concrete group rank and constant values."""

    L: int = 4
    N: int = 2
    seed: int = 0
    scheme: str = "spectral"
    constants: tuple[tuple[str, complex], ...] = ()

    def __post_init__(self) -> None:
        if self.L < 2:
            raise OracleConfigError(f"lattice size must be >= 2, got {self.L}")
        if self.N < 2:
            raise OracleConfigError(f"group rank N must be >= 2, got {self.N}")
        if self.scheme not in SCHEMES:
            raise OracleConfigError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        for name, v in self.constants:
            if v == 0:
                raise OracleConfigError(f"constant {name} must be nonzero")

    @property
    def band(self) -> int:
        """Largest retained wave number per direction."""
        return (self.L - 1) // 2

    def value(self, name: str) -> complex:
        if name == IMAGINARY:
            return 1j
        for k, v in self.constants:
            if k == name:
                return v
        raise OracleConfigError(f"no numeric value for constant {name!r}")

    def with_constants(self, names) -> "LatticeConfig":
        """Random nonzero values in ``±[0.5, 1.5]`` for every name not yet set."""
        rng = np.random.default_rng([self.seed, 7919])
        have = dict(self.constants)
        for n in sorted(names):
            if n == IMAGINARY or n in have:
                continue
            have[n] = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.5))
        return LatticeConfig(self.L, self.N, self.seed, self.scheme, tuple(sorted(have.items())))


def dimension(fam: IndexFamily, cfg: LatticeConfig) -> int:
    d = sympy.sympify(fam.dimension).subs(N, cfg.N)
    if not d.is_Integer:
        raise OracleConfigError(f"family {fam.name!r} has unresolved dimension {fam.dimension}")
    return int(d)


@lru_cache(maxsize=None)
def levi_civita(n: int = 3) -> np.ndarray:
    out = np.zeros((n,) * n)
    for perm in itertools.permutations(range(n)):
        inv = sum(1 for a, b in itertools.combinations(perm, 2) if a > b)
        out[perm] = -1.0 if inv % 2 else 1.0
    return out


@lru_cache(maxsize=None)
def structure_constants(n: int) -> np.ndarray:
    """Real ``f_{abc}`` of su(n) with ``tr(T_a T_b) = delta_ab / 2``; ``n = 2`` gives epsilon."""
    gens = []
    for j in range(n):
        for k in range(j + 1, n):
            s = np.zeros((n, n), complex)
            s[j, k] = s[k, j] = 0.5
            a = np.zeros((n, n), complex)
            a[j, k], a[k, j] = -0.5j, 0.5j
            gens += [s, a]
    for l in range(1, n):
        d = np.zeros((n, n), complex)
        d[:l, :l] = np.eye(l)
        d[l, l] = -l
        gens.append(d / np.sqrt(2 * l * (l + 1)))
    if n == 2:
        gens = [gens[0], gens[1], gens[2]]  # sigma_x, sigma_y, sigma_z over 2
    T = np.array(gens)
    comm = np.einsum("aij,bjk->abik", T, T) - np.einsum("bij,ajk->abik", T, T)
    f = -2j * np.einsum("abik,cki->abc", comm, T)
    return np.real_if_close(f).real


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@dataclass
class FieldAssignment:
    """Site values ``values[name]`` of shape ``components + (L, L, L)``."""

    values: dict[str, np.ndarray] = field(default_factory=dict)

    def covers(self, names) -> bool:
        return all(n in self.values for n in names)


def _shape(slots, cfg: LatticeConfig) -> tuple[int, ...]:
    return tuple(dimension(f, cfg) for f in slots)


def _antisymmetrize(a: np.ndarray, groups) -> np.ndarray:
    for g in groups:
        a = 0.5 * (a - np.swapaxes(a, g[0], g[1]))
    return a


def random_assignment(m: ModelDef, cfg: LatticeConfig, extra: dict | None = None) -> FieldAssignment:
    """Gaussian site values for every declared field (and ``extra`` name -> slots)."""
    rng = np.random.default_rng([cfg.seed, 104729])
    out = FieldAssignment()
    items = [(n, d.slots, d.antisym) for n, d in sorted(m.fields.items())]
    items += [(n, tuple(s), ()) for n, s in sorted((extra or {}).items())]
    for name, slots, anti in items:
        a = rng.standard_normal(_shape(slots, cfg) + (cfg.L,) * 3)
        out.values[name] = _antisymmetrize(a, anti)
    return out


def random_smearings(params, cfg: LatticeConfig, salt: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng([cfg.seed, 15485863, salt])
    return {p.name: rng.standard_normal(_shape(p.slots, cfg) + (cfg.L,) * 3) for p in params}


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------


class _Grid:
    """Evaluation grid with derivative operators and cached upsampled data."""

    def __init__(self, cfg: LatticeConfig, degree: int):
        self.cfg = cfg
        if cfg.scheme == "central":
            self.M = cfg.L
        else:
            self.M = max(cfg.L, 2 * max(degree, 1) * cfg.band + 1)
        self.weight = 1.0 / self.M**3  # unit-volume box
        k = np.fft.fftfreq(self.M, 1.0 / self.M)
        self.k = k
        self._cache: dict = {}

    def lift(self, name: str, site: np.ndarray) -> np.ndarray:
        key = (name, id(site))
        if key in self._cache:
            return self._cache[key]
        if self.cfg.scheme == "central":
            out = site
        else:
            L, M = self.cfg.L, self.M
            spec = np.fft.fftn(site, axes=(-3, -2, -1))
            kL = np.fft.fftfreq(L, 1.0 / L)
            keep = np.abs(kL) <= self.cfg.band
            idx = np.nonzero(keep)[0]
            big = np.zeros(site.shape[:-3] + (M, M, M), complex)
            pos = [int(kL[i]) % M for i in idx]
            big[np.ix_(*([range(s) for s in site.shape[:-3]] + [pos, pos, pos]))] = spec[
                np.ix_(*([range(s) for s in site.shape[:-3]] + [idx, idx, idx]))
            ]
            out = np.fft.ifftn(big, axes=(-3, -2, -1)).real * (M / L) ** 3
        self._cache[key] = (site, out)
        return self._cache[key]

    def d(self, a: np.ndarray, axis: int) -> np.ndarray:
        """Derivative along spatial direction ``axis`` (0..2) of the trailing grid axes."""
        ax = a.ndim - 3 + axis
        if self.cfg.scheme == "central":
            return 0.5 * (np.roll(a, -1, axis=ax) - np.roll(a, 1, axis=ax)) * self.cfg.L
        shape = [1] * a.ndim
        shape[ax] = self.M
        ik = (2j * np.pi * self.k).reshape(shape)
        ik = np.where(np.abs(self.k.reshape(shape)) * 2 == self.M, 0, ik)
        res = np.fft.ifft(np.fft.fft(a, axis=ax) * ik, axis=ax)
        return res if np.iscomplexobj(a) else res.real

    def grad(self, a: np.ndarray) -> np.ndarray:
        """Stack the three derivatives as a new leading axis."""
        return np.stack([self.d(a, j) for j in range(3)])


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------

_LETTERS = string.ascii_letters[:-3]  # reserve x y z style grid letters
_GRID = "XYZ"


def _degree(e: Expression) -> int:
    return max((sum(isinstance(f, Field) for f in t.factors) for t in e.terms), default=0)


class _Compiled:
    """A body expression bound to a grid, data and numeric constants."""

    def __init__(self, body: Expression, grid: _Grid, data: dict):
        self.body = body
        self.grid = grid
        self.data = data
        self.cfg = grid.cfg
        self._derived: dict = {}

    def _field(self, name: str, nder: int) -> np.ndarray:
        key = (name, nder)
        if key not in self._derived:
            if name not in self.data:
                raise OracleConfigError(f"no numeric data for {name!r}")
            a = self.grid.lift(name, self.data[name])[1]
            for _ in range(nder):
                a = self.grid.grad(a)
            self._derived[key] = a
        return self._derived[key]

    def _constant(self, c: Coeff) -> complex:
        return _coeff_value(c, self.cfg)

    def _operands(self, factors, labels: dict, skip: int | None = None):
        ops, subs = [], []
        for k, f in enumerate(factors):
            if k == skip:
                continue
            if isinstance(f, Field):
                ops.append(self._field(f.name, len(f.derivs)))
                # derivative axes are leading, innermost derivative first
                ix = tuple(reversed(f.derivs)) + f.indices
                subs.append("".join(labels[i] for i in ix) + _GRID)
            elif isinstance(f, Eps):
                ops.append(levi_civita(3))
                subs.append("".join(labels[i] for i in f.indices))
            elif isinstance(f, Struct):
                ops.append(structure_constants(self.cfg.N))
                subs.append("".join(labels[i] for i in f.indices))
            elif isinstance(f, Delta):
                a, b = f.indices
                ops.append(np.eye(dimension(a.family, self.cfg)))
                subs.append(labels[a] + labels[b])
            elif isinstance(f, DeltaDist):
                raise OracleConfigError("distributional kernels cannot be evaluated; smear first")
        return ops, subs

    @staticmethod
    def _labels(factors) -> dict:
        labels: dict = {}
        for f in factors:
            ix = ()
            if isinstance(f, Field):
                ix = f.indices + f.derivs
            elif not isinstance(f, DeltaDist):
                ix = f.indices
            for i in ix:
                if i not in labels:
                    labels[i] = _LETTERS[len(labels)]
        return labels

    def value(self) -> complex:
        total = 0j
        for t in self.body.terms:
            labels = self._labels(t.factors)
            ops, subs = self._operands(t.factors, labels)
            has_grid = any(s.endswith(_GRID) for s in subs)
            if not has_grid:
                raise OracleConfigError("term without a field or parameter")
            s = np.einsum(",".join(subs) + "->", *ops, optimize=True)
            total += self._constant(t.coeff) * complex(s)
        return total * self.grid.weight

    def gradient(self, name: str, shape: tuple[int, ...]) -> np.ndarray:
        """``(1/w) dF/dq_n``: the grid-value gradient of the compiled sum."""
        M = self.grid.M
        out = np.zeros(shape + (M, M, M), complex)
        for t in self.body.terms:
            for k, f in enumerate(t.factors):
                if not (isinstance(f, Field) and f.name == name):
                    continue
                labels = self._labels(t.factors)
                ops, subs = self._operands(t.factors, labels, skip=k)
                slots = tuple(reversed(f.derivs)) + f.indices
                fresh = _LETTERS[len(labels) : len(labels) + len(slots)]
                for u, i in zip(fresh, slots):
                    ops.append(np.eye(dimension(i.family, self.cfg)))
                    subs.append(u + labels[i])
                if not any(s.endswith(_GRID) for s in subs):
                    ops.append(np.ones((M, M, M)))
                    subs.append(_GRID)
                X = np.einsum(",".join(subs) + "->" + fresh + _GRID, *ops, optimize=True)
                # adjoint of each derivative: D^T = -D, contracted with its axis
                for _ in f.derivs:
                    X = -sum(self.grid.d(X[j], j) for j in range(3))
                out += self._constant(t.coeff) * X
        return out


def _coeff_value(c: Coeff, cfg: LatticeConfig) -> complex:
    v = complex(float(c.rational))
    for name, e in c.mono:
        v *= cfg.value(name) ** e
    return v


def _data(assignment: FieldAssignment, smearings: dict | None) -> dict:
    d = dict(assignment.values)
    d.update(smearings or {})
    return d


def numeric_functional(
    F: SmearedFunctional | Expression,
    cfg: LatticeConfig,
    assignment: FieldAssignment,
    smearings: dict | None = None,
) -> complex:
    """Integral of the body over the unit box on the configured lattice."""
    body = F.body if isinstance(F, SmearedFunctional) else F
    if body.is_zero():
        return 0j
    grid = _Grid(cfg, _degree(body))
    return _Compiled(body, grid, _data(assignment, smearings)).value()


def numeric_bracket_detail(
    F: SmearedFunctional,
    G: SmearedFunctional,
    s: SymplecticStructure,
    cfg: LatticeConfig,
    assignment: FieldAssignment,
    smearings: dict | None = None,
    field_slots: dict | None = None,
) -> tuple[complex, float]:
    """``{F, G}`` and the rounding scale ``sum |individual contributions|``."""
    grid = _Grid(cfg, _degree(F.body) + _degree(G.body))
    data = _data(assignment, smearings)
    cF, cG = _Compiled(F.body, grid, data), _Compiled(G.body, grid, data)
    fF, fG = F.body.fields(), G.body.fields()
    value, scale = 0j, 0.0
    for pr in s.pairings:
        if not ((pr.q in fF and pr.p in fG) or (pr.p in fF and pr.q in fG)):
            continue
        shp = _shape(pr.q_slots, cfg)
        pshape = tuple(shp[pr.slot_map.index(j)] for j in range(len(shp)))
        perm = tuple(pr.slot_map) + tuple(range(len(shp), len(shp) + 3))
        c = _coeff_value(pr.coeff, cfg)

        def pair(A: _Compiled, B: _Compiled) -> np.ndarray:
            gq = A.gradient(pr.q, shp)
            gp = np.transpose(B.gradient(pr.p, pshape), perm)
            gp = _antisymmetrize(gp, pr.antisym)
            return gq * gp

        prods = []
        if pr.q in fF and pr.p in fG:
            prods.append(pair(cF, cG))
        if pr.p in fF and pr.q in fG:
            prods.append(-pair(cG, cF))
        for p in prods:
            value += c * p.sum() * grid.weight
            scale += abs(c) * np.abs(p).sum() * grid.weight
    return value, scale


def numeric_bracket(F, G, s, cfg, assignment, smearings=None) -> complex:
    return numeric_bracket_detail(F, G, s, cfg, assignment, smearings)[0]


def relative_error(symbolic: complex, numeric: complex, scale: float) -> float:
    """``|s - n| / |n|``, with ``|n|`` floored at ``1e-4`` of the rounding scale.

    ``scale`` is the sum of magnitudes of the individual contributions, so an
    exactly vanishing bracket is compared against the size of its pieces.
    """
    denom = max(abs(numeric), SCALE_FLOOR * scale, 1e-300)
    return abs(symbolic - numeric) / denom


# ---------------------------------------------------------------------------
# Rank check
# ---------------------------------------------------------------------------


@dataclass
class RankVerdict:
    full_rank: bool
    margins: list[float]
    size: int

    @property
    def margin(self) -> float:
        return min(self.margins, default=float("inf"))


def _test_functions(cfg: LatticeConfig) -> list[np.ndarray]:
    """Real trigonometric basis on the lattice with wave numbers up to the band."""
    L = cfg.L
    x = np.arange(L) / L
    X = np.stack(np.meshgrid(x, x, x, indexing="ij"))
    ks = range(-cfg.band, cfg.band + 1)
    out = []
    for k in itertools.product(ks, repeat=3):
        if k > tuple(-v for v in k):
            continue
        ph = 2 * np.pi * np.tensordot(np.array(k, float), X, axes=1)
        out.append(np.cos(ph))
        if any(k):
            out.append(np.sin(ph))
    return out


def rank_check(an, labels: list[str], cfg: LatticeConfig, trials: int = 3) -> RankVerdict:
    """Numeric bracket matrix of the listed constraints against smooth test functions.

    Rows run over (constraint, component, test function).  The verdict is
    full rank iff ``s_min / s_max > 1e-8`` on every trial.
    """
    if not labels:
        return RankVerdict(True, [], 0)
    cfg = cfg.with_constants(an.constants)
    basis = _test_functions(cfg)
    margins = []
    size = 0
    for trial in range(trials):
        tcfg = LatticeConfig(cfg.L, cfg.N, cfg.seed * 1000 + trial, cfg.scheme, cfg.constants)
        data = random_assignment(an.model, tcfg).values
        rows: list[tuple[str, np.ndarray]] = []
        degree = 1
        for lab in labels:
            c = an.constraint(lab)
            F = an.smeared(lab, "zeta")
            degree = max(degree, _degree(F.body))
            shp = _shape(c.slots, tcfg)
            for comp in itertools.product(*(range(n) for n in shp)):
                for phi in basis:
                    z = np.zeros(shp + phi.shape)
                    z[comp] = phi
                    z = _antisymmetrize(z, c.antisym)
                    if np.abs(z).max() == 0 or any(comp[g[0]] >= comp[g[1]] for g in c.antisym):
                        continue
                    rows.append((lab, z))
        grid = _Grid(tcfg, degree)
        funcs = {lab: an.smeared(lab, "zeta") for lab in labels}
        n = size = len(rows)
        mat = np.zeros((n, n), complex)
        for pr in an.structure.pairings:
            shp = _shape(pr.q_slots, tcfg)
            pshape = tuple(shp[pr.slot_map.index(j)] for j in range(len(shp)))
            perm = tuple(pr.slot_map) + tuple(range(len(shp), len(shp) + 3))
            Q = np.zeros((n,) + shp + (grid.M,) * 3, complex)
            P = np.zeros_like(Q)
            for r, (lab, z) in enumerate(rows):
                body = funcs[lab].body
                if not body.fields() & {pr.q, pr.p}:
                    continue
                cmp = _Compiled(body, grid, dict(data, zeta=z))
                if pr.q in body.fields():
                    Q[r] = cmp.gradient(pr.q, shp)
                if pr.p in body.fields():
                    P[r] = _antisymmetrize(np.transpose(cmp.gradient(pr.p, pshape), perm), pr.antisym)
            Q, P = Q.reshape(n, -1), P.reshape(n, -1)
            mat += _coeff_value(pr.coeff, tcfg) * grid.weight * (Q @ P.T - P @ Q.T)
        sv = np.linalg.svd(mat, compute_uv=False)
        margins.append(float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0)
    return RankVerdict(all(m > RANK_THRESHOLD for m in margins), margins, size)


# ---------------------------------------------------------------------------
# Whole-matrix comparison
# ---------------------------------------------------------------------------

TOLERANCE = 1e-9


@dataclass
class OracleReport:
    """Worst relative error per bracket-matrix entry over all seeds."""

    L: int
    N: int
    seeds: list[int]
    errors: dict[str, float]
    rank: RankVerdict | None = None

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= TOLERANCE and (self.rank is None or self.rank.full_rank)

    def as_dict(self) -> dict:
        out = {
            "lattice": self.L,
            "group_n": self.N,
            "seeds": list(self.seeds),
            "tolerance": TOLERANCE,
            "max_relative_error": float(self.max_error),
            "entries": {k: float(v) for k, v in sorted(self.errors.items())},
            "passed": self.passed,
        }
        if self.rank is not None:
            out["rank_check"] = {
                "full_rank": self.rank.full_rank,
                "size": self.rank.size,
                "min_margin": float(self.rank.margin) if self.rank.margins else None,
                "threshold": RANK_THRESHOLD,
            }
        return out


def check_matrix(an, L: int = 4, N: int = 2, seeds=range(5), second_class=None, rank_trials=None) -> OracleReport:
    """Compare every matrix entry (structure functions times constraints plus
    remainder) with the numeric bracket of the two smeared constraints."""
    labels = an.model.labels
    errors: dict[str, float] = {}
    for seed in seeds:
        cfg = LatticeConfig(L=L, N=N, seed=seed).with_constants(an.constants)
        data = random_assignment(an.model, cfg)
        for a in labels:
            for b in labels:
                F, G = an.smeared(a, an.lam), an.smeared(b, an.mu)
                sm = random_smearings(F.params + G.params, cfg)
                num, scale = numeric_bracket_detail(F, G, an.structure, cfg, data, sm)
                rec = an.entry(a, b).reconstruct(an.constraints)
                err = relative_error(numeric_functional(rec, cfg, data, sm), num, scale)
                key = f"{a},{b}"
                errors[key] = max(errors.get(key, 0.0), err)
    rank = None
    if second_class:
        trials = rank_trials if rank_trials is not None else len(list(seeds))
        rank = rank_check(an, second_class, LatticeConfig(L=L, N=N, seed=1), trials)
    return OracleReport(L, N, list(seeds), errors, rank)
