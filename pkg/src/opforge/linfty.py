"""Weak Lie (strong homotopy Lie) algebras on finite graded spaces.

Conventions
-----------
A basis vector ``e_a`` has degree ``space.degrees[a]``.  The differential is a
2-slot tensor ``d[a, c]`` meaning ``d(e_a) = sum_c d[a, c] e_c``; the bracket
``b_n`` is an ``(n+1)``-slot tensor with the inputs first and the output last.

All identities are checked after passing to the shifted space ``W = g[1]``,
``w_a`` of degree ``deg(e_a) - 1``.  There the brackets become graded
symmetric maps ``q_n`` of degree +1,

    q_n(w_a1, ..., w_an) = eta(a) b_n(e_a1, ..., e_an),
    eta(a) = (-1)^(sum_k (n-k)(deg a_k - 1)),

with ``q_1 = d``, and the generalized Jacobi identity in arity ``n`` reads

    sum_{i+j=n+1} sum_{unshuffles} (Koszul sign) q_j(q_i(..), ..) = 0.

The residual reported in bracket form is ``eta(a)`` times that sum.  In
arity 3 with degree-0 inputs it is ``d(b_3)`` minus the Jacobiator of ``b_2``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .exact_core import SparseTensor, koszul_sign, nullspace, perm_sign


class SymmetryError(ValueError):
    """A bracket is not graded antisymmetric or has the wrong degree."""


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class GradedSpace:
    degrees: tuple[int, ...]

    @classmethod
    def from_dims(cls, dims: Mapping[int, int]) -> "GradedSpace":
        degs: list[int] = []
        for k in sorted(dims):
            degs.extend([k] * int(dims[k]))
        return cls(tuple(degs))

    @property
    def dim(self) -> int:
        return len(self.degrees)

    def dims(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for k in self.degrees:
            out[k] = out.get(k, 0) + 1
        return out

    def shifted_parity(self, a: int) -> int:
        return (self.degrees[a] - 1) % 2

    def direct_sum(self, other: "GradedSpace") -> "GradedSpace":
        return GradedSpace(self.degrees + other.degrees)


def decalage_sign(degrees: Sequence[int], idx: Sequence[int]) -> int:
    n = len(idx)
    e = sum((n - 1 - k) * (degrees[a] - 1) for k, a in enumerate(idx))
    return -1 if e % 2 else 1


def _swap_sign(x: int, y: int) -> int:
    # b(.., x, y, ..) = _swap_sign * b(.., y, x, ..) for degrees x, y
    return 1 if (x * y) % 2 else -1


def _check_tensor(space: GradedSpace, t: SparseTensor, n: int, what: str, out_space=None, in_spaces=None):
    out_space = out_space or space
    in_spaces = in_spaces or [space] * n
    if t.rank != n + 1 or t.dims != tuple(s.dim for s in in_spaces) + (out_space.dim,):
        raise SymmetryError(f"{what}: expected {n} inputs and one output, got dims {t.dims}")
    for idx, v in t.items():
        ins, out = idx[:-1], idx[-1]
        deg_in = sum(s.degrees[a] for s, a in zip(in_spaces, ins))
        if out_space.degrees[out] != deg_in + 2 - n:
            raise SymmetryError(f"{what}: entry {tuple(i + 1 for i in idx)} has degree "
                                f"{out_space.degrees[out] - deg_in}, expected {2 - n}")


def _check_antisymmetric(space: GradedSpace, t: SparseTensor, slots: int, what: str):
    for idx, v in t.items():
        for k in range(slots - 1):
            x, y = space.degrees[idx[k]], space.degrees[idx[k + 1]]
            sw = list(idx)
            sw[k], sw[k + 1] = sw[k + 1], sw[k]
            if t[tuple(sw)] != _swap_sign(x, y) * v:
                raise SymmetryError(f"{what} is not graded antisymmetric at {tuple(i + 1 for i in idx)}")


@dataclass(frozen=True)
class BracketFamily:
    space: GradedSpace
    d: SparseTensor | None = None
    brackets: Mapping[int, SparseTensor] = field(default_factory=dict)

    def __post_init__(self):
        n_dim = self.space.dim
        if self.d is not None:
            if self.d.dims != (n_dim, n_dim):
                raise SymmetryError(f"differential has dims {self.d.dims}")
            _check_tensor(self.space, self.d, 1, "d")
            for idx, _ in self.d.items():
                if self.space.degrees[idx[1]] != self.space.degrees[idx[0]] + 1:
                    raise SymmetryError("differential must have degree +1")
        for n, t in self.brackets.items():
            if n < 2:
                raise SymmetryError(f"bracket arity must be at least 2, got {n}")
            _check_tensor(self.space, t, n, f"b_{n}")
            _check_antisymmetric(self.space, t, n, f"b_{n}")

    @property
    def max_arity(self) -> int:
        return max(self.brackets, default=1)

    def bracket(self, n: int) -> SparseTensor:
        if n in self.brackets:
            return self.brackets[n]
        return SparseTensor((self.space.dim,) * (n + 1))

    def replace(self, n: int, t: SparseTensor) -> "BracketFamily":
        br = dict(self.brackets)
        br[n] = t
        return BracketFamily(self.space, self.d, br)

    def shifted_operations(self) -> dict[int, dict[tuple, dict[int, Fraction]]]:
        """``q_n`` as ordered input tuple -> {output: coefficient}."""
        degs = self.space.degrees
        ops: dict[int, dict[tuple, dict[int, Fraction]]] = {}
        if self.d is not None and self.d.nnz():
            ops[1] = _as_ops(self.d, degs)
        for n, t in self.brackets.items():
            if t.nnz():
                ops[n] = _as_ops(t, degs)
        return ops

    def to_json(self) -> dict:
        return {
            "dims": {str(k): v for k, v in sorted(self.space.dims().items())},
            "d": self.d.to_json() if self.d is not None else None,
            "brackets": {str(n): t.to_json() for n, t in sorted(self.brackets.items())},
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "BracketFamily":
        space = GradedSpace.from_dims({int(k): v for k, v in data["dims"].items()})
        d = SparseTensor.from_json(data["d"]) if data.get("d") else None
        br = {int(n): SparseTensor.from_json(t) for n, t in data.get("brackets", {}).items()}
        return cls(space, d, br)


def _as_ops(t: SparseTensor, degs) -> dict[tuple, dict[int, Fraction]]:
    ops: dict[tuple, dict[int, Fraction]] = {}
    for idx, v in t.items():
        ins = idx[:-1]
        ops.setdefault(ins, {})[idx[-1]] = decalage_sign(degs, ins) * v
    return ops


@dataclass(frozen=True)
class ActionFamily:
    """Maps ``c_n(x_1..x_{n-1}, m)``; tensor slots are the ``g`` inputs, ``m``, then the output."""

    g_space: GradedSpace
    module: GradedSpace
    d: SparseTensor | None = None
    actions: Mapping[int, SparseTensor] = field(default_factory=dict)

    def __post_init__(self):
        mdim = self.module.dim
        if self.d is not None:
            if self.d.dims != (mdim, mdim):
                raise SymmetryError(f"module differential has dims {self.d.dims}")
            for idx, _ in self.d.items():
                if self.module.degrees[idx[1]] != self.module.degrees[idx[0]] + 1:
                    raise SymmetryError("module differential must have degree +1")
        for n, t in self.actions.items():
            if n < 2:
                raise SymmetryError(f"action arity must be at least 2, got {n}")
            _check_tensor(self.module, t, n, f"c_{n}", self.module, [self.g_space] * (n - 1) + [self.module])
            _check_antisymmetric(self.g_space, t, n - 1, f"c_{n}")


def semidirect(s: BracketFamily, a: ActionFamily) -> BracketFamily:
    """``g ⊕ M`` with ``M`` an abelian ideal; weak module iff this is weak Lie."""
    if a.g_space != s.space:
        raise PreconditionError("action is defined over a different space")
    g, m = s.space.dim, a.module.dim
    space = s.space.direct_sum(a.module)
    degs = space.degrees
    n_tot = g + m
    d = {}
    if s.d is not None:
        d.update(s.d.entries)
    if a.d is not None:
        d.update({(i + g, j + g): v for (i, j), v in a.d.items()})
    brackets = {}
    for n in set(s.brackets) | set(a.actions):
        entries = dict(s.bracket(n).entries) if n in s.brackets else {}
        if n in a.actions:
            for idx, v in a.actions[n].items():
                xs, mm, out = list(idx[: n - 1]), idx[n - 1] + g, idx[n] + g
                for k in range(n):
                    # m moved from the end to position k
                    sign = 1
                    for x in xs[k:]:
                        sign *= _swap_sign(degs[x], degs[mm])
                    key = tuple(xs[:k]) + (mm,) + tuple(xs[k:]) + (out,)
                    entries[key] = sign * v
        brackets[n] = SparseTensor((n_tot,) * (n + 1), entries)
    return BracketFamily(space, SparseTensor((n_tot, n_tot), d), brackets)


# ---------------------------------------------------------------- residuals


def _add(acc: dict, vec: Mapping[int, Fraction], c) -> None:
    for k, v in vec.items():
        s = acc.get(k, 0) + c * v
        if s:
            acc[k] = s
        else:
            acc.pop(k, None)


def _shifted_residual(ops, parities, idx: tuple) -> dict[int, Fraction]:
    n = len(idx)
    acc: dict[int, Fraction] = {}
    positions = range(n)
    for i in range(1, n + 1):
        j = n - i + 1
        if i not in ops or j not in ops:
            continue
        qi, qj = ops[i], ops[j]
        for first in itertools.combinations(positions, i):
            inner = qi.get(tuple(idx[p] for p in first))
            if not inner:
                continue
            rest = tuple(idx[p] for p in positions if p not in first)
            order = list(first) + [p for p in positions if p not in first]
            sign = koszul_sign(order, [parities[a] for a in idx])
            for c, coef in inner.items():
                outer = qj.get((c,) + rest)
                if outer:
                    _add(acc, outer, sign * coef)
    return acc


def shuffle_term_count(n: int) -> int:
    """Number of (q, shuffle) pairs with 2 <= q <= n-1 in the arity-n identity."""
    return sum(math.comb(n, q) for q in range(2, n))


@dataclass
class Report:
    passed: bool
    max_arity: int
    residuals: dict[int, SparseTensor]
    shuffle_terms: dict[int, int]

    def witnesses(self, limit: int = 5) -> dict[int, list]:
        out = {}
        for n, t in sorted(self.residuals.items()):
            items = sorted(t.items())[:limit]
            if items:
                out[n] = [{"inputs": [i + 1 for i in idx[:-1]], "output": idx[-1] + 1, "value": str(v)}
                          for idx, v in items]
        return out

    def failing_arities(self) -> list[int]:
        return [n for n, t in sorted(self.residuals.items()) if not t.is_zero()]

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "max_arity": self.max_arity,
            "arities": {str(n): {"pass": self.residuals[n].is_zero(), "nnz": self.residuals[n].nnz(),
                                 "shuffle_terms": self.shuffle_terms[n]} for n in sorted(self.residuals)},
            "witnesses": {str(k): v for k, v in self.witnesses().items()},
        }


def residual_tensor(s: BracketFamily, n: int, full: bool = True) -> SparseTensor:
    """Arity-``n`` residual in bracket form; ``full=False`` only fills sorted input tuples."""
    degs = s.space.degrees
    parities = [(x - 1) % 2 for x in degs]
    ops = s.shifted_operations()
    dim = s.space.dim
    entries = {}
    tuples = itertools.product(range(dim), repeat=n) if full else itertools.combinations_with_replacement(range(dim), n)
    for idx in tuples:
        res = _shifted_residual(ops, parities, idx)
        if res:
            eta = decalage_sign(degs, idx)
            for c, v in res.items():
                entries[idx + (c,)] = eta * v
    return SparseTensor((dim,) * (n + 1), entries)


def check_weak_lie(s: BracketFamily, max_arity: int | None = None, full: bool = False) -> Report:
    if max_arity is None:
        max_arity = s.max_arity + 1
    if max_arity > s.max_arity + 1 and s.brackets:
        raise PreconditionError(f"max_arity {max_arity} exceeds top bracket arity {s.max_arity} + 1")
    residuals = {n: residual_tensor(s, n, full) for n in range(1, max_arity + 1)}
    return Report(all(t.is_zero() for t in residuals.values()), max_arity, residuals,
                  {n: shuffle_term_count(n) for n in residuals})


# ---------------------------------------------------------------- module


@dataclass
class ModuleReport(Report):
    pass


def check_weak_module(s: BracketFamily, a: ActionFamily, max_arity: int | None = None) -> ModuleReport:
    if max_arity is None:
        max_arity = max(s.max_arity, max(a.actions, default=1)) + 1
    base = check_weak_lie(s, min(max_arity, s.max_arity + 1))
    if not base.passed:
        raise PreconditionError(f"the bracket family fails in arities {base.failing_arities()}")
    total = semidirect(s, a)
    g, m = s.space.dim, a.module.dim
    degs = total.space.degrees
    parities = [(x - 1) % 2 for x in degs]
    ops = total.shifted_operations()
    residuals = {}
    for n in range(1, max_arity + 1):
        entries = {}
        for xs in itertools.combinations_with_replacement(range(g), n - 1):
            for mm in range(g, g + m):
                idx = xs + (mm,)
                res = _shifted_residual(ops, parities, idx)
                eta = decalage_sign(degs, idx)
                for c, v in res.items():
                    if c >= g:
                        entries[xs + (mm - g, c - g)] = eta * v
        dims = (g,) * (n - 1) + (m, m)
        residuals[n] = SparseTensor(dims, entries)
    return ModuleReport(all(t.is_zero() for t in residuals.values()), max_arity, residuals,
                        {n: shuffle_term_count(n) for n in residuals})


# ---------------------------------------------------------------- bar picture
# graded-commutative polynomials in xi_a (parity of xi_a = parity of w_a):
# a monomial is a sorted index tuple, odd variables appear at most once


def _sort_monomial(word: Sequence[int], parities) -> tuple[int, tuple] | None:
    word = list(word)
    odd = [a for a in word if parities[a]]
    if len(set(odd)) != len(odd):
        return None
    order = sorted(range(len(word)), key=lambda k: (word[k], k))
    sign = koszul_sign(order, [parities[a] for a in word])
    return sign, tuple(word[k] for k in order)


@dataclass
class Polynomial:
    terms: dict[tuple, Fraction] = field(default_factory=dict)

    def add_term(self, mono: tuple, c) -> None:
        s = self.terms.get(mono, 0) + c
        if s:
            self.terms[mono] = s
        else:
            self.terms.pop(mono, None)

    def is_zero(self) -> bool:
        return not self.terms

    def truncate(self, bound: int) -> "Polynomial":
        return Polynomial({k: v for k, v in self.terms.items() if len(k) <= bound})


def _multiplicity_factor(mono: tuple) -> int:
    f = 1
    for _, grp in itertools.groupby(mono):
        f *= math.factorial(len(list(grp)))
    return f


def generator_images(s: BracketFamily) -> list[Polynomial]:
    """``D(xi_c)`` for each basis index ``c``."""
    parities = [(x - 1) % 2 for x in s.space.degrees]
    images = [Polynomial() for _ in range(s.space.dim)]
    for n, q in s.shifted_operations().items():
        for idx, vec in q.items():
            if list(idx) != sorted(idx):
                continue
            k = sum(parities[a] for a in idx)
            # xi's pass the earlier w's and the odd map q_n
            sign = -1 if (k * (k - 1) // 2 + k) % 2 else 1
            f = Fraction(sign, _multiplicity_factor(idx))
            for c, v in vec.items():
                images[c].add_term(idx, f * v)
    return images


def apply_derivation(images: Sequence[Polynomial], p: Polynomial, parities, bound: int) -> Polynomial:
    out = Polynomial()
    for mono, coef in p.terms.items():
        prefix_parity = 0
        for k, a in enumerate(mono):
            sign = -1 if prefix_parity else 1
            for m2, c2 in images[a].terms.items():
                word = mono[:k] + m2 + mono[k + 1:]
                if len(word) > bound:
                    continue
                srt = _sort_monomial(word, parities)
                if srt is None:
                    continue
                s2, key = srt
                out.add_term(key, sign * s2 * coef * c2)
            prefix_parity ^= parities[a]
    return out


@dataclass
class SquareZeroReport:
    passed: bool
    word_bound: int
    d_squared: list[Polynomial]

    def by_length(self) -> dict[int, int]:
        """Number of nonzero coefficients of D² on generators, per word length."""
        out: dict[int, int] = {}
        for p in self.d_squared:
            for mono in p.terms:
                out[len(mono)] = out.get(len(mono), 0) + 1
        return out

    def failing_lengths(self) -> list[int]:
        return sorted(self.by_length())

    def to_json(self) -> dict:
        return {"passed": self.passed, "word_bound": self.word_bound,
                "nonzero_by_length": {str(k): v for k, v in sorted(self.by_length().items())}}


def predicted_square(s: BracketFamily, word_bound: int) -> list[Polynomial]:
    """``D²`` on generators as predicted from the bracket-form residuals.

    On a sorted word ``a`` of ``k`` odd letters the coefficient of ``xi^a`` in
    ``D²(xi_c)`` is ``-(-1)^(k(k-1)/2) eta(a) R_n(a)_c / prod(mult!)``.
    """
    degs = s.space.degrees
    parities = [(x - 1) % 2 for x in degs]
    out = [Polynomial() for _ in range(s.space.dim)]
    for n in range(1, word_bound + 1):
        for idx, v in residual_tensor(s, n, full=False).items():
            a, c = idx[:-1], idx[-1]
            k = sum(parities[x] for x in a)
            sign = 1 if (k * (k - 1) // 2) % 2 else -1
            out[c].add_term(a, Fraction(sign * decalage_sign(degs, a), _multiplicity_factor(a)) * v)
    return out


def bar_differential(s: BracketFamily, word_bound: int) -> SquareZeroReport:
    """``D²`` on the generators, truncated to words of length ``<= word_bound``.

    ``D`` is an odd derivation, so ``D² = [D, D]/2`` is a derivation and
    vanishes iff it vanishes on generators.
    """
    parities = [(x - 1) % 2 for x in s.space.degrees]
    images = [p.truncate(word_bound) for p in generator_images(s)]
    sq = [apply_derivation(images, p, parities, word_bound) for p in images]
    return SquareZeroReport(all(p.is_zero() for p in sq), word_bound, sq)


# ---------------------------------------------------------------- solving


def solve_bracket(s: BracketFamily, n: int) -> SparseTensor | None:
    """Some ``b_n`` making the arity-``n`` residual vanish, or None.

    The residual is affine in ``b_n`` (only through ``d``); the unknowns are
    the values of ``b_n`` on sorted input tuples of the right degree.
    """
    degs = s.space.degrees
    dim = s.space.dim
    unknowns = []
    for idx in itertools.combinations_with_replacement(range(dim), n):
        for c in range(dim):
            if degs[c] == sum(degs[a] for a in idx) + 2 - n:
                unknowns.append(idx + (c,))
    base = s.replace(n, SparseTensor((dim,) * (n + 1)))
    r0 = residual_tensor(base, n, full=False)

    def unit(u):
        return _antisymmetric_extension(degs, u, n, dim)

    columns = []
    for u in unknowns:
        trial = base.replace(n, unit(u))
        columns.append((residual_tensor(trial, n, full=False) - r0).entries)
    keys = sorted(set(r0.entries) | {k for col in columns for k in col})
    # A x = -r0, solved through the nullspace of the augmented system [A | r0]
    rows = []
    for k in keys:
        row = {j: col[k] for j, col in enumerate(columns) if k in col}
        if k in r0.entries:
            row[len(columns)] = r0.entries[k]
        rows.append(row)
    basis = nullspace(rows, len(columns) + 1)
    for v in basis:
        if v.get(len(columns)):
            lam = v[len(columns)]
            out = SparseTensor((dim,) * (n + 1))
            for j, x in v.items():
                if j < len(columns) and x:
                    out = out + unit(unknowns[j]).scale(x / lam)
            return out
    return None if r0.nnz() else SparseTensor((dim,) * (n + 1))


def _antisymmetric_extension(degs, key: tuple, n: int, dim: int) -> SparseTensor:
    """The graded antisymmetric tensor with value 1 at ``key``; zero if that is impossible."""
    ins, out = key[:-1], key[-1]
    parities = [degs[a] % 2 for a in ins]
    entries: dict = {}
    for perm in itertools.permutations(range(n)):
        new = tuple(ins[p] for p in perm) + (out,)
        sign = perm_sign(perm) * koszul_sign(perm, parities)
        if entries.get(new, sign) != sign:
            return SparseTensor((dim,) * (n + 1))
        entries[new] = sign
    return SparseTensor((dim,) * (n + 1), entries)
