"""Multilinear Lie polynomials, their operadic compositions and trace forms.

Elements of ``Lie(n)`` are stored in the right-normed basis

    r_σ = [x_σ1, [x_σ2, ..., [x_σ(n-1), x_n]...]]

anchored at the highest variable.  The coordinate of ``r_σ`` in a Lie
polynomial ``P`` is the coefficient of the associative word ``σ1 σ2 ... σ(n-1) n``
in the expansion of ``P``: a commutator ``[A, B]`` with ``x_n`` inside ``B``
contributes words ending in ``x_n`` only through ``A·B``.  That projection is
injective on ``Lie(n)``, so it computes normal forms without rewriting.

Trace forms ``tr(p)``, ``p ∈ Lie(n+1)`` traced over ``x_{n+1}``, reduce to the
cyclic words ``κ_n·σ`` with ``κ_n(x_1..x_n) = tr(ad x_1 ... ad x_n)``.
"""

from __future__ import annotations

import itertools
import math
import re
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Mapping, Sequence, Union

import numpy as np

from .exact_core import as_scalar, rank

Expr = Union[int, tuple]  # leaf variable (1-based) or (left, right)


class MalformedExpressionError(ValueError):
    pass


# ----------------------------------------------------------------- expressions


def leaves(e: Expr) -> list[int]:
    if isinstance(e, int):
        return [e]
    return leaves(e[0]) + leaves(e[1])


def check_expr(e: Expr, n: int | None = None) -> int:
    """Validate a bracket expression; return its arity."""
    if not isinstance(e, (int, tuple)) or (isinstance(e, tuple) and len(e) != 2):
        raise MalformedExpressionError(f"not a bracket expression: {e!r}")
    ls = leaves(e)
    n = n if n is not None else len(ls)
    if sorted(ls) != list(range(1, n + 1)):
        raise MalformedExpressionError(f"variables must be x1..x{n} each exactly once, got {ls}")
    return n


def parse_bracket(text: str) -> Expr:
    """Parse ``"[x1,[x2,x3]]"`` into nested tuples."""
    tokens = re.findall(r"\[|\]|,|x\d+", text.replace(" ", ""))
    if "".join(tokens) != text.replace(" ", ""):
        raise MalformedExpressionError(f"cannot parse {text!r}")
    pos = 0

    def parse():
        nonlocal pos
        if pos >= len(tokens):
            raise MalformedExpressionError("unexpected end of expression")
        tok = tokens[pos]
        pos += 1
        if tok.startswith("x"):
            return int(tok[1:])
        if tok != "[":
            raise MalformedExpressionError(f"unexpected {tok!r}")
        left = parse()
        if pos >= len(tokens) or tokens[pos] != ",":
            raise MalformedExpressionError("expected ','")
        pos += 1
        right = parse()
        if pos >= len(tokens) or tokens[pos] != "]":
            raise MalformedExpressionError("expected ']'")
        pos += 1
        return (left, right)

    e = parse()
    if pos != len(tokens):
        raise MalformedExpressionError("trailing tokens")
    check_expr(e)
    return e


def format_bracket(e: Expr) -> str:
    if isinstance(e, int):
        return f"x{e}"
    return f"[{format_bracket(e[0])},{format_bracket(e[1])}]"


def right_normed(seq: Sequence[int]) -> Expr:
    e: Expr = seq[-1]
    for v in reversed(seq[:-1]):
        e = (v, e)
    return e


def left_normed(seq: Sequence[int]) -> Expr:
    e: Expr = seq[0]
    for v in seq[1:]:
        e = (e, v)
    return e


def substitute(e: Expr, mapping: Mapping[int, Expr]) -> Expr:
    if isinstance(e, int):
        return mapping.get(e, e)
    return (substitute(e[0], mapping), substitute(e[1], mapping))


def relabel_expr(e: Expr, mapping: Mapping[int, int]) -> Expr:
    if isinstance(e, int):
        return mapping[e]
    return (relabel_expr(e[0], mapping), relabel_expr(e[1], mapping))


@lru_cache(maxsize=200_000)
def expand(e: Expr) -> tuple[tuple[tuple[int, ...], int], ...]:
    """Full associative expansion as (word, coefficient) pairs."""
    if isinstance(e, int):
        return (((e,), 1),)
    a, b = expand(e[0]), expand(e[1])
    out: dict = defaultdict(int)
    for wa, ca in a:
        for wb, cb in b:
            out[wa + wb] += ca * cb
            out[wb + wa] -= ca * cb
    return tuple(sorted((w, c) for w, c in out.items() if c))


@lru_cache(maxsize=200_000)
def _ending_in(e: Expr, last: int) -> tuple[tuple[tuple[int, ...], int], ...]:
    """Words of the expansion whose final letter is ``last`` (which must occur in e)."""
    if isinstance(e, int):
        return (((e,), 1),)
    a, b = e
    if last in leaves(b):
        head, tail, sign = expand(a), _ending_in(b, last), 1
    else:
        head, tail, sign = expand(b), _ending_in(a, last), -1
    out: dict = defaultdict(int)
    for wa, ca in head:
        for wb, cb in tail:
            out[wa + wb] += sign * ca * cb
    return tuple(sorted((w, c) for w, c in out.items() if c))


# ------------------------------------------------------------------ elements


@dataclass(frozen=True)
class LieElement:
    """Element of ``Lie(n)``; keys are the prefixes ``σ`` of right-normed monomials."""

    arity: int
    coeffs: tuple[tuple[tuple[int, ...], Fraction], ...]

    @classmethod
    def from_dict(cls, arity: int, d: Mapping) -> "LieElement":
        items = []
        for k, v in d.items():
            v = as_scalar(v)
            if v:
                k = tuple(k)
                if sorted(k + (arity,)) != list(range(1, arity + 1)):
                    raise MalformedExpressionError(f"{k} is not a basis prefix for arity {arity}")
                items.append((k, v))
        return cls(arity, tuple(sorted(items)))

    @classmethod
    def basis(cls, sigma: Sequence[int]) -> "LieElement":
        return cls.from_dict(len(sigma) + 1, {tuple(sigma): 1})

    @classmethod
    def identity(cls) -> "LieElement":
        return cls(1, (((), Fraction(1)),))

    def as_dict(self) -> dict:
        return dict(self.coeffs)

    def is_zero(self) -> bool:
        return not self.coeffs

    def __add__(self, other: "LieElement") -> "LieElement":
        if self.arity != other.arity:
            raise ValueError("arity mismatch")
        d = defaultdict(Fraction, self.as_dict())
        for k, v in other.coeffs:
            d[k] += v
        return LieElement.from_dict(self.arity, d)

    def __neg__(self) -> "LieElement":
        return self.scale(-1)

    def __sub__(self, other: "LieElement") -> "LieElement":
        return self + (-other)

    def scale(self, c) -> "LieElement":
        c = as_scalar(c)
        return LieElement.from_dict(self.arity, {k: c * v for k, v in self.coeffs})

    def terms(self) -> list[tuple[Fraction, Expr]]:
        """Linear combination of right-normed expressions."""
        return [(v, right_normed(k + (self.arity,))) for k, v in self.coeffs]

    def relabel(self, mapping: Mapping[int, int]) -> "LieElement":
        """Substitute ``x_i ↦ x_{mapping[i]}`` and renormalize."""
        return lie_normal_form([(c, relabel_expr(e, mapping)) for c, e in self.terms()], self.arity)

    def to_json(self) -> dict:
        return {
            "arity": self.arity,
            "terms": [
                {"monomial": format_bracket(right_normed(k + (self.arity,))), "num": str(v.numerator), "den": str(v.denominator)}
                for k, v in self.coeffs
            ],
        }

    def __str__(self) -> str:
        if not self.coeffs:
            return "0"
        out = ""
        for k, v in self.coeffs:
            mono = format_bracket(right_normed(k + (self.arity,)))
            sign = "-" if v < 0 else "+"
            term = mono if abs(v) == 1 else f"{abs(v)}*{mono}"
            out += (f" {sign} " if out else ("-" if v < 0 else "")) + term
        return out


def lie_normal_form(e: Expr | list[tuple[object, Expr]], arity: int | None = None) -> LieElement:
    """Expand a bracket expression, or a list of ``(coefficient, expression)``, in the right-normed basis."""
    terms = list(e) if isinstance(e, list) else [(1, e)]
    if not terms:
        if arity is None:
            raise MalformedExpressionError("empty combination needs an arity")
        return LieElement(arity, ())
    n = check_expr(terms[0][1])
    if arity is not None and n != arity:
        raise MalformedExpressionError(f"expected arity {arity}, got {n}")
    out: dict = defaultdict(Fraction)
    for c, ex in terms:
        check_expr(ex, n)
        c = as_scalar(c)
        for w, k in _ending_in(ex, n):
            out[w[:-1]] += c * k
    return LieElement.from_dict(n, out)


def _tag(e: Expr):
    # leaves become ("v", j) so substitution cannot collide with renumbered labels
    if isinstance(e, int):
        return ("v", e)
    return (_tag(e[0]), _tag(e[1]))


def _untag_sub(e, mapping):
    if isinstance(e, tuple) and len(e) == 2 and e[0] == "v":
        return mapping[e[1]]
    return (_untag_sub(e[0], mapping), _untag_sub(e[1], mapping))


def lie_compose(p: LieElement, q: LieElement, i: int) -> LieElement:
    """``p ∘_i q``: insert q into slot i of p, renumbering variables in order."""
    m, n = p.arity, q.arity
    if not 1 <= i <= m:
        raise ValueError(f"slot {i} out of range for arity {m}")
    shift_q = {k: k + i - 1 for k in range(1, n + 1)}
    terms = []
    for cq, eq in q.terms():
        mapping: dict = {j: (j if j < i else j + n - 1) for j in range(1, m + 1)}
        mapping[i] = relabel_expr(eq, shift_q)
        for cp, ep in p.terms():
            terms.append((cp * cq, _untag_sub(_tag(ep), mapping)))
    return lie_normal_form(terms, m + n - 1)


def bracket(p: LieElement, q: LieElement) -> LieElement:
    """``[p(x_1..x_a), q(x_{a+1}..x_{a+b})]``."""
    a, b = p.arity, q.arity
    shift = {k: k + a for k in range(1, b + 1)}
    terms = [(cp * cq, (ep, relabel_expr(eq, shift))) for cp, ep in p.terms() for cq, eq in q.terms()]
    return lie_normal_form(terms, a + b)


def jacobi_monomials() -> list[Expr]:
    """The three cyclic monomials ``[x1,[x2,x3]]``, ``[x2,[x3,x1]]``, ``[x3,[x1,x2]]``."""
    return [(1, (2, 3)), (2, (3, 1)), (3, (1, 2))]


# -------------------------------------------------------------- dimensions


_PRIME = 2_147_483_647


def _rank_mod_p(rows: list[dict[int, int]], ncols: int, target: int | None = None) -> int:
    """Rank over F_p with early exit once ``target`` is reached.

    A full-column rank over F_p certifies full rank over Q.
    """
    pivots: dict[int, np.ndarray] = {}
    for row in rows:
        v = np.zeros(ncols, dtype=np.int64)
        for c, x in row.items():
            v[c] = x % _PRIME
        for c in sorted(pivots):
            if v[c]:
                v = (v - v[c] * pivots[c]) % _PRIME
        nz = np.nonzero(v)[0]
        if len(nz):
            c = int(nz[0])
            inv = pow(int(v[c]), _PRIME - 2, _PRIME)
            v = (v * inv) % _PRIME
            for k in pivots:
                if pivots[k][c]:
                    pivots[k] = (pivots[k] - pivots[k][c] * v) % _PRIME
            pivots[c] = v
            if target is not None and len(pivots) >= target:
                break
    return len(pivots)


def _prefix_index(n: int) -> dict[tuple[int, ...], int]:
    return {p: k for k, p in enumerate(itertools.permutations(range(1, n)))}


def lie_dim(n: int, method: str = "auto") -> int:
    """Rank of the normal forms of all ``S_n`` images of the left-normed monomial.

    ``exact`` eliminates over Q; ``modular`` certifies full rank over F_p (which
    bounds the rank over Q from below; the column count bounds it from above)
    and falls back to exact elimination otherwise.
    """
    if n < 1:
        raise ValueError("n ≥ 1")
    if n == 1:
        return 1
    index = _prefix_index(n)
    mono = left_normed(list(range(1, n + 1)))
    rows = []
    for perm in itertools.permutations(range(1, n + 1)):
        mapping = {k + 1: perm[k] for k in range(n)}
        nf = lie_normal_form(relabel_expr(mono, mapping), n)
        rows.append({index[k]: v for k, v in nf.coeffs})
    ncols = len(index)
    if method == "auto":
        method = "exact" if n <= 5 else "modular"
    if method == "modular":
        int_rows = [{c: int(v) for c, v in r.items()} for r in rows]
        r = _rank_mod_p(int_rows, ncols, target=ncols)
        if r == ncols:
            return r
    return rank(rows)


def word_space_rank(n: int) -> int:
    """Rank of all multilinear Lie monomials inside the free associative algebra."""
    mono = left_normed(list(range(1, n + 1)))
    words = {w: k for k, w in enumerate(itertools.permutations(range(1, n + 1)))}
    rows = []
    for perm in itertools.permutations(range(1, n + 1)):
        mapping = {k + 1: perm[k] for k in range(n)}
        rows.append({words[w]: c for w, c in expand(relabel_expr(mono, mapping))})
    return rank(rows)


# -------------------------------------------------------------- trace forms


def _least_rotation(seq: Sequence[int]) -> tuple[int, ...]:
    k = seq.index(min(seq))
    return tuple(seq[k:]) + tuple(seq[:k])


@dataclass(frozen=True)
class TraceElement:
    """Combination of cyclic words; ``(s_1..s_n)`` stands for ``κ_n(x_s1, ..., x_sn)``."""

    arity: int
    coeffs: tuple[tuple[tuple[int, ...], Fraction], ...]

    @classmethod
    def from_dict(cls, arity: int, d: Mapping) -> "TraceElement":
        acc: dict = defaultdict(Fraction)
        for k, v in d.items():
            k = tuple(k)
            if sorted(k) != list(range(1, arity + 1)):
                raise MalformedExpressionError(f"{k} is not a word in x1..x{arity}")
            acc[_least_rotation(k)] += as_scalar(v)
        return cls(arity, tuple(sorted((k, v) for k, v in acc.items() if v)))

    @classmethod
    def kappa(cls, n: int) -> "TraceElement":
        return cls.from_dict(n, {tuple(range(1, n + 1)): 1})

    def as_dict(self) -> dict:
        return dict(self.coeffs)

    def is_zero(self) -> bool:
        return not self.coeffs

    def __add__(self, other: "TraceElement") -> "TraceElement":
        if self.arity != other.arity:
            raise ValueError("arity mismatch")
        d = defaultdict(Fraction, self.as_dict())
        for k, v in other.coeffs:
            d[k] += v
        return TraceElement.from_dict(self.arity, d)

    def __neg__(self) -> "TraceElement":
        return self.scale(-1)

    def __sub__(self, other: "TraceElement") -> "TraceElement":
        return self + (-other)

    def scale(self, c) -> "TraceElement":
        c = as_scalar(c)
        return TraceElement.from_dict(self.arity, {k: c * v for k, v in self.coeffs})

    def relabel(self, mapping: Mapping[int, int]) -> "TraceElement":
        """Substitute ``x_i ↦ x_{mapping[i]}``."""
        return TraceElement.from_dict(self.arity, {tuple(mapping[s] for s in k): v for k, v in self.coeffs})

    def act(self, sigma: Sequence[int]) -> "TraceElement":
        """Right action ``(κ·σ)(x_1..x_n) = κ(x_σ(1), ..., x_σ(n))`` (σ as 1-based images)."""
        # a word w means κ(x_w1..x_wn); precomposing with σ turns x_j into x_σ(j)
        return self.relabel({j + 1: sigma[j] for j in range(self.arity)})

    def to_json(self) -> dict:
        return {
            "arity": self.arity,
            "terms": [{"word": list(k), "num": str(v.numerator), "den": str(v.denominator)} for k, v in self.coeffs],
        }


def trace_reduce(p: LieElement) -> TraceElement:
    """``tr(p)`` for ``p ∈ Lie(n+1)`` traced over its last variable.

    ``tr([x_s1,[...,[x_sn, y]...]]) = tr(ad x_s1 ... ad x_sn) = κ_n(x_s1..x_sn)``.
    """
    n = p.arity - 1
    if n < 1:
        raise ValueError("trace needs arity ≥ 2")
    return TraceElement.from_dict(n, {k: v for k, v in p.coeffs})


def trace_of_composite(p: LieElement, q: LieElement) -> TraceElement:
    """``tr(p ∘_{a+1} q)`` for ``p ∈ Lie(a+1)``, ``q ∈ Lie(b+1)``."""
    return trace_reduce(lie_compose(p, q, p.arity))


def cyclic_block_swap(a: int, b: int) -> dict[int, int]:
    """Relabelling sending the first ``b`` variables after the last ``a`` ones.

    With it ``tr(p ∘_{a+1} q) = tr(q ∘_{b+1} p).relabel(cyclic_block_swap(a, b))``.
    """
    mapping = {k: a + k for k in range(1, b + 1)}
    mapping.update({b + k: k for k in range(1, a + 1)})
    return mapping


def trace_space_dim(n: int) -> int:
    """Rank of ``tr`` over all relabellings of ``[x_1,[x_2,...,[x_n, y]...]]``."""
    index = {w: k for k, w in enumerate(w for w in itertools.permutations(range(1, n + 1)) if w[0] == 1)}
    base = LieElement.basis(tuple(range(1, n + 1)))
    rows = []
    for perm in itertools.permutations(range(1, n + 1)):
        mapping = {k + 1: perm[k] for k in range(n)}
        mapping[n + 1] = n + 1
        t = trace_reduce(base.relabel(mapping))
        rows.append({index[k]: v for k, v in t.coeffs})
    return rank(rows)


# ------------------------------------------------------------------- PROP


@dataclass(frozen=True)
class PropElement:
    """Element of ``LIE(n, m)``: juxtapositions of Lie trees and traces.

    A key is ``(trees, wheels)``: ``trees[j]`` is the global input word of the
    right-normed monomial feeding output ``j+1`` (its last letter the anchor),
    ``wheels`` a sorted tuple of cyclic words.
    """

    n: int
    m: int
    terms: tuple[tuple[tuple, Fraction], ...]

    @classmethod
    def from_lie(cls, p: LieElement) -> "PropElement":
        return cls(p.arity, 1, tuple(sorted(((((k + (p.arity,)),), ()), v) for k, v in p.coeffs)))

    @classmethod
    def from_trace(cls, t: TraceElement) -> "PropElement":
        return cls(t.arity, 0, tuple(sorted((((), (k,)), v) for k, v in t.coeffs)))

    def juxtapose(self, other: "PropElement") -> "PropElement":
        acc: dict = defaultdict(Fraction)
        for (trees_a, wheels_a), ca in self.terms:
            for (trees_b, wheels_b), cb in other.terms:
                shift = lambda w: tuple(x + self.n for x in w)  # noqa: E731
                trees = trees_a + tuple(shift(w) for w in trees_b)
                wheels = tuple(sorted(wheels_a + tuple(_least_rotation(shift(w)) for w in wheels_b)))
                acc[(trees, wheels)] += ca * cb
        return PropElement(self.n + other.n, self.m + other.m, tuple(sorted((k, v) for k, v in acc.items() if v)))

    def blocks(self) -> list[tuple[tuple, tuple]]:
        """Input partitions (tree blocks per output, wheel blocks) of each term."""
        out = []
        for (trees, wheels), _ in self.terms:
            out.append((tuple(tuple(sorted(w)) for w in trees), tuple(tuple(sorted(w)) for w in wheels)))
        return out


def factorial(n: int) -> int:
    return math.factorial(n)
