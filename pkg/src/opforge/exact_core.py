"""Exact rational scalars, permutations with Koszul signs, sparse tensors.

Everything here is immutable and exact.  Scalars are :class:`fractions.Fraction`;
tensor indices are 0-based in the Python API and 1-based in the JSON format.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from math import factorial, gcd
from typing import Iterable, Mapping, Sequence

import numpy as np

ExactScalar = Fraction


class ArityError(ValueError):
    """Length of a permutation or parity vector does not match a tensor."""


class ShapeError(ValueError):
    """Slot dimensions are incompatible."""


class DegenerateFormError(ValueError):
    """A bilinear form failed the nondegeneracy or symmetry check."""


def as_scalar(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        raise TypeError("floating point values are not accepted")
    return Fraction(x)


# ---------------------------------------------------------------- permutations


def perm_sign(seq: Sequence) -> int:
    """Sign of the permutation that sorts ``seq`` (entries must be distinct)."""
    seq = list(seq)
    sign = 1
    seen = [False] * len(seq)
    order = sorted(range(len(seq)), key=seq.__getitem__)
    # order[k] is the position holding the k-th smallest value
    for start in range(len(seq)):
        if seen[start]:
            continue
        length = 0
        k = start
        while not seen[k]:
            seen[k] = True
            k = order[k]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def koszul_sign(order: Sequence[int], parities: Sequence[int]) -> int:
    """Koszul sign of reordering graded items ``0..n-1`` into ``order``.

    Only inversions between two odd items contribute.
    """
    odd = [i for i in order if parities[i] % 2]
    return perm_sign(odd)


@dataclass(frozen=True)
class Permutation:
    """A bijection of ``{1..n}``, stored by its images."""

    images: tuple[int, ...]

    def __post_init__(self):
        images = tuple(int(i) for i in self.images)
        if sorted(images) != list(range(1, len(images) + 1)):
            raise ValueError(f"not a permutation of 1..n: {images}")
        object.__setattr__(self, "images", images)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(1, n + 1)))

    @classmethod
    def from_zero_based(cls, images: Sequence[int]) -> "Permutation":
        return cls(tuple(i + 1 for i in images))

    def __len__(self) -> int:
        return len(self.images)

    def __call__(self, i: int) -> int:
        return self.images[i - 1]

    def zero_based(self) -> tuple[int, ...]:
        return tuple(i - 1 for i in self.images)

    def compose(self, other: "Permutation") -> "Permutation":
        """``self ∘ other``: apply ``other`` first."""
        if len(other) != len(self):
            raise ArityError("permutations of different lengths")
        return Permutation(tuple(self(other(i)) for i in range(1, len(self) + 1)))

    def inverse(self) -> "Permutation":
        inv = [0] * len(self)
        for i, im in enumerate(self.images, start=1):
            inv[im - 1] = i
        return Permutation(tuple(inv))

    def sign(self) -> int:
        return perm_sign(self.images)


# --------------------------------------------------------------------- tensors


def _clean(entries: Mapping) -> dict:
    out = {}
    for k, v in entries.items():
        v = as_scalar(v)
        if v:
            out[tuple(k)] = v
    return out


class SparseTensor:
    """Finite association from index tuples to nonzero exact scalars.

    ``dims[s]`` is the dimension of slot ``s``.  Instances are treated as
    immutable; all operations return new tensors.
    """

    __slots__ = ("dims", "_entries")

    def __init__(self, dims: Sequence[int], entries: Mapping | None = None):
        self.dims = tuple(int(d) for d in dims)
        if any(d <= 0 for d in self.dims):
            raise ShapeError(f"slot dimensions must be positive: {self.dims}")
        self._entries = _clean(entries or {})
        for idx in self._entries:
            if len(idx) != len(self.dims) or any(
                not 0 <= i < d for i, d in zip(idx, self.dims)
            ):
                raise ShapeError(f"index {idx} out of bounds for dims {self.dims}")

    # construction helpers
    @classmethod
    def _trusted(cls, dims, entries: dict) -> "SparseTensor":
        t = cls.__new__(cls)
        t.dims = tuple(dims)
        t._entries = entries
        return t

    @classmethod
    def basis_product(cls, dims: Sequence[int], *indices: int) -> "SparseTensor":
        """The pure tensor ``e_{i1} ⊗ ... ⊗ e_{ik}``."""
        return cls(dims, {tuple(indices): 1})

    @classmethod
    def from_dense(cls, array) -> "SparseTensor":
        array = np.asarray(array, dtype=object)
        entries = {}
        for idx in itertools.product(*(range(d) for d in array.shape)):
            v = array[idx]
            if v:
                entries[idx] = as_scalar(v)
        return cls._trusted(array.shape, entries)

    def to_dense(self) -> np.ndarray:
        out = np.empty(self.dims, dtype=object)
        out.fill(Fraction(0))
        for idx, v in self._entries.items():
            out[idx] = v
        return out

    # access
    @property
    def rank(self) -> int:
        return len(self.dims)

    @property
    def entries(self) -> dict:
        return dict(self._entries)

    def items(self):
        return self._entries.items()

    def __getitem__(self, idx) -> Fraction:
        return self._entries.get(tuple(idx), Fraction(0))

    def nnz(self) -> int:
        return len(self._entries)

    def is_zero(self) -> bool:
        return not self._entries

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseTensor):
            return NotImplemented
        return self.dims == other.dims and self._entries == other._entries

    def __hash__(self):
        return hash((self.dims, frozenset(self._entries.items())))

    def __repr__(self) -> str:
        return f"SparseTensor(dims={self.dims}, nnz={self.nnz()})"

    # linear structure
    def _check_same(self, other: "SparseTensor"):
        if self.dims != other.dims:
            raise ShapeError(f"dims differ: {self.dims} vs {other.dims}")

    def __add__(self, other: "SparseTensor") -> "SparseTensor":
        self._check_same(other)
        out = dict(self._entries)
        for k, v in other._entries.items():
            s = out.get(k, 0) + v
            if s:
                out[k] = s
            else:
                out.pop(k, None)
        return SparseTensor._trusted(self.dims, out)

    def __neg__(self) -> "SparseTensor":
        return self.scale(-1)

    def __sub__(self, other: "SparseTensor") -> "SparseTensor":
        return self + (-other)

    def scale(self, c) -> "SparseTensor":
        c = as_scalar(c)
        if not c:
            return SparseTensor._trusted(self.dims, {})
        return SparseTensor._trusted(self.dims, {k: v * c for k, v in self._entries.items()})

    def __mul__(self, c) -> "SparseTensor":
        return self.scale(c)

    __rmul__ = __mul__

    def tensor(self, other: "SparseTensor") -> "SparseTensor":
        """Outer product; slots of ``self`` come first."""
        out = {}
        for a, x in self._entries.items():
            for b, y in other._entries.items():
                out[a + b] = x * y
        return SparseTensor._trusted(self.dims + other.dims, out)

    # slot operations
    def permute_slots(self, sigma: Permutation | Sequence[int], parities: Sequence[int] | None = None) -> "SparseTensor":
        """Move slot ``i`` to position ``sigma(i)`` with the Koszul sign.

        ``sigma`` is a :class:`Permutation` (1-based) or a 0-based image tuple.
        ``parities`` gives the parity of each *current* slot; entries pick up
        the sign of the induced permutation of the odd slots.
        """
        images = sigma.zero_based() if isinstance(sigma, Permutation) else tuple(sigma)
        n = self.rank
        if len(images) != n:
            raise ArityError(f"permutation of length {len(images)} for {n} slots")
        if sorted(images) != list(range(n)):
            raise ArityError(f"not a permutation: {images}")
        parities = tuple(parities) if parities is not None else (0,) * n
        if len(parities) != n:
            raise ArityError(f"{len(parities)} parities for {n} slots")
        order = [0] * n  # order[new_position] = old slot
        for old, new in enumerate(images):
            order[new] = old
        sign = koszul_sign(order, parities)
        dims = tuple(self.dims[order[p]] for p in range(n))
        out = {}
        for idx, v in self._entries.items():
            out[tuple(idx[order[p]] for p in range(n))] = v if sign > 0 else -v
        return SparseTensor._trusted(dims, out)

    def contract_slots(self, form: "BilinearForm", i: int, j: int) -> "SparseTensor":
        """Pair slot ``i`` (first form argument) with slot ``j`` (second)."""
        n = self.rank
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise ShapeError(f"invalid slot pair ({i}, {j}) for rank {n}")
        if self.dims[i] != form.dim or self.dims[j] != form.dim:
            raise ShapeError(
                f"slots of dims {self.dims[i]}, {self.dims[j]} against form of dim {form.dim}"
            )
        keep = [s for s in range(n) if s not in (i, j)]
        mat = form.matrix
        out: dict = {}
        for idx, v in self._entries.items():
            w = mat[(idx[i], idx[j])]
            if not w:
                continue
            key = tuple(idx[s] for s in keep)
            s = out.get(key, 0) + v * w
            if s:
                out[key] = s
            else:
                out.pop(key, None)
        if not keep:
            return SparseTensor._trusted((1,), {(0,): out[()]} if () in out else {})
        return SparseTensor._trusted(tuple(self.dims[s] for s in keep), out)

    def scalar(self) -> Fraction:
        """Value of a rank-0 result (stored as a single slot of dimension 1)."""
        if self.dims != (1,):
            raise ShapeError(f"not a scalar: dims {self.dims}")
        return self[(0,)]

    def symmetrize(self, slots: Sequence[int], mode: str = "sym") -> "SparseTensor":
        """Average over permutations of ``slots``; signed in ``alt`` mode."""
        if mode not in ("sym", "alt"):
            raise ValueError(f"mode must be 'sym' or 'alt', got {mode!r}")
        slots = list(slots)
        if len(set(slots)) != len(slots) or any(not 0 <= s < self.rank for s in slots):
            raise ShapeError(f"bad slot selection {slots}")
        if len({self.dims[s] for s in slots}) > 1:
            raise ShapeError("symmetrized slots must have equal dimensions")
        k = len(slots)
        norm = Fraction(1, factorial(k))
        out: dict = {}
        for perm in itertools.permutations(range(k)):
            sgn = perm_sign(perm) if mode == "alt" else 1
            for idx, v in self._entries.items():
                new = list(idx)
                for a, b in enumerate(perm):
                    new[slots[b]] = idx[slots[a]]
                key = tuple(new)
                out[key] = out.get(key, 0) + sgn * v * norm
        return SparseTensor(self.dims, out)

    # serialization
    def to_json(self) -> dict:
        entries = []
        for idx in sorted(self._entries):
            v = self._entries[idx]
            entries.append(
                {"idx": [i + 1 for i in idx], "num": str(v.numerator), "den": str(v.denominator)}
            )
        return {"dims": list(self.dims), "entries": entries}

    @classmethod
    def from_json(cls, data: Mapping | str) -> "SparseTensor":
        if isinstance(data, str):
            data = json.loads(data)
        entries = {}
        for e in data["entries"]:
            entries[tuple(i - 1 for i in e["idx"])] = Fraction(int(e["num"]), int(e["den"]))
        return cls(data["dims"], entries)


def permute_slots(t: SparseTensor, sigma, parities=None) -> SparseTensor:
    return t.permute_slots(sigma, parities)


def contract_slots(t: SparseTensor, form: "BilinearForm", i: int, j: int) -> SparseTensor:
    return t.contract_slots(form, i, j)


def symmetrize(t: SparseTensor, slots: Sequence[int], mode: str = "sym") -> SparseTensor:
    return t.symmetrize(slots, mode)


# ---------------------------------------------------------------- linear algebra


def determinant(matrix: Sequence[Sequence]) -> Fraction:
    """Exact determinant by Gaussian elimination over the rationals."""
    m = [[as_scalar(x) for x in row] for row in matrix]
    n = len(m)
    if any(len(row) != n for row in m):
        raise ShapeError("determinant of a non-square matrix")
    det = Fraction(1)
    for c in range(n):
        p = next((r for r in range(c, n) if m[r][c]), None)
        if p is None:
            return Fraction(0)
        if p != c:
            m[c], m[p] = m[p], m[c]
            det = -det
        det *= m[c][c]
        inv = 1 / m[c][c]
        for r in range(c + 1, n):
            f = m[r][c] * inv
            if f:
                for k in range(c, n):
                    m[r][k] -= f * m[c][k]
    return det


def _integer_row(row: Mapping[int, Fraction]) -> dict[int, int]:
    den = 1
    for v in row.values():
        v = as_scalar(v)
        den = den * v.denominator // gcd(den, v.denominator)
    out = {}
    for c, v in row.items():
        v = as_scalar(v) * den
        if v:
            out[c] = int(v)
    return out


def _primitive(row: dict[int, int]) -> dict[int, int]:
    g = 0
    for v in row.values():
        g = gcd(g, v)
        if g == 1:
            return row
    if g > 1:
        return {c: v // g for c, v in row.items()}
    return row


def rank(rows: Iterable[Mapping[int, object]]) -> int:
    """Exact rank of a sparse matrix given as ``{column: value}`` rows.

    Fraction-free elimination: rows are scaled to primitive integer vectors
    and combined by cross-multiplication, so no rational arithmetic occurs.
    """
    pivots: dict[int, dict[int, int]] = {}
    for raw in rows:
        row = _primitive(_integer_row(raw))
        while row:
            col = min(row)
            piv = pivots.get(col)
            if piv is None:
                pivots[col] = row
                break
            a, b = row[col], piv[col]
            g = gcd(a, b)
            fa, fb = b // g, a // g
            new = {c: v * fa for c, v in row.items()}
            for c, v in piv.items():
                s = new.get(c, 0) - v * fb
                if s:
                    new[c] = s
                else:
                    new.pop(c, None)
            row = _primitive(new)
    return len(pivots)


def row_reduce(rows: Sequence[Mapping[int, object]]) -> tuple[dict[int, dict[int, Fraction]], list[int]]:
    """Reduced row echelon form over the rationals.

    Returns ``(pivot_rows, pivot_columns)`` where ``pivot_rows[c]`` has a 1 in
    column ``c`` and zeros in every other pivot column.
    """
    pivots: dict[int, dict[int, Fraction]] = {}
    for raw in rows:
        row = {c: as_scalar(v) for c, v in raw.items() if v}
        for c in sorted(set(row) & set(pivots)):
            f = row.get(c)
            if not f:
                continue
            for k, v in pivots[c].items():
                s = row.get(k, 0) - f * v
                if s:
                    row[k] = s
                else:
                    row.pop(k, None)
        if not row:
            continue
        col = min(row)
        inv = 1 / row[col]
        row = {k: v * inv for k, v in row.items()}
        for other in pivots.values():
            f = other.get(col)
            if f:
                for k, v in row.items():
                    s = other.get(k, 0) - f * v
                    if s:
                        other[k] = s
                    else:
                        other.pop(k, None)
        # reduce the new row against later-found pivots is unnecessary: it was
        # reduced against all existing pivots before insertion
        pivots[col] = row
    return pivots, sorted(pivots)


def nullspace(rows: Sequence[Mapping[int, object]], ncols: int) -> list[dict[int, Fraction]]:
    """Basis of ``{x : row · x = 0 for every row}`` as sparse vectors."""
    pivots, pcols = row_reduce(rows)
    pset = set(pcols)
    basis = []
    for free in range(ncols):
        if free in pset:
            continue
        vec = {free: Fraction(1)}
        for c, row in pivots.items():
            v = row.get(free)
            if v:
                vec[c] = -v
        basis.append(vec)
    return basis


# ------------------------------------------------------------- bilinear forms


@dataclass(frozen=True)
class BilinearForm:
    """Nondegenerate symmetric or antisymmetric form on a space of dimension ``dim``."""

    matrix: SparseTensor
    kind: str

    def __post_init__(self):
        if self.kind not in ("symmetric", "antisymmetric"):
            raise ValueError(f"kind must be symmetric or antisymmetric, got {self.kind!r}")
        dims = self.matrix.dims
        if len(dims) != 2 or dims[0] != dims[1]:
            raise ShapeError(f"form matrix must be square, got dims {dims}")
        sgn = 1 if self.kind == "symmetric" else -1
        for (a, b), v in self.matrix.items():
            if self.matrix[(b, a)] != sgn * v:
                raise DegenerateFormError(f"matrix is not {self.kind} at ({a}, {b})")
        if self.kind == "antisymmetric":
            for a in range(dims[0]):
                if self.matrix[(a, a)]:
                    raise DegenerateFormError("antisymmetric form with nonzero diagonal")
        if determinant(self.dense_rows()) == 0:
            raise DegenerateFormError("form is degenerate")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence], kind: str) -> "BilinearForm":
        return cls(SparseTensor.from_dense(np.array(rows, dtype=object)), kind)

    @classmethod
    def standard_symplectic(cls, dim: int) -> "BilinearForm":
        """Darboux form with ``ω(e_i, e_{i+k}) = 1`` for ``dim = 2k``."""
        if dim % 2:
            raise ShapeError("symplectic dimension must be even")
        k = dim // 2
        entries = {}
        for i in range(k):
            entries[(i, i + k)] = 1
            entries[(i + k, i)] = -1
        return cls(SparseTensor((dim, dim), entries), "antisymmetric")

    @classmethod
    def identity(cls, dim: int) -> "BilinearForm":
        return cls(SparseTensor((dim, dim), {(i, i): 1 for i in range(dim)}), "symmetric")

    @property
    def dim(self) -> int:
        return self.matrix.dims[0]

    def dense_rows(self) -> list[list[Fraction]]:
        n = self.dim
        return [[self.matrix[(a, b)] for b in range(n)] for a in range(n)]

    def __call__(self, a: int, b: int) -> Fraction:
        return self.matrix[(a, b)]

    def scale(self, c) -> "BilinearForm":
        return BilinearForm(self.matrix.scale(c), self.kind)

    def inverse(self) -> "BilinearForm":
        """The form ``M^{-1}`` on the dual space (same symmetry type)."""
        n = self.dim
        rows = []
        for a, row in enumerate(self.dense_rows()):
            r = {c: v for c, v in enumerate(row) if v}
            r[n + a] = Fraction(1)
            rows.append(r)
        pivots, _ = row_reduce(rows)
        inv = {}
        for c in range(n):
            for k, v in pivots[c].items():
                if k >= n:
                    inv[(c, k - n)] = v
        return BilinearForm(SparseTensor((n, n), inv), self.kind)


def tensor_dense(t: SparseTensor) -> np.ndarray:
    return t.to_dense()
