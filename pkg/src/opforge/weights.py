"""Weight systems: metric Lie algebras and symplectic cubic families on graphs.

Vertex tensors are placed on flags and every edge is contracted with a form.
Tensors are dense numpy object arrays of Fractions during contraction.

* metric Lie algebra: ``c_abc = b([e_a, e_b], e_c)`` at each vertex, slots in
  the vertex's flag order, edges contracted with ``b^{-1}``; the value is the
  weight of the flag-convention generator.
* symplectic family: cubic ``phi_i`` at each vertex, every edge ``(t, h)``
  contracted with ``omega(x_t, x_h)``; the value is the weight of the
  vertedge generator (vertex order times edge directions).
"""

from __future__ import annotations

import csv
import hashlib
import io
import itertools
import logging
import string
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from . import graph_kit as gk
from .exact_core import BilinearForm, DegenerateFormError, SparseTensor, perm_sign

log = logging.getLogger(__name__)


class InvalidAlgebraError(ValueError):
    pass


class UndeterminedExponentError(ValueError):
    pass


def _dense(t: SparseTensor) -> np.ndarray:
    arr = np.empty(t.dims, dtype=object)
    arr.fill(Fraction(0))
    for idx, v in t.items():
        arr[idx] = v
    return arr


def _matrix(form: BilinearForm) -> np.ndarray:
    return np.array(form.dense_rows(), dtype=object)


def _sparse(arr: np.ndarray) -> SparseTensor:
    return SparseTensor(arr.shape, {idx: v for idx, v in np.ndenumerate(arr) if v})


# ------------------------------------------------------------------ algebras


@dataclass(frozen=True)
class MetricLieAlgebra:
    """``bracket[a, b, c]`` is the ``e_c`` coefficient of ``[e_a, e_b]``."""

    name: str
    bracket: SparseTensor
    form: BilinearForm
    check: bool = field(default=True, compare=False)

    def __post_init__(self):
        n = self.dim
        if self.bracket.dims != (n, n, n) or self.form.dim != n:
            raise InvalidAlgebraError("bracket and form dimensions disagree")
        if self.check:
            problems = self.violations()
            if problems:
                raise InvalidAlgebraError("; ".join(problems))

    @property
    def dim(self) -> int:
        return self.bracket.dims[0]

    def violations(self) -> list[str]:
        out = []
        f = _dense(self.bracket)
        if np.any(f + f.transpose(1, 0, 2) != 0):
            out.append("bracket is not antisymmetric")
        if np.any(jacobiator(self) != 0):
            out.append("Jacobi identity fails")
        b = _matrix(self.form)
        if np.any(b != b.T):
            out.append("form is not symmetric")
        c = np.einsum("abd,dc->abc", f, b)
        # invariance: b([x,y],z) + b(y,[x,z]) = 0  <=>  c_xyz + c_xzy = 0
        if np.any(c + c.transpose(0, 2, 1) != 0):
            out.append("form is not invariant")
        try:
            self.form.inverse()
        except DegenerateFormError:
            out.append("form is degenerate")
        return out

    def to_json(self) -> dict:
        return {"name": self.name, "dim": self.dim, "bracket": self.bracket.to_json(),
                "form": [[str(x) for x in row] for row in self.form.dense_rows()]}

    @classmethod
    def from_json(cls, data: Mapping) -> "MetricLieAlgebra":
        form = BilinearForm.from_rows([[Fraction(x) for x in row] for row in data["form"]], "symmetric")
        return cls(data.get("name", "custom"), SparseTensor.from_json(data["bracket"]), form)


def jacobiator(g: MetricLieAlgebra) -> np.ndarray:
    """``J[a,b,c,:] = [[a,b],c] + [[b,c],a] + [[c,a],b]``."""
    f = _dense(g.bracket)
    ab_c = np.einsum("abd,dce->abce", f, f)
    return ab_c + ab_c.transpose(1, 2, 0, 3) + ab_c.transpose(2, 0, 1, 3)


def _bracket_from_table(n: int, table: Mapping[tuple[int, int], Mapping[int, object]]) -> SparseTensor:
    ent = {}
    for (a, b), res in table.items():
        for c, v in res.items():
            ent[(a, b, c)] = Fraction(v)
            ent[(b, a, c)] = -Fraction(v)
    return SparseTensor((n, n, n), ent)


def killing_form(bracket: SparseTensor) -> BilinearForm:
    f = _dense(bracket)
    # ad(x)_{cb} = f[x, b, c];  K(x, y) = tr(ad x ad y)
    k = np.einsum("xbc,ycb->xy", f, f)
    return BilinearForm.from_rows(k.tolist(), "symmetric")


def sl2() -> MetricLieAlgebra:
    """Basis e, h, f; Killing form, so K(h,h) = 8 and K(e,f) = 4."""
    br = _bracket_from_table(3, {(1, 0): {0: 2}, (1, 2): {2: -2}, (0, 2): {1: 1}})
    return MetricLieAlgebra("sl2", br, killing_form(br))


def so3() -> MetricLieAlgebra:
    """``[L_i, L_j] = eps_ijk L_k`` with minus the Killing form (``2 delta``)."""
    br = _bracket_from_table(3, {(0, 1): {2: 1}, (1, 2): {0: 1}, (2, 0): {1: 1}})
    return MetricLieAlgebra("so3", br, killing_form(br).scale(-1))


def gl2() -> MetricLieAlgebra:
    """Matrix units E11, E12, E21, E22 with the trace form."""
    units = [(0, 0), (0, 1), (1, 0), (1, 1)]
    idx = {u: k for k, u in enumerate(units)}
    table: dict = {}
    for (a, (i, j)), (b, (k, l)) in itertools.combinations(enumerate(units), 2):
        res: dict = {}
        if j == k:
            res[idx[(i, l)]] = res.get(idx[(i, l)], 0) + 1
        if l == i:
            res[idx[(k, j)]] = res.get(idx[(k, j)], 0) - 1
        res = {c: v for c, v in res.items() if v}
        if res:
            table[(a, b)] = res
    rows = [[Fraction(int(j == k and i == l)) for (k, l) in units] for (i, j) in units]
    return MetricLieAlgebra("gl2", _bracket_from_table(4, table), BilinearForm.from_rows(rows, "symmetric"))


def abelian(n: int) -> MetricLieAlgebra:
    return MetricLieAlgebra(f"abelian({n})", SparseTensor((n, n, n)), BilinearForm.identity(n))


PRESETS = {"sl2": sl2, "so3": so3, "gl2": gl2}


def preset(name: str) -> MetricLieAlgebra:
    if name.startswith("abelian"):
        inner = name[len("abelian"):].strip("()") or "1"
        return abelian(int(inner))
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown algebra preset {name!r}; choose from sl2, so3, gl2, abelian(n)") from None


def structure_tensor(g: MetricLieAlgebra) -> SparseTensor:
    f = _dense(g.bracket)
    c = np.einsum("abd,dc->abc", f, _matrix(g.form))
    for perm in itertools.permutations(range(3)):
        if np.any(c.transpose(perm) != perm_sign(perm) * c):
            raise InvalidAlgebraError("structure tensor is not fully antisymmetric; is the form invariant?")
    return _sparse(c)


def kappa_eval(g: MetricLieAlgebra, n: int) -> SparseTensor:
    """``(a_1..a_n) -> tr(ad e_a1 ... ad e_an)``."""
    if n < 2:
        raise ValueError("kappa needs n >= 2")
    f = _dense(g.bracket)
    ad = np.transpose(f, (0, 2, 1))  # ad[x][c][b] = f[x, b, c]
    dim = g.dim
    out = {}
    for idx in itertools.product(range(dim), repeat=n):
        m = ad[idx[0]]
        for a in idx[1:]:
            m = m.dot(ad[a])
        t = np.trace(m)
        if t:
            out[idx] = t
    return SparseTensor((dim,) * n, out)


# ------------------------------------------------------------------ contraction engine

_LETTERS = string.ascii_letters


def contract_network(vertex_tensors: Sequence[tuple[np.ndarray, Sequence[int]]],
                     edges: Sequence[tuple[int, int, np.ndarray]],
                     open_flags: Sequence[int] = ()) -> np.ndarray | Fraction:
    """Contract vertex tensors (slots labelled by flags) along edges ``(f, f', M)``.

    The result has one slot per entry of ``open_flags``, in that order.
    """
    letters: dict[int, str] = {}

    def letter(f):
        if f not in letters:
            if len(letters) >= len(_LETTERS):
                raise gk.ResourceGuardError("graph too large for the contraction engine")
            letters[f] = _LETTERS[len(letters)]
        return letters[f]

    operands, subs = [], []
    for arr, flags in vertex_tensors:
        operands.append(arr)
        subs.append("".join(letter(f) for f in flags))
    for f1, f2, m in edges:
        operands.append(m)
        subs.append(letter(f1) + letter(f2))
    out = "".join(letter(f) for f in open_flags)
    res = np.einsum(",".join(subs) + "->" + out, *operands, optimize="greedy")
    if not open_flags:
        return Fraction(res.item() if isinstance(res, np.ndarray) else res)
    return res


def _closed_trivalent(graph: gk.OrientedGraph) -> None:
    if graph.legs or any(graph.valency(v) != 3 for v in range(graph.n_vertices)):
        raise gk.GraphError("weights need a closed trivalent graph")


def open_graph_tensor(g: MetricLieAlgebra, graph: gk.OrientedGraph) -> np.ndarray | Fraction:
    """Flag-convention weight with one open slot per leg (legs by label)."""
    c = _dense(structure_tensor(g))
    binv = _matrix(g.form.inverse())
    verts = [(c, fl) for fl in graph.flag_order]
    edges = [(a, b, binv) for a, b in graph.edges]
    legs = [f for f, _, _ in sorted(graph.legs, key=lambda x: x[2])]
    return contract_network(verts, edges, legs)


def weight_closed_graph(g: MetricLieAlgebra, graph: gk.OrientedGraph, convention: str = "flag") -> Fraction:
    """Weight of ``graph``'s generator in ``convention`` (transported to the flag line)."""
    _closed_trivalent(graph)
    if graph.has_self_loop():
        log.info("graph has a self-loop; its weight vanishes")
        return Fraction(0)
    sign = gk.transport_orientation(graph, convention, "flag")
    return sign * open_graph_tensor(g, graph)


def naive_weight(g: MetricLieAlgebra, graph: gk.OrientedGraph) -> Fraction:
    """Brute-force sum over edge index pairs in the support of ``b⁻¹``; flag convention."""
    c = structure_tensor(g)
    binv = g.form.inverse()
    support = [((i, j), binv(i, j)) for i in range(g.dim) for j in range(g.dim) if binv(i, j)]
    total = Fraction(0)
    for choice in itertools.product(support, repeat=len(graph.edges)):
        val = Fraction(1)
        at = {}
        for (a, b), ((i, j), w) in zip(graph.edges, choice):
            val *= w
            at[a], at[b] = i, j
        for fl in graph.flag_order:
            val *= c[tuple(at[f] for f in fl)]
            if not val:
                break
        total += val
    return total


def ihx_residual(g: MetricLieAlgebra) -> SparseTensor:
    """``I + H + X`` double contractions; equals ``b(Jac(a,b,c), d)``."""
    f = _dense(g.bracket)
    b = _matrix(g.form)
    c = np.einsum("abd,dc->abc", f, b)
    binv = _matrix(g.form.inverse())
    i_term = np.einsum("abe,ef,fcd->abcd", c, binv, c)
    h_term = np.einsum("bce,ef,fad->abcd", c, binv, c)
    x_term = np.einsum("cae,ef,fbd->abcd", c, binv, c)
    return _sparse(i_term + h_term + x_term)


def ihx_triple(graph: gk.OrientedGraph, e: int) -> list[gk.OrientedGraph]:
    """The graphs I, H, X around edge ``e = (u, v)``, for the flag convention.

    Let ``P, Q`` be the outer partners of u's other flags and ``R, S`` those of
    v's.  With flag orders ``u = (p, q, e_u)`` and ``v = (e_v, r, s)`` the three
    graphs wire ``(p, q | r, s)`` to ``(P, Q | R, S)``, ``(Q, R | P, S)`` and
    ``(R, P | Q, S)``; their weights add up to the IHX residual at ``(P, Q, R, S)``
    contracted with the rest of the graph.
    """
    a, b = graph.edges[e]
    fv = graph.flag_vertex
    u, v = fv[a], fv[b]
    if u == v:
        raise gk.GraphError("IHX move needs a non-loop edge")
    p, q = [f for f in graph.flag_order[u] if f != a]
    r, s = [f for f in graph.flag_order[v] if f != b]
    partner, edge_of = {}, {}
    for k, (x, y) in enumerate(graph.edges):
        partner[x], partner[y] = y, x
        edge_of[x] = edge_of[y] = k
    inner = {p, q, r, s, a, b}
    outer = {name: partner[f] for name, f in zip("PQRS", (p, q, r, s))}
    if any(o in inner for o in outer.values()):
        raise gk.GraphError("IHX move needs the outer flags away from the edge's endpoints")
    order = list(graph.flag_order)
    order[u] = (p, q, a)
    order[v] = (b, r, s)

    def build(names: str) -> gk.OrientedGraph:
        edges = list(graph.edges)
        for mine, name in zip((p, q, r, s), names):
            o = outer[name]
            x, y = graph.edges[edge_of[o]]
            edges[edge_of[o]] = (mine, o) if y == o else (o, mine)
        return gk.OrientedGraph(graph.genus, tuple(order), tuple(edges), (), (), False, graph.family)

    return [build("PQRS"), build("QRPS"), build("RPQS")]


# ------------------------------------------------------------------ symplectic families


@dataclass(frozen=True)
class SymplecticCubicFamily:
    form: BilinearForm
    cubics: tuple[SparseTensor, ...]

    def __post_init__(self):
        om = _matrix(self.form)
        if np.any(om != -om.T):
            raise InvalidAlgebraError("symplectic form must be antisymmetric")
        try:
            self.form.inverse()
        except DegenerateFormError:
            raise InvalidAlgebraError("symplectic form is degenerate") from None
        n = self.form.dim
        for phi in self.cubics:
            if phi.dims != (n, n, n):
                raise InvalidAlgebraError(f"cubic has dims {phi.dims}, expected {(n,) * 3}")
            arr = _dense(phi)
            if any(np.any(arr.transpose(p) != arr) for p in itertools.permutations(range(3))):
                raise InvalidAlgebraError("cubics must be fully symmetric")

    @property
    def k(self) -> int:
        return len(self.cubics)

    def with_form(self, form: BilinearForm) -> "SymplecticCubicFamily":
        return SymplecticCubicFamily(form, self.cubics)


def symmetric_cubic(dim: int, coeffs: Mapping[tuple[int, int, int], object]) -> SparseTensor:
    """Fully symmetric tensor; ``coeffs`` gives one value per sorted index triple."""
    ent = {}
    for idx, v in coeffs.items():
        for p in set(itertools.permutations(idx)):
            ent[p] = Fraction(v)
    return SparseTensor((dim,) * 3, ent)


def graph_id(graph: gk.OrientedGraph) -> str:
    return hashlib.sha1(repr(gk.canonical_key(graph)).encode()).hexdigest()[:10]


@dataclass
class WeightTable:
    rows: dict[tuple[str, tuple[int, ...]], Fraction] = field(default_factory=dict)
    # vertex count per graph id, for rows without an index tuple
    sizes: dict[str, int] = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["graph_id", "l", "index_tuple", "value_num", "value_den"])
        for (gid, idx), v in sorted(self.rows.items()):
            w.writerow([gid, self.sizes.get(gid, len(idx)), " ".join(str(i + 1) for i in idx), v.numerator, v.denominator])
        return buf.getvalue()

    def value(self, gid: str, idx: Sequence[int]) -> Fraction:
        """Value at any index tuple, using antisymmetry."""
        idx = tuple(idx)
        if len(set(idx)) != len(idx):
            return Fraction(0)
        s = perm_sign(idx)
        return s * self.rows.get((gid, tuple(sorted(idx))), Fraction(0))


def symplectic_contraction(f: SymplecticCubicFamily, graph: gk.OrientedGraph,
                           assignment: Sequence[int]) -> Fraction:
    """``p_Gamma`` with ``phi_{assignment[v]}`` at vertex ``v``; vertedge line."""
    om = _matrix(f.form)
    dense = [_dense(phi) for phi in f.cubics]
    verts = [(dense[i], fl) for i, fl in zip(assignment, graph.flag_order)]
    edges = [(a, b, om) for a, b in graph.edges]
    return contract_network(verts, edges)


def symplectic_weight(f: SymplecticCubicFamily, graph: gk.OrientedGraph, convention: str = "vertedge",
                      gid: str | None = None) -> WeightTable:
    _closed_trivalent(graph)
    l = graph.n_vertices
    table = WeightTable()
    gid = gid or graph_id(graph)
    if l > f.k:
        log.info("graph has %d vertices but the family only %d cubics; empty table", l, f.k)
        return table
    if graph.has_self_loop():
        log.info("graph has a self-loop; its weights vanish")
        return table
    sign = gk.transport_orientation(graph, convention, "vertedge")
    for idx in itertools.combinations(range(f.k), l):
        total = Fraction(0)
        for perm in itertools.permutations(range(l)):
            total += perm_sign(perm) * symplectic_contraction(f, graph, [idx[p] for p in perm])
        if total:
            table.rows[(gid, idx)] = sign * total
    return table


def poisson_bracket(f: SymplecticCubicFamily, i: int, j: int) -> SparseTensor:
    """``{phi_i, phi_j}`` in ``S^4 V`` with ``{x, y} = omega(x, y)`` on linear functions."""
    a, b = _dense(f.cubics[i]), _dense(f.cubics[j])
    om = _matrix(f.form)
    raw = 9 * np.einsum("pqr,ps,stu->qrtu", a, om, b)
    sym = sum(raw.transpose(p) for p in itertools.permutations(range(4)))
    return _sparse(sym / 24)


def two_vertex_projection(f: SymplecticCubicFamily, i: int, j: int, pairing: str) -> SparseTensor:
    """``p_Gamma`` for the two-vertex graph with legs split as ``pairing`` (``"12|34"`` etc.)."""
    a, b = _dense(f.cubics[i]), _dense(f.cubics[j])
    om = _matrix(f.form)
    left, right = pairing.split("|")
    t = np.einsum("xyp,ps,szw->xyzw", a, om, b)
    t = t - np.einsum("xyp,ps,szw->xyzw", b, om, a)  # phi_j at the first vertex, antisymmetrized
    order = [int(ch) - 1 for ch in left + right]
    inv = [order.index(k) for k in range(4)]
    return _sparse(t.transpose(inv))


def ihx_pair_residual(f: SymplecticCubicFamily, i: int, j: int) -> SparseTensor:
    return poisson_bracket(f, i, j)


def ihx_deviation(f: SymplecticCubicFamily, graph: gk.OrientedGraph, e: int, idx: Sequence[int]) -> Fraction:
    """Predicted sum of the vertedge weights of :func:`ihx_triple` at ``idx``.

    The two endpoints of ``e`` are replaced by one 4-slot vertex carrying
    ``(2/3){phi_i, phi_j}`` on their outer flags.
    """
    a, b = graph.edges[e]
    fv = graph.flag_vertex
    u, v = fv[a], fv[b]
    p, q = [x for x in graph.flag_order[u] if x != a]
    r, s = [x for x in graph.flag_order[v] if x != b]
    om = _matrix(f.form)
    dense = [_dense(phi) for phi in f.cubics]
    others = [w for w in range(graph.n_vertices) if w not in (u, v)]
    edges = [(x, y, om) for k, (x, y) in enumerate(graph.edges) if k != e]
    total = Fraction(0)
    for perm in itertools.permutations(range(len(idx))):
        iu, iv = idx[perm[u]], idx[perm[v]]
        if iu > iv:
            continue
        pb = _dense(poisson_bracket(f, iu, iv)) * Fraction(2, 3)
        verts = [(dense[idx[perm[w]]], graph.flag_order[w]) for w in others] + [(pb, (p, q, r, s))]
        total += perm_sign(perm) * contract_network(verts, edges)
    return total


# ------------------------------------------------------------------ homogeneity


def lower_indices(f: SymplecticCubicFamily) -> list[np.ndarray]:
    """The omega-independent tensors ``alpha_i`` in ``S^2 V* ⊗ V``."""
    om = _matrix(f.form)
    return [np.einsum("pqr,pa,qb->abr", _dense(phi), om, om) for phi in f.cubics]


def raise_indices(alphas: Sequence[np.ndarray], form: BilinearForm) -> list[SparseTensor]:
    oi = _matrix(form.inverse())
    out = []
    for al in alphas:
        # phi^{pqr} = omega^{-1}... contracted so that lowering gives alpha back
        phi = np.einsum("abr,ap,bq->pqr", al, oi.T, oi.T)
        out.append(_sparse(phi))
    return out


def homogeneity_exponent(f: SymplecticCubicFamily, graph: gk.OrientedGraph, lam) -> int:
    """Integer ``s`` with ``weight(lam * omega) = lam^s weight(omega)``."""
    lam = Fraction(lam)
    if lam in (0, 1, -1):
        raise ValueError("lambda must differ from 0 and +-1")
    base = symplectic_weight(f, graph)
    alphas = lower_indices(f)
    form2 = f.form.scale(lam)
    g2 = SymplecticCubicFamily(form2, tuple(raise_indices(alphas, form2)))
    scaled = symplectic_weight(g2, graph)
    ratios = set()
    for key, v in base.rows.items():
        ratios.add(scaled.rows.get(key, Fraction(0)) / v)
    for key in scaled.rows:
        if key not in base.rows:
            raise UndeterminedExponentError("rescaled weights are not proportional")
    if not ratios:
        raise UndeterminedExponentError("all weights vanish")
    if len(ratios) != 1:
        raise UndeterminedExponentError(f"inconsistent ratios {sorted(ratios)}")
    (ratio,) = ratios
    for s in range(-4 * graph.n_vertices - 4, 4 * graph.n_vertices + 5):
        if lam ** s == ratio:
            return s
    raise UndeterminedExponentError(f"ratio {ratio} is not a power of {lam}")
