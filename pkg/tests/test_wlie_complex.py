import itertools
import math

import pytest

from opforge import graph_kit as gk
from opforge.lie_operad import lie_normal_form
from opforge.wlie_complex import (
    FamilyMismatchError,
    GraphChain,
    chain_differential,
    chain_space,
    check_suspension,
    cohomology_ranks,
    compose_chain,
    d_squared,
    differential_matrix,
    graft_chain,
    graph_degree,
    juxtapose_chain,
    rank_table_csv,
    suspension_dictionary,
)


def beta(n):
    return GraphChain.from_graphs("wlie", [(1, gk.corolla(n))])


def tree_to_bracket(g):
    """Bracket monomial of a binary tree, children read in In(v) order."""
    fv = g.flag_vertex
    leg = g.leg_of()
    tail_of_head = {b: a for a, b in g.edges}

    def at_vertex(v):
        parts = []
        for f in g.in_flags(v):
            if f in leg:
                parts.append(leg[f][1])
            else:
                parts.append(at_vertex(fv[tail_of_head[f]]))
        assert len(parts) == 2
        return tuple(parts)

    root = next(fv[f] for f, kind, _ in g.legs if kind == "out")
    return at_vertex(root)


# ------------------------------------------------------------------ bases


def test_wlie2_single_corolla():
    b = chain_space("wlie", n=2)
    assert b.degrees == [0] and b.dim(0) == 1


def test_wlie3_bases():
    b = chain_space("wlie", n=3)
    assert {k: b.dim(k) for k in b.degrees} == {-1: 1, 0: 3}
    assert all(g.n_vertices == 2 for g in b.by_degree[0])


def test_f_one_zero_is_empty():
    b = chain_space("F", g=1, n=0)
    assert b.total_dim() == 0


@pytest.mark.parametrize("gn,counts", [
    ((0, 4), {1: 1, 2: 3}),
    ((1, 2), {2: 1}),
    ((2, 0), {2: 1}),
    ((1, 3), {2: 3, 3: 4}),
    ((2, 2), {2: 2, 3: 4, 4: 3}),
])
def test_f_basis_counts(gn, counts):
    # frozen from the enumeration; vertex counts per degree
    b = chain_space("F", g=gn[0], n=gn[1], max_vertices=5)
    assert {k: b.dim(k) for k in b.degrees} == counts


def test_degree_formula():
    for fam, kw in [("wlie", {"n": 4}), ("wlie_prop", {"n": 3, "m": 1}), ("F", {"g": 1, "n": 3})]:
        b = chain_space(fam, **kw)
        for k, graphs in b.by_degree.items():
            for g in graphs:
                if fam == "F":
                    assert k == g.n_vertices
                else:
                    assert k == sum(2 - len(g.in_flags(v)) for v in range(g.n_vertices))


# ------------------------------------------------------------- differential


def test_d_beta3_is_jacobi():
    d = chain_differential(beta(3))
    assert len(d.items()) == 3
    assert {abs(c) for c, _ in d.items()} == {1}
    relation = lie_normal_form([(c, tree_to_bracket(g)) for c, g in d.items()], 3)
    assert relation.is_zero()


@pytest.mark.parametrize("n", [3, 4, 5])
def test_d_beta_counts_shuffle_splittings(n):
    d = chain_differential(beta(n))
    expected = sum(math.comb(n, q) for q in range(2, n))
    assert len(d.items()) == expected


def test_binary_trees_are_cocycles():
    b = chain_space("wlie", n=4)
    m = differential_matrix(b, 0)
    assert m.n_rows == 0


def test_matrix_agrees_with_chain_differential():
    b = chain_space("wlie", n=4)
    m = differential_matrix(b, -1)
    for j, g in enumerate(b.by_degree[-1]):
        d = chain_differential(GraphChain.from_graphs("wlie", [(1, g)]))
        got = {b.index(0, h): c for c, h in d.items()}
        col = {i: m.entry(i, j) for i in range(m.n_rows) if m.entry(i, j)}
        assert got == col


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_wlie_d_squared(n):
    assert all(x.is_zero() for x in d_squared(chain_space("wlie", n=n)).values())


@pytest.mark.parametrize("nm", [(n, m) for n in range(0, 6) for m in range(0, 6) if 1 <= n + m <= 5 and (n, m) != (5, 0)])
def test_wlie_prop_d_squared(nm):
    b = chain_space("wlie_prop", n=nm[0], m=nm[1], max_vertices=6)
    assert all(x.is_zero() for x in d_squared(b).values())


@pytest.mark.slow
def test_wlie_prop_d_squared_five_inputs():
    b = chain_space("wlie_prop", n=5, m=0, max_vertices=6)
    assert all(x.is_zero() for x in d_squared(b).values())


F_CASES = [(0, 3), (0, 4), (0, 5), (0, 6), (0, 7), (1, 1), (1, 2), (1, 3), (1, 4), (1, 5), (2, 0), (2, 1), (2, 2),
           (2, 3), (3, 0), (3, 1), (3, 2), (4, 0)]


@pytest.mark.parametrize("gn", F_CASES)
def test_f_d_squared(gn):
    for fam in ("F", "F_tilde"):
        b = chain_space(fam, g=gn[0], n=gn[1], max_vertices=5)
        assert all(x.is_zero() for x in d_squared(b).values())


def test_differential_raises_degree_by_one():
    for fam, kw in [("wlie", {"n": 4}), ("F", {"g": 1, "n": 3}), ("wlie_prop", {"n": 3, "m": 1})]:
        b = chain_space(fam, **kw)
        for k in b.degrees:
            m = differential_matrix(b, k)
            for i, row in enumerate(m.rows):
                for j, _ in row:
                    src, tgt = b.by_degree[k][j], b.by_degree[k + 1][i]
                    assert graph_degree(tgt, fam) == graph_degree(src, fam) + 1
                    assert tgt.n_vertices == src.n_vertices + 1


# ---------------------------------------------------------------- cohomology


def test_wlie3_cohomology():
    rows = cohomology_ranks(chain_space("wlie", n=3))
    assert [(r.degree, r.betti) for r in rows] == [(-1, 0), (0, 2)]


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_wlie_cohomology_is_lie(n):
    rows = cohomology_ranks(chain_space("wlie", n=n))
    nonzero = [(r.degree, r.betti) for r in rows if r.betti]
    assert nonzero == [(0, math.factorial(n - 1))]
    for r in rows:
        assert r.rank_d + (rows[rows.index(r) - 1].rank_d if rows.index(r) else 0) <= r.dim


@pytest.mark.parametrize("n", [3, 4, 5])
def test_top_cohomology_maps_onto_lie(n):
    # binary trees modulo the image of d are exactly Lie(n)
    b = chain_space("wlie", n=n)
    from opforge.exact_core import rank

    rows = []
    for g in b.by_degree[0]:
        nf = lie_normal_form(tree_to_bracket(g))
        rows.append({k: v for k, v in nf.coeffs})
    assert rank(rows) == math.factorial(n - 1)
    m = differential_matrix(b, -1)
    for j in range(m.n_cols):
        rel = lie_normal_form([(m.entry(i, j), tree_to_bracket(b.by_degree[0][i])) for i in range(m.n_rows)
                               if m.entry(i, j)], n)
        assert rel.is_zero()


@pytest.mark.parametrize("nm,expected", [((3, 1), 11), ((4, 1), 50), ((2, 0), 2), ((3, 0), 6), ((4, 0), 24), ((2, 2), 2)])
def test_wlie_prop_cohomology_matches_lie_prop(nm, expected):
    rows = cohomology_ranks(chain_space("wlie_prop", n=nm[0], m=nm[1]))
    assert [(r.degree, r.betti) for r in rows if r.betti] == [(0, expected)]


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_tree_part_of_f_matches_wlie(n):
    wl = cohomology_ranks(chain_space("wlie", n=n - 1))
    f = cohomology_ranks(chain_space("F", g=0, n=n))
    assert [(r.degree + n - 2, r.dim, r.betti) for r in wl] == [(r.degree, r.dim, r.betti) for r in f]


@pytest.mark.parametrize("n", [4, 5, 6])
def test_suspension_dictionary_is_chain_isomorphism(n):
    eps = check_suspension(n)
    assert set(eps.values()) == {1}
    dic = suspension_dictionary(n)
    for _, (_, perm, _) in dic.items():
        assert len(set(perm)) == len(perm)


def test_rank_csv():
    b = chain_space("wlie", n=3)
    text = rank_table_csv(b, cohomology_ranks(b))
    assert text.splitlines()[0] == "family,n,m,g,degree,dim,rank_d,betti"
    assert text.splitlines()[-1] == "wlie,3,0,0,0,3,0,2"


# -------------------------------------------------------------------- grafting


def test_graft_two_binary_corollas():
    c = compose_chain(beta(2), beta(2), 1)
    (coef, g), = c.items()
    assert abs(coef) == 1 and g.n_vertices == 2 and graph_degree(g, "wlie") == 0


def _zero():
    return GraphChain("wlie", ())


@pytest.mark.parametrize("a,b", [(2, 3), (3, 2), (3, 3), (4, 2), (2, 4)])
def test_leibniz(a, b):
    x, y = beta(a), beta(b)
    for i in range(1, a + 1):
        lhs = chain_differential(compose_chain(x, y, i))
        dx, dy = chain_differential(x), chain_differential(y)
        t1 = compose_chain(dx, y, i) if not dx.is_zero() else _zero()
        t2 = compose_chain(x, dy, i) if not dy.is_zero() else _zero()
        sign = -1 if x.degree() % 2 else 1
        assert (lhs - (t1 + t2.scale(sign))).is_zero()


def test_leibniz_on_mixed_chain():
    trees = [g for g in gk.enumerate_graphs(gk.GraphClassSpec("tree", legs_in=4)) if g.n_vertices == 2]
    x = GraphChain.from_graphs("wlie", [(1, trees[0]), (2, trees[3])])
    y = beta(3)
    for i in range(1, 5):
        lhs = chain_differential(compose_chain(x, y, i))
        rhs = compose_chain(chain_differential(x), y, i) + compose_chain(x, chain_differential(y), i).scale(-1 if x.degree() % 2 else 1)
        assert (lhs - rhs).is_zero()


def test_juxtaposition_of_chains():
    j = juxtapose_chain(beta(2), beta(3))
    (coef, g), = j.items()
    assert g.legs_in() == [1, 2, 3, 4, 5] and g.legs_out() == [1, 2] and len(g.components()) == 2


def test_graft_family_mismatch():
    f = GraphChain.from_graphs("F", [(1, gk.modular_corolla(3))])
    with pytest.raises(FamilyMismatchError):
        graft_chain(beta(2), f, [])
