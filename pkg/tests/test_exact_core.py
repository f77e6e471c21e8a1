import itertools
import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opforge.exact_core import (
    ArityError,
    BilinearForm,
    DegenerateFormError,
    Permutation,
    ShapeError,
    SparseTensor,
    contract_slots,
    nullspace,
    permute_slots,
    rank,
    symmetrize,
)


def e(dims, *idx):
    return SparseTensor.basis_product(dims, *idx)


def test_identity_permutation_leaves_tensor():
    t = SparseTensor((2, 3), {(0, 1): 3, (1, 2): Fraction(-1, 2)})
    assert permute_slots(t, Permutation.identity(2)) == t


def test_swap_even_slots():
    t = e((2, 2), 0, 1)
    assert permute_slots(t, Permutation((2, 1)), (0, 0)) == e((2, 2), 1, 0)


def test_swap_odd_slots_picks_up_sign():
    t = e((2, 2), 0, 1)
    assert permute_slots(t, Permutation((2, 1)), (1, 1)) == -e((2, 2), 1, 0)


def test_permute_length_mismatch():
    with pytest.raises(ArityError):
        permute_slots(e((2, 2), 0, 1), Permutation((1, 2, 3)))
    with pytest.raises(ArityError):
        permute_slots(e((2, 2), 0, 1), Permutation((2, 1)), (1,))


def test_contract_against_symplectic():
    w = BilinearForm.standard_symplectic(2)
    assert contract_slots(e((2, 2), 0, 1), w, 0, 1).scalar() == 1
    assert contract_slots(e((2, 2), 1, 0), w, 0, 1).scalar() == -1


def test_symmetric_tensor_dies_on_antisymmetric_form():
    w = BilinearForm.standard_symplectic(4)
    t = SparseTensor((4, 4), {(0, 2): 5, (2, 0): 5, (1, 1): 7, (1, 3): -2, (3, 1): -2})
    assert contract_slots(t, w, 0, 1).is_zero()


def test_contract_shape_errors():
    w = BilinearForm.standard_symplectic(2)
    with pytest.raises(ShapeError):
        contract_slots(e((3, 3), 0, 1), w, 0, 1)
    with pytest.raises(ShapeError):
        contract_slots(e((2, 2), 0, 1), w, 0, 0)


def test_degenerate_form_rejected():
    with pytest.raises(DegenerateFormError):
        BilinearForm.from_rows([[1, 1], [1, 1]], "symmetric")
    with pytest.raises(ValueError):
        BilinearForm.from_rows([[0, 1], [2, 0]], "antisymmetric")


def _sl2():
    # basis e, h, f
    br = {(1, 0): (0, 2), (1, 2): (2, -2), (0, 2): (1, 1)}
    entries = {}
    for (a, b), (c, v) in br.items():
        entries[(a, b, c)] = Fraction(v)
        entries[(b, a, c)] = Fraction(-v)
    return SparseTensor((3, 3, 3), entries)


def test_sl2_full_contraction_oracle():
    # oracle: naive sum of c_abc c^cba (nested pairing) with Killing inverse
    f = _sl2()
    killing = [[0, 0, 4], [0, 8, 0], [4, 0, 0]]
    b = BilinearForm.from_rows(killing, "symmetric")
    binv = b.inverse()
    # lower the last index
    c = {}
    for a, bb, cc in itertools.product(range(3), repeat=3):
        c[(a, bb, cc)] = sum(f[(a, bb, d)] * killing[d][cc] for d in range(3))
    naive = sum(
        c[(a, bb, cc)] * c[(x, y, z)] * binv(a, z) * binv(bb, y) * binv(cc, x)
        for a, bb, cc, x, y, z in itertools.product(range(3), repeat=6)
    )
    assert naive == 3
    ct = SparseTensor((3, 3, 3), c)
    pair = ct.tensor(ct)
    pair = contract_slots(pair, binv, 2, 3)
    pair = contract_slots(pair, binv, 1, 2)
    assert contract_slots(pair, binv, 0, 1).scalar() == 3
    # the parallel pairing differs by the odd reversal of one factor
    par = contract_slots(contract_slots(contract_slots(ct.tensor(ct), binv, 0, 3), binv, 0, 2), binv, 0, 1)
    assert par.scalar() == -3


def test_symmetrize_examples():
    t = e((2, 2), 0, 0)
    assert symmetrize(t, [0, 1], "alt").is_zero()
    alt = symmetrize(e((2, 2), 0, 1), [0, 1], "alt")
    assert alt == SparseTensor((2, 2), {(0, 1): Fraction(1, 2), (1, 0): Fraction(-1, 2)})
    s = SparseTensor((2, 2), {(0, 1): 1, (1, 0): 1})
    assert symmetrize(s, [0, 1], "sym") == s


def test_json_roundtrip():
    t = SparseTensor((2, 3), {(0, 1): Fraction(-7, 3), (1, 2): 4})
    data = t.to_json()
    assert data["entries"][0]["idx"] == [1, 2]
    assert SparseTensor.from_json(json.dumps(data)) == t


def test_float_rejected():
    with pytest.raises(TypeError):
        SparseTensor((2,), {(0,): 0.5})


def test_rank_and_nullspace():
    rows = [{0: 1, 1: 2}, {0: 2, 1: 4}, {2: Fraction(1, 3)}]
    assert rank(rows) == 2
    ns = nullspace(rows, 3)
    assert len(ns) == 1
    v = ns[0]
    assert v.get(0, 0) + 2 * v.get(1, 0) == 0 and v.get(2, 0) == 0


def test_form_inverse():
    b = BilinearForm.from_rows([[0, 0, 4], [0, 8, 0], [4, 0, 0]], "symmetric")
    inv = b.inverse()
    m, n = b.dense_rows(), inv.dense_rows()
    prod = [[sum(m[i][k] * n[k][j] for k in range(3)) for j in range(3)] for i in range(3)]
    assert prod == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]


# --- properties

perms3 = [Permutation(p) for p in itertools.permutations((1, 2, 3))]
small_tensor = st.dictionaries(
    st.tuples(st.integers(0, 1), st.integers(0, 1), st.integers(0, 1)),
    st.builds(Fraction, st.integers(-9, 9), st.integers(1, 5)),
    max_size=6,
).map(lambda d: SparseTensor((2, 2, 2), d))


@settings(max_examples=40, deadline=None)
@given(small_tensor, st.tuples(*[st.integers(0, 1)] * 3))
def test_permute_composition(t, parities):
    for s, u in itertools.product(perms3, repeat=2):
        once = permute_slots(permute_slots(t, s, parities), u, [parities[s.inverse()(k + 1) - 1] for k in range(3)])
        assert once == permute_slots(t, u.compose(s), parities)


@settings(max_examples=40, deadline=None)
@given(small_tensor)
def test_symmetrizers_are_projectors(t):
    for mode in ("sym", "alt"):
        p = symmetrize(t, [0, 1, 2], mode)
        assert symmetrize(p, [0, 1, 2], mode) == p
    assert symmetrize(symmetrize(t, [0, 1], "alt"), [0, 1], "sym").is_zero()


@settings(max_examples=30, deadline=None)
@given(st.dictionaries(
    st.tuples(*[st.integers(0, 1)] * 4), st.integers(-3, 3), max_size=8
).map(lambda d: SparseTensor((2, 2, 2, 2), d)))
def test_contraction_commutes_with_spectator_swap(t):
    w = BilinearForm.standard_symplectic(2)
    swap = Permutation((1, 2, 4, 3))
    lhs = contract_slots(permute_slots(t, swap), w, 0, 1)
    rhs = permute_slots(contract_slots(t, w, 0, 1), Permutation((2, 1)))
    assert lhs == rhs
