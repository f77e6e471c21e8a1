"""Lie words, their normal forms, and the tree complex whose cohomology recovers them."""

import math

from opforge import lie_operad as lo
from opforge import wlie_complex as wc

for n in range(2, 7):
    print(f"dim Lie({n}) = {lo.lie_dim(n)}   (n-1)! = {math.factorial(n - 1)}")

jac = lo.jacobi_monomials()
print("Jacobi terms:", ", ".join(lo.format_bracket(e) for e in jac))
print("sum in normal form:", lo.lie_normal_form([(1, e) for e in jac], 3))
print("[x2,[x1,x3]] =", lo.lie_normal_form(lo.parse_bracket("[x2,[x1,x3]]")))

# trees with n leaves; only the binary trees survive in cohomology
for n in (3, 4, 5):
    basis = wc.chain_space("wlie", n=n)
    rows = wc.cohomology_ranks(basis)
    print(f"WLie({n}):", [(r.degree, r.dim, r.betti) for r in rows])
