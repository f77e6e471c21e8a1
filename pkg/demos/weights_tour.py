"""Weights of closed trivalent graphs for small metric Lie algebras and symplectic cubics."""

import itertools
import random

from opforge import graph_kit as gk
from opforge import weights as wt
from opforge.exact_core import BilinearForm

theta, k4 = gk.theta_graph(), gk.k4_graph()
for name in ("sl2", "so3", "gl2"):
    alg = wt.preset(name)
    print(f"{name}: theta -> {wt.weight_closed_graph(alg, theta)}, K4 -> {wt.weight_closed_graph(alg, k4)}, "
          f"IHX residual nnz = {wt.ihx_residual(alg).nnz()}")

# the brute-force sum agrees with the contraction kernel
print("naive theta (sl2):", wt.naive_weight(wt.sl2(), theta))

rng = random.Random(1)
cubics = tuple(wt.symmetric_cubic(2, {t: rng.randint(-2, 2) for t in itertools.combinations_with_replacement(range(2), 3)})
               for _ in range(4))
fam = wt.SymplecticCubicFamily(BilinearForm.standard_symplectic(2), cubics)
print(wt.symplectic_weight(fam, k4, gid="K4").to_csv(), end="")
for g in (theta, k4):
    print(f"rescaling the form by 2 scales the {g.n_vertices}-vertex weights by 2^{wt.homogeneity_exponent(fam, g, 2)}")
