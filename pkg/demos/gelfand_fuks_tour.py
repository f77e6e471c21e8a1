"""Graph cochains on formal vector fields: the morphism identity and invariant counts."""

from opforge import gelfand_fuks as gf
from opforge import graph_kit as gk

alg = gf.FormalFieldAlgebra("vect", 2, 4)
x = {(0, (0, 1)): 1}          # u1 u2 d/du1
y = {(1, (0, 0)): 1}          # u1^2 d/du2
print("[x, y] =", alg.bracket(x, y))

a3 = gf.tautological_cochain(3, alg)
print("a_3 invariant:", gf.is_invariant(a3), " d a_2 = 0:", gf.ce_differential(gf.tautological_cochain(2, alg)).is_zero())

for g in gf.morphism_graphs("vect", max_vertices=2, max_legs=3)[:6]:
    rep = gf.verify_morphism(g, alg)
    print(f"graph {rep.graph_id}: {g.n_vertices} vertices, {rep.expansion_terms} expansion terms, "
          f"{'PASS' if rep.passed else 'FAIL'}")

ham = gf.FormalFieldAlgebra("ham", 2, 6)
print("ham corolla:", gf.verify_morphism(gk.modular_corolla(5), ham).passed)

# below the stable range there are fewer invariants than graphs
count = gf.admissible_graph_count([2, 2], 3, 1)
for r in (1, 2, 3):
    print(f"r={r}: invariants {gf.invariant_dimension([2, 2], 3, 1, r)}, graphs {count}")
