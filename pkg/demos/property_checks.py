"""Run the executable property suites and print what they measure.

The lifting adjointness and the integration-by-parts identity hold to
rounding error; the Korn and norm-equivalence ratios should stay bounded
under refinement.
"""
from ldgpflow.properties import norm_ratios, run_constitutive_suite, run_operator_suite
from ldgpflow.mesh import generate_square_mesh, red_refine
import numpy as np

for r in run_operator_suite(seed=1):
    print(r.line())
print()
for r in run_constitutive_suite(seed=1):
    print(r.line())

print("\nsampled ratios per level:")
rng = np.random.default_rng(7)
mesh = generate_square_mesh(2)
for level in range(4):
    r = norm_ratios(rng, mesh, p=2.5, n_fields=10)
    print(f"  level {level}: korn {r['korn']:.3f}  equivalence {r['equivalence']:.3f}")
    mesh = red_refine(mesh)
