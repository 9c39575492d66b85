"""A tour of one pair copula: parametric truth, Bernstein estimate, vine use.

Run with ``python3 demos/pair_copula_tour.py``; takes a few seconds.
"""

import numpy as np

from bernvine import bernstein
from bernvine.ase_study import ase, random_true_vine
from bernvine.empirical import PseudoSample, kendall_matrix, pseudo_observations
from bernvine.families import FamilyId, ParametricPairCopula, tau_to_parameter
from bernvine.vine import (VineModel, VineStructure, fit_sequential_bernstein,
                           fit_sequential_parametric, simulate)

rng = np.random.default_rng(7)

# A Gumbel copula with Kendall's tau 0.5 has upper tail dependence.
truth = ParametricPairCopula(FamilyId.GUMBEL, tau_to_parameter(FamilyId.GUMBEL, 0.5))
u = pseudo_observations(truth.sample(1000, rng))
print("sample tau", round(kendall_matrix(u)[0, 1], 3))

# Bernstein estimates at a few grid sizes (m=25 warns that it is sparse). Coarse grids smooth the
# dependence away, fine grids chase noise; tau shows the first effect.
for m in (4, 10, 25):
    cop = bernstein.fit(u, m)
    x = simulate(VineModel(VineStructure("C", (0, 1)), [[cop]]), 4000, rng)
    tau = kendall_matrix(PseudoSample(x))[0, 1]
    err = ase(VineModel(VineStructure("C", (0, 1)), [[truth]]),
              VineModel(VineStructure("C", (0, 1)), [[cop]]))
    print(f"m={m:2d}  tau of simulated sample {tau:.3f}  ASE {err:.2e}")

# The estimate is a genuine copula: h is a conditional cdf and inverts.
cop = bernstein.fit(u)
v = cop.h_inverse(np.array([0.1, 0.5, 0.9]), np.full(3, 0.3))
print("h(h_inverse(w)) =", np.round(cop.h(v, np.full(3, 0.3)), 12))

# In five dimensions both arms are fitted tree by tree on the same order.
vine_truth = random_true_vine(5, "D", rng)
x = pseudo_observations(simulate(vine_truth, 500, rng))
bern = fit_sequential_bernstein(x, vine_truth.structure)
param, report = fit_sequential_parametric(x, vine_truth.structure)
print("Bernstein vine ASE ", f"{ase(vine_truth, bern):.2e}")
if param is not None:
    print("parametric vine ASE", f"{ase(vine_truth, param):.2e}")
    for t, k, label, pf in report.selected:
        print(f"  edge {label:9s} {pf.copula.family.value:16s} AIC {pf.aic:9.2f}")
