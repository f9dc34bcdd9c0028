"""One-site height law on a ring of 6 sites: exact master equation, KMC and mean field.

Run:  python3 demos/exact_vs_kmc.py [replicas]
"""

import sys

import numpy as np

from crsos.exact_master import StateDistribution, build_generator, evolve_many, one_site_marginal
from crsos.kmc import ensemble
from crsos.lattice import RateTable, enumerate_configs
from crsos.mean_field import MeanFieldParams, mf_evolve
from crsos.distributions import HeightDistribution
from crsos.report import compare_report

replicas = int(sys.argv[1]) if len(sys.argv) > 1 else 20_000
n = K = 6
rates = RateTable.uniform()
space = enumerate_configs(n, K)
print(f"{len(space)} configurations with n={n}, K={K}")

times = [0.25, 0.5, 1.0]
exact = evolve_many(build_generator(space, rates), StateDistribution.delta(space, (1,) * n), times)
stats = ensemble((1,) * n, rates, times[-1], times, replicas=replicas, base_seed=1)
mf = mf_evolve(HeightDistribution.delta(1, 40), MeanFieldParams((1,) * 4, (1,) * 4, k_max=40), times[-1], times)

for i, t in enumerate(times):
    marginal = one_site_marginal(space, exact[i], 0)
    rep = compare_report(marginal, stats.site_distribution(i), mf.distributions[i], replicas=replicas)
    d = rep.distances
    print(f"t={t:4.2f}  TV(kmc, exact)={d['kmc_exact']:.4f} (threshold {rep.thresholds['kmc_exact']:.4f})"
          f"  TV(mean field, exact)={d['meanfield_exact']:.4f}")

print("exact P(h_1 = k) at t=1:", np.round(one_site_marginal(space, exact[-1], 0).probabilities, 4))
