"""Change-point and graph priors: counting, expected counts, simulation.

Run:  python3 demos/demo_prior_elicitation.py
"""

import numpy as np

from dynggm import (
    ChangePointConfig,
    ModelHyperparams,
    StreamFactory,
    count_configs,
    expected_kappa,
    log_prior_config,
    max_changepoints,
    sample_prior,
)

T, ell = 200, 12

# -- 1. feasibility counting -------------------------------------------------

K = max_changepoints(T, ell)
print(f"horizon T={T}, minimum span ell={ell}: at most {K} change points")
for kappa in (0, 1, 2, 5, 10, 15):
    print(f"  kappa={kappa:>2}: {count_configs(T, ell, kappa):,} feasible configurations")

# -- 2. the truncated-geometric prior on kappa -------------------------------

for p0 in (0.1, 0.3, 0.6):
    print(f"p0={p0}: prior E[kappa] = {expected_kappa(p0, T, ell):.3f}")

# -- 3. evaluating the configuration prior ------------------------------------

hp = ModelHyperparams(p=10, omega=1.0, z=0.1, p0=0.1, ell=ell)
for pts in [(), (70,), (70, 140), (70, 75)]:
    c = ChangePointConfig(T, ell, pts)
    print(f"log prior of c={pts}: {log_prior_config(c, hp):.4f}")
# (70, 75) violates the span constraint, so its prior is -inf

# -- 4. simulating from the full prior ---------------------------------------

rng = StreamFactory(7).stream(0)
kappas = []
edge_counts = []
for _ in range(2000):
    config, graphs = sample_prior(hp, T, rng)
    kappas.append(config.kappa)
    edge_counts.append(graphs[0].n_edges)
print(f"\nprior draws: mean kappa = {np.mean(kappas):.2f}"
      f" (closed form {expected_kappa(0.1, T, ell):.2f})")
print(f"mean initial edge count = {np.mean(edge_counts):.2f}"
      f" (expected p*omega = {10 * 1.0})")
