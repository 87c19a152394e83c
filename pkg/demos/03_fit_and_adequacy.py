"""End-to-end estimation on synthetic data: generate a network from known
coefficients, fit it back with subsampled penalized pseudo-likelihood, and
check adequacy by simulation.

Run with: python demos/03_fit_and_adequacy.py   (about half a minute)
"""

import numpy as np

from ergmflow import (ChainConfig, ModelSpec, TermSpec, adequacy_check,
                      census_sample, effect_multiplier, fit_mple, pseudo_bic,
                      stratified_dyad_sample, summarize, synthetic_generate)

model = ModelSpec(terms=(
    TermSpec("sum"), TermSpec("nonzero"), TermSpec("mutual_min"),
    TermSpec("dyad", "log_distance"),
    TermSpec("node_out", "log_population"),
    TermSpec("node_in", "log_population"),
    TermSpec("dyad", "political_dissim")))
theta_true = np.array([-9.6, 0.4, 0.1, -0.55, 0.65, 0.65, -1.0])

current, lagged, nodes, dyads = synthetic_generate(
    80, model, theta_true, seed=2024)
print("generated:", summarize(current))

# A tie/no-tie stratified sample keeps every informative nonzero dyad it can
# and re-weights by inverse inclusion probabilities; here we take 40% of all
# ordered dyads.
sample = stratified_dyad_sample(current, int(0.4 * current.n_dyads), seed=1)
print("sample strata (nonzero total, zero total, sampled nonzero, sampled zero):",
      sample.strata_counts)

fit = fit_mple(model, current, nodes, dyads, sample, ridge_lambda=0.01)
print("\n%-28s %10s %10s %10s" % ("term", "true", "estimate", "SE"))
for label, true, est, se in zip(fit.labels, theta_true, fit.theta,
                                fit.std_errors):
    print("%-28s %10.3f %10.3f %10.3f" % (label, true, est, se))
print("converged:", fit.converged, " pseudo-BIC: %.1f" % pseudo_bic(fit))

# Compare against the census fit (every dyad once, unit weights).
census_fit = fit_mple(model, current, nodes, dyads, census_sample(current))
print("max |subsampled - census| coefficient gap: %.4f"
      % np.abs(fit.theta - census_fit.theta).max())

# Translate a coefficient into an interpretable percent effect: a 10-point
# rise in political dissimilarity multiplies expected flow by
# exp(coef * 0.10).
pol = fit.coefficient("dyad:political_dissim")
print("10pp more political dissimilarity -> %+.1f%% expected migrants"
      % effect_multiplier(pol, 0.10, "additive_pp"))

# Adequacy: simulate 100 networks from the fitted model and compare per-node
# in/out volumes with the observed network.
report = adequacy_check(model, fit.theta, nodes, dyads, current,
                        ChainConfig(n_networks=100, seed=7))
print("\nadequacy: in-volume corr %.3f, out-volume corr %.3f, "
      "%d/%d nodes outside the 95%% envelope"
      % (report.in_correlation, report.out_correlation,
         int(report.in_outside.sum() + report.out_outside.sum()),
         2 * current.n_nodes))
