"""Sufficient statistics and single-dyad conditional profiles.

The model's statistics capture volume (sum), sparsity (nonzero), mutual
exchange (mutual_min), pass-through balance (waypoint_flow), and weighted
covariate effects. Conditional profiles show how each statistic responds as
one dyad's count sweeps a grid with the rest of the network frozen; they are
the computational core of both the estimator and the sampler.

Run with: python demos/02_statistics_and_profiles.py
"""

from ergmflow import (ModelSpec, TermSpec, build_network, conditional_profile,
                      mutual_min_stat, statistic_vector, waypoint_flow_stat)

# Three stylized counties with six migration events each, differing in how
# balanced their in- and out-flows are. The waypoint statistic rewards
# balance: min(in, out) is 3, 2 and 1 across the three configurations.
for n_in, n_out in [(3, 3), (4, 2), (5, 1)]:
    records = [(k + 1, 0, 1) for k in range(n_in)]
    records += [(0, n_in + 1 + k, 1) for k in range(n_out)]
    star = build_network(records, n_nodes=n_in + n_out + 1)
    print("in=%d out=%d  -> waypoint flow %d"
          % (n_in, n_out, waypoint_flow_stat(star)))

# Mutual exchange counts the smaller of the two opposing flows, once per
# unordered pair.
net = build_network([(0, 1, 5), (1, 0, 5), (0, 2, 2)])
print("\nmutual_min on {5 <-> 5, 2 ->}:", mutual_min_stat(net))

model = ModelSpec(terms=(TermSpec("sum"), TermSpec("nonzero"),
                         TermSpec("mutual_min"), TermSpec("waypoint_flow")))
print("statistic vector:", statistic_vector(model, net))

# Sweep the (0, 1) dyad from 0 to 8 and watch each statistic move. The sum
# is affine in the value; mutual_min saturates once the value passes the
# reciprocal flow (here 5); waypoint_flow saturates when the focal node's
# outflow overtakes its inflow.
prof = conditional_profile(model, net, None, None, (0, 1), 8)
print("\nv    " + "  ".join("%-13s" % t.label for t in model.terms))
for v in range(9):
    print("%-4d " % v + "  ".join("%-13g" % x for x in prof[v]))
