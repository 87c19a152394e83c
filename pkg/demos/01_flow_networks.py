"""Flow networks from scratch: construction, summaries, volumes, and
group-level aggregation.

Run with: python demos/01_flow_networks.py
"""

import numpy as np

from ergmflow import (build_network, group_flow_matrix, racial_dissimilarity,
                      scalar_dissimilarity, summarize)

# A flow network is a directed graph of non-negative integer counts with no
# self-loops. Only positive entries are stored; everything else is zero.
net = build_network(
    [("austin", "seattle", 120),
     ("seattle", "austin", 95),
     ("austin", "boise", 30),
     ("boise", "seattle", 12)],
    node_ids=["austin", "seattle", "boise"],
)
print(net)

report = summarize(net)
print("density %.3f  mean degree %.2f  total flow %d  mean per edge %.1f"
      % (report.density, report.mean_degree, report.total_flow,
         report.mean_flow_per_edge))

# Per-node volumes: how much enters and leaves each place.
for k, name in enumerate(net.node_ids):
    print("%-8s out %4d   in %4d" % (name, net.out_volume(k), net.in_volume(k)))

# Volumes always balance globally.
assert net.in_volumes().sum() == net.out_volumes().sum() == net.total_flow

# Aggregate flows over a binary partition (say, coastal vs inland).
coastal = np.array([0, 1, 0])  # austin/boise inland, seattle coastal
gfm = group_flow_matrix(net, coastal)
print("\nflow totals by (origin group, destination group):")
print(gfm.totals)
print("share of arrivals in the coastal group coming from inland: %.2f"
      % gfm.share_into(1, 0))

# Dissimilarity scores compare places on a bounded [0, 1] scale.
print("\nracial dissimilarity of two compositions: %.3f"
      % racial_dissimilarity([0.5, 0.5, 0, 0, 0], [0.25, 0.25, 0.5, 0, 0]))
print("partisanship dissimilarity of 41.6%% vs 55.3%%: %.3f"
      % scalar_dissimilarity(41.6, 55.3))
