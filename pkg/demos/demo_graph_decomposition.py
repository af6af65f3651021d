"""Graphs, chordality, prime components, and descriptive statistics.

Run:  python3 demos/demo_graph_decomposition.py
"""

import numpy as np

from dynggm import (
    Graph,
    flip_edge,
    graph_metrics,
    is_decomposable,
    prime_decomposition,
    write_edge_list,
)

# -- 1. build a graph and flip edges ---------------------------------------

g = Graph.from_edges(5, [(1, 2), (2, 3), (3, 4), (1, 4), (1, 5)])
print("graph:", sorted(g.edges))
print("flip (2,3):", sorted(flip_edge(g, 2, 3).edges))
print("chordal?", is_decomposable(g))  # the 4-cycle 1-2-3-4 has no chord

# -- 2. decompose into prime components and minimal separators -------------

dec = prime_decomposition(g)
print("\nperfect sequence:")
for comp, sep, complete in zip(dec.components, dec.separators, dec.complete_flags):
    print(f"  component {comp}  separator {sep}  complete={complete}")

# the 4-cycle stays together as one prime (non-complete) component and the
# pendant node forms a second component hanging off the separator {1}

# -- 3. node-level statistics ----------------------------------------------

m = graph_metrics(g)
print("\ndegrees:          ", m.degree)
print("betweenness:      ", m.betweenness)
print("local clustering: ", m.local_clustering)
print("global clustering:", round(m.global_clustering, 4))

# -- 4. wire format ----------------------------------------------------------

print("\nedge-list serialization:")
print(write_edge_list(g))
