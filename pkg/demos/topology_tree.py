"""Build topology trees with Neighbor-Joining.

Two inputs are shown: a worked four-node distance matrix whose tree is
known in closed form, and a hub-and-spoke matrix derived from per-client
round-trip times the way a live capture provides them.
"""

import numpy as np

from biokm.phylo import (
    DistanceMatrix,
    net_divergence,
    nj_build,
    star_distances,
    to_newick,
)

# --- a worked additive matrix -------------------------------------------------

dm = DistanceMatrix(
    ["A", "B", "C", "D"],
    np.array(
        [
            [0, 5, 7, 8],
            [5, 0, 8, 9],
            [7, 8, 0, 9],
            [8, 9, 9, 0],
        ],
        dtype=float,
    ),
)

print("distance matrix over", ", ".join(dm.labels))
for i, label in enumerate(dm.labels):
    print(f"  net divergence u({label}) = {net_divergence(dm, i)}")

tree = nj_build(dm)
print("joined tree:", to_newick(tree))
print("  (A and B meet one junction, C and D the other, 1 unit between)")

# --- a star network from round trips -------------------------------------------

rtt_ms = {"lady_engineer": 0.75, "c02": 1.25, "c03": 2.0, "c04": 0.5}
star = star_distances(rtt_ms)
print("\nstar matrix from round trips", rtt_ms)
print("  client-to-client distance is the sum of the two spokes, e.g.")
print(f"  d(lady_engineer, c03) = {star.distance('lady_engineer', 'c03')} ms")

star_tree = nj_build(star)
print("relay topology:", to_newick(star_tree))
