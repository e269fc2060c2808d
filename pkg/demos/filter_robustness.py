"""Link/path incidence matrix and what survives a link failure.

The single-path matrix mirrors the worked example (path P1 rides links
L1 and L4); a richer two-path matrix then shows the failure queries
doing something less trivial.
"""

from biokm.route_filter import (
    build_filter,
    relation_domain,
    relation_range,
    surviving_paths,
    transpose,
)


def show(matrix, title):
    print(title)
    print("      " + "  ".join(matrix.paths))
    for label, row in zip(matrix.links, matrix.values):
        print(f"  {label}  " + "   ".join(str(int(x)) for x in row))


single = build_filter([("P1", ["L1", "L4"])], ("L1", "L2", "L3", "L4"))
show(single, "matrix R (links x paths):")
show(transpose(single), "\ntranspose (paths x links):")

print("\nrange  (paths touching any link):", sorted(relation_range(single)))
print("domain (links carried by any path):", sorted(relation_domain(single)))

for failed in (set(), {"L2"}, {"L1"}):
    survivors = surviving_paths(single, failed)
    print(f"fail {sorted(failed) or 'nothing'} -> surviving paths {sorted(survivors)}")

# --- two paths over a shared spine ---------------------------------------------

mesh = build_filter(
    [("P1", ["L1", "L2"]), ("P2", ["L2", "L3"]), ("P3", ["L4"])],
    ("L1", "L2", "L3", "L4"),
)
show(mesh, "\nthree paths over four links:")
for failed in ({"L2"}, {"L4"}, {"L2", "L4"}):
    print(f"fail {sorted(failed)} -> {sorted(surviving_paths(mesh, failed))}")
