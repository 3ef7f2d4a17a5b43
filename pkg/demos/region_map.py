"""Map which envelope term dominates at each (t, R) and print the picture.

The envelope is  diag ^ (gaussian + jump).  On a log-log grid the dominant
term splits the quadrant into an on-diagonal wedge, a Gaussian region and
a jump region; notably there is a jump-dominated pocket at short times and
short distances (t <= R^2 <= 1).
"""

import numpy as np

from jumplab.bounds import DOMINANT_LABELS, region_sweep
from jumplab.scaling import power_scale

phi = power_scale(1.0)
t_grid = np.geomspace(1e-3, 10.0, 56)
r_grid = np.geomspace(1e-3, 10.0, 72)
tt, rr, case, dom, terms = region_sweep(phi, 1, t_grid, r_grid)

print("dominant term per cell (t down, R right): . = on-diagonal, g = gaussian, J = jump")
glyph = {0: ".", 1: "g", 2: "J"}
for i in range(0, len(t_grid), 2):
    line = "".join(glyph[int(dom[i, j])] for j in range(len(r_grid)))
    print(f"t={t_grid[i]:8.3g} |{line}|")

pocket = (dom == 2) & (tt <= rr * rr) & (rr <= 1.0)
print(f"\njump-dominated cells inside the short-time short-distance regime: {pocket.sum()}")
print("case counts:", {k: int((case == k).sum()) for k in range(1, 6)})

rows = ["t,R,case,dominant,on_diagonal,gaussian,jump"]
for i in range(len(t_grid)):
    for j in range(len(r_grid)):
        rows.append(
            f"{tt[i,j]},{rr[i,j]},{int(case[i,j])},{DOMINANT_LABELS[dom[i,j]]},"
            f"{terms['on-diagonal'][i,j]},{terms['gaussian'][i,j]},{terms['jump'][i,j]}"
        )
with open("region_map.csv", "w") as fh:
    fh.write("\n".join(rows) + "\n")
print("wrote region_map.csv")
