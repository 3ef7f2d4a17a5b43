"""Simulate jump-diffusion paths and compare the terminal law with the lattice.

The scheme: Euler-Maruyama with the divergence-form drift and the
small-jump moment corrections, plus majorant-thinned jumps above the
cutoff.  The binned terminal positions land on the deterministic lattice
density within Monte Carlo noise.
"""

import numpy as np

from jumplab import SimConfig, load_model, simulate_paths
from jumplab.oracle import build_generator, evolve

model = load_model("reference")
t_end = 0.2
cfg = SimConfig(dt=1e-3, eps=0.05, seed=20240817)

print("simulating 50k paths to t = 0.2 ...")
ens = simulate_paths(model, 0.0, t_end, [t_end], cfg, 50_000)
n_events = ens.event_path.size
print(f"  jump events: {n_events} (~{n_events/ens.n:.2f} per path)")
print(f"  truncated beyond the radial cap: {ens.truncated.sum()} paths")

print("lattice density for the same model ...")
gen = build_generator(model, (-8.0, 8.0), 0.02)
hv = evolve(gen, np.array([0.0]), t_end)

edges = np.concatenate([hv.coords[:, 0] - gen.h / 2, [hv.coords[-1, 0] + gen.h / 2]])
keep = ~ens.truncated
counts, _ = np.histogram(ens.positions[keep, 0, 0], bins=edges)
p_mc = counts / keep.sum()
p_or = hv.density * gen.h
mask = p_or >= 1e-3
se = np.sqrt(p_or * (1 - p_or) / keep.sum())
z = np.abs(p_mc - p_or)[mask] / se[mask]
print(f"bins with oracle mass >= 1e-3: {mask.sum()}")
print(f"fraction within 3 standard errors: {(z <= 3).mean():.3f}  (worst z = {z.max():.2f})")

rows = ["y,mc_probability,oracle_probability"]
for i in np.nonzero(mask)[0]:
    rows.append(f"{hv.coords[i,0]},{p_mc[i]},{p_or[i]}")
with open("terminal_law.csv", "w") as fh:
    fh.write("\n".join(rows) + "\n")
print("wrote terminal_law.csv")
