"""Sectors of the reference problem and the q = 0 Weyl matrix.

    python demos/01_sectors_and_unperturbed.py
"""

from pathlib import Path

import numpy as np

from weylsys.config import load_config
from weylsys.sectors import compute_sectors
from weylsys.unperturbed import build_frame, eval_at_rho
from weylsys.volterra import default_grid

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "reference.yaml")
spec = cfg.spec().unperturbed()
print("mu =", np.round(spec.mu.real, 6))

# Critical rays split the plane into sectors with a fixed order of Re(rho b_j).
sectors = compute_sectors(spec.b)
for s in sectors:
    print(f"sector {s.index}: arg in ({np.degrees(s.theta_lo):7.2f}, "
          f"{np.degrees(s.theta_hi):7.2f}) deg, order {s.perm}")

# Each sector gets its own triangular factor l and the constants Delta0_k.
frames = [build_frame(spec, s) for s in sectors]
for fr in frames:
    print(f"sector {fr.sector.index}: |Delta0| = {np.round(np.abs(fr.delta0), 4)}")

# Psi0 = c l near the origin; columns tend to the permuted unit vectors far out.
fr = frames[0]
x = default_grid()
rf = eval_at_rho(fr, 2.0 * fr.sector.mid, x)
print("phase-factored Psi0 at x = X_max:\n", np.round(rf.Psi0hat[-1], 3))
print("det Psi0 along the grid: spread",
      float(np.ptp(np.abs(np.linalg.det(rf.Psi0hat)))))
