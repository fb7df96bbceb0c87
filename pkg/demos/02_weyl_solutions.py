"""Weyl solutions for the perturbed reference problem at one rho.

Builds the tensor families by successive approximation, extracts psi_k and
checks the quantities that should not depend on x.

    python demos/02_weyl_solutions.py
"""

from pathlib import Path

import numpy as np

from weylsys.config import load_config
from weylsys.sectors import compute_sectors
from weylsys.unperturbed import build_frame
from weylsys.volterra import default_grid
from weylsys.weyl import build_weyl, psi_residuals

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "reference.yaml")
spec = cfg.spec()
sec = compute_sectors(spec.b)[2]
frame, frame0 = build_frame(spec, sec), build_frame(spec.unperturbed(), sec)
grid = default_grid()

for r in (0.1, 1.0, 10.0):
    rho = r * sec.mid
    wf = build_weyl(frame, rho, grid)
    w0 = build_weyl(frame0, rho, grid, residuals=False)
    iters = [f.iterations for f in wf.T + wf.F]
    print(f"|rho| = {r:5.1f}  iterations {iters}")
    print("   Delta_k        ", np.round(wf.delta, 6))
    print("   Delta0_k       ", np.round(frame.delta0, 6))
    print(f"   x-spread {wf.delta_spread.max():.1e}, ODE residual "
          f"{max(psi_residuals(wf, spec)):.1e}")
    win = (grid >= 0.5) & (grid <= 2.0)
    a, b = wf.psihat[win], w0.psihat[win]
    gap = (np.abs(a - b).sum(axis=1) / np.abs(b).sum(axis=1)).max(axis=0)
    print("   relative distance to the q = 0 columns on [0.5, 2]", np.round(gap, 4))
