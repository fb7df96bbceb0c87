"""Scattering data on one boundary ray and what P = Psi Psi~^-1 shows.

Compares the reference potential with a copy of itself and with the
bump-perturbed potential on a short ladder of |rho|.

    python demos/03_scattering_data.py
"""

from pathlib import Path

import numpy as np

from weylsys.config import load_config
from weylsys.scattering import compare, sweep, unperturbed_connection
from weylsys.sectors import compute_sectors
from weylsys.unperturbed import build_frame

root = Path(__file__).resolve().parents[1] / "configs"
ref, bump = (load_config(root / n) for n in ("reference.yaml", "reference_bump.yaml"))
grid = ref.grid.nodes()
moduli = np.array([0.2, 1.0, 5.0])
ray = 1

spec = ref.spec()
sectors = compute_sectors(spec.b)

runs = {}
for name, cfg in (("reference", ref), ("reference again", ref), ("bump", bump)):
    s = cfg.spec()
    frames = [build_frame(s, sc) for sc in sectors]
    runs[name] = sweep(s, sectors, moduli, grid, frames, rays=[ray])

v = runs["reference"].rays[0]
frames0 = [build_frame(spec.unperturbed(), sc) for sc in sectors]
for smp in v.samples:
    v0 = unperturbed_connection(frames0, ray, smp.rho)
    print(f"|rho| = {abs(smp.rho):4.1f}: spread {smp.spread:.1e}, cond {smp.cond:.1e}, "
          f"||v - v0|| / ||v0|| = {np.abs(smp.v - v0).max() / np.abs(v0).max():.3e}")

for other in ("reference again", "bump"):
    rep = compare(runs["reference"], runs[other])
    r = rep["rays"][0]
    print(f"vs {other:15s}: max ||P - I|| {rep['mapping'].max_P_minus_I:.2e}, "
          f"||v~ - v|| {r['v_diff']:.2e} (noise floor {r['noise_floor']:.1e}), "
          f"separated {r['separated']}")
