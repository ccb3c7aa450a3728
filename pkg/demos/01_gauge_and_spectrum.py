"""Sample a Poisson flux configuration, check the discrete Stokes identity
and gauge invariance, and compare ground energies with and without flux."""

import numpy as np

from randflux import BoxGeometry, FluxConfiguration, Grid, PoissonModel, UniformFlux, assemble, dense_spectrum, gauge_shift
from randflux.gauge import random_plaquette_errors

model = PoissonModel(1.0, UniformFlux())
cfg = model.sample(7, BoxGeometry(1))
print(f"{len(cfg)} flux points in Q_1, total flux {cfg.effective_alphas.sum():.4f}")

errs = random_plaquette_errors(cfg, 200, np.random.default_rng(0))
print(f"max |plaquette phase - 2 pi * enclosed flux| over 200 squares: {errs.max():.2e}")

grid = Grid(cfg.box, 6)
for bc in ("dirichlet", "neumann"):
    w = dense_spectrum(assemble(cfg, grid, bc)).eigenvalues
    shifted = dense_spectrum(assemble(gauge_shift(cfg, 0, 1), grid, bc)).eigenvalues
    free = dense_spectrum(assemble(FluxConfiguration(cfg.box, cfg.positions, np.zeros(len(cfg))), grid, bc)).eigenvalues
    print(f"{bc:9s}  E1 = {w[0]:.5f}  (flux-free {abs(free[0]):.5f}),  "
          f"spectral change under alpha -> alpha + 1: {np.abs(w - shifted).max():.1e}")
