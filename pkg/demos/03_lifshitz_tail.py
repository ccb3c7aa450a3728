"""Estimate the Neumann IDS of the Poisson model with half fluxes and fit the
tail forms log|log N| ~ slope log E and log N ~ -C/E + c.

A small run (a few hundred samples) takes about half a minute; the
acceptance run uses 6000 samples."""

import sys

from randflux import ConstantFlux, PoissonModel, estimate_ids, lifshitz_fit

samples = int(sys.argv[1]) if len(sys.argv) > 1 else 400
curve = estimate_ids(PoissonModel(1.0, ConstantFlux(0.5)), 2, "neumann", 4, samples, seed=1, method="dense")
for E, N, s in zip(curve.energies, curve.reported, curve.stderr):
    print(f"E = {E:7.4f}   N_hat = {N:.5f} +- {s:.5f}")
fit = lifshitz_fit(curve, window=(0.02, 0.3), n_bootstrap=200)
print(f"slope {fit.slope:.3f}  CI {fit.slope_ci}")
print(f"C {fit.C:.3f}  CI {fit.C_ci}  (excluded energies: {fit.excluded})")
