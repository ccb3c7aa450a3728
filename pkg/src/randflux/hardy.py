"""Hardy-type comparison potential and the diamagnetic inequality.

Around every flux point ``g`` in cell ``m`` the potential

    V(z) = min(rho(alpha_g) / delta_m**2, 1)   for |z - g| < delta_m

(and 0 elsewhere) bounds the magnetic form from below:
``H_N >= (-Delta_N + V)/2``.  Here ``rho(a)`` is the squared distance of
``a`` to the nearest integer and ``delta_m`` is half the smallest distance
from a point of the cell to the cell boundary or to another point of the
same cell.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .eigensolve import dense_spectrum, lowest_eigenpairs
from .geometry import FluxConfiguration, distance_to_cell_boundary
from .operators import Grid, assemble, assemble_comparison, assemble_free

__all__ = [
    "rho",
    "delta_m",
    "ComparisonPotential",
    "build_potential",
    "HardyReport",
    "verify_hardy_bound",
    "DiamagneticReport",
    "verify_diamagnetic",
    "reports_to_csv",
]


def rho(alpha):
    """Squared distance of ``alpha`` to the nearest integer."""
    a = np.asarray(alpha, dtype=float)
    r = (a - np.round(a)) ** 2
    return float(r) if r.ndim == 0 else r


def _delta(pos: np.ndarray) -> float:
    d = float(np.min(distance_to_cell_boundary(pos)))
    if len(pos) > 1:
        d = min(d, float(np.min(pdist(pos))))
    return 0.5 * d


def delta_m(config: FluxConfiguration, cell) -> float:
    """Half the smallest distance from a point of ``cell`` to the cell
    boundary or to another point of the cell."""
    mask = config.cell_mask(cell)
    if not mask.any():
        raise ValueError(f"cell {tuple(cell)} holds no flux point")
    return _delta(config.positions[mask])


def _cell_groups(config):
    groups: dict[tuple, list] = {}
    for i, n in enumerate(map(tuple, config.cell_indices.tolist())):
        groups.setdefault(n, []).append(i)
    return groups


@dataclass(frozen=True, eq=False)
class ComparisonPotential:
    """Node values of ``V`` on the Neumann grid plus the disc data.

    ``values`` has shape ``(n, n)`` (node ``(i, j)`` at ``grid.axis``
    coordinates).  ``deltas`` maps cell tuples to ``delta_m``; ``radii`` and
    ``heights`` are per point.
    """

    grid: Grid
    values: np.ndarray
    deltas: dict
    rhos: np.ndarray
    radii: np.ndarray
    heights: np.ndarray
    centres: np.ndarray

    @property
    def min_delta(self) -> float:
        return min(self.deltas.values()) if self.deltas else math.inf

    def cell_integral(self) -> dict:
        """Exact integral of ``V`` over each non-empty cell (the discs are
        interior to their cells)."""
        out = {}
        for n, idx in _cell_groups_from(self.centres).items():
            out[n] = float(np.sum(self.heights[idx] * np.pi * self.radii[idx] ** 2))
        return out

    def node_mean(self) -> float:
        return float(np.mean(self.values))


def _cell_groups_from(centres):
    ci = np.floor(centres + 0.5).astype(np.int64)
    groups: dict[tuple, list] = {}
    for i, n in enumerate(map(tuple, ci.tolist())):
        groups.setdefault(n, []).append(i)
    return {n: np.array(v) for n, v in groups.items()}


def build_potential(config: FluxConfiguration, grid: Grid) -> ComparisonPotential:
    """Sample ``V`` at the Neumann nodes of ``grid``."""
    if grid.box != config.box:
        raise ValueError("grid and configuration use different boxes")
    x = grid.axis("neumann")
    n = len(x)
    values = np.zeros((n, n))
    npts = len(config)
    radii = np.zeros(npts)
    heights = np.zeros(npts)
    # rho has period 1, so integer windings drop out; using alphas keeps this exact
    r = rho(config.alphas) if npts else np.zeros(0)
    r = np.atleast_1d(r)
    deltas = {}
    for cell, idx in _cell_groups(config).items():
        d = _delta(config.positions[idx])
        deltas[cell] = d
        radii[idx] = d
        heights[idx] = np.minimum(r[idx] / d**2, 1.0)
    for (gx, gy), d, v in zip(config.positions, radii, heights):
        if v == 0:
            continue
        i0, i1 = np.searchsorted(x, [gx - d, gx + d])
        j0, j1 = np.searchsorted(x, [gy - d, gy + d])
        X, Y = np.meshgrid(x[i0:i1], x[j0:j1], indexing="ij")
        inside = (X - gx) ** 2 + (Y - gy) ** 2 < d * d
        values[i0:i1, j0:j1][inside] = v
    values.setflags(write=False)
    return ComparisonPotential(grid, values, deltas, r, radii, heights, np.array(config.positions))


def _e1(op) -> float:
    if op.dimension <= 400:
        return float(dense_spectrum(op).eigenvalues[0])
    return float(lowest_eigenpairs(op, 1, tol=1e-9, shift_invert=True).eigenvalues[0])


@dataclass
class HardyReport:
    E1_magnetic: float
    E1_comparison: float
    slack: float
    tol: float
    passed: bool
    skipped: bool = False
    seed: int = 0
    M: int = 0
    k: int = 0
    min_delta: float = math.nan

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def csv_row(self):
        return {"seed": self.seed, "slack": self.slack, "pass": "skip" if self.skipped else int(self.passed)}


def verify_hardy_bound(config: FluxConfiguration, grid: Grid, tol_factor: float = 10.0,
                       min_delta_over_h: float | None = None) -> HardyReport:
    """Compare ``E_1(H_N)`` with ``E_1((-Delta_N + V)/2)`` on one grid.

    Passes iff ``slack = E1_magnetic - E1_comparison >= -tol_factor * h``.
    With ``min_delta_over_h`` set, configurations whose smallest
    ``delta_m`` is below that many mesh widths are marked skipped.
    """
    pot = build_potential(config, grid)
    tol = tol_factor * grid.h
    base = dict(seed=config.seed, M=grid.M, k=grid.box.k, min_delta=pot.min_delta)
    if min_delta_over_h is not None and pot.min_delta < min_delta_over_h * grid.h:
        return HardyReport(math.nan, math.nan, math.nan, tol, True, skipped=True, **base)
    e_mag = _e1(assemble(config, grid, "neumann"))
    e_cmp = _e1(assemble_comparison(config, grid, 1.0, pot))
    slack = e_mag - e_cmp
    return HardyReport(e_mag, e_cmp, slack, tol, bool(slack >= -tol), **base)


@dataclass
class DiamagneticReport:
    lam: float
    trials: int
    min_slack: float
    kernel_min_slack: float
    hs_magnetic: float
    hs_free: float
    entrywise_pass: bool
    hs_pass: bool
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.entrywise_pass and self.hs_pass

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def csv_row(self):
        return {"seed": self.seed, "slack": self.min_slack, "pass": int(self.passed)}


def verify_diamagnetic(config: FluxConfiguration, grid: Grid, lam: float = 1.0, trials: int = 20,
                       seed: int = 0, atol: float = 1e-12) -> DiamagneticReport:
    """Check ``|(H + lam)^-1 u| <= (-Delta_N + lam)^-1 |u|`` on random ``u >= 0``
    and the Hilbert-Schmidt comparison of the two resolvents (dense inverses)."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    H = assemble(config, grid, "neumann")
    if H.dimension > 2500:
        raise ValueError("dense resolvents are limited to 2500 unknowns")
    F = assemble_free(grid, "neumann")
    eye = np.eye(H.dimension)
    G = np.linalg.solve(H.to_dense() + lam * eye, eye)
    G0 = np.linalg.solve(F.to_dense() + lam * eye, eye)
    rng = np.random.default_rng([int(seed) & (2**64 - 1), int(config.seed) & (2**64 - 1)])
    U = rng.random((H.dimension, trials))
    slack = G0 @ U - np.abs(G @ U)
    min_slack = float(slack.min()) if trials else math.inf
    kern = float(np.min(G0 - np.abs(G)))
    hs_m = float(np.linalg.norm(G))
    hs_f = float(np.linalg.norm(G0))
    return DiamagneticReport(
        float(lam), int(trials), min_slack, kern, hs_m, hs_f,
        bool(min_slack >= -atol), bool(hs_m <= hs_f * (1 + 1e-12)), config.seed,
        {"M": grid.M, "k": grid.box.k},
    )


def reports_to_csv(reports) -> str:
    """One ``seed,slack,pass`` row per report."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, ["seed", "slack", "pass"], lineterminator="\r\n")
    w.writeheader()
    for r in reports:
        row = r.csv_row()
        row["slack"] = repr(float(row["slack"]))
        w.writerow(row)
    return buf.getvalue()
