"""Monte Carlo estimates of the integrated density of states.

Each sample ``i`` of a run keyed by ``seed`` draws the configuration with
seed ``sample_seed(seed, i)`` on ``Q_k``, assembles the lattice operator and
counts its eigenvalues ``<= E`` on an energy grid.  Curves keep the integer
count matrix, so shards of a run merge exactly and in any order.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import sample_seed, wilson_interval
from .eigensolve import ConvergenceError, count_below_many, dense_spectrum, lowest_eigenpairs
from .geometry import BoxGeometry, model_from_dict
from .operators import Grid, assemble

__all__ = [
    "default_energy_grid",
    "IDSCurve",
    "IDSRunError",
    "estimate_ids",
    "bracket",
    "ProbabilityCurve",
    "small_e1_probability",
    "LifshitzFit",
    "lifshitz_fit",
    "read_curve_csv",
    "content_hash",
]

CURVE_FIELDS = ["E", "N_hat", "stderr", "n_samples", "bc", "k", "M", "censored"]


def default_energy_grid() -> np.ndarray:
    """25 geometrically spaced energies from 0.02 to 4."""
    return np.geomspace(0.02, 4.0, 25)


def content_hash(obj) -> str:
    """sha256 of the canonical JSON text of ``obj``."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _fmt(x) -> str:
    return repr(float(x))


class IDSRunError(RuntimeError):
    """More than 1% of the samples of a run failed."""

    def __init__(self, message, curve=None):
        super().__init__(message)
        self.curve = curve


@dataclass(eq=False)
class IDSCurve:
    """Per-sample eigenvalue counts on an energy grid.

    ``counts[s, j]`` is the number of eigenvalues ``<= energies[j]`` for
    sample ``indices[s]`` (indices ascending).  ``failures`` lists sample
    indices whose solve failed (they hold no row).
    """

    energies: np.ndarray
    counts: np.ndarray
    indices: np.ndarray
    boundary: str
    k: int
    M: int
    seed: int
    model: dict
    failures: list = field(default_factory=list)

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64).reshape(-1, self.energies.size)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        order = np.argsort(self.indices, kind="stable")
        self.indices, self.counts = self.indices[order], self.counts[order]
        if len(np.unique(self.indices)) != len(self.indices):
            raise ValueError("duplicate sample indices")
        self.failures = sorted(int(i) for i in self.failures)

    @property
    def area(self) -> int:
        return (2 * self.k + 1) ** 2

    @property
    def n_samples(self) -> int:
        return int(self.counts.shape[0])

    @property
    def N_hat(self) -> np.ndarray:
        if self.n_samples == 0:
            return np.full(self.energies.shape, np.nan)
        return self.counts.sum(axis=0) / (self.n_samples * self.area)

    @property
    def stderr(self) -> np.ndarray:
        n = self.n_samples
        if n < 2:
            return np.full(self.energies.shape, np.nan)
        return self.counts.std(axis=0, ddof=1) / math.sqrt(n) / self.area

    @property
    def censored(self) -> np.ndarray:
        """Energies at which no sample has an eigenvalue."""
        return self.counts.sum(axis=0) == 0

    @property
    def reported(self) -> np.ndarray:
        """``N_hat`` with zero entries replaced by the one-sided 95% bound ``3/(n |Q|)``."""
        out = self.N_hat.copy()
        out[self.censored] = 3.0 / (max(self.n_samples, 1) * self.area)
        return out

    def key(self) -> dict:
        return {"model": self.model, "k": self.k, "M": self.M, "boundary": self.boundary, "seed": self.seed,
                "energies": [_fmt(e) for e in self.energies]}

    def merge(self, other: "IDSCurve") -> "IDSCurve":
        """Union of two shards of the same run (overlapping samples must agree)."""
        if self.key() != other.key():
            raise ValueError("curves belong to different runs")
        rows = {int(i): c for i, c in zip(self.indices, self.counts)}
        for i, c in zip(other.indices, other.counts):
            i = int(i)
            if i in rows and not np.array_equal(rows[i], c):
                raise ValueError(f"sample {i} differs between shards")
            rows[i] = c
        idx = sorted(rows)
        counts = np.array([rows[i] for i in idx], dtype=np.int64).reshape(len(idx), self.energies.size)
        failures = sorted((set(self.failures) | set(other.failures)) - set(idx))
        return IDSCurve(self.energies, counts, idx, self.boundary, self.k, self.M, self.seed, self.model, failures)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(CURVE_FIELDS)
        for E, N, s, c, r in zip(self.energies, self.N_hat, self.stderr, self.censored, self.reported):
            w.writerow([_fmt(E), _fmt(r), _fmt(s), self.n_samples, self.boundary, self.k, self.M, int(c)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            **self.key(),
            "indices": self.indices.tolist(),
            "counts": self.counts.tolist(),
            "failures": list(self.failures),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "IDSCurve":
        E = np.array([float(e) for e in d["energies"]])
        return cls(E, np.array(d["counts"], dtype=np.int64).reshape(-1, E.size), d["indices"], d["boundary"],
                   int(d["k"]), int(d["M"]), int(d["seed"]), d["model"], d.get("failures", []))

    @classmethod
    def from_json(cls, text: str) -> "IDSCurve":
        return cls.from_dict(json.loads(text))

    def manifest(self) -> dict:
        return {"model": self.model, "k": self.k, "M": self.M, "boundary": self.boundary, "seed": self.seed,
                "samples": self.indices.tolist(), "failures": list(self.failures),
                "config_hash": content_hash(self.key())}


def _model_dict(model) -> dict:
    return model if isinstance(model, dict) else model.to_dict()


def _model(model):
    return model_from_dict(model) if isinstance(model, dict) else model


def sample_counts(model, k: int, boundary: str, M: int, seed: int, index: int, energies,
                  method: str = "auto") -> np.ndarray:
    """Eigenvalue counts of one sample (raises on solver failure)."""
    cfg = _model(model).sample(sample_seed(seed, index), BoxGeometry(k))
    op = assemble(cfg, Grid(cfg.box, M), boundary)
    return count_below_many(op, energies, method)


_FAILURES = (ConvergenceError, np.linalg.LinAlgError, ValueError, RuntimeError)


def estimate_ids(model, k: int, boundary: str, M: int, samples: int, E_grid=None, seed: int = 0,
                 indices=None, method: str = "auto", max_failure_rate: float = 0.01) -> IDSCurve:
    """Average counts per unit area over ``samples`` configurations.

    ``indices`` selects a shard of the sample indices (default
    ``range(samples)``).  Failed samples are recorded; more than
    ``max_failure_rate`` of them raises :class:`IDSRunError` carrying the
    partial curve.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    E = default_energy_grid() if E_grid is None else np.asarray(E_grid, dtype=float)
    if np.any(np.diff(E) <= 0):
        raise ValueError("energy grid must be strictly ascending")
    idx = list(range(samples)) if indices is None else [int(i) for i in indices]
    rows, ok, failed = [], [], []
    for i in idx:
        try:
            rows.append(sample_counts(model, k, boundary, M, seed, i, E, method))
            ok.append(i)
        except _FAILURES:
            failed.append(i)
    counts = np.array(rows, dtype=np.int64).reshape(len(ok), E.size)
    curve = IDSCurve(E, counts, ok, boundary, k, M, seed, _model_dict(model), failed)
    if idx and len(failed) > max_failure_rate * len(idx):
        raise IDSRunError(f"{len(failed)} of {len(idx)} samples failed", curve)
    return curve


def bracket(model, k: int, M: int, samples: int, E_grid=None, seed: int = 0, method: str = "auto") -> dict:
    """Dirichlet and Neumann curves on identical samples, with the pointwise
    check ``N_D <= N_N``."""
    D = estimate_ids(model, k, "dirichlet", M, samples, E_grid, seed, method=method)
    N = estimate_ids(model, k, "neumann", M, samples, E_grid, seed, method=method)
    common = np.intersect1d(D.indices, N.indices)
    d = D.counts[np.isin(D.indices, common)]
    n = N.counts[np.isin(N.indices, common)]
    return {"dirichlet": D, "neumann": N, "ordered": bool(np.all(d <= n)),
            "ordered_mean": bool(np.all(D.N_hat <= N.N_hat))}


# ---------------------------------------------------------------------------
# Small ground-state energies


@dataclass(eq=False)
class ProbabilityCurve:
    """Frequency of ``E_1(H_D) <= eps`` over samples, with Wilson intervals."""

    epsilons: np.ndarray
    e1: np.ndarray
    indices: np.ndarray
    k: int
    M: int
    seed: int
    model: dict

    @property
    def trials(self) -> int:
        return int(self.e1.size)

    @property
    def successes(self) -> np.ndarray:
        return np.array([int(np.sum(self.e1 <= e)) for e in self.epsilons])

    @property
    def estimate(self) -> np.ndarray:
        return self.successes / self.trials

    @property
    def intervals(self) -> np.ndarray:
        return np.array([wilson_interval(int(s), self.trials) for s in self.successes])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["epsilon", "P_hat", "lower", "upper", "successes", "trials", "k", "M"])
        for e, p, (lo, hi), s in zip(self.epsilons, self.estimate, self.intervals, self.successes):
            w.writerow([_fmt(e), _fmt(p), _fmt(lo), _fmt(hi), int(s), self.trials, self.k, self.M])
        return buf.getvalue()


def _e1_dirichlet(cfg, M) -> float:
    op = assemble(cfg, Grid(cfg.box, M), "dirichlet")
    if op.dimension <= 400:
        return float(dense_spectrum(op).eigenvalues[0])
    return float(lowest_eigenpairs(op, 1, tol=1e-9).eigenvalues[0])


def small_e1_probability(model, k: int, M: int, epsilon_grid, samples: int, seed: int = 0) -> ProbabilityCurve:
    """``P{E_1(H_D^k) <= eps}`` estimated from ``samples`` configurations."""
    eps = np.asarray(epsilon_grid, dtype=float)
    e1 = np.array([_e1_dirichlet(_model(model).sample(sample_seed(seed, i), BoxGeometry(k)), M)
                   for i in range(samples)])
    return ProbabilityCurve(eps, e1, np.arange(samples), k, M, seed, _model_dict(model))


# ---------------------------------------------------------------------------
# Tail fits


@dataclass
class LifshitzFit:
    slope: float
    intercept: float
    residuals: list
    r_squared: float
    C: float
    c: float
    C_residuals: list
    C_power_adjusted: float
    power: float
    no_tail: bool
    C_positive: bool
    energies: list
    values: list
    excluded: list
    slope_ci: tuple | None = None
    C_ci: tuple | None = None

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["slope_ci"] = list(self.slope_ci) if self.slope_ci is not None else None
        d["C_ci"] = list(self.C_ci) if self.C_ci is not None else None
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def plot_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["E", "N_hat", "log_E", "log_abs_log_N", "fit_log_abs_log_N", "fit_log_N"])
        for E, N in zip(self.energies, self.values):
            w.writerow([_fmt(E), _fmt(N), _fmt(math.log(E)), _fmt(math.log(-math.log(N))),
                        _fmt(self.intercept + self.slope * math.log(E)), _fmt(-self.C / E + self.c)])
        return buf.getvalue()


def _fits(E, N):
    x = np.log(E)
    y = np.log(-np.log(N))
    slope, icpt = np.polyfit(x, y, 1)
    res = y - (slope * x + icpt)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(res**2)) / ss if ss > 0 else 1.0
    A = np.column_stack([-1.0 / E, np.ones_like(E)])
    (C, c), *_ = np.linalg.lstsq(A, np.log(N), rcond=None)
    cres = np.log(N) - A @ np.array([C, c])
    return slope, icpt, res, r2, C, c, cres


def _power_adjusted(E, N):
    """``log N = -C/E + p log E + c``; a pure power law gives ``C = 0``."""
    A = np.column_stack([-1.0 / E, np.log(E), np.ones_like(E)])
    coef, *_ = np.linalg.lstsq(A, np.log(N), rcond=None)
    return float(coef[0]), float(coef[1])


def lifshitz_fit(energies, values=None, window=None, n_bootstrap: int = 1000, seed: int = 0,
                 confidence: float = 0.95, tail_tol: float = 1e-8) -> LifshitzFit:
    """Fit ``log|log N| = slope log E + b`` and ``log N = -C/E + c``.

    ``energies`` may be an :class:`IDSCurve` or :class:`ProbabilityCurve`
    (then ``values`` is taken from it and the confidence intervals come from
    resampling its Monte Carlo samples) or an array paired with ``values``.
    Entries outside ``(0, 1)`` or censored are excluded and listed.

    ``no_tail`` is set when the fit with an extra power-law term,
    ``log N = -C/E + p log E + c``, leaves ``C <= tail_tol``.
    """
    curve = None
    if isinstance(energies, (IDSCurve, ProbabilityCurve)):
        curve = energies
        if isinstance(curve, IDSCurve):
            E, N = curve.energies, np.where(curve.censored, 0.0, curve.N_hat)
        else:
            E, N = curve.epsilons, curve.estimate
    else:
        E, N = np.asarray(energies, dtype=float), np.asarray(values, dtype=float)
    sel = np.ones(E.shape, bool)
    if window is not None:
        sel &= (E >= window[0]) & (E <= window[1])
    usable = sel & (N > 0) & (N < 1)
    excluded = [float(e) for e in E[sel & ~usable]]
    if usable.sum() < 3:
        raise ValueError(f"fewer than 3 usable points in the window (excluded energies: {excluded})")
    Eu, Nu = E[usable], N[usable]
    slope, icpt, res, r2, C, c, cres = _fits(Eu, Nu)
    Cadj, p = _power_adjusted(Eu, Nu)
    no_tail = bool(Cadj <= tail_tol * (1 + abs(p)))
    slope_ci = C_ci = None
    if curve is not None and n_bootstrap:
        rng = np.random.default_rng(sample_seed(seed, 0))
        bs, bc = [], []
        for _ in range(n_bootstrap):
            if isinstance(curve, IDSCurve):
                pick = rng.integers(0, curve.n_samples, curve.n_samples)
                Nb = curve.counts[pick][:, usable].sum(axis=0) / (curve.n_samples * curve.area)
            else:
                e1 = rng.choice(curve.e1, curve.e1.size)
                Nb = np.array([np.mean(e1 <= e) for e in Eu])
            if np.any(Nb <= 0) or np.any(Nb >= 1):
                continue
            s, _, _, _, Cb, _, _ = _fits(Eu, Nb)
            bs.append(s)
            bc.append(Cb)
        if bs:
            a = (1 - confidence) / 2
            slope_ci = tuple(float(q) for q in np.quantile(bs, [a, 1 - a]))
            C_ci = tuple(float(q) for q in np.quantile(bc, [a, 1 - a]))
    C_positive = bool(C > 0) if C_ci is None else bool(C_ci[0] > 0)
    return LifshitzFit(float(slope), float(icpt), res.tolist(), float(r2), float(C), float(c), cres.tolist(),
                       Cadj, p, no_tail, C_positive, Eu.tolist(), Nu.tolist(), excluded, slope_ci, C_ci)


def read_curve_csv(text: str) -> tuple[np.ndarray, np.ndarray]:
    """``(E, N)`` from curve CSV text (``E,N_hat,...``) or probability CSV
    (``epsilon,P_hat,...``); censored rows come back as 0."""
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        return np.zeros(0), np.zeros(0)
    if "E" in rows[0]:
        E = np.array([float(r["E"]) for r in rows])
        N = np.array([0.0 if r.get("censored", "0") == "1" else float(r["N_hat"]) for r in rows])
    elif "epsilon" in rows[0]:
        E = np.array([float(r["epsilon"]) for r in rows])
        N = np.array([float(r["P_hat"]) for r in rows])
    else:
        raise ValueError("unrecognised curve CSV header")
    return E, N
