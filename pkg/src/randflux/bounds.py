"""Explicit estimates behind the spectrum and IDS bounds, checked by quadrature.

Every quantity is an integral over (a union of cells of) the box ``Q_k``
of an integrand built from

    Psi(z) = prod |z - g|**alpha_g,   psi(z) = sum alpha_g / (z - g),

a smooth cutoff ``chi`` and plane waves.  Integrals are computed with the
singular quadrature of :mod:`randflux.quadrature`; each value carries the
difference of two rule orders as its error estimate, and inequality checks
use ``value + error`` on the measured side.

``Psi`` can be large (up to ``d_k**Phi`` with ``d_k`` the box diameter), so
fields are evaluated as ``log Psi - log_scale`` with
``log_scale = Phi * log d_k``; reported norms are multiplied back.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from ._rng import sample_seed
from .eigensolve import dense_spectrum, lowest_eigenpairs
from .geometry import AccumulatingLatticeModel, FluxConfiguration, cell_fluxes, event_level
from .hardy import _cell_groups, _delta, build_potential, rho
from .operators import Grid, assemble_comparison, assemble_free
from .quadrature import QuadratureScheme, box_tiles, build_rules, integrate

__all__ = [
    "Cutoff",
    "TrialFunction",
    "QuadValue",
    "LedgerRow",
    "ledger_csv",
    "norm_v_k",
    "norm_Psi_psi",
    "norm_Psi_annulus",
    "residual_norm",
    "residual_field",
    "rayleigh_quotient_dirichlet",
    "dirichlet_form_quotient",
    "beta_n",
    "cell_beta",
    "estimate_s0",
    "feynman_hellmann_check",
    "taylor_remainder_check",
    "lifshitz_schedule",
    "weyl_schedule",
    "weyl_escalation",
    "calibrate_c5",
    "c5_check",
    "c6_continuum",
    "c6_discrete",
    "C5_FROZEN",
    "C6_FROZEN",
    "C7",
    "L0",
]

C7 = 2.0 / math.pi**2
L0 = 29  # smallest integer with 1 - 9 pi / l > 0

# Calibrated once on the corpus of ``calibrate_c5`` (perturbed lattice,
# displacement U(0.3), flux U[0, 1/l), k in {1, 2}, l in {29, 100}, seeds
# 0..9), doubled, then frozen.
C5_FROZEN = 1.0

# sup_k of the continuum Hilbert-Schmidt constant, see ``c6_continuum``.
C6_FROZEN = 4.1


# ---------------------------------------------------------------------------
# Cutoff profile


def _smoothstep(u):
    return u**3 * (10 - 15 * u + 6 * u**2)


def _smoothstep_d1(u):
    return 30 * u**2 * (1 - u) ** 2


def _smoothstep_d2(u):
    return 60 * u * (1 - u) * (1 - 2 * u)


@dataclass(frozen=True)
class Cutoff:
    """Tensor-product cutoff ``chi(x) = S(x1) S(x2)`` for ``Q_k``.

    ``S(t) = 1`` for ``|t| <= k - 1/2``, ``0`` for ``|t| >= k`` and
    ``1 - P(2(|t| - k + 1/2))`` in between, with the C^2 smoothstep
    ``P(s) = 10 s^3 - 15 s^4 + 6 s^5``.  So ``chi = 1`` on ``Q_{k-1}`` and
    ``chi = 0`` outside ``Q_{k-1/2}``.  ``profile="one"`` is ``chi = 1`` on
    all of ``Q_k`` (a degenerate probe without transition).
    """

    k: int
    profile: str = "smoothstep"
    width: float = 0.5

    def __post_init__(self):
        if self.profile not in ("smoothstep", "one"):
            raise ValueError(f"unknown cutoff profile {self.profile!r}")
        if self.profile == "smoothstep" and self.k < 1:
            raise ValueError("the smoothstep cutoff needs k >= 1")

    @property
    def support_half_width(self) -> float:
        return self.k + 0.5 if self.profile == "one" else float(self.k)

    def _u(self, t):
        a = self.k - 0.5
        return np.clip((np.abs(t) - a) / self.width, 0.0, 1.0)

    def S(self, t):
        t = np.asarray(t, dtype=float)
        if self.profile == "one":
            return np.ones_like(t)
        return 1.0 - _smoothstep(self._u(t))

    def dS(self, t):
        t = np.asarray(t, dtype=float)
        if self.profile == "one":
            return np.zeros_like(t)
        return -np.sign(t) * _smoothstep_d1(self._u(t)) / self.width

    def d2S(self, t):
        t = np.asarray(t, dtype=float)
        if self.profile == "one":
            return np.zeros_like(t)
        return -_smoothstep_d2(self._u(t)) / self.width**2

    def fields(self, z):
        """``chi``, ``d1 chi``, ``d2 chi`` and ``Delta chi`` at complex points."""
        x, y = np.real(z), np.imag(z)
        Sx, Sy = self.S(x), self.S(y)
        dSx, dSy = self.dS(x), self.dS(y)
        chi = Sx * Sy
        d1 = dSx * Sy
        d2 = Sx * dSy
        lap = self.d2S(x) * Sy + Sx * self.d2S(y)
        return chi, d1, d2, lap

    def C0(self, resolution: int = 2001) -> float:
        """``sup|grad chi| + sup|Delta chi|`` over the transition region.

        Both suprema are attained where the scaled transition coordinates
        ``u, v`` lie in ``[0, 1]`` (elsewhere one factor is constant); they
        are maximised over a ``resolution``-squared grid of that square.
        """
        if self.profile == "one":
            return 0.0
        u = np.linspace(0.0, 1.0, resolution)
        S = 1.0 - _smoothstep(u)
        d1 = _smoothstep_d1(u) / self.width
        d2 = _smoothstep_d2(u) / self.width**2
        grad = np.sqrt(np.outer(d1, S) ** 2 + np.outer(S, d1) ** 2)
        lap = np.abs(np.outer(d2, S) + np.outer(S, d2))
        return float(grad.max() + lap.max())


_C0_CACHE: dict = {}


def _c0(cutoff: Cutoff) -> float:
    key = (cutoff.profile, cutoff.width)
    if key not in _C0_CACHE:
        _C0_CACHE[key] = cutoff.C0()
    return _C0_CACHE[key]


@dataclass(frozen=True)
class TrialFunction:
    """Test function on ``Q_k``.

    ``kind="weyl"``: ``v = chi Psi exp(i x1 xi)``.
    ``kind="dirichlet_ground"``: ``w = Psi f`` with
    ``f = cos(pi x1 / L) cos(pi x2 / L)``, ``L = 2k + 1``.
    """

    kind: str
    k: int
    xi: float = 0.0
    profile: str = "smoothstep"

    def __post_init__(self):
        if self.kind not in ("weyl", "dirichlet_ground"):
            raise ValueError(f"unknown trial kind {self.kind!r}")

    @property
    def cutoff(self) -> Cutoff:
        return Cutoff(self.k, self.profile)


# ---------------------------------------------------------------------------
# Results


@dataclass
class QuadValue:
    """Quadrature value with its error estimate (and per-cell parts)."""

    value: float
    error: float
    per_cell: dict | None = None
    meta: dict = field(default_factory=dict)

    @property
    def upper(self) -> float:
        return self.value + self.error

    @property
    def lower(self) -> float:
        return self.value - self.error


@dataclass
class LedgerRow:
    seed: int
    quantity: str
    measured: float
    bound: float
    passed: bool | str | None
    relation: str = "<="

    @property
    def margin(self) -> float:
        if self.relation == "<=":
            return self.bound - self.measured
        return self.measured - self.bound

    @property
    def status(self) -> str:
        """``"1"``/``"0"`` for a check, ``"skip"`` when not applicable and
        ``"info"`` for recorded values without a bound."""
        if isinstance(self.passed, str):
            return self.passed
        if self.passed is None:
            return "skip"
        return str(int(bool(self.passed)))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "quantity": self.quantity,
            "measured": repr(float(self.measured)),
            "bound": repr(float(self.bound)),
            "margin": repr(float(self.margin)),
            "pass": self.status,
        }


LEDGER_FIELDS = ["seed", "quantity", "measured", "bound", "margin", "pass"]


def ledger_csv(rows) -> str:
    """RFC 4180 text with one ``seed,quantity,measured,bound,margin,pass`` row per check."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, LEDGER_FIELDS, lineterminator="\r\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.to_dict())
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Quadrature plumbing


def _box_points(config: FluxConfiguration):
    keep = config.box.contains(config.positions) if len(config) else np.zeros(0, bool)
    z = config.z[keep]
    a = config.effective_alphas[keep].astype(float)
    nz = a != 0
    return z[nz], a[nz], config.positions[keep][nz]


def _point_caps(config: FluxConfiguration, positions):
    """``delta_m`` of each point's cell (polar patches stay inside it)."""
    if len(positions) == 0:
        return np.zeros(0)
    caps = np.empty(len(positions))
    cells = np.floor(positions + 0.5).astype(np.int64)
    groups: dict = {}
    for i, n in enumerate(map(tuple, cells.tolist())):
        groups.setdefault(n, []).append(i)
    all_groups = _cell_groups(config)
    for n, idx in groups.items():
        caps[idx] = _delta(config.positions[all_groups[n]])
    return caps


class _FieldQuadrature:
    """Rules over a tile set plus ``log Psi``/``psi`` at their nodes."""

    def __init__(self, config, tiles, cells, scheme=None, power=-2.0, chunk=1 << 22):
        self.config = config
        self.scheme = scheme or QuadratureScheme()
        self.z, self.alpha, pos = _box_points(config)
        self.phi = float(np.sum(np.maximum(self.alpha, 0.0)))
        d = config.box.diameter
        self.log_scale = self.phi * math.log(d) if d > 1 else 0.0
        exps = 2.0 * self.alpha + power
        if np.any(exps <= -2):
            raise ValueError("effective fluxes must be positive for square integrability")
        self.tiles, self.cells = tiles, cells
        self.rules = build_rules(tiles, self.z, exps, self.scheme, caps=_point_caps(config, pos))
        self.chunk = chunk
        self._cache = {}

    def fields(self, rule):
        """``(z, Psi / exp(log_scale), psi)`` at the nodes of ``rule``."""
        key = id(rule)
        if key in self._cache:
            return self._cache[key]
        n = len(rule)
        logp = np.zeros(n)
        ps = np.zeros(n, dtype=complex)
        if len(self.z):
            step = max(1, self.chunk // len(self.z))
            for s in range(0, n, step):
                sl = slice(s, s + step)
                D = (rule.anchor[sl][None, :] - self.z[:, None]) + rule.offset[sl][None, :]
                logp[sl] = self.alpha @ np.log(np.abs(D))
                ps[sl] = self.alpha @ (1.0 / D)
        out = (rule.nodes, np.exp(logp - self.log_scale), ps)
        self._cache[key] = out
        return out

    def integrate(self, func, per_cell=False) -> QuadValue:
        groups = ncell = None
        keys = None
        if per_cell:
            keys, groups = np.unique(self.cells, axis=0, return_inverse=True)
            groups = np.asarray(groups).ravel()
            ncell = len(keys)
        value, err, per = integrate(self.rules, lambda r: func(*self.fields(r)), groups, ncell)
        parts = None
        if per_cell:
            parts = {tuple(int(c) for c in key): float(v) for key, v in zip(keys, per)}
        return QuadValue(float(np.real(value)), err, parts, {"nodes": len(self.rules[-1])})


def _sqrt_value(q: QuadValue, factor: float = 1.0) -> QuadValue:
    """``sqrt`` of an integral of a square, with propagated error."""
    v = max(q.value, 0.0)
    s = math.sqrt(v)
    err = math.sqrt(v + q.error) - s
    return QuadValue(s * factor, err * factor, None, q.meta)


def _scaled(q: QuadValue, log_scale: float) -> QuadValue:
    f = math.exp(log_scale)
    return QuadValue(q.value * f, q.error * f, q.per_cell, q.meta)


def flux_level(config: FluxConfiguration) -> float:
    """Largest integer ``l`` with every cell flux ``< 1/l`` (``inf`` if flux free)."""
    worst = float(np.max(cell_fluxes(config))) if len(config) else 0.0
    if worst <= 0:
        return math.inf
    l = math.ceil(1.0 / worst) - 1
    while l >= 1 and l * worst >= 1.0:
        l -= 1
    return max(l, 0)


# ---------------------------------------------------------------------------
# Weyl sequence quantities


@dataclass
class NormReport:
    norm: float
    error: float
    l: float
    per_cell: dict
    inner_min: float
    per_cell_bound: float | None
    per_cell_pass: bool | None
    norm_bound: float | None
    norm_pass: bool | None
    additivity_error: float
    log_scale: float = 0.0

    def rows(self, seed):
        out = []
        if self.per_cell_bound is not None:
            out.append(LedgerRow(seed, "cell_norm_min", self.inner_min, self.per_cell_bound, self.per_cell_pass, ">="))
        if self.norm_bound is not None:
            out.append(LedgerRow(seed, "norm_v", self.norm - self.error, self.norm_bound, self.norm_pass, ">="))
        return out


def _check_trial(config, trial, kind):
    if trial.kind != kind:
        raise ValueError(f"trial function of kind {kind!r} required")
    if trial.k != config.box.k:
        raise ValueError("trial function and configuration use different boxes")


def norm_v_k(config: FluxConfiguration, trial: TrialFunction, scheme: QuadratureScheme | None = None,
             l: float | None = None) -> NormReport:
    """``||chi Psi||`` with per-cell integrals and the cell-wise lower bound.

    ``l`` defaults to the flux level of ``config`` (largest ``l`` with all
    cell fluxes below ``1/l``).  For cells ``m`` with ``|m_j| <= k - 1`` the
    integral of ``|v|^2`` over ``m + Q_0`` is compared with ``1 - 9 pi / l``
    and ``||v||`` with ``sqrt(1 - 9 pi / l) (2k - 1)``; a given ``l`` larger
    than the flux level is rejected (the event is checked, not assumed).
    """
    _check_trial(config, trial, "weyl")
    cut = trial.cutoff
    level = flux_level(config)
    if l is None:
        l = level
    elif l > level:
        raise ValueError(f"cell fluxes do not satisfy the small-flux event at l={l} (level {level})")
    tiles, cells = box_tiles(config.box.k, outer=cut.support_half_width)
    fq = _FieldQuadrature(config, tiles, cells, scheme, power=0.0)

    def f(z, P, _):
        return (cut.S(z.real) * cut.S(z.imag) * P) ** 2

    q = fq.integrate(f, per_cell=True)
    scale2 = math.exp(2 * fq.log_scale)
    per = {n: v * scale2 for n, v in q.per_cell.items()}
    total = q.value * scale2
    add_err = abs(sum(per.values()) - total) / total if total else 0.0
    norm = math.sqrt(total)
    err = math.sqrt(total + q.error * scale2) - norm
    inner = [v for n, v in per.items() if max(abs(n[0]), abs(n[1])) <= config.box.k - 1]
    inner_min = min(inner) if inner else math.nan
    bound = nb = None
    ok = nok = None
    if l >= 1 and 1 - 9 * math.pi / l > 0:
        bound = 1 - 9 * math.pi / l
        ok = bool(inner_min + q.error * scale2 >= bound) if inner else None
        nb = math.sqrt(bound) * (2 * config.box.k - 1)
        nok = bool(norm + err >= nb)
    return NormReport(norm, err, l, per, inner_min, bound, ok, nb, nok, add_err, fq.log_scale)


def norm_Psi_psi(config: FluxConfiguration, scheme: QuadratureScheme | None = None,
                 k: int | None = None) -> dict:
    """``||Psi psi||_{L^2(Q_k)}`` with the two a-priori bounds.

    Returns a dict with ``value``, ``error``, ``log_scale``, the scaled
    norm ``value / d_k**Phi`` and, when every cell has
    ``sum sqrt(alpha) < 1/l`` for some ``l >= 1``, the bound
    ``(sqrt(pi)/l) (2k+1)^2 d_k**Phi`` with its check.
    """
    if k is not None and k != config.box.k:
        raise ValueError("k must match the configuration's box")
    fq = _FieldQuadrature(config, *box_tiles(config.box.k), scheme, power=-2.0)

    def f(z, P, p):
        return np.abs(P * p) ** 2

    q = fq.integrate(f)
    s = _sqrt_value(q)
    L = config.box.L
    out = {
        "value": s.value * math.exp(fq.log_scale),
        "error": s.error * math.exp(fq.log_scale),
        "scaled": s.value,
        "scaled_error": s.error,
        "log_scale": fq.log_scale,
        "phi": fq.phi,
        "nodes": q.meta["nodes"],
    }
    lb = event_level(config, "b") if len(config) else math.inf
    out["l_b"] = lb
    if lb >= 1 and math.isfinite(lb):
        bound_scaled = math.sqrt(math.pi) / lb * L**2
        out["bound"] = bound_scaled * math.exp(fq.log_scale)
        out["bound_scaled"] = bound_scaled
        out["passed"] = bool(s.value + s.error <= bound_scaled)
    else:
        out["bound"] = out["bound_scaled"] = None
        out["passed"] = None if lb != math.inf else bool(s.value == 0)
    return out


def norm_Psi_annulus(config: FluxConfiguration, scheme: QuadratureScheme | None = None) -> dict:
    """``||Psi||`` over ``Q_k \\ Q_{k-1}`` and its bound ``d_k**Phi sqrt(8k)``."""
    k = config.box.k
    fq = _FieldQuadrature(config, *box_tiles(k, inner=k - 0.5), scheme, power=0.0)
    q = fq.integrate(lambda z, P, p: P**2)
    s = _sqrt_value(q)
    return {
        "value": s.value * math.exp(fq.log_scale),
        "error": s.error * math.exp(fq.log_scale),
        "scaled": s.value,
        "scaled_error": s.error,
        "bound_scaled": math.sqrt(8 * k),
        "log_scale": fq.log_scale,
    }


def residual_field(cutoff: Cutoff, xi: float, z, P, p):
    """``(L - xi^2) v exp(-i x1 xi)`` from the closed form.

    ``-2 Psi conj(psi) (2 d_z chi + i xi chi) - Psi (Delta chi + 2 i xi d_1 chi)``
    with ``2 d_z = d_1 - i d_2``.
    """
    chi, d1, d2, lap = cutoff.fields(z)
    return -2 * P * np.conj(p) * ((d1 - 1j * d2) + 1j * xi * chi) - P * (lap + 2j * xi * d1)


@dataclass
class ResidualReport:
    residual: float
    error: float
    norm_v: float
    norm_v_error: float
    ratio: float
    psi_norm: float
    annulus_norm: float
    C0: float
    C2: float
    bound: float
    bound_measured: float
    passed: bool
    xi: float
    k: int
    l: float
    log_scale: float
    nodes: int

    def to_dict(self):
        return asdict(self)

    def rows(self, seed):
        s = math.exp(self.log_scale)
        return [
            LedgerRow(seed, "residual", (self.residual + self.error) * s, self.bound * s, self.passed),
            LedgerRow(seed, "residual_ratio", self.ratio, math.nan, "info"),
        ]


def residual_norm(config: FluxConfiguration, trial: TrialFunction, xi: float | None = None,
                  scheme: QuadratureScheme | None = None) -> ResidualReport:
    """``||(L - xi^2) v||`` by quadrature and the bound
    ``C_2 (||Psi psi||_Q + d_k**Phi sqrt(8k))``, ``C_2 = 2 (C_0 + 1)(|xi| + 1)``.

    Norms in the report are divided by ``exp(log_scale) = d_k**Phi``; the
    ratio ``residual / ||v||`` is scale free.  ``bound_measured`` uses the
    quadrature value of ``||Psi||`` on the annulus instead of its bound.
    """
    _check_trial(config, trial, "weyl")
    xi = trial.xi if xi is None else float(xi)
    cut = trial.cutoff
    k = config.box.k
    tiles, cells = box_tiles(k, outer=cut.support_half_width)
    fq = _FieldQuadrature(config, tiles, cells, scheme, power=-2.0)
    q = fq.integrate(lambda z, P, p: np.abs(residual_field(cut, xi, z, P, p)) ** 2)
    r = _sqrt_value(q)
    qv = fq.integrate(lambda z, P, p: (cut.S(z.real) * cut.S(z.imag) * P) ** 2)
    v = _sqrt_value(qv)
    pp = norm_Psi_psi(config, fq.scheme)
    ann = norm_Psi_annulus(config, fq.scheme)
    C0 = _c0(cut)
    C2 = 2 * (C0 + 1) * (abs(xi) + 1)
    bound = C2 * (pp["scaled"] + ann["bound_scaled"])
    bound_m = C2 * (pp["scaled"] + ann["scaled"])
    lvl = flux_level(config)
    return ResidualReport(
        r.value, r.error, v.value, v.error, r.value / v.value if v.value else math.inf,
        pp["scaled"], ann["scaled"], C0, C2, bound, bound_m, bool(r.value + r.error <= bound),
        xi, k, lvl, fq.log_scale, q.meta["nodes"],
    )


# ---------------------------------------------------------------------------
# Dirichlet ground state trial


def _ground(L, z):
    a = math.pi / L
    cx, cy = np.cos(a * z.real), np.cos(a * z.imag)
    sx, sy = np.sin(a * z.real), np.sin(a * z.imag)
    f = cx * cy
    d1 = -a * sx * cy
    d2 = -a * cx * sy
    return f, d1, d2


@dataclass
class RayleighReport:
    quotient: float
    error: float
    imag_part: float
    free_energy: float
    bound: float
    norm_w: float
    C1_prime: float
    psi_norm: float
    passed: bool
    k: int
    log_scale: float

    def to_dict(self):
        return asdict(self)

    def rows(self, seed):
        return [LedgerRow(seed, "dirichlet_quotient", self.quotient + self.error, self.bound, self.passed)]


def rayleigh_quotient_dirichlet(config: FluxConfiguration, k: int | None = None,
                                scheme: QuadratureScheme | None = None) -> RayleighReport:
    """``(w, H_D w) / ||w||^2`` for ``w = Psi f``.

    Uses ``H_D w = 2 (pi/L)^2 w + 2 Psi conj(psi) (-2 d_z f)`` so the
    quotient is ``2 (pi/L)^2 + Re int 2 Psi^2 conj(psi) f (-2 d_z f) / ||w||^2``.
    The bound is ``2 (pi/L)^2 + 2 pi ||Psi psi|| / (L ||w||)`` (Cauchy-Schwarz
    with ``|2 d_z f| <= pi/L``).
    """
    if k is not None and k != config.box.k:
        raise ValueError("k must match the configuration's box")
    k = config.box.k
    L = config.box.L
    fq = _FieldQuadrature(config, *box_tiles(k), scheme, power=-2.0)

    def cross(z, P, p):
        f, d1, d2 = _ground(L, z)
        return 2 * P**2 * np.conj(p) * f * (-(d1 - 1j * d2))

    def wsq(z, P, p):
        return (P * _ground(L, z)[0]) ** 2

    def pp(z, P, p):
        return np.abs(P * p) ** 2

    rules = fq.rules
    vals = {}
    for name, fn in (("cross", cross), ("w", wsq), ("pp", pp)):
        vs = [np.sum(r.weight * fn(*fq.fields(r))) for r in rules]
        vals[name] = (vs[-1], abs(vs[-1] - vs[-2]))
    free = 2 * (math.pi / L) ** 2
    w2, w2e = vals["w"]
    c, ce = vals["cross"]
    quotient = free + float(np.real(c)) / w2
    err = ce / w2 + abs(float(np.real(c))) * w2e / w2**2
    norm_w = math.sqrt(w2)
    psi_norm = math.sqrt(max(np.real(vals["pp"][0]), 0.0))
    psi_err = math.sqrt(max(np.real(vals["pp"][0]), 0.0) + vals["pp"][1]) - psi_norm
    bound = free + 2 * math.pi * (psi_norm + psi_err) / (L * norm_w)
    return RayleighReport(
        quotient, err, float(np.imag(c)) / w2, free, bound, norm_w * math.exp(fq.log_scale),
        norm_w * math.exp(fq.log_scale) / L, psi_norm * math.exp(fq.log_scale),
        bool(quotient + err <= bound), k, fq.log_scale,
    )


def dirichlet_form_quotient(config: FluxConfiguration, scheme: QuadratureScheme | None = None) -> float:
    """Quadratic-form value ``int |(-i grad - a) w|^2 / ||w||^2`` for ``w = Psi f``.

    With ``w`` real, ``|(-i grad - a) w|^2 = |grad w|^2 + |a|^2 w^2``,
    ``grad Psi = Psi (Re psi, -Im psi)`` and ``|a| = |psi|``.
    """
    L = config.box.L
    fq = _FieldQuadrature(config, *box_tiles(config.box.k), scheme, power=-2.0)

    def form(z, P, p):
        f, d1, d2 = _ground(L, z)
        g1 = P * (f * p.real + d1)
        g2 = P * (-f * p.imag + d2)
        return g1**2 + g2**2 + np.abs(p) ** 2 * (P * f) ** 2

    num = fq.integrate(form).value
    den = fq.integrate(lambda z, P, p: (P * _ground(L, z)[0]) ** 2).value
    return num / den


# ---------------------------------------------------------------------------
# Comparison potential per cell


def beta_n(config: FluxConfiguration, cell) -> float:
    """``(1/2) int_{cell} V`` in closed form: ``(1/2) sum min(rho/delta^2, 1) pi delta^2``.

    The discs lie inside the cell, so the integral is exact.
    """
    if not config.box.contains_cell(cell):
        raise ValueError(f"cell {tuple(cell)} is outside the box")
    mask = config.cell_mask(cell)
    if not mask.any():
        return 0.0
    return _beta(config.positions[mask], config.effective_alphas[mask])


def _beta(pos, alphas) -> float:
    if len(pos) == 0:
        return 0.0
    d = _delta(pos)
    r = np.atleast_1d(rho(alphas))
    return float(0.5 * np.sum(np.minimum(r / d**2, 1.0)) * math.pi * d * d)


def cell_beta(model, seed: int, cell) -> float:
    """``beta`` of one sampled cell of ``model``.

    The accumulating lattice uses the closed form ``pi / (2 s^4)``,
    ``s = 2m + 1`` (spacing ``1/s``, ``delta = 1/(4s)``, ``rho = s^-6``).
    """
    if isinstance(model, AccumulatingLatticeModel):
        s = 2 * model.sample_m(seed, cell) + 1
        return math.pi / (2.0 * float(s) ** 4)
    return _beta(*model.sample_cell(seed, cell))


@dataclass
class S0Report:
    s0_hat: float
    ci: tuple
    samples: int
    degenerate: bool
    chernoff: list
    seed: int

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.chernoff)

    def to_dict(self):
        d = asdict(self)
        d["ci"] = list(self.ci)
        d["passed"] = self.passed
        return d

    def rows(self):
        return [
            LedgerRow(self.seed, f"chernoff_k{c['k']}", c["frequency"], c["bound"] + 3 * c["sigma"], c["passed"])
            for c in self.chernoff
        ]


def _s0(betas, axis=-1):
    n = np.shape(betas)[axis]
    return -0.5 * (logsumexp(-np.asarray(betas), axis=axis) - math.log(n))


def estimate_s0(model, samples: int = 1000, seed: int = 0, k_values=(1, 2), boxes: int = 10_000,
                confidence: float = 0.95, n_resamples: int = 1000) -> S0Report:
    """Plug-in ``s0 = -(1/2) log E exp(-beta_0)`` with a bootstrap interval,
    plus the Chernoff check for boxes ``Q_k``.

    ``s0`` uses cells ``(i, 0)``; the check uses the disjoint cells
    ``(i, 1)`` grouped into ``boxes`` boxes of ``(2k+1)^2`` cells and compares
    the frequency of ``mean beta <= s0_hat`` with ``exp(-s0_hat |Q_k|)`` plus
    three binomial standard deviations.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    betas = np.array([cell_beta(model, seed, (i, 0)) for i in range(samples)])
    degenerate = bool(np.all(betas == 0))
    s0 = float(_s0(betas))
    if degenerate:
        s0, ci = 0.0, (0.0, 0.0)
    elif np.all(betas == betas[0]):
        ci = (s0, s0)
    else:
        res = stats.bootstrap((betas,), _s0, vectorized=True, n_resamples=n_resamples,
                              confidence_level=confidence, method="percentile",
                              random_state=np.random.default_rng(sample_seed(seed, 1)))
        ci = (float(res.confidence_interval.low), float(res.confidence_interval.high))
    checks = []
    if boxes:
        need = max((2 * k + 1) ** 2 for k in k_values) * boxes
        pool = np.array([cell_beta(model, seed, (i, 1)) for i in range(need)])
        for k in k_values:
            q = (2 * k + 1) ** 2
            means = pool[: q * boxes].reshape(boxes, q).mean(axis=1)
            freq = float(np.mean(means <= s0))
            bound = math.exp(-s0 * q)
            sigma = math.sqrt(bound * (1 - bound) / boxes)
            checks.append({"k": k, "frequency": freq, "bound": bound, "sigma": sigma, "boxes": boxes,
                           "passed": bool(freq <= bound + 3 * sigma)})
    return S0Report(s0, ci, samples, degenerate, checks, seed)


# ---------------------------------------------------------------------------
# Perturbation in the comparison parameter


def _e1_accurate(op) -> float:
    if op.dimension <= 900:
        return float(dense_spectrum(op).eigenvalues[0])
    return float(lowest_eigenpairs(op, 1, tol=1e-10, shift_invert=True).eigenvalues[0])


def _potential_values(config, grid, potential):
    if potential is None:
        return build_potential(config, grid).values
    return np.asarray(getattr(potential, "values", potential), dtype=float)


def feynman_hellmann_check(config: FluxConfiguration, grid: Grid, tau: float = 1e-4, potential=None) -> dict:
    """Central difference of ``t -> E_1((-Delta_N + t V)/2)`` at ``0`` versus
    ``mean(V)/2`` (the free Neumann ground state is constant).

    The derivative is also computed with step ``tau/2`` and Richardson
    extrapolated; ``abs_error`` is the deviation of the plain central
    difference.
    """
    V = _potential_values(config, grid, potential)

    def E(t):
        return _e1_accurate(assemble_comparison(config, grid, t, V))

    d1 = (E(tau) - E(-tau)) / (2 * tau)
    d2 = (E(tau / 2) - E(-tau / 2)) / tau
    rich = (4 * d2 - d1) / 3
    target = 0.5 * float(np.mean(V))
    return {
        "dE1_numeric": d1,
        "dE1_richardson": rich,
        "mean_V_half": target,
        "abs_error": abs(d1 - target),
        "richardson_error": abs(rich - target),
        "tau": tau,
        "seed": config.seed,
    }


def discrete_neumann_gap(grid: Grid) -> float:
    """Second eigenvalue of ``-Delta_N / 2`` on the cell-centred grid,
    ``(2/h^2) sin^2(pi / (2n))`` with ``n`` nodes per side."""
    n = grid.side("neumann")
    return 2.0 / grid.h**2 * math.sin(math.pi / (2 * n)) ** 2


def taylor_remainder_check(config: FluxConfiguration, grid: Grid, t_grid=None, potential=None,
                           gap: float | None = None) -> dict:
    """Second-order remainder of ``E_1(t)`` against the Cauchy-type bound.

    ``g`` is the measured gap of ``-Delta_N/2`` (second eigenvalue; the first
    is 0) and ``R = 2g``.  For ``t`` in ``t_grid`` (default
    ``{+-R/4, +-R/8}``) the check is ``|E_1(t) - t E_1'(0)| <= t^2 / R``,
    the analyticity-radius estimate ``(2/R^2)(R/4) t^2`` with safety
    factor 2.  ``bound_2_over_R`` (``2 t^2 / R``, twice as loose) is
    reported alongside.  ``E_1'(0) = mean(V)/2``.
    """
    V = _potential_values(config, grid, potential)
    if gap is None:
        free = assemble_free(grid, "neumann")
        ev = dense_spectrum(free).eigenvalues if free.dimension <= 900 else \
            lowest_eigenpairs(free, 2, tol=1e-10, shift_invert=True).eigenvalues
        gap = 0.5 * float(ev[1])
    g = float(gap)
    out = {"gap": g, "seed": config.seed, "skipped": False}
    if g < 1e-8:
        out.update(skipped=True, passed=None, rows=[])
        return out
    R = 2 * g
    if t_grid is None:
        t_grid = (-R / 4, -R / 8, R / 8, R / 4)
    t_grid = [float(t) for t in t_grid]
    if any(abs(t) >= R / 2 for t in t_grid):
        raise ValueError("t_grid must lie inside (-R/2, R/2)")
    slope = 0.5 * float(np.mean(V))
    rows = []
    for t in t_grid:
        if abs(t) > 1:
            raise ValueError("comparison parameter must satisfy |t| <= 1")
        e = _e1_accurate(assemble_comparison(config, grid, t, V))
        rem = abs(e - t * slope)
        rows.append({"t": t, "E1": e, "remainder": rem, "bound": t * t / R, "bound_2_over_R": 2 * t * t / R,
                     "passed": bool(rem <= t * t / R)})
    out.update(R=R, slope=slope, rows=rows, passed=all(r["passed"] for r in rows),
               max_ratio=max(r["remainder"] / (r["t"] ** 2) for r in rows) * R)
    return out


# ---------------------------------------------------------------------------
# Schedules and constants


def _exact(x) -> Fraction:
    return Fraction(repr(float(x))) if not isinstance(x, Fraction) else x


def lifshitz_schedule(epsilon: float, s0: float | None = None, C7: float = C7) -> dict:
    """Integers ``k, l`` with ``eps/8 < (pi/(2k+1))^2 < eps/4`` and
    ``1/eps^3 < l < 2/eps^3`` (largest such ``k``, smallest such ``l``),
    and ``b = s0^2 / (4 C7)``, ``t0 = sqrt(b/C7) (2k+1)^-2`` so that
    ``2 sqrt(b C7) = s0``.

    ``s0`` defaults to ``1/4``, the largest value allowed by ``beta <= 1/2``.
    ``epsilon`` is read as the decimal it prints as, so ``0.1`` gives
    ``l = 1001``.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    eps = float(epsilon)
    lo_L = 2 * math.pi / math.sqrt(eps)
    hi_L = 2 * math.sqrt(2) * math.pi / math.sqrt(eps)
    ks = [k for k in range(1, int(hi_L // 2) + 2) if lo_L < 2 * k + 1 < hi_L
          and eps / 8 < (math.pi / (2 * k + 1)) ** 2 < eps / 4]
    e = _exact(epsilon)
    inv = 1 / e**3
    l = math.floor(inv) + 1
    l_ok = l < 2 * inv
    problems = []
    if not ks:
        problems.append(f"no integer k >= 1 with 2k+1 in ({lo_L:.6g}, {hi_L:.6g})")
    if not l_ok:
        problems.append(f"no integer l in ({float(inv):.6g}, {float(2 * inv):.6g})")
    if problems:
        raise ValueError("; ".join(problems) + "; both windows are non-empty for 0 < epsilon < 1")
    k = max(ks)
    L = 2 * k + 1
    s0 = 0.25 if s0 is None else float(s0)
    b = s0**2 / (4 * C7)
    t0 = math.sqrt(b / C7) / L**2
    R = (math.pi / L) ** 2
    return {"epsilon": eps, "k": k, "l": l, "b": b, "t0": t0, "R": R, "s0": s0, "C7": C7,
            "t0_below_half_R": bool(t0 < R / 2), "k_candidates": ks}


def weyl_constants(xi: float, l0: int = L0, cutoff: Cutoff | None = None) -> dict:
    """``C_0`` of the cutoff, ``C_1 = sqrt(1 - 9 pi / l0) / 3`` and ``C_2``.

    ``C_1`` follows from the cell-wise bound on the ``(2k-1)^2`` inner cells
    and ``2k - 1 >= (2k + 1)/3``.
    """
    if not 1 - 9 * math.pi / l0 > 0:
        raise ValueError("l0 must satisfy 1 - 9 pi / l0 > 0")
    C0 = _c0(cutoff or Cutoff(1))
    C1 = math.sqrt(1 - 9 * math.pi / l0) / 3
    C2 = 2 * (C0 + 1) * (abs(xi) + 1)
    return {"C0": C0, "C1": C1, "C2": C2, "l0": l0}


def _weyl_rhs(k, l, c):
    L = 2 * k + 1
    d = math.sqrt(2) * L
    return c["C2"] / c["C1"] * math.exp(L * L / l * math.log(d)) * (c["C5"] * L / math.sqrt(l) + math.sqrt(8 * k) / L)


def _smallest_int(pred, start):
    """Smallest integer ``n >= start`` with monotone ``pred(n)`` true."""
    lo, hi = start, max(start, 1)
    while not pred(hi):
        lo, hi = hi, hi * 2
    if pred(lo):
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        lo, hi = (lo, mid) if pred(mid) else (mid, hi)
    return hi


def weyl_schedule(epsilon: float, xi: float = 1.0, C5: float = C5_FROZEN, l0: int = L0, c: float = 0.5) -> dict:
    """``k`` with ``C_1^-1 C_2 sqrt(8k)/(2k+1) < eps/2``, then the smallest
    ``l >= l0`` satisfying ``c (2k+1) / (2 sqrt l) <= 1`` whose residual
    bound ``C_1^-1 C_2 d_k^{(2k+1)^2/l} (C_5 (2k+1)/sqrt l + sqrt(8k)/(2k+1))``
    is below ``eps``.
    """
    const = weyl_constants(xi, l0)
    const["C5"] = C5
    ratio = const["C2"] / const["C1"]
    k = _smallest_int(lambda k: ratio * math.sqrt(8 * k) / (2 * k + 1) < epsilon / 2, 1)
    L = 2 * k + 1
    l_min = max(l0, math.ceil((c * L / 2) ** 2))
    l = _smallest_int(lambda l: _weyl_rhs(k, l, const) < epsilon, l_min)
    return {"epsilon": epsilon, "xi": xi, "k": k, "l": l, "rhs": _weyl_rhs(k, l, const), **const}


def weyl_escalation(model_factory=None, ks=(1, 2, 4, 8), xi: float = 1.0, seed: int = 0,
                    scheme: QuadratureScheme | None = None, target: float = 0.1) -> dict:
    """Measured ``||(L - xi^2) v|| / ||v||`` along ``k = ks`` with
    ``l_k = max(l0, (2k+1)^2)`` (so the box flux stays below 1).

    ``model_factory(l)`` returns the model sampled at level ``l``; the
    default is a perturbed lattice with displacement ``U(0.3)`` and flux
    ``U[0, 1/l)``.  The log-log slope of the ratio in ``k`` extrapolates the
    ``k`` at which the ratio would reach ``target``.
    """
    from .geometry import PerturbedLatticeModel, UniformDisplacement, UniformFlux

    if model_factory is None:
        def model_factory(l):
            return PerturbedLatticeModel(UniformDisplacement(0.3), UniformFlux(1.0 / l))

    steps = []
    for k in ks:
        l = max(L0, (2 * k + 1) ** 2)
        cfg = model_factory(l).sample(seed, k)
        rep = residual_norm(cfg, TrialFunction("weyl", k, xi), scheme=scheme)
        steps.append({"k": k, "l": l, "ratio": rep.ratio, "residual_pass": rep.passed})
    kk = np.log([s["k"] for s in steps])
    rr = np.log([s["ratio"] for s in steps])
    slope, icpt = np.polyfit(kk, rr, 1) if len(steps) > 1 else (math.nan, math.nan)
    k_needed = math.exp((math.log(target) - icpt) / slope) if slope < 0 else math.inf
    return {"steps": steps, "slope": float(slope), "k_extrapolated": float(k_needed),
            "min_ratio": min(s["ratio"] for s in steps), "target": target,
            "reached": bool(min(s["ratio"] for s in steps) < target)}


def c5_ratio(config: FluxConfiguration, scheme: QuadratureScheme | None = None, l: float | None = None) -> float:
    """``||Psi psi|| sqrt(l) / ((2k+1)^2 d_k**Phi)`` (``l`` defaults to the flux level)."""
    l = flux_level(config) if l is None else l
    pp = norm_Psi_psi(config, scheme)
    return (pp["scaled"] + pp["scaled_error"]) * math.sqrt(l) / config.box.L**2


def calibrate_c5(seeds=range(10), ks=(1, 2), ls=(29, 100), scheme: QuadratureScheme | None = None) -> dict:
    """Largest ``c5_ratio`` over the calibration corpus (perturbed lattice,
    displacement ``U(0.3)``, flux ``U[0, 1/l)``)."""
    from .geometry import PerturbedLatticeModel, UniformDisplacement, UniformFlux

    ratios = []
    for l in ls:
        model = PerturbedLatticeModel(UniformDisplacement(0.3), UniformFlux(1.0 / l))
        for k in ks:
            for s in seeds:
                cfg = model.sample(int(s), k)
                ratios.append(c5_ratio(cfg, scheme, l))
    return {"max_ratio": max(ratios), "ratios": ratios, "frozen": C5_FROZEN}


def c5_check(config: FluxConfiguration, scheme: QuadratureScheme | None = None, C5: float = C5_FROZEN) -> LedgerRow:
    """``||Psi psi|| <= C_5 (2k+1)^2 d_k**Phi / sqrt(l)`` with the frozen ``C_5``."""
    r = c5_ratio(config, scheme)
    return LedgerRow(config.seed, "c5_ratio", r, C5, bool(r <= C5))


def _hs_kernel_sum(l: int, cutoff: float = 60.0) -> float:
    """``4/l^2 sum_{m,n >= 0} 1/(pi^2 (m^2 + n^2)/l^2 + 1)^2`` truncated at ``|(m,n)|/l <= cutoff``."""
    M = int(cutoff * l)
    m = np.arange(M + 1, dtype=float)
    total = 0.0
    for i in range(M + 1):
        lam = math.pi**2 * (m[i] ** 2 + m**2) / l**2
        total += float(np.sum(1.0 / (lam + 1.0) ** 2))
    tail = 4 * (math.pi / 2) / (2 * math.pi**4 * cutoff**2)  # integral of r^-4 over the quarter plane beyond cutoff
    return 4 * total / l**2 + tail


def c6_continuum(kmax: int = 20) -> dict:
    """``sup_k ||(-Delta_N^k + 1)^-1||_HS^2 / |Q_k|`` for ``k <= kmax``.

    The Neumann eigenvalues of ``Q_k`` are ``pi^2 (m^2 + n^2)/L^2``; the
    Rough bound ``N_N(E) <= (E+1)^2 ||(-Delta_N + 1)^-1||_HS^2`` with
    ``E <= 1`` gives the factor 4.
    """
    vals = {k: _hs_kernel_sum(2 * k + 1) for k in range(kmax + 1)}
    return {"sup": max(vals.values()), "values": vals}


def c6_discrete(grid: Grid) -> float:
    """``4 ||(-Delta_N + 1)^-1||_HS^2 / |Q_k|`` for the grid operator."""
    n = grid.side("neumann")
    mu = 4.0 / grid.h**2 * np.sin(np.arange(n) * math.pi / (2 * n)) ** 2
    lam = mu[:, None] + mu[None, :]
    return float(4 * np.sum(1.0 / (lam + 1.0) ** 2) / grid.box.area)
