"""Random flux configurations on square boxes.

Boxes are the half-open squares ``Q_k = [-k-1/2, k+1/2)^2`` tiled by the
unit cells ``n + Q_0`` with ``n`` in ``Z^2 ∩ Q_k``.  Three random models are
provided (perturbed lattice, Poisson, accumulating lattice) together with
the small-flux events used to build approximate eigenfunctions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.spatial import cKDTree

from ._rng import cell_stream, wilson_interval

__all__ = [
    "BoxGeometry",
    "FluxPoint",
    "FluxConfiguration",
    "ConstantFlux",
    "UniformFlux",
    "PowerTailFlux",
    "ConstantDisplacement",
    "UniformDisplacement",
    "PerturbedLatticeModel",
    "PoissonModel",
    "AccumulatingLatticeModel",
    "model_from_dict",
    "sample_perturbed_lattice",
    "sample_poisson",
    "sample_accumulating_lattice",
    "cell_flux",
    "cell_fluxes",
    "check_event_a",
    "check_event_b",
    "event_level",
    "EventProbability",
    "empirical_event_probability",
]

MODELS = ("perturbed_lattice", "poisson", "accumulating_lattice", "explicit")
_MARGIN = 1e-9  # relative to the box edge length
_MAX_REDRAWS = 1000


@dataclass(frozen=True)
class BoxGeometry:
    """The square ``Q_k`` of edge length ``2k+1`` centred at the origin."""

    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"box index must be a non-negative integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def L(self) -> int:
        return 2 * self.k + 1

    @property
    def half(self) -> float:
        return self.k + 0.5

    @property
    def area(self) -> int:
        return self.L * self.L

    @property
    def diameter(self) -> float:
        return math.sqrt(2.0) * self.L

    def cells(self) -> np.ndarray:
        """Cell indices ``n`` as an ``(L*L, 2)`` array, first index major."""
        r = np.arange(-self.k, self.k + 1)
        n1, n2 = np.meshgrid(r, r, indexing="ij")
        return np.column_stack([n1.ravel(), n2.ravel()])

    def cell_position(self, n) -> int:
        """Row of cell ``n`` in :meth:`cells`."""
        n1, n2 = (int(c) for c in n)
        if not self.contains_cell((n1, n2)):
            raise ValueError(f"cell {(n1, n2)} is outside Q_{self.k}")
        return (n1 + self.k) * self.L + (n2 + self.k)

    def contains_cell(self, n) -> bool:
        return all(-self.k <= int(c) <= self.k for c in n)

    def contains(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return np.all((xy >= -self.half) & (xy < self.half), axis=-1)


def cell_index(xy) -> np.ndarray:
    """Index ``n`` of the half-open unit cell ``n + Q_0`` containing each point."""
    return np.floor(np.asarray(xy, dtype=float) + 0.5).astype(np.int64)


def distance_to_cell_boundary(xy) -> np.ndarray:
    xy = np.asarray(xy, dtype=float)
    local = xy - cell_index(xy)
    return np.min(0.5 - np.abs(local), axis=-1)


class FluxPoint(NamedTuple):
    x: float
    y: float
    alpha: float


@dataclass(frozen=True, eq=False)
class FluxConfiguration:
    """A finite set of flux points inside a box.

    ``alphas`` are the fluxes normalised to ``[0, 1)``.  ``windings`` holds
    integer shifts produced by gauge transforms; the physical flux of point
    ``i`` is ``alphas[i] + windings[i]``.
    """

    box: BoxGeometry
    positions: np.ndarray
    alphas: np.ndarray
    model: str = "explicit"
    seed: int = 0
    windings: np.ndarray | None = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 2)
        alp = np.array(self.alphas, dtype=float).reshape(-1)
        if pos.shape[0] != alp.shape[0]:
            raise ValueError("positions and alphas differ in length")
        win = np.zeros(alp.shape, dtype=np.int64) if self.windings is None else np.array(self.windings)
        if win.shape != alp.shape or not np.all(np.asarray(win) == np.round(win)):
            raise ValueError("windings must be integers, one per point")
        win = win.astype(np.int64)
        if self.model not in MODELS:
            raise ValueError(f"unknown model tag {self.model!r}")
        if np.any(~np.isfinite(alp)) or np.any(alp < 0) or np.any(alp >= 1):
            raise ValueError("fluxes must lie in [0, 1)")
        if pos.size:
            if not np.all(np.isfinite(pos)):
                raise ValueError("non-finite flux position")
            if not np.all(self.box.contains(pos)):
                raise ValueError("flux point outside the box")
            margin = _MARGIN * self.box.L
            if np.any(distance_to_cell_boundary(pos) <= margin):
                raise ValueError("flux point on (or within 1e-9*L of) a cell boundary")
            if pos.shape[0] > 1 and len(np.unique(pos, axis=0)) != pos.shape[0]:
                raise ValueError("two flux points share a position")
        for arr in (pos, alp, win):
            arr.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "alphas", alp)
        object.__setattr__(self, "windings", win)
        object.__setattr__(self, "seed", int(self.seed))

    def __len__(self):
        return self.alphas.shape[0]

    def __eq__(self, other):
        if not isinstance(other, FluxConfiguration):
            return NotImplemented
        return (
            self.box == other.box
            and self.model == other.model
            and self.seed == other.seed
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.alphas, other.alphas)
            and np.array_equal(self.windings, other.windings)
        )

    __hash__ = None

    @property
    def z(self) -> np.ndarray:
        """Positions as complex numbers ``x + iy``."""
        return self.positions[:, 0] + 1j * self.positions[:, 1]

    @property
    def effective_alphas(self) -> np.ndarray:
        return self.alphas + self.windings

    @property
    def points(self) -> list[FluxPoint]:
        return [FluxPoint(float(x), float(y), float(a)) for (x, y), a in zip(self.positions, self.alphas)]

    @property
    def cell_indices(self) -> np.ndarray:
        return cell_index(self.positions) if len(self) else np.zeros((0, 2), dtype=np.int64)

    @property
    def total_flux(self) -> float:
        return float(np.sum(self.alphas))

    def cell_mask(self, n) -> np.ndarray:
        ci = self.cell_indices
        return (ci[:, 0] == int(n[0])) & (ci[:, 1] == int(n[1]))

    def with_windings(self, windings) -> "FluxConfiguration":
        return FluxConfiguration(self.box, self.positions, self.alphas, self.model, self.seed, windings)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        pts = []
        for (x, y), a, w in zip(self.positions.tolist(), self.alphas.tolist(), self.windings.tolist()):
            p = {"x": x, "y": y, "alpha": a}
            if w:
                p["winding"] = int(w)
            pts.append(p)
        return {"box_k": self.box.k, "model": self.model, "seed": self.seed, "points": pts}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "FluxConfiguration":
        pts = d["points"]
        pos = np.array([[p["x"], p["y"]] for p in pts], dtype=float).reshape(-1, 2)
        alp = np.array([p["alpha"] for p in pts], dtype=float)
        win = np.array([p.get("winding", 0) for p in pts], dtype=np.int64)
        return cls(BoxGeometry(d["box_k"]), pos, alp, d.get("model", "explicit"), d.get("seed", 0), win)

    @classmethod
    def from_json(cls, text: str) -> "FluxConfiguration":
        return cls.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Laws


class ConstantFlux:
    def __init__(self, value: float):
        if not 0.0 <= value < 1.0:
            raise ValueError("flux law must be supported in [0, 1)")
        self.value = float(value)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, self.value)

    def cdf(self, eps: float) -> float:
        """``P{alpha < eps}``."""
        return 1.0 if self.value < eps else 0.0

    @property
    def mean(self) -> float:
        return self.value

    def to_dict(self):
        return {"law": "constant", "value": self.value}


class UniformFlux:
    """Uniform flux on ``[0, upper)``."""

    def __init__(self, upper: float = 1.0):
        if not 0.0 < upper <= 1.0:
            raise ValueError("uniform flux law needs 0 < upper <= 1")
        self.upper = float(upper)

    def sample(self, rng, size):
        return self.upper * rng.random(size)

    def cdf(self, eps):
        return float(min(max(eps / self.upper, 0.0), 1.0))

    @property
    def mean(self):
        return self.upper / 2

    def to_dict(self):
        return {"law": "uniform", "upper": self.upper}


class PowerTailFlux:
    """Flux law with ``P{alpha < eps} = eps**delta`` on ``[0, 1)``."""

    def __init__(self, delta: float):
        if not delta > 0:
            raise ValueError("power-tail exponent must be positive")
        self.delta = float(delta)

    def sample(self, rng, size):
        return rng.random(size) ** (1.0 / self.delta)

    def cdf(self, eps):
        return float(min(max(eps, 0.0), 1.0) ** self.delta)

    @property
    def mean(self):
        return self.delta / (self.delta + 1)

    def to_dict(self):
        return {"law": "power_tail", "delta": self.delta}


def flux_law_from_dict(d: dict):
    law = d.get("law")
    if law == "constant":
        return ConstantFlux(d["value"])
    if law == "uniform":
        return UniformFlux(d.get("upper", 1.0))
    if law == "power_tail":
        return PowerTailFlux(d["delta"])
    raise ValueError(f"unknown flux law {law!r}")


class ConstantDisplacement:
    def __init__(self, dx: float = 0.0, dy: float = 0.0):
        if max(abs(dx), abs(dy)) >= 0.5:
            raise ValueError("displacement must stay in the open interior of Q_0")
        self.offset = (float(dx), float(dy))

    def sample(self, rng):
        return np.array(self.offset)

    def to_dict(self):
        return {"law": "constant", "dx": self.offset[0], "dy": self.offset[1]}


class UniformDisplacement:
    """Uniform displacement on ``(-a, a)^2`` with ``a < 1/2``."""

    def __init__(self, half_width: float):
        if not 0.0 < half_width < 0.5:
            raise ValueError("displacement support must lie in the open interior of Q_0")
        self.half_width = float(half_width)

    def sample(self, rng):
        return self.half_width * (2.0 * rng.random(2) - 1.0)

    def to_dict(self):
        return {"law": "uniform", "half_width": self.half_width}


def displacement_from_dict(d: dict):
    if d.get("law") == "constant":
        return ConstantDisplacement(d.get("dx", 0.0), d.get("dy", 0.0))
    if d.get("law") == "uniform":
        return UniformDisplacement(d["half_width"])
    raise ValueError(f"unknown displacement law {d.get('law')!r}")


# ---------------------------------------------------------------------------
# Models


class _CellModel:
    """Models whose cells are i.i.d.; subclasses implement ``sample_cell``."""

    name = "explicit"

    def sample_cell(self, seed: int, cell) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def sample(self, seed: int, box: BoxGeometry | int) -> FluxConfiguration:
        if not isinstance(box, BoxGeometry):
            box = BoxGeometry(box)
        pos, alp = [], []
        for n in box.cells():
            p, a = self.sample_cell(seed, n)
            pos.append(p)
            alp.append(a)
        return FluxConfiguration(box, np.concatenate(pos), np.concatenate(alp), self.name, seed)

    def cell_events(self, seed: int, cell, epsilon: float, c: float = 0.5):
        """Events (a) and (b) of one sampled cell."""
        pos, alp = self.sample_cell(seed, cell)
        return _cell_event_a(pos, alp, cell, epsilon, c), _cell_event_b(alp, epsilon)

    def cell_flux_sample(self, seed: int, cell) -> float:
        return float(np.sum(self.sample_cell(seed, cell)[1]))

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"{type(self).__name__}({self.to_dict()})"


def _interior_points(rng, cell, draw, count):
    """Draw ``count`` points with ``draw``, redrawing any that fall within the
    boundary margin of the cell."""
    out = np.empty((count, 2))
    margin = _MARGIN
    for i in range(count):
        for _ in range(_MAX_REDRAWS):
            p = np.asarray(cell, dtype=float) + draw(rng)
            if distance_to_cell_boundary(p) > margin * 4:
                break
        else:
            raise RuntimeError("could not draw an interior point")
        out[i] = p
    return out


class PerturbedLatticeModel(_CellModel):
    """One point per cell at ``n + f_n`` with i.i.d. displacement and flux."""

    name = "perturbed_lattice"

    def __init__(self, displacement=None, flux=None):
        self.displacement = ConstantDisplacement() if displacement is None else displacement
        self.flux = UniformFlux() if flux is None else flux

    def sample_cell(self, seed, cell):
        rng = cell_stream(seed, cell)
        pos = _interior_points(rng, cell, self.displacement.sample, 1)
        return pos, self.flux.sample(rng, 1)

    def to_dict(self):
        return {"name": self.name, "displacement": self.displacement.to_dict(), "flux": self.flux.to_dict()}


class PoissonModel(_CellModel):
    """Poisson points of intensity ``rho`` with i.i.d. fluxes."""

    name = "poisson"

    def __init__(self, rho: float = 1.0, flux=None):
        if not rho > 0:
            raise ValueError("Poisson intensity must be positive")
        self.rho = float(rho)
        self.flux = UniformFlux() if flux is None else flux

    def sample_cell(self, seed, cell):
        rng = cell_stream(seed, cell)
        count = int(rng.poisson(self.rho))
        pos = _interior_points(rng, cell, lambda g: g.random(2) - 0.5, count)
        return pos, self.flux.sample(rng, count)

    def to_dict(self):
        return {"name": self.name, "rho": self.rho, "flux": self.flux.to_dict()}


@lru_cache(maxsize=4)
def _accumulating_cdf(m_max: int) -> np.ndarray:
    m = np.arange(1, m_max, dtype=float)
    cdf = np.cumsum(6.0 / (np.pi * m) ** 2)
    return np.append(cdf, 1.0)  # tail mass folded into m_max


def accumulating_tail_probability(epsilon: float) -> float:
    """``P{Phi(Q_0) < eps} = 6/pi^2 * sum_{m > (1/eps - 1)/2} m^-2``."""
    from scipy.special import zeta

    if epsilon <= 0:
        return 0.0
    m0 = math.floor((1.0 / epsilon - 1.0) / 2.0) + 1  # smallest m with 1/(2m+1) < eps
    m0 = max(m0, 1)
    return float(6.0 / np.pi**2 * zeta(2.0, m0))


class AccumulatingLatticeModel(_CellModel):
    """Per cell a scaled lattice ``Gamma_m`` with ``P{m} = 6/(m pi)^2`` and
    fluxes ``(2m+1)^-3``.

    ``m`` is truncated at ``m_max``.  Materialising a cell costs
    ``(2m+1)^2`` points; configurations larger than ``max_points`` raise
    ``ValueError`` (cell-level statistics never materialise points).
    """

    name = "accumulating_lattice"

    def __init__(self, m_max: int = 10**6, max_points: int = 4_000_000):
        self.m_max = int(m_max)
        self.max_points = int(max_points)

    def sample_m(self, seed, cell) -> int:
        u = cell_stream(seed, cell).random()
        return int(np.searchsorted(_accumulating_cdf(self.m_max), u, side="right")) + 1

    @staticmethod
    def lattice(m: int, cell=(0, 0)) -> tuple[np.ndarray, np.ndarray]:
        j = np.arange(-m, m + 1) / (2 * m + 1)
        g1, g2 = np.meshgrid(j, j, indexing="ij")
        pos = np.column_stack([g1.ravel(), g2.ravel()]) + np.asarray(cell, dtype=float)
        return pos, np.full(pos.shape[0], float(2 * m + 1) ** -3)

    def sample_cell(self, seed, cell):
        m = self.sample_m(seed, cell)
        if (2 * m + 1) ** 2 > self.max_points:
            raise ValueError(f"cell {tuple(cell)} drew m={m}: {(2*m+1)**2} points exceeds max_points")
        return self.lattice(m, cell)

    def sample(self, seed, box):
        if not isinstance(box, BoxGeometry):
            box = BoxGeometry(box)
        total = sum((2 * self.sample_m(seed, n) + 1) ** 2 for n in box.cells())
        if total > self.max_points:
            raise ValueError(f"configuration would hold {total} points (max_points={self.max_points})")
        return super().sample(seed, box)

    def cell_events(self, seed, cell, epsilon, c=0.5):
        # closed form: spacing (2m+1)^-1, distance to the boundary (2(2m+1))^-1,
        # disc radii c (2m+1)^-3/2
        m = self.sample_m(seed, cell)
        s = 2 * m + 1
        separated = 2 * c * s**-1.5 <= 1.0 / s
        return (1.0 / s < epsilon) and separated, math.sqrt(s) < epsilon

    def cell_flux_sample(self, seed, cell):
        return 1.0 / (2 * self.sample_m(seed, cell) + 1)

    def to_dict(self):
        return {"name": self.name, "m_max": self.m_max, "max_points": self.max_points}


def model_from_dict(d: dict):
    name = d.get("name")
    if name == "perturbed_lattice":
        return PerturbedLatticeModel(displacement_from_dict(d["displacement"]), flux_law_from_dict(d["flux"]))
    if name == "poisson":
        return PoissonModel(d["rho"], flux_law_from_dict(d["flux"]))
    if name == "accumulating_lattice":
        return AccumulatingLatticeModel(d.get("m_max", 10**6), d.get("max_points", 4_000_000))
    raise ValueError(f"unknown model {name!r}")


def sample_perturbed_lattice(seed, box, displacement_law, flux_law) -> FluxConfiguration:
    return PerturbedLatticeModel(displacement_law, flux_law).sample(seed, box)


def sample_poisson(seed, box, rho, flux_law) -> FluxConfiguration:
    return PoissonModel(rho, flux_law).sample(seed, box)


def sample_accumulating_lattice(seed, box, **kwargs) -> FluxConfiguration:
    return AccumulatingLatticeModel(**kwargs).sample(seed, box)


# ---------------------------------------------------------------------------
# Cell quantities and small-flux events


def cell_flux(config: FluxConfiguration, n) -> float:
    """Total flux in the half-open cell ``n + Q_0``."""
    if not config.box.contains_cell(n):
        raise ValueError(f"cell {tuple(n)} is outside Q_{config.box.k}")
    return float(np.sum(config.alphas[config.cell_mask(n)]))


def cell_fluxes(config: FluxConfiguration) -> np.ndarray:
    """Cell fluxes in the order of ``config.box.cells()``."""
    out = np.zeros(config.box.area)
    if len(config):
        rows = np.array([config.box.cell_position(n) for n in config.cell_indices])
        np.add.at(out, rows, config.alphas)
    return out


def _cell_event_a(pos, alp, cell, epsilon, c) -> bool:
    if np.sum(alp) >= epsilon:
        return False
    if alp.size == 0:
        return True
    r = c * np.sqrt(alp)
    if np.any(distance_to_cell_boundary(pos) < r):
        return False
    if alp.size > 1:
        tree = cKDTree(pos)
        for i, j in tree.query_pairs(2.0 * float(r.max()), output_type="ndarray"):
            if np.hypot(*(pos[i] - pos[j])) < r[i] + r[j]:
                return False
    return True


def _cell_event_b(alp, epsilon) -> bool:
    return bool(np.sum(np.sqrt(alp)) < epsilon)


def _split_cells(config):
    cells = config.box.cells()
    groups = [[] for _ in range(len(cells))]
    for i, n in enumerate(config.cell_indices):
        groups[config.box.cell_position(n)].append(i)
    return cells, [np.array(g, dtype=np.int64) for g in groups]


def check_event_a(config: FluxConfiguration, epsilon: float, c: float) -> np.ndarray:
    """Per cell: flux below ``epsilon`` and discs ``B(gamma, c sqrt(alpha))``
    pairwise disjoint and off the cell boundary."""
    if not 0 < c <= 1:
        raise ValueError("c must satisfy 0 < c <= 1")
    cells, groups = _split_cells(config)
    return np.array(
        [_cell_event_a(config.positions[g], config.alphas[g], n, epsilon, c) for n, g in zip(cells, groups)]
    )


def check_event_b(config: FluxConfiguration, epsilon: float) -> np.ndarray:
    """Per cell: ``sum sqrt(alpha) < epsilon``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    _, groups = _split_cells(config)
    return np.array([_cell_event_b(config.alphas[g], epsilon) for g in groups])


def event_level(config: FluxConfiguration, event: str = "a", c: float = 0.5) -> float:
    """Largest integer ``l`` such that every cell satisfies the event with
    ``epsilon = 1/l`` (``inf`` for a flux-free box, 0 if none exists)."""
    if event == "a":
        if not np.all(check_event_a(config, np.inf, c)):
            return 0
        worst = float(np.max(cell_fluxes(config)))
    elif event == "b":
        _, groups = _split_cells(config)
        worst = max(float(np.sum(np.sqrt(config.alphas[g]))) for g in groups)
    else:
        raise ValueError("event must be 'a' or 'b'")
    if worst == 0.0:
        return math.inf
    l = math.ceil(1.0 / worst) - 1
    while l >= 1 and l * worst >= 1.0:
        l -= 1
    return max(l, 0)


@dataclass
class EventProbability:
    estimate: float
    lower: float
    upper: float
    successes: int
    trials: int
    event: str = "a"
    meta: dict = field(default_factory=dict)

    @property
    def sigma(self) -> float:
        p = self.estimate
        return math.sqrt(max(p * (1 - p), 0.0) / self.trials)


def empirical_event_probability(model, epsilon: float, trials: int, seed: int,
                                event: str | None = None, c: float = 0.5) -> EventProbability:
    """Fraction of i.i.d. cells in which the small-flux event holds.

    Cells ``(i, 0)``, ``i < trials``, of one realization are used; their
    streams are independent.  ``event`` defaults to ``'a'``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    event = event or "a"
    if event not in ("a", "b"):
        raise ValueError("event must be 'a' or 'b'")
    which = 0 if event == "a" else 1
    hits = 0
    for i in range(trials):
        hits += bool(model.cell_events(seed, (i, 0), epsilon, c)[which])
    lo, hi = wilson_interval(hits, trials)
    return EventProbability(hits / trials, lo, hi, hits, trials, event, {"epsilon": epsilon, "c": c})
