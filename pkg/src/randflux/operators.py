"""Finite-difference magnetic Laplacians on a box (Peierls substitution).

Grids
-----
For a box of edge ``L`` and mesh ``h = 1/M`` two node sets are used.

* Dirichlet: the interior vertices ``-L/2 + i h``, ``i = 1 .. LM-1``.  Links
  to the boundary vertices are eliminated (``u = 0`` there).  The free
  spectrum is ``(4/h^2)(sin^2(p pi h/2L) + sin^2(q pi h/2L))``,
  ``p, q = 1 .. LM-1``.
* Neumann: the cell centres ``-L/2 + (i + 1/2) h``, ``i = 0 .. LM-1``, with
  links leaving the box dropped (natural boundary condition).

Nodes are numbered ``i * n + j`` with ``i`` the ``x1`` index, so operators
are block tridiagonal with diagonal coupling blocks.

Each link carries ``U_{x->y} = exp(-i theta_{x->y})`` where ``theta`` is the
line integral of the vector potential, and

    (H u)(x) = h^-2 sum_{y ~ x} (u(x) - U_{x->y} u(y)).
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .gauge import GaugeField
from .geometry import BoxGeometry, FluxConfiguration

__all__ = [
    "Grid",
    "LatticeOperator",
    "MagneticLaplacian",
    "assemble",
    "assemble_free",
    "assemble_comparison",
    "apply",
    "nudge_off_grid_lines",
]

log = logging.getLogger(__name__)

BOUNDARIES = ("dirichlet", "neumann")
_ON_LINE = 1e-7  # in units of h
_NUDGE = 1e-6  # in units of h


def _boundary(b: str) -> str:
    b = str(b).lower()
    if b in ("d", "dirichlet"):
        return "dirichlet"
    if b in ("n", "neumann"):
        return "neumann"
    raise ValueError(f"unknown boundary condition {b!r}")


@dataclass(frozen=True)
class Grid:
    """Uniform mesh of ``M`` subdivisions per unit length on a box."""

    box: BoxGeometry
    M: int

    def __post_init__(self):
        if not isinstance(self.box, BoxGeometry):
            object.__setattr__(self, "box", BoxGeometry(self.box))
        if int(self.M) != self.M or self.M < 1:
            raise ValueError("M must be a positive integer")
        object.__setattr__(self, "M", int(self.M))

    @property
    def h(self) -> float:
        return 1.0 / self.M

    @property
    def cells_per_side(self) -> int:
        """Number of mesh intervals along one side, ``L*M``."""
        return self.box.L * self.M

    def side(self, boundary) -> int:
        """Nodes per side for the given boundary condition."""
        return self.cells_per_side - 1 if _boundary(boundary) == "dirichlet" else self.cells_per_side

    def dimension(self, boundary) -> int:
        return self.side(boundary) ** 2

    def axis(self, boundary) -> np.ndarray:
        """1D node coordinates along each axis."""
        n = self.cells_per_side
        if _boundary(boundary) == "dirichlet":
            i = np.arange(1, n)
            return (2 * i - n) / (2.0 * self.M)
        i = np.arange(n)
        return (2 * i + 1 - n) / (2.0 * self.M)

    def nodes(self, boundary) -> np.ndarray:
        """Node coordinates, shape ``(n*n, 2)``, ordered ``i * n + j``."""
        x = self.axis(boundary)
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        return np.column_stack([X1.ravel(), X2.ravel()])

    def line_offset(self, boundary) -> float:
        """Offset of the mesh lines of the node graph, in units of ``h``,
        relative to ``-L/2``."""
        return 0.0 if _boundary(boundary) == "dirichlet" else 0.5

    def edges(self, boundary):
        """Oriented edges as ``(start, end)`` complex arrays.

        ``x`` edges run ``(i, j) -> (i+1, j)`` and are returned first with
        shape ``(n-1, n)``; ``y`` edges run ``(i, j) -> (i, j+1)`` with shape
        ``(n, n-1)``.
        """
        x = self.axis(boundary)
        Z = x[:, None] + 1j * x[None, :]
        return (Z[:-1, :], Z[1:, :]), (Z[:, :-1], Z[:, 1:])

    def to_dict(self):
        return {"box_k": self.box.k, "M": self.M}


def nudge_off_grid_lines(config: FluxConfiguration, grid: Grid, boundary):
    """Move fluxes lying on a mesh line of the node graph.

    A coordinate within ``1e-7 h`` of a line is shifted by ``1e-6 h``
    toward the centre of its unit cell (in the positive direction if it is
    at the centre).  Returns the (possibly new) configuration and a list of
    ``(index, old_xy, new_xy)`` moves, each of which is logged.
    """
    if len(config) == 0:
        return config, []
    h = grid.h
    off = grid.line_offset(boundary)
    pos = np.array(config.positions)
    s = (pos + grid.box.L / 2.0) / h - off
    near = np.abs(s - np.round(s)) <= _ON_LINE
    if not near.any():
        return config, []
    centre = np.floor(pos + 0.5)
    direction = np.sign(centre - pos)
    direction[direction == 0] = 1.0
    moves = []
    for idx in np.unique(np.nonzero(near)[0]):
        old = pos[idx].copy()
        pos[idx] = np.where(near[idx], pos[idx] + direction[idx] * _NUDGE * h, pos[idx])
        moves.append((int(idx), tuple(old), tuple(pos[idx])))
        log.info("flux %d moved off a mesh line: %r -> %r", idx, tuple(old), tuple(pos[idx]))
    moved = FluxConfiguration(config.box, pos, config.alphas, config.model, config.seed, config.windings)
    return moved, moves


@dataclass(frozen=True, eq=False)
class LatticeOperator:
    """Hermitian nearest-neighbour operator on an ``n x n`` node array.

    ``diag`` has shape ``(n, n)``; ``tx[i, j]`` is the matrix entry between
    nodes ``(i, j)`` and ``(i+1, j)`` and ``ty[i, j]`` between ``(i, j)`` and
    ``(i, j+1)`` (row index first).  The transposed entries are the complex
    conjugates.
    """

    grid: Grid
    boundary: str
    diag: np.ndarray
    tx: np.ndarray
    ty: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("diag", "tx", "ty"):
            getattr(self, name).setflags(write=False)

    @property
    def side(self) -> int:
        return self.diag.shape[0]

    @property
    def shape(self):
        n = self.side**2
        return (n, n)

    @property
    def dimension(self) -> int:
        return self.side**2

    @property
    def dtype(self):
        return np.result_type(self.diag, self.tx, self.ty)

    @property
    def is_real(self) -> bool:
        return not (np.iscomplexobj(self.tx) or np.iscomplexobj(self.ty))

    def norm_bound(self) -> float:
        """Gershgorin bound on the spectral radius."""
        n = self.side
        s = np.abs(self.diag).copy()
        s[:-1, :] += np.abs(self.tx)
        s[1:, :] += np.abs(self.tx)
        s[:, :-1] += np.abs(self.ty)
        s[:, 1:] += np.abs(self.ty)
        return float(s.max()) if n else 0.0

    def apply(self, u):
        u = np.asarray(u)
        n = self.side
        if u.shape[0] != n * n:
            raise ValueError(f"vector of length {u.shape[0]} does not match dimension {n * n}")
        tail = u.shape[1:]
        U = u.reshape((n, n) + tail)
        ex = (slice(None), slice(None)) + (None,) * len(tail)
        d, tx, ty = self.diag[ex], self.tx[ex], self.ty[ex]
        out = d * U
        out[:-1] += tx * U[1:]
        out[1:] += np.conj(tx) * U[:-1]
        out[:, :-1] += ty * U[:, 1:]
        out[:, 1:] += np.conj(ty) * U[:, :-1]
        return out.reshape(u.shape)

    __matmul__ = apply

    def _triplets(self):
        n = self.side
        idx = np.arange(n * n).reshape(n, n)
        rows = [idx.ravel(), idx[:-1].ravel(), idx[1:].ravel(), idx[:, :-1].ravel(), idx[:, 1:].ravel()]
        cols = [idx.ravel(), idx[1:].ravel(), idx[:-1].ravel(), idx[:, 1:].ravel(), idx[:, :-1].ravel()]
        vals = [
            self.diag.ravel(),
            self.tx.ravel(),
            np.conj(self.tx).ravel(),
            self.ty.ravel(),
            np.conj(self.ty).ravel(),
        ]
        dtype = complex if not self.is_real else float
        return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals).astype(dtype)

    def to_sparse(self, fmt: str = "csr"):
        r, c, v = self._triplets()
        return sp.coo_matrix((v, (r, c)), shape=self.shape).asformat(fmt)

    def to_dense(self) -> np.ndarray:
        return self.to_sparse("coo").toarray()

    def blocks(self):
        """Block-tridiagonal form: diagonal blocks ``A_i`` (dense ``n x n``)
        and the diagonals ``b_i`` of the coupling blocks ``H[i, i+1]``."""
        n = self.side
        j = np.arange(n - 1)
        dtype = self.dtype
        A = []
        for i in range(n):
            a = np.diag(self.diag[i].astype(dtype))
            a[j, j + 1] = self.ty[i]
            a[j + 1, j] = np.conj(self.ty[i])
            A.append(a)
        return A, [self.tx[i] for i in range(n - 1)]

    def dump_coo(self) -> str:
        """Coordinate triplets ``row,col,re,im`` as CSV text."""
        r, c, v = self._triplets()
        order = np.lexsort((c, r))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["row", "col", "re", "im"])
        for t in order:
            w.writerow([int(r[t]), int(c[t]), repr(float(np.real(v[t]))), repr(float(np.imag(v[t])))])
        return buf.getvalue()


MagneticLaplacian = LatticeOperator


def apply(op: LatticeOperator, vector):
    """Matrix-free product ``op @ vector``."""
    return op.apply(vector)


def _degree(n: int, boundary: str) -> np.ndarray:
    if boundary == "dirichlet":
        return np.full((n, n), 4.0)
    deg = np.full((n, n), 4.0)
    deg[0, :] -= 1
    deg[-1, :] -= 1
    deg[:, 0] -= 1
    deg[:, -1] -= 1
    return deg


def assemble_free(grid: Grid, boundary) -> LatticeOperator:
    """Real five-point Laplacian ``-Delta`` with the given boundary condition."""
    b = _boundary(boundary)
    n = grid.side(b)
    h2 = grid.h**2
    return LatticeOperator(
        grid, b, _degree(n, b) / h2, np.full((max(n - 1, 0), n), -1.0 / h2), np.full((n, max(n - 1, 0)), -1.0 / h2)
    )


def _link_angles(points, alphas, start, end, chunk=4_000_000):
    """``sum_g alpha_g arg((end - g)/(start - g))`` over all links."""
    theta = np.zeros(start.shape)
    if len(points) == 0 or start.size == 0:
        return theta
    s = start.ravel()
    e = end.ravel()
    out = theta.ravel()
    step = max(1, chunk // s.size)
    for lo in range(0, len(points), step):
        g = points[lo : lo + step, None]
        out += alphas[lo : lo + step] @ np.angle((e[None, :] - g) / (s[None, :] - g))
    return out.reshape(start.shape)


def _check_off_edges(points, grid, boundary):
    if len(points) == 0:
        return
    s = (np.column_stack([points.real, points.imag]) + grid.box.L / 2.0) / grid.h - grid.line_offset(boundary)
    if np.any(np.abs(s - np.round(s)) <= 0.5 * _ON_LINE):
        raise AssertionError("flux point on a mesh line after the nudge rule")


def assemble(config: FluxConfiguration, grid: Grid, boundary) -> LatticeOperator:
    """Peierls magnetic Laplacian of the in-box gauge of ``config``.

    Fluxes on mesh lines are first moved by :func:`nudge_off_grid_lines`;
    the moves are recorded in ``meta['nudged']``.
    """
    b = _boundary(boundary)
    if grid.box != config.box:
        raise ValueError("grid and configuration use different boxes")
    cfg, moves = nudge_off_grid_lines(config, grid, b)
    field = GaugeField(cfg)
    _check_off_edges(field.points, grid, b)
    free = assemble_free(grid, b)
    (xs, xe), (ys, ye) = grid.edges(b)
    tx = free.tx * np.exp(-1j * _link_angles(field.points, field.alphas, xs, xe))
    ty = free.ty * np.exp(-1j * _link_angles(field.points, field.alphas, ys, ye))
    meta = {"nudged": moves, "n_flux": len(cfg)}
    return LatticeOperator(grid, b, free.diag, tx, ty, meta)


def assemble_comparison(config: FluxConfiguration, grid: Grid, t: float, potential=None) -> LatticeOperator:
    """Real symmetric ``(1/2)(-Delta_N + t V)`` on the Neumann node set.

    ``potential`` is a :class:`~randflux.hardy.ComparisonPotential` or an
    array of node values; it is built from ``config`` when omitted.
    """
    if abs(t) > 1:
        raise ValueError("comparison parameter must satisfy |t| <= 1")
    if potential is None:
        from .hardy import build_potential

        potential = build_potential(config, grid)
    V = np.asarray(getattr(potential, "values", potential), dtype=float)
    free = assemble_free(grid, "neumann")
    V = V.reshape(free.diag.shape)
    return LatticeOperator(
        grid, "neumann", 0.5 * (free.diag + t * V), 0.5 * free.tx, 0.5 * free.ty, {"t": float(t)}
    )
