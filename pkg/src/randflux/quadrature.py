"""Quadrature for integrands with algebraic point singularities.

Integrands of the form ``|z - g|**e * smooth`` (``e > -2``) are integrated
over unions of half-unit tiles.  Each tile is split by a quadtree until a
leaf holds at most one singular point and every regular leaf is small
compared to its distance from the singular points.  A leaf holding a point
``g`` is cut by the two lines through ``g``; each piece gets a corner square
at ``g`` integrated in polar coordinates (Gauss-Jacobi in ``r`` with the
weight ``r**(e+1)``, Gauss-Legendre in the angle) and a remainder rectangle
that is refined geometrically toward ``g``.  Regular pieces use tensor
Gauss-Legendre rules.

Nodes are stored as ``anchor + offset``; polar nodes are anchored at their
singular point so that ``z - g`` is exact however close ``z`` is to ``g``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import roots_jacobi, roots_legendre

__all__ = ["QuadratureScheme", "QuadratureRule", "build_rules", "box_tiles", "integrate"]


@dataclass(frozen=True)
class QuadratureScheme:
    """Parameters of the singular quadrature.

    ``order`` is the Gauss order of every sub-rule and ``check_order`` the
    order of the second rule used for the error estimate.  ``eta`` bounds the
    ratio (piece size)/(distance to the nearest singular point) of regular
    pieces.  ``max_radius`` caps the polar patch size around each point
    (the caller may pass smaller per-point caps such as ``delta_m``).
    """

    order: int = 6
    check_order: int = 8
    eta: float = 2.0
    max_radius: float = 0.5
    neighbour_factor: float = 1.5
    atol: float = 1e-8
    min_size: float = 1e-13

    def orders(self):
        return (self.order, self.check_order)


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    anchor: np.ndarray
    offset: np.ndarray
    weight: np.ndarray
    tile: np.ndarray
    order: int

    @property
    def nodes(self) -> np.ndarray:
        return self.anchor + self.offset

    def __len__(self):
        return self.weight.shape[0]

    def displacement(self, g: complex) -> np.ndarray:
        """``z - g`` at every node, exact for nodes anchored at ``g``."""
        return (self.anchor - g) + self.offset


def box_tiles(k: int, inner: float | None = None, outer: float | None = None):
    """Half-unit tiles of ``[-outer, outer)^2`` minus ``[-inner, inner)^2``.

    Defaults to the whole box ``Q_k``.  Returns ``(T, 4)`` bounds
    ``[x0, x1, y0, y1]`` and the ``(T, 2)`` cell indices of the tiles.
    """
    outer = k + 0.5 if outer is None else outer
    edges = np.arange(-outer, outer, 0.5)
    X0, Y0 = np.meshgrid(edges, edges, indexing="ij")
    x0, y0 = X0.ravel(), Y0.ravel()
    keep = np.ones(x0.shape, bool)
    if inner is not None and inner > 0:
        cx, cy = x0 + 0.25, y0 + 0.25
        keep = ~((np.abs(cx) < inner) & (np.abs(cy) < inner))
    x0, y0 = x0[keep], y0[keep]
    bounds = np.column_stack([x0, x0 + 0.5, y0, y0 + 0.5])
    cells = np.floor(np.column_stack([x0 + 0.25, y0 + 0.25]) + 0.5).astype(np.int64)
    return bounds, cells


_SNAP = 1e-9  # relative distance below which a cut is moved onto a point

_GL_CACHE: dict = {}
_GJ_CACHE: dict = {}


def _gl(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = roots_legendre(n)
    return _GL_CACHE[n]


def _gj(n, beta):
    key = (n, float(beta))
    if key not in _GJ_CACHE:
        if len(_GJ_CACHE) > 4096:
            _GJ_CACHE.clear()
        _GJ_CACHE[key] = roots_jacobi(n, 0.0, beta)
    return _GJ_CACHE[key]


class _Builder:
    def __init__(self, points, exponents, caps, scheme):
        self.points = np.asarray(points, dtype=complex)
        self.exponents = np.asarray(exponents, dtype=float)
        self.scheme = scheme
        self.caps = np.minimum(np.asarray(caps, float), scheme.max_radius) if caps is not None else \
            np.full(len(self.points), scheme.max_radius)
        xy = np.column_stack([self.points.real, self.points.imag]) if len(self.points) else np.zeros((0, 2))
        self.tree = cKDTree(xy) if len(self.points) else None
        self.xy = xy
        self.regular = []  # (x0, x1, y0, y1, tile)
        self.polar = []  # (point index, sx, sy, s, tile)

    def nearest(self, x, y, k=1):
        if self.tree is None:
            return np.full(k, np.inf), np.full(k, -1)
        kk = min(k, len(self.points))
        d, i = self.tree.query([x, y], k=kk)
        d, i = np.atleast_1d(d), np.atleast_1d(i)
        if kk < k:
            d = np.concatenate([d, np.full(k - kk, np.inf)])
            i = np.concatenate([i, np.full(k - kk, -1)])
        return d, i

    def inside(self, x0, x1, y0, y1):
        if self.tree is None:
            return []
        cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        r = 0.5 * np.hypot(x1 - x0, y1 - y0) * (1 + 1e-12)
        idx = self.tree.query_ball_point([cx, cy], r)
        return [i for i in idx if x0 <= self.xy[i, 0] <= x1 and y0 <= self.xy[i, 1] <= y1]

    def _split_line(self, lo, hi, coords):
        """Midpoint of ``[lo, hi]``, moved onto a point coordinate lying
        within ``_SNAP`` of it so that no point sits just off a cut."""
        m = 0.5 * (lo + hi)
        near = coords[np.abs(coords - m) <= _SNAP * (hi - lo)]
        return float(near[0]) if near.size else m

    def square(self, x0, x1, y0, y1, tile):
        stack = [(x0, x1, y0, y1)]
        sc = self.scheme
        while stack:
            x0, x1, y0, y1 = stack.pop()
            size = max(x1 - x0, y1 - y0)
            if size < sc.min_size:
                raise RuntimeError("quadtree refinement below the minimum size")
            ins = self.inside(x0, x1, y0, y1)
            split = False
            if len(ins) > 1:
                split = True
            elif len(ins) == 1:
                p = ins[0]
                d, _ = self.nearest(self.xy[p, 0], self.xy[p, 1], k=2)
                if size > self.caps[p] or d[1] < sc.neighbour_factor * size * np.sqrt(2):
                    split = True
                else:
                    self.singular_leaf(x0, x1, y0, y1, p, tile)
            else:
                cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
                d, _ = self.nearest(cx, cy)
                diam = np.hypot(x1 - x0, y1 - y0)
                dist = d[0] - 0.5 * diam
                if diam > sc.eta * max(dist, 0.0):
                    split = True
                else:
                    self.regular.append((x0, x1, y0, y1, tile))
            if split:
                xm = self._split_line(x0, x1, self.xy[ins, 0]) if ins else 0.5 * (x0 + x1)
                ym = self._split_line(y0, y1, self.xy[ins, 1]) if ins else 0.5 * (y0 + y1)
                stack.extend([(x0, xm, y0, ym), (xm, x1, y0, ym), (x0, xm, ym, y1), (xm, x1, ym, y1)])

    def rectangle(self, x0, x1, y0, y1, tile):
        """Regular rectangle refined until small relative to its distance
        from the singular points (rectangles may touch a point only at
        distance zero from a polar patch edge, never contain one)."""
        stack = [(x0, x1, y0, y1)]
        sc = self.scheme
        while stack:
            x0, x1, y0, y1 = stack.pop()
            w, h = x1 - x0, y1 - y0
            if w <= 0 or h <= 0:
                continue
            if max(w, h) < sc.min_size:
                raise RuntimeError("rectangle refinement below the minimum size")
            cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            diam = np.hypot(w, h)
            d, _ = self.nearest(cx, cy)
            dist = d[0] - 0.5 * diam
            if diam <= sc.eta * max(dist, 0.0):
                self.regular.append((x0, x1, y0, y1, tile))
                continue
            if w > 2 * h:
                xm = 0.5 * (x0 + x1)
                stack.extend([(x0, xm, y0, y1), (xm, x1, y0, y1)])
            elif h > 2 * w:
                ym = 0.5 * (y0 + y1)
                stack.extend([(x0, x1, y0, ym), (x0, x1, ym, y1)])
            else:
                xm, ym = cx, cy
                stack.extend([(x0, xm, y0, ym), (xm, x1, y0, ym), (x0, xm, ym, y1), (xm, x1, ym, y1)])

    def singular_leaf(self, x0, x1, y0, y1, p, tile):
        gx, gy = self.xy[p]
        for sx, (u0, u1) in ((-1, (x0, gx)), (1, (gx, x1))):
            for sy, (v0, v1) in ((-1, (y0, gy)), (1, (gy, y1))):
                a, b = u1 - u0, v1 - v0
                if a <= 0 or b <= 0:
                    continue
                s = min(a, b)
                self.polar.append((p, sx, sy, s, tile))
                # remainder of the piece beyond the corner square
                if a > s:
                    xs = (gx + s, x1) if sx > 0 else (x0, gx - s)
                    ys = (gy, gy + b) if sy > 0 else (gy - b, gy)
                    self.rectangle(xs[0], xs[1], ys[0], ys[1], tile)
                elif b > s:
                    xs = (gx, gx + a) if sx > 0 else (gx - a, gx)
                    ys = (gy + s, y1) if sy > 0 else (y0, gy - s)
                    self.rectangle(xs[0], xs[1], ys[0], ys[1], tile)

    def emit(self, n):
        anchors, offsets, weights, tiles = [], [], [], []
        t, w = _gl(n)
        if self.regular:
            R = np.array(self.regular)
            x0, x1, y0, y1, tl = R.T
            cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            hx, hy = 0.5 * (x1 - x0), 0.5 * (y1 - y0)
            ox = hx[:, None, None] * t[None, :, None]
            oy = hy[:, None, None] * t[None, None, :]
            off = (ox + 1j * oy).reshape(len(R), -1)
            ww = (hx * hy)[:, None] * np.outer(w, w).ravel()[None, :]
            anchors.append(np.repeat(cx + 1j * cy, n * n))
            offsets.append(off.ravel())
            weights.append(ww.ravel())
            tiles.append(np.repeat(tl.astype(np.int64), n * n))
        for p, sx, sy, s, tl in self.polar:
            e = self.exponents[p]
            tr, wr = _gj(n, e + 1.0)
            g = self.points[p]
            for lo, hi, use_cos in ((0.0, np.pi / 4, True), (np.pi / 4, np.pi / 2, False)):
                th = 0.5 * (hi - lo) * (t + 1) + lo
                wt = 0.5 * (hi - lo) * w
                R = s / (np.cos(th) if use_cos else np.sin(th))
                r = 0.5 * R[:, None] * (1 + tr[None, :])
                wgt = wt[:, None] * (0.5 * R[:, None]) ** (e + 2) * wr[None, :] / r**e
                off = r * (sx * np.cos(th)[:, None] + 1j * sy * np.sin(th)[:, None])
                anchors.append(np.full(off.size, g))
                offsets.append(off.ravel())
                weights.append(wgt.ravel())
                tiles.append(np.full(off.size, tl, dtype=np.int64))
        if not weights:
            z = np.zeros(0)
            return QuadratureRule(z.astype(complex), z.astype(complex), z, z.astype(np.int64), n)
        return QuadratureRule(
            np.concatenate(anchors), np.concatenate(offsets), np.concatenate(weights), np.concatenate(tiles), n
        )


def _snap_tiles(tiles, points):
    """Move tile edges lying within ``_SNAP`` (relative) of a point onto it.

    Both tiles sharing the edge next to the point move together, so the
    tiles still partition the same region up to sets of area ``O(_SNAP^2)``.
    """
    T = np.array(tiles, dtype=float).reshape(-1, 4)
    if len(points) == 0 or len(T) == 0:
        return T
    size = np.maximum(T[:, 1] - T[:, 0], T[:, 3] - T[:, 2])
    for g in points:
        for lo, other in ((0, 2), (2, 0)):
            c = g.real if lo == 0 else g.imag
            o = g.imag if lo == 0 else g.real
            tol = _SNAP * size
            beside = (T[:, other] - tol <= o) & (o <= T[:, other + 1] + tol)
            for j in (lo, lo + 1):
                hit = beside & (np.abs(T[:, j] - c) <= tol) & (T[:, j] != c)
                T[hit, j] = c
    return T


def build_rules(tiles, points=(), exponents=(), scheme: QuadratureScheme | None = None, caps=None):
    """Rules of orders ``scheme.orders()`` over the given tiles.

    Parameters
    ----------
    tiles : (T, 4) array
        Tile bounds ``[x0, x1, y0, y1]``.
    points : complex array
        Singular points.
    exponents : array
        Exponent ``e > -2`` of the singular factor ``|z - g|**e`` per point.
    caps : array, optional
        Per-point upper bound on the polar patch size.

    Returns
    -------
    list of QuadratureRule
        One rule per order, all on the same subdivision.
    """
    scheme = scheme or QuadratureScheme()
    points = np.atleast_1d(np.asarray(points, dtype=complex))
    exponents = np.atleast_1d(np.asarray(exponents, dtype=float))
    if points.shape != exponents.shape:
        raise ValueError("one exponent per singular point is required")
    if np.any(exponents <= -2):
        raise ValueError("exponents must exceed -2 for integrability")
    b = _Builder(points, exponents, caps, scheme)
    for ti, (x0, x1, y0, y1) in enumerate(_snap_tiles(tiles, points)):
        b.square(x0, x1, y0, y1, ti)
    return [b.emit(n) for n in scheme.orders()]


def integrate(rules, func, groups=None, ngroups: int | None = None):
    """Integrate ``func(rule) -> node values`` with each rule.

    Returns ``(value, error, per_group)`` where ``value`` uses the last
    (highest-order) rule, ``error`` is the difference between the last two
    rules and ``per_group`` holds the last rule's sums per tile group
    (``groups[tile]``) when ``groups`` is given.
    """
    vals = []
    per = None
    for rule in rules:
        f = func(rule)
        vals.append(np.sum(rule.weight * f))
        if groups is not None:
            g = np.asarray(groups)[rule.tile]
            per = np.bincount(g, weights=rule.weight * np.real(f), minlength=ngroups or 0)
    value = vals[-1]
    err = abs(vals[-1] - vals[-2]) if len(vals) > 1 else np.nan
    return value, float(err), per
