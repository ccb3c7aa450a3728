"""Singular gauge of a finite set of point fluxes.

For fluxes ``alpha_g`` at points ``g`` inside a box the holomorphic function
``psi(z) = sum alpha_g / (z - g)`` gives the vector potential
``a = (Im psi, Re psi)`` with ``curl a = 2 pi sum alpha_g delta_g`` and the
modulus factor ``Psi(z) = prod |z - g|**alpha_g``.  Line integrals of ``a``
along straight segments are exact sums of argument increments.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .geometry import BoxGeometry, FluxConfiguration

__all__ = [
    "GaugeField",
    "FluxPointError",
    "psi",
    "log_Psi",
    "link_phase",
    "plaquette_phase",
    "gauge_shift",
    "dump_link_phases",
    "enclosed_flux",
    "random_plaquette_errors",
]


class FluxPointError(ValueError):
    """Raised when a quantity is evaluated on (or a segment crosses) a flux point."""


@dataclass(frozen=True, eq=False)
class GaugeField:
    """In-box gauge built from the fluxes of ``config`` that lie in ``box``.

    ``box`` defaults to the configuration's own box.  Effective fluxes
    (including integer windings) are used, so a gauge-shifted configuration
    gives a field that differs by integer multiples of ``2 pi`` around each
    shifted point.
    """

    config: FluxConfiguration
    box: BoxGeometry | None = None

    def __post_init__(self):
        box = self.config.box if self.box is None else self.box
        object.__setattr__(self, "box", box)
        cfg = self.config
        keep = box.contains(cfg.positions) if len(cfg) else np.zeros(0, dtype=bool)
        object.__setattr__(self, "_z", cfg.z[keep])
        object.__setattr__(self, "_alpha", cfg.effective_alphas[keep].astype(float))

    @property
    def points(self) -> np.ndarray:
        return self._z

    @property
    def alphas(self) -> np.ndarray:
        return self._alpha

    @property
    def total_flux(self) -> float:
        return float(np.sum(self._alpha))

    def vector_potential(self, z) -> np.ndarray:
        """``a(z) = (Im psi, Re psi)`` stacked on the last axis."""
        p = psi(self, z)
        return np.stack([np.imag(p), np.real(p)], axis=-1)


def _as_complex(z) -> np.ndarray:
    z = np.asarray(z)
    if np.iscomplexobj(z):
        return z
    if z.shape and z.shape[-1] == 2:
        return z[..., 0] + 1j * z[..., 1]
    return z.astype(complex)


def psi(field: GaugeField, z):
    """``sum_g alpha_g / (z - g)`` over the in-box fluxes (0 if there are none)."""
    zz = _as_complex(z)
    scalar = zz.ndim == 0
    zz = np.atleast_1d(zz)
    out = np.zeros(zz.shape, dtype=complex)
    for g, a in zip(field.points, field.alphas):
        d = zz - g
        if np.any(d == 0):
            raise FluxPointError("psi evaluated at a flux point")
        out += a / d
    return out[0] if scalar else out


def log_Psi(field: GaugeField, z):
    """``sum_g alpha_g log|z - g|``.

    At a flux point with positive flux the value would be ``-inf``; this is
    signalled by :class:`FluxPointError`.  Zero fluxes contribute nothing.
    """
    zz = _as_complex(z)
    scalar = zz.ndim == 0
    zz = np.atleast_1d(zz)
    out = np.zeros(zz.shape)
    for g, a in zip(field.points, field.alphas):
        if a == 0:
            continue
        r = np.abs(zz - g)
        with np.errstate(divide="ignore"):
            out += a * np.log(r)
    if np.any(np.isneginf(out)):
        raise FluxPointError("log_Psi is -inf at a flux point with positive flux")
    return float(out[0]) if scalar else out


def _segment_terms(field, a, b):
    """Per-flux argument increments along the segments ``a -> b`` (arrays)."""
    a = np.atleast_1d(_as_complex(a))
    b = np.atleast_1d(_as_complex(b))
    a, b = np.broadcast_arrays(a, b)
    length = np.abs(b - a)
    if np.any(length == 0):
        raise ValueError("degenerate segment (a == b)")
    g = field.points[:, None]
    da = a[None, :] - g
    db = b[None, :] - g
    # distance from each flux to each segment
    t = np.clip(np.real(np.conj(b - a)[None, :] * (g - a[None, :])) / length**2, 0.0, 1.0)
    dist = np.abs(a[None, :] + t * (b - a)[None, :] - g)
    if np.any(dist <= 1e-12 * length[None, :]):
        raise FluxPointError("segment passes through a flux point")
    return np.angle(db / da)


def link_phase(field: GaugeField, a, b=None):
    """Line integral of ``a = (Im psi, Re psi)`` along the straight segment ``a -> b``.

    ``a``, ``b`` may be complex numbers, ``(x, y)`` pairs or arrays of
    either (vectorized over segments).  A single argument is read as a
    ``(a, b)`` segment pair.
    """
    if b is None:
        a, b = a
    scalar = np.ndim(_as_complex(a)) == 0 and np.ndim(_as_complex(b)) == 0
    if field.points.size == 0:
        out = np.zeros(np.broadcast(np.atleast_1d(_as_complex(a)), np.atleast_1d(_as_complex(b))).shape)
    else:
        out = field.alphas @ _segment_terms(field, a, b)
    return float(out[0]) if scalar else out


def plaquette_phase(field: GaugeField, corner, size) -> float:
    """Sum of the four counter-clockwise link phases of an axis-aligned square.

    ``corner`` is the lower-left vertex, ``size`` the edge length.  Equals
    ``2 pi`` times the flux strictly inside.
    """
    c = complex(*corner) if not np.iscomplexobj(corner) else complex(corner)
    s = float(size)
    verts = np.array([c, c + s, c + s + 1j * s, c + 1j * s])
    return float(np.sum(link_phase(field, verts, np.roll(verts, -1))))


def gauge_shift(config: FluxConfiguration, index: int, n: int) -> FluxConfiguration:
    """Add the integer ``n`` to the flux of point ``index``.

    The fractional flux stays in ``alphas``; the integer part is recorded in
    ``windings``.
    """
    if int(n) != n:
        raise ValueError("gauge shifts must be integers")
    if n == 0:
        return config
    w = np.array(config.windings, dtype=np.int64)
    w[index] += int(n)
    return config.with_windings(w)


def dump_link_phases(edges, phases) -> str:
    """CSV text with one ``(edge_id, phase)`` row per edge."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(["edge_id", "phase"])
    for e, p in zip(edges, phases):
        writer.writerow([e, repr(float(p))])
    return buf.getvalue()


def enclosed_flux(field: GaugeField, corner, size) -> float:
    """Sum of the fluxes strictly inside an axis-aligned square."""
    x0, y0 = corner
    z = field.points
    inside = (z.real > x0) & (z.real < x0 + size) & (z.imag > y0) & (z.imag < y0 + size)
    return float(np.sum(field.alphas[inside]))


def random_plaquette_errors(config: FluxConfiguration, count: int, rng: np.random.Generator,
                            min_size: float = 0.05) -> np.ndarray:
    """``|plaquette_phase - 2 pi enclosed_flux|`` for random squares in the box.

    Squares whose edges pass within ``1e-6`` of a flux point are redrawn.
    """
    field = GaugeField(config)
    half = config.box.half
    out = np.empty(count)
    for i in range(count):
        while True:
            size = rng.uniform(min_size, half)
            x0, y0 = rng.uniform(-half, half - size, 2)
            z = field.points
            near = ((np.abs(z.real - x0) < 1e-6) | (np.abs(z.real - x0 - size) < 1e-6)
                    | (np.abs(z.imag - y0) < 1e-6) | (np.abs(z.imag - y0 - size) < 1e-6))
            if not near.any():
                break
        out[i] = abs(plaquette_phase(field, (x0, y0), size) - 2 * np.pi * enclosed_flux(field, (x0, y0), size))
    return out
