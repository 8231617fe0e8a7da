"""Local decay diagnostics on periodic arcs: Morrey profiles, dyadic annuli and
a power-law fit of the local weak-L^2 norm.

A ball B(x0, r) is the arc [x0 - r, x0 + r] taken with wraparound.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import function_spaces as fs
from .spectral_core import Field


def _cumulative(g: np.ndarray, h: float):
    """Antiderivative of the periodic piecewise-linear interpolant of samples g."""
    nxt = np.roll(g, -1)
    cells = 0.5 * h * (g + nxt)
    nodes = np.concatenate([[0.0], np.cumsum(cells)])
    total = nodes[-1]
    n = g.size

    def F(t):
        t = np.asarray(t, dtype=float)
        wraps = np.floor(t / (n * h))
        t0 = t - wraps * n * h
        k = np.minimum((t0 // h).astype(int), n - 1)
        s = t0 / h - k
        part = h * (s * g[k] + 0.5 * s**2 * (nxt[k] - g[k]))
        return wraps * total + nodes[k] + part

    return F


def arc_integral(f: Field, x0, r) -> np.ndarray:
    """Integral of |f| over the periodic arcs B(x0, r), broadcasting x0 and r."""
    F = _cumulative(f.magnitude(), f.grid.spacing)
    x0 = np.asarray(x0, dtype=float)
    r = np.asarray(r, dtype=float)
    return F(x0 + r) - F(x0 - r)


@dataclass
class MorreyProfile:
    beta: float
    table: list = field(default_factory=list)  # rows (x0, r, value)
    supremum: float = 0.0

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "columns": ["x0", "r", "value"],
            "table": [list(row) for row in self.table],
            "supremum": self.supremum,
        }


def morrey_profile(f: Field, beta: float, centers, radii) -> MorreyProfile:
    """Values r^-beta * integral of |f| over B(x0, r) on the centre/radius lattice."""
    if not 0.0 < beta < 0.5:
        raise ValueError(f"beta must lie in (0, 1/2), got {beta}")
    radii = np.asarray(radii, dtype=float)
    centers = np.asarray(centers, dtype=float)
    if np.any(radii <= 0) or np.any(radii > f.grid.length / 4 * (1 + 1e-12)):
        raise ValueError(f"radii must lie in (0, L/4] with L = {f.grid.length}")
    X, Rr = np.meshgrid(centers, radii, indexing="ij")
    vals = np.maximum(arc_integral(f, X, Rr), 0.0) * Rr**-beta
    table = [(float(x), float(r), float(v)) for x, r, v in zip(X.ravel(), Rr.ravel(), vals.ravel())]
    return MorreyProfile(beta, table, float(vals.max()) if vals.size else 0.0)


def periodic_distance(grid, x0: float) -> np.ndarray:
    L = grid.length
    d = np.abs((grid.points - x0) % L)
    return np.minimum(d, L - d)


def restrict(f: Field, mask: np.ndarray) -> Field:
    return Field(f.grid, np.where(mask[:, None, None], f.data, 0.0))


@dataclass
class AnnularProfile:
    x0: float
    r: float
    rows: list = field(default_factory=list)  # (h, inner, outer, l2inf)
    weighted_sum: float = 0.0

    def to_dict(self) -> dict:
        return {
            "x0": self.x0,
            "r": self.r,
            "columns": ["h", "inner", "outer", "l2inf"],
            "rows": [list(row) for row in self.rows],
            "weighted_sum": self.weighted_sum,
        }


def annular_l2weak_profile(f: Field, x0: float, r: float) -> AnnularProfile:
    """L^{2,inf} norms of f on B(x0, 2^{h+1} r) minus B(x0, 2^{h-1} r), h = 0, 1, ...

    Annuli are kept while 2^{h+1} r <= L/2; the weighted sum is
    sum_h 2^{-h/2} * value.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    d = periodic_distance(f.grid, x0)
    rows, total, h = [], 0.0, 0
    while 2.0 ** (h + 1) * r <= f.grid.length / 2 * (1 + 1e-12):
        inner, outer = 2.0 ** (h - 1) * r, 2.0 ** (h + 1) * r
        val = fs.lorentz_norms(restrict(f, (d >= inner) & (d < outer)))[1]
        rows.append((h, inner, outer, val))
        total += 2.0 ** (-h / 2) * val
        h += 1
    return AnnularProfile(float(x0), float(r), rows, total)


def decay_fit(f: Field, x0: float, radii) -> dict:
    """Least-squares slope of log ||f||_{L^{2,inf}(B(x0, r))} against log r."""
    d = periodic_distance(f.grid, x0)
    radii = np.asarray(radii, dtype=float)
    vals = np.array([fs.lorentz_norms(restrict(f, d < r))[1] for r in radii])
    out = {"radii": radii.tolist(), "values": vals.tolist(), "beta": None, "r_squared": None}
    ok = vals > 0
    if ok.sum() >= 2:
        lx, ly = np.log(radii[ok]), np.log(vals[ok])
        slope, icpt = np.polyfit(lx, ly, 1)
        resid = ly - (slope * lx + icpt)
        ss = float(np.sum((ly - ly.mean()) ** 2))
        out["beta"] = float(slope)
        out["r_squared"] = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return out
