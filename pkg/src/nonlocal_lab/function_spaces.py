"""Norms on the periodic grid and the Littlewood-Paley machinery.

All integrals are quadratures with cell weight L/n. Vector and matrix fields
are reduced to their pointwise Euclidean magnitude before a norm is taken.

The dyadic bump is fixed once and for all:

    phi(xi) = 1                          for |xi| <= 1
    phi(xi) = exp(1 - 1/(1 - t**2))      for 1 < |xi| < 2, t = |xi| - 1
    phi(xi) = 0                          for |xi| >= 2

with psi(xi) = phi(xi) - phi(2 xi) and psi_j(xi) = psi(2**-j xi).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral_core import (
    Field,
    Grid1D,
    apply_symbol,
    power_multiplier,
    product,
    remove_mean,
    same_grid,
)


def lp_norm(f: Field, p: float = 2.0) -> float:
    """Quadrature L^p norm of the pointwise magnitude; ``p`` may be ``np.inf``."""
    if p < 1:
        raise ValueError(f"exponent p must be >= 1, got {p}")
    mag = f.magnitude()
    if np.isinf(p):
        return float(mag.max())
    return float((np.sum(mag**p) * f.grid.spacing) ** (1.0 / p))


@dataclass
class RearrangementProfile:
    values: np.ndarray
    weight: float

    @property
    def times(self) -> np.ndarray:
        """Right end points t_i = i*weight of the cells."""
        return self.weight * np.arange(1, self.values.size + 1)

    def lp_norm(self, p: float = 2.0) -> float:
        if np.isinf(p):
            return float(self.values[0]) if self.values.size else 0.0
        return float((np.sum(self.values**p) * self.weight) ** (1.0 / p))


def decreasing_rearrangement(f: Field) -> RearrangementProfile:
    return RearrangementProfile(np.sort(f.magnitude())[::-1].copy(), f.grid.spacing)


def lorentz_norms(f: Field) -> tuple[float, float]:
    """(L^{2,1}, L^{2,inf}) norms of the piecewise-constant rearrangement.

    The L^{2,1} integral of t^{-1/2} f*(t) is exact on each cell, giving the
    increments 2 sqrt(t_i) - 2 sqrt(t_{i-1}).
    """
    prof = decreasing_rearrangement(f)
    t = prof.times
    root = np.sqrt(np.concatenate([[0.0], t]))
    l21 = float(np.sum(prof.values * 2.0 * np.diff(root)))
    l2inf = float(np.max(root[1:] * prof.values))
    return l21, l2inf


def sobolev_norm(f: Field, s: float) -> float:
    """Homogeneous norm || |xi|^s f^ ||_{L^2}; the zero mode is dropped."""
    return lp_norm(power_multiplier(f, s), 2.0)


# Littlewood-Paley blocks

def dyadic_bump(xi: np.ndarray) -> np.ndarray:
    a = np.abs(np.asarray(xi, dtype=float))
    out = np.where(a <= 1.0, 1.0, 0.0)
    mid = (a > 1.0) & (a < 2.0)
    t = a[mid] - 1.0
    out[mid] = np.exp(1.0 - 1.0 / (1.0 - t**2))
    return out


def dyadic_block_symbol(xi: np.ndarray, j: int, bump=dyadic_bump) -> np.ndarray:
    x = np.asarray(xi, dtype=float) * 2.0**-j
    return bump(x) - bump(2.0 * x)


def top_scale(grid: Grid1D) -> int:
    """Smallest J with phi(2^-J xi) = 1 on every grid frequency."""
    return max(1, int(np.ceil(np.log2(grid.half_frequencies[-1]))))


@dataclass
class LPDecomposition:
    source: Field
    blocks: list = field(default_factory=list)  # (j, Field) pairs
    lowpass: Field | None = None
    lowpass_floor: int = 1

    def scales(self) -> list[int]:
        return [j for j, _ in self.blocks]

    def block(self, j: int) -> Field:
        for k, fj in self.blocks:
            if k == j:
                return fj
        raise KeyError(j)

    def indexed(self) -> list[tuple[int, Field]]:
        """Low-pass as index ``lowpass_floor - 1`` followed by the blocks."""
        return [(self.lowpass_floor - 1, self.lowpass)] + list(self.blocks)

    def reconstruct(self) -> Field:
        out = self.lowpass
        for _, fj in self.blocks:
            out = out + fj
        return out


def lp_blocks(f: Field, bump=dyadic_bump, lowpass_floor: int = 1) -> LPDecomposition:
    """Split ``f`` into blocks psi_j(D) f for j = lowpass_floor..J plus a low-pass rest."""
    grid = f.grid
    xi = grid.half_frequencies
    top = top_scale(grid)
    low = apply_symbol(f, bump(xi * 2.0 ** (1 - lowpass_floor)).astype(complex))
    blocks = []
    for j in range(lowpass_floor, top + 1):
        sym = dyadic_block_symbol(xi, j, bump)
        blocks.append((j, apply_symbol(f, sym.astype(complex))))
    return LPDecomposition(source=f, blocks=blocks, lowpass=low, lowpass_floor=lowpass_floor)


def _mean_free_pieces(f: Field) -> list[Field]:
    dec = lp_blocks(f)
    return [remove_mean(dec.lowpass)] + [fj for _, fj in dec.blocks]


def besov_b0_inf_inf_norm(f: Field) -> float:
    """sup_j ||f_j||_inf; the mean-free low-pass counts as one more block."""
    return max(lp_norm(p, np.inf) for p in _mean_free_pieces(f))


def square_function(f: Field) -> np.ndarray:
    """Pointwise (sum_j |f_j|^2)^(1/2) over mean-free blocks."""
    return np.sqrt(sum(p.magnitude() ** 2 for p in _mean_free_pieces(f)))


def hardy_h1_norm(f: Field) -> float:
    return float(np.sum(square_function(f)) * f.grid.spacing)


def bmo_norm(f: Field) -> float:
    """Sup over periodic dyadic-length windows (all offsets) of the mean oscillation."""
    n = f.grid.n
    data = f.data.reshape(n, -1)
    best = 0.0
    length = n
    while length >= 4:
        ext = np.concatenate([data, data[: length - 1]], axis=0)
        win = np.lib.stride_tricks.sliding_window_view(ext, length, axis=0)[:n]
        # win: (n, comps, length)
        avg = win.mean(axis=2, keepdims=True)
        dev = np.sqrt(np.sum((win - avg) ** 2, axis=1)).mean(axis=1)
        best = max(best, float(dev.max()))
        length //= 2
    return best


# paraproducts

PARAPRODUCT_OFFSET = 4


def paraproducts(f: Field, g: Field, offset: int = PARAPRODUCT_OFFSET) -> tuple[Field, Field, Field]:
    """Split f*g into high-low, low-high and diagonal parts.

    Pi_1 = sum_j f_j P_{<=j-offset} g, Pi_2 = sum_j g_j P_{<=j-offset} f and
    Pi_3 = sum over |j - k| < offset of f_j g_k. The low-pass block carries the
    index lowpass_floor - 1.
    """
    same_grid(f, g)
    if not (f.is_scalar and g.is_scalar):
        raise ValueError("paraproducts expect scalar fields")
    fb = lp_blocks(f).indexed()
    gb = lp_blocks(g).indexed()
    zero = Field(f.grid, np.zeros_like(f.data))

    def partial_sums(blocks):
        acc, out = zero, {}
        for j, b in blocks:
            acc = acc + b
            out[j] = acc
        return out

    f_upto, g_upto = partial_sums(fb), partial_sums(gb)
    lowest = fb[0][0]
    pi1, pi2, pi3 = zero, zero, zero
    for j, fj in fb:
        if j - offset >= lowest:
            pi1 = pi1 + product(fj, g_upto[j - offset])
    for k, gk in gb:
        if k - offset >= lowest:
            pi2 = pi2 + product(gk, f_upto[k - offset])
    for j, fj in fb:
        for k, gk in gb:
            if abs(j - k) < offset:
                pi3 = pi3 + product(fj, gk)
    return pi1, pi2, pi3
