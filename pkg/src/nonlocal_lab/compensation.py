"""Compensation operators and an ensemble harness for their norm ratios.

Every operator is a combination of Fourier multipliers and pointwise products
whose leading terms cancel. Products are de-aliased by default.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import function_spaces as fs
from .spectral_core import (
    Field,
    Grid1D,
    ShapeMismatchError,
    band_limited_field,
    half_laplacian,
    inverse_quarter_laplacian,
    product,
    quarter_laplacian,
    riesz_transform,
    scalar_field,
    spectral_derivative,
)

D4 = quarter_laplacian
R = riesz_transform


def _check_pair(Q: Field, v: Field):
    if not (Q.is_scalar or v.is_scalar) and Q.shape[1] != v.shape[0]:
        raise ShapeMismatchError(f"operator shapes do not compose: {Q.shape} and {v.shape}")


def op_N(Q: Field, v: Field, dealias: bool = True) -> Field:
    """D4(Q v) - Q D4 v + (D4 Q) v."""
    _check_pair(Q, v)
    return D4(product(Q, v, dealias)) - product(Q, D4(v), dealias) + product(D4(Q), v, dealias)


def op_T(Q: Field, u: Field, dealias: bool = True) -> Field:
    """D4(Q D4 u) - Q D2 u + (D4 Q)(D4 u)."""
    _check_pair(Q, u)
    du = D4(u)
    return (
        D4(product(Q, du, dealias))
        - product(Q, half_laplacian(u), dealias)
        + product(D4(Q), du, dealias)
    )


FORMS = ("compensated", "uncompensated")


def _middle_sign(form: str) -> float:
    if form not in FORMS:
        raise ValueError(f"unknown form {form!r}; choose from {FORMS}")
    return 1.0 if form == "compensated" else -1.0


def op_S(Q: Field, u: Field, dealias: bool = True, form: str = "compensated") -> Field:
    """D4(Q D4 u) + R(Q u') + R((D4 Q)(R D4 u)).

    Since -R d/dx = D2, the ``+`` sign on the middle term is the one that makes
    S(c, u) = 0 for constant c. ``form="uncompensated"`` uses ``-R(Q u')`` instead,
    which leaves S(c, u) = 2 c D2 u.
    """
    _check_pair(Q, u)
    sign = _middle_sign(form)
    du = D4(u)
    return (
        D4(product(Q, du, dealias))
        + sign * R(product(Q, spectral_derivative(u), dealias))
        + R(product(D4(Q), R(du), dealias))
    )


def op_R(Q: Field, u: Field, dealias: bool = True) -> Field:
    """D4(Q D4 u) - D2(Q u) + D4((D4 Q) u)."""
    _check_pair(Q, u)
    return (
        D4(product(Q, D4(u), dealias))
        - half_laplacian(product(Q, u, dealias))
        + D4(product(D4(Q), u, dealias))
    )


def op_Stilde(Q: Field, u: Field, dealias: bool = True, form: str = "compensated") -> Field:
    """D4(Q D4 u) + (Q R u)' + R D4((D4 Q)(R u)); the adjoint partner of ``op_S``."""
    _check_pair(Q, u)
    sign = _middle_sign(form)
    ru = R(u)
    return (
        D4(product(Q, D4(u), dealias))
        + sign * spectral_derivative(product(Q, ru, dealias))
        + R(D4(product(D4(Q), ru, dealias)))
    )


def op_F(Q: Field, v: Field, dealias: bool = True) -> Field:
    """R(Q) R(v) - Q v."""
    _check_pair(Q, v)
    return product(R(Q), R(v), dealias) - product(Q, v, dealias)


def op_Fstar(Q: Field, v: Field, dealias: bool = True) -> Field:
    """D4(Q v) - D4 R(R(Q) v)."""
    _check_pair(Q, v)
    return D4(product(Q, v, dealias)) - D4(R(product(R(Q), v, dealias)))


class NotOrthogonalError(ValueError):
    """Raised when a matrix field is not pointwise orthogonal."""


def orthogonality_defect(P: Field) -> float:
    m = P.shape[0]
    gram = np.einsum("nki,nkj->nij", P.data, P.data)
    return float(np.abs(gram - np.eye(m)).max())


def check_orthogonal(P: Field, tol: float = 1e-8):
    if P.shape[0] != P.shape[1]:
        raise ShapeMismatchError(f"expected a square matrix field, got {P.shape}")
    err = orthogonality_defect(P)
    if err > tol:
        raise NotOrthogonalError(f"field is not pointwise orthogonal: max |P^T P - I| = {err:.3e}")


def op_Q_gauge(eta: Field, P0: Field, dealias: bool = False) -> Field:
    """D4(eta P0^T) P0 + eta P0^T D4(P0) - D4(eta), with P0^{-1} = P0^T."""
    check_orthogonal(P0)
    Pt = P0.T
    eta_pt = product(eta, Pt, dealias)
    return (
        product(D4(eta_pt), P0, dealias)
        + product(eta_pt, D4(P0), dealias)
        - D4(eta)
    )


# norms by name

def _hm(f: Field) -> float:
    return fs.sobolev_norm(f, -0.5)


NORMS = {
    "L1": lambda f: fs.lp_norm(f, 1.0),
    "L2": lambda f: fs.lp_norm(f, 2.0),
    "Linf": lambda f: fs.lp_norm(f, np.inf),
    "L21": lambda f: fs.lorentz_norms(f)[0],
    "L2inf": lambda f: fs.lorentz_norms(f)[1],
    "H1/2": lambda f: fs.sobolev_norm(f, 0.5),
    "H-1/2": _hm,
    "Hardy": fs.hardy_h1_norm,
    "BMO": fs.bmo_norm,
    "B0inf": fs.besov_b0_inf_inf_norm,
    "D4-L2inf": lambda f: fs.lorentz_norms(D4(f))[1],
}

OPERATORS = {
    "N": op_N,
    "T": op_T,
    "S": op_S,
    "R": op_R,
    "Stilde": op_Stilde,
    "F": op_F,
    "Fstar": op_Fstar,
}

# default norm triple (output, first input, second input) per operator
DEFAULT_NORMS = {
    "N": ("H-1/2", "H1/2", "L2inf"),
    "T": ("H-1/2", "H1/2", "BMO"),
    "S": ("H-1/2", "H1/2", "BMO"),
    "R": ("Hardy", "H1/2", "H1/2"),
    "Stilde": ("Hardy", "H1/2", "H1/2"),
    "F": ("H-1/2", "L2", "L2inf"),
    "Fstar": ("Hardy", "L2", "H1/2"),
}


def _naive_term(name: str, Q: Field, u: Field) -> Field:
    """The single uncompensated term whose growth the operator cancels."""
    if name == "N":
        return product(Q, D4(u))
    if name == "T":
        return product(Q, half_laplacian(u))
    if name == "S":
        return R(product(Q, spectral_derivative(u)))
    if name == "R":
        return half_laplacian(product(Q, u))
    if name == "Stilde":
        return spectral_derivative(product(Q, R(u)))
    if name == "F":
        return product(Q, u)
    return D4(product(Q, u))


def parse_norm_spec(spec) -> tuple[str, str, str]:
    """Accept a triple or a string ``"OUT:IN1,IN2"``."""
    if isinstance(spec, str):
        out, _, ins = spec.partition(":")
        parts = (out,) + tuple(ins.split(","))
    else:
        parts = tuple(spec)
    if len(parts) != 3:
        raise ValueError(f"norm spec needs an output and two input norms, got {spec!r}")
    for p in parts:
        if p not in NORMS:
            raise ValueError(f"unknown norm {p!r}; choose from {sorted(NORMS)}")
    return parts


@dataclass
class EnsembleConfig:
    seed: int = 7
    n: int = 256
    length: float = 2.0 * np.pi
    band: int = 16
    amplitude: float = 1.0
    count: int = 20
    m: int = 1
    sweep: tuple = (4, 8, 16, 32, 64, 128)
    sweep_n: int = 512


@dataclass
class OperatorReport:
    operator_name: str
    norm_spec: list
    ensemble_size: int
    degenerate_count: int
    ratio_stats: dict
    ratios: list
    frequency_sweep: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


DEGENERATE = 1e-14


def frequency_sweep(op_name: str, norms, ks, n: int = 512) -> list[dict]:
    """Q = cos(x), u = cos(kx): compensated and naive ratios for each k."""
    out_norm, q_norm, u_norm = (NORMS[p] for p in norms)
    op = OPERATORS[op_name]
    grid = Grid1D(n)
    x = grid.points
    Q = scalar_field(grid, np.cos(x))
    rows = []
    for k in ks:
        u = scalar_field(grid, np.cos(k * x))
        denom = q_norm(Q) * u_norm(u)
        rows.append({
            "k": int(k),
            "compensated": out_norm(op(Q, u)) / denom,
            "naive": out_norm(_naive_term(op_name, Q, u)) / denom,
        })
    return rows


def estimate_constant(op_name: str, norm_spec=None, config: EnsembleConfig | None = None) -> OperatorReport:
    """Seeded ensemble of norm ratios ||op(Q,u)|| / (||Q|| ||u||).

    Entries whose denominator falls below 1e-14 are counted as degenerate and
    left out of the statistics.
    """
    if op_name not in OPERATORS:
        raise ValueError(f"unknown operator {op_name!r}; choose from {sorted(OPERATORS)}")
    config = config or EnsembleConfig()
    norms = parse_norm_spec(norm_spec) if norm_spec is not None else DEFAULT_NORMS[op_name]
    out_norm, q_norm, u_norm = (NORMS[p] for p in norms)
    op = OPERATORS[op_name]
    grid = Grid1D(config.n, config.length)
    rng = np.random.default_rng(config.seed)
    m = config.m
    q_shape = (1, 1) if m == 1 else (m, m)
    u_shape = (1, 1) if m == 1 else (m, 1)
    ratios, degenerate = [], 0
    for _ in range(config.count):
        Q = band_limited_field(grid, q_shape, config.band, rng, config.amplitude)
        u = band_limited_field(grid, u_shape, config.band, rng, config.amplitude)
        denom = q_norm(Q) * u_norm(u)
        if denom < DEGENERATE:
            degenerate += 1
            continue
        ratios.append(out_norm(op(Q, u)) / denom)
    if ratios:
        arr = np.array(ratios)
        stats = {"min": float(arr.min()), "median": float(np.median(arr)), "max": float(arr.max())}
    else:
        stats = {"min": None, "median": None, "max": None}
    sweep = frequency_sweep(op_name, norms, config.sweep, config.sweep_n) if config.sweep else []
    return OperatorReport(
        operator_name=op_name,
        norm_spec=list(norms),
        ensemble_size=config.count,
        degenerate_count=degenerate,
        ratio_stats=stats,
        ratios=[float(r) for r in ratios],
        frequency_sweep=sweep,
    )


def duality_gaps(Q: Field, v: Field, h: Field, form: str = "compensated") -> dict:
    """Differences between paired operators, for mean-free v and h.

    <N(Q,v),h> = <v, D4^{-1} R(Q^T,h)>, <T(Q,v),h> = <v, R(Q^T,h)>,
    <S(Q,v),h> = <v, Stilde(Q^T,h)>.
    """
    dx = Q.grid.spacing

    def pair(a: Field, b: Field) -> float:
        return float(np.sum(a.data * b.data) * dx)

    Qt = Q.T
    rq = op_R(Qt, h)
    return {
        "N-R": pair(op_N(Q, v), h) - pair(v, inverse_quarter_laplacian(rq)),
        "T-R": pair(op_T(Q, v), h) - pair(v, rq),
        "S-Stilde": pair(op_S(Q, v, form=form), h) - pair(v, op_Stilde(Qt, h, form=form)),
    }
