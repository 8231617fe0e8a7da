"""Half-harmonic maps into spheres: energy, Euler-Lagrange residuals, flow,
projection fields, the omega matrices and the antisymmetric-potential system.

Maps are ``(m, 1)`` vector fields with |u(x)| = 1. Tangent and normal
projections are formed pointwise; all other products are de-aliased.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import function_spaces as fs
from .compensation import op_F, op_S, op_T
from .spectral_core import (
    Field,
    Grid1D,
    half_laplacian,
    identity_field,
    product,
    quarter_laplacian,
    riesz_transform,
    vector_field,
)

D4 = quarter_laplacian
R = riesz_transform


class OffManifoldError(ValueError):
    """Raised when a map leaves the target beyond tolerance."""


class SphereTarget:
    """Unit sphere S^{m-1} in R^m with closed-form projections."""

    def __init__(self, m: int):
        if m < 2:
            raise ValueError("the sphere target needs ambient dimension m >= 2")
        self.m = m

    def project(self, z: np.ndarray) -> np.ndarray:
        """Nearest point on the sphere, rows of z are points."""
        return z / np.linalg.norm(z, axis=-1, keepdims=True)

    def normal_projector(self, z: np.ndarray) -> np.ndarray:
        z = z / np.linalg.norm(z, axis=-1, keepdims=True)
        return z[..., :, None] * z[..., None, :]

    def tangent_projector(self, z: np.ndarray) -> np.ndarray:
        return np.eye(self.m) - self.normal_projector(z)

    def distance(self, z: np.ndarray) -> np.ndarray:
        return np.abs(np.linalg.norm(z, axis=-1) - 1.0)


def _points(u: Field) -> np.ndarray:
    return u.data[:, :, 0]


def target_of(u: Field) -> SphereTarget:
    return SphereTarget(u.shape[0])


def check_on_sphere(u: Field, tol: float = 1e-8):
    if u.shape[1] != 1:
        raise ValueError(f"maps must be vector fields, got shape {u.shape}")
    err = float(target_of(u).distance(_points(u)).max())
    if err > tol:
        raise OffManifoldError(f"map leaves the sphere: max ||u| - 1| = {err:.3e}")


def project_to_sphere(u: Field) -> Field:
    return Field(u.grid, target_of(u).project(_points(u))[:, :, None])


def winding_map(grid: Grid1D, k: int, m: int = 2) -> Field:
    """(cos kx, sin kx, 0, ...) with the period taken as the grid length."""
    x = 2 * np.pi * grid.points / grid.length
    comps = [np.cos(k * x), np.sin(k * x)] + [np.zeros(grid.n)] * (m - 2)
    return vector_field(grid, *comps)


def mobius_map(grid: Grid1D, a: complex, m: int = 2) -> Field:
    """Boundary values of the disc automorphism z -> (z - a)/(1 - conj(a) z)."""
    x = 2 * np.pi * grid.points / grid.length
    z = np.exp(1j * x)
    b = (z - a) / (1 - np.conj(a) * z)
    comps = [b.real, b.imag] + [np.zeros(grid.n)] * (m - 2)
    return vector_field(grid, *comps)


def perturbed_map(base: Field, amplitude: float, seed: int, band: int = 4) -> Field:
    """Project base + seeded band-limited perturbation back to the sphere."""
    from .spectral_core import band_limited_field

    rng = np.random.default_rng(seed)
    bump = band_limited_field(base.grid, base.shape, band, rng, mean_free=False)
    bump = bump * (amplitude / max(1e-300, float(np.abs(bump.data).max())))
    return project_to_sphere(base + bump)


def energy(u: Field) -> float:
    """Integral of |D4 u|^2."""
    check_on_sphere(u)
    return fs.lp_norm(D4(u), 2.0) ** 2


def projection_fields(u: Field) -> tuple[Field, Field]:
    check_on_sphere(u)
    t = target_of(u)
    pts = _points(u)
    return Field(u.grid, t.tangent_projector(pts)), Field(u.grid, t.normal_projector(pts))


def el_residual(u: Field) -> Field:
    """P^T(u(x)) applied pointwise to D2 u."""
    PT, _ = projection_fields(u)
    return product(PT, half_laplacian(u), dealias=False)


def wedge_residual(u: Field) -> Field:
    """Components u_i (D2 u)_j - u_j (D2 u)_i for i < j."""
    check_on_sphere(u)
    a = _points(u)
    b = _points(half_laplacian(u))
    i, j = np.triu_indices(u.shape[0], 1)
    return Field(u.grid, (a[:, i] * b[:, j] - a[:, j] * b[:, i])[:, :, None])


# gradient flow

@dataclass
class FlowConfig:
    tau: float | None = None  # default: 1 / max |xi|
    tau_min: float = 1e-12
    max_iter: int = 10_000
    tol: float = 1e-6
    grow: float = 1.25


@dataclass
class FlowTrace:
    energies: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    u: Field | None = None
    converged: bool = False
    accepted: int = 0
    message: str = ""

    def summary(self) -> dict:
        return {
            "iterations": len(self.steps),
            "accepted": self.accepted,
            "converged": self.converged,
            "initial_energy": self.energies[0] if self.energies else None,
            "final_energy": self.energies[-1] if self.energies else None,
            "final_residual": self.residuals[-1] if self.residuals else None,
            "message": self.message,
        }


def flow_step(u: Field, tau: float, tau_min: float = 1e-12, e0: float | None = None):
    """One projected step u' = Pi(u - tau D2 u), halving tau until energy drops.

    Returns (u', accepted, tau_used). When no step size above ``tau_min``
    lowers the energy the input is returned unchanged with accepted=False.
    """
    e0 = energy(u) if e0 is None else e0
    d2 = half_laplacian(u)
    while tau >= tau_min:
        trial = project_to_sphere(u - d2 * tau)
        if energy(trial) < e0:
            return trial, True, tau
        tau *= 0.5
    return u, False, tau


def run_flow(u0: Field, config: FlowConfig | None = None) -> FlowTrace:
    config = config or FlowConfig()
    u = project_to_sphere(u0)
    tau_max = config.tau or 1.0 / u.grid.half_frequencies[-1]
    tau = tau_max
    trace = FlowTrace()
    e = energy(u)
    res = fs.lp_norm(el_residual(u), 2.0)
    trace.energies.append(e)
    trace.residuals.append(res)
    for _ in range(config.max_iter):
        if res <= config.tol:
            trace.converged = True
            break
        u_new, ok, tau_used = flow_step(u, tau, config.tau_min, e0=e)
        trace.steps.append(tau_used)
        if not ok:
            trace.message = "step size underflow"
            break
        trace.accepted += 1
        u = u_new
        e = energy(u)
        res = fs.lp_norm(el_residual(u), 2.0)
        trace.energies.append(e)
        trace.residuals.append(res)
        tau = min(tau_max, tau_used * config.grow)
    else:
        trace.converged = res <= config.tol
        if not trace.converged:
            trace.message = "iteration budget exhausted"
    trace.u = u
    return trace


# omega matrices and the antisymmetric-potential system

OMEGA3_FORMS = ("single", "double")
SYSTEM_FORMS = ("algebraic", "alternate")


@dataclass
class OmegaMatrices:
    omega: Field
    omega_r: Field
    omega1: Field
    omega2: Field
    omega3: Field
    omega4: Field

    def as_dict(self) -> dict:
        return {
            "omega": self.omega, "omega_R": self.omega_r, "omega1": self.omega1,
            "omega2": self.omega2, "omega3": self.omega3, "omega4": self.omega4,
        }


def omega_matrices(u: Field, omega3: str = "single") -> OmegaMatrices:
    """The six matrices built from P^T, P^N and the multipliers D4, R D4.

    ``omega3="single"`` uses P^T (R D4 P^T) as middle term of omega3, in line
    with omega1, omega2 and omega4; ``"double"`` applies D4 once more there,
    P^T D4(R D4 P^T).
    """
    if omega3 not in OMEGA3_FORMS:
        raise ValueError(f"unknown omega3 form {omega3!r}; choose from {OMEGA3_FORMS}")
    PT, PN = projection_fields(u)
    d_pt = D4(PT)
    r_pt = R(d_pt)
    P = product
    om = (P(d_pt, PT) - P(PT, d_pt)) * 0.5
    om_r = (P(r_pt, PT) - P(PT, r_pt)) * 0.5
    om1 = (P(d_pt, PT) + P(PT, d_pt) - D4(P(PT, PT))) * 0.5
    om2 = (P(d_pt, PN) + P(PT, D4(PN)) - D4(P(PT, PN))) * 0.5
    middle = P(PT, r_pt) if omega3 == "single" else P(PT, D4(r_pt))
    om3 = (P(r_pt, PT) + middle - R(D4(P(PT, PT)))) * 0.5
    om4 = (P(r_pt, PN) + P(PN, r_pt) - R(D4(P(PN, PT)))) * 0.5
    return OmegaMatrices(om, om_r, om1, om2, om3, om4)


def _block(a: Field, b: Field, c: Field, d: Field) -> Field:
    return Field(a.grid, np.block([[a.data, b.data], [c.data, d.data]]))


def _stack(a: Field, b: Field) -> Field:
    return Field(a.grid, np.concatenate([a.data, b.data], axis=1))


@dataclass
class SystemAssembly:
    v: Field
    omega: Field
    omega_tilde2: Field
    omega_tilde1: Field
    residual: Field
    omega3_form: str
    coefficients: str

    def relative_residual(self) -> float:
        return relative_l2(self.residual, D4(self.v), self.omega_tilde1,
                           product(self.omega_tilde2, self.v), product(self.omega, self.v))

    def antisymmetry_defect(self) -> float:
        return float(np.abs((self.omega + self.omega.T).data).max())


def assemble_system(u: Field, omega3: str = "single", coefficients: str = "algebraic") -> SystemAssembly:
    """v = (P^T D4 u, R(P^N D4 u)) and D4 v = Omega~1 + Omega~2 v + Omega v.

    The potential Omega = 2 [[-w, w_R], [w_R, -R w_R]] is common to both
    coefficient sets. ``coefficients="algebraic"`` follows from expanding
    D4 v with F(Q, v) = R(Q)R(v) - Qv:

        Omega~1 = (T(P^T,u) - 2F(w1 + w, P^N D4 u),
                   R S(P^N,u) - F(R D4 P^N, D4 u) + 2F(w3 + w_R, P^N D4 u))
        Omega~2 = 2 [[-w1, R w1 + R w - w_R], [w3, -R w3]]

    ``"alternate"`` uses the other sign and factor convention,

        Omega~1 = (T(P^T,u) - 2F(w1 + w2 - w, P^N D4 u),
                   R S(P^N,u) - 2F(R D4 P^N, R D4 u) - 2F(w_R - w3 - w4, P^N D4 u))
        Omega~2 = 2 [[-w1, -(R(w1 + w2) + R w - w_R)], [w3, -R(w3 - w4)]]

    which does not close on critical maps.
    """
    if coefficients not in SYSTEM_FORMS:
        raise ValueError(f"unknown coefficient set {coefficients!r}; choose from {SYSTEM_FORMS}")
    PT, PN = projection_fields(u)
    w = omega_matrices(u, omega3)
    du = D4(u)
    v_t = product(PT, du)
    w_n = product(PN, du)
    v_n = R(w_n)
    v = _stack(v_t, v_n)
    potential = _block(-w.omega, w.omega_r, w.omega_r, -R(w.omega_r)) * 2.0
    t_term = op_T(PT, u)
    rs_term = R(op_S(PN, u))
    if coefficients == "alternate":
        top = op_F(-w.omega + w.omega1 + w.omega2, w_n) * -2.0 + t_term
        bottom = (
            op_F(R(D4(PN)), R(du)) * -2.0
            - op_F(w.omega_r - w.omega3 - w.omega4, w_n) * 2.0
            + rs_term
        )
        a12 = -(R(w.omega1 + w.omega2) + (R(w.omega) - w.omega_r))
        a22 = -R(w.omega3 - w.omega4)
    else:
        top = t_term - op_F(w.omega1 + w.omega, w_n) * 2.0
        bottom = rs_term - op_F(R(D4(PN)), du) + op_F(w.omega3 + w.omega_r, w_n) * 2.0
        a12 = R(w.omega1) + R(w.omega) - w.omega_r
        a22 = -R(w.omega3)
    tilde2 = _block(-w.omega1, a12, w.omega3, a22) * 2.0
    tilde1 = _stack(top, bottom)
    residual = D4(v) - tilde1 - product(tilde2, v) - product(potential, v)
    return SystemAssembly(v, potential, tilde2, tilde1, residual, omega3, coefficients)


STRUCTURE_FORMS = ("plus", "minus")


def structure_identity_residual(u: Field, form: str = "plus") -> Field:
    """D4 R(P^N D4 u) - [R S(P^N,u) +/- (D4 P^N)(R D4 u)].

    ``plus`` adds the last term, which is what R^2 = -Id and P^N u' = 0 give
    for any map into the sphere; ``minus`` subtracts it.
    """
    if form not in STRUCTURE_FORMS:
        raise ValueError(f"unknown form {form!r}; choose from {STRUCTURE_FORMS}")
    _, PN = projection_fields(u)
    du = D4(u)
    lhs = D4(R(product(PN, du)))
    last = product(D4(PN), R(du))
    sign = 1.0 if form == "plus" else -1.0
    return lhs - R(op_S(PN, u)) - last * sign


def el_commutator_residual(u: Field) -> Field:
    """D4(P^T D4 u) - T(P^T,u) + (D4 P^T)(D4 u); equals P^T D2 u (de-aliased)."""
    PT, _ = projection_fields(u)
    du = D4(u)
    return D4(product(PT, du)) - op_T(PT, u) + product(D4(PT), du)


def relative_l2(residual: Field, *terms: Field) -> float:
    """||residual|| divided by the summed L2 norms of the terms it balances."""
    ref = sum(fs.lp_norm(t, 2.0) for t in terms)
    r = fs.lp_norm(residual, 2.0)
    return r / ref if ref > 0 else r


def structure_relative_residual(u: Field, form: str = "plus") -> float:
    _, PN = projection_fields(u)
    du = D4(u)
    return relative_l2(
        structure_identity_residual(u, form),
        D4(R(product(PN, du))), R(op_S(PN, u)), product(D4(PN), R(du)),
    )


def el_commutator_relative_residual(u: Field) -> float:
    PT, _ = projection_fields(u)
    du = D4(u)
    return relative_l2(
        el_commutator_residual(u),
        D4(product(PT, du)), op_T(PT, u), product(D4(PT), du),
    )


def system_constants(u: Field, omega3: str = "single", coefficients: str = "algebraic") -> dict:
    """Lorentz-type ratios of the system coefficients against ||P||_{H^{1/2}}^2."""
    PT, PN = projection_fields(u)
    h = fs.sobolev_norm(PT, 0.5) ** 2 + fs.sobolev_norm(PN, 0.5) ** 2
    sys = assemble_system(u, omega3, coefficients)
    w = omega_matrices(u, omega3)
    out = {"projector_h12_squared": h}
    if h <= 1e-10:
        out["degenerate"] = True
        return out
    out["degenerate"] = False
    out["omega_tilde2_l21_ratio"] = fs.lorentz_norms(sys.omega_tilde2)[0] / h
    for name in ("omega1", "omega2", "omega3", "omega4"):
        out[f"{name}_l21_ratio"] = fs.lorentz_norms(getattr(w, name))[0] / h
    return out


def system_variant_report(maps: dict, grids=(64, 128, 256), builders=None) -> dict:
    """Residual curves of all (omega3, coefficient) variants under refinement.

    ``maps`` sends a label to a function grid -> Field. A variant is selected
    when its relative residual falls below 1e-8 on the finest grid for every
    map and never increases along the refinement.
    """
    curves = {}
    for coeff in SYSTEM_FORMS:
        for w3 in OMEGA3_FORMS:
            key = f"{coeff}/{w3}"
            curves[key] = {}
            for label, build in maps.items():
                curves[key][label] = [
                    assemble_system(build(Grid1D(n)), w3, coeff).relative_residual() for n in grids
                ]

    def closes(per_map):
        return all(
            c[-1] <= 1e-8 and all(b <= a * (1 + 1e-6) + 1e-13 for a, b in zip(c, c[1:]))
            for c in per_map.values()
        )

    closing = [k for k, v in curves.items() if closes(v)]
    return {
        "grids": list(grids),
        "curves": curves,
        "closing_variants": closing,
        "selected": closing[0] if closing else None,
        "omega3_selected": closing[0].split("/")[1] if closing else None,
    }
