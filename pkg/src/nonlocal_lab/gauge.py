"""Gauge construction: find P in SO(m) with Asymm(P^T D4 P) = Omega.

The solver never touches P directly. It works in the so(m) chart,
P <- P exp(eta), and follows a homotopy s*Omega, s: 0 -> 1, with Newton steps
whose linear systems are solved by a preconditioned fixed point (falling back to
GMRES). Products here are plain pointwise products, so the discrete equations
and their linearization agree exactly.

On the torus the leading operator 2*D4 annihilates constants, so the iterate
eta is kept mean-free and the mean of each defect is reported separately.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from . import function_spaces as fs
from .compensation import check_orthogonal, op_Q_gauge, orthogonality_defect
from .spectral_core import (
    Field,
    Grid1D,
    ShapeMismatchError,
    band_limited_field,
    identity_field,
    inverse_quarter_laplacian,
    quarter_laplacian,
    remove_mean,
)

D4 = quarter_laplacian


class NotAntisymmetricError(ValueError):
    """Raised when a field expected in so(m) is not antisymmetric."""


class LinearSolveError(RuntimeError):
    """The linearized gauge equation could not be solved to tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


def mm(a: Field, b: Field) -> Field:
    """Pointwise matrix product without de-aliasing."""
    return Field(a.grid, np.einsum("nik,nkj->nij", a.data, b.data))


def l2(f: Field) -> float:
    return fs.lp_norm(f, 2.0)


def symm_asymm_split(A: Field) -> tuple[Field, Field]:
    rows, cols = A.shape
    if rows != cols:
        raise ShapeMismatchError(f"expected a square matrix field, got {A.shape}")
    return (A + A.T) * 0.5, (A - A.T) * 0.5


def check_antisymmetric(eta: Field, tol: float = 1e-12):
    rows, cols = eta.shape
    if rows != cols:
        raise ShapeMismatchError(f"expected a square matrix field, got {eta.shape}")
    scale = max(1.0, float(np.abs(eta.data).max()))
    err = float(np.abs(eta.data + np.swapaxes(eta.data, 1, 2)).max())
    if err > tol * scale:
        raise NotAntisymmetricError(f"field is not pointwise antisymmetric: max |A + A^T| = {err:.3e}")


def connection(P: Field) -> Field:
    """P^T D4 P."""
    return mm(P.T, D4(P))


def gauge_residual(P: Field, omega: Field) -> Field:
    """P^T D4 P - D4(P^T) P - 2 Omega."""
    check_orthogonal(P)
    return connection(P) - mm(D4(P.T), P) - 2.0 * omega


def exp_so(eta: Field, m: int | None = None) -> Field:
    """Pointwise exponential of an so(m)-valued field."""
    check_antisymmetric(eta)
    m = eta.shape[0] if m is None else m
    if eta.shape != (m, m):
        raise ShapeMismatchError(f"expected shape ({m}, {m}), got {eta.shape}")
    d = eta.data
    n = d.shape[0]
    if m == 1:
        return Field(eta.grid, np.ones((n, 1, 1)))
    if m == 2:
        theta = d[:, 1, 0]
        c, s = np.cos(theta), np.sin(theta)
        out = np.empty((n, 2, 2))
        out[:, 0, 0], out[:, 0, 1], out[:, 1, 0], out[:, 1, 1] = c, -s, s, c
        return Field(eta.grid, out)
    if m == 3:
        w = np.stack([d[:, 2, 1], d[:, 0, 2], d[:, 1, 0]], axis=1)
        theta = np.linalg.norm(w, axis=1)
        small = theta < 1e-6
        t2 = theta**2
        # sin(t)/t and (1 - cos t)/t^2 with series near zero
        a = np.where(small, 1 - t2 / 6 + t2**2 / 120, np.sin(theta) / np.where(small, 1, theta))
        b = np.where(small, 0.5 - t2 / 24 + t2**2 / 720, (1 - np.cos(theta)) / np.where(small, 1, t2))
        K = d
        K2 = np.einsum("nik,nkj->nij", K, K)
        out = np.eye(3) + a[:, None, None] * K + b[:, None, None] * K2
        return Field(eta.grid, out)
    return Field(eta.grid, scipy.linalg.expm(d))


# the linearized operator

def linearized_operator(P0: Field, eta: Field) -> Field:
    """L(eta) = -eta P0^T D4 P0 + D4(eta P0^T) P0 + P0^T D4(P0 eta) - D4(P0^T) P0 eta."""
    Pt = P0.T
    return (
        -mm(eta, connection(P0))
        + mm(D4(mm(eta, Pt)), P0)
        + mm(Pt, D4(mm(P0, eta)))
        - mm(mm(D4(Pt), P0), eta)
    )


def lower_order_part(P0: Field, eta: Field) -> Field:
    """H(eta) = -2 eta P0^T D4 P0 - 2 D4(P0^T) P0 eta + Q - Q^T, so L = 2 D4 + H."""
    Q = op_Q_gauge(eta, P0)
    return (
        -2.0 * mm(eta, connection(P0))
        - 2.0 * mm(mm(D4(P0.T), P0), eta)
        + Q
        - Q.T
    )


@dataclass
class LinearSolveInfo:
    method: str
    iterations: int
    residual: float
    mean_residual: float


def solve_linearized(P0: Field, omega: Field, tol: float = 1e-9, max_iter: int = 200,
                     return_info: bool = False):
    """Solve L^{P0}(eta) = omega for mean-free antisymmetric eta.

    First runs eta <- (1/2) D4^{-1}(omega - H(eta)); if that stalls, GMRES on
    the right-preconditioned system takes over from the last iterate. The
    mean of omega cannot be reached by the leading operator, so convergence is
    judged on the mean-free part and the mean residual is returned in the info.
    """
    check_antisymmetric(omega)
    check_orthogonal(P0)
    target = remove_mean(omega)
    scale = max(1.0, l2(target))

    def half_inverse(f: Field) -> Field:
        return inverse_quarter_laplacian(f) * 0.5

    def defect(eta: Field) -> Field:
        return target - remove_mean(linearized_operator(P0, eta))

    eta = half_inverse(target)
    res = l2(defect(eta))
    method, its = "fixed-point", 0
    prev = np.inf
    while res > tol * scale and its < max_iter:
        if res > 0.5 * prev:
            break
        prev = res
        eta = half_inverse(target - lower_order_part(P0, eta))
        eta = (eta - eta.T) * 0.5
        res = l2(defect(eta))
        its += 1

    if res > tol * scale:
        method = "gmres"
        eta, res, gm_its = _gmres_solve(P0, target, eta, tol * scale, max_iter)
        its += gm_its

    if res > tol * scale:
        raise LinearSolveError("linearized gauge equation did not converge", res)
    full = omega - linearized_operator(P0, eta)
    info = LinearSolveInfo(method, its, res, float(np.abs(full.mean()).max()))
    return (eta, info) if return_info else eta


def _gmres_solve(P0: Field, target: Field, eta0: Field, atol: float, max_iter: int):
    grid = P0.grid
    m = P0.shape[0]
    iu = np.triu_indices(m, 1)
    n = grid.n

    def pack(f: Field) -> np.ndarray:
        return f.data[:, iu[0], iu[1]].ravel()

    def unpack(vec: np.ndarray) -> Field:
        d = np.zeros((n, m, m))
        d[:, iu[0], iu[1]] = vec.reshape(n, -1)
        return Field(grid, d - np.swapaxes(d, 1, 2))

    def precond(y: Field) -> Field:
        return inverse_quarter_laplacian(y) * 0.5

    def matvec(vec):
        y = unpack(vec)
        out = remove_mean(linearized_operator(P0, precond(y))) + (y - remove_mean(y))
        return pack(out)

    size = n * len(iu[0])
    op = spla.LinearOperator((size, size), matvec=matvec, dtype=float)
    # initial guess: y0 with precond(y0) = eta0
    y0 = pack(remove_mean(D4(eta0)) * 2.0)
    b = pack(target)
    count = [0]

    def cb(_):
        count[0] += 1

    sol, _ = spla.gmres(op, b, x0=y0, rtol=0.0, atol=atol * np.sqrt(1.0 / grid.spacing) * 0.1,
                        restart=min(size, 100), maxiter=max_iter, callback=cb,
                        callback_type="pr_norm")
    eta = precond(unpack(sol))
    res = l2(target - remove_mean(linearized_operator(P0, eta)))
    return eta, res, count[0]


# problems and the continuation solver

@dataclass
class GaugeProblem:
    omega: Field

    def __post_init__(self):
        check_antisymmetric(self.omega)
        self.omega = (self.omega - self.omega.T) * 0.5

    @property
    def m(self) -> int:
        return self.omega.shape[0]

    @property
    def smallness(self) -> float:
        return l2(self.omega)

    @property
    def mean_norm(self) -> float:
        return float(np.linalg.norm(self.omega.mean()))


def random_gauge_problem(grid: Grid1D, m: int, norm: float, seed: int, band: int = 8) -> GaugeProblem:
    """Seeded band-limited mean-free antisymmetric Omega with ||Omega||_{L^2} = norm."""
    rng = np.random.default_rng(seed)
    A = band_limited_field(grid, (m, m), band, rng)
    omega = (A - A.T) * 0.5
    omega = omega * (norm / l2(omega))
    return GaugeProblem(omega)


SO2_GENERATOR = np.array([[0.0, -1.0], [1.0, 0.0]])


def so2_field(theta: np.ndarray, grid: Grid1D) -> Field:
    """theta(x) * J as an so(2) field."""
    return Field(grid, np.asarray(theta)[:, None, None] * SO2_GENERATOR)


def forward_so2_problem(grid: Grid1D, theta: np.ndarray) -> GaugeProblem:
    """Omega read off from P = exp(J theta): Omega = J * Im(conj(z) D4 z), z = e^{i theta}."""
    P = exp_so(so2_field(theta, grid))
    _, asym = symm_asymm_split(connection(P))
    return GaugeProblem(asym)


@dataclass
class GaugeConfig:
    step: float = 0.25
    min_step: float = 1.0 / 64
    newton_tol: float = 1e-12
    newton_max_iter: int = 20
    linear_tol: float = 1e-10
    linear_max_iter: int = 200
    epsilon_budget: float = 0.5


@dataclass
class GaugeResult:
    p: Field
    residual_history: list = field(default_factory=list)
    constant_c: float | None = None
    converged: bool = False
    homotopy_path: list = field(default_factory=list)
    final_residual: float = float("nan")
    mean_residual: float = float("nan")
    orthogonality: float = float("nan")
    message: str = ""


def equation_defect(P: Field, omega: Field) -> Field:
    """Omega - Asymm(P^T D4 P)."""
    _, asym = symm_asymm_split(connection(P))
    return omega - asym


def construct_gauge(problem: GaugeProblem, config: GaugeConfig | None = None) -> GaugeResult:
    """Continuation in s with Newton corrections P <- P exp(eta)."""
    config = config or GaugeConfig()
    omega = problem.omega
    grid = omega.grid
    m = problem.m
    P = identity_field(grid, m)
    result = GaugeResult(p=P)
    if problem.smallness > config.epsilon_budget * (1 + 1e-12):
        result.message = (
            f"||Omega||_L2 = {problem.smallness:.3e} exceeds the configured budget {config.epsilon_budget}"
        )
        return _finish(result, P, omega)
    scale = max(1.0, problem.smallness)

    s, step = 0.0, config.step
    result.homotopy_path.append(0.0)
    while s < 1.0:
        trial = min(1.0, s + step)
        ok, P_new, hist = _newton(P, omega * trial, config, scale)
        result.residual_history.extend(hist)
        if ok:
            P, s = P_new, trial
            result.homotopy_path.append(s)
            step = min(config.step, 2.0 * step)
        else:
            step *= 0.5
            if step < config.min_step:
                result.message = f"homotopy stalled at s = {s:.6f}"
                return _finish(result, P, omega)
    result.converged = True
    return _finish(result, P, omega)


def _newton(P: Field, target: Field, config: GaugeConfig, scale: float):
    hist = []
    for _ in range(config.newton_max_iter + 1):
        d = equation_defect(P, target)
        res = l2(remove_mean(d))
        hist.append(res)
        if res <= config.newton_tol * scale:
            return True, P, hist
        if len(hist) > 1 and res > hist[-2]:
            return False, P, hist
        try:
            eta = solve_linearized(P, 2.0 * d, tol=config.linear_tol, max_iter=config.linear_max_iter)
        except LinearSolveError:
            return False, P, hist
        P = mm(P, exp_so(eta))
    return False, P, hist


def _finish(result: GaugeResult, P: Field, omega: Field) -> GaugeResult:
    d = equation_defect(P, omega)
    result.p = P
    result.final_residual = l2(d)
    result.mean_residual = float(np.linalg.norm(d.mean()))
    result.orthogonality = orthogonality_defect(P)
    w = l2(omega)
    result.constant_c = fs.sobolev_norm(P, 0.5) ** 2 / w**2 if w > 1e-14 else None
    result.converged = result.converged and result.final_residual <= 1e-8 * max(1.0, w)
    return result


def verify_gauge_bounds(result: GaugeResult, problem: GaugeProblem, c_max: float = 10.0) -> dict:
    """Energy ratio ||D4 P||^2/||Omega||^2 and symm/Asymm ratios of P^T D4 P."""
    P = result.p
    w = problem.smallness
    symm, asym = symm_asymm_split(connection(P))
    a = l2(asym)
    h12 = fs.sobolev_norm(P, 0.5)
    right_symm, _ = symm_asymm_split(mm(D4(P), P.T))
    report = {
        "omega_l2": w,
        "energy_ratio": None,
        "symm_asymm_ratio": None,
        "symm_l21_over_h12_squared": None,
        "degenerate": w <= 1e-14,
        "c_max": c_max,
        "violation": False,
    }
    if w > 1e-14:
        report["energy_ratio"] = h12**2 / w**2
        report["violation"] = report["energy_ratio"] > c_max
    if a > 1e-14:
        report["symm_asymm_ratio"] = l2(symm) / a
    if h12 > 1e-14:
        report["symm_l21_over_h12_squared"] = fs.lorentz_norms(right_symm)[0] / h12**2
    return report
