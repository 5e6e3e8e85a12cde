# Smooth constrained optimization: augmented Lagrangian over a box
import time
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from loguru import logger
from scipy import optimize, sparse
from scipy.sparse import linalg as splinalg

from idnp.constant import SOLVER_DEFAULT_MAX_ITER, SOLVER_DEFAULT_TOL
from idnp.models.config import InnerMethod, SolverOptions
from idnp.types.exceptions import ContractViolationError

__all__ = ("SolverStatus", "NlpProblem", "SolverResult", "solve")

Jacobian = np.ndarray | sparse.spmatrix

INNER_FTOL = 1e-15
INNER_MAXCOR = 20
ARMIJO = 1e-4
ACTIVE_EPS = 1e-3
MIN_STEP = 1e-12


class SolverStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITER_LIMIT = "IterLimit"
    NUMERIC_FAILURE = "NumericFailure"


@dataclass
class NlpProblem:
    """Boxed NLP: min f(x) s.t. h(x) = 0, g(x) <= 0, lower <= x <= upper.

    `objective` returns (value, gradient). Constraint callbacks return vectors,
    Jacobian callbacks dense or sparse matrices of shape (rows, num_vars).
    `objective_curvature` is an optional positive semidefinite curvature model
    of f that enables Gauss-Newton inner iterations.
    """

    num_vars: int
    lower: np.ndarray
    upper: np.ndarray
    objective: Callable[[np.ndarray], tuple[float, np.ndarray]]
    initial_point: np.ndarray
    eq_constraints: Optional[Callable[[np.ndarray], np.ndarray]] = None
    eq_jacobian: Optional[Callable[[np.ndarray], Jacobian]] = None
    ineq_constraints: Optional[Callable[[np.ndarray], np.ndarray]] = None
    ineq_jacobian: Optional[Callable[[np.ndarray], Jacobian]] = None
    objective_curvature: Optional[Callable[[np.ndarray], Jacobian]] = None
    name: str = "nlp"

    def __post_init__(self) -> None:
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.initial_point = np.asarray(self.initial_point, dtype=float)
        for arr, label in ((self.lower, "lower"), (self.upper, "upper")):
            if arr.shape != (self.num_vars,):
                raise ContractViolationError(f"{self.name}: {label} bounds have shape {arr.shape}")
        if self.initial_point.shape != (self.num_vars,):
            raise ContractViolationError(
                f"{self.name}: initial point has shape {self.initial_point.shape}"
            )
        if np.any(self.lower > self.upper):
            raise ContractViolationError(f"{self.name}: empty variable box")
        if np.any(self.initial_point < self.lower) or np.any(self.initial_point > self.upper):
            raise ContractViolationError(f"{self.name}: initial point outside the variable box")
        if (self.eq_constraints is None) != (self.eq_jacobian is None):
            raise ContractViolationError(f"{self.name}: equality rows need a Jacobian")
        if (self.ineq_constraints is None) != (self.ineq_jacobian is None):
            raise ContractViolationError(f"{self.name}: inequality rows need a Jacobian")

    def eq_values(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(0) if self.eq_constraints is None else np.asarray(self.eq_constraints(x))

    def ineq_values(self, x: np.ndarray) -> np.ndarray:
        if self.ineq_constraints is None:
            return np.zeros(0)
        return np.asarray(self.ineq_constraints(x))


@dataclass
class SolverResult:
    x: np.ndarray
    status: SolverStatus
    objective: float
    kkt_residual: float
    stationarity: float
    violation: float
    iterations: int
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == SolverStatus.OPTIMAL


class _NonFinite(Exception):
    def __init__(self, z: np.ndarray) -> None:
        self.z = z.copy()


class _Deadline(Exception):
    def __init__(self, z: np.ndarray) -> None:
        self.z = z.copy()


def _as_sparse(jac: Jacobian, rows: int, cols: int) -> sparse.csr_matrix:
    if sparse.issparse(jac):
        return sparse.csr_matrix(jac)
    return sparse.csr_matrix(np.asarray(jac, dtype=float).reshape(rows, cols))


class _Lagrangian:
    """Augmented Lagrangian of the slack reformulation over z = (x, s)."""

    def __init__(self, problem: NlpProblem, deadline: Optional[float]) -> None:
        self.p = problem
        self.n = problem.num_vars
        self.deadline = deadline
        x0 = problem.initial_point
        self.m_eq = problem.eq_values(x0).size
        self.m_in = problem.ineq_values(x0).size
        self.lam = np.zeros(self.m_eq + self.m_in)
        self.mu = 1.0

    def constraints(self, z: np.ndarray) -> tuple[np.ndarray, sparse.csr_matrix]:
        x, s = z[: self.n], z[self.n :]
        blocks, jacs = [], []
        if self.m_eq:
            blocks.append(self.p.eq_values(x))
            eq_jac = _as_sparse(self.p.eq_jacobian(x), self.m_eq, self.n)
            jacs.append(sparse.hstack([eq_jac, sparse.csr_matrix((self.m_eq, self.m_in))]))
        if self.m_in:
            blocks.append(self.p.ineq_values(x) + s)
            in_jac = _as_sparse(self.p.ineq_jacobian(x), self.m_in, self.n)
            jacs.append(sparse.hstack([in_jac, sparse.identity(self.m_in)]))
        if not blocks:
            return np.zeros(0), sparse.csr_matrix((0, z.size))
        return np.concatenate(blocks), sparse.vstack(jacs).tocsr()

    def objective(self, z: np.ndarray) -> tuple[float, np.ndarray]:
        f, grad = self.p.objective(z[: self.n])
        full = np.zeros(z.size)
        full[: self.n] = grad
        return float(f), full

    def check_deadline(self, z: np.ndarray) -> None:
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise _Deadline(z)

    def __call__(self, z: np.ndarray) -> tuple[float, np.ndarray]:
        self.check_deadline(z)
        f, grad = self.objective(z)
        c, jac = self.constraints(z)
        value = f
        if c.size:
            value += self.lam @ c + 0.5 * self.mu * (c @ c)
            grad = grad + jac.T @ (self.lam + self.mu * c)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise _NonFinite(z)
        return value, grad

    def curvature(self, z: np.ndarray) -> sparse.csr_matrix:
        """Gauss-Newton model: objective curvature plus mu J^T J."""
        self.check_deadline(z)
        h_f = _as_sparse(self.p.objective_curvature(z[: self.n]), self.n, self.n)
        h = sparse.block_diag([h_f, sparse.csr_matrix((self.m_in, self.m_in))], format="csr")
        _, jac = self.constraints(z)
        if jac.shape[0]:
            h = h + self.mu * (jac.T @ jac)
        return h.tocsr()


def _projected_gradient(z: np.ndarray, grad: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> float:
    if z.size == 0:
        return 0.0
    return float(np.max(np.abs(z - np.clip(z - grad, lb, ub))))


def _projected_newton(
    al: _Lagrangian, z: np.ndarray, lb: np.ndarray, ub: np.ndarray, gtol: float, max_iter: int
) -> np.ndarray:
    """Projected Gauss-Newton on the box with an Armijo search along the projection arc."""
    value, grad = al(z)
    for _ in range(max_iter):
        al.check_deadline(z)
        step = z - np.clip(z - grad, lb, ub)
        residual = float(np.max(np.abs(step), initial=0.0))
        if residual <= gtol:
            break

        eps = min(ACTIVE_EPS, residual)
        active = ((z <= lb + eps) & (grad > 0)) | ((z >= ub - eps) & (grad < 0))
        free = np.nonzero(~active)[0]
        direction = -grad.copy()
        if free.size:
            h_ff = al.curvature(z)[free][:, free]
            reg = 1e-9 * (1.0 + float(np.max(np.abs(h_ff.diagonal()), initial=0.0)))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                d_f = splinalg.spsolve(
                    (h_ff + reg * sparse.identity(free.size)).tocsc(), -grad[free]
                )
            d_f = np.atleast_1d(d_f)
            if np.all(np.isfinite(d_f)) and d_f @ grad[free] < 0:
                direction[free] = d_f

        alpha = 1.0
        while True:
            trial = np.clip(z + alpha * direction, lb, ub)
            t_value, t_grad = al(trial)
            if t_value <= value + ARMIJO * (grad @ (trial - z)):
                break
            alpha *= 0.5
            if alpha < MIN_STEP:
                return z
        moved = float(np.max(np.abs(trial - z), initial=0.0))
        z, value, grad = trial, t_value, t_grad
        if moved <= MIN_STEP * (1.0 + float(np.max(np.abs(z), initial=0.0))):
            break
    return z


def _lbfgsb(
    al: _Lagrangian, z: np.ndarray, lb: np.ndarray, ub: np.ndarray, gtol: float, max_iter: int
) -> np.ndarray:
    inner = optimize.minimize(
        al,
        z,
        jac=True,
        method="L-BFGS-B",
        bounds=optimize.Bounds(lb, ub),
        options={"maxiter": max_iter, "gtol": gtol, "ftol": INNER_FTOL, "maxcor": INNER_MAXCOR},
    )
    return inner.x


def solve(
    problem: NlpProblem,
    tol: float = SOLVER_DEFAULT_TOL,
    max_iter: int = SOLVER_DEFAULT_MAX_ITER,
    options: Optional[SolverOptions] = None,
) -> SolverResult:
    """Solve a boxed NLP with an augmented Lagrangian method.

    Inequalities become equalities with nonnegative slacks folded into the box.
    Each outer iteration minimizes the augmented Lagrangian over the box and
    then either updates the multipliers or raises the penalty.

    Args:
        problem: The problem to solve.
        tol: KKT tolerance on stationarity and primal feasibility.
        max_iter: Maximum number of outer iterations.
        options: Penalty schedule, infeasibility detection and deadline.

    Returns:
        SolverResult with status Optimal, Infeasible, IterLimit or NumericFailure.
    """
    options = options or SolverOptions()
    al = _Lagrangian(problem, options.deadline)
    n = problem.num_vars

    use_newton = options.inner_method == InnerMethod.NEWTON or (
        options.inner_method == InnerMethod.AUTO and problem.objective_curvature is not None
    )
    if use_newton and problem.objective_curvature is None:
        raise ContractViolationError(f"{problem.name}: Newton inner solves need a curvature model")
    inner_solve = _projected_newton if use_newton else _lbfgsb
    inner_max = options.newton_max_iter if use_newton else options.inner_max_iter

    x0 = np.clip(problem.initial_point, problem.lower, problem.upper)
    s0 = np.maximum(0.0, -problem.ineq_values(x0))
    z = np.concatenate((x0, s0))
    lb = np.concatenate((problem.lower, np.zeros(al.m_in)))
    ub = np.concatenate((problem.upper, np.full(al.m_in, np.inf)))

    al.mu = options.penalty_init
    omega = 1.0 / al.mu
    eta = 1.0 / al.mu**0.1
    best_violation = np.inf
    stall = 0
    stationarity = violation = np.inf

    def result(status: SolverStatus, iterations: int, message: str) -> SolverResult:
        x = z[:n]
        try:
            f = float(problem.objective(x)[0])
        except (ArithmeticError, ValueError):
            f = np.nan
        kkt = max(stationarity, violation)
        logger.debug(
            f"{problem.name}: {status.value} after {iterations} outer iterations, "
            f"kkt {kkt:.3e}, violation {violation:.3e}"
        )
        return SolverResult(
            x=x.copy(),
            status=status,
            objective=f,
            kkt_residual=float(kkt),
            stationarity=float(stationarity),
            violation=float(violation),
            iterations=iterations,
            multipliers=al.lam.copy(),
            message=message,
        )

    if options.deadline is not None and time.monotonic() >= options.deadline:
        return result(SolverStatus.ITER_LIMIT, 0, "deadline reached before the first iteration")

    for k in range(1, max_iter + 1):
        try:
            z = inner_solve(al, z, lb, ub, max(omega, 0.1 * tol), inner_max)
        except _Deadline as e:
            z = e.z
            return result(SolverStatus.ITER_LIMIT, k, "deadline reached")
        except _NonFinite as e:
            z = e.z
            return result(SolverStatus.NUMERIC_FAILURE, k, f"non-finite value at {e.z[:n]}")

        _, grad_f = al.objective(z)
        c, jac = al.constraints(z)
        if not np.all(np.isfinite(c)):
            return result(SolverStatus.NUMERIC_FAILURE, k, "non-finite constraint value")

        y = al.lam + al.mu * c
        grad = grad_f + jac.T @ y if c.size else grad_f
        stationarity = _projected_gradient(z, grad, lb, ub)
        violation = float(np.max(np.abs(c))) if c.size else 0.0

        if violation <= tol and stationarity <= tol:
            al.lam = y
            return result(SolverStatus.OPTIMAL, k, "converged")

        if violation < best_violation * (1.0 - 1e-3):
            best_violation = violation
            stall = 0
        else:
            stall += 1
        if violation > options.infeasible_violation and stall >= options.stall_limit:
            return result(SolverStatus.INFEASIBLE, k, "constraint violation stalled")

        if violation <= max(eta, tol):
            al.lam = y
            omega = max(omega / al.mu, 0.1 * tol)
            eta = max(eta / al.mu**0.9, 0.1 * tol)
        else:
            if al.mu >= options.penalty_cap:
                if violation > options.infeasible_violation:
                    return result(SolverStatus.INFEASIBLE, k, "penalty cap reached")
            else:
                al.mu = min(al.mu * options.penalty_growth, options.penalty_cap)
            omega = 1.0 / al.mu
            eta = 1.0 / al.mu**0.1

    return result(SolverStatus.ITER_LIMIT, max_iter, "outer iteration limit reached")
