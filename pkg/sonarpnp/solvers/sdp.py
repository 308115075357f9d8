"""
The Lagrangian dual of the rotation QCQP as a small SDP.

    maximize  gamma
    s.t.      Z = Q + sum_j lambda_j A_j - gamma A_h  is PSD

where A_h is the homogenization constraint h^2 = 1 and the other 21
constraints have zero right-hand side. For every feasible r~,
r~^T Z r~ = r~^T Q r~ - gamma, so gamma never exceeds the primal cost
and a zero gap certifies the recovered rotation.

cvxpy is the only place a conic solver is touched; any solver cvxpy
can drive may be named in the solver config section.
"""
import dataclasses
import typing as t

import cvxpy as cp
import numpy as np
from loguru import logger

from sonarpnp import config
from sonarpnp.errors import DegenerateConfiguration, SolverFailure
from sonarpnp.solvers.ptl import QcqpProblem
from sonarpnp.type_aliases import FloatArray

ACCEPTED_STATUSES = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)

#: Tolerance keyword names understood by each backend.
_TOLERANCE_OPTIONS: dict[str, t.Callable[[float, float], dict]] = {
    "CLARABEL": lambda feasibility, duality: {
        "tol_feas": feasibility,
        "tol_gap_abs": duality,
        "tol_gap_rel": duality,
    },
    "SCS": lambda feasibility, duality: {
        "eps_abs": feasibility,
        "eps_rel": duality,
    },
    "MOSEK": lambda feasibility, duality: {
        "eps": min(feasibility, duality),
    },
}


@dataclasses.dataclass(slots=True, frozen=True, eq=False)
class DualSolution:
    """
    The dual optimum and everything read off its certificate matrix.

    z, eigenvalues and dual_value are in the units of the original cost;
    eigenvectors holds all 10 eigenvectors of z as columns, ascending.
    """

    multipliers: FloatArray
    dual_value: float
    z: FloatArray
    eigenvalues: FloatArray
    eigenvectors: FloatArray
    kernel_dim: int
    status: str
    backend: str
    duality_gap: t.Optional[float] = None
    empty_kernel: bool = False

    @property
    def gamma(self) -> float:
        """Return the dual optimum d*."""
        return self.dual_value

    @property
    def kernel_basis(self) -> FloatArray:
        """Return the kernel vectors as rows, kernel_dim of them."""
        return self.eigenvectors[:, : self.kernel_dim].T

    @property
    def kernel_pair(self) -> tuple[FloatArray, FloatArray]:
        """Return the eigenvectors of the two smallest eigenvalues."""
        return self.eigenvectors[:, 0], self.eigenvectors[:, 1]

    def with_gap(self, primal_cost: float) -> "DualSolution":
        """Return a copy holding primal_cost - d* as its duality gap."""
        return dataclasses.replace(
            self, duality_gap=primal_cost - self.dual_value
        )

    def relative_gap(self) -> t.Optional[float]:
        """Return gap / (1 + |d*|), None before the gap is known."""
        if self.duality_gap is None:
            return None
        return self.duality_gap / (1 + abs(self.dual_value))


def _solve_with(
    backend: str, problem: cp.Problem, feasibility: float, duality: float
) -> str:
    options = _TOLERANCE_OPTIONS.get(backend, lambda *_: {})(
        feasibility, duality
    )
    try:
        problem.solve(solver=backend, **options)
    except cp.error.SolverError as e:
        logger.debug(f"{backend} raised: {e}")
        return "solver_error"
    return problem.status


def numerical_kernel_dim(eigenvalues: FloatArray, rank_tol: float) -> int:
    """Count eigenvalues at or below rank_tol * max(1, largest)."""
    threshold = rank_tol * max(1.0, float(eigenvalues[-1]))
    return int(np.count_nonzero(eigenvalues <= threshold))


def certificate_kernel(
    eigenvalues: FloatArray, rank_tol: float
) -> tuple[int, bool]:
    """
    Return the kernel dimension to recover from and whether it was empty.

    A certificate without a numerical kernel means the relaxation is
    not tight. Recovery then falls back to the smallest eigenvector and
    the second value comes back True so the caller can withhold the
    certificate. More than two kernel vectors leave the rotation
    undetermined.
    """
    kernel_dim = numerical_kernel_dim(eigenvalues, rank_tol)
    if kernel_dim > 2:
        raise DegenerateConfiguration(
            f"Certificate kernel has dimension {kernel_dim}; the data do "
            "not determine the rotation."
        )
    if kernel_dim == 0:
        logger.warning(
            "Certificate has no numerical kernel at rank_tol "
            f"{rank_tol:g}; recovering from its smallest eigenvector."
        )
        return 1, True
    logger.debug(f"Certificate kernel dimension {kernel_dim}.")
    return kernel_dim, False



def solve_dual_sdp(
    q: QcqpProblem,
    *,
    rank_tol: t.Optional[float] = None,
    backend: t.Optional[str] = None,
    fallback_backend: t.Optional[str] = None,
) -> DualSolution:
    """
    Solve the dual SDP and inspect the kernel of its certificate.

    The cost is divided by its largest eigenvalue before solving and
    the results are scaled back, so the outcome is invariant to scaling
    Q. The kernel is measured on the normalized certificate.
    """
    rank_tol = config.positive(
        "rank_tol", config.Solver.rank_tol if rank_tol is None else rank_tol
    )
    backend = (backend or config.Solver.backend).upper()
    fallback_backend = (
        fallback_backend or config.Solver.fallback_backend
    ).upper()

    scale = float(np.linalg.eigvalsh(q.cost)[-1])
    if scale <= 0:
        scale = 1.0
    normalized_cost = q.cost / scale

    free_constraints = q.constraints[:-1]
    homogenization = q.constraints[-1]
    multipliers = cp.Variable(len(free_constraints))
    gamma = cp.Variable()
    z = cp.Variable(normalized_cost.shape, symmetric=True)
    certificate = normalized_cost - gamma * homogenization
    for j, matrix in enumerate(free_constraints):
        certificate = certificate + multipliers[j] * matrix
    problem = cp.Problem(cp.Maximize(gamma), [z == certificate, z >> 0])

    status = "not_run"
    used_backend = backend
    for used_backend in dict.fromkeys((backend, fallback_backend)):
        if used_backend not in cp.installed_solvers():
            logger.debug(f"SDP backend {used_backend} is not installed.")
            continue
        status = _solve_with(
            used_backend,
            problem,
            config.Solver.feasibility_tol,
            config.Solver.duality_tol,
        )
        if status in ACCEPTED_STATUSES:
            break
        logger.warning(f"SDP backend {used_backend} returned {status}.")
    else:
        raise SolverFailure(status)

    if status == cp.OPTIMAL_INACCURATE:
        logger.warning(f"{used_backend} reported an inaccurate optimum.")

    z_value = np.asarray(z.value, dtype=np.float64)
    z_value = 0.5 * (z_value + z_value.T)
    eigenvalues, eigenvectors = np.linalg.eigh(z_value)
    logger.debug(
        f"Certificate eigenvalues {np.array2string(eigenvalues, precision=3)}"
    )
    kernel_dim, empty_kernel = certificate_kernel(eigenvalues, rank_tol)

    return DualSolution(
        multipliers=np.append(multipliers.value, gamma.value) * scale,
        dual_value=float(gamma.value) * scale,
        z=z_value * scale,
        eigenvalues=eigenvalues * scale,
        eigenvectors=eigenvectors,
        kernel_dim=kernel_dim,
        empty_kernel=empty_kernel,
        status=status,
        backend=used_backend,
    )
