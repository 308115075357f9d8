"""
Rotation recovery when the certificate has a two-dimensional kernel.

Coplanar world points leave the orthographic cost blind to a reflection
through the imaging plane, so the dual certificate has two null vectors
v1, v2 and the solution is r~ = a1 v1 + a2 v2. The coefficients are the
minimizers of

    M(a1, a2) = |F a - b|^2,   a = [a1^2, a2^2, a1 a2]

which pins R(a)^T R(a) to the identity. Stationary points are found by
hiding a2: both partial derivatives are cubics in a1, and their common
roots are where the 6x6 Sylvester resultant, a degree 9 polynomial in
a2, vanishes.
"""
import dataclasses
import itertools
import typing as t

import numpy as np
from loguru import logger
from numpy.polynomial import Polynomial

from sonarpnp import config
from sonarpnp.errors import NoRealSolution, RecoveryFailure
from sonarpnp.rotations import angle_between, project_to_so3, unvec
from sonarpnp.type_aliases import FloatArray

#: Looser realness test for a1 roots during back-substitution.
BACKSUB_IMAG_TOL = 1e-6

#: Derivatives of a = [a1^2, a2^2, a1 a2] with respect to (a1, a2).
_MONOMIAL_HESSIANS = np.array(
    [
        [[2.0, 0.0], [0.0, 0.0]],
        [[0.0, 0.0], [0.0, 2.0]],
        [[0.0, 1.0], [1.0, 0.0]],
    ]
)


@dataclasses.dataclass(slots=True, frozen=True, eq=False)
class KernelPair:
    """Two orthonormal null vectors of the certificate."""

    v1: FloatArray
    v2: FloatArray

    def __post_init__(self) -> None:
        norms = np.linalg.norm(self.v1), np.linalg.norm(self.v2)
        overlap = float(self.v1 @ self.v2)
        if not np.allclose(norms, 1.0, atol=1e-8) or abs(overlap) > 1e-8:
            raise RecoveryFailure(
                f"Kernel pair is not orthonormal (norms {norms}, "
                f"overlap {overlap:.3g})."
            )

    def combine(self, alpha1: float, alpha2: float) -> FloatArray:
        """Return a1 v1 + a2 v2."""
        return alpha1 * self.v1 + alpha2 * self.v2


@dataclasses.dataclass(slots=True, frozen=True, eq=False)
class AlphaSystem:
    """The overdetermined system F a = b over a = [a1^2, a2^2, a1 a2]."""

    f: FloatArray
    b: FloatArray

    @property
    def gram(self) -> FloatArray:
        return self.f.T @ self.f

    @property
    def moment(self) -> FloatArray:
        return self.f.T @ self.b

    def objective(self, alpha1: float, alpha2: float) -> float:
        """Return M(a1, a2)."""
        residual = self.f @ monomials(alpha1, alpha2) - self.b
        return float(residual @ residual)

    def gradient(self, alpha1: float, alpha2: float) -> FloatArray:
        """Return the gradient of M."""
        a = monomials(alpha1, alpha2)
        jacobian = _monomial_jacobian(alpha1, alpha2)
        return 2 * jacobian.T @ (self.gram @ a - self.moment)

    def hessian(self, alpha1: float, alpha2: float) -> FloatArray:
        """Return the Hessian of M."""
        a = monomials(alpha1, alpha2)
        jacobian = _monomial_jacobian(alpha1, alpha2)
        weights = self.gram @ a - self.moment
        curvature = np.einsum("k,kij->ij", weights, _MONOMIAL_HESSIANS)
        return 2 * (jacobian.T @ self.gram @ jacobian + curvature)

    def objective_grid(self, axis: FloatArray) -> FloatArray:
        """Evaluate M on the square grid axis x axis, indexed [i1, i2]."""
        alpha1, alpha2 = np.meshgrid(axis, axis, indexing="ij")
        a = np.stack((alpha1**2, alpha2**2, alpha1 * alpha2), axis=-1)
        residual = a @ self.f.T - self.b
        return np.einsum("ijk,ijk->ij", residual, residual)


@dataclasses.dataclass(slots=True, frozen=True)
class AlphaCandidate:
    """A stationary point of M and the value of M there."""

    alpha1: float
    alpha2: float
    objective: float
    source: str = "resultant"

    def __post_init__(self) -> None:
        if not self.objective >= 0:
            raise RecoveryFailure(
                f"Candidate objective must be non-negative, "
                f"got {self.objective}."
            )


def monomials(alpha1: float, alpha2: float) -> FloatArray:
    return np.array([alpha1**2, alpha2**2, alpha1 * alpha2])


def _monomial_jacobian(alpha1: float, alpha2: float) -> FloatArray:
    return np.array(
        [[2 * alpha1, 0.0], [0.0, 2 * alpha2], [alpha2, alpha1]]
    )


def build_alpha_system(k: KernelPair) -> AlphaSystem:
    """
    Collect the rows of F a = b from R(a)^T R(a) ∝ I.

    R(a)^T R(a) = a1^2 V1^T V1 + a2^2 V2^T V2 + a1 a2 (V1^T V2 + V2^T V1)
    where Vk is the 3x3 part of vk; h is left out. Rows, in order:
    the three off-diagonal entries and the two diagonal differences
    (all = 0), then the mean of the diagonal (= 1).
    """
    v1, v2 = unvec(k.v1), unvec(k.v2)
    blocks = (v1.T @ v1, v2.T @ v2, v1.T @ v2 + v2.T @ v1)

    def row(entry: t.Callable[[FloatArray], float]) -> list[float]:
        return [entry(block) for block in blocks]

    f = np.array(
        [
            row(lambda d: d[0, 1]),
            row(lambda d: d[0, 2]),
            row(lambda d: d[1, 2]),
            row(lambda d: d[0, 0] - d[1, 1]),
            row(lambda d: d[1, 1] - d[2, 2]),
            row(lambda d: np.trace(d) / 3),
        ]
    )
    b = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])
    return AlphaSystem(f, b)


def partial_coefficients(
    sys: AlphaSystem,
) -> tuple[list[Polynomial], list[Polynomial]]:
    """
    Return the a2-polynomial coefficients of g1 and g2.

    g_i = c_i1 a1^3 + c_i2 a1^2 + c_i3 a1 + c_i4, where g1 and g2 are
    half the partial derivatives of M along a1 and a2.
    """
    g, h = sys.gram, sys.moment
    cross = 2 * g[0, 1] + g[2, 2]
    g1 = [
        Polynomial([2 * g[0, 0]]),
        Polynomial([0.0, 3 * g[0, 2]]),
        Polynomial([-2 * h[0], 0.0, cross]),
        Polynomial([0.0, -h[2], 0.0, g[1, 2]]),
    ]
    g2 = [
        Polynomial([g[0, 2]]),
        Polynomial([0.0, cross]),
        Polynomial([-h[2], 0.0, 3 * g[1, 2]]),
        Polynomial([0.0, -2 * h[1], 0.0, 2 * g[1, 1]]),
    ]
    return g1, g2


def _sylvester_matrix(
    g1: list[Polynomial], g2: list[Polynomial]
) -> list[list[t.Optional[Polynomial]]]:
    """Lay out the Sylvester matrix of two cubics, None for zeros."""
    size = 6
    matrix: list[list[t.Optional[Polynomial]]] = [
        [None] * size for _ in range(size)
    ]
    for shift in range(3):
        for i in range(4):
            matrix[shift + i][shift] = g1[i]
            matrix[shift + i][3 + shift] = g2[i]
    return matrix


def _permutation_sign(permutation: tuple[int, ...]) -> int:
    inversions = sum(
        1
        for i, j in itertools.combinations(range(len(permutation)), 2)
        if permutation[i] > permutation[j]
    )
    return -1 if inversions % 2 else 1


def resultant_polynomial(sys: AlphaSystem) -> Polynomial:
    """
    Expand the resultant of g1 and g2 in a1 as a polynomial in a2.

    The determinant is expanded over permutations; the matrix is sparse
    enough that skipping zero entries leaves few terms.
    """
    matrix = _sylvester_matrix(*partial_coefficients(sys))
    total = Polynomial([0.0])
    for permutation in itertools.permutations(range(6)):
        entries = [matrix[row][col] for row, col in enumerate(permutation)]
        if any(entry is None for entry in entries):
            continue
        term = Polynomial([float(_permutation_sign(permutation))])
        for entry in entries:
            term = term * entry
        total = total + term
    return total


def real_roots(
    polynomial: Polynomial, leading_coef_tol: float, imag_tol: float
) -> FloatArray:
    """
    Return the real roots of a polynomial from its companion matrix.

    Vanishing leading coefficients are stripped first; a root counts
    as real when |Im| <= imag_tol * (1 + |Re|).
    """
    coefficients = np.asarray(polynomial.coef, dtype=np.float64)
    scale = np.max(np.abs(coefficients), initial=0.0)
    if scale == 0:
        return np.empty(0)
    degree = len(coefficients) - 1
    while degree > 0 and abs(coefficients[degree]) <= leading_coef_tol * scale:
        degree -= 1
    if degree == 0:
        return np.empty(0)
    roots = Polynomial(coefficients[: degree + 1]).roots()
    keep = np.abs(roots.imag) <= imag_tol * (1 + np.abs(roots.real))
    return np.sort(roots.real[keep])


def _evaluate(coefficients: list[Polynomial], alpha2: float) -> FloatArray:
    """Return a cubic's coefficients in a1, highest first, at a2."""
    return np.array([float(c(alpha2)) for c in coefficients])


def polish(
    sys: AlphaSystem, alpha1: float, alpha2: float, iterations: int
) -> tuple[float, float]:
    """Refine a stationary point with Newton steps on grad M = 0."""
    point = np.array([alpha1, alpha2])
    for _ in range(iterations):
        gradient = sys.gradient(*point)
        if np.linalg.norm(gradient) < 1e-15:
            break
        try:
            step = np.linalg.solve(sys.hessian(*point), -gradient)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        point = point + step
        if np.linalg.norm(step) <= 1e-14 * (1 + np.linalg.norm(point)):
            break
    return float(point[0]), float(point[1])


def grid_minimum(sys: AlphaSystem, size: int, extent: float) -> AlphaCandidate:
    """Return the minimizer of M over a size x size grid on the square."""
    axis = np.linspace(-extent, extent, size)
    values = sys.objective_grid(axis)
    i1, i2 = np.unravel_index(np.argmin(values), values.shape)
    return AlphaCandidate(
        float(axis[i1]), float(axis[i2]), float(values[i1, i2]), "grid"
    )


def _candidate(
    sys: AlphaSystem,
    alpha1: float,
    alpha2: float,
    iterations: int,
    source: str,
) -> AlphaCandidate:
    polished = polish(sys, alpha1, alpha2, iterations)
    # Keep the raw point if Newton wandered uphill.
    if sys.objective(*polished) > sys.objective(alpha1, alpha2):
        polished = (alpha1, alpha2)
    return AlphaCandidate(*polished, sys.objective(*polished), source)


def solve_alpha(
    sys: AlphaSystem,
    *,
    imag_tol: t.Optional[float] = None,
    resid_tol: t.Optional[float] = None,
    leading_coef_tol: t.Optional[float] = None,
    grid_size: t.Optional[int] = None,
    grid_extent: t.Optional[float] = None,
    newton_iterations: t.Optional[int] = None,
) -> list[AlphaCandidate]:
    """
    Return the real stationary points of M, sorted by M ascending.

    Every a2 root of the resultant is paired with the real roots of
    g1(., a2) that g2 shares. The list is checked against a brute-force
    grid; when the grid beats every candidate its polished minimizer
    joins the list, and when no pair survives it is the only entry.
    """
    imag_tol = config.Coplanar.imag_tol if imag_tol is None else imag_tol
    resid_tol = config.Coplanar.resid_tol if resid_tol is None else resid_tol
    leading_coef_tol = (
        config.Coplanar.leading_coef_tol
        if leading_coef_tol is None
        else leading_coef_tol
    )
    grid_size = config.Coplanar.grid_size if grid_size is None else grid_size
    grid_extent = (
        config.Coplanar.grid_extent if grid_extent is None else grid_extent
    )
    newton_iterations = (
        config.Coplanar.newton_iterations
        if newton_iterations is None
        else newton_iterations
    )

    if not np.any(sys.f):
        raise RecoveryFailure("The alpha system is identically zero.")

    g1, g2 = partial_coefficients(sys)
    alpha2_roots = real_roots(
        resultant_polynomial(sys), leading_coef_tol, imag_tol
    )
    if not len(alpha2_roots):
        raise NoRealSolution("The alpha resultant has no real root.")

    candidates: list[AlphaCandidate] = []
    for alpha2 in alpha2_roots:
        cubic1, cubic2 = _evaluate(g1, alpha2), _evaluate(g2, alpha2)
        if not np.any(cubic1):
            cubic1, cubic2 = cubic2, cubic1
        roots = np.roots(cubic1)
        # Near-double roots of the cubic carry imaginary parts around
        # sqrt(eps); g2 decides whether they are genuine.
        realness = BACKSUB_IMAG_TOL * (1 + np.abs(roots))
        roots = roots[np.abs(roots.imag) <= realness]
        threshold = resid_tol * max(1.0, float(np.linalg.norm(cubic2)))
        for alpha1 in roots.real:
            if abs(np.polyval(cubic2, alpha1)) <= threshold:
                candidates.append(
                    _candidate(
                        sys, alpha1, alpha2, newton_iterations, "resultant"
                    )
                )

    grid_best = grid_minimum(sys, grid_size, grid_extent)
    best = min((c.objective for c in candidates), default=np.inf)
    if not candidates:
        logger.warning(
            "No resultant root survived back-substitution; "
            "falling back to the grid minimizer."
        )
    if grid_best.objective + 1e-6 < best:
        candidates.append(
            _candidate(
                sys,
                grid_best.alpha1,
                grid_best.alpha2,
                newton_iterations,
                "grid",
            )
        )
    logger.debug(
        f"{len(alpha2_roots)} real resultant roots, "
        f"{len(candidates)} alpha candidates."
    )
    return sorted(candidates, key=lambda c: c.objective)


def assemble_rotation(k: KernelPair, best: AlphaCandidate) -> FloatArray:
    """
    Build the rotation a1 V1 + a2 V2 of a candidate.

    Negating (a1, a2) negates the determinant, so the sign is chosen
    to make it positive before projecting onto SO(3).
    """
    if not np.isfinite(best.objective):
        raise RecoveryFailure("Candidate objective is not finite.")
    matrix = unvec(k.combine(best.alpha1, best.alpha2))
    determinant = np.linalg.det(matrix)
    if abs(determinant) < 1e-8:
        raise RecoveryFailure(
            f"Candidate ({best.alpha1:.4g}, {best.alpha2:.4g}) gives a "
            "singular matrix for both signs."
        )
    if determinant < 0:
        matrix = -matrix
    return project_to_so3(matrix)


def distinct_rotations(
    k: KernelPair,
    candidates: t.Sequence[AlphaCandidate],
    tie_tol: t.Optional[float] = None,
) -> list[FloatArray]:
    """
    Assemble every candidate tied with the best and drop duplicates.

    (a1, a2) and (-a1, -a2) give the same rotation, so in noise-free
    coplanar scenes this leaves the pose and its mirror image.
    """
    tie_tol = config.Coplanar.tie_tol if tie_tol is None else tie_tol
    if not candidates:
        raise NoRealSolution("No alpha candidate to assemble.")
    best = candidates[0].objective
    rotations: list[FloatArray] = []
    for candidate in candidates:
        if candidate.objective > best + tie_tol:
            break
        try:
            rotation = assemble_rotation(k, candidate)
        except RecoveryFailure:
            continue
        if all(angle_between(rotation, r) > 1e-6 for r in rotations):
            rotations.append(rotation)
    if not rotations:
        raise RecoveryFailure("No best candidate yields a rotation.")
    return rotations


def plane_orientation_prior(rotation: FloatArray, normal: FloatArray) -> bool:
    """
    Return whether the plane faces the sonar the way surveyed planes do.

    The world plane normal seen from the sonar must have n_y n_z < 0 and
    n_x n_z > 0; both products are unchanged when n flips sign.
    """
    n = rotation @ normal
    return bool(n[1] * n[2] < 0 and n[0] * n[2] > 0)
