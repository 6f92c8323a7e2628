"""Damped-Newton solver for the conformal factor of the Blaschke metric.

With g_B = e^{2u} g_0 the curvature condition kappa_B = -1 + 2|b|_B^2
becomes a scalar equation on the mesh:

    Lap u = kappa_0 + e^{2u} - 2 psi_0 e^{-4u},   psi_0 = |b|^2 / h0^3,

where kappa_0 is -1 in hyperbolic mode and 0 in torus mode.  The
nonlinearity is monotone increasing in u, so every Newton system is the
stiffness matrix plus a strictly positive diagonal: symmetric positive
definite, and Newton from u = 0 with residual-decreasing line search
converges globally in practice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .cubic import CubicDifferential, pointwise_norm_sq
from .errors import DomainError, NonConvergence, SolverError
from .mesh import MetricField, ScalarField, SurfaceMesh, assemble_laplacian

#: line-search step floor
_STEP_FLOOR = 2.0 ** -20


@dataclass
class ConformalFactorField:
    """Solution u with iteration diagnostics.

    residualHistory holds the sup-norm equation residual before the
    first step and after each accepted step; it decreases strictly.
    """

    u: ScalarField
    iterations: int
    finalResidualNorm: float
    residualHistory: tuple


@dataclass
class CurvatureField:
    kappa: ScalarField


def _psi0(M: SurfaceMesh, b: CubicDifferential) -> np.ndarray:
    return pointwise_norm_sq(b, M.background_metric()).values


def asymptotic_guess(M: SurfaceMesh, b: CubicDifferential) -> ScalarField:
    """u = (1/6) ln(max(2 psi_0, 1)): the large-differential profile.

    Useful as a warm start when the differential dominates (factor 16+
    rays); clamped at 0 so it never undershoots the hyperbolic solution.
    """
    return ScalarField(np.log(np.maximum(2.0 * _psi0(M, b), 1.0)) / 6.0)


def solve_wang(M: SurfaceMesh, b: CubicDifferential, tol: float,
               maxIterations: int = 50,
               initialGuess: ScalarField | None = None) -> ConformalFactorField:
    """Solve the conformal-factor equation to sup-norm residual <= tol."""
    if tol <= 0:
        raise DomainError("tolerance must be positive")
    kappa0 = 0.0 if M.torus else -1.0
    lap = assemble_laplacian(M)
    K, m = lap.stiffness, lap.mass
    psi = _psi0(M, b)

    def residual(u):
        return -(K @ u) / m - kappa0 - np.exp(2.0 * u) + 2.0 * psi * np.exp(-4.0 * u)

    u = np.zeros(M.canonicalCount) if initialGuess is None \
        else np.array(initialGuess.values, dtype=float)
    res = residual(u)
    res_norm = float(np.max(np.abs(res)))
    history = [res_norm]
    iterations = 0
    while res_norm > tol:
        if iterations >= maxIterations:
            raise NonConvergence(iterations, res_norm)
        diag = m * (2.0 * np.exp(2.0 * u) + 8.0 * psi * np.exp(-4.0 * u))
        system = (K + sparse.diags(diag)).tocsc()
        try:
            delta = spsolve(system, m * res)
        except Exception as exc:
            raise SolverError(f"Newton linear solve failed: {exc}") from exc
        if not np.all(np.isfinite(delta)):
            raise SolverError("Newton linear solve produced non-finite step")
        step = 1.0
        while step >= _STEP_FLOOR:
            trial = u + step * delta
            trial_res = residual(trial)
            trial_norm = float(np.max(np.abs(trial_res)))
            if trial_norm < res_norm:
                break
            step *= 0.5
        else:
            raise NonConvergence(iterations, res_norm)
        u, res, res_norm = trial, trial_res, trial_norm
        history.append(res_norm)
        iterations += 1
    return ConformalFactorField(
        u=ScalarField(u),
        iterations=iterations,
        finalResidualNorm=res_norm,
        residualHistory=tuple(history),
    )


def curvature(M: SurfaceMesh, u: ConformalFactorField) -> CurvatureField:
    """Curvature of e^{2u} g_0: kappa = e^{-2u} (kappa_0 - Lap u)."""
    kappa0 = 0.0 if M.torus else -1.0
    lap = assemble_laplacian(M)
    uu = u.u.values
    lap_u = -(lap.stiffness @ uu) / lap.mass
    return CurvatureField(ScalarField(np.exp(-2.0 * uu) * (kappa0 - lap_u)))


def wang_residual(M: SurfaceMesh, u: ConformalFactorField,
                  b: CubicDifferential) -> float:
    """Sup over vertices of |kappa_B + 1 - 2 |b|_B^2|."""
    kappa = curvature(M, u).kappa.values
    uu = u.u.values
    norm_b_sq = _psi0(M, b) * np.exp(-6.0 * uu)
    return float(np.max(np.abs(kappa + 1.0 - 2.0 * norm_b_sq)))


def blaschke_metric(M: SurfaceMesh, u: ConformalFactorField) -> MetricField:
    """The solved metric's factor e^{2u} h0 on full vertices."""
    full_u = M.expand(u.u.values)
    return MetricField(np.exp(2.0 * full_u) * M.h0, np.array([], dtype=int))
