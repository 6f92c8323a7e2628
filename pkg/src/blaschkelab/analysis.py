"""Area computations and the inequality ledger for solved metrics.

Every check returns an InequalityReport oriented so that gap >= 0
means the inequality holds; each report names a tolerance class:

  algebraic       pure arithmetic, 1e-10
  discretization  mesh-order, measured from the background quadrature defect
  estimator       statistical (orbit-count fits)

Entropy statements for the Hilbert metric are only ever made up to a
universal comparison constant; that constant stays symbolic (see
ENTROPY_CONSTANT_DISCLAIMER) and is never assigned a number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cubic import CubicDifferential, flat_metric, pointwise_norm_sq
from .errors import DomainError
from .mesh import MetricField, SurfaceMesh, integrate
from .wang import ConformalFactorField, blaschke_metric

ALGEBRAIC = "algebraic"
DISCRETIZATION = "discretization"
ESTIMATOR = "estimator"

ENTROPY_CONSTANT_DISCLAIMER = (
    "Hilbert-metric entropy conclusions hold up to a universal comparison "
    "constant c between the Blaschke and Hilbert metrics; c is carried "
    "symbolically and is never assigned a numerical value."
)

#: comparison factor: the flat lower-bound metric is 2^{1/3} |b|^{2/3}
FLAT_COMPARISON_SCALE = 2.0 ** (1.0 / 3.0)


@dataclass
class InequalityReport:
    """One checked inequality lhs <= rhs with gap = rhs - lhs."""

    name: str
    lhs: float
    rhs: float
    gap: float
    tolerance: float
    toleranceClass: str
    extras: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.gap >= -self.tolerance

    def serialize(self, prefix: str = "") -> str:
        tag = f"{prefix}{self.name}"
        lines = [
            f"{tag}.lhs={self.lhs:.17g}",
            f"{tag}.rhs={self.rhs:.17g}",
            f"{tag}.gap={self.gap:.17g}",
            f"{tag}.tolerance={self.tolerance:.17g}",
            f"{tag}.toleranceClass={self.toleranceClass}",
            f"{tag}.holds={str(self.holds).lower()}",
        ]
        for key, value in sorted(self.extras.items()):
            if isinstance(value, float):
                lines.append(f"{tag}.{key}={value:.17g}")
            else:
                lines.append(f"{tag}.{key}={value}")
        return "\n".join(lines)


def area(M: SurfaceMesh, g: MetricField) -> float:
    """Total area of the metric with factor g; linear in the factor."""
    return integrate(M, 1.0, g)


def katok_lower_bound(areaValue: float) -> float:
    """Entropy floor sqrt(2 pi |chi| / Area) with |chi| = 2 (genus 2)."""
    if areaValue <= 0:
        raise DomainError("area must be positive")
    return math.sqrt(4.0 * math.pi / areaValue)


def _gauss_bonnet_constant(M: SurfaceMesh) -> float:
    return -2.0 * math.pi * M.eulerCharacteristic


def _background_defect(M: SurfaceMesh) -> float:
    """Quadrature defect of the background area, the natural mesh tolerance."""
    reference = 1.0 if M.torus else 4.0 * math.pi
    return abs(area(M, M.background_metric()) - reference)


def _mesh_tolerance(M: SurfaceMesh) -> float:
    return max(1e-10, 2.0 * _background_defect(M))


def check_pointwise_bound(M: SurfaceMesh, u: ConformalFactorField,
                          b: CubicDifferential) -> InequalityReport:
    """Solved factor dominates the flat comparison factor at every vertex."""
    g_solved = blaschke_metric(M, u).factor
    g_flat = FLAT_COMPARISON_SCALE * np.abs(b.vertexSamples) ** (2.0 / 3.0)
    diff = g_solved - g_flat
    worst = int(np.argmin(diff))
    max_factor = float(np.max(g_solved))
    return InequalityReport(
        name="pointwise-bound",
        lhs=float(g_flat[worst]),
        rhs=float(g_solved[worst]),
        gap=float(diff[worst]),
        tolerance=1e-6 * max_factor,
        toleranceClass=DISCRETIZATION,
        extras={"maxFactor": max_factor, "worstVertex": worst},
    )


def check_area_lemma(M: SurfaceMesh, u: ConformalFactorField,
                     b: CubicDifferential) -> InequalityReport:
    """Area of the solved metric <= 2 pi |chi| + area of the flat comparison.

    Also reports the curvature-integral identity residual
    |area_solved - 2 pi |chi| - int 2|b|^2 dvol|, which telescopes to
    the quadrature defect and decreases under refinement.
    """
    const = _gauss_bonnet_constant(M)
    g_solved = blaschke_metric(M, u)
    lhs = area(M, g_solved)
    rhs = const + area(M, flat_metric(b, FLAT_COMPARISON_SCALE))
    norm_sq = pointwise_norm_sq(b, g_solved)
    integral = integrate(M, 2.0 * norm_sq.values, g_solved)
    return InequalityReport(
        name="area-lemma",
        lhs=lhs,
        rhs=rhs,
        gap=rhs - lhs,
        tolerance=_mesh_tolerance(M),
        toleranceClass=DISCRETIZATION,
        extras={"identityResidual": abs(lhs - const - integral)},
    )


def ray_upper_bound(normB: float, M_sphere: float) -> float:
    """Entropy bound 2^{-1/3} normB^{-2/3} M (quadratic-form scaling)."""
    if normB <= 0 or M_sphere <= 0:
        raise DomainError("ray bound inputs must be positive")
    return 2.0 ** (-1.0 / 3.0) * normB ** (-2.0 / 3.0) * M_sphere


def ray_upper_bound_alt(normB: float, M_sphere: float) -> float:
    """Entropy bound 2^{-1/6} normB^{-1/3} M (distance scaling convention)."""
    if normB <= 0 or M_sphere <= 0:
        raise DomainError("ray bound inputs must be positive")
    return 2.0 ** (-1.0 / 6.0) * normB ** (-1.0 / 3.0) * M_sphere


def area_sandwich(M: SurfaceMesh, u: ConformalFactorField,
                  b: CubicDifferential, entropyUpper: float) -> InequalityReport:
    """2 pi |chi| / E^2 <= area_solved <= 2 pi |chi| + flat comparison area.

    E may be any upper bound for the entropy of the solved metric: a
    larger denominator only weakens the left side, so the check stays
    sound.  gap is the worse of the two one-sided gaps.
    """
    if entropyUpper <= 0:
        raise DomainError("entropy upper bound must be positive")
    const = _gauss_bonnet_constant(M)
    middle = area(M, blaschke_metric(M, u))
    lower = const / entropyUpper ** 2
    upper = const + area(M, flat_metric(b, FLAT_COMPARISON_SCALE))
    left_gap = middle - lower
    right_gap = upper - middle
    return InequalityReport(
        name="area-sandwich",
        lhs=lower,
        rhs=upper,
        gap=min(left_gap, right_gap),
        tolerance=_mesh_tolerance(M),
        toleranceClass=DISCRETIZATION,
        extras={
            "area": middle,
            "leftGap": left_gap,
            "rightGap": right_gap,
            "entropyUpper": entropyUpper,
        },
    )
