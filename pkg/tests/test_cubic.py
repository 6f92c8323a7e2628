import warnings

import numpy as np
import pytest

from blaschkelab.cubic import (
    NORM_FLAT_AREA,
    NORM_SUP,
    CubicDifferential,
    _series_at,
    cauchy_residual,
    constant_differential,
    differential_norm,
    flat_metric,
    pointwise_norm_sq,
    poincare_series,
    seed_basis,
    seed_gram,
)
from blaschkelab.errors import ConvergenceWarning, DomainError
from blaschkelab.fuchsian import octagon_group
from blaschkelab.mesh import MetricField, build_fundamental_mesh, build_torus_mesh


@pytest.fixture(scope="module")
def group():
    return octagon_group()


@pytest.fixture(scope="module")
def mesh2(group):
    return build_fundamental_mesh(group, 2)


@pytest.fixture(scope="module")
def mesh3(group):
    return build_fundamental_mesh(group, 3)


def series(group, k, L, mesh):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        return poincare_series(group, k, L, mesh)


def test_identity_shell_is_seed_sup(group, mesh2):
    b = series(group, 0, 3, mesh2)
    assert b.increments[0] == 1.0


def test_transform_residual_decreases_with_truncation(group, mesh2):
    residuals = [series(group, 0, L, mesh2).transformResidual for L in (3, 4, 5, 6)]
    assert all(r2 < r1 for r1, r2 in zip(residuals, residuals[1:]))
    assert residuals[-1] < 1e-3


def test_degenerate_seed_is_replaced(group):
    basis = seed_basis(group)
    for k in (0, 1, 2, 4):
        assert basis[k] == ((k, 0, 1.0),)
    (k, m, coeff), = basis[3]
    assert (k, coeff) == (3, 1.0) and m > 0
    raw, _ = _series_at(group, 5, ((3, 0, 1.0),),
                        build_fundamental_mesh(group, 1).positions, 2_000_000)
    assert np.max(np.abs(raw)) < 1e-3


def test_seed_gram_has_rank_five(group, mesh2):
    gram = seed_gram(group, 5, mesh2)
    assert np.max(np.abs(gram - gram.conj().T)) < 1e-15
    eig = np.linalg.eigvalsh(gram)
    assert eig[0] > 1e-5 * eig[-1]
    assert np.sum(eig > 1e-5 * eig[-1]) == 5


def test_replaced_seed_gives_nonzero_differential(group, mesh2):
    b = series(group, 3, 5, mesh2)
    assert np.max(np.abs(b.vertexSamples)) > 1.0


def test_pointwise_norm_in_own_flat_metric_is_constant(group, mesh3):
    b = series(group, 0, 5, mesh3)
    g = flat_metric(b, 2.0 ** (1.0 / 3.0))
    f = pointwise_norm_sq(b, g)
    assert len(g.coneVertices) == 0
    assert np.max(np.abs(f.values - 0.5)) < 1e-12


def test_pointwise_norm_rejects_vanishing_metric(group, mesh2):
    b = series(group, 0, 3, mesh2)
    g = MetricField(np.zeros(mesh2.fullCount), np.arange(mesh2.fullCount))
    with pytest.raises(DomainError):
        pointwise_norm_sq(b, g)


def test_scalar_multiplication_is_exact(group, mesh2):
    b = series(group, 1, 4, mesh2)
    c = 4.0 * b
    assert np.array_equal(c.vertexSamples, 4.0 * b.vertexSamples)
    assert c.transformResidual == 4.0 * b.transformResidual


def test_norm_homogeneity(group, mesh2):
    b = series(group, 0, 4, mesh2)
    for kind in (NORM_FLAT_AREA, NORM_SUP):
        n1 = differential_norm(b, kind)
        n2 = differential_norm((-2.0) * b, kind)
        assert n2 == pytest.approx(2.0 * n1, rel=1e-12)


def test_coefficient_vector_matches_basis_seed(group, mesh2):
    direct = series(group, 2, 4, mesh2)
    via_vector = series(group, [0, 0, 1.0, 0, 0], 4, mesh2)
    assert np.max(np.abs(via_vector.vertexSamples - direct.vertexSamples)) == 0.0
    scaled = series(group, [0, 0, 2j, 0, 0], 4, mesh2)
    ref = 2j * direct.vertexSamples
    assert np.max(np.abs(scaled.vertexSamples - ref)) < 1e-13 * np.max(np.abs(ref))


def test_truncation_warning_fires_on_large_last_shell(group, mesh2):
    with pytest.warns(ConvergenceWarning):
        poincare_series(group, 0, 4, mesh2)


def test_contour_residual_decays_under_refinement(group):
    values = []
    for r in (2, 3, 4):
        mesh = build_fundamental_mesh(group, r)
        b = series(group, 0, 4, mesh)
        values.append(cauchy_residual(b))
    assert values[0] > values[1] > values[2]
    mesh4 = build_fundamental_mesh(group, 4)
    b4 = series(group, 0, 4, mesh4)
    fake = CubicDifferential(None, None, b4.seedTerms, 4,
                             np.conj(b4.vertexSamples), 0.0, (0.0,), mesh4)
    assert values[2] < 0.5 * cauchy_residual(fake)


def test_golden_norms_base_seed(group, mesh3):
    b = series(group, 0, 6, mesh3)
    assert differential_norm(b, NORM_FLAT_AREA) == pytest.approx(
        1.7948956260671651, rel=1e-9)
    assert differential_norm(b, NORM_SUP) == pytest.approx(
        0.13046792712091076, rel=1e-9)
    assert b.vertexSamples[8] == pytest.approx(1.0437434169672861, abs=1e-9)
    assert b.transformResidual < 1e-3


def test_constant_differential_on_torus():
    mesh = build_torus_mesh(3)
    b = constant_differential(mesh, 1.0)
    assert b.transformResidual == 0.0
    assert differential_norm(b, NORM_FLAT_AREA) == pytest.approx(1.0, rel=1e-10)
    zero = constant_differential(mesh, 0.0)
    assert differential_norm(zero, NORM_FLAT_AREA) == 0.0
    assert differential_norm(zero, NORM_SUP) == 0.0


def test_invalid_arguments_raise(group, mesh2):
    with pytest.raises(DomainError):
        poincare_series(group, 7, 3, mesh2)
    with pytest.raises(DomainError):
        poincare_series(group, 0, 0, mesh2)
    with pytest.raises(DomainError):
        poincare_series(group, [1.0, 0.0], 3, mesh2)
    b = series(group, 0, 3, mesh2)
    with pytest.raises(DomainError):
        flat_metric(b, -1.0)
    with pytest.raises(DomainError):
        differential_norm(b, "no-such-kind")
