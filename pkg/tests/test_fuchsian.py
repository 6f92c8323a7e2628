"""Tests for disk isometries, the octagon group, and group enumeration."""
import math

import numpy as np
import pytest

from blaschkelab.fuchsian import (
    CORNER_RADIUS,
    DomainError,
    MobiusTransform,
    ResourceError,
    apply_mobius,
    enumerate_group,
    hyperbolic_distance,
    hyperbolic_midpoint,
    inverse_letter,
    mobius_derivative,
    octagon_corners,
    octagon_group,
)


@pytest.fixture(scope="module")
def group():
    return octagon_group()


def test_unit_determinant(group):
    for g in group.generators:
        det = g.a * g.d - g.b * g.c
        assert abs(abs(det) - 1.0) < 1e-12


def test_relation_word_fixes_point(group):
    z = 0.1 + 0.2j
    w = group.relator().apply(z)
    assert abs(w - z) < 1e-9


def test_relator_is_identity_up_to_sign(group):
    assert group.relator().is_identity(1e-9)


def test_generator_inverse_pairs(group):
    for k in range(8):
        g = group.generators[k]
        ginv = group.generators[inverse_letter(k)]
        assert (g @ ginv).is_identity(1e-12)


def test_generators_pair_opposite_sides(group):
    # T_k carries the closed side with outward direction (k+4)*pi/4 onto
    # the side with direction k*pi/4: both endpoints and the midpoint map.
    corners = octagon_corners()
    mid = math.tanh(math.acosh(1 + math.sqrt(2)) / 2)
    mids = mid * np.exp(1j * np.arange(8) * math.pi / 4)
    for k in range(8):
        g = group.generators[k]
        assert abs(g.apply(corners[(k + 3) % 8]) - corners[k % 8]) < 1e-12
        assert abs(g.apply(corners[(k + 4) % 8]) - corners[(k - 1) % 8]) < 1e-12
        assert abs(g.apply(mids[(k + 4) % 8]) - mids[k]) < 1e-12


def test_vertex_radius_matches_trig_oracle():
    # regular octagon, interior angle pi/4: right triangle with half the
    # interior angle at the corner and half the central angle at 0 gives
    # cosh(circumradius) = cot(pi/8)^2; Euclidean radius = tanh(R/2)
    R = math.acosh(1.0 / math.tan(math.pi / 8) ** 2)
    oracle = math.tanh(R / 2)
    assert abs(CORNER_RADIUS - oracle) < 1e-9
    assert abs(abs(octagon_corners()[0]) - oracle) < 1e-9


def test_apply_identity():
    assert apply_mobius(MobiusTransform.identity(), 0.3j) == 0.3j


def test_apply_inverse_composition(group):
    rng = np.random.default_rng(7)
    g = group.generators[1] @ group.generators[4]
    for _ in range(10):
        w = 0.9 * math.sqrt(rng.random()) * np.exp(2j * math.pi * rng.random())
        assert abs(g.apply(g.inverse().apply(w)) - w) < 1e-12


def test_apply_first_generator_origin_oracle(group):
    g = group.generators[0]
    m = g.matrix()
    oracle = m[0, 1] / m[1, 1]
    assert abs(apply_mobius(g, 0) - oracle) < 1e-15
    assert abs(apply_mobius(g, 0)) < 1.0


def test_apply_rejects_outside_disk(group):
    with pytest.raises(DomainError):
        apply_mobius(group.generators[0], 1.2 + 0j)
    with pytest.raises(DomainError):
        apply_mobius(group.generators[0], 1.01 * np.exp(0.3j))


def test_derivative_identity():
    assert mobius_derivative(MobiusTransform.identity(), 0.4 - 0.2j) == 1.0


def test_derivative_chain_rule(group):
    s = group.generators[2]
    t = group.generators[5] @ group.generators[1]
    z = 0.33 - 0.41j
    lhs = mobius_derivative(s @ t, z)
    rhs = mobius_derivative(s, t.apply(z)) * mobius_derivative(t, z)
    assert abs(lhs - rhs) < 1e-12


def test_derivative_matches_finite_difference(group):
    g = group.generators[3]
    z = 0.2 + 0.1j
    h = 1e-6
    fd = (g.apply(z + h) - g.apply(z - h)) / (2 * h)
    assert abs(mobius_derivative(g, z) - fd) < 1e-8


def test_derivative_origin_oracle(group):
    g = group.generators[0]
    oracle = 1.0 / g.matrix()[1, 1] ** 2
    assert abs(mobius_derivative(g, 0) - oracle) < 1e-15


def test_distance_zero_at_coincident_points():
    assert hyperbolic_distance(0, 0) == 0.0
    z = 0.3 + 0.4j
    assert hyperbolic_distance(z, z) == 0.0


def test_distance_radial_formula():
    # d(0, r) = log((1+r)/(1-r)) in the curvature -1 metric
    assert abs(hyperbolic_distance(0, 0.5) - math.log(3)) < 1e-12


def test_distance_symmetric():
    rng = np.random.default_rng(3)
    for _ in range(50):
        z1, z2 = (0.95 * math.sqrt(rng.random()) * np.exp(2j * math.pi * rng.random())
                  for _ in range(2))
        assert abs(hyperbolic_distance(z1, z2) - hyperbolic_distance(z2, z1)) < 1e-13


def test_distance_invariant_under_generators(group):
    rng = np.random.default_rng(11)
    z1 = 0.9 * np.sqrt(rng.random(100)) * np.exp(2j * math.pi * rng.random(100))
    z2 = 0.9 * np.sqrt(rng.random(100)) * np.exp(2j * math.pi * rng.random(100))
    base = hyperbolic_distance(z1, z2)
    for g in group.generators:
        moved = hyperbolic_distance(g.apply(z1), g.apply(z2))
        assert np.max(np.abs(moved - base)) < 1e-10


def test_distance_triangle_inequality():
    rng = np.random.default_rng(5)
    z = 0.97 * np.sqrt(rng.random((1000, 3))) * np.exp(2j * math.pi * rng.random((1000, 3)))
    d01 = hyperbolic_distance(z[:, 0], z[:, 1])
    d12 = hyperbolic_distance(z[:, 1], z[:, 2])
    d02 = hyperbolic_distance(z[:, 0], z[:, 2])
    assert np.all(d02 <= d01 + d12 + 1e-10)


def test_distance_rejects_boundary():
    with pytest.raises(DomainError):
        hyperbolic_distance(1.0, 0.0)


def test_midpoint_is_equidistant():
    rng = np.random.default_rng(9)
    for _ in range(20):
        z1, z2 = (0.9 * math.sqrt(rng.random()) * np.exp(2j * math.pi * rng.random())
                  for _ in range(2))
        m = hyperbolic_midpoint(z1, z2)
        d1 = hyperbolic_distance(z1, m)
        d2 = hyperbolic_distance(m, z2)
        assert abs(d1 - d2) < 1e-10
        assert abs(d1 + d2 - hyperbolic_distance(z1, z2)) < 1e-10


def test_midpoint_equivariance(group):
    g = group.generators[2] @ group.generators[5]
    z1, z2 = 0.3 + 0.6j, -0.5 - 0.1j
    lhs = g.apply(hyperbolic_midpoint(z1, z2))
    rhs = hyperbolic_midpoint(g.apply(z1), g.apply(z2))
    assert abs(lhs - rhs) < 1e-12


def test_equality_up_to_sign(group):
    g = group.generators[0]
    neg = MobiusTransform(-g.a, -g.b, -g.c, -g.d)
    assert g.equals(neg)
    assert not g.equals(group.generators[1])


def test_enumerate_length_zero(group):
    els = enumerate_group(group, 0)
    assert len(els) == 1
    assert els[0].is_identity()


def test_enumerate_length_one(group):
    els = enumerate_group(group, 1)
    assert len(els) == 9


def test_enumerate_matches_brute_force_oracle(group):
    # multiply out all words of length <= 3 and deduplicate numerically
    gens = [g.matrix() for g in group.generators]
    mats = [np.eye(2, dtype=complex)]
    frontier = [np.eye(2, dtype=complex)]
    for _ in range(3):
        new = []
        for f in frontier:
            for gm in gens:
                c = f @ gm
                if not any(
                    np.max(np.abs(c - e)) < 1e-6 or np.max(np.abs(c + e)) < 1e-6
                    for e in mats + new
                ):
                    new.append(c)
        mats.extend(new)
        frontier = new
    els = enumerate_group(group, 3)
    assert len(els) == len(mats)
    # and every oracle element appears exactly once in the enumeration
    ent = np.stack([e.matrix() for e in els])
    for c in mats:
        hits = np.sum(
            (np.max(np.abs(ent - c), axis=(1, 2)) < 1e-6)
            | (np.max(np.abs(ent + c), axis=(1, 2)) < 1e-6)
        )
        assert hits == 1


def test_enumerate_contains_identity_and_prefixes(group):
    els = enumerate_group(group, 4)
    words = {e.word for e in els}
    assert () in words
    for w in words:
        for i in range(len(w)):
            assert w[:i] in words


def test_enumerate_deterministic_order(group):
    a = enumerate_group(group, 4)
    b = enumerate_group(group, 4)
    assert [e.word for e in a] == [e.word for e in b]
    keys = [(len(e.word), e.word) for e in a]
    assert keys == sorted(keys)


def test_enumerate_exponential_growth(group):
    els = enumerate_group(group, 4)
    counts = {}
    for e in els:
        counts[len(e.word)] = counts.get(len(e.word), 0) + 1
    for L in range(1, 4):
        assert counts[L + 1] / counts[L] > 1.0


def test_enumerate_cap(group):
    with pytest.raises(ResourceError):
        enumerate_group(group, 3, cap=100)


def test_enumerate_rejects_negative_length(group):
    with pytest.raises(DomainError):
        enumerate_group(group, -1)
