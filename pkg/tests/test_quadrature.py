"""Sphere quadrature moment identities and structural properties."""

import numpy as np
import pytest

from khm_lab.quadrature import (
    SphereQuadrature,
    build_quadrature,
    fourth_moment,
    fourth_moment_exact,
    second_moment,
    third_moment,
)


@pytest.fixture(scope="module")
def quad14():
    return build_quadrature(14)


def test_weights_sum_to_sphere_area(quad14):
    assert abs(quad14.weights.sum() - 4.0 * np.pi) < 1e-12


def test_nodes_are_unit(quad14):
    assert np.abs(np.linalg.norm(quad14.nodes, axis=1) - 1.0).max() < 1e-14


def test_antipodal_symmetry(quad14):
    pairs = quad14.antipodal_pairs()
    assert 2 * len(pairs) == len(quad14)
    for i, j in pairs:
        assert abs(quad14.weights[i] - quad14.weights[j]) < 1e-15


def test_second_moment_identity(quad14):
    assert np.abs(second_moment(quad14) - np.eye(3) / 3.0).max() < 1e-13


def test_third_moment_vanishes(quad14):
    assert np.abs(third_moment(quad14)).max() < 1e-13


def test_fourth_moment_identity(quad14):
    assert np.abs(fourth_moment(quad14) - fourth_moment_exact()).max() < 1e-13


@pytest.mark.parametrize("order", [6, 10, 20])
def test_polynomial_exactness(order):
    # integrate n_x^a n_y^b n_z^c for a+b+c <= order against the closed form
    quad = build_quadrature(order)

    def exact(a, b, c):
        if a % 2 or b % 2 or c % 2:
            return 0.0
        from math import gamma
        num = gamma((a + 1) / 2) * gamma((b + 1) / 2) * gamma((c + 1) / 2)
        return 2.0 * num / gamma((a + b + c + 3) / 2)

    rng = np.random.default_rng(0)
    exps = [(order, 0, 0), (0, order, 0), (0, 0, order)]
    for _ in range(10):
        a = int(rng.integers(0, order + 1))
        b = int(rng.integers(0, order + 1 - a))
        c = int(rng.integers(0, order + 1 - a - b))
        exps.append((a, b, c))
    n = quad.nodes
    for a, b, c in exps:
        val = float(np.sum(quad.weights * n[:, 0] ** a * n[:, 1] ** b * n[:, 2] ** c))
        assert abs(val - exact(a, b, c)) < 1e-12


def test_rotation_preserves_exactness():
    quad = build_quadrature(8)
    theta = 0.7
    rot = np.array([
        [np.cos(theta), -np.sin(theta), 0.0],
        [np.sin(theta), np.cos(theta), 0.0],
        [0.0, 0.0, 1.0],
    ])
    rq = quad.rotated(rot)
    assert np.abs(second_moment(rq) - np.eye(3) / 3.0).max() < 1e-13
    assert np.abs(fourth_moment(rq) - fourth_moment_exact()).max() < 1e-13


def test_unsupported_order_rejected():
    with pytest.raises(ValueError):
        build_quadrature(1)
    with pytest.raises(ValueError):
        build_quadrature(500)


def test_average_leading_axis(quad14):
    ones = np.ones(len(quad14))
    assert abs(quad14.average(ones) - 1.0) < 1e-14
    vecs = quad14.nodes
    assert np.abs(quad14.average(vecs)).max() < 1e-14


def test_bad_rotation_rejected(quad14):
    with pytest.raises(ValueError):
        quad14.rotated(np.eye(3) * 2.0)


def test_non_antipodal_rule_detected():
    nodes = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
    w = np.array([2 * np.pi, 2 * np.pi])
    q = SphereQuadrature(nodes, w, 0)
    with pytest.raises(ValueError):
        q.antipodal_pairs()
