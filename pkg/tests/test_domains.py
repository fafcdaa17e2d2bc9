import numpy as np
import pytest

import truncstein as ts
from truncstein.errors import ConfigError, DataDomainMismatchError, EmptyDomainError

from conftest import central_difference_gradient


def test_rectangle_kappa_matches_factored_form(square):
    # kappa(x) = (x1-1)(x1+1)(x2-1)(x2+1) on (-1,1)^2
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(50, 2))
    expected = (x[:, 0] - 1) * (x[:, 0] + 1) * (x[:, 1] - 1) * (x[:, 1] + 1)
    assert np.allclose(square.kappa(x), expected, atol=1e-14)
    assert square.kappa([0.5, 0.0]) == pytest.approx(0.75)


def test_rectangle_membership_is_open(square):
    assert square.contains([0.0, 0.0])
    assert not square.contains([1.0, 0.0])
    assert not square.contains([0.0, -1.0])
    assert not square.contains([2.0, 0.0])


def test_rectangle_grad_kappa_symmetry(square):
    assert np.allclose(square.grad_kappa([0.0, 0.0]), [0.0, 0.0])


def test_rectangle_invalid_bounds():
    with pytest.raises(ConfigError):
        ts.rectangle_domain([0.0, 0.0], [1.0, 0.0])


def test_ball_domains_from_benchmarks(gamma_disc, beta_disc):
    assert gamma_disc.contains([0.0, 2.0])
    assert not gamma_disc.contains([0.0, 0.5])     # outside the circle
    assert beta_disc.contains([0.0, 0.5])
    assert not beta_disc.contains([0.6, 0.5])
    assert np.allclose(gamma_disc.grad_kappa([0.0, 2.0]), [0.0, 0.0])
    x = np.array([0.3, 2.2])
    assert np.allclose(gamma_disc.grad_kappa(x), 2.0 * (x - gamma_disc.m))


def test_ball_support_excludes_edge():
    dom = ts.ball_domain([0.0, 0.2], 1.0, ["reals", "positive_halfline"])
    assert dom.contains([0.0, 0.2])
    assert not dom.contains([0.0, 0.0])          # support edge
    assert not dom.contains([0.0, -0.1])


def test_ball_empty_intersection():
    with pytest.raises(EmptyDomainError):
        ts.ball_domain([0.0, -5.0], 1.0, ["reals", "positive_halfline"])


def test_union_reduces_to_single_ball():
    ball = ts.ball_domain([0.0, 0.0], 1.0)
    union = ts.union_of_balls_domain([[0.0, 0.0]], 1.0)
    rng = np.random.default_rng(1)
    x = rng.uniform(-1.5, 1.5, size=(200, 2))
    assert np.array_equal(ball.contains(x), union.contains(x))
    assert np.allclose(ball.kappa(x), union.kappa(x))
    assert np.allclose(ball.grad_kappa(x), union.grad_kappa(x))


def test_union_tangent_point_is_kappa_zero():
    union = ts.union_of_balls_domain([[-1.0, 0.0], [1.0, 0.0]], 1.0)
    assert union.kappa([0.0, 0.0]) == pytest.approx(0.0, abs=1e-14)


def test_union_area_hit_or_miss():
    # Monte Carlo area of two disjoint unit balls is 2*pi within 1%
    union = ts.union_of_balls_domain([[0.0, 0.0], [3.0, 0.0]], 1.0)
    rng = np.random.default_rng(2)
    lo, hi = union.bounding_box()
    n = 400_000
    pts = lo + (hi - lo) * rng.random((n, 2))
    box_area = np.prod(hi - lo)
    area = box_area * np.mean(union.contains(pts))
    assert area == pytest.approx(2.0 * np.pi, rel=0.01)


def test_kappa_zero_on_generated_boundary(square, gamma_disc, beta_disc):
    rng = np.random.default_rng(3)
    union = ts.union_of_balls_domain([[0.0, 0.0], [1.5, 0.0]], 1.0)
    for dom in (square, gamma_disc, beta_disc, union):
        pts = dom.boundary_points(500, rng)
        scale = max(1.0, float(np.max(np.abs(dom.kappa(pts)))))
        assert np.max(np.abs(dom.kappa(pts))) <= 1e-9 * max(scale, 1.0)


def test_kappa_constant_sign_inside(square, gamma_disc, beta_disc):
    rng = np.random.default_rng(4)
    for dom in (square, gamma_disc, beta_disc):
        lo, hi = dom.bounding_box()
        pts = lo + (hi - lo) * rng.random((10_000, 2))
        pts = pts[dom.contains(pts)]
        signs = np.sign(dom.kappa(pts))
        assert np.all(signs == signs[0])


def test_membership_consistent_with_kappa_sign(square, gamma_disc):
    rng = np.random.default_rng(5)
    for dom, interior_sign in ((square, 1.0), (gamma_disc, -1.0)):
        lo, hi = dom.bounding_box()
        span = hi - lo
        pts = lo - 0.2 * span + 1.4 * span * rng.random((5000, 2))
        member = dom.contains(pts)
        k = dom.kappa(pts)
        # every member has the interior sign; non-members inside the bounding
        # box of a single-factor domain have the opposite sign
        assert np.all(np.sign(k[member]) == interior_sign)


def test_grad_kappa_finite_differences(square, gamma_disc, beta_disc):
    rng = np.random.default_rng(6)
    union = ts.union_of_balls_domain([[0.0, 0.0], [1.5, 0.0]], 1.0)
    for dom in (square, gamma_disc, beta_disc, union):
        lo, hi = dom.bounding_box()
        pts = lo + (hi - lo) * rng.random((400, 2))
        pts = pts[dom.contains(pts)][:100]
        grads = dom.grad_kappa(pts)
        for x, g in zip(pts, grads):
            fd = central_difference_gradient(lambda p: dom.kappa(p), x)
            assert np.allclose(g, fd, rtol=1e-6, atol=1e-6)


def test_boundary_distance_examples(square, gamma_disc):
    assert square.boundary_distance([0.0, 0.0]) == pytest.approx(1.0)
    assert square.boundary_distance([0.5, 0.0]) == pytest.approx(0.5)
    assert gamma_disc.boundary_distance([0.0, 2.0]) == pytest.approx(1.0)
    with pytest.raises(DataDomainMismatchError):
        square.boundary_distance([2.0, 0.0])


def test_boundary_distance_lower_bounds_sampled_distances(square, gamma_disc, beta_disc):
    rng = np.random.default_rng(7)
    union = ts.union_of_balls_domain([[0.0, 0.0], [1.5, 0.0]], 1.0)
    for dom in (square, gamma_disc, beta_disc, union):
        bpts = dom.boundary_points(100_000, rng)
        lo, hi = dom.bounding_box()
        pts = lo + (hi - lo) * rng.random((200, 2))
        pts = pts[dom.contains(pts)][:40]
        d = dom.boundary_distance(pts)
        for x, dx in zip(pts, d):
            sampled = np.min(np.linalg.norm(bpts - x, axis=1))
            assert sampled >= dx - 1e-3


def test_grad_boundary_distance_unit_norm(square, gamma_disc):
    rng = np.random.default_rng(8)
    for dom in (square, gamma_disc):
        lo, hi = dom.bounding_box()
        pts = lo + (hi - lo) * rng.random((100, 2))
        pts = pts[dom.contains(pts)]
        g = dom.grad_boundary_distance(pts)
        assert np.allclose(np.linalg.norm(g, axis=1), 1.0)


def test_domain_spec_roundtrip(square, gamma_disc, beta_disc):
    union = ts.union_of_balls_domain([[0.0, 0.0], [1.5, 0.0]], 1.0)
    rng = np.random.default_rng(9)
    for dom in (square, gamma_disc, beta_disc, union):
        clone = ts.domain_from_spec(dom.spec())
        pts = rng.uniform(-2, 3, size=(500, 2))
        assert np.array_equal(dom.contains(pts), clone.contains(pts))
        assert np.allclose(dom.kappa(pts), clone.kappa(pts))


def test_domain_spec_errors():
    with pytest.raises(ConfigError):
        ts.domain_from_spec({"kind": "pentagon"})
    with pytest.raises(ConfigError):
        ts.domain_from_spec({"kind": "ball", "m": [0, 0]})
    with pytest.raises(ConfigError):
        ts.domain_from_spec("not a mapping")
