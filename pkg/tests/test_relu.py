import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wosnet.checks import random_net
from wosnet.geometry import ConvexDomain, sample_uniform
from wosnet.relu import (
    NetworkError,
    ReluNet,
    affine,
    build_abs,
    build_dist_ball,
    build_dist_cube,
    build_max2,
    build_max_n,
    build_product,
    build_pwl_1d,
    build_sqrt,
    build_square,
    compose,
    identity,
    lemma_combination_bound,
    linear_combination,
    pad,
    parallelize,
    recount_size,
    sqrt_parameters,
)


def test_affine_only_net():
    net = affine(np.eye(2))
    assert np.array_equal(net([3.0, -4.0]), [3.0, -4.0])


def test_two_layer_relu_of_negative():
    net = ReluNet((([[1.0]], [0.0]), ([[1.0]], [0.0])))
    assert net([-5.0])[0] == 0.0


def test_abs_net():
    assert build_abs()([-0.7])[0] == 0.7
    assert build_abs()([-3.5])[0] == 3.5


def test_input_dimension_checked():
    with pytest.raises(NetworkError):
        build_abs()([1.0, 2.0])


def test_layer_chaining_checked():
    with pytest.raises(NetworkError):
        ReluNet(((np.ones((2, 1)), np.zeros(2)), (np.ones((1, 3)), np.zeros(1))))


def test_compose_abs_twice():
    assert compose(build_abs(), build_abs())([-2.0])[0] == 2.0


def test_compose_size_example():
    rng = np.random.default_rng(0)
    inner = ReluNet(((rng.standard_normal((2, 3)), np.array([1.0, 0.0])),))   # 6 + 1 nonzeros
    assert inner.size == 7
    outer = ReluNet(((np.array([[1.0, 2.0], [3.0, 0.0]]), [1.0, 0.0]), (np.array([[1.0, 1.0]]), [2.0])))
    outer_size = outer.size
    assert compose(outer, inner).size <= 2 * outer_size + 2 * inner.size


def test_compose_with_identity():
    rng = np.random.default_rng(1)
    f = random_net(rng, 3, 2, 3)
    x = rng.standard_normal((100, 3))
    g = compose(identity(2, depth=2), f)
    assert np.allclose(g(x), f(x), rtol=1e-12, atol=1e-12)


def test_cancelling_combination():
    rng = np.random.default_rng(2)
    f = random_net(rng, 2, 1, 3)
    x = rng.standard_normal((100, 2))
    assert np.max(np.abs(linear_combination([1, -1], [f, f])(x))) <= 1e-12


def test_scaled_abs():
    assert linear_combination([2.0], [build_abs()])([-3.0])[0] == 6.0


def test_combination_size_equal_depth():
    rng = np.random.default_rng(3)
    a, b = random_net(rng, 2, 1, 3), random_net(rng, 2, 1, 3)
    comb = linear_combination([0.5, 2.0], [a, b])
    assert comb.size <= a.size + b.size + a.width + b.width + 2


def test_parallel_abs_independent_inputs():
    net = parallelize([build_abs(), build_abs()], shared_input=False)
    assert np.array_equal(net([-1.0, 2.0]), [1.0, 2.0])


def test_parallel_widths_add():
    net = parallelize([build_abs(), build_max2()], shared_input=False)
    assert net.dims[1] == build_abs().dims[1] + build_max2().dims[1]


def test_pad_keeps_realization():
    rng = np.random.default_rng(4)
    f = random_net(rng, 3, 2, 2)
    x = rng.standard_normal((50, 3))
    p = pad(f, 3)
    assert p.depth == f.depth + 3
    assert np.allclose(p(x), f(x), rtol=1e-12, atol=1e-12)


def test_serialization_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    f = random_net(rng, 4, 2, 4)
    path = tmp_path / "net.json"
    f.save(path)
    g = ReluNet.load(path)
    x = rng.standard_normal((64, 4))
    assert np.array_equal(f(x), g(x))
    data = json.loads(path.read_text())
    assert data["dims"] == f.dims


def test_loader_rejects_bad_dims():
    data = affine(np.eye(2)).to_dict()
    data["dims"] = [3, 2]
    with pytest.raises(NetworkError):
        ReluNet.from_dict(data)


def test_square_nodes_exact():
    sq = build_square(1e-4)
    assert sq([0.0])[0] == 0.0
    assert sq([1.0])[0] == 1.0


def test_square_one_sided():
    x = np.linspace(-1, 1, 10_001)
    for d2 in (1e-2, 1e-4):
        diff = build_square(d2)(x[:, None])[:, 0] - x ** 2
        assert diff.min() >= -1e-15 and diff.max() <= d2


def test_square_size_logarithmic():
    deltas = [1e-2, 1e-4, 1e-6]
    ratios = [build_square(d).size / math.log2(1 / d) for d in deltas]
    assert max(ratios) / min(ratios) < 2.0
    slope = np.polyfit([math.log2(1 / d) for d in deltas], [build_square(d).size for d in deltas], 1)[0]
    assert slope > 0


def test_product_examples():
    assert build_product(1e-3, 1.0)([0.0, 0.0])[0] == 0.0
    assert abs(build_product(1e-3, 1.0)([1.0, 1.0])[0] - 1.0) <= 1e-3
    t = np.linspace(-2, 2, 200)
    a, b = (v.ravel() for v in np.meshgrid(t, t))
    err = np.abs(build_product(1e-2, 2.0)(np.column_stack([a, b]))[:, 0] - a * b)
    assert err.max() <= 1e-2


def test_product_with_zero_factor_vanishes_to_rounding():
    p = build_product(1e-3, 3.0)
    a = np.linspace(-3, 3, 101)
    assert np.max(np.abs(p(np.column_stack([a, np.zeros_like(a)]))[:, 0])) <= 1e-12


def test_sqrt_examples():
    net = build_sqrt(1e-2)
    assert abs(net([1.0])[0] - 1.0) <= 1e-2
    assert abs(net([0.0])[0]) <= 1e-2
    net3 = build_sqrt(1e-3)
    assert abs(net3([2.0])[0] - math.sqrt(2)) <= 1e-3


def test_sqrt_parameters_report_conditions():
    p = sqrt_parameters(1e-2)
    assert p["delta"] == pytest.approx(2.5e-3)
    lg = math.log
    d = p["delta"]
    assert p["n_iter"] == math.ceil((lg(lg(0.5) + 3 * lg(1 / d)) + 2 * lg(1 / d)) / lg(2))
    assert p["eps_mult"] == pytest.approx(1e-2 / 2 * (d / 4) ** 7 / 64)


def test_max_networks():
    assert build_max2()([2.0, 5.0])[0] == 5.0
    assert build_max_n(4)([1.0, -2.0, 7.0, 3.0])[0] == 7.0
    assert build_max_n(1)([4.0])[0] == 4.0


def test_cube_distance_examples():
    assert build_dist_cube(3)(np.zeros(3))[0] == 0.5
    assert build_dist_cube(2)([0.1, -0.3])[0] == pytest.approx(0.2, abs=1e-15)


def test_cube_distance_size_linear():
    ratios = [build_dist_cube(d).size / d for d in (2, 4, 8, 16, 32)]
    assert max(ratios) / min(ratios) < 1.5


def test_ball_distance_examples():
    net = build_dist_ball(3, 1e-2)
    assert abs(net(np.zeros(3))[0] - 1.0) <= 1e-2
    assert abs(net(np.eye(3)[0])[0]) <= 1e-2
    ball5 = ConvexDomain.ball(5)
    x = sample_uniform(ball5, np.random.default_rng(0), 1000)
    err = np.abs(build_dist_ball(5, 1e-2)(x)[:, 0] - ball5.signed_dist(x))
    assert err.max() <= 1e-2


def test_piecewise_linear_interpolant_exact_at_knots():
    knots = np.linspace(-1, 1, 9)
    vals = np.cos(3 * knots)
    net = build_pwl_1d(knots, vals)
    assert np.allclose(net(knots[:, None])[:, 0], vals, atol=1e-13)


net_shapes = st.tuples(st.integers(1, 4), st.integers(1, 3), st.integers(1, 5), st.integers(0, 2 ** 31))


@settings(max_examples=60, deadline=None)
@given(net_shapes, st.integers(1, 5))
def test_compose_exact_and_within_size_bound(shape, outer_depth):
    d, k, depth, seed = shape
    rng = np.random.default_rng(seed)
    inner = random_net(rng, d, k, depth)
    outer = random_net(rng, k, 2, outer_depth)
    comp = compose(outer, inner)
    x = rng.uniform(-2, 2, (100, d))
    ref = outer(inner(x))
    assert np.max(np.abs(comp(x) - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))
    assert comp.size <= 2 * outer.size + 2 * inner.size
    assert comp.size == recount_size(comp)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.lists(st.integers(1, 6), min_size=1, max_size=5), st.integers(0, 2 ** 31))
def test_combination_exact_and_within_size_bound(d, depths, seed):
    rng = np.random.default_rng(seed)
    nets = [random_net(rng, d, 1, L) for L in depths]
    coeffs = rng.standard_normal(len(nets))
    comb = linear_combination(coeffs, nets)
    x = rng.uniform(-2, 2, (100, d))
    ref = sum(a * n(x) for a, n in zip(coeffs, nets))
    assert np.max(np.abs(comb(x) - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))
    assert comb.size <= lemma_combination_bound(nets)
    assert comb.size == recount_size(comb)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.lists(st.integers(1, 5), min_size=1, max_size=4), st.booleans(),
       st.integers(0, 2 ** 31))
def test_parallel_exact(d, depths, shared, seed):
    rng = np.random.default_rng(seed)
    nets = [random_net(rng, d, int(rng.integers(1, 3)), L) for L in depths]
    par = parallelize(nets, shared_input=shared)
    if shared:
        x = rng.standard_normal((50, d))
        ref = np.hstack([n(x) for n in nets])
    else:
        xs = [rng.standard_normal((50, d)) for _ in nets]
        x = np.hstack(xs)
        ref = np.hstack([n(xi) for n, xi in zip(nets, xs)])
    assert np.max(np.abs(par(x) - ref)) <= 1e-12 * max(1.0, np.max(np.abs(ref)))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 4.0), st.sampled_from([1e-1, 1e-2, 1e-3]), st.integers(0, 2 ** 31))
def test_product_error_within_range(c, delta, seed):
    rng = np.random.default_rng(seed)
    ab = rng.uniform(-c, c, (500, 2))
    err = np.abs(build_product(delta, c)(ab)[:, 0] - ab[:, 0] * ab[:, 1])
    assert err.max() <= delta
