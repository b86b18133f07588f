"""Constructive ReLU networks: exact piecewise-linear maps and approximations
of the square, the product, the square root and distance functions.
"""
from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np

from .net import (
    NetworkError,
    ReluNet,
    affine,
    affine_after,
    affine_before,
    compose,
    identity,
    linear_combination,
    pad,
    parallelize,
)


def build_abs() -> ReluNet:
    """``|y| = σ(y) + σ(−y)``."""
    return ReluNet((([[1.0], [-1.0]], [0.0, 0.0]), ([[1.0, 1.0]], [0.0])))


def build_relu() -> ReluNet:
    return ReluNet((([[1.0]], [0.0]), ([[1.0]], [0.0])))


def _max_tree(first_A: np.ndarray, first_b: np.ndarray, head=None) -> list:
    """Layers computing the max of the affine values ``first_A x + first_b``.

    Uses ``max(y, z) = σ(y − z) + σ(z) − σ(−z)`` pairwise in a balanced tree.
    If ``head`` is given it is a list of leading layers and the values are
    read from its last hidden activations instead of from the input.
    Returns ``(layers, R, c)`` with the final value ``R h + c``; callers
    handle the single-value case without a head themselves.
    """
    layers = list(head or [])
    R, c = np.asarray(first_A, dtype=float), np.asarray(first_b, dtype=float)
    n = R.shape[0]
    while n > 1:
        rows, readout = [], []
        k = 0
        for i in range(0, n - 1, 2):
            rows += [[(i, 1), (i + 1, -1)], [(i + 1, 1)], [(i + 1, -1)]]
            readout.append([(k, 1), (k + 1, 1), (k + 2, -1)])
            k += 3
        if n % 2:
            rows += [[(n - 1, 1)], [(n - 1, -1)]]
            readout.append([(k, 1), (k + 1, -1)])
            k += 2
        P = np.zeros((len(rows), n))
        for r, terms in enumerate(rows):
            for j, s in terms:
                P[r, j] = s
        layers.append((P @ R, P @ c))
        R = np.zeros((len(readout), k))
        for r, terms in enumerate(readout):
            for j, s in terms:
                R[r, j] = s
        c = np.zeros(len(readout))
        n = len(readout)
    return layers, R, c


def build_max2() -> ReluNet:
    """``max{y, z} = σ(y − z) + z``, with ``z = σ(z) − σ(−z)``."""
    return build_max_n(2)


def build_max_n(n: int) -> ReluNet:
    """Exact maximum of ``n`` inputs, size ``O(n)``."""
    if n < 1:
        raise NetworkError("max of zero inputs")
    if n == 1:
        return identity(1)
    layers, R, c = _max_tree(np.eye(n), np.zeros(n))
    return ReluNet(tuple(layers) + ((R, c),))


def build_dist_cube(d: int, side: float = 1.0) -> ReluNet:
    """Exact ``s/2 − max_i |x_i|`` on ``R^d``."""
    if d < 1 or side <= 0:
        raise NetworkError("invalid cube")
    eye = np.eye(d)
    head = [(np.vstack([eye, -eye]), np.zeros(2 * d))]
    R0 = np.hstack([eye, eye])  # |x_i| from [σ(x), σ(−x)]
    layers, R, c = _max_tree(R0, np.zeros(d), head=head)
    return ReluNet(tuple(layers) + ((-R, side / 2 - c),))


def square_levels(delta2: float, max_levels: Optional[int] = None) -> int:
    m = int(math.ceil(0.5 * math.log2(1.0 / delta2))) + 1
    m = max(m, 1)
    return m if max_levels is None else min(m, max_levels)


def build_square(delta2: float, max_levels: Optional[int] = None) -> ReluNet:
    """Approximate ``x ↦ x²`` on ``[−1, 1]`` from above, error ``≤ delta2``.

    The input goes through ``|·|``, then ``m`` sawtooth levels build the
    piecewise-linear interpolant of ``t²`` at ``2^m + 1`` uniform nodes::

        f_m(t) = t − Σ_{s=1}^m g_s(t) / 4^s,   g = tooth map, g_s = g∘…∘g

    Chords of a convex function lie above it, so ``0 ≤ f_m(t) − t² ≤ 2^{-2m-2}``.
    For ``|x| > 1`` the output is ``|x|`` (still nonnegative).
    """
    if not 0 < delta2 < 1:
        raise NetworkError("delta2 must lie in (0, 1)")
    m = square_levels(delta2, max_levels)
    layers = [(np.array([[1.0], [-1.0]]), np.zeros(2))]
    # hidden → (t, a) readouts; initially both equal |x|
    R_t, c_t = np.array([1.0, 1.0]), 0.0
    R_a, c_a = np.array([1.0, 1.0]), 0.0
    for s in range(1, m + 1):
        A = np.vstack([R_t, R_t, R_t, R_a])
        b = np.array([c_t, c_t - 0.5, c_t - 1.0, c_a])
        layers.append((A, b))
        w = 4.0 ** -s
        R_t, c_t = np.array([2.0, -4.0, 2.0, 0.0]), 0.0
        R_a, c_a = np.array([-2.0 * w, 4.0 * w, -2.0 * w, 1.0]), 0.0
    layers.append((R_a[None, :], np.array([c_a])))
    return ReluNet(tuple(layers))


def build_product(delta: float, c: float = 1.0, max_levels: Optional[int] = None) -> ReluNet:
    """Approximate ``(a, b) ↦ ab`` on ``[−c, c]²`` to accuracy ``delta``.

    Polarization: ``ab = 2c² [((a+b)/2c)² − (a/2c)² − (b/2c)²]``. The three
    squares are nonnegative, so they pass through one more ReLU unchanged
    before the final combination; that keeps ``×(a, 0) = 0`` exact.
    """
    if not 0 < delta < 1 or c <= 0:
        raise NetworkError("invalid product accuracy or range")
    # each square errs in [0, δ₂]; the combination errs by at most 4c²δ₂
    delta2 = min(delta / (4 * c * c), 0.5)
    sq = build_square(delta2, max_levels)
    h = 1.0 / (2 * c)
    sqs = [affine_before(sq, [[h, h]]), affine_before(sq, [[h, 0.0]]), affine_before(sq, [[0.0, h]])]
    stacked = parallelize(sqs, shared_input=True)
    final = (np.array([[2 * c * c, -2 * c * c, -2 * c * c]]), np.zeros(1))
    return ReluNet(stacked.layers + (final,))


def sqrt_parameters(delta_bar: float, c_sqrt: float = 64.0, eta: Optional[float] = None) -> dict:
    """Iteration count and multiplication accuracy for :func:`build_sqrt`."""
    if not 0 < delta_bar < 1:
        raise NetworkError("delta_bar must lie in (0, 1)")
    delta = delta_bar / 4
    L = math.log(1 / delta)
    n_iter = int(math.ceil((math.log(math.log(0.5) + 3 * L) + 2 * L) / math.log(2)))
    eps = delta_bar / 2 * (delta / 4) ** 7 / c_sqrt
    eta = delta ** 2 / 2 if eta is None else eta
    return {
        "delta": delta,
        "n_iter": n_iter,
        "eps_mult": eps,
        "eta": eta,
        "cond_sqrt_eps": math.sqrt(eps) <= 1 / max(n_iter - 1, 1),
        "cond_eta_delta": (1 + eta) * (1 - delta ** 2) <= 1,
        "cond_eta_eps": (1 + 1 / eta) * math.sqrt(eps) <= 1,
    }


# Range bounds for the product nets inside the square-root iteration:
# c_n ∈ [−1, 1 + δ²], (c_n − 3)/4 ∈ [−1, −1/2], s_n ∈ [0, 2 + δ²], 1 − c_n/2 ∈ [1/2, 3/2].
_C_RANGE = 1.5
_S_RANGE = 2.5


def _sqrt_step(eps: float, max_levels: Optional[int]) -> ReluNet:
    """One step ``(s, c) ↦ (×(s, 1 − c/2), ×(×(c, c), (c − 3)/4))``."""
    p_c = build_product(eps / 2, _C_RANGE, max_levels)
    p_s = build_product(eps, _S_RANGE, max_levels)
    s_next = affine_before(p_s, [[1.0, 0.0], [0.0, -0.5]], [0.0, 1.0])
    c_sq = affine_before(p_c, [[0.0, 1.0], [0.0, 1.0]])
    c_lin = affine([[0.0, 0.25]], [-0.75])
    c_next = compose(p_c, parallelize([c_sq, c_lin], shared_input=True))
    return parallelize([s_next, c_next], shared_input=True)


def build_sqrt(delta_bar: float, c_sqrt: float = 64.0, max_levels: Optional[int] = None) -> ReluNet:
    """Approximate ``√x`` on ``[0, 2]`` to accuracy ``delta_bar``.

    Unrolls the coupled iteration ``s ← s − s c/2``, ``c ← c² (c − 3)/4``
    from ``s₀ = x + δ²``, ``c₀ = s₀ − 1`` (``δ = delta_bar/4``), which keeps
    ``x (1 + c_n) = s_n²`` and converges quadratically; each multiplication
    is a product network.
    """
    p = sqrt_parameters(delta_bar, c_sqrt)
    step = _sqrt_step(p["eps_mult"], max_levels)
    shift = p["delta"] ** 2
    net = affine([[1.0], [1.0]], [shift, shift - 1.0])
    for _ in range(p["n_iter"]):
        net = compose(step, net)
    return affine_after(net, [[1.0, 0.0]])


def build_dist_ball(d: int, delta: float, radius: float = 1.0,
                    c_sqrt: float = 64.0, max_levels: Optional[int] = None) -> ReluNet:
    """Approximate ``R − |x|`` on the ball of radius ``R`` to accuracy ``delta``.

    ``R (1 − sqrt(Σ_i sq(x_i/R)))`` with square accuracy ``(δ/R)²/(2d)²`` and
    square-root accuracy ``δ/(2R)``.
    """
    if d < 1 or not 0 < delta < 1:
        raise NetworkError("invalid dimension or accuracy")
    unit = delta / radius
    if unit >= 1:
        raise NetworkError("delta must be below the radius")
    d1 = unit / 2
    d2 = unit ** 2 / (2 * d) ** 2
    if d2 > 1 / d:
        raise NetworkError("square accuracy must not exceed 1/d")
    sq = build_square(d2, max_levels)
    sum_sq = affine_after(
        parallelize([affine_before(sq, np.eye(d)[i:i + 1] / radius) for i in range(d)],
                    shared_input=True),
        np.ones((1, d)))
    root = build_sqrt(d1, c_sqrt, max_levels)
    return affine_after(compose(root, sum_sq), [[-radius]], [radius])


def build_constant(d: int, value: float) -> ReluNet:
    return affine(np.zeros((1, d)), [value])


def build_linear(weights, bias: float = 0.0) -> ReluNet:
    w = np.asarray(weights, dtype=float).reshape(1, -1)
    return affine(w, [bias])


def build_pwl_1d(knots: Sequence[float], values: Sequence[float]) -> ReluNet:
    """Exact continuous piecewise-linear interpolant through ``(knots, values)``.

    Linear extrapolation beyond the end knots.
    """
    t = np.asarray(knots, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(t) < 2 or np.any(np.diff(t) <= 0):
        raise NetworkError("need at least two increasing knots")
    slopes = np.diff(v) / np.diff(t)
    # f(x) = v0 + s0 (x − t0) + Σ_{j≥1} (s_j − s_{j−1}) σ(x − t_j); x − t0 via ±ReLU pair
    kinks = np.diff(slopes)
    A1 = np.concatenate([[1.0, -1.0], np.ones(len(kinks))])[:, None]
    b1 = np.concatenate([[-t[0], t[0]], -t[1:-1]])
    A2 = np.concatenate([[slopes[0], -slopes[0]], kinks])[None, :]
    return ReluNet(((A1, b1), (A2, [v[0]])))


def build_additive_surrogate(d: int, funcs: Sequence[Callable[[np.ndarray], np.ndarray]],
                             lo: float, hi: float, n_knots: int = 17) -> ReluNet:
    """ReLU surrogate of ``x ↦ Σ_i h_i(x_i)``, each ``h_i`` interpolated on a uniform grid."""
    if len(funcs) != d:
        raise NetworkError("need one coordinate function per dimension")
    knots = np.linspace(lo, hi, n_knots)
    parts = [affine_before(build_pwl_1d(knots, np.asarray(h(knots), dtype=float)),
                           np.eye(d)[i:i + 1]) for i, h in enumerate(funcs)]
    return linear_combination([1.0] * d, parts)


__all__ = [
    "build_abs", "build_relu", "build_max2", "build_max_n", "build_dist_cube",
    "build_square", "build_product", "build_sqrt", "sqrt_parameters",
    "build_dist_ball", "build_constant", "build_linear", "build_pwl_1d",
    "build_additive_surrogate", "square_levels", "pad",
]
