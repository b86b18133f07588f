"""ReLU network representation, calculus and constructive builders."""
from .net import (
    NetworkError,
    ReluNet,
    affine,
    affine_after,
    affine_before,
    compose,
    eval_net,
    identity,
    lemma_combination_bound,
    linear_combination,
    pad,
    parallelize,
    recount_size,
)
from .builders import (
    build_abs,
    build_additive_surrogate,
    build_constant,
    build_dist_ball,
    build_dist_cube,
    build_linear,
    build_max2,
    build_max_n,
    build_product,
    build_pwl_1d,
    build_relu,
    build_sqrt,
    build_square,
    sqrt_parameters,
)
