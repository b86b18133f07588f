"""Property checks run by ``wosnet verify``.

Each check returns a :class:`CheckResult` with the measured quantity, the
bound it is compared against and the margin ``bound − measured``. The bound
is multiplied by ``tolerance_scale``; values below 1 tighten every check and
serve as negative controls.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .geometry import ConvexDomain, sample_uniform
from .relu import (
    ReluNet,
    build_dist_ball,
    build_dist_cube,
    build_product,
    build_sqrt,
    compose,
    lemma_combination_bound,
    linear_combination,
    parallelize,
)
from .wos import k1_estimate, kappa, estimate_sup_n_eps, walk_statistics


@dataclass
class CheckResult:
    name: str
    measured: float
    bound: float
    passed: bool
    detail: str = ""

    @property
    def margin(self) -> float:
        return self.bound - self.measured

    def to_dict(self) -> dict:
        out = asdict(self)
        out["margin"] = self.margin
        return out


def _result(name, measured, bound, detail="", strict=False) -> CheckResult:
    ok = measured < bound if strict else measured <= bound
    return CheckResult(name, float(measured), float(bound), bool(ok), detail)


def random_net(rng: np.random.Generator, in_dim: int, out_dim: int, depth: int,
               width: int = 6, density: float = 0.7) -> ReluNet:
    """A random network with some exact zeros, used by the calculus checks."""
    dims = [in_dim] + [int(rng.integers(1, width + 1)) for _ in range(depth - 1)] + [out_dim]
    layers = []
    for i in range(depth):
        A = rng.standard_normal((dims[i + 1], dims[i])) * (rng.random((dims[i + 1], dims[i])) < density)
        b = rng.standard_normal(dims[i + 1]) * (rng.random(dims[i + 1]) < density)
        layers.append((A, b))
    return ReluNet(tuple(layers))


def check_sqrt(scale=1.0, deltas=(1e-1, 1e-2), n_grid=10_000) -> list:
    x = np.linspace(0.0, 2.0, n_grid)
    out = []
    for db in deltas:
        err = np.max(np.abs(build_sqrt(db)(x[:, None])[:, 0] - np.sqrt(x)))
        out.append(_result(f"sqrt[delta_bar={db:g}]", err, scale * db, "sup error on [0, 2]"))
    return out


def check_product(scale=1.0, cases=((1.0, 1e-2), (2.0, 1e-3)), n_side=101) -> list:
    out = []
    for c, delta in cases:
        t = np.linspace(-c, c, n_side)
        a, b = (v.ravel() for v in np.meshgrid(t, t))
        err = np.max(np.abs(build_product(delta, c)(np.column_stack([a, b]))[:, 0] - a * b))
        out.append(_result(f"product[c={c:g},delta={delta:g}]", err, scale * delta, "grid sup error"))
    return out


def check_calculus(scale=1.0, pairs=20, seed=0) -> list:
    rng = np.random.default_rng(seed)
    worst_err, worst_comp, worst_comb = 0.0, -math.inf, -math.inf
    for _ in range(pairs):
        d = int(rng.integers(1, 5))
        inner = random_net(rng, d, int(rng.integers(1, 4)), int(rng.integers(1, 5)))
        outer = random_net(rng, inner.out_dim, 1, int(rng.integers(1, 5)))
        other = random_net(rng, d, 1, int(rng.integers(1, 6)))
        x = rng.standard_normal((200, d))
        comp = compose(outer, inner)
        worst_err = max(worst_err, np.max(np.abs(comp(x) - outer(inner(x)))))
        worst_comp = max(worst_comp, comp.size - 2 * outer.size - 2 * inner.size)
        nets = [compose(outer, inner), other]
        a = rng.standard_normal(2)
        comb = linear_combination(a, nets)
        ref = a[0] * nets[0](x) + a[1] * nets[1](x)
        worst_err = max(worst_err, np.max(np.abs(comb(x) - ref)) / max(1.0, np.max(np.abs(ref))))
        worst_comb = max(worst_comb, comb.size - lemma_combination_bound(nets))
        par = parallelize([inner, other])
        worst_err = max(worst_err, np.max(np.abs(par(x) - np.hstack([inner(x), other(x)]))))
    return [
        _result("calculus.exactness", worst_err, scale * 1e-12, "max deviation on random inputs"),
        _result("calculus.compose_size", worst_comp, 0.0, "size - (2 s_outer + 2 s_inner)"),
        _result("calculus.combination_size", worst_comb, 0.0, "size - lemma bound"),
    ]


def check_distance(scale=1.0, cube_dims=(2, 8), ball_cases=((3, 1e-2),), seed=0) -> list:
    rng = np.random.default_rng(seed)
    out = []
    for d in cube_dims:
        dom = ConvexDomain.cube(d)
        x = sample_uniform(dom, rng, 1000)
        err = np.max(np.abs(build_dist_cube(d)(x)[:, 0] - dom.signed_dist(x)))
        out.append(_result(f"dist_cube[d={d}]", err, scale * 1e-12, "exact max network"))
    for d, delta in ball_cases:
        dom = ConvexDomain.ball(d)
        x = sample_uniform(dom, rng, 1000)
        err = np.max(np.abs(build_dist_ball(d, delta)(x)[:, 0] - dom.signed_dist(x)))
        out.append(_result(f"dist_ball[d={d},delta={delta:g}]", err, scale * delta, "sup on ball points"))
    return out


def check_kappa(scale=1.0, dims=(3, 5, 10)) -> list:
    out = []
    for d in dims:
        est = k1_estimate(lambda y: np.ones(len(y)), d, 64, rng=d)
        dev = abs(est.value - kappa(d)) + est.std_error
        out.append(_result(f"kappa[d={d}]", dev, scale * 1e-15, "k1 of the constant one"))
    return out


def check_exit_time(scale=1.0, M=10_000, seed=0) -> list:
    dom = ConvexDomain.ball(3)
    out = []
    for x in (np.zeros(3), np.array([0.5, 0.0, 0.0])):
        s = walk_statistics(dom, x, M, 1e-4, rng=seed)["sum_r2"]
        se = s.std(ddof=1) / math.sqrt(M)
        target = 1 - x @ x
        out.append(_result(f"exit_time[|x|={np.linalg.norm(x):g}]", abs(s.mean() - target),
                           scale * 3 * se, "E sum r_k^2 vs R^2 - |x|^2 (3 std errors)"))
    return out


def check_boundary_layer(scale=1.0, M=2000, seed=0) -> list:
    # from the centre of a ball the first step lands on the sphere, so use a cube
    dom = ConvexDomain.cube(3)
    out = []
    for eps in (0.05, 0.1):
        tail = walk_statistics(dom, np.zeros(3), M, eps, rng=seed, eps_tail=1e-6)["tail"]
        out.append(_result(f"boundary_layer[eps={eps:g}]", tail.mean() / dom.dim,
                           scale * dom.diam * eps, "post-shell time vs diam * eps"))
    return out


def check_path_count(scale=1.0, trials=100, seed=0) -> list:
    out = []
    for dom in (ConvexDomain.ball(3), ConvexDomain.cube(5)):
        probes = sample_uniform(dom, np.random.default_rng(seed), 20) * 0.5
        for eps in (0.05, 0.1):
            res = estimate_sup_n_eps(dom, eps, probes, trials, rng=seed)
            out.append(_result(f"path_count[{dom.kind}{dom.dim},eps={eps:g}]", res["value"],
                               scale * res["bound"], "mean max-over-probes N(eps)"))
    return out


CHECKS: dict[str, Callable[..., list]] = {
    "sqrt": check_sqrt,
    "product": check_product,
    "calculus": check_calculus,
    "distance": check_distance,
    "kappa": check_kappa,
    "exit_time": check_exit_time,
    "boundary_layer": check_boundary_layer,
    "path_count": check_path_count,
}


def run_checks(only=None, tolerance_scale: float = 1.0) -> list:
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks {unknown}; choose from {', '.join(CHECKS)}")
    results = []
    for n in names:
        results.extend(CHECKS[n](scale=tolerance_scale))
    return results
