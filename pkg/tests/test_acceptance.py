"""Acceptance suite. Every test prints a single PASS/FAIL line, then asserts."""
import json
import math
import time

import numpy as np
import pytest
from scipy import integrate

from wosnet.catalog import get_problem
from wosnet.checks import random_net
from wosnet.cli import main
from wosnet.geometry import ConvexDomain, sample_uniform
from wosnet.relu import (
    build_dist_ball,
    build_dist_cube,
    build_product,
    build_sqrt,
    compose,
    lemma_combination_bound,
    linear_combination,
    parallelize,
)
from wosnet.synthesis import (
    Surrogates,
    default_product_net,
    flatten,
    freeze_tableau,
    l2_error,
    make_plan,
    phi_u_eval,
)
from wosnet.wos import WosConfig, estimate_sup_n_eps, k1_estimate, kappa, solve_points, walk_statistics


@pytest.fixture
def verdict(capsys):
    def report(tag, ok, detail, elapsed=None, limit=None):
        if limit is not None:
            ok = ok and elapsed < limit
            detail = f"{detail}; {elapsed:.1f}s (limit {limit:g}s)"
        with capsys.disabled():
            print(f"\n[{tag}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return report


def test_a1_exit_time_second_moment(verdict):
    t0 = time.perf_counter()
    worst, rows = -math.inf, []
    for d in (3, 10):
        ball = ConvexDomain.ball(d)
        for r in (0.0, 0.5):
            x = np.zeros(d)
            x[0] = r
            s = walk_statistics(ball, x, 10_000, 1e-4, rng=[d, int(10 * r)])["sum_r2"]
            se = s.std(ddof=1) / math.sqrt(len(s))
            dev = abs(s.mean() - (1 - r * r))
            # from the centre the walk exits in one step, so se is 0 and dev must be 0
            worst = max(worst, dev - 3 * se)
            rows.append(f"d={d},|x|={r}: {s.mean():.5f}±{se:.1e}")
    verdict("A1", worst <= 0, "; ".join(rows), time.perf_counter() - t0, 30)


def test_a2_kappa_exact(verdict):
    devs = []
    for d in (3, 5, 10):
        est = k1_estimate(lambda y: np.ones(len(y)), d, 1000, rng=d)
        devs.append(max(abs(est.value - 1 / (2 * d)), est.std_error))
    assert kappa(3) == 1 / 6
    verdict("A2", max(devs) <= 1e-15, f"max deviation {max(devs):.1e} for d in 3, 5, 10")


def test_a3_boggio_moment(verdict):
    t0 = time.perf_counter()
    d = 3
    dens = lambda r: r - r ** (d - 1)
    oracle = kappa(d) * integrate.quad(lambda r: r ** 3 - r ** 4, 0, 1)[0] / integrate.quad(dens, 0, 1)[0]
    est = k1_estimate(lambda y: np.sum(y ** 2, axis=1), d, 100_000, rng=3)
    ok = abs(est.value - oracle) <= 3 * est.std_error and abs(oracle - 1 / 20) < 1e-14
    verdict("A3", ok, f"estimate {est.value:.6f}±{est.std_error:.1e}, oracle {oracle:.6f}",
            time.perf_counter() - t0, 10)


def test_a4_poisson_ball(verdict):
    t0 = time.perf_counter()
    eps, rows, ok = 1e-3, [], True
    for d in (3, 10):
        ball = ConvexDomain.ball(d)
        prob = get_problem("quadratic-ball", d)
        pts = sample_uniform(ball, np.random.default_rng(d), 5) * 0.9
        ests = solve_points(ball, prob.f, prob.g, pts, WosConfig(M=10_000, M2=16, eps=eps), rng=d)
        f_sup = 2 * d
        for p, e in zip(pts, ests):
            tol = 3 * e.std_error + 2 * ball.diam * eps * max(f_sup, 1)
            err = abs(e.value - (1 - p @ p))
            ok &= err <= tol
            rows.append(f"{err / tol:.2f}")
    verdict("A4", ok, "error/tolerance per point: " + " ".join(rows), time.perf_counter() - t0, 120)


def test_a5_synthesized_l2_error(verdict):
    t0 = time.perf_counter()
    cube = ConvexDomain.cube(3)
    prob = get_problem("harmonic-sum", 3)
    errors, rows, ok = [], [], True
    for delta1 in (0.2, 0.1):
        plan = make_plan(0.5, cube, prob.norms(cube), overrides={"delta1": delta1})
        sur = Surrogates(dist=build_dist_cube(3), g=prob.g_net(cube))
        tab = freeze_tableau(plan, cube, seed=0)
        err = l2_error(lambda p: phi_u_eval(tab, sur, p), prob.u, cube, n_points=10_000, rng=1)["l2"]
        budget = plan.calibrated_boundary_bound()
        ok &= err <= 3 * budget
        errors.append(err)
        rows.append(f"delta1={delta1}: M={plan.M}, L2={err:.4f}, budget={budget:.3f}")
    ok &= errors[1] <= errors[0]
    verdict("A5", ok, "; ".join(rows), time.perf_counter() - t0, 300)


def test_a6_sqrt_network(verdict):
    t0 = time.perf_counter()
    x = np.linspace(0.0, 2.0, 10_000)
    deltas = (1e-1, 1e-2, 1e-3)
    sizes, ok, rows = [], True, []
    for db in deltas:
        net = build_sqrt(db)
        err = np.max(np.abs(net(x[:, None])[:, 0] - np.sqrt(x)))
        ok &= err <= db
        sizes.append(net.size)
        rows.append(f"{db:g}: err={err:.2e}, size={net.size}")
    expo = np.polyfit(np.log([math.log(1 / d) for d in deltas]), np.log(sizes), 1)[0]
    ok &= expo <= 2.3
    verdict("A6", ok, "; ".join(rows) + f"; exponent {expo:.2f}", time.perf_counter() - t0, 60)


def test_a7_product_network(verdict):
    t0 = time.perf_counter()
    ok, rows = True, []
    for c, delta in ((1.0, 1e-2), (2.0, 1e-3)):
        t = np.linspace(-c, c, 201)
        a, b = (v.ravel() for v in np.meshgrid(t, t))
        err = np.max(np.abs(build_product(delta, c)(np.column_stack([a, b]))[:, 0] - a * b))
        ok &= err <= delta
        rows.append(f"c={c:g},delta={delta:g}: err={err:.2e}")
    deltas = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    sizes = [build_product(d, 1.0).size for d in deltas]
    logs = [math.log(1 / d) for d in deltas]
    # a logarithmic law has log-log slope at most one against log(1/delta)
    expo = np.polyfit(np.log(logs), np.log(sizes), 1)[0]
    ok &= expo <= 1.0
    verdict("A7", ok, "; ".join(rows) + f"; sizes {sizes}, exponent {expo:.2f}",
            time.perf_counter() - t0, 60)


def test_a8_calculus(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst_err, comp_ok, comb_ok = 0.0, True, True
    for _ in range(100):
        d = int(rng.integers(1, 5))
        inner = random_net(rng, d, int(rng.integers(1, 4)), int(rng.integers(1, 5)))
        outer = random_net(rng, inner.out_dim, 1, int(rng.integers(1, 5)))
        other = random_net(rng, d, 1, int(rng.integers(1, 6)))
        x = rng.uniform(-2, 2, (1000, d))
        comp = compose(outer, inner)
        ref = outer(inner(x))
        worst_err = max(worst_err, np.max(np.abs(comp(x) - ref)) / max(1.0, np.max(np.abs(ref))))
        comp_ok &= comp.size <= 2 * outer.size + 2 * inner.size
        coeffs = rng.standard_normal(2)
        comb = linear_combination(coeffs, [comp, other])
        ref = coeffs[0] * comp(x) + coeffs[1] * other(x)
        worst_err = max(worst_err, np.max(np.abs(comb(x) - ref)) / max(1.0, np.max(np.abs(ref))))
        comb_ok &= comb.size <= lemma_combination_bound([comp, other])
        par = parallelize([inner, other])
        ref = np.hstack([inner(x), other(x)])
        worst_err = max(worst_err, np.max(np.abs(par(x) - ref)) / max(1.0, np.max(np.abs(ref))))
    verdict("A8", worst_err <= 1e-12 and comp_ok and comb_ok,
            f"max rel deviation {worst_err:.1e}, compose sizes ok={comp_ok}, combination sizes ok={comb_ok}",
            time.perf_counter() - t0, 60)


def test_a9_distance_networks(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    ok, rows, per_dim = True, [], []
    for d in (2, 8, 32):
        cube = ConvexDomain.cube(d)
        x = sample_uniform(cube, rng, 1000)
        net = build_dist_cube(d)
        err = np.max(np.abs(net(x)[:, 0] - cube.signed_dist(x)))
        ok &= err <= 1e-12
        per_dim.append(net.size / d)
        rows.append(f"cube{d}: err={err:.1e}, size={net.size}")
    ok &= max(per_dim) / min(per_dim) < 1.5
    for d, delta in ((3, 1e-2), (10, 1e-2)):
        ball = ConvexDomain.ball(d)
        x = sample_uniform(ball, rng, 1000)
        err = np.max(np.abs(build_dist_ball(d, delta)(x)[:, 0] - ball.signed_dist(x)))
        ok &= err <= delta
        rows.append(f"ball{d}: err={err:.1e}")
    verdict("A9", ok, "; ".join(rows), time.perf_counter() - t0, 120)


def test_a10_flatten_matches_virtual(verdict):
    t0 = time.perf_counter()
    cube = ConvexDomain.cube(3)
    prob = get_problem("superposition", 3)
    plan = make_plan(0.5, cube, prob.norms(cube), overrides={"M": 2, "M1": 2, "M2": 2})
    sur = Surrogates(dist=build_dist_cube(3), g=prob.g_net(cube), f=prob.f_net(cube),
                     product=default_product_net(plan))
    tab = freeze_tableau(plan, cube, seed=0, fixed_steps=2)
    net = flatten(tab, sur)
    x = sample_uniform(cube, np.random.default_rng(10), 100)
    virt = phi_u_eval(tab, sur, x)
    rel = np.max(np.abs(net(x)[:, 0] - virt) / np.maximum(1.0, np.abs(virt)))
    verdict("A10", rel <= 1e-9, f"size {net.size}, depth {net.depth}, max rel deviation {rel:.1e}",
            time.perf_counter() - t0, 60)


def test_a11_path_count(verdict):
    t0 = time.perf_counter()
    ok, rows = True, []
    for dom in (ConvexDomain.ball(3), ConvexDomain.cube(5)):
        probes = sample_uniform(dom, np.random.default_rng(11), 20)
        for eps in (0.05, 0.1):
            res = estimate_sup_n_eps(dom, eps, probes, 100, rng=11)
            ok &= res["value"] <= res["bound"] and res["n_capped"] == 0
            rows.append(f"{dom.kind}{dom.dim},eps={eps}: {res['value']:.1f} <= {res['bound']:.0f}")
    verdict("A11", ok, "; ".join(rows), time.perf_counter() - t0, 120)


def test_a12_determinism(tmp_path, verdict):
    t0 = time.perf_counter()
    runs = {
        "solve": (["solve", "--points", "axis:3", "--m", "2000", "--seed", "4"], ("solve.csv", "solve.json")),
        "synthesize": (["synthesize", "--domain", "cube", "--problem", "harmonic-sum",
                        "--plan-overrides", json.dumps({"delta1": 0.2}), "--quad-points", "2000"],
                       ("report.json", "tableau.json")),
    }
    ok, rows = True, []
    for name, (args, files) in runs.items():
        outs = []
        for tag, threads in (("a", 1), ("b", 1), ("c", 4)):
            out = tmp_path / f"{name}-{tag}"
            assert main(args + ["--threads", str(threads), "--out", str(out)]) == 0
            outs.append([(out / f).read_bytes() for f in files])
        same = outs[0] == outs[1] == outs[2]
        ok &= same
        rows.append(f"{name} identical={same}")
    verdict("A12", ok, "; ".join(rows), time.perf_counter() - t0, 60)
