"""Command-line harness: ``solve``, ``synthesize``, ``verify`` and ``bench``.

Settings come from built-in defaults, then an optional JSON ``--config``
file, then explicit flags (flags win). Every artifact embeds a hash of the
effective configuration and the seed. The thread count and output location
are excluded from the hash, so outputs are byte-identical across thread
counts.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .catalog import PROBLEMS, get_problem
from .checks import CHECKS, run_checks
from .geometry import ConvexDomain, DomainError, sample_uniform
from .synthesis import (
    PLAN_OVERRIDES,
    RandomTableau,
    SizeBudgetError,
    Surrogates,
    default_dist_net,
    default_product_net,
    flatten,
    freeze_tableau,
    l2_error,
    make_plan,
    phi_u_eval,
    size_report,
)
from .wos import WosConfig, solve_points, walk_statistics

OUT_ENV = "WOSNET_OUT"

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_SIZE = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str = "solve"
    domain: str = "ball"
    dim: int = 3
    radius: float = 1.0
    side: float = 1.0
    problem: str = "quadratic-ball"
    points: str = "origin"
    m: int = 10_000
    m2: int = 16
    eps: Optional[float] = None
    seed: int = 0
    threads: int = 1
    out: Optional[str] = None
    format: str = "csv"
    # synthesize
    delta_bar: float = 0.5
    plan_overrides: dict = field(default_factory=dict)
    fixed_steps: Optional[int] = None
    tableaux: int = 1
    tableau: Optional[str] = None
    quad_points: int = 10_000
    flatten: bool = False
    size_budget: int = 2_000_000
    # verify
    only: list = field(default_factory=list)
    tolerance_scale: float = 1.0
    # bench
    dims: list = field(default_factory=lambda: [3, 10, 50, 100])

    def domain_obj(self) -> ConvexDomain:
        if self.domain == "ball":
            return ConvexDomain.ball(self.dim, self.radius)
        if self.domain == "cube":
            return ConvexDomain.cube(self.dim, self.side)
        raise ConfigError(f"unknown domain {self.domain!r} (ball or cube)")

    def hashed(self) -> dict:
        data = asdict(self)
        for key in ("threads", "out", "format"):
            data.pop(key)
        return data

    def config_hash(self) -> str:
        blob = json.dumps(self.hashed(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def load_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for name in known:
        v = getattr(args, name, None)
        if v is not None and v != [] and v is not False:
            values[name] = v
    values["command"] = args.command
    cfg = RunConfig(**values)
    if cfg.out is None:
        cfg.out = os.environ.get(OUT_ENV, "wosnet_out")
    if cfg.threads < 1 or cfg.m < 2 or cfg.seed < 0:
        raise ConfigError("threads must be >= 1, m >= 2 and seed >= 0")
    if cfg.format not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    bad = set(cfg.plan_overrides) - set(PLAN_OVERRIDES)
    if bad:
        raise ConfigError(f"unknown plan overrides {sorted(bad)}")
    return cfg


def _header(cfg: RunConfig) -> dict:
    return {"command": cfg.command, "config_hash": cfg.config_hash(), "seed": cfg.seed}


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_to_builtin) + "\n"


def _to_builtin(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _csv(cfg: RunConfig, columns: list, rows: list) -> str:
    buf = io.StringIO()
    h = _header(cfg)
    buf.write(f"# wosnet {h['command']} config_hash={h['config_hash']} seed={h['seed']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def parse_points(spec: str, domain: ConvexDomain, seed: int) -> np.ndarray:
    """``origin``, ``random:N``, ``axis:N`` (along e₁ up to half the inradius) or a CSV file."""
    d = domain.dim
    if spec == "origin":
        return np.zeros((1, d))
    kind, _, arg = spec.partition(":")
    if kind == "random":
        gen = np.random.default_rng([seed, 7])
        return sample_uniform(domain, gen, int(arg)) * 0.9
    if kind == "axis":
        reach = 0.5 * (domain.radius if domain.kind == "ball" else domain.side / 2)
        t = np.linspace(0.0, reach, int(arg))
        pts = np.zeros((len(t), d))
        pts[:, 0] = t
        return pts
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"unknown points spec {spec!r}")
    pts = np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))
    if pts.shape[1] != d:
        raise ConfigError(f"points file has {pts.shape[1]} columns, domain has dim {d}")
    return pts


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig) -> dict:
    domain = cfg.domain_obj()
    try:
        problem = get_problem(cfg.problem, cfg.dim)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    if problem.has_source and cfg.dim < 3:
        raise ConfigError(f"problem {cfg.problem} has a source term and needs d >= 3")
    pts = parse_points(cfg.points, domain, cfg.seed)
    wcfg = WosConfig(M=cfg.m, M2=cfg.m2 if problem.has_source else 0, eps=cfg.eps, threads=cfg.threads)
    eps, _ = wcfg.resolve(domain)
    try:
        ests = solve_points(domain, problem.f, problem.g, pts, wcfg, rng=cfg.seed)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc
    exact = problem.u(pts)
    rows = []
    for p, e, u in zip(pts, ests, exact):
        rows.append({"x": ";".join(repr(float(v)) for v in p), "estimate": float(e.value),
                     "std_error": float(e.std_error), "eps": float(eps), "M": cfg.m,
                     "M1": cfg.m if problem.has_source else 0, "M2": wcfg.M2,
                     "analytic": float(u), "abs_error": abs(float(e.value) - float(u)),
                     "n_capped": e.n_capped})
    columns = ["x", "estimate", "std_error", "eps", "M", "M1", "M2", "analytic", "abs_error"]
    out = Path(cfg.out)
    _write(out / "solve.csv", _csv(cfg, columns, rows))
    result = {**_header(cfg), "config": cfg.hashed(), "rows": rows}
    _write(out / "solve.json", _json(result))
    return result


def _surrogates(cfg, plan, domain, problem) -> Surrogates:
    return Surrogates(dist=default_dist_net(domain, plan.delta_dist), g=problem.g_net(domain),
                      f=problem.f_net(domain), product=default_product_net(plan))


def cmd_synthesize(cfg: RunConfig) -> dict:
    domain = cfg.domain_obj()
    try:
        problem = get_problem(cfg.problem, cfg.dim)
        plan = make_plan(cfg.delta_bar, domain, problem.norms(domain), overrides=cfg.plan_overrides)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    sur = _surrogates(cfg, plan, domain, problem)

    def err_of(tab):
        return l2_error(lambda p: phi_u_eval(tab, sur, p), problem.u, domain,
                        n_points=cfg.quad_points, rng=[cfg.seed, 11], threads=cfg.threads)

    if cfg.tableau:
        candidates = [RandomTableau.load(cfg.tableau)]
    else:
        candidates = [freeze_tableau(plan, domain, cfg.seed + r, fixed_steps=cfg.fixed_steps)
                      for r in range(max(1, cfg.tableaux))]
    scored = [(err_of(t), t) for t in candidates]
    best_err, tab = min(scored, key=lambda s: s[0]["l2"])
    budget = plan.calibrated_boundary_bound() + plan.calibrated_source_bound()
    report = {
        **_header(cfg),
        "config": cfg.hashed(),
        "plan": plan.to_dict(),
        "tableau_seed": tab.seed,
        "candidate_errors": [s[0]["l2"] for s in scored],
        "l2_error": best_err,
        "budget": {
            "calibrated_boundary": plan.calibrated_boundary_bound(),
            "calibrated_source": plan.calibrated_source_bound(),
            "combined": budget,
            "within_3x": best_err["l2"] <= 3 * budget,
            "boundary_terms_sq": plan.boundary_budget().terms,
            "source_terms_sq": plan.source_budget().terms if plan.with_source else None,
        },
        "caps": {"boundary": tab.caps1, "source": tab.caps2, "hard_cap_hits": tab.hard_cap_hits},
        "size": size_report(tab, sur),
    }
    out = Path(cfg.out)
    _write(out / "tableau.json", json.dumps(tab.to_dict()) + "\n")
    if cfg.flatten:
        net = flatten(tab, sur, size_budget=cfg.size_budget)
        pts = sample_uniform(domain, np.random.default_rng([cfg.seed, 13]), 100)
        virt = phi_u_eval(tab, sur, pts)
        flat = net(pts)[:, 0]
        rel = float(np.max(np.abs(flat - virt) / np.maximum(1.0, np.abs(virt))))
        report["flatten"] = {"size": net.size, "depth": net.depth, "width": net.width,
                             "max_relative_deviation": rel}
        _write(out / "network.json", json.dumps(net.to_dict()) + "\n")
    _write(out / "report.json", _json(report))
    return report


def cmd_verify(cfg: RunConfig) -> dict:
    try:
        results = run_checks(cfg.only, cfg.tolerance_scale)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    report = {**_header(cfg), "tolerance_scale": cfg.tolerance_scale,
              "passed": all(r.passed for r in results),
              "checks": [r.to_dict() for r in results]}
    _write(Path(cfg.out) / "verify.json", _json(report))
    return report


def cmd_bench(cfg: RunConfig) -> dict:
    rows = []
    for d in cfg.dims:
        dom = ConvexDomain.ball(d)
        eps = cfg.eps if cfg.eps is not None else 1e-3
        t0 = time.perf_counter()
        stats = walk_statistics(dom, np.zeros(d), cfg.m, eps, rng=cfg.seed, threads=cfg.threads)
        wall = time.perf_counter() - t0
        steps = float(stats["n_eps"].mean())
        rows.append({"d": d, "M": cfg.m, "eps": eps, "walltime_ms": 1e3 * wall,
                     "walks_per_s": cfg.m / wall, "mean_steps": steps,
                     "ns_per_step": 1e9 * wall / (cfg.m * steps),
                     "mean_sum_r2": float(stats["sum_r2"].mean())})
    columns = ["d", "M", "eps", "walltime_ms", "walks_per_s", "mean_steps", "ns_per_step", "mean_sum_r2"]
    _write(Path(cfg.out) / "bench.csv", _csv(cfg, columns, rows))
    return {**_header(cfg), "rows": rows}


COMMANDS = {"solve": cmd_solve, "synthesize": cmd_synthesize, "verify": cmd_verify, "bench": cmd_bench}


# ---------------------------------------------------------------------------
# argument parsing


def _json_arg(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON config file; explicit flags override it")
    shared.add_argument("--seed", type=int)
    shared.add_argument("--threads", type=int)
    shared.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./wosnet_out)")
    shared.add_argument("--format", choices=["csv", "json"], help="what to print on stdout")

    geo = argparse.ArgumentParser(add_help=False)
    geo.add_argument("--domain", choices=["ball", "cube"])
    geo.add_argument("--dim", type=int)
    geo.add_argument("--radius", type=float)
    geo.add_argument("--side", type=float)
    geo.add_argument("--problem", choices=list(PROBLEMS))

    p = argparse.ArgumentParser(prog="wosnet", description="Walk-on-spheres solver and ReLU network synthesis")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[shared, geo], help="point estimates of u")
    s.add_argument("--points", help="origin | random:N | axis:N | path to a CSV of points")
    s.add_argument("--m", type=int, help="number of walks per point")
    s.add_argument("--m2", type=int, help="inner Boggio samples per step")
    s.add_argument("--eps", type=float, help="shell width (default 1e-3 diam)")

    y = sub.add_parser("synthesize", parents=[shared, geo], help="freeze a tableau and build φ_u")
    y.add_argument("--delta-bar", dest="delta_bar", type=float)
    y.add_argument("--plan-overrides", dest="plan_overrides", type=_json_arg,
                   help='JSON object, e.g. \'{"M": 4, "M1": 2}\'')
    y.add_argument("--fixed-steps", dest="fixed_steps", type=int, help="force every N̄ to this value")
    y.add_argument("--tableaux", type=int, help="best-of-R tableau selection (default 1)")
    y.add_argument("--tableau", help="reuse a saved tableau JSON")
    y.add_argument("--quad-points", dest="quad_points", type=int)
    y.add_argument("--flatten", action="store_true", help="also emit one explicit network")
    y.add_argument("--size-budget", dest="size_budget", type=int)

    v = sub.add_parser("verify", parents=[shared], help="run the property checks")
    v.add_argument("--only", nargs="+", choices=list(CHECKS))
    v.add_argument("--tolerance-scale", dest="tolerance_scale", type=float,
                   help="multiply every bound (below 1 for negative controls)")

    b = sub.add_parser("bench", parents=[shared], help="walk throughput table")
    b.add_argument("--dims", type=int, nargs="+")
    b.add_argument("--m", type=int)
    b.add_argument("--eps", type=float)
    return p


def _summary(cfg: RunConfig, result: dict) -> str:
    if cfg.format == "json":
        return _json(result)
    if cfg.command == "solve":
        return "\n".join(f"{r['x']}: {r['estimate']:.6f} ± {r['std_error']:.2e} (exact {r['analytic']:.6f})"
                         for r in result["rows"]) + "\n"
    if cfg.command == "synthesize":
        e = result["l2_error"]
        line = f"L2 error {e['l2']:.4e} ± {e['l2_se']:.1e}, budget {result['budget']['combined']:.4e}"
        if "flatten" in result:
            line += f", flattened size {result['flatten']['size']}"
        return line + "\n"
    if cfg.command == "verify":
        return "".join(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['measured']:.3e} <= {c['bound']:.3e}\n"
                       for c in result["checks"])
    return "".join(f"d={r['d']} {r['walltime_ms']:.1f} ms, {r['walks_per_s']:.0f} walks/s\n"
                   for r in result["rows"])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        result = COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SizeBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIZE
    sys.stdout.write(_summary(cfg, result))
    if cfg.command == "verify" and not result["passed"]:
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
