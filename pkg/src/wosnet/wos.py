"""Walk-on-spheres paths, Feynman-Kac estimators and closed-form error budgets.

Solves ``-Δu = f`` in ``D`` with ``u = g`` on ``∂D``::

    u(x) = E_x g(X_τ) + 1/2 E_x ∫_0^τ f(X_s) ds

The boundary term is estimated from walk end points in the ε-shell. The
source term uses the ball-by-ball decomposition ``Σ_k r_k² K₁(f(X_{k-1} + r_k ·))``
where ``K₁`` (the unit-ball Green functional at the origin, which already
carries the 1/2) is estimated with Boggio-distributed points.

Randomness: every estimator takes a seed-like ``rng`` and splits the outer
samples into fixed-size blocks. Block ``b`` draws from its own stream keyed
by ``(point, b)``, so results do not depend on the thread count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import (
    BOUNDARY_TOL,
    ConvexDomain,
    DomainError,
    sample_boggio,
    sample_unit_sphere,
)

BLOCK_SIZE = 2048

Field = Optional[Callable[[np.ndarray], np.ndarray]]


def kappa(d: int) -> float:
    """``K₁(1) = 1/(2d)``, the mean exit time of the unit ball halved."""
    if d < 3:
        raise DomainError("source-term estimation needs d >= 3")
    return 1.0 / (2 * d)


def default_eps(domain: ConvexDomain) -> float:
    return 1e-3 * domain.diam


def default_cap(domain: ConvexDomain, eps: float) -> int:
    """Four times the expected sup-over-x step count bound diam²/ε²."""
    return int(math.ceil(4 * domain.diam ** 2 / eps ** 2))


def as_seed_sequence(rng) -> np.random.SeedSequence:
    """Normalize an int, int list, SeedSequence or Generator into a SeedSequence."""
    if isinstance(rng, np.random.SeedSequence):
        return rng
    if isinstance(rng, np.random.Generator):
        return np.random.SeedSequence(rng.integers(0, 2 ** 63, size=4).tolist())
    if isinstance(rng, (list, tuple)):
        return np.random.SeedSequence([int(v) for v in rng])
    return np.random.SeedSequence(int(rng))


def substream(ss: np.random.SeedSequence, *key: int) -> np.random.Generator:
    """Deterministic child stream of ``ss`` addressed by ``key``."""
    child = np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(key))
    return np.random.default_rng(child)


@dataclass
class WalkPath:
    points: np.ndarray      # (K+1, d), points[0] = x
    radii: np.ndarray       # (K,), radii[k-1] = dist(points[k-1])
    directions: np.ndarray  # (K, d)
    n_eps: Optional[int]    # first k >= 1 with dist(points[k]) <= eps; None if capped
    capped: bool


@dataclass
class WosEstimate:
    value: float
    std_error: float
    n_outer: int
    n_inner: int = 0
    eps: float = 0.0
    n_capped: int = 0

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("value", "std_error", "n_outer", "n_inner", "eps", "n_capped")}


@dataclass
class ErrorBudget:
    terms: dict = field(default_factory=dict)

    @property
    def total_sq(self) -> float:
        return float(sum(self.terms.values()))

    @property
    def total(self) -> float:
        return math.sqrt(self.total_sq)


@dataclass
class WosConfig:
    M: int = 10_000
    M2: int = 16
    eps: Optional[float] = None
    cap: Optional[int] = None
    threads: int = 1

    def resolve(self, domain: ConvexDomain) -> tuple[float, int]:
        eps = self.eps if self.eps is not None else default_eps(domain)
        cap = self.cap if self.cap is not None else default_cap(domain, eps)
        return eps, cap


def _summarize(values: np.ndarray, **kw) -> WosEstimate:
    n = len(values)
    if n == 0:
        raise ValueError("no samples")
    if np.all(values == values[0]):
        return WosEstimate(float(values[0]), 0.0, n, **kw)
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    return WosEstimate(float(np.mean(values)), se, n, **kw)


def _check_start(domain: ConvexDomain, x: np.ndarray, eps: float, cap: int) -> None:
    if x.shape[-1] != domain.dim:
        raise DomainError(f"point has dim {x.shape[-1]}, domain has dim {domain.dim}")
    if np.any(domain.signed_dist(x) < -BOUNDARY_TOL):
        raise DomainError("start point outside the closed domain")
    if not 0 < eps < domain.diam / 2:
        raise ValueError(f"eps={eps} must lie in (0, diam/2)")
    if cap < 1:
        raise ValueError("cap must be >= 1")


def _clamped_dist(domain: ConvexDomain, x: np.ndarray) -> np.ndarray:
    # Float steps may overshoot ∂D by ~1 ulp; treat anything that close as boundary.
    dist = domain.signed_dist(x)
    return np.where(dist <= BOUNDARY_TOL, 0.0, dist)


def run_walk(domain: ConvexDomain, x, eps: float, cap: int, rng) -> WalkPath:
    """Run one walk from ``x`` until the ε-shell is hit or ``cap`` steps are taken."""
    x = np.asarray(x, dtype=float)
    _check_start(domain, x, eps, cap)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    points, radii, dirs = [x.copy()], [], []
    cur = x.copy()
    for k in range(1, cap + 1):
        r = float(_clamped_dist(domain, cur))
        y = sample_unit_sphere(gen, domain.dim)
        cur = cur + r * y
        points.append(cur.copy())
        radii.append(r)
        dirs.append(y)
        if _clamped_dist(domain, cur) <= eps:
            return WalkPath(np.array(points), np.array(radii), np.array(dirs), k, False)
    return WalkPath(np.array(points), np.array(radii), np.array(dirs), None, True)


def _walk_block(domain, x, n, eps, cap, gen, g=None, f=None, M2=0,
                eps_tail=None):
    """Run ``n`` independent walks from ``x`` in lockstep.

    Returns per-walk arrays: boundary value, source sum, Σ r_k², step count,
    capped flag and (when ``eps_tail`` is set) the post-shell tail Σ r_k².
    """
    d = domain.dim
    pos = np.tile(x, (n, 1))
    n_eps = np.zeros(n, dtype=np.int64)
    sum_r2 = np.zeros(n)
    source = np.zeros(n)
    tail = np.zeros(n)
    active = np.ones(n, dtype=bool)
    in_tail = np.zeros(n, dtype=bool)
    kap = kappa(d) if f is not None else 0.0
    k = 0
    while k < cap and np.any(active):
        k += 1
        idx = np.flatnonzero(active)
        cur = pos[idx]
        r = _clamped_dist(domain, cur)
        if f is not None:
            y = sample_boggio(gen, d, len(idx) * M2).reshape(len(idx), M2, d)
            pts = cur[:, None, :] + r[:, None, None] * y
            fv = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(len(idx), M2)
            source[idx] += r ** 2 * kap * fv.mean(axis=1)
        nxt = cur + r[:, None] * sample_unit_sphere(gen, d, len(idx))
        pos[idx] = nxt
        tailing = in_tail[idx]
        sum_r2[idx[~tailing]] += r[~tailing] ** 2
        tail[idx[tailing]] += r[tailing] ** 2
        dn = _clamped_dist(domain, nxt)
        hit = (~tailing) & (dn <= eps)
        n_eps[idx[hit]] = k
        if eps_tail is None:
            active[idx[hit]] = False
        else:
            in_tail[idx[hit]] = True
            active[idx[in_tail[idx] & (dn <= eps_tail)]] = False
    capped = n_eps == 0
    n_eps[capped] = k
    bval = np.asarray(g(pos), dtype=float) if g is not None else np.zeros(n)
    return {"boundary": bval, "source": source, "sum_r2": sum_r2,
            "n_eps": n_eps, "capped": capped, "tail": tail, "end": pos}


def _run_blocks(domain, x, M, eps, cap, rng, threads=1, point_key=0, **kw) -> dict:
    x = np.asarray(x, dtype=float)
    _check_start(domain, x, eps, cap)
    ss = as_seed_sequence(rng)
    starts = list(range(0, M, BLOCK_SIZE))

    def work(b):
        lo = starts[b]
        n = min(BLOCK_SIZE, M - lo)
        return _walk_block(domain, x, n, eps, cap, substream(ss, point_key, b), **kw)

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, range(len(starts))))
    else:
        parts = [work(b) for b in range(len(starts))]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def walk_statistics(domain, x, M, eps, cap=None, rng=0, threads=1, eps_tail=None) -> dict:
    """Per-walk arrays ``sum_r2``, ``n_eps``, ``capped``, ``tail``, ``end``."""
    cap = cap if cap is not None else default_cap(domain, eps)
    return _run_blocks(domain, x, M, eps, cap, rng, threads, eps_tail=eps_tail)


def estimate_boundary_term(domain, g, x, M, eps=None, cap=None, rng=0, threads=1) -> WosEstimate:
    """``(1/M) Σ_i g(X̄^{(i)}_{N(ε)})`` with its standard error."""
    eps = eps if eps is not None else default_eps(domain)
    cap = cap if cap is not None else default_cap(domain, eps)
    out = _run_blocks(domain, x, M, eps, cap, rng, threads, g=g)
    return _summarize(out["boundary"], eps=eps, n_capped=int(out["capped"].sum()))


def k1_estimate(v, d: int, M2: int, rng=0) -> WosEstimate:
    """Unbiased estimate of ``K₁(v)`` as ``κ_d`` times a Boggio-sample mean."""
    kap = kappa(d)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    y = sample_boggio(gen, d, M2)
    vals = kap * np.asarray(v(y), dtype=float)
    est = _summarize(vals)
    return WosEstimate(est.value, est.std_error, 1, n_inner=M2)


def estimate_source_term(domain, f, x, M1, M2, eps=None, cap=None, rng=0, threads=1) -> WosEstimate:
    """Estimate ``1/2 E_x ∫_0^τ f(X_s) ds`` by nested walk / Boggio sampling."""
    kappa(domain.dim)
    eps = eps if eps is not None else default_eps(domain)
    cap = cap if cap is not None else default_cap(domain, eps)
    out = _run_blocks(domain, x, M1, eps, cap, rng, threads, f=f, M2=M2)
    return _summarize(out["source"], n_inner=M2, eps=eps, n_capped=int(out["capped"].sum()))


def solve_point(domain, f, g, x, config: WosConfig, rng=0, point_key: int = 0) -> WosEstimate:
    """Point estimate of ``u(x)``; boundary and source terms share the same walks.

    ``f=None`` means a zero source (allowed in any dimension); ``g=None``
    means zero boundary data.
    """
    if f is not None and domain.dim < 3:
        raise DomainError("a nonzero source term needs d >= 3")
    eps, cap = config.resolve(domain)
    out = _run_blocks(domain, x, config.M, eps, cap, rng, config.threads,
                      point_key=point_key, g=g, f=f, M2=config.M2 if f is not None else 0)
    vals = out["boundary"] + out["source"]
    return _summarize(vals, n_inner=config.M2 if f is not None else 0, eps=eps,
                      n_capped=int(out["capped"].sum()))


def estimate_sup_n_eps(domain, eps, probes, trials, cap=None, rng=0) -> dict:
    """Mean over trials of ``max_probe N(ε)`` with directions shared across probes.

    Returns ``{"value", "bound", "n_capped", "per_trial"}`` where ``bound`` is
    ``diam² ε⁻²``.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    cap = cap if cap is not None else default_cap(domain, eps)
    _check_start(domain, probes, eps, cap)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    P, d = probes.shape
    pos = np.broadcast_to(probes, (trials, P, d)).copy()
    n_eps = np.zeros((trials, P), dtype=np.int64)
    active = np.ones((trials, P), dtype=bool)
    k = 0
    while k < cap and active.any():
        k += 1
        y = sample_unit_sphere(gen, d, trials)
        r = _clamped_dist(domain, pos)
        step = np.where(active[..., None], r[..., None] * y[:, None, :], 0.0)
        pos += step
        hit = active & (_clamped_dist(domain, pos) <= eps)
        n_eps[hit] = k
        active &= ~hit
    n_eps[active] = cap
    per_trial = n_eps.max(axis=1)
    return {"value": float(per_trial.mean()), "bound": domain.diam ** 2 / eps ** 2,
            "n_capped": int(active.sum()), "per_trial": per_trial}


def boundary_error_budget(M, eps, delta_g, lap_g_sup, g_sup, domain=None, *,
                          diam=None, volume=None) -> ErrorBudget:
    """Squared L²(D) error bound for the boundary-term estimator."""
    diam = domain.diam if diam is None else diam
    vol = domain.volume if volume is None else volume
    return ErrorBudget({
        "truncation": 0.75 * lap_g_sup ** 2 * diam ** 2 * vol * eps ** 2,
        "surrogate": 3 * vol * delta_g ** 2,
        "outer_mc": 3 * vol * (g_sup + delta_g) ** 2 / M,
        "path_count": diam ** 2 / M,
    })


def source_error_budget(M1, M2, eps, delta_f, f_sup, domain=None, d=None, *,
                        diam=None, volume=None) -> ErrorBudget:
    """Squared L²(D) error bound for the source-term estimator.

    The surrogate sup norm is bounded by ``f_sup + delta_f``.
    """
    diam = domain.diam if diam is None else diam
    vol = domain.volume if volume is None else volume
    d = domain.dim if d is None else d
    phi = f_sup + delta_f
    ball = diam ** 4 / 16 / d ** 2
    return ErrorBudget({
        "surrogate": 4 * vol * ball * delta_f ** 2,
        "truncation": 4 * vol * diam ** 2 * phi ** 2 * eps ** 2,
        "inner_mc": 4 * vol * ball * phi ** 2 / M2,
        "outer_mc": 8 * vol * kappa(d) * phi ** 2 * diam ** 4 * (2 - d / (d + 2)) / M1,
        "path_count": diam ** 2 / M1,
    })


def solve_points(domain, f, g, points: Sequence, config: WosConfig, rng=0) -> list[WosEstimate]:
    ss = as_seed_sequence(rng)
    return [solve_point(domain, f, g, p, config, ss, point_key=i) for i, p in enumerate(points)]
