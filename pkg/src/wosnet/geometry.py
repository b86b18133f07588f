"""Convex domains, distance to the boundary, and the two sampling primitives.

Every sampler takes an explicit ``numpy.random.Generator`` so that callers
control reproducibility; nothing here touches global random state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

# Points closer than this to the boundary are treated as boundary points.
BOUNDARY_TOL = 1e-9


class DomainError(ValueError):
    """Raised for points outside the closed domain or invalid domain data."""


@dataclass(frozen=True)
class ConvexDomain:
    """A bounded convex domain in ``R^dim``.

    Use the constructors :meth:`ball`, :meth:`cube` and :meth:`generic`
    rather than instantiating directly.
    """

    kind: str
    dim: int
    radius: float = 1.0
    side: float = 1.0
    dist_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    generic_diam: Optional[float] = None
    generic_volume: Optional[float] = None
    bbox: Optional[tuple] = None

    @classmethod
    def ball(cls, dim: int, radius: float = 1.0) -> "ConvexDomain":
        if dim < 1 or radius <= 0:
            raise DomainError(f"invalid ball dim={dim} radius={radius}")
        return cls("ball", dim, radius=float(radius))

    @classmethod
    def cube(cls, dim: int, side: float = 1.0) -> "ConvexDomain":
        if dim < 1 or side <= 0:
            raise DomainError(f"invalid cube dim={dim} side={side}")
        return cls("cube", dim, side=float(side))

    @classmethod
    def generic(cls, dim, dist_fn, diam, volume, bbox) -> "ConvexDomain":
        """Domain known only through a distance oracle.

        ``dist_fn`` maps an ``(n, dim)`` array to signed distances (negative
        outside). ``bbox`` is ``(lower, upper)``, used for rejection sampling.
        """
        lo, hi = (np.asarray(b, dtype=float) for b in bbox)
        if lo.shape != (dim,) or hi.shape != (dim,):
            raise DomainError("bbox bounds must have shape (dim,)")
        return cls("generic", dim, dist_fn=dist_fn, generic_diam=float(diam),
                   generic_volume=float(volume), bbox=(tuple(lo), tuple(hi)))

    @property
    def diam(self) -> float:
        if self.kind == "ball":
            return 2.0 * self.radius
        if self.kind == "cube":
            return self.side * math.sqrt(self.dim)
        return self.generic_diam

    @property
    def volume(self) -> float:
        d = self.dim
        if self.kind == "ball":
            return self.radius ** d * math.pi ** (d / 2) / math.gamma(1 + d / 2)
        if self.kind == "cube":
            return self.side ** d
        return self.generic_volume

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "ball":
            r = np.full(self.dim, self.radius)
            return -r, r.copy()
        if self.kind == "cube":
            h = np.full(self.dim, self.side / 2)
            return -h, h.copy()
        return np.array(self.bbox[0]), np.array(self.bbox[1])

    def signed_dist(self, x) -> np.ndarray:
        """Distance to the boundary, negative outside. Works on ``(n, d)`` or ``(d,)``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "ball":
            return self.radius - np.linalg.norm(x, axis=-1)
        if self.kind == "cube":
            return self.side / 2 - np.max(np.abs(x), axis=-1)
        return np.asarray(self.dist_fn(x), dtype=float)

    def contains(self, x, tol: float = BOUNDARY_TOL) -> np.ndarray:
        return self.signed_dist(x) >= -tol

    def to_dict(self) -> dict:
        if self.kind == "generic":
            raise DomainError("generic domains carry a callable and are not serializable")
        return {"kind": self.kind, "dim": self.dim, "radius": self.radius, "side": self.side}

    @classmethod
    def from_dict(cls, data: dict) -> "ConvexDomain":
        if data["kind"] == "ball":
            return cls.ball(int(data["dim"]), float(data.get("radius", 1.0)))
        if data["kind"] == "cube":
            return cls.cube(int(data["dim"]), float(data.get("side", 1.0)))
        raise DomainError(f"unknown domain kind {data['kind']!r}")


def dist_to_boundary(domain: ConvexDomain, x) -> np.ndarray:
    """Exact distance from ``x`` (a point or a batch) to ``∂D``.

    Points within :data:`BOUNDARY_TOL` of the boundary get distance 0. Points
    further outside raise :class:`DomainError`.
    """
    dist = domain.signed_dist(x)
    if np.any(dist < -BOUNDARY_TOL):
        raise DomainError("point outside the closed domain")
    return np.where(dist <= BOUNDARY_TOL, 0.0, dist)


def sample_unit_sphere(rng: np.random.Generator, d: int, n: Optional[int] = None) -> np.ndarray:
    """Uniform direction(s) on ``S^{d-1}`` by normalizing a Gaussian vector.

    Returns shape ``(d,)`` when ``n`` is None, else ``(n, d)``.
    """
    shape = (1 if n is None else n, d)
    v = rng.standard_normal(shape)
    norms = np.linalg.norm(v, axis=1)
    bad = norms == 0.0
    while np.any(bad):
        v[bad] = rng.standard_normal((int(bad.sum()), d))
        norms[bad] = np.linalg.norm(v[bad], axis=1)
        bad = norms == 0.0
    v /= norms[:, None]
    return v[0] if n is None else v


def boggio_radial_cdf(r, d: int) -> np.ndarray:
    """CDF of ``|y|`` for ``y ~ μ``: ``F(r) = (d r² − 2 r^d)/(d − 2)`` on [0, 1]."""
    if d < 3:
        raise DomainError("the Boggio measure needs d >= 3")
    r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
    return (d * r ** 2 - 2 * r ** d) / (d - 2)


def boggio_radial_inverse(u, d: int, tol: float = 1e-12) -> np.ndarray:
    """Invert :func:`boggio_radial_cdf` by vectorized bisection."""
    u = np.asarray(u, dtype=float)
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    n_iter = int(math.ceil(math.log2(1.0 / tol)))
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        below = boggio_radial_cdf(mid, d) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def sample_boggio(rng: np.random.Generator, d: int, n: Optional[int] = None) -> np.ndarray:
    """Sample the normalized Boggio kernel on the unit ball.

    The density is proportional to ``|y|^{2-d} - 1``; it factors into a
    uniform direction times a radius with density ``∝ r - r^{d-1}``.
    """
    if d < 3:
        raise DomainError("the Boggio measure needs d >= 3")
    m = 1 if n is None else n
    dirs = sample_unit_sphere(rng, d, m)
    radii = boggio_radial_inverse(rng.random(m), d)
    y = dirs * radii[:, None]
    return y[0] if n is None else y


def sample_uniform(domain: ConvexDomain, rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform points in ``D``.

    Balls use direction times ``U^{1/d}`` radius, cubes are sampled directly,
    generic domains use rejection from the bounding box.
    """
    d = domain.dim
    if domain.kind == "ball":
        dirs = sample_unit_sphere(rng, d, n)
        return dirs * (domain.radius * rng.random(n) ** (1.0 / d))[:, None]
    if domain.kind == "cube":
        return (rng.random((n, d)) - 0.5) * domain.side
    lo, hi = domain.bounds()
    out = np.empty((0, d))
    while len(out) < n:
        cand = lo + (hi - lo) * rng.random((2 * (n - len(out)) + 16, d))
        out = np.vstack([out, cand[domain.signed_dist(cand) > 0]])
    return out[:n]
