"""Named test problems with closed-form solutions.

Each entry stores ``u`` together with ``f = -Δu`` and ``g = u``, so the
boundary data is valid on any domain (it is simply ``u`` evaluated on ``∂D``).
All callables map an ``(n, d)`` array to an ``(n,)`` array.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .geometry import ConvexDomain, sample_uniform
from .relu import ReluNet, build_additive_surrogate, build_constant, build_linear
from .synthesis import Norms

Field = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Problem:
    name: str
    u: Field
    g: Field
    f: Optional[Field]          # None for a harmonic problem
    f_value: float              # the sources used here are constants
    lap_g: float                # Δg is constant for every entry
    description: str = ""

    @property
    def has_source(self) -> bool:
        return self.f is not None

    def norms(self, domain: ConvexDomain, n_samples: int = 4096) -> Norms:
        """Sup norms over ``D``; ``‖g‖∞`` is a max over fixed-seed uniform samples."""
        pts = sample_uniform(domain, np.random.default_rng(0), n_samples)
        g_sup = float(np.max(np.abs(self.g(pts))))
        return Norms(f_sup=abs(self.f_value), g_sup=g_sup, lap_g_sup=abs(self.lap_g),
                     lip_f=0.0, lip_g=_lip(self, domain))

    def g_net(self, domain: ConvexDomain, n_knots: int = 65) -> ReluNet:
        """A ReLU surrogate of ``g``: exact for affine data, interpolated otherwise."""
        return _G_NETS[self.name](domain, n_knots)

    def f_net(self, domain: ConvexDomain) -> Optional[ReluNet]:
        return build_constant(domain.dim, self.f_value) if self.has_source else None


def _lip(p: Problem, domain: ConvexDomain) -> float:
    d = domain.dim
    reach = domain.diam
    return {"harmonic-linear": 1.0, "harmonic-sum": float(np.sqrt(d)),
            "quadratic-ball": reach, "const-source": reach / (2 * d),
            "superposition": 1.0 + reach}[p.name]


def _quadratic_net(scale: float):
    def build(domain: ConvexDomain, n_knots: int) -> ReluNet:
        d = domain.dim
        lo, hi = domain.bounds()
        reach = float(max(np.max(np.abs(lo)), np.max(np.abs(hi))))
        funcs = [lambda t: scale * (1.0 / d - t ** 2)] * d
        return build_additive_surrogate(d, funcs, -reach, reach, n_knots)
    return build


def _superposition_net(domain: ConvexDomain, n_knots: int) -> ReluNet:
    d = domain.dim
    lo, hi = domain.bounds()
    reach = float(max(np.max(np.abs(lo)), np.max(np.abs(hi))))
    first = [lambda t: t + 1.0 / d - t ** 2]
    rest = [lambda t: 1.0 / d - t ** 2] * (d - 1)
    return build_additive_surrogate(d, first + rest, -reach, reach, n_knots)


_G_NETS = {
    "quadratic-ball": _quadratic_net(1.0),
    "const-source": lambda dom, n: _quadratic_net(1.0 / (2 * dom.dim))(dom, n),
    "harmonic-linear": lambda dom, n: build_linear(np.eye(dom.dim)[0]),
    "harmonic-sum": lambda dom, n: build_linear(np.ones(dom.dim)),
    "superposition": _superposition_net,
}


def _sq(x):
    return np.sum(np.asarray(x) ** 2, axis=-1)


def _catalog(d: int) -> dict:
    two_d = 2.0 * d
    return {
        "quadratic-ball": Problem(
            "quadratic-ball", u=lambda x: 1 - _sq(x), g=lambda x: 1 - _sq(x),
            f=lambda x: np.full(np.shape(x)[:-1], two_d), f_value=two_d, lap_g=-two_d,
            description="u = 1 - |x|^2, f = 2d, g = 0 on the unit sphere"),
        "harmonic-linear": Problem(
            "harmonic-linear", u=lambda x: np.asarray(x)[..., 0], g=lambda x: np.asarray(x)[..., 0],
            f=None, f_value=0.0, lap_g=0.0, description="u = x_1, f = 0"),
        "harmonic-sum": Problem(
            "harmonic-sum", u=lambda x: np.sum(x, axis=-1), g=lambda x: np.sum(x, axis=-1),
            f=None, f_value=0.0, lap_g=0.0, description="u = sum_i x_i, f = 0"),
        "superposition": Problem(
            "superposition", u=lambda x: np.asarray(x)[..., 0] + 1 - _sq(x),
            g=lambda x: np.asarray(x)[..., 0] + 1 - _sq(x),
            f=lambda x: np.full(np.shape(x)[:-1], two_d), f_value=two_d, lap_g=-two_d,
            description="u = x_1 + 1 - |x|^2, f = 2d"),
        "const-source": Problem(
            "const-source", u=lambda x: (1 - _sq(x)) / two_d, g=lambda x: (1 - _sq(x)) / two_d,
            f=lambda x: np.ones(np.shape(x)[:-1]), f_value=1.0, lap_g=-1.0,
            description="u = (1 - |x|^2)/(2d), f = 1"),
    }


PROBLEMS = tuple(_catalog(3))


def get_problem(name: str, d: int) -> Problem:
    try:
        return _catalog(d)[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}") from None
