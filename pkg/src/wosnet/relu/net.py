"""Explicit ReLU networks and their calculus.

A network is a list of affine layers ``(A_i, b_i)``. The realization is::

    φ¹(x) = A¹ x + b¹,     φⁱ(x) = Aⁱ σ(φ^{i-1}(x)) + bⁱ,    σ = max(0, ·)

with no activation after the last layer. ``size`` counts nonzero weights
(entries of all ``A`` and ``b``). Weights are stored densely.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag


class NetworkError(ValueError):
    """Dimension mismatch or malformed network data."""


def _nnz(a: np.ndarray) -> int:
    return int(np.count_nonzero(a))


@dataclass(frozen=True, eq=False)
class ReluNet:
    layers: tuple
    size: int = field(init=False)

    def __post_init__(self):
        layers = []
        for A, b in self.layers:
            A = np.array(A, dtype=float, ndmin=2)
            b = np.array(b, dtype=float).reshape(-1)
            if A.shape[0] != b.shape[0]:
                raise NetworkError(f"layer bias has {b.shape[0]} rows, matrix has {A.shape[0]}")
            A.setflags(write=False)
            b.setflags(write=False)
            layers.append((A, b))
        if not layers:
            raise NetworkError("a network needs at least one layer")
        for i in range(1, len(layers)):
            if layers[i][0].shape[1] != layers[i - 1][0].shape[0]:
                raise NetworkError(
                    f"layer {i + 1} expects {layers[i][0].shape[1]} inputs, "
                    f"layer {i} produces {layers[i - 1][0].shape[0]}")
        object.__setattr__(self, "layers", tuple(layers))
        object.__setattr__(self, "size", recount_size(self))

    @property
    def dims(self) -> list[int]:
        return [self.layers[0][0].shape[1]] + [A.shape[0] for A, _ in self.layers]

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def width(self) -> int:
        return max(self.dims)

    def __call__(self, x) -> np.ndarray:
        return eval_net(self, x)

    def __repr__(self) -> str:
        return f"ReluNet(in={self.in_dim}, out={self.out_dim}, depth={self.depth}, width={self.width}, size={self.size})"

    # serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        return {"dims": self.dims,
                "layers": [{"A": A.tolist(), "b": b.tolist()} for A, b in self.layers]}

    @classmethod
    def from_dict(cls, data: dict) -> "ReluNet":
        try:
            net = cls(tuple((np.array(l["A"], dtype=float).reshape(len(l["b"]), -1), l["b"])
                            for l in data["layers"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise NetworkError(f"malformed network data: {exc}") from exc
        if "dims" in data and list(data["dims"]) != net.dims:
            raise NetworkError(f"declared dims {data['dims']} do not match layers {net.dims}")
        return net

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "ReluNet":
        return cls.from_dict(json.loads(Path(path).read_text()))


def recount_size(net: ReluNet) -> int:
    return sum(_nnz(A) + _nnz(b) for A, b in net.layers)


def eval_net(net: ReluNet, x) -> np.ndarray:
    """Forward pass on a single input ``(N0,)`` or a batch ``(n, N0)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    h = np.atleast_2d(x)
    if h.shape[1] != net.in_dim:
        raise NetworkError(f"input has dim {h.shape[1]}, network expects {net.in_dim}")
    A, b = net.layers[0]
    h = h @ A.T + b
    for A, b in net.layers[1:]:
        h = np.maximum(h, 0.0) @ A.T + b
    return h[0] if single else h


def affine(A, b=None) -> ReluNet:
    """Single-layer (activation-free) network ``x ↦ A x + b``."""
    A = np.array(A, dtype=float, ndmin=2)
    b = np.zeros(A.shape[0]) if b is None else b
    return ReluNet(((A, b),))


def identity(dim: int, depth: int = 1) -> ReluNet:
    """Identity map realized with ``depth`` layers via ``y = σ(y) − σ(−y)``."""
    eye = np.eye(dim)
    if depth == 1:
        return affine(eye)
    layers = [(np.vstack([eye, -eye]), np.zeros(2 * dim))]
    layers += [(np.eye(2 * dim), np.zeros(2 * dim))] * (depth - 2)
    layers.append((np.hstack([eye, -eye]), np.zeros(dim)))
    return ReluNet(tuple(layers))


def pad(net: ReluNet, extra: int) -> ReluNet:
    """Deepen ``net`` by ``extra`` layers without changing its realization."""
    if extra < 0:
        raise NetworkError("cannot remove layers")
    if extra == 0:
        return net
    o = net.out_dim
    A, b = net.layers[-1]
    eye = np.eye(o)
    layers = list(net.layers[:-1]) + [(np.vstack([A, -A]), np.concatenate([b, -b]))]
    layers += [(np.eye(2 * o), np.zeros(2 * o))] * (extra - 1)
    layers.append((np.hstack([eye, -eye]), np.zeros(o)))
    return ReluNet(tuple(layers))


def compose(outer: ReluNet, inner: ReluNet) -> ReluNet:
    """Network realizing ``outer ∘ inner`` with size ``≤ 2 size(outer) + 2 size(inner)``.

    The interface signal ``y`` is carried through one ReLU as
    ``σ(y) − σ(−y)``: the last layer of ``inner`` is doubled with a sign flip
    and the first layer of ``outer`` reads the difference.
    """
    if outer.in_dim != inner.out_dim:
        raise NetworkError(f"cannot compose: outer expects {outer.in_dim}, inner gives {inner.out_dim}")
    A_in, b_in = inner.layers[-1]
    A_out, b_out = outer.layers[0]
    mid = (np.vstack([A_in, -A_in]), np.concatenate([b_in, -b_in]))
    first = (np.hstack([A_out, -A_out]), b_out)
    return ReluNet(inner.layers[:-1] + (mid, first) + outer.layers[1:])


def affine_after(net: ReluNet, W, c=None) -> ReluNet:
    """``x ↦ W net(x) + c``, folded into the last layer."""
    W = np.array(W, dtype=float, ndmin=2)
    A, b = net.layers[-1]
    c = np.zeros(W.shape[0]) if c is None else np.asarray(c, dtype=float)
    if W.shape[1] != net.out_dim:
        raise NetworkError(f"affine map expects {W.shape[1]} inputs, net gives {net.out_dim}")
    return ReluNet(net.layers[:-1] + ((W @ A, W @ b + c),))


def affine_before(net: ReluNet, W, c=None) -> ReluNet:
    """``x ↦ net(W x + c)``, folded into the first layer."""
    W = np.array(W, dtype=float, ndmin=2)
    A, b = net.layers[0]
    c = np.zeros(W.shape[0]) if c is None else np.asarray(c, dtype=float)
    if W.shape[0] != net.in_dim:
        raise NetworkError(f"affine map gives {W.shape[0]} outputs, net expects {net.in_dim}")
    return ReluNet(((A @ W, A @ c + b),) + net.layers[1:])


def _equalize(nets: Sequence[ReluNet]) -> list[ReluNet]:
    L = max(n.depth for n in nets)
    return [pad(n, L - n.depth) for n in nets]


def parallelize(nets: Sequence[ReluNet], shared_input: bool = True) -> ReluNet:
    """Stack networks side by side; the output is the concatenation.

    With ``shared_input`` all networks read the same input vector, otherwise
    the input is the concatenation of the individual inputs.
    """
    if not nets:
        raise NetworkError("nothing to stack")
    if shared_input and len({n.in_dim for n in nets}) != 1:
        raise NetworkError("shared-input stacking needs equal input dims")
    nets = _equalize(nets)
    stack_first = np.vstack if shared_input else (lambda mats: block_diag(*mats))
    layers = []
    for i in range(nets[0].depth):
        As = [n.layers[i][0] for n in nets]
        bs = np.concatenate([n.layers[i][1] for n in nets])
        layers.append((stack_first(As) if i == 0 else block_diag(*As), bs))
    return ReluNet(tuple(layers))


def linear_combination(coeffs: Sequence[float], nets: Sequence[ReluNet]) -> ReluNet:
    """Network realizing ``Σ a_i φ_i`` for scalar-output nets with a common input.

    Shallower nets are padded with identity pairs; the final layers are
    summed with the coefficients so the size stays within
    ``Σ [M_i + W_i + 2(L − L_i) + 1]``.
    """
    if not nets or len(coeffs) != len(nets):
        raise NetworkError("need one coefficient per network and at least one network")
    if any(n.out_dim != 1 for n in nets):
        raise NetworkError("linear_combination expects scalar-output networks")
    if len({n.in_dim for n in nets}) != 1:
        raise NetworkError("networks must share the input dimension")
    nets = _equalize(nets)
    coeffs = [float(a) for a in coeffs]
    if nets[0].depth == 1:
        A = sum(a * n.layers[0][0] for a, n in zip(coeffs, nets))
        b = sum(a * n.layers[0][1] for a, n in zip(coeffs, nets))
        return ReluNet(((A, b),))
    layers = [(np.vstack([n.layers[0][0] for n in nets]),
               np.concatenate([n.layers[0][1] for n in nets]))]
    for i in range(1, nets[0].depth - 1):
        layers.append((block_diag(*[n.layers[i][0] for n in nets]),
                       np.concatenate([n.layers[i][1] for n in nets])))
    last_A = np.hstack([a * n.layers[-1][0] for a, n in zip(coeffs, nets)])
    last_b = np.array([sum(a * n.layers[-1][1][0] for a, n in zip(coeffs, nets))])
    layers.append((last_A, last_b))
    return ReluNet(tuple(layers))


def lemma_combination_bound(nets: Sequence[ReluNet]) -> int:
    """Size bound ``Σ [M_i + W_i + 2(L − L_i) + 1]`` for a linear combination."""
    L = max(n.depth for n in nets)
    return sum(n.size + n.width + 2 * (L - n.depth) + 1 for n in nets)
