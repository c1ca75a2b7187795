"""Sparse synaptic topology stored as an edge list with virtual incidence matrices.

Edge ``e`` carries the synapse from pre-synaptic neuron ``pre[e]`` to
post-synaptic neuron ``post[e]``; its weight is the adjacency entry
``W[post, pre]``. The in-incidence matrix marks the receiving neuron and the
out-incidence matrix the sending one, so that ``W = B_in diag(w) B_out^T``.

Indices are 0-based in the arrays and 1-based in everything user facing
(``build_topology`` arguments, ``Topology.edges``, reports, CSV headers).

All operations accept a leading batch dimension: ``x`` may have shape
``(..., n)`` and ``w`` shape ``(..., m)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, DuplicateEdge, IndexOutOfRange, ZeroCoefficient

__all__ = [
    "Topology",
    "build_topology",
    "gather_pre",
    "gather_post",
    "apply_weighted",
    "reconstruct_adjacency",
    "max_in_degree",
]


@dataclass(frozen=True, eq=False)
class Topology:
    n: int
    post: np.ndarray  # (m,) 0-based receiving neuron
    pre: np.ndarray  # (m,) 0-based sending neuron
    h: np.ndarray  # (m,) Hebbian coefficients, never zero
    _b_in: sp.csr_matrix = field(repr=False)
    _b_out: sp.csr_matrix = field(repr=False)

    @property
    def m(self) -> int:
        return int(self.post.shape[0])

    @property
    def edges(self) -> list[tuple[int, int]]:
        """1-based ``(post, pre)`` pairs in edge order."""
        return [(int(i) + 1, int(j) + 1) for i, j in zip(self.post, self.pre)]

    @property
    def b_in(self) -> sp.csr_matrix:
        return self._b_in

    @property
    def b_out(self) -> sp.csr_matrix:
        return self._b_out

    def dense_b_in(self) -> np.ndarray:
        """Dense 0/1 copy of B_in, for tests and debugging only."""
        return self._b_in.toarray()

    def dense_b_out(self) -> np.ndarray:
        return self._b_out.toarray()

    @property
    def h_max(self) -> float:
        return float(np.max(np.abs(self.h))) if self.m else 0.0

    @property
    def d_max(self) -> int:
        return max_in_degree(self)

    def in_degrees(self) -> np.ndarray:
        return np.bincount(self.post, minlength=self.n)

    def with_h(self, h: Sequence[float]) -> "Topology":
        return build_topology(self.n, self.edges, h)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Topology):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.post, other.post)
            and np.array_equal(self.pre, other.pre)
            and np.array_equal(self.h, other.h)
        )

    __hash__ = None  # type: ignore[assignment]


def _incidence(rows: np.ndarray, n: int) -> sp.csr_matrix:
    m = rows.shape[0]
    return sp.csr_matrix(
        (np.ones(m), (rows, np.arange(m))), shape=(n, m), dtype=float
    )


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def build_topology(n: int, edges: Iterable[Sequence[int]], h: Iterable[float]) -> Topology:
    """Validate a 1-based edge list and build the topology.

    Raises ``IndexOutOfRange``, ``DuplicateEdge`` or ``ZeroCoefficient``; each
    message names the offending (1-based) edge.
    """
    n = int(n)
    if n < 1:
        raise IndexOutOfRange(f"network needs at least one neuron, got n={n}")
    edges = [tuple(e) for e in edges]
    h = np.asarray(list(h), dtype=float).reshape(-1)
    if len(edges) != h.shape[0]:
        raise DimensionMismatch(f"{len(edges)} edges but {h.shape[0]} coefficients")

    seen: dict[tuple[int, int], int] = {}
    for k, e in enumerate(edges, start=1):
        if len(e) != 2:
            raise IndexOutOfRange(f"edge e{k} must be a (post, pre) pair, got {e!r}")
        post, pre = e
        if int(post) != post or int(pre) != pre:
            raise IndexOutOfRange(f"edge e{k}={e!r} has non-integer endpoints")
        if not (1 <= post <= n and 1 <= pre <= n):
            raise IndexOutOfRange(f"edge e{k}=({post}, {pre}) outside neurons 1..{n}")
        key = (int(post), int(pre))
        if key in seen:
            raise DuplicateEdge(f"edge e{k}={key} duplicates e{seen[key]}")
        seen[key] = k
        if h[k - 1] == 0.0:
            raise ZeroCoefficient(f"edge e{k}={key} has h=0 (a zero coefficient means no edge)")
        if not np.isfinite(h[k - 1]):
            raise ZeroCoefficient(f"edge e{k}={key} has non-finite h={h[k - 1]}")

    post = np.array([e[0] for e in edges], dtype=np.intp) - 1
    pre = np.array([e[1] for e in edges], dtype=np.intp) - 1
    return Topology(
        n=n,
        post=_frozen(post),
        pre=_frozen(pre),
        h=_frozen(h.copy()),
        _b_in=_incidence(post, n),
        _b_out=_incidence(pre, n),
    )


def _check_last(a: np.ndarray, size: int, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0 or a.shape[-1] != size:
        raise DimensionMismatch(f"{name} must have trailing dimension {size}, got shape {a.shape}")
    return a


def gather_pre(topo: Topology, x) -> np.ndarray:
    """(B_out^T x)_e = x[pre(e)]."""
    x = _check_last(x, topo.n, "x")
    return x[..., topo.pre]


def gather_post(topo: Topology, x) -> np.ndarray:
    """(B_in^T x)_e = x[post(e)]."""
    x = _check_last(x, topo.n, "x")
    return x[..., topo.post]


def _scatter_post(topo: Topology, vals: np.ndarray) -> np.ndarray:
    # B_in @ vals. CSR rows keep their columns sorted, so each neuron sums its
    # incoming contributions in increasing edge index, starting from 0.0.
    if vals.ndim == 1:
        return topo.b_in @ vals
    lead = vals.shape[:-1]
    if topo.m == 0:
        return np.zeros(lead + (topo.n,))
    flat = vals.reshape(-1, topo.m)
    return np.asarray(topo.b_in @ flat.T).T.reshape(*lead, topo.n)


def apply_weighted(topo: Topology, w, v) -> np.ndarray:
    """B_in diag(w) B_out^T v, i.e. W v without forming W.

    Output entry i is ``sum(w[e] * v[pre[e]] for e with post[e] == i)``
    accumulated in increasing edge order.
    """
    w = _check_last(w, topo.m, "w")
    v = _check_last(v, topo.n, "v")
    return _scatter_post(topo, w * v[..., topo.pre])


def reconstruct_adjacency(topo: Topology, w) -> np.ndarray:
    """Dense n x n matrix with ``W[post, pre] = w[e]`` and zeros elsewhere."""
    w = _check_last(w, topo.m, "w")
    if w.ndim != 1:
        raise DimensionMismatch("reconstruct_adjacency takes a single weight vector")
    W = np.zeros((topo.n, topo.n))
    W[topo.post, topo.pre] = w
    return W


def max_in_degree(topo: Topology) -> int:
    """d_max = ||B_in||_inf, the largest number of synapses onto one neuron."""
    if topo.m == 0:
        return 0
    return int(topo.in_degrees().max())


def from_adjacency(H: np.ndarray) -> Topology:
    """Topology of the nonzero pattern of a dense coupling matrix, row-major edge order."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise DimensionMismatch(f"H must be square, got shape {H.shape}")
    rows, cols = np.nonzero(H)
    edges = [(int(i) + 1, int(j) + 1) for i, j in zip(rows, cols)]
    return build_topology(H.shape[0], edges, H[rows, cols])
