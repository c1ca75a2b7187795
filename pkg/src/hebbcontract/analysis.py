"""Log norms, Metzler majorants, Perron norm weights and contraction certificates.

The certificate for each model bounds the aggregate Metzler majorant of the
Jacobian (infinity norms on the neural and synaptic blocks) by a constant
2 x 2 Metzler matrix ``J_M``. The system contracts in the weighted composite
norm ``max(eta_1 ||dy||_inf, eta_2 ||dw||_inf)`` whenever ``J_M`` is Hurwitz,
with rate ``-alpha(J_M)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import MODELS, JacobianBlocks, ModelSpec
from .errors import (
    ConvergenceError,
    InvalidParams,
    NonPositiveWeight,
    NonSquare,
    NonSquareDiagonalBlock,
    NotMetzler,
    ReducibleWithZeroDelta,
    UnsupportedExponent,
)
from .topology import Topology

__all__ = [
    "lognorm_inf",
    "norm_inf",
    "spectral_abscissa",
    "metzler_majorant",
    "aggregate_metzler_majorant",
    "MajorantParams",
    "majorant_bound",
    "condition_rhs",
    "Certificate",
    "certify",
    "certify_params",
    "Bounds",
    "compute_bounds",
    "compute_eta",
    "is_irreducible",
    "weighted_lognorm",
    "composite_lognorm_bound",
]

DEFAULT_DELTA = 1e-6


def _square(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {A.shape}")
    return A


def lognorm_inf(A) -> float:
    """mu_inf(A) = max_i (a_ii + sum_{j != i} |a_ij|). Empty matrices give -inf."""
    A = _square(A)
    if A.size == 0:
        return -math.inf
    d = np.diag(A)
    off = np.abs(A).sum(axis=1) - np.abs(d)
    return float(np.max(d + off))


def norm_inf(A) -> float:
    """Induced infinity norm (max absolute row sum); 0 for empty blocks."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    return float(np.max(np.abs(A).sum(axis=1)))


def spectral_abscissa(A) -> float:
    A = _square(A)
    if A.size == 0:
        return -math.inf
    return float(np.max(np.linalg.eigvals(A).real))


def metzler_majorant(A) -> np.ndarray:
    A = _square(A)
    M = np.abs(A)
    np.fill_diagonal(M, np.diag(A))
    return M


def aggregate_metzler_majorant(blocks) -> np.ndarray:
    """r x r matrix of block log norms (diagonal) and induced norms (off-diagonal).

    ``blocks`` is a ``JacobianBlocks`` or a square nested sequence of blocks.
    """
    grid = blocks.as_grid() if isinstance(blocks, JacobianBlocks) else blocks
    r = len(grid)
    if any(len(row) != r for row in grid):
        raise NonSquare("block grid must be square")
    sizes = []
    for i in range(r):
        D = np.asarray(grid[i][i], dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1]:
            raise NonSquareDiagonalBlock(f"diagonal block {i} has shape {D.shape}")
        sizes.append(D.shape[0])
    out = np.empty((r, r))
    for i in range(r):
        for j in range(r):
            B = np.asarray(grid[i][j], dtype=float)
            if B.shape != (sizes[i], sizes[j]):
                raise NonSquareDiagonalBlock(
                    f"block ({i},{j}) has shape {B.shape}, expected {(sizes[i], sizes[j])}"
                )
            out[i, j] = lognorm_inf(B) if i == j else norm_inf(B)
    return out


# ---------------------------------------------------------------------------
# majorant and certificate


@dataclass(frozen=True)
class MajorantParams:
    c_n: float
    c_s: float
    c_o: float = 0.0
    phi_max: float = 1.0
    h_max: float = 0.0
    ubar_max: float = 0.0
    d_max: float = 0.0

    def __post_init__(self):
        if not (self.c_n > 0 and self.c_s > 0):
            raise InvalidParams(f"decay rates must be positive (c_n={self.c_n}, c_s={self.c_s})")
        for name in ("c_o", "phi_max", "h_max", "ubar_max", "d_max"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidParams(f"{name} must be finite and non-negative, got {v}")

    @property
    def b_max(self) -> float:
        return self.d_max * self.h_max * self.phi_max**2

    @property
    def w_max(self) -> float:
        return (self.h_max * self.phi_max**2 + self.ubar_max) / self.c_s

    @classmethod
    def from_network(cls, topo: Topology, spec: ModelSpec) -> "MajorantParams":
        return cls(
            c_n=spec.c_n,
            c_s=spec.c_s,
            c_o=spec.c_o,
            phi_max=spec.phi_max,
            h_max=topo.h_max,
            ubar_max=spec.ubar.sup(),
            d_max=float(topo.d_max),
        )


def _check_model(model: str, p: MajorantParams) -> None:
    if model not in MODELS:
        raise InvalidParams(f"unknown model {model!r}")
    if model in ("HH", "FH") and p.c_o != 0:
        raise InvalidParams(f"model {model} requires c_o = 0, got {p.c_o}")


def majorant_bound(model: str, params: MajorantParams) -> np.ndarray:
    """State-independent upper bound on the aggregate Metzler majorant of the Jacobian."""
    _check_model(model, params)
    p = params
    a11 = p.d_max * p.w_max - p.c_n
    a12 = p.d_max * p.phi_max
    if model in ("FH", "FO"):
        a12 /= p.c_n
    a21 = 2.0 * p.h_max * p.phi_max
    if model in ("HO", "FO"):
        a21 = 2.0 * p.phi_max * (p.h_max + p.c_o * p.w_max)
    return np.array([[a11, a12], [a21, -p.c_s]])


def _constants(model: str, p: MajorantParams) -> tuple[float, float, float]:
    """(condition_rhs, c_tilde, g). ``g = c_n c_s - rhs = det(J_M)``."""
    b = p.b_max
    du = p.d_max * p.ubar_max
    if model in ("HH", "HO"):
        rhs = 3.0 * b + du
        c_tilde = p.c_s**2 + 2.0 * b
        oja = 2.0 * (p.c_o / p.c_s) * p.phi_max**2 * (b + du)
    else:
        rhs = b * (1.0 + 2.0 / p.c_n) + du
        c_tilde = p.c_s**2 + 2.0 * b / p.c_n
        oja = 2.0 * (p.c_o / (p.c_s * p.c_n)) * p.phi_max**2 * (b + du)
    if model in ("HO", "FO"):
        rhs += oja
        c_tilde += oja
    return rhs, c_tilde, p.c_n * p.c_s - rhs


def condition_rhs(model: str, params: MajorantParams) -> float:
    _check_model(model, params)
    return _constants(model, params)[0]


@dataclass
class Certificate:
    model: str
    majorant: np.ndarray
    condition_lhs: float
    condition_rhs: float
    satisfied: bool
    rate: float | None  # lower bound on the contraction rate; None if not certified
    c_tilde: float
    g: float
    discriminant: float
    abscissa: float  # alpha(J_M) from a generic eigen-solve
    eta: np.ndarray
    p: float
    params: MajorantParams = field(repr=False)

    def summary(self) -> str:
        M = self.majorant
        lines = [
            f"model            {self.model}",
            f"majorant J_M     [[{M[0, 0]: .6g}, {M[0, 1]: .6g}],",
            f"                  [{M[1, 0]: .6g}, {M[1, 1]: .6g}]]",
            f"condition        c_n*c_s = {self.condition_lhs:.6g}  vs  rhs = {self.condition_rhs:.6g}",
            f"satisfied        {'yes' if self.satisfied else 'no'}",
            f"rate lambda      {self.rate:.6g}" if self.satisfied else "rate lambda      n/a",
            f"alpha(J_M)       {self.abscissa:.6g}",
            f"eta (p={_fmt_p(self.p)})      [{self.eta[0]:.6g}, {self.eta[1]:.6g}]",
        ]
        return "\n".join(lines)


def _fmt_p(p: float) -> str:
    return "inf" if math.isinf(p) else f"{p:g}"


def certify_params(model: str, params: MajorantParams, p: float = math.inf) -> Certificate:
    """Contraction certificate from the scalar network constants alone."""
    _check_model(model, params)
    M = majorant_bound(model, params)
    rhs, c_tilde, g = _constants(model, params)
    lhs = params.c_n * params.c_s
    s = c_tilde + g
    disc = s * s - 4.0 * g * params.c_s**2
    # disc > 0 is guaranteed under the condition; a negative value can only be
    # rounding at the boundary, reported as not certified.
    satisfied = bool(lhs > rhs and disc >= 0.0)
    rate = (s - math.sqrt(disc)) / (2.0 * params.c_s) if satisfied else None
    delta = 0.0 if is_irreducible(M) else DEFAULT_DELTA
    eta = compute_eta(M, p=p, delta=delta)
    return Certificate(
        model=model,
        majorant=M,
        condition_lhs=lhs,
        condition_rhs=rhs,
        satisfied=satisfied,
        rate=rate,
        c_tilde=c_tilde,
        g=g,
        discriminant=disc,
        abscissa=spectral_abscissa(M),
        eta=eta,
        p=p,
        params=params,
    )


def certify(topo: Topology, spec: ModelSpec, p: float = math.inf) -> Certificate:
    """Certificate for ``spec.model`` on ``topo``. The neural stimulus ``u`` plays no role."""
    spec.check(topo)
    return certify_params(spec.model, MajorantParams.from_network(topo, spec), p=p)


# ---------------------------------------------------------------------------
# forward-invariant box


@dataclass(frozen=True)
class Bounds:
    w_max: float
    x_max: float
    nu_max: float
    b_max: float
    h_max: float
    d_max: int
    phi_max: float
    u_max: float
    ubar_max: float
    model: str = "HH"

    @property
    def y_max(self) -> float:
        """Bound on the neural state of this model (x_max or nu_max)."""
        return self.x_max if self.model in ("HH", "HO") else self.nu_max


def compute_bounds(topo: Topology, spec: ModelSpec) -> Bounds:
    spec.check(topo)
    phi_max = spec.phi_max
    h_max = topo.h_max
    d_max = topo.d_max
    u_max = spec.u.sup()
    ubar_max = spec.ubar.sup()
    w_max = (h_max * phi_max**2 + ubar_max) / spec.c_s
    return Bounds(
        w_max=w_max,
        x_max=(u_max + d_max * phi_max * w_max) / spec.c_n,
        nu_max=phi_max / spec.c_n,
        b_max=d_max * h_max * phi_max**2,
        h_max=h_max,
        d_max=d_max,
        phi_max=phi_max,
        u_max=u_max,
        ubar_max=ubar_max,
        model=spec.model,
    )


# ---------------------------------------------------------------------------
# Perron weights


def is_irreducible(M) -> bool:
    """Strong connectivity of the off-diagonal sparsity pattern."""
    M = _square(M)
    k = M.shape[0]
    if k <= 1:
        return True
    adj = (M != 0) & ~np.eye(k, dtype=bool)

    def reaches_all(A: np.ndarray) -> bool:
        seen = {0}
        stack = [0]
        while stack:
            i = stack.pop()
            for j in np.flatnonzero(A[i]):
                if j not in seen:
                    seen.add(int(j))
                    stack.append(int(j))
        return len(seen) == k

    return reaches_all(adj) and reaches_all(adj.T)


def _perron_vector(A: np.ndarray, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Dominant eigenvector of a Metzler matrix by power iteration.

    The shift makes every diagonal entry at least 1, so the iterated matrix is
    non-negative with a positive diagonal (hence aperiodic when irreducible).
    """
    k = A.shape[0]
    shift = abs(min(0.0, float(np.min(np.diag(A))))) + 1.0
    P = A + shift * np.eye(k)
    v = np.full(k, 1.0 / math.sqrt(k))
    for _ in range(max_iter):
        nv = P @ v
        nv /= np.linalg.norm(nv)
        if np.max(np.abs(nv - v)) < tol:
            return nv
        v = nv
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations")


def compute_eta(M, p: float = math.inf, delta: float = 0.0) -> np.ndarray:
    """Positive weights eta with mu_{p, diag(eta)}(M) within epsilon(delta) of alpha(M).

    ``eta_i = l_i^(1/p) / r_i^(1/q)`` with ``l``, ``r`` the left and right Perron
    vectors of ``M + delta * 1 1^T`` and ``q`` the conjugate exponent. For an
    irreducible ``M`` and ``delta = 0`` the weighted log norm equals alpha(M).
    """
    M = _square(M)
    off = M[~np.eye(M.shape[0], dtype=bool)]
    if np.any(off < 0):
        raise NotMetzler("matrix has negative off-diagonal entries")
    if not (p >= 1):
        raise UnsupportedExponent(f"p must lie in [1, inf], got {p}")
    if delta < 0:
        raise InvalidParams(f"delta must be non-negative, got {delta}")
    if delta == 0 and not is_irreducible(M):
        raise ReducibleWithZeroDelta("reducible Metzler matrix needs delta > 0")
    Md = M + delta * np.ones_like(M)
    r = _perron_vector(Md)
    l = _perron_vector(Md.T)
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    inv_q = 1.0 - inv_p
    return l**inv_p / r**inv_q


def weighted_lognorm(A, eta, p: float = math.inf) -> float:
    """Log norm of ``diag(eta) A diag(eta)^-1`` in the base 1- or infinity-norm."""
    A = _square(A)
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (A.shape[0],):
        raise InvalidParams(f"eta must have length {A.shape[0]}, got shape {eta.shape}")
    if np.any(~(eta > 0)):
        raise NonPositiveWeight("eta must be entrywise positive")
    S = A * eta[:, None] / eta[None, :]
    if math.isinf(p):
        return lognorm_inf(S)
    if p == 1:
        return lognorm_inf(S.T)
    raise UnsupportedExponent(f"weighted log norm supports p in {{1, inf}}, got {p}")


def composite_lognorm_bound(blocks, eta, p: float = math.inf) -> float:
    """Upper bound on the composite log norm of a block matrix."""
    return weighted_lognorm(aggregate_metzler_majorant(blocks), eta, p)
