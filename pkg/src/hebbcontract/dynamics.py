"""Vector fields and Jacobians of the four coupled neural-synaptic models.

Models (``y`` is the neural state, ``w`` the per-edge synaptic weights)::

    HH  x' = -c_n x + W Phi(x) + u            w' = h * Phi(x_pre) * Phi(x_post) - c_s w + ubar
    FH  v' = -c_n v + Phi(W v + u)            w' = (same as HH with v in place of x)
    HO  as HH, with synaptic drag (c_s + c_o Phi(y_post)^2) instead of c_s
    FO  as FH, with the same Oja drag

where ``W = B_in diag(w) B_out^T`` is never formed on the hot path.

Flat state layout is ``z = [y (n), w (m)]`` with an optional leading batch axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, InvalidParams
from .topology import Topology, apply_weighted, reconstruct_adjacency

MODELS = ("HH", "FH", "HO", "FO")

__all__ = [
    "MODELS",
    "Activation",
    "Signal",
    "Stimulus",
    "ModelSpec",
    "SystemState",
    "JacobianBlocks",
    "phi",
    "phi_prime",
    "vector_field",
    "dense_vector_field",
    "jacobian",
]


# ---------------------------------------------------------------------------
# activation


@dataclass(frozen=True)
class Activation:
    """Scaled sigmoid ``ceiling / (1 + exp(-gain * s))``.

    ``gain = ceiling = 1`` is the plain logistic sigmoid. The slope peaks at
    ``gain * ceiling / 4`` (at s = 0) and must not exceed 1.
    """

    gain: float = 1.0
    ceiling: float = 1.0

    def __post_init__(self):
        if not (self.gain > 0 and self.ceiling > 0):
            raise InvalidParams(f"activation needs gain > 0 and ceiling > 0, got {self}")
        if self.phi_prime_max > 1.0:
            raise InvalidParams(
                f"activation slope bound gain*ceiling/4 = {self.phi_prime_max:g} exceeds 1"
            )

    @property
    def kind(self) -> str:
        return "sigmoid" if self.gain == 1.0 and self.ceiling == 1.0 else "scaled-sigmoid"

    @property
    def phi_max(self) -> float:
        return self.ceiling

    @property
    def phi_prime_max(self) -> float:
        return self.gain * self.ceiling / 4.0

    def __call__(self, s):
        return self.ceiling * expit(self.gain * np.asarray(s, dtype=float))

    def derivative(self, s):
        p = self(s)
        return self.gain * p * (self.ceiling - p) / self.ceiling


def phi(act: Activation, s):
    return act(s)


def phi_prime(act: Activation, s):
    return act.derivative(s)


# ---------------------------------------------------------------------------
# stimuli

SIGNAL_KINDS = ("zero", "constant", "sinusoid", "tanh_ramp")


@dataclass(frozen=True)
class Signal:
    """One stimulus channel.

    ``constant``: ``amplitude``; ``sinusoid``: ``amplitude * sin(omega t + phase)``;
    ``tanh_ramp``: ``amplitude * tanh(t)``; ``zero``: 0.
    """

    kind: str = "zero"
    amplitude: float = 0.0
    omega: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise InvalidParams(f"unknown signal kind {self.kind!r}; expected one of {SIGNAL_KINDS}")
        for name in ("amplitude", "omega", "phase"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParams(f"signal {name} must be finite")

    @classmethod
    def zero(cls) -> "Signal":
        return cls()

    @classmethod
    def constant(cls, a: float) -> "Signal":
        return cls("constant", float(a))

    @classmethod
    def sinusoid(cls, amplitude: float, omega: float, phase: float = 0.0) -> "Signal":
        return cls("sinusoid", float(amplitude), float(omega), float(phase))

    @classmethod
    def tanh_ramp(cls, amplitude: float) -> "Signal":
        return cls("tanh_ramp", float(amplitude))

    @property
    def sup(self) -> float:
        """Exact ``sup_{t >= 0} |s(t)|`` for this family."""
        return 0.0 if self.kind == "zero" else abs(self.amplitude)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.amplitude == 0.0

    def __call__(self, t: float) -> float:
        if self.kind == "constant":
            return self.amplitude
        if self.kind == "sinusoid":
            return self.amplitude * math.sin(self.omega * t + self.phase)
        if self.kind == "tanh_ramp":
            return self.amplitude * math.tanh(t)
        return 0.0

    def scaled(self, factor: float) -> "Signal":
        return Signal(self.kind, self.amplitude * factor, self.omega, self.phase)


class Stimulus:
    """A bank of signals, one per neuron (``u``) or per edge (``ubar``).

    Evaluation is vectorised: each channel contributes through exactly one of
    the constant / sine / tanh coefficient arrays.
    """

    def __init__(self, channels: Sequence[Signal]):
        self.channels = tuple(channels)
        k = len(self.channels)
        self._const = np.zeros(k)
        self._sin_amp = np.zeros(k)
        self._omega = np.zeros(k)
        self._phase = np.zeros(k)
        self._tanh_amp = np.zeros(k)
        for i, s in enumerate(self.channels):
            if s.kind == "constant":
                self._const[i] = s.amplitude
            elif s.kind == "sinusoid":
                self._sin_amp[i] = s.amplitude
                self._omega[i] = s.omega
                self._phase[i] = s.phase
            elif s.kind == "tanh_ramp":
                self._tanh_amp[i] = s.amplitude
        self._has_sin = bool(np.any(self._sin_amp))
        self._has_tanh = bool(np.any(self._tanh_amp))

    @classmethod
    def zeros(cls, k: int) -> "Stimulus":
        return cls([Signal.zero()] * k)

    def __len__(self) -> int:
        return len(self.channels)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Stimulus) and self.channels == other.channels

    def __repr__(self) -> str:
        return f"Stimulus({list(self.channels)!r})"

    def __call__(self, t: float) -> np.ndarray:
        out = self._const.copy()
        if self._has_sin:
            out += self._sin_amp * np.sin(self._omega * t + self._phase)
        if self._has_tanh:
            out += self._tanh_amp * math.tanh(t)
        return out

    def sup(self) -> float:
        return max((s.sup for s in self.channels), default=0.0)

    def scaled(self, factor: float) -> "Stimulus":
        return Stimulus([s.scaled(factor) for s in self.channels])


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class ModelSpec:
    model: str
    c_n: float
    c_s: float
    u: Stimulus
    ubar: Stimulus
    c_o: float = 0.0
    activation: Activation = field(default_factory=Activation)
    synaptic_activation: Activation | None = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise InvalidParams(f"unknown model {self.model!r}; expected one of {MODELS}")
        if not (self.c_n > 0 and self.c_s > 0):
            raise InvalidParams(f"decay rates must be positive (c_n={self.c_n}, c_s={self.c_s})")
        if not self.c_o >= 0:
            raise InvalidParams(f"c_o must be non-negative, got {self.c_o}")
        if self.model in ("HH", "FH") and self.c_o != 0:
            raise InvalidParams(f"model {self.model} has no Oja term; c_o must be 0, got {self.c_o}")

    @property
    def hopfield(self) -> bool:
        return self.model in ("HH", "HO")

    @property
    def oja(self) -> bool:
        return self.model in ("HO", "FO")

    @property
    def syn_act(self) -> Activation:
        return self.synaptic_activation or self.activation

    @property
    def phi_max(self) -> float:
        # conservative: one bound across the neural and synaptic roles
        return max(self.activation.phi_max, self.syn_act.phi_max)

    def check(self, topo: Topology) -> None:
        if len(self.u) != topo.n:
            raise DimensionMismatch(f"u has {len(self.u)} channels, network has {topo.n} neurons")
        if len(self.ubar) != topo.m:
            raise DimensionMismatch(f"ubar has {len(self.ubar)} channels, network has {topo.m} edges")

    def replace(self, **changes) -> "ModelSpec":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass
class SystemState:
    """Neural state ``y`` (x or nu) and synaptic weights ``w``."""

    y: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.w = np.asarray(self.w, dtype=float)

    def pack(self) -> np.ndarray:
        return np.concatenate([self.y, self.w], axis=-1)

    @classmethod
    def unpack(cls, z, n: int) -> "SystemState":
        z = np.asarray(z, dtype=float)
        return cls(z[..., :n], z[..., n:])


def _as_flat(topo: Topology, state) -> tuple[np.ndarray, bool]:
    if isinstance(state, SystemState):
        z = state.pack()
        wrapped = True
    else:
        z = np.asarray(state, dtype=float)
        wrapped = False
    if z.ndim == 0 or z.shape[-1] != topo.n + topo.m:
        raise DimensionMismatch(
            f"state must have trailing dimension n+m={topo.n + topo.m}, got shape {z.shape}"
        )
    return z, wrapped


def rhs(topo: Topology, spec: ModelSpec, z: np.ndarray, t: float,
        z_lag: np.ndarray | None = None, t_lag: float | None = None) -> np.ndarray:
    """Flat right-hand side. ``z_lag``/``t_lag`` feed every activation argument.

    With ``z_lag is None`` the activations see the current state, which is the
    ordinary (undelayed) system; the arithmetic is then identical to passing
    ``z_lag = z``.
    """
    n = topo.n
    if z_lag is None:
        z_lag, t_lag = z, t
    y = z[..., :n]
    w = z[..., n:]
    yl = z_lag[..., :n]
    act_n = spec.activation
    act_s = spec.syn_act

    if spec.hopfield:
        pn = act_n(yl)
        dy = -spec.c_n * y + apply_weighted(topo, w, pn) + spec.u(t)
        ps = pn if act_s is act_n else act_s(yl)
    else:
        wl = z_lag[..., n:]
        arg = apply_weighted(topo, wl, yl) + spec.u(t_lag)
        dy = -spec.c_n * y + act_n(arg)
        ps = act_s(yl)

    a_pre = ps[..., topo.pre]
    a_post = ps[..., topo.post]
    drag = spec.c_s + spec.c_o * a_post**2 if spec.oja else spec.c_s
    dw = topo.h * a_pre * a_post - drag * w + spec.ubar(t)
    return np.concatenate([dy, dw], axis=-1)


def vector_field(topo: Topology, spec: ModelSpec, state, t: float):
    """Time derivative of ``state`` (a ``SystemState`` or flat array)."""
    spec.check(topo)
    z, wrapped = _as_flat(topo, state)
    dz = rhs(topo, spec, z, t)
    return SystemState.unpack(dz, topo.n) if wrapped else dz


def dense_vector_field(spec: ModelSpec, H, y, W, t: float, ubar=None):
    """Full-dimensional form with an n x n weight matrix.

    ``ubar`` is the dense synaptic stimulus matrix at time ``t``. When omitted
    it is built from ``spec.ubar`` placed on the nonzero pattern of ``H`` in
    row-major order (which is the edge order of ``topology.from_adjacency``).

    Returns ``(dy, dW)``.
    """
    H = np.asarray(H, dtype=float)
    W = np.asarray(W, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    if H.shape != (n, n) or W.shape != (n, n):
        raise DimensionMismatch(f"H and W must be {n}x{n}, got {H.shape} and {W.shape}")
    if ubar is None:
        rows, cols = np.nonzero(H)
        if len(spec.ubar) != rows.size:
            raise DimensionMismatch(
                f"ubar has {len(spec.ubar)} channels, H has {rows.size} nonzeros"
            )
        ubar = np.zeros((n, n))
        ubar[rows, cols] = spec.ubar(t)
    else:
        ubar = np.asarray(ubar, dtype=float)
        if ubar.shape != (n, n):
            raise DimensionMismatch(f"ubar must be {n}x{n}, got {ubar.shape}")
    if len(spec.u) != n:
        raise DimensionMismatch(f"u has {len(spec.u)} channels, expected {n}")

    act_n = spec.activation
    act_s = spec.syn_act
    if spec.hopfield:
        dy = -spec.c_n * y + W @ act_n(y) + spec.u(t)
    else:
        dy = -spec.c_n * y + act_n(W @ y + spec.u(t))
    ps = act_s(y)
    if spec.oja:
        drag = spec.c_s + spec.c_o * (ps**2)[:, None]
    else:
        drag = spec.c_s
    dW = H * np.outer(ps, ps) - drag * W + ubar
    return dy, dW


# ---------------------------------------------------------------------------
# jacobian


@dataclass
class JacobianBlocks:
    nn: np.ndarray  # d f_n / d y   (n x n)
    ns: np.ndarray  # d f_n / d w   (n x m)
    sn: np.ndarray  # d f_s / d y   (m x n)
    ss: np.ndarray  # d f_s / d w   (m x m)

    def full(self) -> np.ndarray:
        return np.block([[self.nn, self.ns], [self.sn, self.ss]])

    def as_grid(self) -> list[list[np.ndarray]]:
        return [[self.nn, self.ns], [self.sn, self.ss]]


def jacobian(topo: Topology, spec: ModelSpec, state, t: float) -> JacobianBlocks:
    """Analytic Jacobian of ``vector_field`` at a single state.

    For the firing-rate models the slope vector ``g = Phi'(W v + u)`` enters on
    the left: ``J_nn = -c_n I + diag(g) W`` and ``J_ns = diag(g) B_in diag(B_out^T v)``.
    """
    spec.check(topo)
    z, _ = _as_flat(topo, state)
    if z.ndim != 1:
        raise DimensionMismatch("jacobian takes a single (unbatched) state")
    n, m = topo.n, topo.m
    y, w = z[:n], z[n:]
    act_n, act_s = spec.activation, spec.syn_act
    B_in = topo.dense_b_in()
    B_out = topo.dense_b_out()
    W = reconstruct_adjacency(topo, w)
    pre, post = topo.pre, topo.post

    if spec.hopfield:
        pn = act_n(y)
        J_nn = -spec.c_n * np.eye(n) + W * act_n.derivative(y)[None, :]
        J_ns = B_in * pn[pre][None, :]
    else:
        g = act_n.derivative(W @ y + spec.u(t))
        J_nn = -spec.c_n * np.eye(n) + g[:, None] * W
        J_ns = g[:, None] * (B_in * y[pre][None, :])

    ps = act_s(y)
    dps = act_s.derivative(y)
    # row e: d/dy of h_e * ps[pre] * ps[post]
    J_sn = topo.h[:, None] * (ps[pre][:, None] * B_in.T + ps[post][:, None] * B_out.T) * dps[None, :]
    J_ss = -spec.c_s * np.eye(m)
    if spec.oja:
        J_sn = J_sn - 2.0 * spec.c_o * (w * ps[post])[:, None] * B_in.T * dps[None, :]
        J_ss = J_ss - spec.c_o * np.diag(ps[post] ** 2)
    return JacobianBlocks(J_nn, J_ns, J_sn, J_ss)
