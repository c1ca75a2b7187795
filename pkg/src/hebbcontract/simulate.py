"""Fixed-step RK4 integration, empirical contraction rates and runtime monitors.

Trajectories live on a uniform grid ``t_k = k * dt`` (times are computed from
the index, never accumulated), so paired runs can be compared point by point
and reruns are bitwise reproducible.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import maximum_filter1d

from .analysis import Bounds, certify, compute_bounds
from .dynamics import ModelSpec, SystemState, dense_vector_field, rhs
from .errors import (
    DegenerateWindow,
    DimensionMismatch,
    GridMismatch,
    NonFiniteState,
    NonSymmetricH,
    TrajectoryTooShort,
    UnstableStep,
)
from .topology import Topology

__all__ = [
    "Trajectory",
    "DenseTrajectory",
    "RateEstimate",
    "integrate",
    "integrate_many",
    "integrate_delayed",
    "integrate_dense",
    "random_initial_states",
    "composite_distance",
    "empirical_rate",
    "check_invariance",
    "check_dale",
    "check_skew_decay",
    "check_entrainment",
    "check_delay_contraction",
]

STABILITY_FACTOR = 0.2
DALE_TOL = 1e-9


@dataclass
class Trajectory:
    times: np.ndarray  # (T,)
    states: np.ndarray  # (T, n + m)
    dt: float
    topo: Topology = field(repr=False)
    spec: ModelSpec = field(repr=False)
    tau: float = 0.0
    monitors: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    warnings: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.topo.n

    @property
    def m(self) -> int:
        return self.topo.m

    @property
    def y(self) -> np.ndarray:
        return self.states[:, : self.n]

    @property
    def w(self) -> np.ndarray:
        return self.states[:, self.n :]

    def state_at(self, k: int) -> SystemState:
        return SystemState.unpack(self.states[k], self.n)

    def header(self) -> list[str]:
        return (
            ["t"]
            + [f"y_{i}" for i in range(1, self.n + 1)]
            + [f"w_{e}" for e in range(1, self.m + 1)]
        )

    def to_csv(self, path=None) -> str | None:
        """Write ``t,y_1..y_n,w_1..w_m`` rows; returns the text when ``path`` is None."""
        buf = io.StringIO() if path is None else open(path, "w", newline="")
        try:
            writer = csv.writer(buf, lineterminator="\n")
            writer.writerow(self.header())
            for t, z in zip(self.times, self.states):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in z])
            if path is None:
                return buf.getvalue()
        finally:
            if path is not None:
                buf.close()
        return None


@dataclass
class DenseTrajectory:
    times: np.ndarray  # (T,)
    y: np.ndarray  # (T, n)
    W: np.ndarray  # (T, n, n)
    H: np.ndarray
    spec: ModelSpec = field(repr=False)
    dt: float = 0.0


@dataclass
class RateEstimate:
    rate: float
    window: tuple[float, float]
    norm: str
    residual: float
    saturated: bool = False
    points: int = 0


# ---------------------------------------------------------------------------
# integration


def _grid(spec: ModelSpec, t_end: float, dt: float) -> int:
    if not dt > 0:
        raise UnstableStep(f"dt must be positive, got {dt}")
    if not t_end >= dt:
        raise UnstableStep(f"t_end={t_end} must be at least dt={dt}")
    limit = STABILITY_FACTOR / max(spec.c_n, spec.c_s)
    if dt > limit:
        raise UnstableStep(f"dt={dt} exceeds the stability guard 0.2/max(c_n, c_s) = {limit:.6g}")
    return int(round(t_end / dt))


def _flat0(topo: Topology, state0) -> np.ndarray:
    z = state0.pack() if isinstance(state0, SystemState) else np.array(state0, dtype=float)
    if z.shape[-1] != topo.n + topo.m:
        raise DimensionMismatch(
            f"initial state must have trailing dimension {topo.n + topo.m}, got {z.shape}"
        )
    if not np.all(np.isfinite(z)):
        raise NonFiniteState("initial state has non-finite entries")
    return z


def _rk4(f: Callable[[np.ndarray, float], np.ndarray], z0: np.ndarray, steps: int, dt: float) -> np.ndarray:
    out = np.empty((steps + 1,) + z0.shape)
    out[0] = z0
    z = z0
    half = 0.5 * dt
    for k in range(steps):
        t = k * dt
        k1 = f(z, t)
        k2 = f(z + half * k1, t + half)
        k3 = f(z + half * k2, t + half)
        k4 = f(z + dt * k3, t + dt)
        with np.errstate(over="ignore", invalid="ignore"):
            z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise NonFiniteState(f"state became non-finite at t={(k + 1) * dt:.6g}")
        out[k + 1] = z
    return out


def _wrap(topo, spec, times, states, dt, tau=0.0, notes=None) -> Trajectory:
    traj = Trajectory(times, states, dt, topo, spec, tau=tau, warnings=list(notes or []))
    traj.monitors = step_monitors(traj)
    return traj


def integrate_many(topo: Topology, spec: ModelSpec, states0, t_end: float, dt: float) -> list[Trajectory]:
    """Integrate a batch ``(B, n+m)`` of initial states on one shared grid."""
    spec.check(topo)
    steps = _grid(spec, t_end, dt)
    z0 = _flat0(topo, states0)
    if z0.ndim != 2:
        raise DimensionMismatch("integrate_many expects a 2-D batch of initial states")
    Z = _rk4(lambda z, t: rhs(topo, spec, z, t), z0, steps, dt)
    times = np.arange(steps + 1) * dt
    return [_wrap(topo, spec, times, np.ascontiguousarray(Z[:, b]), dt) for b in range(z0.shape[0])]


def integrate(topo: Topology, spec: ModelSpec, state0, t_end: float, dt: float) -> Trajectory:
    """Classical RK4 from ``state0`` over ``[0, t_end]``."""
    spec.check(topo)
    steps = _grid(spec, t_end, dt)
    z0 = _flat0(topo, state0)
    if z0.ndim != 1:
        raise DimensionMismatch("integrate takes a single initial state; use integrate_many")
    Z = _rk4(lambda z, t: rhs(topo, spec, z, t), z0, steps, dt)
    return _wrap(topo, spec, np.arange(steps + 1) * dt, Z, dt)


def _delay_steps(tau: float, dt: float) -> tuple[int, list[str]]:
    if tau < 0:
        raise UnstableStep(f"delay must be non-negative, got {tau}")
    d = int(round(tau / dt))
    notes = []
    if abs(d * dt - tau) > 1e-9 * max(1.0, tau):
        msg = f"delay tau={tau:g} is not a multiple of dt={dt:g}; using tau={d * dt:g}"
        warnings.warn(msg, stacklevel=3)
        notes.append(msg)
    return d, notes


def _rk4_delayed(topo, spec, z0: np.ndarray, steps: int, dt: float, d: int) -> np.ndarray:
    """RK4 where every activation argument is read ``d`` grid steps in the past.

    History before t = 0 is the constant ``z0``. Half-step lags fall between two
    stored grid points and use cubic Hermite interpolation with the stored
    derivatives, which keeps the scheme fourth order on smooth stretches.
    """
    tau = d * dt
    Z = np.empty((steps + 1,) + z0.shape)
    F = np.empty_like(Z)
    Z[0] = z0
    z = z0
    half = 0.5 * dt

    def lagged(j: int) -> np.ndarray:
        return z0 if j <= 0 else Z[j]

    for k in range(steps):
        t = k * dt
        j = k - d  # grid index of the lag for the stage at time t
        k1 = rhs(topo, spec, z, t, lagged(j), t - tau)
        F[k] = k1
        if j + 1 <= 0:
            zmid = z0
        else:
            zmid = 0.5 * (Z[j] + Z[j + 1]) + (dt / 8.0) * (F[j] - F[j + 1])
        k2 = rhs(topo, spec, z + half * k1, t + half, zmid, t + half - tau)
        k3 = rhs(topo, spec, z + half * k2, t + half, zmid, t + half - tau)
        k4 = rhs(topo, spec, z + dt * k3, t + dt, lagged(j + 1), t + dt - tau)
        z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(z)):
            raise NonFiniteState(f"state became non-finite at t={(k + 1) * dt:.6g}")
        Z[k + 1] = z
    return Z


def integrate_delayed(topo: Topology, spec: ModelSpec, state0, t_end: float, dt: float,
                      tau: float) -> Trajectory:
    """RK4 with all activation arguments evaluated at ``t - tau``.

    ``tau`` is rounded to the nearest multiple of ``dt`` (with a warning that is
    also stored on the trajectory). ``tau == 0`` runs the ordinary integrator.
    """
    spec.check(topo)
    steps = _grid(spec, t_end, dt)
    d, notes = _delay_steps(tau, dt)
    z0 = _flat0(topo, state0)
    if d == 0:
        Z = _rk4(lambda z, t: rhs(topo, spec, z, t), z0, steps, dt)
    else:
        Z = _rk4_delayed(topo, spec, z0, steps, dt, d)
    times = np.arange(steps + 1) * dt
    if Z.ndim == 3:
        return [_wrap(topo, spec, times, np.ascontiguousarray(Z[:, b]), dt, d * dt, notes)
                for b in range(Z.shape[1])]
    return _wrap(topo, spec, times, Z, dt, d * dt, notes)


def integrate_dense(spec: ModelSpec, H, y0, W0, t_end: float, dt: float, ubar=None) -> DenseTrajectory:
    """RK4 on the full n + n^2 system (test oracle and symmetric-H experiments)."""
    H = np.asarray(H, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    W0 = np.asarray(W0, dtype=float)
    n = y0.shape[0]
    steps = _grid(spec, t_end, dt)

    def f(z, t):
        dy, dW = dense_vector_field(spec, H, z[:n], z[n:].reshape(n, n), t, ubar)
        return np.concatenate([dy, dW.ravel()])

    Z = _rk4(f, np.concatenate([y0, W0.ravel()]), steps, dt)
    return DenseTrajectory(
        times=np.arange(steps + 1) * dt,
        y=Z[:, :n],
        W=Z[:, n:].reshape(-1, n, n),
        H=H,
        spec=spec,
        dt=dt,
    )


def random_initial_states(topo: Topology, spec: ModelSpec, count: int, rng: np.random.Generator,
                          low: float = -1.0, high: float = 1.0, dale: bool = True,
                          inside_invariant: bool = False) -> np.ndarray:
    """Uniform draws from ``[low, high]^(n+m)``, shape ``(count, n+m)``.

    ``dale`` gives each weight the sign of its Hebbian coefficient.
    ``inside_invariant`` intersects the sampling interval with the forward
    invariant box so that the draws start inside it.
    """
    n, m = topo.n, topo.m
    ylo, yhi, wlo, whi = low, high, low, high
    if inside_invariant:
        b = compute_bounds(topo, spec)
        ylo, yhi = max(low, -b.y_max), min(high, b.y_max)
        wlo, whi = max(low, -b.w_max), min(high, b.w_max)
    y = rng.uniform(ylo, yhi, size=(count, n))
    if dale:
        mag_hi = max(abs(wlo), abs(whi))
        w = rng.uniform(0.0, mag_hi, size=(count, m)) * np.sign(topo.h)
    else:
        w = rng.uniform(wlo, whi, size=(count, m))
    return np.concatenate([y, w], axis=1)


# ---------------------------------------------------------------------------
# rates


def composite_distance(za, zb, n: int, eta=(1.0, 1.0), p: float = math.inf) -> np.ndarray:
    """``|| [eta_1 ||dy||_inf, eta_2 ||dw||_inf] ||_p`` along the leading axis."""
    d = np.abs(np.asarray(za, dtype=float) - np.asarray(zb, dtype=float))
    dy = d[..., :n].max(axis=-1) if n else np.zeros(d.shape[:-1])
    dw = d[..., n:].max(axis=-1) if d.shape[-1] > n else np.zeros(d.shape[:-1])
    a, b = eta[0] * dy, eta[1] * dw
    if math.isinf(p):
        return np.maximum(a, b)
    return (a**p + b**p) ** (1.0 / p)


def empirical_rate(traj_a: Trajectory, traj_b: Trajectory, eta=None, p: float = math.inf,
                   window: tuple[float, float] | None = None, floor: float = 1e-10) -> RateEstimate:
    """Negated least-squares slope of ``log distance(t)`` over ``window``.

    Default window starts at t = 1 and stops at the first sample where the
    composite distance falls below ``floor``. ``eta`` defaults to the
    certificate weights of the trajectory's model.
    """
    if traj_a.states.shape != traj_b.states.shape or not np.array_equal(traj_a.times, traj_b.times):
        raise GridMismatch("trajectories must share the same time grid and dimensions")
    if eta is None:
        eta = certify(traj_a.topo, traj_a.spec, p=p).eta
    t = traj_a.times
    dist = composite_distance(traj_a.states, traj_b.states, traj_a.n, eta, p)
    norm = f"max-composite p={'inf' if math.isinf(p) else p} eta=({eta[0]:.6g}, {eta[1]:.6g})"

    if window is None:
        start, stop = 1.0, float(t[-1])
        tail = dist[t >= start]
        if tail.size and np.all(tail == 0.0):
            return RateEstimate(math.inf, (start, stop), norm, 0.0, saturated=True, points=int(tail.size))
        below = np.flatnonzero((t >= start) & (dist < floor))
        if below.size:
            stop = float(t[below[0]])
            mask = (t >= start) & (t < stop)
        else:
            mask = t >= start
    else:
        start, stop = window
        mask = (t >= start) & (t <= stop)
    if start < t[0] or start >= t[-1] or stop <= start:
        raise DegenerateWindow(f"window ({start}, {stop}) outside trajectory span [{t[0]}, {t[-1]}]")

    if np.all(dist[mask] == 0.0) and mask.any():
        return RateEstimate(math.inf, (start, stop), norm, 0.0, saturated=True, points=int(mask.sum()))
    mask &= dist > 0.0
    if mask.sum() < 3:
        raise DegenerateWindow(f"only {int(mask.sum())} usable samples in window ({start}, {stop})")
    tt = t[mask]
    ld = np.log(dist[mask])
    slope, icpt = np.polyfit(tt, ld, 1)
    resid = float(np.sqrt(np.mean((ld - (slope * tt + icpt)) ** 2)))
    return RateEstimate(float(-slope), (start, stop), norm, resid, points=int(mask.sum()))


# ---------------------------------------------------------------------------
# monitors


@dataclass
class InvarianceReport:
    violations: list[tuple[float, str, float]]  # (t, component, excess over envelope)
    bounds: Bounds

    @property
    def ok(self) -> bool:
        return not self.violations


def _envelopes(traj: Trajectory, b: Bounds) -> tuple[np.ndarray, np.ndarray]:
    t = traj.times[:, None]
    y0 = np.abs(traj.y[0])[None, :]
    w0 = np.abs(traj.w[0])[None, :]
    env_y = (y0 - b.y_max) * np.exp(-traj.spec.c_n * t) + b.y_max
    env_w = (w0 - b.w_max) * np.exp(-traj.spec.c_s * t) + b.w_max
    return env_y, env_w


def check_invariance(traj: Trajectory, bounds: Bounds | None = None, rtol: float = 1e-9) -> InvarianceReport:
    """Check the exponential envelopes on every neuron and edge at every step."""
    b = bounds or compute_bounds(traj.topo, traj.spec)
    env_y, env_w = _envelopes(traj, b)
    out = []
    for label, vals, env, cap in (("y", traj.y, env_y, b.y_max), ("w", traj.w, env_w, b.w_max)):
        excess = np.abs(vals) - env
        tol = rtol * max(1.0, cap)
        ks, idx = np.nonzero(excess > tol)
        out.extend(
            (float(traj.times[k]), f"{label}_{i + 1}", float(excess[k, i])) for k, i in zip(ks, idx)
        )
    out.sort()
    return InvarianceReport(out, b)


@dataclass
class EdgeVerdict:
    edge: int  # 1-based
    status: str  # "preserved", "violated" or "not applicable"
    first_violation: float | None = None
    reason: str = ""


@dataclass
class DaleReport:
    edges: list[EdgeVerdict]

    @property
    def ok(self) -> bool:
        return all(v.status != "violated" for v in self.edges)

    @property
    def flips(self) -> int:
        return sum(v.status == "violated" for v in self.edges)


def _dale_applicable(topo: Topology, spec: ModelSpec, w0: np.ndarray) -> list[tuple[bool, str]]:
    out = []
    for e in range(topo.m):
        if not spec.ubar.channels[e].is_zero:
            out.append((False, "synaptic stimulus is nonzero"))
        elif topo.h[e] > 0 and w0[e] < 0:
            out.append((False, "Hebbian edge starts negative"))
        elif topo.h[e] < 0 and w0[e] > 0:
            out.append((False, "anti-Hebbian edge starts positive"))
        else:
            out.append((True, ""))
    return out


def check_dale(traj: Trajectory, topo: Topology | None = None) -> DaleReport:
    """Sign preservation of each applicable synapse (zero stimulus, consistent start)."""
    topo = topo or traj.topo
    w = traj.w
    verdicts = []
    for e, (ok, why) in enumerate(_dale_applicable(topo, traj.spec, w[0])):
        if not ok:
            verdicts.append(EdgeVerdict(e + 1, "not applicable", reason=why))
            continue
        signed = w[:, e] * np.sign(topo.h[e])
        bad = np.flatnonzero(signed < -DALE_TOL)
        if bad.size:
            verdicts.append(EdgeVerdict(e + 1, "violated", float(traj.times[bad[0]])))
        else:
            verdicts.append(EdgeVerdict(e + 1, "preserved"))
    return DaleReport(verdicts)


def step_monitors(traj: Trajectory) -> dict[str, np.ndarray]:
    """Per-step flags: any envelope exceedance, any Dale sign flip."""
    b = compute_bounds(traj.topo, traj.spec)
    env_y, env_w = _envelopes(traj, b)
    exceed = np.any(np.abs(traj.y) - env_y > 1e-9 * max(1.0, b.y_max), axis=1)
    if traj.m:
        exceed |= np.any(np.abs(traj.w) - env_w > 1e-9 * max(1.0, b.w_max), axis=1)
    flip = np.zeros(len(traj.times), dtype=bool)
    for e, (ok, _) in enumerate(_dale_applicable(traj.topo, traj.spec, traj.w[0])):
        if ok:
            flip |= traj.w[:, e] * np.sign(traj.topo.h[e]) < -DALE_TOL
    return {"bound_exceeded": exceed, "dale_flip": flip}


@dataclass
class SkewReport:
    applicable: bool
    status: str
    max_rel_error: float = 0.0  # for W_A(0) != 0
    max_abs_skew: float = 0.0  # for W_A(0) == 0
    reason: str = ""


def check_skew_decay(traj: DenseTrajectory, c_s: float | None = None) -> SkewReport:
    """Skew-symmetric weight component under a symmetric coupling matrix.

    Expects ``||W_A(t)|| = exp(-c_s t) ||W_A(0)||`` (infinity norm), and
    ``W_A = 0`` throughout if it starts at zero.
    """
    H = traj.H
    if not np.array_equal(H, H.T):
        raise NonSymmetricH("coupling matrix H is not symmetric")
    spec = traj.spec
    if spec.oja and spec.c_o != 0:
        return SkewReport(False, "not applicable", reason="Oja drag breaks the symmetry (c_o != 0)")
    c_s = spec.c_s if c_s is None else c_s
    WA = 0.5 * (traj.W - np.swapaxes(traj.W, 1, 2))
    norms = np.abs(WA).sum(axis=2).max(axis=1)
    if norms[0] == 0.0:
        worst = float(norms.max())
        return SkewReport(True, "zero" if worst < 1e-12 else "violated", max_abs_skew=worst)
    predicted = norms[0] * np.exp(-c_s * traj.times)
    rel = float(np.max(np.abs(norms / predicted - 1.0)))
    return SkewReport(True, "decaying", max_rel_error=rel)


@dataclass
class EntrainmentReport:
    period: float
    residual: float
    tol: float
    window: tuple[float, float]
    certified: bool

    @property
    def entrained(self) -> bool:
        return self.residual < self.tol


def check_entrainment(traj: Trajectory, period: float, periods: int = 3, tol: float = 1e-3,
                      transient: float | None = None) -> EntrainmentReport:
    """Max over the last ``periods`` periods of ``||z(t + T) - z(t)||_inf``.

    ``transient`` defaults to ``5 / lambda`` for a certified model and
    ``5 / min(c_n, c_s)`` otherwise. Off-grid samples ``t + T`` come from a cubic
    spline through the trajectory.
    """
    cert = certify(traj.topo, traj.spec)
    if transient is None:
        rate = cert.rate if cert.satisfied else min(traj.spec.c_n, traj.spec.c_s)
        transient = 5.0 / rate
    t = traj.times
    t_end = float(t[-1])
    start = t_end - periods * period
    if start < transient:
        raise TrajectoryTooShort(
            f"need t_end >= {transient + periods * period:.4g} (transient {transient:.4g} + "
            f"{periods} periods), got {t_end:.4g}"
        )
    seg = t >= start - 2 * traj.dt
    spline = CubicSpline(t[seg], traj.states[seg], axis=0)
    ts = t[(t >= start) & (t <= t_end - period)]
    diff = spline(ts + period) - traj.states[np.searchsorted(t, ts)]
    residual = float(np.max(np.abs(diff)))
    return EntrainmentReport(period, residual, tol, (start, t_end), cert.satisfied)


@dataclass
class DelayContractionReport:
    tau: float
    window: tuple[float, float]
    nonincreasing: bool
    first_increase: float | None
    segment_distance: np.ndarray = field(repr=False)


def check_delay_contraction(traj_a: Trajectory, traj_b: Trajectory, eta=(1.0, 1.0), p: float = math.inf,
                            transient: float | None = None, floor: float = 1e-10,
                            rtol: float = 1e-9) -> DelayContractionReport:
    """Qualitative contraction test for delayed runs.

    The state of a delay system is its history segment, so the distance used is
    ``D(t) = max over s in [t - tau, t]`` of the composite distance. The check
    passes when ``D`` is non-increasing from ``transient`` (default ``tau``)
    until the pointwise distance first drops below ``floor``.
    """
    if traj_a.states.shape != traj_b.states.shape or not np.array_equal(traj_a.times, traj_b.times):
        raise GridMismatch("trajectories must share the same time grid and dimensions")
    d = composite_distance(traj_a.states, traj_b.states, traj_a.n, eta, p)
    lag = int(round(traj_a.tau / traj_a.dt))
    # trailing window of lag + 1 samples ending at each index
    seg = maximum_filter1d(d, size=lag + 1, origin=lag // 2, mode="nearest") if lag else d.copy()
    t = traj_a.times
    start = traj_a.tau if transient is None else transient
    below = np.flatnonzero(d < floor)
    stop = float(t[below[0]]) if below.size else float(t[-1])
    k0 = int(np.searchsorted(t, start))
    k1 = int(np.searchsorted(t, stop))
    if k1 - k0 < 2:
        raise DegenerateWindow(f"window ({start}, {stop}) is too short")
    inc = np.flatnonzero(np.diff(seg[k0:k1]) > rtol * seg[k0:k1 - 1])
    first = float(t[k0 + inc[0] + 1]) if inc.size else None
    return DelayContractionReport(traj_a.tau, (float(start), stop), not inc.size, first, seg)
