"""Shared builders for the test suite."""
from __future__ import annotations

import math

import numpy as np

from hebbcontract.cli import load
from hebbcontract.dynamics import Activation, ModelSpec, Signal, Stimulus
from hebbcontract.topology import build_topology

FEEDFORWARD_EDGES = [(4, 1), (6, 1), (3, 2), (5, 2), (6, 3), (5, 4)]
FEEDFORWARD_H = [1, 1, 1, 1, -1, -1]


def feedforward():
    cfg = load("fig1")
    return cfg.topo, cfg.spec


def recurrent():
    cfg = load("fig3")
    return cfg.topo, cfg.spec


def random_topology(rng: np.random.Generator, n: int, m: int, h_scale: float = 1.0):
    pairs = [(i, j) for i in range(1, n + 1) for j in range(1, n + 1)]
    pick = rng.choice(len(pairs), size=m, replace=False)
    edges = [pairs[k] for k in sorted(pick)]
    h = rng.uniform(0.1, 1.0, size=m) * rng.choice([-1.0, 1.0], size=m) * h_scale
    return build_topology(n, edges, h)


def random_signal(rng: np.random.Generator) -> Signal:
    kind = rng.integers(4)
    if kind == 0:
        return Signal.zero()
    if kind == 1:
        return Signal.constant(rng.uniform(-2, 2))
    if kind == 2:
        return Signal.sinusoid(rng.uniform(-3, 3), rng.uniform(0.5, 10), rng.uniform(0, 2 * math.pi))
    return Signal.tanh_ramp(rng.uniform(-3, 3))


def random_spec(rng: np.random.Generator, model: str, topo, c_o: float | None = None,
                split_activation: bool = False) -> ModelSpec:
    u = Stimulus([random_signal(rng) for _ in range(topo.n)])
    ubar = Stimulus([random_signal(rng) for _ in range(topo.m)])
    if c_o is None:
        c_o = rng.uniform(0.1, 2.0) if model in ("HO", "FO") else 0.0
    syn = Activation(gain=rng.uniform(0.5, 2.0), ceiling=rng.uniform(0.5, 2.0)) if split_activation else None
    return ModelSpec(model, rng.uniform(0.5, 4.0), rng.uniform(0.5, 4.0), u, ubar, c_o,
                     Activation(), syn)


def random_state(rng: np.random.Generator, topo, scale: float = 1.0) -> np.ndarray:
    return rng.uniform(-scale, scale, size=topo.n + topo.m)


def fd_jacobian(f, z: np.ndarray, h: float) -> np.ndarray:
    """Central finite differences, column by column."""
    cols = []
    for k in range(z.size):
        e = np.zeros_like(z)
        e[k] = h
        cols.append((f(z + e) - f(z - e)) / (2 * h))
    return np.stack(cols, axis=1)
