"""JSON run configurations.

Layout::

    {
      "comment": "free text (optional)",
      "network": {"n": 6, "edges": [{"post": 4, "pre": 1, "h": 1.0}, ...]},
      "model":   {"kind": "HH", "c_n": 3.6, "c_s": 3.2, "c_o": 0.0,
                  "activation": {"gain": 1.0, "ceiling": 1.0},
                  "synaptic_activation": null},
      "stimuli": {"u":    {"1": {"kind": "sinusoid", "amplitude": 20, "omega": 8}},
                  "ubar": {"1": {"kind": "constant", "amplitude": 1.5}}},
      "run":     {"dt": 0.001, "t_end": 20, "tau": 0, "seed": 7,
                  "init": {"range": [-1, 1], "dale": true, "inside_invariant": false},
                  "period": 0.785398, "pairs": 10}
    }

Stimulus maps are keyed by 1-based neuron / edge index; missing channels are
zero. ``run.init`` may instead hold explicit ``{"y0": [...], "w0": [...]}``.
Unknown keys anywhere are rejected. A missing ``run.seed`` falls back to the
``HEBBCONTRACT_SEED`` environment variable, then to 0.
"""
from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .dynamics import Activation, ModelSpec, Signal, Stimulus
from .errors import ConfigError, HebbContractError
from .topology import Topology, build_topology

SEED_ENV = "HEBBCONTRACT_SEED"

_TOP_KEYS = {"comment", "network", "model", "stimuli", "run"}
_NETWORK_KEYS = {"n", "edges"}
_EDGE_KEYS = {"post", "pre", "h"}
_MODEL_KEYS = {"kind", "c_n", "c_s", "c_o", "activation", "synaptic_activation"}
_ACT_KEYS = {"gain", "ceiling"}
_STIM_KEYS = {"u", "ubar"}
_SIGNAL_KEYS = {"kind", "amplitude", "omega", "phase"}
_RUN_KEYS = {"dt", "t_end", "tau", "seed", "init", "period", "pairs"}
_INIT_RANGE_KEYS = {"range", "dale", "inside_invariant"}
_INIT_EXPLICIT_KEYS = {"y0", "w0"}


@dataclass
class InitSpec:
    low: float = -1.0
    high: float = 1.0
    dale: bool = True
    inside_invariant: bool = False
    y0: np.ndarray | None = None
    w0: np.ndarray | None = None

    @property
    def explicit(self) -> bool:
        return self.y0 is not None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InitSpec):
            return NotImplemented
        if self.explicit or other.explicit:
            return (
                self.explicit == other.explicit
                and np.array_equal(self.y0, other.y0)
                and np.array_equal(self.w0, other.w0)
            )
        return (self.low, self.high, self.dale, self.inside_invariant) == (
            other.low, other.high, other.dale, other.inside_invariant
        )


@dataclass
class RunSettings:
    dt: float = 1e-3
    t_end: float = 20.0
    tau: float = 0.0
    seed: int = 0
    init: InitSpec = field(default_factory=InitSpec)
    period: float | None = None
    pairs: int = 10


@dataclass
class RunConfig:
    topo: Topology
    spec: ModelSpec
    run: RunSettings
    comment: str = ""

    def initial_states(self, count: int = 1, rng: np.random.Generator | None = None) -> np.ndarray:
        """``(count, n+m)`` initial states per ``run.init``."""
        from .simulate import random_initial_states

        init = self.run.init
        if init.explicit:
            z = np.concatenate([init.y0, init.w0])
            return np.tile(z, (count, 1))
        rng = rng if rng is not None else np.random.default_rng(self.run.seed)
        return random_initial_states(
            self.topo, self.spec, count, rng, init.low, init.high, init.dale, init.inside_invariant
        )

    def to_dict(self) -> dict:
        return config_to_dict(self)


# ---------------------------------------------------------------------------
# parsing helpers


def _expect_keys(obj: Any, allowed: set[str], path: str, required: set[str] = frozenset()) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"expected an object, got {type(obj).__name__}", path or "<root>")
    for k in obj:
        if k not in allowed:
            where = f"{path}.{k}" if path else k
            raise ConfigError(f"unknown key (allowed: {', '.join(sorted(allowed))})", where)
    for k in required:
        if k not in obj:
            where = f"{path}.{k}" if path else k
            raise ConfigError("missing required key", where)
    return obj


def _number(obj: dict, key: str, path: str, default=None, positive=False, nonneg=False) -> float:
    where = f"{path}.{key}"
    if key not in obj:
        if default is None:
            raise ConfigError("missing required key", where)
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"expected a finite number, got {v!r}", where)
    if positive and not v > 0:
        raise ConfigError(f"must be positive, got {v}", where)
    if nonneg and not v >= 0:
        raise ConfigError(f"must be non-negative, got {v}", where)
    return float(v)


def _integer(obj: dict, key: str, path: str, default=None, minimum=None) -> int:
    where = f"{path}.{key}"
    if key not in obj:
        if default is None:
            raise ConfigError("missing required key", where)
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"expected an integer, got {v!r}", where)
    if minimum is not None and v < minimum:
        raise ConfigError(f"must be >= {minimum}, got {v}", where)
    return v


def _boolean(obj: dict, key: str, path: str, default: bool) -> bool:
    v = obj.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError(f"expected true/false, got {v!r}", f"{path}.{key}")
    return v


def _activation(obj: Any, path: str) -> Activation:
    obj = _expect_keys(obj, _ACT_KEYS, path)
    gain = _number(obj, "gain", path, 1.0, positive=True)
    ceiling = _number(obj, "ceiling", path, 1.0, positive=True)
    try:
        return Activation(gain, ceiling)
    except HebbContractError as exc:
        raise ConfigError(str(exc), path) from None


def _signal(obj: Any, path: str) -> Signal:
    obj = _expect_keys(obj, _SIGNAL_KEYS, path, {"kind"})
    kind = obj["kind"]
    if kind == "zero":
        return Signal.zero()
    amp = _number(obj, "amplitude", path)
    if kind == "constant":
        extra = {"omega", "phase"} & obj.keys()
        if extra:
            raise ConfigError("not used by a constant signal", f"{path}.{sorted(extra)[0]}")
        return Signal.constant(amp)
    if kind == "sinusoid":
        return Signal.sinusoid(amp, _number(obj, "omega", path), _number(obj, "phase", path, 0.0))
    if kind == "tanh_ramp":
        extra = {"omega", "phase"} & obj.keys()
        if extra:
            raise ConfigError("not used by a tanh_ramp signal", f"{path}.{sorted(extra)[0]}")
        return Signal.tanh_ramp(amp)
    raise ConfigError(
        f"unknown signal kind {kind!r} (expected zero, constant, sinusoid or tanh_ramp)", f"{path}.kind"
    )


def _stimulus(obj: Any, size: int, path: str, what: str) -> Stimulus:
    if obj is None:
        return Stimulus.zeros(size)
    if not isinstance(obj, dict):
        raise ConfigError("expected an object keyed by 1-based index", path)
    chans = [Signal.zero()] * size
    for key, spec in obj.items():
        where = f"{path}.{key}"
        try:
            idx = int(key)
        except ValueError:
            raise ConfigError(f"key must be a 1-based {what} index", where) from None
        if not 1 <= idx <= size or str(idx) != key.strip():
            raise ConfigError(f"{what} index {key} outside 1..{size}", where)
        chans[idx - 1] = _signal(spec, where)
    return Stimulus(chans)


def _float_list(v: Any, size: int, path: str) -> np.ndarray:
    if not isinstance(v, list) or len(v) != size:
        raise ConfigError(f"expected a list of {size} numbers", path)
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise ConfigError(f"expected a finite number, got {x!r}", f"{path}[{i}]")
    return np.array(v, dtype=float)


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"environment variable {SEED_ENV}={raw!r} is not an integer") from None


# ---------------------------------------------------------------------------
# public API


def config_from_dict(doc: Any) -> RunConfig:
    doc = _expect_keys(doc, _TOP_KEYS, "", {"network", "model"})
    comment = doc.get("comment", "")
    if not isinstance(comment, str):
        raise ConfigError("expected a string", "comment")

    net = _expect_keys(doc["network"], _NETWORK_KEYS, "network", {"n", "edges"})
    n = _integer(net, "n", "network", minimum=1)
    if not isinstance(net["edges"], list):
        raise ConfigError("expected a list", "network.edges")
    edges, hs = [], []
    for k, e in enumerate(net["edges"]):
        where = f"network.edges[{k}]"
        e = _expect_keys(e, _EDGE_KEYS, where, _EDGE_KEYS)
        post = _integer(e, "post", where)
        pre = _integer(e, "pre", where)
        for name, idx in (("post", post), ("pre", pre)):
            if not 1 <= idx <= n:
                raise ConfigError(f"neuron index {idx} outside 1..{n} (edge e{k + 1})", f"{where}.{name}")
        edges.append((post, pre))
        hs.append(_number(e, "h", where))
    try:
        topo = build_topology(n, edges, hs)
    except HebbContractError as exc:
        raise ConfigError(str(exc), "network.edges") from None

    mod = _expect_keys(doc["model"], _MODEL_KEYS, "model", {"kind", "c_n", "c_s"})
    kind = mod["kind"]
    if kind not in ("HH", "FH", "HO", "FO"):
        raise ConfigError(f"unknown model {kind!r} (expected HH, FH, HO or FO)", "model.kind")
    c_n = _number(mod, "c_n", "model", positive=True)
    c_s = _number(mod, "c_s", "model", positive=True)
    c_o = _number(mod, "c_o", "model", 0.0, nonneg=True)
    if kind in ("HH", "FH") and c_o != 0:
        raise ConfigError(f"model {kind} has no Oja term; c_o must be 0", "model.c_o")
    act = _activation(mod.get("activation", {}), "model.activation")
    syn = mod.get("synaptic_activation")
    syn_act = None if syn is None else _activation(syn, "model.synaptic_activation")

    stim = _expect_keys(doc.get("stimuli", {}), _STIM_KEYS, "stimuli")
    u = _stimulus(stim.get("u"), n, "stimuli.u", "neuron")
    ubar = _stimulus(stim.get("ubar"), topo.m, "stimuli.ubar", "edge")
    spec = ModelSpec(kind, c_n, c_s, u, ubar, c_o, act, syn_act)

    run_doc = _expect_keys(doc.get("run", {}), _RUN_KEYS, "run")
    run = RunSettings(
        dt=_number(run_doc, "dt", "run", 1e-3, positive=True),
        t_end=_number(run_doc, "t_end", "run", 20.0, positive=True),
        tau=_number(run_doc, "tau", "run", 0.0, nonneg=True),
        seed=_integer(run_doc, "seed", "run", default_seed(), minimum=0),
        pairs=_integer(run_doc, "pairs", "run", 10, minimum=1),
    )
    if run_doc.get("period") is not None:
        run.period = _number(run_doc, "period", "run", positive=True)
    init_doc = run_doc.get("init", {})
    if isinstance(init_doc, dict) and ("y0" in init_doc or "w0" in init_doc):
        init_doc = _expect_keys(init_doc, _INIT_EXPLICIT_KEYS, "run.init", _INIT_EXPLICIT_KEYS)
        run.init = InitSpec(
            y0=_float_list(init_doc["y0"], n, "run.init.y0"),
            w0=_float_list(init_doc["w0"], topo.m, "run.init.w0"),
        )
    else:
        init_doc = _expect_keys(init_doc, _INIT_RANGE_KEYS, "run.init")
        rng = init_doc.get("range", [-1.0, 1.0])
        lo_hi = _float_list(rng, 2, "run.init.range")
        if not lo_hi[0] < lo_hi[1]:
            raise ConfigError("range must satisfy low < high", "run.init.range")
        run.init = InitSpec(
            float(lo_hi[0]), float(lo_hi[1]),
            _boolean(init_doc, "dale", "run.init", True),
            _boolean(init_doc, "inside_invariant", "run.init", False),
        )
    return RunConfig(topo, spec, run, comment)


def parse_config(text: str) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno) from None
    try:
        return config_from_dict(doc)
    except ConfigError as exc:
        if exc.field and exc.line is None:
            line = locate_field(text, exc.field)
            if line is not None:
                raise ConfigError(str(exc).split(": ", 1)[1], exc.field, line) from None
        raise


def locate_field(text: str, field_path: str) -> int | None:
    """Best-effort source line of the last key in a dotted field path."""
    last = field_path.split(".")[-1].split("[")[0]
    needle = f'"{last}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


def _signal_dict(s: Signal) -> dict:
    if s.kind == "zero":
        return {"kind": "zero"}
    d = {"kind": s.kind, "amplitude": s.amplitude}
    if s.kind == "sinusoid":
        d["omega"] = s.omega
        d["phase"] = s.phase
    return d


def config_to_dict(cfg: RunConfig) -> dict:
    topo, spec, run = cfg.topo, cfg.spec, cfg.run
    model = {"kind": spec.model, "c_n": spec.c_n, "c_s": spec.c_s, "c_o": spec.c_o,
             "activation": {"gain": spec.activation.gain, "ceiling": spec.activation.ceiling}}
    if spec.synaptic_activation is not None:
        a = spec.synaptic_activation
        model["synaptic_activation"] = {"gain": a.gain, "ceiling": a.ceiling}
    if run.init.explicit:
        init = {"y0": run.init.y0.tolist(), "w0": run.init.w0.tolist()}
    else:
        init = {"range": [run.init.low, run.init.high], "dale": run.init.dale,
                "inside_invariant": run.init.inside_invariant}
    run_d = {"dt": run.dt, "t_end": run.t_end, "tau": run.tau, "seed": run.seed,
             "init": init, "pairs": run.pairs}
    if run.period is not None:
        run_d["period"] = run.period
    doc = {}
    if cfg.comment:
        doc["comment"] = cfg.comment
    doc["network"] = {
        "n": topo.n,
        "edges": [{"post": i, "pre": j, "h": float(h)} for (i, j), h in zip(topo.edges, topo.h)],
    }
    doc["model"] = model
    doc["stimuli"] = {
        "u": {str(i + 1): _signal_dict(s) for i, s in enumerate(spec.u.channels) if not s.kind == "zero"},
        "ubar": {str(e + 1): _signal_dict(s) for e, s in enumerate(spec.ubar.channels) if not s.kind == "zero"},
    }
    doc["run"] = run_d
    return doc


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2) + "\n"


def apply_overrides(doc: dict, assignments: list[str]) -> dict:
    """Apply ``dotted.path=value`` overrides; values are parsed as JSON, else kept as strings."""
    doc = copy.deepcopy(doc)
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        parts = key.strip().split(".")
        for p in parts[:-1]:
            if isinstance(node, list):
                node = node[int(p)]
                continue
            node = node.setdefault(p, {})
            if not isinstance(node, (dict, list)):
                raise ConfigError("cannot descend into a scalar", key)
        if isinstance(node, list):
            node[int(parts[-1])] = value
        else:
            node[parts[-1]] = value
    return doc


def read_document(path) -> tuple[str, dict]:
    """Raw text and decoded JSON, with line-numbered errors."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return text, json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno) from None
