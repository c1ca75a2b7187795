"""Command-line front end.

Exit codes: 0 when the configured model is certified contracting, 1 when it is
not, 2 for invalid input of any kind. ``sweep`` exits 0 once every row is
written, since it maps the certified region rather than asserting it.
"""
from __future__ import annotations

import argparse
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from .analysis import certify, compute_bounds
from .config import (
    RunConfig,
    apply_overrides,
    config_from_dict,
    config_to_dict,
    locate_field,
    read_document,
)
from .errors import ConfigError, EmptyRange, HebbContractError, UnknownParam
from .simulate import (
    check_dale,
    check_entrainment,
    check_invariance,
    empirical_rate,
    integrate,
    integrate_delayed,
    integrate_many,
)

SWEEP_PARAMS = ("c_n", "c_s", "c_o", "h_scale", "ubar_scale")
BUNDLED = ("fig1.cfg", "fig3.cfg")


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# config resolution


def resolve_config_path(name: str) -> Path:
    """A filesystem path, or the name of a bundled config (``fig1`` / ``fig1.cfg``)."""
    p = Path(name)
    if p.exists():
        return p
    fname = name if name.endswith(".cfg") else name + ".cfg"
    if fname in BUNDLED:
        return Path(str(resources.files("hebbcontract") / "data" / fname))
    raise ConfigError(f"config file {name!r} not found (bundled: {', '.join(BUNDLED)})")


def load(name: str, overrides: list[str] | None = None) -> RunConfig:
    path = resolve_config_path(name)
    text, doc = read_document(path)
    if overrides:
        doc = apply_overrides(doc, overrides)
    try:
        return config_from_dict(doc)
    except ConfigError as exc:
        if exc.field and not overrides:
            line = locate_field(text, exc.field)
            msg = str(exc).split(": ", 1)[1]
            raise ConfigError(msg, exc.field, line) from None
        raise


# ---------------------------------------------------------------------------
# commands


def cmd_check(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    cert = certify(cfg.topo, cfg.spec)
    print(cert.summary(), file=out)
    return 0 if cert.satisfied else 1


def cmd_bounds(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    b = compute_bounds(cfg.topo, cfg.spec)
    rows = [
        ("h_max", b.h_max), ("d_max", b.d_max), ("phi_max", b.phi_max),
        ("u_max", b.u_max), ("ubar_max", b.ubar_max), ("b_max", b.b_max),
        ("w_max", b.w_max), ("x_max", b.x_max), ("nu_max", b.nu_max),
    ]
    for name, v in rows:
        print(f"{name:<10} {v:.10g}", file=out)
    cert = certify(cfg.topo, cfg.spec)
    return 0 if cert.satisfied else 1


def _run_single(cfg: RunConfig):
    z0 = cfg.initial_states(1)[0]
    run = cfg.run
    if run.tau > 0:
        return integrate_delayed(cfg.topo, cfg.spec, z0, run.t_end, run.dt, run.tau)
    return integrate(cfg.topo, cfg.spec, z0, run.t_end, run.dt)


def _gnuplot_trajectory(csv_path: str, n: int, m: int) -> str:
    ys = ", ".join(f"'{csv_path}' using 1:{i + 2} with lines title 'y_{i + 1}'" for i in range(n))
    ws = ", ".join(f"'{csv_path}' using 1:{n + e + 2} with lines title 'w_{e + 1}'" for e in range(m))
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set multiplot layout 2,1",
        "set xlabel 't'",
        "set ylabel 'neural state'",
        f"plot {ys}",
        "set ylabel 'synaptic weight'",
        f"plot {ws}" if m else "# no synapses",
        "unset multiplot",
    ]
    return "\n".join(lines) + "\n"


def cmd_simulate(cfg: RunConfig, out_path: str, plot_path: str | None = None, out=None) -> int:
    out = out or sys.stdout
    with warnings.catch_warnings():
        # delay rounding is reported in the summary below
        warnings.simplefilter("ignore", UserWarning)
        traj = _run_single(cfg)
    traj.to_csv(out_path)
    cert = certify(cfg.topo, cfg.spec)
    inv = check_invariance(traj)
    dale = check_dale(traj)
    mode = f"delayed (tau={traj.tau:g})" if traj.tau > 0 else "undelayed"
    print(f"mode             {mode}", file=out)
    print(f"steps            {len(traj.times) - 1} (dt={traj.dt:g}, t_end={traj.times[-1]:g})", file=out)
    print(f"csv              {out_path}", file=out)
    print(f"certified        {'yes' if cert.satisfied else 'no'}", file=out)
    if traj.tau > 0:
        print("invariance       not checked (bounds are for the undelayed system)", file=out)
    else:
        print(f"invariance       {len(inv.violations)} violations", file=out)
        for t, label, excess in inv.violations[:10]:
            print(f"  t={t:.6g} {label} exceeds envelope by {excess:.3g}", file=out)
    print(f"dale             {dale.flips} sign flips", file=out)
    for v in dale.edges:
        detail = f" at t={v.first_violation:.6g}" if v.first_violation is not None else ""
        why = f" ({v.reason})" if v.reason else ""
        print(f"  e{v.edge}: {v.status}{detail}{why}", file=out)
    if cfg.run.period is not None:
        try:
            ent = check_entrainment(traj, cfg.run.period)
            print(
                f"entrainment      residual {ent.residual:.3g} over {ent.window[0]:.4g}..{ent.window[1]:.4g}"
                f" ({'entrained' if ent.entrained else 'not entrained'})",
                file=out,
            )
        except HebbContractError as exc:
            print(f"entrainment      skipped: {exc}", file=out)
    for w in traj.warnings:
        print(f"warning          {w}", file=out)
    if plot_path:
        Path(plot_path).write_text(_gnuplot_trajectory(out_path, traj.n, traj.m))
    return 0 if cert.satisfied else 1


def _pair_rates(cfg: RunConfig, pairs: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    z0 = cfg.initial_states(2 * pairs, rng)
    run = cfg.run
    if run.tau > 0:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            trajs = integrate_delayed(cfg.topo, cfg.spec, z0, run.t_end, run.dt, run.tau)
    else:
        trajs = integrate_many(cfg.topo, cfg.spec, z0, run.t_end, run.dt)
    return [empirical_rate(trajs[2 * k], trajs[2 * k + 1]) for k in range(pairs)]


def cmd_rate(cfg: RunConfig, pairs: int, out_path: str | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    if pairs < 1:
        raise ConfigError("--pairs must be at least 1", "pairs")
    cert = certify(cfg.topo, cfg.spec)
    if not cert.satisfied:
        print("warning: model is not certified; rates below carry no guarantee", file=err)
    ests = _pair_rates(cfg, pairs, cfg.run.seed)
    rates = np.array([e.rate for e in ests])
    print(f"{'pair':>4}  {'rate':>10}  {'residual':>10}  window", file=out)
    for k, e in enumerate(ests, start=1):
        print(f"{k:>4}  {e.rate:>10.5f}  {e.residual:>10.3g}  [{e.window[0]:.4g}, {e.window[1]:.4g}]", file=out)
    print(f"min     {rates.min():.5f}", file=out)
    print(f"median  {np.median(rates):.5f}", file=out)
    if cert.satisfied:
        verdict = "ok" if rates.min() >= cert.rate else "BELOW"
        print(f"lambda  {cert.rate:.5f}  (min rate vs lambda: {verdict})", file=out)
    else:
        print("lambda  n/a (not certified)", file=out)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write("pair,rate,residual,window_start,window_end\n")
            for k, e in enumerate(ests, start=1):
                fh.write(f"{k},{_fmt(e.rate)},{_fmt(e.residual)},{_fmt(e.window[0])},{_fmt(e.window[1])}\n")
    return 0 if cert.satisfied else 1


def parse_range(text: str) -> np.ndarray:
    parts = text.split(":")
    if len(parts) != 3:
        raise EmptyRange(f"range {text!r} must be a:b:steps", "range")
    try:
        a, b, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise EmptyRange(f"range {text!r} must be a:b:steps with numeric a, b and integer steps", "range") from None
    if steps < 1:
        raise EmptyRange(f"range {text!r} has no grid points", "range")
    if not (math.isfinite(a) and math.isfinite(b)):
        raise EmptyRange(f"range {text!r} has non-finite ends", "range")
    if steps == 1:
        return np.array([a])
    return np.linspace(a, b, steps)


def apply_param(cfg: RunConfig, param: str, value: float) -> RunConfig:
    """Copy of ``cfg`` with one sweep parameter set."""
    topo, spec = cfg.topo, cfg.spec
    if param in ("c_n", "c_s", "c_o"):
        spec = spec.replace(**{param: float(value)})
    elif param == "h_scale":
        topo = topo.with_h(topo.h * value)
    elif param == "ubar_scale":
        spec = spec.replace(ubar=spec.ubar.scaled(value))
    else:
        raise UnknownParam(f"unknown sweep parameter {param!r} (expected one of {', '.join(SWEEP_PARAMS)})", "param")
    return RunConfig(topo, spec, cfg.run, cfg.comment)


def _sweep_row(task: tuple) -> str:
    doc, param, value, empirical = task
    cfg = apply_param(config_from_dict(doc), param, value)
    cert = certify(cfg.topo, cfg.spec)
    row = [_fmt(value), "1" if cert.satisfied else "0",
           _fmt(cert.rate) if cert.satisfied else "nan",
           _fmt(cert.condition_lhs), _fmt(cert.condition_rhs)]
    if empirical:
        try:
            rates = [e.rate for e in _pair_rates(cfg, cfg.run.pairs, cfg.run.seed)]
            row.append(_fmt(np.median(rates)))
        except HebbContractError:
            row.append("nan")
    return ",".join(row)


def sweep_rows(cfg: RunConfig, param: str, grid: np.ndarray, jobs: int = 1, empirical: bool = False) -> list[str]:
    if param not in SWEEP_PARAMS:
        raise UnknownParam(f"unknown sweep parameter {param!r} (expected one of {', '.join(SWEEP_PARAMS)})", "param")
    doc = config_to_dict(cfg)
    tasks = [(doc, param, float(v), empirical) for v in grid]
    header = f"{param},satisfied,lambda,condition_lhs,condition_rhs" + (",empirical_rate" if empirical else "")
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_row, tasks))
    else:
        rows = [_sweep_row(t) for t in tasks]
    return [header] + rows


def _gnuplot_sweep(csv_path: str, param: str) -> str:
    return "\n".join([
        "set datafile separator ','",
        f"set xlabel '{param}'",
        "set ylabel 'contraction rate lower bound'",
        f"plot '{csv_path}' using 1:3 every ::1 with linespoints title 'lambda'",
    ]) + "\n"


def cmd_sweep(cfg: RunConfig, param: str, range_text: str, jobs: int = 1, empirical: bool = False,
              out_path: str | None = None, plot_path: str | None = None, out=None) -> int:
    out = out or sys.stdout
    grid = parse_range(range_text)
    text = "\n".join(sweep_rows(cfg, param, grid, jobs, empirical)) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    else:
        out.write(text)
    if plot_path and out_path:
        Path(plot_path).write_text(_gnuplot_sweep(out_path, param))
    return 0


# ---------------------------------------------------------------------------
# entry point


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hebbcontract",
        description="Contraction certificates and simulations for coupled neural-synaptic networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="JSON config path, or a bundled name (fig1, fig3)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field by dotted path, e.g. model.c_n=1.0")

    p = sub.add_parser("check", help="print the contraction certificate")
    common(p)
    p = sub.add_parser("bounds", help="print the forward-invariance bounds")
    common(p)
    p = sub.add_parser("simulate", help="integrate one trajectory and run the monitors")
    common(p)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--plot", help="also write a gnuplot script")
    p = sub.add_parser("rate", help="empirical contraction rates over random trajectory pairs")
    common(p)
    p.add_argument("--pairs", type=_positive_int, default=None, help="number of pairs (default: run.pairs)")
    p.add_argument("--out", help="optional CSV of per-pair rates")
    p = sub.add_parser("sweep", help="certificate over a one-parameter grid")
    common(p)
    p.add_argument("--param", required=True, help=f"one of {', '.join(SWEEP_PARAMS)}")
    p.add_argument("--range", dest="range_text", required=True, metavar="A:B:STEPS")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--empirical", action="store_true", help="add the median empirical rate per point")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--plot", help="gnuplot script path (needs --out)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load(args.config, args.overrides)
        if args.command == "check":
            return cmd_check(cfg)
        if args.command == "bounds":
            return cmd_bounds(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out, args.plot)
        if args.command == "rate":
            return cmd_rate(cfg, args.pairs or cfg.run.pairs, args.out)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.param, args.range_text, args.jobs, args.empirical, args.out, args.plot)
    except HebbContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
