"""Command-line drivers: ``dislocscale <command> --config FILE --out DIR``.

Exit status: 0 success, 1 numeric failure (solver error or failed check),
2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import REQUIRED, RunConfig, load_config, require
from .core import potential_from_tag, stress_from_spec, validate_assumptions
from .errors import ArgumentError, ConfigError, DislocScaleError

log = logging.getLogger("dislocscale")

COMMANDS = ("layer", "corrector", "fk2pn", "pn2ddd", "ddd", "cell", "dd", "pipeline")
FOUR_PI = 4 * math.pi


@dataclass
class Outcome:
    """Files written, named checks and scalar metrics of one command."""

    files: list[Path] = field(default_factory=list)
    checks: dict[str, dict] = field(default_factory=dict)
    metrics: dict[str, object] = field(default_factory=dict)
    runtimes: dict[str, float] = field(default_factory=dict)

    def check(self, name: str, passed: bool, value=None, limit=None) -> None:
        self.checks[name] = {"passed": bool(passed), "value": value, "limit": limit}

    def merge(self, other: "Outcome", prefix: str) -> None:
        self.files += other.files
        self.checks.update({f"{prefix}.{k}": v for k, v in other.checks.items()})
        self.metrics.update({f"{prefix}.{k}": v for k, v in other.metrics.items()})
        self.runtimes.update({f"{prefix}.{k}": v for k, v in other.runtimes.items()})

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())


@dataclass
class Context:
    cfg: RunConfig
    out: Path
    plot: bool = False
    jobs: int = 1


def _potential(ctx: Context):
    return potential_from_tag(require(ctx.cfg, "general", "potential"))


def _stress(spec: str):
    try:
        return stress_from_spec(spec)
    except ArgumentError as exc:
        raise ConfigError(str(exc)) from None


def _csv(ctx, out, name, columns, rows, units, meta=None):
    from .io import write_csv

    out.files.append(write_csv(ctx.out / name, columns, rows, units, meta))


def _svg(ctx, out, name, series, **kw):
    if not ctx.plot:
        return
    from .plotting import line_plot

    out.files.append(line_plot(ctx.out / name, series, **kw))


def cmd_layer(ctx: Context) -> Outcome:
    from .pn import layer_tail_check, solve_layer

    pot = _potential(ctx)
    c = ctx.cfg["layer"]
    out = Outcome()
    t0 = time.perf_counter()
    layer = solve_layer(pot, c["half_width"], c["h"], tol=c["tol"])
    out.runtimes["layer"] = time.perf_counter() - t0
    x, phi, dphi = layer.x, layer.phi.values, layer.derivative
    _csv(ctx, out, "layer.csv", ["x", "phi", "phi_prime"], zip(x, phi, dphi), ["1", "1", "1"])
    _csv(ctx, out, "constants.csv", ["gamma", "eta", "alpha"], [(layer.gamma, layer.eta, layer.alpha)], ["1", "1", "1"])
    tails = [layer_tail_check(layer, tuple(c["tail_window"]), side) for side in ("right", "left")]
    out.metrics.update(gamma=layer.gamma, eta=layer.eta, residual=layer.residual, iterations=layer.iterations,
                       tail_right=tails[0].max_deviation, tail_left=tails[1].max_deviation)
    out.check("residual", layer.residual <= c["tol"], layer.residual, c["tol"])
    out.check("tail law", max(t.max_deviation for t in tails) <= 0.15, max(t.max_deviation for t in tails), 0.15)
    if pot.tag == "sinusoidal":
        m = np.abs(x) <= 50
        err = float(np.max(np.abs(phi[m] - 0.5 - np.arctan(x[m]) / math.pi)))
        out.metrics["arctan_error"] = err
        out.check("explicit layer", err <= 5e-3, err, 5e-3)
        out.check("gamma = 4 pi", abs(layer.gamma / FOUR_PI - 1) <= 0.01, layer.gamma, FOUR_PI)
    m = np.abs(x) <= 20
    _svg(ctx, out, "layer.svg", [(x[m], phi[m], "phi"), (x[m], dphi[m], "phi'")], xlabel="x", title="layer solution")
    return out


def cmd_corrector(ctx: Context) -> Outcome:
    from .pn import solve_corrector, solve_layer

    pot = _potential(ctx)
    c = ctx.cfg["layer"]
    out = Outcome()
    t0 = time.perf_counter()
    layer = solve_layer(pot, c["half_width"], c["h"], tol=c["tol"])
    corr = solve_corrector(layer, pot, tol=ctx.cfg["corrector"]["tol"])
    out.runtimes["corrector"] = time.perf_counter() - t0
    _csv(ctx, out, "corrector.csv", ["x", "psi"], zip(corr.psi.x, corr.psi.values), ["1", "1"])
    _csv(ctx, out, "corrector_constants.csv", ["eta", "eta_discrete", "residual", "solvability_defect"],
         [(corr.eta, corr.eta_discrete, corr.residual, corr.solvability_defect)], ["1", "1", "1", "1"])
    out.metrics.update(eta=corr.eta, eta_discrete=corr.eta_discrete, residual=corr.residual, defect=corr.solvability_defect)
    out.check("corrector residual", corr.residual <= 1e-5, corr.residual, 1e-5)
    if pot.tag == "sinusoidal":
        out.check("eta = 1/(2 pi)", abs(corr.eta * 2 * math.pi - 1) <= 0.01, corr.eta, 1 / (2 * math.pi))
    m = np.abs(corr.psi.x) <= 20
    _svg(ctx, out, "corrector.svg", [(corr.psi.x[m], corr.psi.values[m], "psi")], xlabel="x", title="corrector")
    return out


def cmd_fk2pn(ctx: Context) -> Outcome:
    from .transitions import fk2pn

    pot = _potential(ctx)
    c = ctx.cfg["fk2pn"]
    if stress_from_spec(ctx.cfg["general"]["sigma"]).tag != "zero":
        log.info("fk2pn runs with sigma = 0 (single relaxing dislocation)")
    out = Outcome()
    t0 = time.perf_counter()
    res = fk2pn(c["eps_list"], pot, A=c["A"], B=c["B"], t_end=c["t_end"], pn_h=c["pn_h"],
                truncation=c["truncation"], window=c["window"], width=c["width"])
    out.runtimes["fk2pn"] = time.perf_counter() - t0
    _csv(ctx, out, "fk2pn_errors.csv", ["eps1", "sup_error", "ratio", "monotone"],
         [(r.param, r.error, "" if r.ratio is None else r.ratio, int(r.ok)) for r in res.rows], ["1", "1", "1", "flag"])
    rows = [(eps, x, u) for eps in c["eps_list"] for x, u in zip(*res.series[eps])]
    xp, vp = res.series["pn"]
    rows += [("pn", x, u) for x, u in zip(xp, vp)]
    _csv(ctx, out, "fk2pn_traces.csv", ["eps1", "X1", "u"], rows, ["1", "1", "1"], {"t": c["t_end"]})
    ratios = res.ratios
    out.metrics.update(errors=res.errors.tolist(), ratios=ratios.tolist())
    out.check("errors strictly decreasing", res.strictly_decreasing, res.errors.tolist())
    out.check("ratio < 0.9 per halving", bool(np.all(ratios < 0.9)), ratios.tolist(), 0.9)
    out.check("traces monotone", all(r.ok for r in res.rows))
    _svg(ctx, out, "fk2pn_traces.svg", [(*res.series[e], f"FK eps1={e:g}") for e in c["eps_list"]] + [(xp, vp, "PN")],
         xlabel="X1", ylabel="u", title=f"boundary traces at t={c['t_end']:g}")
    _svg(ctx, out, "fk2pn_errors.svg", [(c["eps_list"], res.errors, "sup error")], xlabel="eps1", ylabel="error",
         logx=True, logy=True, markers=True)
    return out


def cmd_pn2ddd(ctx: Context) -> Outcome:
    from .pn import solve_layer
    from .transitions import pn2ddd

    pot = _potential(ctx)
    c = ctx.cfg["pn2ddd"]
    lc = ctx.cfg["layer"]
    sigma = _stress(c["sigma"])
    out = Outcome()
    t0 = time.perf_counter()
    layer = solve_layer(pot, lc["half_width"], lc["h"], tol=lc["tol"])
    res = pn2ddd(c["positions"], c["eps_list"], pot, layer, sigma, half_width=c["half_width"],
                 h_factor=c["h_factor"], t_end=c["t_end"], n_samples=c["samples"])
    out.runtimes["pn2ddd"] = time.perf_counter() - t0
    _csv(ctx, out, "pn2ddd_errors.csv", ["eps2", "sup_error", "ratio", "note"],
         [(r.param, r.error, "" if r.ratio is None else r.ratio, r.note) for r in res.rows], ["1", "1", "1", "text"])
    tt, P = res.series["ddd"]
    _csv(ctx, out, "particles.csv", ["t", "i", "x_i"], [(t, i, x) for t, p in zip(tt, P) for i, x in enumerate(p)],
         ["1", "index", "1"], {"gamma": layer.gamma, "N": len(c["positions"])})
    rows = []
    for r in res.rows:
        if r.param in res.series:
            ts, F = res.series[r.param]
            rows += [(r.param, t, i, x) for t, f in zip(ts, F) for i, x in enumerate(f)]
    _csv(ctx, out, "fronts.csv", ["eps2", "t", "i", "x_i"], rows, ["1", "1", "index", "1"])
    ratios = res.ratios
    out.metrics.update(errors=res.errors.tolist(), ratios=ratios.tolist(), gamma=layer.gamma)
    ok = bool(ratios.size and np.all((ratios >= 0.3) & (ratios <= 0.8)))
    out.check("error ratio in [0.3, 0.8]", ok, ratios.tolist(), [0.3, 0.8])
    series = [(tt, P[:, i], f"DDD x{i + 1}") for i in range(P.shape[1])]
    for r in res.rows:
        if r.param in res.series:
            ts, F = res.series[r.param]
            series += [(ts, F[:, i], f"PN eps2={r.param:g} x{i + 1}") for i in range(F.shape[1])]
    _svg(ctx, out, "pn2ddd_fronts.svg", series, xlabel="t", ylabel="position", title="fronts vs particles")
    return out


def cmd_ddd(ctx: Context) -> Outcome:
    from .ddd import SINUSOIDAL_GAMMA, DDDConfig, ParticleSet, ddd_evolve, min_separation

    c = ctx.cfg["ddd"]
    out = Outcome()
    try:
        cfg = DDDConfig(gamma=c["gamma"] or SINUSOIDAL_GAMMA, interaction=c["interaction"], sigma=_stress(c["sigma"]),
                        l=c["l"], delta=c["delta"], box=c["box"], tolerance=c["tolerance"])
        ps = ParticleSet(np.array(c["positions"]))
    except ArgumentError as exc:
        raise ConfigError(str(exc)) from None
    times = np.linspace(0.0, c["t_end"], c["samples"] + 1)
    t0 = time.perf_counter()
    traj = ddd_evolve(ps, cfg, c["t_end"], times)
    out.runtimes["ddd"] = time.perf_counter() - t0
    meta = {"gamma": cfg.gamma, "delta": cfg.delta, "N": ps.n, "tolerance": cfg.tolerance,
            "interaction": cfg.interaction, "sigma": cfg.sigma.tag}
    _csv(ctx, out, "trajectory.csv", ["t", "i", "x_i"],
         [(t, i, x) for t, p in zip(traj.times, traj.positions) for i, x in enumerate(p)], ["1", "index", "1"], meta)
    sep = min_separation(traj, c["separation_C"])
    flags = sep.bound_violated if sep.bound_violated is not None else np.zeros(sep.d.size, bool)
    _csv(ctx, out, "separation.csv", ["t", "d", "bound_violated"], zip(sep.times, sep.d, flags.astype(int)), ["1", "1", "flag"])
    out.metrics.update(steps=traj.steps, min_separation=float(np.min(sep.d)))
    out.check("separation positive", bool(np.all(sep.d > 0)), float(np.min(sep.d)))
    _svg(ctx, out, "trajectory.svg", [(traj.times, traj.positions[:, i], f"x{i + 1}") for i in range(ps.n)],
         xlabel="t", ylabel="position", title="particle paths")
    return out


def cmd_cell(ctx: Context) -> Outcome:
    from .dd import CellProblemSpec, build_flux_table, delta_robustness, threshold_width

    c = ctx.cfg["cell"]
    sigma = _stress(c["sigma"])
    out = Outcome()
    t0 = time.perf_counter()
    table = build_flux_table(c["rho_list"], c["l_list"], sigma, c["delta"], jobs=ctx.jobs, tolerance=c["tolerance"])
    out.runtimes["table"] = time.perf_counter() - t0
    _csv(ctx, out, "flux_table.csv", ["rho", "l", "g", "clamped_by"], table.rows(), ["1/length", "stress", "1/time", "1/time"],
         {"sigma": sigma.tag, "gamma": table.gamma, "delta": table.delta})
    series = []
    for i, rho in enumerate(table.rho_grid):
        _csv(ctx, out, f"threshold_rho{rho:g}.csv", ["l", "g"], zip(table.l_grid, table.g[i]), ["stress", "1/time"])
        series.append((table.l_grid, table.g[i], f"rho={rho:g}"))
        lo, hi = threshold_width(table, i)
        out.metrics[f"plateau_rho{rho:g}"] = [lo, hi]
    out.metrics["max_clamp"] = table.max_clamp
    out.check("monotone in l", table.monotone, table.max_clamp)
    if sigma.is_zero:
        rel = [abs(table.g[i, j] - table.gamma * r * l / 2) / (table.gamma * r * abs(l))
               for i, r in enumerate(table.rho_grid) for j, l in enumerate(table.l_grid) if l != 0]
        out.check("Orowan g = gamma rho l/2 (2%)", max(rel) <= 0.02, max(rel), 0.02)
    elif abs(sigma.period_mean()) < 1e-12 and np.any(table.l_grid == 0):
        j = int(np.nonzero(table.l_grid == 0)[0][0])
        worst = float(np.max(np.abs(table.g[:, j]) / (table.gamma * table.rho_grid)))
        out.check("pinning g(rho,0) = 0", worst <= 1e-4, worst, 1e-4)
        widths = [hi - lo for lo, hi in (threshold_width(table, i) for i in range(table.rho_grid.size))]
        moving = bool(np.all(np.any(table.g != 0, axis=1)))
        out.check("threshold plateau with depinning", all(w > 0 for w in widths) and moving, widths)
    _svg(ctx, out, "threshold.svg", series, xlabel="l", ylabel="g", title="effective flux")
    if c["robustness"]:
        t0 = time.perf_counter()
        spec = CellProblemSpec(c["robust_n"], c["robust_m"], c["robust_l"])
        rep = delta_robustness(spec, _stress(c["robust_sigma"]), c["robust_deltas"], tolerance=c["tolerance"])
        out.runtimes["delta_robustness"] = time.perf_counter() - t0
        diffs = list(rep.differences) + [math.nan]
        _csv(ctx, out, "delta_robustness.csv", ["delta", "g", "diff_to_next"], zip(rep.deltas, rep.g, diffs), ["length", "1/time", "1/time"])
        out.check("delta differences decreasing", rep.decreasing, rep.differences.tolist())
    return out


def _dd_table(ctx: Context, sigma):
    from .dd import build_flux_table

    c = ctx.cfg["dd"]
    return build_flux_table(c["rho_grid"], c["l_grid"], sigma, c["delta"], jobs=ctx.jobs, tolerance=c["tolerance"])


def cmd_dd(ctx: Context) -> Outcome:
    from .dd import MacroState, dd_energy
    from .nonlocal_ops import LineField
    from .transitions import ddd2dd, gradient_periodic_profile

    c = ctx.cfg["dd"]
    sigma = _stress(c["sigma"])
    if sigma.mode != "periodic":
        raise ConfigError("[dd] sigma must be 1-periodic (sine:, constant:, zero or periodic-expr:)")
    if not 0 <= c["amplitude"] < c["rho_bar"]:
        raise ConfigError("[dd] amplitude must lie in [0, rho_bar) so that w0 is increasing")
    out = Outcome()
    t0 = time.perf_counter()
    table = _dd_table(ctx, sigma)
    out.runtimes["table"] = time.perf_counter() - t0
    _csv(ctx, out, "flux_table.csv", ["rho", "l", "g", "clamped_by"], table.rows(), ["1/length", "stress", "1/time", "1/time"],
         {"sigma": sigma.tag, "gamma": table.gamma})
    w0 = gradient_periodic_profile(c["rho_bar"], c["amplitude"])
    t0 = time.perf_counter()
    res = ddd2dd(c["eps_list"], w0, c["rho_bar"], sigma, table, t_end=c["t_end"], n_samples=c["samples"],
                 macro_nodes=c["macro_nodes"], window=tuple(c["window"]))
    out.runtimes["ddd2dd"] = time.perf_counter() - t0
    _csv(ctx, out, "ddd2dd_errors.csv", ["eps3", "window_sup_error", "ratio"],
         [(r.param, r.error, "" if r.ratio is None else r.ratio) for r in res.rows], ["1", "1", "1"],
         {"window": f"{c['window'][0]:g}..{c['window'][1]:g}"})
    macro = res.series["dd"]
    _csv(ctx, out, "macro.csv", ["t", "x", "w"], [(t, x, w) for t, xs, ws in macro for x, w in zip(xs, ws)], ["1", "1", "1"])
    energies = []
    for t, xs, ws in macro:
        X = xs[-1] - xs[0]
        energies.append((t, dd_energy(MacroState(LineField(xs, ws, gradient_period=(X, ws[-1] - ws[0])), t), sigma.period_mean())))
    _csv(ctx, out, "energy.csv", ["t", "E"], energies, ["1", "energy"])
    rows = [(eps, t, x, w) for eps in c["eps_list"] for t, xs, ws in res.series[eps] for x, w in zip(xs[::8], ws[::8])]
    _csv(ctx, out, "w_eps.csv", ["eps3", "t", "x", "w"], rows, ["1", "1", "1", "1"])
    out.metrics.update(errors=res.errors.tolist(), ratios=res.ratios.tolist(), max_clamp=table.max_clamp)
    out.check("errors strictly decreasing", res.strictly_decreasing, res.errors.tolist())
    out.check("particles separated", all(r.ok for r in res.rows))
    tl, xl, wl = macro[-1]
    series = [(xl, wl, f"w0 t={tl:g}")]
    for eps in c["eps_list"]:
        t, xs, ws = res.series[eps][-1]
        series.append((xs, ws, f"w^eps eps={eps:g}"))
    _svg(ctx, out, "ddd2dd.svg", series, xlabel="x", ylabel="w", title="rescaled particles vs homogenized")
    return out


def cmd_pipeline(ctx: Context) -> Outcome:
    out = Outcome()
    for name, fn in (("layer", cmd_layer), ("fk2pn", cmd_fk2pn), ("pn2ddd", cmd_pn2ddd), ("dd", cmd_dd)):
        sub = Context(ctx.cfg, ctx.out / name, ctx.plot, ctx.jobs)
        sub.out.mkdir(parents=True, exist_ok=True)
        log.info("pipeline stage %s", name)
        out.merge(fn(sub), name)
    return out


HANDLERS = {
    "layer": cmd_layer,
    "corrector": cmd_corrector,
    "fk2pn": cmd_fk2pn,
    "pn2ddd": cmd_pn2ddd,
    "ddd": cmd_ddd,
    "cell": cmd_cell,
    "dd": cmd_dd,
    "pipeline": cmd_pipeline,
}

NEEDS_POTENTIAL = {"layer", "corrector", "fk2pn", "pn2ddd", "pipeline"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dislocscale", description="Multiscale dislocation dynamics: FK -> PN -> DDD -> DD.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, metavar="PATH", help="run configuration file")
    p.add_argument("--out", default="out", metavar="DIR", help="output directory (default: ./out)")
    p.add_argument("--plot", action="store_true", help="also write SVG figures")
    p.add_argument("--jobs", type=int, default=1, metavar="N", help="worker threads for flux tables")
    p.add_argument("--dry-run", action="store_true", help="validate and echo the configuration only")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def validate(cfg: RunConfig, command: str) -> None:
    if command in NEEDS_POTENTIAL:
        try:
            potential_from_tag(require(cfg, "general", "potential"))
        except ArgumentError as exc:
            raise ConfigError(str(exc)) from None
    elif cfg["general"]["potential"] is not REQUIRED:
        try:
            potential_from_tag(cfg["general"]["potential"])
        except ArgumentError as exc:
            raise ConfigError(str(exc)) from None
    for sec, key in (("general", "sigma"), ("pn2ddd", "sigma"), ("ddd", "sigma"), ("cell", "sigma"), ("dd", "sigma")):
        _stress(cfg[sec][key])
    if cfg["fk2pn"]["truncation"] not in ("far_field", "frozen", "poisson"):
        raise ConfigError("[fk2pn] truncation must be far_field, frozen or poisson")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        validate(cfg, args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.dry_run:
        print(cfg.echo().replace(repr(REQUIRED), "<missing>"))
        return 0

    from .io import write_json, write_manifest

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ctx = Context(cfg, out_dir, args.plot, args.jobs)
    t0 = time.perf_counter()
    report = {"command": args.command, "config": str(args.config), "version": __version__}
    status = 0
    try:
        outcome = HANDLERS[args.command](ctx)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DislocScaleError as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        report.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        write_json(out_dir / "report.json", report)
        write_manifest(out_dir, cfg.text)
        return 1
    pot_tag = cfg["general"]["potential"]
    if pot_tag is not REQUIRED:
        rep = validate_assumptions(potential_from_tag(pot_tag), _stress(cfg["general"]["sigma"]))
        report["assumptions"] = {c.name: {"passed": c.passed, "worst": c.worst} for c in rep.checks}
    report.update(
        status="passed" if outcome.passed else "checks failed",
        checks=outcome.checks,
        metrics=outcome.metrics,
        runtimes={**outcome.runtimes, "total": time.perf_counter() - t0},
        files=[str(p.relative_to(out_dir)) for p in outcome.files],
    )
    write_json(out_dir / "report.json", report)
    write_manifest(out_dir, cfg.text)
    for name, c in outcome.checks.items():
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {name}  {c['value'] if c['value'] is not None else ''}")
    if not outcome.passed:
        status = 1
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
