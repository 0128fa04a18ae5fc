"""Command-line front end: ``lfpp <subcommand> [--config FILE] ...``.

Exit codes: 0 success, 1 usage (bad arguments, missing files), 2 validation,
3 resource cap, 4 a checked property failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import logging
import math
import sys
import time
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__, acceptance, gwtools
from .config import RunConfig, load_config
from .ensemble import EnsembleConfig, default_threads, realize
from .errors import ResourceLimitError, ValidationError
from .field import GridSpec, mollify, sample_spectral_lgf, sample_white_noise_field, sphere_average
from .io import FormatError, read_csv, write_csv, write_field, write_json, write_kernel
from .kernel import build_kernel, named_bump
from .metric import CouplingParams, as_sites, distance, distance_record
from .scaling import (check_c_r_scaling, distance_moment_samples, exponent_pipeline, fit_distance_exponent,
                      holder_exponent_estimate, kpz_check, moment_tail_report, moment_thresholds,
                      shell_correlation_probe, thick_point_ensemble, thick_points)

log = logging.getLogger("lfpp")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_RESOURCE, EXIT_PROPERTY = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class PropertyFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------- context


@dataclasses.dataclass
class Context:
    cfg: RunConfig
    out_dir: Path
    fmt: str
    threads: int
    outputs: list = dataclasses.field(default_factory=list)

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.outputs.append(str(p))
        return p

    def emit(self, name: str, summary: dict, table: tuple[list, list] | None = None) -> None:
        """Write a report as ``name.json`` or ``name.csv`` depending on ``--format``."""
        if self.fmt == "json":
            body = dict(summary)
            if table is not None:
                body["table"] = [dict(zip(table[0], row)) for row in table[1]]
            write_json(self.path(f"{name}.json"), body)
        else:
            header, rows = table if table is not None else (["key", "value"], _flat_items(summary))
            write_csv(self.path(f"{name}.csv"), header, rows)

    @property
    def params(self) -> CouplingParams:
        c = self.cfg
        if c.xi > 0:
            return CouplingParams.from_xi(c.xi, c.dimension)
        return CouplingParams.from_gamma(c.gamma, c.d_gamma, c.dimension)

    @property
    def ensemble(self) -> EnsembleConfig:
        c = self.cfg
        _bump(c)
        return EnsembleConfig(c.dimension, c.n, c.box_size, c.seeds, c.bump, self.threads, c.stencil)

    @property
    def grid(self) -> GridSpec:
        return GridSpec.from_box(self.cfg.dimension, self.cfg.n, self.cfg.box_size)


def _flat_items(d: dict, prefix: str = "") -> list:
    rows = []
    for k in sorted(d):
        v = d[k]
        if isinstance(v, dict):
            rows += _flat_items(v, f"{prefix}{k}.")
        elif isinstance(v, (list, tuple, np.ndarray)):
            rows.append([f"{prefix}{k}", ";".join(repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)
                                                   for x in np.ravel(np.asarray(v, dtype=object)))])
        else:
            rows.append([f"{prefix}{k}", v])
    return rows


def _bump(cfg: RunConfig):
    bump = named_bump(cfg.bump, cfg.dimension)
    if cfg.bump_norm != 1.0:
        f = math.sqrt(cfg.bump_norm)
        bump = dataclasses.replace(bump, values=bump.values * f, scale=bump.scale * f)
    bump.check()
    return bump


# --------------------------------------------------------------------------- commands


def cmd_build_kernel(ctx: Context) -> int:
    c = ctx.cfg
    bump = _bump(c)
    k = build_kernel(c.epsilon, bump)
    unit = build_kernel(1.0, bump)
    r = np.geomspace(1e-3, 3.0, 200) * c.epsilon
    ref = c.epsilon ** -c.dimension * unit(r / c.epsilon)
    live = np.abs(ref) > 1e-12 * np.abs(ref).max()
    scaling = float(np.max(np.abs(k(r)[live] - ref[live]) / np.abs(ref[live])))
    write_kernel(ctx.path("kernel.lfpk"), k)
    ctx.emit("build_kernel", {"epsilon": k.epsilon, "d": k.dimension_d, "bump": bump.name,
                              "bump_digest": bump.digest, "mass": k.mass, "mass_residual": abs(k.mass - 1.0),
                              "scaling_residual": scaling, "decay_constant": k.decay_constant,
                              "tail_powers": list(k.tail_powers), "tail_coeffs": list(k.tail_coeffs)})
    return EXIT_OK


def cmd_sample(ctx: Context) -> int:
    c = ctx.cfg
    grid = ctx.grid
    if c.sampler == "spectral":
        s = sample_spectral_lgf(grid, c.seed)
    elif c.sampler == "white_noise_layers":
        s = sample_white_noise_field(grid, c.epsilon, c.R, _bump(c), c.seed)
    else:
        raise ValidationError(f"unknown sampler {c.sampler!r}")
    write_field(ctx.path(f"field_seed{c.seed}.lfpf"), s)
    if c.mollify and c.sampler == "spectral":
        write_field(ctx.path(f"field_seed{c.seed}_eps.lfpf"), mollify(s, build_kernel(c.epsilon, _bump(c))))
    origin = np.zeros(grid.dimension_d)
    radii = [r for r in 2.0 ** -np.arange(0, 8) if 2 * grid.spacing <= r < grid.box_size / 2]
    trace = [[float(r), sphere_average(s, origin, float(r))] for r in radii]
    write_csv(ctx.path(f"sphere_trace_seed{c.seed}.csv"), ["r", "h_r"], trace)
    ctx.emit("sample", {"seed": c.seed, "sampler": c.sampler, "n": grid.n_per_axis, "d": grid.dimension_d,
                        "mean": float(s.values.mean()), "variance": float(s.values.var())})
    return EXIT_OK


def cmd_distance(ctx: Context) -> int:
    c = ctx.cfg
    grid = ctx.grid
    d = grid.dimension_d
    n = grid.n_per_axis
    src = c.src or (n // 2,) * d
    dst = c.dst or ((n // 2 + int(round(1.0 / grid.spacing))) % n,) + (n // 2,) * (d - 1)
    for name, site in (("src", src), ("dst", dst)):
        if len(site) != d:
            raise ValidationError(f"{name} needs {d} coordinates, got {len(site)}")
    a, b = as_sites(grid, [src]), as_sites(grid, [dst])
    real = realize(ctx.ensemble, c.seed, [c.epsilon], ctx.params)
    res = distance(real.weights[c.epsilon], a, b, stencil=c.stencil, return_path=c.return_path)
    rec = distance_record(res, seed=c.seed, epsilon=c.epsilon, xi=ctx.params.xi, grid=grid)
    rec.update(src=list(src), dst=list(dst))
    ctx.emit("distance", rec)
    return EXIT_OK


def cmd_fit_exponent(ctx: Context) -> int:
    c = ctx.cfg
    if c.input:
        header, rows = read_csv(c.input)
        try:
            ie, im = header.index("epsilon"), header.index("median")
        except ValueError:
            raise ValidationError(f"{c.input}: needs 'epsilon' and 'median' columns") from None
        try:
            meds = [(float(r[ie]), float(r[im])) for r in rows]
        except (ValueError, IndexError):
            raise ValidationError(f"{c.input}: malformed numeric row") from None
        fit = fit_distance_exponent(meds)
        summary = {"source": "file", "slope": fit.slope, "stderr_slope": fit.stderr_slope,
                   "r_squared": fit.r_squared, "implied_xi_q": fit.implied_xi_q}
        table = (["epsilon", "median"], [list(m) for m in meds])
    else:
        res = exponent_pipeline(ctx.ensemble, ctx.params, c.epsilons)
        summary = {k: res[k] for k in ("slope", "stderr_slope", "r_squared", "implied_xi_q", "target_slope")}
        summary["source"] = "ensemble"
        table = (["epsilon", "median", "ci_low", "ci_high"],
                 [list(r) for r in zip(res["epsilons"], res["medians"], res["ci_low"], res["ci_high"])])
    ctx.emit("fit_exponent", summary, table)
    return EXIT_OK


def cmd_c_r_check(ctx: Context) -> int:
    c = ctx.cfg
    p = ctx.params
    rep = check_c_r_scaling(p, c.r_list, ctx.ensemble, c.epsilon)
    ctrl = rep.renormalized(p.xi_q + c.control_shift)
    ctx.emit("c_r_check", {"xi_q": rep.xi_q, "spread": rep.spread, "control_xi_q": ctrl.xi_q,
                           "control_spread": ctrl.spread, "control_separates": ctrl.spread > rep.spread},
             (["r", "median", "control_median"], [list(t) for t in zip(rep.r_list, rep.medians, ctrl.medians)]))
    return EXIT_OK


def cmd_moments(ctx: Context) -> int:
    c = ctx.cfg
    p = ctx.params
    samples = distance_moment_samples(ctx.ensemble, p, c.epsilon)
    out = {"thresholds": moment_thresholds(p) if p.check_consistency else {}}
    rows = []
    for kind, vals in samples.items():
        rep = moment_tail_report(vals, c.p_list, min_size=min(500, len(vals)))
        out[kind] = {"tail_slope": rep.tail_slope, "faster_than_reference": rep.faster_than_reference,
                     "widened_uncertainty": rep.widened_uncertainty, "n": rep.n}
        rows += [[kind, pp, m, se, inst] for pp, m, se, inst in
                 zip(rep.p_list, rep.moments, rep.moment_stderr, rep.instability)]
    ctx.emit("moments", out, (["kind", "p", "moment", "stderr", "instability"], rows))
    return EXIT_OK


def cmd_holder(ctx: Context) -> int:
    c = ctx.cfg
    rep = holder_exponent_estimate(ctx.params, ctx.ensemble, c.epsilon, levels=c.levels,
                                   pairs_per_field=c.pairs_per_field)
    ctx.emit("holder", {"separations": rep.separations, "min": rep.exponents_min, "median": rep.exponents_median,
                        "max": rep.exponents_max, "band": list(rep.band), "median_in_band": rep.median_in_band,
                        "pairs": rep.n_pairs_per_scale})
    return EXIT_OK


def cmd_thick_points(ctx: Context) -> int:
    c = ctx.cfg
    grid = ctx.grid
    probe = c.epsilon_probe or 4 * grid.spacing
    reps = [thick_points(sample_spectral_lgf(grid, s), c.alpha, probe) for s in c.seeds]
    ens = thick_point_ensemble(reps, grid.spacing, grid.dimension_d)
    ctx.emit("thick_points", {"alpha": c.alpha, "epsilon_probe": probe, "fitted_dimension": ens["fitted_dimension"],
                              "clipped": ens["clipped"], "empty_samples": ens["empty_samples"]},
             (["box_size", "mean_count"], [list(t) for t in zip(ens["box_sizes"], ens["mean_counts"])]))
    return EXIT_OK


def cmd_kpz(ctx: Context) -> int:
    c = ctx.cfg
    rep = kpz_check(ctx.params, ctx.ensemble, c.epsilon, c.kind, count_range=(c.count_lo, c.count_hi),
                    max_centers=c.count_hi + 10)
    ctx.emit("kpz", {"kind": c.kind, "euclidean_dim": rep.euclidean_dim, "quantum_dim": rep.quantum_dim,
                     "predicted_quantum_dim": rep.predicted_quantum_dim, "residual": rep.residual,
                     "flags": rep.flags},
             (["delta", "mean_count"], [list(t) for t in zip(rep.deltas, rep.counts)]))
    return EXIT_OK


def cmd_shell_corr(ctx: Context) -> int:
    c = ctx.cfg
    rep = shell_correlation_probe(ctx.params, ctx.ensemble, c.epsilon, c.radii)
    k = len(rep.radii)
    rows = [[rep.radii[i], rep.radii[j], rep.correlation[i][j], rep.stderr[i][j], rep.scrambled_correlation[i][j]]
            for i in range(k) for j in range(i + 1, k)]
    ctx.emit("shell_corr", {"n": rep.n, "radii": rep.radii},
             (["r_i", "r_j", "correlation", "stderr", "scrambled"], rows))
    return EXIT_OK


def cmd_gw_tails(ctx: Context) -> int:
    c = ctx.cfg
    sup = gwtools.sup_tail(gwtools.DriftedProcessSpec(c.drift_a, c.horizon_T, c.dt), c.y_list, c.n_samples,
                           c.seed, bridge=c.bridge)
    integ = gwtools.exp_integral_tail(gwtools.DriftedProcessSpec(c.drift_a, c.horizon_T_integral, c.dt),
                                      c.x_list, c.n_samples, c.seed)
    header = ["threshold", "survival", "ci_low", "ci_high"]
    write_csv(ctx.path("gw_sup_tail.csv"), header, sup.rows())
    write_csv(ctx.path("gw_integral_tail.csv"), header, integ.rows())
    summary = {}
    for name, rep in (("sup", sup), ("integral", integ)):
        summary[name] = {"slope": rep.slope, "slope_stderr": rep.slope_stderr, "target_slope": rep.target_slope,
                         "relative_error": rep.slope / rep.target_slope - 1, "hits": rep.hits,
                         "truncation_bound": rep.truncation_bound, "flags": rep.flags}
    write_json(ctx.path("gw_tails.json"), summary)
    return EXIT_OK


def cmd_verify(ctx: Context, *, determinism: bool = True) -> int:
    numbers = [n for n in ctx.cfg.criteria if n != 10]
    bad = [n for n in ctx.cfg.criteria if n not in acceptance.CRITERIA and n != 10]
    if bad:
        raise ValidationError(f"unknown criteria {bad}")
    results = []
    for n in numbers:
        res = acceptance.run_criterion(n, ctx.threads)
        print(res.line(), flush=True)
        results.append(res)
    for p in acceptance.write_artifacts(results, ctx.out_dir):
        ctx.outputs.append(str(p))
    if determinism and 10 in ctx.cfg.criteria:
        res = acceptance.determinism_check({r.number: r.artifact for r in results}, numbers, threads=ctx.threads)
        print(res.line(), flush=True)
        results.append(res)
    summary = {"criteria": [{"number": r.number, "name": r.name, "passed": r.passed} for r in results],
               "all_passed": all(r.passed for r in results)}
    write_json(ctx.path("verify.json"), summary)
    if not summary["all_passed"]:
        raise PropertyFailure("failed: " + ", ".join(str(r.number) for r in results if not r.passed))
    return EXIT_OK


COMMANDS: dict[str, tuple[Callable[..., int], str]] = {
    "build-kernel": (cmd_build_kernel, "tabulate the mollifier and report its identities"),
    "sample": (cmd_sample, "sample a field and write it with its sphere-average trace"),
    "distance": (cmd_distance, "distance between two sites of one realization"),
    "fit-exponent": (cmd_fit_exponent, "fit the distance exponent from medians"),
    "c-r-check": (cmd_c_r_check, "normalized medians across dyadic radii"),
    "moments": (cmd_moments, "moment and tail report of normalized distances"),
    "holder": (cmd_holder, "pairwise Hölder exponents"),
    "thick-points": (cmd_thick_points, "box dimension of thick points"),
    "kpz": (cmd_kpz, "quantum covering dimension against the KPZ relation"),
    "shell-corr": (cmd_shell_corr, "correlations of shell crossing events"),
    "gw-tails": (cmd_gw_tails, "tails of a drifted Brownian motion"),
    "verify": (cmd_verify, "run the acceptance suite"),
}


ENSEMBLE_COMMANDS = {"fit-exponent", "c-r-check", "moments", "holder", "thick-points", "kpz", "shell-corr"}


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    dflt = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=dflt(None), help="flat key = value config file")
    p.add_argument("--seed", type=int, default=dflt(None), help="override the config seed")
    p.add_argument("--threads", type=int, default=dflt(None), help="worker processes (default: available cores)")
    p.add_argument("--out-dir", default=dflt("lfpp_out"), help="output directory")
    p.add_argument("--format", choices=("csv", "json"), default=dflt("json"), help="report format")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lfpp", description="Liouville first passage percolation experiments.")
    parser.add_argument("--version", action="version", version=f"lfpp {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name, (_, help_) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_, description=help_)
        _add_globals(sp, suppress=True)
        if name == "verify":
            sp.add_argument("--criteria", help="comma-separated criterion numbers (overrides config)")
            sp.add_argument("--no-determinism", action="store_true", help="skip the rerun comparison")
    return parser


def _manifest(ctx: Context, command: str, argv: list, started: str, status: int, elapsed: float) -> dict:
    return {"command": command, "argv": argv, "config_path": ctx.cfg.path, "config_hash": ctx.cfg.config_hash,
            "code_version": __version__, "seeds": list(ctx.cfg.seeds) if command in ENSEMBLE_COMMANDS else [ctx.cfg.seed],
            "threads": ctx.threads, "format": ctx.fmt, "outputs": sorted(ctx.outputs), "exit_code": status,
            "started": started, "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "wall_seconds": elapsed}


def main(argv: list | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("lfpp: a subcommand is required (see lfpp --help)")
        if args.verbose:
            log.setLevel(logging.INFO)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        if getattr(args, "criteria", None):
            try:
                cfg = cfg.replace(criteria=tuple(int(v) for v in args.criteria.split(",")))
            except ValueError:
                raise UsageError(f"bad --criteria {args.criteria!r}") from None
        threads = args.threads if args.threads is not None else default_threads()
        if threads < 1:
            raise UsageError("--threads must be >= 1")
        ctx = Context(cfg, Path(args.out_dir), args.format, threads)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"lfpp: missing file: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"lfpp: invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    fn = COMMANDS[args.command][0]
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    t0 = time.perf_counter()
    try:
        ctx.out_dir.mkdir(parents=True, exist_ok=True)
        status = fn(ctx, determinism=not args.no_determinism) if args.command == "verify" else fn(ctx)
    except FileNotFoundError as exc:
        print(f"lfpp: missing file: {exc.filename}", file=sys.stderr)
        status = EXIT_USAGE
    except (ValidationError, FormatError) as exc:
        print(f"lfpp: validation error: {exc}", file=sys.stderr)
        status = EXIT_VALIDATION
    except (ResourceLimitError, MemoryError) as exc:
        print(f"lfpp: resource limit: {exc}", file=sys.stderr)
        status = EXIT_RESOURCE
    except PropertyFailure as exc:
        print(f"lfpp: property check {exc}", file=sys.stderr)
        status = EXIT_PROPERTY
    write_json(ctx.out_dir / "manifest.json",
               _manifest(ctx, args.command, argv, started, status, time.perf_counter() - t0))
    return status


if __name__ == "__main__":
    sys.exit(main())
