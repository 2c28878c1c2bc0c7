"""Command-line driver: simulate, table, rates, check.

Exit codes: 0 success, 2 configuration problem, 3 path divergence,
4 statistics precondition (rate fit).  All data files are written with
shortest round-trip decimals so parsing them back recovers the exact
values.  Flags override config-file entries override built-in defaults;
the config file is line-oriented ``key = value`` text with ``#`` comments,
keys matching the long flag names.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from .errors import (ConfigurationError, FitError, PathDivergenceError,
                     SampledSdeError)
from .integrate import ScaleParams, TimeGrid, moment_curves
from .models import builtin_model, probe_assumptions
from .montecarlo import EnsembleConfig, run_ensemble
from .rates import (ExponentRule, FUNCTIONALS, LadderSpec, RatioRule, fit_rate,
                    render_table, run_ladder)

_TABLE_DEFAULTS = {
    "example1": {"x0": (-0.07, 1.5), "eps": (2 ** -5, 2 ** -6, 2 ** -7)},
    "example2": {"x0": (-0.07, 1.5), "eps": (2 ** -5, 2 ** -6, 2 ** -7)},
    "example3": {"x0": (0.1,), "eps": (2 ** -3, 2 ** -4, 2 ** -5)},
    "example4": {"x0": (0.1,), "eps": (2 ** -3, 2 ** -4, 2 ** -5)},
}

_TRUE_WORDS = {"1", "true", "yes", "on"}
_FLAG_OPTIONS = {"plot", "full_resolution"}


def _parse_real(text: str, field: str) -> float:
    """Accept plain decimals and dyadic powers written as 2^-5 or 2^3."""
    s = text.strip()
    try:
        if s.startswith(("2^", "2**")):
            exp = s.split("^")[-1] if "^" in s else s.split("**")[-1]
            return float(2.0 ** float(exp))
        return float(s)
    except ValueError:
        raise ConfigurationError(field, f"cannot parse number {text!r}")


def _parse_eps_list(text: str) -> tuple[float, ...]:
    """Comma list of values, or a dyadic range like 2^-4..2^-7."""
    s = text.strip()
    if ".." in s:
        lo_s, hi_s = s.split("..", 1)
        lo = _parse_real(lo_s, "eps")
        hi = _parse_real(hi_s, "eps")
        if not (lo > hi > 0):
            raise ConfigurationError("eps", "range must run from larger to smaller noise size")
        values = []
        e = lo
        while e > hi * (1 + 1e-12):
            values.append(e)
            e /= 2.0
        values.append(hi)
        return tuple(values)
    return tuple(_parse_real(part, "eps") for part in s.split(","))


def _parse_x0_list(text: str) -> tuple[float, ...]:
    return tuple(_parse_real(part, "x0") for part in text.split(","))


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _delim(fmt: str) -> str:
    if fmt == "csv":
        return ","
    if fmt == "tsv":
        return "\t"
    raise ConfigurationError("format", f"unknown format {fmt!r} (csv or tsv)")


def _write_rows(path: str, header: list[str], rows, delim: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(delim.join(header) + "\n")
        for row in rows:
            fh.write(delim.join(_fmt(v) for v in row) + "\n")


def _with_suffix(path: str, tag: str) -> str:
    stem, ext = os.path.splitext(path)
    return f"{stem}{tag}{ext or '.csv'}"


def load_config(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blanks ignored."""
    entries: dict[str, str] = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigurationError(
                        "config", f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
                key, value = line.split("=", 1)
                entries[key.strip().replace("-", "_")] = value.strip()
    except OSError as err:
        raise ConfigurationError("config", f"cannot read {path}: {err}")
    return entries


def _inject_config(argv: list[str]) -> list[str]:
    """Strip --config from argv and splice its entries in after the subcommand."""
    rest: list[str] = []
    config_path = None
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg == "--config":
            if i + 1 >= len(argv):
                raise ConfigurationError("config", "--config needs a file path")
            config_path = argv[i + 1]
            i += 2
        elif arg.startswith("--config="):
            config_path = arg.split("=", 1)[1]
            i += 1
        else:
            rest.append(arg)
            i += 1
    if config_path is None:
        return rest
    if not rest:
        raise ConfigurationError("config", "a subcommand is required before flags apply")
    entries = load_config(config_path)
    injected: list[str] = []
    for key, value in entries.items():
        flag = "--" + key.replace("_", "-")
        if key in _FLAG_OPTIONS:
            if value.lower() in _TRUE_WORDS:
                injected.append(flag)
        else:
            injected.extend([flag, value])
    return [rest[0]] + injected + rest[1:]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="builtin model name (example1..example4)")
    p.add_argument("--horizon", type=float, default=128.0, help="time horizon (default 128)")
    p.add_argument("--steps-per-sample", type=int, default=16,
                   help="integrator steps per sampling interval (default 16)")
    p.add_argument("--paths", type=int, default=300, help="ensemble size (default 300)")
    p.add_argument("--p", type=int, default=2, help="moment order (default 2)")
    p.add_argument("--seed", type=int, default=42, help="64-bit master seed (default 42)")
    p.add_argument("--threads", type=int, default=1, help="worker cap; output-invariant")
    p.add_argument("--format", default="csv", choices=("csv", "tsv"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sampled-sde",
        description="Simulate SDEs with sampled-and-held feedback and small noise, "
                    "and measure their convergence to the closed-loop limit.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="one ensemble; time-series and summary files")
    _add_common(sim)
    sim.add_argument("--eps", required=True, help="noise size (e.g. 0.03125 or 2^-5)")
    sim.add_argument("--delta", help="sampling period (overrides --delta-ratio)")
    sim.add_argument("--delta-ratio", type=float, default=2.0,
                     help="sampling period as a multiple of eps (default 2)")
    sim.add_argument("--x0", type=float, help="override the model's initial condition")
    sim.add_argument("--out", required=True, help="time-series output file")
    sim.add_argument("--full-resolution", action="store_true",
                     help="write every grid point instead of thinning to 4096")
    sim.add_argument("--plot", action="store_true",
                     help="render a PNG panel next to the output file")

    tab = sub.add_parser("table", help="max/min residual table over a noise ladder")
    _add_common(tab)
    tab.add_argument("--eps", help="comma list or range (default per model)")
    tab.add_argument("--x0", help="comma list of initial conditions (default per model)")
    tab.add_argument("--delta-ratio", type=float, default=2.0)
    tab.add_argument("--out", help="directory for per-(x0, eps) panel data files")
    tab.add_argument("--plot", action="store_true",
                     help="render one overlay PNG per initial condition (needs --out)")

    rat = sub.add_parser("rates", help="fit an empirical convergence order over a ladder")
    _add_common(rat)
    rat.add_argument("--eps", default="2^-4..2^-7", help="ladder (default 2^-4..2^-7)")
    rat.add_argument("--delta-ratio", type=float, default=2.0)
    rat.add_argument("--delta-exp", type=float,
                     help="use delta = eps**a instead of a fixed ratio")
    rat.add_argument("--functional", default="lln_sup", choices=FUNCTIONALS)
    rat.add_argument("--x0", type=float, help="override the model's initial condition")
    rat.add_argument("--out", help="per-rung data file")
    rat.add_argument("--plot", action="store_true",
                     help="render the log-log fit as PNG (needs --out)")

    chk = sub.add_parser("check", help="probe the model's regularity constants")
    chk.add_argument("--model", required=True)
    chk.add_argument("--box", default="-3,3", help="probe interval (default -3,3)")
    chk.add_argument("--n-probe", type=int, default=601)
    chk.add_argument("--probe-horizon", type=float, default=64.0,
                     help="horizon for the kernel integrals (default 64)")

    return parser


def cmd_simulate(args) -> int:
    model = builtin_model(args.model, x0=args.x0)
    eps = _parse_real(args.eps, "eps")
    if eps <= 0:
        raise ConfigurationError("eps", "noise size must be positive")
    if args.delta is not None:
        delta = _parse_real(args.delta, "delta")
        scales = ScaleParams(eps=eps, delta=delta)
    else:
        scales = RatioRule(args.delta_ratio).scales(eps)
    grid = TimeGrid.for_scales(args.horizon, scales, args.steps_per_sample)
    cfg = EnsembleConfig(n_paths=args.paths, master_seed=args.seed, p=args.p)

    max_points = grid.n_steps + 1 if args.full_resolution else 4096
    stats = run_ensemble(model, scales, grid, cfg, threads=args.threads,
                         max_output_points=max_points)
    curves = moment_curves(model, scales, grid)
    out_idx = grid.output_indices(max_points)

    delim = _delim(args.format)
    header = ["t", "mean_resid", "stderr", "lln_moment", "clt_moment", "mu", "xi2"]
    rows = zip(stats.times, stats.mean_resid, stats.stderr, stats.lln_moment,
               stats.clt_moment, curves.mu[out_idx], curves.xi2[out_idx])
    _write_rows(args.out, header, rows, delim)

    summary = [
        ("model", model.name),
        ("x0", model.x0),
        ("eps", scales.eps),
        ("delta", scales.delta),
        ("c", scales.c),
        ("horizon", grid.horizon),
        ("h", grid.h),
        ("steps_per_sample", grid.steps_per_sample),
        ("n_paths", cfg.n_paths),
        ("p", cfg.p),
        ("seed", cfg.master_seed),
        ("sup_mean_resid_abs", stats.sup_mean_resid_abs),
        ("min_mean_resid_abs", stats.min_mean_resid_abs),
        ("sup_lln_moment", float(stats.lln_moment.max())),
        ("sup_clt_moment", float(stats.clt_moment.max())),
    ]
    summary_path = _with_suffix(args.out, "_summary")
    _write_rows(summary_path, ["key", "value"], summary, delim)

    if args.plot:
        from .plotting import render_time_series
        png = os.path.splitext(args.out)[0] + ".png"
        render_time_series(stats, png,
                           title=f"{model.name}, x0 = {model.x0:g}, eps = {scales.eps:g}")
    print(f"wrote {args.out} and {summary_path}"
          + (f" and {os.path.splitext(args.out)[0] + '.png'}" if args.plot else ""))
    return 0


def cmd_table(args) -> int:
    defaults = _TABLE_DEFAULTS.get(args.model)
    if defaults is None:
        builtin_model(args.model)  # raises the canonical unknown-model error
    x0_list = _parse_x0_list(args.x0) if args.x0 else defaults["x0"]
    eps_list = _parse_eps_list(args.eps) if args.eps else defaults["eps"]
    if any(a <= b for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigurationError("eps", "noise sizes must be strictly decreasing")

    results = {}
    for x0 in x0_list:
        model = builtin_model(args.model, x0=x0)
        for k, eps in enumerate(eps_list):
            scales = RatioRule(args.delta_ratio).scales(eps)
            grid = TimeGrid.for_scales(args.horizon, scales, args.steps_per_sample)
            cfg = EnsembleConfig(n_paths=args.paths,
                                 master_seed=(args.seed + k) % 2 ** 64, p=args.p)
            results[(x0, eps)] = run_ensemble(model, scales, grid, cfg,
                                              threads=args.threads)

    print(f"model: {args.model}  (horizon {args.horizon:g}, delta = "
          f"{args.delta_ratio:g}*eps, {args.paths} paths, seed {args.seed})")
    for line in render_table(results):
        print(line)

    if args.out:
        os.makedirs(args.out, exist_ok=True)
        delim = _delim(args.format)
        ext = args.format
        for (x0, eps), stats in results.items():
            name = f"{args.model}_x0_{x0:g}_eps_{eps:g}.{ext}"
            _write_rows(os.path.join(args.out, name),
                        ["t", "mean_resid", "stderr"],
                        zip(stats.times, stats.mean_resid, stats.stderr), delim)
        if args.plot:
            from .plotting import render_overlay
            for x0 in x0_list:
                by_eps = {eps: results[(x0, eps)] for eps in eps_list}
                png = os.path.join(args.out, f"{args.model}_x0_{x0:g}.png")
                render_overlay(by_eps, png, title=f"{args.model}, x0 = {x0:g}")
    elif args.plot:
        raise ConfigurationError("out", "--plot needs --out to know where to write")
    return 0


def cmd_rates(args) -> int:
    model = builtin_model(args.model, x0=args.x0)
    eps_values = _parse_eps_list(args.eps)
    rule = ExponentRule(args.delta_exp) if args.delta_exp is not None else RatioRule(args.delta_ratio)
    ladder = LadderSpec(
        eps_values=eps_values,
        delta_rule=rule,
        per_rung=EnsembleConfig(n_paths=args.paths, master_seed=args.seed, p=args.p))
    template = TimeGrid.for_scales(args.horizon, rule.scales(eps_values[0]),
                                   args.steps_per_sample)

    points = run_ladder(model, ladder, template, args.functional, threads=args.threads)
    for eps, err in points:
        print(f"eps = {eps:.6g}  delta = {rule.scales(eps).delta:.6g}  "
              f"{args.functional} = {err:.6e}")
    fit = fit_rate(points)
    print(f"fitted order: slope = {fit.slope:.4f}, intercept = {fit.intercept:.4f}, "
          f"r_squared = {fit.r_squared:.6f}")

    if args.out:
        _write_rows(args.out, ["eps", "delta", args.functional],
                    [(eps, rule.scales(eps).delta, err) for eps, err in points],
                    _delim(args.format))
        if args.plot:
            from .plotting import render_rate_fit
            render_rate_fit(fit, os.path.splitext(args.out)[0] + ".png",
                            title=f"{args.model}: {args.functional}")
    elif args.plot:
        raise ConfigurationError("out", "--plot needs --out to know where to write")
    return 0


def cmd_check(args) -> int:
    model = builtin_model(args.model)
    parts = args.box.split(",")
    if len(parts) != 2:
        raise ConfigurationError("box", "expected 'lo,hi'")
    box = (_parse_real(parts[0], "box"), _parse_real(parts[1], "box"))
    report = probe_assumptions(model, probe_box=box, n_probe=args.n_probe,
                               horizon=args.probe_horizon)
    print(f"model: {model.name}  probe box [{box[0]:g}, {box[1]:g}] "
          f"({args.n_probe} points), kernel horizon {args.probe_horizon:g}")
    print(f"lambda_hat   = {report.lambda_hat:.6g}")
    print(f"L_kappa_hat  = {report.L_kappa_hat:.6g}")
    print(f"L_sigma_hat  = {report.L_sigma_hat:.6g}")
    print(f"gamma_hat    = {report.gamma_hat:.6g}")
    print(f"alpha_hat    = {report.alpha_hat:.6g}")
    print(f"beta_hat     = {report.beta_hat:.6g}")
    print(f"margin       = {report.margin:.6g}")
    print(f"kernel_sup   = ({report.kernel_sup[0]:.6g}, {report.kernel_sup[1]:.6g})")
    if report.margin > 0:
        print("status: OK (contractivity margin positive)")
    else:
        print("status: WARN (contractivity margin not positive; "
              "simulation remains available)")
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "table": cmd_table,
    "rates": cmd_rates,
    "check": cmd_check,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        argv = _inject_config(argv)
        try:
            args = build_parser().parse_args(argv)
        except SystemExit as exc:  # argparse reports its own usage errors
            return int(exc.code or 0)
        return _COMMANDS[args.command](args)
    except PathDivergenceError as err:
        print(f"divergence error: {err}", file=sys.stderr)
        return 3
    except FitError as err:
        print(f"statistics error: {err}", file=sys.stderr)
        return 4
    except SampledSdeError as err:  # configuration and probe problems
        print(f"configuration error: {err}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
