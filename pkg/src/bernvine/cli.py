"""Command-line interface.

Exit codes: 0 ok, 2 input error, 3 model instability, 4 numeric failure.
Every subcommand accepts ``--config FILE`` with ``key = value`` lines
(keys are option names, dashes or underscores); explicit flags win.
"""

import argparse
import csv
import io
import logging
import os
import sys

import numpy as np

from . import ase_study, backtests, garch, risk, vine
from .empirical import pseudo_observations

EXIT_OK, EXIT_INPUT, EXIT_UNSTABLE, EXIT_NUMERIC = 0, 2, 3, 4
THREADS_ENV = "BERNVINE_THREADS"
MAX_FAILED_DAYS = 0.05

log = logging.getLogger("bernvine")


class Unstable(Exception):
    """A parametric fit flagged as unstable."""


def default_threads():
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise risk.InputError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _floats(text):
    return tuple(float(x) for x in str(text).replace(";", ",").split(",") if x.strip())


def _ints(text):
    return tuple(int(x) for x in str(text).replace(";", ",").split(",") if x.strip())


def _strs(text):
    return tuple(x.strip() for x in str(text).replace(";", ",").split(",") if x.strip())


def read_config(path):
    """``key = value`` pairs; blank lines and ``#`` comments ignored."""
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise risk.InputError(f"cannot read config file: {exc}") from None
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise risk.InputError(f"config line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# -- subcommands -------------------------------------------------------------


def cmd_fit(args):
    panel, screen = risk.ingest(args.input, args.input_kind, args.delimiter)
    for line in screen.lines():
        log.warning(line)
    x = panel.r
    if args.columns:
        missing = [c for c in _strs(args.columns) if c not in panel.assets]
        if missing:
            raise risk.InputError(f"unknown columns: {', '.join(missing)}")
        idx = [panel.assets.index(c) for c in _strs(args.columns)]
        x, names = x[:, idx], [panel.assets[i] for i in idx]
    else:
        names = list(panel.assets)
    if args.garch_filter:
        x = np.column_stack([garch.standardized_residuals(garch.fit_qml(x[:, j]), x[:, j])
                             for j in range(x.shape[1])])
    u = pseudo_observations(x)
    structure = (vine.VineStructure(args.kind, _ints(args.order)) if args.order
                 else vine.select_order(u, args.kind))
    lines = [f"# seed={args.seed}", "# variables " + " ".join(names)]
    report = [["tree", "edge", "label", "arm", "family", "parameter", "nu", "aic", "objective"]]
    if args.arm == "bernstein":
        model = vine.fit_sequential_bernstein(u, structure, args.m)
        for t, k in structure.edge_index():
            c = model.edge(t, k)
            report.append([t, k, structure.edge_label(t, k), "bernstein", f"Bernstein(m={c.m})",
                           "", "", "", "%.17g" % c.objective])
        unstable = False
    else:
        model, fr = vine.fit_sequential_parametric(u, structure)
        if model is None:
            raise Unstable("; ".join(fr.reasons))
        for t, k, label, fit in fr.selected:
            if fit is None:
                report.append([t, k, label, "parametric", "Independence", "", "", "", ""])
            else:
                c = fit.copula
                nu = "" if c.nu is None else "%.17g" % c.nu
                report.append([t, k, label, "parametric", c.family.value, "%.17g" % c.theta, nu,
                               "%.17g" % fit.aic, ""])
        unstable = fr.unstable
        for ev in fr.events:
            log.info("edge %s %s: %s", ev.label, ev.family, ev.message)
    _write(args.output, "\n".join(lines) + "\n" + vine.dumps(model))
    if args.report:
        buf = io.StringIO()
        csv.writer(buf, delimiter=args.delimiter or ",", lineterminator="\n").writerows(report)
        _write(args.report, f"# seed={args.seed}\n" + buf.getvalue())
    if unstable:
        raise Unstable("parametric fit flagged unstable: " + "; ".join(fr.reasons))
    return EXIT_OK


def cmd_simulate(args):
    try:
        with open(args.model) as fh:
            text = fh.read()
    except OSError as exc:
        raise risk.InputError(f"cannot read model file: {exc}") from None
    try:
        model = vine.loads(text)
    except (ValueError, KeyError, IndexError) as exc:
        raise risk.InputError(f"corrupt model file: {exc}") from None
    if args.n < 0:
        raise risk.InputError("n must be nonnegative")
    rng = np.random.default_rng(args.seed)
    u = vine.simulate(model, args.n, rng)
    delim = args.delimiter or ","
    out = [f"# seed={args.seed}", delim.join(f"V{j + 1}" for j in range(model.d))]
    out += [delim.join(repr(float(x)) for x in row) for row in u]
    _write(args.output, "\n".join(out) + "\n")
    return EXIT_OK


def cmd_ase_study(args):
    cfg = ase_study.StudyConfig(
        dims=_ints(args.dims), kinds=_strs(args.kinds), sample_sizes=_ints(args.sizes),
        replications=args.replications, m=args.m, ase_grid=(args.grid, args.grid),
        seed=args.seed, true_structure=(args.structure == "true"))

    def progress(d, k, n, i, tot):
        log.info("cell dim=%d kind=%s n=%d done (%d/%d)", d, k, n, i, tot)

    records = ase_study.run_study(cfg, workers=args.threads, progress=progress)
    delim = args.delimiter or ","
    _write(args.summary, ase_study.format_summary(ase_study.summarize(records), args.seed, delim))
    if args.records:
        _write(args.records, ase_study.format_records(records, args.seed, delim))
    return EXIT_OK


FORECAST_COLUMNS = ("date", "arm", "level", "side", "var", "realized", "hit")


def _forecast_rows(run):
    rows = []
    for arm, fcs in run.forecasts.items():
        for f in fcs:
            y = run.realized[f.date]
            hit = int(y < f.var_value) if f.side == "long" else int(y > f.var_value)
            rows.append((f.date, arm, f.level, f.side, f.var_value, y, hit))
    return rows


def _hit_sets(run, long_levels, short_levels):
    sets = []
    for side, levels in (("long", long_levels), ("short", short_levels)):
        for level in levels:
            for arm in run.forecasts:
                fc = risk.series(run, arm, level, side)
                if fc:
                    sets.append((level, side, arm, risk.hit_sequence(fc, run.realized)))
    return sets


def cmd_var_backtest(args):
    panel, screen = risk.ingest(args.input, args.input_kind, args.delimiter)
    for line in screen.lines():
        log.warning(line)
    arms = _strs(args.arms)
    long_levels, short_levels = _floats(args.levels), _floats(args.short_levels)

    def progress(i, tot):
        if i % 25 == 0 or i == tot:
            log.info("forecast day %d/%d", i, tot)

    run = risk.forecast_var(panel, window=args.window, arms=arms, K=args.K, seed=args.seed,
                            kind=args.kind, long_levels=long_levels, short_levels=short_levels,
                            m=args.m, refit_every=args.refit_every, n_out=args.n_out,
                            progress=progress)
    for date, why in run.failures:
        log.warning("day %s failed: %s", date, why)
    delim = args.delimiter or ","
    out = [f"# seed={args.seed}", delim.join(FORECAST_COLUMNS)]
    for row in _forecast_rows(run):
        out.append(delim.join([row[0], row[1], repr(row[2]), row[3], repr(row[4]),
                               repr(row[5]), str(row[6])]))
    _write(args.forecasts, "\n".join(out) + "\n")
    if run.failure_rate() > MAX_FAILED_DAYS:
        log.error("%d of %d days failed", len(run.failures), run.n_days)
        return EXIT_NUMERIC
    rows = backtests.backtest_report(_hit_sets(run, long_levels, short_levels), args.n_sim, args.seed)
    _write(args.report, backtests.format_report(rows, delim, seed=args.seed))
    return EXIT_OK


def cmd_backtest_only(args):
    try:
        with open(args.hits) as fh:
            text = fh.read()
    except OSError as exc:
        raise risk.InputError(f"cannot read hit file: {exc}") from None
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if len(lines) < 2:
        raise risk.InputError("hit file needs a header and data rows")
    delim = args.delimiter or risk._sniff_delimiter(lines[0]) or ","
    header = [h.strip() for h in lines[0].split(delim)]
    rows = [[x.strip() for x in ln.split(delim)] for ln in lines[1:]]
    if any(len(r) != len(header) for r in rows):
        raise risk.InputError("rows do not match the header")
    if "hit" not in header:
        if len(header) != 1:
            raise risk.InputError("hit file needs a 'hit' column")
        col = {"hit": 0}
    else:
        col = {h: i for i, h in enumerate(header)}
    try:
        h_all = np.array([int(r[col["hit"]]) for r in rows])
    except ValueError as exc:
        raise risk.InputError(f"bad hit value: {exc}") from None
    if not np.all((h_all == 0) | (h_all == 1)):
        raise risk.InputError("hits must be 0 or 1")
    sets = []
    if {"level", "side"} <= col.keys():
        groups = {}
        for r, hv in zip(rows, h_all):
            arm = r[col["arm"]] if "arm" in col else args.arm
            groups.setdefault((float(r[col["level"]]), r[col["side"]], arm), []).append(hv)
        for (level, side, arm), hv in groups.items():
            p = level if side == "long" else 1.0 - level
            sets.append((level, side, arm, risk.HitSequence(np.array(hv), p)))
    else:
        if args.alpha is None:
            raise risk.InputError("--alpha is required for a plain hit column")
        sets.append((args.alpha, args.side, args.arm,
                     risk.HitSequence(h_all, args.alpha if args.side == "long" else 1.0 - args.alpha)))
    rows = backtests.backtest_report(sets, args.n_sim, args.seed)
    _write(args.output, backtests.format_report(rows, args.delimiter or ",", seed=args.seed))
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="bernvine", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key = value configuration file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--delimiter", default=None, help="field delimiter (default: sniffed / ',')")
        sp.add_argument("--threads", type=int, default=None,
                        help=f"worker processes (default ${THREADS_ENV} or all cores)")

    f = sub.add_parser("fit", help="fit a vine copula to a panel")
    common(f)
    f.add_argument("--input", required=True)
    f.add_argument("--input-kind", choices=("prices", "returns"), default="returns")
    f.add_argument("--columns", default=None, help="comma-separated asset subset")
    f.add_argument("--garch-filter", action="store_true",
                   help="fit on standardized GARCH residuals instead of raw columns")
    f.add_argument("--arm", choices=risk.ARMS, default="bernstein")
    f.add_argument("--kind", choices=("C", "D"), default="C")
    f.add_argument("--order", default=None, help="explicit 0-based variable order")
    f.add_argument("--m", type=int, default=None, help="Bernstein grid size")
    f.add_argument("--output", default="-")
    f.add_argument("--report", default=None)
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="simulate from a model file")
    common(s)
    s.add_argument("--model", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--output", default="-")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("ase-study", help="run the ASE simulation study")
    common(a)
    a.add_argument("--dims", default=",".join(map(str, ase_study.TABLE_DIMS)))
    a.add_argument("--kinds", default="C,D")
    a.add_argument("--sizes", default="200,500")
    a.add_argument("--replications", type=int, default=1000)
    a.add_argument("--m", type=int, default=None)
    a.add_argument("--grid", type=int, default=20)
    a.add_argument("--structure", choices=("true", "selected"), default="true")
    a.add_argument("--summary", default="-")
    a.add_argument("--records", default=None)
    a.set_defaults(func=cmd_ase_study)

    v = sub.add_parser("var-backtest", help="rolling VaR forecasts plus backtests")
    common(v)
    v.add_argument("--input", required=True)
    v.add_argument("--input-kind", choices=("prices", "returns"), default="prices")
    v.add_argument("--window", type=int, default=500)
    v.add_argument("--n-out", type=int, default=None)
    v.add_argument("--K", type=int, default=10_000)
    v.add_argument("--arms", default="bernstein,parametric")
    v.add_argument("--kind", choices=("C", "D"), default="C")
    v.add_argument("--m", type=int, default=None)
    v.add_argument("--levels", default="0.02,0.05,0.10")
    v.add_argument("--short-levels", default="0.975")
    v.add_argument("--refit-every", type=int, default=1)
    v.add_argument("--n-sim", type=int, default=backtests.N_SIM)
    v.add_argument("--forecasts", default="-")
    v.add_argument("--report", default="-")
    v.set_defaults(func=cmd_var_backtest)

    b = sub.add_parser("backtest-only", help="backtests of an existing hit sequence")
    common(b)
    b.add_argument("--hits", required=True)
    b.add_argument("--alpha", type=float, default=None, help="VaR level of a plain hit column")
    b.add_argument("--side", choices=("long", "short"), default="long")
    b.add_argument("--arm", default="-")
    b.add_argument("--n-sim", type=int, default=backtests.N_SIM)
    b.add_argument("--output", default="-")
    b.set_defaults(func=cmd_backtest_only)
    return p


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, value in cfg.items():
            if key not in known or key in ("config", "func", "help"):
                raise risk.InputError(f"unknown config key {key!r}")
            act = known[key]
            if isinstance(act, argparse._StoreTrueAction):
                defaults[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                defaults[key] = act.type(value) if act.type else value
        sub.set_defaults(**defaults)
        # a re-parse lets explicit flags override the config values
        args = parser.parse_args(argv)
    if args.threads is None:
        args.threads = default_threads()
    return args


def main(argv=None):
    try:
        args = parse_args(argv)
    except risk.InputError as exc:
        print(f"bernvine: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (risk.InputError, FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"bernvine: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Unstable as exc:
        print(f"bernvine: model instability: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except (ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"bernvine: numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
