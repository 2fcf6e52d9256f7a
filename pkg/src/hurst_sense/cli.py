"""Config-driven experiment runner.

    hurst-sense <command> --config <file> [--out DIR] [--paths N] [--seed S]

The config is flat ``key = value`` text, one pair per line, ``#`` starts a
comment.  Every command writes fixed-column CSV files and a ``manifest.txt``
into the output directory.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import fbm_kernel as kn
from .kim_omberg import (RiccatiBlowUpError, complete_market_value, solve_riccati,
                         strategy_ko, value_ko)
from .market import (MODELS, ModelParams, constant_strategy, estimate_value,
                     merton_strategy, myopic_strategy, simulate_market)
from .mc import worker_count
from .paths import Grid, dlambda_path, fbm_path, frechet_remainder, sample_noise
from .sensitivity import (constant_direction, constant_shift_fd, constant_drift, gateaux_derivative,
                          hurst_derivative, hurst_expansion, meanrev_gap,
                          suboptimality_bound)

COMMANDS = ("kernel-check", "simulate", "value", "gateaux", "hurst", "meanrev", "bound")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    def __init__(self, msg, line=None):
        super().__init__(f"line {line}: {msg}" if line else msg)
        self.line = line


def _floats(text):
    return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())


def _bool(text):
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default)
SCHEMA = {
    "command": (str, None),
    "H": (float, 0.5),
    "alpha": (float, 1.0),
    "x0": (float, 0.5),
    "rho": (float, 0.5),
    "p": (float, -1.0),
    "T": (float, 1.0),
    "model": (str, "model1"),
    "mu": (float, 0.5),
    "n_pos": (int, 100),
    "n_neg": (int, None),
    "s_cut": (float, None),
    "paths": (int, 10000),
    "seed": (int, 0),
    "eps": (_floats, None),
    "two_sided": (_bool, True),
    "escalate": (_bool, True),
    "convolution": (_bool, True),
    "delta": (float, 0.4),
    "beta": (float, None),
    "strategy": (str, "auto"),
    "direction": (str, "constant"),
    "lam": (float, 0.5),
    "lam_alt": (float, 0.6),
    "k_ceiling": (float, 1e6),
    "h_list": (_floats, (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)),
    "t_list": (_floats, (0.5, 1.0, 2.0)),
    "dq_h_list": (_floats, (0.3, 0.5, 0.7)),
    "n_show": (int, 1),
    "out": (str, "out"),
}
DEFAULT_EPS = {"hurst": (0.08, 0.04, 0.02), "meanrev": (0.4, 0.2, 0.1, 0.05)}
ALIASES = {"lambda0": "x0", "sigma0": "x0", "n_paths": "paths"}


@dataclass
class ExperimentConfig:
    command: str
    params: ModelParams
    grid: Grid
    n_paths: int
    seed: int
    eps: tuple
    out: Path
    values: dict = field(default_factory=dict)
    lines: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate a flat key=value config; errors carry line numbers."""
    vals, lines = {}, {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {raw.strip()!r}", n)
        key, val = (x.strip() for x in line.split("=", 1))
        key = ALIASES.get(key, key)
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", n)
        if key in vals:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", n)
        try:
            vals[key] = SCHEMA[key][0](val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", n) from None
        lines[key] = n
    for key, val in (overrides or {}).items():
        if val is not None:
            vals[key] = val
            lines[key] = "(command line)"
    for key, (_, default) in SCHEMA.items():
        vals.setdefault(key, default)
    return _validate(vals, lines)


def _validate(v: dict, lines: dict) -> ExperimentConfig:
    def fail(key, msg):
        raise ConfigError(f"{key}: {msg}", lines.get(key))

    if v["command"] is None:
        raise ConfigError("missing 'command'")
    if v["command"] not in COMMANDS:
        fail("command", f"must be one of {', '.join(COMMANDS)}")
    if not 0 < v["H"] < 1:
        fail("H", "must lie in (0, 1)")
    if v["p"] >= 0:
        fail("p", "risk aversion must be negative")
    if not 0 < v["rho"] <= 1:
        fail("rho", "must lie in (0, 1]")
    if v["alpha"] < 0:
        fail("alpha", "must be non-negative")
    if v["T"] <= 0:
        fail("T", "must be positive")
    if v["model"] not in MODELS:
        fail("model", f"must be one of {', '.join(MODELS)}")
    if v["paths"] < 1:
        fail("paths", "must be >= 1")
    if v["n_pos"] < 1:
        fail("n_pos", "must be >= 1")
    if v["beta"] is not None and v["beta"] <= 1 - v["p"]:
        fail("beta", f"must exceed 1 - p = {1 - v['p']:g}")
    if not 0 < v["delta"] < 0.5:
        fail("delta", "must lie in (0, 1/2)")
    cmd = v["command"]
    if v["eps"] is None:
        v["eps"] = DEFAULT_EPS.get(cmd, DEFAULT_EPS["hurst"])
    if not v["eps"]:
        fail("eps", "needs at least one value")
    if cmd == "hurst":
        if v["model"] != "model1" or v["H"] != 0.5:
            fail("H", "the hurst expansion runs from Model 1 at H = 0.5")
        for e in v["eps"]:
            if not 0 < abs(e) < 0.5:
                fail("eps", f"H + eps must stay in (0, 1); got eps = {e:g}")
    if cmd == "meanrev" and any(e <= 0 for e in v["eps"]):
        fail("eps", "mean-reversion scales must be positive")
    if cmd == "value" and v["strategy"] == "auto" and v["model"] == "model2":
        fail("strategy", "Model 2 needs an explicit strategy (constant:<c>)")
    try:
        params = ModelParams(H=v["H"], alpha=v["alpha"], x0=v["x0"], rho=v["rho"], p=v["p"],
                             T=v["T"], model=v["model"], mu=v["mu"])
        grid = Grid(v["T"], v["n_pos"], v["n_neg"], v["s_cut"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return ExperimentConfig(cmd, params, grid, v["paths"], v["seed"], tuple(v["eps"]),
                            Path(v["out"]), v, lines)


# --------------------------------------------------------------------------
# CSV helpers
# --------------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path: Path, header: list, rows, comment: str | None = None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _param_comment(cfg: ExperimentConfig) -> str:
    p = cfg.params
    return (f"H={p.H!r} alpha={p.alpha!r} x0={p.x0!r} rho={p.rho!r} p={p.p!r} T={p.T!r} "
            f"model={p.model} mu={p.mu!r} n_pos={cfg.grid.n_pos} seed={cfg.seed}")


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def _cmd_kernel_check(cfg):
    rows = []
    for h in cfg["h_list"]:
        ci = kn.c_norm(h) ** 2 * kn.c1(h - 0.5) - 1.0
        for t in cfg["t_list"]:
            l2 = kn.kernel_l2(h, t)
            rows.append((h, t, l2, l2 - t ** (2 * h), ci))
    write_csv(cfg.out / "kernel_check.csv",
              ["H", "t", "kernel_l2", "normalization_residual", "c_identity_residual"], rows)
    dq = []
    for h in cfg["dq_h_list"]:
        for t in cfg["t_list"]:
            vals = [kn.dq_l2_error(h, t, e) for e in cfg.eps]
            for k, (e, d) in enumerate(zip(cfg.eps, vals)):
                ratio = vals[k - 1] / d if k else float("nan")
                dq.append((h, t, e, d, ratio))
    write_csv(cfg.out / "kernel_dq.csv", ["H", "t", "eps", "dq_l2_error", "ratio_to_previous"], dq)
    return ["kernel_check.csv", "kernel_dq.csv"]


def _cmd_simulate(cfg):
    g, p = cfg.grid, cfg.params
    idx = np.arange(cfg["n_show"])
    noise = sample_noise(g, cfg.seed, idx)
    m = simulate_market(p, noise)
    b = fbm_path(noise, p.H)
    d = dlambda_path(noise, p.H, p.alpha, cfg["convolution"])
    rows = []
    for k in range(idx.size):
        for j, t in enumerate(g.t):
            rows.append((int(idx[k]), t, b.values[k, j], m.lam.values[k, j], d.values[k, j],
                         m.R.values[k, j]))
    write_csv(cfg.out / "paths.csv", ["path", "t", "fbm", "lam", "dlam", "R"], rows,
              _param_comment(cfg))
    beta = cfg["beta"] or 2 * (1 - p.p)
    fr = frechet_remainder(g, p.H, p.alpha, p.x0, beta, cfg.eps, cfg.n_paths, cfg.seed,
                           cfg["convolution"])
    write_csv(cfg.out / "frechet.csv", ["eps", "mean", "stderr", "n_paths"],
              [(e, r.mean, r.stderr, r.n_paths) for e, r in zip(cfg.eps, fr)],
              _param_comment(cfg) + f" beta={beta!r}")
    return ["paths.csv", "frechet.csv"]


def _strategy(cfg):
    """Resolve the strategy key: auto | ko | merton | myopic[:scale] | constant:c."""
    p, name = cfg.params, cfg["strategy"]
    kind, _, arg = name.partition(":")
    if kind == "auto":
        kind = "ko" if p.model == "model1" and p.H == 0.5 else "merton"
    if kind == "ko":
        if p.model != "model1" or p.H != 0.5:
            raise ConfigError("strategy: ko needs Model 1 at H = 0.5", cfg.lines.get("strategy"))
        sol = solve_riccati(p, cfg.grid.n_pos)
        return strategy_ko(sol), value_ko(sol, p.x0), sol
    if kind == "merton":
        mu = p.mu if p.model == "constant" else p.x0
        ref = complete_market_value(mu, p) if p.model == "constant" else float("nan")
        return merton_strategy(mu, p.p), ref, None
    if kind == "myopic":
        return myopic_strategy(p.p, float(arg) if arg else 1.0), float("nan"), None
    if kind == "constant":
        return constant_strategy(float(arg or 0.0)), float("nan"), None
    raise ConfigError(f"strategy: unknown rule {name!r}", cfg.lines.get("strategy"))


def _cmd_value(cfg):
    s, ref, sol = _strategy(cfg)
    est = estimate_value(s, cfg.params, cfg.n_paths, cfg.seed, grid=cfg.grid)
    write_csv(cfg.out / "value.csv", ["strategy", "mean", "stderr", "n_paths", "reference"],
              [(s.name, est.mean, est.stderr, est.n_paths, ref)], _param_comment(cfg))
    files = ["value.csv"]
    if sol is not None:
        sol.to_csv(cfg.out / "riccati.csv")
        files.append("riccati.csv")
    return files


def _cmd_gateaux(cfg):
    p, d = cfg.params, cfg["direction"]
    kind, _, arg = d.partition(":")
    if kind == "constant":
        c = float(arg or 1.0)
        est = gateaux_derivative(p, constant_direction(c), cfg.n_paths, cfg.seed, cfg.grid)
        ref = constant_shift_fd(p, c, cfg.grid.n_pos)
    elif kind == "hurst":
        est = hurst_derivative(p, cfg.n_paths, cfg.seed, cfg.grid,
                               convolution=cfg["convolution"])
        ref = float("nan")
    else:
        raise ConfigError(f"direction: expected constant[:c] or hurst, got {d!r}",
                          cfg.lines.get("direction"))
    write_csv(cfg.out / "gateaux.csv", ["direction", "mean", "stderr", "n_paths", "fd_reference"],
              [(d, est.mean, est.stderr, est.n_paths, ref)], _param_comment(cfg))
    return ["gateaux.csv"]


def _cmd_hurst(cfg):
    eps = sorted(set(cfg.eps) | ({-e for e in cfg.eps} if cfg["two_sided"] else set()) | {0.0})
    rep = hurst_expansion(cfg.params, eps, cfg.n_paths, cfg.seed, cfg.grid,
                          cfg["convolution"], cfg["escalate"])
    rep.to_csv(cfg.out / "expansion.csv")
    return ["expansion.csv"]


def _cmd_meanrev(cfg):
    tab = meanrev_gap(cfg.params.mu, cfg.eps, cfg["delta"], cfg.params, cfg.n_paths, cfg.seed,
                      cfg.grid)
    tab.to_csv(cfg.out / "meanrev.csv")
    return ["meanrev.csv"]


def _cmd_bound(cfg):
    p = cfg.params.with_(model="constant", mu=cfg["lam"])
    lam, alt = cfg["lam"], cfg["lam_alt"]
    rep = suboptimality_bound(merton_strategy(lam, p.p), constant_drift(lam), constant_drift(alt),
                              p, cfg.n_paths, cfg.seed, cfg.grid,
                              u_base=complete_market_value(lam, p),
                              u_alt=complete_market_value(alt, p), beta=cfg["beta"],
                              k_ceiling=cfg["k_ceiling"])
    write_csv(cfg.out / "bound.csv",
              ["quantity", "mean", "stderr", "n_paths"],
              [("bound", rep.bound.mean, rep.bound.stderr, rep.bound.n_paths),
               ("gap", rep.gap.mean, rep.gap.stderr, rep.gap.n_paths),
               ("quadratic_term", rep.quadratic.mean, rep.quadratic.stderr, rep.quadratic.n_paths),
               ("frechet_term", rep.frechet, 0.0, rep.bound.n_paths),
               ("c1", rep.c1, 0.0, rep.bound.n_paths),
               ("c2", rep.c2.mean, rep.c2.stderr, rep.c2.n_paths),
               ("k_max", rep.k, 0.0, rep.bound.n_paths),
               ("norm_beta", rep.norm.mean, rep.norm.stderr, rep.norm.n_paths)],
              _param_comment(cfg) + f" lam={lam!r} lam_alt={alt!r} applicable={rep.applicable} "
              f"holds={rep.holds()} label=estimated_bound")
    return ["bound.csv"]


HANDLERS = {"kernel-check": _cmd_kernel_check, "simulate": _cmd_simulate, "value": _cmd_value,
            "gateaux": _cmd_gateaux, "hurst": _cmd_hurst, "meanrev": _cmd_meanrev,
            "bound": _cmd_bound}


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _write_manifest(cfg, files, wall):
    with open(cfg.out / "manifest.txt", "w", newline="") as fh:
        for key in sorted(cfg.values):
            val = cfg.values[key]
            if isinstance(val, tuple):
                val = ",".join(repr(x) for x in val)
            fh.write(f"{key} = {val}\n")
        fh.write(f"code_version = {_version()}\n")
        fh.write(f"workers = {worker_count()}\n")
        fh.write(f"wall_time_s = {wall:.3f}\n")
        fh.write(f"outputs = {','.join(files)}\n")


def run(config_path, overrides: dict | None = None, command: str | None = None) -> int:
    """Run one experiment from a config file; returns the process exit code."""
    try:
        text = Path(config_path).read_text()
    except OSError as exc:
        print(f"io error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    if not any(ln.split("#", 1)[0].strip() for ln in text.splitlines()):
        print(USAGE, file=sys.stderr)
        return EXIT_CONFIG
    overrides = dict(overrides or {})
    try:
        if command is not None:
            overrides["command"] = command
        cfg = parse_config(text, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg.out.mkdir(parents=True, exist_ok=True)
        probe = cfg.out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        print(f"io error: output directory {cfg.out} is not writable: {exc}", file=sys.stderr)
        return EXIT_IO
    start = time.perf_counter()
    try:
        with np.errstate(over="ignore"):
            files = HANDLERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RiccatiBlowUpError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    _write_manifest(cfg, files, time.perf_counter() - start)
    for f in files:
        print(cfg.out / f)
    return EXIT_OK


# --------------------------------------------------------------------------
# Plot scripts
# --------------------------------------------------------------------------

def _read_header(path: Path) -> list:
    with open(path, newline="") as fh:
        for line in fh:
            if not line.startswith("#") and line.strip():
                return next(csv.reader([line]))
    return []


def emit_plotscript(report_csv, out=None) -> Path:
    """Write a gnuplot script for an expansion or mean-reversion report.

    Expansion reports plot residual against |eps| on log-log axes with a
    slope-1 reference; mean-reversion reports plot gap / eps^delta.
    """
    report_csv = Path(report_csv)
    cols = _read_header(report_csv)
    col = {name: k + 1 for k, name in enumerate(cols)}

    def need(*names):
        for n in names:
            if n not in col:
                raise ValueError(f"{report_csv.name}: missing column {n!r}")

    if "gap_scaled" in col or "gap_mean" in col:
        need("eps", "gap_scaled", "gap_scaled_stderr")
        ycol, ecol, ylabel = col["gap_scaled"], col["gap_scaled_stderr"], "gap / eps^delta"
        ref = ""
    else:
        need("eps", "residual", "residual_stderr")
        ycol, ecol, ylabel = col["residual"], col["residual_stderr"], "residual"
        ref = ", x title 'slope 1' with lines dt 2"
    x = col["eps"]
    out = report_csv.with_suffix(".gp") if out is None else Path(out)
    png = report_csv.with_suffix(".png").name
    script = "\n".join([
        "set datafile separator ','",
        "set terminal pngcairo size 800,600",
        f"set output '{png}'",
        "set logscale xy",
        "set xlabel '|eps|'",
        f"set ylabel '{ylabel}'",
        "set key top left autotitle columnhead",
        f"plot '{report_csv.name}' using (abs(${x})):(${ycol} > 0 ? ${ycol} : 1/0):(${ecol}) "
        f"with yerrorbars title '{ylabel}'{ref}",
        "",
    ])
    out.write_text(script)
    return out


USAGE = """usage: hurst-sense <command> --config <file> [--out DIR] [--paths N] [--seed S]

commands: kernel-check, simulate, value, gateaux, hurst, meanrev, bound
config:   flat 'key = value' lines, '#' comments; see README for the keys
          set HURST_SENSE_THREADS to cap worker threads (speed only)"""


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="hurst-sense", usage=USAGE.splitlines()[0][7:])
    ap.add_argument("command", nargs="?", choices=COMMANDS + ("plot",))
    ap.add_argument("--config", help="key = value config file")
    ap.add_argument("--out", help="output directory (overrides config)")
    ap.add_argument("--paths", type=int, help="number of Monte Carlo paths")
    ap.add_argument("--seed", type=int, help="random seed")
    ap.add_argument("--report", help="report CSV for the plot command")
    args = ap.parse_args(argv)
    if args.command == "plot":
        if not args.report:
            print("plot needs --report <csv>", file=sys.stderr)
            return EXIT_CONFIG
        try:
            print(emit_plotscript(args.report))
        except (ValueError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    if not args.config:
        print(USAGE, file=sys.stderr)
        return EXIT_CONFIG
    return run(args.config, {"out": args.out, "paths": args.paths, "seed": args.seed},
               args.command)


if __name__ == "__main__":
    sys.exit(main())
