"""Command line runner.

Usage::

    bergman-lab kernel --config run.ini --out runs/
    bergman-lab ik --k 2 --mc 100000

Exit codes: 0 success, 2 a verdict failed (a convergence or bound check),
1 operational error (bad config, numerical failure, I/O).
"""

from __future__ import annotations

import argparse
import ast
import configparser
import difflib
import hashlib
import io as _io
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import convergence_suite, kernel_ratio_certificate
from .bergman import bergman_kernel, bfs2_residual, fubini_study_current, gram_matrix
from .geometry import STENCIL_TOL, Chart, default_family, measure_distance, pairing_table
from .io import sha256_file, write_json, write_kernel_csv, write_measure_csv, write_zeros_csv
from .random_zeros import EnsembleSpec, empirical_measure, expected_log_sphere, zeros_from_basis
from .weights import ScheduleError, schedule_from_spec

__all__ = ["RunConfig", "ConfigError", "parse_config", "run", "main", "SUBCOMMANDS", "OUT_ENV"]

SUBCOMMANDS = ("gram", "kernel", "fscurrent", "zeros", "ik", "converge", "certify")
OUT_ENV = "BERGMAN_LAB_OUT"

EXIT_OK, EXIT_ERROR, EXIT_VERDICT = 0, 1, 2


class ConfigError(ValueError):
    pass


def _int_list(v):
    v = v.strip()
    if v.startswith("["):
        out = ast.literal_eval(v)
    else:
        out = [x for x in v.replace(",", " ").split()]
    return tuple(int(x) for x in out)


# section -> key -> (field name, parser)
_KEYS = {
    "run": {
        "schedule": ("schedule", str),
        "p": ("p", _int_list),
        "seed": ("seed", int),
        "threads": ("threads", int),
        "out": ("out", str),
        "family": ("family", str),
        "reference_volume": ("reference_volume", str),
    },
    "grid": {
        "truncation_radius": ("truncation_radius", float),
        "grid_radial": ("grid_radial", int),
        "grid_angular": ("grid_angular", int),
    },
    "ensemble": {
        "kind": ("ensemble", str),
        "samples": ("samples", int),
    },
    "ik": {
        "k": ("k", _int_list),
        "mc_samples": ("mc", int),
    },
    "thresholds": {
        "l1_log_kernel": ("th_L1_log_kernel", float),
        "fs_gap": ("th_fs_gap", float),
        "zero_gap": ("th_zero_gap", float),
        "log_dim_ratio": ("th_log_dim_ratio", float),
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; ``to_text`` is the canonical serialization."""

    schedule: str = "power(fs)"
    p: tuple = (8, 16, 32)
    seed: int = 0
    threads: int = 1
    out: str = ""
    family: str = "default"
    reference_volume: str = "fs"
    truncation_radius: float = 20.0
    grid_radial: int = 512
    grid_angular: int = 256
    ensemble: str = "sphere"
    samples: int = 200
    k: tuple = (2, 5, 10, 100)
    mc: int = 100_000
    th_L1_log_kernel: float = None
    th_fs_gap: float = None
    th_zero_gap: float = None
    th_log_dim_ratio: float = None

    @property
    def oracle_free(self):
        return self.reference_volume != "fs"

    def chart(self):
        return Chart(truncation_radius=self.truncation_radius, grid_radial=self.grid_radial,
                     grid_angular=self.grid_angular)

    def schedule_obj(self):
        return schedule_from_spec(self.schedule)

    def ensemble_spec(self):
        return EnsembleSpec(self.ensemble, self.seed, self.samples)

    def thresholds(self):
        out = {}
        for name in ("L1_log_kernel", "fs_gap", "zero_gap", "log_dim_ratio"):
            v = getattr(self, "th_" + name)
            if v is not None:
                out[name] = v
        return out

    def to_text(self):
        """Canonical sectioned text (``out`` excluded: it does not affect results)."""
        cp = configparser.ConfigParser(interpolation=None)
        for sec, keys in _KEYS.items():
            items = {}
            for key, (name, _) in keys.items():
                if name == "out":
                    continue
                v = getattr(self, name)
                if v is None:
                    continue
                if isinstance(v, tuple):
                    v = "[" + ", ".join(str(x) for x in v) + "]"
                elif isinstance(v, float):
                    v = repr(v)
                items[key] = str(v)
            if items:
                cp[sec] = items
        buf = _io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @property
    def hash(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def _nearest(key, choices):
    near = difflib.get_close_matches(key, list(choices), n=1, cutoff=0.5)
    return f"; nearest valid key: {near[0]!r}" if near else ""


def parse_config(text, **overrides):
    """Parse sectioned ``key = value`` text into a validated :class:`RunConfig`.

    Keys before any section header belong to ``[run]``.
    """
    body = text
    first = next((ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith(("#", ";"))), "")
    if not first.startswith("["):
        body = "[run]\n" + text
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(body)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values = {}
    for sec in cp.sections():
        if sec not in _KEYS:
            raise ConfigError(f"unknown section [{sec}]{_nearest(sec, _KEYS)}")
        for key, raw in cp[sec].items():
            if key not in _KEYS[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]{_nearest(key, _KEYS[sec])}")
            name, conv = _KEYS[sec][key]
            try:
                values[name] = conv(raw)
            except (ValueError, SyntaxError) as exc:
                raise ConfigError(f"bad value for {sec}.{key}: {raw!r} ({exc})") from None
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = RunConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg):
    if not cfg.p or any(p < 0 for p in cfg.p):
        raise ConfigError("p must be a nonempty list of nonnegative integers")
    if list(cfg.p) != sorted(set(cfg.p)):
        raise ConfigError("p values must be strictly increasing")
    if cfg.threads < 1:
        raise ConfigError("threads must be >= 1")
    if cfg.family != "default":
        raise ConfigError(f"unknown test-function family {cfg.family!r}; only 'default' is built in")
    try:
        cfg.chart()
        cfg.ensemble_spec()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        cfg.schedule_obj()
    except ScheduleError as exc:
        raise ConfigError(f"schedule {cfg.schedule!r} rejected: {exc}") from None
    if cfg.oracle_free:
        raise ConfigError("only the Fubini-Study reference volume is implemented (reference_volume = fs)")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

class _Run:
    def __init__(self, cfg, outdir, emit_csv):
        self.cfg = cfg
        self.out = outdir
        self.csv = emit_csv
        self.files = []
        self.stages = {}
        self.lines = []

    def path(self, name):
        p = self.out / name
        self.files.append(p)
        return p

    def stage(self, name):
        run = self

        class _T:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                run.stages[name] = time.perf_counter() - self.t

        return _T()

    def say(self, line):
        self.lines.append(line)
        print(line)


def _table(rows, cols):
    """Aligned-column text."""
    cells = [[str(c) for c in cols]] + [[_short(r[c]) for c in cols] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
    return "\n".join("  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells)


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _write_csv(path, cols, rows):
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(repr(float(r[c])) if isinstance(r[c], (float, np.floating)) else str(r[c])
                              for c in cols) + "\n")


def _cmd_gram(run):
    cfg = run.cfg
    sched = cfg.schedule_obj()
    chart = cfg.chart()
    out = []
    for p in cfg.p:
        with run.stage(f"gram p={p}"):
            b = gram_matrix(sched, p, chart)
        out.append({"p": p, "dim": b.dim, "exponents": b.exponents.tolist(), "norms": b.norms.tolist(),
                    "condition_estimate": b.condition_estimate, "method": b.method,
                    "factorization": b.factorization, "excluded_monomials": list(b.excluded)})
    write_json(run.path("gram.json"), {"schedule": sched.describe(), "rows": out})
    if run.csv:
        rows = [{"p": r["p"], "k": k, "norm": n} for r in out for k, n in zip(r["exponents"], r["norms"])]
        _write_csv(run.path("gram.csv"), ["p", "k", "norm"], rows)
    run.say(_table(out, ["p", "dim", "condition_estimate", "method"]))
    return True


def _cmd_kernel(run):
    cfg = run.cfg
    sched = cfg.schedule_obj()
    chart = cfg.chart()
    ok = True
    rows = []
    for p in cfg.p:
        with run.stage(f"kernel p={p}"):
            b = gram_matrix(sched, p, chart)
            k = bergman_kernel(b, chart=chart)
        _, _, summ = write_kernel_csv(run.path(f"kernel_p{p}.csv"), k, b, {"config_hash": cfg.hash})
        run.files.append(run.out / f"kernel_p{p}.json")
        ok &= summ["trace_check"]
        rows.append({k_: summ[k_] for k_ in ("p", "d_p", "A_p", "trace", "trace_check", "P_min", "P_max")})
    run.say(_table(rows, ["p", "d_p", "A_p", "trace", "trace_check", "P_min", "P_max"]))
    return ok


def _cmd_fscurrent(run):
    cfg = run.cfg
    sched = cfg.schedule_obj()
    chart = cfg.chart()
    rows = []
    ok = True
    for p in cfg.p:
        with run.stage(f"fscurrent p={p}"):
            b = gram_matrix(sched, p, chart)
            g = fubini_study_current(b, chart=chart)
            res = bfs2_residual(b, chart=chart)
            A = float(b.weight.growth_order)
            target = sched.limit_measure(chart)
            dist = measure_distance(g.scaled(1.0 / A), target) if A > 0 else float("nan")
        write_measure_csv(run.path(f"fscurrent_p{p}.csv"), g,
                          {"p": p, "A_p": A, "bfs2_residual": res, "config_hash": cfg.hash})
        ok &= res < 5 * STENCIL_TOL
        rows.append({"p": p, "A_p": A, "total": g.total, "infinity_mass": g.infinity_mass,
                     "distance_to_limit": dist, "bfs2_residual": res})
    write_json(run.path("fscurrent.json"), {"schedule": sched.describe(), "rows": rows})
    run.say(_table(rows, ["p", "A_p", "total", "infinity_mass", "distance_to_limit", "bfs2_residual"]))
    return ok


def _cmd_zeros(run):
    cfg = run.cfg
    sched = cfg.schedule_obj()
    chart = cfg.chart()
    fam = default_family()
    rows = []
    ok = True
    target = sched.limit_measure(chart)
    for p in cfg.p:
        with run.stage(f"zeros p={p}"):
            b = gram_matrix(sched, p, chart)
            samples = zeros_from_basis(b, cfg.ensemble_spec(), threads=cfg.threads)
            emp = empirical_measure(samples, chart=chart)
        conserved = all(s.count == p for s in samples)
        ok &= conserved
        e_tab = pairing_table(emp, fam)
        t_tab = pairing_table(target, fam)
        disc = [{"test_function": name, "empirical": e_tab[name], "target": t_tab[name],
                 "gap": abs(e_tab[name] - t_tab[name])} for name in e_tab]
        dist = max(d["gap"] for d in disc)
        write_zeros_csv(run.path(f"zeros_p{p}.csv"), samples,
                        {"p": p, "seed": cfg.seed, "ensemble": cfg.ensemble, "discrepancy_table": disc,
                         "distance_to_limit": dist, "count_conserved": conserved, "config_hash": cfg.hash})
        run.files.append(run.out / f"zeros_p{p}.json")
        rows.append({"p": p, "M": len(samples), "infinity_fraction": emp.infinity_mass,
                     "distance_to_limit": dist, "count_conserved": conserved})
    run.say(_table(rows, ["p", "M", "infinity_fraction", "distance_to_limit", "count_conserved"]))
    return ok


def _cmd_ik(run):
    cfg = run.cfg
    rows = []
    ok = True
    for k in cfg.k:
        with run.stage(f"ik k={k}"):
            est, se, exact = expected_log_sphere(k, cfg.mc, seed=cfg.seed)
        z = (est - exact) / se if se > 0 else 0.0
        env = 2.0 * math.log(k) + 2.0
        good = abs(z) <= 3.0 and exact <= env
        ok &= good
        rows.append({"k": k, "estimate": est, "std_error": se, "exact": exact, "z_score": z,
                     "envelope": env, "pass": good})
    write_json(run.path("ik.json"), {"mc_samples": cfg.mc, "seed": cfg.seed, "rows": rows})
    if run.csv:
        _write_csv(run.path("ik.csv"), ["k", "estimate", "std_error", "exact", "z_score"], rows)
    run.say(_table(rows, ["k", "estimate", "std_error", "exact", "z_score", "pass"]))
    return ok


def _cmd_converge(run):
    cfg = run.cfg
    sched = cfg.schedule_obj()
    with run.stage("converge"):
        tab = convergence_suite(sched, cfg.p, cfg.ensemble_spec(), cfg.chart(), thresholds=cfg.thresholds(),
                                threads=cfg.threads)
    d = tab.to_dict()
    write_json(run.path("converge.json"), d)
    cols = ["p", "d_p", "A_p", "L1_log_kernel", "fs_gap", "zero_gap", "log_dim_ratio"]
    _write_csv(run.path("converge.csv"), cols, d["rows"])
    run.say(_table(d["rows"], cols))
    run.say(f"sum 1/A_p^2 = {tab.inverse_square_sum:.6g}")
    for f in tab.failures():
        run.say(f"FAIL {f}")
    return tab.verdict


def _cmd_certify(run):
    cfg = run.cfg
    sched = cfg.schedule_obj()
    with run.stage("certify"):
        rep = kernel_ratio_certificate(sched, [p for p in cfg.p if p > 0] or cfg.p, cfg.chart())
    d = rep.to_dict()
    write_json(run.path("certify.json"), d)
    cols = ["p", "epsilon_p", "sup_ratio_deviation", "envelope"]
    if run.csv:
        _write_csv(run.path("certify.csv"), cols, d["rows"])
    run.say(_table(d["rows"], cols + ["K3", "lower", "status"]))
    run.say(f"C = {rep.C:.6g} (volume {rep.C_volume:.6g}, remainder {rep.C_remainder:.6g}); C_fit = {rep.C_fit:.6g}")
    run.say(f"decreasing={rep.decreasing} trend_bounded={rep.trend_bounded} "
            f"sandwich={rep.sandwich_ok} fitted={rep.fitted_ok}")
    return rep.verdict


_COMMANDS = {
    "gram": _cmd_gram,
    "kernel": _cmd_kernel,
    "fscurrent": _cmd_fscurrent,
    "zeros": _cmd_zeros,
    "ik": _cmd_ik,
    "converge": _cmd_converge,
    "certify": _cmd_certify,
}


def run(subcommand, cfg, out=None, emit_csv=False):
    """Execute one subcommand; returns ``(exit_code, outdir)``.

    Outputs land in ``<out>/<subcommand>-<config hash prefix>/`` together
    with ``manifest.json``.
    """
    if subcommand not in _COMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}{_nearest(subcommand, _COMMANDS)}")
    root = Path(out or cfg.out or os.environ.get(OUT_ENV, "runs"))
    outdir = root / f"{subcommand}-{cfg.hash[:12]}"
    outdir.mkdir(parents=True, exist_ok=True)
    r = _Run(cfg, outdir, emit_csv)
    t0 = time.perf_counter()
    ok = _COMMANDS[subcommand](r)
    cfg_path = r.path("config.ini")
    cfg_path.write_text(cfg.to_text())
    manifest = {
        "subcommand": subcommand,
        "config_hash": cfg.hash,
        "artifact_version": __version__,
        "threads": cfg.threads,
        "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "wall_time_s": {"total": time.perf_counter() - t0, **r.stages},
        "files": [{"name": p.name, "sha256": sha256_file(p)} for p in r.files],
        "verdict": "pass" if ok else "fail",
    }
    write_json(outdir / "manifest.json", manifest)
    return (EXIT_OK if ok else EXIT_VERDICT), outdir


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_ERROR)


def build_parser():
    ap = _Parser(prog="bergman-lab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="sectioned key = value config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)
        sp.add_argument("--csv", action="store_true", help="emit plot-ready CSV columns")
        sp.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./runs)")
        sp.add_argument("--schedule", help="schedule record, e.g. 'power(fs)'")
        sp.add_argument("--p", type=_int_list, help="degrees, e.g. '8,16,32'")
        sp.add_argument("--samples", type=int, help="ensemble size")
        if name == "ik":
            sp.add_argument("--k", type=_int_list)
            sp.add_argument("--mc", type=int)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text() if args.config else ""
        over = {"seed": args.seed, "threads": args.threads, "schedule": args.schedule, "p": args.p,
                "samples": args.samples, "k": getattr(args, "k", None), "mc": getattr(args, "mc", None)}
        cfg = parse_config(text, **over)
        code, outdir = run(args.command, cfg, out=args.out, emit_csv=args.csv)
    except Exception as exc:  # operational failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if code == EXIT_VERDICT:
        print(f"verdict: FAIL (outputs in {outdir})", file=sys.stderr)
    else:
        print(f"outputs in {outdir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
