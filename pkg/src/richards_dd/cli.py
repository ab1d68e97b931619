"""Command line entry point: ``richards-dd <subcommand> [config] --out DIR``.

Exit codes: 0 success, 1 solver non-convergence (or failed certification),
2 configuration/usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, OutputOptions, parse_config
from .constitutive import (TableBuildError, certify_hypotheses, conductivity_K, kbar1_z, kbar_z,
                           theta_extended, theta_prime)
from .lsolver import LinearSolverError
from .timestepper import Stepper
from .verify import (check_bounds, eps_convergence_study, lscheme_sweep, mms_linear_sanity,
                     solve_reference, tau_convergence_study)

log = logging.getLogger("richards_dd")

EXIT_OK, EXIT_NONCONVERGED, EXIT_CONFIG = 0, 1, 2


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def emit_csv(header, rows, path) -> Path:
    """Write ``header`` and ``rows``; floats get 17 significant digits, ``\\n`` line ends."""
    path = Path(path)
    header = list(header)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                row = list(row)
                if len(row) != len(header):
                    raise ValueError(f"{path}: row has {len(row)} columns, header has {len(header)}")
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _versions() -> dict:
    out = {"python": platform.python_version(), "richards_dd": __version__}
    for pkg in ("numpy", "scipy"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


class _Run:
    """Collects artifacts and timings for the manifest."""

    def __init__(self, args, config_text):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.argv = list(args.argv)
        self.config_text = config_text
        self.files: list[str] = []
        self.timings: dict[str, float] = {}
        self.extra: dict = {}

    def csv(self, name, header, rows):
        emit_csv(header, rows, self.out / name)
        self.files.append(name)

    def timed(self, label, fn, *a, **kw):
        t0 = time.perf_counter()
        res = fn(*a, **kw)
        self.timings[label] = time.perf_counter() - t0
        return res

    def manifest(self, command, status):
        text = self.config_text or ""
        data = {
            "command": command,
            "argv": self.argv,
            "exit_code": status,
            "config_sha256": hashlib.sha256(text.encode()).hexdigest() if self.config_text else None,
            "config": self.config_text,
            "versions": _versions(),
            "timings_s": self.timings,
            "files": sorted(self.files),
            **self.extra,
        }
        (self.out / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _load(args, require_time=True):
    text = Path(args.config).read_text()
    scenario, output = parse_config(text, require_time=require_time)
    return text, scenario, output


# ----------------------------------------------------------------- subcommands

def cmd_run(args, run: _Run, scenario, output: OutputOptions) -> int:
    st = Stepper(scenario)
    traj = run.timed("run", st.run)
    rows = [(0, 0.0, float(traj.states[0].min()), float(traj.states[0].max()),
             float(traj.mass @ st.model.theta(traj.states[0])), 0.0, 0)]
    for n, d in enumerate(traj.diagnostics, start=1):
        rows.append((n, traj.times[n], d["min_u"], d["max_u"], d["theta_mass"], d["balance_residual"],
                     d["lscheme_iters"]))
    run.csv("trajectory_summary.csv",
            ["step", "t", "min_u", "max_u", "theta_mass", "balance_residual", "lscheme_iters"], rows)
    it_rows = [(n, i, h.increment_norms[i - 1], h.weighted_seminorms[i - 1], h.cg_iters[i - 1])
               for n, h in enumerate(traj.histories, start=1) for i in range(1, h.n_iters + 1)]
    run.csv("iterations.csv", ["step", "iter", "increment_norm", "weighted_seminorm", "cg_iters"], it_rows)

    lower, upper = 0.0, st.model.u_star
    if upper is None:
        arr = traj.as_array()
        lower, upper = float(arr[0].min()), float(arr[0].max())
    rep = check_bounds(traj, lower, upper, args.bounds_tol)
    run.csv("bounds_report.csv",
            ["step", "min_u", "max_u", "lower", "upper", "violation", "passed"],
            [(n, lo, hi, lower, upper, max(0.0, lower - lo, hi - upper),
              max(0.0, lower - lo, hi - upper) <= rep.tol)
             for n, (lo, hi) in enumerate(zip(rep.step_min, rep.step_max))])
    if output.fields:
        theta_of = st.model.theta
        for n in range(0, len(traj.states), output.field_every):
            u = traj.states[n]
            run.csv(f"fields_{n}.csv", ["node", "x", "z", "u", "theta"],
                    zip(range(u.size), st.mesh.x, st.mesh.z, u, theta_of(u)))
    run.extra["bounds_passed"] = rep.passed
    run.extra["worst_bound_violation"] = rep.worst_violation
    return EXIT_OK if traj.converged else EXIT_NONCONVERGED


def cmd_sweep_lscheme(args, run: _Run, scenario, output) -> int:
    st = Stepper(scenario)
    times = np.linspace(0.0, scenario.T, scenario.N + 1)
    k = min(max(args.step, 1), scenario.N)
    u = st.initial_state()
    t0 = time.perf_counter()
    for n in range(1, k):
        u, _, _ = st.step(u, times[n - 1], times[n])
    ref, ref_hist, _ = solve_reference(st, u, times[k - 1], times[k], scenario.solver)
    L_theta = st.model.L_theta
    Ls = [f * L_theta for f in args.L_factors]
    res = lscheme_sweep(st, u, times[k - 1], times[k], Ls, scenario.solver, reference=ref)
    run.timings["sweep"] = time.perf_counter() - t0
    run.csv("lscheme_rates.csv",
            ["L", "L_over_L_theta", "n_iters", "converged", "final_error", "max_ratio",
             "geometric_mean_ratio", "monotone_excess"],
            [(L, L / L_theta, h.n_iters, h.converged, r.errors[-1], r.max_ratio, r.geometric_mean_ratio,
              r.monotone_excess) for L, h, r in res])
    run.csv("lscheme_errors.csv", ["L", "iter", "error"],
            [(L, i, e) for L, _, r in res for i, e in enumerate(r.errors)])
    run.extra.update(step=k, reference_iters=ref_hist.n_iters, reference_converged=ref_hist.converged)
    ok = ref_hist.converged and all(h.converged for _, h, _ in res)
    return EXIT_OK if ok else EXIT_NONCONVERGED


def cmd_sweep_tau(args, run: _Run, scenario, output) -> int:
    if args.taus < 1:
        raise ConfigError("--taus must be >= 1")
    tau0 = scenario.T / scenario.N
    taus = [tau0 * 2.0**-k for k in range(args.taus)]
    table = run.timed("study", tau_convergence_study, scenario, taus)
    run.csv("tau_study.csv", ["tau", "N", "distance", "order"],
            [(tau, N, d, o) for (tau, d, o), N in zip(table.rows(), table.extra["N"])])
    run.extra.update(N_ref=table.extra["N_ref"], strictly_decreasing=table.strictly_decreasing)
    return EXIT_OK if all(table.extra["converged"]) else EXIT_NONCONVERGED


def cmd_sweep_eps(args, run: _Run, scenario, output) -> int:
    table = run.timed("study", eps_convergence_study, scenario, args.eps)
    run.csv("eps_study.csv", ["epsilon", "tau", "distance", "order"],
            [(e, table.extra["tau"], d, o) for e, d, o in table.rows()])
    d = table.distances
    run.extra.update(strictly_decreasing=table.strictly_decreasing,
                     final_over_initial=d[-1] / d[0] if d[0] > 0 else float("nan"))
    return EXIT_OK if all(table.extra["converged"]) else EXIT_NONCONVERGED


def cmd_mms(args, run: _Run, scenario, output) -> int:
    taus = [args.T / args.N0 * 2.0**-k for k in range(args.levels)]
    table = run.timed("study", mms_linear_sanity, args.n_cells, taus, args.T)
    run.csv("mms_study.csv", ["tau", "error", "order"], list(table.rows()))
    return EXIT_OK


def cmd_certify(args, run: _Run, scenario, output) -> int:
    if scenario.soil is None:
        raise ConfigError("certify needs a [soil] section with the van Genuchten-Mualem parameters")
    model = run.timed("table", scenario.build_model)
    rep = run.timed("certify", certify_hypotheses, scenario.soil, model.table, args.probes, args.seed)
    rows = [("u_star", model.u_star, True), ("alpha", model.table.alpha, True),
            ("C_holder", model.table.C_holder, True), ("delta_holder", model.table.delta_holder, True)]
    rows += list(rep.rows())
    run.csv("certification.csv", ["check", "value", "passed"], rows)
    run.extra["certified"] = rep.passed
    return EXIT_OK if rep.passed else EXIT_NONCONVERGED


def cmd_plot_constitutive(args, run: _Run, scenario, output) -> int:
    if scenario.soil is None:
        raise ConfigError("plot-constitutive needs a [soil] section")
    model = scenario.build_model()
    us = model.u_star
    eta = np.linspace(args.eta_min * us, args.eta_max * us, args.samples)
    p, tb = scenario.soil, model.table
    cols = (eta, theta_extended(eta, tb), theta_prime(eta, tb), conductivity_K(eta, p, tb),
            kbar_z(eta, p, tb), kbar1_z(eta, p, tb))
    run.csv("constitutive.csv", ["eta", "theta", "theta_prime", "K", "Kbar_z", "Kbar1_z"], zip(*cols))
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep-lscheme": cmd_sweep_lscheme,
    "sweep-tau": cmd_sweep_tau,
    "sweep-eps": cmd_sweep_eps,
    "mms": cmd_mms,
    "certify": cmd_certify,
    "plot-constitutive": cmd_plot_constitutive,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="richards-dd", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, metavar="subcommand")

    def add(name, help, config=True):
        p = sub.add_parser(name, help=help)
        if config:
            p.add_argument("config", help="sectioned key = value configuration file")
        p.add_argument("--out", default="results", help="output directory (default: results)")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = add("run", "time-step a scenario")
    p.add_argument("--bounds-tol", type=float, default=1e-8)
    p = add("sweep-lscheme", "contraction of the L-scheme for several L at one step")
    p.add_argument("--step", type=int, default=1, help="time step to examine (1-based)")
    p.add_argument("--L-factors", type=float, nargs="+", default=[0.55, 0.75, 1.0, 2.0, 4.0], dest="L_factors",
                   help="L values as multiples of L_theta")
    p = add("sweep-tau", "self-convergence in tau along a halving sequence")
    p.add_argument("--taus", type=int, default=5, help="number of tau values, starting at T/N")
    p = add("sweep-eps", "distance between regularised and degenerate runs")
    p.add_argument("--eps", type=float, nargs="+", default=[1e-1, 1e-2, 1e-3, 1e-4])
    p = add("mms", "temporal order on a linear manufactured solution", config=False)
    p.add_argument("--n-cells", type=int, default=400, dest="n_cells")
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--N0", type=int, default=10)
    p.add_argument("--T", type=float, default=1.0)
    p = add("certify", "sample the constitutive hypotheses")
    p.add_argument("--probes", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p = add("plot-constitutive", "tabulate theta, theta', K, Kbar for plotting")
    p.add_argument("--samples", type=int, default=1001)
    p.add_argument("--eta-min", type=float, default=-0.5, dest="eta_min", help="in units of u*")
    p.add_argument("--eta-max", type=float, default=2.5, dest="eta_max", help="in units of u*")
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if hasattr(args, "config"):
            require_time = args.command not in ("certify", "plot-constitutive")
            text, scenario, output = _load(args, require_time)
        else:
            text, scenario, output = None, None, OutputOptions()
        run = _Run(args, text)
        t0 = time.perf_counter()
        status = COMMANDS[args.command](args, run, scenario, output)
    except (ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"richards-dd: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TableBuildError) as exc:
        print(f"richards-dd: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LinearSolverError as exc:
        print(f"richards-dd: linear solver failed: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    run.timings["total"] = time.perf_counter() - t0
    run.manifest(args.command, status)
    if status == EXIT_NONCONVERGED:
        print(f"richards-dd: {args.command} finished without convergence/certification", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
