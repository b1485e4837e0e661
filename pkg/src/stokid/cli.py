"""Command-line interface: simulate, fit, greedy, noise and msm.

Every command writes its outputs into ``--out-dir`` together with a
``manifest.json`` listing the command line, the configuration, the seed and
sha256 digests of all input and output files.

Exit codes: 0 success, 2 usage error, 3 invalid input or data, 4 simulation
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .basis import Dictionary, DictionaryError, builtin, parse_dictionary
from .free_energy import (DiffusionModel, assemble_energy_problem, fit_free_energy,
                          write_energy_csv)
from .kramers_moyal import (assemble_problem, bin_series, linear_increments,
                            quadratic_increments)
from .msm import (compare_stationary, discretize, histogram, timescale_table,
                  write_stationary_csv, write_timescales_csv)
from .search import default_samples, greedy_search, noise_experiment, reduced_reference
from .simulate import (SimConfig, SimulationError, constant, potential_by_name,
                       simulate_ito, simulate_overdamped, simulate_replicas)
from .ssr import CvConfig, expansion_from_json, fit, load_fit
from .trajectory import export_csv, load_trajectory, project, save_trajectory

FULL_STEPS = 10_000_000
DESK_STEPS = 1_000_000

EXIT_INPUT = 3
EXIT_SIMULATION = 4


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects inputs/outputs of one command and writes its manifest."""

    def __init__(self, args: argparse.Namespace, argv: list[str]):
        self.args = args
        self.argv = argv
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.inputs: list[Path] = []
        self.outputs: list[Path] = []
        self.start = time.perf_counter()

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.outputs.append(p)
        return p

    def read(self, name) -> Path:
        p = Path(name)
        if not p.exists():
            raise FileNotFoundError(f"input file not found: {p}")
        self.inputs.append(p)
        return p

    def manifest(self) -> Path:
        config = {k: v for k, v in vars(self.args).items() if k != "func"}
        doc = {
            "schema_version": 1,
            "version": __version__,
            "command": self.argv,
            "config": config,
            "seed": config.get("seed"),
            "inputs": {str(p): _sha256(p) for p in self.inputs},
            "outputs": {str(p): _sha256(p) for p in self.outputs},
            "duration_s": round(time.perf_counter() - self.start, 3),
        }
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(doc, indent=2, default=str) + "\n")
        return path


def load_dictionary(spec: str) -> Dictionary:
    """A builtin name or the path of a dictionary source file."""
    p = Path(spec)
    if p.is_file():
        return parse_dictionary(p.read_text(), p.stem)
    return builtin(spec)


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _range(text: str | None):
    if text is None:
        return None
    lo, hi = (float(v.replace("pi", repr(math.pi))) for v in text.split(","))
    return lo, hi


def _cv(args) -> CvConfig:
    return CvConfig(args.folds, args.reps, args.seed, args.score, args.aggregate, args.tau)


def _load_trajs(run: Run, paths, projection: str = "identity"):
    return [project(load_trajectory(run.read(p)), projection) for p in paths]


def cmd_simulate(args, run: Run) -> None:
    steps = args.steps or (FULL_STEPS if args.paper_scale else DESK_STEPS)
    init = None if args.initial is None else [float(v) for v in args.initial.split(",")]
    cfg = SimConfig(args.dt, steps, args.beta, args.gamma, args.seed, init, args.burn_in)
    if args.model:
        doc = load_fit(run.read(args.model))
        drift = expansion_from_json(doc)
        if doc.get("target") == "gradient":
            drift = type(drift)(drift.dictionary, -drift.coefficients)
        if args.diffusion_model:
            diff = expansion_from_json(load_fit(run.read(args.diffusion_model)))
        else:
            diff = constant(1.0 / args.gamma)
        period = (-math.pi, math.pi) if args.periodic else None
        trajs = [simulate_ito(drift, diff, SimConfig(args.dt, steps, args.beta, args.gamma,
                                                     args.seed + i, init, args.burn_in), period)
                 for i in range(args.n_reps)]
    else:
        pot = potential_by_name(args.potential)
        trajs = simulate_replicas(pot, cfg, args.n_reps) if args.n_reps > 1 else [simulate_overdamped(pot, cfg)]
    for i, t in enumerate(trajs):
        t = project(t, args.project)
        stem = args.name if args.n_reps == 1 else f"{args.name}_{i}"
        save_trajectory(t, run.path(f"{stem}.stkj"))
        if args.csv:
            export_csv(t, run.path(f"{stem}.csv"))
        print(f"wrote {stem}.stkj: {t.n_steps} steps, d={t.d}")


def cmd_fit(args, run: Run) -> None:
    trajs = _load_trajs(run, args.traj, args.project)
    d = load_dictionary(args.dict)
    cv = _cv(args)
    rng = _range(args.range)
    if args.target == "free-energy":
        if len(trajs) != 1:
            raise ValueError("free-energy fits take a single trajectory")
        if args.diffusion_fit:
            a = DiffusionModel(expansion_from_json(load_fit(run.read(args.diffusion_fit))), trajs[0].beta)
        else:
            a = DiffusionModel.constant(1.0 / trajs[0].gamma, trajs[0].beta)
        problem = assemble_energy_problem(trajs[0], d, a, args.bins, range=rng, weighting=args.weighting)
        model = fit_free_energy(problem, cv if args.sparse else None, trajs[0].beta)
        _write_json(run.path("energy.json"), model.to_json())
        lo, hi = problem.centers[0], problem.centers[-1]
        write_energy_csv(model, np.linspace(lo, hi, 400), run.path("energy_curve.csv"))
        print(f"free energy terms: {', '.join(model.active_labels())}")
        return
    if args.target in ("drift", "gradient"):
        series = linear_increments(trajs)
        if args.target == "gradient":
            series = series.scaled(-1.0, "gradient")
    else:
        series = quadratic_increments(trajs)
    binned = bin_series(series, args.bins, rng)
    binned.write_csv(run.path("binned.csv"))
    result = fit(assemble_problem(d, binned, args.weighting), cv)
    _write_json(run.path("fit.json"), result.to_json())
    result.write_delta_csv(run.path("delta.csv"))
    result.write_progress_csv(run.path("progress.csv"))
    result.write_curve_csv(run.path("curve.csv"))
    terms = ", ".join(f"{v:+.4g} {n}" for n, v in
                      zip(result.active_labels(), result.coefficients[list(result.active)]))
    print(f"selected n={result.n_selected}: {terms}")


def _sizes(text: str, M: int) -> range:
    if ":" in text:
        lo, hi = text.split(":")
        return range(int(lo), min(int(hi), M) + 1)
    return range(int(text), int(text) + 1)


def cmd_greedy(args, run: Run) -> None:
    trajs = _load_trajs(run, args.traj)
    omega = load_dictionary(args.omega)
    if args.reduce:
        omega = reduced_reference(omega, args.reduce, args.seed)
    series = linear_increments(trajs).scaled(-1.0, "gradient")
    binned = bin_series(series, args.bins, _range(args.range))
    cap = 100_000 if args.paper_scale else args.cap
    if args.samples == "auto":
        samples = lambda M, n: default_samples(M, n, cap)
    else:
        samples = int(args.samples)
    result = greedy_search(omega, binned, _sizes(args.sizes, omega.K), samples, _cv(args),
                           weighting=args.weighting)
    result.write_csv(run.path("greedy_records.csv"))
    result.write_minimum_csv(run.path("greedy_minimum.csv"))
    summary = {
        "dictionary": omega.name,
        "labels": list(result.labels),
        "samples": result.samples,
        "minimum": {str(n): {"delta": result.best(n).delta,
                             "subset": [result.labels[i] for i in result.best(n).subset]}
                    for n in result.minimum_curve()},
    }
    _write_json(run.path("greedy.json"), summary)
    for n, dlt in result.minimum_curve().items():
        b = result.best(n)
        print(f"n={n:3d} min delta={dlt:.4g} analytic={int(b.contains_analytic)}")


def cmd_noise(args, run: Run) -> None:
    trajs = _load_trajs(run, args.traj)
    binned = bin_series(linear_increments(trajs).scaled(-1.0, "gradient"), args.bins, _range(args.range))
    pot = potential_by_name("double-well")
    exact = lambda x: pot.gradient(np.asarray(x).reshape(-1, 1))[:, 0]
    report = noise_experiment(binned, exact, load_dictionary(args.omega), args.dicts, args.f,
                              args.dict_size, _cv(args), args.seed, weighting=args.weighting)
    _write_json(run.path("noise.json"), report.to_json())
    report.write_csv(run.path("noise.csv"))
    for f in report.f_values:
        print(f"f={f:g} success={report.success[f]:.0f}%")


def cmd_msm(args, run: Run) -> None:
    ta, tb = (load_trajectory(run.read(p)) for p in (args.traj_a, args.traj_b))
    if ta.dt != tb.dt:
        raise ValueError("trajectories have different time steps")
    rng = _range(args.range)
    la, lb = discretize(ta, args.states, rng), discretize(tb, args.states, rng)
    lags = [int(v) for v in args.lags.split(",")]
    tables = {"a": timescale_table(la, lags, args.timescales, ta.dt, args.states),
              "b": timescale_table(lb, lags, args.timescales, tb.dt, args.states)}
    write_timescales_csv(run.path("timescales.csv"), tables)
    ha, hb = histogram(la, args.states), histogram(lb, args.states)
    lo, hi = rng if rng else ((-math.pi, math.pi) if ta.periodic else (ta.states.min(), ta.states.max()))
    edges = np.linspace(lo, hi, args.states + 1)
    write_stationary_csv(run.path("stationary.csv"), 0.5 * (edges[1:] + edges[:-1]), ha, hb)
    _, dev = compare_stationary(ha, hb)
    rel = {lag: (np.abs(tables["b"][lag] - tables["a"][lag]) / tables["a"][lag]).tolist() for lag in lags}
    _write_json(run.path("msm.json"), {"lags": lags, "max_stationary_deviation": dev,
                                       "timescales_a": {str(k): v.tolist() for k, v in tables["a"].items()},
                                       "timescales_b": {str(k): v.tolist() for k, v in tables["b"].items()},
                                       "relative_difference": {str(k): v for k, v in rel.items()}})
    for lag in lags:
        print(f"lag={lag} max rel. timescale diff={np.nanmax(rel[lag]):.3f}")
    print(f"max stationary deviation={dev:.4f}")


def _add_cv(p: argparse.ArgumentParser, folds: int = 5) -> None:
    p.add_argument("--folds", type=int, default=folds)
    p.add_argument("--reps", type=int, default=50, help="independent CV partitions")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--score", choices=("mse", "rmse"), default="mse")
    p.add_argument("--aggregate", choices=("median", "mean"), default="median")
    p.add_argument("--tau", type=float, default=2.0, help="minimum score ratio of a transition")
    p.add_argument("--weighting", choices=("sqrt", "w", "none"), default="sqrt")
    p.add_argument("--bins", type=int, default=90)
    p.add_argument("--range", help="binning range 'lo,hi' (accepts 'pi')")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stokid", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--out-dir", default=".", help="directory for outputs and manifest")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a potential or a learned 1D model")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--potential", choices=("double-well", "lemon-slice"))
    src.add_argument("--model", help="drift fit JSON for learned dynamics")
    p.add_argument("--diffusion-model", help="diffusion fit JSON (default: constant 1/gamma)")
    p.add_argument("--periodic", action="store_true", help="wrap learned dynamics into [-pi, pi)")
    p.add_argument("--steps", type=int)
    p.add_argument("--paper-scale", action="store_true", help=f"default to {FULL_STEPS:.0e} steps")
    p.add_argument("--dt", type=float, default=5e-3)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", dest="n_reps", type=int, default=1)
    p.add_argument("--burn-in", type=int, default=10_000)
    p.add_argument("--initial", help="comma-separated initial state")
    p.add_argument("--project", choices=("identity", "polar-angle"), default="identity")
    p.add_argument("--name", default="traj")
    p.add_argument("--csv", action="store_true", help="also export CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="SSR + CV fit of drift, diffusion or free energy")
    p.add_argument("--traj", nargs="+", required=True)
    p.add_argument("--dict", default="theta", help="builtin name or dictionary file")
    p.add_argument("--target", choices=("drift", "gradient", "diffusion", "free-energy"),
                   default="drift")
    p.add_argument("--project", choices=("identity", "polar-angle"), default="identity")
    p.add_argument("--diffusion-fit", help="diffusion fit JSON for free-energy targets")
    p.add_argument("--sparse", action="store_true", help="sparsify free-energy fits by SSR + CV")
    _add_cv(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("greedy", help="score sub-dictionaries of a reference set")
    p.add_argument("--traj", nargs="+", required=True)
    p.add_argument("--omega", default="omega")
    p.add_argument("--reduce", type=int, default=30, help="reduced reference size (0 keeps all)")
    p.add_argument("--sizes", default="1:8", help="'n' or 'lo:hi'")
    p.add_argument("--samples", default="auto", help="'auto' or a fixed count per size")
    p.add_argument("--cap", type=int, default=2000, help="sample cap above size 4 for 'auto'")
    p.add_argument("--paper-scale", action="store_true", help="cap of 1e5 samples")
    _add_cv(p)
    p.set_defaults(func=cmd_greedy)

    p = sub.add_parser("noise", help="sampling-noise robustness experiment")
    p.add_argument("--traj", nargs="+", required=True)
    p.add_argument("--omega", default="omega")
    p.add_argument("--f", type=float, nargs="+", default=[1.0, 1e-3, 1e-6, 1e-9, 0.0])
    p.add_argument("--dicts", type=int, default=20)
    p.add_argument("--dict-size", type=int, default=50)
    _add_cv(p)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("msm", help="compare MSM timescales and stationary mass")
    p.add_argument("--traj-a", required=True)
    p.add_argument("--traj-b", required=True)
    p.add_argument("--states", type=int, default=63)
    p.add_argument("--lags", default="1,2,5,10,20,50,100")
    p.add_argument("--timescales", type=int, default=6)
    p.add_argument("--range", help="state range 'lo,hi' (accepts 'pi')")
    p.set_defaults(func=cmd_msm)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    run = Run(args, argv)
    try:
        args.func(args, run)
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    except (ValueError, KeyError, DictionaryError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    run.manifest()
    return 0


if __name__ == "__main__":
    sys.exit(main())
