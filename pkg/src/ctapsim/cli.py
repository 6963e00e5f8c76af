"""Command-line driver.

    sim threemode|potential|groundstate|evolve|sweep|bench
        --config <file> [--out <dir>] [--threads N] [--full-scale]

Outputs land under --out (default ./out).  Any stage failure exits nonzero
with the failing stage named on stderr.  Grids at reference-chip size are
refused without --full-scale; SIM_THREADS overrides the config thread count
(and --threads overrides both).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import ExperimentConfig, load_config
from .runner import RunManifest, StageError, _now, run_bench, run_evolve, run_sweep


def _build_parser():
    p = argparse.ArgumentParser(prog="sim", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in [
            ("threemode", "integrate the three-mode model and write its population CSV"),
            ("potential", "assemble the trapping potential; write binary grid + minima CSV"),
            ("groundstate", "prepare the initial state; write it as a binary snapshot"),
            ("evolve", "full transport run: potential, ground state, propagation"),
            ("sweep", "middle-wire current sweep for both orderings"),
            ("bench", "split-operator kernel benchmark across thread counts"),
    ]:
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=False, default=None,
                        help="config file (defaults to the reference-chip values)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--full-scale", action="store_true",
                        help="allow reference-chip-sized grids (multi-hour runs)")
    return p


def _load(args) -> ExperimentConfig:
    if args.config is None:
        return ExperimentConfig()
    return load_config(args.config)


def _gate_full_scale(cfg: ExperimentConfig, args, command: str):
    if command in ("potential", "groundstate", "evolve", "sweep") \
            and cfg.is_full_scale and not args.full_scale:
        raise StageError("config", ValueError(
            f"grid {cfg.n_x}x{cfg.n_y}x{cfg.n_z} is reference-chip scale; "
            f"pass --full-scale to run it (multi-hour)"))


def _cmd_threemode(cfg: ExperimentConfig, args):
    from . import threemode

    pulses = cfg.tm_pulses()
    trace = threemode.evolve(pulses, (1.0, 0.0, 0.0), cfg.tm_dt_eff)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "threemode.csv")
    trace.to_csv(path)
    p = trace.final_populations()
    man = RunManifest(config=cfg.snapshot(), started=_now())
    man.results = {"final_p_l": float(p[0]), "final_p_m": float(p[1]),
                   "final_p_r": float(p[2]), "max_p_m": trace.max_middle_population()}
    man.add_file(args.out, path)
    man.finished = _now()
    man.write(args.out)
    print(f"final populations: L={p[0]:.6f} M={p[1]:.6f} R={p[2]:.6f}  ({path})")


def _cmd_potential(cfg: ExperimentConfig, args):
    from .magfield import export_minima_csv, export_potential
    from .runner import prepare_potential

    layout, grid, potential, partition = prepare_potential(cfg)
    os.makedirs(args.out, exist_ok=True)
    bin_path = os.path.join(args.out, "potential.qwf")
    csv_path = os.path.join(args.out, "minima.csv")
    export_potential(potential, bin_path)
    export_minima_csv(potential, csv_path)
    man = RunManifest(config=cfg.snapshot(), started=_now())
    man.add_file(args.out, bin_path)
    man.add_file(args.out, csv_path)
    n3 = sum(1 for m in potential.minima if m.n_guides >= 3)
    man.results = {"slices_with_three_guides": n3, "n_z": grid.n[2]}
    man.finished = _now()
    man.write(args.out)
    print(f"potential on {grid.n} grid -> {bin_path}; "
          f"{n3}/{grid.n[2]} slices carry three guides")


def _cmd_groundstate(cfg: ExperimentConfig, args, threads):
    from .qgrid import write_snapshot
    from .runner import initial_state, prepare_potential

    layout, grid, potential, partition = prepare_potential(cfg)
    psi = initial_state(cfg, potential, partition, threads=threads)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "initial_state.qwf")
    write_snapshot(path, psi.amplitudes, grid, time=0.0)
    man = RunManifest(config=cfg.snapshot(), started=_now())
    man.add_file(args.out, path)
    man.results = {"norm": psi.norm()}
    man.finished = _now()
    man.write(args.out)
    print(f"initial state ({psi.norm():.9f} norm) -> {path}")


def _cmd_evolve(cfg: ExperimentConfig, args, threads):
    man = run_evolve(cfg, args.out, threads=threads)
    r = man.results
    print(f"final populations: L={r['final_p_l']:.6f} M={r['final_p_m']:.6f} "
          f"R={r['final_p_r']:.6f}; max middle {r['max_p_m']:.6f}; "
          f"{man.steps_per_second:.2f} steps/s")


def _cmd_sweep(cfg: ExperimentConfig, args, threads):
    rows = run_sweep(cfg, args.out, threads=threads)
    for i_m, ordering, pr in rows:
        print(f"I_M = {i_m * 1e3:.4f} mA  {ordering:17s}  final p_r = {pr:.6f}")
    print(f"aggregate CSV in {os.path.join(args.out, 'sweep.csv')}")


def _cmd_bench(cfg: ExperimentConfig, args, threads):
    counts = None if threads is None else sorted({1, threads})
    report = run_bench(cfg, args.out, thread_counts=counts)
    for nt, r in report["rates"].items():
        print(f"threads={nt}: {r['median']:.3f} steps/s ({r['min']:.3f}..{r['max']:.3f})")
    print(f"report in {report['txt']}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        _gate_full_scale(cfg, args, args.command)
        threads = cfg.resolve_threads(args.threads)
        if args.command == "threemode":
            _cmd_threemode(cfg, args)
        elif args.command == "potential":
            _cmd_potential(cfg, args)
        elif args.command == "groundstate":
            _cmd_groundstate(cfg, args, threads)
        elif args.command == "evolve":
            _cmd_evolve(cfg, args, threads)
        elif args.command == "sweep":
            _cmd_sweep(cfg, args, threads)
        elif args.command == "bench":
            _cmd_bench(cfg, args, threads)
    except StageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except Exception as err:  # pragma: no cover - defensive
        print(f"error: stage '{args.command}' failed: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
