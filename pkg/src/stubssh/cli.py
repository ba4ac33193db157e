"""Command-line front end: ``stubssh <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dynamics import NumericalError, photonic_transfer_phase, transfer_lattice, zeta
from .lattice import DisorderSpec, spectrum_statistics
from .protocols import PRESETS, ProtocolError, phase_demo_four_boundaries, run_protocol
from .pulses import calibrate_interior_heights, table_row
from .sweep import ConfigError, ExperimentConfig, run_sweep, sigma_list, spectrum_lattice

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment configuration")
    p.add_argument("--out", type=Path, default=None, help="output directory (default: config 'out' or .)")
    p.add_argument("--seed", type=int, default=None, help="base seed (unsigned 64-bit)")
    p.add_argument("--realizations", type=int, default=None)
    p.add_argument("--sigma", type=str, default=None, help="comma-separated disorder strengths")
    p.add_argument("--mode", choices=["od", "g"], default=None, help="off-diagonal or general disorder")
    p.add_argument("--step", type=float, default=None, help="integration step (<= 0.02)")
    p.add_argument("--gamma", type=float, default=None, help="qudit decay rate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stubssh", description="Stub-SSH lattice entanglement simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="disorder-averaged spectrum and edge weights")
    _common(p)
    p.add_argument("--model", choices=["1dom", "4dom"], default="1dom")

    p = sub.add_parser("transfer", help="end-to-end photon transfer phase and probability")
    _common(p)
    p.add_argument("--nd", type=int, default=1)
    p.add_argument("--ell", type=int, default=4)

    p = sub.add_parser("protocol", help="single protocol run with checkpoint report")
    _common(p)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--stride", type=float, default=None, help="also dump the trajectory at this stride")

    p = sub.add_parser("sweep", help="disorder Monte Carlo over a sigma grid")
    _common(p)
    p.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("calibrate", help="interior transfer heights for a multidomain chain")
    _common(p)
    p.add_argument("--nd", type=int, default=4)
    p.add_argument("--ell", type=int, default=4)

    p = sub.add_parser("phase-demo", help="equal four-boundary superposition with aligned phases")
    _common(p)
    return parser


def _config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = ExperimentConfig.load(args.config)
    else:
        cfg = ExperimentConfig(protocol=getattr(args, "preset", None) or "bell1", realizations=1)
    if getattr(args, "preset", None) and args.config is not None:
        cfg = replace(cfg, protocol=args.preset)
    over = {}
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        over["seed"] = args.seed
    if args.realizations is not None:
        over["realizations"] = args.realizations
    if args.sigma is not None:
        over["sigmas"] = sigma_list(args.sigma)
    if args.mode is not None:
        over["mode"] = args.mode
    if args.step is not None:
        over["step"] = args.step
    if args.gamma is not None:
        over["gamma"] = args.gamma
    if getattr(args, "workers", None) is not None:
        over["workers"] = args.workers
    if args.out is not None:
        over["out"] = str(args.out)
    return replace(cfg, **over) if over else cfg


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def cmd_spectrum(args, cfg: ExperimentConfig) -> int:
    spec = spectrum_lattice(args.model)
    n = cfg.realizations if args.realizations is not None or args.config else 2000
    out = _outdir(cfg)
    for sigma in cfg.sigmas:
        recs = spectrum_statistics(spec, DisorderSpec(cfg.mode, sigma, cfg.seed), max(n, 2))
        path = out / f"spectrum_{args.model}_{cfg.mode.value}_{sigma:g}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "mean_energy", "sigma_energy", "mean_pe", "is_edge"])
            for r in recs:
                w.writerow([r.rank, repr(r.mean_energy), repr(r.sigma_energy), repr(r.mean_pe), int(r.is_edge)])
        print(path)
    return EXIT_OK


def cmd_transfer(args, cfg: ExperimentConfig) -> int:
    amp = photonic_transfer_phase(args.nd, args.ell, step=cfg.step)
    z = zeta(args.nd, args.ell)
    err = abs(math.remainder(np.angle(amp) - np.angle(z), 2 * math.pi))
    report = {
        "n_d": args.nd, "ell": args.ell, "probability": abs(amp) ** 2,
        "phase": float(np.angle(amp)), "zeta": z, "zeta_phase": float(np.angle(z)), "phase_error": err,
        "t_tr": table_row(args.nd, args.ell).timings.t_tr,
    }
    _write_json(_outdir(cfg) / f"transfer_{args.nd}_{args.ell}.json", report)
    print(json.dumps(report, default=_jsonable))
    return EXIT_OK


def cmd_protocol(args, cfg: ExperimentConfig) -> int:
    plan = cfg.plan()
    sigma = cfg.sigmas[0]
    dis = DisorderSpec(cfg.mode, sigma, cfg.seed, 0) if sigma > 0 else None
    res = run_protocol(plan, dis, cfg.decay(), cfg.step, strict=False, stride=args.stride)
    report = res.to_dict()
    report["checkpoints_pass"] = bool(min(res.overlaps) >= 0.99)
    out = _outdir(cfg)
    _write_json(out / f"protocol_{plan.name}.json", report)
    if res.trajectory is not None:
        with (out / f"trajectory_{plan.name}.csv").open("w", newline="") as fh:
            res.trajectory.to_csv(fh, plan.basis)
    print(json.dumps({k: report[k] for k in ("protocol", "checkpoint_overlaps", "checkpoints_pass")}))
    print(json.dumps(report["metrics"]))
    return EXIT_OK


def cmd_sweep(args, cfg: ExperimentConfig) -> int:
    res = run_sweep(cfg)
    out = _outdir(cfg)
    stem = f"sweep_{cfg.protocol}_{cfg.mode.value}"
    with (out / f"{stem}.csv").open("w", newline="") as fh:
        res.write_rows(fh)
    with (out / f"{stem}_aggregate.csv").open("w", newline="") as fh:
        res.write_aggregate(fh)
    print(out / f"{stem}.csv")
    if res.failed:
        print(f"{res.failed} realization(s) hit non-finite amplitudes", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_calibrate(args, cfg: ExperimentConfig) -> int:
    row = table_row(args.nd, args.ell)
    spec = transfer_lattice(args.nd, args.ell)
    res = calibrate_interior_heights(spec, row.timings.v_tr, row.timings, step=max(cfg.step, 0.02))
    report = {"n_d": args.nd, "ell": args.ell, "t_tr": row.timings.t_tr, "heights": list(res.heights),
              "probability": res.probability, "baseline_probability": res.baseline_probability}
    _write_json(_outdir(cfg) / f"calibrate_{args.nd}_{args.ell}.json", report)
    print(json.dumps(report))
    return EXIT_OK


def cmd_phase_demo(args, cfg: ExperimentConfig) -> int:
    res = phase_demo_four_boundaries(step=cfg.step, min_overlap=0.0)
    out = _outdir(cfg)
    report = {"overlap": res.overlap, "populations": res.populations.tolist(),
              "relative_phases": res.relative_phases.tolist(), "transfer_durations": list(res.durations),
              "phase_shifts": list(res.phases)}
    _write_json(out / "phase_demo.json", report)
    with (out / "phase_demo_schedule.csv").open("w", newline="") as fh:
        res.schedule.to_csv(fh, 0.1)
    print(json.dumps(report))
    return EXIT_OK if res.overlap >= 0.98 else EXIT_NUMERIC


COMMANDS = {
    "spectrum": cmd_spectrum,
    "transfer": cmd_transfer,
    "protocol": cmd_protocol,
    "sweep": cmd_sweep,
    "calibrate": cmd_calibrate,
    "phase-demo": cmd_phase_demo,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ProtocolError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
