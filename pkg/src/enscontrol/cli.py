"""Command-line front end.

Exit codes: 0 success, 1 unexpected failure, 2 usage error, 3 invalid
configuration, 4 overdetermined shape (n*P_total > m*N), 5 integration
failure, 6 decomposition failure, 7 control file mismatch.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import io
from .config import load_config
from .errors import EnsembleControlError
from .pipeline import convergence, synthesize, verify

log = logging.getLogger("enscontrol")


def _overrides(args) -> dict:
    over: dict = {}
    if args.out is not None:
        over.setdefault("output", {})["dir"] = args.out
    if args.seed is not None:
        over.setdefault("system", {})["seed"] = args.seed
    if args.ratio_cap is not None:
        over.setdefault("truncation", {})["ratio_cap"] = args.ratio_cap
    if getattr(args, "hard_cap", None) is not None:
        over.setdefault("truncation", {})["hard_cap"] = args.hard_cap
    return over


def _grid_summary(cfg) -> dict:
    return {
        "system": cfg.system.label,
        "n": cfg.system.n, "m": cfg.system.m, "d": cfg.system.d,
        "parameter_lower": cfg.pgrid.box.lower.tolist(),
        "parameter_upper": cfg.pgrid.box.upper.tolist(),
        "parameter_counts": list(cfg.pgrid.counts),
        "P_total": cfg.pgrid.size,
        "T": cfg.tgrid.T, "N": cfg.tgrid.N, "delta": cfg.tgrid.delta,
        "operator_shape": [cfg.system.n * cfg.pgrid.size, cfg.system.m * cfg.tgrid.N],
    }


def _run_report(cfg, res) -> dict:
    rep = res.report
    s = rep.singular_values
    return {
        "J": rep.truncation_count,
        "per_channel_count": rep.per_channel_count,
        "rank": len(s),
        "s_1": float(s[0]) if len(s) else None,
        "s_J": float(s[rep.truncation_count - 1]) if rep.truncation_count else None,
        "condition_ratio": rep.condition_ratio if rep.truncation_count else None,
        "ratio_cap": cfg.ratio_cap if cfg.ratio_cap != float("inf") else None,
        "residual": rep.residual_norm,
        "target_norm": rep.target_norm,
        "control_l2_norm": res.control.l2_norm(),
        "timings": res.timings,
        "grid": _grid_summary(cfg),
    }


def cmd_synthesize(args) -> int:
    cfg = load_config(args.config, args.preset, _overrides(args))
    res = synthesize(cfg, threads=args.threads)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    io.write_control(out / "control.csv", res.control)
    io.write_spectrum(out / "spectrum.csv", res.report)
    io.write_picard(out / "picard.csv", res.report)
    report = _run_report(cfg, res)
    log.info("timings: %s", res.timings)
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    print(f"J={report['J']} (per channel {report['per_channel_count']:g}) "
          f"condition_ratio={report['condition_ratio']} residual={report['residual']:.3e}")
    print(f"wrote {out}/control.csv spectrum.csv picard.csv report.json")
    return 0


def cmd_spectrum(args) -> int:
    cfg = load_config(args.config, args.preset, _overrides(args))
    res = synthesize(cfg, threads=args.threads)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    io.write_spectrum(out / "spectrum.csv", res.report)
    io.write_picard(out / "picard.csv", res.report)
    s = res.report.singular_values
    print(f"rank={len(s)} J={res.J} s_1={s[0] if len(s) else 0:.6e}")
    return 0


def cmd_verify(args) -> int:
    cfg = load_config(args.config, args.preset, _overrides(args))
    path = Path(args.control) if args.control else cfg.out_dir / "control.csv"
    control = io.read_control(path, cfg.tgrid, cfg.system.m)
    downsample = args.downsample if args.downsample is not None else cfg.downsample
    outcome = verify(cfg, control, threads=args.threads, downsample=downsample or None)
    out = cfg.out_dir
    io.write_outcome(out / "outcome.csv", outcome)
    if outcome.trajectories is not None:
        io.write_trajectories(out / "trajectories.csv", outcome)
    print(f"k_norm_error={outcome.k_norm_error:.6e}")
    print(f"mean_error={outcome.mean_error:.6e}")
    print(f"max_error={outcome.max_error:.6e}")
    return 0


def cmd_convergence(args) -> int:
    cfg = load_config(args.config, args.preset, _overrides(args))
    T_list = args.T_list or cfg.T_list or [cfg.tgrid.T]
    N_list = args.N_list or cfg.N_list or [cfg.tgrid.N]
    study = convergence(cfg, T_list, N_list, threads=args.threads)
    out = cfg.out_dir
    io.write_rows(out / "convergence.csv", ["T", "N", "delta", "k_norm_error", "J"], study.rows)
    io.write_rows(out / "slopes.csv", ["T", "slope"], sorted(study.slopes.items()))
    retained = study.retained_by_T()
    m = cfg.system.m
    io.write_rows(out / "retained.csv", ["T", "J", "per_channel_count"],
                  [(T, J, J / m) for T, J in sorted(retained.items())])
    for T, slope in sorted(study.slopes.items()):
        print(f"T={T:g} slope={'n/a' if slope is None else format(slope, '.4f')} J={retained[T]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="enscontrol", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--preset", help="named preset: fig1, fig2, fig3, fig4, null")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, default=os.cpu_count(), help="worker cap")
        p.add_argument("--seed", type=int, help="seed for the random system")
        p.add_argument("--ratio-cap", type=float, help="truncation ratio s_1/s_J bound")
        p.add_argument("--hard-cap", type=int, help="maximum retained singular values")

    p = sub.add_parser("synthesize", help="compute the minimum-norm control")
    common(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("spectrum", help="write the singular value and Picard tables")
    common(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("verify", help="simulate the ensemble under a control file")
    common(p)
    p.add_argument("--control", help="control CSV (default <out>/control.csv)")
    p.add_argument("--downsample", type=int, help="keep states every k-th time node")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("convergence", help="terminal error against time step")
    common(p)
    p.add_argument("--T-list", dest="T_list", type=float, nargs="+")
    p.add_argument("--N-list", dest="N_list", type=int, nargs="+")
    p.set_defaults(func=cmd_convergence)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except EnsembleControlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
