"""Command-line entry point: run, study, validate and dump-basis subcommands."""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from .config import ConfigError, load_config
from .geometry import build_surrogate, classify_elements
from .sbm import mark_surrogate_functions
from .solutions import get_solution
from .solver import (
    make_domain,
    run_single,
    run_study,
    schedule_spans,
    write_csv,
)
from .thb import HierarchicalSpace


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="thb-sbm",
        description="Immersed isogeometric Poisson solver with locally "
                    "refined hierarchical splines and shifted boundary conditions")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, blurb in (
            ("run", "single solve (first degree/strategy, coarsest mesh) with error report"),
            ("study", "full convergence schedule, written as CSV"),
            ("validate", "built-in invariant and fixture checks"),
            ("dump-basis", "plain-text dump of the refined hierarchy")):
        p = sub.add_parser(name, help=blurb)
        if name != "validate":
            p.add_argument("--config", required=True, help="path to a study config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker processes (fallback: THB_SBM_THREADS)")
    return ap


def _effective_threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("THB_SBM_THREADS")
    return max(1, int(env)) if env else 1


def _load(args):
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        raise SystemExit(2) from None
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(2) from None
    cfg.threads = _effective_threads(args)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        if cfg.out_csv:
            cfg.out_csv = os.path.join(args.out, os.path.basename(cfg.out_csv))
    return cfg


def _cmd_run(args) -> int:
    cfg = _load(args)
    degree, strategy, n = cfg.degrees[0], cfg.strategies[0], cfg.span_start
    try:
        rec = run_single(cfg, degree, strategy, n)
    except Exception as exc:
        print(f"error: run failed: {exc}", file=sys.stderr)
        return 1
    print(f"geometry={rec.geometry} bc={rec.bc_case} strategy={rec.strategy} "
          f"degree={rec.degree} spans={rec.n_spans}x{rec.n_spans}")
    print(f"h_char={rec.h_char:.6e} dofs={rec.dofs}")
    print(f"err_l2_rel={rec.err_l2_rel:.12e}")
    print(f"err_h1_rel={rec.err_h1_rel:.12e}")
    print(f"wall_time_s={rec.wall_time_s:.3f}")
    return 0


def _cmd_study(args) -> int:
    cfg = _load(args)
    if not cfg.out_csv:
        cfg.out_csv = "study.csv" if not args.out else os.path.join(args.out, "study.csv")
    t0 = time.perf_counter()
    records, failures = run_study(cfg)
    spans = schedule_spans(cfg.schedule_mode, cfg.span_start, cfg.span_end)
    print(f"study: {len(records)} records "
          f"({len(cfg.degrees)} degrees x {len(cfg.strategies)} strategies x "
          f"{len(spans)} meshes) in {time.perf_counter() - t0:.1f}s -> {cfg.out_csv}")
    for run_id, reason in failures:
        print(f"failed datapoint {run_id}: {reason}", file=sys.stderr)
    return 0 if not failures else 1


def _cmd_dump_basis(args) -> int:
    cfg = _load(args)
    degree, strategy, n = cfg.degrees[0], cfg.strategies[0], cfg.span_start
    domain = make_domain(cfg)
    hier = HierarchicalSpace.uniform(degree, n)
    if strategy != "none" and cfg.refine_target != "none" and domain.immersed_boundaries:
        classes = classify_elements(hier, domain)
        surrogate = build_surrogate(hier, classes, domain)
        for _ in range(cfg.refine_levels):
            hier.refine(mark_surrogate_functions(hier, surrogate, cfg.refine_target), strategy)
            classes = classify_elements(hier, domain)
            surrogate = build_surrogate(hier, classes, domain)
    text = hier.dump()
    if args.out:
        path = os.path.join(args.out, "hierarchy.txt")
        with open(path, "w") as fh:
            fh.write(text)
        print(f"wrote {path}")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_validate(args) -> int:
    """Fast self-checks: refinement fixtures, partition of unity, two-scale
    exactness and a body-fitted patch test."""
    failures = []

    def check(name, ok):
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        if not ok:
            failures.append(name)

    omega1 = [(0, 0.5, 0, 0.5), (0.5, 1, 0.5, 1)]
    omega2 = [(0, 0.4, 0, 0.4), (0.6, 1, 0.6, 1)]
    fixtures = [("h", 1, 294, 250), ("p", 1, 294, 100), ("k", 1, 544, 250),
                ("h", 2, 678, 634), ("p", 2, 454, 100)]
    h0 = HierarchicalSpace.uniform(2, 10)
    check("unrefined 10x10 p=2: 144 dofs / 100 elements",
          h0.num_active_functions() == 144 and h0.num_active_elements() == 100)
    for strat, steps, dofs, els in fixtures:
        h = HierarchicalSpace.uniform(2, 10)
        for region in [omega1, omega2][:steps]:
            h.refine(h.mark_in_boxes(region), strat)
        check(f"{strat}-refinement x{steps}: {dofs} dofs / {els} elements",
              h.num_active_functions() == dofs and h.num_active_elements() == els)

    rng = np.random.default_rng(20240915)
    worst = 0.0
    for p in (1, 2, 3):
        for strat in ("h", "p", "k"):
            h = HierarchicalSpace.uniform(p, 10)
            h.refine(h.mark_in_boxes(omega1), strat)
            for x, y in rng.uniform(0, 1, (60, 2)):
                s = sum(t[0, 0] for t in h.eval_active(x, y).values())
                worst = max(worst, abs(s - 1.0))
    check(f"partition of unity across strategies (worst {worst:.2e})", worst <= 1e-12)

    from .splines import LocalBasisFunction, two_scale_coeffs
    lam = two_scale_coeffs(LocalBasisFunction((0, 0, 0, 1), 2),
                           [LocalBasisFunction((0, 0, 0, 0, 1), 3),
                            LocalBasisFunction((0, 0, 0, 1, 1), 3)])
    check("degree-elevation coefficients [1, 1/3]",
          abs(lam[0] - 1) <= 1e-12 and abs(lam[1] - 1 / 3) <= 1e-12)

    from .config import RunConfig
    cfg = RunConfig(geometry="square", solution="linear_x", degrees=(2,),
                    strategies=("none",), span_start=8, span_end=8).validate()
    rec = run_single(cfg, 2, "none", 8)
    check(f"body-fitted patch test u=x (L2 {rec.err_l2_rel:.2e})",
          rec.err_l2_rel <= 1e-10)

    if failures:
        print(f"{len(failures)} check(s) failed")
        return 1
    print("all checks passed")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {"run": _cmd_run, "study": _cmd_study,
                "validate": _cmd_validate, "dump-basis": _cmd_dump_basis}
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
