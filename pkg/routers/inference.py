"""
Inference subcommands: moments, infer, heat
"""
import argparse
import logging
import sys
from pathlib import Path

sys.path.append(str(Path(__file__).parent.parent))

from config import settings
from models.schemas import LearnConfig
from services.gibbs import learn_mc, specific_heat_sweep, temperature_grid, write_heat_csv
from services.invising import infer_ba, infer_nmf
from services.json_utils import write_json
from services.patchset import compute_moments, load_moments, load_patchset
from .common import add_mc_flags, load_model, mc_config, positive_float, positive_int, provenance, sidecar

logger = logging.getLogger(__name__)


def run_moments(args: argparse.Namespace) -> int:
    patches = load_patchset(args.input)
    m = compute_moments(patches, threads=args.threads)
    write_json(args.output, {**m.to_report(), "provenance": provenance(args, [args.input])})
    return 0


def run_infer(args: argparse.Namespace) -> int:
    m = load_moments(args.input)
    report = {"provenance": provenance(args, [args.input]), "method": args.method}
    if args.method == "nmf":
        model = infer_nmf(m, ridge=args.ridge)
    elif args.method == "ba":
        model = infer_ba(m, ridge=args.ridge)
    else:
        cfg = LearnConfig(
            grad_tol=args.grad_tol,
            max_iters=args.max_iters,
            mc=mc_config(args),
        )
        init = infer_nmf(m, ridge=args.ridge)
        result = learn_mc(m, cfg, init=init)
        model = result.model
        report["learn"] = {
            "converged": result.converged,
            "iterations": result.iterations,
            "grad_inf_norm": result.grad_inf_norm,
            "history": result.history,
        }
    report.update(model.to_report())
    write_json(args.output, report)
    logger.info(f"Wrote {args.method} model for N={model.N} to {args.output}")
    return 0


def run_heat(args: argparse.Namespace) -> int:
    model = load_model(args.input)
    grid = temperature_grid(args.tmin, args.tmax, args.steps)
    curve = specific_heat_sweep(model, grid, mc_config(args), zero_field=args.zero_field)
    write_heat_csv(curve, args.output)
    write_json(sidecar(args.output), {
        "provenance": provenance(args, [args.input]),
        "peak_T": curve.peak_T,
    })
    logger.info(f"Specific heat peaks at T={curve.peak_T:.4g}")
    return 0


def register(subparsers, common: argparse.ArgumentParser) -> None:
    p = subparsers.add_parser("moments", parents=[common], help="empirical mu and Gamma of a patch file")
    p.add_argument("input", type=Path)
    p.add_argument("--output", "-o", type=Path, required=True)
    p.set_defaults(handler=run_moments)

    p = subparsers.add_parser("infer", parents=[common], help="couplings and fields from moments")
    p.add_argument("input", type=Path)
    p.add_argument("--output", "-o", type=Path, required=True)
    p.add_argument("--method", choices=("nmf", "ba", "mc"), default="ba")
    p.add_argument("--ridge", type=float, default=None,
                   help="fixed ridge; by default only ill-conditioned Gamma is regularized")
    p.add_argument("--grad-tol", type=positive_float, default=settings.GRAD_TOL)
    p.add_argument("--max-iters", type=positive_int, default=settings.LEARN_MAX_ITERS)
    add_mc_flags(p)
    p.set_defaults(handler=run_infer)

    p = subparsers.add_parser("heat", parents=[common], help="specific heat over a temperature grid")
    p.add_argument("input", type=Path)
    p.add_argument("--output", "-o", type=Path, required=True)
    p.add_argument("--tmin", type=positive_float, default=0.5)
    p.add_argument("--tmax", type=positive_float, default=5.0)
    p.add_argument("--steps", type=positive_int, default=10)
    p.add_argument("--zero-field", action="store_true", help="drop the fields before sampling")
    add_mc_flags(p)
    p.set_defaults(handler=run_heat)
