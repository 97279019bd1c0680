"""
Analysis and prior subcommands: analyze, export-prior, generate
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, Optional

import numpy as np

sys.path.append(str(Path(__file__).parent.parent))

from config import settings
from models.schemas import AnalysisReport, ExpFit, IsingModel
from services.analysis import (
    coupling_histogram, distance_profile, field_and_magnetization_histograms, fit_exponential,
    fourier_spectrum, frustration_count, link_values, write_profile_csv,
)
from services.errors import FitDomainError, UsageError
from services.json_utils import write_json
from services.patchset import load_moments, load_patchset, save_patchset
from services.priormodel import PRESETS, build_prior, extract_params, generate_patches, load_params, save_params
from .common import add_seed_flag, fit_range, load_model, mc_config, positive_int, provenance, sidecar

logger = logging.getLogger(__name__)


def _model_summary(model: IsingModel) -> Dict[str, object]:
    summary = {
        "N": model.N,
        "L": model.L,
        "w_abs_max": float(np.abs(model.w).max(initial=0.0)),
        "h_mean": float(model.h.mean()),
    }
    for kind in ("NN", "NNN"):
        summary[f"{kind}_means"] = {
            str(cls): float(values.mean()) if values.size else None
            for cls, values in link_values(model, kind).items()
        }
    return summary


def run_analyze(args: argparse.Namespace) -> int:
    model = load_model(args.input)
    inputs = [args.input]
    profiles = {origin: distance_profile(model, origin) for origin in ("A", "B")}

    fits: Dict[str, Optional[ExpFit]] = {}
    for origin, profile in profiles.items():
        try:
            fits[origin] = fit_exponential(profile, *args.fit_range)
        except FitDomainError as exc:
            logger.warning(f"No exponential fit for profile {origin}: {exc}")
            fits[origin] = None

    histograms = {
        kind: {str(cls): hist for cls, hist in coupling_histogram(model, kind, args.bin_width).items()}
        for kind in ("NN", "NNN")
    }
    moments_summary = None
    if args.moments:
        m = load_moments(args.moments)
        inputs.append(args.moments)
        histograms["field"] = field_and_magnetization_histograms(model, m)
        moments_summary = {
            "B": m.B,
            "N": m.N,
            "mu_mean": float(m.mu.mean()),
            "mu_min": float(m.mu.min()),
            "mu_max": float(m.mu.max()),
        }

    spectrum_slope = None
    if args.patches:
        inputs.append(args.patches)
        spectrum_slope = fourier_spectrum(load_patchset(args.patches)).slope

    report = AnalysisReport(
        provenance=provenance(args, inputs),
        moments_summary=moments_summary,
        model_summary=_model_summary(model),
        profiles=profiles,
        histograms=histograms,
        fits=fits,
        frustration=frustration_count(model, args.frustration_threshold),
        spectrum_slope=spectrum_slope,
    )
    write_json(args.output, report)
    if args.csv_dir:
        args.csv_dir.mkdir(parents=True, exist_ok=True)
        for origin, profile in profiles.items():
            write_profile_csv(profile, args.csv_dir / f"profile_{origin}.csv")
    logger.info(f"Wrote analysis of N={model.N} to {args.output}")
    return 0


def run_export_prior(args: argparse.Namespace) -> int:
    model = load_model(args.input)
    try:
        params = extract_params(model, args.fit_range)
    except FitDomainError as exc:
        logger.error(f"Class means before the failed fit: {exc.partial}")
        raise
    save_params(params, args.output)
    return 0


def run_generate(args: argparse.Namespace) -> int:
    if (args.params is None) == (args.preset is None):
        raise UsageError("give exactly one of --params and --preset")
    params = PRESETS[args.preset] if args.preset else load_params(args.params)
    model = build_prior(params, args.size, h0=args.h0)
    patches = generate_patches(model, args.count, mc_config(args))
    save_patchset(patches, args.output)
    write_json(sidecar(args.output), {
        "provenance": provenance(args, [args.params] if args.params else []),
        "params": params,
    })
    return 0


def register(subparsers, common: argparse.ArgumentParser) -> None:
    p = subparsers.add_parser("analyze", parents=[common], help="profiles, histograms, fits, frustration")
    p.add_argument("input", type=Path, help="model report")
    p.add_argument("--output", "-o", type=Path, required=True)
    p.add_argument("--moments", type=Path, help="moments report for P(h) and P(mu)")
    p.add_argument("--patches", type=Path, help="patch file for the spectrum slope")
    p.add_argument("--fit-range", type=fit_range, default=(2, 6))
    p.add_argument("--frustration-threshold", type=float, default=settings.FRUSTRATION_THRESHOLD)
    p.add_argument("--bin-width", type=float, default=settings.HISTOGRAM_BIN_WIDTH)
    p.add_argument("--csv-dir", type=Path, help="also write profile_A.csv and profile_B.csv here")
    p.set_defaults(handler=run_analyze)

    p = subparsers.add_parser("export-prior", parents=[common], help="six prior parameters of a model")
    p.add_argument("input", type=Path, help="model report")
    p.add_argument("--output", "-o", type=Path, required=True)
    p.add_argument("--fit-range", type=fit_range, default=(2, 6))
    p.set_defaults(handler=run_export_prior)

    p = subparsers.add_parser("generate", parents=[common], help="sample patches from the prior")
    p.add_argument("--params", type=Path)
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--size", type=positive_int, default=8)
    p.add_argument("--count", type=positive_int, required=True)
    p.add_argument("--burn-in", type=int, default=settings.MC_BURN_IN)
    p.add_argument("--h0", type=float, default=None)
    p.add_argument("--output", "-o", type=Path, required=True)
    add_seed_flag(p)
    p.set_defaults(handler=run_generate)
