"""
Image subcommands: binarize, patchify, spectrum
"""
import argparse
import logging
import sys
from pathlib import Path

sys.path.append(str(Path(__file__).parent.parent))

from config import settings
from services.analysis import fourier_spectrum, write_spectrum_csv
from services.imageio import binarize, read_pbm, read_pgm_file, write_pbm
from services.json_utils import write_json
from services.patchset import MAGIC, load_patchset, merge_patchsets, patchify, save_patchset
from .common import positive_int, provenance, sidecar

logger = logging.getLogger(__name__)


def run_binarize(args: argparse.Namespace) -> int:
    """PGM -> PBM"""
    img = read_pgm_file(args.input)
    binary = binarize(img, method=args.dither, threshold=args.threshold, debug=args.debug)
    write_pbm(binary, args.output)
    black = int((binary.spins == 1).sum())
    logger.info(f"Wrote {args.output}: {img.width}x{img.height}, {black} black pixels")
    return 0


def run_patchify(args: argparse.Namespace) -> int:
    """One or more PBM images -> one BMPATCH1 file"""
    sets = [patchify(read_pbm(path), args.size) for path in args.inputs]
    patches = merge_patchsets(sets)
    save_patchset(patches, args.output)
    return 0


def _read_spins(path: Path):
    with open(path, "rb") as f:
        head = f.read(len(MAGIC))
    if head == MAGIC:
        return load_patchset(path)
    return read_pbm(path)


def run_spectrum(args: argparse.Namespace) -> int:
    """Radially averaged Fourier amplitude of a patch file or a PBM image"""
    spectrum = fourier_spectrum(_read_spins(args.input))
    write_spectrum_csv(spectrum, args.output)
    write_json(sidecar(args.output), {
        "provenance": provenance(args, [args.input]),
        "slope": spectrum.slope,
    })
    logger.info(f"Spectrum slope {spectrum.slope}")
    return 0


def register(subparsers, common: argparse.ArgumentParser) -> None:
    p = subparsers.add_parser("binarize", parents=[common], help="dither a PGM image into a PBM")
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--dither", choices=("riemersma", "floyd", "none"), default="riemersma")
    p.add_argument("--threshold", type=float, default=settings.DEFAULT_THRESHOLD)
    p.add_argument("--debug", action="store_true", help="check error-diffusion bookkeeping")
    p.set_defaults(handler=run_binarize)

    p = subparsers.add_parser("patchify", parents=[common], help="cut PBM images into L x L patches")
    p.add_argument("inputs", type=Path, nargs="+")
    p.add_argument("--size", type=positive_int, required=True)
    p.add_argument("--output", "-o", type=Path, required=True)
    p.set_defaults(handler=run_patchify)

    p = subparsers.add_parser("spectrum", parents=[common], help="Fourier amplitude spectrum")
    p.add_argument("input", type=Path)
    p.add_argument("--output", "-o", type=Path, required=True)
    p.set_defaults(handler=run_spectrum)
