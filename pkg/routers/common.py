"""
Shared argument helpers and report plumbing for the subcommand handlers
"""
import argparse
import sys
from pathlib import Path
from typing import Sequence, Tuple

sys.path.append(str(Path(__file__).parent.parent))

from config import settings
from models.schemas import IsingModel, McConfig, Provenance
from services.errors import ModelValidationError
from services.json_utils import read_json


def fit_range(text: str) -> Tuple[int, int]:
    """Parse an inclusive 'min:max' range such as 2:6"""
    try:
        lo, hi = (int(part) for part in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MIN:MAX, got {text!r}")
    if lo < 1 or hi < lo:
        raise argparse.ArgumentTypeError(f"invalid fit range {text!r}")
    return lo, hi


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return value


def add_seed_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=settings.DEFAULT_SEED,
                        help="seed for every random stream of the command")


def add_mc_flags(parser: argparse.ArgumentParser) -> None:
    """Flags that build a McConfig"""
    parser.add_argument("--sweeps", type=positive_int, default=settings.MC_SWEEPS)
    parser.add_argument("--burn-in", type=int, default=settings.MC_BURN_IN)
    parser.add_argument("--chains", type=positive_int, default=settings.MC_CHAINS)
    add_seed_flag(parser)


def mc_config(args: argparse.Namespace, **overrides) -> McConfig:
    values = {
        "sweeps": getattr(args, "sweeps", settings.MC_SWEEPS),
        "burn_in": getattr(args, "burn_in", settings.MC_BURN_IN),
        "chains": getattr(args, "chains", settings.MC_CHAINS),
        "seed": args.seed,
        "threads": args.threads,
    }
    values.update(overrides)
    return McConfig(**values)


def _plain(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def provenance(args: argparse.Namespace, inputs: Sequence[str | Path]) -> Provenance:
    """Record the command, its inputs and every flag"""
    flags = {
        key: value for key, value in vars(args).items()
        if key not in ("handler", "command", "verbose") and not callable(value)
    }
    return Provenance(
        command=args.command,
        inputs=[str(p) for p in inputs],
        seed=getattr(args, "seed", None),
        flags={k: _plain(v) for k, v in flags.items()},
        tool_version=settings.VERSION,
        schema_version=settings.REPORT_SCHEMA_VERSION,
    )


def load_model(path: str | Path) -> IsingModel:
    """Read a model report written by infer (or any object with L, h, w)"""
    data = read_json(path)
    try:
        return IsingModel.from_report(data.get("model", data))
    except (KeyError, AttributeError) as exc:
        raise ModelValidationError(f"{path} is not a model report: missing {exc}") from exc


def sidecar(path: str | Path) -> Path:
    """Path of the JSON provenance file next to a CSV output"""
    path = Path(path)
    return path.with_name(path.name + ".json")
