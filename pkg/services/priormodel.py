"""
Six-parameter sublattice prior: construction, parameter extraction and sampling
"""
import logging
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import ValidationError

import sys
sys.path.append(str(Path(__file__).parent.parent))

from models.schemas import IsingModel, McConfig, PatchSet, PriorParams
from .analysis import classify_link, distance_profile, fit_exponential, lattice_links, link_values, site_index
from .errors import FitDomainError, ModelValidationError
from .gibbs import draw_independent_states
from .json_utils import read_json, write_json

logger = logging.getLogger(__name__)

# Published estimates for three image categories
PRESETS: Dict[str, PriorParams] = {
    "aerial": PriorParams(w_nn_1=0.07, w_nn_2=0.32, w_nnn_1=0.24, w_nnn_2=0.22, a=0.1, b=0.7),
    "face": PriorParams(w_nn_1=-0.85, w_nn_2=0.2, w_nnn_1=-0.14, w_nnn_2=0.4, a=0.3, b=1.1),
    "forest": PriorParams(w_nn_1=-0.03, w_nn_2=0.43, w_nnn_1=0.3, w_nnn_2=0.37, a=0.16, b=1.3),
}


def build_prior(params: PriorParams, L: int, h0: Optional[float] = None) -> IsingModel:
    """
    Couplings of the prior on an L x L lattice.

    NN and NNN links take their class value; every other pair at distance
    r gets a exp(-|r - 2| / b) up to r_cut and 0 beyond. All fields equal h0
    (params.h0 when not given).
    """
    if L < 4:
        raise ModelValidationError(f"prior needs L >= 4, got L={L}")
    ys, xs = np.divmod(np.arange(L * L), L)
    r = np.hypot(xs[:, None] - xs[None, :], ys[:, None] - ys[None, :])
    w = np.where(r <= params.r_cut, params.a * np.exp(-np.abs(r - 2.0) / params.b), 0.0)

    values = {
        ("NN", 1): params.w_nn_1, ("NN", 2): params.w_nn_2,
        ("NNN", 1): params.w_nnn_1, ("NNN", 2): params.w_nnn_2,
    }
    for kind in ("NN", "NNN"):
        for ri, rj in lattice_links(L, kind):
            link = classify_link(ri, rj)
            i, j = site_index(L, *ri), site_index(L, *rj)
            w[i, j] = w[j, i] = values[(link.kind, link.cls)]
    np.fill_diagonal(w, 0.0)
    field = params.h0 if h0 is None else h0
    return IsingModel(L=L, w=w, h=np.full(L * L, float(field)))


def _class_mean(values: np.ndarray) -> float:
    if values.size and np.ptp(values) == 0.0:
        return float(values[0])
    return float(values.mean())


def extract_params(model: IsingModel, fit_range: Tuple[int, int] = (2, 6)) -> PriorParams:
    """
    Estimate prior parameters from an inferred model.

    Class means of the NN and NNN couplings give the four link values;
    (a, b) average the exponential fits of the A and B distance profiles.
    A failed fit is re-raised with the four class means in .partial.
    """
    if model.L is None or model.L < 8:
        raise ModelValidationError(f"parameter extraction needs L >= 8, got L={model.L}")
    nn = link_values(model, "NN")
    nnn = link_values(model, "NNN")
    partial = {
        "w_nn_1": _class_mean(nn[1]),
        "w_nn_2": _class_mean(nn[2]),
        "w_nnn_1": _class_mean(nnn[1]),
        "w_nnn_2": _class_mean(nnn[2]),
    }
    try:
        fits = [fit_exponential(distance_profile(model, origin), *fit_range) for origin in ("A", "B")]
    except FitDomainError as exc:
        logger.warning(f"Exponential fit failed: {exc}")
        raise type(exc)(str(exc), partial=partial) from exc
    a = 0.5 * (fits[0].a + fits[1].a)
    b = 0.5 * (fits[0].b + fits[1].b)
    return PriorParams(**partial, a=a, b=b, h0=float(model.h.mean()))


def generate_patches(model: IsingModel, count: int, cfg: Optional[McConfig] = None) -> PatchSet:
    """count patches, each the final state of its own Metropolis chain"""
    if model.L is None:
        raise ModelValidationError("model has no lattice side")
    cfg = cfg or McConfig()
    logger.info(f"Generating {count} patches of side {model.L} with {cfg.burn_in} sweeps each")
    states = draw_independent_states(model, count, cfg)
    return PatchSet(L=model.L, patches=states.reshape(count, model.L, model.L))


def save_params(params: PriorParams, path: str | Path) -> None:
    write_json(path, params)


def load_params(path: str | Path) -> PriorParams:
    try:
        return PriorParams(**read_json(path))
    except (TypeError, ValidationError) as exc:
        raise ModelValidationError(f"{path} is not a valid parameter file: {exc}") from exc
