"""
Exact solution of small Boltzmann machines by enumerating all 2^N states
"""
import logging
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

import sys
sys.path.append(str(Path(__file__).parent.parent))

from models.schemas import IsingModel, EmpiricalMoments, McEstimate, HeatCurve, HeatPoint
from .errors import BmPriorError

logger = logging.getLogger(__name__)

MAX_SITES = 20
_CHUNK_STATES = 1 << 16


def all_states(n: int) -> np.ndarray:
    """All 2^n spin configurations as int8 rows; row k has spin i = +1 iff bit i of k is 0"""
    if not 1 <= n <= MAX_SITES:
        raise BmPriorError(f"enumeration supports 1..{MAX_SITES} sites, got {n}")
    codes = np.arange(1 << n, dtype=np.int64)[:, None]
    bits = (codes >> np.arange(n, dtype=np.int64)) & 1
    return (1 - 2 * bits).astype(np.int8)


def _energies(model: IsingModel, states: np.ndarray) -> np.ndarray:
    out = np.empty(states.shape[0])
    for start in range(0, states.shape[0], _CHUNK_STATES):
        out[start:start + _CHUNK_STATES] = model.energy(states[start:start + _CHUNK_STATES])
    return out


def _boltzmann(energies: np.ndarray, T: float) -> np.ndarray:
    log_weights = -energies / T
    return np.exp(log_weights - logsumexp(log_weights))


def _weighted_second_moment(states: np.ndarray, p: np.ndarray) -> np.ndarray:
    n = states.shape[1]
    second = np.zeros((n, n))
    for start in range(0, states.shape[0], _CHUNK_STATES):
        s = states[start:start + _CHUNK_STATES].astype(np.float64)
        second += s.T @ (s * p[start:start + _CHUNK_STATES, None])
    second = 0.5 * (second + second.T)
    np.fill_diagonal(second, 1.0)
    return second


def exact_moments(model: IsingModel, T: float = 1.0) -> McEstimate:
    """
    Exact averages of a model at temperature T.

    Args:
        model: Model with at most 20 sites
        T: Temperature

    Returns:
        McEstimate with exact m, c, <S S>, energy mean and variance, and the
        state probabilities in all_states order (samples_used is 0)
    """
    if T <= 0:
        raise BmPriorError(f"temperature must be positive, got {T}")
    states = all_states(model.N)
    energies = _energies(model, states)
    p = _boltzmann(energies, T)
    m = p @ states
    second = _weighted_second_moment(states, p)
    energy_mean = float(p @ energies)
    energy_var = float(p @ (energies - energy_mean) ** 2)
    return McEstimate(
        m=m,
        c=second - np.outer(m, m),
        second_moment=second,
        energy_mean=energy_mean,
        energy_var=energy_var,
        samples_used=0,
        probabilities=p,
    )


def exact_specific_heat(model: IsingModel, t_grid: Sequence[float]) -> HeatCurve:
    """C(T) = Var(H) / (N T^2) from the exact energy distribution; stderr is 0"""
    energies = _energies(model, all_states(model.N))
    points = []
    for T in t_grid:
        p = _boltzmann(energies, T)
        mean = p @ energies
        var = p @ (energies - mean) ** 2
        points.append(HeatPoint(T=float(T), C=float(var / (model.N * T * T)), C_stderr=0.0))
    peak = max(points, key=lambda point: point.C)
    return HeatCurve(points=points, peak_T=peak.T)


def state_probabilities(model: IsingModel, T: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """(states, probabilities) of the Boltzmann distribution"""
    states = all_states(model.N)
    return states, _boltzmann(_energies(model, states), T)


def moments_from_distribution(model: IsingModel, T: float = 1.0) -> EmpiricalMoments:
    """Exact mu and Gamma of a model, tagged B = 0"""
    exact = exact_moments(model, T)
    gamma = exact.c.copy()
    np.fill_diagonal(gamma, 1.0 - exact.m * exact.m)
    logger.debug(f"Enumerated {1 << model.N} states for N={model.N}")
    return EmpiricalMoments(L=model.L, B=0, mu=exact.m, gamma=gamma)
