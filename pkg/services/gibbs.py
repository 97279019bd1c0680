"""
Metropolis sampling, Monte Carlo maximum-likelihood learning and specific-heat sweeps
"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numba
import numpy as np
from scipy import linalg
from scipy.linalg import LinAlgError

import sys
sys.path.append(str(Path(__file__).parent.parent))

from models.schemas import (
    EmpiricalMoments, IsingModel, McConfig, McEstimate, LearnConfig, LearnResult,
    LearnStep, HeatCurve, HeatPoint,
)
from .errors import BmPriorError
from .invising import infer_nmf
from .json_utils import write_csv
from .task_queue import TaskQueue

logger = logging.getLogger(__name__)

HEAT_CSV_HEADER = ("T", "C", "C_stderr")
ENERGY_BLOCKS = 10
# thinned states kept for the full curvature matrix
CURVATURE_SAMPLES = 4000
# independent chains generated per seeded stream
PATCHES_PER_SHARD = 1024


def stream_seeds(seed: int, count: int, stream: int = 0) -> np.ndarray:
    """
    Derive count 32-bit seeds for numba's per-thread generator from
    (seed, stream) with SeedSequence; seed k depends only on its index.
    """
    words = np.random.SeedSequence([seed, stream]).generate_state(count, dtype=np.uint32)
    return words.astype(np.int64)


@numba.njit(cache=True, nogil=True)
def _random_state(n):
    s = np.empty(n)
    for i in range(n):
        s[i] = 1.0 if np.random.random() < 0.5 else -1.0
    return s


@numba.njit(cache=True, nogil=True)
def _local_fields(w, s):
    n = s.shape[0]
    local = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += w[i, j] * s[j]
        local[i] = acc
    return local


@numba.njit(cache=True, nogil=True)
def _sweep(w, h, beta, s, local):
    """N proposed single-spin flips at random sites; returns the energy change"""
    n = s.shape[0]
    change = 0.0
    for _ in range(n):
        i = np.random.randint(0, n)
        delta = 2.0 * s[i] * (local[i] + h[i])
        if delta <= 0.0 or np.random.random() < np.exp(-beta * delta):
            s[i] = -s[i]
            change += delta
            twice = 2.0 * s[i]
            for j in range(n):
                local[j] += twice * w[i, j]
    return change


@numba.njit(cache=True, nogil=True)
def _chain_kernel(w, h, beta, sweeps, burn_in, record_every, seed):
    n = h.shape[0]
    np.random.seed(seed)
    s = _random_state(n)
    local = _local_fields(w, s)
    energy = 0.0
    for i in range(n):
        energy -= 0.5 * s[i] * local[i] + h[i] * s[i]

    sum_s = np.zeros(n)
    sum_ss = np.zeros((n, n))
    energies = np.empty(sweeps)
    n_rec = sweeps // record_every if record_every > 0 else 0
    states = np.empty((n_rec, n), dtype=np.int8)
    k = 0
    for sweep in range(burn_in + sweeps):
        energy += _sweep(w, h, beta, s, local)
        if sweep < burn_in:
            continue
        t = sweep - burn_in
        energies[t] = energy
        for i in range(n):
            sum_s[i] += s[i]
            for j in range(i + 1, n):
                sum_ss[i, j] += s[i] * s[j]
        if k < n_rec and (t + 1) % record_every == 0:
            for i in range(n):
                states[k, i] = np.int8(s[i])
            k += 1
    return sum_s, sum_ss, energies, states


@numba.njit(cache=True, nogil=True)
def _independent_chains_kernel(w, h, beta, burn_in, count, seed):
    n = h.shape[0]
    np.random.seed(seed)
    out = np.empty((count, n), dtype=np.int8)
    for c in range(count):
        s = _random_state(n)
        local = _local_fields(w, s)
        for _ in range(burn_in):
            _sweep(w, h, beta, s, local)
        for i in range(n):
            out[c, i] = np.int8(s[i])
    return out


def _kernel_inputs(model: IsingModel, cfg: McConfig) -> Tuple[np.ndarray, np.ndarray, float]:
    w = np.ascontiguousarray(model.w, dtype=np.float64)
    h = np.ascontiguousarray(model.h, dtype=np.float64)
    return w, h, 1.0 / cfg.temperature


def sample_moments(model: IsingModel, cfg: Optional[McConfig] = None) -> McEstimate:
    """
    Estimate <S_i>, <S_i S_j> and the energy distribution by Metropolis.

    Chains start from random states, run burn_in sweeps, then contribute
    one sample per sweep. Chains run in parallel and are merged in chain
    order, so the estimate depends only on (model, cfg).

    Args:
        model: Model to sample
        cfg: Chain settings; record_every > 0 keeps every k-th post-burn-in state

    Returns:
        McEstimate with energy_series laid out chain by chain
    """
    cfg = cfg or McConfig()
    w, h, beta = _kernel_inputs(model, cfg)
    seeds = stream_seeds(cfg.seed, cfg.chains)

    def run_chain(chain: int):
        return _chain_kernel(w, h, beta, cfg.sweeps, cfg.burn_in, cfg.record_every, seeds[chain])

    logger.debug(
        f"Sampling N={model.N} T={cfg.temperature} with {cfg.chains} chains of {cfg.sweeps} sweeps"
    )
    with TaskQueue(cfg.threads) as queue:
        results = queue.map(run_chain, range(cfg.chains))

    n = model.N
    sum_s = np.zeros(n)
    sum_ss = np.zeros((n, n))
    for chain_s, chain_ss, _, _ in results:
        sum_s += chain_s
        sum_ss += chain_ss
    total = cfg.chains * cfg.sweeps
    m = sum_s / total
    second = (sum_ss + sum_ss.T) / total
    np.fill_diagonal(second, 1.0)
    energies = np.concatenate([r[2] for r in results])
    states = np.concatenate([r[3] for r in results]) if cfg.record_every > 0 else None
    energy_mean = float(energies.mean())
    return McEstimate(
        m=m,
        c=second - np.outer(m, m),
        second_moment=second,
        energy_mean=energy_mean,
        energy_var=float(np.mean((energies - energy_mean) ** 2)),
        samples_used=total,
        energy_series=energies,
        states=states,
    )


def draw_independent_states(model: IsingModel, count: int, cfg: Optional[McConfig] = None) -> np.ndarray:
    """
    count final states of independent chains, each started at random and
    run for cfg.burn_in sweeps. Chains are grouped into fixed shards with
    one seeded stream each, so output does not depend on the thread count.
    """
    cfg = cfg or McConfig()
    if count < 1:
        raise BmPriorError(f"need at least one state, got {count}")
    w, h, beta = _kernel_inputs(model, cfg)
    starts = list(range(0, count, PATCHES_PER_SHARD))
    seeds = stream_seeds(cfg.seed, len(starts), stream=1)

    def run_shard(index: int) -> np.ndarray:
        size = min(PATCHES_PER_SHARD, count - starts[index])
        return _independent_chains_kernel(w, h, beta, cfg.burn_in, size, seeds[index])

    with TaskQueue(cfg.threads) as queue:
        shards = queue.map(run_shard, range(len(starts)))
    return np.concatenate(shards)


def energy_variance_stderr(energy_series: np.ndarray, chains: int, blocks: int = ENERGY_BLOCKS) -> float:
    """Batch-means standard error of Var(H): each chain split into equal blocks"""
    per_chain = energy_series.reshape(chains, -1)
    length = per_chain.shape[1]
    blocks = max(1, min(blocks, length // 2))
    size = length // blocks
    if size < 2:
        return 0.0
    trimmed = per_chain[:, : blocks * size].reshape(chains * blocks, size)
    block_vars = trimmed.var(axis=1)
    if block_vars.size < 2:
        return 0.0
    return float(block_vars.std(ddof=1) / np.sqrt(block_vars.size))


def temperature_grid(tmin: float, tmax: float, steps: int) -> List[float]:
    """steps evenly spaced temperatures from tmin to tmax inclusive"""
    if steps < 1 or tmin <= 0 or tmax < tmin or (steps > 1 and tmax == tmin):
        raise BmPriorError(f"invalid temperature grid tmin={tmin} tmax={tmax} steps={steps}")
    return [float(t) for t in np.linspace(tmin, tmax, steps)]


def specific_heat_sweep(
    model: IsingModel,
    t_grid: Sequence[float],
    cfg: Optional[McConfig] = None,
    zero_field: bool = False,
) -> HeatCurve:
    """
    C(T) = (<H^2> - <H>^2) / (N T^2) from one Metropolis run per temperature.

    Every temperature reuses the same seed. With zero_field the fields are
    dropped before sampling.
    """
    cfg = cfg or McConfig()
    grid = [float(t) for t in t_grid]
    if not grid or any(t <= 0 for t in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise BmPriorError("temperature grid must be positive and strictly ascending")
    if zero_field:
        model = IsingModel(L=model.L, w=model.w, h=np.zeros(model.N))

    n = model.N
    points = []
    for T in grid:
        est = sample_moments(model, cfg.model_copy(update={"temperature": T, "record_every": 0}))
        scale = n * T * T
        stderr = energy_variance_stderr(est.energy_series, cfg.chains)
        points.append(HeatPoint(T=T, C=est.energy_var / scale, C_stderr=stderr / scale))
        logger.info(f"T={T:.4g} C={points[-1].C:.6g} +- {points[-1].C_stderr:.2g}")
    peak = max(points, key=lambda point: point.C)
    return HeatCurve(points=points, peak_T=peak.T)


def write_heat_csv(curve: HeatCurve, path: str | Path) -> None:
    write_csv(path, HEAT_CSV_HEADER, [(p.T, p.C, p.C_stderr) for p in curve.points])


# Learning

def _residual(m: EmpiricalMoments, est: McEstimate) -> Tuple[np.ndarray, np.ndarray, float]:
    """Gradient of the log likelihood in (h, w upper triangle) and its infinity norm"""
    iu = np.triu_indices(m.N, 1)
    data_second = m.gamma + np.outer(m.mu, m.mu)
    g_h = m.mu - est.m
    g_w = data_second[iu] - est.second_moment[iu]
    norm = float(max(np.abs(g_h).max(initial=0.0), np.abs(g_w).max(initial=0.0)))
    return g_h, g_w, norm


def _newton_step(est: McEstimate, g: np.ndarray, cfg: LearnConfig, full: bool) -> np.ndarray:
    """Solve (Cov(stats) + ridge I) step = g"""
    n = est.m.shape[0]
    iu = np.triu_indices(n, 1)
    if full and est.states is not None and est.states.shape[0] > 1:
        s = est.states.astype(np.float64)
        stats = np.hstack([s, s[:, iu[0]] * s[:, iu[1]]])
        curvature = np.atleast_2d(np.cov(stats, rowvar=False, bias=True))
        curvature[np.diag_indices_from(curvature)] += cfg.ridge
        try:
            return linalg.cho_solve(linalg.cho_factor(curvature), g)
        except LinAlgError:
            logger.warning("Curvature not positive definite, using its diagonal")
    diag = np.concatenate([1.0 - est.m ** 2, 1.0 - est.second_moment[iu] ** 2])
    return g / (diag + cfg.ridge)


def _clip(step: np.ndarray, max_step: float) -> np.ndarray:
    largest = np.abs(step).max(initial=0.0)
    if largest > max_step:
        step = step * (max_step / largest)
    return step


def _apply(model: IsingModel, step: np.ndarray) -> IsingModel:
    n = model.N
    iu = np.triu_indices(n, 1)
    w = model.w.copy()
    w[iu] += step[n:]
    w[iu[1], iu[0]] = w[iu]
    return IsingModel(L=model.L, w=w, h=model.h + step[:n])


def learn_mc(
    m: EmpiricalMoments,
    cfg: Optional[LearnConfig] = None,
    init: Optional[IsingModel] = None,
) -> LearnResult:
    """
    Maximum-likelihood Boltzmann machine learning with Monte Carlo moments.

    Damped Newton steps use the sampled covariance of the sufficient
    statistics (S_i, S_i S_j) plus a ridge as curvature: the full matrix
    when N + N(N-1)/2 <= max_full_curvature, its diagonal otherwise. A
    step is taken when it lowers the residual; otherwise gradient ascent
    with backtracking is tried. The best candidate is still accepted if it
    raises the residual by at most reject_tol, else the iterate is kept.

    Args:
        m: Target moments
        cfg: Learning settings
        init: Starting model, NMF solution by default

    Returns:
        LearnResult holding the iterate with the smallest residual seen
    """
    cfg = cfg or LearnConfig()
    n = m.N
    model = init if init is not None else infer_nmf(m)
    full = n + n * (n - 1) // 2 <= cfg.max_full_curvature
    record_every = 0
    if full:
        record_every = max(1, cfg.mc.sweeps * cfg.mc.chains // CURVATURE_SAMPLES)
    evaluations = 0

    def evaluate(candidate: IsingModel):
        nonlocal evaluations
        seed = int(np.random.SeedSequence([cfg.mc.seed, evaluations]).generate_state(1, dtype=np.uint64)[0])
        evaluations += 1
        mc = cfg.mc.model_copy(update={"seed": seed, "record_every": record_every})
        est = sample_moments(candidate, mc)
        g_h, g_w, norm = _residual(m, est)
        return est, np.concatenate([g_h, g_w]), norm

    logger.info(f"Learning N={n} by MC, curvature={'full' if full else 'diagonal'}")
    est, grad, norm = evaluate(model)
    history = [LearnStep(iter=0, grad_inf_norm=norm, step_type="init")]
    logger.info(f"iter=0 grad_inf_norm={norm:.6g} step_type=init")
    best_model, best_norm = model, norm
    converged = norm < cfg.grad_tol
    iteration = 0

    while not converged and iteration < cfg.max_iters:
        iteration += 1
        candidates = []
        step = _clip(_newton_step(est, grad, cfg, full), cfg.max_step)
        trial = _apply(model, step)
        outcome = evaluate(trial)
        candidates.append(("newton", trial, outcome))
        if outcome[2] >= norm:
            rate = cfg.learning_rate
            for _ in range(cfg.backtrack_steps + 1):
                trial = _apply(model, _clip(rate * grad, cfg.max_step))
                outcome = evaluate(trial)
                candidates.append(("gradient", trial, outcome))
                if outcome[2] < norm:
                    break
                rate *= 0.5

        step_type, trial, outcome = min(candidates, key=lambda item: item[2][2])
        if outcome[2] <= norm + cfg.reject_tol:
            model = trial
            est, grad, norm = outcome
        else:
            step_type = "rejected"

        history.append(LearnStep(iter=iteration, grad_inf_norm=norm, step_type=step_type))
        logger.info(f"iter={iteration} grad_inf_norm={norm:.6g} step_type={step_type}")
        if norm < best_norm:
            best_model, best_norm = model, norm
        converged = norm < cfg.grad_tol

    if not converged:
        logger.warning(
            f"MC learning stopped after {iteration} iterations with residual {best_norm:.3g} "
            f"above grad_tol {cfg.grad_tol}"
        )
    return LearnResult(
        model=best_model,
        converged=best_norm < cfg.grad_tol,
        iterations=iteration,
        grad_inf_norm=best_norm,
        history=history,
    )
