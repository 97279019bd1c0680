"""
Post-inference analytics: sublattice classes, distance profiles, histograms,
exponential fits, frustration, the r-body oracle and Fourier spectra
"""
import logging
import math
from pathlib import Path
from typing import Dict, Iterator, List, Literal, Tuple, Union

import numpy as np

import sys
sys.path.append(str(Path(__file__).parent.parent))

from config import settings
from models.schemas import (
    IsingModel, EmpiricalMoments, PatchSet, BinaryImage, LinkClass, DistanceProfile,
    ExpFit, Histogram, FrustrationResult, RBodySolution, Spectrum,
)
from .errors import (
    BmPriorError, LinkClassError, FitDomainError, FitFailedError, ConvergenceError,
    ModelValidationError,
)
from .json_utils import write_csv

logger = logging.getLogger(__name__)

Coord = Tuple[int, int]
LinkKind = Literal["NN", "NNN"]

ORIGINS: Dict[str, Coord] = {"A": (1, 1), "B": (2, 2)}
FIELD_BINS = 40


def _lattice_side(model: IsingModel) -> int:
    if model.L is None:
        raise ModelValidationError("model has no lattice side")
    return model.L


def site_index(L: int, x: int, y: int) -> int:
    """Row-major index of 1-based coordinate (x, y)"""
    return (y - 1) * L + (x - 1)


def coupling(model: IsingModel, ri: Coord, rj: Coord) -> float:
    L = _lattice_side(model)
    return float(model.w[site_index(L, *ri), site_index(L, *rj)])


def classify_link(ri: Coord, rj: Coord) -> LinkClass:
    """
    Sublattice class of a NN or NNN link.

    Horizontal NN links take the parity of the left x, vertical NN links
    the parity of the upper y, and diagonal NNN links the parity of the
    upper endpoint's y. Odd parity is class 1.
    """
    (xi, yi), (xj, yj) = ri, rj
    dx, dy = abs(xj - xi), abs(yj - yi)
    if (dx, dy) == (1, 0):
        kind, parity = "NN", min(xi, xj)
    elif (dx, dy) == (0, 1):
        kind, parity = "NN", min(yi, yj)
    elif (dx, dy) == (1, 1):
        kind, parity = "NNN", min(yi, yj)
    else:
        raise LinkClassError(f"{ri} -> {rj} is neither a NN nor a NNN link")
    return LinkClass(kind=kind, cls=1 if parity % 2 == 1 else 2)


def lattice_links(L: int, kind: LinkKind) -> Iterator[Tuple[Coord, Coord]]:
    """Every in-lattice link of one kind, each once"""
    if kind == "NN":
        for y in range(1, L + 1):
            for x in range(1, L):
                yield (x, y), (x + 1, y)
        for y in range(1, L):
            for x in range(1, L + 1):
                yield (x, y), (x, y + 1)
    elif kind == "NNN":
        for y in range(1, L):
            for x in range(1, L):
                yield (x, y), (x + 1, y + 1)
            for x in range(2, L + 1):
                yield (x, y), (x - 1, y + 1)
    else:
        raise ValueError(f"unknown link kind: {kind}")


def signed_links(model: IsingModel, kind: LinkKind) -> List[Tuple[Coord, Coord, float, int]]:
    """(r_i, r_j, w_ij, class) for every link of one kind"""
    return [
        (ri, rj, coupling(model, ri, rj), classify_link(ri, rj).cls)
        for ri, rj in lattice_links(_lattice_side(model), kind)
    ]


def link_values(model: IsingModel, kind: LinkKind) -> Dict[int, np.ndarray]:
    """Couplings of one link kind grouped by class"""
    grouped: Dict[int, List[float]] = {1: [], 2: []}
    for _, _, w, cls in signed_links(model, kind):
        grouped[cls].append(w)
    return {cls: np.asarray(values) for cls, values in grouped.items()}


def interaction_ray(
    model: IsingModel,
    origin: Coord,
    direction: Literal["right", "down", "diagonal"] = "right",
) -> List[Tuple[float, float]]:
    """(r, w) along a row, a column or the downward diagonal starting at origin"""
    L = _lattice_side(model)
    x0, y0 = origin
    step = {"right": (1, 0), "down": (0, 1), "diagonal": (1, 1)}.get(direction)
    if step is None:
        raise ValueError(f"unknown direction: {direction}")
    ray = []
    s = 1
    while x0 + s * step[0] <= L and y0 + s * step[1] <= L:
        target = (x0 + s * step[0], y0 + s * step[1])
        ray.append((s * math.hypot(*step), coupling(model, origin, target)))
        s += 1
    return ray


def distance_profile(model: IsingModel, origin: Union[str, Coord] = "A") -> DistanceProfile:
    """
    Averaged coupling w_bar(r) from a fixed origin column and row.

    Horizontal terms pair (x0, y) with (x0 + r, y) for rows y in [2, L-1];
    vertical terms pair (x, y0) with (x, y0 + r) for columns x in [2, L-1].
    Boundary rows and columns are excluded, leaving 2(L - 2) terms per r.
    The standard error is their population deviation over sqrt(2(L - 2)).
    """
    if isinstance(origin, str):
        parity = origin
        x0, y0 = ORIGINS[origin]
    else:
        matches = [label for label, coord in ORIGINS.items() if coord == tuple(origin)]
        if not matches:
            raise ValueError(f"origin must be (1, 1) or (2, 2), got {origin}")
        parity = matches[0]
        x0, y0 = origin
    L = _lattice_side(model)
    if L < 4:
        raise BmPriorError(f"distance profile needs L >= 4, got L={L}")

    inner = np.arange(2, L)
    count = 2 * (L - 2)
    w = model.w
    r_values, w_bar, stderr = [], [], []
    for r in range(1, L - max(x0, y0) + 1):
        rows = (inner - 1) * L
        horizontal = w[rows + x0 - 1, rows + x0 + r - 1]
        vertical = w[(y0 - 1) * L + inner - 1, (y0 + r - 1) * L + inner - 1]
        terms = np.concatenate([horizontal, vertical])
        r_values.append(r)
        if np.ptp(terms) == 0.0:
            w_bar.append(float(terms[0]))
            stderr.append(0.0)
        else:
            w_bar.append(float(terms.sum() / count))
            stderr.append(float(terms.std() / math.sqrt(count)))
    return DistanceProfile(origin_parity=parity, r_values=r_values, w_bar=w_bar, stderr=stderr)


def write_profile_csv(profile: DistanceProfile, path: str | Path) -> None:
    write_csv(path, ("r", "w_bar", "stderr"), zip(profile.r_values, profile.w_bar, profile.stderr))


def _aligned_histogram(values: np.ndarray, width: float) -> Histogram:
    """Histogram with bin edges at integer multiples of width"""
    if values.size == 0:
        return Histogram(edges=[0.0, width], counts=[0])
    index = np.floor(values / width).astype(np.int64)
    lo = int(index.min())
    counts = np.bincount(index - lo, minlength=int(index.max()) - lo + 1)
    edges = [(lo + k) * width for k in range(counts.size + 1)]
    return Histogram(edges=edges, counts=counts.tolist())


def coupling_histogram(
    model: IsingModel,
    kind: LinkKind,
    bin_width: float = settings.HISTOGRAM_BIN_WIDTH,
) -> Dict[int, Histogram]:
    """P(w | link kind, class): one histogram per sublattice class"""
    if bin_width <= 0:
        raise ValueError(f"bin width must be positive, got {bin_width}")
    return {cls: _aligned_histogram(values, bin_width) for cls, values in link_values(model, kind).items()}


def fit_exponential(profile: DistanceProfile, r_min: int = 2, r_max: int = 6) -> ExpFit:
    """
    Fit w_bar(r) = a exp(-(r - 2) / b) by least squares on ln w_bar.

    When every standard error in range is positive the fit is weighted by
    the log-space errors stderr / w_bar and the covariance is absolute;
    otherwise it is unweighted with covariance scaled by RSS / (n - 2).
    """
    r = np.asarray(profile.r_values, dtype=np.float64)
    w_bar = np.asarray(profile.w_bar, dtype=np.float64)
    stderr = np.asarray(profile.stderr, dtype=np.float64)
    mask = (r >= r_min) & (r <= r_max)
    if np.count_nonzero(mask) < 3:
        raise FitDomainError(f"need at least 3 profile points in [{r_min}, {r_max}]")
    r, w_bar, stderr = r[mask], w_bar[mask], stderr[mask]
    if np.any(w_bar <= 0):
        bad = int(r[np.argmax(w_bar <= 0)])
        raise FitDomainError(f"profile value at r={bad} is not positive, cannot fit in log space")

    x = r - 2.0
    y = np.log(w_bar)
    if np.all(stderr > 0):
        coeffs, cov = np.polyfit(x, y, 1, w=w_bar / stderr, cov="unscaled")
    else:
        coeffs, cov = np.polyfit(x, y, 1, cov=True)
    slope, intercept = coeffs
    if not slope < -1e-12:
        raise FitFailedError(f"profile does not decay (slope {slope:.3g})")
    slope_err = math.sqrt(max(cov[0, 0], 0.0))
    intercept_err = math.sqrt(max(cov[1, 1], 0.0))
    a = math.exp(intercept)
    return ExpFit(
        a=a,
        b=-1.0 / slope,
        a_err=a * intercept_err,
        b_err=slope_err / slope ** 2,
        r_range=(r_min, r_max),
    )


def frustration_count(
    model: IsingModel,
    threshold: float = settings.FRUSTRATION_THRESHOLD,
) -> FrustrationResult:
    """
    Count unit plaquettes whose four NN couplings all exceed threshold in
    magnitude and multiply to a negative number.

    Returns:
        FrustrationResult with upper-left coordinates of frustrated plaquettes
    """
    L = _lattice_side(model)
    plaquettes = []
    for y in range(1, L):
        for x in range(1, L):
            links = np.array([
                coupling(model, (x, y), (x + 1, y)),
                coupling(model, (x, y + 1), (x + 1, y + 1)),
                coupling(model, (x, y), (x, y + 1)),
                coupling(model, (x + 1, y), (x + 1, y + 1)),
            ])
            if np.all(np.abs(links) > threshold) and np.prod(np.sign(links)) < 0:
                plaquettes.append((x, y))
    return FrustrationResult(count=len(plaquettes), plaquettes=plaquettes)


def _value_histogram(values: np.ndarray, bins: int) -> Histogram:
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return Histogram(edges=[lo - 0.5, lo + 0.5], counts=[int(values.size)])
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    return Histogram(edges=edges.tolist(), counts=counts.tolist())


def field_and_magnetization_histograms(
    model: IsingModel,
    m: EmpiricalMoments,
    bins: int = FIELD_BINS,
) -> Dict[str, Histogram]:
    """P(h_i) and P(mu_i) over the data range; a constant sample gets one unit-wide bin"""
    if model.N != m.N:
        raise ModelValidationError(f"model has N={model.N} sites but moments have N={m.N}")
    return {"h": _value_histogram(model.h, bins), "mu": _value_histogram(m.mu, bins)}


def r_body_solution(
    r: int,
    K: float,
    N: int,
    damping: float = 0.5,
    tol: float = 1e-14,
    max_iters: int = 100000,
) -> RBodySolution:
    """
    Mean-field solution of the fully connected r-body model p ~ exp(K N m^r).

    Iterates m <- (1 - damping) m + damping tanh(K r m^(r-1)) from m = 0.9
    and maps the solution to the equivalent pairwise coupling
    w = (K / N) r (r - 1) m^(r-2) and field h = -K r (r - 2) m^(r-1).
    """
    if r < 1:
        raise ValueError(f"r must be at least 1, got {r}")
    if not math.isfinite(K) or N < 1:
        raise ValueError(f"need finite K and N >= 1, got K={K}, N={N}")
    m = 0.9
    for _ in range(max_iters):
        nxt = (1.0 - damping) * m + damping * math.tanh(K * r * m ** (r - 1))
        if not math.isfinite(nxt):
            raise ConvergenceError(f"r-body iteration diverged at r={r}, K={K}")
        if abs(nxt - m) < tol:
            m = nxt
            break
        m = nxt
    else:
        raise ConvergenceError(f"r-body iteration did not converge at r={r}, K={K}")
    w_pair = 0.0 if r < 2 else (K / N) * r * (r - 1) * m ** (r - 2)
    h = -K * r * (r - 2) * m ** (r - 1) + 0.0
    return RBodySolution(m=m, w_pair=w_pair, h=h)


def _spin_stack(data: Union[PatchSet, BinaryImage, np.ndarray]) -> np.ndarray:
    if isinstance(data, PatchSet):
        stack = data.patches
    elif isinstance(data, BinaryImage):
        stack = data.spins[None]
    else:
        stack = np.asarray(data)
        if stack.ndim == 2:
            stack = stack[None]
    if stack.ndim != 3:
        raise ValueError(f"expected a 2-D image or a stack of them, got shape {stack.shape}")
    return stack.astype(np.float64)


def fourier_amplitudes(data: Union[PatchSet, BinaryImage, np.ndarray]) -> np.ndarray:
    """|F| of the 2-D DFT of every patch in the stack"""
    return np.abs(np.fft.fft2(_spin_stack(data), axes=(-2, -1)))


def fourier_spectrum(data: Union[PatchSet, BinaryImage, np.ndarray]) -> Spectrum:
    """
    Radially averaged Fourier amplitude.

    |F| is averaged over patches, then over annuli k = round(|f|) for
    k = 1 .. side // 2, with |f| in cycles per patch. The slope is a
    log-log fit over the central decade of k; it is None when the
    spectrum has zeros there.
    """
    mean_amp = fourier_amplitudes(data).mean(axis=0)
    height, width = mean_amp.shape
    if min(height, width) < 8:
        raise BmPriorError(f"spectrum needs side >= 8, got {width}x{height}")
    fy = np.fft.fftfreq(height) * height
    fx = np.fft.fftfreq(width) * width
    radius = np.hypot(fy[:, None], fx[None, :])
    k = np.rint(radius).astype(np.int64).ravel()
    kmax = min(height, width) // 2
    sums = np.bincount(k, weights=mean_amp.ravel(), minlength=kmax + 1)
    counts = np.bincount(k, minlength=kmax + 1)
    freqs = np.arange(1, kmax + 1)
    amplitude = sums[1:kmax + 1] / counts[1:kmax + 1]

    centre = math.sqrt(kmax)
    band = (freqs >= centre / math.sqrt(10.0)) & (freqs <= centre * math.sqrt(10.0))
    slope = None
    if np.count_nonzero(band) >= 2 and np.all(amplitude[band] > 0):
        slope = float(np.polyfit(np.log(freqs[band]), np.log(amplitude[band]), 1)[0])
    else:
        logger.warning("Spectrum has zero amplitude in the fit band, slope left undefined")
    return Spectrum(frequencies=freqs.astype(float).tolist(), amplitude=amplitude.tolist(), slope=slope)


def write_spectrum_csv(spectrum: Spectrum, path: str | Path) -> None:
    write_csv(path, ("f", "amplitude"), zip(spectrum.frequencies, spectrum.amplitude))
