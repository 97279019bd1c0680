"""
Patch extraction, the BMPATCH1 file format and empirical moments
"""
import logging
import struct
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

import sys
sys.path.append(str(Path(__file__).parent.parent))

from models.schemas import BinaryImage, PatchSet, EmpiricalMoments
from .errors import ImageTooSmallError, EmptyPatchSetError, PatchFileError
from .json_utils import read_json, write_json
from .task_queue import TaskQueue

logger = logging.getLogger(__name__)

MAGIC = b"BMPATCH1"
_HEADER = struct.Struct("<8sIQ")

# rows per float64 matmul; products of +-1 stay exact integers far below 2**53
_CHUNK_ROWS = 1 << 16


def patchify(img: BinaryImage, L: int) -> PatchSet:
    """
    Cut an image into non-overlapping L x L patches in raster order.

    Partial tiles at the right and bottom edges are discarded.
    """
    if L < 1:
        raise ImageTooSmallError(f"patch side must be positive, got {L}")
    if img.width < L or img.height < L:
        raise ImageTooSmallError(
            f"image {img.width}x{img.height} is smaller than patch side {L}"
        )
    nx, ny = img.width // L, img.height // L
    tiles = img.spins[: ny * L, : nx * L].reshape(ny, L, nx, L).transpose(0, 2, 1, 3)
    return PatchSet(L=L, patches=tiles.reshape(ny * nx, L, L))


def merge_patchsets(sets: Iterable[PatchSet]) -> PatchSet:
    """Concatenate patch sets of equal side"""
    sets = list(sets)
    if not sets:
        raise EmptyPatchSetError("no patch sets to merge")
    sides = {ps.L for ps in sets}
    if len(sides) != 1:
        raise PatchFileError(f"cannot merge patch sets with sides {sorted(sides)}")
    return PatchSet(L=sets[0].L, patches=np.concatenate([ps.patches for ps in sets]))


class MomentAccumulator:
    """Exact integer sums (count, sum S, sum S S^T) over patches.

    Partial accumulators merge exactly, so sharded and serial runs agree bitwise.
    """

    def __init__(self, n_sites: int):
        self.n_sites = n_sites
        self.count = 0
        self.sum_s = np.zeros(n_sites, dtype=np.int64)
        self.sum_ss = np.zeros((n_sites, n_sites), dtype=np.int64)

    def add(self, flat: np.ndarray) -> "MomentAccumulator":
        """Accumulate a (b, N) block of +-1 spins"""
        for start in range(0, flat.shape[0], _CHUNK_ROWS):
            x = flat[start:start + _CHUNK_ROWS].astype(np.float64)
            self.sum_s += np.rint(x.sum(axis=0)).astype(np.int64)
            self.sum_ss += np.rint(x.T @ x).astype(np.int64)
            self.count += x.shape[0]
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        self.count += other.count
        self.sum_s += other.sum_s
        self.sum_ss += other.sum_ss
        return self

    def moments(self, L: Optional[int] = None) -> EmpiricalMoments:
        if self.count == 0:
            raise EmptyPatchSetError("cannot compute moments of an empty patch set")
        mu = self.sum_s / self.count
        gamma = self.sum_ss / self.count - np.outer(mu, mu)
        # spins are +-1, so <S_i S_i> = 1 exactly
        np.fill_diagonal(gamma, 1.0 - mu * mu)
        return EmpiricalMoments(L=L, B=self.count, mu=mu, gamma=gamma)


def compute_moments(ps: PatchSet, threads: Optional[int] = None) -> EmpiricalMoments:
    """
    Magnetizations mu_i = <S_i>_D and connected correlations
    Gamma_ij = <S_i S_j>_D - mu_i mu_j of a patch set.
    """
    if ps is None or ps.B < 1:
        raise EmptyPatchSetError("cannot compute moments of an empty patch set")
    flat = ps.flat()
    n_sites = flat.shape[1]
    queue = TaskQueue(threads)
    shards = np.array_split(np.arange(ps.B), min(queue.threads, ps.B))

    def accumulate(index: np.ndarray) -> MomentAccumulator:
        return MomentAccumulator(n_sites).add(flat[index])

    with queue:
        partials = queue.map(accumulate, shards)
    total = MomentAccumulator(n_sites)
    for part in partials:
        total.merge(part)
    logger.info(f"Computed moments of B={total.count} patches, N={n_sites}")
    return total.moments(ps.L)


def save_patchset(ps: PatchSet, path: str | Path) -> None:
    """Write a BMPATCH1 file: magic, u32 L, u64 B, then MSB-first bit records"""
    bits = ps.flat() == 1
    records = np.packbits(bits, axis=1, bitorder="big")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, ps.L, ps.B))
        f.write(records.tobytes())
    logger.info(f"Saved {ps.B} patches of side {ps.L} to {path}")


def load_patchset(path: str | Path) -> PatchSet:
    """Read a BMPATCH1 file"""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise PatchFileError(f"{path} is too short for a patch file header")
    magic, L, B = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise PatchFileError(f"bad patch file magic {magic!r}")
    if L == 0 or B == 0:
        raise PatchFileError(f"patch file declares L={L}, B={B}; both must be positive")
    n_sites = L * L
    record = (n_sites + 7) // 8
    payload = data[_HEADER.size:]
    if len(payload) != B * record:
        raise PatchFileError(
            f"patch file length mismatch: header claims {B} records of {record} bytes, "
            f"payload has {len(payload)} bytes"
        )
    packed = np.frombuffer(payload, dtype=np.uint8).reshape(B, record)
    bits = np.unpackbits(packed, axis=1, count=n_sites, bitorder="big")
    spins = np.where(bits == 1, 1, -1).astype(np.int8)
    return PatchSet(L=L, patches=spins.reshape(B, L, L))


def save_moments(m: EmpiricalMoments, path: str | Path) -> None:
    write_json(path, m.to_report())


def load_moments(path: str | Path) -> EmpiricalMoments:
    try:
        return EmpiricalMoments.from_report(read_json(path))
    except (KeyError, AttributeError) as exc:
        raise PatchFileError(f"{path} is not a moments report: missing {exc}") from exc

