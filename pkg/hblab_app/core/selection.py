"""Receive-antenna subsets, their class labels and the exhaustive selection oracle.

Subsets are ranked lexicographically (combinadic rank), so class 0 of (4, 2) is
{0, 1} and class 5 is {2, 3}.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

import numpy as np

from hblab_app.core.errors import ContractError, SelectionBudgetError, SubsetOverflowError
from hblab_app.core.linalg import as_cmatrix
from hblab_app.core.precoder import phase_extraction_rate

logger = logging.getLogger(__name__)

INT64_MAX = 2**63 - 1
DEFAULT_BUDGET = 1_000_000
_CHUNK = 2048

Objective = Literal["svd", "phase_extraction"]


@dataclass(frozen=True)
class AntennaSubset:
    indices: tuple[int, ...]
    class_index: int
    n_total: int

    def __post_init__(self) -> None:
        idx = self.indices
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ContractError(f"subset indices must be strictly increasing: {idx}")
        if idx and (idx[0] < 0 or idx[-1] >= self.n_total):
            raise ContractError(f"subset indices out of range [0, {self.n_total}): {idx}")

    @property
    def size(self) -> int:
        return len(self.indices)


def subset_count(n_total: int, n_sel: int) -> int:
    if not 0 < n_sel <= n_total:
        raise ContractError(f"need 0 < n_r <= n_R, got n_R={n_total}, n_r={n_sel}")
    count = math.comb(n_total, n_sel)
    if count > INT64_MAX:
        raise SubsetOverflowError(f"C({n_total}, {n_sel}) does not fit in 64 bits")
    return count


def subset_from_class(class_index: int, n_total: int, n_sel: int) -> AntennaSubset:
    count = subset_count(n_total, n_sel)
    if not 0 <= class_index < count:
        raise ContractError(f"class {class_index} outside [0, {count}) for C({n_total}, {n_sel})")
    rank = class_index
    indices = []
    candidate = 0
    for pos in range(n_sel):
        while True:
            remaining = math.comb(n_total - candidate - 1, n_sel - pos - 1)
            if rank < remaining:
                break
            rank -= remaining
            candidate += 1
        indices.append(candidate)
        candidate += 1
    return AntennaSubset(tuple(indices), class_index, n_total)


def class_from_subset(indices, n_total: int) -> int:
    idx = tuple(int(i) for i in indices)
    AntennaSubset(idx, 0, n_total)  # validates ordering and range
    n_sel = len(idx)
    subset_count(n_total, n_sel)
    rank = 0
    prev = -1
    for pos, chosen in enumerate(idx):
        for skipped in range(prev + 1, chosen):
            rank += math.comb(n_total - skipped - 1, n_sel - pos - 1)
        prev = chosen
    return rank


def make_subset(indices, n_total: int) -> AntennaSubset:
    idx = tuple(sorted(int(i) for i in indices))
    return AntennaSubset(idx, class_from_subset(idx, n_total), n_total)


def selection_matrix(subset: AntennaSubset) -> np.ndarray:
    q = np.zeros((subset.size, subset.n_total), dtype=np.complex128)
    q[np.arange(subset.size), list(subset.indices)] = 1.0
    return q


def apply_selection(h, subset: AntennaSubset) -> np.ndarray:
    h = as_cmatrix(h, "channel")
    if subset.indices and subset.indices[-1] >= h.shape[0]:
        raise ContractError(f"subset {subset.indices} does not fit a channel with {h.shape[0]} rows")
    return h[list(subset.indices), :]


def svd_surrogate_rates(stack: np.ndarray, snr: float, n_s: int) -> np.ndarray:
    """Rates of a batch of channels (..., n_r, n_t) under their own equal-power F_opt."""
    sv = np.linalg.svd(stack, compute_uv=False)[..., :n_s]
    return np.sum(np.log2(1.0 + (snr / n_s) * sv**2), axis=-1)


def _chunk_rates(h, combos, snr, n_s, objective, n_rf) -> np.ndarray:
    if objective == "svd":
        return svd_surrogate_rates(h[np.asarray(combos)], snr, n_s)
    return np.array([phase_extraction_rate(h[list(c), :], n_rf, snr, n_s) for c in combos])


def _merge_best(a: tuple[float, int], b: tuple[float, int]) -> tuple[float, int]:
    """Associative reduction: higher rate wins, ties go to the smaller class index."""
    if b[0] > a[0] or (b[0] == a[0] and b[1] < a[1]):
        return b
    return a


def subset_rates(
    h,
    n_sel: int,
    snr: float,
    n_s: int,
    objective: Objective = "svd",
    n_rf: int | None = None,
    budget: int = DEFAULT_BUDGET,
    workers: int = 1,
) -> np.ndarray:
    """Rate of every subset, indexed by class."""
    h = as_cmatrix(h, "channel")
    n_total = h.shape[0]
    if n_sel > n_total:
        raise ContractError(f"cannot select {n_sel} of {n_total} antennas")
    count = subset_count(n_total, n_sel)
    if count > budget:
        raise SelectionBudgetError(count, budget)
    if objective not in ("svd", "phase_extraction"):
        raise ContractError(f"unknown selection objective {objective!r}")
    if objective == "phase_extraction" and n_rf is None:
        raise ContractError("phase_extraction objective needs n_rf")

    combos = itertools.combinations(range(n_total), n_sel)
    chunks = []
    while True:
        chunk = list(itertools.islice(combos, _CHUNK))
        if not chunk:
            break
        chunks.append(chunk)

    def work(chunk):
        return _chunk_rates(h, chunk, snr, n_s, objective, n_rf)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    return np.concatenate(parts)


def exhaustive_best_subset(
    h,
    n_sel: int,
    snr: float,
    n_s: int,
    objective: Objective = "svd",
    n_rf: int | None = None,
    budget: int = DEFAULT_BUDGET,
    workers: int = 1,
) -> tuple[AntennaSubset, float]:
    rates = subset_rates(h, n_sel, snr, n_s, objective, n_rf, budget, workers)
    best = (float(rates[0]), 0)
    for chunk_start in range(0, rates.size, _CHUNK):
        part = rates[chunk_start:chunk_start + _CHUNK]
        local = int(np.argmax(part))  # first maximum within the chunk
        best = _merge_best(best, (float(part[local]), chunk_start + local))
    rate, cls = best
    n_total = np.shape(h)[0]
    logger.debug("exhaustive selection: class %d of %d, rate %.4f", cls, rates.size, rate)
    return subset_from_class(cls, n_total, n_sel), rate


def random_subset(n_total: int, n_sel: int, rng: np.random.Generator) -> AntennaSubset:
    count = subset_count(n_total, n_sel)
    return subset_from_class(int(rng.integers(0, count)), n_total, n_sel)
