"""Partially connected hybrid precoders and the rate they achieve.

Subarray j owns the contiguous transmit antennas [j*m, (j+1)*m). Every hybrid
precoder produced here satisfies the block-diagonal structure, equal analog
amplitudes 1/sqrt(m) on the support, and ||F_RF F_BB||_F == n_rf.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from hblab_app.core.errors import ContractError
from hblab_app.core.linalg import (
    as_cmatrix,
    frobenius_norm,
    hermitian,
    logdet_hermitian_psd,
    principal_eigvec_hermitian,
    svd,
)

logger = logging.getLogger(__name__)

RANK_TOL = 1e-9
CONSTRAINT_TOL = 1e-9
SIC_EIG_TOL = 1e-8
SIC_EIG_MAX_ITER = 50_000


@dataclass(frozen=True)
class PartitionSpec:
    n_t: int
    n_rf: int

    def __post_init__(self) -> None:
        if self.n_t < 1 or self.n_rf < 1 or self.n_t % self.n_rf:
            raise ContractError(f"{self.n_t} transmit antennas cannot be split over {self.n_rf} RF chains")

    @property
    def m(self) -> int:
        return self.n_t // self.n_rf

    def block(self, j: int) -> slice:
        return slice(j * self.m, (j + 1) * self.m)


@dataclass(frozen=True)
class OptimalPrecoder:
    f: np.ndarray  # n_t x n_s, semi-unitary
    rank: int

    @property
    def degenerate(self) -> bool:
        return self.rank < self.f.shape[1]


@dataclass(frozen=True)
class HybridPrecoder:
    f_rf: np.ndarray
    f_bb: np.ndarray
    spec: PartitionSpec
    degenerate: bool = False

    def product(self) -> np.ndarray:
        return self.f_rf @ self.f_bb


def numerical_rank(s: np.ndarray) -> int:
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_TOL * s[0]))


def optimal_precoder(h, n_s: int) -> OptimalPrecoder:
    h = as_cmatrix(h, "channel")
    if not 0 < n_s <= min(h.shape):
        raise ContractError(f"n_s={n_s} streams do not fit a {h.shape} channel")
    res = svd(h)
    rank = numerical_rank(res.s)
    if rank < n_s:
        logger.warning("channel rank %d below %d streams; trailing columns span the null space", rank, n_s)
    return OptimalPrecoder(f=res.v[:, :n_s].copy(), rank=rank)


def power_matched(f, n_rf: int) -> np.ndarray:
    """Scale ``f`` to the hybrid power budget ||F||_F = n_rf."""
    f = as_cmatrix(f, "precoder")
    norm = frobenius_norm(f)
    if norm == 0.0:
        return f.copy()
    return f * (n_rf / norm)


def spectral_efficiency(h, f, snr: float, n_s: int) -> float:
    """log2 det(I + snr/n_s * H F F^H H^H), identity sized by the rows of ``h``."""
    h = as_cmatrix(h, "channel")
    f = as_cmatrix(f, "precoder")
    if f.shape[0] != h.shape[1]:
        raise ContractError(f"precoder with {f.shape[0]} rows cannot feed a {h.shape} channel")
    if snr < 0 or n_s < 1:
        raise ContractError(f"need snr >= 0 and n_s >= 1, got snr={snr}, n_s={n_s}")
    g = h @ f
    gram = np.eye(h.shape[0]) + (snr / n_s) * (g @ hermitian(g))
    return logdet_hermitian_psd(0.5 * (gram + hermitian(gram)))


def phase_extraction_rf(f_opt, spec: PartitionSpec) -> np.ndarray:
    f_opt = as_cmatrix(f_opt, "optimal precoder")
    if f_opt.shape[0] != spec.n_t or f_opt.shape[1] < spec.n_rf:
        raise ContractError(f"need a {spec.n_t} x >={spec.n_rf} optimal precoder, got {f_opt.shape}")
    f_rf = np.zeros((spec.n_t, spec.n_rf), dtype=np.complex128)
    for j in range(spec.n_rf):
        blk = spec.block(j)
        f_rf[blk, j] = np.exp(1j * np.angle(f_opt[blk, j])) / np.sqrt(spec.m)
    return f_rf


def rf_from_phases(phases: np.ndarray, spec: PartitionSpec) -> np.ndarray:
    """Block-diagonal analog precoder from one phase per transmit antenna."""
    phases = np.asarray(phases, dtype=np.float64).reshape(-1)
    if phases.size != spec.n_t:
        raise ContractError(f"need {spec.n_t} phases, got {phases.size}")
    f_rf = np.zeros((spec.n_t, spec.n_rf), dtype=np.complex128)
    for j in range(spec.n_rf):
        blk = spec.block(j)
        f_rf[blk, j] = np.exp(1j * phases[blk]) / np.sqrt(spec.m)
    return f_rf


def rf_phases(f_rf, spec: PartitionSpec) -> np.ndarray:
    """Inverse of ``rf_from_phases``: the phase of each antenna's single nonzero entry."""
    f_rf = as_cmatrix(f_rf, "analog precoder")
    return np.array([np.angle(f_rf[i, i // spec.m]) for i in range(spec.n_t)])


def anchor_block_phases(phases: np.ndarray, spec: PartitionSpec) -> np.ndarray:
    """Phases relative to the first antenna of their subarray, wrapped to (-pi, pi].

    A common rotation of one subarray is absorbed by F_BB, so the anchored
    phases give the same rate as the originals.
    """
    phases = np.asarray(phases, dtype=np.float64).reshape(-1)
    if phases.size != spec.n_t:
        raise ContractError(f"need {spec.n_t} phases, got {phases.size}")
    ref = np.repeat(phases[::spec.m], spec.m)
    return np.angle(np.exp(1j * (phases - ref)))


def equivalent_channel_bb(h, f_rf, n_s: int, n_rf: int) -> tuple[np.ndarray, bool]:
    """Baseband precoder from the top right singular vectors of H F_RF, C2 met with equality.

    Returns ``(f_bb, degenerate)``.
    """
    h = as_cmatrix(h, "channel")
    f_rf = as_cmatrix(f_rf, "analog precoder")
    if h.shape[1] != f_rf.shape[0] or f_rf.shape[1] != n_rf:
        raise ContractError(f"cannot chain H{h.shape} with F_RF{f_rf.shape} for {n_rf} RF chains")
    if not 0 < n_s <= n_rf:
        raise ContractError(f"n_s={n_s} must lie in [1, n_rf={n_rf}]")
    h_eq = h @ f_rf
    res = svd(h_eq)
    rank = numerical_rank(res.s)
    f_bb = res.v[:, :n_s].copy()
    norm = frobenius_norm(f_rf @ f_bb)
    if norm == 0.0:
        raise ContractError("analog precoder has no power")
    return f_bb * (n_rf / norm), rank < n_s


def _hybrid(h, f_rf, spec: PartitionSpec, n_s: int) -> HybridPrecoder:
    f_bb, degenerate = equivalent_channel_bb(h, f_rf, n_s, spec.n_rf)
    return HybridPrecoder(f_rf=f_rf, f_bb=f_bb, spec=spec, degenerate=degenerate)


def phase_extraction_precoder(h, spec: PartitionSpec, n_s: int) -> HybridPrecoder:
    h = as_cmatrix(h, "channel")
    f_opt = optimal_precoder(h, spec.n_rf).f
    return _hybrid(h, phase_extraction_rf(f_opt, spec), spec, n_s)


def phase_extraction_rate(h_sel, n_rf: int, snr: float, n_s: int) -> float:
    h_sel = as_cmatrix(h_sel, "channel")
    hp = phase_extraction_precoder(h_sel, PartitionSpec(h_sel.shape[1], n_rf), n_s)
    return spectral_efficiency(h_sel, hp.product(), snr, n_s)


def sic_precoder(h, spec: PartitionSpec, snr: float, n_s: int) -> HybridPrecoder:
    """Successive per-subarray analog design.

    Subarray j takes the dominant eigenvector of T_{j-1}^H T_{j-1} restricted to
    its own antennas, where T_{j-1} whitens the channel against the streams
    already placed (T_0 = H). The unit-modulus weights follow its phases and the
    residual is updated as G_j = G_{j-1} - c G_{j-1} v v^H G_{j-1} / (1 + c v^H G_{j-1} v)
    with G = T^H T and c = snr / n_rf.
    """
    h = as_cmatrix(h, "channel")
    if h.shape[1] != spec.n_t:
        raise ContractError(f"partition over {spec.n_t} antennas does not fit a {h.shape} channel")
    if snr < 0:
        raise ContractError(f"snr must be non-negative, got {snr}")
    c = snr / spec.n_rf if snr > 0 else 1.0
    gram = hermitian(h) @ h
    f_rf = np.zeros((spec.n_t, spec.n_rf), dtype=np.complex128)
    for j in range(spec.n_rf):
        blk = spec.block(j)
        g_j = gram[blk, blk]
        _, v = principal_eigvec_hermitian(0.5 * (g_j + hermitian(g_j)), SIC_EIG_TOL, SIC_EIG_MAX_ITER)
        w = np.exp(1j * np.angle(v)) / np.sqrt(spec.m)
        f_rf[blk, j] = w
        col = f_rf[:, j]
        gv = gram @ col
        gram = gram - c * np.outer(gv, np.conj(gv)) / (1.0 + c * np.real(np.vdot(col, gv)))
    return _hybrid(h, f_rf, spec, n_s)


def precoder_distance(f_opt, hp: HybridPrecoder) -> float:
    f_opt = as_cmatrix(f_opt, "optimal precoder")
    prod = hp.product()
    if prod.shape != f_opt.shape:
        raise ContractError(f"shapes differ: F_opt{f_opt.shape} vs F_RF F_BB{prod.shape}")
    return frobenius_norm(f_opt - prod) ** 2


def check_hybrid(hp: HybridPrecoder, tol: float = CONSTRAINT_TOL) -> None:
    """Raise ``ContractError`` unless ``hp`` meets block structure, C1 and C2 (equality)."""
    spec = hp.spec
    f_rf = hp.f_rf
    if f_rf.shape != (spec.n_t, spec.n_rf):
        raise ContractError(f"F_RF shape {f_rf.shape} does not match {spec}")
    mask = np.zeros(f_rf.shape, dtype=bool)
    for j in range(spec.n_rf):
        mask[spec.block(j), j] = True
    if np.any(f_rf[~mask] != 0):
        raise ContractError("F_RF has nonzero entries outside its diagonal blocks")
    if np.max(np.abs(np.abs(f_rf[mask]) - 1.0 / np.sqrt(spec.m))) > tol:
        raise ContractError("F_RF entries do not share the 1/sqrt(m) amplitude")
    if abs(frobenius_norm(hp.product()) - spec.n_rf) > tol:
        raise ContractError("||F_RF F_BB||_F differs from n_rf")
