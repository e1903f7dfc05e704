"""Clustered narrowband mmWave channels over uniform planar arrays.

Steering convention: element (w, h) of a width x height UPA with half-wavelength
spacing responds with exp(j*pi*(w*sin(az)*sin(el) + h*cos(el))) / sqrt(N), the
w index running fastest. Azimuth lives in [-pi, pi), elevation in [0, pi].

The channel sums exactly K path terms, K being the number of paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from hblab_app.core.errors import ContractError
from hblab_app.core.linalg import as_cmatrix, frobenius_norm

ELEMENT_SPACING = 0.5  # wavelengths


@dataclass(frozen=True)
class ArrayGeometry:
    total_elements: int
    width: int
    height: int
    element_spacing: float = ELEMENT_SPACING

    def __post_init__(self) -> None:
        if self.total_elements < 1 or self.width < 1 or self.height < 1:
            raise ContractError(f"array dimensions must be positive: {self}")
        if self.width * self.height != self.total_elements:
            raise ContractError(
                f"{self.width}x{self.height} UPA does not hold {self.total_elements} elements"
            )

    @classmethod
    def square(cls, n: int) -> ArrayGeometry:
        side = math.isqrt(n)
        if side * side != n:
            raise ContractError(f"{n} elements do not form a square UPA")
        return cls(n, side, side)

    @classmethod
    def for_count(cls, n: int) -> ArrayGeometry:
        """Most nearly square width x height layout (width >= height)."""
        if n < 1:
            raise ContractError(f"array needs at least one element, got {n}")
        height = max(d for d in range(1, math.isqrt(n) + 1) if n % d == 0)
        return cls(n, n // height, height)


@dataclass(frozen=True)
class PathParams:
    gain: complex
    aod: tuple[float, float]  # (azimuth, elevation) at the transmitter
    aoa: tuple[float, float]  # (azimuth, elevation) at the receiver


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray
    paths: tuple[PathParams, ...]
    pathloss: float
    num_paths: int


@dataclass(frozen=True)
class NoisySample:
    h_tilde: np.ndarray
    noise_variance: float
    parent: ChannelRealization | None = None


def array_response_upa(geom: ArrayGeometry, azimuth: float, elevation: float) -> np.ndarray:
    hgt, w = np.divmod(np.arange(geom.total_elements), geom.width)
    k = 2.0 * np.pi * geom.element_spacing
    phase = k * (w * np.sin(azimuth) * np.sin(elevation) + hgt * np.cos(elevation))
    return np.exp(1j * phase) / np.sqrt(geom.total_elements)


def draw_paths(rng: np.random.Generator, k: int) -> tuple[PathParams, ...]:
    if k < 1:
        raise ContractError(f"need at least one path, got {k}")
    gains = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / np.sqrt(2.0)
    aod_az = rng.uniform(-np.pi, np.pi, k)
    aod_el = rng.uniform(0.0, np.pi, k)
    aoa_az = rng.uniform(-np.pi, np.pi, k)
    aoa_el = rng.uniform(0.0, np.pi, k)
    return tuple(
        PathParams(
            gain=complex(gains[i]),
            aod=(float(aod_az[i]), float(aod_el[i])),
            aoa=(float(aoa_az[i]), float(aoa_el[i])),
        )
        for i in range(k)
    )


def assemble_channel(
    tx: ArrayGeometry,
    rx: ArrayGeometry,
    paths: tuple[PathParams, ...] | list[PathParams],
    pathloss: float = 1.0,
) -> ChannelRealization:
    paths = tuple(paths)
    if not paths:
        raise ContractError("channel needs at least one path")
    if not pathloss > 0:
        raise ContractError(f"pathloss must be positive, got {pathloss}")
    k = len(paths)
    h = np.zeros((rx.total_elements, tx.total_elements), dtype=np.complex128)
    for p in paths:
        a_r = array_response_upa(rx, *p.aoa)
        a_t = array_response_upa(tx, *p.aod)
        h += p.gain * np.outer(a_r, np.conj(a_t))
    h *= np.sqrt(tx.total_elements * rx.total_elements / (pathloss * k))
    return ChannelRealization(h=h, paths=paths, pathloss=float(pathloss), num_paths=k)


def generate_channel(
    tx: ArrayGeometry,
    rx: ArrayGeometry,
    rng: np.random.Generator,
    num_paths: int = 4,
    pathloss: float = 1.0,
) -> ChannelRealization:
    return assemble_channel(tx, rx, draw_paths(rng, num_paths), pathloss)


def noise_variance_for(h: np.ndarray, snr_db: float) -> float:
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    per_element = frobenius_norm(h) ** 2 / h.size
    return per_element * 10.0 ** (-snr_db / 10.0)


def complex_gaussian(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    return np.sqrt(variance / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def add_channel_noise(
    h,
    snr_db: float,
    rng: np.random.Generator,
    parent: ChannelRealization | None = None,
) -> NoisySample:
    """Element-wise CN(0, sigma^2) perturbation; ``snr_db=inf`` returns an exact copy."""
    h = as_cmatrix(h, "channel")
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise ContractError(f"snr_db must be finite or +inf, got {snr_db}")
    variance = noise_variance_for(h, snr_db)
    if variance == 0.0:
        return NoisySample(h_tilde=h.copy(), noise_variance=0.0, parent=parent)
    return NoisySample(
        h_tilde=h + complex_gaussian(rng, h.shape, variance),
        noise_variance=variance,
        parent=parent,
    )


def received_signal(
    h,
    fr,
    fb,
    s,
    p_avg: float,
    rng: np.random.Generator,
    noise_variance: float = 1.0,
) -> np.ndarray:
    """y = sqrt(P) H F_RF F_BB s + n, n ~ CN(0, noise_variance I)."""
    h = as_cmatrix(h, "channel")
    fr = as_cmatrix(fr, "analog precoder")
    fb = as_cmatrix(fb, "baseband precoder")
    s = np.asarray(s, dtype=np.complex128).reshape(-1)
    if h.shape[1] != fr.shape[0] or fr.shape[1] != fb.shape[0] or fb.shape[1] != s.size:
        raise ContractError(
            f"cannot chain H{h.shape} F_RF{fr.shape} F_BB{fb.shape} s({s.size})"
        )
    if p_avg < 0 or noise_variance < 0:
        raise ContractError("power and noise variance must be non-negative")
    y = np.sqrt(p_avg) * (h @ (fr @ (fb @ s)))
    if noise_variance > 0:
        y = y + complex_gaussian(rng, y.shape, noise_variance)
    return y
