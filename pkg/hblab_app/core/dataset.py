"""Training data for the selection and precoder networks.

One clean channel per realization is labelled (best subset class, phase-extraction
analog phases on the selected rows, each subarray anchored to its first antenna);
its L noisy copies are encoded as inputs and all carry the clean label.
Realization n draws from ``default_rng(seed + n)``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from hblab_app.config.schemas import DatasetConfig, DatasetManifest, build
from hblab_app.core.channel import ArrayGeometry, add_channel_noise, generate_channel
from hblab_app.core.errors import ContractError, SelectionBudgetError
from hblab_app.core.precoder import (
    PartitionSpec,
    anchor_block_phases,
    optimal_precoder,
    phase_extraction_rf,
    rf_from_phases,
    rf_phases,
)
from hblab_app.core.selection import apply_selection, exhaustive_best_subset, subset_count

logger = logging.getLogger(__name__)

INPUT_CHANNELS = 3
CONSISTENCY_TOL = 1e-6


def encode_input(h_tilde: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """(rows, cols, 3) float32 tensor: |h|, Re h, Im h, each divided by ``scale``."""
    h_tilde = np.asarray(h_tilde)
    if h_tilde.ndim != 2:
        raise ContractError(f"channel must be 2-D, got shape {h_tilde.shape}")
    if not scale > 0:
        raise ContractError(f"input scale must be positive, got {scale}")
    h = h_tilde / scale
    return np.stack([np.abs(h), h.real, h.imag], axis=-1).astype(np.float32)


def check_encoding(x: np.ndarray, tol: float = CONSISTENCY_TOL) -> None:
    mag = np.sqrt(x[..., 1].astype(np.float64) ** 2 + x[..., 2].astype(np.float64) ** 2)
    if np.max(np.abs(mag - x[..., 0])) > tol:
        raise ContractError("magnitude channel disagrees with the real/imaginary channels")


def encode_phases(phases: np.ndarray) -> np.ndarray:
    """Interleaved (cos, sin) pairs, one per transmit antenna."""
    phases = np.asarray(phases, dtype=np.float64).reshape(-1)
    out = np.empty(2 * phases.size)
    out[0::2] = np.cos(phases)
    out[1::2] = np.sin(phases)
    return out


def decode_phases(target: np.ndarray) -> np.ndarray:
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if target.size % 2:
        raise ContractError(f"precoder target needs an even length, got {target.size}")
    return np.arctan2(target[1::2], target[0::2])


def analog_from_target(target: np.ndarray, spec: PartitionSpec) -> np.ndarray:
    """Block-diagonal F_RF from a (cos, sin) regression output; each pair is renormalised."""
    target = np.asarray(target).reshape(-1)
    if target.size != 2 * spec.n_t:
        raise ContractError(f"need {2 * spec.n_t} regression outputs, got {target.size}")
    return rf_from_phases(decode_phases(target), spec)


@dataclass
class Dataset:
    """Samples of one task; ``manifest`` describes the file the samples came from."""

    manifest: DatasetManifest
    inputs: np.ndarray           # (S, rows, N_T, 3) float32
    realization: np.ndarray      # (S,) uint32
    copy: np.ndarray             # (S,) uint32
    labels: np.ndarray | None = None    # (S,) uint32, selection task
    targets: np.ndarray | None = None   # (S, 2 N_T) float64, precoder task

    def __post_init__(self) -> None:
        s = self.inputs.shape[0]
        if self.realization.shape != (s,) or self.copy.shape != (s,):
            raise ContractError("provenance arrays must have one entry per sample")
        if self.task == "selection":
            if self.labels is None or self.labels.shape != (s,) or self.targets is not None:
                raise ContractError("selection dataset needs exactly one class label per sample")
        elif self.targets is None or self.targets.shape[0] != s or self.labels is not None:
            raise ContractError("precoder dataset needs exactly one target row per sample")

    @property
    def task(self) -> str:
        return self.manifest.task

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    def take(self, index) -> Dataset:
        return Dataset(
            manifest=self.manifest,
            inputs=self.inputs[index],
            realization=self.realization[index],
            copy=self.copy[index],
            labels=None if self.labels is None else self.labels[index],
            targets=None if self.targets is None else self.targets[index],
        )

    def split(self, validation_fraction: float, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
        return split(self, validation_fraction, rng)

    def recorded_split(self) -> tuple[Dataset, Dataset]:
        """Train/validation partition stored in the manifest at generation time."""
        return _partition(self, self.manifest.validation_realizations)


def choose_validation(num_realizations: int, fraction: float, rng: np.random.Generator) -> tuple[int, ...]:
    if not 0.0 < fraction < 1.0:
        raise ContractError(f"validation fraction must lie in (0, 1), got {fraction}")
    n_val = min(int(round(fraction * num_realizations)), num_realizations - 1)
    return tuple(sorted(int(r) for r in rng.permutation(num_realizations)[:n_val]))


def _partition(dataset: Dataset, validation_realizations) -> tuple[Dataset, Dataset]:
    is_val = np.isin(dataset.realization, np.asarray(validation_realizations, dtype=np.int64))
    return dataset.take(~is_val), dataset.take(is_val)


def split(dataset: Dataset, validation_fraction: float, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    """Split by realization so all noisy copies of a channel land on the same side."""
    realizations = np.unique(dataset.realization)
    picked = choose_validation(realizations.size, validation_fraction, rng)
    return _partition(dataset, realizations[list(picked)])


@dataclass(frozen=True)
class _Realization:
    index: int
    class_index: int
    rows: tuple[int, ...]
    phases: np.ndarray
    noisy: np.ndarray  # (L, N_R, N_T) complex


def _label_realization(config: DatasetConfig, n: int, tx, rx, spec: PartitionSpec) -> _Realization:
    dims = config.dims
    rng = np.random.default_rng(config.seed + n)
    chan = generate_channel(tx, rx, rng, config.num_paths, config.pathloss)
    label_snr = 10.0 ** (config.label_snr_db / 10.0)
    try:
        subset, _ = exhaustive_best_subset(chan.h, dims.nsel, label_snr, dims.ns, "svd", budget=config.subset_budget)
    except SelectionBudgetError as exc:
        raise SelectionBudgetError(exc.count, exc.budget, realization=n) from exc
    f_opt = optimal_precoder(apply_selection(chan.h, subset), dims.nrf).f
    phases = anchor_block_phases(rf_phases(phase_extraction_rf(f_opt, spec), spec), spec)
    noisy = np.stack(
        [add_channel_noise(chan.h, config.train_noise_snr_db, rng, parent=chan).h_tilde for _ in range(config.num_copies)]
    )
    return _Realization(n, subset.class_index, subset.indices, phases, noisy)


def _max_abs(stack: np.ndarray) -> float:
    scale = float(np.max(np.abs(stack))) if stack.size else 0.0
    return scale if scale > 0 else 1.0


def generate(config: DatasetConfig, progress: bool = False) -> tuple[Dataset, Dataset]:
    """(selection dataset, precoder dataset), N*L samples each."""
    dims = config.dims
    tx = ArrayGeometry.for_count(dims.nt)
    rx = ArrayGeometry.for_count(dims.nr)
    spec = PartitionSpec(dims.nt, dims.nrf)
    n_real, n_copies = config.num_realizations, config.num_copies

    def work(n: int) -> _Realization:
        return _label_realization(config, n, tx, rx, spec)

    if config.workers > 1 and n_real > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            realizations = list(tqdm(pool.map(work, range(n_real)), total=n_real, desc="gen-data", disable=not progress))
    else:
        realizations = [work(n) for n in tqdm(range(n_real), desc="gen-data", disable=not progress)]

    full = np.stack([r.noisy for r in realizations])  # (N, L, N_R, N_T)
    reduced = np.stack([r.noisy[:, list(r.rows), :] for r in realizations])  # (N, L, N_r, N_T)
    sel_scale, rf_scale = _max_abs(full), _max_abs(reduced)

    realization = np.repeat(np.arange(n_real, dtype=np.uint32), n_copies)
    copy = np.tile(np.arange(n_copies, dtype=np.uint32), n_real)
    sel_inputs = encode_input(full.reshape(-1, dims.nt), sel_scale).reshape(n_real * n_copies, dims.nr, dims.nt, 3)
    rf_inputs = encode_input(reduced.reshape(-1, dims.nt), rf_scale).reshape(n_real * n_copies, dims.nsel, dims.nt, 3)
    labels = np.repeat(np.array([r.class_index for r in realizations], dtype=np.uint32), n_copies)
    targets = np.repeat(np.stack([encode_phases(r.phases) for r in realizations]), n_copies, axis=0)

    validation = choose_validation(n_real, config.validation_fraction, np.random.default_rng([config.seed, 1]))
    common = dict(
        config=config,
        num_realizations=n_real,
        num_samples=n_real * n_copies,
        validation_realizations=validation,
    )
    sel_manifest = build(
        DatasetManifest, task="selection", input_shape=(dims.nr, dims.nt, 3),
        output_dim=subset_count(dims.nr, dims.nsel), input_scale=sel_scale, **common,
    )
    rf_manifest = build(
        DatasetManifest, task="precoder", input_shape=(dims.nsel, dims.nt, 3),
        output_dim=2 * dims.nt, input_scale=rf_scale, **common,
    )
    logger.info(
        "generated %d realizations x %d copies; %d distinct classes",
        n_real, n_copies, np.unique(labels).size,
    )
    return (
        Dataset(sel_manifest, sel_inputs, realization, copy, labels=labels),
        Dataset(rf_manifest, rf_inputs, realization.copy(), copy.copy(), targets=targets),
    )
