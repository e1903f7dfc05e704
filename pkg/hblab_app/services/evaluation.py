"""Monte Carlo comparison of selection + precoder pipelines.

Every trial draws one channel (``default_rng(seed + trial)``) and evaluates every
method at every snr on it, so rates are paired across methods. Random selection
draws its subset from ``default_rng([seed, trial, 3])``; all RAS methods of a
trial therefore share the subset.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from tqdm import tqdm

from hblab_app.app.constants import NEEDS_PRECODER_MODEL, NEEDS_SELECTION_MODEL
from hblab_app.config.schemas import EvalConfig
from hblab_app.core.channel import ArrayGeometry, add_channel_noise, generate_channel
from hblab_app.core.dataset import analog_from_target, encode_input
from hblab_app.core.errors import ConfigError, HblabError
from hblab_app.core.linalg import as_cmatrix
from hblab_app.core.network import Model, predict_class, predict_regression
from hblab_app.core.precoder import (
    HybridPrecoder,
    PartitionSpec,
    equivalent_channel_bb,
    optimal_precoder,
    phase_extraction_precoder,
    power_matched,
    sic_precoder,
    spectral_efficiency,
)
from hblab_app.core.selection import (
    AntennaSubset,
    apply_selection,
    exhaustive_best_subset,
    random_subset,
    subset_count,
    subset_from_class,
    subset_rates,
)

logger = logging.getLogger(__name__)

RAS_STREAM = 3
CSI_STREAM = 2


@dataclass
class Models:
    selection: Model | None = None
    precoder: Model | None = None


@dataclass(frozen=True)
class PipelineOutcome:
    rate: float
    elapsed: float
    subset: AntennaSubset | None = None
    precoder: HybridPrecoder | None = None


@dataclass(frozen=True)
class EvalCell:
    mean_rate: float
    std_rate: float
    trials: int
    mean_time: float


@dataclass(frozen=True)
class SelectionReport:
    accuracy: float
    chance: float
    rate_ratio: float
    trials: int


@dataclass
class EvalResult:
    methods: tuple[str, ...]
    snr_db: tuple[float, ...]
    rates: np.ndarray   # (methods, snrs, trials)
    times: np.ndarray   # (methods, snrs, trials), seconds
    selection: SelectionReport | None = None
    cells: dict[tuple[str, float], EvalCell] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.cells:
            for i, m in enumerate(self.methods):
                for j, s in enumerate(self.snr_db):
                    r = self.rates[i, j]
                    self.cells[(m, s)] = EvalCell(float(np.mean(r)), float(np.std(r)), int(r.size), float(np.mean(self.times[i, j])))

    def mean_time(self, method: str) -> float:
        """Mean online latency per channel over every trial and snr."""
        return float(np.mean(self.times[self.methods.index(method)]))


def _input_scale(model: Model) -> float:
    return float(model.metadata.get("input_scale", 1.0))


def check_models(config: EvalConfig, models: Models) -> None:
    """ConfigError when a requested method lacks its network or a network does not fit the dims."""
    dims = config.dims
    missing = [m for m in config.methods if m in NEEDS_SELECTION_MODEL and models.selection is None]
    missing += [m for m in config.methods if m in NEEDS_PRECODER_MODEL and models.precoder is None and m not in missing]
    if missing:
        raise ConfigError(f"no trained model for method(s): {', '.join(missing)}")
    if models.selection is not None:
        want = ((dims.nr, dims.nt, 3), subset_count(dims.nr, dims.nsel))
        got = (models.selection.input_shape, models.selection.output_dim)
        if models.selection.task != "selection" or got != want:
            raise ConfigError(f"selection network {got} does not match dims {want} (input shape, classes)")
    if models.precoder is not None:
        want = ((dims.nsel, dims.nt, 3), 2 * dims.nt)
        got = (models.precoder.input_shape, models.precoder.output_dim)
        if models.precoder.task != "precoder" or got != want:
            raise ConfigError(f"precoder network {got} does not match dims {want} (input shape, outputs)")


def cnn_select(design: np.ndarray, model: Model, n_sel: int) -> AntennaSubset:
    cls, _ = predict_class(model, encode_input(design, _input_scale(model)))
    return subset_from_class(cls, design.shape[0], n_sel)


def cnn_precoder(design_sel: np.ndarray, model: Model, spec: PartitionSpec, n_s: int) -> HybridPrecoder:
    target = predict_regression(model, encode_input(design_sel, _input_scale(model)))
    f_rf = analog_from_target(target, spec)
    f_bb, degenerate = equivalent_channel_bb(design_sel, f_rf, n_s, spec.n_rf)
    return HybridPrecoder(f_rf=f_rf, f_bb=f_bb, spec=spec, degenerate=degenerate)


def ras_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial, RAS_STREAM])


def run_pipeline(
    channel,
    method: str,
    config: EvalConfig,
    models: Models,
    snr_db: float,
    trial: int = 0,
    estimate=None,
) -> PipelineOutcome:
    """Rate on ``channel`` of ``method`` designed from ``estimate`` (the channel itself by default).

    ``elapsed`` covers the online stages only: selection and precoder design.
    """
    h = as_cmatrix(channel, "channel")
    design = h if estimate is None else as_cmatrix(estimate, "channel estimate")
    dims = config.dims
    if h.shape != (dims.nr, dims.nt) or design.shape != h.shape:
        raise ConfigError(f"channel {h.shape} does not match dims ({dims.nr}, {dims.nt})")
    if (method in NEEDS_SELECTION_MODEL and models.selection is None) or (
        method in NEEDS_PRECODER_MODEL and models.precoder is None
    ):
        raise ConfigError(f"no trained model for method: {method}")
    snr = 10.0 ** (snr_db / 10.0)
    spec = PartitionSpec(dims.nt, dims.nrf)

    if method == "full_array_optimal":
        t0 = time.perf_counter()
        f = power_matched(optimal_precoder(design, dims.ns).f, dims.nrf)
        elapsed = time.perf_counter() - t0
        return PipelineOutcome(spectral_efficiency(h, f, snr, dims.ns), elapsed)

    t0 = time.perf_counter()
    if method == "oracle_das_phase_extraction":
        subset, _ = exhaustive_best_subset(
            design, dims.nsel, snr, dims.ns, "phase_extraction", n_rf=dims.nrf, budget=config.subset_budget
        )
    elif method in ("cnn_das_cnn_rf", "cnn_das_sic"):
        subset = cnn_select(design, models.selection, dims.nsel)
    elif method in ("ras_phase_extraction", "ras_cnn_rf", "ras_sic"):
        subset = random_subset(dims.nr, dims.nsel, ras_rng(config.seed, trial))
    else:
        raise ConfigError(f"unknown method {method!r}")
    design_sel = apply_selection(design, subset)
    if method.endswith("phase_extraction"):
        hp = phase_extraction_precoder(design_sel, spec, dims.ns)
    elif method.endswith("cnn_rf"):
        hp = cnn_precoder(design_sel, models.precoder, spec, dims.ns)
    else:
        hp = sic_precoder(design_sel, spec, snr, dims.ns)
    elapsed = time.perf_counter() - t0
    rate = spectral_efficiency(apply_selection(h, subset), hp.product(), snr, dims.ns)
    return PipelineOutcome(rate, elapsed, subset, hp)


def trial_channel(config: EvalConfig, trial: int) -> tuple[np.ndarray, np.ndarray | None]:
    """(true channel, design estimate or None) of one trial."""
    dims = config.dims
    rng = np.random.default_rng(config.seed + trial)
    chan = generate_channel(ArrayGeometry.for_count(dims.nt), ArrayGeometry.for_count(dims.nr), rng, config.num_paths, config.pathloss)
    if math.isinf(config.csi_snr_db):
        return chan.h, None
    noisy = add_channel_noise(chan.h, config.csi_snr_db, np.random.default_rng([config.seed, trial, CSI_STREAM]))
    return chan.h, noisy.h_tilde


def _run_trial(config: EvalConfig, models: Models, trial: int):
    rates = np.empty((len(config.methods), len(config.snr_db)))
    times = np.empty_like(rates)
    selection_hit = None
    h, estimate = trial_channel(config, trial)
    try:
        for i, method in enumerate(config.methods):
            for j, snr_db in enumerate(config.snr_db):
                out = run_pipeline(h, method, config, models, snr_db, trial, estimate)
                rates[i, j], times[i, j] = out.rate, out.elapsed
        if models.selection is not None:
            selection_hit = _selection_check(config, models.selection, h if estimate is None else estimate)
    except HblabError as exc:
        logger.error("trial %d failed: %s", trial, exc)
        if hasattr(exc, "add_note"):
            exc.add_note(f"while evaluating trial {trial}")
        raise
    logger.debug("trial %d done", trial)
    return rates, times, selection_hit


def _selection_check(config: EvalConfig, model: Model, design: np.ndarray) -> tuple[bool, float, float]:
    """(CNN matches the labeller, surrogate rate of CNN subset, best surrogate rate)."""
    dims = config.dims
    label_snr = 10.0 ** (config.label_snr_db / 10.0)
    rates = subset_rates(design, dims.nsel, label_snr, dims.ns, "svd", budget=config.subset_budget)
    best = int(np.argmax(rates))  # first maximum, same tie rule as the labeller
    picked = cnn_select(design, model, dims.nsel).class_index
    return picked == best, float(rates[picked]), float(rates[best])


def sweep(config: EvalConfig, models: Models, progress: bool = False) -> EvalResult:
    check_models(config, models)

    def work(trial: int):
        return _run_trial(config, models, trial)

    trials = range(config.trials)
    if config.workers > 1 and config.trials > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(tqdm(pool.map(work, trials), total=config.trials, desc="eval", disable=not progress))
    else:
        outcomes = [work(t) for t in tqdm(trials, desc="eval", disable=not progress)]

    rates = np.stack([o[0] for o in outcomes], axis=-1)
    times = np.stack([o[1] for o in outcomes], axis=-1)
    report = None
    if models.selection is not None:
        hits = [o[2] for o in outcomes]
        report = SelectionReport(
            accuracy=sum(h[0] for h in hits) / len(hits),
            chance=1.0 / subset_count(config.dims.nr, config.dims.nsel),
            rate_ratio=float(np.mean([h[1] for h in hits]) / np.mean([h[2] for h in hits])),
            trials=len(hits),
        )
    result = EvalResult(config.methods, config.snr_db, rates, times, report)
    logger.info("sweep finished: %d methods x %d snrs x %d trials", len(config.methods), len(config.snr_db), config.trials)
    return result


def method_ranking(result: EvalResult) -> list[tuple[str, float]]:
    """Methods ordered by their rate averaged over the snr grid, best first."""
    avg = [(m, float(np.mean(result.rates[i]))) for i, m in enumerate(result.methods)]
    return sorted(avg, key=lambda t: -t[1])

