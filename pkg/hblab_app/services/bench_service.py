"""Online latency of the CNN and SIC pipelines, plus exhaustive selection as reference."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from hblab_app.app import constants as C
from hblab_app.config.schemas import BenchConfig, EvalConfig, SystemDims, build
from hblab_app.core.network import RegressionOutputLayer, SoftmaxOutputLayer, init_model, standard_network
from hblab_app.core.selection import exhaustive_best_subset, subset_count
from hblab_app.services.evaluation import Models, check_models, run_pipeline, trial_channel

logger = logging.getLogger(__name__)

WARMUP_CALLS = 1
BENCH_METHODS = (("cnn", "cnn_das_cnn_rf"), ("sic", "cnn_das_sic"))


@dataclass(frozen=True)
class TimingRow:
    method: str
    trials: int
    mean_s: float
    median_s: float
    min_s: float
    max_s: float

    @classmethod
    def from_samples(cls, method: str, samples) -> TimingRow:
        s = np.asarray(samples, dtype=np.float64)
        return cls(method, int(s.size), float(np.mean(s)), float(np.median(s)), float(np.min(s)), float(np.max(s)))


def untrained_models(dims: SystemDims, seed: int, dtype: str = "float32") -> Models:
    """Randomly initialised networks; latency depends on the architecture only."""
    logger.warning("benchmarking untrained %s networks for N_T=%d, N_R=%d", dtype, dims.nt, dims.nr)
    sel = standard_network(
        dims.nr, dims.nt, SoftmaxOutputLayer(subset_count(dims.nr, dims.nsel)),
        C.CONV_FILTERS, C.CONV_KERNEL, C.FC_NODES, C.DROPOUT_RATE,
    )
    rf = standard_network(
        dims.nsel, dims.nt, RegressionOutputLayer(2 * dims.nt),
        C.CONV_FILTERS, C.CONV_KERNEL, C.FC_NODES, C.DROPOUT_RATE,
    )
    return Models(selection=init_model(sel, seed, dtype), precoder=init_model(rf, seed + 1, dtype))


def run_bench(config: BenchConfig, models: Models, progress: bool = False) -> list[TimingRow]:
    dims = config.dims
    eval_config = build(
        EvalConfig,
        dims=dims,
        snr_db=(config.snr_db,),
        trials=config.trials,
        seed=config.seed,
        methods=tuple(m for _, m in BENCH_METHODS),
        num_paths=config.num_paths,
        subset_budget=config.subset_budget,
    )
    check_models(eval_config, models)
    channels = [trial_channel(eval_config, t)[0] for t in range(config.trials)]

    rows = []
    for label, method in BENCH_METHODS:
        for _ in range(WARMUP_CALLS):
            run_pipeline(channels[0], method, eval_config, models, config.snr_db, 0)
        samples = [
            run_pipeline(h, method, eval_config, models, config.snr_db, t).elapsed
            for t, h in enumerate(tqdm(channels, desc=f"bench {label}", disable=not progress))
        ]
        rows.append(TimingRow.from_samples(label, samples))

    if config.include_exhaustive:
        count = subset_count(dims.nr, dims.nsel)
        if count <= config.subset_budget:
            snr = 10.0 ** (config.snr_db / 10.0)
            samples = []
            for h in tqdm(channels, desc="bench exhaustive", disable=not progress):
                t0 = time.perf_counter()
                exhaustive_best_subset(h, dims.nsel, snr, dims.ns, "svd", budget=config.subset_budget)
                samples.append(time.perf_counter() - t0)
            rows.append(TimingRow.from_samples("exhaustive_selection", samples))
        else:
            logger.info("skipping exhaustive reference: %d subsets exceed budget %d", count, config.subset_budget)

    for row in rows:
        logger.info("%s: mean %.4f s, median %.4f s over %d channels", row.method, row.mean_s, row.median_s, row.trials)
    return rows
