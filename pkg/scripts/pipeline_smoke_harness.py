"""
Pipeline Smoke Harness
======================
This file is intentionally simple and heavily commented so you can quickly see
the whole gen-data -> train -> eval chain work end to end without typing the
CLI commands by hand.

How to run:
    python scripts/pipeline_smoke_harness.py

What it does:
1) Generates a tiny selection + precoder dataset in a temporary directory.
2) Trains both networks for a few epochs.
3) Runs a short sweep over every method and prints the summary table.
4) Times the CNN and SIC pipelines on a handful of channels.
"""

import logging
import sys
import tempfile
from pathlib import Path

import numpy as np

# Make repo root importable when this file is run directly.
REPO_ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO_ROOT))

from hblab_app.app.runtime import configure_logging
from hblab_app.config.schemas import BenchConfig, DatasetConfig, EvalConfig, SystemDims
from hblab_app.core.dataset import generate
from hblab_app.core.network import RegressionOutputLayer, SoftmaxOutputLayer, init_model, standard_network, train
from hblab_app.services import dataset_store, model_store
from hblab_app.services.bench_service import run_bench
from hblab_app.services.evaluation import Models, method_ranking, sweep
from hblab_app.services.results_csv import summary_table

# Small enough to finish in well under a minute on a laptop.
DIMS = SystemDims(nt=8, nr=6, nsel=4, nrf=4, ns=2)


def _train(dataset, output, seed):
    rows, cols, _ = dataset.manifest.input_shape
    # Narrow layers keep the smoke run fast; the CLI always uses the full widths.
    model = init_model(standard_network(rows, cols, output, filters=8, fc_nodes=32), seed)
    model.metadata["input_scale"] = dataset.manifest.input_scale
    train_set, val_set = dataset.recorded_split()
    model, history = train(
        model, train_set, epochs=5, batch_size=20, lr=0.005,
        rng=np.random.default_rng([seed, 1]), validation_fraction=0.0, validation=val_set,
    )
    for rec in history:
        print(f"  epoch {rec.epoch}: train {rec.train_loss:.4f}  val {rec.val_loss:.4f}")
    print(f"  keeping epoch {model.metadata['best_epoch']}")
    return model


def main() -> None:
    configure_logging("WARNING")
    logging.getLogger("hblab_app").setLevel(logging.INFO)

    # Use a temp dir so this run doesn't leave artifacts behind.
    with tempfile.TemporaryDirectory() as td:
        # 1) Dataset: 20 channels x 5 noisy copies each.
        config = DatasetConfig(dims=DIMS, num_realizations=20, num_copies=5, seed=1)
        sel, rf = generate(config)
        sel_path = dataset_store.save(sel, f"{td}/sel.hbds")
        rf_path = dataset_store.save(rf, f"{td}/rf.hbds")
        print(f"Datasets written: {sel_path}, {rf_path}")

        # 2) Train both networks from the files, the same way `hblab train` does.
        print("Selection network:")
        sel_model = _train(dataset_store.load(sel_path), SoftmaxOutputLayer(sel.manifest.output_dim), seed=2)
        print("Precoder network:")
        rf_model = _train(dataset_store.load(rf_path), RegressionOutputLayer(rf.manifest.output_dim), seed=3)
        model_store.save(sel_model, f"{td}/as.hbnn")
        models = Models(selection=model_store.load(f"{td}/as.hbnn"), precoder=rf_model)

        # 3) Sweep every method on the same channels.
        result = sweep(EvalConfig(dims=DIMS, snr_db=(-10.0, 0.0, 10.0), trials=10, seed=4), models)
        print(summary_table(result, method_ranking(result)), end="")
        rep = result.selection
        print(f"Selection accuracy {rep.accuracy:.2f} (chance {rep.chance:.3f})")

        # 4) Latency of the online stages.
        for row in run_bench(BenchConfig(dims=DIMS, trials=5, seed=5), models):
            print(f"  {row.method:<22} {row.mean_s * 1e3:8.3f} ms")


if __name__ == "__main__":
    main()
