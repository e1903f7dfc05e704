# ─────────────────────────────────────────────────────────────────────────────
# main.py — the hblab command line
#
# HOW IT WORKS
# ─────────────
# One subcommand per workflow step; each builds a validated config first, so a
# bad flag combination stops before any data is touched.
#
#   gen-data  — channels → labelled selection + precoder datasets (HBDS)
#   train     — one 14-layer CNN per task (HBNN + per-epoch loss CSV)
#   eval      — Monte Carlo sweep over methods x snr grid (results CSV)
#   bench     — online latency of the CNN and SIC pipelines (timing CSV)
#   manifest  — print the manifest of an HBDS file
#
# Heavy modules are imported inside the handlers, after --threads has been
# applied to the BLAS environment variables.
#
# WHERE TO ADD THINGS
# ───────────────────
#   New evaluation method  → app/constants.py (METHODS, METHOD_ALIASES)
#                            + services/evaluation.py run_pipeline()
#   New preset             → app/constants.py (PRESETS)
#   New env setting        → config/settings.py
# ─────────────────────────────────────────────────────────────────────────────

import argparse
import json
import logging
import math
import os
import sys

from hblab_app.app import constants as C
from hblab_app.app.runtime import configure_logging, configure_threads, run_guarded
from hblab_app.config import settings
from hblab_app.config.schemas import BenchConfig, DatasetConfig, EvalConfig, SystemDims, TrainConfig, build
from hblab_app.core.errors import ConfigError

logger = logging.getLogger(__name__)

_DIM_FLAGS = ("nt", "nr", "nsel", "nrf", "ns")


def parse_snr_grid(text: str) -> tuple[float, ...]:
    """``start:step:stop`` (inclusive) or a comma-separated list, in dB."""
    text = text.strip()
    try:
        if ":" in text:
            start, step, stop = (float(p) for p in text.split(":"))
        else:
            values = tuple(float(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse snr grid {text!r}") from exc
    if ":" in text:
        if step == 0 or (stop - start) * step < 0:
            raise ConfigError(f"snr range {text!r} never reaches its end")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + k * step, 12) for k in range(count))
    if not values:
        raise ConfigError("snr grid is empty")
    return values


def default_seed() -> int:
    return settings.HBLAB_SEED


def resolve_dims(args) -> SystemDims:
    preset = "large144" if getattr(args, "paper_scale", False) else (args.preset or "desk")
    values = dict(C.PRESETS[preset])
    for flag in _DIM_FLAGS:
        if getattr(args, flag, None) is not None:
            values[flag] = getattr(args, flag)
    return build(SystemDims, **values)


def _seed(args) -> int:
    return default_seed() if args.seed is None else args.seed


# ── Commands ─────────────────────────────────────────────────────────────────

def cmd_gen_data(args) -> None:
    dims = resolve_dims(args)
    config = build(
        DatasetConfig,
        dims=dims,
        num_paths=args.paths,
        num_realizations=args.n,
        num_copies=args.l,
        train_noise_snr_db=args.train_snr,
        label_snr_db=args.label_snr,
        seed=_seed(args),
        validation_fraction=args.validation,
        subset_budget=args.budget,
        workers=args.workers,
    )
    from hblab_app.core.dataset import generate
    from hblab_app.services import dataset_store
    from hblab_app.services.artifact_io import remove_quietly, write_text_artifact

    sel, rf = generate(config, progress=settings.HBLAB_PROGRESS)
    sel_path = os.path.join(args.out, C.SELECTION_DATASET_NAME)
    rf_path = os.path.join(args.out, C.PRECODER_DATASET_NAME)
    dump_path = os.path.join(args.out, C.MANIFEST_DUMP_NAME)
    written = []
    try:
        written.append(dataset_store.save(sel, sel_path))
        written.append(dataset_store.save(rf, rf_path))
        dump = {"selection": json.loads(sel.manifest.canonical_json()), "precoder": json.loads(rf.manifest.canonical_json())}
        written.append(write_text_artifact(dump_path, json.dumps(dump, sort_keys=True, indent=2) + "\n"))
    except BaseException:
        remove_quietly(written)
        raise
    for path in written:
        print(path)


def cmd_train(args) -> None:
    config = build(
        TrainConfig,
        task=args.task,
        epochs=args.epochs,
        batch_size=args.batch,
        learning_rate=args.lr,
        seed=_seed(args),
        dtype=args.dtype or settings.HBLAB_NN_DTYPE,
    )
    import numpy as np

    from hblab_app.core.network import RegressionOutputLayer, SoftmaxOutputLayer, init_model, standard_network, train
    from hblab_app.services import dataset_store, model_store
    from hblab_app.services.artifact_io import remove_quietly
    from hblab_app.services.results_csv import emit_loss_csv

    dataset = dataset_store.load(args.data)
    manifest = dataset.manifest
    want_task = "selection" if config.task == "as" else "precoder"
    if dataset.task != want_task:
        raise ConfigError(f"--task {config.task} needs a {want_task} dataset, {args.data} holds {dataset.task} samples")
    if any(getattr(args, f) is not None for f in _DIM_FLAGS) or args.preset:
        declared = resolve_dims(args)
        if declared != manifest.config.dims:
            raise ConfigError(f"dataset dims {manifest.config.dims.model_dump()} differ from declared {declared.model_dump()}")

    rows, cols, _ = manifest.input_shape
    output = SoftmaxOutputLayer(manifest.output_dim) if want_task == "selection" else RegressionOutputLayer(manifest.output_dim)
    spec = standard_network(rows, cols, output, C.CONV_FILTERS, C.CONV_KERNEL, C.FC_NODES, C.DROPOUT_RATE)
    model = init_model(spec, config.seed, config.dtype)
    model.metadata.update(input_scale=manifest.input_scale, dims=manifest.config.dims.model_dump())

    train_set, val_set = dataset.recorded_split()
    logger.info("training %s network on %d samples (%d validation)", want_task, len(train_set), len(val_set))
    model, history = train(
        model,
        train_set,
        config.epochs,
        config.batch_size,
        config.learning_rate,
        np.random.default_rng([config.seed, 1]),
        validation_fraction=0.0,
        validation=val_set if len(val_set) else None,
        progress=settings.HBLAB_PROGRESS,
    )
    loss_path = args.loss_csv or os.path.splitext(args.out)[0] + ".loss.csv"
    written = []
    try:
        written.append(model_store.save(model, args.out))
        written.append(emit_loss_csv(history, loss_path))
    except BaseException:
        remove_quietly(written)
        raise
    if history:
        last = history[-1]
        logger.info(
            "final epoch %d: train %.5f, validation %s; saved epoch %s",
            last.epoch, last.train_loss, last.val_loss, model.metadata.get("best_epoch", last.epoch),
        )
    for path in written:
        print(path)


def _load_models(args):
    from hblab_app.services import model_store
    from hblab_app.services.evaluation import Models

    return Models(
        selection=model_store.load(args.sel_model) if args.sel_model else None,
        precoder=model_store.load(args.rf_model) if args.rf_model else None,
    )


def cmd_eval(args) -> None:
    config = build(
        EvalConfig,
        dims=resolve_dims(args),
        snr_db=parse_snr_grid(args.snr),
        trials=args.trials,
        seed=_seed(args),
        methods=tuple(m.strip() for m in args.methods.split(",") if m.strip()),
        num_paths=args.paths,
        csi_snr_db=args.csi_snr,
        label_snr_db=args.label_snr,
        subset_budget=args.budget,
        workers=args.workers,
    )
    from hblab_app.services.evaluation import method_ranking, sweep
    from hblab_app.services.results_csv import emit_csv, summary_table

    result = sweep(config, _load_models(args), progress=settings.HBLAB_PROGRESS)
    emit_csv(result, args.out)
    sys.stdout.write(summary_table(result, method_ranking(result)))
    if result.selection is not None:
        rep = result.selection
        sys.stdout.write(
            f"selection: top-1 accuracy {rep.accuracy:.3f} (chance {rep.chance:.4f}), "
            f"surrogate rate ratio {rep.rate_ratio:.4f} over {rep.trials} channels\n"
        )


def cmd_bench(args) -> None:
    dims = resolve_dims(args)
    config = build(
        BenchConfig,
        dims=dims,
        trials=args.trials,
        seed=_seed(args),
        snr_db=args.snr,
        num_paths=args.paths,
        include_exhaustive=not args.no_exhaustive,
        subset_budget=args.budget,
    )
    from hblab_app.services.bench_service import run_bench, untrained_models
    from hblab_app.services.results_csv import emit_timing_csv

    models = _load_models(args)
    if models.selection is None or models.precoder is None:
        fresh = untrained_models(dims, config.seed, args.dtype or "float32")
        models.selection = models.selection or fresh.selection
        models.precoder = models.precoder or fresh.precoder
    rows = run_bench(config, models, progress=settings.HBLAB_PROGRESS)
    if args.out:
        emit_timing_csv(rows, args.out)
    for row in rows:
        sys.stdout.write(f"{row.method:<22} mean {row.mean_s * 1e3:9.3f} ms   median {row.median_s * 1e3:9.3f} ms\n")


def cmd_manifest(args) -> None:
    from hblab_app.services.dataset_store import manifest_dump, read_manifest

    sys.stdout.write(manifest_dump(read_manifest(args.path)))


# ── Parser ───────────────────────────────────────────────────────────────────

def _add_dims(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(C.PRESETS), help="dimension preset (default desk)")
    p.add_argument("--nt", type=int, help="transmit antennas N_T")
    p.add_argument("--nr", type=int, help="receive antennas N_R")
    p.add_argument("--nsel", type=int, help="selected receive antennas N_r")
    p.add_argument("--nrf", type=int, help="transmit RF chains")
    p.add_argument("--ns", type=int, help="data streams")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="base seed (default: $HBLAB_SEED)")
    p.add_argument("--threads", type=int, default=settings.HBLAB_THREADS, help="0 = machine parallelism")
    p.add_argument("--log-level", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=C.NAME, description=C.FORMAL)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate selection and precoder datasets")
    _add_dims(g)
    _add_common(g)
    g.add_argument("--n", type=int, default=C.NUM_REALIZATIONS, help="channel realizations")
    g.add_argument("--l", type=int, default=C.NUM_NOISY_COPIES, help="noisy copies per realization")
    g.add_argument("--paths", type=int, default=C.NUM_PATHS)
    g.add_argument("--train-snr", type=float, default=C.TRAIN_NOISE_SNR_DB, help="noise level of the copies, dB (inf = clean)")
    g.add_argument("--label-snr", type=float, default=C.LABEL_SNR_DB, help="snr of the labelling rate, dB")
    g.add_argument("--validation", type=float, default=C.VALIDATION_FRACTION)
    g.add_argument("--budget", type=int, default=settings.HBLAB_SUBSET_BUDGET)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train the selection (as) or precoder (rf) network")
    _add_dims(t)
    _add_common(t)
    t.add_argument("--task", choices=("as", "rf"), required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--epochs", type=int, default=C.EPOCHS)
    t.add_argument("--batch", type=int, default=C.BATCH_SIZE)
    t.add_argument("--lr", type=float, default=C.LEARNING_RATE)
    t.add_argument("--dtype", choices=("float64", "float32"))
    t.add_argument("--out", required=True)
    t.add_argument("--loss-csv", default=None, help="default: <out>.loss.csv")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="spectral efficiency sweep")
    _add_dims(e)
    _add_common(e)
    e.add_argument("--trials", type=int, default=C.EVAL_TRIALS)
    e.add_argument("--methods", default=",".join(("full", "oracle-pe", "ras-pe", "cnn", "sic", "ras-cnn", "ras-sic")))
    e.add_argument("--snr", default="-15:5:10", help="start:step:stop or list, dB (write --snr=-15:5:10)")
    e.add_argument("--paths", type=int, default=C.NUM_PATHS)
    e.add_argument("--csi-snr", type=float, default=math.inf, help="channel estimate quality, dB (inf = perfect)")
    e.add_argument("--label-snr", type=float, default=C.LABEL_SNR_DB)
    e.add_argument("--budget", type=int, default=settings.HBLAB_SUBSET_BUDGET)
    e.add_argument("--sel-model")
    e.add_argument("--rf-model")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="online latency of the CNN and SIC pipelines")
    _add_dims(b)
    _add_common(b)
    b.add_argument("--paper-scale", action="store_true", help="alias of --preset large144")
    b.add_argument("--trials", type=int, default=C.BENCH_TRIALS)
    b.add_argument("--snr", type=float, default=0.0, help="dB")
    b.add_argument("--paths", type=int, default=C.NUM_PATHS)
    b.add_argument("--budget", type=int, default=settings.HBLAB_SUBSET_BUDGET)
    b.add_argument("--no-exhaustive", action="store_true")
    b.add_argument("--dtype", choices=("float64", "float32"), help="untrained networks only (default float32)")
    b.add_argument("--sel-model")
    b.add_argument("--rf-model")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    m = sub.add_parser("manifest", help="print the manifest of an HBDS file")
    m.add_argument("path")
    m.add_argument("--log-level", default=None)
    m.add_argument("--threads", type=int, default=settings.HBLAB_THREADS)
    m.set_defaults(func=cmd_manifest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level or settings.HBLAB_LOG_LEVEL)
    args.workers = configure_threads(args.threads)
    return run_guarded(args.func, args)


if __name__ == "__main__":
    sys.exit(main())
