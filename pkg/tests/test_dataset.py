import math

import numpy as np
import pytest

from hblab_app.config.schemas import DatasetConfig, SystemDims
from hblab_app.core.channel import ArrayGeometry, generate_channel
from hblab_app.core.dataset import (
    analog_from_target,
    check_encoding,
    choose_validation,
    decode_phases,
    encode_input,
    encode_phases,
    generate,
)
from hblab_app.core.errors import ContractError, SelectionBudgetError
from hblab_app.core.precoder import (
    HybridPrecoder,
    PartitionSpec,
    check_hybrid,
    equivalent_channel_bb,
    phase_extraction_rate,
    spectral_efficiency,
)
from hblab_app.core.selection import exhaustive_best_subset, subset_count, subset_from_class

DIMS = SystemDims(nt=8, nr=6, nsel=4, nrf=4, ns=2)


def _config(**overrides):
    values = dict(dims=DIMS, num_realizations=6, num_copies=3, seed=11)
    values.update(overrides)
    return DatasetConfig(**values)


def test_encode_input_layout(complex_normal, rng):
    h = complex_normal(rng, 3, 5)
    x = encode_input(h, scale=2.0)
    assert x.shape == (3, 5, 3) and x.dtype == np.float32
    assert np.allclose(x[..., 0], np.abs(h) / 2.0, atol=1e-6)
    assert np.allclose(x[..., 1], h.real / 2.0, atol=1e-6)
    assert np.allclose(x[..., 2], h.imag / 2.0, atol=1e-6)
    check_encoding(x)
    with pytest.raises(ContractError):
        encode_input(h, scale=0.0)


def test_check_encoding_flags_inconsistent_magnitude(complex_normal, rng):
    x = encode_input(complex_normal(rng, 2, 2))
    x[0, 0, 0] += 0.1
    with pytest.raises(ContractError):
        check_encoding(x)


def test_phase_targets_round_trip_and_give_valid_analog_precoders(rng):
    phases = rng.uniform(-np.pi, np.pi, 8)
    target = encode_phases(phases)
    assert target.shape == (16,)
    assert np.allclose(target[0::2] ** 2 + target[1::2] ** 2, 1.0)
    assert np.allclose(decode_phases(target), phases)
    # an unnormalised regression output still yields unit-modulus entries
    f_rf = analog_from_target(3.0 * target, PartitionSpec(8, 4))
    assert np.allclose(np.abs(f_rf[f_rf != 0]), 1 / np.sqrt(2))
    with pytest.raises(ContractError):
        decode_phases(np.ones(3))
    with pytest.raises(ContractError):
        analog_from_target(np.ones(10), PartitionSpec(8, 4))


def test_choose_validation_keeps_a_training_realization():
    picked = choose_validation(2, 0.9, np.random.default_rng(0))
    assert len(picked) == 1
    picked = choose_validation(10, 0.3, np.random.default_rng(0))
    assert len(picked) == 3 and list(picked) == sorted(picked)
    with pytest.raises(ContractError):
        choose_validation(10, 1.0, np.random.default_rng(0))


def test_generate_shapes_and_provenance():
    sel, rf = generate(_config())
    assert len(sel) == len(rf) == 18
    assert sel.inputs.shape == (18, 6, 8, 3)
    assert rf.inputs.shape == (18, 4, 8, 3)
    assert rf.targets.shape == (18, 16)
    assert sel.manifest.output_dim == subset_count(6, 4)
    assert rf.manifest.output_dim == 16
    assert list(sel.realization) == [n for n in range(6) for _ in range(3)]
    assert list(sel.copy) == [0, 1, 2] * 6
    assert np.max(np.abs(sel.inputs[..., 0])) == pytest.approx(1.0)
    assert np.max(np.abs(rf.inputs[..., 0])) == pytest.approx(1.0)
    assert sel.manifest.validation_realizations == rf.manifest.validation_realizations
    check_encoding(sel.inputs)


def test_copies_share_the_clean_label():
    sel, rf = generate(_config())
    for n in range(6):
        rows = sel.realization == n
        assert np.unique(sel.labels[rows]).size == 1
        assert np.unique(rf.targets[rows], axis=0).shape[0] == 1


def test_labels_are_the_best_subset_of_the_clean_channel():
    config = _config(train_noise_snr_db=math.inf)
    sel, rf = generate(config)
    tx, rx = ArrayGeometry.for_count(8), ArrayGeometry.for_count(6)
    for n in range(config.num_realizations):
        h = generate_channel(tx, rx, np.random.default_rng(config.seed + n), config.num_paths, config.pathloss).h
        best, _ = exhaustive_best_subset(h, 4, 1.0, 2)
        assert sel.labels[3 * n] == best.class_index
        # noiseless copies: the precoder input is exactly the selected rows
        rows = list(subset_from_class(int(sel.labels[3 * n]), 6, 4).indices)
        expected = encode_input(h[rows], rf.manifest.input_scale)
        assert np.allclose(rf.inputs[3 * n], expected, atol=1e-6)


def test_targets_build_constraint_satisfying_precoders():
    sel, rf = generate(_config())
    spec = PartitionSpec(8, 4)
    for i in range(len(rf)):
        f_rf = analog_from_target(rf.targets[i], spec)
        h = rf.inputs[i, ..., 1].astype(np.float64) + 1j * rf.inputs[i, ..., 2]
        f_bb, _ = equivalent_channel_bb(h, f_rf, 2, 4)
        check_hybrid(HybridPrecoder(f_rf, f_bb, spec))


def test_targets_are_anchored_per_subarray_without_losing_rate():
    config = _config(train_noise_snr_db=math.inf)
    sel, rf = generate(config)
    spec = PartitionSpec(8, 4)
    tx, rx = ArrayGeometry.for_count(8), ArrayGeometry.for_count(6)
    firsts = np.arange(0, 8, spec.m)
    for n in range(config.num_realizations):
        target = rf.targets[3 * n]
        assert np.allclose(target[2 * firsts], 1.0) and np.allclose(target[2 * firsts + 1], 0.0, atol=1e-12)
        h = generate_channel(tx, rx, np.random.default_rng(config.seed + n), config.num_paths, config.pathloss).h
        h_sel = h[list(subset_from_class(int(sel.labels[3 * n]), 6, 4).indices)]
        f_rf = analog_from_target(target, spec)
        f_bb, _ = equivalent_channel_bb(h_sel, f_rf, 2, 4)
        rate = spectral_efficiency(h_sel, f_rf @ f_bb, 1.0, 2)
        assert rate == pytest.approx(phase_extraction_rate(h_sel, 4, 1.0, 2), abs=1e-9)


def test_generation_is_deterministic_and_thread_independent():
    a, a_rf = generate(_config())
    b, b_rf = generate(_config(workers=3))
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a_rf.targets, b_rf.targets)
    assert a.manifest == _without_workers(b.manifest)


def _without_workers(manifest):
    return manifest.model_copy(update={"config": manifest.config.model_copy(update={"workers": 1})})


def test_budget_error_names_the_realization():
    with pytest.raises(SelectionBudgetError) as info:
        generate(_config(subset_budget=10))
    assert info.value.realization == 0
    assert info.value.count == 15


def test_split_keeps_copies_together():
    sel, _ = generate(_config(num_realizations=10))
    train, val = sel.split(0.3, np.random.default_rng(4))
    assert len(train) + len(val) == len(sel)
    assert not set(train.realization) & set(val.realization)
    assert np.unique(val.realization).size == 3
    rec_train, rec_val = sel.recorded_split()
    assert set(np.unique(rec_val.realization)) == set(sel.manifest.validation_realizations)
    assert len(rec_train) == len(sel) - len(rec_val)
