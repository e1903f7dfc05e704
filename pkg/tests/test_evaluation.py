import numpy as np
import pytest

from hblab_app.app import constants as C
from hblab_app.config.schemas import BenchConfig, EvalConfig, SystemDims
from hblab_app.core.errors import ConfigError
from hblab_app.core.network import RegressionOutputLayer, SoftmaxOutputLayer, init_model, standard_network
from hblab_app.core.precoder import check_hybrid
from hblab_app.core.selection import subset_count
from hblab_app.services.bench_service import TimingRow, run_bench, untrained_models
from hblab_app.services.evaluation import (
    Models,
    check_models,
    method_ranking,
    run_pipeline,
    sweep,
    trial_channel,
)

DIMS = SystemDims(nt=8, nr=6, nsel=4, nrf=4, ns=2)


def _models(dims=DIMS, seed=0):
    sel = standard_network(dims.nr, dims.nt, SoftmaxOutputLayer(subset_count(dims.nr, dims.nsel)), filters=4, fc_nodes=16)
    rf = standard_network(dims.nsel, dims.nt, RegressionOutputLayer(2 * dims.nt), filters=4, fc_nodes=16)
    return Models(selection=init_model(sel, seed), precoder=init_model(rf, seed + 1))


def _config(**overrides):
    values = dict(dims=DIMS, snr_db=(-10.0, 0.0, 10.0), trials=8, seed=5)
    values.update(overrides)
    return EvalConfig(**values)


@pytest.fixture(scope="module")
def result():
    return sweep(_config(), _models())


def test_result_layout(result):
    assert result.methods == C.METHODS
    assert result.rates.shape == (7, 3, 8)
    assert np.all(np.isfinite(result.rates)) and np.all(result.rates >= 0)
    assert np.all(result.times >= 0)
    cell = result.cells[("full_array_optimal", 0.0)]
    assert cell.trials == 8
    assert cell.mean_rate == pytest.approx(np.mean(result.rates[0, 1]))
    assert cell.std_rate == pytest.approx(np.std(result.rates[0, 1]))


def test_full_array_bounds_every_method(result):
    full = result.rates[0]
    for i in range(1, len(result.methods)):
        assert np.all(result.rates[i] <= full + 1e-9), result.methods[i]


def test_oracle_selection_beats_random_selection(result):
    oracle = result.rates[result.methods.index("oracle_das_phase_extraction")]
    ras = result.rates[result.methods.index("ras_phase_extraction")]
    assert np.all(oracle >= ras - 1e-12)


def test_rates_grow_with_snr(result):
    full = result.rates[0]
    assert np.all(np.diff(full, axis=0) > 0)


def test_selection_report(result):
    rep = result.selection
    assert rep.trials == 8
    assert 0.0 <= rep.accuracy <= 1.0
    assert rep.chance == pytest.approx(1 / 15)
    assert 0.0 < rep.rate_ratio <= 1.0 + 1e-12


def test_sweep_is_seed_deterministic_and_thread_independent(result):
    again = sweep(_config(workers=3), _models())
    assert np.array_equal(result.rates, again.rates)


def test_ras_methods_share_a_subset_per_trial():
    config = _config()
    models = _models()
    h, _ = trial_channel(config, 2)
    subsets = {
        run_pipeline(h, m, config, models, 0.0, trial=2).subset
        for m in ("ras_phase_extraction", "ras_cnn_rf", "ras_sic")
    }
    assert len(subsets) == 1


def test_pipeline_precoders_meet_the_constraints():
    config = _config()
    models = _models()
    h, _ = trial_channel(config, 0)
    for method in C.METHODS[1:]:
        out = run_pipeline(h, method, config, models, 5.0)
        assert out.subset.size == DIMS.nsel
        check_hybrid(out.precoder)


def test_noisy_csi_is_seeded_and_evaluated_on_the_true_channel():
    config = _config(csi_snr_db=5.0)
    h, est = trial_channel(config, 1)
    h2, est2 = trial_channel(config, 1)
    assert np.array_equal(est, est2)
    assert not np.array_equal(h, est)
    clean, none = trial_channel(_config(), 1)
    assert none is None and np.array_equal(clean, h)


def test_missing_or_mismatched_models_are_config_errors():
    with pytest.raises(ConfigError):
        check_models(_config(), Models())
    check_models(_config(methods=("full", "oracle-pe", "ras-pe", "ras-sic")), Models())
    wrong = _models(SystemDims(nt=8, nr=8, nsel=4, nrf=4, ns=2))
    with pytest.raises(ConfigError):
        check_models(_config(), wrong)
    h, _ = trial_channel(_config(), 0)
    with pytest.raises(ConfigError):
        run_pipeline(h, "cnn_das_sic", _config(), Models(), 0.0)


def test_method_aliases_and_ranking():
    config = _config(methods=("full", "ras-pe", "full"), trials=3)
    assert config.methods == ("full_array_optimal", "ras_phase_extraction")
    res = sweep(config, Models())
    ranking = method_ranking(res)
    assert ranking[0][0] == "full_array_optimal"
    assert ranking[0][1] >= ranking[1][1]
    assert res.selection is None


def test_bench_rows():
    dims = SystemDims(nt=8, nr=6, nsel=4, nrf=4, ns=2)
    rows = run_bench(BenchConfig(dims=dims, trials=3, seed=1), untrained_models(dims, 1))
    assert [r.method for r in rows] == ["cnn", "sic", "exhaustive_selection"]
    for row in rows:
        assert row.trials == 3
        assert 0 <= row.min_s <= row.median_s <= row.max_s
    rows = run_bench(BenchConfig(dims=dims, trials=2, seed=1, subset_budget=10), untrained_models(dims, 1))
    assert [r.method for r in rows] == ["cnn", "sic"]


def test_timing_row_summary():
    row = TimingRow.from_samples("x", [0.3, 0.1, 0.2])
    assert row.mean_s == pytest.approx(0.2)
    assert (row.median_s, row.min_s, row.max_s) == (0.2, 0.1, 0.3)
