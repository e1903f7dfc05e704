import numpy as np
import pytest

from hblab_app.core.errors import FormatError
from hblab_app.core.network import EpochRecord
from hblab_app.services.bench_service import TimingRow
from hblab_app.services.evaluation import EvalResult, method_ranking
from hblab_app.services.results_csv import (
    EVAL_HEADER,
    emit_csv,
    emit_loss_csv,
    emit_timing_csv,
    read_eval_csv,
    render_eval_csv,
    summary_table,
)


@pytest.fixture
def result():
    rates = np.array(
        [
            [[1.0, 3.0], [2.0, 4.0]],
            [[0.5, 0.5], [1.0 / 3.0, 1.0]],
        ]
    )
    times = np.full_like(rates, 0.25)
    return EvalResult(("full_array_optimal", "ras_sic"), (-5.0, 5.0), rates, times)


def test_rows_follow_method_then_snr_order(result):
    lines = render_eval_csv(result).splitlines()
    assert lines[0] == ",".join(EVAL_HEADER)
    assert lines[1] == "full_array_optimal,-5.0,2.0,1.0,2,0.25"
    assert lines[3].startswith("ras_sic,-5.0,0.5,0.0,2,")
    assert len(lines) == 5


def test_emit_then_parse_returns_exact_values(tmp_path, result):
    path = emit_csv(result, str(tmp_path / "eval.csv"))
    rows = read_eval_csv(path)
    assert rows[3]["method"] == "ras_sic"
    assert rows[3]["mean_rate_bps_hz"] == float(np.mean([1.0 / 3.0, 1.0]))
    again = emit_csv(result, str(tmp_path / "again.csv"))
    assert open(path).read() == open(again).read()


def test_bad_header_is_a_format_error(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(FormatError):
        read_eval_csv(str(path))


def test_loss_csv_leaves_missing_validation_blank(tmp_path):
    history = [EpochRecord(1, 0.5, None, None), EpochRecord(2, 0.25, 0.3, 0.9)]
    text = open(emit_loss_csv(history, str(tmp_path / "loss.csv"))).read()
    assert text == "epoch,train_loss,val_loss,val_accuracy\n1,0.5,,\n2,0.25,0.3,0.9\n"


def test_timing_csv(tmp_path):
    rows = [TimingRow("cnn", 2, 0.5, 0.5, 0.25, 0.75)]
    text = open(emit_timing_csv(rows, str(tmp_path / "t.csv"))).read()
    assert text.splitlines()[1] == "cnn,2,0.5,0.5,0.25,0.75"


def test_summary_table_ranks_methods(result):
    table = summary_table(result, method_ranking(result))
    lines = table.splitlines()
    assert lines[0].startswith("method")
    assert lines[2].startswith("full_array_optimal")
    assert lines[3].startswith("ras_sic")
    assert lines[2].endswith("2.500")
