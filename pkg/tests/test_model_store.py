import json
import struct

import numpy as np
import pytest

from hblab_app.core.errors import FormatError
from hblab_app.core.network import RegressionOutputLayer, SoftmaxOutputLayer, forward, init_model, standard_network
from hblab_app.services import model_store


def _same_params(a, b):
    assert len(a.params) == len(b.params)
    for pa, pb in zip(a.params, b.params):
        assert set(pa) == set(pb)
        for k in pa:
            assert pa[k].dtype == pb[k].dtype
            assert np.array_equal(pa[k], pb[k])


@pytest.mark.parametrize("dtype", ["float64", "float32"])
def test_round_trip_preserves_spec_params_and_outputs(tmp_path, rng, dtype):
    model = init_model(standard_network(4, 8, SoftmaxOutputLayer(6), filters=4, fc_nodes=8), seed=12, dtype=dtype)
    model.metadata.update({"input_scale": 3.5, "final_val_loss": None})
    path = model_store.save(model, str(tmp_path / "as.hbnn"))
    loaded = model_store.load(path)
    assert loaded.spec == model.spec
    assert loaded.seed == 12 and loaded.dtype == dtype
    assert loaded.metadata == model.metadata
    _same_params(model, loaded)
    x = rng.standard_normal((3, 4, 8, 3))
    assert np.array_equal(forward(model, x)[0], forward(loaded, x)[0])


def test_parameters_follow_the_header_weights_first():
    model = init_model(standard_network(2, 4, RegressionOutputLayer(8), filters=2, fc_nodes=3), seed=0)
    blob = model_store.encode(model)
    first = model.params[1]["w"].ravel()
    tail = np.frombuffer(blob[-8 * model.params[-1]["b"].size:], dtype="<f8")
    assert np.array_equal(tail, model.params[-1]["b"])
    assert blob.find(first.astype("<f8").tobytes()) > 0
    assert blob[:4] == b"HBNN"


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b"HBDS" + b[4:],
        lambda b: b[:4] + (9).to_bytes(2, "little") + b[6:],
        lambda b: b[:-8],
        lambda b: b[:5],
        lambda b: b + b"\x00" * 8,
    ],
)
def test_corrupt_models_raise_format_errors(mutate):
    blob = model_store.encode(init_model(standard_network(2, 4, SoftmaxOutputLayer(3), filters=2, fc_nodes=3), seed=0))
    with pytest.raises(FormatError):
        model_store.decode(mutate(blob))


def test_unknown_layer_kind_is_a_format_error():
    descriptors = json.dumps([{"kind": "pool"}]).encode()
    header = json.dumps({"seed": 0, "dtype": "float64", "metadata": {}}).encode()
    blob = (
        b"HBNN" + struct.pack("<H", 1)
        + struct.pack("<I", len(descriptors)) + descriptors
        + struct.pack("<I", len(header)) + header
    )
    with pytest.raises(FormatError):
        model_store.decode(blob)
