import math

import numpy as np
import pytest

from hblab_app.core.channel import (
    ArrayGeometry,
    PathParams,
    add_channel_noise,
    array_response_upa,
    assemble_channel,
    draw_paths,
    generate_channel,
    noise_variance_for,
    received_signal,
)
from hblab_app.core.errors import ContractError


@pytest.mark.parametrize("n, width, height", [(8, 4, 2), (16, 4, 4), (36, 6, 6), (144, 12, 12), (7, 7, 1)])
def test_layout_is_most_nearly_square(n, width, height):
    geom = ArrayGeometry.for_count(n)
    assert (geom.width, geom.height) == (width, height)


def test_square_rejects_non_square_counts():
    with pytest.raises(ContractError):
        ArrayGeometry.square(15)
    with pytest.raises(ContractError):
        ArrayGeometry(16, 4, 3)


def test_steering_vector_entries():
    geom = ArrayGeometry(6, 3, 2)
    az, el = 0.4, 1.1
    a = array_response_upa(geom, az, el)
    assert abs(np.linalg.norm(a) - 1.0) < 1e-12
    # element 5 sits at w=2, h=1
    expected = np.exp(1j * np.pi * (2 * np.sin(az) * np.sin(el) + 1 * np.cos(el))) / np.sqrt(6)
    assert abs(a[5] - expected) < 1e-12


def test_assemble_channel_matches_the_sum_of_paths():
    tx, rx = ArrayGeometry.for_count(8), ArrayGeometry.for_count(4)
    paths = (
        PathParams(gain=0.3 - 1.2j, aod=(0.1, 0.7), aoa=(-2.0, 2.1)),
        PathParams(gain=1.0 + 0.5j, aod=(1.4, 0.2), aoa=(0.9, 1.5)),
    )
    chan = assemble_channel(tx, rx, paths, pathloss=2.0)
    ref = sum(p.gain * np.outer(array_response_upa(rx, *p.aoa), np.conj(array_response_upa(tx, *p.aod))) for p in paths)
    ref *= np.sqrt(8 * 4 / (2.0 * 2))
    assert np.allclose(chan.h, ref, atol=1e-12)
    assert chan.num_paths == 2


def test_generate_channel_is_seed_deterministic():
    tx, rx = ArrayGeometry.for_count(16), ArrayGeometry.for_count(8)
    a = generate_channel(tx, rx, np.random.default_rng(3))
    b = generate_channel(tx, rx, np.random.default_rng(3))
    assert a.h.shape == (8, 16)
    assert np.array_equal(a.h, b.h)


def test_single_path_channel_has_rank_one():
    tx, rx = ArrayGeometry.for_count(16), ArrayGeometry.for_count(8)
    chan = generate_channel(tx, rx, np.random.default_rng(11), num_paths=1)
    assert np.linalg.matrix_rank(chan.h, tol=1e-9 * np.linalg.norm(chan.h)) == 1


def test_average_channel_power_is_nt_nr_over_pathloss(rng):
    tx, rx = ArrayGeometry.for_count(16), ArrayGeometry.for_count(8)
    power = np.mean([np.linalg.norm(generate_channel(tx, rx, rng).h) ** 2 for _ in range(2000)])
    assert power == pytest.approx(16 * 8, rel=0.05)


def test_noiseless_copy_is_exact(rng, complex_normal):
    h = complex_normal(rng, 4, 8)
    sample = add_channel_noise(h, math.inf, rng)
    assert sample.noise_variance == 0.0
    assert np.array_equal(sample.h_tilde, h)
    assert sample.h_tilde is not h


def test_noise_variance_follows_snr(rng, complex_normal):
    h = complex_normal(rng, 4, 8)
    per_element = np.linalg.norm(h) ** 2 / h.size
    assert noise_variance_for(h, 10.0) == pytest.approx(per_element / 10.0)
    errors = np.stack([add_channel_noise(h, 10.0, rng).h_tilde - h for _ in range(10_000)])
    assert np.mean(np.abs(errors) ** 2) == pytest.approx(per_element / 10.0, rel=0.03)
    assert abs(np.mean(errors)) < 0.01 * np.sqrt(per_element)


def test_path_gains_have_unit_power_and_angles_in_range(rng):
    paths = draw_paths(rng, 100_000)
    gains = np.array([p.gain for p in paths])
    assert np.mean(np.abs(gains) ** 2) == pytest.approx(1.0, abs=0.02)
    aod = np.array([p.aod for p in paths])
    aoa = np.array([p.aoa for p in paths])
    for angles in (aod, aoa):
        assert np.all(np.abs(angles[:, 0]) <= np.pi)
        assert np.all((angles[:, 1] >= 0.0) & (angles[:, 1] <= np.pi))
    with pytest.raises(ContractError):
        draw_paths(rng, 0)


@pytest.mark.parametrize("bad", [math.nan, -math.inf])
def test_noise_rejects_bad_snr(rng, bad):
    with pytest.raises(ContractError):
        add_channel_noise(np.eye(2), bad, rng)


def test_received_signal_without_noise(rng, complex_normal):
    h = complex_normal(rng, 4, 8)
    fr = complex_normal(rng, 8, 2)
    fb = complex_normal(rng, 2, 2)
    s = np.array([1.0, -1.0j])
    y = received_signal(h, fr, fb, s, p_avg=4.0, rng=rng, noise_variance=0.0)
    assert np.allclose(y, 2.0 * h @ fr @ fb @ s)
    with pytest.raises(ContractError):
        received_signal(h, fr, fb, np.ones(3), 1.0, rng)


def test_received_signal_noise_power(rng, complex_normal):
    h = complex_normal(rng, 4, 8)
    fr = complex_normal(rng, 8, 2)
    fb = complex_normal(rng, 2, 2)
    s = np.array([1.0, 1.0j]) / np.sqrt(2.0)
    clean = np.sqrt(3.0) * h @ fr @ fb @ s
    residual = [received_signal(h, fr, fb, s, 3.0, rng, noise_variance=0.5) - clean for _ in range(10_000)]
    power = np.mean([np.linalg.norm(r) ** 2 for r in residual])
    assert power == pytest.approx(4 * 0.5, rel=0.05)
