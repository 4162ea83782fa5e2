import math

import numpy as np
import pytest

from polarldpc.construction import construct
from polarldpc.ensemble import load_ensemble
from polarldpc.simulate import (SimConfig, binomial_sigma, bsc_llr, frame_rng, parse_eps, run_sweep,
                                transmit_all_zero)

CODE_A = load_ensemble("codeA")
SMALL = construct(CODE_A, 600)
SMALL_RANDOM = construct(CODE_A, 600, mode="random-standard")


def test_channel_flip_rate_and_seeding():
    rng = np.random.default_rng(11)
    llr = transmit_all_zero(0.1, 10**6, rng)
    np.testing.assert_allclose(np.unique(np.abs(llr)), [math.log(9)])
    assert abs(np.mean(llr < 0) - 0.1) < 1e-3
    a = transmit_all_zero(0.1, 1000, frame_rng(5, 17))
    b = transmit_all_zero(0.1, 1000, frame_rng(5, 17))
    c = transmit_all_zero(0.1, 1000, frame_rng(5, 18))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert bsc_llr(0.5) == 0.0
    with pytest.raises(ValueError):
        transmit_all_zero(0.0, 10, rng)


def test_parse_eps():
    assert parse_eps("0.002:0.002:0.01") == [0.002, 0.004, 0.006, 0.008, 0.01]
    assert parse_eps("0.01, 0.02") == [0.01, 0.02]
    assert parse_eps("0.05:0.01:0.05") == [0.05]
    for bad in ("0.1:0.01", "0.1:-0.01:0.2", "0.2:0.01:0.1", "abc"):
        with pytest.raises(ValueError):
            parse_eps(bad)


def test_config_validation():
    for kwargs in ({"eps": (), "frames": 1}, {"eps": (0.0,), "frames": 1}, {"eps": (0.6,), "frames": 1},
                   {"eps": (0.1,), "frames": 0}, {"eps": (0.1,), "frames": 5, "max_iter": 0},
                   {"eps": (0.1,), "frames": 5, "stop_after": 0}, {"eps": (0.1,), "frames": 5, "chunk": 0}):
        with pytest.raises(ValueError):
            SimConfig(**kwargs)
    with pytest.raises(ValueError):
        run_sweep(SMALL, SimConfig((0.1,), 1), workers=0)


def test_report_invariants_and_csv():
    cfg = SimConfig((0.005, 0.02, 0.04), 200, max_iter=30, seed=3, stop_after=40)
    rep = run_sweep(SMALL, cfg)
    assert rep.n_layers == 3 and rep.n_var == 600
    for p in rep.points:
        assert sum(p.iter_hist) == p.frames
        assert p.detected_errors + p.undetected_errors == p.frame_errors
        assert p.bit_errors >= p.frame_errors
        assert max(p.layer_frame_errors) <= p.frame_errors <= sum(p.layer_frame_errors)
        assert p.frame_errors <= 40 and (p.frames == 200 or p.frame_errors == 40)
        assert 1 <= p.mean_iters <= 30
    assert rep.points[-1].frame_errors == 40 and rep.points[-1].frames < 200
    lines = rep.to_csv().splitlines()
    assert lines[0] == ("eps,frames,frame_errors,bit_errors,fer,ber,fer_layer0,fer_layer1,fer_layer2,"
                        "mean_iters,detected_errors,undetected_errors")
    assert len(lines) == 4


def test_reproducible_and_worker_independent():
    cfg = SimConfig((0.01, 0.03), 150, max_iter=20, seed=9, stop_after=25, chunk=8)
    one = run_sweep(SMALL, cfg, workers=1)
    again = run_sweep(SMALL, cfg, workers=1)
    many = run_sweep(SMALL, cfg, workers=4)
    assert one == again == many
    assert one.to_csv() == many.to_csv()
    other = run_sweep(SMALL, SimConfig((0.01, 0.03), 150, max_iter=20, seed=10, stop_after=25, chunk=8))
    assert other != one


def test_low_noise_code_a_4096_has_no_errors():
    g = construct(CODE_A, 4096)
    rep = run_sweep(g, SimConfig((1e-4,), 1000, seed=1, stop_after=None))
    assert rep.points[0].frames == 1000
    assert rep.points[0].frame_errors == 0


def _within(p1, n1, p2, n2, k=3.0):
    sigma = math.sqrt(binomial_sigma(p1, n1) ** 2 + binomial_sigma(p2, n2) ** 2)
    return abs(p1 - p2) <= k * max(sigma, 1.0 / min(n1, n2))


def test_random_codewords_match_all_zero():
    eps = (0.015, 0.03)
    zero = run_sweep(SMALL_RANDOM, SimConfig(eps, 400, max_iter=30, seed=2, stop_after=None))
    rand = run_sweep(SMALL_RANDOM, SimConfig(eps, 400, max_iter=30, seed=2, stop_after=None, random_codeword=True))
    for a, b in zip(zero.points, rand.points):
        assert _within(a.fer, a.frames, b.fer, b.frames)
    assert zero.points[1].frame_errors > 0


def test_fer_increases_with_eps():
    rep = run_sweep(SMALL_RANDOM, SimConfig(parse_eps("0.01:0.01:0.05"), 300, max_iter=30, seed=4, stop_after=None))
    fers = [p.fer for p in rep.points]
    for (a, pa), (b, pb) in zip(zip(fers, rep.points), zip(fers[1:], rep.points[1:])):
        assert b >= a - 3 * max(binomial_sigma(a, pa.frames), binomial_sigma(b, pb.frames))
    assert fers[-1] > fers[0]


def test_binomial_sigma():
    assert binomial_sigma(0.5, 100) == pytest.approx(0.05)
    assert binomial_sigma(0.0, 10) == 0.0
    assert binomial_sigma(0.3, 0) == math.inf
