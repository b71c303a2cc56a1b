import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vibesep.campaign import CampaignConfig, run_campaign, run_one, run_seed
from vibesep.evaluation import r_squared, r_squared_dc, spectral_flatness, validate_stationarity
from vibesep.pss import CnnConfig


def test_r_squared_perfect():
    x = np.array([1.0, 3.0, 2.0])
    assert r_squared(x, x) == 1.0


def test_r_squared_mean_estimate():
    x = np.array([1.0, 3.0, 2.0, 6.0])
    assert r_squared(x, np.full(4, x.mean())) == pytest.approx(0.0)


def test_r_squared_hand_example():
    assert r_squared([1, 2, 3, 4], [1, 2, 3, 5]) == pytest.approx(0.8)


def test_r_squared_valid_range():
    assert r_squared([9, 1, 2, 3, 4, -9], [0, 1, 2, 3, 5, 0], slice(1, 5)) == pytest.approx(0.8)


def test_r_squared_errors():
    with pytest.raises(ValueError):
        r_squared([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        r_squared([1, 2, 3], [1, 2])


@given(st.lists(st.floats(-100, 100), min_size=3, max_size=50), st.integers(0, 2**31))
def test_r_squared_at_most_one(values, seed):
    x = np.array(values)
    if np.ptp(x) < 1e-3:
        return
    est = x + np.random.default_rng(seed).standard_normal(len(x))
    assert r_squared(x, est) <= 1.0


def test_r_squared_dc_ignores_offset():
    x = np.sin(np.linspace(0, 10, 200))
    assert r_squared_dc(x, x + 5.0) == pytest.approx(1.0)
    assert r_squared(x, x + 5.0) < 0


def test_stationarity_white_noise_passes():
    # 12000 samples per frame keep the rms sampling spread near 0.65% per frame
    check = validate_stationarity(np.random.default_rng(0).standard_normal(240_000))
    assert check.passed
    assert len(check.frame_rms) == 20


def test_stationarity_spread_definition():
    x = np.concatenate([np.full(100, 1.0), np.full(100, 1.04)])
    check = validate_stationarity(x, n_frames=2, tol=0.05)
    assert check.spread == pytest.approx(0.04 / 1.02)
    assert check.passed


def test_stationarity_step_fails():
    x = np.random.default_rng(1).standard_normal(24000)
    x[12000:] *= 2
    assert not validate_stationarity(x).passed


def test_stationarity_infinite_tolerance():
    x = np.random.default_rng(2).standard_normal(2000)
    x[1000:] *= 50
    assert validate_stationarity(x, tol=np.inf).passed


def test_stationarity_too_short():
    with pytest.raises(ValueError):
        validate_stationarity(np.ones(639))


def test_flatness_extremes():
    rng = np.random.default_rng(3)
    assert spectral_flatness(rng.standard_normal(24000)) > 0.9
    assert spectral_flatness(np.cos(0.3 * np.arange(24000)) + 1e-3 * rng.standard_normal(24000)) < 0.1


# ---------------------------------------------------------------- campaign


def tiny_campaign(**kw):
    base = dict(
        snr_grid=(0.0, 20.0),
        iterations=2,
        pss_config=CnnConfig(depth=2, kernel_size=16, lag=30, max_epochs=40, patience=5),
        n_filter=51,
        K=10,
        N=6000,
        fs=6000.0,
        base_seed=3,
        tf_len=101,
    )
    base.update(kw)
    return CampaignConfig(**base)


def test_campaign_shape_and_determinism():
    cfg = tiny_campaign()
    a = run_campaign(cfg)
    b = run_campaign(cfg)
    assert a.to_dicts() == b.to_dicts()
    assert len(a.rows) == 2 * 2
    for row in a.rows:
        assert row.n_runs == cfg.iterations
        assert row.mean_r2 <= 1.0
        assert row.n_failed == 0


def test_campaign_seed_streams_disjoint():
    seeds_p = {run_seed(0, "p", c, i) for c in range(4) for i in range(50)}
    seeds_q = {run_seed(0, "q", c, i) for c in range(4) for i in range(50)}
    assert len(seeds_p) == 200 and not seeds_p & seeds_q


def test_campaign_records_failures():
    cfg = tiny_campaign(N=500, fs=500.0, targets=("q",), snr_grid=(10.0,), iterations=1)
    res = run_campaign(cfg)
    assert res.rows[0].n_failed == 1
    assert res.rows[0].mean_r2 == 0.0


def test_run_one_high_snr_periodic():
    out = run_one(tiny_campaign(), "p", 20.0, 10, 5, 5, seed=1)
    assert not out.failed
    assert out.r2 > 0.8


def test_campaign_config_validation():
    with pytest.raises(ValueError):
        tiny_campaign(snr_grid=())
    with pytest.raises(ValueError):
        tiny_campaign(iterations=0)
    with pytest.raises(ValueError):
        tiny_campaign(fault_type="None")


def test_campaign_exports(tmp_path):
    res = run_campaign(tiny_campaign(snr_grid=(20.0,), iterations=1, targets=("p",)))
    res.to_csv(tmp_path / "r.csv")
    res.to_json(tmp_path / "r.json")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].startswith("target,snr_db,V,L_mod,n_poles,mean_r2,std_r2,n_runs,n_detected")
    assert len(lines) == 2


def test_campaign_config_round_trip():
    cfg = tiny_campaign()
    assert CampaignConfig.from_dict(cfg.to_dict()) == cfg
