import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ipognac import fit, harness
from ipognac.config import FIT_DARK_HZ, FIT_EXTINCTION, FIT_SIGMA_PHI, ConfigError, ExperimentConfig
from ipognac.harness import QberSample, qber_estimate, sift
from ipognac.receiver import RECORD_DTYPE

from . import oracles

IDEAL = {"pbs.extinction": 0.0, "modulator.sigma_phi": 0.0, "snspd.eps_pol": 0.0, "snspd.dark_hz": 0.0}


def cfg(**flat):
    return ExperimentConfig.from_flat({k.replace("__", "."): v for k, v in flat.items()})


def records(*clicks):
    """(pulse, detector) pairs to a record array."""
    rec = np.zeros(len(clicks), dtype=RECORD_DTYPE)
    for k, (p, d) in enumerate(clicks):
        rec[k] = (p, d, p * 20e-9)
    return rec


def test_qber_estimate_examples():
    assert qber_estimate(0, 10**6) == (0.0, 0.0)
    q, s = qber_estimate(175, 10**5)
    assert q == pytest.approx(0.00175)
    assert s == pytest.approx(1.32e-4, rel=2e-3)
    assert s == pytest.approx(np.sqrt(0.00175 * 0.99825 / 1e5))
    assert qber_estimate(0, 0) == (None, None)
    with pytest.raises(ValueError):
        qber_estimate(5, 0)
    with pytest.raises(ValueError):
        qber_estimate(-1, 3)


@given(st.integers(0, 10**9), st.integers(1, 10**9))
def test_qber_estimate_invariants(e, n):
    if e > n:
        with pytest.raises(ValueError):
            qber_estimate(e, n)
        return
    q, s = qber_estimate(e, n)
    assert q == e / n and 0 <= q <= 1 and s >= 0


def test_sift_hand_built_trace():
    # pulses 0..11 carry L R D L R D ...
    labels = list("LRDLRDLRDLRD")
    rec = records(
        (0, 0),          # L, right
        (1, 0),          # R, wrong
        (2, 1),          # D, dropped in K
        (3, 0), (3, 1),  # L, double click
        (4, 1),          # R, right
        (6, 1),          # L, wrong
        (10, 1),         # R, right
    )
    assert sift(labels, "K", rec) == (5, 2)
    # check basis keeps only D: pulse 2 clicked detector 1 (A) -> error
    assert sift(labels, "C", rec) == (1, 1)


def test_sift_offset_and_random_double_click():
    labels = ["L", "R", "L"]
    rec = records((100, 0), (100, 1), (101, 0), (101, 1), (102, 0))
    assert sift(labels, "K", rec, start=100) == (1, 0)
    s, e = sift(labels, "K", rec, start=100, double_click="random", rng=np.random.default_rng(0))
    assert s == 3 and 0 <= e <= 2
    with pytest.raises(ValueError):
        sift(labels, "K", rec, start=100, double_click="random")
    with pytest.raises(ValueError):
        sift(labels, "K", rec, start=100, double_click="keep")


def test_sift_exhaustive_small_traces():
    g = np.random.default_rng(4)
    for _ in range(200):
        n = int(g.integers(1, 21))
        labels = list(g.choice(list("LRD"), size=n))
        clicks = g.random((n, 2)) < 0.4
        rec = records(*[(p, d) for p in range(n) for d in (0, 1) if clicks[p, d]])
        sifted = errors = 0
        for p in range(n):
            if labels[p] == "D" or clicks[p].sum() != 1:
                continue
            sifted += 1
            hit = 0 if clicks[p, 0] else 1
            errors += hit != (0 if labels[p] == "L" else 1)
        assert sift(labels, "K", rec) == (sifted, errors)


@pytest.mark.parametrize("mode", ["fast", "pulse"])
def test_ideal_config_has_zero_qber(mode):
    c = ExperimentConfig.from_flat({**IDEAL, "run.mode": mode, "run.duration_s": 0.01, "run.bin_s": 0.002,
                                    "channel.loss_db": 0.0})
    samples, summary = harness.run_experiment(c)
    assert len(samples) == 5
    assert all(s.qber == 0.0 and s.sifted > 0 for s in samples)
    assert summary.pooled_qber == 0.0


def test_dark_only_errors_match_analytic_oracle():
    c = ExperimentConfig.from_flat({**IDEAL, "snspd.dark_hz": 2e4, "run.duration_s": 600})
    m = 0.5 * 0.01 * 0.85  # signal mean at the right detector
    d = 2e4 * 20e-9
    only_right = (1 - np.exp(-(m + d))) * np.exp(-d)
    only_wrong = np.exp(-(m + d)) * (1 - np.exp(-d))
    q = only_wrong / (only_right + only_wrong)
    assert harness.expected_qber(c) == pytest.approx(q, rel=1e-12)
    # small-probability form p_dark / (p_sig + 2 p_dark)
    assert q == pytest.approx(d / (m + 2 * d), rel=0.01)
    s = harness.run_experiment(c)[1]
    assert oracles.binomial_ok(s.total_errors, s.total_sifted, q, 4.0)


@pytest.mark.parametrize("basis", ["K", "C"])
def test_fast_and_pulse_modes_agree(basis):
    over = {"modulator.sigma_phi": 0.4, "pbs.extinction": 0.03, "channel.loss_db": 0.0, "snspd.dark_hz": 1e4,
            "receiver.basis": basis, "run.duration_s": 0.008, "run.bin_s": 0.002}
    pulse = harness.run_experiment(ExperimentConfig.from_flat({**over, "run.mode": "pulse"}))[1]
    fast = harness.run_experiment(ExperimentConfig.from_flat({**over, "run.mode": "fast"}))[1]
    q = harness.expected_qber(ExperimentConfig.from_flat(over))
    assert q > 0.005
    assert oracles.binomial_ok(pulse.total_errors, pulse.total_sifted, q, 4.0)
    assert oracles.binomial_ok(fast.total_errors, fast.total_sifted, q, 4.0)
    assert abs(pulse.total_sifted - fast.total_sifted) < 5 * np.sqrt(fast.total_sifted)


def test_random_pattern_and_random_double_clicks():
    c = cfg(run__pattern="random", run__mode="pulse", run__duration_s=0.004, run__bin_s=0.002,
            channel__loss_db=0.0, receiver__double_click="random", snspd__dark_hz=1e5)
    samples, summary = harness.run_experiment(c)
    assert summary.total_sifted > 0
    again = harness.run_experiment(c)[0]
    assert samples == again


def test_determinism_across_workers_and_repeats():
    base = cfg(run__duration_s=1800, run__seed=11)
    one = harness.csv_text(harness.run_experiment(base)[0])
    assert one == harness.csv_text(harness.run_experiment(base)[0])
    four = harness.csv_text(harness.run_experiment(cfg(run__duration_s=1800, run__seed=11, run__workers=4))[0])
    assert one == four
    other = harness.csv_text(harness.run_experiment(cfg(run__duration_s=1800, run__seed=12))[0])
    assert one != other


def test_pulse_mode_workers_deterministic():
    over = dict(run__mode="pulse", run__duration_s=0.006, run__bin_s=0.002, channel__loss_db=3.0)
    a = harness.run_experiment(cfg(**over))[0]
    b = harness.run_experiment(cfg(**over, run__workers=3))[0]
    assert a == b


def test_empty_bins_are_absent_not_zero():
    c = cfg(source__mu=0.0, snspd__dark_hz=0.0, run__duration_s=180)
    samples, summary = harness.run_experiment(c)
    assert all(s.sifted == 0 and s.qber is None and s.std is None for s in samples)
    assert summary.pooled_qber is None and summary.mean_qber is None
    text = harness.csv_text(samples)
    assert text.splitlines()[1] == "0,0,0,,"
    assert harness.read_csv(io.StringIO(text)) == samples


def test_csv_round_trip_exact():
    samples, _ = harness.run_experiment(cfg(run__duration_s=900, run__seed=2))
    text = harness.csv_text(samples)
    assert text.splitlines()[0] == "bin_start_s,sifted,errors,qber,qber_std"
    assert harness.read_csv(io.StringIO(text)) == samples
    odd = [QberSample(0.1, 3, 1, 1 / 3, np.sqrt(2 / 27)), QberSample(60.0, 0, 0, None, None)]
    assert harness.read_csv(io.StringIO(harness.csv_text(odd))) == odd
    with pytest.raises(ValueError):
        harness.read_csv(io.StringIO("a,b\n1,2\n"))


def test_summary_text_and_slope():
    samples, s = harness.run_experiment(cfg(run__duration_s=7200, snspd__drift_rate=0.0))
    assert s.n_bins == 120
    assert s.total_sifted == sum(x.sifted for x in samples)
    assert s.slope_per_hour is not None and s.slope_stderr > 0
    text = s.to_text()
    assert "pooled_qber=" in text and "config.run.seed=0" in text


def test_pulse_mode_refuses_huge_bins():
    with pytest.raises(ConfigError):
        harness.run_experiment(cfg(run__mode="pulse"))


def test_fit_defaults_are_grid_argmin():
    best = fit.grid_search()[0]
    assert best.params == {"pbs.extinction": FIT_EXTINCTION, "modulator.sigma_phi": FIT_SIGMA_PHI,
                           "snspd.dark_hz": FIT_DARK_HZ}
    assert 0.001 <= best.q_k <= 0.0025
    assert best.q_c < 0.0015


def test_key_basis_exceeds_check_basis_in_expectation():
    qk = harness.expected_qber(cfg(receiver__basis="K"))
    qc = harness.expected_qber(cfg(receiver__basis="C"))
    assert qk > qc > 0


def test_sweep_dark_counts_monotone():
    points = harness.sweep(cfg(run__duration_s=1800), "snspd.dark_hz", ["0", "100", "1000"])
    means = [p.summary.mean_qber for p in points]
    assert means[0] <= means[1] <= means[2]
    expected = [harness.expected_qber(cfg(snspd__dark_hz=v)) for v in (0.0, 100.0, 1000.0)]
    assert expected == sorted(expected)
    text = harness.sweep_csv("snspd.dark_hz", points)
    assert text.splitlines()[0] == "snspd.dark_hz,mean_qber,pooled_qber,pooled_std,total_sifted"


def test_sweep_needs_key_and_values():
    with pytest.raises(ConfigError):
        harness.sweep(cfg())
    with pytest.raises(ConfigError):
        harness.sweep(cfg(), "snspd.dark_hz", [])
    assert harness.parse_sweep_values("0:1000:3") == ["0", "500", "1000"]
    assert harness.parse_sweep_values("0, 100,1000") == ["0", "100", "1000"]


def test_compare_encoders_rows():
    rows = harness.compare_encoders(cfg(run__duration_s=600))
    by = {r.encoder: r for r in rows}
    assert set(by) == {"ipognac", "pognac-uncalibrated", "pognac-calibrated", "inline"}
    assert by["pognac-calibrated"].q_k == by["ipognac"].q_k
    assert by["pognac-calibrated"].q_c == by["ipognac"].q_c
    assert by["inline"].dop < 0.99
    assert by["ipognac"].dop > 0.998
    assert harness.comparison_csv(rows).startswith("encoder,q_k,q_c,dop\n")
