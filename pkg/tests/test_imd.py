import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xbarnl import imd, ladder, mbvd
from xbarnl.imd import TwoToneRecord, TwoToneStimulus
from xbarnl.thermal import SAPPHIRE, envelope_transfer

TOY = mbvd.from_specs(100e6, 0.47, 50, 32e-12)
TOY_EPS = 1e-3


def toy(eps=TOY_EPS, thermal=None):
    return ladder.LadderTopology([ladder.Branch("series", TOY, thermal, eps)])


def line_records(iip3, powers, gain=-2.0):
    # fund: p + gain ; imd3: 3p + gain - 2 iip3 (both meet at iip3 + gain)
    return [TwoToneRecord(p, p + gain, 3 * p + gain - 2 * iip3, 3 * p + gain - 2 * iip3 - 1) for p in powers]


# -- stimulus ----------------------------------------------------------------


def test_stimulus_frequencies():
    s = TwoToneStimulus(22e9, 1e6, 3.0)
    assert (s.f2, s.f_lo, s.f_hi) == (22.001e9, 21.999e9, 22.002e9)
    assert TwoToneStimulus.from_total_power(22e9, 1e6, 10.0).p_per_tone == pytest.approx(10 - 3.0103, abs=1e-4)
    with pytest.raises(ValueError):
        TwoToneStimulus(1e6, 2e6)


def test_nonpositive_product_frequency_rejected():
    # f_lo = 2 f1 - f2 <= 0 needs delta_f >= f1, which the stimulus already refuses
    with pytest.raises(ValueError):
        imd.imd3_spectrum(toy(), TwoToneStimulus(1e6, 1e6))


# -- perturbation solver -------------------------------------------------------


def test_linear_network_has_no_products():
    rec = imd.imd3_spectrum(toy(0.0), TwoToneStimulus(99.9e6, 100e3, 0.0), mechanisms=("cubic", "thermal"))
    assert rec.p_imd3_lo == -np.inf and rec.p_imd3_hi == -np.inf and np.isfinite(rec.p_fund)


def test_small_signal_slope_is_three():
    recs = imd.power_sweep_records(toy(), TwoToneStimulus(99.9e6, 100e3), np.arange(-20, -9, 1.0))
    p = np.array([r.p_in for r in recs])
    for y in ([r.p_imd3_lo for r in recs], [r.p_imd3_hi for r in recs]):
        assert np.polyfit(p, y, 1)[0] == pytest.approx(3.0, abs=0.01)
    assert np.polyfit(p, [r.p_fund for r in recs], 1)[0] == pytest.approx(1.0, abs=1e-9)


def test_imd3_scales_with_eps_squared():
    s = TwoToneStimulus(99.9e6, 100e3, -5)
    a = imd.imd3_spectrum(toy(1e-3), s)
    b = imd.imd3_spectrum(toy(1e-2), s)
    assert b.p_imd3_lo - a.p_imd3_lo == pytest.approx(20.0, abs=1e-9)


def test_thermal_mechanism_follows_envelope_filter():
    top = ladder.reference_filter(thermal=SAPPHIRE)
    recs = {df: imd.imd3_spectrum(top, TwoToneStimulus(21.5e9, df, 10.0), mechanisms=("thermal",))
            for df in (1e3, 1e6)}
    measured = recs[1e6].p_imd3_hi - recs[1e3].p_imd3_hi
    expected = 20 * np.log10(abs(envelope_transfer(SAPPHIRE, 1e6)) / abs(envelope_transfer(SAPPHIRE, 1e3)))
    assert measured == pytest.approx(expected, abs=0.1)


def test_unknown_mechanism():
    with pytest.raises(ValueError):
        imd.imd3_spectrum(toy(), TwoToneStimulus(99.9e6, 100e3), mechanisms=("magic",))


def test_noise_floor_adds_power():
    rec = imd.imd3_spectrum(toy(0.0), TwoToneStimulus(99.9e6, 100e3), noise_floor=-120.0)
    assert rec.p_imd3_lo == pytest.approx(-120.0)


# -- IIP3 extraction -----------------------------------------------------------


def test_single_record_direct_formula():
    r = imd.iip3_from_records([TwoToneRecord(0.0, -2.0, -60.0, -61.0)], min_points=1)
    assert r.iip3 == pytest.approx(29.0)


def test_constructed_intersection():
    r = imd.iip3_from_records(line_records(46.5, np.arange(0, 21, 2.0)))
    assert r.iip3 == pytest.approx(46.5, abs=0.01)
    assert r.fund_slope == pytest.approx(1) and r.imd3_slope == pytest.approx(3)


@settings(max_examples=50, deadline=None)
@given(iip3=st.floats(10, 70), gain=st.floats(-10, 0))
def test_intersection_property(iip3, gain):
    r = imd.iip3_from_records(line_records(iip3, np.arange(0, 21, 2.0), gain), noise_floor=-300)
    assert r.iip3 == pytest.approx(iip3, abs=1e-9)


def test_below_floor_is_sensitivity_limited():
    recs = line_records(80.0, np.arange(-20, 0, 2.0))  # products far below -110 dBm
    with pytest.raises(imd.SensitivityLimitError) as e:
        imd.iip3_from_records(recs, noise_floor=-110.0)
    assert e.value.result.clipped_by_sensitivity


def test_partial_points_still_report_estimate():
    recs = line_records(40.0, np.arange(-20, 21, 2.0))
    with pytest.raises(imd.SensitivityLimitError) as e:
        imd.iip3_from_records(recs, noise_floor=-45.0, min_points=8)
    assert e.value.result.iip3 == pytest.approx(40.0) and e.value.result.n_points < 8


def test_sweep_frequency_count():
    assert imd.sweep_frequencies(17e9, 28e9, 0.5e9).size == 23


def test_repeats_of_noiseless_sweep_are_identical():
    top = ladder.reference_filter(eps=1e-6)
    stim = TwoToneStimulus(20e9, 1e6)
    pw = np.arange(0, 21, 2.0)
    a = imd.iip3_vs_frequency(top, 20e9, 22e9, 0.5e9, stim, pw, repeats=1)
    b = imd.iip3_vs_frequency(top, 20e9, 22e9, 0.5e9, stim, pw, repeats=12)
    assert [r.iip3 for _, r in a] == [r.iip3 for _, r in b]


def test_noisy_sweep_is_seeded():
    top = ladder.reference_filter(eps=1e-6)
    stim = TwoToneStimulus(20e9, 1e6)
    pw = np.arange(0, 21, 2.0)
    run = lambda seed: [r.iip3 for _, r in imd.iip3_vs_frequency(top, 20e9, 22e9, 0.5e9, stim, pw, 12, 0.2, seed)]
    assert run(3) == run(3)
    assert run(3) != run(4)


def test_gaps_not_failures():
    top = ladder.reference_filter(eps=1e-12)
    out = imd.iip3_vs_frequency(top, 17e9, 18e9, 0.5e9, TwoToneStimulus(17e9, 1e6), np.arange(-20, -9, 2.0))
    assert all(np.isnan(r.iip3) and r.clipped_by_sensitivity for _, r in out)


def test_calibrate_eps_closed_form():
    top = ladder.reference_filter()
    stim = TwoToneStimulus(21.5e9, 1e6)
    pw = np.arange(0, 21, 2.0)
    eps = imd.calibrate_eps(top, stim, pw, 48.0)
    recs = imd.power_sweep_records(top.with_eps(eps), stim, pw)
    assert imd.iip3_from_records(recs).iip3 == pytest.approx(48.0, abs=1e-9)


def test_calibrate_eps_with_thermal():
    top = ladder.reference_filter(thermal=SAPPHIRE)
    stim = TwoToneStimulus(21.5e9, 1e6)
    pw = np.arange(0, 21, 2.0)
    kw = dict(mechanisms=("cubic", "thermal"), tcf=-80.0)
    eps = imd.calibrate_eps(top, stim, pw, 45.0, **kw)
    recs = imd.power_sweep_records(top.with_eps(eps), stim, pw, **kw)
    assert imd.iip3_from_records(recs).iip3 == pytest.approx(45.0, abs=1e-6)


def test_two_tone_csv_round_trip(tmp_path):
    recs = line_records(30.0, [0.0, 2.0])
    path = tmp_path / "tt.csv"
    imd.write_two_tone_csv(path, [(21e9, recs[0], 30.0), (21e9, recs[1], 30.0), (22e9, recs[0], np.nan)])
    back = imd.read_two_tone_csv(path)
    assert sorted(back) == [21e9, 22e9] and back[21e9] == recs


# -- time-domain oracle --------------------------------------------------------


@pytest.mark.slow
def test_oracle_linear_products_at_noise():
    o = imd.time_domain_oracle(TOY, 0.0, TwoToneStimulus(99.9e6, 100e3, 0.0))
    assert o["imd3_lo"] - o["f1"] < -150 and o["imd3_hi"] - o["f1"] < -150


@pytest.mark.slow
def test_oracle_slope_and_agreement():
    out = {}
    for p in (-5.0, 0.0):
        s = TwoToneStimulus(99.9e6, 100e3, p)
        out[p] = (imd.time_domain_oracle(TOY, TOY_EPS, s), imd.imd3_spectrum(toy(), s))
    for key in ("imd3_lo", "imd3_hi"):
        slope = (out[0.0][0][key] - out[-5.0][0][key]) / 5
        assert slope == pytest.approx(3.0, abs=0.1 / 5)
    for o, rec in out.values():
        assert o["f1"] == pytest.approx(rec.p_fund, abs=0.05)
        assert o["imd3_lo"] == pytest.approx(rec.p_imd3_lo, abs=0.5)
        assert o["imd3_hi"] == pytest.approx(rec.p_imd3_hi, abs=0.5)


def test_oracle_rejects_short_runs():
    with pytest.raises(ValueError):
        imd.time_domain_oracle(TOY, TOY_EPS, TwoToneStimulus(99.9e6, 100e3), duration=5e-5)


def test_oracle_detects_instability():
    with pytest.raises(imd.OracleInstabilityError):
        imd.time_domain_oracle(TOY, TOY_EPS, TwoToneStimulus(99.9e6, 100e3), steps_per_cycle=0.2,
                               duration=25 / 100e3, settle=2 / 100e3)


def test_cubic_products_step_exactly_three_db():
    s = TwoToneStimulus(99.9e6, 100e3)
    a = imd.imd3_spectrum(toy(), s.at(p_per_tone=-7.0))
    b = imd.imd3_spectrum(toy(), s.at(p_per_tone=-6.0))
    assert b.p_imd3_lo - a.p_imd3_lo == pytest.approx(3.0, abs=1e-9)
    assert b.p_imd3_hi - a.p_imd3_hi == pytest.approx(3.0, abs=1e-9)


def test_records_below_floor_do_not_move_iip3():
    recs = line_records(40.0, np.arange(0, 21, 2.0))
    extra = [TwoToneRecord(p, p - 2, -150.0, -150.0) for p in (-30.0, -25.0)]
    assert imd.iip3_from_records(recs + extra).iip3 == imd.iip3_from_records(recs).iip3


def test_flat_network_products_symmetric():
    # 1 kHz spacing: the ladder is flat over [f1 - df, f2 + df]
    top = ladder.reference_filter(eps=1e-6)
    rec = imd.imd3_spectrum(top, TwoToneStimulus(21.5e9, 1e3, 5.0))
    assert abs(rec.p_imd3_lo - rec.p_imd3_hi) < 0.1
