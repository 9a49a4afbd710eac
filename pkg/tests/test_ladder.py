import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xbarnl import ladder, mbvd, rfnet
from xbarnl.ladder import Branch, LadderTopology
from xbarnl.rfnet import FrequencyGrid, Network

LOSSLESS = mbvd.MbvdParams(c0=100e-15, cm=10e-15, lm=1e-9, rm=0.0)
GRID = FrequencyGrid.linspace(10e9, 35e9, 2001)


def one(orientation, p=LOSSLESS):
    return LadderTopology([Branch(orientation, p)])


def test_series_branch_short_at_fs():
    assert abs(ladder.assemble(one("series"), [LOSSLESS.fs]).s21[0]) >= 0.999


def test_shunt_branch_notch_at_fs():
    assert abs(ladder.assemble(one("shunt"), [LOSSLESS.fs]).s21[0]) <= 0.01


def test_empty_topology_rejected():
    with pytest.raises(ValueError):
        LadderTopology([])
    with pytest.raises(ValueError):
        Branch("diagonal", LOSSLESS)


def test_assemble_matches_nodal_solution():
    top = ladder.reference_filter()
    f = GRID.points[::50]
    net = ladder.assemble(top, f)
    sol = ladder.solve(top, f, 1.0)
    # Thevenin EMF E into equal 50 ohm ports: S21 = 2 V_out / E
    assert np.max(np.abs(2 * sol.v_out - net.s21)) < 1e-12
    z_in = sol.v_in / sol.i_in
    assert np.max(np.abs((z_in - 50) / (z_in + 50) - net.s11)) < 1e-12


@pytest.mark.parametrize("order", ["series-shunt-series", "shunt-series-shunt", "series-shunt", "shunt-series"])
def test_reference_orders_are_reciprocal_and_passive(order):
    net = ladder.assemble(ladder.reference_filter(order=order), GRID)
    assert np.max(np.abs(net.s[:, 0, 1] - net.s[:, 1, 0])) < 1e-12
    assert np.max(np.linalg.svd(net.s, compute_uv=False)) <= 1 + 1e-12


specs = st.fixed_dictionaries({"fs": st.floats(15e9, 25e9), "k2": st.floats(0.05, 0.7), "q": st.floats(10, 500)})


@settings(max_examples=40, deadline=None)
@given(series=specs, shunt=specs, c0=st.floats(10e-15, 300e-15), ratio=st.floats(0.5, 4),
       order=st.sampled_from(["series-shunt-series", "shunt-series-shunt", "series-shunt-series-shunt"]))
def test_random_ladders_reciprocal_passive(series, shunt, c0, ratio, order):
    net = ladder.assemble(ladder.third_order_ladder(series, shunt, c0, ratio, order), GRID.points[::20])
    assert np.max(np.abs(net.s[:, 0, 1] - net.s[:, 1, 0])) < 1e-10
    assert np.max(np.linalg.svd(net.s, compute_uv=False)) <= 1 + 1e-10


def test_brick_wall_metrics():
    f = np.linspace(10e9, 34e9, 240001)
    s21 = np.where((f >= 20e9) & (f <= 24e9), 1.0, 10 ** (-30 / 20))
    s = np.zeros((f.size, 2, 2), complex)
    s[:, 1, 0] = s[:, 0, 1] = s21
    s[:, 0, 0] = s[:, 1, 1] = np.sqrt(1 - s21**2)
    m = ladder.filter_metrics(Network(FrequencyGrid(f), s))
    assert m.fc / 1e9 == pytest.approx(np.sqrt(20 * 24), rel=1e-4)
    assert m.fc / 1e9 == pytest.approx(21.9, abs=0.01)
    assert m.fbw3 == pytest.approx(4 / np.sqrt(480), rel=1e-3)
    assert m.fbw3 == pytest.approx(0.183, abs=1e-3)
    assert m.il == pytest.approx(0, abs=1e-12)
    assert m.oob == pytest.approx(30, abs=1e-9)


def test_thru_has_no_passband():
    with pytest.raises(ladder.NoPassbandError):
        ladder.filter_metrics(rfnet.thru(GRID))


def test_band_edges_interpolate():
    f = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    y = np.array([-10.0, -2.0, 0.0, -2.0, -10.0])
    lo, hi = ladder.band_edges(f, y, 3.0)
    assert lo == pytest.approx(2 - 1 / 8) and hi == pytest.approx(4 + 1 / 8)


# -- dissipation -----------------------------------------------------------


def test_lossless_network_dissipates_nothing():
    top = LadderTopology([Branch("series", LOSSLESS), Branch("shunt", mbvd.MbvdParams(200e-15, 20e-15, 1.3e-9, 0.0))])
    pd = ladder.branch_dissipation(top, GRID.points[::37], 0.05)
    assert np.max(np.abs(pd)) < 1e-14 * 0.05


def test_single_shunt_dissipation_oracle():
    p = mbvd.from_specs(18e9, 0.5, 50, 100e-15)
    f = p.fs
    e = ladder.source_voltage(1e-3, 50.0)
    z = mbvd.impedance(p, f)
    zpar = z * 50 / (z + 50)
    v = e * zpar / (50 + zpar)
    expected = 0.5 * abs(v) ** 2 * np.real(1 / z)
    got = ladder.branch_dissipation(one("shunt", p), f, 1e-3)[0]
    assert got == pytest.approx(expected, rel=1e-10)


def test_source_delivers_available_power_into_match():
    # a matched load across the source sees exactly p_available
    e = ladder.source_voltage(0.05, 50.0)
    assert 0.5 * abs(e / 2) ** 2 / 50 == pytest.approx(0.05, rel=1e-14)


@pytest.mark.parametrize("p_dbm", [-9.0, 0.0, 17.0])
def test_energy_balance(p_dbm):
    top = ladder.reference_filter()
    p = 1e-3 * 10 ** (p_dbm / 10)
    f = GRID.points
    pd, pl, pr = ladder.power_balance(top, f, p)
    assert np.max(np.abs(pd.sum(axis=1) + pl + pr - p)) < 1e-9 * p
    assert np.all(pd >= -1e-18)


def test_energy_balance_at_fc_50mw():
    top = ladder.reference_filter()
    m = ladder.filter_metrics(ladder.assemble(top, GRID))
    pd, pl, pr = ladder.power_balance(top, m.fc, 0.05)
    assert abs(pd.sum() + pl[0] + pr[0] - 0.05) < 1e-9 * 0.05


def test_lossless_resonance_is_a_conditioning_error():
    with pytest.raises(ladder.LadderConditioningError) as e:
        ladder.branch_dissipation(one("shunt"), np.array([1e9, LOSSLESS.fs]), 1e-3)
    assert e.value.frequency == LOSSLESS.fs


# -- design helpers --------------------------------------------------------


def test_reference_design_targets():
    m = ladder.filter_metrics(ladder.assemble(ladder.reference_filter(), GRID))
    # frozen from this implementation's reference run
    assert m.fc == pytest.approx(21.9987e9, rel=1e-4)
    assert m.il == pytest.approx(1.4434, abs=1e-3)
    assert m.fbw3 == pytest.approx(0.1915, abs=1e-3)
    assert m.oob == pytest.approx(12.68, abs=0.01)


def test_image_impedance_of_symmetric_t():
    top = ladder.reference_filter()
    f = np.array([20e9, 21.9e9, 23e9])
    m = ladder.assemble(top, f).to("ABCD")
    assert np.allclose(m[:, 0, 0], m[:, 1, 1])
    assert np.allclose(ladder.image_impedance(top, f) ** 2, m[:, 0, 1] / m[:, 1, 0])


def test_tune_c0_recovers_scaled_optimum():
    # the tuned value is a local minimum of the band-mean |S11|^2
    build = lambda c0: ladder.third_order_ladder(ladder.REFERENCE_SERIES, ladder.REFERENCE_SHUNT, c0)
    c0 = ladder.tune_c0_for_match(build, (20e9, 23.5e9), bounds=(5e-15, 500e-15))
    net = ladder.assemble(build(c0), np.linspace(20e9, 23.5e9, 401))
    cost = np.mean(np.abs(net.s11) ** 2)
    for c in (0.8 * c0, 1.25 * c0):
        other = ladder.assemble(build(c), np.linspace(20e9, 23.5e9, 401))
        assert np.mean(np.abs(other.s11) ** 2) >= cost - 1e-12


def test_with_eps_and_thermal_are_copies():
    top = ladder.reference_filter()
    t2 = top.with_eps(1e-3)
    assert all(b.eps == 1e-3 for b in t2) and all(b.eps == 0 for b in top)


def test_metrics_stable_under_grid_refinement():
    # 12.5 MHz spacing versus 1 MHz spacing over the same span
    a = ladder.filter_metrics(ladder.assemble(ladder.reference_filter(), GRID))
    fine = FrequencyGrid.linspace(10e9, 35e9, 25001)
    b = ladder.filter_metrics(ladder.assemble(ladder.reference_filter(), fine))
    for x, y in ((a.fc, b.fc), (a.fbw3, b.fbw3), (a.il, b.il), (a.oob, b.oob)):
        assert abs(x / y - 1) < 5e-4


def test_swapping_series_branches_keeps_s21():
    s1 = mbvd.from_specs(21.9e9, 0.47, 50, 65e-15)
    s2 = mbvd.from_specs(22.4e9, 0.40, 80, 55e-15)
    sh = mbvd.from_specs(18.3e9, 0.53, 50, 130e-15)
    a = ladder.assemble(LadderTopology([Branch("series", s1), Branch("shunt", sh), Branch("series", s2)]), GRID)
    b = ladder.assemble(LadderTopology([Branch("series", s2), Branch("shunt", sh), Branch("series", s1)]), GRID)
    assert np.max(np.abs(a.s21 - b.s21)) < 1e-12
