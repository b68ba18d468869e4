import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import least_squares

from hfqubit import fitting
from hfqubit.fitting import DataSet
from hfqubit.relaxation import T1Model, t1_rate
from hfqubit.results import ResultTable

TRUE_T1 = T1Model(a_direct=1e4 / ((2 * np.pi * 336e9) ** 4 * 4.0), n_exponent=4.0, a_orbach=1e6, delta_orbach=71.94)


def _model(x, p):
    return p[0] * np.exp(-x / p[1]) + p[2]


@pytest.mark.parametrize("seed", range(5))
def test_damped_least_squares_agrees_with_scipy(seed):
    rng = np.random.default_rng(seed)
    x = np.linspace(0, 5, 40)
    truth = np.array([rng.uniform(1, 3), rng.uniform(0.5, 2), rng.uniform(-1, 1)])
    y = _model(x, truth) + 0.01 * rng.standard_normal(x.size)
    init = [1.0, 1.0, 0.0]
    ours = fitting.fit_damped_least_squares(_model, x, y, init)
    ref = least_squares(lambda p: _model(x, p) - y, init, xtol=1e-14, ftol=1e-14, gtol=1e-14)
    assert ours.converged
    assert np.allclose(list(ours.params.values()), ref.x, rtol=1e-5, atol=1e-7)
    assert ours.residual_norm == pytest.approx(np.linalg.norm(ref.fun), rel=1e-6)


def test_cost_history_is_monotone_and_bounds_hold():
    x = np.linspace(0, 5, 30)
    y = _model(x, [2.0, 1.0, 0.5])
    res = fitting.fit_damped_least_squares(_model, x, y, [1.0, 3.0, 0.0], bounds=([0, 1.5, -1], [5, 5, 1]))
    assert all(b <= a for a, b in zip(res.cost_history, res.cost_history[1:]))
    assert 1.5 <= res["p1"] <= 5
    assert res["p1"] == pytest.approx(1.5)


def test_initial_guess_outside_bounds_is_rejected():
    with pytest.raises(ValueError, match="outside"):
        fitting.fit_damped_least_squares(_model, [0, 1], [0, 1], [10, 1, 0], bounds=([0, 0, 0], [1, 1, 1]))


def test_uncertainties_match_linear_regression_oracle():
    rng = np.random.default_rng(7)
    x = np.linspace(0, 10, 50)
    y = 1.5 * x - 0.3 + 0.2 * rng.standard_normal(x.size)
    res = fitting.fit_damped_least_squares(lambda xx, p: p[0] * xx + p[1], x, y, [1.0, 0.0], names=["m", "c"])
    design = np.column_stack([x, np.ones_like(x)])
    coef, rss, *_ = np.linalg.lstsq(design, y, rcond=None)
    cov = np.linalg.inv(design.T @ design) * rss[0] / (x.size - 2)
    assert res["m"] == pytest.approx(coef[0], rel=1e-6)
    assert res.sigma("m") == pytest.approx(math.sqrt(cov[0, 0]), rel=1e-4)
    assert res.sigma("c") == pytest.approx(math.sqrt(cov[1, 1]), rel=1e-4)


def test_jacobians_agree_with_analytic_derivative():
    fun = lambda p: np.array([p[0] ** 2 * p[1], math.sin(p[1])])
    p = np.array([1.3, 0.4])
    exact = np.array([[2 * 1.3 * 0.4, 1.3**2], [0.0, math.cos(0.4)]])
    assert np.allclose(fitting.forward_jacobian(fun, p), exact, atol=1e-6)
    assert np.allclose(fitting.central_jacobian(fun, p), exact, atol=1e-9)


def test_t1_fit_recovers_noise_free_parameters():
    data = fitting.synthetic_t1_data(TRUE_T1, [115e9, 240e9, 336e9], np.linspace(4, 20, 8), 0.0, seed=1)
    res = fitting.fit_t1_model(data)
    assert res.converged and res.flags == ()
    assert res["n_exponent"] == pytest.approx(4.0, rel=1e-4)
    assert res["delta_orbach"] == pytest.approx(71.94, rel=1e-4)
    assert res["a_orbach"] == pytest.approx(1e6, rel=1e-3)
    fitted = T1Model(**{k: res[k] for k in fitting.T1_PARAMS})
    assert 1 / t1_rate(fitted, 336e9, 4.0) == pytest.approx(1e-4, rel=1e-4)


def test_single_frequency_data_fixes_exponent():
    data = fitting.synthetic_t1_data(TRUE_T1, [336e9], np.linspace(4, 20, 8), 0.0, seed=1)
    res = fitting.fit_t1_model(data)
    assert "ill_posed_n_fixed" in res.flags
    assert res["n_exponent"] == 4.0


def test_t1_fit_respects_fixed_parameters():
    data = fitting.synthetic_t1_data(TRUE_T1, [115e9, 240e9, 336e9], np.linspace(4, 20, 8), 0.0, seed=1)
    res = fitting.fit_t1_model(data, fixed={"delta_orbach": 71.94})
    assert res["delta_orbach"] == 71.94
    assert res.sigma("delta_orbach") == 0.0


def test_t1_fit_needs_enough_temperatures():
    data = fitting.synthetic_t1_data(TRUE_T1, [240e9, 336e9], [4.0, 8.0, 12.0], 0.0, seed=1)
    with pytest.raises(ValueError, match="four temperatures"):
        fitting.fit_t1_model(data)


def test_seeded_streams_are_reproducible_and_distinct():
    a = fitting.seeded_rng(3, 0).standard_normal(5)
    assert np.array_equal(a, fitting.seeded_rng(3, 0).standard_normal(5))
    assert not np.array_equal(a, fitting.seeded_rng(3, 1).standard_normal(5))
    assert not np.array_equal(a, fitting.seeded_rng(4, 0).standard_normal(5))


def test_multiplicative_noise_has_requested_log_scatter():
    noisy = fitting.multiplicative_noise(np.ones(200000), 0.05, fitting.seeded_rng(1))
    assert np.std(np.log(noisy)) == pytest.approx(0.05, rel=0.01)


@given(st.floats(5.0, 40.0), st.floats(1e-3, 1e3))
def test_arrhenius_two_point_inverts_exactly(delta_e, prefactor):
    tau = lambda t: 1.0 / (prefactor * math.exp(-delta_e / t))
    assert fitting.arrhenius_two_point(3.0, tau(3.0), 5.0, tau(5.0)) == pytest.approx(delta_e, rel=1e-9)


def test_arrhenius_from_quoted_decay_times():
    assert fitting.arrhenius_two_point(3.0, 1800.0, 5.0, 210.0) == pytest.approx(16.113, abs=1e-3)


def test_arrhenius_regression_is_exact_on_clean_data():
    temps = np.array([3.0, 4.0, 5.0, 6.0])
    taus = 1.0 / (0.12 * np.exp(-14.0 / temps))
    res = fitting.fit_arrhenius(temps, taus)
    assert res["delta_e"] == pytest.approx(14.0, rel=1e-10)
    assert res["A"] == pytest.approx(0.12, rel=1e-10)
    with pytest.raises(ValueError, match="three"):
        fitting.fit_arrhenius(temps[:2], taus[:2])


@settings(max_examples=25)
@given(st.floats(0.1, 10.0), st.floats(0.2, 5.0), st.floats(-1.0, 1.0))
def test_exponential_decay_round_trip(amp, tau, off):
    t = np.linspace(0, 5 * tau, 60)
    res = fitting.fit_exponential_decay(t, amp * np.exp(-t / tau) + off)
    assert res.converged
    assert res["tau"] == pytest.approx(tau, rel=1e-5)
    assert res["amplitude"] == pytest.approx(amp, rel=1e-5)


def test_flat_trace_is_flagged_non_decaying():
    t = np.linspace(0, 1, 20)
    res = fitting.fit_exponential_decay(t, np.full(t.size, 0.7))
    assert not res.converged and res.flags == ("non_decaying",)
    assert res.to_table()["parameter"].size == 0


def test_log_linear_decay():
    t = np.linspace(0, 3, 10)
    tau, resid = fitting.log_linear_decay(t, -2.0 * np.exp(-t / 0.8))
    assert tau == pytest.approx(0.8, rel=1e-12)
    assert resid < 1e-12


def test_dataset_validation_and_table_round_trip(tmp_path):
    with pytest.raises(ValueError, match="value"):
        DataSet({"temp_k": [1.0]})
    with pytest.raises(ValueError, match="positive"):
        DataSet({"value": [1.0], "sigma": [0.0]})
    ds = DataSet({"value": [1.0, 2.0]})
    with pytest.raises(ValueError, match="at least"):
        ds.require_rows(2)
    data = fitting.synthetic_t1_data(TRUE_T1, [240e9], [4.0, 5.0], 0.0, seed=1)
    path = ResultTable(data.columns).write_csv(tmp_path / "d.csv")
    back = DataSet.read_csv(path)
    assert np.allclose(back["value"], data["value"], rtol=1e-11)


def test_fit_result_table_and_report():
    res = fitting.fit_arrhenius([3.0, 4.0, 5.0], [1800.0, 480.0, 210.0])
    table = res.to_table()
    assert list(table["parameter"]) == ["A", "delta_e"]
    assert "delta_e" in res.report()
