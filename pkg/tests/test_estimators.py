"""Delta estimators: oracle agreement, coupling behavior, reproducibility."""

import dataclasses
import io
import math

import numpy as np
import pytest

from mfdelta import (
    PARAMETER_SET_A,
    PARAMETER_SET_B,
    RunSettings,
    TimeGrid,
    build_model,
    closed_form_price_and_delta,
    compare_methods,
    estimate_delta_fd,
    estimate_delta_malliavin,
    estimate_delta_pathwise,
    estimate_price,
    make_payoff,
)
from mfdelta.errors import NonFinite, PayoffNotDifferentiable
from mfdelta.estimators import write_estimates_csv, write_trace_csv
from mfdelta.models import resolve_curves


def settings(params, n_paths=20_000, n_steps=256, seed=20240808, **kw):
    return RunSettings(
        x0=params["x"], grid=TimeGrid(params["T"], n_steps), n_paths=n_paths, seed=seed, **kw
    )


def combined_gap(e1, e2):
    return abs(e1.value - e2.value) / math.hypot(e1.std_error, e2.std_error)


class TestPrice:
    def test_constant_payoff_is_exact(self):
        model = build_model("mean_vol", PARAMETER_SET_A)
        est = estimate_price(model, make_payoff("constant"), settings(PARAMETER_SET_A, 5_000, 64))
        assert est.value == 1.0
        assert est.std_error == 0.0

    def test_mean_vol_call_price_matches_closed_form(self):
        params = PARAMETER_SET_A
        model = build_model("mean_vol", params)
        payoff = make_payoff("call", params["K"])
        est = estimate_price(model, payoff, settings(params, 20_000, 512))
        price, _ = closed_form_price_and_delta("mean_vol", payoff, params)
        assert abs(est.value - price) < 3.0 * est.std_error

    def test_mean_vol_identity_price_tracks_the_mean_curve(self):
        params = PARAMETER_SET_B
        model = build_model("mean_vol", params)
        est = estimate_price(model, make_payoff("identity"), settings(params, 20_000, 512))
        assert abs(est.value - 0.5 * math.e) < 3.0 * est.std_error + 2.0 / 512


class TestMalliavin:
    def test_classical_call_matches_lognormal_delta(self):
        params = PARAMETER_SET_A
        model = build_model("classical_gbm", params)
        payoff = make_payoff("call", params["K"])
        est, trace = estimate_delta_malliavin(model, payoff, settings(params))
        _, delta = closed_form_price_and_delta("classical_gbm", payoff, params)
        assert abs(est.value - delta) < 3.0 * est.std_error
        assert trace.rows[-1][0] == est.n_paths
        assert trace.rows[-1][1] == est.value

    def test_constant_drift_shape_equals_classical_estimator_bitwise(self):
        params = PARAMETER_SET_A
        payoff = make_payoff("call", params["K"])
        st = settings(params, 10_000, 128)
        e1, _ = estimate_delta_malliavin(build_model("classical_gbm", params), payoff, st)
        e2, _ = estimate_delta_malliavin(
            build_model("mean_drift", dict(params, q=0.0)), payoff, st
        )
        assert (e1.value, e1.std_error) == (e2.value, e2.std_error)

    def test_mean_drift_identity_recovers_the_curve_slope(self):
        # v(x) = rho_T(x) for the identity payoff, so the weighted delta
        # estimates the variational-ODE slope
        params = dict(PARAMETER_SET_A, q=0.5, sigma=0.4)
        model = build_model("mean_drift", params)
        est, _ = estimate_delta_malliavin(model, make_payoff("identity"), settings(params))
        curves = resolve_curves(model, params["x"], TimeGrid(params["T"], 256))
        assert abs(est.value - curves.drho_dx[-1]) < 3.0 * est.std_error + 0.01

    def test_mean_vol_digital_set_b(self):
        params = PARAMETER_SET_B
        model = build_model("mean_vol", params)
        payoff = make_payoff("digital", params["K"])
        est, _ = estimate_delta_malliavin(model, payoff, settings(params, 50_000, 256))
        _, delta = closed_form_price_and_delta("mean_vol", payoff, params)
        assert abs(est.value - delta) < 3.0 * est.std_error

    def test_generic_weight_agrees_with_closed_form_weight(self):
        params = PARAMETER_SET_A
        model = build_model("mean_vol", params)
        payoff = make_payoff("call", params["K"])
        st = settings(params, 2_000, 128)
        e_closed, _ = estimate_delta_malliavin(model, payoff, st)
        e_generic, _ = estimate_delta_malliavin(
            model, payoff, dataclasses.replace(st, use_generic_weight=True)
        )
        assert combined_gap(e_closed, e_generic) < 1.0 + 50 * (1.0 / 128)


class TestFiniteDifferences:
    def test_linear_payoff_is_h_independent(self):
        params = PARAMETER_SET_A
        model = build_model("classical_gbm", params)
        payoff = make_payoff("identity")
        st = settings(params, 20_000, 256)
        values = []
        for h in (0.1, 0.001):
            est, _ = estimate_delta_fd(model, payoff, st, h=h, scheme="central")
            values.append(est.value)
            assert est.std_error < 0.05  # common random numbers keep it tight
            assert abs(est.value - math.e) < 0.05
        assert abs(values[0] - values[1]) < 5e-3

    def test_call_fd_agrees_with_malliavin_on_one_seed(self):
        params = PARAMETER_SET_A
        model = build_model("mean_vol", params)
        payoff = make_payoff("call", params["K"])
        st = settings(params, 20_000, 256)
        e_m, _ = estimate_delta_malliavin(model, payoff, st)
        e_f, _ = estimate_delta_fd(model, payoff, st, h=0.1, scheme="forward")
        # 3 combined SE plus an O(h) bias allowance
        tol = 3.0 * math.hypot(e_m.std_error, e_f.std_error) + 2.0 * 0.1
        assert abs(e_m.value - e_f.value) < tol

    def test_digital_quotient_variance_exceeds_malliavin_variance(self):
        params = PARAMETER_SET_B
        model = build_model("mean_vol", params)
        payoff = make_payoff("digital", params["K"])
        st = settings(params, 20_000, 256)
        e_m, _ = estimate_delta_malliavin(model, payoff, st)
        e_f, _ = estimate_delta_fd(
            model, payoff, dataclasses.replace(st, fd_crn=False), h=0.01, scheme="forward"
        )
        var_ratio = e_f.std_error**2 / e_m.std_error**2
        assert var_ratio >= 5.0

    def test_central_bias_shrinks_four_fold_with_half_h(self):
        # Richardson trend on three bump sizes with shared noise: the
        # successive differences of the estimates isolate the O(h^2) bias
        params = PARAMETER_SET_A
        model = build_model("mean_vol", params)
        payoff = make_payoff("call", params["K"])
        st = settings(params, 100_000, 512, seed=11)
        values = {}
        for h in (0.1, 0.05, 0.025):
            est, _ = estimate_delta_fd(model, payoff, st, h=h, scheme="central")
            values[h] = est.value
        ratio = (values[0.1] - values[0.05]) / (values[0.05] - values[0.025])
        assert 2.5 < ratio < 6.0

    def test_independent_streams_decouple_the_legs(self):
        params = PARAMETER_SET_A
        model = build_model("classical_gbm", params)
        payoff = make_payoff("call", params["K"])
        st = settings(params, 5_000, 64)
        e_crn, _ = estimate_delta_fd(model, payoff, st, h=0.1, scheme="forward")
        e_ind, _ = estimate_delta_fd(
            model, payoff, dataclasses.replace(st, fd_crn=False), h=0.1, scheme="forward"
        )
        assert e_ind.std_error > 5.0 * e_crn.std_error

    def test_argument_validation(self):
        params = PARAMETER_SET_A
        model = build_model("classical_gbm", params)
        payoff = make_payoff("call", params["K"])
        with pytest.raises(ValueError):
            estimate_delta_fd(model, payoff, settings(params, 100, 8), h=-0.1)
        with pytest.raises(ValueError):
            estimate_delta_fd(model, payoff, settings(params, 100, 8), h=0.1, scheme="spectral")


class TestPathwise:
    def test_identity_payoff_recovers_the_curve_slope(self):
        params = dict(PARAMETER_SET_A, q=0.5, sigma=0.4)
        model = build_model("mean_drift", params)
        est = estimate_delta_pathwise(model, make_payoff("identity"), settings(params))
        curves = resolve_curves(model, params["x"], TimeGrid(params["T"], 256))
        assert abs(est.value - curves.drho_dx[-1]) < 3.0 * est.std_error + 0.01

    def test_classical_call_matches_closed_form(self):
        params = PARAMETER_SET_A
        model = build_model("classical_gbm", params)
        payoff = make_payoff("call", params["K"])
        est = estimate_delta_pathwise(model, payoff, settings(params))
        _, delta = closed_form_price_and_delta("classical_gbm", payoff, params)
        assert abs(est.value - delta) < 3.0 * est.std_error

    def test_digital_payoff_is_refused(self):
        model = build_model("mean_vol", PARAMETER_SET_A)
        with pytest.raises(PayoffNotDifferentiable):
            estimate_delta_pathwise(model, make_payoff("digital", 2.0), settings(PARAMETER_SET_A))

    @pytest.mark.parametrize("model_id,extra", [("classical_gbm", {}), ("mean_drift", {"q": 0.5})])
    def test_duality_with_the_weighted_estimator(self, model_id, extra):
        # E[Phi'(X_T) J_T], E[Phi(X_T) w] and tight central differences all
        # estimate the same derivative
        params = dict(PARAMETER_SET_A, **extra)
        model = build_model(model_id, params)
        payoff = make_payoff("call", params["K"])
        st = settings(params, 100_000, 256)
        e_m, _ = estimate_delta_malliavin(model, payoff, st)
        e_p = estimate_delta_pathwise(model, payoff, st)
        e_f, _ = estimate_delta_fd(model, payoff, st, h=1e-3, scheme="central")
        assert combined_gap(e_m, e_p) < 3.0
        assert combined_gap(e_m, e_f) < 3.0
        assert combined_gap(e_p, e_f) < 3.0


class TestCompareMethods:
    def test_full_comparison_emits_four_traced_methods(self):
        params = PARAMETER_SET_A
        model = build_model("mean_vol", params)
        payoff = make_payoff("call", params["K"])
        rows = compare_methods(
            model,
            payoff,
            settings(params, 3_000, 64),
            methods=("malliavin", "fd_forward", "pathwise"),
            h_list=(0.1, 0.01),
        )
        assert len(rows) == 4
        assert all(r.error is None for r in rows)
        assert all(r.trace is not None for r in rows)
        labels = [r.estimate.method for r in rows]
        assert labels == ["malliavin", "fd_forward", "fd_forward", "pathwise"]

    def test_empty_h_list_gives_malliavin_only(self):
        params = PARAMETER_SET_A
        model = build_model("mean_vol", params)
        rows = compare_methods(
            model, make_payoff("call", 2.0), settings(params, 2_000, 64), methods=("malliavin",)
        )
        assert len(rows) == 1

    def test_method_failures_are_recorded_not_fatal(self):
        params = PARAMETER_SET_A
        model = build_model("mean_vol", params)
        rows = compare_methods(
            model,
            make_payoff("digital", params["K"]),
            settings(params, 2_000, 64),
            methods=("malliavin", "pathwise"),
        )
        assert rows[0].error is None
        assert rows[1].error is not None and "pathwise" in rows[1].error

    def test_csv_schemas(self):
        params = PARAMETER_SET_A
        model = build_model("mean_vol", params)
        rows = compare_methods(
            model,
            make_payoff("call", params["K"]),
            settings(params, 2_000, 64),
            methods=("malliavin", "fd_central"),
            h_list=(0.1,),
        )
        est_buf, trace_buf = io.StringIO(), io.StringIO()
        write_estimates_csv(rows, est_buf)
        write_trace_csv(rows, trace_buf)
        est_lines = est_buf.getvalue().splitlines()
        assert est_lines[0] == "method,n_paths,n_steps,h,estimate,std_error,seed,wall_time_ms"
        assert est_lines[1].startswith("malliavin,2000,64,,")
        assert est_lines[1].endswith(",")  # wall time left empty by default
        assert est_lines[2].startswith("fd_central,2000,64,0.1")
        assert trace_buf.getvalue().splitlines()[0] == "method,n,estimate,std_error"
        timed = io.StringIO()
        write_estimates_csv(rows, timed, include_timings=True)
        assert not timed.getvalue().splitlines()[1].endswith(",")


class TestReproducibility:
    def test_estimates_are_invariant_to_thread_count(self):
        params = PARAMETER_SET_A
        model = build_model("mean_vol", params)
        payoff = make_payoff("call", params["K"])
        outs = []
        for threads in (1, 2, 5):
            st = settings(params, 7_500, 64, threads=threads)
            est, trace = estimate_delta_malliavin(model, payoff, st)
            outs.append((est.value, est.std_error, tuple(trace.rows)))
        assert outs[0] == outs[1] == outs[2]

    def test_convergence_trace_checkpoints_are_geometric(self):
        params = PARAMETER_SET_A
        model = build_model("mean_vol", params)
        st = settings(params, 5_000, 64)
        _, trace = estimate_delta_malliavin(model, make_payoff("call", 2.0), st)
        assert [n for n, _, _ in trace.rows] == [1000, 2000, 4000, 5000]

    def test_coverage_of_the_reported_standard_errors(self):
        # over 50 independent seeds the closed-form delta should fall inside
        # +-1.96 SE in at least 40 runs
        params = PARAMETER_SET_B
        model = build_model("mean_vol", params)
        payoff = make_payoff("call", params["K"])
        _, delta = closed_form_price_and_delta("mean_vol", payoff, params)
        hits = 0
        for seed in range(50):
            st = settings(params, 10_000, 256, seed=1000 + seed)
            est, _ = estimate_delta_malliavin(model, payoff, st)
            if abs(est.value - delta) <= 1.96 * est.std_error:
                hits += 1
        assert hits >= 40

    def test_simulation_errors_carry_the_path_block(self):
        # a violent volatility overflows the state while the mean curve
        # stays finite, so the failure surfaces inside path simulation
        params = dict(PARAMETER_SET_A, sigma=1e4)
        model = build_model("classical_gbm", params)
        with pytest.raises(NonFinite, match=r"paths \[0, 1000\)"):
            estimate_price(model, make_payoff("constant"), settings(params, 2_000, 512))
