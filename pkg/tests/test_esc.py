import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esarl.esc import (DivergenceError, EscParams, Objective, default_frequencies, esc_init, esc_probe,
                       esc_run, esc_update, example_objective, example_static, fit_decay_rate,
                       predicted_rate)

# Example-1 settings shared with configs/esc_demo.yaml
DEMO = dict(K=[0.2, 0.2], omega=default_frequencies(80.0, 2), alpha=50.0, dt=0.01)


def test_probe_at_time_zero_is_estimate():
    s = esc_init(EscParams(K=[0.7, 0.3], omega=[3.0, 4.0], alpha=1.0, dt=0.1), [2.0, 2.0])
    np.testing.assert_array_equal(esc_probe(s), [2.0, 2.0])


def test_probe_without_perturbation():
    s = esc_init(EscParams(K=[0.0], omega=[5.0], alpha=1.0, dt=0.1), [1.5])
    for _ in range(20):
        assert esc_probe(s)[0] == 1.5
        s = esc_update(s, 3.0)


def test_probe_direct_evaluation():
    p = EscParams(K=[0.2], omega=[10 * math.pi], alpha=1.0, dt=0.01)
    s = esc_init(p, [0.0])
    for _ in range(5):
        s = esc_update(s, 0.0)
    assert s.t == 5
    assert esc_probe(s)[0] == pytest.approx(0.2, abs=1e-12)


def test_constant_objective_leaves_estimate():
    s = esc_init(EscParams(K=[0.0, 0.0], omega=[2.0, 3.0], alpha=5.0, dt=0.01), [0.3, -0.4])
    v_prev = s.v.copy()
    for _ in range(200):
        s = esc_update(s, 7.25)
        assert np.all(np.abs(s.v - v_prev) < 1e-9)
        v_prev = s.v.copy()


def test_update_rejects_non_finite():
    s = esc_init(EscParams(K=[0.1], omega=[1.0], alpha=1.0, dt=0.1), [0.0])
    with pytest.raises(DivergenceError):
        esc_update(s, math.nan)


def test_run_reports_divergence_step():
    obj = Objective(lambda u, t: math.inf if t > 0.05 else 0.0)
    with pytest.raises(DivergenceError) as info:
        esc_run(EscParams(K=[0.1], omega=[1.0], alpha=1.0, dt=0.01), obj, [0.0], 50)
    assert info.value.step == 6


def test_one_dimensional_quadratic_converges():
    p = EscParams(K=[0.2], omega=[10 * math.pi], alpha=20.0, dt=0.01)
    tr = esc_run(p, Objective(lambda u, t: (u[0] - 1.0) ** 2), [2.0], 5000)
    err = np.abs(tr.v[:, 0] - 1.0)
    assert err[-1] < 0.05
    assert np.argmax(err < 0.05) < 5000


def test_example_static_converges_one_query_per_iteration():
    obj = example_objective(dynamic=False)
    tr = esc_run(EscParams(**DEMO), obj, [2.0, 2.0], 400)
    assert obj.queries == 400
    jv = np.array([example_static(v) for v in tr.v])
    assert jv[-1] < 1e-2
    np.testing.assert_allclose(tr.v[-1], [0.1, 0.5], atol=0.05)


def test_example_dynamic_tracks_after_t4():
    obj = example_objective(dynamic=True)
    tr = esc_run(EscParams(**DEMO), obj, [2.0, 2.0], 1001)
    target = np.column_stack([0.1 * tr.time, 0.5 * tr.time])
    err = np.linalg.norm(tr.v - target, axis=1)
    window = (tr.time >= 4.0) & (tr.time <= 10.0)
    assert err[window].max() < 0.1


def test_started_at_optimum_stays_within_perturbation_scale():
    K = 0.05
    p = EscParams(K=[K], omega=[40.0], alpha=10.0, dt=0.01)
    tr = esc_run(p, Objective(lambda u, t: 3.0 * (u[0] + 0.7) ** 2), [-0.7], 3000)
    assert np.abs(tr.v[:, 0] + 0.7).max() < 2 * K


@pytest.mark.parametrize("curvature", [1.0, 2.0, 4.0])
def test_error_decay_rate_matches_averaged_dynamics(curvature):
    alpha, K = 2.0, 0.2
    p = EscParams(K=[K], omega=[40.0], alpha=alpha, dt=0.01)
    rate = predicted_rate(alpha, K, curvature)
    steps = int(3.0 / rate / p.dt)
    tr = esc_run(p, Objective(lambda u, t: 0.5 * curvature * (u[0] - 1.0) ** 2), [2.0], steps)
    fitted, r2 = fit_decay_rate(tr.time, np.abs(tr.v[:, 0] - 1.0), discard=0.1)
    assert fitted == pytest.approx(rate, rel=0.3)
    assert r2 >= 0.9


def test_distinct_frequencies_required():
    with pytest.raises(ValueError):
        EscParams(K=[0.1, 0.1], omega=[2.0, 2.0], alpha=1.0, dt=0.1)
    np.testing.assert_allclose(default_frequencies(10.0, 4), [10.0, 12.5, 15.0, 17.5])


@settings(max_examples=25, deadline=None)
@given(
    c=st.floats(0.1, 20.0),
    center=st.floats(-2.0, 2.0),
    v0=st.floats(-2.0, 2.0),
    gain=st.floats(0.5, 20.0),
)
def test_maximizing_negated_objective_is_identical(c, center, v0, gain):
    # keep alpha * curvature inside the stable range of the loop
    alpha = gain / c
    p_min = EscParams(K=[0.1], omega=[30.0], alpha=alpha, dt=0.01)
    p_max = EscParams(K=[0.1], omega=[30.0], alpha=alpha, dt=0.01, maximize=True)
    f = lambda u, t: c * (u[0] - center) ** 2
    a = esc_run(p_min, Objective(f), [v0], 300)
    b = esc_run(p_max, Objective(lambda u, t: -f(u, t)), [v0], 300)
    np.testing.assert_array_equal(a.v, b.v)


@settings(max_examples=25, deadline=None)
@given(scale=st.floats(0.01, 100.0), v0=st.floats(-2.0, 2.0))
def test_objective_scale_equivariance(scale, v0):
    f = lambda u, t: (u[0] - 0.3) ** 2 + 0.5 * (u[1] + 0.1) ** 2
    base = dict(K=[0.1, 0.1], omega=[30.0, 45.0], dt=0.01)
    a = esc_run(EscParams(alpha=4.0, **base), Objective(f), [v0, -v0], 400)
    b = esc_run(EscParams(alpha=4.0 / scale, **base), Objective(lambda u, t: scale * f(u, t)), [v0, -v0], 400)
    np.testing.assert_allclose(a.v, b.v, rtol=1e-9, atol=1e-12)


def test_log_error_is_affine_on_quadratic():
    p = EscParams(K=[0.2], omega=[40.0], alpha=3.0, dt=0.01)
    tr = esc_run(p, Objective(lambda u, t: (u[0] + 1.0) ** 2), [0.5], 800)
    _, r2 = fit_decay_rate(tr.time, np.abs(tr.v[:, 0] + 1.0))
    assert r2 >= 0.9


def test_trace_csv_schema():
    tr = esc_run(EscParams(**DEMO), example_objective(), [2.0, 2.0], 3)
    text = tr.to_csv("config abc")
    lines = text.splitlines()
    assert lines[0] == "# config abc"
    assert lines[1] == "step,time,u_1,u_2,v_1,v_2,j"
    assert len(lines) == 5
