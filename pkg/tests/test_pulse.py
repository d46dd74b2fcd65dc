"""Wave-packet envelopes: frozen values, normalization, tail-weight algebra."""
import numpy as np
import pytest

from photonfilters.pulse import (
    EPS_W, PulseShape, lambda_of, w_of, xi_exponential, xi_gaussian,
)


def test_gaussian_frozen_values():
    p = PulseShape.gaussian(omega=1.5, t0=3.0)
    assert abs(p.xi(3.0) - 0.77360) < 5e-5        # peak value
    assert abs(p.w(3.0) - 0.5) < 1e-12            # half the packet still ahead
    assert abs(p.lam(3.0) - 1.09404) < 1e-4       # peak / sqrt(1/2)
    assert abs(p.lam(3.0) - p.xi(3.0) * np.sqrt(2.0)) < 1e-12


def test_gaussian_normalization_and_weight_derivative():
    p = PulseShape.gaussian(omega=1.5, t0=3.0)
    t = np.linspace(-10.0, 16.0, 200001)
    xi2 = np.asarray(p.xi(t)) ** 2
    assert abs(np.trapezoid(xi2, t) - 1.0) < 1e-9
    # w' = -|xi|^2 (central differences away from the grid ends)
    w = np.asarray(p.w(t))
    dw = np.gradient(w, t)
    assert np.max(np.abs(dw + xi2)[100:-100]) < 1e-6
    # w decreases monotonically from 1 to 0
    assert abs(p.w(-10.0) - 1.0) < 1e-12
    assert p.w(16.0) < 1e-12
    assert np.all(np.diff(w) <= 0)


def test_lambda_consistency_where_live():
    p = PulseShape.gaussian(omega=1.5, t0=3.0)
    t = np.linspace(0.0, 6.5, 1000)
    w = np.asarray(p.w(t))
    lam = np.asarray(p.lam(t))
    xi = np.asarray(p.xi(t))
    live = w > 1e-9
    assert np.max(np.abs(lam[live] * np.sqrt(w[live]) - xi[live])) < 1e-9


def test_lambda_clamp_after_packet_has_left():
    p = PulseShape.gaussian(omega=1.5, t0=3.0)
    t_late = 9.5
    assert p.w(t_late) <= EPS_W
    assert p.lam(t_late) == 0.0


def test_exponential_decaying():
    g = 0.8
    p = PulseShape.exponential(gamma=g, t1=2.0, rising=False)
    assert p.xi(1.0) == 0.0
    assert abs(p.xi(2.0) - np.sqrt(g)) < 1e-12
    assert abs(p.w(2.0) - 1.0) < 1e-12
    assert abs(p.w(1.0) - 1.0) < 1e-12   # nothing emitted before t1
    # lambda is exactly sqrt(gamma) wherever the envelope is live
    t = np.linspace(2.0, 20.0, 500)
    lam = np.asarray(p.lam(t))
    w = np.asarray(p.w(t))
    live = w > EPS_W
    assert np.max(np.abs(lam[live] - np.sqrt(g))) < 1e-12


def test_exponential_rising():
    g = 1.0
    p = PulseShape.exponential(gamma=g, t1=8.0, rising=True)
    assert p.xi(9.0) == 0.0
    assert abs(p.xi(8.0) - 1.0) < 1e-12
    assert abs(p.w(8.0)) < 1e-12             # packet fully emitted at t1
    assert abs(p.w(0.0) - (1.0 - np.exp(-8.0))) < 1e-12
    # lambda grows without bound approaching t1; no overflow anywhere
    t = np.linspace(0.0, 30.0, 2000)
    lam = np.asarray(p.lam(t))
    assert np.all(np.isfinite(lam))
    assert p.lam(7.0) > p.lam(5.0) > p.lam(3.0)
    # normalization of the closed-form envelope
    tt = np.linspace(-40.0, 8.0, 400001)
    assert abs(np.trapezoid(np.asarray(p.xi(tt)) ** 2, tt) - 1.0) < 1e-6


def test_module_level_wrappers_match_methods():
    p = PulseShape.exponential(gamma=0.5, t1=1.0, rising=False)
    t = np.linspace(0.0, 10.0, 50)
    assert np.allclose(w_of(p, t), p.w(t))
    assert np.allclose(lambda_of(p, t), p.lam(t))
    assert xi_gaussian(1.5, 3.0, 3.0) == PulseShape.gaussian(1.5, 3.0).xi(3.0)
    assert xi_exponential(0.5, 1.0, False, 2.0) == p.xi(2.0)


def test_tabulated_renormalizes_and_interpolates():
    t = np.linspace(0.0, 10.0, 4001)
    raw = 3.7 * xi_gaussian(1.5, 3.0, t)    # deliberately unnormalized
    p = PulseShape.tabulated(t, raw)
    xi2 = np.asarray(p.xi(t)) ** 2
    assert abs(np.trapezoid(xi2, t) - 1.0) < 1e-9
    ref = PulseShape.gaussian(1.5, 3.0)
    assert abs(p.xi(3.0) - ref.xi(3.0)) < 1e-4
    assert abs(p.w(3.0) - 0.5) < 1e-4
    assert p.xi(-5.0) == 0.0 and p.xi(50.0) == 0.0
    assert p.w(50.0) == 0.0
    assert abs(p.w(0.0) - p.grid_w[0]) < 1e-15


def test_tabulated_validation():
    with pytest.raises(ValueError):
        PulseShape.tabulated([0.0], [1.0])
    with pytest.raises(ValueError):
        PulseShape.tabulated([0.0, 0.0, 1.0], [1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        PulseShape.tabulated([0.0, 1.0], [0.0, 0.0])


def test_from_csv_round_trip(tmp_path):
    t = np.linspace(0.0, 10.0, 101)
    xi = xi_gaussian(1.5, 3.0, t)
    path = tmp_path / "pulse.csv"
    lines = ["t,xi"] + [f"{tv},{xv}" for tv, xv in zip(t, xi)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    p = PulseShape.from_csv(path)
    assert p.kind == "tabulated"
    assert np.allclose(p.grid_t, t)
    assert abs(np.trapezoid(np.asarray(p.xi(t)) ** 2, t) - 1.0) < 1e-9
    empty = tmp_path / "empty.csv"
    empty.write_text("a,b\n", encoding="utf-8")
    with pytest.raises(ValueError):
        PulseShape.from_csv(empty)


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        PulseShape.gaussian(omega=0.0, t0=0.0)
    with pytest.raises(ValueError):
        PulseShape.exponential(gamma=-1.0, t1=0.0)
    with pytest.raises(ValueError):
        xi_gaussian(-1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        xi_exponential(0.0, 0.0, True, 0.0)
