import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wkgsim.bootstrap_monitor import (BootstrapConfig, SupQuantities, axis_decay_fit,
                                      bootstrap_check, compute_sup_quantities, energy_table,
                                      final_bound_replay, minimal_delta, recursion_certify,
                                      recursion_terms)
from wkgsim.errors import CapabilityError, ConfigurationError, RangeError
from wkgsim.fits import local_peaks, power_fit, running_max
from wkgsim.grid_fields import History, RadialGrid


@settings(max_examples=50, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.01, 100.0))
def test_power_fit_recovers_power_law(b, k):
    x = np.linspace(2.0, 30.0, 40)
    bb, kk = power_fit(x, k * x ** b)
    assert abs(bb - b) < 1e-9 and abs(kk / k - 1) < 1e-9


def test_fit_helpers():
    assert np.isnan(power_fit([1, 2], [1, 2])[0])
    assert np.array_equal(running_max([1, 3, 2, 5]), [1, 3, 3, 5])
    assert list(local_peaks([0, 2, 1, 3, 0])) == [1, 3]


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 0.3), st.floats(0.1, 10.0))
def test_minimal_delta_recovers_growth(d, K):
    s = np.linspace(4.0, 20.0, 33)
    got = minimal_delta(s, K * s ** (0.5 + d), 0.5 * K * s ** d, K)
    assert abs(got - d) < 1e-9


def test_config_validation():
    with pytest.raises(ConfigurationError):
        BootstrapConfig(delta=0.2)
    with pytest.raises(ConfigurationError):
        BootstrapConfig(C0=2.0, C1=1.0)
    with pytest.raises(CapabilityError):
        BootstrapConfig(n_eff=5)


def _table(s, con, c):
    return {"s": s, "E_con_u": con ** 2, "E_c_v": c ** 2, "truncated": np.zeros(s.size, bool)}


def test_bootstrap_check_synthetic():
    s = np.arange(2.0, 20.5, 0.5)
    eps = 0.01
    cfg = BootstrapConfig(eps=eps, delta=0.05)
    # constant energies: bounds hold with C1 = 4 C0, delta_min = 0
    res = bootstrap_check(_table(s, eps * np.ones_like(s), eps * np.ones_like(s)), cfg)
    assert res["holds"] and res["delta_min"] == 0.0
    assert np.isclose(res["C0"], 1.0) and np.isclose(res["C1"], 4.0)
    # the standard energy grows like s: refined half-bound fails, delta_min ~ 1 - log 2 / log s
    grow = eps * s / 2.0
    res = bootstrap_check(_table(s, eps * np.ones_like(s), grow), cfg)
    assert not res["refined_hold"] and not res["holds"]
    assert res["first_fail_s"] is not None


def test_axis_decay_fit_on_synthetic_history():
    g = RadialGrid(r_max=1.0, n=16)
    h = History(g, ("u", "p", "v", "q"), t0=2.0, dt=0.05, capacity=700)
    for k in range(601):
        t = 2.0 + 0.05 * k
        v = t ** -1.5 * np.cos(t) * np.ones(g.n)
        q = (-1.5 * t ** -2.5 * np.cos(t) - t ** -1.5 * np.sin(t)) * np.ones(g.n)
        h.append([0 * v, 0 * v, v, q], t)
    fit = axis_decay_fit(h, 1.0, origin=0.0)
    assert abs(fit["exponent"] + 1.5) < 0.02


def _synthetic_sup(eps, n=30):
    s = np.linspace(2.0, 20.0, n)
    A = {k: eps * (1 + 0.1 * k) * np.ones(n) for k in range(4)}
    B = {k: eps * (1 + 0.1 * k) * np.ones(n) for k in range(4)}
    return SupQuantities(s=s, A=A, B=B, eps=eps)


def test_recursion_terms_structure():
    sup = _synthetic_sup(0.01)
    _, _, tA, tB = recursion_terms(sup, 0)
    assert tA == {} and list(tB) == ["A0*A0"]
    _, _, tA, tB = recursion_terms(sup, 2)
    assert sorted(tA) == ["B0*A1", "B1*A1", "B2*A0"]
    assert len(tB) == 3


def test_recursion_certify_synthetic():
    sup = _synthetic_sup(0.01)
    res = recursion_certify(sup)
    assert res["holds"] and res["k0_structural"]
    assert res["C"] <= res["C_full"] + 1e-12
    # small constant tables: the closing bound is perturbative and dominates
    assert res["replay"]["perturbative"] and res["replay"]["holds"]
    with pytest.raises(RangeError):
        recursion_certify(SupQuantities(s=np.array([2.0, 3.0]), A={0: np.ones(2)},
                                        B={0: np.ones(2)}, eps=0.01))


def test_replay_detects_growth():
    sup = _synthetic_sup(0.01)
    sup.A[3] = 0.01 * np.exp(sup.s)
    rep = final_bound_replay(sup, 1.0)
    assert not rep["per_k"][3]["below"]


def test_tables_on_small_run(small_damped_run):
    cfg = BootstrapConfig(eps=0.01, n_eff=2)
    sv = np.arange(3.0, 6.01, 0.5)
    sup = compute_sup_quantities(small_damped_run, cfg, sv)
    for k in sup.ks:
        assert np.all(np.diff(sup.A[k]) >= 0) and np.all(sup.A[k] > 0)
        assert np.all(np.diff(sup.B[k]) >= 0)
    tab = energy_table(small_damped_run, sv, 1.0, n_eff=2)
    assert np.all(tab["E_c_v"] > 0) and np.all(tab["E_con_u"] > 0)
