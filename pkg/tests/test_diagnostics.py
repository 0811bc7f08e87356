import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from _support import state_from_fields
from viscowave import diagnostics as diag
from viscowave import scenarios
from viscowave.errors import DegenerateDataError, InsufficientDataError, PreconditionError
from viscowave.kernels import RelaxationKernel
from viscowave.problem import Certificate, ProblemConfig, find_certificate
from viscowave.solver import build_mesh, init_state, run, step


def plain(**kw):
    base = dict(a=4.0, b=4.0, mu1=2.0, mu2=1.0, tau=0.5, L1=1.0, L2=2.0, L3=3.0,
                kernel=RelaxationKernel.zero(), nx=200, dt=0.001, T=1.0)
    base.update(kw)
    return ProblemConfig(**base)


CFG = plain()
MESH = build_mesh(CFG)
X = MESH.x
ZERO = np.zeros_like(X)


def on_u(f):
    out = np.zeros_like(X)
    out[MESH.u_idx] = f(X[MESH.u_idx])
    return out


def test_zero_state_gives_zero_everything():
    s = state_from_fields(CFG, MESH, ZERO, ZERO)
    rep = diag.energy(s, CFG)
    assert (rep.kin_u, rep.elastic_u, rep.memory, rep.v_part, rep.delay, rep.total) == (0,) * 6
    cert = Certificate(1.0, 0.5, 1.0, 0.5, {}, True, 0.0, 0.0)
    assert diag.lyapunov_L(s, CFG, cert) == 0.0
    for f in (diag.lyapunov_D, diag.lyapunov_F1, diag.lyapunov_F2, diag.lyapunov_F3):
        assert f(s, CFG) == 0.0


def test_middle_mode_energy_matches_closed_form():
    A, k = 0.7, 2
    W = np.where((X >= 1) & (X <= 2), A * np.sin(k * math.pi * (X - 1)), 0.0)
    rep = diag.energy(state_from_fields(CFG, MESH, W, ZERO), CFG)
    exact = CFG.b * A ** 2 * k ** 2 * math.pi ** 2 / (4 * 1.0)
    assert rep.total == pytest.approx(exact, rel=1e-3)
    assert rep.total == pytest.approx(rep.v_part, rel=1e-15)


def test_memory_energy_is_half_the_summed_square():
    cfg = scenarios.standard(T=0.5)
    s = init_state(cfg, build_mesh(cfg))
    for _ in range(100):
        s = step(s, cfg)
    assert diag.energy(s, cfg).memory == 0.5 * s.mesh.dx * float(np.sum(s.memory.square))


def test_constant_history_has_no_memory_energy():
    cfg = scenarios.standard(T=0.1, memory="direct", u0={"preset": "zero"})
    s = init_state(cfg, build_mesh(cfg))
    for _ in range(10):
        s = step(s, cfg)
    assert diag.energy(s, cfg).memory == 0.0


def test_D_with_static_fields_and_sign_symmetry():
    W = on_u(lambda x: np.sin(math.pi * x / 3))
    s = state_from_fields(CFG, MESH, W, ZERO)
    expected = 0.5 * CFG.mu1 * float(MESH.u_weights @ W[MESH.u_idx] ** 2)
    assert diag.lyapunov_D(s, CFG) == pytest.approx(expected, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_D_is_invariant_under_global_sign_flip(seed):
    rng = np.random.default_rng(seed)
    W, V = rng.standard_normal(X.size), rng.standard_normal(X.size)
    W[[0, -1]] = V[[0, -1]] = 0
    a = diag.lyapunov_D(state_from_fields(CFG, MESH, W, V), CFG)
    b = diag.lyapunov_D(state_from_fields(CFG, MESH, -W, -V), CFG)
    assert a == pytest.approx(b, rel=1e-13, abs=1e-13)


def test_F1_vanishes_for_static_fields():
    W = on_u(lambda x: np.sin(math.pi * x / 3))
    assert diag.lyapunov_F1(state_from_fields(CFG, MESH, W, ZERO), CFG) == 0.0


@pytest.mark.parametrize("shape", ["sine", "weighted"])
def test_F1_with_empty_memory_matches_quadrature(shape):
    # u = phi on [0, L1] only and u_t = u_x there; q = x - 1/2 on that branch
    if shape == "sine":
        phi = lambda x: np.sin(math.pi * x)
        dphi = lambda x: math.pi * np.cos(math.pi * x)
    else:
        phi = lambda x: x * np.sin(math.pi * x)
        dphi = lambda x: np.sin(math.pi * x) + math.pi * x * np.cos(math.pi * x)
    first = X <= 1.0
    W = np.where(first, phi(X), 0.0)
    V = np.where(first, dphi(X), 0.0)
    got = diag.lyapunov_F1(state_from_fields(CFG, MESH, W, V), CFG)
    exact = -CFG.a * quad(lambda x: (x - 0.5) * float(dphi(x)) ** 2, 0, 1)[0]
    assert got == pytest.approx(exact, abs=5e-3 * max(1.0, abs(exact)))


def test_F2_vanishes_for_static_middle_mode():
    W = np.where((X >= 1) & (X <= 2), np.sin(math.pi * (X - 1)), 0.0)
    assert diag.lyapunov_F2(state_from_fields(CFG, MESH, W, ZERO), CFG) == 0.0


def test_F2_of_right_moving_pulse_in_negative_q_region():
    c, w = 1.75, 0.08
    pulse = lambda x: np.exp(-(((x - c) / w) ** 2))
    dpulse = lambda x: -2 * (x - c) / w ** 2 * pulse(x)
    mid = (X >= 1) & (X <= 2)
    W = np.where(mid, pulse(X), 0.0)
    V = np.where(mid, -math.sqrt(CFG.b) * dpulse(X), 0.0)
    got = diag.lyapunov_F2(state_from_fields(CFG, MESH, W, V), CFG)
    q = lambda x: 0.5 - (x - 1.0)
    exact = math.sqrt(CFG.b) * quad(lambda x: q(x) * float(dpulse(x)) ** 2, 1, 2, points=[c])[0]
    assert exact < 0
    assert got == pytest.approx(exact, rel=5e-3)


def _ring_state(ring_values):
    ring = np.broadcast_to(ring_values, (MESH.m + 1, MESH.u_idx.size)).copy()
    return state_from_fields(CFG, MESH, ZERO, ZERO, ring=ring)


def test_F3_of_constant_delay_field():
    c = 1.3
    s = _ring_state(np.full(MESH.u_idx.size, c))
    omega = 2.0                      # |(0,1) u (2,3)|
    exact = c ** 2 * omega * (1 - math.exp(-CFG.tau))
    assert diag.lyapunov_F3(s, CFG) == pytest.approx(exact, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_F3_bracket(seed):
    rng = np.random.default_rng(seed)
    ring = rng.standard_normal((MESH.m + 1, MESH.u_idx.size))
    s = state_from_fields(CFG, MESH, ZERO, ZERO, ring=ring)
    delay = diag.energy(s, CFG).delay
    F3 = diag.lyapunov_F3(s, CFG)
    tau, zeta = CFG.tau, CFG.zeta_value
    assert tau * math.exp(-tau) * 2 / zeta * delay <= F3 * (1 + 1e-12)
    assert F3 <= tau * 2 / zeta * delay * (1 + 1e-12)


def test_L_needs_a_feasible_certificate_and_reduces_to_N1E_plus_F3():
    s = _ring_state(np.full(MESH.u_idx.size, 0.2))
    bad = find_certificate(plain(kernel=RelaxationKernel.exponential(0.5, 1.0)))
    assert not bad.feasible
    with pytest.raises(PreconditionError):
        diag.lyapunov_L(s, CFG, bad)
    W = on_u(lambda x: np.sin(math.pi * x / 3))
    s = state_from_fields(CFG, MESH, W, 0.3 * W, ring=s.ring)
    only_n1 = Certificate(7.0, 0.0, 0.0, 0.0, {}, True, 0.0, 0.0)
    E = diag.energy(s, CFG).total
    L = diag.lyapunov_L(s, CFG, only_n1)
    assert L == pytest.approx(7.0 * E + diag.lyapunov_F3(s, CFG), rel=1e-14)
    assert L >= 7.0 * E


def test_cauchy_schwarz_holds_along_runs():
    for kind in ("exponential", "polynomial"):
        rec = run(scenarios.standard(kind, T=1.0), stride=50, keep_snapshots=False)
        assert rec.cs_worst <= 1e-10


def _record(t, E, extra=None):
    rows = {"t": np.asarray(t, float), "E_total": np.asarray(E, float)}
    rows.update(extra or {})
    return SimpleNamespace(rows=rows, step_energy=np.asarray(E, float), certificate=None)


def test_rate_check_refuses_invalid_configs():
    rec = _record([0, 1, 2], [1, 1, 1])
    with pytest.raises(PreconditionError):
        diag.energy_rate_check(rec, scenarios.standard(mu2=2.5))


def test_rate_check_on_zero_run():
    cfg = scenarios.standard(T=0.05, u0={"preset": "zero"})
    rc = diag.energy_rate_check(run(cfg, keep_snapshots=False), cfg)
    assert rc.monotone and math.isnan(rc.empirical_c4)
    assert rc.c4_candidate == pytest.approx(0.5)


def test_rate_check_on_bump_data():
    cfg = scenarios.standard(T=3.0)
    rc = diag.energy_rate_check(run(cfg, stride=5, keep_snapshots=False), cfg)
    assert rc.monotone and rc.worst_violation < 0 and rc.empirical_c4 > 0


def test_rate_check_needs_three_levels():
    with pytest.raises(InsufficientDataError):
        diag.energy_rate_check(_record([0, 1], [1, 0.5]), scenarios.standard())


def test_decay_fit_errors():
    with pytest.raises(DegenerateDataError):
        diag.decay_fit(_record(np.arange(20), np.zeros(20)), RelaxationKernel.exponential(1, 1))
    with pytest.raises(InsufficientDataError):
        diag.decay_fit(_record([0, 1, 2, 3], [1, 0.5, 0.2, 0.1]), RelaxationKernel.exponential(1, 1))


def test_decay_fit_recovers_exact_rates():
    t = np.linspace(0, 20, 201)
    k = RelaxationKernel.exponential(0.5, 1.5)
    fit = diag.decay_fit(_record(t, 3.0 * np.exp(-0.4 * 1.5 * t)), k)
    assert fit.gamma1 == pytest.approx(0.4, rel=1e-12)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    assert fit.window == (10.0, 20.0)
    p = RelaxationKernel.polynomial(0.5, 2.0)
    rec = _record(t, 2.0 * (1 + t) ** (-2 * 0.7))
    fit = diag.decay_fit(rec, p)
    assert fit.gamma1 == pytest.approx(0.7, rel=1e-12)
    assert diag.log1p_slope(rec) == pytest.approx(-2 * fit.gamma1, abs=1e-10)
    assert set(fit.to_json()) >= {"gamma1", "intercept", "r2", "window", "kernel_kind"}


def test_decay_fit_skips_underflowed_rows():
    t = np.linspace(0, 20, 201)
    E = np.exp(-t)
    E[-3:] = 0.0
    fit = diag.decay_fit(_record(t, E), RelaxationKernel.exponential(1, 1))
    assert fit.n_rows == 98 and fit.gamma1 == pytest.approx(1.0, rel=1e-12)
