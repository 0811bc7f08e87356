"""Energy, Lyapunov functionals, dissipation checks and decay fits.

Spatial integrals use the trapezoid rule on the mesh nodes (equivalently
the lumped mass of the solver) and midpoint sums on cells for gradients.
Position and velocity are taken on the leapfrog half step between the two
stored levels, ``(w_n + w_{n-1})/2`` and ``(w_n - w_{n-1})/dt``; with these
the kinetic/elastic exchange of the scheme is conserved exactly.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegenerateDataError, InsufficientDataError, PreconditionError
from .problem import q_eval, validate


@dataclass
class EnergyReport:
    t: float
    kin_u: float
    elastic_u: float
    memory: float
    v_part: float
    delay: float
    total: float

    @classmethod
    def build(cls, t, kin_u, elastic_u, memory, v_part, delay):
        return cls(t, kin_u, elastic_u, memory, v_part, delay,
                   kin_u + elastic_u + memory + v_part + delay)


def _half_step(state):
    dt = state.mesh.dt
    return 0.5 * (state.w + state.w_prev), (state.w - state.w_prev) / dt


def _delay_integral(state, factor=None):
    """``int_Omega int_0^1 factor(rho) z^2`` at the half step ``t_n - dt/2``.

    Slots ``k = 1..m`` hold the velocity at ``t_n - k dt``, the midpoints of
    the ``m`` cells that tile ``[t_{n-1/2} - tau, t_{n-1/2}]``, so the rule is
    the midpoint rule at ``rho = (k - 1/2)/m``.
    """
    mesh = state.mesh
    z = state.ring_slots()[1:]
    w = np.full(mesh.m, 1.0 / mesh.m)
    if factor is not None:
        w = w * factor((np.arange(1, mesh.m + 1) - 0.5) / mesh.m)
    return float(w @ ((z * z) @ mesh.u_weights))


def energy(state, config):
    """Five-part energy of ``state`` at the half step between its two levels."""
    mesh = state.mesh
    dx, dt = mesh.dx, mesh.dt
    outer = mesh.outer_cells
    wbar, vel = _half_step(state)
    gb = np.diff(wbar) / dx
    gv = np.diff(vel) / dx
    ui, vi = mesh.u_idx, mesh.v_idx
    corr = dt * dt / 8.0 * dx
    kin_u = 0.5 * float(mesh.u_weights @ vel[ui] ** 2) - corr * config.a * float(gv[outer] @ gv[outer])
    kin_v = 0.5 * float(mesh.v_weights @ vel[vi] ** 2) - corr * config.b * float(gv[~outer] @ gv[~outer])
    beta_t = config.a - float(config.kernel.G(state.t))
    elastic_u = 0.5 * beta_t * dx * float(gb[outer] @ gb[outer])
    elastic_v = 0.5 * config.b * dx * float(gb[~outer] @ gb[~outer])
    memory = 0.5 * dx * float(np.sum(state.memory.square))
    delay = 0.5 * config.zeta_value * _delay_integral(state)
    return EnergyReport.build(state.t, kin_u, elastic_u, memory, kin_v + elastic_v, delay)


def outer_velocity_sq(state):
    """``int_Omega u_t^2`` with the half-step velocity."""
    vel = _half_step(state)[1][state.mesh.u_idx]
    return float(state.mesh.u_weights @ vel ** 2)


def delayed_sq(state):
    """``int_Omega z(x,1,t)^2``."""
    z = state.ring_slot(state.mesh.m)
    return float(state.mesh.u_weights @ z ** 2)


def cauchy_schwarz_excess(state):
    """Largest scaled excess of ``(g<>u_x)^2`` over ``G (g[]u_x)``, per outer cell.

    Values at or below zero mean the inequality holds; roundoff produces
    excesses of order 1e-16.
    """
    mem = state.memory
    if mem.gsum == 0.0:
        return 0.0
    lhs = mem.diamond ** 2
    rhs = mem.gsum * mem.square
    scale = lhs + rhs + (mem.gsum * mem.ux) ** 2 + 1e-300
    return float(np.max((lhs - rhs) / scale))


def lyapunov_D(state, config):
    mesh = state.mesh
    wbar, vel = _half_step(state)
    ui, vi = mesh.u_idx, mesh.v_idx
    return float(mesh.u_weights @ (wbar[ui] * vel[ui])
                 + 0.5 * config.mu1 * (mesh.u_weights @ wbar[ui] ** 2)
                 + mesh.v_weights @ (wbar[vi] * vel[vi]))


def _cell_terms(state, config):
    mesh = state.mesh
    wbar, vel = _half_step(state)
    gb = np.diff(wbar) / mesh.dx
    vc = 0.5 * (vel[1:] + vel[:-1])
    q = q_eval(mesh.cell_mid, *config.geometry)
    return gb, vc, q


def lyapunov_F1(state, config):
    """``-int_Omega q u_t (a u_x - g*u_x)``."""
    gb, vc, q = _cell_terms(state, config)
    o = state.mesh.outer_cells
    flux = config.a * gb[o] - state.memory.star
    return -state.mesh.dx * float(np.sum(q[o] * vc[o] * flux))


def lyapunov_F2(state, config):
    """``-int_{L1}^{L2} q v_x v_t``."""
    gb, vc, q = _cell_terms(state, config)
    i = ~state.mesh.outer_cells
    return -state.mesh.dx * float(np.sum(q[i] * gb[i] * vc[i]))


def lyapunov_F3(state, config):
    """``tau int_Omega int_0^1 exp(-tau rho) z^2``."""
    tau = config.tau
    return tau * _delay_integral(state, lambda rho: np.exp(-tau * rho))


def lyapunov_L(state, config, cert, report=None):
    if not cert.feasible:
        raise PreconditionError("Lyapunov functional needs a feasible certificate")
    E = (report or energy(state, config)).total
    return (cert.N1 * E + cert.N2 * lyapunov_D(state, config) + cert.N3 * lyapunov_F1(state, config)
            + cert.N4 * lyapunov_F2(state, config) + lyapunov_F3(state, config))


def functionals(state, config, cert=None, report=None):
    out = {"D": lyapunov_D(state, config), "F1": lyapunov_F1(state, config),
           "F2": lyapunov_F2(state, config), "F3": lyapunov_F3(state, config)}
    if cert is not None and cert.feasible:
        E = (report or energy(state, config)).total
        out["L"] = (cert.N1 * E + cert.N2 * out["D"] + cert.N3 * out["F1"]
                    + cert.N4 * out["F2"] + out["F3"])
    else:
        out["L"] = math.nan
    return out


def c4_candidate(config):
    """Smaller of the two Young-inequality coefficients of the dissipation law."""
    r = config.zeta_value / (2 * config.tau)
    return min(config.mu1 - r - config.mu2 / 2, r - config.mu2 / 2)


@dataclass
class RateCheck:
    monotone: bool
    worst_violation: float
    empirical_c4: float
    c4_candidate: float
    tol: float

    def __iter__(self):
        return iter((self.monotone, self.worst_violation, self.empirical_c4))


def energy_rate_check(record, config):
    """Per-step monotonicity of E and the empirical dissipation constant.

    ``worst_violation`` is the largest per-step increase of E (negative when
    E strictly decreased everywhere). ``empirical_c4`` is nan when no row
    has a usable denominator.
    """
    rep = validate(config)
    if not (rep.g1_ok and rep.g2_ok and rep.mu_strict_ok and rep.zeta_window_ok):
        raise PreconditionError("dissipation law is only claimed for mu2 < mu1 with zeta in its window")
    E = record.step_energy
    if E.size < 3:
        raise InsufficientDataError("need at least 3 time levels")
    E0 = float(E[0])
    tol = 1e-8 * E0 + 1e-14
    dE = np.diff(E)
    worst = float(dE.max())
    monotone = bool(np.all(dE <= tol))

    rows = record.rows
    t, Er = rows["t"], rows["E_total"]
    c4 = math.nan
    if t.size >= 3:
        dEdt = (Er[2:] - Er[:-2]) / (t[2:] - t[:-2])
        num = -dEdt + 0.5 * rows["gp_square"][1:-1]
        den = rows["ut_sq"][1:-1] + rows["z1_sq"][1:-1]
        ok = den > 1e-12 * E0
        if np.any(ok):
            c4 = float(np.min(num[ok] / den[ok]))
    return RateCheck(monotone=monotone, worst_violation=worst, empirical_c4=c4,
                     c4_candidate=c4_candidate(config), tol=tol)


@dataclass
class DecayFit:
    gamma1: float
    intercept: float
    r2: float
    window: tuple
    kernel_kind: str
    n_rows: int

    def to_json(self):
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def _linfit(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _fit_rows(record):
    t, E = record.rows["t"], record.rows["E_total"]
    if E.size == 0 or not E[0] > 0:
        raise DegenerateDataError("initial energy is zero")
    T = float(t[-1])
    lo = 0.5 * T
    mask = (t >= lo - 1e-12) & (E > 1e-300)
    if np.count_nonzero(mask) < 5:
        raise InsufficientDataError("fewer than 5 usable rows in the fit window")
    return t[mask], E[mask], (lo, T)


def decay_fit(record, kernel):
    """Least-squares fit ``ln E = intercept - gamma1 * X(t)`` over ``[T/2, T]``,
    with ``X(t) = int_0^t xi``."""
    t, E, window = _fit_rows(record)
    slope, intercept, r2 = _linfit(np.asarray(kernel.xi_integral(t), dtype=float), np.log(E))
    return DecayFit(gamma1=-slope, intercept=intercept, r2=r2, window=window,
                    kernel_kind=kernel.kind.value, n_rows=int(t.size))


def log1p_slope(record):
    """Slope of ``ln E`` against ``ln(1+t)`` over the same window as :func:`decay_fit`."""
    t, E, _ = _fit_rows(record)
    return _linfit(np.log1p(t), np.log(E))[0]


@dataclass
class LyapunovScan:
    contraction_inf: float
    ratio_sup: float        # sup |L/E - N1|
    N1: float


def lyapunov_scan(record, kernel):
    """Contraction rate ``-dL/(xi L dt)`` over ``[T/2, T]`` and the L/E bracket."""
    cert = record.certificate
    if cert is None or not cert.feasible:
        raise PreconditionError("Lyapunov scan needs a feasible certificate")
    rows = record.rows
    t, L, E = rows["t"], rows["L_func"], rows["E_total"]
    E0 = E[0]
    ok = E > 1e-12 * E0
    ratio_sup = float(np.max(np.abs(L[ok] / E[ok] - cert.N1))) if np.any(ok) else math.nan
    T = t[-1]
    idx = np.nonzero((t[:-1] >= 0.5 * T - 1e-12) & (E[:-1] > 1e-300))[0]
    if idx.size == 0:
        raise InsufficientDataError("no rows in the scan window")
    rate = -(L[idx + 1] - L[idx]) / (kernel.xi(t[idx]) * L[idx] * (t[idx + 1] - t[idx]))
    return LyapunovScan(contraction_inf=float(np.min(rate)), ratio_sup=ratio_sup, N1=cert.N1)
