"""Explicit finite-difference solver for the coupled viscoelastic/elastic system.

All nodal values live in one global vector over ``[0, L3]``; the outer
field ``u`` is the restriction to ``[0, L1] U [L2, L3]`` and the inner field
``v`` the restriction to ``[L1, L2]``. The interface nodes are shared, so
``u(Li) = v(Li)`` holds exactly. Each node carries the lumped mass ``dx``;
cell fluxes are ``a*u_x - (g*u_x)`` on outer cells and ``b*v_x`` on inner
cells, so the interface rows are the finite-volume balance over the two
adjacent half cells.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CompatibilityError, InstabilityError
from .kernels import (HistorySeries, KernelKind, _accel, recursive_conv_update,
                      tail_start)

COMPAT_TOL = 1e-12


@dataclass
class Mesh:
    dx: float
    dt: float
    m: int                   # delay steps, m*dt == tau
    nsteps: int
    x: np.ndarray            # global node coordinates
    i1: int                  # global index of L1
    i2: int                  # global index of L2
    u_idx: np.ndarray        # global indices of u nodes
    v_idx: np.ndarray        # global indices of v nodes
    outer_cells: np.ndarray  # bool, cell j spans nodes j..j+1
    theta: np.ndarray        # per global node: share of the outer field (1, 1/2 or 0)
    notes: list = field(default_factory=list)

    @property
    def n_cells(self):
        return self.x.size - 1

    @property
    def nodes_u(self):
        return self.x[self.u_idx]

    @property
    def nodes_v(self):
        return self.x[self.v_idx]

    @property
    def interface_ids(self):
        """Positions of L1 and L2 inside the u and v node arrays."""
        n1 = self.i1 + 1
        return {"u": (self.i1, n1), "v": (0, self.v_idx.size - 1)}

    @property
    def u_weights(self):
        """Trapezoid weights of the u nodes over the outer domain."""
        w = np.full(self.u_idx.size, self.dx)
        n1 = self.i1 + 1
        w[[0, self.i1, n1, -1]] *= 0.5
        return w

    @property
    def v_weights(self):
        w = np.full(self.v_idx.size, self.dx)
        w[[0, -1]] *= 0.5
        return w

    @property
    def cell_mid(self):
        return 0.5 * (self.x[:-1] + self.x[1:])


def _commensurate_cells(L1, L2, L3, nx, limit=100000):
    n0 = max(int(math.ceil(L3 * nx - 1e-9)), 3)
    for n in range(n0, n0 + limit):
        dx = L3 / n
        ok = all(abs(L / dx - round(L / dx)) < 1e-9 * max(1.0, L / dx) for L in (L1, L2))
        if ok:
            return n
    raise CompatibilityError("no uniform mesh places L1 and L2 on nodes")


def build_mesh(config):
    """Uniform mesh with nodes at 0, L1, L2, L3 and a CFL-safe ``dt`` dividing ``tau``."""
    L1, L2, L3 = config.geometry
    notes = []
    n = _commensurate_cells(L1, L2, L3, config.nx)
    if n != int(round(L3 * config.nx)):
        msg = f"mesh adjusted to {n} cells so that L1 and L2 are nodes"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    dx = L3 / n
    x = np.linspace(0.0, L3, n + 1)
    i1 = int(round(L1 / dx))
    i2 = int(round(L2 / dx))
    x[i1], x[i2] = L1, L2

    dt = config.dt
    cfl = dx / math.sqrt(max(config.a, config.b))
    if dt > cfl * (1 + 1e-12):
        msg = f"dt={dt:g} violates CFL, reduced to {cfl:g}"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
        dt = cfl
    m = max(int(math.ceil(config.tau / dt - 1e-9)), 1)
    dt = config.tau / m
    if dt != config.dt:
        notes.append(f"dt set to tau/{m} = {dt:g}")
    ratio = config.T / dt
    nsteps = int(round(ratio)) if abs(ratio - round(ratio)) < 1e-6 else int(math.ceil(ratio))

    u_idx = np.concatenate([np.arange(0, i1 + 1), np.arange(i2, n + 1)])
    v_idx = np.arange(i1, i2 + 1)
    outer = np.ones(n, dtype=bool)
    outer[i1:i2] = False
    theta = np.ones(n + 1)
    theta[i1 + 1:i2] = 0.0
    theta[[i1, i2]] = 0.5
    return Mesh(dx=dx, dt=dt, m=m, nsteps=nsteps, x=x, i1=i1, i2=i2, u_idx=u_idx, v_idx=v_idx,
                outer_cells=outer, theta=theta, notes=notes)


@dataclass
class MemoryState:
    """Convolutions of the outer gradient history at the current level.

    ``star``, ``diamond``, ``square`` are per outer cell; ``gsum`` is the
    trapezoid sum of the kernel on the same nodes. Direct mode keeps the
    full history ``hist``; recursive mode keeps the two running carries.
    """

    star: np.ndarray
    diamond: np.ndarray
    square: np.ndarray
    gsum: float
    hist: HistorySeries = None
    carry_sq: np.ndarray = None
    ux: np.ndarray = None


@dataclass
class SimState:
    t: float
    step_index: int
    w: np.ndarray            # global nodal values at t_n
    w_prev: np.ndarray       # global nodal values at t_{n-1}
    ut: np.ndarray           # velocity estimate at t_n on the u nodes
    ring: np.ndarray         # (m+1, n_u) circular storage of velocity estimates
    head: int                # row of ring slot 0
    memory: MemoryState
    mesh: Mesh = field(repr=False)

    @property
    def u(self):
        return self.w[self.mesh.u_idx]

    @property
    def v(self):
        return self.w[self.mesh.v_idx]

    @property
    def u_prev(self):
        return self.w_prev[self.mesh.u_idx]

    @property
    def v_prev(self):
        return self.w_prev[self.mesh.v_idx]

    @property
    def ux_hist(self):
        return self.memory.hist

    def ring_slot(self, k):
        """Velocity at ``t - k*dt`` (``z`` at ``rho = k/m``)."""
        m1 = self.ring.shape[0]
        return self.ring[(self.head - k) % m1]

    def ring_slots(self):
        """All slots ordered k = 0..m."""
        m1 = self.ring.shape[0]
        order = (self.head - np.arange(m1)) % m1
        return self.ring[order]


def delayed_velocity(state):
    """``z(., 1, t) = u_t(., t - tau)``: the oldest ring slot, read without interpolation."""
    return state.ring_slot(state.ring.shape[0] - 1)


def _grad(w, dx):
    return np.diff(w) / dx


def _acceleration(w, star, config, mesh):
    """Elastic part of ``M^{-1}(-K w)``, memory included; zero at the Dirichlet nodes."""
    flux = _grad(w, mesh.dx)
    outer = mesh.outer_cells
    flux[outer] = config.a * flux[outer] - star
    flux[~outer] *= config.b
    acc = np.zeros_like(w)
    acc[1:-1] = np.diff(flux) / mesh.dx
    return acc


def memory_mode(config):
    if config.memory != "auto":
        return config.memory
    if config.kernel.kind is KernelKind.EXPONENTIAL:
        return "recursive"
    return "direct"


class _Lags:
    """Kernel values on the lag grid, shared by every step of a run."""

    def __init__(self, kernel, dt, nsteps):
        lags = np.arange(nsteps + 1) * dt
        kernel._check_range(lags[-1:])
        self.kernel = kernel
        self.g = kernel.g(lags)
        self.dg = kernel.dg(lags)
        self.dt = dt

    def coefficients(self, n, derivative=False):
        vals = (self.dg if derivative else self.g)[n::-1]
        c = vals * self.dt
        if n == 0:
            c[:] = 0.0
        else:
            c[0] *= 0.5
            c[-1] *= 0.5
        return c


_LAGS = {}


def _lags_for(kernel, dt, n):
    lag = _LAGS.get("current")
    if lag is None or lag.kernel is not kernel or lag.dt != dt or lag.g.size < n + 1:
        lag = _LAGS["current"] = _Lags(kernel, dt, n)
    return lag


def _direct_moments(hist, config, mesh, derivative=False):
    n = hist.n
    lag = _lags_for(config.kernel, mesh.dt, max(n, mesh.nsteps))
    coef = lag.coefficients(n, derivative)
    kmin = tail_start(lag.g[n::-1], config.kernel.g0, config.tail_cutoff)
    star, diamond, square = _accel.history_moments(hist.buffer, n, coef, kmin)
    return star, diamond, square, float(coef[kmin:].sum())


def _initial_memory(ux, config, mesh):
    z = np.zeros_like(ux)
    if memory_mode(config) == "recursive":
        return MemoryState(star=z, diamond=z.copy(), square=z.copy(), gsum=0.0,
                           carry_sq=z.copy(), ux=ux)
    hist = HistorySeries(mesh.dt, ux.size, capacity=mesh.nsteps + 1).append(ux)
    return MemoryState(star=z, diamond=z.copy(), square=z.copy(), gsum=0.0, hist=hist, ux=ux)


def _advance_memory(mem, ux_new, config, mesh):
    if mem.hist is None:
        k, dt = config.kernel, mesh.dt
        star = recursive_conv_update(mem.star, k, ux_new, mem.ux, dt)
        carry_sq = recursive_conv_update(mem.carry_sq, k, ux_new * ux_new, mem.ux * mem.ux, dt)
        gsum = float(recursive_conv_update(np.array(mem.gsum), k, 1.0, 1.0, dt))
        diamond = gsum * ux_new - star
        square = np.maximum(gsum * ux_new * ux_new - 2.0 * ux_new * star + carry_sq, 0.0)
        return MemoryState(star=star, diamond=diamond, square=square, gsum=gsum,
                           carry_sq=carry_sq, ux=ux_new)
    hist = mem.hist.append(ux_new)
    star, diamond, square, gsum = _direct_moments(hist, config, mesh)
    return MemoryState(star=star, diamond=diamond, square=square, gsum=gsum, hist=hist, ux=ux_new)


def gprime_square(state, config):
    """``(g' [] u_x)`` per outer cell at the state's level."""
    mem = state.memory
    if mem.hist is None:
        return -config.kernel.rate * mem.square
    return _direct_moments(mem.hist, config, state.mesh, derivative=True)[2]


def _profiles_on_nodes(config, mesh, upro, vpro, what):
    """Assemble a global nodal vector from u- and v-profiles, checking compatibility."""
    xu, xv = mesh.nodes_u, mesh.nodes_v
    uval = np.asarray(upro(xu, config.geometry, "u"), dtype=float)
    vval = np.asarray(vpro(xv, config.geometry, "v"), dtype=float)
    if abs(uval[0]) > COMPAT_TOL or abs(uval[-1]) > COMPAT_TOL:
        raise CompatibilityError(f"{what}: outer field does not vanish at x=0 and x=L3")
    iu1, iu2 = mesh.interface_ids["u"]
    if abs(uval[iu1] - vval[0]) > COMPAT_TOL or abs(uval[iu2] - vval[-1]) > COMPAT_TOL:
        raise CompatibilityError(f"{what}: u and v disagree at the interfaces")
    w = np.zeros(mesh.x.size)
    w[mesh.v_idx] = vval
    w[mesh.u_idx] = uval
    w[0] = w[-1] = 0.0
    return w


def init_state(config, mesh):
    """State at t=0 with a second-order Taylor start for the previous level."""
    w0 = _profiles_on_nodes(config, mesh, config.u0, config.v0, "displacement")
    w1 = _profiles_on_nodes(config, mesh, config.u1, config.v1, "velocity")
    dt, m = mesh.dt, mesh.m
    xu = mesh.nodes_u
    ring = np.empty((m + 1, xu.size))
    ring[0] = w1[mesh.u_idx]
    for k in range(1, m + 1):
        ring[k] = config.f0(xu, config.geometry, "u", s=-k * dt)
    # slot k lives at row (head - k) % (m+1); head = 0 means row k-> slot (-k)
    ring = ring[(-np.arange(m + 1)) % (m + 1)]

    f_old = np.zeros_like(w0)
    f_old[mesh.u_idx] = config.f0(xu, config.geometry, "u", s=-config.tau)
    theta = mesh.theta
    acc = _acceleration(w0, np.zeros(int(mesh.outer_cells.sum())), config, mesh)
    force = acc - theta * (config.mu1 * w1 + config.mu2 * f_old)
    w_prev = w0 - dt * w1 + 0.5 * dt * dt * force
    w_prev[0] = w_prev[-1] = 0.0

    ux = _grad(w0, mesh.dx)[mesh.outer_cells]
    mem = _initial_memory(ux, config, mesh)
    return SimState(t=0.0, step_index=0, w=w0, w_prev=w_prev, ut=ring[0].copy(), ring=ring,
                    head=0, memory=mem, mesh=mesh)


def step(state, config, mesh=None):
    """One leapfrog step; returns a new state, the input is left untouched."""
    mesh = mesh or state.mesh
    dt = mesh.dt
    w, wp = state.w, state.w_prev
    z = np.zeros_like(w)
    z[mesh.u_idx] = delayed_velocity(state)
    acc = _acceleration(w, state.memory.star, config, mesh)
    damp = 0.5 * dt * config.mu1 * mesh.theta
    w_new = (2.0 * w - (1.0 - damp) * wp + dt * dt * (acc - config.mu2 * mesh.theta * z)) / (1.0 + damp)
    w_new[0] = w_new[-1] = 0.0
    if not np.all(np.isfinite(w_new)) or np.max(np.abs(w_new)) > 1e150:
        raise InstabilityError(state.step_index + 1)

    v_mid = (w_new - wp)[mesh.u_idx] / (2.0 * dt)
    ut_new = 2.0 * (w_new - w)[mesh.u_idx] / dt - v_mid
    m1 = state.ring.shape[0]
    ring = state.ring.copy()
    if state.step_index >= 1:
        # the central velocity at t_n is now known; it replaces the provisional
        # estimate, so the delayed value is the velocity the damping term used
        ring[state.head] = v_mid
    head = (state.head + 1) % m1
    ring[head] = ut_new

    ux_new = _grad(w_new, mesh.dx)[mesh.outer_cells]
    mem = _advance_memory(state.memory, ux_new, config, mesh)
    n1 = state.step_index + 1
    return SimState(t=n1 * dt, step_index=n1, w=w_new, w_prev=w.copy(), ut=ut_new, ring=ring,
                    head=head, memory=mem, mesh=mesh)


def _one_sided_gradients(w, mesh):
    """Second-order one-sided gradients at L1 and L2 from the outer and inner sides."""
    dx, i1, i2 = mesh.dx, mesh.i1, mesh.i2
    ux1 = (3 * w[i1] - 4 * w[i1 - 1] + w[i1 - 2]) / (2 * dx)
    vx1 = (-3 * w[i1] + 4 * w[i1 + 1] - w[i1 + 2]) / (2 * dx)
    vx2 = (3 * w[i2] - 4 * w[i2 - 1] + w[i2 - 2]) / (2 * dx)
    ux2 = (-3 * w[i2] + 4 * w[i2 + 1] - w[i2 + 2]) / (2 * dx)
    return (ux1, vx1), (ux2, vx2)


def interface_residual(state, config, mesh=None):
    """``(jump, flux)``: displacement jump and transmission-condition defect at L1, L2."""
    mesh = mesh or state.mesh
    u, v = state.u, state.v
    iu1, iu2 = mesh.interface_ids["u"]
    jump = max(abs(u[iu1] - v[0]), abs(u[iu2] - v[-1]))
    beta_t = config.a - float(config.kernel.G(state.t))
    flux = max(abs(beta_t * ux - config.b * vx) for ux, vx in _one_sided_gradients(state.w, mesh))
    return float(jump), float(flux)


@dataclass
class RunRecord:
    """Output of :func:`run`: per-stride diagnostic rows and field snapshots.

    ``rows`` maps column name to an array over the stride rows;
    ``step_energy`` holds the total energy after every step (index = step).
    """

    config: object
    mesh: Mesh
    stride: int
    rows: dict
    snapshots: list
    step_energy: np.ndarray
    cs_worst: float
    certificate: object = None

    @property
    def t(self):
        return self.rows["t"]

    @property
    def E(self):
        return self.rows["E_total"]


CSV_COLUMNS = ("t", "E_total", "E_kin_u", "E_elastic_u", "E_memory", "E_v", "E_delay",
               "D", "F1", "F2", "F3", "L_func", "flux_residual")


def run(config, stride=10, keep_snapshots=True, certificate=None, mesh=None, callback=None):
    """Integrate to ``config.T`` and collect diagnostics every ``stride`` steps."""
    from . import diagnostics as diag
    from .problem import find_certificate

    if stride < 1:
        raise ValueError("stride must be >= 1")
    mesh = mesh or build_mesh(config)
    if certificate is None:
        certificate = find_certificate(config)
    state = init_state(config, mesh)
    nsteps = mesh.nsteps

    extra = ("ut_sq", "z1_sq", "gp_square", "xi", "cs_ratio")
    cols = {name: [] for name in CSV_COLUMNS + extra}
    snapshots = []
    step_energy = np.empty(nsteps + 1)
    cs_worst = 0.0

    def record_row(s):
        rep = diag.energy(s, config)
        fun = diag.functionals(s, config, certificate, report=rep)
        _, flux = interface_residual(s, config, mesh)
        cols["t"].append(s.t)
        cols["E_total"].append(rep.total)
        cols["E_kin_u"].append(rep.kin_u)
        cols["E_elastic_u"].append(rep.elastic_u)
        cols["E_memory"].append(rep.memory)
        cols["E_v"].append(rep.v_part)
        cols["E_delay"].append(rep.delay)
        for key in ("D", "F1", "F2", "F3"):
            cols[key].append(fun[key])
        cols["L_func"].append(fun["L"])
        cols["flux_residual"].append(flux)
        cols["ut_sq"].append(diag.outer_velocity_sq(s))
        cols["z1_sq"].append(diag.delayed_sq(s))
        cols["gp_square"].append(float(np.sum(gprime_square(s, config)) * mesh.dx))
        cols["xi"].append(float(config.kernel.xi(s.t)))
        cols["cs_ratio"].append(diag.cauchy_schwarz_excess(s))
        if keep_snapshots:
            snapshots.append((s.t, s.u.copy(), s.v.copy()))

    step_energy[0] = diag.energy(state, config).total
    record_row(state)
    for n in range(1, nsteps + 1):
        state = step(state, config, mesh)
        step_energy[n] = diag.energy(state, config).total
        cs_worst = max(cs_worst, diag.cauchy_schwarz_excess(state))
        if n % stride == 0 or n == nsteps:
            record_row(state)
        if callback is not None:
            callback(state)
    rows = {k: np.asarray(v, dtype=float) for k, v in cols.items()}
    return RunRecord(config=config, mesh=mesh, stride=stride, rows=rows, snapshots=snapshots,
                     step_energy=step_energy, cs_worst=cs_worst, certificate=certificate)


def write_csv(record, path):
    """Write the diagnostic rows with the fixed column order, full precision."""
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        nrow = record.rows["t"].size
        for i in range(nrow):
            fh.write(",".join(repr(float(record.rows[c][i])) for c in CSV_COLUMNS) + "\n")


def write_snapshots_csv(record, path):
    with open(path, "w") as fh:
        fh.write("t,x,value,field\n")
        xu, xv = record.mesh.nodes_u, record.mesh.nodes_v
        for t, u, v in record.snapshots:
            for xi, val in zip(xu, u):
                fh.write(f"{t!r},{xi!r},{val!r},u\n")
            for xi, val in zip(xv, v):
                fh.write(f"{t!r},{xi!r},{val!r},v\n")
