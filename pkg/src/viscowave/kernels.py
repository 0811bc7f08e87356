"""Relaxation kernels and the three memory convolutions.

The convolutions act on a uniformly sampled history ``h(., t_k)``,
``t_k = k*dt``, and use the composite trapezoid rule on that grid:

    (g * h)(t)  = int_0^t g(t-s) h(s) ds
    (g <> h)(t) = int_0^t g(t-s) (h(t) - h(s)) ds      (signed difference)
    (g [] h)(t) = int_0^t g(t-s) (h(t) - h(s))**2 ds

Because all three share the same nodes, ``star + diamond`` equals the
trapezoid sum of ``g`` times ``h(t)`` up to rounding.
"""
import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import _accel
from .errors import DomainError, PreconditionError, RangeError, UnsupportedKernelError


class KernelKind(enum.Enum):
    EXPONENTIAL = "exponential"
    POLYNOMIAL = "polynomial"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class RelaxationKernel:
    """Memory kernel ``g`` together with its rate witness ``xi``.

    Exponential: ``g(t) = g0*exp(-rate*t)``, ``xi = rate``.
    Polynomial:  ``g(t) = g0*(1+t)**(-rate)``, ``xi = rate/(1+t)``.
    Tabulated:   samples ``(t, g, g', xi)``, linear interpolation in ``t``.

    ``g0 = 0`` is accepted and gives the zero kernel; whether ``g`` satisfies
    the decay hypotheses is decided by :func:`viscowave.problem.validate`.
    """

    kind: KernelKind
    g0: float
    rate: float = 0.0
    table: tuple = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind is KernelKind.TABULATED:
            if self.table is None:
                raise ValueError("tabulated kernel needs a table")
            t, g, dg, xi = (np.asarray(c, dtype=float) for c in self.table)
            if t.ndim != 1 or not (t.shape == g.shape == dg.shape == xi.shape) or t.size < 2:
                raise ValueError("table columns must be 1-D and of equal length >= 2")
            if t[0] != 0.0 or np.any(np.diff(t) <= 0):
                raise ValueError("table times must start at 0 and increase strictly")
            cum = cumulative_trapezoid(g, t, initial=0.0)
            object.__setattr__(self, "table", (t, g, dg, xi, cum))
            object.__setattr__(self, "g0", float(g[0]))
        else:
            if self.g0 < 0:
                raise ValueError("g0 must be nonnegative")
            if self.rate < 0:
                raise ValueError("rate must be nonnegative")

    @classmethod
    def exponential(cls, g0, eta):
        return cls(KernelKind.EXPONENTIAL, float(g0), float(eta))

    @classmethod
    def polynomial(cls, g0, p):
        return cls(KernelKind.POLYNOMIAL, float(g0), float(p))

    @classmethod
    def tabulated(cls, t, g, dg, xi):
        return cls(KernelKind.TABULATED, 0.0, 0.0, (t, g, dg, xi))

    @classmethod
    def zero(cls):
        return cls(KernelKind.EXPONENTIAL, 0.0, 1.0)

    @property
    def is_zero(self):
        if self.kind is KernelKind.TABULATED:
            return not np.any(self.table[1])
        return self.g0 == 0.0

    @property
    def t_max(self):
        if self.kind is KernelKind.TABULATED:
            return float(self.table[0][-1])
        return math.inf

    def _check_range(self, t):
        if np.any(t < 0):
            raise DomainError("kernel evaluated at negative time")
        if self.kind is KernelKind.TABULATED and np.any(t > self.table[0][-1]):
            raise RangeError(f"time outside kernel table [0, {self.table[0][-1]}]")

    # vectorized evaluators; arguments assumed in range
    def g(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind is KernelKind.EXPONENTIAL:
            return self.g0 * np.exp(-self.rate * t)
        if self.kind is KernelKind.POLYNOMIAL:
            return self.g0 * (1.0 + t) ** (-self.rate)
        return np.interp(t, self.table[0], self.table[1])

    def dg(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind is KernelKind.EXPONENTIAL:
            return -self.rate * self.g0 * np.exp(-self.rate * t)
        if self.kind is KernelKind.POLYNOMIAL:
            return -self.rate * self.g0 * (1.0 + t) ** (-self.rate - 1.0)
        return np.interp(t, self.table[0], self.table[2])

    def xi(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind is KernelKind.EXPONENTIAL:
            return np.full_like(t, self.rate)
        if self.kind is KernelKind.POLYNOMIAL:
            return self.rate / (1.0 + t)
        return np.interp(t, self.table[0], self.table[3])

    def G(self, t):
        """Cumulative integral ``int_0^t g``."""
        t = np.asarray(t, dtype=float)
        g0, r = self.g0, self.rate
        if self.kind is KernelKind.EXPONENTIAL:
            if r == 0.0:
                return g0 * t
            return (g0 / r) * -np.expm1(-r * t)
        if self.kind is KernelKind.POLYNOMIAL:
            if r == 1.0:
                return g0 * np.log1p(t)
            return (g0 / (r - 1.0)) * (1.0 - (1.0 + t) ** (1.0 - r))
        tt, gg, _, _, cum = self.table
        # exact integral of the piecewise-linear interpolant
        i = np.clip(np.searchsorted(tt, t, side="right") - 1, 0, tt.size - 2)
        gt = np.interp(t, tt, gg)
        return cum[i] + 0.5 * (gg[i] + gt) * (t - tt[i])

    @property
    def G_inf(self):
        """``int_0^inf g``; for tabulated kernels the integral over the table."""
        if self.g0 == 0.0 and self.kind is not KernelKind.TABULATED:
            return 0.0
        if self.kind is KernelKind.EXPONENTIAL:
            return self.g0 / self.rate if self.rate > 0 else math.inf
        if self.kind is KernelKind.POLYNOMIAL:
            return self.g0 / (self.rate - 1.0) if self.rate > 1.0 else math.inf
        return float(self.table[4][-1])

    def xi_integral(self, t):
        """``X(t) = int_0^t xi(s) ds``."""
        t = np.asarray(t, dtype=float)
        if self.kind is KernelKind.EXPONENTIAL:
            return self.rate * t
        if self.kind is KernelKind.POLYNOMIAL:
            return self.rate * np.log1p(t)
        tt, xi = self.table[0], self.table[3]
        cum = cumulative_trapezoid(xi, tt, initial=0.0)
        i = np.clip(np.searchsorted(tt, t, side="right") - 1, 0, tt.size - 2)
        xt = np.interp(t, tt, xi)
        return cum[i] + 0.5 * (xi[i] + xt) * (t - tt[i])


def kernel_eval(kernel, t):
    """Return ``(g(t), g'(t), xi(t), G(t))`` at a scalar time ``t >= 0``."""
    t = float(t)
    kernel._check_range(np.asarray(t))
    return (float(kernel.g(t)), float(kernel.dg(t)), float(kernel.xi(t)), float(kernel.G(t)))


def beta(kernel, a, t):
    """Effective stiffness ``a - int_0^t g``; ``t = inf`` gives ``beta0``."""
    if t == math.inf:
        return a - kernel.G_inf
    return a - kernel_eval(kernel, t)[3]


class HistorySeries:
    """Append-only log of nodal snapshots ``h(., k*dt)``, k = 0..n.

    Several series may share one buffer: each series sees only its own
    first ``n+1`` rows, so appending never changes an existing series. When
    a series that is not at the tip of its buffer is appended to, the
    buffer is copied first.
    """

    def __init__(self, dt, ncols, capacity=16, _buf=None, _len=0, _owner=None):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.dt = float(dt)
        self.ncols = int(ncols)
        self._buf = _buf if _buf is not None else np.empty((max(capacity, 1), self.ncols))
        self._len = _len
        self._owner = _owner if _owner is not None else [0]

    @classmethod
    def from_array(cls, dt, samples):
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        buf = np.ascontiguousarray(samples.copy())
        return cls(dt, samples.shape[1], _buf=buf, _len=samples.shape[0], _owner=[samples.shape[0]])

    def __len__(self):
        return self._len

    @property
    def n(self):
        """Index of the newest sample (``len - 1``)."""
        return self._len - 1

    @property
    def t_now(self):
        return max(self._len - 1, 0) * self.dt

    @property
    def samples(self):
        return self._buf[:self._len]

    @property
    def buffer(self):
        return self._buf

    def latest(self):
        if self._len == 0:
            return np.zeros(self.ncols)
        return self._buf[self._len - 1]

    def append(self, snapshot):
        snapshot = np.asarray(snapshot, dtype=float)
        if snapshot.shape != (self.ncols,):
            raise ValueError(f"snapshot length {snapshot.shape} != ({self.ncols},)")
        buf, owner = self._buf, self._owner
        if owner[0] != self._len:
            # branching from an older state: fork the log
            buf = self._buf[:self._len].copy()
            owner = [self._len]
        if self._len >= buf.shape[0]:
            grown = np.empty((max(2 * buf.shape[0], self._len + 1), self.ncols))
            grown[:self._len] = buf[:self._len]
            buf = grown
        buf[self._len] = snapshot
        owner[0] = self._len + 1
        return HistorySeries(self.dt, self.ncols, _buf=buf, _len=self._len + 1, _owner=owner)


def trapezoid_coefficients(values, dt):
    """Trapezoid weights on ``n+1`` equispaced samples times ``values``.

    ``values[k]`` is the kernel at ``t_n - t_k``. A single sample has zero
    weight (empty interval).
    """
    c = values * dt
    if c.size == 1:
        return np.zeros(1)
    c[0] *= 0.5
    c[-1] *= 0.5
    return c


def _kernel_on_lags(kernel, n, dt, derivative=False):
    lags = (n - np.arange(n + 1)) * dt
    kernel._check_range(lags[:1] if lags.size else lags)
    return kernel.dg(lags) if derivative else kernel.g(lags)


def tail_start(values, g0, cutoff):
    """First sample index whose kernel weight is not negligible."""
    if cutoff <= 0 or g0 == 0:
        return 0
    keep = np.nonzero(values >= cutoff * g0)[0]
    return int(keep[0]) if keep.size else values.size - 1


def conv_moments(kernel, hist, derivative=False, tail_cutoff=0.0):
    """All three convolutions of ``hist`` at ``t_now`` plus the weight sum.

    Returns ``(star, diamond, square, g_sum)``; ``g_sum`` is the trapezoid
    approximation of ``int_0^t g`` on the same nodes. With
    ``derivative=True`` the kernel is replaced by ``g'``.
    """
    if len(hist) == 0:
        z = np.zeros(hist.ncols)
        return z, z.copy(), z.copy(), 0.0
    n = hist.n
    vals = _kernel_on_lags(kernel, n, hist.dt, derivative)
    coef = trapezoid_coefficients(vals, hist.dt)
    kmin = tail_start(np.abs(vals), kernel.g0, tail_cutoff)
    star, diamond, square = _accel.history_moments(hist.buffer, n, coef, kmin)
    return star, diamond, square, float(coef[kmin:].sum())


def conv_star(kernel, hist):
    return conv_moments(kernel, hist)[0]


def conv_diamond(kernel, hist):
    return conv_moments(kernel, hist)[1]


def conv_square(kernel, hist):
    return conv_moments(kernel, hist)[2]


def check_product_rule(kernel, hist):
    """Maximum residual of the convolution product identity on ``hist``.

    At each interior level ``j`` compares ``2 (g*h) h'`` with
    ``(g'[]h) - g h**2 - d/dt[(g[]h) - G h**2]``, using central
    differences in time for ``h'`` and ``d/dt (g[]h)`` and the exact
    derivative ``G' = g`` for the second bracket term.
    """
    if len(hist) < 3:
        raise PreconditionError("need at least 3 history samples")
    dt = hist.dt
    H = hist.samples
    n = hist.n
    kernel._check_range(np.asarray(n * dt))
    star = np.empty_like(H)
    square = np.empty_like(H)
    gpsq = np.empty_like(H)
    for j in range(n + 1):
        lags = (j - np.arange(j + 1)) * dt
        cg = trapezoid_coefficients(kernel.g(lags), dt)
        cdg = trapezoid_coefficients(kernel.dg(lags), dt)
        star[j], _, square[j] = _accel.history_moments(H, j, cg, 0)
        gpsq[j] = _accel.history_moments(H, j, cdg, 0)[2]
    worst = 0.0
    for j in range(1, n):
        t = j * dt
        h = H[j]
        hp = (H[j + 1] - H[j - 1]) / (2 * dt)
        gt = float(kernel.g(t))
        Gt = float(kernel.G(t))
        lhs = 2.0 * star[j] * hp
        dsq = (square[j + 1] - square[j - 1]) / (2 * dt)
        dGh2 = gt * h * h + 2.0 * Gt * h * hp
        rhs = gpsq[j] - gt * h * h - (dsq - dGh2)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def recursive_conv_update(carry, kernel, h_new, h_prev, dt):
    """Advance ``int_0^t g(t-s) h(s) ds`` by one step for an exponential ``g``.

    Uses ``g(t+dt) = exp(-eta*dt) g(t)`` and the trapezoid increment on
    ``[t, t+dt]``, so the result matches :func:`conv_star` on the same grid.
    """
    if kernel.kind is not KernelKind.EXPONENTIAL:
        raise UnsupportedKernelError(f"recursive update needs an exponential kernel, got {kernel.kind.value}")
    decay = math.exp(-kernel.rate * dt)
    return decay * carry + (0.5 * dt * kernel.g0) * (decay * np.asarray(h_prev) + np.asarray(h_new))
