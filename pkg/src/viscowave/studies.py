"""Refinement studies shared by the CLI and the test-suite."""
import math
from dataclasses import dataclass

import numpy as np

from . import scenarios
from .kernels import HistorySeries, RelaxationKernel, check_product_rule, conv_moments
from .solver import build_mesh, init_state, step


@dataclass
class LevelResult:
    nx: int
    dx: float
    dt: float
    error: float
    ratio: float        # error of the previous (coarser) level over this one; nan on the first
    note: str = ""


def standing_wave_error(nx, periods=1.25, dt=None):
    """L2 error at the final time against the exact standing mode. Returns ``(error, mesh)``."""
    cfg, omega = scenarios.standing_wave(nx=nx, periods=periods, dt=dt)
    mesh = build_mesh(cfg)
    state = init_state(cfg, mesh)
    for _ in range(mesh.nsteps):
        state = step(state, cfg, mesh)
    exact = np.sin(math.pi * mesh.x / cfg.L3) * math.cos(omega * state.t)
    return float(np.sqrt(np.trapezoid((state.w - exact) ** 2, mesh.x))), mesh


def convergence_table(levels=4, base_nx=20, periods=1.25, dt=None):
    """Errors for ``levels`` meshes, each halving ``dx``; ``dt`` scales with ``dx``
    unless given, in which case it is only reduced where CFL requires."""
    rows = []
    prev = None
    for i in range(levels):
        nx = base_nx * 2 ** i
        err, mesh = standing_wave_error(nx, periods, dt)
        ratio = prev / err if prev is not None and err > 0 else math.nan
        rows.append(LevelResult(nx, mesh.dx, mesh.dt, err, ratio, "; ".join(mesh.notes)))
        prev = err
    return rows


def synthetic_history(dt, T=2.0, ncols=4, constant=False):
    """Smooth test field ``h(x, t) = sin(x) cos(t)`` on ``ncols`` points of ``[0.3, 2.5]``,
    or ones when ``constant``."""
    t = np.arange(int(round(T / dt)) + 1) * dt
    if constant:
        H = np.ones((t.size, ncols))
    else:
        x = np.linspace(0.3, 2.5, ncols)
        H = np.cos(t)[:, None] * np.sin(x)[None, :]
    return HistorySeries.from_array(dt, H)


@dataclass
class IdentityLevel:
    dt: float
    product_rule_residual: float
    product_rule_ratio: float
    decomposition_residual: float    # relative, against the trapezoid weight sum
    cs_excess: float                 # max of (g<>h)^2 - G_h (g[]h), scaled; <= 0 means it holds


def identity_report(kernel=None, dt=0.02, levels=3, T=2.0, constant=False):
    """Convolution identities on the synthetic field at ``levels`` step sizes."""
    kernel = kernel or RelaxationKernel.exponential(0.5, 1.0)
    out = []
    prev = None
    for i in range(levels):
        h = dt / 2 ** i
        hist = synthetic_history(h, T, constant=constant)
        res = check_product_rule(kernel, hist)
        star, diamond, square, gsum = conv_moments(kernel, hist)
        hn = hist.latest()
        target = gsum * hn
        decomp = float(np.max(np.abs(star + diamond - target) / np.maximum(np.abs(target), 1e-300)))
        if gsum > 0:
            lhs, rhs = diamond ** 2, gsum * square
            cs = float(np.max((lhs - rhs) / (lhs + rhs + (gsum * hn) ** 2)))
        else:
            cs = 0.0
        ratio = prev / res if prev is not None and res > 0 else math.nan
        out.append(IdentityLevel(h, res, ratio, decomp, cs))
        prev = res
    return out
