"""Ready-made configurations used by the CLI, tests and benchmarks."""
import math

from .kernels import RelaxationKernel
from .problem import ProblemConfig, Profile


def standard(kernel="exponential", **overrides):
    """Damped, delayed run on ``(0,1) u (1.2,3)`` with a gaussian bump in the outer field.

    With a=b=4 and beta0=3.5 the geometry condition holds and the default
    certificate is feasible.
    """
    if kernel == "exponential":
        k = RelaxationKernel.exponential(0.5, 1.0)
    elif kernel == "polynomial":
        k = RelaxationKernel.polynomial(0.5, 2.0)
    else:
        raise ValueError(f"unknown kernel choice {kernel!r}")
    base = ProblemConfig(
        a=4.0, b=4.0, mu1=2.0, mu2=1.0, tau=0.5, L1=1.0, L2=1.2, L3=3.0, kernel=k,
        u0=Profile("gaussian_bump", {"center": 2.1, "width": 0.1, "amp": 1.0}),
        nx=100, dt=0.0025, T=20.0,
    )
    return base.replace(**overrides) if overrides else base


def standing_wave(nx=100, k=1, periods=1.25, c=4.0, dt=None):
    """Undamped, memoryless global mode ``sin(k pi x / L3) cos(omega t)`` with a=b=c.

    Returns the config and ``omega``. A single speed makes the interface
    invisible, so the mode is an exact solution of the coupled system. The
    default end time is off a whole period: at ``cos(omega T) = +-1`` the
    leading phase error cancels and the measured order is spuriously four.
    """
    L3 = 3.0
    omega = math.sqrt(c) * k * math.pi / L3
    T = periods * 2 * math.pi / omega
    mode = Profile("sine_mode", {"k": k, "amp": 1.0, "span": "global"})
    if dt is None:
        dt = 0.25 / nx
    cfg = ProblemConfig(
        a=c, b=c, mu1=0.0, mu2=0.0, tau=0.5, L1=1.0, L2=2.0, L3=L3, kernel=RelaxationKernel.zero(),
        u0=mode, v0=mode, nx=nx, dt=dt, T=T,
    )
    return cfg, omega


def conservation(periods=10, k=1, nx=100, dt=0.0025):
    """Undamped, memoryless run with a mode confined to the middle field at t=0."""
    L1, L2 = 1.0, 2.0
    b = 4.0
    omega = math.sqrt(b) * k * math.pi / (L2 - L1)
    T = periods * 2 * math.pi / omega
    return ProblemConfig(
        a=4.0, b=b, mu1=0.0, mu2=0.0, tau=0.5, L1=L1, L2=L2, L3=3.0, kernel=RelaxationKernel.zero(),
        v0=Profile("sine_mode", {"k": k, "amp": 1.0, "span": "local"}),
        nx=nx, dt=dt, T=T,
    )
