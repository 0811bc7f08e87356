"""Problem configuration, hypothesis checks, multiplier q(x) and N-weights."""
import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError, DomainError
from .kernels import KernelKind, RelaxationKernel

PRESETS = ("zero", "gaussian_bump", "sine_mode")


@dataclass(frozen=True)
class Profile:
    """Named initial-data preset.

    ``gaussian_bump``: ``amp*exp(-((x-center)/width)**2)``.
    ``sine_mode``: ``amp*sin(k*pi*(x-x0)/length)`` over ``span``; ``"global"``
    means ``[0, L3]``, ``"local"`` the subinterval the field lives on.
    ``omega`` (history only) multiplies by ``cos(omega*s)``, ``s`` in ``[-tau, 0]``.
    """

    preset: str = "zero"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown initial-data preset {self.preset!r}")

    @classmethod
    def parse(cls, spec):
        if spec is None:
            return cls()
        if isinstance(spec, str):
            return cls(spec)
        if isinstance(spec, Profile):
            return spec
        spec = dict(spec)
        name = spec.pop("preset", None) or spec.pop("kind", None)
        if name is None:
            raise ConfigError(f"initial-data entry without preset: {spec!r}")
        return cls(name, spec)

    def to_json(self):
        if not self.params:
            return self.preset
        return {"preset": self.preset, **self.params}

    def __call__(self, x, geometry, field_kind, s=None):
        x = np.asarray(x, dtype=float)
        p = self.params
        if self.preset == "zero":
            out = np.zeros_like(x)
        elif self.preset == "gaussian_bump":
            out = p.get("amp", 1.0) * np.exp(-(((x - p["center"]) / p["width"]) ** 2))
        else:
            L1, L2, L3 = geometry
            k = p.get("k", 1)
            amp = p.get("amp", 1.0)
            span = p.get("span", "local" if field_kind == "v" else "global")
            if span == "global":
                out = amp * np.sin(k * math.pi * x / L3)
            elif field_kind == "v":
                out = amp * np.sin(k * math.pi * (x - L1) / (L2 - L1))
            else:
                out = np.where(x <= L1, amp * np.sin(k * math.pi * x / L1),
                               amp * np.sin(k * math.pi * (x - L2) / (L3 - L2)))
        if s is not None and "omega" in p:
            out = out * math.cos(p["omega"] * s)
        return out


@dataclass(frozen=True)
class ProblemConfig:
    a: float
    b: float
    mu1: float
    mu2: float
    tau: float
    L1: float
    L2: float
    L3: float
    kernel: RelaxationKernel
    zeta: float = None          # None: midpoint of the admissible window
    u0: Profile = Profile()
    u1: Profile = Profile()
    v0: Profile = Profile()
    v1: Profile = Profile()
    f0: Profile = Profile()
    nx: int = 100
    dt: float = 0.0025
    T: float = 20.0
    memory: str = "auto"        # auto | direct | recursive
    tail_cutoff: float = 1e-12

    def __post_init__(self):
        if not (0 < self.L1 < self.L2 < self.L3):
            raise ConfigError("geometry must satisfy 0 < L1 < L2 < L3")
        for name in ("a", "b", "tau", "dt"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("mu1", "mu2"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.T < 0 or self.nx <= 0:
            raise ConfigError("T must be >= 0 and nx > 0")
        if self.zeta is not None and not self.zeta > 0:
            raise ConfigError("zeta must be positive")
        if self.memory not in ("auto", "direct", "recursive"):
            raise ConfigError(f"unknown memory mode {self.memory!r}")
        if self.memory == "recursive" and self.kernel.kind is not KernelKind.EXPONENTIAL:
            raise ConfigError("recursive memory needs an exponential kernel")

    @property
    def zeta_value(self):
        if self.zeta is not None:
            return self.zeta
        lo, hi = zeta_window(self.mu1, self.mu2, self.tau)
        return 0.5 * (lo + hi)

    @property
    def geometry(self):
        return (self.L1, self.L2, self.L3)

    @property
    def beta0(self):
        return self.a - self.kernel.G_inf

    def replace(self, **changes):
        d = self.to_dict()
        for key, value in changes.items():
            set_param(d, key, value)
        return ProblemConfig.from_dict(d)

    @classmethod
    def from_dict(cls, d):
        try:
            geo = d["geometry"]
            co = d["coefficients"]
            ker = d["kernel"]
            ini = d.get("initial", {})
            disc = d.get("discretization", {})
            kernel = kernel_from_dict(ker)
            zeta = co.get("zeta")
            if zeta == "midpoint":
                zeta = None
            return cls(
                a=float(co["a"]), b=float(co["b"]), mu1=float(co["mu1"]), mu2=float(co["mu2"]),
                tau=float(co["tau"]), zeta=None if zeta is None else float(zeta),
                L1=float(geo["L1"]), L2=float(geo["L2"]), L3=float(geo["L3"]),
                kernel=kernel,
                u0=Profile.parse(ini.get("u0")), u1=Profile.parse(ini.get("u1")),
                v0=Profile.parse(ini.get("v0")), v1=Profile.parse(ini.get("v1")),
                f0=Profile.parse(ini.get("f0")),
                nx=int(disc.get("nx", 100)), dt=float(disc.get("dt", 0.0025)), T=float(disc.get("T", 20.0)),
                memory=disc.get("memory", "auto"), tail_cutoff=float(disc.get("tail_cutoff", 1e-12)),
            )
        except KeyError as exc:
            raise ConfigError(f"missing config field {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        k = self.kernel
        if k.kind is KernelKind.TABULATED:
            t, g, dg, xi, _ = k.table
            kd = {"kind": "tabulated", "table": {"t": t.tolist(), "g": g.tolist(), "dg": dg.tolist(), "xi": xi.tolist()}}
        else:
            kd = {"kind": k.kind.value, "g0": k.g0, "rate": k.rate}
        return {
            "geometry": {"L1": self.L1, "L2": self.L2, "L3": self.L3},
            "coefficients": {"a": self.a, "b": self.b, "mu1": self.mu1, "mu2": self.mu2,
                             "tau": self.tau, "zeta": "midpoint" if self.zeta is None else self.zeta},
            "kernel": kd,
            "initial": {name: getattr(self, name).to_json() for name in ("u0", "u1", "v0", "v1", "f0")},
            "discretization": {"nx": self.nx, "dt": self.dt, "T": self.T, "memory": self.memory,
                               "tail_cutoff": self.tail_cutoff},
        }


def kernel_from_dict(d):
    kind = str(d.get("kind", "")).lower()
    if kind == "exponential":
        return RelaxationKernel.exponential(d["g0"], d["rate"])
    if kind == "polynomial":
        return RelaxationKernel.polynomial(d["g0"], d["rate"])
    if kind == "tabulated":
        tab = d["table"]
        return RelaxationKernel.tabulated(tab["t"], tab["g"], tab["dg"], tab["xi"])
    if kind in ("none", "zero"):
        return RelaxationKernel.zero()
    raise ConfigError(f"unknown kernel kind {d.get('kind')!r}")


def set_param(d, name, value):
    """Set ``name`` (``"mu2"`` or ``"coefficients.mu2"``) in a config dict."""
    if "." in name:
        section, key = name.split(".", 1)
        if section not in d or key not in d[section]:
            raise ConfigError(f"no config field {name!r}")
        d[section][key] = value
        return
    hits = [sec for sec, body in d.items() if isinstance(body, dict) and name in body]
    if len(hits) != 1:
        raise ConfigError(f"no unique config field {name!r}")
    d[hits[0]][name] = value


def load_config(path):
    with open(path) as fh:
        return ProblemConfig.from_dict(json.load(fh))


def save_config(config, path):
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2)


def zeta_window(mu1, mu2, tau):
    return (tau * mu2, tau * (2 * mu1 - mu2))


def zeta_window_exact(mu1, mu2, tau):
    """The same window in exact rationals of the given floats."""
    t, m1, m2 = Fraction(tau), Fraction(mu1), Fraction(mu2)
    return (t * m2, t * (2 * m1 - m2))


@dataclass
class ValidationReport:
    g1_ok: bool
    g2_ok: bool
    zeta_window_ok: bool
    mu_strict_ok: bool
    mu_weak_ok: bool
    geom_ok: bool
    beta0: float
    zeta: float
    zeta_window: tuple
    margins: dict
    notes: list = field(default_factory=list)

    @property
    def wellposed_ok(self):
        return self.g1_ok and self.g2_ok and self.mu_weak_ok

    @property
    def decay_ok(self):
        return self.wellposed_ok and self.mu_strict_ok and self.zeta_window_ok and self.geom_ok

    def summary(self):
        lines = [f"beta0 = {self.beta0:.6g}",
                 f"zeta = {self.zeta:.6g}, window = ({self.zeta_window[0]:.6g}, {self.zeta_window[1]:.6g})"]
        for name in ("g1_ok", "g2_ok", "zeta_window_ok", "mu_strict_ok", "mu_weak_ok", "geom_ok"):
            lines.append(f"{name:15s} {getattr(self, name)}")
        for name, value in self.margins.items():
            lines.append(f"  margin {name:22s} {value:+.6g}")
        lines.extend(f"  note: {n}" for n in self.notes)
        return "\n".join(lines)


def _g2_samples(kernel, horizon):
    if kernel.kind is KernelKind.TABULATED:
        tmax = kernel.t_max
        return np.concatenate([[0.0], np.logspace(math.log10(tmax) - 6, math.log10(tmax), 999)])
    return np.concatenate([[0.0], np.logspace(-3, math.log10(max(horizon, 10.0)) + 2, 999)])


def validate(config):
    """Check the kernel hypotheses, the zeta window and the geometric condition.

    Never raises on a failed hypothesis; the report carries the outcome.
    """
    k = config.kernel
    notes = []
    beta0 = config.beta0
    margins = {"beta0": beta0}

    g1_ok = k.g0 > 0 and beta0 > 0
    t = _g2_samples(k, config.T)
    g, dg, xi = k.g(t), k.dg(t), k.xi(t)
    tol = 1e-12 * max(k.g0, 1e-300)
    margins["g_nonneg"] = float(g.min())
    margins["g2_pointwise"] = float(-(dg + xi * g).max())
    margins["xi_min"] = float(xi.min())
    margins["xi_monotone"] = float(-np.diff(xi).max())
    g2_ok = bool(g.min() >= 0 and (dg + xi * g).max() <= tol and xi.min() > 0
                 and np.diff(xi).max() <= 1e-12 * max(xi.max(), 1e-300) and dg.max() <= tol)
    if k.kind is KernelKind.TABULATED:
        notes.append("tabulated kernel: divergence of int xi checked only up to the table horizon")
        if g2_ok:
            warnings.warn("divergence of int xi is not decidable from a finite table", stacklevel=2)
    else:
        # exponential: xi = rate; polynomial: xi = rate/(1+t); both diverge iff rate > 0
        g2_ok = g2_ok and k.rate > 0

    zeta = config.zeta_value
    window = zeta_window(config.mu1, config.mu2, config.tau)
    ft, fz = Fraction(config.tau), Fraction(zeta)
    f1, f2 = Fraction(config.mu1), Fraction(config.mu2)
    zeta_ok = ft * f2 < fz < ft * (2 * f1 - f2)
    margins["zeta_lo"] = zeta - window[0]
    margins["zeta_hi"] = window[1] - zeta

    L1, L2, L3 = config.geometry
    factor = 4 * (L2 - L1) / (L1 + L3 - L2)
    margins["geom_b"] = config.b - factor * beta0
    margins["geom_a"] = config.a - factor * beta0
    geom_ok = margins["geom_b"] > 0 and margins["geom_a"] > 0

    return ValidationReport(
        g1_ok=bool(g1_ok), g2_ok=bool(g2_ok), zeta_window_ok=bool(zeta_ok),
        mu_strict_ok=config.mu2 < config.mu1, mu_weak_ok=config.mu2 <= config.mu1,
        geom_ok=bool(geom_ok), beta0=beta0, zeta=zeta, zeta_window=window,
        margins=margins, notes=notes,
    )


def q_eval(x, L1, L2, L3):
    """Piecewise-linear multiplier q(x) on ``[0, L3]`` (vectorized)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > L3):
        raise DomainError("q(x) is defined on [0, L3] only")
    slope = (L1 + L3 - L2) / (2 * (L2 - L1))
    out = np.where(x <= L1, x - L1 / 2,
                   np.where(x < L2, L1 / 2 - slope * (x - L1), x - (L2 + L3) / 2))
    return out if out.ndim else float(out)


def q_bound(L1, L2, L3):
    return max(L1 / 2, (L3 - L2) / 2)


@dataclass
class Certificate:
    N1: float
    N2: float
    N3: float
    N4: float
    residuals: dict
    feasible: bool
    margin_eps: float
    margin_beta0: float
    violated: str = None

    @property
    def weights(self):
        return (self.N1, self.N2, self.N3, self.N4)


def certificate_ratio(L1, L2, L3):
    """``(L1+L3-L2) / (4(L2-L1))``, the N2-to-N4 ceiling."""
    return (L1 + L3 - L2) / (4 * (L2 - L1))


def find_certificate(config, beta0=None):
    """Pick positive weights for the Lyapunov combination.

    ``N3 = 1``, ``N4 = min(a, b)/2``, ``N2`` the midpoint of
    ``(beta0, ratio*N4)`` and ``N1 = 10*(N2+N3+N4)``. Feasibility is decided
    in exact rational arithmetic.
    """
    a, b = config.a, config.b
    L1, L2, L3 = config.geometry
    beta0 = config.beta0 if beta0 is None else beta0
    N3 = 1.0
    N4 = 0.5 * min(a, b) * N3

    fr = Fraction(L1) + Fraction(L3) - Fraction(L2)
    ratio_exact = fr / (4 * (Fraction(L2) - Fraction(L1)))
    hi_exact = ratio_exact * Fraction(min(a, b)) / 2
    lo_exact = Fraction(beta0) if math.isfinite(beta0) else None
    feasible = lo_exact is not None and hi_exact > lo_exact

    hi = float(hi_exact)
    if feasible:
        N2 = float((lo_exact + hi_exact) / 2)
    else:
        N2 = max(beta0, 0.0) if math.isfinite(beta0) else 0.0
    N1 = 10.0 * (N2 + N3 + N4)
    residuals = {
        "N2_below_ratio_N4": certificate_ratio(L1, L2, L3) * N4 - N2,
        "N4_below_bN3": b * N3 - N4,
        "N4_below_aN3": a * N3 - N4,
        "N2_above_N3beta0": N2 - N3 * beta0,
    }
    violated = None
    if not feasible:
        violated = "N2 interval empty: beta0 >= ratio*min(a,b)/2" if lo_exact is not None else "beta0 not finite"
    return Certificate(N1=N1, N2=N2, N3=N3, N4=N4, residuals=residuals, feasible=bool(feasible),
                       margin_eps=N2 - N3 * a, margin_beta0=N2 - N3 * beta0, violated=violated)
