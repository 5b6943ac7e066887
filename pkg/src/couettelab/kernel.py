"""Exact Green's function of the shear-advected heat equation in 2-D.

The rescaled linear problem

    d_t G + (y/nu) d_x G - lap G = 0,   G(x, y, 0; y') = delta(x, y - y')

has the closed-form solution

    G(x, y, tau; y') = 1/(4 pi tau) * (1 + kappa)^(-1/2)
                       * exp( -(x - tau (y + y') / (2 nu))^2 / (4 tau (1 + kappa))
                              - (y - y')^2 / (4 tau) ),

    kappa = tau^2 / (12 nu^2).

The factor (1 + kappa)^(-1/2) is the dissipation enhancement relative to the
plain 2-D heat kernel H(x, y, t) = exp(-(x^2+y^2)/(4t)) / (4 pi t): it is << 1
as soon as tau >> nu.

Time conventions: everything in this module takes the *rescaled* time tau.
Physical time t of the unscaled vorticity equation relates by tau = nu * t;
`to_rescaled_time` / `from_rescaled_time` are the one conversion boundary and
the simulation layer always converts before touching the kernel.

All functions accept scalars or numpy arrays (broadcasting) and are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "KernelParams",
    "KernelPoint",
    "enhancement_factor",
    "eval_green",
    "eval_green_grad",
    "eval_heat",
    "to_rescaled_time",
    "from_rescaled_time",
]

GRAD_VARIABLES = ("x", "x_prime", "y", "y_prime")


@dataclass(frozen=True)
class KernelParams:
    """Viscosity and rescaled time; kappa = tau^2/(12 nu^2) is derived.

    The kernel is singular at tau = 0 (delta initial data), so tau <= 0 is
    rejected here rather than approximated.
    """

    nu: float
    tau: float
    kappa: float = field(init=False)

    def __post_init__(self):
        nu, tau = float(self.nu), float(self.tau)
        if not (math.isfinite(nu) and nu > 0.0):
            raise ValueError(f"nu must be positive and finite, got {self.nu!r}")
        if not (math.isfinite(tau) and tau > 0.0):
            raise ValueError(f"tau must be positive and finite, got {self.tau!r}")
        ratio = tau / nu
        kappa = ratio * ratio / 12.0
        if not math.isfinite(kappa):
            raise ValueError(f"kappa = tau^2/(12 nu^2) overflows for nu={nu}, tau={tau}")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "kappa", kappa)


@dataclass(frozen=True)
class KernelPoint:
    """Evaluation point: x is the longitudinal offset x - x', y and y_prime
    are the evaluation and source heights."""

    x: float
    y: float
    y_prime: float

    def __post_init__(self):
        for name in ("x", "y", "y_prime"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
            object.__setattr__(self, name, v)


def enhancement_factor(params: KernelParams) -> float:
    """(1 + kappa)^(-1/2), in (0, 1]; the gain over the heat kernel."""
    return 1.0 / math.sqrt(1.0 + params.kappa)


def _green_pieces(params: KernelParams, x, y, y_prime):
    """Shared geometry: shear-shifted offset a, vertical offset b, x-variance s."""
    tau, nu, kappa = params.tau, params.nu, params.kappa
    a = np.asarray(x) - tau * (np.asarray(y) + np.asarray(y_prime)) / (2.0 * nu)
    b = np.asarray(y) - np.asarray(y_prime)
    s = 4.0 * tau * (1.0 + kappa)
    return a, b, s


def _green_core(tau: float, kappa: float, a, b):
    """Kernel value from pre-assembled offsets.

    The exponent is grouped into a single exp of a sum (log-prefactor included)
    so that kappa ~ 1e8 (nu ~ 1e-4, tau ~ 1) neither overflows nor underflows
    prematurely.
    """
    s = 4.0 * tau * (1.0 + kappa)
    log_pref = -math.log(4.0 * math.pi * tau) - 0.5 * math.log1p(kappa)
    return np.exp(log_pref - np.asarray(a) ** 2 / s - np.asarray(b) ** 2 / (4.0 * tau))


def eval_green(params: KernelParams, pt: KernelPoint | None = None, *,
               x=None, y=None, y_prime=None):
    """G(x, y, tau; y') per the closed form above. Strictly positive, finite.

    Either a KernelPoint or explicit (possibly array-valued) coordinates.
    """
    if pt is not None:
        x, y, y_prime = pt.x, pt.y, pt.y_prime
    x, y, y_prime = np.asarray(x, float), np.asarray(y, float), np.asarray(y_prime, float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(y_prime))):
        raise ValueError("kernel evaluation requires finite coordinates")
    a, b, _ = _green_pieces(params, x, y, y_prime)
    out = _green_core(params.tau, params.kappa, a, b)
    return float(out) if out.ndim == 0 else out


def eval_green_grad(params: KernelParams, pt: KernelPoint | None = None,
                    which: str = "x", *, x=None, y=None, y_prime=None):
    """Exact partial derivative of G with respect to one of x, x', y, y'.

    Analytic, not differenced: the y-derivative carries the two-term structure

        d_y G = M1 + M2,
        M1 = G * (tau/nu) * a / (4 tau (1 + kappa)),   a = x - tau(y+y')/(2 nu),
        M2 = G * ( -(y - y') / (2 tau) ),

    where M1 is the shear-induced part (proportional to tau/nu) and M2 the
    plain heat part. x' enters only through a, so d_{x'} G = -d_x G.
    """
    if which not in GRAD_VARIABLES:
        raise ValueError(f"which must be one of {GRAD_VARIABLES}, got {which!r}")
    if pt is not None:
        x, y, y_prime = pt.x, pt.y, pt.y_prime
    x, y, y_prime = np.asarray(x, float), np.asarray(y, float), np.asarray(y_prime, float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(y_prime))):
        raise ValueError("kernel evaluation requires finite coordinates")
    a, b, s = _green_pieces(params, x, y, y_prime)
    g = _green_core(params.tau, params.kappa, a, b)
    tau, nu = params.tau, params.nu
    if which == "x":
        out = g * (-2.0 * a / s)
    elif which == "x_prime":
        out = g * (2.0 * a / s)
    elif which == "y":
        out = g * ((tau / nu) * a / s - b / (2.0 * tau))
    else:  # y_prime
        out = g * ((tau / nu) * a / s + b / (2.0 * tau))
    out = np.asarray(out)
    return float(out) if out.ndim == 0 else out


def green_grad_parts(params: KernelParams, pt: KernelPoint):
    """(M1, M2) split of d_y G; M1 + M2 == eval_green_grad(..., 'y')."""
    a, b, s = _green_pieces(params, pt.x, pt.y, pt.y_prime)
    g = _green_core(params.tau, params.kappa, a, b)
    m1 = float(g * (params.tau / params.nu) * a / s)
    m2 = float(g * (-b / (2.0 * params.tau)))
    return m1, m2


def eval_heat(t, x, y):
    """Classical 2-D heat kernel (1/(4 pi t)) exp(-(x^2+y^2)/(4t)), t > 0."""
    t = float(t)
    if not (math.isfinite(t) and t > 0.0):
        raise ValueError(f"t must be positive and finite, got {t!r}")
    x, y = np.asarray(x, float), np.asarray(y, float)
    out = np.exp(-math.log(4.0 * math.pi * t) - (x * x + y * y) / (4.0 * t))
    return float(out) if out.ndim == 0 else out


def to_rescaled_time(t_phys: float, nu: float) -> float:
    """tau = nu * t: the rescaled solution at tau equals the physical one at t."""
    t_phys, nu = float(t_phys), float(nu)
    if t_phys <= 0.0 or nu <= 0.0:
        raise ValueError("to_rescaled_time requires positive t_phys and nu")
    return nu * t_phys


def from_rescaled_time(tau: float, nu: float) -> float:
    """Inverse of to_rescaled_time: t = tau / nu."""
    tau, nu = float(tau), float(nu)
    if tau <= 0.0 or nu <= 0.0:
        raise ValueError("from_rescaled_time requires positive tau and nu")
    return tau / nu
