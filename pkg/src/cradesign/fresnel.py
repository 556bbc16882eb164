"""Interface physics for a dielectric layer backed by a perfect conductor.

Every coefficient here is a function of the facet permittivity ``eps_p`` and is
returned together with its exact derivative with respect to ``eps_p``. All
functions broadcast over numpy arrays, so a whole reflector (or a whole sweep)
can be evaluated in one call.

Polarisation labels follow the source formulation: the "TM" half-plane
coefficient is ``(cos - sqrt(.)) / (cos + sqrt(.))`` (no permittivity ratio in
front of the cosine), the "TE" coefficient carries the ratio. In the usual
textbook vocabulary these are the perpendicular and parallel coefficients,
respectively.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import constants

MU0 = constants.mu_0
EPS0 = constants.epsilon_0
C0 = constants.c

TE = "TE"
TM = "TM"


class FresnelError(ValueError):
    """Raised when a configuration leaves the real-propagation branch."""


class EvanescentError(FresnelError):
    pass


class ResonanceError(FresnelError):
    pass


@dataclass(frozen=True)
class InterfaceContext:
    """Inputs shared by all coefficient evaluations.

    Fields may be scalars or mutually broadcastable arrays. ``theta_i`` is in
    radians, ``frequency`` in Hz and ``thickness`` in meters.
    """

    eps_b: float | np.ndarray
    eps_p: float | np.ndarray
    theta_i: float | np.ndarray
    frequency: float | np.ndarray
    thickness: float | np.ndarray

    def arrays(self):
        eps_b = np.asarray(self.eps_b, dtype=float)
        eps_p = np.asarray(self.eps_p, dtype=float)
        theta = np.asarray(self.theta_i, dtype=float)
        if np.any(eps_b < 1.0):
            raise FresnelError("background permittivity must be >= 1")
        if np.any(eps_p <= 0.0):
            raise FresnelError("scatterer permittivity must be positive")
        if np.any(theta < 0.0) or np.any(theta >= np.pi / 2):
            raise FresnelError("incident angle must lie in [0, pi/2)")
        return eps_b, eps_p, theta

    def with_eps(self, eps_p) -> "InterfaceContext":
        return InterfaceContext(self.eps_b, eps_p, self.theta_i, self.frequency, self.thickness)


class TMCoefficients(NamedTuple):
    gamma: np.ndarray
    t: np.ndarray
    d_gamma: np.ndarray
    d_t: np.ndarray


class TECoefficients(NamedTuple):
    gamma_bp: np.ndarray
    t_bp: np.ndarray
    t_pb: np.ndarray
    d_gamma_bp: np.ndarray
    d_t_bp: np.ndarray
    d_t_pb: np.ndarray


@dataclass(frozen=True)
class CoefficientBundle:
    gamma_bp_te: np.ndarray
    gamma_bp_tm: np.ndarray
    gamma_pb_te: np.ndarray
    gamma_pb_tm: np.ndarray
    t_bp_te: np.ndarray
    t_bp_tm: np.ndarray
    t_pb_te: np.ndarray
    t_pb_tm: np.ndarray
    cos_theta_t: np.ndarray
    d_gamma_bp_te: np.ndarray
    d_gamma_bp_tm: np.ndarray
    d_gamma_pb_te: np.ndarray
    d_gamma_pb_tm: np.ndarray
    d_t_bp_te: np.ndarray
    d_t_bp_tm: np.ndarray
    d_t_pb_te: np.ndarray
    d_t_pb_tm: np.ndarray
    d_cos_theta_t: np.ndarray


@dataclass(frozen=True)
class LayerResponse:
    gamma: np.ndarray
    d_gamma: np.ndarray
    phase: np.ndarray
    d_phase: np.ndarray
    mode: str


def _radicands(eps_b, eps_p, theta):
    sin2 = np.sin(theta) ** 2
    rad_t = 1.0 - (eps_b / eps_p) * sin2
    if np.any(rad_t < 0.0):
        raise EvanescentError(
            "eps_p / eps_b < sin^2(theta_i): transmitted wave is evanescent")
    # s = sqrt(eps_p/eps_b - sin^2) appears in both half-plane coefficients
    rad_s = eps_p / eps_b - sin2
    return sin2, np.sqrt(rad_t), np.sqrt(rad_s)


def snell(ctx: InterfaceContext) -> tuple[np.ndarray, np.ndarray]:
    """Return ``cos(theta_t)`` inside the layer and its derivative in ``eps_p``."""
    eps_b, eps_p, theta = ctx.arrays()
    sin2, cos_t, _ = _radicands(eps_b, eps_p, theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        d_cos_t = np.where(sin2 == 0.0, 0.0, eps_b * sin2 / (2.0 * eps_p**2 * cos_t))
    return cos_t, d_cos_t


def half_plane_tm(ctx: InterfaceContext) -> TMCoefficients:
    """Background-to-layer TM reflection/transmission with derivatives.

    The closed-form derivative is ``-cos / (eps_b s (cos + s)^2)`` with
    ``s = sqrt(eps_p/eps_b - sin^2)``; the commonly printed two-term form does
    not differentiate the coefficient correctly.
    """
    eps_b, eps_p, theta = ctx.arrays()
    _, _, s = _radicands(eps_b, eps_p, theta)
    c = np.cos(theta)
    gamma = (c - s) / (c + s)
    d_gamma = -c / (eps_b * s * (c + s) ** 2)
    return TMCoefficients(gamma, 1.0 + gamma, d_gamma, d_gamma)


def half_plane_te(ctx: InterfaceContext) -> TECoefficients:
    """TE reflection and both transmission directions, with derivatives."""
    eps_b, eps_p, theta = ctx.arrays()
    sin2, cos_t, s = _radicands(eps_b, eps_p, theta)
    c = np.cos(theta)

    num = -eps_p * c + eps_b * s
    den = eps_p * c + eps_b * s
    gamma = num / den
    ds = 1.0 / (2.0 * s)  # d(eps_b s)/d eps_p
    d_gamma = (-c + ds) / den - num * (c + ds) / den**2

    t_bp = (1.0 + gamma) * c / cos_t
    d_t_bp = c * d_gamma / cos_t - eps_b * c * sin2 * (1.0 + gamma) / (2.0 * eps_p**2 * cos_t**3)

    # reverse direction: gamma_pb = -gamma_bp and the angle ratio inverts
    t_pb = (1.0 - gamma) * cos_t / c
    d_t_pb = -d_gamma * cos_t / c + (1.0 - gamma) * eps_b * sin2 / (2.0 * eps_p**2 * c * cos_t)
    return TECoefficients(gamma, t_bp, t_pb, d_gamma, d_t_bp, d_t_pb)


def coefficient_bundle(ctx: InterfaceContext) -> CoefficientBundle:
    tm = half_plane_tm(ctx)
    te = half_plane_te(ctx)
    cos_t, d_cos_t = snell(ctx)
    return CoefficientBundle(
        gamma_bp_te=te.gamma_bp, gamma_bp_tm=tm.gamma,
        gamma_pb_te=-te.gamma_bp, gamma_pb_tm=-tm.gamma,
        t_bp_te=te.t_bp, t_bp_tm=tm.t,
        t_pb_te=te.t_pb, t_pb_tm=1.0 - tm.gamma,
        cos_theta_t=cos_t,
        d_gamma_bp_te=te.d_gamma_bp, d_gamma_bp_tm=tm.d_gamma,
        d_gamma_pb_te=-te.d_gamma_bp, d_gamma_pb_tm=-tm.d_gamma,
        d_t_bp_te=te.d_t_bp, d_t_bp_tm=tm.d_t,
        d_t_pb_te=te.d_t_pb, d_t_pb_tm=-tm.d_gamma,
        d_cos_theta_t=d_cos_t,
    )


def phase_delay(ctx: InterfaceContext) -> tuple[np.ndarray, np.ndarray]:
    """One-way phase through the layer and its derivative in ``eps_p``."""
    _, eps_p, _ = ctx.arrays()
    cos_t, d_cos_t = snell(ctx)
    f = np.asarray(ctx.frequency, dtype=float)
    d = np.asarray(ctx.thickness, dtype=float)
    root = np.sqrt(MU0 * EPS0)
    sq = np.sqrt(eps_p)
    phase = 2.0 * np.pi * f * root * sq * d * cos_t
    d_phase = np.pi * f * root * d * (cos_t / sq + 2.0 * sq * d_cos_t)
    return phase, d_phase


def layer_response(ctx: InterfaceContext, mode: str) -> LayerResponse:
    """Reflection coefficient of the background / dielectric / PEC stack."""
    if mode == TM:
        tm = half_plane_tm(ctx)
        g_bp, dg_bp = tm.gamma, tm.d_gamma
        t_bp, dt_bp = tm.t, tm.d_t
        t_pb, dt_pb = 1.0 - tm.gamma, -tm.d_gamma
    elif mode == TE:
        te = half_plane_te(ctx)
        g_bp, dg_bp = te.gamma_bp, te.d_gamma_bp
        t_bp, dt_bp = te.t_bp, te.d_t_bp
        t_pb, dt_pb = te.t_pb, te.d_t_pb
    else:
        raise ValueError(f"mode must be {TE!r} or {TM!r}, got {mode!r}")
    g_pb, dg_pb = -g_bp, -dg_bp

    phase, d_phase = phase_delay(ctx)
    ex = np.exp(-2j * phase)
    d_ex = -2j * d_phase * ex
    den = 1.0 + g_pb * ex
    if np.any(np.abs(den) < 1e-14):
        raise ResonanceError("resonant layer: 1 + gamma_pb exp(-2j phi) vanishes")
    tt = t_bp * t_pb
    gamma = g_bp - tt * ex / den
    d_gamma = (dg_bp
               - ((dt_bp * t_pb + t_bp * dt_pb) * ex + tt * d_ex) / den
               + tt * ex * (dg_pb * ex + g_pb * d_ex) / den**2)
    return LayerResponse(gamma, d_gamma, phase, d_phase, mode)
