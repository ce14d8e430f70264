"""Closed-form dispersion relations used as independent oracles."""
from __future__ import annotations

import numpy as np
from scipy.optimize import brentq
from scipy.special import jv, jvp, kv, kvp


def slab_neff(n_core, n_clad, thickness_um, wavelength_um, pol="TE", order=0):
    """Effective index of a guided mode of a symmetric slab.

    ``order`` 0 is the fundamental (even) mode.  TE means E parallel to
    the interfaces.
    """
    k0 = 2 * np.pi / wavelength_um
    ratio = 1.0 if pol == "TE" else (n_core / n_clad) ** 2
    half = 0.5 * thickness_um

    def f(ne):
        kappa = k0 * np.sqrt(n_core**2 - ne**2)
        gamma = k0 * np.sqrt(ne**2 - n_clad**2)
        ph = kappa * half - 0.5 * np.pi * order
        # even: kappa tan(kappa h) = ratio gamma ; odd: -kappa cot(kappa h) = ratio gamma
        return kappa * np.sin(ph) - ratio * gamma * np.cos(ph)

    lo, hi = n_clad * (1 + 1e-12), n_core * (1 - 1e-12)
    grid = np.linspace(lo, hi, 4001)
    vals = np.array([f(x) for x in grid])
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if np.sign(fa) != np.sign(fb):
            r = brentq(f, a, b, xtol=1e-15, rtol=1e-15)
            kappa = k0 * np.sqrt(n_core**2 - r**2)
            # reject spurious roots where the branch phase is outside [m pi/2, (m+1) pi/2)
            ph = kappa * half
            if 0.5 * np.pi * order <= ph < 0.5 * np.pi * (order + 1):
                roots.append(r)
    if not roots:
        raise ValueError("mode is cut off")
    return max(roots)


def slab_te_profile(x_um, n_core, n_clad, thickness_um, wavelength_um, neff):
    """Fundamental TE field Ey(x), unit amplitude at the centre."""
    k0 = 2 * np.pi / wavelength_um
    kappa = k0 * np.sqrt(n_core**2 - neff**2)
    gamma = k0 * np.sqrt(neff**2 - n_clad**2)
    h = 0.5 * thickness_um
    x = np.abs(np.asarray(x_um, dtype=float))
    return np.where(x <= h, np.cos(kappa * x), np.cos(kappa * h) * np.exp(-gamma * (x - h)))


def slab_te_norm(n_core, n_clad, thickness_um, wavelength_um, neff):
    """Integral of |Ey|^2 dx for the unit-amplitude fundamental TE profile."""
    k0 = 2 * np.pi / wavelength_um
    kappa = k0 * np.sqrt(n_core**2 - neff**2)
    gamma = k0 * np.sqrt(neff**2 - n_clad**2)
    t = thickness_um
    return t / 2 + np.sin(kappa * t) / (2 * kappa) + np.cos(kappa * t / 2) ** 2 / gamma


def fiber_v_number(radius_um, n_core, n_clad, wavelength_um):
    return 2 * np.pi / wavelength_um * radius_um * np.sqrt(n_core**2 - n_clad**2)


def _roots(f, lo, hi, n=4000):
    grid = np.linspace(lo, hi, n + 1)
    vals = np.array([f(x) for x in grid])
    out = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if np.isfinite(fa) and np.isfinite(fb) and np.sign(fa) != np.sign(fb):
            r = brentq(f, a, b, xtol=1e-15, rtol=1e-15)
            if abs(f(r)) < 1e-6 * (abs(fa) + abs(fb)):
                out.append(r)
    return out


def fiber_neff(radius_um, n_core, n_clad, wavelength_um, mode="HE11"):
    """Effective index of a step-index fiber mode from the exact vector equation.

    Supported modes: HE11, TE01, TM01, HE21.  Returns None below cutoff.
    """
    k0 = 2 * np.pi / wavelength_um
    a = radius_um

    def uw(ne):
        return a * k0 * np.sqrt(n_core**2 - ne**2), a * k0 * np.sqrt(ne**2 - n_clad**2)

    if mode in ("TE01", "TM01"):
        eps_ratio = 1.0 if mode == "TE01" else (n_clad / n_core) ** 2

        def f(ne):
            u, w = uw(ne)
            return jv(1, u) / (u * jv(0, u)) + eps_ratio * kv(1, w) / (w * kv(0, w))
    else:
        nu = 1 if mode == "HE11" else 2

        def f(ne):
            u, w = uw(ne)
            jj = jvp(nu, u) / (u * jv(nu, u))
            kk = kvp(nu, w) / (w * kv(nu, w))
            lhs = (jj + kk) * (jj + (n_clad / n_core) ** 2 * kk)
            rhs = (nu * ne / n_core) ** 2 * (1 / u**2 + 1 / w**2) ** 2
            return (lhs - rhs) * u**4

    lo, hi = n_clad * (1 + 1e-10), n_core * (1 - 1e-10)
    roots = _roots(f, lo, hi)
    if not roots:
        return None
    if mode == "HE11":
        return max(roots)
    if mode == "HE21":
        # HE2m roots alternate with EH roots in the same equation; HE21 is the
        # largest root whose sign of (jj + kk) matches the HE branch
        cands = []
        for r in roots:
            u, w = uw(r)
            jj = jvp(2, u) / (u * jv(2, u))
            kk = kvp(2, w) / (w * kv(2, w))
            if jj + kk < 0:
                cands.append(r)
        return max(cands) if cands else None
    return max(roots)
