"""Resonant transmission of the fiber mode past a single dipole in the coupler.

Low-excitation steady state.  Light enters in the fundamental fiber mode,
splits over the supermodes, drives the dipole at z0 and is projected back
onto the fiber mode at z.  Detuning delta is in units of the total
linewidth Gamma.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .emission import CouplerChannel

RATIO_INF = np.inf
F0_FLOOR = 1e-14


def lorentzian(delta) -> np.ndarray:
    return 1.0 / (1.0 - 2j * np.asarray(delta, dtype=float))


def _prop(ch: CouplerChannel, z) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    return np.exp(1j * np.outer(z, ch.beta))


def off_resonance(ch: CouplerChannel, z) -> np.ndarray:
    """F0(z) = |sum_m f_m exp(i beta_m z)|^2."""
    return np.abs(_prop(ch, z) @ ch.f) ** 2


def amplitude(ch: CouplerChannel, z, z0: float, delta: float = 0.0) -> np.ndarray:
    """Complex fiber-to-fiber transmission amplitude with the dipole at z0.

    The scattered term is the product of the fiber -> dipole amplitude at z0
    and the dipole -> fiber amplitude over z - z0; the two paths carry
    opposite channel phases.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    w = np.sqrt(ch.f * ch.gamma)
    direct = _prop(ch, z) @ ch.f
    out = _prop(ch, z - z0) @ (w * np.exp(1j * ch.phi))
    drive = np.exp(1j * ch.beta * z0) @ (w * np.exp(-1j * ch.phi))
    return direct - 2 * lorentzian(delta) * out * drive


def on_resonance(ch: CouplerChannel, z, z0: float, delta: float = 0.0) -> np.ndarray:
    return np.abs(amplitude(ch, z, z0, delta)) ** 2


def ratio(F, F0) -> np.ndarray:
    """F / F0 with +inf where F0 vanishes."""
    F, F0 = np.asarray(F, dtype=float), np.asarray(F0, dtype=float)
    out = np.full(F.shape, RATIO_INF)
    ok = F0 > F0_FLOOR
    out[ok] = F[ok] / F0[ok]
    return out


@dataclass
class TransmissionScan:
    z: np.ndarray
    z0: float
    delta: float
    F0: np.ndarray
    F: np.ndarray
    extrema: dict = field(default_factory=dict)

    @property
    def ratio(self) -> np.ndarray:
        return ratio(self.F, self.F0)

    @property
    def dT(self) -> np.ndarray:
        """(F - F0) / F0, NaN where F0 vanishes (see ``ratio`` for those points)."""
        r = self.ratio
        return np.where(np.isfinite(r), r - 1.0, np.nan)

    @property
    def flagged(self) -> np.ndarray:
        return ~np.isfinite(self.ratio)


def contrast_scan(ch: CouplerChannel, z, z0: float, delta: float = 0.0) -> TransmissionScan:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    scan = TransmissionScan(z, float(z0), float(delta), off_resonance(ch, z), on_resonance(ch, z, z0, delta))
    r = scan.ratio
    fin = np.isfinite(r)
    ext = {"n_flagged": int((~fin).sum())}
    if fin.any():
        rf = np.where(fin, r, np.nan)
        imax, imin = int(np.nanargmax(rf)), int(np.nanargmin(rf))
        ext.update(
            ratio_max=float(rf[imax]), z_ratio_max=float(z[imax]),
            ratio_min=float(rf[imin]), z_ratio_min=float(z[imin]),
            dT_max=float(rf[imax] - 1), dT_min=float(rf[imin] - 1),
        )
        with np.errstate(divide="ignore"):
            db = np.abs(10 * np.log10(rf[fin]))
        ext["max_abs_dB"] = float(np.max(db))
    scan.extrema = ext
    return scan


def lineshape(ch: CouplerChannel, z: float, z0: float, deltas) -> np.ndarray:
    deltas = np.asarray(deltas, dtype=float)
    return np.array([on_resonance(ch, z, z0, d)[0] for d in deltas])


def lineshape_fwhm(ch: CouplerChannel, z: float, z0: float, span: float = 20.0, n: int = 40001) -> float:
    """Full width (units of Gamma) of |F - F0| at half its extremum."""
    d = np.linspace(-span, span, n)
    dev = np.abs(lineshape(ch, z, z0, d) - off_resonance(ch, z)[0])
    peak = dev.max()
    if peak <= 0:
        return 0.0
    above = d[dev >= 0.5 * peak]
    return float(above.max() - above.min())


def beat_length(ch: CouplerChannel) -> float:
    """L_pi = pi / (beta_I - beta_II) from the two leading supermodes."""
    if ch.beta.size < 2:
        raise ValueError("beat length needs two supermodes")
    b = np.sort(ch.beta)[::-1]
    return float(np.pi / (b[0] - b[1]))


def single_mode_closed_form(f, gamma) -> np.ndarray:
    f, gamma = np.asarray(f, dtype=float), np.asarray(gamma, dtype=float)
    return f**2 * (1 - 4 * gamma * (1 - gamma))


def _ratio_on_torus(f, w, phases_z0, phases_rel, delta=0.0):
    """F/F0 as a function of relative phases; mode 0 is the phase reference."""
    a = np.concatenate([[0.0], phases_z0])  # beta_m z0 relative to mode 0
    b = np.concatenate([[0.0], phases_rel])  # beta_m (z - z0) relative to mode 0
    e_z = np.exp(1j * (a + b))
    direct = np.sum(f * e_z)
    t = direct - 2 * lorentzian(delta) * np.sum(w * np.exp(1j * b)) * np.sum(w * np.exp(1j * a))
    F0 = abs(direct) ** 2
    return abs(t) ** 2 / F0 if F0 > F0_FLOOR else RATIO_INF


@dataclass
class ExtinctionResult:
    extinction: float
    worst_ratio: float
    worst_phases: tuple


def engineered_extinction(f, gamma, phi=None, grid: int = 181, refine: bool = True,
                          samples: int = 20000, seed: int = 20091) -> ExtinctionResult:
    """Worst-case extinction 1 - max F/F0 over every dipole position and coupler length.

    Over all (z, z0) the relative supermode phases beta_m z0 and
    beta_m (z - z0) cover a torus (incommensurate betas), so the maximum is
    taken over that torus: a dense grid plus local refinement for two modes,
    random sampling plus refinement otherwise.  Channel phases only shift
    the torus and drop out.
    """
    f = np.asarray(f, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if f.sum() > 1 + 1e-9:
        raise ValueError("fiber fractions must sum to at most 1")
    w = np.sqrt(f * gamma)
    if phi is not None:
        # absorbed into the torus coordinates
        phi = np.asarray(phi, dtype=float)
    M = f.size
    if M == 1:
        r = _ratio_on_torus(f, w, np.zeros(0), np.zeros(0))
        return ExtinctionResult(1 - r, r, ())

    def neg(p):
        r = _ratio_on_torus(f, w, p[: M - 1], p[M - 1:])
        return -min(r, 1e300)

    if M == 2:
        th = np.linspace(0, 2 * np.pi, grid, endpoint=False)
        cands = np.array(list(itertools.product(th, th)))
    else:
        rng = np.random.default_rng(seed)
        cands = rng.uniform(0, 2 * np.pi, size=(samples, 2 * (M - 1)))
    vals = np.array([-neg(p) for p in cands])
    order = np.argsort(vals)[::-1]
    best_p, best = cands[order[0]], vals[order[0]]
    if refine and np.isfinite(best):
        for i in order[:8]:
            res = minimize(neg, cands[i], method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
            if -res.fun > best:
                best, best_p = float(-res.fun), res.x
    return ExtinctionResult(float(1 - best), float(best), tuple(np.mod(best_p, 2 * np.pi)))
