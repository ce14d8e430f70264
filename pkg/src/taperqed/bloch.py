"""Time-domain optical Bloch equations for a weakly driven dipole in the coupler.

Independent check of the closed-form transmission.  Units: Gamma = 1.
The dipole couples to the forward supermode m with amplitude
g_m = sqrt(gamma_m) exp(i theta_m); the fiber launches rho_m into mode m
and collects tau_m from it, with rho_m tau_m = f_m.  The equations

    ds/dt  = (i delta - 1/2) s + E (2 Pe - 1)
    dPe/dt = -Pe - (E* s + E s*)

are integrated from the ground state until the transients have died out.
"""
from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp


def steady_state(E: complex, delta: float, t_end: float = 60.0) -> tuple[complex, float]:
    """(<sigma_->, P_e) after integrating from the ground state."""

    def rhs(t, y):
        s = y[0] + 1j * y[1]
        pe = y[2]
        ds = (1j * delta - 0.5) * s + E * (2 * pe - 1)
        dpe = -pe - 2 * np.real(np.conj(E) * s)
        return [ds.real, ds.imag, dpe]

    sol = solve_ivp(rhs, (0.0, t_end), [0.0, 0.0, 0.0], method="DOP853",
                    rtol=1e-12, atol=1e-20)
    y = sol.y[:, -1]
    return complex(y[0], y[1]), float(y[2])


def transmitted_flux(f, gamma, beta, theta, z, z0, delta=0.0, drive=1e-3, chi=None):
    """Fiber output flux at z normalised by the input flux |alpha|^2.

    ``theta`` are the dipole coupling phases including the supermode->fiber
    phase; ``chi`` splits an extra reciprocal phase between launch and
    collection (rho = sqrt(f) e^{-i chi}, tau = sqrt(f) e^{i chi}), which
    must not change the answer.
    """
    f, gamma, beta, theta = (np.asarray(a, dtype=float) for a in (f, gamma, beta, theta))
    chi = np.zeros_like(f) if chi is None else np.asarray(chi, dtype=float)
    rho = np.sqrt(f) * np.exp(-1j * chi)
    tau = np.sqrt(f) * np.exp(1j * chi)
    g = np.sqrt(gamma) * np.exp(1j * (theta - chi))
    alpha = drive
    a_in = rho * alpha * np.exp(1j * beta * z0)  # supermode amplitudes at the dipole
    E = np.sum(np.conj(g) * a_in)
    s, pe = steady_state(E, delta)
    prop = np.exp(1j * beta * (z - z0))
    coherent = np.sum(tau * (a_in + g * s) * prop)
    incoherent = abs(np.sum(tau * g * prop)) ** 2 * max(pe - abs(s) ** 2, 0.0)
    return (abs(coherent) ** 2 + incoherent) / abs(alpha) ** 2
