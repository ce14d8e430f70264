"""Spontaneous emission of a channel-embedded dipole into coupler supermodes.

Rates are referenced to the emission rate of the same dipole in bulk
channel material, Gamma_bulk(n_ch), so neither hbar nor the dipole
strength appear.  For a forward-normalised mode with flux S (E and Z0 H
in the same units), the one-direction rate is

    Gamma_m / Gamma_bulk = 3 pi / (2 n_ch k0^2) * |d . e_m(r0)|^2 / S_m .
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coupling import CouplingTable, power_flux
from .geometry import CrossSectionSpec
from .modesolver import ModeBasis, Supermode, sample

GAMMA_CAP = 0.5


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class DipoleSpec:
    x0: float  # nm
    y0: float  # nm
    z0: float = 0.0  # um along the coupler
    orientation: tuple = (1.0, 0.0, 0.0)
    wavelength: float = 1.3  # um

    def __post_init__(self):
        d = np.asarray(self.orientation, dtype=float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("dipole orientation must be a unit vector")
        if abs(d[1]) > 1e-12:
            raise ValueError("dipole moment must lie in the xz plane")

    @classmethod
    def centered(cls, spec: CrossSectionSpec, axis: str = "x", z0: float = 0.0) -> "DipoleSpec":
        x0, y0 = spec.channel_center()
        d = {"x": (1.0, 0.0, 0.0), "z": (0.0, 0.0, 1.0)}[axis]
        return cls(x0, y0, z0, d, spec.wavelength)

    def check_inside(self, spec: CrossSectionSpec) -> None:
        p = spec.placement()
        (xa, xb), (ya, yb) = p["channel_x"], p["channel_y"]
        if not (xa <= self.x0 <= xb and ya <= self.y0 <= yb):
            raise ValueError("dipole must sit inside the channel")


def coupling_amplitude(mode: Supermode, d: DipoleSpec) -> complex:
    """d . e_m(r0) for the forward mode."""
    dx, _, dz = d.orientation
    val = 0j
    if dx:
        val += dx * sample(mode, "Ex", d.x0, d.y0)
    if dz:
        val += dz * sample(mode, "Ez", d.x0, d.y0)
    return val


def guided_rate(mode: Supermode, d: DipoleSpec, n_ch: float) -> tuple[float, float]:
    """(Gamma_m / Gamma_bulk, emission phase) for one propagation direction."""
    amp = coupling_amplitude(mode, d)
    S = power_flux(mode.fields, mode.grid)
    k0 = 2 * np.pi / d.wavelength
    rate = 3 * np.pi / (2 * n_ch * k0**2) * abs(amp) ** 2 / S
    return float(rate), float(np.angle(np.conj(amp)))


@dataclass(frozen=True)
class RadiationModel:
    """Emission into everything other than the guided supermodes.

    ``explicit``: Gamma_rad / Gamma_bulk is ``value``.
    ``calibrated``: Gamma_rad is chosen so that the guided fraction
    sum(2 Gamma_m) / Gamma equals ``target`` at a reference geometry, then
    kept fixed.  ``value`` is None until calibrated.
    """

    kind: str = "calibrated"
    value: float | None = None
    target: float = 0.73
    reference_wch: float = 220.0
    reference_axis: str = "x"

    def __post_init__(self):
        if self.kind not in ("explicit", "calibrated"):
            raise ValueError(f"unknown radiation model {self.kind!r}")
        if self.kind == "explicit" and (self.value is None or self.value < 0):
            raise ValueError("explicit radiation rate must be >= 0")
        if self.kind == "calibrated" and not 0 < self.target <= 1:
            raise ValueError("target guided fraction must lie in (0, 1]")

    @classmethod
    def explicit(cls, value: float) -> "RadiationModel":
        return cls(kind="explicit", value=float(value))

    def calibrate(self, rates: list[float]) -> "RadiationModel":
        """Fix Gamma_rad from the one-direction guided rates at the reference."""
        guided = 2 * sum(rates)
        if guided <= 0:
            raise CalibrationError("no guided emission at the reference geometry")
        value = guided * (1.0 / self.target - 1.0)
        return RadiationModel("calibrated", value, self.target, self.reference_wch, self.reference_axis)


@dataclass
class RateTable:
    labels: list
    rates: np.ndarray  # Gamma_m / Gamma_bulk, one direction
    phases: np.ndarray  # arg(conj(d . e_m(r0)))
    radiation: float  # Gamma_rad / Gamma_bulk
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(2 * self.rates.sum() + self.radiation)

    @property
    def gamma(self) -> np.ndarray:
        return self.rates / self.total

    @property
    def guided_fraction(self) -> float:
        return float(2 * self.rates.sum() / self.total)

    def as_dict(self) -> dict:
        return {lab: float(g) for lab, g in zip(self.labels, self.gamma)}


def rate_table(basis: ModeBasis, d: DipoleSpec, rad: RadiationModel, n_ch: float) -> RateTable:
    """Per-supermode rates and beta-factors.

    An uncalibrated ``calibrated`` model is calibrated on this basis, i.e.
    the basis is taken to be the reference geometry.
    """
    labels, rates, phases = [], [], []
    for m in basis:
        r, ph = guided_rate(m, d, n_ch)
        labels.append(m.label)
        rates.append(r)
        phases.append(ph)
    if rad.value is None:
        rad = rad.calibrate(rates)
    table = RateTable(labels, np.array(rates), np.array(phases), float(rad.value),
                      meta={"radiation_model": rad})
    g = table.gamma
    if np.any(g < 0) or np.any(g > GAMMA_CAP + 1e-12):
        raise AssertionError(f"beta-factor outside [0, 0.5]: {g}")
    return table


@dataclass
class CouplerChannel:
    """Reduced per-supermode description feeding the collection and transmission models.

    ``phi`` is the phase of the dipole -> supermode -> fiber path in the
    forward direction; it combines the emission phase with the sign of the
    supermode-to-fiber overlap so that it does not depend on field phase
    conventions.
    """

    f: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray  # rad/um
    phi: np.ndarray
    labels: list = field(default_factory=list)

    def __post_init__(self):
        self.f = np.atleast_1d(np.asarray(self.f, dtype=float))
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        n = self.f.size
        self.beta = np.broadcast_to(np.asarray(self.beta, dtype=float), (n,)).copy()
        self.phi = np.broadcast_to(np.asarray(self.phi, dtype=float), (n,)).copy()
        if not self.labels:
            self.labels = [f"m{i}" for i in range(n)]
        if self.gamma.size != n:
            raise ValueError("f and gamma must have equal length")
        if np.any(self.f < 0) or np.any(self.f > 1.01):
            raise ValueError("fiber fractions must lie in [0, 1]")
        if np.any(self.gamma < 0) or np.any(self.gamma > GAMMA_CAP + 1e-12):
            raise ValueError("beta-factors must lie in [0, 0.5]")
        if self.f.sum() > 1 + 0.02:
            raise ValueError(f"fiber fractions sum to {self.f.sum():.4f} > 1")
        if 2 * self.gamma.sum() > 1 + 1e-9:
            raise ValueError("beta-factors exceed unit total emission")

    def subset(self, labels) -> "CouplerChannel":
        idx = [self.labels.index(lab) for lab in labels]
        return CouplerChannel(self.f[idx], self.gamma[idx], self.beta[idx], self.phi[idx],
                              [self.labels[i] for i in idx])


def coupler_channel(basis: ModeBasis, ctab: CouplingTable, rates: RateTable,
                    family: str | None = None) -> CouplerChannel:
    f, g, b, ph, labels = [], [], [], [], []
    gam = rates.gamma
    for i, m in enumerate(basis):
        if family is not None and m.family != family:
            continue
        ov = ctab.overlaps[m.label]
        labels.append(m.label)
        f.append(ov.f)
        g.append(gam[i])
        b.append(m.beta)
        ph.append(rates.phases[i] + np.angle(ov.to_fiber))
    return CouplerChannel(np.array(f), np.array(g), np.array(b), np.array(ph), labels)


def collection_amplitudes(ch: CouplerChannel, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fiber amplitudes A+(z), A-(z) of light emitted towards +z and -z.

    The backward path phase is the negative of the forward one.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    w = np.sqrt(ch.f * ch.gamma)
    prop = np.exp(1j * np.outer(z, ch.beta))
    plus = prop @ (w * np.exp(1j * ch.phi))
    minus = prop @ (w * np.exp(-1j * ch.phi))
    return plus, minus


@dataclass
class CollectionCurve:
    z: np.ndarray
    eta_plus: np.ndarray
    eta_minus: np.ndarray
    incoherent: float  # sum over both directions of f_m gamma_m

    @property
    def eta_total(self) -> np.ndarray:
        return self.eta_plus + self.eta_minus

    @property
    def max(self) -> float:
        return float(self.eta_total.max())

    @property
    def z_at_max(self) -> float:
        return float(self.z[int(np.argmax(self.eta_total))])


def collection_efficiency(ch: CouplerChannel, z, both: bool = True) -> CollectionCurve:
    """Fiber-collected fraction of the emission with the fiber output |z| from the dipole."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    plus, minus = collection_amplitudes(ch, z)
    ep = np.abs(plus) ** 2
    em = np.abs(minus) ** 2 if both else np.zeros_like(ep)
    inc = float((ch.f * ch.gamma).sum()) * (2 if both else 1)
    return CollectionCurve(z, ep, em, inc)
