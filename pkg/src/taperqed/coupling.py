"""Power normalisation and fiber-mode fractions of coupler supermodes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CrossSectionSpec, GridSpec, rasterize
from .modesolver import ModeBasis, Supermode, solve_modes

FRACTION_SLACK = 0.02


class GridMismatchError(ValueError):
    pass


def power_flux(fields: dict, grid: GridSpec) -> float:
    """S = Re int (E x H*) . z dS over the window, in field^2 um^2.

    Ex/Hy and Ey/Hx share sample points on the staggered grid, so no
    interpolation is involved.
    """
    s = np.sum(fields["Ex"] * np.conj(fields["Hy"])) - np.sum(fields["Ey"] * np.conj(fields["Hx"]))
    return float(np.real(s)) * (grid.dx / 1000.0) * (grid.dy / 1000.0)


def cross_flux(a: dict, b: dict, grid: GridSpec) -> complex:
    """int (e_a x h_b*) . z dS."""
    s = np.sum(a["Ex"] * np.conj(b["Hy"])) - np.sum(a["Ey"] * np.conj(b["Hx"]))
    return complex(s) * (grid.dx / 1000.0) * (grid.dy / 1000.0)


@dataclass
class FiberMode:
    fields: dict = field(repr=False)
    S: float
    n_eff: complex
    polarization: str
    grid: GridSpec = field(repr=False)

    @classmethod
    def from_mode(cls, mode: Supermode, polarization: str) -> "FiberMode":
        return cls(mode.fields, power_flux(mode.fields, mode.grid), mode.n_eff, polarization, mode.grid)


def fiber_modes(spec: CrossSectionSpec, grid: GridSpec) -> dict:
    """x- and y-polarised fundamental modes of the isolated fiber.

    The fiber stays where it sits in the coupler; only the channel is
    removed from the permittivity map.
    """
    basis = solve_modes(rasterize(spec, grid, channel=False), spec.wavelength)
    out = {}
    for pol, fam in (("x", "hEx"), ("y", "hEy")):
        members = basis.family(fam)
        if not members:
            raise RuntimeError(f"isolated fiber has no {pol}-polarised mode")
        out[pol] = FiberMode.from_mode(members[0], pol)
    return out


@dataclass
class Overlap:
    f: float
    to_fiber: complex  # int(e_m x h_f*) / sqrt(S_m S_f): supermode -> fiber amplitude
    from_fiber: complex  # int(e_f x h_m*) / sqrt(S_m S_f): fiber -> supermode amplitude


def overlap(mode: Supermode, fiber: FiberMode) -> Overlap:
    if mode.grid != fiber.grid or mode.fields["Ex"].shape != fiber.fields["Ex"].shape:
        raise GridMismatchError("supermode and fiber mode live on different grids")
    Sm = power_flux(mode.fields, mode.grid)
    Sf = power_flux(fiber.fields, fiber.grid)
    a = cross_flux(fiber.fields, mode.fields, mode.grid)
    b = cross_flux(mode.fields, fiber.fields, mode.grid)
    norm = np.sqrt(Sm * Sf)
    f = float(np.real(a * b) / (Sm * Sf))
    if not -FRACTION_SLACK <= f <= 1 + FRACTION_SLACK:
        raise ValueError(f"fiber fraction {f:.4f} outside [0, 1]")
    return Overlap(float(np.clip(f, 0.0, 1.0)), b / norm, a / norm)


def fiber_fraction(mode: Supermode, fiber: FiberMode) -> float:
    """Two-sided power overlap of a supermode with the fiber mode, in [0, 1]."""
    return overlap(mode, fiber).f


def fiber_for(mode: Supermode, fibers: dict) -> FiberMode:
    return fibers["x" if mode.family == "hEx" else "y"]


@dataclass
class CouplingTable:
    overlaps: dict  # label -> Overlap
    provenance: dict = field(default_factory=dict)

    def f(self, label: str) -> float:
        return self.overlaps[label].f

    @property
    def fractions(self) -> dict:
        return {k: v.f for k, v in self.overlaps.items()}

    def total(self, family: str | None = None) -> float:
        return sum(v.f for k, v in self.overlaps.items() if family is None or k.startswith(family))


def coupling_table(basis: ModeBasis, fibers: dict) -> CouplingTable:
    table = CouplingTable({m.label: overlap(m, fiber_for(m, fibers)) for m in basis})
    for fam in ("hEx", "hEy"):
        tot = table.total(fam)
        if tot > 1 + FRACTION_SLACK:
            raise ValueError(f"{fam} fiber fractions sum to {tot:.4f} > 1")
    table.provenance = {"fiber_n_eff": {k: complex(v.n_eff) for k, v in fibers.items()}}
    return table
