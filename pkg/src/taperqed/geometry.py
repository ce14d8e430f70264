"""Coupler cross-section description and permittivity rasterization.

Coordinates: x is the lateral (channel width) direction, y is vertical.
The fiber sits above the channel, both centred on x = 0, so the structure
is mirror symmetric about the vertical axis x = 0.  Lengths in the
geometry are nanometres, window sizes and wavelengths are micrometres.

Field components live on a staggered (Yee) grid whose node lines are
``x_i = (i - nx/2) dx`` and ``y_j = (j - ny/2) dy``:

=====  ===================  ====================
comp   x position           y position
=====  ===================  ====================
Ex     (i + 1/2) half       j node
Ey     i node               (j + 1/2) half
Ez     i node               j node
=====  ===================  ====================
"""
from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class GeometryError(ValueError):
    """Raised when a cross-section or grid violates its invariants."""


@dataclass(frozen=True)
class CrossSectionSpec:
    channel_width: float = 220.0  # nm
    channel_thickness: float = 256.0  # nm
    channel_index: float = 3.406
    fiber_radius: float = 500.0  # nm
    fiber_index: float = 1.45
    gap: float = 0.0  # nm, channel top face to fiber surface
    background_index: float = 1.0
    wavelength: float = 1.3  # um
    fiber_offset: float = 0.0  # nm, lateral shift of the fiber centre

    def replace(self, **changes) -> "CrossSectionSpec":
        return dataclasses.replace(self, **changes)

    @property
    def symmetric(self) -> bool:
        return self.fiber_offset == 0.0

    def placement(self) -> dict:
        """Positions (nm) of the channel box and fiber centre in window coordinates.

        The composite bounding box is centred vertically on y = 0.
        """
        height = self.channel_thickness + self.gap + 2 * self.fiber_radius
        y0 = -0.5 * height
        return {
            "channel_x": (-0.5 * self.channel_width, 0.5 * self.channel_width),
            "channel_y": (y0, y0 + self.channel_thickness),
            "fiber_center": (
                self.fiber_offset,
                y0 + self.channel_thickness + self.gap + self.fiber_radius,
            ),
        }

    def channel_center(self) -> tuple[float, float]:
        p = self.placement()
        return 0.0, 0.5 * sum(p["channel_y"])

    def bounding_box(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) in nm."""
        p = self.placement()
        xc, yc = p["fiber_center"]
        r = self.fiber_radius
        xmin = min(p["channel_x"][0], xc - r)
        xmax = max(p["channel_x"][1], xc + r)
        return xmin, xmax, p["channel_y"][0], yc + r


@dataclass(frozen=True)
class GridSpec:
    dx: float = 10.0  # nm
    dy: float = 10.0  # nm
    window_x: float = 3.0  # um
    window_y: float = 4.0  # um
    boundary: str = "pec"  # "pec" or "pml"
    pml_cells: int = 20
    pml_strength: float = 3.0  # peak imaginary stretch
    pml_order: int = 2
    min_margin: float = 1.0  # um of background around the geometry

    def replace(self, **changes) -> "GridSpec":
        return dataclasses.replace(self, **changes)

    @property
    def nx(self) -> int:
        return int(round(self.window_x * 1000.0 / self.dx))

    @property
    def ny(self) -> int:
        return int(round(self.window_y * 1000.0 / self.dy))

    def x_nodes(self) -> np.ndarray:
        return (np.arange(self.nx + 1) - self.nx // 2) * self.dx

    def y_nodes(self) -> np.ndarray:
        return (np.arange(self.ny + 1) - self.ny // 2) * self.dy


def validate(spec: CrossSectionSpec, grid: GridSpec) -> tuple[CrossSectionSpec, GridSpec]:
    """Check both descriptions and return them unchanged.

    Raises GeometryError naming the first violated invariant.
    """
    for name in ("channel_width", "channel_thickness", "fiber_radius", "wavelength"):
        if not getattr(spec, name) > 0:
            raise GeometryError(f"{name} must be positive")
    if not spec.gap >= 0:
        raise GeometryError("gap must be non-negative")
    for name in ("channel_index", "fiber_index", "background_index"):
        if not getattr(spec, name) >= 1:
            raise GeometryError(f"{name} must be at least 1")
    for name in ("dx", "dy", "window_x", "window_y"):
        if not getattr(grid, name) > 0:
            raise GeometryError(f"{name} must be positive")
    if grid.boundary not in ("pec", "pml"):
        raise GeometryError(f"unknown boundary {grid.boundary!r}")
    for length, cells, name in (
        (grid.window_x, grid.nx, "window_x"),
        (grid.window_y, grid.ny, "window_y"),
    ):
        step = grid.dx if name == "window_x" else grid.dy
        if abs(cells * step - length * 1000.0) > 1e-6 * step or cells % 2:
            raise GeometryError(f"{name} must be an even number of grid cells")

    xmin, xmax, ymin, ymax = spec.bounding_box()
    hx, hy = 500.0 * grid.window_x, 500.0 * grid.window_y
    if xmin <= -hx or xmax >= hx or ymin <= -hy or ymax >= hy:
        raise GeometryError("window must enclose geometry")
    margin = min(xmin + hx, hx - xmax, ymin + hy, hy - ymax)
    if margin < grid.min_margin * 1000.0 - 1e-9:
        raise GeometryError(
            f"window margin {margin / 1000:.3f} um is below {grid.min_margin} um"
        )
    if grid.boundary == "pml" and 2 * grid.pml_cells >= min(grid.nx, grid.ny):
        raise GeometryError("absorbing layer thicker than the window")
    return spec, grid


# A shape maps arrays of (x, y) in nm to the signed distance from its
# boundary (negative inside).
Shape = Callable[[np.ndarray, np.ndarray], np.ndarray]


def rectangle(x0: float, x1: float, y0: float, y1: float) -> Shape:
    cx, cy, hx, hy = 0.5 * (x0 + x1), 0.5 * (y0 + y1), 0.5 * (x1 - x0), 0.5 * (y1 - y0)

    def sdf(x, y):
        qx, qy = np.abs(x - cx) - hx, np.abs(y - cy) - hy
        outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
        return outside + np.minimum(np.maximum(qx, qy), 0.0)

    return sdf


def disc(xc: float, yc: float, r: float) -> Shape:
    return lambda x, y: np.hypot(x - xc, y - yc) - r


@dataclass
class PermittivityMap:
    """Relative permittivity sampled at the Ex, Ey and Ez points of a grid.

    ``eps_x`` has shape (nx, ny+1), ``eps_y`` (nx+1, ny), ``eps_z`` (nx+1, ny+1),
    following the staggering in the module docstring.
    """

    grid: GridSpec
    eps_x: np.ndarray
    eps_y: np.ndarray
    eps_z: np.ndarray
    wavelength: float = 1.3
    symmetric: bool = True
    background: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def eps_max(self) -> float:
        return float(max(self.eps_x.max(), self.eps_y.max(), self.eps_z.max()))

    def mirrored(self) -> "PermittivityMap":
        """Reflection x -> -x."""
        return dataclasses.replace(
            self,
            eps_x=self.eps_x[::-1].copy(),
            eps_y=self.eps_y[::-1].copy(),
            eps_z=self.eps_z[::-1].copy(),
        )

    def mirror_error(self) -> float:
        m = self.mirrored()
        return float(max(
            np.abs(self.eps_x - m.eps_x).max(),
            np.abs(self.eps_y - m.eps_y).max(),
            np.abs(self.eps_z - m.eps_z).max(),
        ))

    def material_area(self, eps_material: float) -> float:
        """Area (nm^2) of a single inclusion estimated from the Ez-point fill."""
        fill = (self.eps_z - self.background) / (eps_material - self.background)
        return float(fill.sum() * self.grid.dx * self.grid.dy)

    def write_csv(self, path) -> None:
        g = self.grid
        xs, ys = g.x_nodes(), g.y_nodes()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x_nm", "y_nm", "eps_Ex", "eps_Ey", "eps_Ez"])
            for i in range(g.nx):
                for j in range(g.ny):
                    w.writerow([
                        f"{xs[i]:.6g}", f"{ys[j]:.6g}",
                        f"{self.eps_x[i, j]:.10g}",
                        f"{self.eps_y[i, j]:.10g}",
                        f"{self.eps_z[i, j]:.10g}",
                    ])


def _smooth(
    x: np.ndarray,
    y: np.ndarray,
    shapes: Sequence[tuple[Shape, float]],
    eps_bg: float,
    grid: GridSpec,
    component: str,
    nsub: int,
) -> np.ndarray:
    """Anisotropically averaged permittivity for one field component.

    Each sample point owns a dx-by-dy cell.  Mixed cells are supersampled,
    each sub-cell taking the area fraction cut off by the locally straight
    boundary, so grid-aligned edges get their exact fill.  The interface normal is estimated from the first moment of the
    sub-sample permittivity.  Components along the normal get the harmonic
    mean, tangential ones the arithmetic mean.
    """
    out = np.full(x.shape, eps_bg, dtype=float)

    def eps_at(px, py, width=None):
        """Permittivity and inverse permittivity at points.

        With ``width`` each point stands for a sub-cell; a straight edge
        through it splits the sub-cell by area, and both averages are
        accumulated from the area fractions.
        """
        e = np.full(px.shape, eps_bg, dtype=float)
        inv = np.full(px.shape, 1.0 / eps_bg, dtype=float)
        for shape, value in shapes:
            d = shape(px, py)
            if width is None:
                occ = (d <= 0).astype(float)
            else:
                step = 0.25 * min(width)
                gx = (shape(px + step, py) - shape(px - step, py)) / (2 * step)
                gy = (shape(px, py + step) - shape(px, py - step)) / (2 * step)
                span = np.abs(gx) * width[0] + np.abs(gy) * width[1]
                occ = np.clip(0.5 - d / np.maximum(span, 1e-12), 0.0, 1.0)
            e = e + occ * (value - e)
            inv = inv + occ * (1.0 / value - inv)
        return e, inv

    # quick rejection: corners of each cell
    hx, hy = 0.5 * grid.dx, 0.5 * grid.dy
    corners = [eps_at(x + sx * hx, y + sy * hy)[0] for sx in (-1, 1) for sy in (-1, 1)]
    centre = eps_at(x, y)[0]
    mixed = np.zeros(x.shape, dtype=bool)
    for c in corners:
        mixed |= c != centre
    # discs can poke into a cell between corners; widen the test by one cell
    pad = np.zeros_like(mixed)
    pad[1:] |= mixed[:-1]
    pad[:-1] |= mixed[1:]
    pad[:, 1:] |= mixed[:, :-1]
    pad[:, :-1] |= mixed[:, 1:]
    mixed |= pad
    out[:] = centre

    idx = np.nonzero(mixed)
    if idx[0].size == 0:
        return out
    offs = (np.arange(nsub) + 0.5) / nsub - 0.5
    ox, oy = np.meshgrid(offs * grid.dx, offs * grid.dy, indexing="ij")
    ox, oy = ox.ravel(), oy.ravel()
    px = x[idx][:, None] + ox[None, :]
    py = y[idx][:, None] + oy[None, :]
    e, ie = eps_at(px, py, (grid.dx / nsub, grid.dy / nsub))
    mean = e.mean(axis=1)
    inv = ie.mean(axis=1)
    if component == "z":
        out[idx] = mean
        return out
    de = e - mean[:, None]
    nx_ = (de * ox[None, :]).sum(axis=1)
    ny_ = (de * oy[None, :]).sum(axis=1)
    norm = np.hypot(nx_, ny_)
    safe = np.where(norm > 0, norm, 1.0)
    along = (nx_ if component == "x" else ny_) / safe
    along = np.where(norm > 0, along, 0.0)
    c2 = along**2
    out[idx] = 1.0 / (c2 * inv + (1.0 - c2) / mean)
    return out


def rasterize_shapes(
    shapes: Sequence[tuple[Shape, float]],
    eps_bg: float,
    grid: GridSpec,
    wavelength: float = 1.3,
    symmetric: bool = True,
    nsub: int = 8,
) -> PermittivityMap:
    """Rasterize (shape, permittivity) pairs; later shapes overwrite earlier ones."""
    xn, yn = grid.x_nodes(), grid.y_nodes()
    xh = 0.5 * (xn[1:] + xn[:-1])
    yh = 0.5 * (yn[1:] + yn[:-1])
    maps = {}
    for comp, (xs, ys) in {"x": (xh, yn), "y": (xn, yh), "z": (xn, yn)}.items():
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        e = _smooth(X, Y, shapes, eps_bg, grid, comp, nsub)
        if symmetric:
            e = 0.5 * (e + e[::-1])
        maps[comp] = e
    return PermittivityMap(
        grid=grid,
        eps_x=maps["x"],
        eps_y=maps["y"],
        eps_z=maps["z"],
        wavelength=wavelength,
        symmetric=symmetric,
        background=eps_bg,
    )


def rasterize(
    spec: CrossSectionSpec,
    grid: GridSpec,
    *,
    channel: bool = True,
    fiber: bool = True,
) -> PermittivityMap:
    """Permittivity map of the coupler cross-section.

    ``channel=False`` or ``fiber=False`` drop one guide while keeping the
    other one where it sits in the full structure.
    """
    validate(spec, grid)
    p = spec.placement()
    shapes = []
    if channel:
        shapes.append((rectangle(*p["channel_x"], *p["channel_y"]), spec.channel_index**2))
    if fiber:
        shapes.append((disc(*p["fiber_center"], spec.fiber_radius), spec.fiber_index**2))
    pm = rasterize_shapes(
        shapes,
        spec.background_index**2,
        grid,
        wavelength=spec.wavelength,
        symmetric=spec.symmetric,
    )
    pm.meta = {"spec": dataclasses.asdict(spec), "channel": channel, "fiber": fiber}
    return pm
