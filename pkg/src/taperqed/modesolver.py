"""Full-vector finite-difference eigenmode solver for the coupler cross-section.

Fields vary as ``exp(i beta z - i omega t)``.  The transverse electric field
(Ex, Ey) obeys

    beta^2 Et = k0^2 eps Et + grad_t[eps_z^-1 div_t(eps Et)] - curl_t curl_z Et

on the staggered grid described in :mod:`taperqed.geometry`.  Magnetic
fields are stored as ``Z0 * H`` so that E and H share units, and the
longitudinal power is ``S = Re int (E x H*) . z dS`` in (field units)^2 um^2.

For mirror-symmetric maps the eigenproblem is split into the two parity
classes of Ex about x = 0 and each half-domain problem is solved
separately.  The symmetry plane then acts as an electric wall for the
even-Ex class and as a magnetic wall for the odd-Ex class.
"""
from __future__ import annotations

import dataclasses
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linear_sum_assignment

from .eigensolver import EigenConfig, EigenConvergenceError, eigs_shift_invert, factorize
from .geometry import PermittivityMap

log = logging.getLogger(__name__)

ROMAN = ["I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII"]
COMPONENTS = ("Ex", "Ey", "Ez", "Hx", "Hy", "Hz")
AMBIGUITY = 0.05
LEAKAGE_THRESHOLD = 1e-9


def roman(i: int) -> str:
    return ROMAN[i - 1] if 1 <= i <= len(ROMAN) else str(i)


def ordinal_of(label: str) -> int:
    tag = label.split("_", 1)[1]
    return ROMAN.index(tag) + 1 if tag in ROMAN else int(tag)


def _stretch(pos, width, cells, d, strength, order, left=True, right=True):
    """Complex coordinate stretch 1 + i sigma(pos) of an absorbing layer."""
    s = np.ones(pos.shape, dtype=complex)
    if cells <= 0:
        return s
    L = cells * d
    if left:
        depth = np.clip(L - pos, 0, None) / L
        s += 1j * strength * depth**order
    if right:
        depth = np.clip(pos - (width - L), 0, None) / L
        s += 1j * strength * depth**order
    return s


def _diff_pair(n, d, right="pec", s_half=None, s_node=None):
    """1D forward/backward differences on n cells of width d.

    Half points k = 0..n-1 sit at (k + 1/2) d.  Node unknowns are nodes
    1..n-1 (``right='pec'``, electric walls on both ends) or nodes 1..n
    (``right='pmc'``, magnetic symmetry wall at node n).  Returns
    ``(D_n2h, D_h2n)``.
    """
    nn = n - 1 if right == "pec" else n
    r, c, v = [], [], []
    for k in range(n):
        if k + 1 <= nn:
            r.append(k), c.append(k), v.append(1.0)
        if k >= 1:
            r.append(k), c.append(k - 1), v.append(-1.0)
    n2h = sp.csr_matrix((np.array(v) / d, (r, c)), shape=(n, nn))
    r, c, v = [], [], []
    for m in range(nn):
        node = m + 1
        if node <= n - 1:
            r.append(m), c.append(node), v.append(1.0)
            r.append(m), c.append(node - 1), v.append(-1.0)
        else:  # node n on a magnetic wall: g[n] = -g[n-1]
            r.append(m), c.append(n - 1), v.append(-2.0)
    h2n = sp.csr_matrix((np.array(v) / d, (r, c)), shape=(nn, n))
    if s_half is not None:
        n2h = sp.diags(1.0 / s_half) @ n2h
    if s_node is not None:
        h2n = sp.diags(1.0 / s_node[1 : nn + 1]) @ h2n
    return n2h.tocsr(), h2n.tocsr()


class YeeOperator:
    """Difference operators and permittivities for one (sub)domain.

    ``parity`` is None for the whole window, +1 for the even-Ex half and
    -1 for the odd-Ex half (left half, x <= 0).
    """

    def __init__(self, pmap: PermittivityMap, parity: int | None = None):
        g = pmap.grid
        self.pmap = pmap
        self.parity = parity
        self.Nx, self.Ny = g.nx, g.ny
        dx, dy = g.dx / 1000.0, g.dy / 1000.0
        self.dx, self.dy = dx, dy
        pml = g.boundary == "pml"
        cells = g.pml_cells if pml else 0

        nx = self.Nx if parity is None else self.Nx // 2
        right = "pec" if parity in (None, 1) else "pmc"
        xh = (np.arange(nx) + 0.5) * dx
        xn = np.arange(nx + 1) * dx
        kw = dict(cells=cells, d=dx, strength=g.pml_strength, order=g.pml_order,
                  width=self.Nx * dx, right=parity is None)
        sxh, sxn = _stretch(xh, **kw), _stretch(xn, **kw)
        yh = (np.arange(self.Ny) + 0.5) * dy
        yn = np.arange(self.Ny + 1) * dy
        kw.update(d=dy, width=self.Ny * dy, right=True)
        syh, syn = _stretch(yh, **kw), _stretch(yn, **kw)
        if not pml:
            sxh = sxn = syh = syn = None

        self.nhx, self.nhy = nx, self.Ny
        self.nnx = nx - 1 if right == "pec" else nx
        self.nny = self.Ny - 1
        Dx_n2h, Dx_h2n = _diff_pair(nx, dx, right, sxh, sxn)
        Dy_n2h, Dy_h2n = _diff_pair(self.Ny, dy, "pec", syh, syn)
        I = sp.identity
        self.Dx_h2n_E = sp.kron(Dx_h2n, I(self.nny))  # Ex -> Ez
        self.Dy_h2n_E = sp.kron(I(self.nnx), Dy_h2n)  # Ey -> Ez
        self.Dx_n2h_Z = sp.kron(Dx_n2h, I(self.nny))  # Ez -> Ex
        self.Dy_n2h_Z = sp.kron(I(self.nnx), Dy_n2h)  # Ez -> Ey
        self.Dx_n2h_Y = sp.kron(Dx_n2h, I(self.nhy))  # Ey -> Hz
        self.Dy_n2h_X = sp.kron(I(self.nhx), Dy_n2h)  # Ex -> Hz
        self.Dy_h2n_H = sp.kron(I(self.nhx), Dy_h2n)  # Hz -> Ex
        self.Dx_h2n_H = sp.kron(Dx_h2n, I(self.nhy))  # Hz -> Ey

        n0 = self.nnx
        self.eps_x = pmap.eps_x[:nx, 1 : self.Ny].ravel()
        self.eps_y = pmap.eps_y[1 : 1 + n0, :].ravel()
        self.eps_z = pmap.eps_z[1 : 1 + n0, 1 : self.Ny].ravel()
        self.n_ex = self.eps_x.size
        self.n_ey = self.eps_y.size

    def assemble(self, k0: float) -> sp.csr_matrix:
        ex, ey, ez = (sp.diags(e) for e in (self.eps_x, self.eps_y, self.eps_z))
        div = sp.hstack([self.Dx_h2n_E @ ex, self.Dy_h2n_E @ ey])
        grad = sp.vstack([self.Dx_n2h_Z, self.Dy_n2h_Z])
        curl = sp.hstack([-self.Dy_n2h_X, self.Dx_n2h_Y])
        rot = sp.vstack([-self.Dy_h2n_H, self.Dx_h2n_H])
        A = k0**2 * sp.block_diag([ex, ey]) + grad @ sp.diags(1.0 / self.eps_z) @ div + rot @ curl
        return sp.csr_matrix(A)

    def reconstruct(self, v: np.ndarray, beta: complex, k0: float) -> dict:
        """All six components (unknown layout) from an (Ex, Ey) eigenvector."""
        ex, ey = v[: self.n_ex], v[self.n_ex :]
        div = self.Dx_h2n_E @ (self.eps_x * ex) + self.Dy_h2n_E @ (self.eps_y * ey)
        ez = 1j * div / (beta * self.eps_z)
        hz = (self.Dx_n2h_Y @ ey - self.Dy_n2h_X @ ex) / (1j * k0)
        hx = (self.Dy_n2h_Z @ ez - 1j * beta * ey) / (1j * k0)
        hy = (1j * beta * ex - self.Dx_n2h_Z @ ez) / (1j * k0)
        return {"Ex": ex, "Ey": ey, "Ez": ez, "Hx": hx, "Hy": hy, "Hz": hz}

    def ampere_residual(self, f: dict, beta: complex, k0: float) -> float:
        """Relative residual of curl H = -i k0 eps E (all three components)."""
        rx = self.Dy_h2n_H @ f["Hz"] - 1j * beta * f["Hy"] + 1j * k0 * self.eps_x * f["Ex"]
        ry = 1j * beta * f["Hx"] - self.Dx_h2n_H @ f["Hz"] + 1j * k0 * self.eps_y * f["Ey"]
        rz = (self.Dx_h2n_E @ f["Hy"] - self.Dy_h2n_E @ f["Hx"]
              + 1j * k0 * self.eps_z * f["Ez"])
        num = np.sqrt(sum(np.vdot(r, r).real for r in (rx, ry, rz)))
        den = k0 * np.sqrt(sum(
            np.vdot(e * f[c], e * f[c]).real
            for e, c in ((self.eps_x, "Ex"), (self.eps_y, "Ey"), (self.eps_z, "Ez"))
        ))
        return float(num / den)

    def to_full(self, f: dict) -> dict:
        """Embed unknown-layout components into whole-window natural arrays.

        Natural shapes: x-half components (Ex, Hy) (Nx, Ny+1); Hz (Nx, Ny);
        x-node components Ey, Hx (Nx+1, Ny); Ez (Nx+1, Ny+1).
        """
        Nx, Ny = self.Nx, self.Ny
        p = 1 if self.parity is None else self.parity
        out = {}
        spec = {
            # comp: (x is half?, y is half?, parity factor)
            "Ex": (True, False, p), "Hy": (True, False, p), "Hz": (True, True, p),
            "Ey": (False, True, -p), "Hx": (False, True, -p), "Ez": (False, False, -p),
        }
        for comp, (xhalf, yhalf, q) in spec.items():
            shape = (Nx if xhalf else Nx + 1, Ny if yhalf else Ny + 1)
            full = np.zeros(shape, dtype=complex)
            nxl = self.nhx if xhalf else self.nnx
            nyl = self.Ny if yhalf else self.nny
            block = f[comp].reshape(nxl, nyl)
            xs = slice(0, nxl) if xhalf else slice(1, 1 + nxl)
            ys = slice(None) if yhalf else slice(1, Ny)
            full[xs, ys] = block
            if self.parity is not None:
                h = Nx // 2
                if xhalf:
                    full[h:] = q * full[:h][::-1]
                else:
                    full[h + 1 : Nx] = q * full[1:h][::-1]
            out[comp] = full
        return out


def assemble(pmap: PermittivityMap, wavelength: float) -> sp.csr_matrix:
    """Whole-window operator with eigenpairs (beta^2, [Ex; Ey])."""
    return YeeOperator(pmap, None).assemble(2 * np.pi / wavelength)


@dataclass
class Supermode:
    label: str
    family: str
    ordinal: int
    n_eff: complex
    wavelength: float
    fields: dict = field(repr=False)
    S: float = 0.0
    guided: bool = True
    parity: int | None = None
    pol_x: float = 0.5
    ambiguous: bool = False
    grid: object = field(default=None, repr=False)
    diagnostics: dict = field(default_factory=dict, repr=False)

    @property
    def k0(self) -> float:
        return 2 * np.pi / self.wavelength

    @property
    def beta(self) -> float:
        """Propagation constant in rad/um."""
        return self.k0 * float(np.real(self.n_eff))

    def scaled(self, c: complex) -> "Supermode":
        return dataclasses.replace(self, fields={k: c * v for k, v in self.fields.items()})

    def relabeled(self, ordinal: int) -> "Supermode":
        return dataclasses.replace(self, ordinal=ordinal, label=f"{self.family}_{roman(ordinal)}")


@dataclass
class ModeBasis:
    wavelength: float
    modes: list
    provenance: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.modes)

    def __len__(self):
        return len(self.modes)

    def labels(self) -> list[str]:
        return [m.label for m in self.modes]

    def get(self, label: str) -> Supermode:
        for m in self.modes:
            if m.label == label:
                return m
        raise KeyError(label)

    def family(self, fam: str) -> list:
        return [m for m in self.modes if m.family == fam]


def polarization_fraction(fields: dict) -> float:
    px = float(np.sum(np.abs(fields["Ex"]) ** 2))
    py = float(np.sum(np.abs(fields["Ey"]) ** 2))
    return px / (px + py)


def classify(mode: Supermode) -> tuple[str, bool]:
    """Family name from the dominant transverse E component, plus an ambiguity flag."""
    fx = polarization_fraction(mode.fields)
    ambiguous = abs(fx - (1 - fx)) < AMBIGUITY
    return ("hEx" if fx > 0.5 else "hEy"), ambiguous


def _phase_fix(fields: dict) -> dict:
    dom = "Ex" if polarization_fraction(fields) >= 0.5 else "Ey"
    a = fields[dom].ravel()
    i = int(np.argmax(np.abs(a)))
    c = np.conj(a[i]) / abs(a[i])
    return {k: c * v for k, v in fields.items()}


def power_flux_fields(fields: dict, dx_um: float, dy_um: float) -> float:
    """Re int (E x H*) . z dS; Ex/Hy and Ey/Hx are co-located on the grid."""
    s = np.sum(fields["Ex"] * np.conj(fields["Hy"])) - np.sum(fields["Ey"] * np.conj(fields["Hx"]))
    return float(np.real(s) * dx_um * dy_um)


def solve_modes(
    pmap: PermittivityMap,
    wavelength: float | None = None,
    search_window: tuple[float, float] | None = None,
    k: int = 8,
    tol: float = 1e-10,
    seed: int | None = None,
    max_k: int = 32,
) -> ModeBasis:
    """All modes of ``pmap`` whose Re(n_eff) lies in ``search_window``.

    The shift sits at ``(k0 n_hi)^2`` and eigenpairs are harvested in
    batches of ``k`` until one falls below ``n_lo``.
    """
    wavelength = wavelength or pmap.wavelength
    k0 = 2 * np.pi / wavelength
    n_bg = np.sqrt(pmap.background)
    n_max = np.sqrt(pmap.eps_max)
    n_lo, n_hi = search_window or (1.05 * n_bg, n_max)
    if not (n_bg <= n_lo < n_hi <= n_max + 1e-12):
        raise ValueError(f"search window ({n_lo}, {n_hi}) outside [{n_bg}, {n_max}]")
    sigma = (k0 * n_hi) ** 2
    pml = pmap.grid.boundary == "pml"
    classes = (1, -1) if pmap.symmetric else (None,)
    g = pmap.grid
    dx_um, dy_um = g.dx / 1000.0, g.dy / 1000.0

    raw = []
    diag = {}
    for parity in classes:
        op = YeeOperator(pmap, parity)
        A = op.assemble(k0)
        lu = factorize(A, sigma)
        kk = min(k, A.shape[0])

        def in_window(lam):
            ne = np.sqrt(np.asarray(lam, dtype=complex)).real / k0
            below = np.nonzero(ne < n_lo)[0]
            return below[0] if below.size else len(ne)

        while True:
            cfg = EigenConfig(sigma=sigma, k=kk, tol=tol, **({"seed": seed} if seed is not None else {}))
            try:
                vals, vecs, info = eigs_shift_invert(A, cfg, lu=lu, select=in_window)
                break
            except EigenConvergenceError:
                # window may hold k or more modes; widen the harvest
                if kk >= min(max_k, A.shape[0] - 2):
                    raise
                kk = min(2 * kk, max_k, A.shape[0] - 2)
        neff = np.sqrt(vals.astype(complex)) / k0
        diag[str(parity)] = {
            "unknowns": A.shape[0], "k": kk, "restarts": info["restarts"],
            "max_residual": float(np.max(info["residuals"], initial=0.0)), "lu_nnz": info["lu_nnz"],
        }
        for i, ne in enumerate(neff):
            if not (n_lo <= ne.real <= n_hi):
                continue
            if not pml:
                ne = complex(ne.real, 0.0)
            beta = k0 * ne
            f = op.reconstruct(vecs[:, i], beta, k0)
            res = op.ampere_residual(f, beta, k0)
            full = _phase_fix(op.to_full(f))
            S = power_flux_fields(full, dx_um, dy_um)
            raw.append((ne, full, S, parity, res))

    modes = []
    for ne, full, S, parity, res in raw:
        m = Supermode(
            label="", family="", ordinal=0, n_eff=ne, wavelength=wavelength, fields=full,
            S=S, guided=abs(ne.imag) < LEAKAGE_THRESHOLD, parity=parity,
            pol_x=polarization_fraction(full), grid=g,
            diagnostics={"ampere_residual": res},
        )
        fam, amb = classify(m)
        m.family, m.ambiguous = fam, amb
        modes.append(m)
    modes = _assign_ordinals(modes)
    return ModeBasis(
        wavelength=wavelength,
        modes=modes,
        provenance={
            "grid": dataclasses.asdict(g), "window": (float(n_lo), float(n_hi)),
            "sigma": sigma, "solver": diag,
        },
    )


def _assign_ordinals(modes: list) -> list:
    out = []
    for fam in ("hEx", "hEy"):
        members = sorted((m for m in modes if m.family == fam), key=lambda m: -m.n_eff.real)
        out.extend(m.relabeled(i + 1) for i, m in enumerate(members))
    return out


def transverse_overlap(a: Supermode, b: Supermode) -> float:
    num = abs(np.vdot(a.fields["Ex"], b.fields["Ex"]) + np.vdot(a.fields["Ey"], b.fields["Ey"]))
    na = np.sqrt(np.sum(np.abs(a.fields["Ex"]) ** 2) + np.sum(np.abs(a.fields["Ey"]) ** 2))
    nb = np.sqrt(np.sum(np.abs(b.fields["Ex"]) ** 2) + np.sum(np.abs(b.fields["Ey"]) ** 2))
    return float(num / (na * nb))


def relabel_map(prev: ModeBasis, nxt: ModeBasis, warn_below: float = 0.5) -> dict:
    """Map each label of ``nxt`` to the label it should carry after tracking.

    Within each family the assignment maximising the total field overlap
    with ``prev`` is solved exactly; modes of ``nxt`` left unmatched
    receive fresh ordinals after the largest one in use.
    """
    mapping = {}
    for fam in ("hEx", "hEy"):
        P, N = prev.family(fam), nxt.family(fam)
        if not P:
            mapping.update({m.label: m.label for m in N})
            continue
        if not N:
            continue
        O = np.array([[transverse_overlap(p, n) for n in N] for p in P])
        rows, cols = linear_sum_assignment(-O)
        assigned = {}
        for r, c in zip(rows, cols):
            if O[r, c] < warn_below:
                msg = (f"{fam}: best overlap {O[r, c]:.2f} for {P[r].label}; "
                       "mode may have appeared or vanished")
                warnings.warn(msg, stacklevel=3)
                log.warning(msg)
            assigned[c] = P[r].ordinal
        nxt_ord = max(p.ordinal for p in P) + 1
        for j, m in enumerate(N):
            if j not in assigned:
                assigned[j] = nxt_ord
                nxt_ord += 1
            mapping[m.label] = f"{fam}_{roman(assigned[j])}"
    return mapping


def track(prev: ModeBasis, nxt: ModeBasis, warn_below: float = 0.5) -> ModeBasis:
    """Carry labels from ``prev`` to ``nxt`` by maximal total field overlap."""
    mapping = relabel_map(prev, nxt, warn_below)
    out = []
    for m in nxt:
        out.append(m.relabeled(ordinal_of(mapping[m.label])))
    return ModeBasis(nxt.wavelength, out, dict(nxt.provenance, tracked=True))


def sample(mode: Supermode, comp: str, x_nm: float, y_nm: float) -> complex:
    """Bilinear interpolation of one field component at (x, y) in nm."""
    g = mode.grid
    arr = mode.fields[comp]
    xhalf = comp in ("Ex", "Hy", "Hz")
    yhalf = comp in ("Ey", "Hx", "Hz")
    x0 = -0.5 * g.nx * g.dx + (0.5 * g.dx if xhalf else 0.0)
    y0 = -0.5 * g.ny * g.dy + (0.5 * g.dy if yhalf else 0.0)
    fx = (x_nm - x0) / g.dx
    fy = (y_nm - y0) / g.dy
    i, j = int(np.floor(fx)), int(np.floor(fy))
    if not (0 <= i < arr.shape[0] - 1 and 0 <= j < arr.shape[1] - 1):
        raise ValueError(f"point ({x_nm}, {y_nm}) nm lies outside the grid")
    tx, ty = fx - i, fy - j
    return complex(
        (1 - tx) * (1 - ty) * arr[i, j] + tx * (1 - ty) * arr[i + 1, j]
        + (1 - tx) * ty * arr[i, j + 1] + tx * ty * arr[i + 1, j + 1]
    )


def write_fields(mode: Supermode, path) -> None:
    """Binary dump: header then complex128 planes Ex, Ey, Ez, Hx, Hy, Hz.

    Header: magic ``b"TQFD"``, then int32 version, nx, ny (cell counts),
    then float64 dx_nm, dy_nm, n_eff.real, n_eff.imag.  Each plane is
    row-major (x index slowest) with its staggered shape
    (Ex, Hy: nx x ny+1; Ey, Hx: nx+1 x ny; Ez: nx+1 x ny+1; Hz: nx x ny)
    stored as interleaved real/imaginary float64 pairs, little endian.
    """
    g = mode.grid
    with open(path, "wb") as fh:
        fh.write(b"TQFD")
        fh.write(np.array([1, g.nx, g.ny], dtype="<i4").tobytes())
        fh.write(np.array([g.dx, g.dy, mode.n_eff.real, mode.n_eff.imag], dtype="<f8").tobytes())
        for comp in COMPONENTS:
            fh.write(np.ascontiguousarray(mode.fields[comp], dtype="<c16").tobytes())


def read_fields(path) -> tuple[dict, dict]:
    with open(path, "rb") as fh:
        if fh.read(4) != b"TQFD":
            raise ValueError("not a field dump")
        _, nx, ny = np.frombuffer(fh.read(12), dtype="<i4")
        dx, dy, nr, ni = np.frombuffer(fh.read(32), dtype="<f8")
        shapes = {"Ex": (nx, ny + 1), "Ey": (nx + 1, ny), "Ez": (nx + 1, ny + 1),
                  "Hx": (nx + 1, ny), "Hy": (nx, ny + 1), "Hz": (nx, ny)}
        fields = {}
        for comp in COMPONENTS:
            n = shapes[comp][0] * shapes[comp][1]
            fields[comp] = np.frombuffer(fh.read(16 * n), dtype="<c16").reshape(shapes[comp]).copy()
    return fields, {"nx": int(nx), "ny": int(ny), "dx": dx, "dy": dy, "n_eff": complex(nr, ni)}
