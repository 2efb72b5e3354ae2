"""Broken fields on uniform 1D/2D meshes and their energy ingredients.

A broken field carries independent polynomial data per cell (offset,
gradient, optional Hessian), so jumps across every facet are admissible.
This is the minimal faithful discretization for competitors whose jump sets
must be free.  All field data live in physical coordinates; rotated meshes
only change the geometry (cell centers, facet normals).

Fields are treated as immutable value objects: evaluators are pure and never
mutate their inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field, replace
from typing import Optional

import numpy as np

from .densities import BulkDensity, SurfaceDensity, fro, sym

__all__ = [
    "Mesh",
    "BrokenField",
    "CantorDescriptor",
    "MeasureDecomposition",
    "KornPoincareReport",
    "InternalConsistencyError",
    "unit_interval",
    "unit_square",
    "centered_cube",
    "rotation_for_normal",
    "jump_trace",
    "bulk_energy",
    "surface_energy",
    "decompose",
    "korn_poincare_gap",
    "restrict",
    "refine",
    "zero_field",
    "affine_field",
    "step_field",
    "field_l1_norm",
    "field_l1_distance",
    "field_to_json",
    "field_from_json",
    "JUMP_TOL",
]

JUMP_TOL = 1e-12

_GAUSS2 = (np.array([-0.5 / math.sqrt(3.0), 0.5 / math.sqrt(3.0)]), np.array([0.5, 0.5]))


class InternalConsistencyError(AssertionError):
    """An identity that must hold for every constructible object failed."""


def _simpson_rule(k: int = 16):
    # composite Simpson on [-1/2, 1/2] with k subintervals (k even)
    x = np.linspace(-0.5, 0.5, k + 1)
    w = np.ones(k + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w /= w.sum()
    return x, w


_SIMPSON = _simpson_rule()


def rotation_for_normal(nu: np.ndarray, tangent_sign: int = 1) -> np.ndarray:
    """Orthogonal map sending e1 to nu; the free in-plane axis is fixed
    deterministically (2D tangent = tangent_sign * perp(nu))."""
    nu = np.asarray(nu, dtype=float)
    n = nu / np.linalg.norm(nu)
    if n.size == 1:
        return np.array([[n[0]]])
    if n.size != 2:
        raise ValueError("only 1D and 2D meshes are supported")
    t = tangent_sign * np.array([-n[1], n[0]])
    return np.stack([n, t], axis=1)


@dataclass(frozen=True)
class Mesh:
    """Uniform tensor-product mesh of an axis-aligned reference box.

    ``shape`` holds cells per axis; physical coordinates are
    ``rotation @ ref`` (identity when rotation is None).  Facet ordering is
    fixed and deterministic: axis-0 facets first, then axis-1.
    """

    dim: int
    shape: tuple
    lo: np.ndarray
    hi: np.ndarray
    rotation: Optional[np.ndarray] = None
    nu: Optional[np.ndarray] = None
    tangent_sign: int = 1

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if len(self.shape) != self.dim:
            raise ValueError("shape must have one entry per axis")
        if np.any(self.hi <= self.lo):
            raise ValueError("degenerate box")

    # -- geometry ----------------------------------------------------------

    @property
    def ncells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def h(self) -> np.ndarray:
        return (self.hi - self.lo) / np.asarray(self.shape, dtype=float)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def to_physical(self, ref_pts: np.ndarray) -> np.ndarray:
        ref_pts = np.asarray(ref_pts, dtype=float)
        if self.rotation is None:
            return ref_pts
        return ref_pts @ np.asarray(self.rotation).T

    def _ref_centers(self) -> np.ndarray:
        axes = [self.lo[a] + (np.arange(self.shape[a]) + 0.5) * self.h[a]
                for a in range(self.dim)]
        if self.dim == 1:
            return axes[0][:, None]
        X, Y = np.meshgrid(axes[0], axes[1], indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=1)

    @property
    def cell_centers(self) -> np.ndarray:
        return self.to_physical(self._ref_centers())

    def ravel_index(self, idx) -> np.ndarray:
        return np.ravel_multi_index(idx, self.shape)

    # -- facets --------------------------------------------------------------

    def interior_facets(self):
        """dict of arrays: cells (nf,2) [minus,plus], normal/tangent (nf,N)
        physical, midpoint (nf,N) physical, area (nf,)."""
        mids, cells, normals, tangents, areas = [], [], [], [], []
        if self.dim == 1:
            n = self.shape[0]
            x = self.lo[0] + np.arange(1, n) * self.h[0]
            mids = np.stack([x], axis=1)
            cells = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
            normals = np.ones((n - 1, 1))
            tangents = np.zeros((n - 1, 1))
            areas = np.ones(n - 1)
        else:
            nx, ny = self.shape
            hx, hy = self.h
            blocks = []
            # axis-0 facets between (i,j) and (i+1,j)
            if nx > 1:
                I, J = np.meshgrid(np.arange(nx - 1), np.arange(ny), indexing="ij")
                I, J = I.ravel(), J.ravel()
                m = np.stack([self.lo[0] + (I + 1) * hx, self.lo[1] + (J + 0.5) * hy], axis=1)
                c = np.stack([self.ravel_index((I, J)), self.ravel_index((I + 1, J))], axis=1)
                blocks.append((m, c, np.array([1.0, 0.0]), np.array([0.0, 1.0]), hy))
            # axis-1 facets between (i,j) and (i,j+1)
            if ny > 1:
                I, J = np.meshgrid(np.arange(nx), np.arange(ny - 1), indexing="ij")
                I, J = I.ravel(), J.ravel()
                m = np.stack([self.lo[0] + (I + 0.5) * hx, self.lo[1] + (J + 1) * hy], axis=1)
                c = np.stack([self.ravel_index((I, J)), self.ravel_index((I, J + 1))], axis=1)
                blocks.append((m, c, np.array([0.0, 1.0]), np.array([1.0, 0.0]), hx))
            mids = np.concatenate([b[0] for b in blocks]) if blocks else np.zeros((0, 2))
            cells = np.concatenate([b[1] for b in blocks]) if blocks else np.zeros((0, 2), int)
            normals = np.concatenate([np.broadcast_to(b[2], b[0].shape) for b in blocks]) \
                if blocks else np.zeros((0, 2))
            tangents = np.concatenate([np.broadcast_to(b[3], b[0].shape) for b in blocks]) \
                if blocks else np.zeros((0, 2))
            areas = np.concatenate([np.full(len(b[0]), b[4]) for b in blocks]) \
                if blocks else np.zeros(0)
        return {
            "midpoint": self.to_physical(np.asarray(mids, dtype=float)),
            "cells": np.asarray(cells, dtype=int),
            "normal": self.to_physical(np.asarray(normals, dtype=float)),
            "tangent": self.to_physical(np.asarray(tangents, dtype=float)),
            "area": np.asarray(areas, dtype=float),
        }

    def boundary_facets(self):
        """dict: cell (nb,), normal outward, tangent, midpoint, area."""
        if self.dim == 1:
            n = self.shape[0]
            mids = np.array([[self.lo[0]], [self.hi[0]]])
            cells = np.array([0, n - 1])
            normals = np.array([[-1.0], [1.0]])
            tangents = np.zeros((2, 1))
            areas = np.ones(2)
        else:
            nx, ny = self.shape
            hx, hy = self.h
            mids, cells, normals, tangents, areas = [], [], [], [], []
            J = np.arange(ny)
            # left / right
            for i, s in ((0, -1.0), (nx - 1, 1.0)):
                m = np.stack([np.full(ny, self.lo[0] if s < 0 else self.hi[0]),
                              self.lo[1] + (J + 0.5) * hy], axis=1)
                mids.append(m)
                cells.append(self.ravel_index((np.full(ny, i, dtype=int), J)))
                normals.append(np.broadcast_to(np.array([s, 0.0]), m.shape))
                tangents.append(np.broadcast_to(np.array([0.0, 1.0]), m.shape))
                areas.append(np.full(ny, hy))
            I = np.arange(nx)
            # bottom / top
            for j, s in ((0, -1.0), (ny - 1, 1.0)):
                m = np.stack([self.lo[0] + (I + 0.5) * hx,
                              np.full(nx, self.lo[1] if s < 0 else self.hi[1])], axis=1)
                mids.append(m)
                cells.append(self.ravel_index((I, np.full(nx, j, dtype=int))))
                normals.append(np.broadcast_to(np.array([0.0, s]), m.shape))
                tangents.append(np.broadcast_to(np.array([1.0, 0.0]), m.shape))
                areas.append(np.full(nx, hx))
            mids = np.concatenate(mids)
            cells = np.concatenate(cells)
            normals = np.concatenate(normals)
            tangents = np.concatenate(tangents)
            areas = np.concatenate(areas)
        return {
            "midpoint": self.to_physical(np.asarray(mids, dtype=float)),
            "cell": np.asarray(cells, dtype=int),
            "normal": self.to_physical(np.asarray(normals, dtype=float)),
            "tangent": self.to_physical(np.asarray(tangents, dtype=float)),
            "area": np.asarray(areas, dtype=float),
        }

    def facet_quadrature(self, facets, rule: str = "gauss2"):
        """Quadrature points (nf, q, N) physical and weights (q,) summing
        to 1 (multiply by facet area for integrals)."""
        if self.dim == 1:
            pts = facets["midpoint"][:, None, :]
            return pts, np.array([1.0])
        offs, w = _GAUSS2 if rule == "gauss2" else _SIMPSON
        half = facets["area"][:, None, None]
        pts = facets["midpoint"][:, None, :] + offs[None, :, None] * half * facets["tangent"][:, None, :]
        return pts, w

    def check_invariants(self):
        vols = self.cell_volume * self.ncells
        if abs(vols - self.volume) > 1e-12 * max(1.0, self.volume):
            raise InternalConsistencyError("cell volumes do not sum to domain volume")
        f = self.interior_facets()
        if f["cells"].size and not np.allclose(np.linalg.norm(f["normal"], axis=1), 1.0, atol=1e-12):
            raise InternalConsistencyError("facet normals not unit length")
        return True


def unit_interval(n: int) -> Mesh:
    return Mesh(dim=1, shape=(int(n),), lo=np.array([0.0]), hi=np.array([1.0]))


def unit_square(n: int, ny: Optional[int] = None) -> Mesh:
    return Mesh(dim=2, shape=(int(n), int(ny if ny is not None else n)),
                lo=np.zeros(2), hi=np.ones(2))


def centered_cube(dim: int, n: int, nu=None, tangent_sign: int = 1) -> Mesh:
    """Unit cube centered at the origin; with ``nu`` the first axis aligns
    with nu (the cell-problem geometry for step boundary data)."""
    rot = None
    nu_arr = None
    if nu is not None:
        nu_arr = np.asarray(nu, dtype=float)
        nu_arr = nu_arr / np.linalg.norm(nu_arr)
        rot = rotation_for_normal(nu_arr, tangent_sign)
    return Mesh(dim=dim, shape=(int(n),) * dim, lo=np.full(dim, -0.5),
                hi=np.full(dim, 0.5), rotation=rot, nu=nu_arr,
                tangent_sign=tangent_sign)


# ---------------------------------------------------------------------------
# Cantor descriptor
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CantorDescriptor:
    """1D Cantor component: the standard middle-thirds staircase scaled to
    derivative-measure mass ``mass``, described at refinement ``level``.

    The level-L jump surrogate places 2**L jumps of height mass/2**L at the
    midpoints of the level-L construction intervals; each jump introduces one
    new plateau and the total variation is exactly |mass|.
    """

    level: int
    mass: float

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("level must be >= 1")

    def interval_starts(self) -> np.ndarray:
        starts = np.array([0.0])
        w = 1.0
        for _ in range(self.level):
            w /= 3.0
            starts = np.concatenate([starts, starts + 2.0 * w])
        return np.sort(starts)

    def surrogate_jumps(self, lo: float = 0.0, hi: float = 1.0):
        """(positions, heights) of the level-L staircase on [lo, hi]."""
        s = self.interval_starts()
        w = 3.0 ** (-self.level)
        mids = s + 0.5 * w
        pos = lo + (hi - lo) * mids
        heights = np.full(mids.size, self.mass / mids.size)
        return pos, heights

    def value(self, t):
        """Exact Cantor function (times mass) at points t in [0, 1]."""
        t = np.atleast_1d(np.asarray(t, dtype=float)).copy()
        v = np.zeros_like(t)
        f = np.full_like(t, 0.5)
        active = np.ones(t.shape, dtype=bool)
        for _ in range(52):
            low = active & (t < 1.0 / 3.0)
            mid = active & (t >= 1.0 / 3.0) & (t <= 2.0 / 3.0)
            high = active & (t > 2.0 / 3.0)
            v[mid] += f[mid]
            active = low | high
            t[low] *= 3.0
            v[high] += f[high]
            t[high] = 3.0 * t[high] - 2.0
            f[active] /= 2.0
            if not active.any():
                break
        return self.mass * v

    @property
    def total_variation(self) -> float:
        return abs(self.mass)

    @property
    def direction(self) -> float:
        return 1.0 if self.mass >= 0 else -1.0


# ---------------------------------------------------------------------------
# broken fields
# ---------------------------------------------------------------------------


@dataclass
class BrokenField:
    """Cellwise polynomial field: ``u(x) = a_c + Z_c (x - x_c) (+ 1/2 H_c[dx,dx])``.

    value dimension m may differ from the mesh dimension (gradient fields of
    2D maps are m = 4).  ``a`` has shape (ncells, m), ``Z`` (ncells, m, N),
    ``H`` (ncells, m, N, N) symmetric in its last two slots.
    """

    mesh: Mesh
    a: np.ndarray
    Z: np.ndarray
    H: Optional[np.ndarray] = None
    cantor: Optional[CantorDescriptor] = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.Z = np.asarray(self.Z, dtype=float)
        if self.a.shape[0] != self.mesh.ncells or self.Z.shape[0] != self.mesh.ncells:
            raise ValueError("field data does not match mesh cell count")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.Z))):
            raise ValueError("field data must be finite")
        if self.H is not None:
            self.H = np.asarray(self.H, dtype=float)
            if not np.allclose(self.H, np.swapaxes(self.H, -1, -2), atol=1e-12):
                raise ValueError("Hessian must be symmetric in its last two slots")
        if self.cantor is not None and self.mesh.dim != 1:
            raise ValueError("Cantor components are 1D only")

    @property
    def value_dim(self) -> int:
        return self.a.shape[1]

    def eval_at(self, pts: np.ndarray, cells: np.ndarray) -> np.ndarray:
        """Evaluate the broken (polynomial) part at physical points lying in
        the given cells; the Cantor component is not included."""
        dx = pts - self.mesh.cell_centers[cells]
        out = self.a[cells] + np.einsum("...ij,...j->...i", self.Z[cells], dx)
        if self.H is not None:
            out = out + 0.5 * np.einsum("...ijk,...j,...k->...i", self.H[cells], dx, dx)
        return out

    def gradient_at(self, pts: np.ndarray, cells: np.ndarray) -> np.ndarray:
        dx = pts - self.mesh.cell_centers[cells]
        g = self.Z[cells]
        if self.H is not None:
            g = g + np.einsum("...ijk,...k->...ij", self.H[cells], dx)
        return g

    def gradient_field(self) -> "BrokenField":
        """The gradient as a broken field over flattened matrix values."""
        m, N = self.Z.shape[1], self.mesh.dim
        a = self.Z.reshape(self.mesh.ncells, m * N)
        Z = (self.H if self.H is not None else np.zeros((self.mesh.ncells, m, N, N))
             ).reshape(self.mesh.ncells, m * N, N)
        return BrokenField(self.mesh, a, Z)

    def strain(self) -> np.ndarray:
        """Cellwise symmetric gradient at cell centers (ncells, N, N)."""
        if self.value_dim != self.mesh.dim:
            raise ValueError("strain needs value_dim == mesh.dim")
        return sym(self.Z)


def zero_field(mesh: Mesh, value_dim: Optional[int] = None) -> BrokenField:
    m = value_dim if value_dim is not None else mesh.dim
    return BrokenField(mesh, np.zeros((mesh.ncells, m)),
                       np.zeros((mesh.ncells, m, mesh.dim)))


def affine_field(mesh: Mesh, A: np.ndarray, b: Optional[np.ndarray] = None) -> BrokenField:
    """Globally affine u(x) = A x + b represented cellwise (zero jumps)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
    xc = mesh.cell_centers
    a = xc @ A.T + b
    Z = np.broadcast_to(A, (mesh.ncells,) + A.shape).copy()
    return BrokenField(mesh, a, Z)


def step_field(mesh: Mesh, lam: np.ndarray, nu: np.ndarray, theta=None) -> BrokenField:
    """Piecewise constant field: lam where x . nu > 0, theta (default 0) else."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    theta = np.zeros_like(lam) if theta is None else np.atleast_1d(np.asarray(theta, dtype=float))
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    side = mesh.cell_centers @ nu > 0
    a = np.where(side[:, None], lam[None, :], theta[None, :])
    return BrokenField(mesh, a, np.zeros((mesh.ncells, lam.size, mesh.dim)))


# ---------------------------------------------------------------------------
# jump traces and energies
# ---------------------------------------------------------------------------


def jump_trace(fld: BrokenField, facet_index: int, rule: str = "gauss2"):
    """Jump data of one interior facet: (values at quadrature points (q, m),
    unit normal (N,)).  The jump is plus-side trace minus minus-side trace,
    with the normal pointing from minus to plus."""
    facets = fld.mesh.interior_facets()
    pts, _ = fld.mesh.facet_quadrature(facets, rule)
    cm, cp = facets["cells"][facet_index]
    p = pts[facet_index]
    vals = fld.eval_at(p, np.full(p.shape[0], cp, dtype=int)) - \
        fld.eval_at(p, np.full(p.shape[0], cm, dtype=int))
    return vals, facets["normal"][facet_index]


def _all_jumps(fld: BrokenField, rule: str = "gauss2"):
    facets = fld.mesh.interior_facets()
    pts, w = fld.mesh.facet_quadrature(facets, rule)
    cm = facets["cells"][:, 0]
    cp = facets["cells"][:, 1]
    nf, q = pts.shape[0], pts.shape[1]
    if nf == 0:
        return facets, pts, w, np.zeros((0, q, fld.value_dim))
    cpx = np.repeat(cp, q)
    cmx = np.repeat(cm, q)
    flat = pts.reshape(nf * q, -1)
    jumps = (fld.eval_at(flat, cpx) - fld.eval_at(flat, cmx)).reshape(nf, q, fld.value_dim)
    return facets, pts, w, jumps


def bulk_energy(fld: BrokenField, W: BulkDensity) -> float:
    """Cellwise midpoint quadrature of W(x, sym Z_c); exact for x-independent
    densities since the strain argument is constant per cell."""
    xc = fld.mesh.cell_centers
    vals = np.asarray(W(xc, fld.strain()), dtype=float)
    return float(np.sum(vals) * fld.mesh.cell_volume)


def surface_energy(fld: BrokenField, psi: SurfaceDensity, rule: str = "gauss2",
                   jump_tol: float = JUMP_TOL) -> float:
    """Interior-facet quadrature of psi(x, [u], nu); facets with jumps below
    jump_tol contribute nothing."""
    facets, pts, w, jumps = _all_jumps(fld, rule)
    if jumps.shape[0] == 0:
        base = 0.0
    else:
        mags = np.max(np.sqrt(np.sum(jumps**2, axis=-1)), axis=1)
        active = mags >= jump_tol
        if not np.any(active):
            base = 0.0
        else:
            nu = np.broadcast_to(facets["normal"][active][:, None, :], pts[active].shape)
            vals = np.asarray(psi(pts[active], jumps[active], nu), dtype=float)
            base = float(np.sum(vals @ w * facets["area"][active]))
    return base


# ---------------------------------------------------------------------------
# measure decomposition and Gauss-Green
# ---------------------------------------------------------------------------


@dataclass
class MeasureDecomposition:
    ac_part: np.ndarray
    jump_part: np.ndarray
    cantor_mass: float
    total_variation: float
    boundary_flux: np.ndarray
    gauss_green_gap: float


def _sym_outer(lam: np.ndarray, nu: np.ndarray) -> np.ndarray:
    outer = lam[..., :, None] * nu[..., None, :]
    return 0.5 * (outer + np.swapaxes(outer, -1, -2))


def _boundary_flux_matrix(fld: BrokenField, symmetrize: bool = True) -> np.ndarray:
    """Boundary integral of trace(u) (x) nu over the whole boundary."""
    bf = fld.mesh.boundary_facets()
    pts, w = fld.mesh.facet_quadrature(bf, "gauss2")
    nb, q = pts.shape[0], pts.shape[1]
    cells = np.repeat(bf["cell"], q)
    vals = fld.eval_at(pts.reshape(nb * q, -1), cells).reshape(nb, q, fld.value_dim)
    if fld.cantor is not None:
        lo, hi = fld.mesh.lo[0], fld.mesh.hi[0]
        t = (pts.reshape(nb * q, -1)[:, 0] - lo) / (hi - lo)
        vals = vals + fld.cantor.value(t).reshape(nb, q, 1)
    outer = vals[:, :, :, None] * bf["normal"][:, None, None, :]
    flux = np.einsum("fqij,q,f->ij", outer, w, bf["area"])
    return sym(flux) if symmetrize else flux


def decompose(fld: BrokenField, check: bool = True, gg_tol: float = 1e-10) -> MeasureDecomposition:
    """Split the symmetric distributional gradient into density, jump and
    Cantor parts, asserting the Gauss-Green identity against the boundary
    flux."""
    if fld.value_dim != fld.mesh.dim:
        raise ValueError("decompose needs value_dim == mesh.dim")
    vol = fld.mesh.cell_volume
    strains = fld.strain()
    ac = np.einsum("cij->ij", strains) * vol
    tv_ac = float(np.sum(fro(strains)) * vol)

    facets, pts, w, jumps = _all_jumps(fld, "gauss2")
    if jumps.shape[0]:
        so = _sym_outer(jumps, facets["normal"][:, None, :])
        jump_mat = np.einsum("fqij,q,f->ij", so, w, facets["area"])
        tv_jump = float(np.sum(fro(so) @ w * facets["area"]))
    else:
        jump_mat = np.zeros((fld.mesh.dim, fld.mesh.dim))
        tv_jump = 0.0

    cm = fld.cantor.mass if fld.cantor is not None else 0.0
    cantor_mat = np.array([[cm]]) if fld.cantor is not None else np.zeros_like(ac)

    flux = _boundary_flux_matrix(fld, symmetrize=True)
    gap = float(fro(ac + jump_mat + cantor_mat - flux))
    tv = tv_ac + tv_jump + abs(cm)
    out = MeasureDecomposition(ac, jump_mat, cm, tv, flux, gap)
    if check and gap > gg_tol * max(1.0, float(fro(flux))):
        raise InternalConsistencyError(
            f"Gauss-Green identity violated: gap {gap:.3e}")
    return out


# ---------------------------------------------------------------------------
# L1 norms and distances
# ---------------------------------------------------------------------------


def _l1_norm_1d(fld: BrokenField, shift: np.ndarray) -> float:
    # exact integral of |a + z (x - xc) - shift| per cell, plus Cantor via
    # fine midpoint sampling when present
    xc = fld.mesh.cell_centers[:, 0]
    h = fld.mesh.h[0]
    a = fld.a[:, 0] - shift[:, 0] if shift is not None else fld.a[:, 0]
    z = fld.Z[:, 0, 0]
    if fld.H is not None or fld.cantor is not None:
        k = 64
        offs = (np.arange(k) + 0.5) / k - 0.5
        pts = xc[:, None] + offs[None, :] * h
        cells = np.repeat(np.arange(fld.mesh.ncells), k)
        vals = fld.eval_at(pts.reshape(-1, 1), cells)[:, 0]
        if shift is not None:
            vals -= np.repeat(shift[:, 0], k)
        if fld.cantor is not None:
            lo, hi = fld.mesh.lo[0], fld.mesh.hi[0]
            vals += fld.cantor.value((pts.reshape(-1) - lo) / (hi - lo))
        return float(np.sum(np.abs(vals)) * h / k)
    v0 = a - z * h / 2.0
    v1 = a + z * h / 2.0
    same = v0 * v1 >= 0
    out = np.where(same, 0.5 * (np.abs(v0) + np.abs(v1)) * h,
                   0.5 * (v0**2 + v1**2) / np.maximum(np.abs(z), 1e-300))
    return float(np.sum(out))


_GL4 = np.polynomial.legendre.leggauss(4)


def _l1_norm_2d(fld: BrokenField, shift: Optional[np.ndarray]) -> float:
    nodes, wts = _GL4
    nodes = nodes / 2.0
    wts = wts / 2.0
    PX, PY = np.meshgrid(nodes, nodes, indexing="ij")
    WW = np.outer(wts, wts).ravel()
    offs = np.stack([PX.ravel(), PY.ravel()], axis=1)
    offs = offs * fld.mesh.h[None, :]
    offs = fld.mesh.to_physical(offs) if fld.mesh.rotation is not None else offs
    xc = fld.mesh.cell_centers
    total = 0.0
    pts = (xc[:, None, :] + offs[None, :, :]).reshape(-1, 2)
    cells = np.repeat(np.arange(fld.mesh.ncells), offs.shape[0])
    vals = fld.eval_at(pts, cells)
    if shift is not None:
        vals = vals - np.repeat(shift, offs.shape[0], axis=0)
    norms = np.sqrt(np.sum(vals**2, axis=1)).reshape(fld.mesh.ncells, -1)
    total = float(np.sum(norms @ WW) * fld.mesh.cell_volume)
    return total


def field_l1_norm(fld: BrokenField, shift: Optional[np.ndarray] = None) -> float:
    """L1 norm of the field (optionally minus a per-cell constant shift).

    Exact in 1D for affine data; 4x4 Gauss quadrature per cell in 2D.
    """
    if fld.mesh.dim == 1:
        return _l1_norm_1d(fld, shift)
    return _l1_norm_2d(fld, shift)


def field_l1_distance(f: BrokenField, g: BrokenField) -> float:
    """L1 distance of two broken fields on the same mesh (Cantor components
    evaluated exactly)."""
    if f.mesh is not g.mesh and (f.mesh.shape != g.mesh.shape or
                                 not np.allclose(f.mesh.lo, g.mesh.lo)):
        raise ValueError("fields must share a mesh")
    H = None
    if f.H is not None or g.H is not None:
        Hf = f.H if f.H is not None else 0.0
        Hg = g.H if g.H is not None else 0.0
        H = Hf - Hg if isinstance(Hf, np.ndarray) or isinstance(Hg, np.ndarray) else None
    cantor = None
    if f.cantor is not None or g.cantor is not None:
        mf = f.cantor.mass if f.cantor is not None else 0.0
        lf = f.cantor.level if f.cantor is not None else (g.cantor.level)
        mg = g.cantor.mass if g.cantor is not None else 0.0
        if f.cantor is not None and g.cantor is not None and f.cantor.level != g.cantor.level:
            raise ValueError("mismatched Cantor levels")
        if abs(mf - mg) > 0:
            cantor = CantorDescriptor(level=lf, mass=mf - mg)
    diff = BrokenField(f.mesh, f.a - g.a, f.Z - g.Z, H=H, cantor=cantor)
    return field_l1_norm(diff)


# ---------------------------------------------------------------------------
# Korn-Poincare diagnostic
# ---------------------------------------------------------------------------


@dataclass
class KornPoincareReport:
    lhs: float
    rhs_core: float
    ratio: float


def korn_poincare_gap(fld: BrokenField, tol: float = 1e-10) -> KornPoincareReport:
    """Compare ||u - mean u||_L1 against |Eu|(Omega) + |Du(Omega)|_F.

    Du(Omega) is computed through the boundary flux (divergence-theorem
    identity); a nonzero lhs with vanishing rhs is an internal-consistency
    failure.
    """
    dec = decompose(fld, check=False)
    mean = field_mean(fld)
    lhs = field_l1_norm(fld, shift=np.tile(mean, (fld.mesh.ncells, 1)))
    du_full = _boundary_flux_matrix(fld, symmetrize=False)
    rhs = dec.total_variation + float(fro(du_full))
    if rhs < tol and lhs > tol:
        raise InternalConsistencyError(
            "nonzero oscillation with vanishing deformation control")
    ratio = lhs / rhs if rhs > tol else 0.0
    return KornPoincareReport(lhs=lhs, rhs_core=rhs, ratio=ratio)


def field_mean(fld: BrokenField) -> np.ndarray:
    """Exact domain average of the field (Hessian and Cantor parts included)."""
    vals = fld.a
    if fld.H is not None:
        h = fld.mesh.h
        vals = vals + np.einsum("cijj,j->ci", fld.H, h * h) / 24.0
    m = np.mean(vals, axis=0)
    if fld.cantor is not None:
        # the middle-thirds staircase is symmetric: its average is mass / 2
        m = m + np.array([0.5 * fld.cantor.mass])
    return m


# ---------------------------------------------------------------------------
# restriction / refinement
# ---------------------------------------------------------------------------


def restrict(fld: BrokenField, lo, hi) -> BrokenField:
    """Restrict to an axis-aligned box whose edges lie on mesh lines.

    Facets on the cut belong to neither side, so energies are additive over
    complementary boxes up to cut-facet jumps.
    """
    mesh = fld.mesh
    if mesh.rotation is not None:
        raise ValueError("restrict supports unrotated meshes only")
    if fld.cantor is not None:
        raise ValueError("cannot restrict a field with a Cantor component")
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    i0, i1 = np.empty(mesh.dim, dtype=int), np.empty(mesh.dim, dtype=int)
    for ax in range(mesh.dim):
        f0 = (lo[ax] - mesh.lo[ax]) / mesh.h[ax]
        f1 = (hi[ax] - mesh.lo[ax]) / mesh.h[ax]
        if abs(f0 - round(f0)) > 1e-9 or abs(f1 - round(f1)) > 1e-9:
            raise ValueError("subdomain not aligned with mesh lines")
        i0[ax], i1[ax] = int(round(f0)), int(round(f1))
        if not (0 <= i0[ax] < i1[ax] <= mesh.shape[ax]):
            raise ValueError("subdomain outside mesh")
    shape = tuple(int(i1[ax] - i0[ax]) for ax in range(mesh.dim))
    sub = Mesh(dim=mesh.dim, shape=shape, lo=lo, hi=hi)
    if mesh.dim == 1:
        sel = np.arange(i0[0], i1[0])
    else:
        I, J = np.meshgrid(np.arange(i0[0], i1[0]), np.arange(i0[1], i1[1]), indexing="ij")
        sel = mesh.ravel_index((I.ravel(), J.ravel()))
    return BrokenField(sub, fld.a[sel], fld.Z[sel],
                       H=None if fld.H is None else fld.H[sel])


def refine(fld: BrokenField, factor: int) -> BrokenField:
    """Exact representation of the field on a mesh refined per axis."""
    mesh = fld.mesh
    fine = Mesh(dim=mesh.dim, shape=tuple(s * factor for s in mesh.shape),
                lo=mesh.lo, hi=mesh.hi, rotation=mesh.rotation, nu=mesh.nu,
                tangent_sign=mesh.tangent_sign)
    if mesh.dim == 1:
        parent = np.repeat(np.arange(mesh.ncells), factor)
        order = np.arange(fine.ncells)
    else:
        nx, ny = mesh.shape
        I, J = np.meshgrid(np.arange(nx * factor), np.arange(ny * factor), indexing="ij")
        parent = mesh.ravel_index((I.ravel() // factor, J.ravel() // factor))
        order = fine.ravel_index((I.ravel(), J.ravel()))
    a = np.empty((fine.ncells, fld.value_dim))
    Z = np.empty((fine.ncells, fld.value_dim, mesh.dim))
    H = None if fld.H is None else np.empty((fine.ncells,) + fld.H.shape[1:])
    xc_f = fine.cell_centers
    dx = xc_f[order] - mesh.cell_centers[parent]
    a[order] = fld.a[parent] + np.einsum("cij,cj->ci", fld.Z[parent], dx)
    Z[order] = fld.Z[parent]
    if fld.H is not None:
        a[order] += 0.5 * np.einsum("cijk,cj,ck->ci", fld.H[parent], dx, dx)
        Z[order] += np.einsum("cijk,ck->cij", fld.H[parent], dx)
        H[order] = fld.H[parent]
    return BrokenField(fine, a, Z, H=H, cantor=fld.cantor)


# ---------------------------------------------------------------------------
# JSON round trip
# ---------------------------------------------------------------------------


def field_to_json(fld: BrokenField) -> str:
    mesh = fld.mesh
    md = {"dim": mesh.dim,
          "n": list(mesh.shape) if len(set(mesh.shape)) > 1 else mesh.shape[0],
          "lo": mesh.lo.tolist(), "hi": mesh.hi.tolist()}
    if mesh.nu is not None:
        md["rotation"] = mesh.nu.tolist()
        md["tangent_sign"] = mesh.tangent_sign
    cells = []
    for c in range(mesh.ncells):
        entry = {"a": fld.a[c].tolist(), "Z": fld.Z[c].tolist()}
        if fld.H is not None:
            entry["H"] = fld.H[c].tolist()
        cells.append(entry)
    doc = {"mesh": md, "cells": cells}
    if fld.cantor is not None:
        doc["cantor"] = {"level": fld.cantor.level, "mass": fld.cantor.mass}
    return json.dumps(doc)


def field_from_json(text: str) -> BrokenField:
    doc = json.loads(text)
    md = doc["mesh"]
    n = md["n"]
    shape = tuple(n) if isinstance(n, list) else (n,) * md["dim"]
    rot = None
    nu = None
    ts = md.get("tangent_sign", 1)
    if "rotation" in md:
        nu = np.asarray(md["rotation"], dtype=float)
        rot = rotation_for_normal(nu, ts)
    mesh = Mesh(dim=md["dim"], shape=shape,
                lo=np.asarray(md.get("lo", [0.0] * md["dim"]), dtype=float),
                hi=np.asarray(md.get("hi", [1.0] * md["dim"]), dtype=float),
                rotation=rot, nu=nu, tangent_sign=ts)
    a = np.array([c["a"] for c in doc["cells"]], dtype=float)
    Z = np.array([c["Z"] for c in doc["cells"]], dtype=float)
    H = None
    if doc["cells"] and "H" in doc["cells"][0]:
        H = np.array([c["H"] for c in doc["cells"]], dtype=float)
    cantor = None
    if "cantor" in doc:
        cantor = CantorDescriptor(level=doc["cantor"]["level"], mass=doc["cantor"]["mass"])
    return BrokenField(mesh, a, Z, H=H, cantor=cantor)
