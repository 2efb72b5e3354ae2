"""Discrete minimization engine for cell problems on broken fields.

The unknowns are per-cell offsets and gradients.  Boundary data and the
mean-strain condition are linear equalities, handled by exact projection onto
the affine feasible set; bulk and jump costs are both dualized, so the
primal-dual iteration only ever projects.  Every checked iterate is feasible,
hence its objective is a valid value of the discrete problem; the reported
value is the best one seen.

Backends: ``convex_primal_dual`` (default for convex densities with a prox),
``multistart_subgradient`` (projected subgradient with restarts), and
``laminate_ansatz`` (structured enumeration; also provides upper bounds and
seeds for the other two).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .densities import BulkDensity, SurfaceDensity, fro, sym
from .fields import BrokenField, Mesh

__all__ = [
    "SolverConfig",
    "DofMap",
    "AffineDatum",
    "StepDatum",
    "DiscreteProblem",
    "RawSolution",
    "assemble_cell_problem",
    "solve_problem",
    "bulk_laminate_fields",
    "surface_laminate_fields",
]


@dataclass
class SolverConfig:
    backend: str = "auto"        # auto | convex_primal_dual | multistart_subgradient | laminate_ansatz
    max_iters: int = 60000
    tolerance: float = 1e-7
    restarts: int = 4
    step_rule: str = "decaying"
    seed: int = 0
    check_every: int = 200
    warm_start: str = "zero"
    jump_quadrature: str = "gauss2"


# ---------------------------------------------------------------------------
# unknown layout
# ---------------------------------------------------------------------------

_SKEW_GEN_2D = np.array([[0.0, -1.0], [1.0, 0.0]])


class DofMap:
    """Layout of the optimization vector: offsets first, then gradient dofs.

    mode 'full' carries all N*N gradient entries per cell; mode 'skew'
    carries only the rotation dof (cellwise vanishing strain, the
    supercritical surface-problem class)."""

    def __init__(self, mesh: Mesh, mode: str = "full"):
        if mode not in ("full", "skew"):
            raise ValueError(f"unknown dof mode {mode!r}")
        self.mesh = mesh
        self.mode = mode
        N = mesh.dim
        self.zdim = N * N if mode == "full" else (N * (N - 1)) // 2
        self.ndofs = mesh.ncells * (N + self.zdim)
        self._na = mesh.ncells * N

    def unpack(self, x: np.ndarray):
        """x (..., ndofs) -> a (..., nc, N), Z (..., nc, N, N)."""
        nc, N = self.mesh.ncells, self.mesh.dim
        a = x[..., : self._na].reshape(x.shape[:-1] + (nc, N))
        if self.mode == "full":
            Z = x[..., self._na:].reshape(x.shape[:-1] + (nc, N, N))
        elif self.zdim == 0:
            Z = np.zeros(x.shape[:-1] + (nc, N, N))
        else:
            om = x[..., self._na:].reshape(x.shape[:-1] + (nc,))
            Z = om[..., None, None] * _SKEW_GEN_2D
        return a, Z

    def pack(self, a: np.ndarray, Z: np.ndarray) -> np.ndarray:
        nc, N = self.mesh.ncells, self.mesh.dim
        parts = [np.asarray(a, dtype=float).reshape(a.shape[:-2] + (nc * N,))]
        if self.mode == "full":
            parts.append(np.asarray(Z, dtype=float).reshape(Z.shape[:-3] + (nc * N * N,)))
        elif self.zdim == 1:
            parts.append(0.5 * (Z[..., 1, 0] - Z[..., 0, 1]))
        return np.concatenate(parts, axis=-1)

    # dof indices of cell data, used by the assemblers
    def a_index(self, cell: int, i: int) -> int:
        return cell * self.mesh.dim + i

    def z_indices(self, cell: int):
        """list of (dof, (i, j), coefficient) for Z_c[i, j] contributions."""
        N = self.mesh.dim
        out = []
        if self.mode == "full":
            base = self._na + cell * N * N
            for i in range(N):
                for j in range(N):
                    out.append((base + i * N + j, (i, j), 1.0))
        elif self.zdim == 1:
            d = self._na + cell
            out.append((d, (0, 1), -1.0))
            out.append((d, (1, 0), 1.0))
        return out

    def field(self, x: np.ndarray) -> BrokenField:
        a, Z = self.unpack(x)
        return BrokenField(self.mesh, a, Z)


# ---------------------------------------------------------------------------
# boundary data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineDatum:
    """u(x) = A x on the boundary."""

    A: np.ndarray

    def value(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) @ np.asarray(self.A).T

    def grad(self, x: np.ndarray) -> np.ndarray:
        A = np.asarray(self.A)
        return np.broadcast_to(A, np.asarray(x).shape[:-1] + A.shape)


@dataclass(frozen=True)
class StepDatum:
    """u(x) = lam where x . nu > 0 and 0 elsewhere."""

    lam: np.ndarray
    nu: np.ndarray

    def value(self, x: np.ndarray) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        side = np.asarray(x) @ np.asarray(self.nu) > 0
        return np.where(side[..., None], lam, 0.0)

    def grad(self, x: np.ndarray) -> np.ndarray:
        m = np.atleast_1d(np.asarray(self.lam)).shape[0]
        n = np.asarray(self.nu).shape[0]
        return np.zeros(np.asarray(x).shape[:-1] + (m, n))

    def check_mesh(self, mesh: Mesh):
        bf = mesh.boundary_facets()
        half = 0.5 * bf["area"][:, None]
        e1 = (bf["midpoint"] - half * bf["tangent"]) @ np.asarray(self.nu)
        e2 = (bf["midpoint"] + half * bf["tangent"]) @ np.asarray(self.nu)
        tol = 1e-12
        if np.any((e1 > tol) & (e2 < -tol)) or np.any((e1 < -tol) & (e2 > tol)):
            raise ValueError("step datum straddles a boundary facet; use an even cell count")


# ---------------------------------------------------------------------------
# affine equality constraints
# ---------------------------------------------------------------------------


class AffineProjector:
    """Euclidean projection onto {x : J x = b}; b may be batched (B, m)."""

    def __init__(self, J: sp.spmatrix, b: np.ndarray):
        self.J = J.tocsr()
        self.b = np.atleast_2d(np.asarray(b, dtype=float))
        self._cho = None
        if self.J.shape[0] == 0:
            return
        G = (self.J @ self.J.T).toarray()
        # jitter guards rank-deficient (redundant) constraint rows
        for jit in (0.0, 1e-12, 1e-9):
            try:
                self._cho = scipy.linalg.cho_factor(G + jit * np.eye(G.shape[0]) * max(1.0, G.max()))
                break
            except scipy.linalg.LinAlgError:
                continue
        if self._cho is None:
            raise np.linalg.LinAlgError("constraint Gram matrix not factorizable")

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.J.shape[0] == 0:
            return x
        r = (self.J @ x.T).T - self.b
        lam = scipy.linalg.cho_solve(self._cho, r.T)
        return x - (self.J.T @ lam).T

    def residual(self, x: np.ndarray) -> float:
        if self.J.shape[0] == 0:
            return 0.0
        x = np.atleast_2d(x)
        return float(np.max(np.abs((self.J @ x.T).T - self.b)))


def build_constraints(dofmap: DofMap, datum, mean_strain: Optional[np.ndarray],
                      batch_mean: Optional[np.ndarray] = None,
                      batch_datum_scale: Optional[np.ndarray] = None):
    """Trace rows on boundary cells plus (optionally) mean-strain rows.

    Returns (J, b) with b shaped (B, m); batching varies the right-hand side
    only (datum scale and mean target), which is what the recession and
    epsilon schedules need.
    """
    mesh, N = dofmap.mesh, dofmap.mesh.dim
    rows, cols, vals, rhs = [], [], [], []
    xc = mesh.cell_centers
    bf = mesh.boundary_facets()
    r = 0
    if isinstance(datum, StepDatum):
        datum.check_mesh(mesh)
    for k in range(len(bf["cell"])):
        c = int(bf["cell"][k])
        xm = bf["midpoint"][k]
        dx = xm - xc[c]
        val = datum.value(xm)
        grad = datum.grad(xm)
        # value rows: a_c + Z_c dx = datum(xm)
        for i in range(N):
            rows.append(r)
            cols.append(dofmap.a_index(c, i))
            vals.append(1.0)
            rhs.append(val[i])
            for dof, (zi, zj), coef in dofmap.z_indices(c):
                if zi == i and abs(dx[zj]) > 0:
                    rows.append(r)
                    cols.append(dof)
                    vals.append(coef * dx[zj])
            r += 1
        # tangential derivative rows (2D): Z_c tau = grad tau
        if N == 2:
            tau = bf["tangent"][k]
            gt = grad @ tau
            for i in range(N):
                wrote = False
                for dof, (zi, zj), coef in dofmap.z_indices(c):
                    if zi == i and abs(tau[zj]) > 1e-15:
                        rows.append(r)
                        cols.append(dof)
                        vals.append(coef * tau[zj])
                        wrote = True
                if wrote:
                    rhs.append(gt[i])
                    r += 1
    n_trace = r
    if mean_strain is not None:
        if dofmap.mode != "full":
            raise ValueError("mean-strain constraint needs full gradient dofs")
        vol = mesh.cell_volume
        for i in range(N):
            for j in range(i, N):
                for c in range(mesh.ncells):
                    for dof, (zi, zj), coef in dofmap.z_indices(c):
                        if {(zi, zj)} <= {(i, j), (j, i)}:
                            w = 1.0 if i == j else 0.5
                            rows.append(r)
                            cols.append(dof)
                            vals.append(coef * w * vol)
                rhs.append(mean_strain[i, j])
                r += 1
    J = sp.coo_matrix((vals, (rows, cols)), shape=(r, dofmap.ndofs)).tocsr()
    b = np.asarray(rhs, dtype=float)
    if batch_datum_scale is None and batch_mean is None:
        return J, b[None, :]
    B = len(batch_datum_scale) if batch_datum_scale is not None else len(batch_mean)
    bb = np.tile(b, (B, 1))
    if batch_datum_scale is not None:
        bb[:, :n_trace] = b[None, :n_trace] * np.asarray(batch_datum_scale)[:, None]
    if batch_mean is not None:
        bm = np.asarray(batch_mean, dtype=float).reshape(B, -1)
        bb[:, n_trace:] = bm
    return J, bb


# ---------------------------------------------------------------------------
# dual blocks (bulk + jump costs, both dualized)
# ---------------------------------------------------------------------------


@dataclass
class DualBlock:
    kind: str                      # 'bulk' or 'jump'
    sl: slice
    shape: tuple                   # per-batch reshape, e.g. (nc, N, N) or (nq, m)
    weight: np.ndarray
    density: object
    nu: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = None
    eps: Optional[np.ndarray] = None      # (B,) scaling eps*W(./eps) when set
    x_pts: Optional[np.ndarray] = None    # spatial points, (nc, N) or (B, nc, N)

    def prox_conjugate(self, y: np.ndarray, sigma: float) -> np.ndarray:
        """Moreau step: y - sigma * prox_{f/sigma}(y/sigma), blockwise."""
        B = y.shape[0]
        yv = y.reshape((B,) + self.shape)
        v = yv / sigma
        if self.offset is not None:
            v = v - self.offset
        if self.kind == "bulk":
            W: BulkDensity = self.density
            if W.prox_fn is None:
                raise ValueError(f"density {W.name} has no prox; use the subgradient backend")
            t = np.broadcast_to(self.weight / sigma, v.shape[:-2])
            if self.eps is None:
                p = W.prox_fn(v, t, self.x_pts) if W.x_dependent else W.prox_fn(v, t)
            else:
                e = self.eps.reshape((B,) + (1,) * (v.ndim - 1))
                te = t / self.eps[:, None]
                if W.x_dependent:
                    p = e * W.prox_fn(v / e, te, self.x_pts)
                else:
                    p = e * W.prox_fn(v / e, te)
        else:
            psi: SurfaceDensity = self.density
            if psi.prox_fn is None:
                raise ValueError(f"density {psi.name} has no prox; use the subgradient backend")
            t = np.broadcast_to(self.weight / sigma, v.shape[:-1])
            p = psi.prox_fn(v, t, self.nu)
        if self.offset is not None:
            p = p + self.offset
        return (yv - sigma * p).reshape(B, -1)

    def energy(self, y_lin: np.ndarray) -> np.ndarray:
        """Objective contribution from the linear values K x (batched)."""
        B = y_lin.shape[0]
        v = y_lin.reshape((B,) + self.shape)
        if self.offset is not None:
            v = v - self.offset
        if self.kind == "bulk":
            W: BulkDensity = self.density
            if self.eps is None:
                vals = np.asarray(W(self.x_pts, v), dtype=float)
            else:
                e = self.eps.reshape((B,) + (1,) * (v.ndim - 1))
                vals = self.eps[:, None] * np.asarray(W(self.x_pts, v / e), dtype=float)
            return vals @ self.weight
        psi: SurfaceDensity = self.density
        vals = np.asarray(psi(self.x_pts, v, self.nu), dtype=float)
        return vals @ self.weight

    def subgradient(self, y_lin: np.ndarray) -> np.ndarray:
        B = y_lin.shape[0]
        v = y_lin.reshape((B,) + self.shape)
        if self.offset is not None:
            v = v - self.offset
        if self.kind == "bulk":
            W: BulkDensity = self.density
            if W.grad_fn is None:
                raise ValueError(f"density {W.name} has no gradient")
            if self.eps is None:
                g = np.asarray(W.grad_fn(self.x_pts, v), dtype=float)
            else:
                e = self.eps.reshape((-1,) + (1,) * (v.ndim - 1))
                g = np.asarray(W.grad_fn(self.x_pts, v / e), dtype=float)
            return (g * self.weight[:, None, None]).reshape(B, -1)
        psi: SurfaceDensity = self.density
        if psi.grad_fn is None:
            raise ValueError(f"density {psi.name} has no gradient")
        g = np.asarray(psi.grad_fn(self.x_pts, v, self.nu), dtype=float)
        return (g * self.weight[:, None]).reshape(B, -1)


# ---------------------------------------------------------------------------
# problem assembly
# ---------------------------------------------------------------------------


@dataclass
class DiscreteProblem:
    dofmap: DofMap
    K: sp.spmatrix
    KT: sp.spmatrix
    blocks: list
    projector: AffineProjector
    batch: int
    seeds: list = dc_field(default_factory=list)
    jump_block_index: Optional[int] = None

    def apply_K(self, x: np.ndarray) -> np.ndarray:
        return (self.K @ np.atleast_2d(x).T).T

    def apply_KT(self, y: np.ndarray) -> np.ndarray:
        return (self.KT @ np.atleast_2d(y).T).T

    def objective(self, x: np.ndarray) -> np.ndarray:
        y = self.apply_K(np.atleast_2d(x))
        out = np.zeros(y.shape[0])
        for b in self.blocks:
            out += b.energy(y[:, b.sl])
        return out

    def jump_mass(self, x: np.ndarray) -> np.ndarray:
        if self.jump_block_index is None:
            return np.zeros(np.atleast_2d(x).shape[0])
        b = self.blocks[self.jump_block_index]
        y = self.apply_K(np.atleast_2d(x))[:, b.sl]
        v = y.reshape((y.shape[0],) + b.shape)
        return np.sqrt(np.sum(v**2, axis=-1)) @ b.weight


def _jump_rows(dofmap: DofMap, rule: str):
    """COO entries mapping dofs to jump values at interior quadrature points."""
    mesh = dofmap.mesh
    facets = mesh.interior_facets()
    pts, w = mesh.facet_quadrature(facets, rule)
    nf, q = pts.shape[0], pts.shape[1]
    N = mesh.dim
    xc = mesh.cell_centers
    rows, cols, vals = [], [], []
    r = 0
    nu_rows = np.zeros((nf * q, N))
    w_rows = np.zeros(nf * q)
    x_rows = np.zeros((nf * q, N))
    for f in range(nf):
        cm, cp = facets["cells"][f]
        for k in range(q):
            x = pts[f, k]
            for i in range(N):
                row = r + i
                rows.append(row), cols.append(dofmap.a_index(int(cp), i)), vals.append(1.0)
                rows.append(row), cols.append(dofmap.a_index(int(cm), i)), vals.append(-1.0)
                for dof, (zi, zj), coef in dofmap.z_indices(int(cp)):
                    if zi == i:
                        rows.append(row), cols.append(dof), vals.append(coef * (x - xc[cp])[zj])
                for dof, (zi, zj), coef in dofmap.z_indices(int(cm)):
                    if zi == i:
                        rows.append(row), cols.append(dof), vals.append(-coef * (x - xc[cm])[zj])
            idx = r // N
            nu_rows[idx] = facets["normal"][f]
            w_rows[idx] = w[k] * facets["area"][f]
            x_rows[idx] = x
            r += N
    return rows, cols, vals, nu_rows, w_rows, x_rows, r


def _boundary_penalty_rows(dofmap: DofMap, datum, rule: str, start_row: int):
    mesh = dofmap.mesh
    bf = mesh.boundary_facets()
    pts, w = mesh.facet_quadrature(bf, rule)
    nb, q = pts.shape[0], pts.shape[1]
    N = mesh.dim
    xc = mesh.cell_centers
    rows, cols, vals = [], [], []
    r = start_row
    nu_rows, w_rows, x_rows = np.zeros((nb * q, N)), np.zeros(nb * q), np.zeros((nb * q, N))
    offs = np.zeros((nb * q, N))
    for f in range(nb):
        c = int(bf["cell"][f])
        for k in range(q):
            x = pts[f, k]
            for i in range(N):
                row = r + i
                rows.append(row), cols.append(dofmap.a_index(c, i)), vals.append(1.0)
                for dof, (zi, zj), coef in dofmap.z_indices(c):
                    if zi == i:
                        rows.append(row), cols.append(dof), vals.append(coef * (x - xc[c])[zj])
            idx = (r - start_row) // N
            nu_rows[idx] = bf["normal"][f]
            w_rows[idx] = w[k] * bf["area"][f]
            x_rows[idx] = x
            offs[idx] = datum.value(x)
            r += N
    return rows, cols, vals, nu_rows, w_rows, x_rows, offs, r


def assemble_cell_problem(
    mesh: Mesh,
    psi: SurfaceDensity,
    datum,
    W: Optional[BulkDensity] = None,
    mean_strain: Optional[np.ndarray] = None,
    mode: str = "full",
    x0: Optional[np.ndarray] = None,
    eps_batch: Optional[np.ndarray] = None,
    mean_batch: Optional[np.ndarray] = None,
    datum_scale_batch: Optional[np.ndarray] = None,
    boundary_mode: str = "trace",
    rule: str = "gauss2",
    psi_x0: Optional[np.ndarray] = None,
) -> DiscreteProblem:
    """Build the discrete minimization problem for one cell-problem family.

    ``W=None`` omits the bulk cost entirely (the supercritical surface
    problem never evaluates it).  Batching, when present, varies eps, the
    mean-strain target, or the datum scale, sharing one operator.
    """
    dofmap = DofMap(mesh, mode)
    N = mesh.dim
    rows, cols, vals, nu_j, w_j, x_j, nrows_jump = _jump_rows(dofmap, rule)
    blocks = []
    jump_block_index = None
    r = nrows_jump
    if nrows_jump:
        blocks.append(DualBlock(
            kind="jump", sl=slice(0, nrows_jump), shape=(nrows_jump // N, N),
            weight=w_j, density=psi, nu=nu_j,
            x_pts=np.broadcast_to(psi_x0, x_j.shape) if psi_x0 is not None else x_j))
        jump_block_index = 0
    if boundary_mode == "penalty":
        br, bc, bv, nu_b, w_b, x_b, offs, r = _boundary_penalty_rows(dofmap, datum, rule, r)
        rows += br
        cols += bc
        vals += bv
        blocks.append(DualBlock(
            kind="jump", sl=slice(nrows_jump, r), shape=((r - nrows_jump) // N, N),
            weight=w_b, density=psi, nu=nu_b, offset=offs,
            x_pts=np.broadcast_to(psi_x0, x_b.shape) if psi_x0 is not None else x_b))
    if W is not None:
        if dofmap.mode != "full":
            raise ValueError("bulk cost needs full gradient dofs")
        start = r
        for c in range(mesh.ncells):
            for i in range(N):
                for j in range(N):
                    row = start + c * N * N + i * N + j
                    for dof, (zi, zj), coef in dofmap.z_indices(c):
                        if {(zi, zj)} <= {(i, j), (j, i)}:
                            w = 1.0 if i == j else 0.5
                            rows.append(row), cols.append(dof), vals.append(coef * w)
        r = start + mesh.ncells * N * N
        if x0 is None:
            x_pts = mesh.cell_centers
        elif eps_batch is not None:
            x_pts = np.asarray(x0)[None, None, :] + \
                np.asarray(eps_batch)[:, None, None] * mesh.cell_centers[None, :, :]
        else:
            x_pts = np.broadcast_to(np.asarray(x0), mesh.cell_centers.shape)
        blocks.append(DualBlock(
            kind="bulk", sl=slice(start, r), shape=(mesh.ncells, N, N),
            weight=np.full(mesh.ncells, mesh.cell_volume), density=W,
            eps=None if eps_batch is None else np.asarray(eps_batch, dtype=float),
            x_pts=x_pts))
    K = sp.coo_matrix((vals, (rows, cols)), shape=(r, dofmap.ndofs)).tocsr()
    if boundary_mode == "trace":
        J, b = build_constraints(dofmap, datum, mean_strain,
                                 batch_mean=mean_batch,
                                 batch_datum_scale=datum_scale_batch)
    else:
        if mean_strain is None:
            # no equality constraints: project onto everything (identity)
            J = sp.coo_matrix(([], ([], [])), shape=(0, dofmap.ndofs)).tocsr()
            b = np.zeros((1, 0))
        else:
            J, b = build_constraints(dofmap, datum, mean_strain,
                                     batch_mean=mean_batch,
                                     batch_datum_scale=datum_scale_batch)
            # drop trace rows, keep mean rows only
            nmean = N * (N + 1) // 2
            J = J[-nmean:, :]
            b = b[:, -nmean:]
    B = b.shape[0]
    if eps_batch is not None:
        B = max(B, len(eps_batch))
        if b.shape[0] == 1:
            b = np.tile(b, (B, 1))
    projector = AffineProjector(J, b)
    return DiscreteProblem(dofmap=dofmap, K=K, KT=K.T.tocsr(), blocks=blocks,
                           projector=projector, batch=B,
                           jump_block_index=jump_block_index)


# ---------------------------------------------------------------------------
# laminate ansatz constructions
# ---------------------------------------------------------------------------


def bulk_laminate_fields(mesh: Mesh, A: np.ndarray, B: np.ndarray):
    """Feasible fields: datum ring around an interior of adjusted strain.

    The boundary ring matches the affine datum exactly; interior cells carry
    the strain that restores the prescribed mean.  The resulting energy is a
    certified upper bound for the discrete minimum.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    N = mesh.dim
    xc = mesh.cell_centers
    if N == 1:
        n = mesh.shape[0]
        idx = np.arange(n)
        ring = (idx == 0) | (idx == n - 1)
    else:
        nx, ny = mesh.shape
        I, J = np.unravel_index(np.arange(mesh.ncells), mesh.shape)
        ring = (I == 0) | (I == nx - 1) | (J == 0) | (J == ny - 1)
    vol = mesh.cell_volume
    theta = ring.sum() * vol / mesh.volume
    fields = []
    if theta < 1.0:
        Bint = (B - theta * A) / (1.0 - theta)
        a = np.where(ring[:, None], xc @ A.T, xc @ Bint.T)
        Z = np.where(ring[:, None, None], A, Bint)
        fields.append(BrokenField(mesh, a, Z))
    if float(fro(A - B)) < 1e-14:
        fields.append(BrokenField(mesh, xc @ A.T,
                                  np.broadcast_to(A, (mesh.ncells, N, N)).copy()))
    return fields


def surface_laminate_fields(mesh: Mesh, lam: np.ndarray, nu: np.ndarray, k_max: int = 4):
    """Parallel-interface splits of the boundary step, boundary cells pinned
    to the datum."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    nu = np.asarray(nu, dtype=float)
    N = mesh.dim
    xc = mesh.cell_centers
    s = xc @ nu  # signed distance to the jump plane
    datum_vals = np.where((s > 0)[:, None], lam, 0.0)
    if N == 1:
        n = mesh.shape[0]
        idx = np.arange(n)
        pinned = (idx == 0) | (idx == n - 1)
    else:
        nx, ny = mesh.shape
        I, J = np.unravel_index(np.arange(mesh.ncells), mesh.shape)
        pinned = (I == 0) | (I == nx - 1) | (J == 0) | (J == ny - 1)
    fields = []
    for k in range(1, k_max + 1):
        # k parallel interfaces at equally spaced plane offsets around 0
        offsets = (np.arange(k) - (k - 1) / 2.0) * (2.0 / (k + 1)) * 0.5
        frac = np.clip(np.searchsorted(offsets, s, side="left") / k, 0.0, 1.0)
        a = frac[:, None] * lam[None, :]
        a[pinned] = datum_vals[pinned]
        fields.append(BrokenField(mesh, a, np.zeros((mesh.ncells, lam.size, N))))
    return fields


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------


@dataclass
class RawSolution:
    x: np.ndarray            # (B, ndofs) best feasible iterates
    value: np.ndarray        # (B,)
    converged: np.ndarray    # (B,) bool
    iterations: int
    residuals: np.ndarray    # (B,)


def _operator_norm(K: sp.spmatrix, iters: int = 80) -> float:
    # deterministic random start: a structured start vector can sit in the
    # null space of a pure difference operator and silently underestimate
    d = K.shape[1]
    v = np.random.default_rng(1234).normal(size=d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = K @ v
        v2 = K.T @ w
        nrm = np.linalg.norm(v2)
        if nrm < 1e-300:
            break
        lam = nrm
        v = v2 / nrm
    # upper-bound fallback keeps the steps safe even if the iteration stalls
    rows = np.sqrt(np.asarray(abs(K).sum(axis=1)).ravel().max() *
                   np.asarray(abs(K).sum(axis=0)).ravel().max())
    return max(math.sqrt(lam), 1e-12) if lam > 0 else max(float(rows), 1e-12)


def _initial_points(problem: DiscreteProblem, config: SolverConfig) -> np.ndarray:
    B, d = problem.batch, problem.dofmap.ndofs
    if config.warm_start == "laminate" and problem.seeds:
        x0 = np.tile(problem.seeds[0][None, :], (B, 1))
    else:
        x0 = np.zeros((B, d))
    return problem.projector.project(x0)


def solve_pdhg(problem: DiscreteProblem, config: SolverConfig) -> RawSolution:
    """Batched primal-dual iteration; every checked iterate is feasible and
    the best objective seen is returned."""
    L = _operator_norm(problem.K)
    tau = sigma = 0.95 / max(L, 1e-12)
    x = _initial_points(problem, config)
    B = x.shape[0]
    y = np.zeros((B, problem.K.shape[0]))
    xbar = x.copy()
    best_val = problem.objective(x)
    best_x = x.copy()
    best_mass = problem.jump_mass(x)
    converged = np.zeros(B, dtype=bool)
    res = np.full(B, np.inf)
    it = 0
    for it in range(1, config.max_iters + 1):
        y_prev = y
        x_prev = x
        y = y + sigma * problem.apply_K(xbar)
        for blk in problem.blocks:
            y[:, blk.sl] = blk.prox_conjugate(y[:, blk.sl], sigma)
        x = problem.projector.project(x_prev - tau * problem.apply_KT(y))
        xbar = 2.0 * x - x_prev
        if it % config.check_every == 0 or it == config.max_iters:
            dx = (x_prev - x) / tau - problem.apply_KT(y_prev - y)
            dy = (y_prev - y) / sigma - problem.apply_K(x_prev - x)
            scale_x = 1.0 + np.linalg.norm(x, axis=1)
            scale_y = 1.0 + np.linalg.norm(y, axis=1)
            res = (np.linalg.norm(dx, axis=1) / scale_x
                   + np.linalg.norm(dy, axis=1) / scale_y)
            val = problem.objective(x)
            mass = problem.jump_mass(x)
            tie = np.abs(val - best_val) <= config.tolerance * (1.0 + np.abs(best_val))
            better = (val < best_val) & ~tie | (tie & (mass < best_mass - 1e-12))
            if np.any(better):
                best_val = np.where(better, val, best_val)
                best_mass = np.where(better, mass, best_mass)
                best_x[better] = x[better]
            converged = res < config.tolerance
            if np.all(converged):
                break
    return RawSolution(x=best_x, value=best_val, converged=converged,
                       iterations=it, residuals=res)


def solve_subgradient(problem: DiscreteProblem, config: SolverConfig) -> RawSolution:
    """Projected subgradient with multistart; gradients come from the
    densities' grad_fn."""
    rng = np.random.default_rng(config.seed)
    B, d = problem.batch, problem.dofmap.ndofs
    starts = [np.zeros((B, d))]
    for s in problem.seeds:
        starts.append(np.tile(s[None, :], (B, 1)))
    while len(starts) < max(config.restarts, 1):
        base = starts[len(starts) % max(len(problem.seeds) + 1, 1)]
        starts.append(base + rng.normal(scale=0.5, size=(B, d)))
    best_val = np.full(B, np.inf)
    best_x = np.zeros((B, d))
    iters_per = max(200, config.max_iters // max(len(starts), 1))
    for x0 in starts[: max(config.restarts, 1)]:
        x = problem.projector.project(x0)
        val = problem.objective(x)
        imp = val < best_val
        best_val = np.where(imp, val, best_val)
        best_x[imp] = x[imp]
        step0 = 0.5 * (1.0 + np.linalg.norm(x, axis=1) / math.sqrt(d))
        for k in range(1, iters_per + 1):
            ylin = problem.apply_K(x)
            g = np.zeros_like(x)
            for blk in problem.blocks:
                gy = np.zeros_like(ylin)
                gy[:, blk.sl] = blk.subgradient(ylin[:, blk.sl])
                g += problem.apply_KT(gy)
            gn = np.linalg.norm(g, axis=1)
            step = step0 / (math.sqrt(k) * np.maximum(gn, 1e-12))
            x = problem.projector.project(x - step[:, None] * g)
            if k % 25 == 0 or k == iters_per:
                val = problem.objective(x)
                imp = val < best_val
                best_val = np.where(imp, val, best_val)
                best_x[imp] = x[imp]
    return RawSolution(x=best_x, value=best_val,
                       converged=np.ones(B, dtype=bool), iterations=config.max_iters,
                       residuals=np.zeros(B))


def solve_problem(problem: DiscreteProblem, config: SolverConfig) -> RawSolution:
    if config.backend in ("convex_primal_dual", "auto"):
        return solve_pdhg(problem, config)
    if config.backend == "multistart_subgradient":
        return solve_subgradient(problem, config)
    if config.backend == "laminate_ansatz":
        if not problem.seeds:
            raise ValueError("laminate backend needs ansatz seeds")
        B = problem.batch
        vals = np.stack([problem.objective(np.tile(s[None, :], (B, 1)))
                         for s in problem.seeds])
        pick = np.argmin(vals, axis=0)
        x = np.stack([problem.seeds[pick[b]] for b in range(B)])
        return RawSolution(x=x, value=vals[pick, np.arange(B)],
                           converged=np.ones(B, dtype=bool), iterations=0,
                           residuals=np.zeros(B))
    raise ValueError(f"unknown backend {config.backend!r}")
