"""Relaxed-density cell problems on the unit cube.

``solve_bulk``      minimum of bulk+jump cost over fields with affine boundary
                    trace and prescribed mean strain (value of the relaxed
                    bulk density at one (A, B) pair);
``solve_surface``   minimum of the jump cost over strain-free fields with a
                    step boundary trace (supercritical exponent p > 1, the
                    bulk density is never evaluated);
``solve_surface_critical``
                    the p = 1 variant with scaled bulk cost and vanishing
                    mean strain, with an epsilon schedule standing in for the
                    scale limit.

Limits in the definitions are approximated by the max over the tail of the
declared schedule; the tail spread is reported so callers can judge
convergence.  Every accepted minimizer is checked against the Gauss-Green
jump-mass identity.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .densities import BulkDensity, SurfaceDensity, fro
from .fields import BrokenField, centered_cube, decompose
from .solvers import (
    AffineDatum,
    DiscreteProblem,
    SolverConfig,
    StepDatum,
    assemble_cell_problem,
    bulk_laminate_fields,
    solve_problem,
    surface_laminate_fields,
)

__all__ = [
    "CellProblemSpec",
    "CellProblemResult",
    "RecessionResult",
    "PropertyReport",
    "solve_cell_problem",
    "solve_bulk",
    "solve_bulk_batch",
    "solve_surface",
    "solve_surface_critical",
    "recession_of_bulk_density",
    "oracle_1d_H",
    "oracle_1d_h1",
    "verify_density_properties",
    "verify_bulk_density_properties",
    "verify_jump_density_properties",
]


# ---------------------------------------------------------------------------
# spec / result containers
# ---------------------------------------------------------------------------


@dataclass
class CellProblemSpec:
    kind: str                                   # bulk | surface_p | surface_1
    psi: SurfaceDensity
    p: float
    W: Optional[BulkDensity] = None
    x0: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    nu: Optional[np.ndarray] = None
    eps_schedule: tuple = ()
    n: int = 16
    config: SolverConfig = dc_field(default_factory=SolverConfig)
    boundary_mode: str = "trace"
    tangent_sign: int = 1

    def dim(self) -> int:
        if self.kind == "bulk":
            return np.atleast_2d(self.A).shape[0]
        return np.atleast_1d(self.lam).shape[0]

    def validate(self):
        if self.kind not in ("bulk", "surface_p", "surface_1"):
            raise ValueError(f"unknown cell problem kind {self.kind!r}")
        if self.eps_schedule and np.any(np.diff(self.eps_schedule) >= 0):
            raise ValueError("eps_schedule must be strictly decreasing")
        if self.kind == "bulk":
            if self.A is None or self.B is None or self.W is None:
                raise ValueError("bulk problems need W, A and B")
            A, B = np.atleast_2d(self.A), np.atleast_2d(self.B)
            if not (np.allclose(A, A.T) and np.allclose(B, B.T)):
                raise ValueError("A and B must be symmetric")
        else:
            if self.lam is None or self.nu is None:
                raise ValueError("surface problems need lam and nu")
            if abs(np.linalg.norm(np.atleast_1d(self.nu)) - 1.0) > 1e-9:
                raise ValueError("nu must be a unit vector")
            if self.kind == "surface_p" and self.p <= 1:
                raise ValueError("surface_p needs p > 1")
            if self.kind == "surface_1":
                if self.p != 1:
                    raise ValueError("surface_1 needs p = 1")
                if self.W is None:
                    raise ValueError("the critical surface problem needs W")
        return self


@dataclass
class CellProblemResult:
    value: float
    lower_bound: Optional[float]
    upper_bound: Optional[float]
    per_eps: list
    minimizer: Optional[BrokenField]
    converged: bool
    iterations: int
    meta: dict = dc_field(default_factory=dict)

    def check_bounds(self, tol: float = 1e-6) -> bool:
        ok = True
        if self.lower_bound is not None:
            ok &= self.value >= self.lower_bound - tol * (1.0 + abs(self.value))
        if self.upper_bound is not None:
            ok &= self.value <= self.upper_bound + tol * (1.0 + abs(self.value))
        return bool(ok)


def _resolve_backend(config: SolverConfig, W: Optional[BulkDensity],
                     psi: SurfaceDensity) -> str:
    if config.backend != "auto":
        return config.backend
    prox_ok = psi.prox_fn is not None and (W is None or (W.convex and W.prox_fn is not None))
    return "convex_primal_dual" if prox_ok else "multistart_subgradient"


def _finish(problem: DiscreteProblem, spec: CellProblemSpec, raw, idx: int,
            lower, upper, per_eps, meta) -> CellProblemResult:
    fld = problem.dofmap.field(raw.x[idx])
    dec = decompose(fld, check=False)
    meta = dict(meta)
    meta["gauss_green_gap"] = dec.gauss_green_gap
    meta["residual"] = float(raw.residuals[idx])
    if spec.kind == "bulk":
        A, B = np.atleast_2d(spec.A), np.atleast_2d(spec.B)
        meta["jump_mass_identity_gap"] = float(fro(dec.jump_part - (A - B)))
    return CellProblemResult(
        value=float(raw.value[idx]),
        lower_bound=lower,
        upper_bound=upper,
        per_eps=per_eps,
        minimizer=fld,
        converged=bool(raw.converged[idx]),
        iterations=raw.iterations,
        meta=meta,
    )


# ---------------------------------------------------------------------------
# bulk problems
# ---------------------------------------------------------------------------


def solve_bulk(spec: CellProblemSpec) -> CellProblemResult:
    """Relaxed bulk density value at (A, B); x-dependent densities run the
    declared epsilon schedule and report the tail max."""
    spec.validate()
    A = np.atleast_2d(np.asarray(spec.A, dtype=float))
    B = np.atleast_2d(np.asarray(spec.B, dtype=float))
    W, psi = spec.W, spec.psi
    dim = A.shape[0]
    mesh = centered_cube(dim, spec.n)
    x0 = np.zeros(dim) if spec.x0 is None else np.asarray(spec.x0, dtype=float)
    backend = _resolve_backend(spec.config, W, psi)
    cfg = SolverConfig(**{**spec.config.__dict__, "backend": backend})

    scheduled = W.x_dependent and len(spec.eps_schedule) > 0
    eps_batch = np.asarray(spec.eps_schedule, dtype=float) if scheduled else None
    problem = assemble_cell_problem(
        mesh, psi, AffineDatum(A), W=W.with_frozen_x(x0) if (W.x_dependent and not scheduled) else W,
        mean_strain=B, x0=x0, eps_batch=eps_batch,
        boundary_mode=spec.boundary_mode, rule=cfg.jump_quadrature, psi_x0=x0)
    laminates = bulk_laminate_fields(mesh, A, B)
    for f in laminates:
        problem.seeds.append(problem.dofmap.pack(f.a, f.Z))
    upper = None
    if problem.seeds:
        upper = float(min(problem.objective(s[None, :])[0] for s in problem.seeds))
    lower = None
    if W.convex and not W.x_dependent:
        lower = float(W(x0, B) + psi.c_psi * fro(A - B))

    raw = solve_problem(problem, cfg)
    meta = {"backend": backend, "n": spec.n}
    if scheduled:
        k = (len(spec.eps_schedule) + 1) // 2
        tail = raw.value[-k:]
        idx = len(spec.eps_schedule) - k + int(np.argmax(tail))
        per_eps = list(zip(spec.eps_schedule, raw.value.tolist()))
        meta["tail_spread"] = float(np.max(tail) - np.min(tail))
        res = _finish(problem, spec, raw, idx, lower, upper, per_eps, meta)
        res.value = float(np.max(tail))
        return res
    return _finish(problem, spec, raw, 0, lower, upper, [], meta)


def solve_bulk_batch(spec: CellProblemSpec, B_values) -> list:
    """Solve one A against many mean strains B, sharing the operator.

    Deterministic and much cheaper than independent solves; results are
    returned in the order of ``B_values``.
    """
    spec.validate()
    A = np.atleast_2d(np.asarray(spec.A, dtype=float))
    W, psi = spec.W, spec.psi
    if W.x_dependent:
        raise ValueError("batched solves support x-independent densities only")
    dim = A.shape[0]
    mesh = centered_cube(dim, spec.n)
    x0 = np.zeros(dim) if spec.x0 is None else np.asarray(spec.x0, dtype=float)
    backend = _resolve_backend(spec.config, W, psi)
    cfg = SolverConfig(**{**spec.config.__dict__, "backend": backend})
    Bs = [np.atleast_2d(np.asarray(b, dtype=float)) for b in B_values]
    nmean = dim * (dim + 1) // 2
    packed = np.zeros((len(Bs), nmean))
    for k, b in enumerate(Bs):
        packed[k] = [b[i, j] for i in range(dim) for j in range(i, dim)]
    problem = assemble_cell_problem(
        mesh, psi, AffineDatum(A), W=W, mean_strain=Bs[0], x0=x0,
        mean_batch=packed, boundary_mode=spec.boundary_mode,
        rule=cfg.jump_quadrature, psi_x0=x0)
    raw = solve_problem(problem, cfg)
    out = []
    for k, b in enumerate(Bs):
        lam_fields = bulk_laminate_fields(mesh, A, b)
        upper = None
        if lam_fields:
            seeds = [problem.dofmap.pack(f.a, f.Z) for f in lam_fields]
            upper = float(min(problem.objective(s[None, :])[0] for s in seeds))
        lower = float(W(x0, b) + psi.c_psi * fro(A - b)) if W.convex else None
        sub = CellProblemSpec(kind="bulk", psi=psi, p=spec.p, W=W, A=A, B=b,
                              n=spec.n, config=spec.config)
        out.append(_finish(problem, sub, raw, k, lower, upper, [],
                           {"backend": backend, "n": spec.n}))
    return out


# ---------------------------------------------------------------------------
# surface problems
# ---------------------------------------------------------------------------


def solve_surface(spec: CellProblemSpec) -> CellProblemResult:
    """Supercritical surface density: cellwise vanishing strain, step datum.

    The bulk density is decoupled and never evaluated here."""
    spec.validate()
    lam = np.atleast_1d(np.asarray(spec.lam, dtype=float))
    nu = np.atleast_1d(np.asarray(spec.nu, dtype=float))
    psi = spec.psi
    dim = lam.shape[0]
    mesh = centered_cube(dim, spec.n, nu=nu, tangent_sign=spec.tangent_sign)
    x0 = np.zeros(dim) if spec.x0 is None else np.asarray(spec.x0, dtype=float)
    backend = _resolve_backend(spec.config, None, psi)
    cfg = SolverConfig(**{**spec.config.__dict__, "backend": backend})
    problem = assemble_cell_problem(
        mesh, psi, StepDatum(lam, nu), W=None, mode="skew",
        boundary_mode=spec.boundary_mode, rule=cfg.jump_quadrature, psi_x0=x0)
    for f in surface_laminate_fields(mesh, lam, nu):
        problem.seeds.append(problem.dofmap.pack(f.a, f.Z))
    upper = float(min(problem.objective(s[None, :])[0] for s in problem.seeds))
    lower = float(psi.c_psi * np.linalg.norm(lam))
    raw = solve_problem(problem, cfg)
    meta = {"backend": backend, "n": spec.n, "bulk_evaluations": 0}
    return _finish(problem, spec, raw, 0, lower, upper, [], meta)


def solve_surface_critical(spec: CellProblemSpec) -> CellProblemResult:
    """Critical (p = 1) surface density: scaled bulk cost, vanishing mean
    strain, limit over the epsilon schedule via the tail max.

    When the bulk density declares its sublinear-growth limit, the
    strain-free recession form is solved as well and the discrepancy
    reported (the two must agree under the declared error band).
    """
    spec.validate()
    lam = np.atleast_1d(np.asarray(spec.lam, dtype=float))
    nu = np.atleast_1d(np.asarray(spec.nu, dtype=float))
    psi, W = spec.psi, spec.W
    if not spec.eps_schedule:
        raise ValueError("the critical surface problem needs an eps schedule")
    dim = lam.shape[0]
    mesh = centered_cube(dim, spec.n, nu=nu, tangent_sign=spec.tangent_sign)
    x0 = np.zeros(dim) if spec.x0 is None else np.asarray(spec.x0, dtype=float)
    backend = _resolve_backend(spec.config, W, psi)
    cfg = SolverConfig(**{**spec.config.__dict__, "backend": backend})
    eps_batch = np.asarray(spec.eps_schedule, dtype=float)
    problem = assemble_cell_problem(
        mesh, psi, StepDatum(lam, nu), W=W, mean_strain=np.zeros((dim, dim)),
        x0=x0, eps_batch=eps_batch, boundary_mode=spec.boundary_mode,
        rule=cfg.jump_quadrature, psi_x0=x0)
    for f in surface_laminate_fields(mesh, lam, nu):
        problem.seeds.append(problem.dofmap.pack(f.a, f.Z))
    raw = solve_problem(problem, cfg)
    k = (len(spec.eps_schedule) + 1) // 2
    tail = raw.value[-k:]
    idx = len(spec.eps_schedule) - k + int(np.argmax(tail))
    per_eps = list(zip(spec.eps_schedule, raw.value.tolist()))
    lower = float(psi.c_psi * np.linalg.norm(lam))
    upper = float(min(problem.objective(np.tile(s[None, :], (problem.batch, 1)))[idx]
                      for s in problem.seeds))
    meta = {"backend": backend, "n": spec.n,
            "tail_spread": float(np.max(tail) - np.min(tail))}
    if W.recession is not None:
        rec_problem = assemble_cell_problem(
            mesh, psi, StepDatum(lam, nu), W=W.recession,
            mean_strain=np.zeros((dim, dim)), x0=x0,
            boundary_mode=spec.boundary_mode, rule=cfg.jump_quadrature, psi_x0=x0)
        for f in surface_laminate_fields(mesh, lam, nu):
            rec_problem.seeds.append(rec_problem.dofmap.pack(f.a, f.Z))
        rec_raw = solve_problem(rec_problem, cfg)
        meta["recession_form_value"] = float(rec_raw.value[0])
        meta["recession_discrepancy"] = abs(float(np.max(tail)) - float(rec_raw.value[0]))
    res = _finish(problem, spec, raw, idx, lower, upper, per_eps, meta)
    res.value = float(np.max(tail))
    return res


def solve_cell_problem(spec: CellProblemSpec) -> CellProblemResult:
    spec.validate()
    if spec.kind == "bulk":
        return solve_bulk(spec)
    if spec.kind == "surface_p":
        return solve_surface(spec)
    return solve_surface_critical(spec)


# ---------------------------------------------------------------------------
# recession of the solved bulk density
# ---------------------------------------------------------------------------


@dataclass
class RecessionResult:
    estimate: float
    tail_spread: float
    per_t: list
    value_at_zero: float
    diverging: bool


def recession_of_bulk_density(W: BulkDensity, psi: SurfaceDensity, p: float,
                              A: np.ndarray, t_schedule, n: int = 32,
                              config: Optional[SolverConfig] = None,
                              x0: Optional[np.ndarray] = None) -> RecessionResult:
    """Tail-max of (value(tA, 0) - value(0, 0)) / t over the t-schedule.

    All t-solves share one operator (only the boundary right-hand side
    scales), so the whole schedule runs as a single batch.
    """
    t = np.asarray(list(t_schedule), dtype=float)
    if t.size < 3 or np.any(np.diff(t) <= 0):
        raise ValueError("t_schedule must be increasing with >= 3 entries")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    dim = A.shape[0]
    config = config or SolverConfig()
    mesh = centered_cube(dim, n)
    x0 = np.zeros(dim) if x0 is None else np.asarray(x0, dtype=float)
    backend = _resolve_backend(config, W, psi)
    cfg = SolverConfig(**{**config.__dict__, "backend": backend})
    scales = np.concatenate([[0.0], t])
    problem = assemble_cell_problem(
        mesh, psi, AffineDatum(A), W=W, mean_strain=np.zeros((dim, dim)),
        x0=x0, datum_scale_batch=scales, rule=cfg.jump_quadrature, psi_x0=x0)
    raw = solve_problem(problem, cfg)
    H0 = float(raw.value[0])
    ratios = (raw.value[1:] - H0) / t
    k = (t.size + 1) // 2
    tail = ratios[-k:]
    estimate = float(np.max(tail))
    spread = float(np.max(tail) - np.min(tail))
    increasing = bool(np.all(np.diff(tail) >= -1e-12))
    diverging = increasing and spread > 0.5 * max(abs(estimate), 1e-12)
    return RecessionResult(estimate=estimate, tail_spread=spread,
                           per_t=list(zip(t.tolist(), ratios.tolist())),
                           value_at_zero=H0, diverging=diverging)


# ---------------------------------------------------------------------------
# 1D brute-force oracles
# ---------------------------------------------------------------------------


def _bulk_profile_min(W: BulkDensity, mean: float, grid: np.ndarray,
                      eps: Optional[float] = None, x0=None) -> float:
    """Exhaustive minimum of the slope cost over piecewise-constant profiles
    with the given mean.

    Profiles with up to three slope values reduce to two-value profiles: the
    fractions enter linearly and the constraint set's vertices have at most
    two active values, so pairs are exhaustive.
    """
    x0 = np.zeros(1) if x0 is None else x0

    def cost(s):
        A = np.asarray(s, dtype=float).reshape(-1, 1, 1)
        if eps is None:
            return np.asarray(W(np.broadcast_to(x0, (A.shape[0], 1)), A), dtype=float)
        return eps * np.asarray(
            W(np.broadcast_to(x0, (A.shape[0], 1)), A / eps), dtype=float)

    best = float(cost([mean])[0])
    g = np.unique(np.concatenate([grid, [mean]]))
    c = cost(g)
    lo_idx = np.where(g < mean)[0]
    hi_idx = np.where(g > mean)[0]
    if lo_idx.size and hi_idx.size:
        s1 = g[lo_idx][:, None]
        s2 = g[hi_idx][None, :]
        th = (s2 - mean) / (s2 - s1)
        mix = th * c[lo_idx][:, None] + (1.0 - th) * c[hi_idx][None, :]
        best = min(best, float(np.min(mix)))
    return best


def _jump_split_min(psi: SurfaceDensity, total: float, k_max: int,
                    grid: np.ndarray, x0=None) -> float:
    """Exhaustive minimum of the jump cost over at most k_max jump heights
    summing to ``total``; all but the last height live on the grid."""
    x0 = np.zeros(1) if x0 is None else x0
    nu = np.ones(1)

    def cost(h):
        h = np.asarray(h, dtype=float).reshape(-1, 1)
        x = np.broadcast_to(x0, (h.shape[0], 1))
        n = np.broadcast_to(nu, (h.shape[0], 1))
        return np.asarray(psi(x, h, n), dtype=float)

    if abs(total) < 1e-15:
        best = 0.0
    else:
        best = float(cost([total])[0])
    gcost = cost(grid)
    for k in range(2, k_max + 1):
        for combo in itertools.product(range(grid.size), repeat=k - 1):
            s = sum(grid[i] for i in combo)
            rem = total - s
            c = sum(gcost[i] for i in combo) + float(cost([rem])[0])
            if c < best:
                best = c
    return best


def _default_grid(span: float, npts: int = 17) -> np.ndarray:
    span = max(span, 1.0)
    return np.linspace(-span, span, npts)


def oracle_1d_H(W: BulkDensity, psi: SurfaceDensity, A: float, B: float,
                k_max: int = 4, slope_grid=None, jump_grid=None,
                x0=None) -> float:
    """Brute-force value of the 1D bulk cell problem, independent of the
    solver path.

    Competitors: piecewise-constant slopes (pairs are exhaustive for the
    single mean constraint) with mean B, plus at most k_max jumps whose
    heights sum to the boundary gap A - B.
    """
    if k_max > 4:
        raise ValueError("k_max <= 4")
    A = float(np.asarray(A).reshape(-1)[0])
    B = float(np.asarray(B).reshape(-1)[0])
    sg = np.asarray(slope_grid) if slope_grid is not None else \
        _default_grid(abs(A) + abs(B) + 2.0, 25)
    jg = np.asarray(jump_grid) if jump_grid is not None else \
        _default_grid(abs(A - B) + 1.0, 17)
    bulk = _bulk_profile_min(W, B, sg, x0=x0)
    jump = _jump_split_min(psi, A - B, k_max, jg, x0=x0)
    return bulk + jump


def oracle_1d_h1(W: BulkDensity, psi: SurfaceDensity, lam: float,
                 eps_schedule, k_max: int = 4, slope_grid=None,
                 jump_grid=None, x0=None) -> float:
    """Brute-force tail-max for the 1D critical surface problem: slopes with
    vanishing mean at scaled cost, jumps carrying the full step height."""
    lam = float(np.asarray(lam).reshape(-1)[0])
    sg = np.asarray(slope_grid) if slope_grid is not None else \
        _default_grid(abs(lam) + 2.0, 25)
    jg = np.asarray(jump_grid) if jump_grid is not None else \
        _default_grid(abs(lam) + 1.0, 17)
    eps = list(eps_schedule)
    vals = []
    for e in eps:
        bulk = _bulk_profile_min(W, 0.0, sg, eps=e, x0=x0)
        jump = _jump_split_min(psi, lam, k_max, jg, x0=x0)
        vals.append(bulk + jump)
    k = (len(vals) + 1) // 2
    return float(np.max(vals[-k:]))


# ---------------------------------------------------------------------------
# density property verification
# ---------------------------------------------------------------------------


@dataclass
class PropertyReport:
    kind: str
    checks: dict          # name -> worst violation (positive = violated)
    fitted: dict          # fitted constants
    tol: float

    def ok(self) -> bool:
        return all(v <= self.tol for v in self.checks.values())

    def failures(self):
        return {k: v for k, v in self.checks.items() if v > self.tol}


def verify_bulk_density_properties(A_grid, B_grid, values, p: float,
                                   tol: float = 1e-3) -> PropertyReport:
    """Lipschitz-in-B modulus and the linear-in-A / p-power-in-B growth
    sandwich, with constants fitted from the solved table itself."""
    A_grid = np.asarray(A_grid, dtype=float)
    B_grid = np.asarray(B_grid, dtype=float)
    H = np.asarray(values, dtype=float)
    # (a) weighted Lipschitz modulus in B
    mod = 0.0
    for i in range(A_grid.size):
        for j in range(B_grid.size):
            for k in range(j + 1, B_grid.size):
                b1, b2 = B_grid[j], B_grid[k]
                den = abs(b1 - b2) * (1.0 + abs(b1) ** (p - 1) + abs(b2) ** (p - 1))
                mod = max(mod, abs(H[i, j] - H[i, k]) / den)
    # (b) growth sandwich constants
    AA, BB = np.meshgrid(A_grid, B_grid, indexing="ij")
    s = np.abs(AA) + np.abs(BB) ** p
    C_up = float(max(np.max(H / (1.0 + np.abs(AA) + np.abs(BB) ** p)), 1e-12))
    with np.errstate(divide="ignore"):
        roots = np.where(s > 0, (H + np.sqrt(H**2 + 4.0 * s)) / (2.0 * np.maximum(s, 1e-300)),
                         np.inf)
    c_low = float(min(np.min(roots), 1e6))
    viol_up = float(np.max(H - C_up * (1.0 + np.abs(AA) + np.abs(BB) ** p)))
    viol_low = float(np.max(c_low * s - 1.0 / c_low - H))
    checks = {
        "lipschitz_in_B_finite": 0.0 if np.isfinite(mod) else math.inf,
        "growth_upper": viol_up,
        "growth_lower": viol_low,
        "nonnegative": float(np.max(-H)),
    }
    fitted = {"lipschitz_in_B": float(mod), "c_lower": c_low, "C_upper": C_up}
    return PropertyReport(kind="bulk", checks=checks, fitted=fitted, tol=tol)


def verify_jump_density_properties(entries, p: float, tol: float = 1e-3) -> PropertyReport:
    """Structural properties of a solved surface-density table.

    entries: list of (lam, nu, value).  For p > 1 checks symmetry,
    1-homogeneity and subadditivity on all matching tuples; for p = 1
    symmetry plus fitted linear bounds.
    """
    ents = [(np.atleast_1d(np.asarray(l, dtype=float)),
             np.atleast_1d(np.asarray(n, dtype=float)), float(v))
            for l, n, v in entries]

    def find(lam, nu):
        for l, n, v in ents:
            if np.allclose(l, lam, atol=1e-12) and np.allclose(n, nu, atol=1e-12):
                return v
        return None

    sym_v = 0.0
    homog_v = 0.0
    subadd_v = 0.0
    have_homog = have_subadd = False
    for l, n, v in ents:
        w = find(-l, -n)
        if w is not None:
            sym_v = max(sym_v, abs(v - w))
        if p > 1:
            for t in (2.0, 3.0):
                w = find(t * l, n)
                if w is not None and np.linalg.norm(l) > 0:
                    have_homog = True
                    homog_v = max(homog_v, abs(w - t * v) / max(t * abs(v), 1.0))
    if p > 1:
        for (l1, n1, v1), (l2, n2, v2) in itertools.combinations(ents, 2):
            if np.allclose(n1, n2, atol=1e-12):
                w = find(l1 + l2, n1)
                if w is not None:
                    have_subadd = True
                    subadd_v = max(subadd_v, (w - v1 - v2) / max(abs(v1 + v2), 1.0))
    norms = np.array([np.linalg.norm(l) for l, _, _ in ents])
    vals = np.array([v for _, _, v in ents])
    pos = norms > 1e-12
    c_fit = float(np.min(vals[pos] / norms[pos])) if pos.any() else 0.0
    C_fit = float(np.max(vals[pos] / norms[pos])) if pos.any() else 0.0
    checks = {"symmetry": sym_v, "zero_at_zero": float(np.max(np.abs(vals[~pos]))) if (~pos).any() else 0.0}
    if p > 1:
        if have_homog:
            checks["homogeneity"] = homog_v
        if have_subadd:
            checks["subadditivity"] = subadd_v
    else:
        checks["linear_bounds_exist"] = 0.0 if (c_fit > 0 and np.isfinite(C_fit)) else math.inf
    fitted = {"c_lower": c_fit, "C_upper": C_fit}
    return PropertyReport(kind="jump", checks=checks, fitted=fitted, tol=tol)


def verify_density_properties(table, p: float, tol: float = 1e-3) -> PropertyReport:
    """Dispatcher: accepts a dict with keys (A, B, values) for bulk tables or
    (entries,) for jump tables."""
    if isinstance(table, dict):
        if "values" in table:
            return verify_bulk_density_properties(table["A"], table["B"],
                                                  table["values"], p, tol)
        return verify_jump_density_properties(table["entries"], p, tol)
    raise TypeError("table must be a dict with either (A,B,values) or entries")
