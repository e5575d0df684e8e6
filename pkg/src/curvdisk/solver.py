"""Constructive solution pipeline.

* ``newton_polish``: Newton-Krylov on F(u) = u - T(u) in the zero-mean space.
* ``minimize_constrained``: augmented-Lagrangian minimization of J on the
  slice {P(u) = a}, returning the multipliers of the constraint.
* ``multiplier_field`` / ``solve_reduced``: zeros of a -> mu_s(a) give
  solutions of the reduced problem (h = 0).
* ``homotopy_h``: continuation K_s = sK + (1-s)Phi^2, h_s = sh up to s = 1.

Every linear solve is matrix-free GMRES; the Jacobians are the analytic
linearizations of T and of the center-of-mass Riesz map.
"""

from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import oracle
from .curvature import (RefinementExhausted, VanishingOnBoundary, brouwer_degree,
                        winding_number)
from .meanfield import (FOUR_PI, TWO_PI, Linearization, ProblemData, apply_T,
                        c_of, center_of_mass, h1_inner, h1_norm, log_integral_exp,
                        pde_residuals, residual_report)

log = logging.getLogger(__name__)

TOL_SOLUTION = 1e-8
TOL_KKT = 1e-7
TOL_CONSTRAINT = 1e-8
TOL_NEWTON = 1e-11
MAX_NEWTON = 50
RHO0 = 10.0
RHO_FACTOR = 10.0
MAX_OUTER = 5
MAX_INNER = 40
MIN_STEP = 1e-4
MAX_RADIUS = 0.95


class SolverError(RuntimeError):
    pass


class MaxIterations(SolverError):
    pass


class LineSearchFailure(SolverError):
    pass


class ConstraintInfeasible(SolverError):
    pass


class NewtonDivergence(SolverError):
    pass


class NoZeroFound(SolverError):
    def __init__(self, message, scan=None):
        super().__init__(message)
        self.scan = scan or []


class StepUnderflow(SolverError):
    def __init__(self, message, last_s, record=None):
        super().__init__(message)
        self.last_s = last_s
        self.record = record


@dataclass
class ConstrainedMin:
    a: np.ndarray
    u_a: np.ndarray
    mu_tilde: np.ndarray
    mu: np.ndarray
    J_value: float
    converged: bool
    iterations: int
    kkt_residual: float = float("nan")
    constraint_residual: float = float("nan")
    w_a: np.ndarray | None = None


@dataclass
class SolutionRecord:
    w: np.ndarray
    u: np.ndarray
    residual_pde: float
    residual_bc: float
    diagnostics: dict = field(default_factory=dict)
    homotopy_trace: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    newton_history: list = field(default_factory=list)
    a_star: np.ndarray | None = None
    mu_at_a_star: np.ndarray | None = None

    def report(self) -> dict:
        """JSON-ready solver report."""
        def vec(x):
            return None if x is None else [float(v) for v in x]
        return {
            "converged": bool(self.converged),
            "residual_pde": float(self.residual_pde),
            "residual_bc": float(self.residual_bc),
            "a_star": vec(self.a_star),
            "mu_at_a_star": vec(self.mu_at_a_star),
            "homotopy_trace": [[float(s), float(r)] for s, r in self.homotopy_trace],
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.report())


def _gmres(apply, rhs: np.ndarray, rtol: float, maxiter: int = 400) -> np.ndarray:
    shape = rhs.shape
    n = rhs.size
    op = LinearOperator((n, n), matvec=lambda x: apply(x.reshape(shape)).ravel(), dtype=float)
    x, _ = gmres(op, rhs.ravel(), rtol=rtol, atol=0.0, restart=80, maxiter=maxiter)
    return x.reshape(shape)


# ---- unconstrained Newton on u - T(u) ----------------------------------------------

def fixed_point_residual(u: np.ndarray, data: ProblemData) -> np.ndarray:
    return data.grid.zero_mean(u) - apply_T(u, data)


def newton_polish(u0: np.ndarray, data: ProblemData, tol: float = TOL_NEWTON,
                  max_iter: int = MAX_NEWTON, tol_solution: float = TOL_SOLUTION) -> SolutionRecord:
    """Damped Newton-Krylov for u = T(u) starting at ``u0``.

    Raises NewtonDivergence when the residual cannot be reduced or the
    iteration budget is exhausted before ``tol``; stagnation at roundoff level
    (below ``tol_solution``) counts as convergence.
    """
    grid = data.grid
    u = grid.zero_mean(np.asarray(u0, dtype=float))
    F = fixed_point_residual(u, data)
    fn = float(np.max(np.abs(F)))
    history = [fn]
    it = 0
    while fn > tol:
        if it >= max_iter:
            if fn <= tol_solution:
                break
            raise NewtonDivergence(f"Newton did not converge in {max_iter} iterations (|F| = {fn:.3e})")
        lin = Linearization(u, data)
        d = _gmres(lambda v: v - lin.apply(v), -F, rtol=min(1e-3, max(fn, 1e-12)))
        alpha, accepted = 1.0, False
        f2 = float(np.linalg.norm(F))
        while alpha >= 1e-6:
            try:
                un = grid.zero_mean(u + alpha * d)
                Fn = fixed_point_residual(un, data)
            except (ValueError, FloatingPointError, OverflowError):
                alpha *= 0.5
                continue
            if np.all(np.isfinite(Fn)) and np.linalg.norm(Fn) <= (1.0 - 1e-4 * alpha) * f2:
                accepted = True
                break
            alpha *= 0.5
        it += 1
        if not accepted:
            if fn <= tol_solution:
                break  # roundoff floor
            raise NewtonDivergence(f"line search failed at |F| = {fn:.3e}")
        u, F = un, Fn
        fn = float(np.max(np.abs(F)))
        history.append(fn)
    return _record(u, data, it, history, tol_solution)


def _record(u, data: ProblemData, iterations: int, history: list, tol_solution: float) -> SolutionRecord:
    w = u + c_of(u, data)
    rp, rb = pde_residuals(w, data)
    rec = SolutionRecord(w=w, u=u, residual_pde=rp, residual_bc=rb,
                         diagnostics=residual_report(w, data), iterations=iterations,
                         newton_history=history)
    rec.converged = rp <= tol_solution and rb <= tol_solution
    return rec


# ---- constrained minimization ------------------------------------------------------

class _Slice:
    """Quantities of J, P and their Riesz maps at a fixed u (reduced problem)."""

    def __init__(self, u, data: ProblemData):
        grid = data.grid
        self.grid, self.data, self.u = grid, data, u
        e = np.exp(u - np.max(u))
        self.e = e / grid.integrate(e)            # normalized density
        self.we = grid.weights * self.e
        self.P = np.array([np.sum(self.we * grid.X1), np.sum(self.we * grid.X2)])
        self.dx = np.stack([grid.X1 - self.P[0], grid.X2 - self.P[1]])
        self.R = grid.solve_neumann(self.e * self.dx, np.zeros((2, grid.n_theta)), check=False)
        self.T = apply_T(u, data)
        self.Jp = grid.zero_mean(u) - self.T     # Riesz representative of J'(u)
        self.lin = Linearization(u, data)

    def dP(self, v):
        """P'(u) v, which is also <R_i, v> in the H^1 seminorm."""
        return np.array([np.sum(self.we * self.dx[0] * v), np.sum(self.we * self.dx[1] * v)])

    def dR(self, v):
        ev = np.sum(self.we * v)
        dp = self.dP(v)
        f = self.e * (v - ev) * self.dx - self.e * dp[:, None, None]
        return self.grid.solve_neumann(f, np.zeros((2, self.grid.n_theta)), check=False)

    def gradient(self, lam_eff):
        return self.Jp - np.tensordot(lam_eff, self.R, axes=1)

    def hessian(self, lam_eff, rho):
        def apply(v):
            out = v - self.lin.apply(v) + rho * np.tensordot(self.dP(v), self.R, axes=1)
            if np.any(lam_eff):
                out = out - np.tensordot(lam_eff, self.dR(v), axes=1)
            return out
        return apply

    def multiplier_estimate(self):
        """Least-squares solution of J'(u) ~ lambda . P'(u) in H^1."""
        G = np.array([self.dP(self.R[0]), self.dP(self.R[1])])
        b = self.dP(self.Jp)
        return np.linalg.solve(G, b)


def J_reduced(u: np.ndarray, data: ProblemData) -> float:
    """J(u) for zero-mean u; the Dirichlet term is evaluated spectrally."""
    grid = data.grid
    gx, gy = grid.gradient(u)
    return 0.5 * grid.integrate(gx * gx + gy * gy) + 2.0 * grid.integrate_boundary(grid.trace(u)) \
        - FOUR_PI * log_integral_exp(grid, u, data.K)


def _lagrangian(u, data, a, lam, rho):
    P = center_of_mass(u, data.grid)
    dv = P - a
    return J_reduced(u, data) - lam @ dv + 0.5 * rho * dv @ dv


def _validate_reduced(a, data: ProblemData):
    a = np.asarray(a, dtype=float).reshape(2)
    if np.hypot(*a) > MAX_RADIUS + 1e-14:
        raise ConstraintInfeasible(f"|a| = {np.hypot(*a):.4f} exceeds {MAX_RADIUS}")
    if not data.reduced:
        raise ValueError("constrained minimization is defined for h = 0 only")
    if np.min(data.K) <= 0:
        raise ValueError("constrained minimization needs K > 0")
    return a


def minimize_constrained(a, data: ProblemData, u0: np.ndarray | None = None,
                         tol_kkt: float = TOL_KKT, tol_constraint: float = TOL_CONSTRAINT,
                         rho0: float = RHO0, max_outer: int = MAX_OUTER,
                         max_inner: int = MAX_INNER) -> ConstrainedMin:
    """Minimize J over {u zero-mean, P(u) = a} by an augmented Lagrangian.

    Inner problems are solved by Newton-Krylov with Armijo backtracking on the
    augmented Lagrangian; the outer loop updates lambda <- lambda - rho (P - a)
    and multiplies rho by 10. The returned ``mu_tilde`` satisfies
    J'(u_a) = mu_tilde . P'(u_a) and ``mu`` is its normalization
    mu_tilde / (2 int e^(w_a)).
    """
    a = _validate_reduced(a, data)
    grid = data.grid
    u = grid.zero_mean(oracle.phi_a(a, grid) if u0 is None else np.asarray(u0, float))
    sl = _Slice(u, data)
    lam = sl.multiplier_estimate()
    rho = rho0
    total = 0
    for _outer in range(max_outer):
        for _inner in range(max_inner):
            lam_eff = lam - rho * (sl.P - a)
            G = sl.gradient(lam_eff)
            gn = h1_norm(grid, G)
            if gn <= 0.1 * tol_kkt:
                break
            d = _gmres(sl.hessian(lam_eff, rho), -G, rtol=min(1e-3, max(gn, 1e-10)))
            slope = h1_inner(grid, G, d)
            if not slope < 0:
                d, slope = -G, -gn * gn
            L0 = _lagrangian(u, data, a, lam, rho)
            alpha, accepted = 1.0, False
            while alpha >= 1e-8:
                un = grid.zero_mean(u + alpha * d)
                try:
                    L1 = _lagrangian(un, data, a, lam, rho)
                except ValueError:
                    L1 = math.inf
                if L1 <= L0 + 1e-4 * alpha * slope:
                    accepted = True
                    break
                # near a stationary point L is flat to roundoff: accept a
                # full step that reduces the gradient instead
                if alpha == 1.0 and abs(L1 - L0) <= 1e-12 * (1.0 + abs(L0)):
                    sn = _Slice(un, data)
                    if h1_norm(grid, sn.gradient(lam - rho * (sn.P - a))) < gn:
                        accepted = True
                        break
                alpha *= 0.5
            if not accepted:
                raise LineSearchFailure(f"no descent at a = {a.tolist()} (|grad| = {gn:.3e})")
            u = un
            sl = _Slice(u, data)
            total += 1
        else:
            raise MaxIterations(f"inner iterations exhausted at a = {a.tolist()}")
        lam = lam - rho * (sl.P - a)
        if np.hypot(*(sl.P - a)) <= tol_constraint:
            break
        rho *= RHO_FACTOR
    cres = float(np.hypot(*(sl.P - a)))
    if cres > tol_constraint:
        raise ConstraintInfeasible(f"|P(u) - a| = {cres:.3e} after {max_outer} outer iterations")
    mu_tilde = lam
    kkt = h1_norm(grid, sl.gradient(mu_tilde))
    w_a = u + math.log(TWO_PI) - log_integral_exp(grid, u, data.K)
    mass = grid.integrate(np.exp(w_a))
    return ConstrainedMin(a=a, u_a=u, mu_tilde=mu_tilde, mu=mu_tilde / (2.0 * mass),
                          J_value=J_reduced(u, data), converged=kkt <= tol_kkt,
                          iterations=total, kkt_residual=kkt, constraint_residual=cres, w_a=w_a)


def lagrange_residual(cm: ConstrainedMin, data: ProblemData) -> tuple[float, float]:
    """Collocation residual of -Lap w = 2(K + mu.(x - a)) e^w, dw/dnu + 2 = 0."""
    grid = data.grid
    w = cm.w_a
    keff = data.K + cm.mu[0] * (grid.X1 - cm.a[0]) + cm.mu[1] * (grid.X2 - cm.a[1])
    pde = -grid.laplacian(w) - 2.0 * keff * np.exp(w)
    bc = grid.normal_derivative(w) + 2.0
    return float(np.max(np.abs(pde))), float(np.max(np.abs(bc)))


# ---- multiplier field and reduced problem --------------------------------------

def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CURVDISK_THREADS", "1")))
    except ValueError:
        return 1


def mu_at(a, data: ProblemData, **kw) -> dict:
    """mu_s(a) with a status string instead of an exception."""
    try:
        cm = minimize_constrained(a, data, **kw)
        status = "ok" if cm.converged else "kkt_not_met"
        return {"a": np.asarray(a, float), "mu": cm.mu, "status": status, "result": cm}
    except (SolverError, ValueError, np.linalg.LinAlgError) as exc:
        return {"a": np.asarray(a, float), "mu": np.array([np.nan, np.nan]),
                "status": type(exc).__name__, "result": None}


def evaluate_points(points, data: ProblemData, threads: int | None = None, **kw) -> list[dict]:
    """mu_s at each point, fanned out over CURVDISK_THREADS workers; order is preserved."""
    threads = threads or _threads()
    if threads == 1 or len(points) <= 1:
        return [mu_at(a, data, **kw) for a in points]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda a: mu_at(a, data, **kw), points))


def multiplier_field(data: ProblemData, radius: float, n_angles: int,
                     threads: int | None = None, **kw) -> list[dict]:
    if not 0 <= radius < 1:
        raise ValueError("radius must lie in [0, 1)")
    ang = 2.0 * np.pi * np.arange(n_angles) / n_angles
    pts = [np.array([radius * math.cos(t), radius * math.sin(t)]) for t in ang]
    return evaluate_points(pts, data, threads, **kw)


def field_winding(results: list[dict]) -> int:
    """Winding number of a -> -mu(a) over closed, angle-ordered samples."""
    mus = np.array([r["mu"] for r in results])
    if not np.all(np.isfinite(mus)):
        raise NoZeroFound("multiplier field has failed points on the circle")
    n = len(mus)

    def field(ts):
        idx = np.rint(ts * n / (2 * np.pi)).astype(int) % n
        return -mus[idx, 0], -mus[idx, 1]
    # samples are fixed: refinement cannot add information, so depth 0
    return winding_number(field, n0=n, max_depth=0, eps=0.0).degree


def reduced_data(data: ProblemData, s: float) -> ProblemData:
    """K_s = s K + (1 - s), h = 0."""
    return ProblemData(data.grid, s * data.K + (1.0 - s), np.zeros(data.grid.n_theta), s)


def scan_points(r_scan: float, n_rings: int = 4, n_angles: int = 12) -> list[np.ndarray]:
    pts = [np.zeros(2)]
    for k in range(1, n_rings + 1):
        rad = r_scan * k / n_rings
        for j in range(n_angles):
            t = 2.0 * np.pi * j / n_angles
            pts.append(np.array([rad * math.cos(t), rad * math.sin(t)]))
    return pts


def _cell_windings(scan, n_rings, n_angles):
    """Cells of the polar scan grid whose corner values of mu wind around 0."""
    mus = np.array([p["mu"] for p in scan])
    found = []
    for k in range(n_rings):
        for j in range(n_angles):
            jn = (j + 1) % n_angles
            if k == 0:
                ring = [0, 1 + j, 1 + jn]
            else:
                base_in, base_out = 1 + (k - 1) * n_angles, 1 + k * n_angles
                ring = [base_in + j, base_out + j, base_out + jn, base_in + jn]
            vals = mus[ring]
            if not np.all(np.isfinite(vals)):
                continue
            ang = np.arctan2(vals[:, 1], vals[:, 0])
            d = np.diff(np.append(ang, ang[0]))
            d = np.pi - np.mod(np.pi - d, 2 * np.pi)
            if abs(round(d.sum() / (2 * np.pi))) >= 1:
                found.append(np.mean([scan[i]["a"] for i in ring], axis=0))
    return found


def _newton_on_a(a0, data: ProblemData, tol_mu: float, max_iter: int = 30, fd: float = 1e-5, **kw):
    a = np.asarray(a0, float)
    pt = mu_at(a, data, **kw)
    if pt["result"] is None:
        return None
    for _ in range(max_iter):
        mu = pt["mu"]
        if np.hypot(*mu) <= tol_mu:
            return pt
        Jm = np.empty((2, 2))
        for i in range(2):
            e = np.zeros(2)
            e[i] = fd
            q = mu_at(a + e, data, u0=pt["result"].u_a, **kw)
            if q["result"] is None:
                return None
            Jm[:, i] = (q["mu"] - mu) / fd
        try:
            step = -np.linalg.solve(Jm, mu)
        except np.linalg.LinAlgError:
            return None
        alpha = 1.0
        while alpha > 1e-3:
            an = a + alpha * step
            if np.hypot(*an) < MAX_RADIUS:
                q = mu_at(an, data, u0=pt["result"].u_a, **kw)
                if q["result"] is not None and np.hypot(*q["mu"]) < np.hypot(*mu):
                    break
            alpha *= 0.5
        else:
            return None
        a, pt = an, q
    return pt if np.hypot(*pt["mu"]) <= 10 * tol_mu else None


def solve_reduced(data: ProblemData, s: float = 0.05, r_scan: float = 0.9,
                  n_rings: int = 4, n_angles: int = 12, tol_mu: float = 1e-10,
                  continue_to_one: bool = True, n_steps: int = 10,
                  tol_solution: float = TOL_SOLUTION, threads: int | None = None) -> SolutionRecord:
    """Solve -Lap w = 2K e^w, dw/dnu + 2 = 0 through the multiplier field.

    A zero a* of mu_s (for K_s = sK + 1 - s) is located on a polar scan of
    radius ``r_scan``, refined by Newton on a with a finite-difference Jacobian
    and polished; the solution is then continued in s up to 1 unless
    ``continue_to_one`` is false.
    """
    if not data.reduced:
        raise ValueError("solve_reduced expects h = 0")
    ds = reduced_data(data, s)
    r_scan = min(r_scan, MAX_RADIUS)
    scan = evaluate_points(scan_points(r_scan, n_rings, n_angles), ds, threads)
    norms = np.array([np.hypot(*p["mu"]) if p["result"] is not None else np.inf for p in scan])
    best = None
    if np.min(norms) <= tol_mu:
        best = scan[int(np.argmin(norms))]
    else:
        starts = _cell_windings(scan, n_rings, n_angles)
        starts.append(scan[int(np.argmin(norms))]["a"])
        for a0 in starts:
            best = _newton_on_a(a0, ds, tol_mu)
            if best is not None:
                break
    if best is None:
        raise NoZeroFound(f"no zero of mu_s found for |a| <= {r_scan} at s = {s}",
                          scan=[{"a": p["a"], "mu": p["mu"], "status": p["status"]} for p in scan])
    cm = best["result"]
    rec = newton_polish(cm.u_a, ds, tol_solution=tol_solution)
    trace = [(s, max(rec.residual_pde, rec.residual_bc))]
    if continue_to_one and s < 1.0:
        rec = _continue(lambda t: reduced_data(data, t), rec.u, s, 1.0, n_steps, trace, tol_solution)
    rec.homotopy_trace = trace
    rec.a_star = np.asarray(cm.a)
    rec.mu_at_a_star = np.asarray(cm.mu)
    rec.diagnostics = dict(rec.diagnostics, center_of_mass=center_of_mass(rec.w, data.grid).tolist(),
                           scan_min_mu=float(np.min(norms)), degree_grad_K=_degree_or_none(data))
    return rec


def _degree_or_none(data: ProblemData):
    try:
        return brouwer_degree(data.grid.gradient(data.K), data.grid).degree
    except (VanishingOnBoundary, RefinementExhausted):
        return None


def solve_full(data: ProblemData, phi: np.ndarray, s: float = 0.05, r_scan: float = 0.9,
               n_steps: int = 10, tol_solution: float = TOL_SOLUTION,
               threads: int | None = None) -> SolutionRecord:
    """Reduced problem for Phi^2 followed by the continuation to (K, h)."""
    red = ProblemData(data.grid, phi * phi, np.zeros(data.grid.n_theta))
    rr = solve_reduced(red, s=s, r_scan=r_scan, n_steps=n_steps,
                       tol_solution=tol_solution, threads=threads)
    rec = homotopy_h(data, rr, phi, n_steps=n_steps, tol_solution=tol_solution)
    rec.diagnostics = dict(rr.diagnostics, **residual_report(rec.w, data),
                           center_of_mass=center_of_mass(rec.w, data.grid).tolist())
    return rec


def _continue(make_data, u, s0: float, s1: float, n_steps: int, trace: list,
              tol_solution: float) -> SolutionRecord:
    """Natural-parameter continuation with step halving; returns the record at s1."""
    ds = (s1 - s0) / max(n_steps, 1)
    s = s0
    rec = None
    while s < s1 - 1e-15:
        step = min(ds, s1 - s)
        try:
            cand = newton_polish(u, make_data(s + step), tol_solution=tol_solution)
            if not cand.converged:
                raise NewtonDivergence("residual above tolerance")
        except (SolverError, ValueError) as exc:
            ds = 0.5 * step
            if ds < MIN_STEP:
                raise StepUnderflow(f"continuation stuck at s = {s:.6g}: {exc}", s, rec) from exc
            continue
        s += step
        u, rec = cand.u, cand
        trace.append((s, max(cand.residual_pde, cand.residual_bc)))
        ds = min(2.0 * ds, (s1 - s0) / max(n_steps, 1))
    if rec is None:
        rec = newton_polish(u, make_data(s1), tol_solution=tol_solution)
    return rec


def homotopy_h(data_full: ProblemData, reduced: SolutionRecord, phi: np.ndarray,
               n_steps: int = 10, tol_solution: float = TOL_SOLUTION) -> SolutionRecord:
    """Continue a solution for (Phi^2, 0) to (K, h) along K_s = sK + (1-s)Phi^2, h_s = sh."""
    grid = data_full.grid
    phi2 = phi * phi

    def make(s):
        return ProblemData(grid, s * data_full.K + (1.0 - s) * phi2, s * data_full.h, s)

    trace = [(0.0, max(reduced.residual_pde, reduced.residual_bc))]
    if data_full.reduced and np.allclose(phi2, data_full.K, rtol=1e-13, atol=1e-13):
        out = SolutionRecord(**{**reduced.__dict__})
        out.homotopy_trace = trace + [(1.0, trace[0][1])]
        return out
    rec = _continue(make, reduced.u, 0.0, 1.0, n_steps, trace, tol_solution)
    rec.homotopy_trace = trace
    rec.a_star, rec.mu_at_a_star = reduced.a_star, reduced.mu_at_a_star
    return rec
