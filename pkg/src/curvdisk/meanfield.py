"""Mean-field functional setting on the zero-mean space X = {u : int u = 0}.

Normalization c(u), the fixed-point operator T, the functional J (reduced
problem h = 0), the center of mass P and its Riesz representatives, and the
conserved-quantity residuals used to validate solutions.

All Riesz identifications use the H^1 seminorm <u, v> = int grad u . grad v.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .diskgrid import Grid

TWO_PI = 2.0 * math.pi
FOUR_PI = 4.0 * math.pi
# sharp constant: bubbles attain equality in the Neumann Moser-Trudinger inequality
MT_SHARP_CONSTANT = 1.0 + math.log(math.pi / 2.0)
MASS_SLACK = 1e-8


class DegenerateMass(ValueError):
    """Both curvature integrals are nonpositive; c(u) is undefined."""


@dataclass(frozen=True)
class ProblemData:
    """Curvatures sampled on a grid; ``s`` records the active homotopy parameter."""

    grid: Grid
    K: np.ndarray
    h: np.ndarray
    s: float = 1.0

    def __post_init__(self):
        if self.K.shape != self.grid.shape:
            raise ValueError(f"K has shape {self.K.shape}, grid is {self.grid.shape}")
        if self.h.shape != (self.grid.n_theta,):
            raise ValueError(f"h has shape {self.h.shape}, expected ({self.grid.n_theta},)")
        if not (np.all(np.isfinite(self.K)) and np.all(np.isfinite(self.h))):
            raise ValueError("curvature data must be finite")

    @classmethod
    def from_functions(cls, grid: Grid, K, h=0.0, s: float = 1.0) -> "ProblemData":
        """Build from callables ``K(x1, x2, r, theta)``, ``h(theta)`` or constants."""
        Kv = grid.sample(K) if callable(K) else np.full(grid.shape, float(K))
        hv = grid.sample_boundary(h) if callable(h) else np.full(grid.n_theta, float(h))
        return cls(grid, Kv, hv, s)

    @property
    def reduced(self) -> bool:
        return not np.any(self.h)

    def with_s(self, s: float) -> "ProblemData":
        return replace(self, s=s)


@dataclass
class FunctionalValue:
    J: float
    grad_norm: float
    c_of_u: float


# ---- elementary functionals -----------------------------------------------------

def h1_inner(grid: Grid, u: np.ndarray, v: np.ndarray) -> float:
    ux, uy = grid.gradient(u)
    vx, vy = grid.gradient(v)
    return grid.integrate(ux * vx + uy * vy)


def h1_norm(grid: Grid, u: np.ndarray) -> float:
    return math.sqrt(max(h1_inner(grid, u, u), 0.0))


def dirichlet(grid: Grid, u: np.ndarray) -> float:
    return h1_inner(grid, u, u)


def log_integral_exp(grid: Grid, u: np.ndarray, weight=None) -> float:
    """log int weight * e^u, computed with a max shift."""
    m = float(np.max(u))
    e = np.exp(u - m)
    val = grid.integrate(e if weight is None else weight * e)
    if val <= 0:
        raise DegenerateMass(f"int K e^u = {val * math.exp(m):.3e} is not positive")
    return m + math.log(val)


def c_of(u: np.ndarray, data: ProblemData) -> float:
    """Unique c with e^c int K e^u + e^(c/2) int_bdry h e^(u/2) = 2 pi.

    Closed form for t = e^(c/2): A t^2 + B t - 2 pi = 0, t = 4 pi / (B + sqrt(B^2 + 8 pi A)).
    """
    grid = data.grid
    m = float(np.max(u))
    A = grid.integrate(data.K * np.exp(u - m))
    B = grid.integrate_boundary(data.h * np.exp((grid.trace(u) - m) / 2.0))
    if A <= 0 and B <= 0:
        raise DegenerateMass(f"int K e^u = {A:.3e} and int h e^(u/2) = {B:.3e} are not positive")
    disc = B * B + 8.0 * math.pi * A
    if disc < 0 or B + math.sqrt(disc) <= 0:
        raise DegenerateMass("normalization equation has no real solution")
    t = FOUR_PI / (B + math.sqrt(disc))
    return 2.0 * math.log(t) - m


def _sources(u: np.ndarray, c: float, data: ProblemData):
    grid = data.grid
    w = u + c
    ew = np.exp(w)
    ewb = np.exp(grid.trace(w) / 2.0)
    return ew, ewb


def apply_T(u: np.ndarray, data: ProblemData) -> np.ndarray:
    """T(u) = v: -Lap v = 2K e^(u+c), dv/dnu + 2 = 2h e^((u+c)/2), int v = 0."""
    grid = data.grid
    c = c_of(u, data)
    ew, ewb = _sources(u, c, data)
    return grid.solve_neumann(2.0 * data.K * ew, 2.0 * data.h * ewb - 2.0)


def dc_of(u: np.ndarray, data: ProblemData, v: np.ndarray, c: float | None = None) -> float:
    """Directional derivative of c(u) along v."""
    grid = data.grid
    if c is None:
        c = c_of(u, data)
    ew, ewb = _sources(u, c, data)
    num = grid.integrate(data.K * ew * v) + 0.5 * grid.integrate_boundary(data.h * ewb * grid.trace(v))
    den = grid.integrate(data.K * ew) + 0.5 * grid.integrate_boundary(data.h * ewb)
    return -num / den


class Linearization:
    """Frozen linearization of T at u; ``apply(v)`` returns DT(u) v."""

    def __init__(self, u: np.ndarray, data: ProblemData):
        self.grid = grid = data.grid
        self.data = data
        self.c = c_of(u, data)
        ew, ewb = _sources(u, self.c, data)
        self.kf = 2.0 * data.K * ew
        self.hg = data.h * ewb
        self.wk = grid.weights * data.K * ew
        self.wh = grid.angular_weight * 0.5 * self.hg
        self.den = float(self.wk.sum() + self.wh.sum())

    def dc(self, v: np.ndarray) -> float:
        return -(float(np.sum(self.wk * v)) + float(np.sum(self.wh * v[-1]))) / self.den

    def apply(self, v: np.ndarray) -> np.ndarray:
        z = v + self.dc(v)
        return self.grid.solve_neumann(self.kf * z, self.hg * z[-1], check=False)


def J_value(u: np.ndarray, data: ProblemData, with_grad: bool = True) -> FunctionalValue:
    """J(u) = 1/2 int |grad u|^2 + 2 int_bdry u - 4 pi log int K e^u  (h = 0)."""
    grid = data.grid
    J = 0.5 * dirichlet(grid, u) + 2.0 * grid.integrate_boundary(grid.trace(u)) \
        - FOUR_PI * log_integral_exp(grid, u, data.K)
    gnorm = h1_norm(grid, J_grad(u, data)) if with_grad else float("nan")
    return FunctionalValue(J=float(J), grad_norm=gnorm, c_of_u=c_of(u, data))


def J_grad(u: np.ndarray, data: ProblemData) -> np.ndarray:
    """Riesz representative of J'(u) in X, i.e. u - T(u)."""
    grid = data.grid
    return grid.zero_mean(u) - apply_T(u, data)


def reduced_T(u: np.ndarray, data: ProblemData) -> np.ndarray:
    """T for h = 0 written without c: -Lap v = 4 pi K e^u / int K e^u, dv/dnu = -2."""
    grid = data.grid
    lm = log_integral_exp(grid, u, data.K)
    f = FOUR_PI * data.K * np.exp(u - lm)
    return grid.solve_neumann(f, np.full(grid.n_theta, -2.0))


# ---- center of mass -------------------------------------------------------------

def center_of_mass(u: np.ndarray, grid: Grid) -> np.ndarray:
    e = np.exp(u - np.max(u))
    M = grid.integrate(e)
    return np.array([grid.integrate(e * grid.X1), grid.integrate(e * grid.X2)]) / M


def com_riesz(u: np.ndarray, grid: Grid, P: np.ndarray | None = None) -> np.ndarray:
    """Riesz representatives R_i of P_i'(u); returns array of shape (2, n_r, n_theta)."""
    e = np.exp(u - np.max(u))
    e = e / grid.integrate(e)
    if P is None:
        P = np.array([grid.integrate(e * grid.X1), grid.integrate(e * grid.X2)])
    f = np.stack([e * (grid.X1 - P[0]), e * (grid.X2 - P[1])])
    return grid.solve_neumann(f, np.zeros((2, grid.n_theta)), check=False)


# ---- residuals and identities ------------------------------------------------------

def pde_residuals(w: np.ndarray, data: ProblemData) -> tuple[float, float]:
    """Max-norm residuals of -Lap w = 2K e^w (all nodes) and dw/dnu + 2 = 2h e^(w/2)."""
    grid = data.grid
    pde = -grid.laplacian(w) - 2.0 * data.K * np.exp(w)
    bc = grid.normal_derivative(w) + 2.0 - 2.0 * data.h * np.exp(grid.trace(w) / 2.0)
    return float(np.max(np.abs(pde))), float(np.max(np.abs(bc)))


def gauss_bonnet_residual(w: np.ndarray, data: ProblemData) -> float:
    grid = data.grid
    return abs(grid.integrate(data.K * np.exp(w))
               + grid.integrate_boundary(data.h * np.exp(grid.trace(w) / 2.0)) - TWO_PI)


def conformal_fields(grid: Grid):
    """tau = i x, F = 1 - x^2 and G = i (1 + x^2), as Cartesian component pairs."""
    x1, x2 = grid.X1, grid.X2
    tau = (-x2, x1)
    F = (1.0 - x1**2 + x2**2, -2.0 * x1 * x2)
    G = (-2.0 * x1 * x2, 1.0 + x1**2 - x2**2)
    return tau, F, G


def kazdan_warner_residuals(w: np.ndarray, Keff: np.ndarray, grid: Grid,
                            h: np.ndarray | None = None) -> tuple[float, float, float]:
    """(kw_tau, kw_F, gauss_bonnet) for a candidate solution ``w``.

    kw_F is the Euclidean norm of the identities for F = 1 - x^2 and its
    rotation i(1 + x^2). With nonzero ``h`` the boundary flux term
    2 int_bdry e^(w/2) h'(theta) (V . tangent) is included.
    """
    ew = np.exp(w)
    k1, k2 = grid.gradient(Keff)
    tau, F, G = conformal_fields(grid)

    def interior(V):
        return grid.integrate(ew * (k1 * V[0] + k2 * V[1]))

    vals = [interior(tau), interior(F), interior(G)]
    gb = grid.integrate(Keff * ew) - TWO_PI
    if h is not None and np.any(h):
        th = grid.theta
        hp = grid.d_dtheta(np.broadcast_to(h, grid.shape))[-1]
        eb = np.exp(grid.trace(w) / 2.0)
        # tangential components of tau, F, G on the unit circle
        for i, vt in enumerate((np.ones_like(th), -2.0 * np.sin(th), 2.0 * np.cos(th))):
            vals[i] += 2.0 * grid.integrate_boundary(eb * hp * vt)
        gb += grid.integrate_boundary(h * eb)
    return float(abs(vals[0])), float(math.hypot(vals[1], vals[2])), float(abs(gb))


def mass_bounds_check(w: np.ndarray, Keff: np.ndarray, grid: Grid,
                      slack: float = MASS_SLACK) -> bool:
    """2 pi / max K <= int e^w <= 2 pi / min K, with relative slack."""
    kmin, kmax = float(np.min(Keff)), float(np.max(Keff))
    if kmin <= 0:
        raise ValueError("mass bounds need a positive curvature")
    mass = grid.integrate(np.exp(w))
    lo, hi = TWO_PI / kmax, TWO_PI / kmin
    return bool(lo * (1 - slack) - slack <= mass <= hi * (1 + slack) + slack)


def residual_report(w: np.ndarray, data: ProblemData) -> dict:
    """Diagnostics for a candidate solution of the (possibly full) problem."""
    grid = data.grid
    kt, kf, gb = kazdan_warner_residuals(w, data.K, grid, data.h)
    rep = {"kw_tau": kt, "kw_F": kf, "gauss_bonnet": gb,
           "mass": grid.integrate(np.exp(w))}
    if data.reduced and np.min(data.K) > 0:
        rep["mass_bounds_ok"] = mass_bounds_check(w, data.K, grid)
    else:
        rep["mass_bounds_ok"] = None
    return rep


def report_json(rep: dict) -> str:
    return json.dumps(rep)


def moser_trudinger_gap(u: np.ndarray, grid: Grid, constant: float = 0.0) -> float:
    """RHS - LHS of log int e^u <= (1/8pi) int|grad u|^2 + (1/2pi) int_bdry u + constant."""
    lhs = log_integral_exp(grid, u)
    rhs = dirichlet(grid, u) / (8.0 * math.pi) \
        + grid.integrate_boundary(grid.trace(u)) / TWO_PI + constant
    return rhs - lhs
