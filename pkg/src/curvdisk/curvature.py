"""Geometric preprocessing for the existence criterion.

Harmonic extension H of the boundary curvature h, the field
Phi = H + sqrt(H^2 + K), and the Brouwer degree of planar vector fields
computed as a winding number along a circle.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .diskgrid import Grid

EPS_NONVANISH = 1e-8
DISC_CLAMP = 1e-12
MAX_DEPTH = 12
FALLBACK_RADII = (1.0, 0.999, 0.99)


class NegativeDiscriminant(ValueError):
    pass


class HypothesisViolation(UserWarning):
    pass


class VanishingOnBoundary(ValueError):
    def __init__(self, message, min_norm):
        super().__init__(message)
        self.min_norm = min_norm


class RefinementExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class PhiField:
    H: np.ndarray
    K: np.ndarray
    phi: np.ndarray
    grad_phi: tuple


@dataclass
class DegreeReport:
    degree: int
    min_boundary_grad_norm: float
    n_samples_final: int
    refinement_depth: int
    circle_radius: float = 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("circle_radius")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def harmonic_extend(h: np.ndarray, grid: Grid) -> np.ndarray:
    return grid.harmonic_extend(h)


def check_sign_hypotheses(K: np.ndarray, h: np.ndarray, tol: float = DISC_CLAMP) -> bool:
    """``K >= 0, h > 0`` or ``K > 0, h >= 0`` on the sampled nodes."""
    kmin, hmin = float(np.min(K)), float(np.min(h))
    return (kmin >= -tol and hmin > 0) or (kmin > 0 and hmin >= -tol)


def build_phi(K: np.ndarray, H: np.ndarray, grid: Grid) -> PhiField:
    disc = H * H + K
    worst = float(disc.min())
    if worst < -DISC_CLAMP:
        j, k = np.unravel_index(np.argmin(disc), disc.shape)
        raise NegativeDiscriminant(
            f"H^2 + K = {worst:.3e} < 0 at r={grid.r[j]:.4f}, theta={grid.theta[k]:.4f}")
    if not check_sign_hypotheses(K, grid.trace(H)):
        warnings.warn("curvatures violate the sign hypotheses (K>=0,h>0 or K>0,h>=0)",
                      HypothesisViolation, stacklevel=2)
    phi = H + np.sqrt(np.maximum(disc, 0.0))
    return PhiField(H=H, K=K, phi=phi, grad_phi=grid.gradient(phi))


def phi_from_curvatures(K: np.ndarray, h: np.ndarray, grid: Grid) -> PhiField:
    return build_phi(K, harmonic_extend(h, grid), grid)


def _wrap(d):
    # wrap to (-pi, pi]
    return np.pi - np.mod(np.pi - d, 2.0 * np.pi)


def winding_number(field, n0: int = 64, max_depth: int = MAX_DEPTH,
                   eps: float = EPS_NONVANISH) -> DegreeReport:
    """Winding number of t -> field(t) around 0 for t in [0, 2 pi).

    ``field`` maps an array of angles to a pair of component arrays. Intervals
    whose wrapped angle increment exceeds pi/2 are bisected, up to ``max_depth``
    levels.
    """
    ts = 2.0 * np.pi * np.arange(n0 + 1) / n0
    v1, v2 = field(ts[:-1])
    v1 = np.append(v1, v1[0])
    v2 = np.append(v2, v2[0])
    alpha = np.arctan2(v2, v1)
    norms = np.hypot(v1, v2)
    total = 0.0
    depth_used = 0
    n_samples = n0
    # stack of (t_left, t_right, alpha_left, alpha_right, depth)
    stack = [(ts[i], ts[i + 1], alpha[i], alpha[i + 1], 0) for i in range(n0)][::-1]
    min_norm = float(norms.min())
    while stack:
        tl, tr, al, ar, depth = stack.pop()
        d = _wrap(ar - al)
        if abs(d) <= np.pi / 2:
            total += d
            continue
        if depth >= max_depth:
            raise RefinementExhausted(
                f"angle increment {d:.3f} > pi/2 after {max_depth} refinements near t={tl:.6f}")
        tm = 0.5 * (tl + tr)
        m1, m2 = field(np.array([tm]))
        nm = float(np.hypot(m1[0], m2[0]))
        min_norm = min(min_norm, nm)
        n_samples += 1
        am = float(np.arctan2(m2[0], m1[0]))
        depth_used = max(depth_used, depth + 1)
        if nm <= eps:
            break
        stack.append((tm, tr, am, ar, depth + 1))
        stack.append((tl, tm, al, am, depth + 1))
    if min_norm <= eps:
        raise VanishingOnBoundary(
            f"vector field nearly vanishes on the circle (min |V| = {min_norm:.3e})", min_norm)
    degree = int(round(total / (2.0 * np.pi)))
    if abs(total - 2.0 * np.pi * degree) > 1e-9:
        raise RuntimeError(f"angle sum {total} is not a multiple of 2 pi")
    return DegreeReport(degree, min_norm, n_samples, depth_used)


def brouwer_degree(V, grid: Grid | None = None, circle_radius: float = 1.0,
                   n0: int | None = None) -> DegreeReport:
    """Degree of a planar vector field on the disk of radius ``circle_radius``.

    ``V`` is either a pair of disk fields on ``grid`` (evaluated off-grid by
    spectral interpolation) or a callable ``V(x1, x2) -> (v1, v2)``.
    """
    if callable(V):
        def field(ts):
            return V(circle_radius * np.cos(ts), circle_radius * np.sin(ts))
        n0 = n0 or 64
    else:
        if grid is None:
            raise ValueError("grid is required for sampled fields")
        V1, V2 = V

        def field(ts):
            return grid.interpolate(V1, circle_radius, ts), grid.interpolate(V2, circle_radius, ts)
        n0 = n0 or grid.n_theta
    rep = winding_number(field, n0=n0)
    rep.circle_radius = circle_radius
    return rep


def degree_sweep(V, grid: Grid | None = None, radii=FALLBACK_RADII) -> list[dict]:
    """Degree at several radii; failures are recorded rather than raised."""
    out = []
    for rad in radii:
        try:
            rep = brouwer_degree(V, grid, circle_radius=rad)
            out.append({"radius": rad, "degree": rep.degree,
                        "min_grad_norm": rep.min_boundary_grad_norm})
        except (VanishingOnBoundary, RefinementExhausted) as exc:
            out.append({"radius": rad, "degree": None, "error": str(exc)})
    return out
