"""Polar spectral discretization of the closed unit disk.

Fields are plain ``ndarray`` values of shape ``(n_r, n_theta)`` (disk fields)
or ``(n_theta,)`` (boundary fields). Radial nodes are Gauss-Radau points in
``t = r**2`` with the fixed node at ``t = 1``, so the last radial row is the
boundary circle and no node sits at the origin. Angular nodes are equispaced.

In the variable ``t`` the area element is ``r dr dtheta = dt dtheta / 2``, so
radial Legendre-Radau weights integrate smooth disk fields (polynomials in
``t`` times angular modes) with Gauss-type exactness. Each angular Fourier
mode ``m`` is represented as ``r**(m % 2) * g(t)`` with ``g`` a polynomial;
this keeps the parity of smooth fields and avoids dividing by ``r**|m|``.
"""

from __future__ import annotations

import csv
from functools import cached_property
from pathlib import Path

import numpy as np
from numpy.polynomial import legendre

TOL_COMPAT = 1e-8


class GridError(ValueError):
    pass


class CompatibilityError(ValueError):
    """Neumann data violate the integral compatibility condition."""


def radau_right(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Legendre-Gauss-Radau nodes/weights on [-1, 1] with the node x = 1 fixed."""
    if n == 1:
        return np.array([1.0]), np.array([2.0])
    c = np.zeros(n + 1)
    c[n - 1], c[n] = 1.0, -1.0
    x = np.sort(legendre.legroots(c).real)[:-1]
    dc = legendre.legder(c)
    for _ in range(3):
        x = x - legendre.legval(x, c) / legendre.legval(x, dc)
    pn1 = np.zeros(n)
    pn1[n - 1] = 1.0
    w = (1.0 + x) / (n**2 * legendre.legval(x, pn1) ** 2)
    x = np.append(x, 1.0)
    w = np.append(w, 2.0 / n**2)
    return x, w


def bary_diff_matrix(x: np.ndarray) -> np.ndarray:
    """First-derivative matrix of the polynomial interpolant on nodes ``x``."""
    n = len(x)
    scale = 4.0 / (x.max() - x.min())
    dx = (x[:, None] - x[None, :]) * scale
    np.fill_diagonal(dx, 1.0)
    lam = 1.0 / np.prod(dx, axis=1)
    np.fill_diagonal(dx, np.inf)
    D = (lam[None, :] / lam[:, None]) / (x[:, None] - x[None, :] + np.eye(n))
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


class Grid:
    """Polar collocation grid on the closed unit disk.

    ``n_r`` radial nodes (last one on r = 1) and ``n_theta`` equispaced angles.
    Immutable after construction; derived operators are cached lazily.
    """

    def __init__(self, n_r: int, n_theta: int):
        if int(n_r) != n_r or n_r < 4:
            raise GridError(f"n_r must be an integer >= 4, got {n_r}")
        if int(n_theta) != n_theta or n_theta < 8 or n_theta % 2:
            raise GridError(f"n_theta must be an even integer >= 8, got {n_theta}")
        self.n_r = int(n_r)
        self.n_theta = int(n_theta)
        x, w = radau_right(self.n_r)
        self.t = (x + 1.0) / 2.0
        self.t[-1] = 1.0
        self.r = np.sqrt(self.t)
        # weights for int_0^1 f r dr = (1/2) int_0^1 f dt
        self.radial_weights = w / 4.0
        self.theta = 2.0 * np.pi * np.arange(self.n_theta) / self.n_theta
        self.angular_weight = 2.0 * np.pi / self.n_theta
        self.weights = np.outer(self.radial_weights, np.full(self.n_theta, self.angular_weight))
        self.R, self.TH = np.meshgrid(self.r, self.theta, indexing="ij")
        self.X1 = self.R * np.cos(self.TH)
        self.X2 = self.R * np.sin(self.TH)
        self.modes = np.arange(self.n_theta // 2 + 1)
        for a in (self.t, self.r, self.radial_weights, self.theta, self.weights,
                  self.R, self.TH, self.X1, self.X2):
            a.flags.writeable = False

    def __repr__(self):
        return f"Grid(n_r={self.n_r}, n_theta={self.n_theta})"

    def __eq__(self, other):
        return isinstance(other, Grid) and (self.n_r, self.n_theta) == (other.n_r, other.n_theta)

    def __hash__(self):
        return hash((self.n_r, self.n_theta))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_r, self.n_theta)

    @property
    def size(self) -> int:
        return self.n_r * self.n_theta

    # ---- sampling -------------------------------------------------------

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(x1, x2, r, theta)`` on all nodes."""
        v = np.asarray(func(self.X1, self.X2, self.R, self.TH), dtype=float)
        return np.broadcast_to(v, self.shape).copy()

    def sample_boundary(self, func) -> np.ndarray:
        v = np.asarray(func(self.theta), dtype=float)
        return np.broadcast_to(v, (self.n_theta,)).copy()

    # ---- quadrature ------------------------------------------------------

    def integrate(self, f: np.ndarray) -> float:
        """Integral over the disk (fixed summation order, deterministic)."""
        return float(np.sum(self.weights * f))

    def integrate_boundary(self, g: np.ndarray) -> float:
        return float(np.sum(g) * self.angular_weight)

    def mean(self, f: np.ndarray) -> float:
        return self.integrate(f) / np.pi

    def zero_mean(self, f: np.ndarray) -> np.ndarray:
        return f - self.mean(f)

    # ---- radial operators ----------------------------------------------

    @cached_property
    def _Dt(self) -> np.ndarray:
        return bary_diff_matrix(self.t)

    @cached_property
    def _Dr(self) -> tuple[np.ndarray, np.ndarray]:
        """d/dr acting on mode samples, for even and odd parity."""
        Dt, t, r = self._Dt, self.t, self.r
        even = 2.0 * r[:, None] * Dt
        odd = (np.eye(self.n_r) + 2.0 * t[:, None] * Dt) / r[None, :]
        return even, odd

    def _radial_laplacian(self, m: int) -> np.ndarray:
        q = m % 2
        Dt, t, r = self._Dt, self.t, self.r
        core = 4.0 * t[:, None] * (Dt @ Dt) + 4.0 * (q + 1) * Dt + np.diag((q * q - m * m) / t)
        if q:
            core = r[:, None] * core / r[None, :]
        return core

    @cached_property
    def _laplacians(self) -> np.ndarray:
        return np.array([self._radial_laplacian(m) for m in self.modes])

    @cached_property
    def _dr_stack(self) -> np.ndarray:
        even, odd = self._Dr
        return np.array([odd if m % 2 else even for m in self.modes])

    # ---- Fourier helpers --------------------------------------------------

    def _fft(self, f):
        return np.fft.rfft(f, axis=-1)

    def _ifft(self, F):
        return np.fft.irfft(F, n=self.n_theta, axis=-1)

    def _per_mode(self, mats: np.ndarray, F: np.ndarray) -> np.ndarray:
        # F: (..., n_r, n_modes) -> apply mats[m] along radial axis
        return np.einsum("mij,...jm->...im", mats, F)

    # ---- differential operators ---------------------------------------------

    def d_dr(self, f: np.ndarray) -> np.ndarray:
        return self._ifft(self._per_mode(self._dr_stack, self._fft(f)))

    def d_dtheta(self, f: np.ndarray) -> np.ndarray:
        F = self._fft(f)
        ik = 1j * self.modes.astype(float)
        ik[-1] = 0.0  # Nyquist
        return self._ifft(F * ik)

    def gradient(self, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Cartesian gradient (d/dx1, d/dx2)."""
        fr = self.d_dr(f)
        ft = self.d_dtheta(f) / self.R
        c, s = np.cos(self.TH), np.sin(self.TH)
        return c * fr - s * ft, s * fr + c * ft

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self._ifft(self._per_mode(self._laplacians, self._fft(f)))

    def trace(self, f: np.ndarray) -> np.ndarray:
        return np.array(f[..., -1, :], copy=True)

    def normal_derivative(self, f: np.ndarray) -> np.ndarray:
        F = self._fft(f)
        D = self._dr_stack[:, -1, :]  # (n_modes, n_r)
        return self._ifft(np.einsum("mj,...jm->...m", D, F))

    @cached_property
    def _bary_weights(self) -> np.ndarray:
        dx = (self.t[:, None] - self.t[None, :]) * 4.0
        np.fill_diagonal(dx, 1.0)
        return 1.0 / np.prod(dx, axis=1)

    def interpolate(self, f: np.ndarray, r: float, theta) -> np.ndarray:
        """Spectral interpolant of ``f`` at radius ``r`` (scalar) and angles ``theta``."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        F = self._fft(f) / self.n_theta
        t0 = float(r) ** 2
        q = self.modes % 2
        G = F / (self.r[:, None] ** q[None, :])
        diff = t0 - self.t
        hit = np.nonzero(np.abs(diff) < 1e-15)[0]
        if hit.size:
            g = G[hit[0]]
        else:
            c = self._bary_weights / diff
            g = (c @ G) / c.sum()
        coef = g * float(r) ** q
        mult = np.full(len(self.modes), 2.0)
        mult[0] = 1.0
        mult[-1] = 1.0
        phase = np.exp(1j * np.outer(theta, self.modes))
        return (phase @ (mult * coef)).real

    def harmonic_extend(self, h: np.ndarray) -> np.ndarray:
        """Harmonic function with boundary values ``h`` (Fourier r**|m| lift)."""
        Hm = self._fft(np.asarray(h, dtype=float))
        lift = self.r[:, None] ** self.modes[None, :]
        H = self._ifft(lift * Hm[..., None, :])
        H[..., -1, :] = h  # the lift is the identity at r = 1; keep the data bit-exact
        return H

    # ---- Neumann Poisson solver ----------------------------------------------

    @cached_property
    def _solve_mats(self) -> np.ndarray:
        """Per-mode inverses mapping [f at interior nodes, g] to v."""
        n = self.n_r
        out = np.empty((len(self.modes), n, n))
        for m in self.modes:
            A = np.empty((n, n))
            A[:-1] = -self._radial_laplacian(m)[:-1]
            A[-1] = self._dr_stack[m][-1]
            if m == 0:
                # bordered system: constant-source slack + zero-mean row
                B = np.zeros((n + 1, n + 1))
                B[:n, :n] = A
                B[: n - 1, n] = 1.0
                B[n, :n] = self.radial_weights
                out[m] = np.linalg.inv(B)[:n, :n]
            else:
                out[m] = np.linalg.inv(A)
        return out

    def compatibility_defect(self, f: np.ndarray, g: np.ndarray) -> float:
        return self.integrate(f) + self.integrate_boundary(g)

    def solve_neumann(self, f: np.ndarray, g: np.ndarray, check: bool = True,
                      tol_compat: float = TOL_COMPAT) -> np.ndarray:
        """Zero-mean solution of -Lap v = f in the disk, dv/dnu = g on the circle.

        Accepts stacked inputs with leading batch axes.
        """
        f = np.asarray(f, dtype=float)
        g = np.asarray(g, dtype=float)
        if check:
            if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
                raise ValueError("non-finite Poisson data")
            if f.ndim == 2:
                defect = abs(self.compatibility_defect(f, g))
                scale = 1.0 + np.max(np.abs(f)) + np.max(np.abs(g))
                if defect > tol_compat * scale:
                    raise CompatibilityError(
                        f"int f + int g = {defect:.3e} exceeds {tol_compat:g} * {scale:.3g}")
        rhs = self._fft(f)
        rhs[..., -1, :] = self._fft(g)
        v = self._ifft(self._per_mode(self._solve_mats, rhs))
        # bordered mode-0 solve already gives zero quadrature mean
        return v

    @cached_property
    def poisson_matrices(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense solver matrices (S_f, S_g): v.ravel() = S_f f.ravel() + S_g g."""
        N, nt = self.size, self.n_theta
        eye = np.eye(N).reshape(N, self.n_r, nt)
        Sf = self.solve_neumann(eye, np.zeros((N, nt)), check=False).reshape(N, N).T
        Sg = self.solve_neumann(np.zeros((nt, self.n_r, nt)), np.eye(nt), check=False)
        return np.ascontiguousarray(Sf), np.ascontiguousarray(Sg.reshape(nt, N).T)


def build_grid(n_r: int, n_theta: int) -> Grid:
    return Grid(n_r, n_theta)


# ---- CSV serialization -------------------------------------------------------

def _g17(x: float) -> str:
    return f"{x:.17g}"


def write_disk_csv(path, grid: Grid, values: np.ndarray, header: str = "value") -> None:
    values = np.asarray(values, dtype=float)
    with open(path, "w", newline="") as fh:
        fh.write(f"r,theta,{header}\n")
        for j in range(grid.n_r):
            for k in range(grid.n_theta):
                fh.write(f"{_g17(grid.r[j])},{_g17(grid.theta[k])},{_g17(values[j, k])}\n")


def write_disk_csv_multi(path, grid: Grid, columns: dict[str, np.ndarray]) -> None:
    names = list(columns)
    with open(path, "w", newline="") as fh:
        fh.write("r,theta," + ",".join(names) + "\n")
        for j in range(grid.n_r):
            for k in range(grid.n_theta):
                vals = ",".join(_g17(columns[nm][j, k]) for nm in names)
                fh.write(f"{_g17(grid.r[j])},{_g17(grid.theta[k])},{vals}\n")


def read_disk_csv(path, grid: Grid | None = None) -> tuple[Grid, np.ndarray]:
    """Read a ``r,theta,value`` file written by :func:`write_disk_csv`.

    The grid is inferred from the distinct r and theta values unless given.
    """
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:3] != ["r", "theta", "value"]:
        raise ValueError(f"{path}: expected header 'r,theta,value'")
    data = np.array([[float(c) for c in row[:3]] for row in rows[1:]])
    rs = np.unique(data[:, 0])
    ths = np.unique(data[:, 1])
    if grid is None:
        grid = Grid(len(rs), len(ths))
    if data.shape[0] != grid.size:
        raise ValueError(f"{path}: {data.shape[0]} rows, grid needs {grid.size}")
    if not (np.allclose(data[:, 0], np.repeat(grid.r, grid.n_theta), atol=1e-13)
            and np.allclose(data[:, 1], np.tile(grid.theta, grid.n_r), atol=1e-13)):
        raise ValueError(f"{path}: node coordinates do not match {grid!r}")
    return grid, data[:, 2].reshape(grid.shape)


def write_boundary_csv(path, grid: Grid, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("theta,value\n")
        for k in range(grid.n_theta):
            fh.write(f"{_g17(grid.theta[k])},{_g17(values[k])}\n")


def read_boundary_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:2] != ["theta", "value"]:
        raise ValueError(f"{path}: expected header 'theta,value'")
    return np.array([float(row[1]) for row in rows[1:]])
