"""Command-line interface.

    curvdisk {phi,degree,solve,scan,oracle,verify} --config PATH [--out DIR]

Exit codes
----------
0   success (``degree``: existence criterion met, degree != 0)
1   ``oracle``/``verify``: some residual above tolerance
2   configuration or I/O error
3   domain error (negative discriminant, invalid expression value,
    vanishing gradient on the circle, |a| >= 1)
4   ``solve``: no zero of the multiplier field for the reduced problem
5   ``solve``: continuation failed
6   ``solve``: pipeline finished but the solution is not within tolerance
10  ``degree``: degree is 0
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import oracle
from .curvature import (HypothesisViolation, NegativeDiscriminant, RefinementExhausted,
                        VanishingOnBoundary, brouwer_degree, degree_sweep,
                        phi_from_curvatures)
from .diskgrid import (Grid, GridError, read_disk_csv, write_disk_csv,
                       write_disk_csv_multi)
from .expr import ExprDomainError, ExprSyntaxError, parse
from .meanfield import DegenerateMass, ProblemData, pde_residuals, residual_report
from .solver import (NoZeroFound, SolverError, StepUnderflow, evaluate_points,
                     reduced_data, scan_points, solve_full)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DOMAIN = 0, 1, 2, 3
EXIT_NO_ZERO, EXIT_CONTINUATION, EXIT_NOT_CONVERGED, EXIT_DEGREE_ZERO = 4, 5, 6, 10

KW_TOL = 1e-6
GB_TOL = 1e-7
ORACLE_TOL = {"pde_residual": 1e-7, "bc_residual": 1e-7, "mass_error": 1e-6, "moment_error": 1e-6}


class ConfigError(ValueError):
    pass


@dataclass
class Config:
    K_expr: str
    h_expr: str = "0"
    n_r: int = 32
    n_theta: int = 64
    s: float = 0.05
    r_scan: float = 0.9
    n_homotopy_steps: int = 10
    tol_solution: float = 1e-8
    tol_kkt: float = 1e-7
    tol_constraint: float = 1e-8
    output_dir: str = "out"

    def validate(self):
        for name in ("tol_solution", "tol_kkt", "tol_constraint"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.s <= 1.0:
            raise ConfigError("s must lie in [0, 1]")
        if not 0.0 < self.r_scan < 1.0:
            raise ConfigError("r_scan must lie in (0, 1)")
        if self.n_homotopy_steps < 1:
            raise ConfigError("n_homotopy_steps must be at least 1")
        try:
            Grid(self.n_r, self.n_theta)
        except GridError as exc:
            raise ConfigError(str(exc)) from exc
        for name in ("K_expr", "h_expr"):
            try:
                parse(getattr(self, name))
            except ExprSyntaxError as exc:
                raise ConfigError(f"{name}: {exc}") from exc
        return self


_TYPES = {"n_r": int, "n_theta": int, "n_homotopy_steps": int, "s": float, "r_scan": float,
          "tol_solution": float, "tol_kkt": float, "tol_constraint": float,
          "K_expr": str, "h_expr": str, "output_dir": str}


def load_config(path) -> Config:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _TYPES[key](val)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {val!r}") from exc
    if "K_expr" not in values:
        raise ConfigError(f"{path}: K_expr is required")
    return Config(**values).validate()


# ---- output helpers -------------------------------------------------------------

def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, floats with 17 significant digits, NaN as null."""
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ", ".join(f"{json.dumps(k)}: {dumps(v)}" for k, v in items) + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return f"{x:.17g}" if math.isfinite(x) else "null"
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _emit(obj):
    sys.stdout.write(dumps(obj) + "\n")


def _err(msg):
    sys.stderr.write(f"curvdisk: {msg}\n")


# ---- problem setup -------------------------------------------------------------

def _setup(cfg: Config):
    grid = Grid(cfg.n_r, cfg.n_theta)
    K = parse(cfg.K_expr)
    h = parse(cfg.h_expr)
    Kv = grid.sample(K.evaluate)
    hv = grid.sample_boundary(h.on_boundary)
    return grid, Kv, hv


def _outdir(cfg: Config, override) -> Path:
    out = Path(override or cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _phi(grid, Kv, hv):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", HypothesisViolation)
        pf = phi_from_curvatures(Kv, hv, grid)
    for w in caught:
        _err(f"warning: {w.message}")
    return pf, [str(w.message) for w in caught]


# ---- subcommands ---------------------------------------------------------------

def cmd_phi(cfg: Config, out: Path) -> int:
    grid, Kv, hv = _setup(cfg)
    pf, _ = _phi(grid, Kv, hv)
    write_disk_csv(out / "H.csv", grid, pf.H)
    write_disk_csv(out / "phi.csv", grid, pf.phi)
    write_disk_csv_multi(out / "grad_phi.csv", grid,
                         {"dphi_dx1": pf.grad_phi[0], "dphi_dx2": pf.grad_phi[1]})
    return EXIT_OK


def cmd_degree(cfg: Config, out: Path | None = None) -> int:
    grid, Kv, hv = _setup(cfg)
    pf, _ = _phi(grid, Kv, hv)
    try:
        rep = brouwer_degree(pf.grad_phi, grid)
    except (VanishingOnBoundary, RefinementExhausted) as exc:
        _emit({"error": str(exc), "min_boundary_grad_norm": getattr(exc, "min_norm", None),
               "sweep": degree_sweep(pf.grad_phi, grid)})
        return EXIT_DOMAIN
    _emit(rep.to_dict())
    return EXIT_OK if rep.degree != 0 else EXIT_DEGREE_ZERO


def cmd_solve(cfg: Config, out: Path) -> int:
    report = {"stage": "phi", "converged": False, "residual_pde": None, "residual_bc": None,
              "a_star": None, "mu_at_a_star": None, "homotopy_trace": [], "diagnostics": {},
              "warnings": []}
    code = EXIT_OK
    try:
        grid, Kv, hv = _setup(cfg)
        data = ProblemData(grid, Kv, hv)
        pf, warns = _phi(grid, Kv, hv)
        report["warnings"] += warns
        report["stage"] = "degree"
        try:
            deg = brouwer_degree(pf.grad_phi, grid).degree
        except (VanishingOnBoundary, RefinementExhausted) as exc:
            deg = None
            report["warnings"].append(f"degree undefined: {exc}")
        report["degree"] = deg
        if deg == 0:
            report["warnings"].append("degree of grad Phi is 0: existence is not guaranteed")
        report["stage"] = "solve"
        rec = solve_full(data, pf.phi, s=cfg.s, r_scan=cfg.r_scan,
                         n_steps=cfg.n_homotopy_steps, tol_solution=cfg.tol_solution)
        report.update(rec.report())
        report["stage"] = "done"
        write_disk_csv(out / "w.csv", grid, rec.w)
        if not rec.converged:
            code = EXIT_NOT_CONVERGED
    except (NegativeDiscriminant, ExprDomainError, DegenerateMass) as exc:
        report["error"] = str(exc)
        code = EXIT_DOMAIN
    except NoZeroFound as exc:
        report["error"] = str(exc)
        report["scan"] = exc.scan
        code = EXIT_NO_ZERO
    except StepUnderflow as exc:
        report["error"] = str(exc)
        report["last_s"] = exc.last_s
        if exc.record is not None:
            write_disk_csv(out / "w_partial.csv", grid, exc.record.w)
        code = EXIT_CONTINUATION
    except SolverError as exc:
        report["error"] = str(exc)
        code = EXIT_CONTINUATION
    (out / "report.json").write_text(dumps(report) + "\n")
    return code


def cmd_scan(cfg: Config, out: Path) -> int:
    grid, Kv, hv = _setup(cfg)
    pf, _ = _phi(grid, Kv, hv)
    red = ProblemData(grid, pf.phi ** 2, np.zeros(grid.n_theta))
    ds = reduced_data(red, cfg.s)
    pts = evaluate_points(scan_points(cfg.r_scan), ds,
                          tol_kkt=cfg.tol_kkt, tol_constraint=cfg.tol_constraint)
    with open(out / "mu_field.csv", "w", newline="") as fh:
        fh.write("a1,a2,mu1,mu2,status\n")
        for p in pts:
            a1, a2 = p["a"]
            m1, m2 = p["mu"]
            fh.write(f"{a1:.17g},{a2:.17g},{m1:.17g},{m2:.17g},{p['status']}\n")
    return EXIT_OK


def _parse_point(text: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"--a expects 'x,y', got {text!r}") from exc
    if len(vals) != 2:
        raise ConfigError(f"--a expects 'x,y', got {text!r}")
    return np.array(vals)


def cmd_oracle(cfg: Config, a_text: str | None) -> int:
    a = _parse_point(a_text or "0,0")
    grid = Grid(cfg.n_r, cfg.n_theta)
    rep = oracle.verify_bubble(a, grid)
    ok = all(rep[k] <= tol for k, tol in ORACLE_TOL.items())
    rep["passed"] = ok
    _emit(rep)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(cfg: Config, w_path) -> int:
    path = Path(w_path) if w_path else Path(cfg.output_dir) / "w.csv"
    try:
        grid, w = read_disk_csv(path)
    except (OSError, ValueError, GridError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    K = parse(cfg.K_expr)
    h = parse(cfg.h_expr)
    data = ProblemData(grid, grid.sample(K.evaluate), grid.sample_boundary(h.on_boundary))
    rp, rb = pde_residuals(w, data)
    rep = {"residual_pde": rp, "residual_bc": rb, **residual_report(w, data)}
    gk = grid.gradient(data.K)
    kw_tol = KW_TOL * (1.0 + float(np.max(np.hypot(*gk))))
    ok = (rp <= cfg.tol_solution and rb <= cfg.tol_solution and rep["gauss_bonnet"] <= GB_TOL
          and rep["kw_tau"] <= kw_tol and rep["kw_F"] <= kw_tol)
    rep["passed"] = ok
    _emit(rep)
    return EXIT_OK if ok else EXIT_FAIL


# ---- entry point -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="curvdisk", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=["phi", "degree", "solve", "scan", "oracle", "verify"])
    ap.add_argument("--config", required=True, help="key=value configuration file")
    ap.add_argument("--out", help="override output_dir")
    ap.add_argument("--a", help="bubble parameter 'x,y' for the oracle command")
    ap.add_argument("--w", help="solution CSV for verify (default OUT/w.csv)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.output_dir = args.out
        cmd = args.command
        if cmd == "oracle":
            return cmd_oracle(cfg, args.a)
        if cmd == "verify":
            return cmd_verify(cfg, args.w)
        if cmd == "degree":
            return cmd_degree(cfg)
        out = _outdir(cfg, None)
        return {"phi": cmd_phi, "solve": cmd_solve, "scan": cmd_scan}[cmd](cfg, out)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        _err(f"I/O error: {exc}")
        return EXIT_CONFIG
    except (NegativeDiscriminant, ExprDomainError, DegenerateMass) as exc:
        _err(str(exc))
        return EXIT_DOMAIN
    except ValueError as exc:
        # remaining ValueErrors come from invalid mathematical input (e.g. |a| >= 1)
        _err(str(exc))
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
