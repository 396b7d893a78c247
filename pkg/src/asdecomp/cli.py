"""Experiment drivers: convergence studies, decompositions and the deconvolution test.

Every subcommand reads a JSON config and writes CSV tables (plus CSV/VTK
fields where relevant) into the output directory. Exit status is 0 on
success, 2 for an invalid config and 3 for a numerical failure.

Config keys (all optional unless noted)::

    medium          {"preset": name} | {"raster": path, "domain": [...]} |
                    {"domain": [...], "background": [[shape|null, value], ...],
                     "inclusions": [[shape, value], ...], "mode": "override"}
    mesh.h0         base mesh size, default 0.05; levels use h = h0 / 2**m
    mesh.levels     list of m, default [1, 2, 3, 4]
    epsilons        list of epsilon values, default [1e-8]
    weight.form     "q_power" (default) or "max"
    weight.q        exponent of the q_power form, default 2
    weight.epsilon_policy
                    "absolute" (default): epsilon as given;
                    "relative": epsilon times max |grad u_delta|
    K               number of eigenfunctions, default 1
    projection      "Q" (default, affine) or "Pi"
    seed            noise seed, default 0
    out_dir         output directory if --out is not given
    slope_range     [eps_lo, eps_hi] restricting the epsilon slope fit
    inversion       {"h", "gamma", "noise", "tau_max", "iter_max"}
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import export
from .eigen import ConvergenceError
from .fem import WeightSpec
from .inversion import CapacityError, add_noise, asi_solve, build_convolution, direct_solve, tsvd_solve
from .media import (
    FeFunction,
    PgmError,
    interpolate_to_mesh,
    medium_from_pieces,
    medium_from_raster,
    preset,
)
from .mesh import Mesh, build_uniform_mesh, check_rectangle
from .quadrature import l2_error_exact_vs_fe
from .spectral import DegenerateBasisError, build_as_basis, l2_error_fe, project_PiK, project_PiK_exact, project_QK

log = logging.getLogger("asdecomp")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# --------------------------------------------------------------------------
# Config


@dataclass(frozen=True)
class InversionConfig:
    h: float = 0.025
    gamma: float = 1.0 / 32.0
    noise: float = 0.04
    tau_max: float = 1.1
    iter_max: int = 20


@dataclass(frozen=True)
class ExperimentConfig:
    medium: Any = field(repr=False)  # Medium or RasterMedium
    h0: float = 0.05
    levels: tuple[int, ...] = (1, 2, 3, 4)
    epsilons: tuple[float, ...] = (1e-8,)
    form: str = "q_power"
    q: float = 2.0
    epsilon_policy: str = "absolute"
    K: int = 1
    projection: str = "Q"
    seed: int = 0
    out_dir: str | None = None
    slope_range: tuple[float, float] | None = None
    inversion: InversionConfig = InversionConfig()

    @property
    def domain(self):
        return self.medium.domain

    def mesh(self, level: int) -> Mesh:
        xmin, ymin, xmax, ymax = self.domain
        h = self.h0 / 2**level
        nx = max(1, int(round((xmax - xmin) / h)))
        ny = max(1, int(round((ymax - ymin) / h)))
        return build_uniform_mesh(self.domain, nx, ny)

    def weight(self, epsilon: float, u_delta: FeFunction | None = None) -> WeightSpec:
        if self.epsilon_policy == "relative":
            if u_delta is None:
                raise ValueError("relative epsilon needs u_delta")
            g = u_delta.element_gradients()
            scale = float(np.max(np.hypot(g[:, 0], g[:, 1]), initial=0.0))
            epsilon = epsilon * (scale if scale > 0 else 1.0)
        return WeightSpec(epsilon, self.form, self.q)


def _get(d: dict, key: str, path: str, kind, default=None, required=False):
    if key not in d:
        if required:
            raise ConfigError(path + key, "missing required key")
        return default
    v = d[key]
    try:
        if kind is float and isinstance(v, bool):
            raise TypeError
        return kind(v)
    except (TypeError, ValueError):
        raise ConfigError(path + key, f"expected {kind.__name__}, got {v!r}") from None


def _parse_medium(spec: Any, base: Path, path: str = "medium"):
    if isinstance(spec, str):
        spec = {"preset": spec}
    if not isinstance(spec, dict):
        raise ConfigError(path, "expected an object or a preset name")
    try:
        if "preset" in spec:
            return preset(spec["preset"])
        domain = check_rectangle(spec.get("domain", (0.0, 0.0, 1.0, 1.0)))
        if "raster" in spec:
            p = Path(spec["raster"])
            p = p if p.is_absolute() else base / p
            try:
                payload = p.read_bytes()
            except OSError as exc:
                raise ConfigError(path + ".raster", f"cannot read {p}: {exc.strerror}") from None
            return medium_from_raster(payload, domain)
        bg = [(s, float(v)) for s, v in spec.get("background", [[None, 0.0]])]
        inc = [(s, float(v)) for s, v in spec.get("inclusions", [])]
        return medium_from_pieces(domain, bg, inc, spec.get("mode", "override"))
    except ConfigError:
        raise
    except PgmError as exc:
        raise ConfigError(path + ".raster", str(exc)) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(path, f"invalid medium description ({exc})") from None


def parse_config(raw: dict, base: Path = Path(".")) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    medium = _parse_medium(raw.get("medium", "disc"), base)

    mesh = raw.get("mesh", {})
    if not isinstance(mesh, dict):
        raise ConfigError("mesh", "expected an object")
    h0 = _get(mesh, "h0", "mesh.", float, 0.05)
    if not h0 > 0:
        raise ConfigError("mesh.h0", "must be positive")
    levels = mesh.get("levels", [1, 2, 3, 4])
    if not isinstance(levels, list) or not levels:
        raise ConfigError("mesh.levels", "must be a non-empty list")
    if not all(isinstance(m, int) and not isinstance(m, bool) and m >= 0 for m in levels):
        raise ConfigError("mesh.levels", "entries must be nonnegative integers")

    eps = raw.get("epsilons", [1e-8])
    if not isinstance(eps, list) or not eps:
        raise ConfigError("epsilons", "must be a non-empty list")
    try:
        eps = tuple(float(e) for e in eps)
    except (TypeError, ValueError):
        raise ConfigError("epsilons", "entries must be numbers") from None
    if not all(e > 0 for e in eps):
        raise ConfigError("epsilons", "entries must be positive")

    weight = raw.get("weight", {})
    if not isinstance(weight, dict):
        raise ConfigError("weight", "expected an object")
    form = _get(weight, "form", "weight.", str, "q_power")
    q = _get(weight, "q", "weight.", float, 2.0)
    policy = _get(weight, "epsilon_policy", "weight.", str, "absolute")
    if form not in ("q_power", "max"):
        raise ConfigError("weight.form", "must be 'q_power' or 'max'")
    if not q >= 1:
        raise ConfigError("weight.q", "must be >= 1")
    if policy not in ("absolute", "relative"):
        raise ConfigError("weight.epsilon_policy", "must be 'absolute' or 'relative'")

    K = raw.get("K", 1)
    if not isinstance(K, int) or isinstance(K, bool) or K < 0:
        raise ConfigError("K", "must be a nonnegative integer")
    projection = _get(raw, "projection", "", str, "Q")
    if projection not in ("Q", "Pi"):
        raise ConfigError("projection", "must be 'Q' or 'Pi'")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed", "must be an integer")
    out_dir = raw.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("out_dir", "must be a string")

    slope_range = raw.get("slope_range")
    if slope_range is not None:
        if not (isinstance(slope_range, list) and len(slope_range) == 2):
            raise ConfigError("slope_range", "must be [lo, hi]")
        try:
            slope_range = (float(min(slope_range)), float(max(slope_range)))
        except (TypeError, ValueError):
            raise ConfigError("slope_range", "entries must be numbers") from None

    inv = raw.get("inversion", {})
    if not isinstance(inv, dict):
        raise ConfigError("inversion", "expected an object")
    icfg = InversionConfig(
        h=_get(inv, "h", "inversion.", float, 0.025),
        gamma=_get(inv, "gamma", "inversion.", float, 1.0 / 32.0),
        noise=_get(inv, "noise", "inversion.", float, 0.04),
        tau_max=_get(inv, "tau_max", "inversion.", float, 1.1),
        iter_max=_get(inv, "iter_max", "inversion.", int, 20),
    )
    if not icfg.h > 0:
        raise ConfigError("inversion.h", "must be positive")
    if not icfg.gamma > 0:
        raise ConfigError("inversion.gamma", "must be positive")
    if not icfg.noise >= 0:
        raise ConfigError("inversion.noise", "must be nonnegative")
    if not icfg.tau_max >= 1:
        raise ConfigError("inversion.tau_max", "must be >= 1")
    if icfg.iter_max < 1:
        raise ConfigError("inversion.iter_max", "must be >= 1")

    return ExperimentConfig(
        medium, h0, tuple(levels), eps, form, q, policy, K, projection, seed, out_dir, slope_range, icfg
    )


def load_config(path: Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(raw, path.parent)


# --------------------------------------------------------------------------
# Experiments


def _errors(cfg: ExperimentConfig, mesh: Mesh, epsilon: float) -> tuple[float, float]:
    """``(||u - P u||, ||u_delta - P u_delta||)`` for the configured projection P."""
    u = cfg.medium
    ud = interpolate_to_mesh(u, mesh)
    basis = build_as_basis(ud, cfg.weight(epsilon, ud), cfg.K)
    if cfg.projection == "Pi":
        pu = project_PiK_exact(basis, u)
        pud = project_PiK(basis, ud)[0]
    else:
        pu = project_QK(basis, u)
        pud = project_QK(basis, ud)
    return l2_error_exact_vs_fe(u, pu), l2_error_fe(ud, pud, basis.mass)


DELTA_HEADER = ["level", "delta", "epsilon", "error_exact", "error_interp"]
EPS_HEADER = ["epsilon", "delta", "error_exact", "error_interp"]


def run_convergence_delta(cfg: ExperimentConfig, out: Path) -> Path:
    eps = cfg.epsilons[0]
    rows = []
    for m in cfg.levels:
        mesh = cfg.mesh(m)
        e, ed = _errors(cfg, mesh, eps)
        log.info("level %d (h=%.6g): %.6e %.6e", m, mesh.h, e, ed)
        rows.append([m, mesh.h, eps, e, ed])
    if len(rows) >= 2:
        d = [r[1] for r in rows]
        rows.append(["slope", None, None, export.loglog_slope(d, [r[3] for r in rows]),
                     export.loglog_slope(d, [r[4] for r in rows])])
    return export.write_csv(out / "convergence_delta.csv", DELTA_HEADER, rows)


def pre_floor_count(errors: list[float], min_ratio: float = 2.0) -> int:
    """Length of the leading run (in the given order) over which errors keep decaying.

    A point belongs to the run while it is smaller than its predecessor by
    at least ``min_ratio``; at least the first two points are returned.
    """
    n = 1
    while n < len(errors) and errors[n] > 0 and errors[n - 1] / errors[n] >= min_ratio:
        n += 1
    return min(max(n, 2), len(errors))


def run_convergence_eps(cfg: ExperimentConfig, out: Path) -> Path:
    mesh = cfg.mesh(cfg.levels[0])
    eps = sorted(cfg.epsilons, reverse=True)
    rows = []
    for e in eps:
        err, errd = _errors(cfg, mesh, e)
        log.info("epsilon %.3g: %.6e %.6e", e, err, errd)
        rows.append([e, mesh.h, err, errd])
    if len(rows) >= 2:
        if cfg.slope_range is not None:
            lo, hi = cfg.slope_range
            sel = [r for r in rows if lo <= r[0] <= hi]
        else:
            sel = rows[: pre_floor_count([r[3] for r in rows])]
        x = [r[0] for r in sel]
        rows.append(["slope", None, export.loglog_slope(x, [r[2] for r in sel]),
                     export.loglog_slope(x, [r[3] for r in sel])])
    return export.write_csv(out / "convergence_eps.csv", EPS_HEADER, rows)


def run_decompose(cfg: ExperimentConfig, out: Path) -> Path:
    mesh = cfg.mesh(cfg.levels[0])
    ud = interpolate_to_mesh(cfg.medium, mesh)
    basis = build_as_basis(ud, cfg.weight(cfg.epsilons[0], ud), cfg.K)
    fields = {"u_delta": ud.coefficients, "phi0": basis.phi0.coefficients}
    for k in range(1, basis.K + 1):
        fields[f"phi{k}"] = basis.phis[:, k - 1]
    export.write_fields_csv(out / "fields.csv", mesh, fields)
    export.write_vtk(out / "fields.vtk", mesh, fields, "AS decomposition")
    rows = [[k + 1, basis.eigenvalues[k], basis.residuals[k]] for k in range(basis.K)]
    return export.write_csv(out / "eigenvalues.csv", ["k", "lambda", "residual"], rows)


INVERT_HEADER = ["method", "e_r", "tau", "iterations", "converged"]


def run_invert(cfg: ExperimentConfig, out: Path) -> Path:
    icfg = cfg.inversion
    if icfg.noise == 0:
        raise ConfigError("inversion.noise", "must be positive (the discrepancy principle needs eta > 0)")
    if cfg.K < 1:
        raise ConfigError("K", "inversion needs K >= 1")
    xmin, ymin, xmax, ymax = cfg.domain
    nx = max(1, int(round((xmax - xmin) / icfg.h)))
    ny = max(1, int(round((ymax - ymin) / icfg.h)))
    mesh = build_uniform_mesh(cfg.domain, nx, ny)
    u_true = interpolate_to_mesh(cfg.medium, mesh)
    op = build_convolution(mesh, icfg.gamma)
    y_noisy, eta = add_noise(op(u_true), icfg.noise, cfg.seed)
    spec = cfg.weight(cfg.epsilons[0], y_noisy)
    reports = [
        asi_solve(op, y_noisy, eta, u_true, spec, cfg.K, icfg.tau_max, icfg.iter_max, u_true=u_true),
        tsvd_solve(op, y_noisy, eta, u_true=u_true),
        direct_solve(op, y_noisy, eta, u_true=u_true),
    ]
    for r in reports:
        log.info("%s: e_r=%.4g tau=%.4g iterations=%d", r.method, r.e_r, r.tau, r.iterations)
    fields = {"u_true": u_true.coefficients, "y_noisy": y_noisy.coefficients}
    fields.update({f"u_{r.method}": r.reconstruction.coefficients for r in reports})
    export.write_fields_csv(out / "reconstructions.csv", mesh, fields)
    export.write_vtk(out / "reconstructions.vtk", mesh, fields, "deconvolution")
    export.write_csv(out / "asi_misfits.csv", ["iteration", "misfit", "tau"],
                     [[i + 1, m, m / eta] for i, m in enumerate(reports[0].misfits)])
    rows = [[r.method, r.e_r, r.tau, r.iterations, r.converged] for r in reports]
    return export.write_csv(out / "inversion.csv", INVERT_HEADER, rows)


COMMANDS: dict[str, Callable[[ExperimentConfig, Path], Path]] = {
    "convergence-delta": run_convergence_delta,
    "convergence-eps": run_convergence_eps,
    "decompose": run_decompose,
    "invert": run_invert,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asdecomp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, type=Path, help="JSON experiment config")
        s.add_argument("--out", type=Path, default=None, help="output directory (overrides out_dir)")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        out = args.out or Path(cfg.out_dir or ".")
        out.mkdir(parents=True, exist_ok=True)
        path = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, DegenerateBasisError, CapacityError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
