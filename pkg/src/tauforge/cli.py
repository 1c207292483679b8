"""Batch front-end: experiment configs, CSV + JSON artifacts, self-test.

Configuration is a flat key=value story: an optional seed file provides
defaults, command-line flags override them, and every resolved value is
echoed into the JSON manifest so a CSV can be regenerated from the
manifest alone.  Exit codes: 0 all checks passed, 2 a numerical check
failed, 3 configuration error, 4 factorization left the big cell on a
node the run requires.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__, ernst, kdv
from .birkhoff import BigCellError, factorize, factorize_batch
from .kdv import PathCrossesBadCellError
from .loops import (
    DEFAULT_ORDER,
    DEFAULT_SAMPLES,
    MatrixLoop,
    _fast_len,
    inverse,
    monomial,
    multiply,
    random_tangent,
    random_unimodular_loop,
)
from .phase_space import cocycle, poisson_anomaly
from .quadrature import PathRefinementError
from .twistor import ernst_frame

EXIT_PASS = 0
EXIT_CHECK_FAILED = 2
EXIT_CONFIG = 3
EXIT_BIG_CELL = 4

PIPELINES = ("selftest", "kdv", "ernst", "birkhoff")

DEFAULT_GRIDS = {
    "kdv": "-1:1:51",
    "ernst": "0.5:2:16,-0.5:0.5:11",
}
DEFAULT_PRESETS = {
    "kdv": "one_pole",
    "ernst": "kasner:a=0.7",
    "birkhoff": "random",
    "selftest": "",
}
VACUUM_Q_TOL = 1e-8
FIELD_EQUATION_TOL = 1e-10
RESIDUE_ROUTE_TOL = 1e-12
LOOP_CLOSEDNESS_TOL = 1e-8
CONFORMAL_CONSTANT_TOL = 1e-7


class ConfigError(Exception):
    """Invalid experiment configuration; maps to exit code 3."""


@dataclass
class Check:
    """One named invariant with its measured value and threshold."""

    name: str
    value: float
    threshold: float
    op: str = "le"

    @property
    def passed(self) -> bool:
        if self.op == "le":
            return self.value <= self.threshold
        return self.value >= self.threshold


@dataclass
class ExperimentConfig:
    pipeline: str
    preset: str = ""
    seed_file: str = ""
    grid: str = ""
    trunc: int = DEFAULT_ORDER
    samples: int | None = None
    out: str = ""
    threads: int = 1
    tol_factor: float = 1e-9
    tol_path: float | None = None
    tol_residual: float = 2e-2
    tol_headline: float = 1e-4
    rng_seed: int = 0
    count: int = 100
    strength: float = 0.5

    def resolved_samples(self) -> int:
        if self.samples is not None:
            return self.samples
        return max(DEFAULT_SAMPLES, _fast_len(4 * self.trunc + 2))

    def resolved_tol_path(self) -> float:
        if self.tol_path is not None:
            return self.tol_path
        return 1e-9 if self.pipeline == "ernst" else 1e-7

    def resolved_preset(self) -> tuple[str, dict]:
        text = self.preset or DEFAULT_PRESETS[self.pipeline]
        return _parse_preset(text)

    def axes(self) -> tuple[np.ndarray, np.ndarray]:
        (xa, xb, nx), (ya, yb, ny) = self.grid_spec()
        return np.linspace(xa, xb, nx), np.linspace(ya, yb, ny)

    def grid_spec(self):
        text = self.grid or DEFAULT_GRIDS.get(self.pipeline, "")
        parts = text.split(",")
        if len(parts) == 1:
            parts = parts * 2
        if len(parts) != 2:
            raise ConfigError(f"grid '{text}' needs 1 or 2 min:max:count axes")
        spans = []
        for part in parts:
            bits = part.split(":")
            if len(bits) != 3:
                raise ConfigError(f"grid axis '{part}' is not min:max:count")
            try:
                lo, hi, n = float(bits[0]), float(bits[1]), int(bits[2])
            except ValueError as err:
                raise ConfigError(f"grid axis '{part}': {err}") from None
            if hi <= lo:
                raise ConfigError(f"grid axis '{part}' must have min < max")
            if n < 2:
                raise ConfigError(f"grid axis '{part}' needs at least 2 nodes")
            spans.append((lo, hi, n))
        return spans

    def validate(self):
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"unknown pipeline '{self.pipeline}'")
        if self.trunc < 1:
            raise ConfigError("truncation order must be >= 1")
        if self.samples is not None and self.samples < 4 * self.trunc + 2:
            raise ConfigError(
                f"sample count M = {self.samples} violates M >= 4N + 2 "
                f"= {4 * self.trunc + 2} at N = {self.trunc}")
        for name in ("tol_factor", "tol_residual", "tol_headline"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.tol_path is not None and self.tol_path <= 0:
            raise ConfigError("tol_path must be positive")
        if self.threads < 1:
            raise ConfigError("thread count must be >= 1")
        if self.count < 1:
            raise ConfigError("loop count must be >= 1")
        if self.pipeline in ("kdv", "ernst"):
            spans = self.grid_spec()
            for lo, hi, n in spans:
                if n < 7:
                    raise ConfigError(
                        "residual pipelines need grid counts >= 7")
            if self.pipeline == "ernst" and spans[0][0] <= 0:
                raise ConfigError("ernst grid must stay in the r > 0 half plane")
        name, params = self.resolved_preset()
        allowed = _PRESET_PARAMS.get((self.pipeline, name))
        if self.pipeline != "selftest":
            if allowed is None:
                raise ConfigError(
                    f"unknown preset '{name}' for pipeline {self.pipeline}")
            for key in params:
                if key not in allowed:
                    raise ConfigError(
                        f"preset '{name}' does not take parameter '{key}'")


_PRESET_PARAMS = {
    ("kdv", "vacuum"): (),
    ("kdv", "one_pole"): ("pole", "strength"),
    ("ernst", "flat"): (),
    ("ernst", "kasner"): ("a",),
    ("ernst", "point_source"): ("strength", "z0"),
    ("ernst", "non_solution"): (),
    ("birkhoff", "random"): (),
    ("birkhoff", "twist"): (),
}


def _parse_preset(text: str) -> tuple[str, dict]:
    name, _, tail = text.partition(":")
    params = {}
    if tail:
        for piece in tail.split(","):
            key, sep, val = piece.partition("=")
            if not sep:
                raise ConfigError(f"preset parameter '{piece}' is not key=value")
            try:
                params[key.strip()] = float(val)
            except ValueError:
                raise ConfigError(
                    f"preset parameter '{piece}' has a non-numeric value") from None
    return name.strip(), params


_CONFIG_TYPES = {
    "preset": str,
    "grid": str,
    "trunc": int,
    "samples": int,
    "out": str,
    "threads": int,
    "tol_factor": float,
    "tol_path": float,
    "tol_residual": float,
    "tol_headline": float,
    "rng_seed": int,
    "count": int,
    "strength": float,
}


def load_seed_file(path: str) -> dict:
    """Flat key=value lines; '#' starts a comment; keys mirror the flags."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read seed file {path}: {err}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        if key not in _CONFIG_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
        try:
            values[key] = _CONFIG_TYPES[key](val.strip())
        except ValueError:
            raise ConfigError(
                f"{path}:{lineno}: bad value for '{key}'") from None
    return values


# -- pipelines -----------------------------------------------------------


def _run_kdv(config: ExperimentConfig):
    name, params = config.resolved_preset()
    if name == "vacuum":
        seed = kdv.seed_vacuum(order=config.trunc)
    else:
        seed = kdv.seed_one_pole(order=config.trunc, **params)
    xs, ts = config.axes()
    grid = kdv.tau_grid(
        seed, xs, ts, order=config.trunc, sample_count=config.samples,
        tol_path=config.resolved_tol_path(), factor_tol=config.tol_factor,
        threads=config.threads)

    dx = float(xs[1] - xs[0])
    fd = kdv._derivative_on_grid(grid.log_tau, dx, 1, axis=0)
    mismatch = np.abs(fd - grid.q)[grid.bigcell]
    headline = float(mismatch.max()) if mismatch.size else 0.0

    checks = [
        Check("bigcell_coverage", float((~grid.bigcell).mean()), 0.0),
        Check("logtau_q_consistency", headline, config.tol_headline),
    ]
    if name == "vacuum":
        checks.append(Check("vacuum_max_q",
                            float(np.abs(grid.q).max()), VACUUM_Q_TOL))
    if len(xs) >= 11 and len(ts) >= 7:
        checks.append(Check("pde_residual",
                            kdv.kdv_residual(grid), config.tol_residual))

    header = ["x", "t", "re_log_tau", "im_log_tau", "re_q", "re_u", "bigcell"]
    rows = []
    for i, x in enumerate(xs):
        for j, t in enumerate(ts):
            rows.append([
                _fmt(x), _fmt(t),
                _fmt(grid.log_tau[i, j].real), _fmt(grid.log_tau[i, j].imag),
                _fmt(grid.q[i, j].real), _fmt(grid.u[i, j].real),
                str(int(grid.bigcell[i, j]))])
    extra = {
        "seed": {"label": seed.label, **params},
        "summary": {
            "max_abs_q": float(np.nanmax(np.abs(grid.q))),
            "max_abs_u": float(np.nanmax(np.abs(grid.u))),
        },
    }
    return checks, header, rows, extra


_ERNST_PRESETS = {
    "flat": lambda p: ernst.flat(),
    "kasner": lambda p: ernst.kasner(p.get("a", 0.7)),
    "point_source": lambda p: ernst.point_source(
        p.get("strength", 0.8), p.get("z0", -1.5)),
    "non_solution": lambda p: ernst.non_solution(),
}


def _run_ernst(config: ExperimentConfig):
    name, params = config.resolved_preset()
    sol = _ERNST_PRESETS[name](params)
    rs, zs = config.axes()
    field = ernst.logtau_field(sol, rs, zs,
                               tol_path=config.resolved_tol_path())
    report = ernst.conformal_factor_check(sol, rs, zs)
    gr, gz = np.meshgrid(rs, zs, indexing="ij")
    residuals = np.atleast_1d(ernst.field_residual(sol, gr, gz))
    residue_worst = max(ernst.residue_check(sol, r, z)
                        for r in rs[:: max(1, len(rs) // 6)]
                        for z in zs[:: max(1, len(zs) // 6)])
    loop = ernst.rectangle_loop_integral(sol, (rs[0], rs[-1]), (zs[0], zs[-1]))
    constant_std = (report.candidate1_std
                    if report.constant_candidate.startswith("log_tau -")
                    else report.candidate2_std)

    checks = [
        Check("field_equations", float(residuals.max()), FIELD_EQUATION_TOL),
        Check("residue_route", float(residue_worst), RESIDUE_ROUTE_TOL),
        Check("loop_closedness", abs(loop), LOOP_CLOSEDNESS_TOL),
        Check("conformal_constant", constant_std, CONFORMAL_CONSTANT_TOL),
    ]

    header = ["r", "z", "log_tau", "dlogtau_w_re", "dlogtau_w_im",
              "field_residual", "candidate1_const", "candidate2_const"]
    rows = []
    for i, r in enumerate(rs):
        for j, z in enumerate(zs):
            rows.append([
                _fmt(r), _fmt(z), _fmt(field.log_tau[i, j]),
                _fmt(field.dlogtau_w[i, j].real),
                _fmt(field.dlogtau_w[i, j].imag),
                _fmt(residuals[i, j]),
                _fmt(report.candidate1[i, j]),
                _fmt(report.candidate2[i, j])])
    extra = {
        "solution": {"label": sol.label, **params},
        "summary": {
            "constant_candidate": report.constant_candidate,
            "candidate1_std": report.candidate1_std,
            "candidate2_std": report.candidate2_std,
        },
    }
    return checks, header, rows, extra


def _twist_loop(order: int) -> MatrixLoop:
    coeffs = np.zeros((2 * order + 1, 2, 2), dtype=complex)
    coeffs[order + 1, 0, 0] = 1.0
    coeffs[order - 1, 1, 1] = 1.0
    return MatrixLoop(coeffs)


def _run_birkhoff(config: ExperimentConfig):
    name, _ = config.resolved_preset()
    if name == "twist":
        # diag(lambda, 1/lambda) sits outside the big cell by design
        factorize(_twist_loop(config.trunc), tol=config.tol_factor)
        raise AssertionError("twist loop unexpectedly factored")

    rng = np.random.default_rng(config.rng_seed)
    stack = np.stack([
        random_unimodular_loop(rng, order=config.trunc,
                               amplitude=config.strength).coeffs
        for _ in range(config.count)])
    sample_count = config.resolved_samples()
    if config.threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        bounds = np.linspace(0, len(stack), config.threads + 1).astype(int)
        spans = [(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            parts = list(pool.map(
                lambda s: factorize_batch(stack[s[0]:s[1]], sample_count,
                                          config.tol_factor), spans))
        residuals = np.concatenate([p[2] for p in parts])
        ok = np.concatenate([p[3] for p in parts])
    else:
        _, _, residuals, ok = factorize_batch(stack, sample_count,
                                              config.tol_factor)

    checks = [
        Check("round_trip_residual", float(residuals.max()), config.tol_factor),
        Check("big_cell_fraction", float((~ok).mean()), 0.0),
    ]
    rows = [[str(i), _fmt(r)] for i, r in enumerate(residuals)]
    extra = {"summary": {"loops": int(config.count),
                         "max_residual": float(residuals.max())}}
    return checks, ["index", "residual"], rows, extra


def _run_selftest(config: ExperimentConfig):
    rng = np.random.default_rng(config.rng_seed)
    checks = []

    loop = random_unimodular_loop(rng)
    vals = multiply(loop, inverse(loop)).samples(DEFAULT_SAMPLES)
    checks.append(Check("loop_inverse_round_trip",
                        float(np.abs(vals - np.eye(2)).max()), 1e-10))

    stack = np.stack([random_unimodular_loop(rng).coeffs for _ in range(20)])
    _, _, residuals, ok = factorize_batch(stack)
    checks.append(Check("birkhoff_round_trip", float(residuals.max()), 1e-9))
    checks.append(Check("birkhoff_big_cell_flags", float((~ok).sum()), 0.0))

    try:
        factorize(_twist_loop(DEFAULT_ORDER))
        missed = 1.0
    except BigCellError:
        missed = 0.0
    checks.append(Check("big_cell_detected", missed, 0.0))

    a = np.array([[0.3, 0.1], [-0.2, 0.4]])
    u = monomial(1, a, order=8)
    v = monomial(-1, a, order=8)
    expected = -1j * np.trace(a @ a)
    checks.append(Check("cocycle_identity",
                        abs(cocycle(u, v) - expected), 1e-12))

    gamma = random_unimodular_loop(rng)
    du = random_tangent(rng)
    dv = random_tangent(rng)
    a1 = abs(poisson_anomaly(gamma, du, dv, 1e-3))
    a2 = abs(poisson_anomaly(gamma, du, dv, 5e-4))
    checks.append(Check("poisson_anomaly_order", a1 / max(a2, 1e-300),
                        3.0, op="ge"))

    coeff, pole = ernst_frame(0.7, "wbar")
    checks.append(Check("ernst_frame_residue",
                        abs(coeff.residue(pole) - 1j / 0.7), 1e-13))

    axis = np.linspace(-0.5, 0.5, 21)
    grid_v = kdv.tau_grid(kdv.seed_vacuum(), axis, axis)
    checks.append(Check("kdv_vacuum_max_q",
                        float(np.abs(grid_v.q).max()), VACUUM_Q_TOL))

    grid_p = kdv.tau_grid(kdv.seed_one_pole(), axis, axis)
    dx = float(axis[1] - axis[0])
    fd = kdv._derivative_on_grid(grid_p.log_tau, dx, 1, axis=0)
    checks.append(Check("kdv_logtau_q_consistency",
                        float(np.abs(fd - grid_p.q).max()), 1e-4))
    checks.append(Check("kdv_pde_residual",
                        kdv.kdv_residual(grid_p), 2e-2))

    worst = 0.0
    for a_k in (0.0, 0.3, 0.7, 1.2):
        sol = ernst.kasner(a_k)
        for r in (0.5, 1.0, 2.3):
            dw = ernst.dlogtau(sol, r, 0.2, "w")
            dwb = ernst.dlogtau(sol, r, 0.2, "wbar")
            worst = max(worst, abs(1j * (dw - dwb) - (1 + a_k ** 2) / (2 * r)))
    checks.append(Check("ernst_kasner_radial", worst, 1e-10))

    source = ernst.point_source(0.8, -1.5)
    route = max(ernst.residue_check(s, r, z)
                for s in (ernst.kasner(0.7), source)
                for r, z in ((0.3, -0.4), (1.0, 0.0), (2.7, 1.1)))
    checks.append(Check("ernst_residue_route", route, RESIDUE_ROUTE_TOL))

    loop_val = abs(ernst.rectangle_loop_integral(source, (0.6, 2.1),
                                                 (-0.8, 0.9)))
    checks.append(Check("ernst_loop_closedness", loop_val,
                        LOOP_CLOSEDNESS_TOL))

    report = ernst.conformal_factor_check(
        ernst.kasner(0.7), np.linspace(0.5, 2.0, 9), np.linspace(-0.5, 0.5, 7))
    checks.append(Check("ernst_conformal_constant", report.candidate1_std,
                        CONFORMAL_CONSTANT_TOL))

    return checks, None, None, {}


_DISPATCH = {
    "kdv": _run_kdv,
    "ernst": _run_ernst,
    "birkhoff": _run_birkhoff,
    "selftest": _run_selftest,
}


# -- artifacts -----------------------------------------------------------


def _fmt(value) -> str:
    return format(float(value), ".17g")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _manifest(config: ExperimentConfig, checks, extra, csv_name, elapsed,
              exit_code) -> dict:
    name, params = (config.resolved_preset()
                    if config.pipeline != "selftest" else ("", {}))
    try:
        grid = [list(span) for span in config.grid_spec()] \
            if config.pipeline in DEFAULT_GRIDS else None
    except ConfigError:
        grid = None
    return {
        "pipeline": config.pipeline,
        "preset": name,
        "preset_params": params,
        "seed_file": config.seed_file,
        "grid": grid,
        "trunc": config.trunc,
        "samples": config.resolved_samples(),
        "threads": config.threads,
        "tolerances": {
            "factor": config.tol_factor,
            "path": config.resolved_tol_path(),
            "residual": config.tol_residual,
            "headline": config.tol_headline,
        },
        "rng_seed": config.rng_seed,
        "count": config.count,
        "strength": config.strength,
        "versions": {
            "tauforge": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "checks": [{"name": c.name, "value": float(c.value),
                    "threshold": float(c.threshold), "op": c.op,
                    "pass": c.passed} for c in checks],
        "extra": extra,
        "csv": csv_name,
        "elapsed_seconds": round(elapsed, 3),
        "exit_code": exit_code,
    }


def run(config: ExperimentConfig) -> int:
    start = time.perf_counter()
    try:
        config.validate()
    except ConfigError as err:
        print(f"configuration error: {err}")
        return EXIT_CONFIG

    try:
        checks, header, rows, extra = _DISPATCH[config.pipeline](config)
    except (BigCellError, PathCrossesBadCellError) as err:
        print(f"[FAIL] big_cell_required_node: {err}")
        return EXIT_BIG_CELL
    except PathRefinementError as err:
        print(f"[FAIL] path_refinement: {err}")
        return EXIT_CHECK_FAILED
    except ValueError as err:
        print(f"[FAIL] numerical_invariant: {err}")
        return EXIT_CHECK_FAILED

    elapsed = time.perf_counter() - start
    for c in checks:
        mark = "PASS" if c.passed else "FAIL"
        rel = "<=" if c.op == "le" else ">="
        print(f"[{mark}] {c.name:<26} value {c.value:.3e} {rel} {c.threshold:.3e}")
    n_pass = sum(c.passed for c in checks)
    exit_code = EXIT_PASS if n_pass == len(checks) else EXIT_CHECK_FAILED

    if config.out:
        out_dir = Path(config.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_name = None
        if rows is not None:
            csv_name = f"{config.pipeline}.csv"
            _write_csv(out_dir / csv_name, header, rows)
        manifest = _manifest(config, checks, extra, csv_name, elapsed,
                             exit_code)
        with open(out_dir / f"{config.pipeline}_manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")

    print(f"{config.pipeline}: {n_pass}/{len(checks)} checks passed "
          f"in {elapsed:.1f} s")
    return exit_code


# -- argument handling ---------------------------------------------------


def _preprocess(argv):
    """Glue '--grid -1:1:51' into '--grid=-1:1:51' so argparse keeps it."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--grid":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"--grid={nxt}")
        else:
            out.append(tok)
    return out


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tauforge",
        description="tau-function experiments: factorization, KdV, Ernst")
    sub = parser.add_subparsers(dest="pipeline", required=True)
    helps = {
        "selftest": "run the cross-module invariant suite",
        "kdv": "KdV tau grid with PDE residual checks",
        "ernst": "Ernst closed-form tau field and conformal factor",
        "birkhoff": "random-loop factorization round trips",
    }
    for name in PIPELINES:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--preset", help="preset name, e.g. kasner:a=0.7")
        p.add_argument("--seed-file", dest="seed_file",
                       help="flat key=value config file")
        p.add_argument("--grid", help="min:max:count[,min:max:count]")
        p.add_argument("--trunc", type=int, help="Fourier truncation order N")
        p.add_argument("--samples", type=int, help="circle sample count M")
        p.add_argument("--out", help="directory for CSV and manifest")
        p.add_argument("--threads", type=int, help="fork-join worker count")
        p.add_argument("--tol-factor", dest="tol_factor", type=float,
                       help="factorization residual tolerance")
        p.add_argument("--tol-path", dest="tol_path", type=float,
                       help="path refinement tolerance")
        p.add_argument("--tol-residual", dest="tol_residual", type=float,
                       help="PDE residual tolerance")
        p.add_argument("--tol-headline", dest="tol_headline", type=float,
                       help="d log tau vs q mismatch tolerance")
        p.add_argument("--rng-seed", dest="rng_seed", type=int,
                       help="random generator seed")
        p.add_argument("--count", type=int, help="birkhoff batch size")
        p.add_argument("--strength", type=float,
                       help="random tangent amplitude")
    return parser


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    values = {}
    if args.seed_file:
        values.update(load_seed_file(args.seed_file))
    for key in _CONFIG_TYPES:
        given = getattr(args, key, None)
        if given is not None:
            values[key] = given
    return ExperimentConfig(pipeline=args.pipeline,
                            seed_file=args.seed_file or "", **values)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = _parser().parse_args(_preprocess(argv))
    try:
        config = build_config(args)
    except ConfigError as err:
        print(f"configuration error: {err}")
        return EXIT_CONFIG
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
