"""Batch front door: config parsing, solver dispatch, reproducible outputs.

One run per process. A run reads a flat ``key = value`` config file plus
``--key value`` command-line overrides (CLI wins over file, file over
defaults), dispatches to the solver modules, and writes CSV outputs, a
run manifest with content digests, and optional long-format plot data.
Exit codes: 0 success, 2 config error, 3 numerical error, 4 validation
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .conservative import (
    build_totally_conservative,
    prescribe_moments,
    prescribed_moments_evolve,
    time_function,
)
from .degenerate import (
    RegularizationLadder,
    kimura_model,
    masses_from_boundary_flux,
    masses_from_conservation,
    sis_atom_mass,
    sis_model,
    solve_interior,
    solve_regularized,
    vanishing_limit,
    decompose_measure,
)
from .errors import (
    ConfigError,
    ConsparError,
    InputError,
    NumericalError,
    ValidationFailure,
)
from .expressions import parse_expression
from .fields import field_from_expression, field_from_table, fixation_probability
from .oracle import kimura_sde, simulate, sis_sde
from .sturm import Grid, assemble, eigensolve

_FLOAT_LIST = "float_list"
_COMMON = {
    "out": (str, None),
    "n": (int, 401),
    "seed": (int, 0),
    "emit_plot_data": (bool, False),
}
_SCHEMAS = {
    "kimura": {
        **_COMMON,
        "psi": (str, "0"),
        "psi_table": (str, ""),
        "u0": (str, "uniform"),
        "T": (float, 50.0),
        "times": (_FLOAT_LIST, [0.0, 1.0, 5.0, 10.0, 50.0]),
        "mode": (str, "interior"),
        "eps": (float, 1e-2),
        "ladder": (_FLOAT_LIST, [1e-1, 3e-2, 1e-2, 3e-3, 1e-3]),
    },
    "sis": {
        **_COMMON,
        "R0": (float, 2.0),
        "p0": (str, "uniform"),
        "T": (float, 10.0),
        "times": (_FLOAT_LIST, [0.0, 1.0, 2.0, 5.0, 10.0]),
        "mode": (str, "interior"),
        "eps": (float, 1e-2),
    },
    "spectrum": {
        **_COMMON,
        "p": (str, "1"),
        "q": (str, "0"),
        "weight": (str, "1"),
        "law1": (str, "1"),
        "law2": (str, "x"),
        "k": (int, 6),
    },
    "moments": {
        **_COMMON,
        "p": (str, "1"),
        "q": (str, "0"),
        "law1": (str, "1"),
        "law2": (str, "x"),
        "F1": (str, "1"),
        "F2": (str, "0"),
        "T": (float, 5.0),
        "times": (_FLOAT_LIST, None),  # default linspace(0, T, 26)
    },
    "oracle": {
        **_COMMON,
        "model": (str, "kimura"),
        "psi": (str, "0"),
        "R0": (float, 2.0),
        "x0": (float, 0.3),
        "dt": (float, 1e-4),
        "T": (float, 20.0),
        "replicates": (int, 10_000),
        "bins": (int, 50),
        "times": (_FLOAT_LIST, [1.0, 5.0, 20.0]),
    },
    "validate": {
        **_COMMON,
        "pde": (str, None),
        "oracle": (str, None),
        "se_limit": (float, 3.0),
    },
}


@dataclass
class RunConfig:
    command: str
    options: dict

    def __getitem__(self, key):
        return self.options[key]


@dataclass
class RunManifest:
    command: str
    config: dict
    checks: list = field(default_factory=list)  # (name, value, passed)
    warnings: list = field(default_factory=list)
    assumptions: list = field(default_factory=list)
    files: list = field(default_factory=list)  # (name, sha256)
    wallclock_s: float = 0.0

    def check(self, name: str, value, passed: bool):
        self.checks.append((name, value, bool(passed)))

    def all_passed(self) -> bool:
        return all(p for _, _, p in self.checks)

    def render(self) -> str:
        lines = [f"command = {self.command}", f"version = {__version__}"]
        for k in sorted(self.config):
            lines.append(f"config.{k} = {_fmt(self.config[k])}")
        lines.append(f"wallclock_s = {self.wallclock_s!r}")
        for name, value, passed in self.checks:
            lines.append(
                f"check: {name} = {_fmt(value)} [{'pass' if passed else 'fail'}]"
            )
        for w in self.warnings:
            lines.append(f"warning: {w}")
        for a in self.assumptions:
            lines.append(f"assumption: {a}")
        for name, digest in self.files:
            lines.append(f"file: {name} sha256={digest}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # shortest round-trip decimal
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _coerce(key: str, raw, kind, problems: list):
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        s = str(raw).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        problems.append(f"{key}: expected a boolean, got {raw!r}")
        return None
    if kind is _FLOAT_LIST:
        if isinstance(raw, (list, tuple)):
            return [float(x) for x in raw]
        try:
            return [float(tok) for tok in str(raw).split(",") if tok.strip()]
        except ValueError:
            problems.append(f"{key}: expected comma-separated numbers, got {raw!r}")
            return None
    try:
        return kind(raw)
    except (TypeError, ValueError):
        problems.append(f"{key}: expected {kind.__name__}, got {raw!r}")
        return None


def parse_config_file(path: Path) -> dict:
    out = {}
    text = path.read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError([f"{path}:{lineno}: expected 'key = value'"])
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_config(command: str, file_values: dict, cli_values: dict) -> RunConfig:
    """Merge defaults, file values, and CLI overrides; collect every
    problem before failing."""
    schema = _SCHEMAS[command]
    problems = []
    for src_name, values in (("config file", file_values), ("command line", cli_values)):
        for key in values:
            if key not in schema:
                problems.append(f"unknown key {key!r} in {src_name}")
    merged = {}
    for key, (kind, default) in schema.items():
        raw = cli_values.get(key, file_values.get(key, default))
        if raw is None and key in ("out", "pde", "oracle"):
            problems.append(f"{key}: required")
            continue
        merged[key] = (
            raw if raw is None else _coerce(key, raw, kind, problems)
        )
    _validate_semantics(command, merged, problems)
    if problems:
        raise ConfigError(problems)
    return RunConfig(command=command, options=merged)


def _validate_semantics(command: str, cfg: dict, problems: list):
    times = cfg.get("times")
    if times is not None and np.any(np.diff(times) < 0):
        problems.append("times: must be sorted ascending")
    n = cfg.get("n")
    if n is not None and not 5 <= n <= 100_001:
        problems.append("n: must be between 5 and 100001")
    for key in ("T", "eps", "dt", "R0", "se_limit"):
        if key in cfg and cfg[key] is not None and cfg[key] <= 0:
            problems.append(f"{key}: must be positive")
    if command in ("kimura", "sis") and cfg.get("mode") not in (
        "interior",
        "regularized",
        "ladder",
    ):
        problems.append("mode: must be interior, regularized, or ladder")
    if command == "sis" and cfg.get("mode") == "ladder":
        problems.append("mode: ladder runs are only wired for the kimura command")
    if command == "kimura" and cfg.get("psi_table"):
        if not Path(cfg["psi_table"]).is_file():
            problems.append(f"psi_table: no such file {cfg['psi_table']!r}")
    if command == "oracle":
        if cfg.get("model") not in ("kimura", "sis"):
            problems.append("model: must be kimura or sis")
        x0 = cfg.get("x0")
        if x0 is not None and not 0 < x0 < 1:
            problems.append("x0: must lie strictly inside (0, 1)")
    if command == "validate":
        for key in ("pde", "oracle"):
            path = cfg.get(key)
            if path and not (Path(path) / ("masses.csv" if key == "pde" else "oracle.csv")).is_file():
                problems.append(f"{key}: {path!r} does not contain a prior run")
    ladder = cfg.get("ladder")
    if ladder is not None and (
        any(e <= 0 for e in ladder) or any(b >= a for a, b in zip(ladder, ladder[1:]))
    ):
        problems.append("ladder: must be strictly decreasing positive values")
    times = cfg.get("times")
    T = cfg.get("T")
    if times is not None and T is not None and times and max(times) > T + 1e-12:
        problems.append("times: beyond the horizon T")


# ----------------------------------------------------------------------
# Output writers


def _write_atomic(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(rows, header) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_outputs(outdir: Path, files: dict, manifest: RunManifest):
    """Write every output atomically and record content digests."""
    outdir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        _write_atomic(outdir / name, text)
        digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
        manifest.files.append((name, digest))
    _write_atomic(outdir / "manifest.txt", manifest.render())


def _density_files(times, grid, rows_by_time) -> dict:
    files = {}
    for t, dens in zip(times, rows_by_time):
        name = f"density_t{float(t)!r}.csv"
        files[name] = _csv(zip(grid.nodes, dens), header=("x", "r"))
    return files


def _plot_files(times, grid, rows_by_time, masses_rows) -> dict:
    long_rows = []
    for t, dens in zip(times, rows_by_time):
        for x, r in zip(grid.nodes, dens):
            long_rows.append((t, x, r))
    files = {"plotdata_density.csv": _csv(long_rows, header=("t", "x", "r"))}
    series_rows = []
    for row in masses_rows:
        t = row[0]
        for name, v in zip(("atom0", "atom1", "interior_mass", "total_mass", "phi_moment"), row[1:]):
            series_rows.append((t, name, v))
    files["plotdata_masses.csv"] = _csv(series_rows, header=("t", "series", "value"))
    return files


# ----------------------------------------------------------------------
# Command implementations


def _field_from_config(expr: str, table_path: str = ""):
    if table_path:
        data = np.genfromtxt(table_path, delimiter=",", names=True)
        return field_from_table(data["x"], data["value"])
    return field_from_expression(expr)


def _initial_density(spec: str, grid: Grid) -> np.ndarray:
    if spec == "uniform":
        return np.ones(grid.n)
    if spec.startswith("delta:"):
        x0 = float(spec.split(":", 1)[1])
        if not 0 < x0 < 1:
            raise InputError("delta position must lie inside (0, 1)")
        vals = np.zeros(grid.n)
        vals[int(round((x0 - grid.a) / grid.h))] = 1.0 / grid.h
        return vals
    f = field_from_expression(spec)
    vals = f(grid.nodes)
    if np.any(vals < 0):
        raise InputError("initial density must be nonnegative")
    return vals


def _run_kimura(cfg: RunConfig, manifest: RunManifest) -> dict:
    grid = Grid(0.0, 1.0, cfg["n"])
    psi = _field_from_config(cfg["psi"], cfg["psi_table"])
    model = kimura_model(psi)
    phi = fixation_probability(psi)
    u0 = _initial_density(cfg["u0"], grid)
    times = np.asarray(cfg["times"], dtype=float)
    mode = cfg["mode"]

    if mode == "interior":
        sol = solve_interior(model, u0, cfg["T"], times, grid)
        traj = sol.trajectory
        a, b = masses_from_conservation(traj, u0, 0.0, 0.0, phi)
        dens = traj.values
        out_times = traj.times
        if psi.continuous_tier:
            tf, af, bf = masses_from_boundary_flux(sol.traces, 0.0, 0.0)
            agree = float(
                max(
                    np.max(np.abs(a - np.interp(out_times, tf, af))),
                    np.max(np.abs(b - np.interp(out_times, tf, bf))),
                )
            )
            manifest.check("flux_vs_conservation_masses", agree, agree <= 1e-3)
        else:
            manifest.warnings.append(
                "tabulated-linear drift: flux-form masses unavailable, "
                "conservation form only"
            )
    elif mode == "regularized":
        sol = solve_regularized(model, u0, cfg["eps"], times, grid)
        dens = sol.trajectory.values
        out_times = sol.trajectory.times
        decomposed = [decompose_measure(v, grid, t) for v, t in zip(dens, out_times)]
        a = np.array([d.atom0 for d in decomposed])
        b = np.array([d.atom1 for d in decomposed])
        dens = np.stack([d.density for d in decomposed])
    else:
        ladder = RegularizationLadder(g=model.g, epsilons=tuple(cfg["ladder"]))
        res = vanishing_limit(model, u0, ladder, times, grid)
        if res.warning:
            manifest.warnings.append(res.warning)
        manifest.assumptions.append("richardson_order1")
        if np.isfinite(res.extrapolation_ratio):
            manifest.warnings.append(
                "ladder differences decay geometrically (ratio "
                f"{res.extrapolation_ratio:.3f}); extrapolation used the "
                "estimated ratio instead of the first-order form"
            )
        a = np.array([m.atom0 for m in res.measures])
        b = np.array([m.atom1 for m in res.measures])
        dens = np.stack([m.density for m in res.measures])
        out_times = times

    nodes = grid.nodes
    phiv = phi(nodes)
    interior = np.array([float(np.trapezoid(d, nodes)) for d in dens])
    total = a + b + interior
    phimom = b + np.array([float(np.trapezoid(d * phiv, nodes)) for d in dens])
    mass_drift = float(np.max(np.abs(total - total[0])))
    mom_drift = float(np.max(np.abs(phimom - phimom[0])))
    manifest.check("total_mass_drift", mass_drift, mass_drift <= 1e-4)
    manifest.check("phi_moment_drift", mom_drift, mom_drift <= 1e-4)
    min_atom = float(min(a.min(), b.min()))
    manifest.check("atom_admissibility", min_atom, min_atom >= -1e-8)

    rows = list(zip(out_times, a, b, interior, total, phimom))
    files = {
        "masses.csv": _csv(
            rows,
            header=("t", "atom0", "atom1", "interior_mass", "total_mass", "phi_moment"),
        )
    }
    files.update(_density_files(out_times, grid, dens))
    if cfg["emit_plot_data"]:
        files.update(_plot_files(out_times, grid, dens, rows))
    return files


def _run_sis(cfg: RunConfig, manifest: RunManifest) -> dict:
    grid = Grid(0.0, 1.0, cfg["n"])
    model = sis_model(cfg["R0"])
    p0 = _initial_density(cfg["p0"], grid)
    times = np.asarray(cfg["times"], dtype=float)

    if cfg["mode"] == "interior":
        sol = solve_interior(model, p0, cfg["T"], times, grid)
        traj = sol.trajectory
        ta, a_curve = sis_atom_mass(sol.traces, 0.0, cfg["R0"])
        a = np.interp(traj.times, ta, a_curve)
        dens = traj.values
        out_times = traj.times
        r = dens[-1]
        h = grid.h
        drx = (3 * r[-1] - 4 * r[-2] + r[-3]) / (2 * h)
        robin = abs(0.5 * ((1 - cfg["R0"]) * r[-1] + drx) + r[-1])
        manifest.check("robin_residual_at_1", robin, robin <= 1e-3)
        mono = bool(np.all(np.diff(a_curve) >= -1e-10))
        manifest.check("atom_mass_nondecreasing", mono, mono)
    else:
        sol = solve_regularized(model, p0, cfg["eps"], times, grid)
        dens = sol.trajectory.values
        out_times = sol.trajectory.times
        decomposed = [decompose_measure(v, grid, t) for v, t in zip(dens, out_times)]
        a = np.array([d.atom0 for d in decomposed])
        dens = np.stack([d.density for d in decomposed])

    nodes = grid.nodes
    interior = np.array([float(np.trapezoid(d, nodes)) for d in dens])
    b = np.zeros_like(a)
    total = a + interior
    mass_err = float(np.max(np.abs(total - total[0])))
    manifest.check("total_mass_drift", mass_err, mass_err <= 1e-4)

    rows = list(zip(out_times, a, b, interior, total, total))
    files = {
        "masses.csv": _csv(
            rows,
            header=("t", "atom0", "atom1", "interior_mass", "total_mass", "phi_moment"),
        )
    }
    files.update(_density_files(out_times, grid, dens))
    if cfg["emit_plot_data"]:
        files.update(_plot_files(out_times, grid, dens, rows))
    return files


def _run_spectrum(cfg: RunConfig, manifest: RunManifest) -> dict:
    grid = Grid(0.0, 1.0, cfg["n"])
    p = field_from_expression(cfg["p"])
    q = field_from_expression(cfg["q"])
    w = field_from_expression(cfg["weight"])
    law1 = field_from_expression(cfg["law1"])
    law2 = field_from_expression(cfg["law2"])
    problem = build_totally_conservative(p, q, law1, law2, grid, weight=w)
    op = assemble(problem.sl, grid)
    eig = eigensolve(op, k=cfg["k"])
    manifest.check("zero_multiplicity", eig.zero_multiplicity, eig.zero_multiplicity >= 1)
    if eig.eigenvalues.size >= 3 and eig.zero_multiplicity == 2:
        ok = bool(
            np.all(np.abs(eig.eigenvalues[:2]) <= 1e-8 * max(eig.eigenvalues[2], 1e-300))
        )
        manifest.check("double_zero_below_1e-8_lambda3", float(np.abs(eig.eigenvalues[:2]).max()), ok)
    rows = [
        (k + 1, lam, res)
        for k, (lam, res) in enumerate(zip(eig.eigenvalues, eig.bc_residuals))
    ]
    return {"eigenvalues.csv": _csv(rows, header=("k", "lambda", "bc_residual"))}


def _run_moments(cfg: RunConfig, manifest: RunManifest) -> dict:
    grid = Grid(0.0, 1.0, cfg["n"])
    p = field_from_expression(cfg["p"])
    q = field_from_expression(cfg["q"])
    law1 = field_from_expression(cfg["law1"])
    law2 = field_from_expression(cfg["law2"])
    problem = build_totally_conservative(p, q, law1, law2, grid)
    op = assemble(problem.sl, grid)
    eig = eigensolve(op)

    def tf(expr_text):
        expr = parse_expression(expr_text, variable="t")
        return time_function(lambda t: float(expr(t)))

    F1, F2 = tf(cfg["F1"]), tf(cfg["F2"])
    pres = prescribe_moments(problem, F1, F2)
    v0 = F1.value(0.0) * pres.phi1 + F2.value(0.0) * pres.phi2
    times = cfg["times"]
    times = np.linspace(0.0, cfg["T"], 26) if times is None else np.asarray(times)
    v_traj, w_traj = prescribed_moments_evolve(eig, v0, pres, times)

    mu = grid.cell_weights()
    m1 = v_traj.values @ (mu * pres.weight * pres.phi1)
    m2 = v_traj.values @ (mu * pres.weight * pres.phi2)
    t1 = np.array([F1.value(float(t)) for t in times])
    t2 = np.array([F2.value(float(t)) for t in times])
    err = float(max(np.max(np.abs(m1 - t1)), np.max(np.abs(m2 - t2))))
    manifest.check("moment_tracking_error", err, err <= 1e-4)
    zero = float(np.max(np.abs(w_traj.values @ (mu * pres.weight * pres.phi1))))
    manifest.check("zero_moment_part", zero, zero <= 1e-6)

    rows = zip(times, t1, m1, t2, m2)
    return {
        "moments.csv": _csv(
            rows, header=("t", "target1", "moment1", "target2", "moment2")
        )
    }


def _run_oracle(cfg: RunConfig, manifest: RunManifest) -> dict:
    if cfg["model"] == "kimura":
        psi = field_from_expression(cfg["psi"])
        spec = kimura_sde(
            psi,
            cfg["x0"],
            dt=cfg["dt"],
            horizon=cfg["T"],
            replicates=cfg["replicates"],
            seed=cfg["seed"],
        )
    else:
        spec = sis_sde(
            cfg["R0"],
            cfg["x0"],
            dt=cfg["dt"],
            horizon=cfg["T"],
            replicates=cfg["replicates"],
            seed=cfg["seed"],
        )
    measures = simulate(spec, cfg["times"], bins=cfg["bins"])
    manifest.assumptions.append("sde_matching")
    identity = all(m.counting_identity() for m in measures)
    manifest.check("counting_identity", identity, identity)
    rows = [
        (
            m.time,
            m.mass_at_0,
            m.mass_at_1,
            m.interior_mass,
            m.standard_errors["mass_at_0"],
            m.standard_errors["mass_at_1"],
        )
        for m in measures
    ]
    return {
        "oracle.csv": _csv(
            rows, header=("t", "mass0", "mass1", "interior", "se_mass0", "se_mass1")
        )
    }


def _read_csv(path: Path) -> dict:
    data = np.genfromtxt(path, delimiter=",", names=True)
    if data.shape == ():
        data = data.reshape(1)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


def _run_validate(cfg: RunConfig, manifest: RunManifest) -> dict:
    pde = _read_csv(Path(cfg["pde"]) / "masses.csv")
    mc = _read_csv(Path(cfg["oracle"]) / "oracle.csv")
    manifest.assumptions.append("sde_matching")
    rows = []
    worst = 0.0
    matched = 0
    for i, t in enumerate(mc["t"]):
        j = np.where(np.abs(pde["t"] - t) <= 1e-9 * max(1.0, abs(t)))[0]
        if j.size == 0:
            continue
        matched += 1
        j = int(j[0])
        se0 = max(mc["se_mass0"][i], 1e-12)
        se1 = max(mc["se_mass1"][i], 1e-12)
        z0 = abs(mc["mass0"][i] - pde["atom0"][j]) / se0
        z1 = abs(mc["mass1"][i] - pde["atom1"][j]) / se1
        worst = max(worst, z0, z1)
        ok = z0 <= cfg["se_limit"] and z1 <= cfg["se_limit"]
        rows.append(
            (
                float(t),
                float(pde["atom0"][j]),
                float(mc["mass0"][i]),
                float(se0),
                float(z0),
                float(pde["atom1"][j]),
                float(mc["mass1"][i]),
                float(se1),
                float(z1),
                int(ok),
            )
        )
    if matched == 0:
        raise ConfigError(["validate: the two runs share no snapshot times"])
    manifest.check("max_atom_discrepancy_se", worst, worst <= cfg["se_limit"])
    header = (
        "t",
        "atom0_pde",
        "mass0_mc",
        "se_mass0",
        "z0",
        "atom1_pde",
        "mass1_mc",
        "se_mass1",
        "z1",
        "pass",
    )
    return {"report.csv": _csv(rows, header=header)}


_RUNNERS = {
    "kimura": _run_kimura,
    "sis": _run_sis,
    "spectrum": _run_spectrum,
    "moments": _run_moments,
    "oracle": _run_oracle,
    "validate": _run_validate,
}


def run(config: RunConfig) -> RunManifest:
    """Execute one run: solve, write outputs, return the manifest.

    Raises ValidationFailure after writing everything when a check fails.
    """
    manifest = RunManifest(command=config.command, config=dict(config.options))
    started = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        files = _RUNNERS[config.command](config, manifest)
    for w in caught:
        manifest.warnings.append(str(w.message))
    manifest.wallclock_s = time.perf_counter() - started
    for w in manifest.warnings:
        print(f"warning: {w}", file=sys.stderr)
    write_outputs(Path(config["out"]), files, manifest)
    if not manifest.all_passed():
        failed = [name for name, _, ok in manifest.checks if not ok]
        raise ValidationFailure(f"checks failed: {', '.join(failed)}")
    return manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="conspar",
        description=(
            "Conservation-law-constrained drift-diffusion solvers: "
            "spectral, degenerate-boundary, and Monte Carlo runs"
        ),
    )
    parser.add_argument("command", choices=sorted(_SCHEMAS))
    parser.add_argument("--config", type=Path, help="flat key = value config file")
    args, rest = parser.parse_known_args(argv)

    cli_values = {}
    problems = []
    i = 0
    while i < len(rest):
        tok = rest[i]
        if not tok.startswith("--"):
            problems.append(f"unexpected argument {tok!r}")
            i += 1
            continue
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
        elif i + 1 < len(rest):
            val = rest[i + 1]
            i += 1
        else:
            val = "true"  # bare flag
        cli_values[key] = val
        i += 1

    try:
        if problems:
            raise ConfigError(problems)
        file_values = parse_config_file(args.config) if args.config else {}
        config = build_config(args.command, file_values, cli_values)
        manifest = run(config)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except ValidationFailure as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return 4
    except ConsparError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for name, value, passed in manifest.checks:
        status = "pass" if passed else "fail"
        print(f"[{status}] {name} = {_fmt(value)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
