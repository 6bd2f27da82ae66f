"""Stochastic cross-validation of the PDE solvers.

The forward equation du/dt = (g u)'' - (g psi u)' is the Kolmogorov
forward equation of the diffusion dX = g psi dt + sqrt(2 g) dW, and the
epidemic model matches dX = x(R0(1-x) - 1) dt + sqrt(x(R0(1-x)+1)) dW.
Reading the PDEs this way is a modeling assumption of the oracle, recorded
in run manifests as ``assumption: sde_matching``.

Paths are advanced by Euler-Maruyama with absorption at 0 (and at 1, or
reflection there for the epidemic model). Randomness is counter-based
per fixed-size path block, keyed by (seed, block index), so results are
bit-reproducible and independent of execution order; blocks may be
simulated in parallel and aggregation is a deterministic reduction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ArgumentError, ParameterError
from .fields import CoefficientField, field_from_callable
from .sturm import Grid

BLOCK_SIZE = 4096


@dataclass(frozen=True, eq=False)
class SdeSpec:
    """Simulation inputs for the boundary-absorbed diffusion."""

    drift: CoefficientField
    squared_volatility: CoefficientField
    boundary_at_1: str  # "absorbing" | "reflecting"
    x0: Union[float, np.ndarray]  # point mass or density on a uniform grid
    dt: float
    horizon: float
    replicates: int
    seed: int

    def __post_init__(self):
        if self.boundary_at_1 not in ("absorbing", "reflecting"):
            raise ParameterError("boundary_at_1 must be 'absorbing' or 'reflecting'")
        if self.dt <= 0 or self.horizon <= 0:
            raise ParameterError("dt and horizon must be positive")
        if self.replicates < 1:
            raise ParameterError("need at least one replicate")
        if self.squared_volatility.min_sample() < -1e-12:
            raise ParameterError("squared volatility must be nonnegative")
        if np.isscalar(self.x0) and not 0.0 < float(self.x0) < 1.0:
            raise ParameterError("x0 must lie in the open interval (0, 1)")


def kimura_sde(
    psi: CoefficientField,
    x0,
    dt: float = 1e-4,
    horizon: float = 20.0,
    replicates: int = 10_000,
    seed: int = 0,
) -> SdeSpec:
    """Diffusion whose forward equation is the gene-frequency model:
    drift g psi, squared volatility 2 g, both endpoints absorbing."""
    g = lambda x: np.asarray(x) * (1.0 - np.asarray(x))  # noqa: E731
    drift = field_from_callable(lambda x: g(x) * np.asarray(psi(x)), "kimura_drift")
    vol2 = field_from_callable(lambda x: 2.0 * g(x), "kimura_vol2")
    return SdeSpec(
        drift=drift,
        squared_volatility=vol2,
        boundary_at_1="absorbing",
        x0=x0,
        dt=dt,
        horizon=horizon,
        replicates=replicates,
        seed=seed,
    )


def sis_sde(
    R0: float,
    x0,
    dt: float = 1e-4,
    horizon: float = 10.0,
    replicates: int = 10_000,
    seed: int = 0,
) -> SdeSpec:
    """Diffusion matching the epidemic model: drift x(R0(1-x) - 1),
    squared volatility x(R0(1-x) + 1), reflecting at 1."""
    if R0 <= 0:
        raise ParameterError("R0 must be positive")
    drift = field_from_callable(
        lambda x: np.asarray(x) * (R0 * (1 - np.asarray(x)) - 1.0), "sis_drift_sde"
    )
    vol2 = field_from_callable(
        lambda x: np.asarray(x) * (R0 * (1 - np.asarray(x)) + 1.0), "sis_vol2"
    )
    return SdeSpec(
        drift=drift,
        squared_volatility=vol2,
        boundary_at_1="reflecting",
        x0=x0,
        dt=dt,
        horizon=horizon,
        replicates=replicates,
        seed=seed,
    )


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Counting measure of a path ensemble at one snapshot time.

    Masses are exact count ratios: count_at_0 + count_at_1 + sum(counts)
    equals n_paths by construction.
    """

    time: float
    bin_edges: np.ndarray
    counts: np.ndarray  # interior histogram counts
    count_at_0: int
    count_at_1: int
    n_paths: int

    @property
    def mass_at_0(self) -> float:
        return self.count_at_0 / self.n_paths

    @property
    def mass_at_1(self) -> float:
        return self.count_at_1 / self.n_paths

    @property
    def histogram(self) -> np.ndarray:
        return self.counts / self.n_paths

    @property
    def interior_mass(self) -> float:
        return int(self.counts.sum()) / self.n_paths

    def counting_identity(self) -> bool:
        return self.count_at_0 + self.count_at_1 + int(self.counts.sum()) == self.n_paths

    @property
    def standard_errors(self) -> dict:
        def se(p):
            return float(np.sqrt(max(p * (1.0 - p), 0.0) / self.n_paths))

        return {
            "mass_at_0": se(self.mass_at_0),
            "mass_at_1": se(self.mass_at_1),
            "interior": se(self.interior_mass),
        }


def _sample_initial(x0, n: int, rng) -> np.ndarray:
    if np.isscalar(x0):
        return np.full(n, float(x0))
    density = np.asarray(x0, dtype=float)
    grid = np.linspace(0.0, 1.0, density.size)
    cdf = np.concatenate(
        [[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(grid))]
    )
    if cdf[-1] <= 0:
        raise ParameterError("initial density has no mass")
    cdf /= cdf[-1]
    u = rng.random(n)
    return np.clip(np.interp(u, cdf, grid), 1e-12, 1 - 1e-12)


def simulate(
    spec: SdeSpec,
    snapshot_times: Sequence[float],
    bins: int = 50,
    block_size: int = BLOCK_SIZE,
) -> list:
    """Euler-Maruyama ensemble; returns one EmpiricalMeasure per snapshot.

    Volatility is evaluated at the pre-step point with the square-root
    argument clamped at zero; a step crossing 0 absorbs the path there,
    and a step crossing 1 absorbs or reflects (by folding) per
    ``boundary_at_1``.
    """
    snapshot_times = np.asarray(snapshot_times, dtype=float)
    if snapshot_times.size == 0:
        raise ArgumentError("need at least one snapshot time")
    if np.any(np.diff(snapshot_times) < 0):
        raise ArgumentError("snapshot times must be sorted")
    if float(snapshot_times[-1]) > spec.horizon + 1e-12:
        raise ArgumentError("snapshot beyond the simulation horizon")

    dt = spec.dt
    bin_edges = np.linspace(0.0, 1.0, bins + 1)
    h_bin = 1.0 / bins
    vol2_max = max(spec.squared_volatility.max_sample(), 1e-12)
    if dt > h_bin**2 / vol2_max:
        warnings.warn(
            f"dt = {dt} exceeds the bin-resolution heuristic "
            f"{h_bin**2 / vol2_max:.2e}; boundary bias may be visible",
            stacklevel=2,
        )

    snap_steps = np.rint(snapshot_times / dt).astype(np.int64)
    n_snap = snapshot_times.size
    counts = np.zeros((n_snap, bins), dtype=np.int64)
    absorbed0 = np.zeros(n_snap, dtype=np.int64)
    absorbed1 = np.zeros(n_snap, dtype=np.int64)

    n_blocks = (spec.replicates + block_size - 1) // block_size
    for block in range(n_blocks):
        m = min(block_size, spec.replicates - block * block_size)
        key = np.array([np.uint64(spec.seed), np.uint64(block)], dtype=np.uint64)
        rng = np.random.Generator(np.random.Philox(key=key))
        x = _sample_initial(spec.x0, m, rng)
        dead0 = np.zeros(m, dtype=bool)
        dead1 = np.zeros(m, dtype=bool)
        alive_idx = np.arange(m)
        step = 0
        for si in range(n_snap):
            target = int(snap_steps[si])
            while step < target and alive_idx.size:
                xa = x[alive_idx]
                mu = np.asarray(spec.drift(xa), dtype=float)
                s2 = np.clip(
                    np.asarray(spec.squared_volatility(xa), dtype=float), 0.0, None
                )
                xa = xa + mu * dt + np.sqrt(s2 * dt) * rng.standard_normal(xa.size)
                hit0 = xa <= 0.0
                hit1 = xa >= 1.0
                if spec.boundary_at_1 == "reflecting":
                    xa = np.where(hit1, 2.0 - xa, xa)
                    hit0 = xa <= 0.0
                    hit1 = np.zeros_like(hit0)
                x[alive_idx] = xa
                if hit0.any() or hit1.any():
                    dead0[alive_idx[hit0]] = True
                    dead1[alive_idx[hit1]] = True
                    alive_idx = alive_idx[~(hit0 | hit1)]
                step += 1
            if step < target:  # every path absorbed; nothing left to advance
                step = target
            absorbed0[si] += int(dead0.sum())
            absorbed1[si] += int(dead1.sum())
            if alive_idx.size:
                c, _ = np.histogram(x[alive_idx], bins=bin_edges)
                counts[si] += c

    return [
        EmpiricalMeasure(
            time=float(snapshot_times[i]),
            bin_edges=bin_edges,
            counts=counts[i],
            count_at_0=int(absorbed0[i]),
            count_at_1=int(absorbed1[i]),
            n_paths=spec.replicates,
        )
        for i in range(n_snap)
    ]


@dataclass(frozen=True)
class ComparisonReport:
    """Discrepancy statistics between an empirical and a PDE measure."""

    time: float
    z_atom0: float
    z_atom1: float
    cdf_sup_distance: float
    se_limit: float
    cdf_tol: float
    atoms_pass: bool
    cdf_pass: bool

    @property
    def passed(self) -> bool:
        return self.atoms_pass and self.cdf_pass


def compare_measures(
    emp: EmpiricalMeasure,
    bm,
    se_limit: float = 3.0,
    cdf_tol: float = 0.02,
) -> ComparisonReport:
    """Atom discrepancies in standard-error units plus the sup distance of
    the unnormalized interior mass CDFs."""
    if abs(emp.time - bm.time) > 1e-9 * max(1.0, abs(bm.time)):
        raise ArgumentError(
            f"snapshot times differ: {emp.time} vs {bm.time}"
        )
    grid: Grid = bm.grid
    if abs(grid.a) > 1e-12 or abs(grid.b - 1.0) > 1e-12:
        raise ArgumentError("measure supports do not match the unit interval")

    def zscore(p_emp, p_pde):
        se = float(np.sqrt(max(p_emp * (1 - p_emp), 0.0) / emp.n_paths))
        se = max(se, 1.0 / emp.n_paths)
        return abs(p_emp - p_pde) / se

    z0 = zscore(emp.mass_at_0, bm.atom0)
    z1 = zscore(emp.mass_at_1, bm.atom1)

    nodes = grid.nodes
    dens = np.clip(bm.density, 0.0, None)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(nodes))])
    pde_cdf = np.interp(emp.bin_edges[1:], nodes, cum)
    emp_cdf = np.cumsum(emp.counts) / emp.n_paths
    cdf_sup = float(np.max(np.abs(pde_cdf - emp_cdf)))

    threshold = max(cdf_tol, 4.0 / np.sqrt(emp.n_paths))
    return ComparisonReport(
        time=emp.time,
        z_atom0=float(z0),
        z_atom1=float(z1),
        cdf_sup_distance=cdf_sup,
        se_limit=se_limit,
        cdf_tol=threshold,
        atoms_pass=bool(z0 <= se_limit and z1 <= se_limit),
        cdf_pass=bool(cdf_sup <= threshold),
    )
