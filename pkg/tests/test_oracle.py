import numpy as np
import pytest

from conspar.degenerate import BoundaryMeasure
from conspar.errors import ArgumentError, ParameterError
from conspar.fields import constant_field, field_from_callable
from conspar.oracle import (
    EmpiricalMeasure,
    SdeSpec,
    compare_measures,
    kimura_sde,
    simulate,
    sis_sde,
)
from conspar.sturm import Grid

GRID = Grid(0.0, 1.0, 401)


@pytest.fixture(scope="module")
def neutral_run():
    spec = kimura_sde(constant_field(0.0), 0.3, dt=1e-4, horizon=10.0, replicates=4000, seed=21)
    return spec, simulate(spec, [0.5, 2.0, 10.0])


class TestSpecValidation:
    def test_bad_parameters(self):
        drift = constant_field(0.0)
        vol2 = field_from_callable(lambda x: 2 * np.asarray(x) * (1 - np.asarray(x)), "v")
        with pytest.raises(ParameterError):
            SdeSpec(drift, vol2, "bouncing", 0.3, 1e-4, 1.0, 100, 0)
        with pytest.raises(ParameterError):
            SdeSpec(drift, vol2, "absorbing", 0.3, -1e-4, 1.0, 100, 0)
        with pytest.raises(ParameterError):
            SdeSpec(drift, vol2, "absorbing", 0.3, 1e-4, 1.0, 0, 0)
        with pytest.raises(ParameterError):
            SdeSpec(drift, vol2, "absorbing", 1.5, 1e-4, 1.0, 100, 0)

    def test_negative_volatility_rejected(self):
        drift = constant_field(0.0)
        bad = constant_field(-1.0)
        with pytest.raises(ParameterError):
            SdeSpec(drift, bad, "absorbing", 0.3, 1e-4, 1.0, 100, 0)


class TestSimulate:
    def test_frozen_dynamics_stay_put(self):
        spec = SdeSpec(
            drift=constant_field(0.0),
            squared_volatility=constant_field(0.0),
            boundary_at_1="absorbing",
            x0=0.4,
            dt=1e-3,
            horizon=1.0,
            replicates=500,
            seed=3,
        )
        (m,) = simulate(spec, [1.0], bins=50)
        assert m.count_at_0 == 0 and m.count_at_1 == 0
        bin_of_04 = int(0.4 * 50)
        assert m.counts[bin_of_04] == 500

    def test_neutral_fixation_probability(self, neutral_run):
        _, measures = neutral_run
        final = measures[-1]
        se = max(final.standard_errors["mass_at_1"], 1e-6)
        assert abs(final.mass_at_1 - 0.3) <= 3 * se

    def test_counting_identity(self, neutral_run):
        _, measures = neutral_run
        assert all(m.counting_identity() for m in measures)

    def test_reproducibility_bit_identical(self, neutral_run):
        spec, measures = neutral_run
        again = simulate(spec, [0.5, 2.0, 10.0])
        for a, b in zip(measures, again):
            assert np.array_equal(a.counts, b.counts)
            assert a.count_at_0 == b.count_at_0
            assert a.count_at_1 == b.count_at_1

    def test_absorbed_mass_nondecreasing(self, neutral_run):
        _, measures = neutral_run
        for attr in ("count_at_0", "count_at_1"):
            vals = [getattr(m, attr) for m in measures]
            assert vals == sorted(vals)

    def test_dt_halving_weak_consistency(self):
        halves = []
        for dt in (2e-4, 1e-4):
            spec = kimura_sde(constant_field(0.0), 0.3, dt=dt, horizon=5.0, replicates=3000, seed=9)
            (m,) = simulate(spec, [5.0])
            halves.append(m)
        se = np.hypot(
            halves[0].standard_errors["mass_at_0"], halves[1].standard_errors["mass_at_0"]
        )
        assert abs(halves[0].mass_at_0 - halves[1].mass_at_0) <= 3 * se

    def test_sis_reflects_at_one(self):
        spec = sis_sde(2.0, 0.9, dt=1e-4, horizon=1.0, replicates=1000, seed=5)
        (m,) = simulate(spec, [1.0])
        assert m.count_at_1 == 0
        assert m.counting_identity()

    def test_initial_density_sampling(self):
        dens = np.zeros(401)
        dens[150:251] = 1.0  # uniform on [0.375, 0.625]
        spec = SdeSpec(
            drift=constant_field(0.0),
            squared_volatility=constant_field(0.0),
            boundary_at_1="absorbing",
            x0=dens,
            dt=1e-3,
            horizon=0.01,
            replicates=2000,
            seed=1,
        )
        (m,) = simulate(spec, [0.01], bins=8)
        # bins 3 and 4 cover [0.375, 0.625]; the linear-interpolated CDF
        # smears the density jump over one half-cell at each edge
        inside = m.counts[3] + m.counts[4]
        assert inside >= 1950
        assert m.count_at_0 == 0 and m.count_at_1 == 0
        assert m.counts[0] == 0 and m.counts[-1] == 0

    def test_dt_warning(self):
        spec = kimura_sde(constant_field(0.0), 0.3, dt=5e-2, horizon=0.5, replicates=50, seed=2)
        with pytest.warns(UserWarning, match="bin-resolution"):
            simulate(spec, [0.5])

    def test_unsorted_snapshots_rejected(self):
        spec = kimura_sde(constant_field(0.0), 0.3, replicates=10)
        with pytest.raises(ArgumentError):
            simulate(spec, [2.0, 1.0])


class TestCompare:
    def _measure_from_counts(self, counts, c0, c1, t=1.0):
        counts = np.asarray(counts, dtype=np.int64)
        return EmpiricalMeasure(
            time=t,
            bin_edges=np.linspace(0, 1, counts.size + 1),
            counts=counts,
            count_at_0=c0,
            count_at_1=c1,
            n_paths=int(counts.sum()) + c0 + c1,
        )

    def _uniform_bm(self, atom0, atom1, t=1.0):
        dens = np.full(GRID.n, 1.0 - atom0 - atom1)
        return BoundaryMeasure(atom0=atom0, density=dens, atom1=atom1, time=t, grid=GRID)

    def test_matching_measures_pass(self):
        emp = self._measure_from_counts(np.full(50, 10), 250, 250)
        bm = self._uniform_bm(0.25, 0.25)
        rep = compare_measures(emp, bm)
        assert rep.z_atom0 <= 0.01 and rep.z_atom1 <= 0.01
        assert rep.cdf_sup_distance <= 1e-3
        assert rep.passed

    def test_perturbed_atom_flagged(self):
        emp = self._measure_from_counts(np.full(50, 10), 250, 250)
        bm = self._uniform_bm(0.35, 0.25)  # +0.1 deliberate shift
        rep = compare_measures(emp, bm)
        assert rep.z_atom0 > 3.0
        assert not rep.passed

    def test_time_mismatch_rejected(self):
        emp = self._measure_from_counts(np.full(10, 10), 0, 0, t=1.0)
        bm = self._uniform_bm(0.0, 0.0, t=2.0)
        with pytest.raises(ArgumentError):
            compare_measures(emp, bm)

    def test_support_mismatch_rejected(self):
        emp = self._measure_from_counts(np.full(10, 10), 0, 0)
        dens = np.full(201, 0.5)
        bm = BoundaryMeasure(
            atom0=0.0, density=dens, atom1=0.0, time=1.0, grid=Grid(0.0, 2.0, 201)
        )
        with pytest.raises(ArgumentError):
            compare_measures(emp, bm)

    def test_joint_neutral_run(self, neutral_run):
        from conspar.degenerate import kimura_model, masses_from_conservation, solve_interior
        from conspar.fields import fixation_probability

        _, measures = neutral_run
        model = kimura_model(constant_field(0.0))
        r0 = np.zeros(GRID.n)
        r0[int(round(0.3 / GRID.h))] = 1.0 / GRID.h
        sol = solve_interior(model, r0, 10.0, [0.5, 2.0, 10.0], GRID)
        phi = fixation_probability(model.psi)
        a, b = masses_from_conservation(sol.trajectory, r0, 0.0, 0.0, phi)
        for i, emp in enumerate(measures):
            bm = BoundaryMeasure(
                atom0=a[i],
                density=np.clip(sol.trajectory.values[i], 0.0, None),
                atom1=b[i],
                time=emp.time,
                grid=GRID,
            )
            rep = compare_measures(emp, bm)
            assert rep.passed, rep
