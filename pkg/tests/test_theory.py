"""Tests for the energy-density bound suite and terminal blow-up probes."""

import numpy as np
import pytest

from kinflow.efm import EfmField, GammaSchedule, MixtureModel, linear_schedule
from kinflow.theory import (blowup_probe, bound_constants, check_concentration,
                            check_energy_density_bounds,
                            check_local_gaussian_remainder,
                            check_score_remainder, integrated_energy_density,
                            sample_dominant_points, universal_lower_bound_check)
from kinflow.sampler import SolverConfig, integrate


def mix(atoms, schedule=None):
    return MixtureModel(np.asarray(atoms, dtype=float),
                        schedule or linear_schedule())


class TestBoundConstants:
    def test_linear_slopes_exact(self):
        m = mix(np.random.default_rng(0).standard_normal((5, 2)))
        for t in np.linspace(0.1, 0.9, 9):
            consts = bound_constants(m, float(t), 0, 0.1)
            assert abs(consts.lower_slope - 0.5) <= 1e-14
            assert abs(consts.upper_slope - 12.0) <= 1e-14

    def test_slope_ordering(self):
        quad = GammaSchedule(gamma=lambda t: t * t, gamma_dot=lambda t: 2 * t,
                             kind="custom")
        m = mix(np.random.default_rng(1).standard_normal((4, 3)), schedule=quad)
        consts = bound_constants(m, 0.4, 1, 0.2)
        assert consts.lower_slope <= consts.upper_slope
        assert np.isfinite(consts.offset)

    def test_single_atom_at_origin_offsets(self):
        # with the dominant mean at the origin and no spread, both offsets
        # collapse to the log-normalization slack terms
        m = mix([[0.0, 0.0]])
        consts = bound_constants(m, 0.5, 0, 0.1)
        assert consts.mean_spread == 0.0
        assert consts.drift_norm == 0.0
        assert consts.offset == pytest.approx(12.0 * consts.log_slack)


class TestEnergyDensityBounds:
    def test_single_atom_grid(self):
        m = mix([[0.7, -0.3]])
        grid = [(np.array([x, y]), t)
                for x in np.linspace(-2, 2, 20)
                for y in np.linspace(-2, 2, 20)
                for t in np.linspace(0.1, 0.9, 9)]
        report = check_energy_density_bounds(m, grid, eps=0.1)
        assert report.n_skipped == 0
        assert report.pass_rate == 1.0

    def test_zero_velocity_point(self):
        # z at the atom's bridge mean has zero velocity; the lower bound must
        # be non-positive there
        m = mix([[0.0, 0.0]])
        report = check_energy_density_bounds(m, [(np.zeros(2), 0.5)], eps=0.1)
        entry = report.entries[0]
        assert entry.energy == 0.0
        assert entry.lower <= 0.0
        assert entry.passed

    def test_sampled_dominant_points_pass(self):
        rng = np.random.default_rng(2)
        for dim in (1, 2, 5):
            for n in (1, 5, 50):
                atoms = 8.0 * rng.standard_normal((n, dim))
                m = mix(atoms)
                for eps in (0.05, 0.1, 0.3):
                    pts, _ = sample_dominant_points(
                        m, np.linspace(0.1, 0.9, 9), eps, 8, rng)
                    report = check_energy_density_bounds(m, pts, eps)
                    assert report.pass_rate == 1.0

    def test_non_dominant_points_skipped(self):
        m = mix([[-1.0, 0.0], [1.0, 0.0]])
        report = check_energy_density_bounds(m, [(np.zeros(2), 0.5)], eps=0.1)
        assert report.n_skipped == 1
        assert report.entries[0].skipped == "dominance"
        assert report.pass_rate == 1.0


class TestRemainders:
    def test_single_atom_log_remainder_zero(self):
        m = mix([[1.0, 2.0]])
        remainder, ok = check_local_gaussian_remainder(m, np.array([0.5, 0.5]),
                                                       0.4, 0.1)
        assert remainder == pytest.approx(0.0, abs=1e-12)
        assert ok

    def test_log_remainder_range_on_dominant_points(self):
        rng = np.random.default_rng(3)
        m = mix(6.0 * rng.standard_normal((10, 2)))
        pts, _ = sample_dominant_points(m, [0.3, 0.5, 0.7], 0.1, 50, rng)
        assert pts, "sampler found no dominant points"
        for z, t in pts:
            remainder, ok = check_local_gaussian_remainder(m, z, t, 0.1)
            assert ok
            assert np.log(0.9) - 1e-9 <= remainder <= 1e-9

    def test_score_remainder_single_atom_zero(self):
        m = mix([[1.0, -1.0]])
        norm, ok = check_score_remainder(m, np.array([2.0, 0.0]), 0.6, 0.05)
        assert norm == pytest.approx(0.0, abs=1e-12)
        assert ok

    def test_score_remainder_bound_on_dominant_points(self):
        rng = np.random.default_rng(4)
        m = mix(6.0 * rng.standard_normal((8, 3)))
        pts, _ = sample_dominant_points(m, [0.4, 0.6], 0.05, 50, rng)
        assert pts
        for z, t in pts:
            _, ok = check_score_remainder(m, z, t, 0.05)
            assert ok

    def test_identical_atoms_have_zero_spread(self):
        m = mix([[2.0, 2.0], [2.0, 2.0], [2.0, 2.0]])
        # every weight is 1/3, so no single component dominates at eps < 2/3,
        # but the score remainder is exactly zero by construction
        consts = bound_constants(m, 0.5, 0, 0.3)
        assert consts.mean_spread == 0.0

    def test_skipped_without_dominance(self):
        m = mix([[-1.0, 0.0], [1.0, 0.0]])
        assert check_local_gaussian_remainder(m, np.zeros(2), 0.5, 0.1) is None
        assert check_score_remainder(m, np.zeros(2), 0.5, 0.1) is None


class TestConcentration:
    def test_two_atom_margin_bound(self):
        # margin 1 at 1 - t = 0.1 gives the bound e^-50
        atoms = np.array([[0.0, 0.0], [10.0, 0.0]])
        m = mix(atoms)
        x = np.array([0.45, 0.0])
        ts = [0.9]
        s = ((x[None, :] - 0.9 * atoms) ** 2).sum(axis=1)
        margin = float(s[1] - s[0])
        assert margin > 1.0
        report = check_concentration(m, x, ts, margin=1.0)
        entry = report.entries[0]
        assert entry.margin_ok
        assert entry.bound == pytest.approx(np.exp(-50.0), rel=1e-12)
        assert entry.measured <= entry.bound
        assert entry.passed

    def test_single_atom_trivial(self):
        m = mix([[3.0, 3.0]])
        report = check_concentration(m, np.array([1.0, 1.0]), [0.5, 0.9],
                                     margin=1.0)
        for entry in report.entries:
            assert entry.bound == 0.0
            assert entry.measured == 0.0
            assert entry.passed

    def test_vacuous_bound(self):
        # zero margin makes the bound n - 1 >= 1, trivially satisfied
        m = mix([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
        report = check_concentration(m, np.array([0.2, 0.0]), [0.1], margin=0.0)
        assert report.entries[0].bound == pytest.approx(2.0)
        assert report.entries[0].passed

    def test_margin_violation_excluded(self):
        m = mix([[-1.0, 0.0], [1.0, 0.0]])
        report = check_concentration(m, np.zeros(2), [0.5, 0.9], margin=5.0)
        assert report.n_margin_invalid == 2
        assert report.all_passed  # nothing valid to check

    def test_never_violated_on_random_frozen_points(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            atoms = 4.0 * rng.standard_normal((6, 2))
            m = mix(atoms)
            x = atoms[0] + rng.uniform(0.2, 0.5) * rng.standard_normal(2)
            ts = np.linspace(0.9, 0.999, 15)
            s_end = ((x[None, :] - 0.999 * atoms) ** 2).sum(axis=1)
            order = np.sort(s_end)
            margin = 0.5 * (order[1] - order[0])
            if margin <= 0:
                continue
            report = check_concentration(m, x, ts, margin=margin)
            assert report.all_passed


class TestBlowupProbe:
    def test_single_atom_analytic(self):
        f = EfmField(np.array([[0.0, 0.0]]))
        x = np.array([1.0, 0.0])
        deltas = [1e-2, 1e-3, 1e-4]
        report = blowup_probe(f, x, c=1.0, deltas=deltas)
        for entry in report.entries:
            analytic = 1.0 / entry.delta - 1.0 / (1.0 - report.t_bar)
            assert entry.integral == pytest.approx(analytic, rel=1e-6)
            assert entry.passed

    def test_delta_halving_doubles_integral(self):
        rng = np.random.default_rng(6)
        atoms = 3.0 * rng.standard_normal((20, 2))
        f = EfmField(atoms)
        d2 = ((atoms[:, None] - atoms[None, :]) ** 2).sum(axis=2)
        np.fill_diagonal(d2, np.inf)
        j = int(np.argmax(np.sqrt(d2.min(axis=1))))
        x = atoms[j] + np.array([np.sqrt(d2.min(axis=1)[j]) / 3.0, 0.0])
        c = 0.9 * np.sqrt(((x[None] - atoms) ** 2).sum(axis=1)).min()
        report = blowup_probe(f, x, c=float(c), deltas=[1e-2, 5e-3, 2.5e-3])
        i_by_delta = {e.delta: e.integral for e in report.entries}
        assert 1.8 <= i_by_delta[5e-3] / i_by_delta[1e-2] <= 2.2
        assert 1.8 <= i_by_delta[2.5e-3] / i_by_delta[5e-3] <= 2.2
        assert report.all_passed

    def test_gap_scaling_quadruples_bound(self):
        f1 = EfmField(np.array([[0.0, 0.0]]))
        r1 = blowup_probe(f1, np.array([1.0, 0.0]), c=1.0, deltas=[1e-3])
        r2 = blowup_probe(f1, np.array([2.0, 0.0]), c=2.0, deltas=[1e-3])
        assert r2.entries[0].lower_bound == pytest.approx(
            4.0 * r1.entries[0].lower_bound, rel=1e-12)

    def test_noncollision_hypothesis_checked(self):
        f = EfmField(np.array([[0.0, 0.0]]))
        with pytest.raises(ValueError, match="non-collision"):
            blowup_probe(f, np.array([0.05, 0.0]), c=0.5, deltas=[1e-3])


class TestUniversalLowerBound:
    @staticmethod
    def straight_path(start, atom, times):
        frac = (times - times[0]) / (times[-1] - times[0])
        return start[None, :] + frac[:, None] * (atom - start)[None, :]

    def test_constant_speed_equality(self):
        # the remaining gap at t = 0.5 is (1, 0), so the tail bound is 2 and a
        # constant-speed closing path attains it exactly
        atom = np.array([1.0, 0.0])
        times = np.linspace(0.0, 1.0, 201)
        states = self.straight_path(np.array([-1.0, 0.0]), atom, times)
        lhs, rhs, ok = universal_lower_bound_check(times, states, atom, 0.5)
        assert rhs == pytest.approx(2.0, rel=1e-12)
        assert lhs == pytest.approx(rhs, rel=1e-6)
        assert ok

    def test_detour_strictly_larger(self):
        atom = np.array([1.0, 0.0])
        times = np.linspace(0.0, 1.0, 201)
        states = self.straight_path(np.array([-1.0, 0.0]), atom, times)
        states[:, 1] += 0.3 * np.sin(np.pi * (times - times[0]))
        states[-1] = atom
        lhs, rhs, ok = universal_lower_bound_check(times, states, atom, 0.5)
        assert lhs > rhs
        assert ok

    def test_hundred_random_paths(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            atom = rng.standard_normal(2)
            n = int(rng.integers(20, 120))
            times = np.linspace(0.0, 1.0, n + 1)
            states = rng.standard_normal((n + 1, 2)).cumsum(axis=0)
            states += atom - states[-1]  # pin the endpoint to the atom
            t_start = float(times[rng.integers(0, n)])
            lhs, rhs, ok = universal_lower_bound_check(times, states, atom,
                                                       t_start)
            assert ok, (lhs, rhs)

    def test_wrong_terminal_point_rejected(self):
        times = np.linspace(0.0, 1.0, 11)
        states = np.zeros((11, 2))
        with pytest.raises(ValueError):
            universal_lower_bound_check(times, states, np.array([1.0, 0.0]), 0.5)


class TestIntegratedEnergyDensity:
    def test_zero_length(self):
        class Stub:
            times = np.array([0.0])
            states = np.zeros((1, 2))
            kpe = 0.0

        kpe, integral, ratio = integrated_energy_density(Stub(), mix([[0.0, 0.0]]))
        assert kpe == 0.0 and integral == 0.0
        assert np.isnan(ratio)

    def test_smoke_on_closed_form_trajectory(self):
        atoms = np.random.default_rng(8).standard_normal((30, 2))
        f = EfmField(atoms)
        cfg = SolverConfig(method="midpoint", steps=100, delta_cut=1e-3, seed=0)
        traj = integrate(f, np.array([0.3, -0.2]), cfg)
        m = mix(atoms)
        kpe, integral, ratio = integrated_energy_density(traj, m)
        assert kpe > 0 and np.isfinite(integral)
        assert np.isfinite(ratio) and ratio > 0

    def test_atom_duplication_invariant(self):
        atoms = np.random.default_rng(9).standard_normal((10, 2))
        f = EfmField(atoms)
        cfg = SolverConfig(steps=50, delta_cut=1e-3, seed=1)
        traj = integrate(f, np.zeros(2), cfg)
        a = integrated_energy_density(traj, mix(atoms))
        b = integrated_energy_density(traj, mix(np.concatenate([atoms, atoms])))
        assert a[1] == pytest.approx(b[1], rel=1e-12)
