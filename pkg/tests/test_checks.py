"""Dissipation-inequality margins and the weak-strong stability certificate."""

import numpy as np
import pytest

from kelvinflow import (
    FlowConfig,
    PeriodicGrid,
    ScalarField,
    VectorField,
    admissible_r,
    dissipative_residual,
    initial_condition,
    kinetic_K,
    l2_norm,
    laplacian_pow,
    leray_project,
    make_test_field,
    relative_entropy,
    restrict_trajectory,
    simulate,
    sym_gradient_eig_range,
    weak_strong_check,
    zero_test_field,
)
from kelvinflow.spectral import l2_inner


def random_solenoidal(grid, seed):
    rng = np.random.default_rng(seed)
    return leray_project(
        VectorField(grid, tuple(rng.standard_normal(grid.shape) for _ in range(grid.d)))
    )


def shear(grid):
    y = grid.coords()[1]
    return VectorField(grid, (np.sin(2 * np.pi * y), np.zeros(grid.shape)), is_solenoidal=True)


class TestAdmissibleR:
    def test_zero_field(self):
        g = PeriodicGrid(2, 16)
        assert admissible_r(VectorField.zeros(g, is_solenoidal=True)) == 0.0

    def test_shear_analytic(self):
        # sym gradient of (sin(2 pi y), 0) has eigenvalues +-2 pi |cos(2 pi y)|
        g = PeriodicGrid(2, 64)
        assert abs(admissible_r(shear(g)) - 2 * np.pi) <= 1e-6

    def test_homogeneity(self):
        g = PeriodicGrid(2, 32)
        z = random_solenoidal(g, 3)
        r1 = admissible_r(z)
        r2 = admissible_r(2.5 * z)
        assert abs(r2 - 2.5 * r1) <= 1e-12 * max(1.0, r1)

    def test_sequence_and_test_field_agree(self):
        g = PeriodicGrid(2, 32)
        times = np.linspace(0.0, 1.0, 5)
        tf = make_test_field(g, times, seed=1, modulate=True)
        fields = [tf.field_at(k) for k in range(len(times))]
        assert abs(admissible_r(tf) - admissible_r(fields)) <= 1e-12 * max(1.0, tf.r)

    def test_eig_range_3d(self):
        g = PeriodicGrid(3, 16)
        z = random_solenoidal(g, 4)
        lo, hi = sym_gradient_eig_range(z)
        assert lo < 0 < hi  # zero-mean nontrivial field strains both ways


class TestTestField:
    def test_factory_is_admissible(self):
        g = PeriodicGrid(2, 32)
        times = np.linspace(0.0, 1.0, 11)
        tf = make_test_field(g, times, seed=5, modulate=True)
        tf.validate()
        assert tf.base.is_solenoidal
        assert abs(tf.base.max_abs() - 1.0) <= 1e-12

    def test_zero_field(self):
        g = PeriodicGrid(2, 16)
        tf = zero_test_field(g, np.linspace(0, 1, 3))
        assert tf.r == 0.0
        assert tf.field_at(0).max_abs() == 0.0

    def test_validate_rejects_insufficient_r(self):
        g = PeriodicGrid(2, 32)
        times = np.linspace(0.0, 1.0, 3)
        tf = make_test_field(g, times, seed=5)
        from kelvinflow import TestField

        bad = TestField(g, times, tf.base, tf.amplitude, r=max(0.0, tf.r - 1.0))
        with pytest.raises(ValueError, match="admissible"):
            bad.validate()


class TestRelativeEntropy:
    def test_coincidence(self):
        g = PeriodicGrid(2, 32)
        v = random_solenoidal(g, 1)
        assert relative_entropy(v, v, 1) == 0.0

    def test_m0_is_half_l2(self):
        g = PeriodicGrid(2, 32)
        v, w = random_solenoidal(g, 2), random_solenoidal(g, 3)
        diff = v - w
        assert abs(relative_entropy(v, w, 0) - 0.5 * l2_norm(diff) ** 2) <= 1e-12

    @pytest.mark.parametrize("m", [0, 1, 2])
    def test_three_term_form(self, m):
        g = PeriodicGrid(2, 32)
        v, w = random_solenoidal(g, 4), random_solenoidal(g, 5)
        three_term = (
            kinetic_K(v, m) - kinetic_K(w, m) - l2_inner(laplacian_pow(w, m), v - w)
        )
        assert abs(three_term - relative_entropy(v, w, m)) <= 1e-10 * max(1.0, three_term)

    @pytest.mark.parametrize("m", [0, 1, 2])
    def test_poincare_coercivity(self, m):
        # K[v - w] >= (4 pi^2)^m / 2 * ||v - w||^2 for zero-mean fields
        g = PeriodicGrid(2, 32)
        c = 0.5 * (4 * np.pi**2) ** m
        for seed in range(5):
            v, w = random_solenoidal(g, 10 + seed), random_solenoidal(g, 20 + seed)
            eta = relative_entropy(v, w, m)
            assert eta >= c * l2_norm(v - w) ** 2 * (1 - 1e-12)


class TestDissipativeResidual:
    def test_stationary_trajectory_zero_residual(self):
        cfg = FlowConfig(grid=PeriodicGrid(2, 32), m=1, dt=1e-3, t_end=0.05, ic="eigen")
        traj = simulate(cfg)
        res = dissipative_residual(traj, zero_test_field(cfg.grid, traj.times), 1)
        assert np.max(np.abs(res)) <= 1e-9

    def test_solver_trajectory_nonnegative(self):
        cfg = FlowConfig(grid=PeriodicGrid(2, 32), m=1, dt=1e-3, t_end=0.2, ic="mix",
                         record_every=5)
        traj = simulate(cfg)
        b0_sq = 2.0 * traj.states[0].energy
        res0 = dissipative_residual(traj, zero_test_field(cfg.grid, traj.times), 1)
        assert res0.min() >= -1e-6 * b0_sq
        for seed in range(3):
            tf = make_test_field(cfg.grid, traj.times, seed=seed)
            res = dissipative_residual(traj, tf, 1)
            assert res.min() >= -1e-5 * b0_sq

    def test_time_grid_mismatch(self):
        cfg = FlowConfig(grid=PeriodicGrid(2, 16), m=1, dt=1e-3, t_end=0.01, ic="mix")
        traj = simulate(cfg)
        tf = zero_test_field(cfg.grid, traj.times[:-1])
        with pytest.raises(ValueError, match="time grids"):
            dissipative_residual(traj, tf, 1)


def perturbed_pair(coarse_n, fine_n, t_end, amplitude=0.5, eps=1e-3, record_every=5):
    coarse, fine = PeriodicGrid(2, coarse_n), PeriodicGrid(2, fine_n)
    common = dict(m=1, dt=1e-3, t_end=t_end, ic="mix", ic_amplitude=amplitude,
                  record_every=record_every)
    smooth = restrict_trajectory(simulate(FlowConfig(grid=fine, **common)), coarse)
    cfg_c = FlowConfig(grid=coarse, **common)
    phi0 = initial_condition(cfg_c)
    x = coarse.coords()
    delta = (eps / (2 * np.pi)) * np.sin(2 * np.pi * (x[0] + x[1]))
    dissip = simulate(cfg_c, phi0=ScalarField(coarse, phi0.values + delta))
    return dissip, smooth


class TestWeakStrong:
    def test_identical_trajectories(self):
        cfg = FlowConfig(grid=PeriodicGrid(2, 32), m=1, dt=1e-3, t_end=0.05, ic="mix",
                         ic_amplitude=0.5, record_every=5)
        traj = simulate(cfg)
        rep = weak_strong_check(traj, traj, 1)
        assert rep.passed and rep.passed_strong
        assert np.max(rep.eta) <= 1e-20
        assert np.max(rep.nb2) == 0.0

    def test_stationary_reference_jl_vanishes(self):
        cfg = FlowConfig(grid=PeriodicGrid(2, 32), m=1, dt=1e-3, t_end=0.05, ic="eigen",
                         record_every=5)
        smooth = simulate(cfg)
        dissip = simulate(cfg, phi0=ScalarField(
            cfg.grid, smooth.states[0].phi.values
            + 1e-4 / (2 * np.pi) * np.sin(2 * np.pi * (cfg.grid.coords()[0] + cfg.grid.coords()[1]))
        ))
        rep = weak_strong_check(dissip, smooth, 1)
        assert np.max(np.abs(rep.jl)) <= 1e-10
        assert rep.passed and rep.passed_strong

    def test_perturbed_against_refined_reference(self):
        dissip, smooth = perturbed_pair(32, 64, t_end=0.25)
        rep = weak_strong_check(dissip, smooth, 1)
        assert rep.passed and rep.passed_strong
        assert abs(rep.nb2[0] - 1e-6) <= 1e-8
        # e_0 = ||B_0 - beta_0||^2 exactly
        assert rep.e_series[0] == rep.nb2[0]
        # structural identities of the error expansion
        assert np.max(np.abs(rep.jc)) <= 1e-10
        assert np.max(np.abs(rep.jl1_cancel)) <= 1e-8
        # N_t >= ||B_t||^2 up to quadrature slack, in the scaled form
        assert rep.n_margin.min() >= -1e-2 * rep.b0_sq
        # bounded growth of the separation
        assert np.max(rep.nb2 * rep.weights) <= rep.nb2[0] * (1 + 1e-2)

    def test_grid_mismatch_rejected(self):
        cfg_a = FlowConfig(grid=PeriodicGrid(2, 16), m=1, dt=1e-3, t_end=0.01, ic="mix")
        cfg_b = FlowConfig(grid=PeriodicGrid(2, 32), m=1, dt=1e-3, t_end=0.01, ic="mix")
        with pytest.raises(ValueError, match="grids"):
            weak_strong_check(simulate(cfg_a), simulate(cfg_b), 1)

    def test_time_mismatch_rejected(self):
        cfg_a = FlowConfig(grid=PeriodicGrid(2, 16), m=1, dt=1e-3, t_end=0.01, ic="mix")
        cfg_b = FlowConfig(grid=PeriodicGrid(2, 16), m=1, dt=1e-3, t_end=0.02, ic="mix")
        with pytest.raises(ValueError, match="time grids"):
            weak_strong_check(simulate(cfg_a), simulate(cfg_b), 1)
