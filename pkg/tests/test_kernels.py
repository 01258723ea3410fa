import math

import numpy as np
import pytest

from vicsekfp.errors import DomainWrapError, InvalidParameterError
from vicsekfp.grid import Field, GridSpec, ModelParams, mass
from vicsekfp.kernels import (
    DipolarNematic,
    SeparableRadial,
    TabulatedLocal,
    disk_integral,
    eval_k,
    f0_field,
    f1_field,
    kernel_bounds,
    kernel_lattice,
    lattice_disk_integral,
    picard_window,
    radial_profile,
    reduce_kernel,
)

PARAMS = ModelParams(c=1.0, sigma=1.0, nu=1.0)


class TestEvalK:
    def test_pure_dipolar_along_star(self):
        out = eval_k(1.234, 0.0, DipolarNematic(1.0, 0.0))
        assert np.allclose(out, [1.0, 0.0], atol=1e-15)

    def test_nematic_aligned(self):
        th = 0.77
        out = eval_k(th, th, DipolarNematic(0.0, 1.0))
        assert np.allclose(out, [np.cos(th), np.sin(th)], atol=1e-15)

    def test_orthogonal_angles_drop_nematic_part(self):
        out = eval_k(0.0, np.pi / 2, DipolarNematic(1.0, 2.0))
        assert np.allclose(out, [0.0, 1.0], atol=1e-15)

    def test_tabulated_on_grid_nodes(self):
        spec = DipolarNematic(0.7, 0.3)
        thetas = np.arange(16) * 2 * np.pi / 16
        kx, ky = spec.tables(thetas)
        tab = TabulatedLocal(kx, ky)
        out = eval_k(thetas[3], thetas[10], tab)
        assert np.allclose(out, eval_k(thetas[3], thetas[10], spec), atol=1e-14)

    def test_tabulated_off_grid_rejected(self):
        tab = TabulatedLocal(np.zeros((8, 8)), np.zeros((8, 8)))
        with pytest.raises(InvalidParameterError):
            eval_k(0.1, 0.0, tab)


class TestReduceKernel:
    def test_unit_mass_profile_reduces_to_angle_law(self):
        # indicator normalized to unit disk integral: the reduction is the
        # bare angle law; polar structure makes the quadrature error vanish
        R = 0.8
        spec = SeparableRadial(
            radial_profile("indicator", 1.0 / (np.pi * R**2), R), R, DipolarNematic(1.0, 0.0)
        )
        tab = reduce_kernel(spec, 16, nquad=1024)
        thetas = np.arange(16) * 2 * np.pi / 16
        kx_expect, ky_expect = DipolarNematic(1.0, 0.0).tables(thetas)
        assert np.max(np.abs(tab.kx - kx_expect)) < 3e-3  # midpoint rule on the disk edge
        assert np.max(np.abs(tab.ky - ky_expect)) < 3e-3

    def test_zero_kernel(self):
        spec = SeparableRadial(radial_profile("bump", 0.0, 0.5), 0.5, DipolarNematic(1.0, 0.0))
        tab = reduce_kernel(spec, 8)
        assert np.all(tab.kx == 0.0) and np.all(tab.ky == 0.0)

    def test_smooth_profile_against_dense_quadrature_oracle(self):
        # brute-force midpoint quadrature on a 512^2 stencil as the oracle
        R = 0.8
        prof = radial_profile("bump", 1.3, R)
        spec = SeparableRadial(prof, R, DipolarNematic(1.0, 0.5))
        tab = reduce_kernel(spec, 16, nquad=256)

        h = 2 * R / 512
        centers = -R + h * (np.arange(512) + 0.5)
        rr = np.hypot(centers[:, None], centers[None, :])
        weight_oracle = float(np.sum(np.where(rr <= R, prof(rr), 0.0))) * h * h

        thetas = np.arange(16) * 2 * np.pi / 16
        kx_psi, ky_psi = DipolarNematic(1.0, 0.5).tables(thetas)
        assert np.max(np.abs(tab.kx - weight_oracle * kx_psi)) < 1e-6
        assert np.max(np.abs(tab.ky - weight_oracle * ky_psi)) < 1e-6


class TestForceFields:
    def test_f0_zero_field(self, medium_grid):
        spec = SeparableRadial(radial_profile("bump", 1.0, 0.8), 0.8, DipolarNematic(1.0, 0.0))
        out = f0_field(Field.constant(medium_grid, 0.0), spec)
        assert np.allclose(out, 0.0)

    def test_f0_isotropic_density_gives_no_force(self, medium_grid):
        spec = SeparableRadial(radial_profile("bump", 1.0, 0.8), 0.8, DipolarNematic(1.0, 0.0))
        out = f0_field(Field.constant(medium_grid, 0.7), spec)
        assert np.max(np.abs(out)) < 1e-13

    def test_f0_fft_matches_direct_sum(self):
        g = GridSpec(nx=8, L=2.0, ntheta=8, dt=0.01)
        rng = np.random.default_rng(3)
        f = Field(g, rng.random(g.shape))
        spec = SeparableRadial(radial_profile("cosine", 1.0, 0.7), 0.7, DipolarNematic(1.0, 0.4))
        a = f0_field(f, spec, method="fft")
        b = f0_field(f, spec, method="direct")
        scale = np.max(np.abs(b)) or 1.0
        assert np.max(np.abs(a - b)) / scale < 1e-8

    def test_f0_cutoff_wrap_rejected(self):
        g = GridSpec(nx=8, L=1.0, ntheta=8, dt=0.01)
        spec = SeparableRadial(radial_profile("bump", 1.0, 0.6), 0.6, DipolarNematic(1.0, 0.0))
        with pytest.raises(DomainWrapError):
            f0_field(Field.constant(g, 1.0), spec)

    def test_f1_uniform_dipolar_vanishes(self, medium_grid):
        out = f1_field(Field.constant(medium_grid, 1.0), DipolarNematic(1.0, 0.0))
        assert np.max(np.abs(out)) < 1e-13

    def test_f1_concentrated_profile(self, medium_grid):
        # all mass in the theta=0 bin: force = m (1, 0) at every x
        vals = np.zeros(medium_grid.shape)
        m_per_node = 0.4
        vals[:, :, 0] = m_per_node / medium_grid.dtheta
        out = f1_field(Field(medium_grid, vals), DipolarNematic(1.0, 0.0))
        assert np.allclose(out[..., 0], m_per_node, atol=1e-12)
        assert np.allclose(out[..., 1], 0.0, atol=1e-12)

    def test_f1_matches_brute_force_loop(self):
        g = GridSpec(nx=4, L=1.0, ntheta=8, dt=0.01)
        rng = np.random.default_rng(5)
        f = Field(g, rng.random(g.shape))
        spec = DipolarNematic(0.6, 1.1)
        out = f1_field(f, spec)
        th = g.thetas
        for i in range(g.nx):
            for j in range(g.nx):
                for a in range(g.ntheta):
                    acc = np.zeros(2)
                    for b in range(g.ntheta):
                        acc += eval_k(th[a], th[b], spec) * f.values[i, j, b] * g.dtheta
                    assert np.max(np.abs(out[i, j, a] - acc)) < 1e-12


class TestConsistencyReduction:
    def test_reduced_f1_matches_f0_on_homogeneous_data(self):
        # for x-independent densities the nonlocal force equals the local
        # force of the reduced kernel (the lattice sum pins the quadrature)
        g = GridSpec(nx=16, L=4.0, ntheta=16, dt=0.01)
        spec = SeparableRadial(radial_profile("bump", 0.9, 1.2), 1.2, DipolarNematic(1.0, 0.3))
        prof = 1.0 + 0.6 * np.cos(g.thetas) + 0.2 * np.sin(2 * g.thetas)
        f = Field.from_profile(g, prof)

        F0 = f0_field(f, spec)
        weight = lattice_disk_integral(spec, g)
        thetas = g.thetas
        psix, psiy = spec.angular.tables(thetas)
        tab = TabulatedLocal(weight * psix, weight * psiy)
        F1 = f1_field(f, tab)
        scale = np.max(np.abs(F0)) or 1.0
        assert np.max(np.abs(F0 - F1)) / scale < 1e-12

    def test_lattice_and_disk_quadratures_agree_for_resolved_kernels(self):
        g = GridSpec(nx=128, L=4.0, ntheta=8, dt=0.01)
        spec = SeparableRadial(radial_profile("bump", 0.9, 1.2), 1.2, DipolarNematic(1.0, 0.0))
        lat = lattice_disk_integral(spec, g)
        disk = disk_integral(spec.profile, spec.cutoff, 512)
        assert lat == pytest.approx(disk, rel=1e-7)


class TestKernelBounds:
    def test_dipolar_closed_form(self):
        # |k| = 1 for the pure first-moment kernel, so the angle integral is
        # 2 pi and the omega-derivative contributes nothing
        b = kernel_bounds(DipolarNematic(1.0, 0.0), PARAMS)
        assert b.k_inf_1 == pytest.approx(2 * np.pi, rel=1e-12)
        assert b.k_inf_0 == b.k_inf_1

    def test_dipolar_closed_form_cross_check_numeric(self):
        # grid maximization oracle for mixed coefficients
        a_, b_ = 0.4, 1.5
        spec = DipolarNematic(a_, b_)
        bounds = kernel_bounds(spec, PARAMS)
        n = 4096
        phi = np.arange(n) * 2 * np.pi / n
        dth = 2 * np.pi / n
        int_abs = np.sum(np.abs(a_ + b_ * np.cos(phi))) * dth
        int_dabs = np.sum(b_ * np.abs(np.sin(phi))) * dth
        assert bounds.k_inf_1 == pytest.approx(int_abs + int_dabs, rel=1e-5)

    def test_growth_constant_formula(self):
        # nu = sigma = 1 and a unit force bound give rate 1 * (1 + 1) = 2
        b = kernel_bounds(DipolarNematic(1.0 / (2 * np.pi), 0.0), PARAMS)
        assert b.k_inf_1 == pytest.approx(1.0, rel=1e-12)
        assert b.c_inf_1 == pytest.approx(2.0, rel=1e-12)

    def test_zero_kernel_all_bounds_zero(self):
        b = kernel_bounds(DipolarNematic(0.0, 0.0), PARAMS)
        assert b.k_inf_0 == b.k_inf_1 == b.c_inf_0 == b.c_inf_1 == 0.0
        assert b.k_sup == 0.0 and b.k_sup_w == 0.0

    def test_local_kernel_has_no_mass_control(self):
        b = kernel_bounds(DipolarNematic(1.0, 0.0), PARAMS)
        assert math.isinf(b.k_sup)

    def test_separable_bounds_scale_with_profile(self):
        spec1 = SeparableRadial(radial_profile("bump", 1.0, 0.8), 0.8, DipolarNematic(1.0, 0.0))
        spec2 = SeparableRadial(radial_profile("bump", 2.0, 0.8), 0.8, DipolarNematic(1.0, 0.0))
        b1 = kernel_bounds(spec1, PARAMS)
        b2 = kernel_bounds(spec2, PARAMS)
        assert b2.k_inf_0 == pytest.approx(2 * b1.k_inf_0, rel=1e-12)
        assert b2.k_sup == pytest.approx(2 * b1.k_sup, rel=1e-10)

    def test_force_bound_holds_on_computed_fields(self, medium_grid):
        # |F| + |dF/dtheta| <= K_inf ||f||_inf on actual evaluations
        rng = np.random.default_rng(8)
        f = Field(medium_grid, rng.random(medium_grid.shape))
        spec = SeparableRadial(radial_profile("bump", 0.7, 1.0), 1.0, DipolarNematic(1.0, 0.5))
        bounds = kernel_bounds(spec, PARAMS)
        F = f0_field(f, spec)
        from vicsekfp.sphere import dtheta as sph_dtheta

        mag = np.hypot(F[..., 0], F[..., 1])
        dmag = np.hypot(
            sph_dtheta(F[..., 0], medium_grid.dtheta),
            sph_dtheta(F[..., 1], medium_grid.dtheta),
        )
        measured = float((mag + dmag).max())
        assert measured <= bounds.k_inf_0 * float(np.max(np.abs(f.values))) * (1 + 1e-9)

    def test_mass_control_of_nonlocal_force(self, medium_grid):
        # |F0| <= sup|K| * mass on nonnegative data
        rng = np.random.default_rng(9)
        f = Field(medium_grid, rng.random(medium_grid.shape), density=True)
        spec = SeparableRadial(radial_profile("bump", 0.7, 1.0), 1.0, DipolarNematic(1.0, 0.0))
        bounds = kernel_bounds(spec, PARAMS)
        F = f0_field(f, spec)
        assert float(np.hypot(F[..., 0], F[..., 1]).max()) <= bounds.k_sup * mass(f) * (1 + 1e-9)


class TestPicardWindow:
    def test_simple_substitution(self):
        b = kernel_bounds(DipolarNematic(1.0 / (2 * np.pi), 0.0), PARAMS)
        # c_inf = 2 here; R = 2 gives ln 2 / (2 * 2 * 1)
        assert picard_window(b, 1.0, 2.0, 1) == pytest.approx(math.log(2) / 4.0, rel=1e-12)

    def test_euler_base_window(self):
        class FakeBounds:
            def c_inf(self, i):
                return 1.0

        assert picard_window(FakeBounds(), 1.0, math.e, 0) == pytest.approx(1 / math.e)

    def test_doubling_data_halves_window(self):
        b = kernel_bounds(DipolarNematic(0.5, 0.2), PARAMS)
        w1 = picard_window(b, 1.0, math.e, 1)
        w2 = picard_window(b, 2.0, math.e, 1)
        assert w2 == pytest.approx(w1 / 2.0, rel=1e-12)

    def test_invalid_r_rejected(self):
        b = kernel_bounds(DipolarNematic(1.0, 0.0), PARAMS)
        with pytest.raises(InvalidParameterError):
            picard_window(b, 1.0, 1.0, 1)


class TestKernelLattice:
    def test_minimal_image_symmetry(self):
        g = GridSpec(nx=16, L=4.0, ntheta=8, dt=0.01)
        spec = SeparableRadial(radial_profile("bump", 1.0, 1.0), 1.0, DipolarNematic(1.0, 0.0))
        phi = kernel_lattice(spec, g)
        # wrap symmetry: phi[i, j] == phi[-i, -j]
        assert np.allclose(phi, np.roll(np.flip(phi, (0, 1)), (1, 1), (0, 1)), atol=1e-15)
