import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vicsekfp.errors import (
    CorruptFieldError,
    InvalidParameterError,
    UndefinedOrderParameterError,
)
from vicsekfp.grid import (
    Field,
    GridSpec,
    ModelParams,
    dump_field,
    dump_field_text,
    dump_kernel_table,
    load_field,
    load_field_text,
    load_kernel_table,
    lp_norm,
    mass,
    polarization,
)


class TestGridSpec:
    def test_spacings(self):
        g = GridSpec(nx=10, L=5.0, ntheta=20, dt=0.1)
        assert g.dx == 0.5
        assert g.dtheta == pytest.approx(2 * np.pi / 20)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(nx=3, L=1.0, ntheta=16, dt=0.1),
            dict(nx=8, L=1.0, ntheta=6, dt=0.1),
            dict(nx=8, L=1.0, ntheta=9, dt=0.1),  # odd
            dict(nx=8, L=0.0, ntheta=16, dt=0.1),
            dict(nx=8, L=1.0, ntheta=16, dt=0.0),
        ],
    )
    def test_rejects_bad_parameters(self, kwargs):
        with pytest.raises(InvalidParameterError):
            GridSpec(**kwargs)


class TestModelParams:
    def test_requires_positive(self):
        with pytest.raises(InvalidParameterError):
            ModelParams(c=0.0, sigma=1.0, nu=1.0)
        with pytest.raises(InvalidParameterError):
            ModelParams(c=1.0, sigma=-1.0, nu=1.0)


class TestField:
    def test_rejects_nonfinite(self, small_grid):
        vals = np.zeros(small_grid.shape)
        vals[0, 0, 0] = np.nan
        with pytest.raises(CorruptFieldError):
            Field(small_grid, vals)

    def test_density_flag_rejects_negative(self, small_grid):
        vals = np.full(small_grid.shape, -0.1)
        with pytest.raises(CorruptFieldError):
            Field(small_grid, vals, density=True)

    def test_values_read_only(self, small_grid):
        f = Field.constant(small_grid, 1.0)
        with pytest.raises(ValueError):
            f.values[0, 0, 0] = 2.0


class TestMass:
    def test_zero_field(self, small_grid):
        assert mass(Field.constant(small_grid, 0.0)) == 0.0

    def test_uniform_field_unit_box(self):
        g = GridSpec(nx=8, L=1.0, ntheta=16, dt=0.1)
        assert mass(Field.constant(g, 1.0)) == pytest.approx(2 * np.pi, abs=1e-14)

    def test_cos_squared_profile(self):
        # analytic integral of cos^2 over the circle is pi; equispaced
        # quadrature is exact for this trigonometric polynomial
        g = GridSpec(nx=8, L=1.0, ntheta=32, dt=0.1)
        f = Field.from_profile(g, np.cos(g.thetas) ** 2)
        assert mass(f) == pytest.approx(np.pi, abs=1e-13)

    def test_corrupted_state_raises(self, small_grid):
        vals = np.zeros(small_grid.shape)
        vals[0, 0, 0] = np.inf
        f = Field(small_grid, vals, _validate=False)
        with pytest.raises(CorruptFieldError):
            mass(f)


class TestLpNorm:
    def test_uniform_l1(self):
        g = GridSpec(nx=8, L=1.0, ntheta=16, dt=0.1)
        assert lp_norm(Field.constant(g, 1.0), 1) == pytest.approx(2 * np.pi, abs=1e-14)

    def test_uniform_linf(self, small_grid):
        assert lp_norm(Field.constant(small_grid, 1.0), np.inf) == 1.0

    def test_sin_l2_against_brute_force(self):
        g = GridSpec(nx=8, L=1.0, ntheta=64, dt=0.1)
        f = Field.from_profile(g, np.sin(g.thetas))
        # independent brute-force summation
        total = 0.0
        for i in range(g.nx):
            for j in range(g.nx):
                for k in range(g.ntheta):
                    total += f.values[i, j, k] ** 2 * g.dx * g.dx * g.dtheta
        assert lp_norm(f, 2) == pytest.approx(np.sqrt(total), rel=1e-13)
        assert lp_norm(f, 2) == pytest.approx(np.sqrt(np.pi), abs=1e-12)

    def test_p_below_one_rejected(self, small_grid):
        with pytest.raises(InvalidParameterError):
            lp_norm(Field.constant(small_grid, 1.0), 0.5)


class TestPolarization:
    def test_uniform_is_isotropic(self, small_grid):
        p = polarization(Field.constant(small_grid, 1.0))
        assert np.allclose(p, 0.0, atol=1e-14)

    def test_single_angle_cell_fully_aligned(self, small_grid):
        vals = np.zeros(small_grid.shape)
        vals[:, :, 0] = 1.0
        p = polarization(Field(small_grid, vals, density=True))
        assert np.hypot(*p) == pytest.approx(1.0, abs=1e-12)

    def test_shifted_cosine_profile(self, small_grid):
        # direct summation oracle gives magnitude 1/2 along x
        f = Field.from_profile(small_grid, 1.0 + np.cos(small_grid.thetas))
        p = polarization(f)
        assert p[0] == pytest.approx(0.5, abs=1e-13)
        assert p[1] == pytest.approx(0.0, abs=1e-13)

    def test_zero_mass_rejected(self, small_grid):
        with pytest.raises(UndefinedOrderParameterError):
            polarization(Field.constant(small_grid, 0.0))

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_magnitude_at_most_one(self, seed):
        g = GridSpec(nx=4, L=1.0, ntheta=8, dt=0.1)
        rng = np.random.default_rng(seed)
        vals = rng.random(g.shape)
        p = polarization(Field(g, vals, density=True))
        assert np.hypot(*p) <= 1.0 + 1e-12


class TestQuadratureExactness:
    @pytest.mark.parametrize("k", [1, 2, 5, 7])
    def test_trig_polynomials_integrate_exactly(self, k):
        g = GridSpec(nx=4, L=1.0, ntheta=16, dt=0.1)
        f = Field.from_profile(g, 2.0 + np.cos(k * g.thetas))
        assert mass(f) == pytest.approx(2 * 2 * np.pi, abs=1e-13)


class TestFieldIO:
    def test_binary_roundtrip(self, small_grid, tmp_path):
        rng = np.random.default_rng(0)
        f = Field(small_grid, rng.random(small_grid.shape))
        path = tmp_path / "f.vkf"
        dump_field(f, path, t=1.25)
        g, t = load_field(path)
        assert t == 1.25
        assert g.grid == small_grid
        np.testing.assert_array_equal(g.values, f.values)

    def test_text_roundtrip(self, small_grid, tmp_path):
        rng = np.random.default_rng(1)
        f = Field(small_grid, rng.random(small_grid.shape))
        path = tmp_path / "f.txt"
        dump_field_text(f, path, t=0.5)
        g, t = load_field_text(path)
        assert t == 0.5
        np.testing.assert_allclose(g.values, f.values, rtol=0, atol=1e-16)

    def test_kernel_table_roundtrip(self, tmp_path):
        rng = np.random.default_rng(2)
        kx, ky = rng.random((16, 16)), rng.random((16, 16))
        path = tmp_path / "k.vkt"
        dump_kernel_table(kx, ky, path)
        kx2, ky2 = load_kernel_table(path)
        np.testing.assert_array_equal(kx2, kx)
        np.testing.assert_array_equal(ky2, ky)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.vkf"
        path.write_bytes(b"NOPE" + b"\0" * 64)
        with pytest.raises(CorruptFieldError):
            load_field(path)
