import json
import os

import numpy as np
import pytest

from vicsekfp.cli import main
from vicsekfp.errors import SchemaError
from vicsekfp.grid import GridSpec, mass
from vicsekfp.initial_data import make_datum_callable, make_initial_datum
from vicsekfp.manifest import load_manifest

BASE_LINEAR = """
experiment: linear
grid: {{nx: 8, L: 2.0, ntheta: 16, dt: 0.02}}
params: {{c: 1.0, sigma: 1.0, nu: 1.0}}
initial_datum: {{generator: gaussian-bump, mass: 1.0, center: [1.0, 1.0], theta0: 0.0,
                 width_x: 0.25, width_theta: 0.6}}
seed: 7
outputs: {{cadence: 2, directory: "{outdir}"}}
linear: {{T: 0.2, force: [0.4, 0.1]}}
"""


def write_manifest(tmp_path, text, name="m.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestInitialData:
    def test_uniform_level(self):
        g = GridSpec(nx=8, L=2.0, ntheta=16, dt=0.02)
        f = make_initial_datum({"generator": "uniform", "mass": 1.0}, g)
        assert np.allclose(f.values, 1.0 / (4.0 * 2 * np.pi))
        assert mass(f) == pytest.approx(1.0, abs=1e-12)

    def test_gaussian_bump_mass_matches_request(self):
        g = GridSpec(nx=32, L=4.0, ntheta=32, dt=0.02)
        spec = {"generator": "gaussian-bump", "mass": 2.5, "center": [2.0, 2.0],
                "theta0": 0.3, "width_x": 0.4, "width_theta": 0.5}
        f = make_initial_datum(spec, g)
        assert mass(f) == pytest.approx(2.5, abs=1e-8)
        assert f.values.min() >= 0.0

    def test_two_bump_mass(self):
        g = GridSpec(nx=32, L=4.0, ntheta=16, dt=0.02)
        f = make_initial_datum({"generator": "two-bump", "mass": 1.0,
                                "width_x": 0.3, "width_theta": 0.5}, g)
        assert mass(f) == pytest.approx(1.0, abs=1e-8)

    def test_random_seeded_reproducible(self):
        g = GridSpec(nx=8, L=2.0, ntheta=8, dt=0.02)
        a = make_initial_datum({"generator": "random", "mass": 1.0, "seed": 5}, g)
        b = make_initial_datum({"generator": "random", "mass": 1.0, "seed": 5}, g)
        np.testing.assert_array_equal(a.values, b.values)
        assert mass(a) == pytest.approx(1.0, rel=1e-12)
        assert a.values.min() >= 0.0

    def test_negative_mass_rejected(self):
        g = GridSpec(nx=8, L=2.0, ntheta=8, dt=0.02)
        with pytest.raises(Exception):
            make_initial_datum({"generator": "uniform", "mass": -1.0}, g)

    def test_unknown_datum_key_rejected(self):
        g = GridSpec(nx=8, L=2.0, ntheta=8, dt=0.02)
        with pytest.raises(SchemaError):
            make_datum_callable({"generator": "uniform", "bogus": 1}, g)


class TestManifestSchema:
    def test_loads_valid_manifest(self, tmp_path):
        path = write_manifest(tmp_path, BASE_LINEAR.format(outdir=tmp_path / "out"))
        m = load_manifest(path)
        assert m.experiment == "linear"
        assert m.grid.nx == 8
        assert m.seed == 7
        assert len(m.digest) == 64

    def test_unknown_top_level_key_rejected(self, tmp_path):
        text = BASE_LINEAR.format(outdir=tmp_path) + "\nwhatever: 3\n"
        with pytest.raises(SchemaError):
            load_manifest(write_manifest(tmp_path, text))

    def test_unknown_grid_key_rejected(self, tmp_path):
        text = BASE_LINEAR.format(outdir=tmp_path).replace(
            "dt: 0.02}", "dt: 0.02, bogus: 1}"
        )
        with pytest.raises(SchemaError):
            load_manifest(write_manifest(tmp_path, text))

    def test_wrong_type_rejected(self, tmp_path):
        text = BASE_LINEAR.format(outdir=tmp_path).replace("nx: 8", 'nx: "8"')
        with pytest.raises(SchemaError):
            load_manifest(write_manifest(tmp_path, text))

    def test_unknown_experiment_rejected(self, tmp_path):
        text = BASE_LINEAR.format(outdir=tmp_path).replace(
            "experiment: linear", "experiment: frobnicate"
        )
        with pytest.raises(SchemaError):
            load_manifest(write_manifest(tmp_path, text))

    def test_memory_guardrail_on_grid(self, tmp_path):
        text = BASE_LINEAR.format(outdir=tmp_path).replace(
            "seed: 7", "seed: 7\nmemory_cap_mb: 0.001"
        )
        with pytest.raises(SchemaError):
            load_manifest(write_manifest(tmp_path, text))


class TestCli:
    def test_linear_run_and_artifacts(self, tmp_path):
        outdir = tmp_path / "out"
        path = write_manifest(tmp_path, BASE_LINEAR.format(outdir=outdir))
        assert main(["run", path]) == 0
        assert (outdir / "diagnostics.csv").exists()
        assert (outdir / "diagnostics.png").exists()
        summary = [json.loads(line) for line in open(outdir / "summary.jsonl")]
        assert summary[-1]["passed"] is True
        assert all(c["passed"] for c in summary[-1]["checks"])

    def test_diagnostics_header_fixed(self, tmp_path):
        outdir = tmp_path / "out"
        path = write_manifest(tmp_path, BASE_LINEAR.format(outdir=outdir))
        main(["run", path])
        header = open(outdir / "diagnostics.csv").readline().strip()
        assert header == ("t,mass,l1,l2,linf,min,envelope,"
                          "polarization_x,polarization_y")

    def test_reruns_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        p1 = write_manifest(tmp_path, BASE_LINEAR.format(outdir=out1), "m1.yaml")
        p2 = write_manifest(tmp_path, BASE_LINEAR.format(outdir=out2), "m2.yaml")
        assert main(["run", p1]) == 0
        assert main(["run", p2]) == 0
        assert (out1 / "diagnostics.csv").read_bytes() == (out2 / "diagnostics.csv").read_bytes()

    def test_schema_violation_exit_code(self, tmp_path):
        text = BASE_LINEAR.format(outdir=tmp_path) + "\nwhatever: 3\n"
        path = write_manifest(tmp_path, text)
        assert main(["run", path]) == 2

    def test_verify_ops_passes(self, tmp_path):
        out = str(tmp_path / "v")
        assert main(["verify-ops", "--out", out]) == 0
        assert os.path.exists(os.path.join(out, "residuals.csv"))
        assert os.path.exists(os.path.join(out, "residuals.png"))

    def test_verify_ops_via_run_manifest(self, tmp_path):
        out = tmp_path / "vo"
        text = f"""
experiment: verify-ops
outputs: {{directory: "{out}"}}
"""
        path = write_manifest(tmp_path, text)
        assert main(["run", path]) == 0
        summary = [json.loads(line) for line in open(out / "summary.jsonl")]
        assert summary[-1]["passed"] is True

    def test_overrides(self, tmp_path):
        outdir = tmp_path / "out"
        override = tmp_path / "other"
        path = write_manifest(tmp_path, BASE_LINEAR.format(outdir=outdir))
        assert main(["run", path, "--T", "0.1", "--out", str(override)]) == 0
        assert (override / "diagnostics.csv").exists()

    def test_subcommand_experiment_mismatch(self, tmp_path):
        path = write_manifest(tmp_path, BASE_LINEAR.format(outdir=tmp_path / "o"))
        assert main(["particles", path]) == 2

    def test_field_dumps_written(self, tmp_path):
        outdir = tmp_path / "out"
        text = BASE_LINEAR.format(outdir=outdir).replace(
            'directory: "%s"}' % outdir, 'directory: "%s", dump_fields: true}' % outdir
        )
        path = write_manifest(tmp_path, text)
        assert main(["run", path]) == 0
        dumps = list((outdir / "fields").glob("*.vkf"))
        assert dumps
        from vicsekfp.grid import load_field

        f, t = load_field(dumps[0])
        assert f.grid.nx == 8

    def test_particles_cli(self, tmp_path):
        outdir = tmp_path / "pout"
        text = f"""
experiment: particles
grid: {{nx: 8, L: 2.0, ntheta: 16, dt: 0.02}}
params: {{c: 1.0, sigma: 0.5, nu: 1.0}}
initial_datum: {{generator: uniform, mass: 1.0}}
seed: 3
outputs: {{cadence: 2, directory: "{outdir}"}}
particles: {{n: 500, T: 0.1, radius: 0.3, alpha: mean, n_dumps: 1}}
"""
        path = write_manifest(tmp_path, text)
        assert main(["particles", path]) == 0
        assert (outdir / "particles_diagnostics.csv").exists()
        assert (outdir / "particles.png").exists()
        assert (outdir / "particles_t0.csv").exists()

    def test_nonlinear_local_with_tabulated_kernel(self, tmp_path):
        # tabulate a kernel at the solver resolution, store it in the binary
        # table format, and drive the local model through the manifest path
        from vicsekfp.grid import dump_kernel_table
        from vicsekfp.kernels import DipolarNematic

        ntheta = 16
        thetas = np.arange(ntheta) * 2 * np.pi / ntheta
        kx, ky = DipolarNematic(0.3, 0.0).tables(thetas)
        table = tmp_path / "k.vkt"
        dump_kernel_table(kx, ky, table)

        outdir = tmp_path / "nl"
        text = f"""
experiment: nonlinear-local
grid: {{nx: 8, L: 2.0, ntheta: {ntheta}, dt: 0.02}}
params: {{c: 1.0, sigma: 1.0, nu: 1.0}}
kernel: {{form: tabulated-local, path: "{table}"}}
initial_datum: {{generator: gaussian-bump, mass: 1.0, center: [1.0, 1.0],
                 theta0: 0.0, width_x: 0.25, width_theta: 0.6, floor: 0.05}}
seed: 2
outputs: {{cadence: 2, directory: "{outdir}"}}
nonlinear: {{T: 0.1, mode: picard}}
"""
        path = write_manifest(tmp_path, text)
        assert main(["run", path]) == 0
        summary = [json.loads(line) for line in open(outdir / "summary.jsonl")]
        assert summary[-1]["passed"] is True

    def test_compare_cli(self, tmp_path):
        kin, par, out = tmp_path / "k", tmp_path / "p", tmp_path / "c"
        kin.mkdir(), par.mkdir()
        (kin / "diagnostics.csv").write_text(
            "t,mass,l1,l2,linf,min,envelope,polarization_x,polarization_y\n"
            "0,1,1,1,1,0,1,0.5,0\n1,1,1,1,1,0,1,0.4,0\n"
        )
        (par / "particles_diagnostics.csv").write_text(
            "t,polarization_x,polarization_y\n0,0.52,0\n1,0.38,0\n"
        )
        assert main(["compare", str(kin), str(par), "--out", str(out)]) == 0
        lines = (out / "compare.csv").read_text().strip().splitlines()
        assert lines[0] == "t,polarization_gap"
        assert len(lines) == 3
