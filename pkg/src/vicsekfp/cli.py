"""Command-line entry point.

Subcommands:

    vicsekfp run <manifest.yaml> [--dt X] [--T Y] [--out DIR]
    vicsekfp verify-ops [--out DIR]
    vicsekfp scaling-study <manifest.yaml> [--out DIR]
    vicsekfp continuity-study <manifest.yaml> [--out DIR]
    vicsekfp particles <manifest.yaml> [--out DIR]
    vicsekfp compare <kinetic-dir> <particle-dir> [--out DIR]

Each experiment writes columnar diagnostics, PNG figures, and an
append-only summary.jsonl carrying the manifest hash and the pass/fail
status of every runtime check.  Exit codes: 0 success, 1 a check failed,
2 manifest schema violation, 3 resource guardrail, 4 numerical abort.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import (
    CadenceError,
    CorruptFieldError,
    GuardrailError,
    NumericalAbortError,
    PicardFailureError,
    ResolutionError,
    SchemaError,
    VicsekError,
)
from .grid import Field, dump_field
from .initial_data import make_datum_callable, make_initial_datum
from .kernels import SeparableRadial
from .linear import DriftField, envelope_rate, solve_linear
from .manifest import RunManifest, load_manifest, manifest_summary_record
from .nonlinear import NonlinearRunConfig, continuity_study, solve_nonlinear
from .particles import InteractionConfig, sample_from_field, step_particles
from .reporting import (
    append_summary,
    ensure_dir,
    render_continuity_figure,
    render_diagnostics_figure,
    render_particle_figure,
    render_scaling_figure,
    render_verify_figure,
    write_columns,
    write_diagnostics,
)
from .scaling import default_test_functions, order_study
from .sphere import check_ibp

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_SCHEMA = 2
EXIT_GUARDRAIL = 3
EXIT_NUMERICAL = 4


def _check(name, passed, value, bound):
    return {
        "name": name,
        "passed": bool(passed),
        "value": float(value),
        "bound": float(bound),
    }


def _finish(outdir, manifest, checks, extra=None):
    record = manifest_summary_record(manifest) if manifest else {}
    record["checks"] = checks
    if extra:
        record.update(extra)
    record["passed"] = all(c["passed"] for c in checks)
    append_summary(os.path.join(outdir, "summary.jsonl"), record)
    for c in checks:
        status = "PASS" if c["passed"] else "FAIL"
        print(f"[{status}] {c['name']}: value={c['value']:.4g} bound={c['bound']:.4g}")
    return EXIT_OK if record["passed"] else EXIT_CHECK_FAILED


def _dump_requested_fields(outdir, manifest, times, fields):
    if not manifest.outputs.dump_fields:
        return
    ddir = ensure_dir(os.path.join(outdir, "fields"))
    for t, f in zip(times, fields):
        dump_field(f, os.path.join(ddir, f"field_t{t:012.6f}.vkf"), t=t)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def run_linear(manifest: RunManifest, outdir: str) -> int:
    grid, params = manifest.grid, manifest.params
    section = manifest.section
    T = float(section.get("T", 1.0))
    force = section.get("force", [0.0, 0.0])
    u0 = make_initial_datum(manifest.initial_datum, grid)
    drift = DriftField.from_constant_vector(grid, force)

    run = solve_linear(
        u0, drift, params, T, record_every=manifest.outputs.cadence,
        keep_trajectory=manifest.outputs.dump_fields,
    )
    csv = os.path.join(outdir, "diagnostics.csv")
    write_diagnostics(csv, run.reports)
    render_diagnostics_figure(csv, os.path.join(outdir, "diagnostics.png"), "linear run")
    if run.trajectory is not None:
        _dump_requested_fields(
            outdir, manifest, [k * run.dt for k in range(len(run.trajectory))], run.trajectory
        )

    r0, rlast = run.reports[0], run.reports[-1]
    mass_drift = abs(rlast.mass - r0.mass) / max(abs(r0.mass), 1e-300)
    min_floor = -1e-12 * r0.linf
    worst_min = min(r.min_value for r in run.reports)
    rate = envelope_rate(drift, params)
    worst_env = max(
        (r.linf / (r0.linf * math.exp(rate * r.t)) if r0.linf > 0 else 0.0)
        for r in run.reports
    )
    checks = [
        _check("mass_conservation", mass_drift <= 1e-10, mass_drift, 1e-10),
        _check("positivity", worst_min >= min_floor, worst_min, min_floor),
        _check("sup_envelope", worst_env <= 1.05, worst_env, 1.05),
    ]
    return _finish(outdir, manifest, checks, {"T": T, "envelope_rate": rate})


def run_nonlinear(manifest: RunManifest, outdir: str) -> int:
    model = "nonlocal" if manifest.experiment == "nonlinear-nonlocal" else "local"
    section = manifest.section
    cfg = NonlinearRunConfig(
        model=model,
        kernel=manifest.kernel,
        params=manifest.params,
        R=float(section.get("R", math.e)),
        picard_tol=float(section.get("picard_tol", 1e-8)),
        picard_max_iter=int(section.get("picard_max_iter", 25)),
        mode=section.get("mode", "picard"),
    )
    T = float(section.get("T", 1.0))
    u0 = make_initial_datum(manifest.initial_datum, manifest.grid)

    sol = solve_nonlinear(u0, cfg, T, record_every=manifest.outputs.cadence)
    csv = os.path.join(outdir, "diagnostics.csv")
    write_diagnostics(csv, sol.reports)
    render_diagnostics_figure(
        csv, os.path.join(outdir, "diagnostics.png"), f"nonlinear {model} ({cfg.mode})"
    )

    r0 = sol.reports[0]
    mass_drift = max(abs(r.mass - sol.mass0) for r in sol.reports) / max(sol.mass0, 1e-300)
    worst_min = min(r.min_value for r in sol.reports)
    min_floor = -1e-12 * r0.linf
    checks = [
        _check("mass_conservation", mass_drift <= 1e-10, mass_drift, 1e-10),
        _check("positivity", worst_min >= min_floor, worst_min, min_floor),
    ]
    if sol.global_rate is not None:
        checks.append(
            _check("mass_controlled_envelope", sol.max_envelope_excess <= 1.05,
                   sol.max_envelope_excess, 1.05)
        )
    extra = {
        "T": T,
        "horizon_reached": sol.horizon,
        "horizon_limited": sol.horizon_limited,
        "windows": len(sol.windows),
    }
    return _finish(outdir, manifest, checks, extra)


def run_particles(manifest: RunManifest, outdir: str) -> int:
    section = manifest.section
    grid, params = manifest.grid, manifest.params
    n = int(section.get("n", 10000))
    T = float(section.get("T", 1.0))
    radius = float(section.get("radius", grid.L / 8.0))
    alpha = section.get("alpha", "mean")
    cfg = InteractionConfig(
        radius=radius,
        alpha=alpha if alpha == "mean" else float(alpha),
        include_self=bool(section.get("include_self", True)),
        method=section.get("method", "hash"),
        mesh_nx=int(section.get("mesh_nx", grid.nx)),
    )
    n_dumps = int(section.get("n_dumps", 0))

    u0 = make_initial_datum(manifest.initial_datum, grid)
    ens = sample_from_field(u0, n, manifest.seed)
    n_steps = max(1, int(math.ceil(T / grid.dt - 1e-12)))
    dt = T / n_steps

    times, pols = [0.0], [ens.polarization()]
    dump_at = set()
    if n_dumps > 0:
        dump_at = {int(round(i * n_steps / n_dumps)) for i in range(1, n_dumps + 1)}
        _write_particles(os.path.join(outdir, "particles_t0.csv"), ens)
    for k in range(n_steps):
        ens = step_particles(ens, cfg, params, dt)
        if (k + 1) % manifest.outputs.cadence == 0 or k + 1 == n_steps:
            times.append((k + 1) * dt)
            pols.append(ens.polarization())
        if (k + 1) in dump_at:
            _write_particles(
                os.path.join(outdir, f"particles_t{(k + 1) * dt:012.6f}.csv"), ens
            )

    pols = np.asarray(pols)
    write_columns(
        os.path.join(outdir, "particles_diagnostics.csv"),
        ("t", "polarization_x", "polarization_y"),
        (times, pols[:, 0], pols[:, 1]),
    )
    render_particle_figure(times, pols, out_path=os.path.join(outdir, "particles.png"))
    checks = [
        _check("polarization_bounded", float(np.hypot(*pols.T).max()) <= 1.0 + 1e-9,
               float(np.hypot(*pols.T).max()), 1.0),
    ]
    return _finish(outdir, manifest, checks, {"n": n, "T": T})


def _write_particles(path, ens):
    write_columns(
        path,
        ("x1", "x2", "theta", "weight"),
        (ens.x[:, 0], ens.x[:, 1], ens.theta, ens.weights),
    )


def run_scaling(manifest: RunManifest, outdir: str) -> int:
    section = manifest.section
    grid, params = manifest.grid, manifest.params
    T = float(section.get("T", 0.4))
    eps_list = [float(e) for e in section.get("eps_list", [0.2, 0.1, 0.05])]
    n_snapshots = int(section.get("n_snapshots", 5))
    v0 = make_datum_callable(manifest.initial_datum, grid)
    phis = default_test_functions(grid.L)

    report = order_study(
        v0, eps_list, phis, manifest.kernel, params, grid, T,
        n_snapshots=n_snapshots, memory_cap_mb=manifest.memory_cap_mb,
    )
    write_columns(
        os.path.join(outdir, "remainders.csv"),
        ("eps", "phi_id", "remainder", "remainder_cov", "agreement_rel",
         "grad_phi_sup", "grad_phi_l1", "grad_phi_l2", "ratio"),
        tuple(
            zip(
                *[
                    (r.eps, r.phi_label, r.remainder, r.remainder_cov, r.agreement_rel,
                     r.grad_sup, r.grad_l1, r.grad_l2, r.ratio_sup)
                    for r in report.rows
                ]
            )
        ),
    )
    write_columns(
        os.path.join(outdir, "slopes.csv"),
        ("phi_id", "slope", "ci95_halfwidth"),
        tuple(zip(*[(k, v[0], v[1]) for k, v in report.slopes.items()])),
    )
    render_scaling_figure(
        report.rows, report.slopes, report.pooled_slope,
        os.path.join(outdir, "remainder_vs_eps.png"),
    )

    worst_agree = max(r.agreement_rel for r in report.rows)
    monotone = True
    for phi in {r.phi_label for r in report.rows}:
        vals = [r.remainder for r in sorted(
            (r for r in report.rows if r.phi_label == phi), key=lambda r: -r.eps
        )]
        monotone &= all(a > b for a, b in zip(vals, vals[1:]))
    checks = [
        _check("dual_formulation_agreement", worst_agree <= 1e-6, worst_agree, 1e-6),
        _check("remainder_monotone_in_eps", monotone, float(monotone), 1.0),
        _check("slope_at_least_proof_order",
               report.pooled_slope >= 0.8 and not report.degenerate,
               report.pooled_slope, 0.8),
    ]
    extra = {"pooled_slope": report.pooled_slope, "pooled_ci95": report.pooled_ci,
             "eps_list": eps_list}
    print(f"measured log-log slope: {report.pooled_slope:.3f} "
          f"+/- {report.pooled_ci:.3f} (95% CI)")
    return _finish(outdir, manifest, checks, extra)


def run_continuity(manifest: RunManifest, outdir: str) -> int:
    section = manifest.section
    grid, params = manifest.grid, manifest.params
    T = float(section.get("T", 0.5))
    p = float(section.get("p", 2.0))
    amp = float(section.get("perturbation", 1e-3))
    freq = int(section.get("perturbation_theta_freq", 1))
    model = "nonlocal" if isinstance(manifest.kernel, SeparableRadial) else "local"
    cfg = NonlinearRunConfig(model=model, kernel=manifest.kernel, params=params,
                             mode="semi-implicit")

    u01 = make_initial_datum(manifest.initial_datum, grid)
    pattern = 1.0 + amp * np.cos(freq * grid.thetas)
    u02 = Field(grid, u01.values * pattern[None, None, :], density=True)

    rep = continuity_study(u01, u02, cfg, p, T, record_every=manifest.outputs.cadence)
    write_columns(
        os.path.join(outdir, "growth.csv"),
        ("t", "ratio_lp", "ratio_supnorm"),
        (rep.times, rep.ratio_lp, rep.ratio_supnorm),
    )
    render_continuity_figure(rep, os.path.join(outdir, "growth.png"))
    bound_ok = all(
        r <= math.exp(rep.c_fit * t) * (1 + 1e-9) for t, r in zip(rep.times, rep.ratio_lp)
    )
    checks = [
        _check("gap_below_fitted_exponential", bound_ok, float(bound_ok), 1.0),
        _check("fitted_rate_finite", math.isfinite(rep.c_fit), rep.c_fit, 0.0),
    ]
    extra = {"c_fit": rep.c_fit, "c_fit_supnorm": rep.c_fit_supnorm,
             "c_scale": rep.c_scale, "p": p, "perturbation": amp}
    print(f"fitted growth constant: {rep.c_fit:.4g} (scale {rep.c_scale:.4g})")
    return _finish(outdir, manifest, checks, extra)


def run_verify_ops(manifest: RunManifest | None, outdir: str) -> int:
    thetas64 = np.arange(64) * (2.0 * np.pi / 64)
    pairs = [
        (np.cos(thetas64), np.sin(thetas64)),
        (np.ones(64), np.cos(thetas64)),
        (np.cos(2 * thetas64), np.sin(3 * thetas64)),
    ]
    spectral_res = max(check_ibp(f, g, method="spectral") for f, g in pairs)

    ns = [32, 64, 128]
    fd_res = []
    for n in ns:
        th = np.arange(n) * (2.0 * np.pi / n)
        fd_res.append(check_ibp(np.exp(np.sin(th)), np.cos(2 * th), method="fd"))
    orders = [math.log2(fd_res[i] / fd_res[i + 1]) for i in range(len(ns) - 1)]

    # projection and constant-vector identities at machine precision
    from .sphere import div_omega, grad_omega, proj_perp, TangentField
    from .grid import GridSpec

    g64 = GridSpec(nx=4, L=1.0, ntheta=64, dt=0.1)
    th = g64.thetas
    om = np.stack([np.cos(th), np.sin(th)], axis=-1)
    proj_zero = float(np.max(np.abs(proj_perp(th, om))))
    v = np.array([0.7, -0.4])
    fld = Field.from_profile(g64, om @ v)
    tf = grad_omega(fld)
    expect = -v[0] * np.sin(th) + v[1] * np.cos(th)
    grad_res = float(np.max(np.abs(tf.component[0, 0] - expect)))
    div = div_omega(TangentField(g64, np.broadcast_to(expect, g64.shape).copy()))
    div_res = float(np.max(np.abs(div.values[0, 0] + (om @ v))))

    write_columns(
        os.path.join(outdir, "residuals.csv"),
        ("check", "value"),
        (
            ["ibp_spectral_64", "proj_omega_zero", "grad_of_omega_dot_v", "div_proj_const",
             *[f"ibp_fd_{n}" for n in ns]],
            [spectral_res, proj_zero, grad_res, div_res, *fd_res],
        ),
    )
    render_verify_figure(ns, fd_res, spectral_res, os.path.join(outdir, "residuals.png"))

    checks = [
        _check("ibp_spectral_below_1e-10", spectral_res < 1e-10, spectral_res, 1e-10),
        _check("pointwise_identities_machine", max(proj_zero, grad_res, div_res) < 1e-10,
               max(proj_zero, grad_res, div_res), 1e-10),
        _check("fd_second_order", min(orders) >= 1.7, min(orders), 1.7),
    ]
    return _finish(outdir, manifest, checks, {"fd_orders": orders})


def run_compare(kinetic_dir, particle_dir, outdir) -> int:
    from .particles import meanfield_compare
    from .reporting import read_diagnostics

    kin = read_diagnostics(os.path.join(kinetic_dir, "diagnostics.csv"))
    par = read_diagnostics(os.path.join(particle_dir, "particles_diagnostics.csv"))
    cmp = meanfield_compare(
        par["t"],
        np.stack([par["polarization_x"], par["polarization_y"]], axis=-1),
        kin["t"],
        np.stack([kin["polarization_x"], kin["polarization_y"]], axis=-1),
    )
    write_columns(
        os.path.join(outdir, "compare.csv"),
        ("t", "polarization_gap"),
        (cmp.times, cmp.polarization_gap),
    )
    render_particle_figure(
        par["t"],
        np.stack([par["polarization_x"], par["polarization_y"]], axis=-1),
        kin["t"],
        np.stack([kin["polarization_x"], kin["polarization_y"]], axis=-1),
        out_path=os.path.join(outdir, "compare.png"),
    )
    append_summary(
        os.path.join(outdir, "summary.jsonl"),
        {
            "experiment": "compare",
            "max_polarization_gap": float(cmp.polarization_gap.max()),
            "final_polarization_gap": float(cmp.polarization_gap[-1]),
        },
    )
    print(f"max polarization gap: {cmp.polarization_gap.max():.4g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

_RUNNERS = {
    "linear": run_linear,
    "nonlinear-nonlocal": run_nonlinear,
    "nonlinear-local": run_nonlinear,
    "particles": run_particles,
    "scaling-study": run_scaling,
    "continuity-study": run_continuity,
    "verify-ops": run_verify_ops,
}


def _apply_overrides(manifest: RunManifest, args) -> RunManifest:
    if getattr(args, "dt", None) is not None and manifest.grid is not None:
        g = manifest.grid
        from .grid import GridSpec

        manifest.grid = GridSpec(nx=g.nx, L=g.L, ntheta=g.ntheta, dt=args.dt)
    if getattr(args, "T", None) is not None:
        manifest.section = dict(manifest.section)
        manifest.section["T"] = args.T
    if getattr(args, "out", None) is not None:
        manifest.outputs.directory = args.out
    return manifest


def _run_manifest_command(args, expected=None) -> int:
    try:
        manifest = load_manifest(args.manifest)
        if expected and manifest.experiment != expected:
            raise SchemaError(
                f"manifest experiment {manifest.experiment!r}; this subcommand"
                f" expects {expected!r}"
            )
        manifest = _apply_overrides(manifest, args)
        outdir = ensure_dir(manifest.outputs.directory)
        return _RUNNERS[manifest.experiment](manifest, outdir)
    except SchemaError as e:
        print(f"schema error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except (GuardrailError, ResolutionError, CadenceError) as e:
        print(f"guardrail: {e}", file=sys.stderr)
        return EXIT_GUARDRAIL
    except (NumericalAbortError, CorruptFieldError, PicardFailureError) as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except VicsekError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vicsekfp",
        description="Kinetic alignment-model laboratory: solvers, particles, studies.",
    )
    parser.add_argument("--version", action="version", version=f"vicsekfp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def manifest_cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("manifest")
        p.add_argument("--dt", type=float, default=None, help="override grid dt")
        p.add_argument("--T", type=float, default=None, help="override horizon")
        p.add_argument("--out", default=None, help="override output directory")
        return p

    manifest_cmd("run", "run the experiment named in the manifest")
    manifest_cmd("scaling-study", "rescaling remainder study")
    manifest_cmd("continuity-study", "continuity-in-data study")
    manifest_cmd("particles", "particle simulation")

    pv = sub.add_parser("verify-ops", help="orientation-calculus identity suite")
    pv.add_argument("--out", default="out", help="output directory")

    pc = sub.add_parser("compare", help="compare kinetic and particle runs")
    pc.add_argument("kinetic_dir")
    pc.add_argument("particle_dir")
    pc.add_argument("--out", default="out", help="output directory")

    args = parser.parse_args(argv)

    if args.command == "verify-ops":
        return run_verify_ops(None, ensure_dir(args.out))
    if args.command == "compare":
        return run_compare(args.kinetic_dir, args.particle_dir, ensure_dir(args.out))
    expected = {
        "run": None,
        "scaling-study": "scaling-study",
        "continuity-study": "continuity-study",
        "particles": "particles",
    }[args.command]
    return _run_manifest_command(args, expected)


if __name__ == "__main__":
    sys.exit(main())
