"""Run manifests: schema-checked YAML with typed keys.

A manifest fully determines an experiment (grid, kernel, physical
constants, datum, seed, outputs), so archived manifests can be diffed and
replayed.  Unknown keys are rejected everywhere; command-line flags exist
only as overrides for dt, horizon, and output directory.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field as dc_field

import yaml

from .errors import SchemaError
from .grid import GridSpec, ModelParams, load_kernel_table
from .kernels import DipolarNematic, SeparableRadial, TabulatedLocal, radial_profile

EXPERIMENTS = (
    "linear",
    "nonlinear-nonlocal",
    "nonlinear-local",
    "particles",
    "scaling-study",
    "continuity-study",
    "verify-ops",
)


@dataclass
class OutputConfig:
    cadence: int = 1
    directory: str = "out"
    dump_fields: bool = False


@dataclass
class RunManifest:
    experiment: str
    grid: GridSpec | None
    params: ModelParams | None
    kernel: object | None
    initial_datum: dict | None
    seed: int
    outputs: OutputConfig
    section: dict = dc_field(default_factory=dict)
    parallelism: int = 1
    memory_cap_mb: float = 4096.0
    digest: str = ""


def _require(cond, msg):
    if not cond:
        raise SchemaError(msg)


def _typed(d, key, types, default=None, required=False):
    if key not in d:
        _require(not required, f"missing required key {key!r}")
        return default
    v = d.pop(key)
    if bool in types and isinstance(v, bool):
        return v
    if isinstance(v, bool) and bool not in types:
        raise SchemaError(f"key {key!r} has wrong type bool")
    _require(isinstance(v, types), f"key {key!r} has wrong type {type(v).__name__}")
    return v


def _grid_from(d: dict) -> GridSpec:
    g = GridSpec(
        nx=int(_typed(d, "nx", (int,), required=True)),
        L=float(_typed(d, "L", (int, float), required=True)),
        ntheta=int(_typed(d, "ntheta", (int,), required=True)),
        dt=float(_typed(d, "dt", (int, float), required=True)),
    )
    _require(not d, f"unknown grid keys: {sorted(d)}")
    return g


def _params_from(d: dict) -> ModelParams:
    p = ModelParams(
        c=float(_typed(d, "c", (int, float), required=True)),
        sigma=float(_typed(d, "sigma", (int, float), required=True)),
        nu=float(_typed(d, "nu", (int, float), required=True)),
    )
    _require(not d, f"unknown params keys: {sorted(d)}")
    return p


def kernel_from_dict(d: dict):
    d = dict(d)
    form = _typed(d, "form", (str,), required=True)
    if form == "dipolar-nematic":
        spec = DipolarNematic(
            a=float(_typed(d, "a", (int, float), default=1.0)),
            b=float(_typed(d, "b", (int, float), default=0.0)),
        )
        _require(not d, f"unknown kernel keys: {sorted(d)}")
        return spec
    if form == "separable-radial":
        profile_name = _typed(d, "profile", (str,), default="bump")
        amplitude = float(_typed(d, "amplitude", (int, float), default=1.0))
        cutoff = float(_typed(d, "cutoff", (int, float), required=True))
        a = float(_typed(d, "a", (int, float), default=1.0))
        b = float(_typed(d, "b", (int, float), default=0.0))
        quad_n = int(_typed(d, "quadrature_n", (int,), default=256))
        _require(not d, f"unknown kernel keys: {sorted(d)}")
        return SeparableRadial(
            profile=radial_profile(profile_name, amplitude, cutoff),
            cutoff=cutoff,
            angular=DipolarNematic(a, b),
            quadrature_n=quad_n,
        )
    if form == "tabulated-local":
        path = _typed(d, "path", (str,), required=True)
        _require(not d, f"unknown kernel keys: {sorted(d)}")
        kx, ky = load_kernel_table(path)
        return TabulatedLocal(kx, ky)
    raise SchemaError(f"unknown kernel form {form!r}")


_SECTION_KEYS = {
    "linear": {"T": (int, float), "force": list, "n_steps": int},
    "nonlinear-nonlocal": {
        "T": (int, float), "mode": str, "R": (int, float),
        "picard_tol": (int, float), "picard_max_iter": int,
    },
    "nonlinear-local": {
        "T": (int, float), "mode": str, "R": (int, float),
        "picard_tol": (int, float), "picard_max_iter": int,
    },
    "particles": {
        "n": int, "T": (int, float), "radius": (int, float), "alpha": (str, int, float),
        "include_self": bool, "method": str, "mesh_nx": int, "n_dumps": int,
        "kinetic_compare": bool,
    },
    "scaling-study": {"T": (int, float), "eps_list": list, "n_snapshots": int},
    "continuity-study": {
        "T": (int, float), "p": (int, float), "perturbation": (int, float),
        "perturbation_theta_freq": int,
    },
    "verify-ops": {},
}

_SECTION_NAME = {
    "linear": "linear",
    "nonlinear-nonlocal": "nonlinear",
    "nonlinear-local": "nonlinear",
    "particles": "particles",
    "scaling-study": "scaling",
    "continuity-study": "continuity",
    "verify-ops": None,
}


def load_manifest(path) -> RunManifest:
    with open(path, "rb") as fh:
        raw = fh.read()
    data = yaml.safe_load(raw)
    _require(isinstance(data, dict), "manifest must be a mapping")
    digest = hashlib.sha256(raw).hexdigest()

    experiment = _typed(data, "experiment", (str,), required=True)
    _require(experiment in EXPERIMENTS, f"unknown experiment {experiment!r}")

    grid = None
    if "grid" in data:
        gd = _typed(data, "grid", (dict,))
        grid = _grid_from(dict(gd))
    params = None
    if "params" in data:
        params = _params_from(dict(_typed(data, "params", (dict,))))
    kernel = None
    if "kernel" in data:
        kernel = kernel_from_dict(_typed(data, "kernel", (dict,)))
    initial_datum = _typed(data, "initial_datum", (dict,), default=None)
    seed = int(_typed(data, "seed", (int,), default=0))

    outputs = OutputConfig()
    if "outputs" in data:
        od = dict(_typed(data, "outputs", (dict,)))
        outputs = OutputConfig(
            cadence=int(_typed(od, "cadence", (int,), default=1)),
            directory=str(_typed(od, "directory", (str,), default="out")),
            dump_fields=bool(_typed(od, "dump_fields", (bool,), default=False)),
        )
        _require(not od, f"unknown outputs keys: {sorted(od)}")

    section = {}
    sec_name = _SECTION_NAME[experiment]
    if sec_name is not None and sec_name in data:
        sd = dict(_typed(data, sec_name, (dict,)))
        allowed = _SECTION_KEYS[experiment]
        for key in list(sd):
            _require(key in allowed, f"unknown {sec_name} key {key!r}")
            val = sd[key]
            types = allowed[key]
            types = types if isinstance(types, tuple) else (types,)
            if bool not in types and isinstance(val, bool):
                raise SchemaError(f"{sec_name}.{key} has wrong type bool")
            _require(
                isinstance(val, types) or (float in types and isinstance(val, int)),
                f"{sec_name}.{key} has wrong type {type(val).__name__}",
            )
        section = sd

    parallelism = int(_typed(data, "parallelism", (int,), default=1))
    memory_cap_mb = float(_typed(data, "memory_cap_mb", (int, float), default=4096.0))
    _require(not data, f"unknown manifest keys: {sorted(data)}")

    m = RunManifest(
        experiment=experiment,
        grid=grid,
        params=params,
        kernel=kernel,
        initial_datum=initial_datum,
        seed=seed,
        outputs=outputs,
        section=section,
        parallelism=parallelism,
        memory_cap_mb=memory_cap_mb,
        digest=digest,
    )
    _validate_requirements(m)
    return m


def _validate_requirements(m: RunManifest):
    needs_grid = m.experiment not in ("verify-ops",)
    _require(not needs_grid or m.grid is not None, f"{m.experiment} requires a grid block")
    needs_params = m.experiment not in ("verify-ops",)
    _require(
        not needs_params or m.params is not None, f"{m.experiment} requires a params block"
    )
    if m.experiment in ("nonlinear-nonlocal", "nonlinear-local", "scaling-study"):
        _require(m.kernel is not None, f"{m.experiment} requires a kernel block")
    if m.experiment == "scaling-study":
        _require(isinstance(m.kernel, SeparableRadial), "scaling-study needs a spatial kernel")
        eps_list = m.section.get("eps_list", [0.2, 0.1, 0.05])
        _require(
            all(isinstance(e, (int, float)) and 0 < e <= 1 for e in eps_list),
            "eps_list entries must lie in (0, 1]",
        )
    if m.experiment != "verify-ops":
        _require(m.initial_datum is not None, f"{m.experiment} requires initial_datum")
    if m.grid is not None:
        estimate = m.grid.nx**2 * m.grid.ntheta * 8 * 12
        _require(
            estimate <= m.memory_cap_mb * 2**20,
            f"grid needs ~{estimate / 2**20:.0f} MiB > cap {m.memory_cap_mb} MiB",
        )
    _require(m.parallelism >= 1, "parallelism must be >= 1")


def manifest_summary_record(m: RunManifest) -> dict:
    return {"experiment": m.experiment, "manifest_sha256": m.digest, "seed": m.seed}
