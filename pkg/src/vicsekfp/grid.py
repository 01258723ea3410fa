"""Discretized phase space: periodic spatial torus x orientation circle.

The spatial domain is the periodic box [0, L)^2 on an nx x nx grid, the
orientation variable is an angle theta on ntheta equispaced nodes.  A
distribution f(x1, x2, theta) lives on the tensor grid as a Field.  All
quadrature uses the equispaced-node rule with uniform weights, which is
spectrally accurate for smooth periodic integrands.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    CorruptFieldError,
    InvalidParameterError,
    UndefinedOrderParameterError,
)

_MAGIC_FIELD = b"VKF1"
_MAGIC_KERNEL = b"VKT1"


@dataclass(frozen=True)
class GridSpec:
    """Tensor grid: nx points per spatial axis on [0, L)^2, ntheta angles, step dt."""

    nx: int
    L: float
    ntheta: int
    dt: float

    def __post_init__(self):
        if self.nx < 4:
            raise InvalidParameterError(f"nx must be >= 4, got {self.nx}")
        if self.ntheta < 8:
            raise InvalidParameterError(f"ntheta must be >= 8, got {self.ntheta}")
        if self.ntheta % 2 != 0:
            raise InvalidParameterError("ntheta must be even for spectral theta derivatives")
        if self.L <= 0:
            raise InvalidParameterError(f"L must be positive, got {self.L}")
        if self.dt <= 0:
            raise InvalidParameterError(f"dt must be positive, got {self.dt}")

    @property
    def dx(self) -> float:
        return self.L / self.nx

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.ntheta

    @property
    def cell_volume(self) -> float:
        """Quadrature weight dx^2 * dtheta of one (x1, x2, theta) cell."""
        return self.dx * self.dx * self.dtheta

    @property
    def xs(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    @property
    def thetas(self) -> np.ndarray:
        return np.arange(self.ntheta) * self.dtheta

    @property
    def omega(self) -> np.ndarray:
        """Unit orientation vectors (ntheta, 2)."""
        th = self.thetas
        return np.stack([np.cos(th), np.sin(th)], axis=-1)

    @property
    def tau(self) -> np.ndarray:
        """Unit tangent vectors (-sin, cos), shape (ntheta, 2)."""
        th = self.thetas
        return np.stack([-np.sin(th), np.cos(th)], axis=-1)

    @property
    def shape(self) -> tuple:
        return (self.nx, self.nx, self.ntheta)


@dataclass(frozen=True)
class ModelParams:
    """Physical constants: self-propulsion speed c, angular diffusion sigma,
    alignment rate nu.  All strictly positive."""

    c: float
    sigma: float
    nu: float

    def __post_init__(self):
        for name in ("c", "sigma", "nu"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"{name} must be strictly positive")


class Field:
    """Distribution f(x1, x2, theta) sampled on a GridSpec.

    Immutable snapshot: the value array is marked read-only on construction.
    A field flagged as a density must be elementwise nonnegative up to a
    roundoff allowance of 1e-12 times its sup norm.
    """

    __slots__ = ("grid", "values", "is_density")

    def __init__(self, grid: GridSpec, values, density: bool = False, _validate: bool = True):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != grid.shape:
            raise InvalidParameterError(
                f"field shape {values.shape} does not match grid shape {grid.shape}"
            )
        if _validate:
            if not np.all(np.isfinite(values)):
                raise CorruptFieldError("field contains non-finite values")
            if density and values.size:
                floor = -1e-12 * max(float(np.max(np.abs(values))), 1e-300)
                if float(values.min()) < floor:
                    raise CorruptFieldError(
                        f"density field has negative values (min {values.min():.3e})"
                    )
        self.grid = grid
        self.values = values
        self.values.setflags(write=False)
        self.is_density = bool(density)

    def with_values(self, values, density=None, _validate=False) -> "Field":
        """A new Field on the same grid (fast path for steppers)."""
        return Field(
            self.grid,
            values,
            density=self.is_density if density is None else density,
            _validate=_validate,
        )

    def copy_values(self) -> np.ndarray:
        return np.array(self.values)

    @classmethod
    def constant(cls, grid: GridSpec, value: float, density: bool = False) -> "Field":
        return cls(grid, np.full(grid.shape, float(value)), density=density)

    @classmethod
    def from_profile(cls, grid: GridSpec, profile, density: bool = False) -> "Field":
        """Field constant in x from a theta-profile array of length ntheta."""
        prof = np.asarray(profile, dtype=np.float64)
        vals = np.broadcast_to(prof, grid.shape).copy()
        return cls(grid, vals, density=density)


def mass(f: Field) -> float:
    """Total integral of f over the box and the circle (uniform-weight rule)."""
    total = float(np.sum(f.values)) * f.grid.cell_volume
    if not np.isfinite(total):
        raise CorruptFieldError("mass is non-finite; field state is corrupted")
    return total


def lp_norm(f: Field, p) -> float:
    """Discrete L^p norm with quadrature weights; p = inf gives max |values|."""
    if p == np.inf or p == float("inf"):
        return float(np.max(np.abs(f.values)))
    p = float(p)
    if p < 1:
        raise InvalidParameterError(f"L^p norm requires p >= 1 or p = inf, got {p}")
    w = f.grid.cell_volume
    return float((np.sum(np.abs(f.values) ** p) * w) ** (1.0 / p))


def polarization(f: Field) -> np.ndarray:
    """Normalized first orientation moment (int f omega) / mass(f), a 2-vector."""
    m = mass(f)
    if m == 0.0:
        raise UndefinedOrderParameterError("polarization undefined for zero-mass field")
    w = f.grid.cell_volume
    slice_sums = np.sum(f.values, axis=(0, 1))
    px = float(np.dot(slice_sums, np.cos(f.grid.thetas))) * w
    py = float(np.dot(slice_sums, np.sin(f.grid.thetas))) * w
    return np.array([px / m, py / m])


# ---------------------------------------------------------------------------
# Binary / text field dumps.
#
# Binary layout: magic "VKF1", nx (uint32), ntheta (uint32), L, dt, t (three
# float64), then row-major float64 values with x1 slowest and theta fastest.
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<4sII3d")


def dump_field(f: Field, path, t: float = 0.0) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC_FIELD, f.grid.nx, f.grid.ntheta, f.grid.L, f.grid.dt, t))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_field(path) -> tuple[Field, float]:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        magic, nx, ntheta, L, dt, t = _HEADER.unpack(header)
        if magic != _MAGIC_FIELD:
            raise CorruptFieldError(f"bad magic {magic!r} in field dump {path}")
        raw = np.frombuffer(fh.read(), dtype="<f8")
    grid = GridSpec(nx=nx, L=L, ntheta=ntheta, dt=dt)
    if raw.size != nx * nx * ntheta:
        raise CorruptFieldError(f"field dump {path} truncated")
    return Field(grid, raw.reshape(grid.shape)), t


def dump_field_text(f: Field, path, t: float = 0.0) -> None:
    """Plain-text variant for small grids: header line then one value per line."""
    with open(path, "w") as fh:
        fh.write(f"VKF1 {f.grid.nx} {f.grid.ntheta} {f.grid.L!r} {f.grid.dt!r} {t!r}\n")
        np.savetxt(fh, f.values.reshape(-1), fmt="%.17g")


def load_field_text(path) -> tuple[Field, float]:
    with open(path) as fh:
        head = fh.readline().split()
        if head[0] != "VKF1":
            raise CorruptFieldError(f"bad text field header in {path}")
        nx, ntheta = int(head[1]), int(head[2])
        L, dt, t = float(head[3]), float(head[4]), float(head[5])
        raw = np.loadtxt(fh)
    grid = GridSpec(nx=nx, L=L, ntheta=ntheta, dt=dt)
    return Field(grid, raw.reshape(grid.shape)), t


def dump_kernel_table(kx: np.ndarray, ky: np.ndarray, path) -> None:
    """Store a tabulated angle kernel (two ntheta x ntheta components)."""
    n = kx.shape[0]
    if kx.shape != (n, n) or ky.shape != (n, n):
        raise InvalidParameterError("kernel tables must be square and equally sized")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII3d", _MAGIC_KERNEL, n, n, 0.0, 0.0, 0.0))
        fh.write(np.ascontiguousarray(kx, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(ky, dtype="<f8").tobytes())


def load_kernel_table(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        magic, n, _, _, _, _ = struct.unpack("<4sII3d", fh.read(_HEADER.size))
        if magic != _MAGIC_KERNEL:
            raise CorruptFieldError(f"bad magic {magic!r} in kernel table {path}")
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != 2 * n * n:
        raise CorruptFieldError(f"kernel table {path} truncated")
    return raw[: n * n].reshape(n, n).copy(), raw[n * n :].reshape(n, n).copy()
