"""Interaction kernels and alignment force fields.

Three kernel forms are supported:

* DipolarNematic(a, b): the local angle kernel a w* + b (w . w*) w*.
* SeparableRadial(profile, cutoff, angular): a spatial kernel
  phi(|x*|) * psi(w, w*) with compactly supported radial profile and a
  local angle law for psi.
* TabulatedLocal: an angle kernel tabulated on the solver's theta grid
  (no interpolation across resolutions; re-tabulate instead).

The nonlocal force field F0 convolves the spatial kernel against the
distribution over the torus (FFT with a direct-sum fallback); the local
force F1 integrates the angle kernel over theta*.  Reducing a spatial
kernel by integrating out x* yields the local kernel that F1 uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import (
    DomainWrapError,
    IntegrabilityError,
    InvalidParameterError,
)
from .grid import Field, GridSpec, ModelParams


# ---------------------------------------------------------------------------
# Kernel specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DipolarNematic:
    """Angle kernel a w* + b (w . w*) w* with a, b >= 0."""

    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise InvalidParameterError("dipolar-nematic coefficients must be nonnegative")

    def tables(self, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Component tables kx[i, j], ky[i, j] at angles (thetas[i], thetas[j])."""
        th = np.asarray(thetas)
        coeff = self.a + self.b * np.cos(th[None, :] - th[:, None])
        return coeff * np.cos(th)[None, :], coeff * np.sin(th)[None, :]

    def dtheta_tables(self, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Tables of the omega-derivative d/dtheta k(theta, theta*)."""
        th = np.asarray(thetas)
        dcoeff = self.b * np.sin(th[None, :] - th[:, None])
        return dcoeff * np.cos(th)[None, :], dcoeff * np.sin(th)[None, :]


@dataclass(frozen=True)
class TabulatedLocal:
    """Angle kernel stored as component tables on an equispaced theta grid."""

    kx: np.ndarray
    ky: np.ndarray

    def __post_init__(self):
        kx = np.asarray(self.kx, dtype=np.float64)
        ky = np.asarray(self.ky, dtype=np.float64)
        if kx.ndim != 2 or kx.shape[0] != kx.shape[1] or kx.shape != ky.shape:
            raise InvalidParameterError("kernel tables must be square and equally shaped")
        object.__setattr__(self, "kx", kx)
        object.__setattr__(self, "ky", ky)

    @property
    def ntheta(self) -> int:
        return self.kx.shape[0]

    def tables(self, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if len(thetas) != self.ntheta:
            raise InvalidParameterError(
                f"tabulated kernel has ntheta={self.ntheta}, grid wants {len(thetas)};"
                " re-tabulate instead of interpolating"
            )
        return self.kx, self.ky

    def dtheta_tables(self, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n = self.ntheta
        k = np.fft.rfftfreq(n, d=1.0 / n)
        mult = 1j * k
        if n % 2 == 0:
            mult[-1] = 0.0
        dkx = np.fft.irfft(np.fft.rfft(self.kx, axis=0) * mult[:, None], n=n, axis=0)
        dky = np.fft.irfft(np.fft.rfft(self.ky, axis=0) * mult[:, None], n=n, axis=0)
        return dkx, dky


@dataclass(frozen=True)
class SeparableRadial:
    """Spatial kernel phi(|x*|) psi(w, w*) with cutoff radius on the profile."""

    profile: object  # vectorized callable r -> phi(r)
    cutoff: float
    angular: object  # DipolarNematic or TabulatedLocal
    quadrature_n: int = 256  # default disk-quadrature resolution per axis

    def __post_init__(self):
        if self.cutoff <= 0:
            raise InvalidParameterError("cutoff radius must be positive")
        r = np.linspace(0.0, self.cutoff, 257)
        vals = np.asarray(self.profile(r), dtype=np.float64)
        if not np.all(np.isfinite(vals)):
            raise IntegrabilityError("radial profile is not finite on its support")


LOCAL_FORMS = (DipolarNematic, TabulatedLocal)


def radial_profile(name: str, amplitude: float, cutoff: float):
    """Named radial profiles; all vanish beyond the cutoff radius."""
    if name == "indicator":
        return lambda r: amplitude * (np.asarray(r) <= cutoff)
    if name == "bump":

        def bump(r):
            r = np.asarray(r, dtype=np.float64)
            s = np.clip(r / cutoff, 0.0, None)
            out = np.zeros_like(s)
            inside = s < 1.0
            out[inside] = amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
            return out

        return bump
    if name == "cosine":

        def cosine(r):
            r = np.asarray(r, dtype=np.float64)
            out = amplitude * np.cos(np.pi * r / (2.0 * cutoff)) ** 2
            return np.where(r <= cutoff, out, 0.0)

        return cosine
    raise InvalidParameterError(f"unknown radial profile {name!r}")


# ---------------------------------------------------------------------------
# Kernel evaluation and reduction
# ---------------------------------------------------------------------------


def eval_k(theta, theta_star, spec) -> np.ndarray:
    """Evaluate a local angle kernel at (theta, theta*); returns a 2-vector.

    Tabulated kernels are stored at fixed resolution, so their angles must
    land on table nodes.
    """
    if isinstance(spec, DipolarNematic):
        theta = np.asarray(theta, dtype=np.float64)
        theta_star = np.asarray(theta_star, dtype=np.float64)
        coeff = spec.a + spec.b * np.cos(theta_star - theta)
        return np.stack(
            [coeff * np.cos(theta_star), coeff * np.sin(theta_star)], axis=-1
        )
    if isinstance(spec, TabulatedLocal):
        n = spec.ntheta
        dth = 2.0 * np.pi / n
        i = int(round(float(theta) / dth)) % n
        j = int(round(float(theta_star) / dth)) % n
        if abs(float(theta) - dth * round(float(theta) / dth)) > 1e-9 or abs(
            float(theta_star) - dth * round(float(theta_star) / dth)
        ) > 1e-9:
            raise InvalidParameterError(
                "tabulated kernel evaluated off its angle grid; re-tabulate"
            )
        return np.array([spec.kx[i, j], spec.ky[i, j]])
    raise InvalidParameterError("eval_k requires a DipolarNematic or TabulatedLocal kernel")


def disk_integral(profile, cutoff: float, nquad: int = 256) -> float:
    """Midpoint quadrature of the radial profile over [-R, R]^2 (disk support)."""
    h = 2.0 * cutoff / nquad
    centers = -cutoff + h * (np.arange(nquad) + 0.5)
    r = np.hypot(centers[:, None], centers[None, :])
    vals = np.asarray(profile(r), dtype=np.float64)
    vals = np.where(r <= cutoff, vals, 0.0)
    if not np.all(np.isfinite(vals)):
        raise IntegrabilityError("radial profile diverges on its cutoff disk")
    return float(np.sum(vals)) * h * h


def disk_integral_polar(profile, cutoff: float, nquad: int = 128, absolute=False) -> float:
    """Gauss-Legendre quadrature of 2 pi int_0^R phi(r) r dr."""
    nodes, weights = leggauss(nquad)
    r = 0.5 * cutoff * (nodes + 1.0)
    w = 0.5 * cutoff * weights
    vals = np.asarray(profile(r), dtype=np.float64)
    if absolute:
        vals = np.abs(vals)
    if not np.all(np.isfinite(vals)):
        raise IntegrabilityError("radial profile diverges on its cutoff disk")
    return float(2.0 * np.pi * np.sum(vals * r * w))


def lattice_disk_integral(spec: SeparableRadial, grid: GridSpec) -> float:
    """Profile integral on the solver lattice; matches the FFT convolution exactly."""
    phi = kernel_lattice(spec, grid)
    return float(np.sum(phi)) * grid.dx**2


def reduce_kernel(spec: SeparableRadial, ntheta: int, nquad: int | None = None) -> TabulatedLocal:
    """Integrate out the spatial variable of a separable kernel.

    Tabulates the reduced angle kernel on ntheta equispaced angles using a
    2-D midpoint quadrature over the cutoff disk (resolution nquad per axis).
    """
    if not isinstance(spec, SeparableRadial):
        raise InvalidParameterError("reduce_kernel needs a spatial (separable) kernel")
    weight = disk_integral(spec.profile, spec.cutoff, nquad or spec.quadrature_n)
    thetas = np.arange(ntheta) * (2.0 * np.pi / ntheta)
    psix, psiy = spec.angular.tables(thetas)
    return TabulatedLocal(weight * psix, weight * psiy)


def kernel_lattice(spec: SeparableRadial, grid: GridSpec) -> np.ndarray:
    """Radial profile sampled at minimal-image lattice offsets of the torus."""
    if spec.cutoff >= grid.L / 2.0:
        raise DomainWrapError(
            f"kernel cutoff {spec.cutoff} must be < L/2 = {grid.L / 2.0}"
        )
    d = (grid.xs + grid.L / 2.0) % grid.L - grid.L / 2.0
    r = np.hypot(d[:, None], d[None, :])
    vals = np.asarray(spec.profile(r), dtype=np.float64)
    return np.where(r <= spec.cutoff, vals, 0.0)


# ---------------------------------------------------------------------------
# Force fields
# ---------------------------------------------------------------------------


def _angular_contraction(values: np.ndarray, angular, thetas: np.ndarray):
    """G_x(..., theta) = sum_j kx(theta, theta_j) f(..., theta_j) dtheta, same for y."""
    kx, ky = angular.tables(thetas)
    dth = 2.0 * np.pi / len(thetas)
    gx = np.tensordot(values, kx, axes=([-1], [1])) * dth
    gy = np.tensordot(values, ky, axes=([-1], [1])) * dth
    return gx, gy


_HAT_CACHE = {}


def _kernel_lattice_hat(spec: SeparableRadial, grid: GridSpec) -> np.ndarray:
    key = (id(spec), grid)
    hit = _HAT_CACHE.get(key)
    if hit is None or hit[0] is not spec:
        if len(_HAT_CACHE) > 8:
            _HAT_CACHE.clear()
        hit = (spec, np.fft.rfft2(kernel_lattice(spec, grid)))
        _HAT_CACHE[key] = hit
    return hit[1]


def f0_field(f: Field, spec: SeparableRadial, method: str = "fft") -> np.ndarray:
    """Nonlocal alignment field: spatial convolution + angular integration.

    Returns an array of shape (nx, nx, ntheta, 2).  The FFT path convolves
    each theta-slice over the torus; the direct path multiplies by the dense
    pairwise-distance matrix and is meant for small grids and cross-checks.
    """
    if not isinstance(spec, SeparableRadial):
        raise InvalidParameterError("f0_field needs a spatial (separable) kernel")
    grid = f.grid
    gx, gy = _angular_contraction(f.values, spec.angular, grid.thetas)

    if method == "fft":
        phihat = _kernel_lattice_hat(spec, grid)
        fx = np.fft.irfft2(
            np.fft.rfft2(gx, axes=(0, 1)) * phihat[:, :, None], s=(grid.nx, grid.nx), axes=(0, 1)
        )
        fy = np.fft.irfft2(
            np.fft.rfft2(gy, axes=(0, 1)) * phihat[:, :, None], s=(grid.nx, grid.nx), axes=(0, 1)
        )
    elif method == "direct":
        # dense pairwise convolution: row i of the circulant distance matrix
        # is phi evaluated at minimal-image offsets between nodes i and j
        phi = kernel_lattice(spec, grid)
        n2 = grid.nx * grid.nx
        idx = np.arange(grid.nx)
        off = (idx[:, None] - idx[None, :]) % grid.nx
        mat = phi[off[:, None, :, None], off[None, :, None, :]].reshape(n2, n2)
        fx = (mat @ gx.reshape(n2, -1)).reshape(gx.shape)
        fy = (mat @ gy.reshape(n2, -1)).reshape(gy.shape)
    else:
        raise InvalidParameterError(f"unknown f0 method {method!r}")

    scale = grid.dx**2
    return np.stack([fx, fy], axis=-1) * scale


def f1_field(f: Field, spec) -> np.ndarray:
    """Local alignment field: angle-kernel integration per spatial node.

    spec is a DipolarNematic or TabulatedLocal kernel; returns (nx, nx, ntheta, 2).
    """
    if not isinstance(spec, LOCAL_FORMS):
        raise InvalidParameterError("f1_field needs a local angle kernel")
    gx, gy = _angular_contraction(f.values, spec, f.grid.thetas)
    return np.stack([gx, gy], axis=-1)


def force_field(f: Field, spec, model: str, method: str = "fft") -> np.ndarray:
    """Dispatch F0 (nonlocal) or F1 (local) according to the model name."""
    if model == "nonlocal":
        return f0_field(f, spec, method=method)
    if model == "local":
        local = spec if isinstance(spec, LOCAL_FORMS) else reduce_kernel(spec, f.grid.ntheta)
        return f1_field(f, local)
    raise InvalidParameterError(f"unknown model {model!r}")


# ---------------------------------------------------------------------------
# Kernel norms and iteration windows
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelBounds:
    """Norm constants of a kernel, and the induced growth-rate constants.

    k_inf_0 bounds |F0| + |grad_omega F0| per unit sup norm of the density;
    k_inf_1 does the same for F1.  c_inf_i = nu k_inf_i (1 + nu/sigma k_inf_i).
    k_sup is the sup norm of the spatial kernel and k_sup_w its sup norm
    including the omega-derivative; both are infinite for a nonzero local
    kernel, where no mass-only force control exists.
    """

    k_inf_0: float
    k_inf_1: float
    c_inf_0: float
    c_inf_1: float
    k_sup: float
    k_sup_w: float

    def c_inf(self, i: int) -> float:
        return (self.c_inf_0, self.c_inf_1)[i]

    def k_inf(self, i: int) -> float:
        return (self.k_inf_0, self.k_inf_1)[i]


def _angular_w1inf_l1(angular, ngrid: int = 1024) -> float:
    """sup_w int |psi| dw* + sup_w int |d_w psi| dw* on a fine angle grid."""
    if isinstance(angular, DipolarNematic):
        a, b = angular.a, angular.b
        if a >= b:
            int_abs = 2.0 * np.pi * a
        else:
            phi0 = math.acos(-a / b)
            int_abs = 4.0 * (a * phi0 + b * math.sin(phi0)) - 2.0 * np.pi * a
        return int_abs + 4.0 * b
    thetas = np.arange(ngrid) * (2.0 * np.pi / ngrid)
    if isinstance(angular, TabulatedLocal):
        # measured at native resolution; tables pin the quadrature
        thetas = np.arange(angular.ntheta) * (2.0 * np.pi / angular.ntheta)
    kx, ky = angular.tables(thetas)
    dkx, dky = angular.dtheta_tables(thetas)
    dth = 2.0 * np.pi / len(thetas)
    mag = np.hypot(kx, ky)
    dmag = np.hypot(dkx, dky)
    return float(np.max(mag.sum(axis=1)) * dth + np.max(dmag.sum(axis=1)) * dth)


def _angular_sup(angular) -> tuple[float, float]:
    """(sup |psi|, sup (|psi| + |d_w psi|)) over both angles."""
    if isinstance(angular, DipolarNematic):
        # depends on the relative angle only
        phi = np.arange(4096) * (2.0 * np.pi / 4096)
        mag = np.abs(angular.a + angular.b * np.cos(phi))
        dmag = angular.b * np.abs(np.sin(phi))
        return float(mag.max()), float((mag + dmag).max())
    thetas = np.arange(angular.ntheta) * (2.0 * np.pi / angular.ntheta)
    kx, ky = angular.tables(thetas)
    dkx, dky = angular.dtheta_tables(thetas)
    mag = np.hypot(kx, ky)
    return float(mag.max()), float((mag + np.hypot(dkx, dky)).max())


def kernel_bounds(spec, params: ModelParams, ngrid: int = 1024) -> KernelBounds:
    """Norm constants of the kernel and the induced growth rates.

    Spatial kernels get all entries; a purely local kernel is read as the
    zero-width limit in x, so its k_inf_0 equals k_inf_1 while the sup norms
    are infinite (unless the kernel vanishes identically).
    """
    nu, sigma = params.nu, params.sigma

    if isinstance(spec, SeparableRadial):
        w_ang = _angular_w1inf_l1(spec.angular, ngrid)
        phi_l1 = disk_integral_polar(spec.profile, spec.cutoff, absolute=True)
        phi_signed = disk_integral_polar(spec.profile, spec.cutoff)
        r = np.linspace(0.0, spec.cutoff, 4097)
        phi_sup = float(np.max(np.abs(spec.profile(r))))
        sup_psi, sup_psi_w = _angular_sup(spec.angular)
        k0 = phi_l1 * w_ang
        k1 = abs(phi_signed) * w_ang
        ksup = phi_sup * sup_psi
        ksupw = phi_sup * sup_psi_w
    elif isinstance(spec, LOCAL_FORMS):
        w_ang = _angular_w1inf_l1(spec, ngrid)
        k0 = k1 = w_ang
        zero = w_ang == 0.0
        ksup = 0.0 if zero else math.inf
        ksupw = 0.0 if zero else math.inf
    else:
        raise InvalidParameterError(f"unknown kernel spec {type(spec).__name__}")

    def c_inf(k):
        return nu * k * (1.0 + (nu / sigma) * k)

    return KernelBounds(
        k_inf_0=k0,
        k_inf_1=k1,
        c_inf_0=c_inf(k0),
        c_inf_1=c_inf(k1),
        k_sup=ksup,
        k_sup_w=ksupw,
    )


def picard_window(bounds: KernelBounds, u0_inf: float, R: float, i: int) -> float:
    """Admissible iteration window ln(R) / (R c_inf_i ||u0||_inf)."""
    if R <= 1.0:
        raise InvalidParameterError(f"window parameter R must exceed 1, got {R}")
    if u0_inf <= 0.0:
        raise InvalidParameterError("u0_inf must be positive")
    c = bounds.c_inf(i)
    if c <= 0.0:
        raise InvalidParameterError("c_inf must be positive for a finite window")
    return math.log(R) / (R * c * u0_inf)


def global_envelope_rate(bounds: KernelBounds, params: ModelParams, mass0: float) -> float:
    """Growth rate of the mass-controlled sup-norm envelope for the nonlocal model.

    Rate = nu ||K||_{sup,W} M (1 + nu/sigma ||K||_sup M) with M the conserved mass.
    """
    if not math.isfinite(bounds.k_sup):
        raise InvalidParameterError("mass-only envelope needs a bounded spatial kernel")
    return params.nu * bounds.k_sup_w * mass0 * (
        1.0 + (params.nu / params.sigma) * bounds.k_sup * mass0
    )
