"""Self-propelled particle system with projected orientation noise.

Particles carry a position on the periodic box and a heading angle.  On
the circle the projected Stratonovich orientation equation reduces
exactly to an angle SDE,

    d theta_k = nu (target_k . tau(theta_k)) dt + sqrt(2 sigma) dW_k,

so headings are advanced by a Heun step for the tangential drift plus an
exact Gaussian increment, and positions move at speed c along the
midpoint orientation.  The alignment target of particle k is a
neighbor sum of orientations, either sharp-radius (spatial hash with
cell size >= R) or weighted by a radial kernel profile; a particle-mesh
evaluation of the weighted sum is available for large ensembles.

Randomness is counting-based: each step draws from a Philox stream keyed
by (seed, step index), so trajectories are bit-reproducible under any
execution schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidParameterError, StepRejectedError
from .grid import Field, GridSpec, ModelParams, mass


@dataclass(frozen=True)
class ParticleEnsemble:
    """Positions in [0, L)^2, heading angles in [0, 2 pi), per-particle mass."""

    L: float
    x: np.ndarray        # (n, 2)
    theta: np.ndarray    # (n,)
    weights: np.ndarray  # (n,)
    seed: int
    step_index: int = 0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        theta = np.asarray(self.theta, dtype=np.float64) % (2.0 * np.pi)
        weights = np.asarray(self.weights, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != 2:
            raise InvalidParameterError("positions must have shape (n, 2)")
        if theta.shape != (x.shape[0],) or weights.shape != (x.shape[0],):
            raise InvalidParameterError("theta and weights must have shape (n,)")
        object.__setattr__(self, "x", x % self.L)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def omega(self) -> np.ndarray:
        return np.stack([np.cos(self.theta), np.sin(self.theta)], axis=-1)

    def polarization(self) -> np.ndarray:
        wsum = float(self.weights.sum())
        return (self.weights[:, None] * self.omega).sum(axis=0) / wsum

    @classmethod
    def uniform_random(cls, n, L, seed, total_mass=1.0) -> "ParticleEnsemble":
        rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
        x = rng.random((n, 2)) * L
        theta = rng.random(n) * 2.0 * np.pi
        w = np.full(n, total_mass / n)
        return cls(L=L, x=x, theta=theta, weights=w, seed=seed)


@dataclass(frozen=True)
class InteractionConfig:
    """Alignment interaction: sharp radius or kernel-weighted neighbor sums.

    alpha is "mean" (divide by the summed neighbor weight) or a raw-sum
    prefactor.  nematic_b adds the second-moment coupling b (w . w*) w*.
    method "hash" is the exact cell-list sum; "mesh" evaluates the weighted
    sum through deposit/convolve/interpolate on a mesh_nx^2 grid (large n).
    """

    radius: float
    alpha: object = "mean"
    include_self: bool = True
    profile: object = None  # optional radial weight callable, cutoff = radius
    nematic_b: float = 0.0
    method: str = "hash"
    mesh_nx: int = 64

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidParameterError("interaction radius must be positive")
        if self.method not in ("hash", "mesh"):
            raise InvalidParameterError(f"unknown interaction method {self.method!r}")


def _pair_weight(cfg: InteractionConfig, dist: np.ndarray) -> np.ndarray:
    if cfg.profile is None:
        return (dist < cfg.radius).astype(np.float64)
    w = np.asarray(cfg.profile(dist), dtype=np.float64)
    return np.where(dist <= cfg.radius, w, 0.0)


def _neighbor_moments_hash(ens: ParticleEnsemble, cfg: InteractionConfig):
    """Weighted sums (w, w omega, w omega omega^T) over neighbors, cell lists."""
    L, R = ens.L, cfg.radius
    if R >= L / 2.0:
        raise InvalidParameterError("interaction radius must be < L/2 on the torus")
    ncell = max(1, int(L / R))  # cell size L/ncell >= R
    cell = L / ncell
    n = ens.n
    ix = np.minimum((ens.x[:, 0] / cell).astype(np.int64), ncell - 1)
    iy = np.minimum((ens.x[:, 1] / cell).astype(np.int64), ncell - 1)
    cid = ix * ncell + iy
    order = np.argsort(cid, kind="stable")
    sorted_cid = cid[order]
    starts = np.searchsorted(sorted_cid, np.arange(ncell * ncell))
    ends = np.searchsorted(sorted_cid, np.arange(ncell * ncell), side="right")

    om = ens.omega
    w = ens.weights
    s0 = np.zeros(n)
    s1 = np.zeros((n, 2))
    s2 = np.zeros((n, 3))  # qxx, qxy, qyy
    offsets = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)]

    for cx in range(ncell):
        for cy in range(ncell):
            members = order[starts[cx * ncell + cy] : ends[cx * ncell + cy]]
            if members.size == 0:
                continue
            # distinct neighbor cells partition the particles, so slices of the
            # sorted order never contain duplicates
            nb_ids = sorted({((cx + di) % ncell) * ncell + (cy + dj) % ncell
                             for di, dj in offsets})
            cand = np.concatenate([order[starts[nb] : ends[nb]] for nb in nb_ids])
            d = ens.x[members][:, None, :] - ens.x[cand][None, :, :]
            d = (d + L / 2.0) % L - L / 2.0
            dist = np.hypot(d[..., 0], d[..., 1])
            pw = _pair_weight(cfg, dist)
            if not cfg.include_self:
                pw[dist == 0.0] = 0.0
            pw = pw * w[cand][None, :]
            s0[members] = pw.sum(axis=1)
            s1[members, 0] = pw @ om[cand, 0]
            s1[members, 1] = pw @ om[cand, 1]
            s2[members, 0] = pw @ (om[cand, 0] * om[cand, 0])
            s2[members, 1] = pw @ (om[cand, 0] * om[cand, 1])
            s2[members, 2] = pw @ (om[cand, 1] * om[cand, 1])
    return s0, s1, s2


def _neighbor_moments_mesh(ens: ParticleEnsemble, cfg: InteractionConfig):
    """Same moments through deposit, FFT convolution with the pair weight,
    and bilinear interpolation back to the particles."""
    L = ens.L
    nx = cfg.mesh_nx
    dx = L / nx
    om = ens.omega
    w = ens.weights
    fields = np.stack(
        [
            w,
            w * om[:, 0],
            w * om[:, 1],
            w * om[:, 0] * om[:, 0],
            w * om[:, 0] * om[:, 1],
            w * om[:, 1] * om[:, 1],
        ],
        axis=-1,
    )
    mesh = _cic_deposit(ens.x, fields, nx, dx)  # (nx, nx, 6), raw sums per cell

    d = (np.arange(nx) * dx + L / 2.0) % L - L / 2.0
    dist = np.hypot(d[:, None], d[None, :])
    pw = _pair_weight(cfg, dist)
    conv = np.fft.irfft2(
        np.fft.rfft2(mesh, axes=(0, 1)) * np.fft.rfft2(pw)[:, :, None],
        s=(nx, nx),
        axes=(0, 1),
    )
    vals = _cic_interpolate(conv, ens.x, nx, dx)  # (n, 6)
    return vals[:, 0], vals[:, 1:3], vals[:, 3:6]


def _cic_deposit(x, fields, nx, dx):
    gx = x[:, 0] / dx
    gy = x[:, 1] / dx
    i0 = np.floor(gx).astype(np.int64) % nx
    j0 = np.floor(gy).astype(np.int64) % nx
    fx = gx - np.floor(gx)
    fy = gy - np.floor(gy)
    i1 = (i0 + 1) % nx
    j1 = (j0 + 1) % nx
    out = np.zeros((nx, nx) + fields.shape[1:])
    for ii, wxi in ((i0, 1.0 - fx), (i1, fx)):
        for jj, wyj in ((j0, 1.0 - fy), (j1, fy)):
            np.add.at(out, (ii, jj), fields * (wxi * wyj)[:, None])
    return out


def _cic_interpolate(mesh, x, nx, dx):
    gx = x[:, 0] / dx
    gy = x[:, 1] / dx
    i0 = np.floor(gx).astype(np.int64) % nx
    j0 = np.floor(gy).astype(np.int64) % nx
    fx = gx - np.floor(gx)
    fy = gy - np.floor(gy)
    i1 = (i0 + 1) % nx
    j1 = (j0 + 1) % nx
    return (
        mesh[i0, j0] * ((1 - fx) * (1 - fy))[:, None]
        + mesh[i1, j0] * (fx * (1 - fy))[:, None]
        + mesh[i0, j1] * ((1 - fx) * fy)[:, None]
        + mesh[i1, j1] * (fx * fy)[:, None]
    )


def alignment_targets(ens: ParticleEnsemble, cfg: InteractionConfig) -> np.ndarray:
    """Alignment target vectors for all particles, shape (n, 2)."""
    if cfg.method == "hash":
        s0, s1, s2 = _neighbor_moments_hash(ens, cfg)
    else:
        s0, s1, s2 = _neighbor_moments_mesh(ens, cfg)
    om = ens.omega
    tx = s1[:, 0] + cfg.nematic_b * (s2[:, 0] * om[:, 0] + s2[:, 1] * om[:, 1])
    ty = s1[:, 1] + cfg.nematic_b * (s2[:, 1] * om[:, 0] + s2[:, 2] * om[:, 1])
    target = np.stack([tx, ty], axis=-1)
    if cfg.alpha == "mean":
        denom = np.where(s0 > 0.0, s0, 1.0)
        return target / denom[:, None]
    return float(cfg.alpha) * target


def alignment_target(ens: ParticleEnsemble, k: int, cfg: InteractionConfig) -> np.ndarray:
    """Alignment target of particle k (the vectorized sum, indexed)."""
    return alignment_targets(ens, cfg)[k]


def step_particles(
    ens: ParticleEnsemble,
    cfg: InteractionConfig | None,
    params: ModelParams,
    dt: float,
    fixed_target=None,
) -> ParticleEnsemble:
    """One step: Heun tangential drift, exact Gaussian angle noise, transport.

    fixed_target overrides the neighbor sum with a constant vector (useful
    for relaxation checks); with nu = 0 the interaction is skipped entirely.
    """
    n = ens.n
    if fixed_target is not None:
        targets = np.broadcast_to(np.asarray(fixed_target, dtype=np.float64), (n, 2))
    elif params.nu > 0.0 and cfg is not None:
        targets = alignment_targets(ens, cfg)
    else:
        targets = np.zeros((n, 2))

    def tangential(theta):
        return -targets[:, 0] * np.sin(theta) + targets[:, 1] * np.cos(theta)

    b0 = tangential(ens.theta)
    drift_max = params.nu * float(np.max(np.abs(b0))) if n else 0.0
    if dt * drift_max > np.pi / 4.0 + 1e-12:
        raise StepRejectedError(
            f"orientation drift step {dt * drift_max:.3f} rad exceeds pi/4",
            suggested_dt=(np.pi / 4.0) / drift_max,
        )

    theta_pred = ens.theta + dt * params.nu * b0
    b1 = tangential(theta_pred)
    dtheta_drift = 0.5 * dt * params.nu * (b0 + b1)

    rng = np.random.Generator(np.random.Philox(key=[ens.seed, ens.step_index + 1]))
    noise = math.sqrt(2.0 * params.sigma * dt) * rng.standard_normal(n)

    theta_new = ens.theta + dtheta_drift + noise
    theta_mid = ens.theta + 0.5 * (dtheta_drift + noise)
    x_new = ens.x + params.c * dt * np.stack(
        [np.cos(theta_mid), np.sin(theta_mid)], axis=-1
    )
    return replace(ens, x=x_new, theta=theta_new, step_index=ens.step_index + 1)


def empirical_density(ens: ParticleEnsemble, grid: GridSpec) -> Field:
    """Mass-conserving histogram: cloud-in-cell in x, nearest bin in theta."""
    if abs(grid.L - ens.L) > 1e-12 * max(grid.L, ens.L):
        raise InvalidParameterError("ensemble box and grid box differ")
    nx, nth = grid.nx, grid.ntheta
    dx, dth = grid.dx, grid.dtheta
    kk = np.rint(ens.theta / dth).astype(np.int64) % nth

    gx = ens.x[:, 0] / dx
    gy = ens.x[:, 1] / dx
    i0 = np.floor(gx).astype(np.int64) % nx
    j0 = np.floor(gy).astype(np.int64) % nx
    fx = gx - np.floor(gx)
    fy = gy - np.floor(gy)
    i1 = (i0 + 1) % nx
    j1 = (j0 + 1) % nx

    vals = np.zeros(grid.shape)
    w = ens.weights
    np.add.at(vals, (i0, j0, kk), w * (1 - fx) * (1 - fy))
    np.add.at(vals, (i1, j0, kk), w * fx * (1 - fy))
    np.add.at(vals, (i0, j1, kk), w * (1 - fx) * fy)
    np.add.at(vals, (i1, j1, kk), w * fx * fy)
    return Field(grid, vals / grid.cell_volume, density=True)


def sample_from_field(f: Field, n: int, seed: int) -> ParticleEnsemble:
    """Rejection-sample n particles from a nonnegative field.

    Particle weights are mass(f)/n, so the empirical density matches the
    field's mass exactly.
    """
    grid = f.grid
    fmax = float(f.values.max())
    if fmax <= 0.0:
        raise InvalidParameterError("cannot sample from a field without positive mass")
    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    xs = np.empty((0, 2))
    ths = np.empty(0)
    while xs.shape[0] < n:
        m = max(2 * (n - xs.shape[0]), 1024)
        xprop = rng.random((m, 2)) * grid.L
        tprop = rng.random(m) * 2.0 * np.pi
        # nearest-node field value as the (piecewise-constant) density proposal
        ii = np.rint(xprop[:, 0] / grid.dx).astype(np.int64) % grid.nx
        jj = np.rint(xprop[:, 1] / grid.dx).astype(np.int64) % grid.nx
        kk = np.rint(tprop / grid.dtheta).astype(np.int64) % grid.ntheta
        accept = rng.random(m) * fmax < f.values[ii, jj, kk]
        xs = np.concatenate([xs, xprop[accept]], axis=0)
        ths = np.concatenate([ths, tprop[accept]])
    w = np.full(n, mass(f) / n)
    return ParticleEnsemble(L=grid.L, x=xs[:n], theta=ths[:n], weights=w, seed=seed)


@dataclass
class MeanFieldComparison:
    times: np.ndarray
    polarization_gap: np.ndarray
    l1_gap: np.ndarray | None


def meanfield_compare(
    particle_times,
    particle_pols,
    kinetic_times,
    kinetic_pols,
    l1_gaps=None,
) -> MeanFieldComparison:
    """Discrepancy time series between matched particle and kinetic runs.

    Kinetic polarizations are linearly interpolated to the particle snapshot
    times; the gap is the euclidean distance of the order-parameter vectors.
    """
    pt = np.asarray(particle_times, dtype=np.float64)
    kt = np.asarray(kinetic_times, dtype=np.float64)
    pp = np.asarray(particle_pols, dtype=np.float64)
    kp = np.asarray(kinetic_pols, dtype=np.float64)
    covered = (pt >= kt.min() - 1e-12) & (pt <= kt.max() + 1e-12)
    if not covered.any():
        raise InvalidParameterError("particle and kinetic runs share no time interval")
    pt, pp = pt[covered], pp[covered]
    kx = np.interp(pt, kt, kp[:, 0])
    ky = np.interp(pt, kt, kp[:, 1])
    gap = np.hypot(pp[:, 0] - kx, pp[:, 1] - ky)
    return MeanFieldComparison(
        times=pt,
        polarization_gap=gap,
        l1_gap=None if l1_gaps is None else np.asarray(l1_gaps, dtype=np.float64),
    )
