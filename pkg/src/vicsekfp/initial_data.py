"""Named initial-datum generators.

Every generator yields a nonnegative, finite-mass field.  Analytic
generators (uniform, gaussian-bump, two-bump) are exposed both as point
callables, usable at arbitrary coordinates, and as grid fields; bumps are
periodized by summing lattice images, which preserves the requested total
mass exactly in the continuum.  Random data are clipped at zero and
renormalized to the requested mass.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidParameterError, SchemaError
from .grid import Field, GridSpec, mass


_N_IMAGES = 4


def _wrapped_gaussian(z, z0, width, period):
    """Periodized normal density on [0, period); unit total mass."""
    acc = np.zeros_like(np.asarray(z, dtype=np.float64))
    norm = 1.0 / (width * math.sqrt(2.0 * math.pi))
    for m in range(-_N_IMAGES, _N_IMAGES + 1):
        acc = acc + np.exp(-((z - z0 + m * period) ** 2) / (2.0 * width**2))
    return norm * acc


def uniform_callable(grid: GridSpec, total_mass: float):
    level = total_mass / (grid.L**2 * 2.0 * math.pi)

    def fn(x1, x2, theta):
        return np.full(np.broadcast(x1, x2, theta).shape, level)

    return fn


def gaussian_bump_callable(grid: GridSpec, total_mass, center, theta0, width_x, width_theta):
    if width_x <= 0 or width_theta <= 0:
        raise InvalidParameterError("bump widths must be positive")

    def fn(x1, x2, theta):
        return (
            total_mass
            * _wrapped_gaussian(x1, center[0], width_x, grid.L)
            * _wrapped_gaussian(x2, center[1], width_x, grid.L)
            * _wrapped_gaussian(theta, theta0, width_theta, 2.0 * math.pi)
        )

    return fn


def make_datum_callable(spec: dict, grid: GridSpec):
    """Point-evaluable generator for the analytic datum families."""
    spec = dict(spec)
    gen = spec.pop("generator", None)
    total_mass = float(spec.pop("mass", 1.0))
    if total_mass < 0:
        raise InvalidParameterError("requested mass must be nonnegative")

    if gen == "uniform":
        _reject_extra(spec, "uniform")
        return uniform_callable(grid, total_mass)

    if gen == "gaussian-bump":
        center = spec.pop("center", [grid.L / 2.0, grid.L / 2.0])
        theta0 = float(spec.pop("theta0", 0.0))
        width_x = float(spec.pop("width_x", grid.L / 8.0))
        width_theta = float(spec.pop("width_theta", 0.6))
        floor = float(spec.pop("floor", 0.0))
        _reject_extra(spec, "gaussian-bump")
        bump = gaussian_bump_callable(grid, total_mass, center, theta0, width_x, width_theta)
        if floor == 0.0:
            return bump
        level = floor

        def fn(x1, x2, theta):
            return bump(x1, x2, theta) + level

        return fn

    if gen == "two-bump":
        sep = float(spec.pop("separation", grid.L / 2.0))
        theta0 = float(spec.pop("theta0", 0.0))
        theta1 = float(spec.pop("theta1", math.pi))
        width_x = float(spec.pop("width_x", grid.L / 8.0))
        width_theta = float(spec.pop("width_theta", 0.6))
        _reject_extra(spec, "two-bump")
        c0 = (grid.L / 2.0 - sep / 2.0, grid.L / 2.0)
        c1 = (grid.L / 2.0 + sep / 2.0, grid.L / 2.0)
        b0 = gaussian_bump_callable(grid, total_mass / 2.0, c0, theta0, width_x, width_theta)
        b1 = gaussian_bump_callable(grid, total_mass / 2.0, c1, theta1, width_x, width_theta)

        def fn(x1, x2, theta):
            return b0(x1, x2, theta) + b1(x1, x2, theta)

        return fn

    raise SchemaError(f"unknown or non-analytic datum generator {gen!r}")


def make_initial_datum(spec: dict, grid: GridSpec) -> Field:
    """Grid field from a datum spec; includes the seeded random family."""
    gen = spec.get("generator")
    if gen == "random":
        spec = dict(spec)
        spec.pop("generator")
        total_mass = float(spec.pop("mass", 1.0))
        seed = int(spec.pop("seed", 0))
        smooth_modes = int(spec.pop("smooth_modes", 3))
        _reject_extra(spec, "random")
        if total_mass < 0:
            raise InvalidParameterError("requested mass must be nonnegative")
        rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
        # random low-mode trigonometric field, clipped and renormalized
        vals = np.ones(grid.shape)
        X, Y = np.meshgrid(grid.xs, grid.xs, indexing="ij")
        TH = grid.thetas
        for _ in range(smooth_modes):
            kx, ky = rng.integers(-2, 3, size=2)
            mth = rng.integers(0, 3)
            amp = rng.random()
            ph = rng.random(3) * 2 * np.pi
            vals = vals + amp * (
                np.cos(2 * np.pi * (kx * X + ky * Y) / grid.L + ph[0])[:, :, None]
                * np.cos(mth * TH + ph[1])[None, None, :]
            )
        vals = np.clip(vals, 0.0, None)
        f = Field(grid, vals, density=True)
        m = mass(f)
        if m <= 0:
            raise InvalidParameterError("random datum degenerated to zero mass")
        return Field(grid, vals * (total_mass / m), density=True)

    fn = make_datum_callable(spec, grid)
    X, Y = np.meshgrid(grid.xs, grid.xs, indexing="ij")
    TH = grid.thetas
    vals = fn(X[:, :, None], Y[:, :, None], TH[None, None, :])
    vals = np.broadcast_to(vals, grid.shape).copy()
    if float(vals.min()) < 0.0:
        raise InvalidParameterError("datum generator produced negative values")
    return Field(grid, vals, density=True)


def _reject_extra(spec: dict, name: str):
    if spec:
        raise SchemaError(f"unknown keys for {name} datum: {sorted(spec)}")
