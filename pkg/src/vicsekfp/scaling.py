"""Space-time rescaling study: local model as the limit of the nonlocal one.

For a scale parameter eps = 1/m the nonlocal model is solved on the
enlarged box (side L/eps, same mesh spacing) with datum v0(eps x, omega),
and the rescaled solution u_eps(t, x, omega) = u(t/eps, x/eps, omega) is
read off by exact node subsampling.  The defect by which u_eps fails to
solve the local equation is measured weakly against compactly supported
test functions, in two algebraically equivalent but independently
computed forms:

* force difference: rescaled nonlocal force (FFT convolution on the base
  grid) minus the local force of the reduced kernel;
* change of variables: the kernel-weighted spatial increment
  sum_j phi_j [G(y - x_j) - G(y)] evaluated by direct lattice summation.

Both use the same lattice quadrature of the radial profile, so their
difference isolates the convolution identity; agreement is expected at
FFT roundoff.  The study fits the log-log slope of the remainder in eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import CadenceError, GuardrailError, ResolutionError
from .grid import Field, GridSpec, ModelParams, mass
from .kernels import SeparableRadial, f0_field, lattice_disk_integral
from .linear import DriftField, solve_linear
from .nonlinear import NonlinearRunConfig


# ---------------------------------------------------------------------------
# Test functions
# ---------------------------------------------------------------------------


def _bump(s):
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def _bump_prime(s):
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = _bump(si) * (-2.0 * si / (1.0 - si**2) ** 2)
    return out


@dataclass(frozen=True)
class TestFunction:
    """Separable compactly supported test function bump(|x-c|/R) cos(m theta).

    Time independent; closed-form angular derivative and spatial gradient.
    """

    __test__ = False  # not a pytest item

    label: str
    center: tuple
    support_radius: float
    theta_freq: int
    amplitude: float = 1.0

    def _radial(self, x1, x2):
        r = np.hypot(x1 - self.center[0], x2 - self.center[1])
        return r, _bump(r / self.support_radius)

    def phi(self, x1, x2, theta):
        _, b = self._radial(x1, x2)
        return self.amplitude * b * np.cos(self.theta_freq * theta)

    def dphi_dtheta(self, x1, x2, theta):
        _, b = self._radial(x1, x2)
        return -self.amplitude * self.theta_freq * b * np.sin(self.theta_freq * theta)

    def grad_x(self, x1, x2, theta):
        r, _ = self._radial(x1, x2)
        db = _bump_prime(r / self.support_radius) / self.support_radius
        with np.errstate(invalid="ignore", divide="ignore"):
            ux = np.where(r > 0, (x1 - self.center[0]) / np.where(r > 0, r, 1.0), 0.0)
            uy = np.where(r > 0, (x2 - self.center[1]) / np.where(r > 0, r, 1.0), 0.0)
        ang = self.amplitude * np.cos(self.theta_freq * theta)
        return np.stack([db * ux * ang, db * uy * ang], axis=-1)

    def on_grid(self, grid: GridSpec):
        X, Y = np.meshgrid(grid.xs, grid.xs, indexing="ij")
        TH = grid.thetas
        phi = self.phi(X[:, :, None], Y[:, :, None], TH[None, None, :])
        dphi = self.dphi_dtheta(X[:, :, None], Y[:, :, None], TH[None, None, :])
        return phi, dphi

    def grad_omega_norms(self, grid: GridSpec):
        """(sup, L1, L2) of |grad_omega phi| = |d_theta phi| on the grid."""
        _, dphi = self.on_grid(grid)
        w = grid.cell_volume
        a = np.abs(dphi)
        return float(a.max()), float(a.sum() * w), float(math.sqrt((a**2).sum() * w))


def default_test_functions(L: float) -> list:
    c = (L / 2.0, L / 2.0)
    r = 0.35 * L
    return [
        TestFunction("phi_m1", c, r, 1),
        TestFunction("phi_m2", c, r, 2),
        TestFunction("phi_m1_off", (0.3 * L, 0.6 * L), 0.25 * L, 1),
    ]


def validate_gradients(tf: TestFunction, L: float, tol: float = 1e-6) -> float:
    """Max relative defect of the closed-form gradients vs finite differences."""
    rng = np.random.default_rng(1234)
    pts = rng.random((64, 3)) * np.array([L, L, 2 * np.pi])
    h = 1e-6
    worst = 0.0
    scale = max(tf.amplitude, 1e-300) * max(tf.theta_freq, 1)
    for x1, x2, th in pts:
        dth = (tf.phi(x1, x2, th + h) - tf.phi(x1, x2, th - h)) / (2 * h)
        worst = max(worst, abs(dth - tf.dphi_dtheta(x1, x2, th)) / scale)
        gx = (tf.phi(x1 + h, x2, th) - tf.phi(x1 - h, x2, th)) / (2 * h)
        gy = (tf.phi(x1, x2 + h, th) - tf.phi(x1, x2 - h, th)) / (2 * h)
        g = tf.grad_x(x1, x2, th)
        worst = max(worst, abs(gx - g[..., 0]) / scale, abs(gy - g[..., 1]) / scale)
    return worst


# ---------------------------------------------------------------------------
# Base run with lean snapshot capture
# ---------------------------------------------------------------------------


def _check_eps(eps: float) -> int:
    m = 1.0 / eps
    if abs(m - round(m)) > 1e-9 or eps <= 0 or eps > 1:
        raise CadenceError(
            f"eps = {eps} must be the reciprocal of a positive integer for exact"
            " grid and time alignment"
        )
    return int(round(m))


@dataclass
class RescaledSnapshots:
    """Everything the weak-remainder quadrature needs, on the target grid."""

    eps: float
    times: np.ndarray            # macroscopic snapshot times
    u_sub: list                  # u_eps values (nx, nx, ntheta)
    f0_sub: list                 # rescaled nonlocal force (nx, nx, ntheta, 2)
    g_sub: list                  # angular contraction G at target nodes (nx, nx, ntheta, 2)
    g_off: list                  # G at target nodes displaced by lattice offsets
    stencil_phi: np.ndarray      # profile weights on the lattice stencil
    lattice_weight: float        # sum phi dx^2 over the stencil
    base_mass: float


def _disk_stencil(kernel: SeparableRadial, dx: float):
    """Lattice offsets (in cells) covering the cutoff disk, with weights."""
    ncut = int(math.floor(kernel.cutoff / dx)) + 1
    offs = np.arange(-ncut, ncut + 1)
    oi, oj = np.meshgrid(offs, offs, indexing="ij")
    r = np.hypot(oi * dx, oj * dx)
    w = np.asarray(kernel.profile(r), dtype=np.float64)
    w = np.where(r <= kernel.cutoff, w, 0.0)
    keep = w != 0.0
    return oi[keep], oj[keep], w[keep]


def run_rescaled(
    v0_generator,
    eps: float,
    target_grid: GridSpec,
    kernel: SeparableRadial,
    params: ModelParams,
    T: float,
    n_snapshots: int = 9,
    memory_cap_mb: float = 4096.0,
) -> RescaledSnapshots:
    """Solve the base nonlocal problem and capture rescaled snapshots.

    v0_generator(x1, x2, theta) evaluates the macroscopic datum; the base
    datum is v0(eps x, omega) on the box of side L/eps with the same mesh
    spacing.  Snapshots are taken at n_snapshots macroscopic times spanning
    [0, T].
    """
    m = _check_eps(eps)
    L_t = target_grid.L
    nx_b = target_grid.nx * m
    grid_b = GridSpec(nx=nx_b, L=L_t * m, ntheta=target_grid.ntheta, dt=target_grid.dt)

    bytes_needed = nx_b * nx_b * grid_b.ntheta * 8 * 8  # state + force + work buffers
    if bytes_needed > memory_cap_mb * 2**20:
        raise GuardrailError(
            f"base grid {nx_b}^2 x {grid_b.ntheta} needs ~{bytes_needed / 2**20:.0f} MiB"
            f" > cap {memory_cap_mb} MiB"
        )
    if kernel.cutoff / grid_b.dx < 3.0 - 1e-9:
        raise ResolutionError(
            f"kernel cutoff spans {kernel.cutoff / grid_b.dx:.1f} cells; need >= 3"
        )

    X, Y = np.meshgrid(grid_b.xs, grid_b.xs, indexing="ij")
    TH = grid_b.thetas
    vals = v0_generator(
        (eps * X)[:, :, None] % L_t, (eps * Y)[:, :, None] % L_t, TH[None, None, :]
    )
    state = Field(grid_b, np.broadcast_to(vals, grid_b.shape).copy(), density=True)

    cfg = NonlinearRunConfig(model="nonlocal", kernel=kernel, params=params,
                             mode="semi-implicit")
    oi, oj, stphi = _disk_stencil(kernel, grid_b.dx)
    lat_weight = lattice_disk_integral(kernel, grid_b)

    kx_tab, ky_tab = kernel.angular.tables(grid_b.thetas)
    dth = grid_b.dtheta
    sub = slice(0, nx_b, m)

    idx_t = np.arange(0, nx_b, m)

    def capture(fld: Field):
        gx = np.tensordot(fld.values, kx_tab, axes=([2], [1])) * dth
        gy = np.tensordot(fld.values, ky_tab, axes=([2], [1])) * dth
        g = np.stack([gx, gy], axis=-1)
        f0 = f0_field(fld, kernel, method="fft")
        goff = np.empty((len(idx_t), len(idx_t), len(stphi)) + g.shape[2:])
        for s, (di, dj) in enumerate(zip(oi, oj)):
            # value of G at the target node displaced by the lattice offset
            goff[:, :, s] = g[(idx_t[:, None] - di) % nx_b, (idx_t[None, :] - dj) % nx_b]
        return fld.values[sub, sub].copy(), f0[sub, sub].copy(), g[sub, sub].copy(), goff

    snap_times = np.linspace(0.0, T, n_snapshots)
    u_sub, f0_sub, g_sub, g_off = [], [], [], []
    for arrs, lst in zip(capture(state), (u_sub, f0_sub, g_sub, g_off)):
        lst.append(arrs)

    force_prev = None
    interval_macro = T / (n_snapshots - 1)
    interval_base = interval_macro * m
    n_per = max(1, int(math.ceil(interval_base / grid_b.dt - 1e-12)))
    dt_eff = interval_base / n_per

    for _ in range(n_snapshots - 1):
        for _ in range(n_per):
            force_now = cfg.force(state)
            fmid = force_now if force_prev is None else 1.5 * force_now - 0.5 * force_prev
            drift = DriftField.from_vector_field(grid_b, fmid)
            run = solve_linear(state, drift, params, dt_eff, n_steps=1, diagnostics=False)
            state = run.final
            force_prev = force_now
        for arrs, lst in zip(capture(state), (u_sub, f0_sub, g_sub, g_off)):
            lst.append(arrs)

    return RescaledSnapshots(
        eps=eps,
        times=snap_times,
        u_sub=u_sub,
        f0_sub=f0_sub,
        g_sub=g_sub,
        g_off=g_off,
        stencil_phi=stphi * grid_b.dx**2,
        lattice_weight=lat_weight,
        base_mass=mass(state),
    )


def rescale_solution(base_trajectory, base_times, eps: float, target_grid: GridSpec):
    """Subsample a stored base trajectory onto the target grid.

    base_trajectory is a list of Fields on the box of side L/eps whose mesh
    spacing matches the target grid; base_times are base-clock times.  The
    returned trajectory carries u_eps(t) = u(t/eps) at macroscopic times
    t = eps * base_times.
    """
    m = _check_eps(eps)
    grid_b = base_trajectory[0].grid
    if grid_b.nx != target_grid.nx * m or abs(grid_b.L - target_grid.L * m) > 1e-9:
        raise CadenceError("base grid is not an integer refinement of the target box")
    sub = slice(0, grid_b.nx, m)
    fields = [
        Field(target_grid, f.values[sub, sub].copy(), density=f.is_density)
        for f in base_trajectory
    ]
    return fields, eps * np.asarray(base_times, dtype=np.float64)


# ---------------------------------------------------------------------------
# Weak remainder
# ---------------------------------------------------------------------------


@dataclass
class RemainderValue:
    eps: float
    phi_label: str
    remainder: float          # force-difference form
    remainder_cov: float      # change-of-variables form
    agreement_rel: float
    grad_sup: float
    grad_l1: float
    grad_l2: float

    @property
    def ratio_sup(self) -> float:
        return self.remainder / self.grad_sup if self.grad_sup > 0 else math.inf


def weak_remainder(
    snaps: RescaledSnapshots, phi: TestFunction, target_grid: GridSpec
) -> RemainderValue:
    """Weak defect of the rescaled solution against one test function.

    Evaluates |int_0^T int u_eps grad_omega(phi) . P_perp(Delta F)| with
    Delta F computed both as (rescaled nonlocal force - local force) and
    through the kernel-weighted spatial increment of the angular
    contraction; the two quadratures share the lattice profile weights.
    """
    grid = target_grid
    _, dphi = phi.on_grid(grid)
    tau_x = -np.sin(grid.thetas)
    tau_y = np.cos(grid.thetas)
    # trapezoid weights over the snapshot times
    w_t = np.ones_like(snaps.times)
    if len(snaps.times) > 1:
        dt = snaps.times[1] - snaps.times[0]
        w_t *= dt
        w_t[0] *= 0.5
        w_t[-1] *= 0.5

    cell = grid.cell_volume
    total_a = 0.0
    total_b = 0.0
    for k in range(len(snaps.times)):
        u = snaps.u_sub[k]
        f0 = snaps.f0_sub[k]
        g = snaps.g_sub[k]
        goff = snaps.g_off[k]

        f1 = snaps.lattice_weight * g
        da = f0 - f1
        conv = np.einsum("s,ijsta->ijta", snaps.stencil_phi, goff, optimize=True)
        db = conv - snaps.lattice_weight * g

        for d, acc in ((da, "a"), (db, "b")):
            tang = d[..., 0] * tau_x + d[..., 1] * tau_y
            val = float(np.sum(u * dphi * tang)) * cell
            if acc == "a":
                total_a += w_t[k] * val
            else:
                total_b += w_t[k] * val

    ra, rb = abs(total_a), abs(total_b)
    agree = abs(total_a - total_b) / max(ra, rb, 1e-300)
    gs, g1, g2 = phi.grad_omega_norms(grid)
    return RemainderValue(
        eps=snaps.eps,
        phi_label=phi.label,
        remainder=ra,
        remainder_cov=rb,
        agreement_rel=agree,
        grad_sup=gs,
        grad_l1=g1,
        grad_l2=g2,
    )


@dataclass
class OrderStudyReport:
    rows: list
    slopes: dict          # phi label -> (slope, ci_halfwidth)
    pooled_slope: float
    pooled_ci: float
    degenerate: bool


def order_study(
    v0_generator,
    eps_list,
    phis,
    kernel: SeparableRadial,
    params: ModelParams,
    target_grid: GridSpec,
    T: float,
    n_snapshots: int = 9,
    memory_cap_mb: float = 4096.0,
) -> OrderStudyReport:
    """Remainder vs eps for a family of test functions, with log-log slopes.

    The 95% confidence halfwidth uses the regression standard error; with
    only two eps values the halfwidth is reported as infinity.
    """
    rows = []
    for eps in eps_list:
        snaps = run_rescaled(
            v0_generator, eps, target_grid, kernel, params, T,
            n_snapshots=n_snapshots, memory_cap_mb=memory_cap_mb,
        )
        for phi in phis:
            rows.append(weak_remainder(snaps, phi, target_grid))

    slopes = {}
    degenerate = False
    pooled_x, pooled_y = [], []
    for phi in phis:
        vals = [(r.eps, r.remainder) for r in rows if r.phi_label == phi.label]
        xs = np.log([v[0] for v in vals])
        ys = np.array([v[1] for v in vals])
        if np.any(ys <= 0.0):
            degenerate = True
            slopes[phi.label] = (math.nan, math.inf)
            continue
        ys = np.log(ys)
        pooled_x.extend(xs - np.mean(xs))
        pooled_y.extend(ys - np.mean(ys))
        if len(xs) >= 3:
            fit = stats.linregress(xs, ys)
            ci = stats.t.ppf(0.975, len(xs) - 2) * fit.stderr
            slopes[phi.label] = (float(fit.slope), float(ci))
        elif len(xs) == 2:
            slopes[phi.label] = (float((ys[1] - ys[0]) / (xs[1] - xs[0])), math.inf)
        else:
            slopes[phi.label] = (math.nan, math.inf)

    if pooled_x and not degenerate:
        fit = stats.linregress(pooled_x, pooled_y)
        dofs = max(len(pooled_x) - 2, 1)
        pooled_slope = float(fit.slope)
        pooled_ci = float(stats.t.ppf(0.975, dofs) * fit.stderr)
    else:
        pooled_slope, pooled_ci = math.nan, math.inf

    return OrderStudyReport(
        rows=rows,
        slopes=slopes,
        pooled_slope=pooled_slope,
        pooled_ci=pooled_ci,
        degenerate=degenerate,
    )
