"""Linear implicit-explicit time stepping for the fourth-order model.

One step advances ``u`` by solving

    (u_next - u) / dt + A^2 u_next + A f(u) + g(u) = 0,

i.e. the stiff biharmonic part is implicit while the nonlinearity and the
source are explicit, evaluated pointwise at the collocation points.  In the
eigenbasis the solve is diagonal, so each step is one linear combination of
transforms and is uniquely defined for every ``dt > 0``.

Trajectories record a per-step series of norms and energies; the optional
full-resolution snapshot cache feeds the piecewise interpolants used by the
finite-time error study.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import snapshots as snapio
from .model import F_eval, ModelParams, apply_f, apply_g
from .spectral import (
    NEUMANN,
    Field,
    Grid,
    SpectralField,
    forward,
    inverse,
    norm,
)

OVERFLOW_GUARD = 1e12


class BlowUpError(RuntimeError):
    """Trajectory norm crossed the overflow guard (non-dissipative regime)."""

    def __init__(self, t: float, value: float):
        super().__init__(
            f"L2 norm {value:.3e} exceeded the overflow guard {OVERFLOW_GUARD:.0e} "
            f"at t = {t:.6g}; the configuration is outside the stable time-step regime"
        )
        self.t = t
        self.value = value


class GuardViolation(ValueError):
    """Configured time step breaks the dt <= 1/(2 Lg) contraction guard."""


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping run description.

    Exactly one of ``steps`` or ``horizon`` must be given; snapshots are
    stored every ``stride`` steps.  With ``strict_guard`` the run refuses a
    time step above ``1/(2 Lg)`` when a source is present, which is the
    explicit threshold for the step map to stay Lipschitz.
    """

    dt: float
    steps: int | None = None
    horizon: float | None = None
    stride: int = 1
    strict_guard: bool = True
    record_series: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if (self.steps is None) == (self.horizon is None):
            raise ValueError("give exactly one of steps or horizon")
        if self.steps is not None and self.steps < 0:
            raise ValueError("step count must be nonnegative")
        if self.horizon is not None and self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.stride < 1:
            raise ValueError("snapshot stride must be >= 1")

    @property
    def step_count(self) -> int:
        if self.steps is not None:
            return self.steps
        return int(np.floor(self.horizon / self.dt + 1e-9))


@dataclass
class StepSeries:
    """Per-step scalar record along a trajectory.

    ``d_*`` entries hold the increment norms ``|u^n - u^{n-1}|`` (zero at
    ``n = 0``); ``potential`` is the grid quadrature of the double-well
    density, used by the energy and Lyapunov monitors.
    """

    times: np.ndarray
    l2: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    hm1: np.ndarray
    potential: np.ndarray
    d_l2: np.ndarray
    d_h2: np.ndarray
    d_hm1: np.ndarray


@dataclass
class Trajectory:
    grid: Grid
    params: ModelParams
    config: SolverConfig
    times: np.ndarray
    fields: list[Field]
    final: Field
    series: StepSeries | None = None

    @property
    def dt(self) -> float:
        return self.config.dt

    def __len__(self) -> int:
        return len(self.fields)


def check_guard(params: ModelParams, dt: float, strict: bool = True):
    if strict and params.lipschitz_g > 0:
        limit = 1.0 / (2.0 * params.lipschitz_g)
        if dt > limit * (1 + 1e-12):
            raise GuardViolation(
                f"dt = {dt} exceeds 1/(2 Lg) = {limit}; the step map is no longer "
                "guaranteed Lipschitz (disable strict_guard to force the run)"
            )


def _advance(u: Field, spec: SpectralField, params: ModelParams, dt: float) -> Field:
    grid = u.grid
    lam = grid.eigenvalues
    rhs = spec.coeffs - dt * lam * forward(apply_f(u, params)).coeffs
    if params.source is not None:
        rhs = rhs - dt * forward(apply_g(u, params)).coeffs
    return inverse(SpectralField(grid, rhs / (1.0 + dt * lam ** 2)))


def imex_step(u: Field, params: ModelParams, dt: float) -> Field:
    """One linear implicit-explicit step of the scheme."""
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    return _advance(u, forward(u), params, dt)


def _quad_weight(grid: Grid) -> float:
    return float(np.prod(grid.spacings))


class _SeriesTables:
    """Weighted eigenvalue tables reused across the per-step norm rows."""

    def __init__(self, grid: Grid):
        w = grid.coeff_weights()
        lam = grid.eigenvalues
        self.w0 = w
        self.w1 = w * lam
        self.w2 = w * lam ** 2
        inv = np.zeros_like(lam)
        flat = lam.reshape(-1)
        pos = flat > 0
        inv.reshape(-1)[pos] = 1.0 / flat[pos]
        # on Neumann grids the dual norm is taken on the mean-zero complement
        self.wm1 = w * inv

    def row(self, spec, prev_spec):
        c2 = spec.coeffs ** 2
        l2 = np.sqrt(np.sum(self.w0 * c2))
        h1 = np.sqrt(np.sum(self.w1 * c2))
        h2 = np.sqrt(np.sum(self.w2 * c2))
        hm1 = np.sqrt(np.sum(self.wm1 * c2))
        if prev_spec is None:
            d_l2 = d_h2 = d_hm1 = 0.0
        else:
            d2 = (spec.coeffs - prev_spec.coeffs) ** 2
            d_l2 = np.sqrt(np.sum(self.w0 * d2))
            d_h2 = np.sqrt(np.sum(self.w2 * d2))
            d_hm1 = np.sqrt(np.sum(self.wm1 * d2))
        return l2, h1, h2, hm1, d_l2, d_h2, d_hm1


def run(u0: Field, params: ModelParams, config: SolverConfig) -> Trajectory:
    """Iterate the step map, collecting snapshots and the per-step series.

    Deterministic: identical inputs produce bitwise-identical trajectories.
    Aborts with :class:`BlowUpError` when the L2 norm crosses the overflow
    guard, which signals instability rather than a solver failure.
    """
    if not np.all(np.isfinite(u0.values)):
        raise ValueError("initial data must be finite")
    if params.source is not None and u0.grid.bc == NEUMANN:
        raise ValueError("Neumann runs require the source-free model")
    check_guard(params, config.dt, config.strict_guard)

    n_steps = config.step_count
    dt = config.dt
    grid = u0.grid
    qw = _quad_weight(grid)

    record = config.record_series
    tables = _SeriesTables(grid)
    if record:
        shape = (n_steps + 1,)
        series = StepSeries(*(np.zeros(shape) for _ in range(9)))
        series.times[:] = dt * np.arange(n_steps + 1)

    times = [0.0]
    fields = [u0]
    u = u0
    prev_spec = None
    for n in range(n_steps + 1):
        spec = forward(u)
        l2 = float(np.sqrt(np.sum(tables.w0 * spec.coeffs ** 2)))
        if not np.isfinite(l2) or l2 > OVERFLOW_GUARD:
            raise BlowUpError(n * dt, l2)
        if record:
            row = tables.row(spec, prev_spec)
            series.l2[n], series.h1[n], series.h2[n], series.hm1[n] = row[:4]
            series.d_l2[n], series.d_h2[n], series.d_hm1[n] = row[4:]
            series.potential[n] = qw * float(np.sum(F_eval(u.values, params)))
        if n == n_steps:
            break
        prev_spec = spec
        u = _advance(u, spec, params, dt)
        if (n + 1) % config.stride == 0:
            times.append((n + 1) * dt)
            fields.append(u)

    return Trajectory(
        grid=grid,
        params=params,
        config=config,
        times=np.asarray(times),
        fields=fields,
        final=u,
        series=series if record else None,
    )


def interpolants(traj: Trajectory, t: float) -> tuple[Field, Field, Field]:
    """Piecewise-linear, right-constant and left-constant states at time t.

    On ``[n dt, (n+1) dt)`` the right-constant interpolant equals the next
    state and the left-constant one the current state; requires a trajectory
    stored at full resolution (stride 1).
    """
    if traj.config.stride != 1:
        raise ValueError("interpolants need a full-resolution trajectory (stride 1)")
    dt = traj.dt
    horizon = traj.times[-1]
    if t < -1e-12 or t > horizon * (1 + 1e-12) + 1e-12:
        raise ValueError(f"time {t} outside the stored range [0, {horizon}]")
    last = len(traj.fields) - 1
    n = min(int(np.floor(t / dt + 1e-12)), last)
    if n == last:
        u = traj.fields[last]
        return u, u, u
    left, right = traj.fields[n], traj.fields[n + 1]
    theta = max(0.0, min(1.0, (t - n * dt) / dt))
    linear = Field(traj.grid, left.values + theta * (right.values - left.values))
    return linear, right, left


def make_initial(grid: Grid, kind: str, *, mode=1, amplitude: float = 1.0,
                 seed: int | None = None, decay: float = 2.0,
                 mean: float = 0.0, path=None) -> Field:
    """Initial data factory.

    ``single_mode`` scales one eigenfunction; ``random_smooth`` draws Gaussian
    coefficients damped by ``lambda^-decay`` (``decay >= 2`` keeps the state
    inside the domain of ``A``) and rescales to the requested L2 amplitude;
    ``from_file`` reloads a stored snapshot.
    """
    if kind == "single_mode":
        from .spectral import basis_mode

        return basis_mode(grid, mode, amplitude)
    if kind == "random_smooth":
        if decay < 2.0:
            raise ValueError(
                f"decay rate {decay} < 2 would leave the initial state outside D(A)"
            )
        rng = np.random.default_rng(seed)
        lam = grid.eigenvalues
        coeffs = rng.standard_normal(grid.shape)
        pos = lam > 0
        coeffs[pos] *= lam[pos] ** (-decay)
        if grid.bc == NEUMANN:
            coeffs[~pos] = 0.0
        u = inverse(SpectralField(grid, coeffs))
        size = norm(u)
        if size > 0:
            u = u * (amplitude / size)
        if grid.bc == NEUMANN and mean != 0.0:
            u = Field(grid, u.values + mean)
        return u
    if kind == "from_file":
        if path is None:
            raise ValueError("from_file initial data needs a path")
        field, _ = snapio.load_field(path)
        return field
    raise ValueError(f"unknown initial-data kind {kind!r}")
