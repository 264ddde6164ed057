"""Per-step monitor records: norms, quadratic energies and the Lyapunov energy.

The two composite energies pair the squared norms with the double-well
integral: ``E1 = alpha |u|^2 + |u|_{-1}^2`` and
``E2tilde = E1 + beta |grad u|^2 + 2 beta (F(u) + gamma2, 1)``, the latter
nonnegative by the growth bound on the potential.  The weights ``alpha`` and
``beta`` only need to be small enough; the defaults below are derived from
the model constants and recorded in every report for reproducibility.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import DissipativityConstants, ModelParams, derive_constants
from .spectral import Grid
from .stepping import Trajectory

MONITOR_COLUMNS = (
    "t", "L2", "H1", "H2", "Hm1", "E1", "E2tilde", "lyapunov", "d_l2", "d_h2", "d_hm1",
)


@dataclass(frozen=True)
class MonitorSpec:
    """Energy weights: ``alpha`` scales the L2 part of E1, ``beta`` the H1
    and potential parts of E2tilde; ``gamma2`` shifts the potential so the
    integrand is nonnegative."""

    alpha: float
    beta: float
    gamma2: float


def default_monitor_spec(
    grid: Grid, params: ModelParams, constants: DissipativityConstants | None = None
) -> MonitorSpec:
    """Small-enough energy weights: ``alpha = min(1, gamma5)/2`` and ``beta``
    chosen so that ``beta * Lf^2 * cS^2 <= 1`` for the L2-into-H1 embedding."""
    constants = constants if constants is not None else derive_constants(params)
    alpha = min(1.0, constants.gamma5) / 2.0
    c_s = grid.constants.embedding(0.0, 0.5)
    beta = min(1.0, 1.0 / (params.lipschitz_f ** 2 * c_s ** 2))
    return MonitorSpec(alpha=alpha, beta=beta, gamma2=constants.gamma2)


@dataclass(frozen=True)
class MonitorRecord:
    t: float
    l2: float
    h1: float
    h2: float
    hm1: float
    e1: float
    e2tilde: float
    lyapunov: float
    d_l2: float
    d_h2: float
    d_hm1: float

    def row(self) -> tuple:
        return (
            self.t, self.l2, self.h1, self.h2, self.hm1, self.e1,
            self.e2tilde, self.lyapunov, self.d_l2, self.d_h2, self.d_hm1,
        )


def monitor_records(traj: Trajectory, spec: MonitorSpec | None = None) -> list[MonitorRecord]:
    """Assemble full monitor records from a trajectory's per-step series."""
    if traj.series is None:
        raise ValueError("trajectory was run without its per-step series")
    ms = spec if spec is not None else default_monitor_spec(traj.grid, traj.params)
    s = traj.series
    volume = float(np.prod(traj.grid.lengths))
    e1 = ms.alpha * s.l2 ** 2 + s.hm1 ** 2
    e2 = e1 + ms.beta * s.h1 ** 2 + 2.0 * ms.beta * (s.potential + ms.gamma2 * volume)
    lyap = 0.5 * s.h1 ** 2 + s.potential
    return [
        MonitorRecord(
            t=float(s.times[n]), l2=float(s.l2[n]), h1=float(s.h1[n]),
            h2=float(s.h2[n]), hm1=float(s.hm1[n]), e1=float(e1[n]),
            e2tilde=float(e2[n]), lyapunov=float(lyap[n]), d_l2=float(s.d_l2[n]),
            d_h2=float(s.d_h2[n]), d_hm1=float(s.d_hm1[n]),
        )
        for n in range(len(s.times))
    ]


def lyapunov_energy(traj: Trajectory) -> np.ndarray:
    """Free-energy sequence ``|grad u|^2 / 2 + (F(u), 1)`` along the steps."""
    if traj.series is None:
        raise ValueError("trajectory was run without its per-step series")
    return 0.5 * traj.series.h1 ** 2 + traj.series.potential


def write_monitor_csv(path, records: list[MonitorRecord]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MONITOR_COLUMNS)
        for rec in records:
            writer.writerow([f"{x:.17g}" for x in rec.row()])
    return path


def read_monitor_csv(path) -> dict[str, np.ndarray]:
    with Path(path).open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != MONITOR_COLUMNS:
            raise ValueError(f"unexpected monitor columns {header}")
        rows = np.array([[float(x) for x in row] for row in reader])
    return {name: rows[:, i] for i, name in enumerate(MONITOR_COLUMNS)}
