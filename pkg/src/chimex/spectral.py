"""Sine/cosine spectral representation of the Dirichlet/Neumann Laplacian.

The negative Laplacian ``A = -lap`` on a rectangle is diagonalized exactly by
sine modes (homogeneous Dirichlet, where both ``u`` and ``lap u`` vanish on the
boundary) or midpoint-collocated cosine modes (homogeneous Neumann).  All
operators used by the solver -- fractional powers ``A^s``, Sobolev-scale norms
``|A^s u|``, and the implicit biharmonic solve ``(I + dt A^2)^{-1}`` -- are
coefficient-wise multiplications in this basis, so they are exact per mode.

Transforms are normalized so that the forward map sends the basis function of
mode ``kappa`` to the unit coefficient vector ``e_kappa``.  Inner products are
evaluated through the Parseval sum, which agrees with the uniform-weight grid
quadrature exactly for band-limited fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.fft import dctn, dstn, idctn

DIRICHLET = "dirichlet_sine"
NEUMANN = "neumann_cosine"

_BCS = (DIRICHLET, NEUMANN)

# Relative magnitude below which a constant-mode coefficient counts as zero
# when inverting A on a Neumann grid.
_MEAN_ZERO_RTOL = 1e-11


class GridError(ValueError):
    """Invalid grid construction or a field/grid mismatch."""


@dataclass(frozen=True)
class SpectralConstants:
    """Embedding constants of the discrete operator on a fixed grid.

    ``lambda_min`` is the smallest eigenvalue of ``A`` restricted to the
    nonconstant modes, ``poincare`` the constant in ``|u| <= c_P |grad u|``.
    """

    lambda_min: float
    poincare: float

    def embedding(self, s1: float, s2: float) -> float:
        """Constant c with ``norm(u, s1) <= c * norm(u, s2)`` for s1 <= s2."""
        if s1 > s2:
            raise ValueError("embedding constant requires s1 <= s2")
        return self.lambda_min ** (s1 - s2)


@dataclass(frozen=True)
class Grid:
    """Tensor grid of interior collocation points on a rectangle.

    Dirichlet grids sample ``x_j = j * L/(N+1)``, ``j = 1..N`` per axis and
    carry sine modes ``kappa = 1..N``; Neumann grids sample the midpoints
    ``x_j = (j + 1/2) * L/N`` and carry cosine modes ``kappa = 0..N-1``
    (the constant mode included).  Degrees of freedom equal ``prod(modes)``
    for both families.
    """

    dimension: int
    lengths: tuple[float, ...]
    modes: tuple[int, ...]
    bc: str
    # derived tables, filled in __post_init__
    eigenvalues: np.ndarray = dc_field(repr=False, compare=False, default=None)
    weight: float = dc_field(compare=False, default=0.0)
    constants: SpectralConstants = dc_field(compare=False, default=None)

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise GridError(f"dimension must be 1 or 2, got {self.dimension}")
        if len(self.lengths) != self.dimension or len(self.modes) != self.dimension:
            raise GridError("lengths/modes must have one entry per dimension")
        if any(L <= 0 for L in self.lengths):
            raise GridError(f"lengths must be positive, got {self.lengths}")
        if any(n < 2 for n in self.modes):
            raise GridError(f"mode counts must be >= 2, got {self.modes}")
        if self.bc not in _BCS:
            raise GridError(f"bc must be one of {_BCS}, got {self.bc!r}")

        axes = []
        for L, n in zip(self.lengths, self.modes):
            if self.bc == DIRICHLET:
                kappa = np.arange(1, n + 1)
            else:
                kappa = np.arange(0, n)
            axes.append((kappa * np.pi / L) ** 2)
        if self.dimension == 1:
            lam = axes[0]
        else:
            lam = axes[0][:, None] + axes[1][None, :]
        object.__setattr__(self, "eigenvalues", lam)
        # Parseval weight of one coefficient product: prod(L_i / 2); the
        # Neumann constant mode carries the extra factor handled in _coeff_weights.
        object.__setattr__(self, "weight", float(np.prod([L / 2 for L in self.lengths])))
        lam_pos = lam[lam > 0]
        lam1 = float(lam_pos.min())
        object.__setattr__(
            self, "constants", SpectralConstants(lambda_min=lam1, poincare=lam1 ** -0.5)
        )
        if self.bc == DIRICHLET:
            object.__setattr__(
                self, "_fwd_scale", float(np.prod([n + 1 for n in self.modes]))
            )
        else:
            ws = []
            for n in self.modes:
                s = np.full(n, 1.0 / n)
                s[0] = 1.0 / (2 * n)
                ws.append(s)
            table = ws[0] if self.dimension == 1 else ws[0][:, None] * ws[1][None, :]
            object.__setattr__(self, "_fwd_scale", table)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.modes

    @property
    def size(self) -> int:
        return int(np.prod(self.modes))

    @property
    def spacings(self) -> tuple[float, ...]:
        if self.bc == DIRICHLET:
            return tuple(L / (n + 1) for L, n in zip(self.lengths, self.modes))
        return tuple(L / n for L, n in zip(self.lengths, self.modes))

    def points(self) -> tuple[np.ndarray, ...]:
        """Collocation coordinates along each axis."""
        out = []
        for L, n, h in zip(self.lengths, self.modes, self.spacings):
            if self.bc == DIRICHLET:
                out.append(np.arange(1, n + 1) * h)
            else:
                out.append((np.arange(n) + 0.5) * h)
        return tuple(out)

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*self.points(), indexing="ij"))

    def coeff_weights(self) -> np.ndarray:
        """Per-mode Parseval weights (doubled on Neumann constant-mode axes)."""
        ws = []
        for L, n in zip(self.lengths, self.modes):
            w = np.full(n, L / 2)
            if self.bc == NEUMANN:
                w[0] = L
            ws.append(w)
        if self.dimension == 1:
            return ws[0]
        return ws[0][:, None] * ws[1][None, :]


def make_grid(dimension, lengths, modes, bc=DIRICHLET) -> Grid:
    """Validated grid constructor with precomputed eigenvalue table."""
    return Grid(
        dimension=int(dimension),
        lengths=tuple(float(L) for L in lengths),
        modes=tuple(int(n) for n in modes),
        bc=bc,
    )


def _check_shape(grid: Grid, values: np.ndarray, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise GridError(f"{what} shape {values.shape} does not match grid {grid.shape}")
    return values


@dataclass(frozen=True)
class Field:
    """Real samples at the interior collocation points of a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _check_shape(self.grid, self.values, "field"))

    def __add__(self, other: "Field") -> "Field":
        _same_grid(self.grid, other.grid)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _same_grid(self.grid, other.grid)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.grid, self.values * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True)
class SpectralField:
    """Real coefficients of a field in the grid's eigenbasis."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _check_shape(self.grid, self.coeffs, "coefficients"))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _same_grid(self.grid, other.grid)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _same_grid(self.grid, other.grid)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__


def _same_grid(a: Grid, b: Grid):
    if a is not b and (a.bc, a.lengths, a.modes) != (b.bc, b.lengths, b.modes):
        raise GridError("fields live on different grids")


def forward(field: Field) -> SpectralField:
    """Samples -> eigenbasis coefficients (unit-amplitude mode convention)."""
    grid = field.grid
    if grid.bc == DIRICHLET:
        coeffs = dstn(field.values, type=1) / grid._fwd_scale
    else:
        coeffs = dctn(field.values, type=2) * grid._fwd_scale
    return SpectralField(grid, coeffs)


def inverse(spec: SpectralField) -> Field:
    """Eigenbasis coefficients -> samples at the collocation points."""
    grid = spec.grid
    if grid.bc == DIRICHLET:
        values = dstn(spec.coeffs, type=1) / 2.0 ** grid.dimension
    else:
        values = idctn(spec.coeffs / grid._fwd_scale, type=2)
    return Field(grid, values)


def as_spectral(u) -> SpectralField:
    return u if isinstance(u, SpectralField) else forward(u)


def as_field(u) -> Field:
    return u if isinstance(u, Field) else inverse(u)


def _power_table(grid: Grid, s: float, coeffs: np.ndarray) -> np.ndarray:
    lam = grid.eigenvalues
    if grid.bc == NEUMANN:
        flat = lam.reshape(-1)
        # constant mode sits at flat index 0
        if s < 0:
            c0 = abs(float(coeffs.reshape(-1)[0]))
            scale = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
            if c0 > _MEAN_ZERO_RTOL * max(scale, 1.0):
                raise ValueError(
                    "negative power of A requires a mean-zero field on a Neumann grid"
                )
        table = np.zeros_like(flat)
        table[1:] = flat[1:] ** s
        # A^s annihilates the constant mode for s != 0 (s > 0: lambda = 0;
        # s < 0: defined on the mean-zero complement only).
        return table.reshape(lam.shape)
    return lam ** s


def apply_power(spec: SpectralField, s: float) -> SpectralField:
    """Coefficient-wise ``A^s``; ``s = 0`` is the identity."""
    if s == 0:
        return SpectralField(spec.grid, spec.coeffs.copy())
    return SpectralField(spec.grid, spec.coeffs * _power_table(spec.grid, s, spec.coeffs))


def norm(u, s: float = 0.0) -> float:
    """Sobolev-scale norm ``|A^s u|`` in L2.

    ``s = 0`` is the plain L2 norm, ``s = 1/2`` the gradient norm,
    ``s = 1`` the Laplacian norm and ``s = -1/2`` the dual norm.  On a
    Neumann grid, negative ``s`` requires a mean-zero field.
    """
    spec = as_spectral(u)
    if s != 0.0:
        spec = apply_power(spec, s)
    w = spec.grid.coeff_weights()
    return float(np.sqrt(np.sum(w * spec.coeffs ** 2)))


def inner(u, v) -> float:
    """L2 inner product via the exact Parseval sum."""
    su, sv = as_spectral(u), as_spectral(v)
    _same_grid(su.grid, sv.grid)
    return float(np.sum(su.grid.coeff_weights() * su.coeffs * sv.coeffs))


def mass(u) -> float:
    """Integral of the field over the rectangle (exact per mode)."""
    spec = as_spectral(u)
    grid = spec.grid
    ws = []
    for L, n in zip(grid.lengths, grid.modes):
        if grid.bc == DIRICHLET:
            kappa = np.arange(1, n + 1)
            ws.append(L * (1.0 - np.cos(kappa * np.pi)) / (kappa * np.pi))
        else:
            w = np.zeros(n)
            w[0] = L
            ws.append(w)
    table = ws[0] if grid.dimension == 1 else ws[0][:, None] * ws[1][None, :]
    return float(np.sum(table * spec.coeffs))


def solve_implicit(rhs: SpectralField, dt: float) -> SpectralField:
    """Solve ``(I + dt A^2) w = rhs`` exactly per mode."""
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    lam = rhs.grid.eigenvalues
    return SpectralField(rhs.grid, rhs.coeffs / (1.0 + dt * lam ** 2))


def rescale(u: Field, target: float, s: float = 0.0) -> Field:
    """Scale a nonzero field so that ``norm(u, s)`` equals ``target``."""
    size = norm(u, s)
    if size == 0.0:
        raise ValueError("cannot rescale the zero field")
    return u * (target / size)


def basis_mode(grid: Grid, kappa, amplitude: float = 1.0) -> Field:
    """Field equal to ``amplitude`` times the eigenfunction of mode ``kappa``."""
    if np.isscalar(kappa):
        kappa = (int(kappa),)
    kappa = tuple(int(k) for k in kappa)
    if len(kappa) != grid.dimension:
        raise GridError("mode multi-index must have one entry per dimension")
    lo = 1 if grid.bc == DIRICHLET else 0
    for k, n in zip(kappa, grid.modes):
        if not lo <= k <= n - 1 + lo:
            raise GridError(f"mode index {kappa} outside grid range")
    coeffs = np.zeros(grid.shape)
    coeffs[tuple(k - lo for k in kappa)] = amplitude
    return inverse(SpectralField(grid, coeffs))
