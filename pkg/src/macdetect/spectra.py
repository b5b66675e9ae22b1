"""Spectral-density models, frequency grids, mode sets and Toeplitz covariances.

Frequencies are normalized to ``[0, 1)`` per axis. All integrals over
frequency are midpoint/Riemann sums on a uniform :class:`FrequencyGrid`; every
function that integrates accepts the grid so callers can refine it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import (
    AccuracyError,
    DegenerateSpectrumError,
    DimensionError,
    InvalidFractionError,
    ModelError,
    SingularPsdError,
)

DEFAULT_POINTS_1D = 4096
DEFAULT_POINTS_2D = 256
# minimum |denominator| accepted on the grid (Wiener-class guard)
DENOMINATOR_FLOOR = 1e-6

PSD1_NUMERATOR = (0.39, 0.0, -0.78, 0.0, 0.39)
PSD1_DENOMINATOR = (1.0, 0.0, -0.37, 0.0, 0.19)
PSD2_NUMERATOR = (3.0, 0.0, -6.0, 0.0, 3.0)
PSD2_DENOMINATOR = (1.0, 0.0, 1.82, 0.0, 0.83)


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid ``nu_i = i / N_axis`` on ``[0, 1)^p``, flattened row-major."""

    dimension: int
    points_per_axis: int

    def __post_init__(self):
        if self.dimension < 1 or self.points_per_axis < 1:
            raise DimensionError("grid dimension and points per axis must be positive")

    @classmethod
    def default(cls, dimension: int = 1) -> FrequencyGrid:
        return cls(dimension, DEFAULT_POINTS_1D if dimension == 1 else DEFAULT_POINTS_2D)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dimension

    @property
    def size(self) -> int:
        return self.points_per_axis**self.dimension

    @property
    def cell(self) -> float:
        return 1.0 / self.size

    @property
    def axis(self) -> np.ndarray:
        return np.arange(self.points_per_axis) / self.points_per_axis

    @property
    def nodes(self) -> np.ndarray:
        """``(N,)`` for 1-D grids, ``(N, p)`` otherwise."""
        if self.dimension == 1:
            return self.axis
        mesh = np.meshgrid(*([self.axis] * self.dimension), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def refined(self, factor: int = 2) -> FrequencyGrid:
        return FrequencyGrid(self.dimension, self.points_per_axis * factor)

    def integrate(self, values) -> float:
        return float(np.sum(values) * self.cell)


class SpectralDensity:
    """Base class: an evaluable PSD on ``[0, 1]^p``."""

    dimension: int = 1

    def __call__(self, nu) -> np.ndarray:
        raise NotImplementedError

    def samples(self, grid: FrequencyGrid) -> np.ndarray:
        if grid.dimension != self.dimension:
            raise DimensionError(f"grid is {grid.dimension}-D but the PSD is {self.dimension}-D")
        return np.asarray(self(grid.nodes), dtype=float)

    @cached_property
    def variance(self) -> float:
        """Process variance, i.e. the integral of the PSD (fine-grid quadrature)."""
        grid = FrequencyGrid(self.dimension, 1 << 15 if self.dimension == 1 else 512)
        return grid.integrate(self.samples(grid))


def _trig_poly(coeffs, nu):
    k = np.arange(len(coeffs))
    return np.exp(-2j * np.pi * np.multiply.outer(np.asarray(nu, dtype=float), k)) @ np.asarray(coeffs, dtype=complex)


@dataclass(frozen=True, eq=False)
class ArmaPsd(SpectralDensity):
    """``input_power * |B(e^{-j2 pi nu})|^2 / |A(e^{-j2 pi nu})|^2``."""

    numerator: tuple
    denominator: tuple
    input_power: float = 1.0
    dimension: int = field(default=1, init=False)

    def __post_init__(self):
        object.__setattr__(self, "numerator", tuple(float(x) for x in self.numerator))
        object.__setattr__(self, "denominator", tuple(float(x) for x in self.denominator))
        if not self.denominator or not any(self.denominator):
            raise SingularPsdError("ARMA denominator is identically zero")
        if self.input_power < 0:
            raise DegenerateSpectrumError("input power must be non-negative")
        check = FrequencyGrid(1, DEFAULT_POINTS_1D)
        den = np.abs(_trig_poly(self.denominator, check.axis))
        if den.min() < DENOMINATOR_FLOOR:
            i = int(np.argmin(den))
            raise SingularPsdError(
                f"ARMA denominator {den[i]:.3g} < {DENOMINATOR_FLOOR:g} at nu={check.axis[i]:.6f}; "
                "the spectrum is not in the Wiener class"
            )

    @classmethod
    def with_variance(cls, numerator, denominator, variance: float, grid: FrequencyGrid | None = None):
        shape = cls(numerator, denominator, 1.0)
        return cls(numerator, denominator, normalize_input_power(shape, variance, grid))

    def __call__(self, nu):
        nu = np.asarray(nu, dtype=float)
        den = np.abs(_trig_poly(self.denominator, nu))
        if np.any(den < DENOMINATOR_FLOOR):
            raise SingularPsdError("ARMA denominator vanishes at a requested frequency")
        num = np.abs(_trig_poly(self.numerator, nu))
        return self.input_power * (num / den) ** 2


@dataclass(frozen=True, eq=False)
class PdePsd(SpectralDensity):
    """PSD of the discretized 2-D elliptic model.

    ``source_power / (a0 + 2 ax cos(2 pi nu_1) + 2 ay cos(2 pi nu_2))^2``, where
    axis 1 is the slow (block) index coupled through ``ax`` and axis 2 the fast
    index coupled through ``ay``.
    """

    a0: float
    ax: float
    ay: float
    source_power: float = 1.0
    dimension: int = field(default=2, init=False)

    def __post_init__(self):
        if self.source_power < 0:
            raise DegenerateSpectrumError("source power must be non-negative")
        lo = abs(self.a0) - 2 * abs(self.ax) - 2 * abs(self.ay)
        if lo <= DENOMINATOR_FLOOR:
            raise SingularPsdError(
                f"denominator a0 + 2ax cos + 2ay cos can vanish for (a0, ax, ay)="
                f"({self.a0}, {self.ax}, {self.ay})"
            )

    @classmethod
    def with_variance(cls, a0, ax, ay, variance: float, grid: FrequencyGrid | None = None):
        shape = cls(a0, ax, ay, 1.0)
        grid = grid or FrequencyGrid(2, 512)
        integral = grid.integrate(shape.samples(grid))
        return cls(a0, ax, ay, variance / integral)

    def __call__(self, nu):
        nu = np.atleast_2d(np.asarray(nu, dtype=float))
        d = self.a0 + 2 * self.ax * np.cos(2 * np.pi * nu[:, 0]) + 2 * self.ay * np.cos(2 * np.pi * nu[:, 1])
        return self.source_power / d**2


@dataclass(frozen=True, eq=False)
class TabulatedPsd(SpectralDensity):
    """PSD given by samples on a uniform grid; evaluated by nearest (periodic) node."""

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        t.setflags(write=False)
        if t.ndim < 1 or len(set(t.shape)) != 1:
            raise DimensionError("tabulated PSD must be sampled on a square grid")
        if np.any(t < 0) or not np.all(np.isfinite(t)):
            raise DegenerateSpectrumError("tabulated PSD has negative or non-finite samples")
        object.__setattr__(self, "table", t)

    @property
    def dimension(self) -> int:  # type: ignore[override]
        return self.table.ndim

    @property
    def grid(self) -> FrequencyGrid:
        return FrequencyGrid(self.table.ndim, self.table.shape[0])

    def __call__(self, nu):
        m = self.table.shape[0]
        nu = np.asarray(nu, dtype=float)
        idx = np.rint(nu * m).astype(int) % m
        if self.dimension == 1:
            return self.table[idx]
        idx = np.atleast_2d(idx)
        return self.table[tuple(idx.T)]

    @cached_property
    def variance(self) -> float:
        return float(self.table.mean())


def eval_psd(psd: SpectralDensity, nu) -> np.ndarray:
    return psd(nu)


def normalize_input_power(psd_shape: ArmaPsd, variance: float, grid: FrequencyGrid | None = None) -> float:
    """Input power that makes the ARMA process have the requested variance."""
    grid = grid or FrequencyGrid(1, 1 << 15)
    num = np.abs(_trig_poly(psd_shape.numerator, grid.axis))
    den = np.abs(_trig_poly(psd_shape.denominator, grid.axis))
    integral = grid.integrate((num / den) ** 2)
    if not integral > 0:
        raise DegenerateSpectrumError("spectral shape integrates to zero")
    return variance / integral


def psd1(variance: float = 1.0) -> ArmaPsd:
    return ArmaPsd.with_variance(PSD1_NUMERATOR, PSD1_DENOMINATOR, variance)


def psd2(variance: float = 1.0) -> ArmaPsd:
    return ArmaPsd.with_variance(PSD2_NUMERATOR, PSD2_DENOMINATOR, variance)


def pde2d(a0=-5.0, ax=1.0, ay=1.0, variance: float = 1.0) -> PdePsd:
    return PdePsd.with_variance(a0, ax, ay, variance)


def omega(psd_or_samples, t, grid: FrequencyGrid | None = None):
    """Fraction of grid nodes where the PSD strictly exceeds ``t``."""
    values = _grid_values(psd_or_samples, grid)
    t = np.asarray(t, dtype=float)
    s = np.sort(values)
    frac = 1.0 - np.searchsorted(s, t, side="right") / s.size
    return float(frac) if frac.ndim == 0 else frac


def _grid_values(psd_or_samples, grid):
    if isinstance(psd_or_samples, SpectralDensity):
        return psd_or_samples.samples(grid or FrequencyGrid.default(psd_or_samples.dimension))
    return np.asarray(psd_or_samples, dtype=float).ravel()


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Nodes carrying the largest PSD values, with the realized measure."""

    grid: FrequencyGrid
    indicator: np.ndarray
    level: float
    beta: float

    @property
    def beta_actual(self) -> float:
        return float(self.indicator.sum()) / self.indicator.size

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights restricting a grid integral to the set."""
        return self.indicator * self.grid.cell

    def __contains__(self, index) -> bool:
        return bool(self.indicator[index])


def descending_order(values, rtol: float = 1e-12) -> np.ndarray:
    """Indices sorting ``values`` descending; ties by ascending index.

    Values equal to within ``rtol`` of the largest magnitude count as ties, so
    rounding noise in symmetric spectra does not decide the order.
    """
    values = np.asarray(values, dtype=float).ravel()
    scale = np.max(np.abs(values), initial=0.0)
    key = np.round(values / scale / rtol) if scale > 0 else values
    return np.lexsort((np.arange(values.size), -key))


def top_count(beta: float, size: int) -> int:
    if not 0 < beta <= 1:
        raise InvalidFractionError(f"beta must lie in (0, 1], got {beta}")
    return int(np.floor(beta * size + 1e-9))


def transmitted_modes(psd_or_samples, beta: float, grid: FrequencyGrid | None = None) -> ModeSet:
    """The ``floor(beta*N)`` nodes of largest PSD (ties to the lower index)."""
    if isinstance(psd_or_samples, SpectralDensity):
        grid = grid or FrequencyGrid.default(psd_or_samples.dimension)
    elif grid is None:
        grid = FrequencyGrid(1, np.asarray(psd_or_samples).size)
    values = _grid_values(psd_or_samples, grid)
    k = top_count(beta, values.size)
    order = descending_order(values)
    ind = np.zeros(values.size, dtype=bool)
    ind[order[:k]] = True
    level = float(values[order[k - 1]]) if k else float("inf")
    ind.setflags(write=False)
    return ModeSet(grid, ind, level, beta)


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    """A Hermitian covariance with a structure tag; usable wherever an ndarray is."""

    matrix: np.ndarray
    structure: str = "General"

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    @property
    def order(self) -> int:
        return self.matrix.shape[0]

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        m = self.matrix
        return bool(np.max(np.abs(m - m.conj().T)) <= tol * max(1.0, np.max(np.abs(m))))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])


def _lag_table(psd: SpectralDensity, shape: tuple[int, ...], grid: FrequencyGrid) -> np.ndarray:
    """Fourier coefficients ``r[k] = int phi(nu) exp(-j 2 pi nu.k) dnu`` via FFT."""
    values = psd.samples(grid).reshape(grid.shape)
    return np.fft.fftn(values) / grid.size


def toeplitz_covariance(psd: SpectralDensity, n, grid: FrequencyGrid | None = None, tol: float = 1e-9):
    """(Multilevel) Toeplitz covariance generated by ``psd``.

    ``n`` is an order for 1-D spectra or a tuple ``(n_1, ..., n_p)``. Entries
    are Riemann sums evaluated by FFT; they are recomputed on a grid twice as
    fine and :class:`AccuracyError` is raised if the two disagree by more than
    ``tol`` relative to the variance.
    """
    shape = (int(n),) if np.ndim(n) == 0 else tuple(int(x) for x in n)
    if len(shape) != psd.dimension or min(shape) < 1:
        raise DimensionError(f"order {n} does not match a {psd.dimension}-D spectrum")
    if grid is None:
        pts = DEFAULT_POINTS_1D if psd.dimension == 1 else DEFAULT_POINTS_2D
        while pts < 4 * max(shape):
            pts *= 2
        grid = FrequencyGrid(psd.dimension, pts)
    if grid.points_per_axis < 2 * max(shape):
        raise AccuracyError("grid too coarse for the requested order; need at least 2n points per axis")
    coarse = _lag_table(psd, shape, grid)
    fine = _lag_table(psd, shape, grid.refined())
    # lags of interest: -(n_l-1)..(n_l-1) per axis
    idx = np.meshgrid(*[np.arange(-(m - 1), m) for m in shape], indexing="ij")
    c_vals = coarse[tuple(i % grid.points_per_axis for i in idx)]
    f_vals = fine[tuple(i % (2 * grid.points_per_axis) for i in idx)]
    scale = max(abs(coarse.flat[0]), 1e-300)
    if np.max(np.abs(c_vals - f_vals)) > tol * scale:
        raise AccuracyError(
            f"Toeplitz entries changed by {np.max(np.abs(c_vals - f_vals)):.3g} under grid refinement"
        )

    # entry (a, b) = r[a - b], with a, b multi-indices unwound row-major
    multi = np.indices(shape).reshape(len(shape), -1)
    lag = [multi[l][:, None] - multi[l][None, :] for l in range(len(shape))]
    mat = fine[tuple(d % (2 * grid.points_per_axis) for d in lag)]
    mat = 0.5 * (mat + mat.conj().T)
    return CovarianceMatrix(mat, "Toeplitz" if len(shape) == 1 else "MultilevelToeplitz")


def pde2d_system_matrix(n1: int, n2: int, a0: float, ax: float, ay: float) -> np.ndarray:
    """Two-level banded matrix of the discretized PDE (blocks of size ``n2``)."""
    t1 = np.eye(n1, k=1) + np.eye(n1, k=-1)
    t2 = np.eye(n2, k=1) + np.eye(n2, k=-1)
    block = a0 * np.eye(n2) + ay * t2
    return np.kron(np.eye(n1), block) + ax * np.kron(t1, np.eye(n2))


class Pde2dProcess:
    """Finite 2-D PDE field: ``A s = q`` with white source ``q`` of power ``source_power``.

    Keeps an LU factorization of ``A`` so samples and projections never form
    ``(A A^T)^{-1}`` explicitly.
    """

    def __init__(self, n1: int, n2: int, a0: float, ax: float, ay: float, source_power: float = 1.0):
        self.n1, self.n2 = int(n1), int(n2)
        self.params = (a0, ax, ay)
        self.source_power = float(source_power)
        self.A = pde2d_system_matrix(self.n1, self.n2, a0, ax, ay)
        lu, piv = sla.lu_factor(self.A, check_finite=True)
        udiag = np.abs(np.diag(lu))
        if udiag.min() <= 1e-12 * max(udiag.max(), 1e-300):
            raise ModelError(f"PDE system matrix is singular for (a0, ax, ay)=({a0}, {ax}, {ay})")
        self._lu = (lu, piv)

    @classmethod
    def from_psd(cls, psd: PdePsd, n1: int, n2: int) -> Pde2dProcess:
        return cls(n1, n2, psd.a0, psd.ax, psd.ay, psd.source_power)

    @property
    def n(self) -> int:
        return self.n1 * self.n2

    def solve(self, rhs) -> np.ndarray:
        return sla.lu_solve(self._lu, rhs)

    def covariance(self) -> CovarianceMatrix:
        # A is real symmetric, so (A A^T)^{-1} = A^{-1} A^{-T}
        X = self.solve(np.eye(self.n))
        sigma = self.source_power * (X @ X.T)
        return CovarianceMatrix(0.5 * (sigma + sigma.T), "General")

    def project(self, C) -> np.ndarray:
        """``C^H Sigma C`` via two triangular-solve passes."""
        Y = self.solve(np.asarray(C))
        return self.source_power * (Y.conj().T @ Y)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """``count`` circularly-symmetric field realizations as columns."""
        q = complex_normal(rng, (self.n, count)) * np.sqrt(self.source_power)
        return self.solve(q)


def pde2d_covariance(n1: int, n2: int, a0: float, ax: float, ay: float, source_power: float = 1.0):
    return Pde2dProcess(n1, n2, a0, ax, ay, source_power).covariance()


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard circularly-symmetric complex normal draws (unit variance)."""
    z = rng.standard_normal(shape + (2,) if isinstance(shape, tuple) else (shape, 2))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)


# -- configuration ----------------------------------------------------------

_PRESETS = {
    "psd1": lambda v: psd1(v),
    "psd2": lambda v: psd2(v),
    "pde2d": lambda v: pde2d(variance=v),
}


def psd_from_config(cfg) -> SpectralDensity:
    """Build a PSD from a JSON-compatible mapping or a preset name.

    Grammar::

        "psd1" | "psd2" | "pde2d"
        {"kind": "preset", "name": "psd1", "variance": 1.0}
        {"kind": "arma1d", "b": [...], "a": [...], "variance": 1.0}
        {"kind": "arma1d", "b": [...], "a": [...], "input_power": 1.7}
        {"kind": "pde2d", "a0": -5, "ax": 1, "ay": 1, "variance": 1.0}
        {"kind": "pde2d", "a0": -5, "ax": 1, "ay": 1, "source_power": 1.0}
        {"kind": "tabulated", "samples": [...]}        # nested lists for p-D
    """
    if isinstance(cfg, str):
        cfg = {"kind": "preset", "name": cfg}
    errors = psd_config_errors(cfg)
    if errors:
        from .errors import ConfigError

        raise ConfigError(errors)
    kind = cfg["kind"].lower()
    if kind == "preset":
        return _PRESETS[cfg["name"]](float(cfg.get("variance", 1.0)))
    if kind == "arma1d":
        if "input_power" in cfg:
            return ArmaPsd(cfg["b"], cfg["a"], float(cfg["input_power"]))
        return ArmaPsd.with_variance(cfg["b"], cfg["a"], float(cfg.get("variance", 1.0)))
    if kind == "pde2d":
        if "source_power" in cfg:
            return PdePsd(cfg["a0"], cfg["ax"], cfg["ay"], float(cfg["source_power"]))
        return PdePsd.with_variance(cfg["a0"], cfg["ax"], cfg["ay"], float(cfg.get("variance", 1.0)))
    return TabulatedPsd(np.asarray(cfg["samples"], dtype=float))


_PSD_KEYS = {
    "preset": {"kind", "name", "variance"},
    "arma1d": {"kind", "b", "a", "variance", "input_power"},
    "pde2d": {"kind", "a0", "ax", "ay", "variance", "source_power"},
    "tabulated": {"kind", "samples"},
}


def psd_config_errors(cfg, where: str = "psd") -> list[str]:
    """Every validation problem in a PSD mapping (empty list when valid)."""
    if isinstance(cfg, str):
        return [] if cfg in _PRESETS else [f"{where}: unknown preset {cfg!r}"]
    if not isinstance(cfg, dict):
        return [f"{where}: expected a preset name or a mapping"]
    kind = str(cfg.get("kind", "")).lower()
    if kind not in _PSD_KEYS:
        return [f"{where}.kind: must be one of {sorted(_PSD_KEYS)}"]
    errors = [f"{where}.{k}: unknown key" for k in sorted(set(cfg) - _PSD_KEYS[kind])]
    if kind == "preset" and cfg.get("name") not in _PRESETS:
        errors.append(f"{where}.name: unknown preset {cfg.get('name')!r}")
    for key in ("b", "a") if kind == "arma1d" else ():
        val = cfg.get(key)
        if not isinstance(val, list) or not val or not all(isinstance(x, (int, float)) for x in val):
            errors.append(f"{where}.{key}: expected a non-empty list of numbers")
    for key in ("a0", "ax", "ay") if kind == "pde2d" else ():
        if not isinstance(cfg.get(key), (int, float)):
            errors.append(f"{where}.{key}: expected a number")
    for key in ("variance", "input_power", "source_power"):
        if key in cfg and not (isinstance(cfg[key], (int, float)) and cfg[key] > 0):
            errors.append(f"{where}.{key}: must be a positive number")
    if "variance" in cfg and ("input_power" in cfg or "source_power" in cfg):
        errors.append(f"{where}: give either variance or an input/source power, not both")
    if kind == "tabulated" and "samples" not in cfg:
        errors.append(f"{where}.samples: required")
    return errors


def psd_to_config(psd: SpectralDensity) -> dict:
    if isinstance(psd, ArmaPsd):
        return {"kind": "arma1d", "b": list(psd.numerator), "a": list(psd.denominator), "input_power": psd.input_power}
    if isinstance(psd, PdePsd):
        return {"kind": "pde2d", "a0": psd.a0, "ax": psd.ax, "ay": psd.ay, "source_power": psd.source_power}
    if isinstance(psd, TabulatedPsd):
        return {"kind": "tabulated", "samples": psd.table.tolist()}
    raise TypeError(f"cannot serialize {type(psd).__name__}")
