"""Fourier representation of periodic vector fields on the 2π torus.

Coefficients follow f(x) = Σ_k f̂_k e^{ik·x}; norms carry the (2π)³ Parseval
factor so that ‖f‖_s = |Λ^s f|₂ holds literally.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable, Literal, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import fft as sfft

from .container import KIND_SPECTRAL_FIELD, read_container, write_container
from .environment import fft_workers
from .errors import ConfigurationError, DataError, DomainError

logger = logging.getLogger(__name__)

COMPONENTS = 3
TORUS_VOLUME = (2.0 * np.pi) ** 3
SYMMETRY_TOL = 1e-12

DealiasRule = Literal["two_thirds", "none"]


def default_grid_size(N: int) -> int:
    """Smallest even M with M ≥ 3N+1, so quadratic products do not alias."""
    M = 3 * N + 1
    return M + (M % 2)


class GridSpec(BaseModel):
    """Spectral truncation N, physical grid size M and dealiasing rule.

    M defaults to the smallest even size that makes quadratic products exact.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    N: int = Field(gt=0, description="Largest retained |k|_∞")
    M: int = Field(gt=0, description="Grid points per axis")
    dealias_rule: DealiasRule = "two_thirds"

    @model_validator(mode="before")
    @classmethod
    def _fill_grid_size(cls, data: Any) -> Any:
        if isinstance(data, dict) and data.get("M") in (None, "") and "N" in data:
            data = {**data, "M": default_grid_size(int(data["N"]))}
        return data

    @model_validator(mode="after")
    def _check_grid(self) -> "GridSpec":
        if self.M % 2 != 0:
            raise ValueError(f"Grid size M must be even, got {self.M}")
        if self.M < 2 * self.N + 2:
            raise ValueError(
                f"Grid size M={self.M} cannot hold modes up to N={self.N}; need M ≥ {2 * self.N + 2}"
            )
        return self

    @property
    def size(self) -> int:
        return self.M

    @property
    def dealias_cutoff(self) -> int:
        """Largest |k|_∞ kept in quadratic products."""
        if self.dealias_rule == "none":
            return self.N
        return min(self.N, (self.size - 1) // 3)

    @property
    def spacing(self) -> float:
        return 2.0 * np.pi / self.size

    def coordinates(self) -> np.ndarray:
        """Grid nodes x_j = 2πj/M along one axis."""
        return np.arange(self.size) * self.spacing


@lru_cache(maxsize=32)
def wave_numbers(N: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Broadcastable k1, k2, k3 and integer |k|² over the retained cube."""
    k = np.arange(-N, N + 1)
    k1 = k.reshape(-1, 1, 1)
    k2 = k.reshape(1, -1, 1)
    k3 = k.reshape(1, 1, -1)
    ksq = (k1 * k1 + k2 * k2 + k3 * k3).astype(np.int64)
    for arr in (k1, k2, k3, ksq):
        arr.setflags(write=False)
    return k1, k2, k3, ksq


@lru_cache(maxsize=32)
def _cube_mask(N: int, cutoff: int) -> np.ndarray:
    k = np.abs(np.arange(-N, N + 1)) <= cutoff
    mask = k.reshape(-1, 1, 1) & k.reshape(1, -1, 1) & k.reshape(1, 1, -1)
    mask.setflags(write=False)
    return mask


@lru_cache(maxsize=32)
def _ball_mask(N: int, n: int) -> np.ndarray:
    mask = wave_numbers(N)[3] <= n * n
    mask.setflags(write=False)
    return mask


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SpectralField:
    """Three-component coefficient array over wave vectors with |k|_∞ ≤ N.

    ``coeffs[c, i, j, l]`` is component ``c`` at k = (i−N, j−N, l−N).
    """

    resolution: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        side = 2 * self.resolution + 1
        arr = np.asarray(self.coeffs, dtype=np.complex128)
        if arr.shape != (COMPONENTS, side, side, side):
            raise DataError(
                f"Coefficient array shape {arr.shape} does not match resolution {self.resolution}"
            )
        object.__setattr__(self, "coeffs", _frozen(arr))

    @classmethod
    def zeros(cls, N: int) -> "SpectralField":
        side = 2 * N + 1
        return cls(N, np.zeros((COMPONENTS, side, side, side), dtype=np.complex128))

    def index(self, k: Tuple[int, int, int]) -> Tuple[int, int, int]:
        """Array index of wave vector k."""
        N = self.resolution
        if any(abs(kj) > N for kj in k):
            raise DomainError(f"Wave vector {k} lies outside the retained cube |k|_∞ ≤ {N}")
        return (k[0] + N, k[1] + N, k[2] + N)

    def coefficient(self, k: Tuple[int, int, int]) -> np.ndarray:
        return self.coeffs[(slice(None),) + self.index(k)].copy()

    def with_coeffs(self, coeffs: np.ndarray) -> "SpectralField":
        return SpectralField(self.resolution, coeffs)

    def scaled(self, factor: float) -> "SpectralField":
        return self.with_coeffs(self.coeffs * factor)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_resolution(self, other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_resolution(self, other)
        return self.with_coeffs(self.coeffs - other.coeffs)


@dataclass(frozen=True)
class PhysicalField:
    """Real velocity triple on a uniform M³ grid."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 4 or arr.shape[0] != COMPONENTS or len(set(arr.shape[1:])) != 1:
            raise DataError(f"Physical field must have shape (3, M, M, M), got {arr.shape}")
        object.__setattr__(self, "values", _frozen(arr))

    @property
    def resolution(self) -> int:
        return int(self.values.shape[1])

    @classmethod
    def from_function(
        cls, grid: GridSpec, func: Callable[[np.ndarray, np.ndarray, np.ndarray], Sequence[Any]]
    ) -> "PhysicalField":
        """Sample ``func(x1, x2, x3) -> (u1, u2, u3)`` on the grid nodes."""
        x = grid.coordinates()
        X1, X2, X3 = np.meshgrid(x, x, x, indexing="ij")
        comps = func(X1, X2, X3)
        values = np.stack([np.broadcast_to(np.asarray(c, dtype=np.float64), X1.shape) for c in comps])
        return cls(values)


def _check_same_resolution(a: SpectralField, b: SpectralField) -> None:
    if a.resolution != b.resolution:
        raise ConfigurationError(f"Resolution mismatch: {a.resolution} vs {b.resolution}")


def _check_grid(field: SpectralField, grid: GridSpec) -> None:
    if field.resolution != grid.N:
        raise ConfigurationError(
            f"Field resolution N={field.resolution} does not match grid N={grid.N}"
        )


def _fft_indices(N: int, M: int) -> Tuple[np.ndarray, np.ndarray]:
    idx = np.arange(-N, N + 1) % M
    return idx[:, None], idx[None, :]


def _flip(coeffs: np.ndarray) -> np.ndarray:
    """Map coefficient at k to position −k along the last three axes."""
    return coeffs[..., ::-1, ::-1, ::-1]


def hermitian_defect(field: SpectralField) -> float:
    """max |f̂(k) − conj f̂(−k)| over all retained modes."""
    return float(np.max(np.abs(field.coeffs - np.conj(_flip(field.coeffs)))))


def to_physical(coeffs: np.ndarray, N: int, M: int) -> np.ndarray:
    """Inverse transform of a stack of Hermitian coefficient cubes.

    Leading axes are batch axes; the last three index k as in SpectralField.
    """
    batch = coeffs.shape[:-3]
    half = np.zeros(batch + (M, M, M // 2 + 1), dtype=np.complex128)
    i1, i2 = _fft_indices(N, M)
    half[..., i1, i2, : N + 1] = coeffs[..., N:] * float(M) ** 3
    return sfft.irfftn(half, s=(M, M, M), axes=(-3, -2, -1), workers=fft_workers())


def from_physical(values: np.ndarray, N: int) -> np.ndarray:
    """Forward transform of a stack of real grids, truncated to |k|_∞ ≤ N."""
    M = values.shape[-1]
    spec = sfft.rfftn(values, axes=(-3, -2, -1), workers=fft_workers()) / float(M) ** 3
    i1, i2 = _fft_indices(N, M)
    upper = spec[..., i1, i2, : N + 1]
    side = 2 * N + 1
    coeffs = np.zeros(values.shape[:-3] + (side, side, side), dtype=np.complex128)
    coeffs[..., N:] = upper
    coeffs[..., :N] = np.conj(upper[..., ::-1, ::-1, :0:-1])
    return 0.5 * (coeffs + np.conj(_flip(coeffs)))


def analyze(field: PhysicalField, grid: GridSpec) -> SpectralField:
    """Forward transform with 1/M³ normalisation.

    Raises:
        ConfigurationError: If the field is not sampled on ``grid``
    """
    if field.resolution != grid.size:
        raise ConfigurationError(
            f"Physical field has {field.resolution} points per axis, grid expects {grid.size}"
        )
    return SpectralField(grid.N, from_physical(field.values, grid.N))


def synthesize(field: SpectralField, grid: GridSpec) -> PhysicalField:
    """Inverse transform onto the physical grid.

    Raises:
        ConfigurationError: On resolution mismatch
        DataError: If Hermitian symmetry is violated beyond 1e-12 relative
    """
    _check_grid(field, grid)
    scale = float(np.max(np.abs(field.coeffs))) if field.coeffs.size else 0.0
    defect = hermitian_defect(field)
    if defect > SYMMETRY_TOL * max(scale, np.finfo(float).tiny):
        raise DataError(f"Field is not Hermitian: defect {defect:.3e} against scale {scale:.3e}")
    return PhysicalField(to_physical(field.coeffs, grid.N, grid.size))


def lambda_pow(field: SpectralField, s: float) -> SpectralField:
    """Apply Λ^s: multiply mode k by |k|^s."""
    if s < 0:
        raise DomainError(f"Λ^s requires s ≥ 0, got {s}")
    ksq = wave_numbers(field.resolution)[3].astype(np.float64)
    return field.with_coeffs(field.coeffs * np.power(ksq, 0.5 * s))


def l2_norm(field: SpectralField) -> float:
    return float(np.sqrt(TORUS_VOLUME * np.sum(np.abs(field.coeffs) ** 2)))


def seminorm(field: SpectralField, s: float) -> float:
    """‖f‖_s = ((2π)³ Σ_{k≠0} |k|^{2s} |f̂_k|²)^{1/2} over all components."""
    if s < 0:
        raise DomainError(f"Seminorm order must be nonnegative, got {s}")
    ksq = wave_numbers(field.resolution)[3]
    weights = np.where(ksq > 0, np.power(ksq.astype(np.float64), s), 0.0)
    energy = np.sum(np.abs(field.coeffs) ** 2, axis=0)
    return float(np.sqrt(TORUS_VOLUME * np.sum(weights * energy)))


def sobolev_norm(field: SpectralField, s: float) -> float:
    return l2_norm(field) + seminorm(field, s)


def lp_norm(field: PhysicalField, p: float) -> float:
    """Rectangle-rule L^p norm of the Euclidean magnitude; p = inf gives the grid max."""
    if not p >= 1:
        raise DomainError(f"L^p norm requires p ≥ 1, got {p}")
    magnitude = np.sqrt(np.sum(field.values**2, axis=0))
    if np.isinf(p):
        return float(np.max(magnitude))
    cell = (2.0 * np.pi / field.resolution) ** 3
    return float((np.sum(magnitude**p) * cell) ** (1.0 / p))


def galerkin_project(field: SpectralField, n: int) -> SpectralField:
    """P_n: keep modes with k1²+k2²+k3² ≤ n², zero the rest."""
    if n < 0:
        raise DomainError(f"Projection radius must be nonnegative, got {n}")
    if n * n >= 3 * field.resolution**2:
        return field
    return field.with_coeffs(field.coeffs * _ball_mask(field.resolution, n))


def dealias(field: SpectralField, grid: GridSpec) -> SpectralField:
    _check_grid(field, grid)
    cutoff = grid.dealias_cutoff
    if cutoff >= grid.N:
        return field
    return field.with_coeffs(field.coeffs * _cube_mask(grid.N, cutoff))


def gradient_coeffs(field: SpectralField) -> np.ndarray:
    """Stack of ∂_j f as coefficient arrays, shape (3 directions, 3 comps, ...)."""
    k1, k2, k3, _ = wave_numbers(field.resolution)
    return np.stack([1j * k * field.coeffs for k in (k1, k2, k3)])


def laplacian(field: SpectralField) -> SpectralField:
    return field.with_coeffs(-wave_numbers(field.resolution)[3] * field.coeffs)


def convective_term(u: SpectralField, grid: GridSpec) -> SpectralField:
    """Pseudo-spectral (u·∇)u with the grid's dealiasing rule.

    Raises:
        ConfigurationError: On resolution mismatch with ``grid``
    """
    _check_grid(u, grid)
    u = dealias(u, grid)
    stacked = np.concatenate([u.coeffs[None], gradient_coeffs(u)], axis=0)
    phys = to_physical(stacked, grid.N, grid.size)
    velocity, grads = phys[0], phys[1:]
    product = np.einsum("jxyz,jixyz->ixyz", velocity, grads)
    return dealias(SpectralField(grid.N, from_physical(product, grid.N)), grid)


def brute_force_convective(u: SpectralField) -> SpectralField:
    """Direct convolution sum for (u·∇)u restricted to |k|_∞ ≤ N.

    Costs O(N⁶); reference for small N only.
    """
    N = u.resolution
    side = 2 * N + 1
    grads = gradient_coeffs(u)
    out = np.zeros((COMPONENTS, 2 * side - 1, 2 * side - 1, 2 * side - 1), dtype=np.complex128)
    for a in range(side):
        for b in range(side):
            for c in range(side):
                weights = u.coeffs[:, a, b, c]
                if not np.any(weights):
                    continue
                block = np.tensordot(weights, grads, axes=(0, 0))
                out[:, a : a + side, b : b + side, c : c + side] += block
    return SpectralField(N, out[:, N : N + side, N : N + side, N : N + side])


def spatial_mean(field: SpectralField) -> np.ndarray:
    """∫ f dx = (2π)³ f̂_0 per component.

    Raises:
        DataError: If the zero mode has an imaginary part above 1e-12
    """
    N = field.resolution
    zero_mode = field.coeffs[:, N, N, N]
    if np.max(np.abs(zero_mode.imag)) > SYMMETRY_TOL:
        raise DataError(f"Zero mode is not real: {zero_mode}")
    return TORUS_VOLUME * zero_mode.real.copy()


PathLike = Union[str, Path]


def write_field_binary(field: SpectralField, path: PathLike) -> Path:
    """Coefficients in lexicographic (k1, k2, k3, component) order as LE float64 pairs."""
    ordered = np.ascontiguousarray(np.moveaxis(field.coeffs, 0, -1)).astype("<c16")
    return write_container(path, KIND_SPECTRAL_FIELD, field.resolution, COMPONENTS, ordered.tobytes())


def read_field_binary(path: PathLike) -> SpectralField:
    N, components, payload = read_container(path, KIND_SPECTRAL_FIELD)
    side = 2 * N + 1
    if components != COMPONENTS:
        raise DataError(f"{path}: expected {COMPONENTS} components, found {components}")
    data = np.frombuffer(payload, dtype="<c16")
    if data.size != side**3 * COMPONENTS:
        raise DataError(f"{path}: payload holds {data.size} coefficients, expected {side**3 * COMPONENTS}")
    return SpectralField(N, np.moveaxis(data.reshape(side, side, side, COMPONENTS), -1, 0))


def dump_field_text(field: SpectralField, path: PathLike, skip_zeros: bool = False) -> Path:
    """One line per mode and component: ``k1 k2 k3 comp re im``."""
    N = field.resolution
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w") as f:
        f.write("# k1 k2 k3 comp re im\n")
        for i, j, l in np.ndindex(*field.coeffs.shape[1:]):
            for comp in range(COMPONENTS):
                value = field.coeffs[comp, i, j, l]
                if skip_zeros and value == 0:
                    continue
                f.write(f"{i - N} {j - N} {l - N} {comp} {value.real:.17g} {value.imag:.17g}\n")
    return target
