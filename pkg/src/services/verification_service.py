"""Self-checks and timing of the spherical harmonic transforms.

The verification suite runs on one grid and truncation:

    round-trip       inverse then forward recovers random band-limited coefficients
    parseval         Σ w u² equals Σ g_m |û|² for band-limited fields
    orthonormality   forward of each sampled harmonic is a single spike
    adjoint          dot-product tests of both transposes
    bitwise-parallel distributed forward/inverse equal the serial bytes

Quadrature checks are strict only where the rule integrates the Legendre
products exactly; elsewhere their errors are reported with an infinite
tolerance.
"""

import math
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.exceptions import ConfigError
from src.models.grid import SphericalGrid, build_grid, sphere_measure_weights
from src.models.legendre import LegendreTable, build_tables
from src.models.spectral import SpectralCoeffs, order_multiplicity, triangular_mask
from src.models.topology import WorkerTopology
from src.schemas.grid_schemas import GridKind, GridSpec
from src.services.dist_sht_service import DistributedSHT
from src.services.sht_service import (
    harmonic_field,
    sht_forward,
    sht_forward_adjoint,
    sht_inverse,
    sht_inverse_adjoint,
)
from src.utils.instrumentation import instrumented
from src.utils.logging import get_logger

logger = get_logger(__name__)

EXACT_TOLERANCE = 1e-10
ORTHONORMALITY_MAX_DEGREE = 20

BENCH_HEADER = ["size", "workers", "transform", "ms_per_transform"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    error: float
    tolerance: float

    def line(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return f"{self.name}: {status} (error={self.error:.3e}, tolerance={self.tolerance:.1e})"


@dataclass
class VerificationReport:
    grid: GridSpec
    lmax: int
    mmax: int
    workers: str
    checks: List[CheckResult] = field(default_factory=list)
    bitwise_equal: bool = False

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failed(self) -> List[str]:
        return [check.name for check in self.checks if not check.passed]

    def lines(self) -> List[str]:
        header = f"grid={self.grid.label()} lmax={self.lmax} mmax={self.mmax} workers={self.workers}"
        return [header] + [check.line() for check in self.checks] + [
            f"bitwise-equal: {'true' if self.bitwise_equal else 'false'}"
        ]

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.label(),
            "lmax": self.lmax,
            "mmax": self.mmax,
            "workers": self.workers,
            "passed": self.passed,
            "bitwise_equal": self.bitwise_equal,
            "checks": [check.__dict__ for check in self.checks],
        }


def exact_degree(grid: SphericalGrid) -> int:
    """Largest lmax whose Legendre products the grid's quadrature integrates exactly."""
    if grid.kind == GridKind.GAUSS_LEGENDRE:
        return grid.max_degree
    if grid.kind == GridKind.EQUIANGULAR_CLENSHAW_CURTIS:
        return (grid.nlat - 1) // 2
    return -1


def random_coefficients(rng: np.random.Generator, lmax: int, mmax: int, leading: Tuple[int, ...] = ()) -> SpectralCoeffs:
    """Hermitian-valid random coefficients (real m = 0 column, zero above the triangle)."""
    shape = tuple(leading) + (lmax + 1, mmax + 1)
    data = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * triangular_mask(lmax, mmax)
    data[..., 0] = data[..., 0].real
    return SpectralCoeffs(lmax, mmax, data)


def _real_inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(a.real * b.real + a.imag * b.imag))


def _quadrature_tolerance(grid: SphericalGrid, lmax: int) -> float:
    return EXACT_TOLERANCE if lmax <= exact_degree(grid) else math.inf


def check_round_trip(grid: SphericalGrid, table: LegendreTable, rng: np.random.Generator,
                     n_fields: int) -> CheckResult:
    coeffs = random_coefficients(rng, table.lmax, table.mmax, (n_fields,))
    recovered = sht_forward(sht_inverse(coeffs, table), table)
    error = float(np.max(np.abs(recovered.data - coeffs.data)))
    tolerance = _quadrature_tolerance(grid, table.lmax)
    return CheckResult("round-trip", error < tolerance, error, tolerance)


def check_parseval(grid: SphericalGrid, table: LegendreTable, rng: np.random.Generator,
                   n_fields: int) -> CheckResult:
    coeffs = random_coefficients(rng, table.lmax, table.mmax, (n_fields,))
    fields = sht_inverse(coeffs, table)
    spatial = np.sum(sphere_measure_weights(grid) * fields ** 2, axis=(-2, -1))
    spectral = np.sum(order_multiplicity(table.mmax) * np.abs(coeffs.data) ** 2, axis=(-2, -1))
    error = float(np.max(np.abs(spatial - spectral) / spectral))
    tolerance = _quadrature_tolerance(grid, table.lmax)
    return CheckResult("parseval", error < tolerance, error, tolerance)


def check_orthonormality(grid: SphericalGrid, table: LegendreTable) -> CheckResult:
    """Gram check up to degree 20; only meaningful where the quadrature is exact."""
    lmax = min(table.lmax, ORTHONORMALITY_MAX_DEGREE)
    error = 0.0
    for l in range(lmax + 1):
        for m in range(min(l, table.mmax) + 1):
            coeffs = sht_forward(harmonic_field(l, m, grid), table).data
            expected = np.zeros_like(coeffs)
            # Re(Y_l^m) carries half of the order-m content for m > 0
            expected[l, m] = 1.0 if m == 0 else 0.5
            error = max(error, float(np.max(np.abs(coeffs - expected))))
    tolerance = _quadrature_tolerance(grid, table.lmax)
    return CheckResult("orthonormality", error < tolerance, error, tolerance)


def check_adjoints(grid: SphericalGrid, table: LegendreTable, rng: np.random.Generator) -> CheckResult:
    x = rng.standard_normal(grid.shape)
    y = random_coefficients(rng, table.lmax, table.mmax)
    forward = abs(_real_inner(sht_forward(x, table).data, y.data) - float(np.sum(x * sht_forward_adjoint(y, table))))
    forward_scale = max(1.0, abs(_real_inner(sht_forward(x, table).data, y.data)))
    inverse_lhs = float(np.sum(sht_inverse(y, table) * x))
    inverse = abs(inverse_lhs - _real_inner(y.data, sht_inverse_adjoint(x, table).data))
    error = max(forward / forward_scale, inverse / max(1.0, abs(inverse_lhs)))
    return CheckResult("adjoint", error < EXACT_TOLERANCE, error, EXACT_TOLERANCE)


def check_bitwise_parallel(grid: SphericalGrid, table: LegendreTable, topology: WorkerTopology,
                           rng: np.random.Generator, n_fields: int) -> CheckResult:
    fields = rng.standard_normal((n_fields,) + grid.shape)
    coeffs = random_coefficients(rng, table.lmax, table.mmax, (n_fields,))
    distributed = DistributedSHT(grid, table.lmax, table.mmax, topology)
    forward_equal = distributed.forward(fields).data.tobytes() == sht_forward(fields, table).data.tobytes()
    inverse_equal = distributed.inverse(coeffs).tobytes() == sht_inverse(coeffs, table).tobytes()
    equal = forward_equal and inverse_equal
    return CheckResult("bitwise-parallel", equal, 0.0 if equal else 1.0, 0.0)


@instrumented("sht_verify")
def run_verification(grid: SphericalGrid, lmax: Optional[int] = None, mmax: Optional[int] = None,
                     topology: Optional[WorkerTopology] = None, n_fields: int = 8,
                     seed: int = 0) -> VerificationReport:
    """Runs every check; ResolutionError propagates when lmax exceeds the grid."""
    topology = topology or WorkerTopology()
    table = build_tables(grid, lmax, mmax)
    rng = np.random.default_rng(seed)
    report = VerificationReport(grid=grid.spec, lmax=table.lmax, mmax=table.mmax, workers=topology.label())
    report.checks = [
        check_round_trip(grid, table, rng, n_fields),
        check_parseval(grid, table, rng, n_fields),
        check_orthonormality(grid, table),
        check_adjoints(grid, table, rng),
        check_bitwise_parallel(grid, table, topology, rng, n_fields),
    ]
    report.bitwise_equal = report.checks[-1].passed
    for check in report.checks:
        log = logger.info if check.passed else logger.warning
        log("Check finished", check=check.name, passed=check.passed, error=check.error)
    return report


def parse_sizes(text: str) -> List[Tuple[int, int]]:
    """`32x64,64x128` → [(32, 64), (64, 128)]."""
    sizes = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            nlat, nlon = (int(part) for part in item.lower().split("x"))
        except ValueError:
            raise ConfigError(f"Benchmark sizes must look like HxW[,HxW...], got '{item}'")
        sizes.append((nlat, nlon))
    if not sizes:
        raise ConfigError("No benchmark sizes given")
    return sizes


@instrumented("sht_bench")
def run_benchmark(sizes: Sequence[Tuple[int, int]], topology: Optional[WorkerTopology] = None,
                  kind: GridKind = GridKind.GAUSS_LEGENDRE, repeats: int = 3, n_fields: int = 1,
                  seed: int = 0) -> List[list]:
    """Mean milliseconds per forward and inverse transform for each size."""
    topology = topology or WorkerTopology()
    rng = np.random.default_rng(seed)
    rows = []
    for nlat, nlon in sizes:
        grid = build_grid(kind, nlat, nlon)
        transform = DistributedSHT(grid, topology=topology)
        fields = rng.standard_normal((n_fields,) + grid.shape)
        coeffs = transform.forward(fields)

        start = time.perf_counter()
        for _ in range(repeats):
            transform.forward(fields)
        forward_ms = (time.perf_counter() - start) * 1e3 / repeats
        start = time.perf_counter()
        for _ in range(repeats):
            transform.inverse(coeffs)
        inverse_ms = (time.perf_counter() - start) * 1e3 / repeats

        label = f"{nlat}x{nlon}"
        rows.append([label, topology.label(), "forward", f"{forward_ms:.3f}"])
        rows.append([label, topology.label(), "inverse", f"{inverse_ms:.3f}"])
        logger.info("Benchmark size finished", size=label, workers=topology.label(),
                    forward_ms=forward_ms, inverse_ms=inverse_ms)
    return rows
