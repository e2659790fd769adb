"""Pseudo-spectral shallow-water solver in vorticity-divergence form.

Conventions: θ is colatitude (θ = 0 at the north pole), λ longitude, e_θ
points south. The Coriolis parameter is f = 2Ω·cosθ, i.e. 2Ω·sin(latitude).
Φ is the total layer geopotential g·h. With η = ζ + f the absolute vorticity
and V the horizontal velocity the prognostic equations are

    ∂ζ/∂t = −∇·(ηV)
    ∂D/∂t = k·∇×(ηV) − ∇²(Φ + |V|²/2)
    ∂Φ/∂t = −∇·(ΦV)

plus hyperdiffusion −ν(−∇²)^q on every variable. Products are formed on the
grid and projected back to a triangular truncation T that satisfies the
2/3 rule, so quadratic terms are alias-free on Gauss grids.
"""

import warnings
from collections import deque
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.constants import (
    SWE_DEPTH_STD,
    SWE_MEAN_DEPTH,
    SWE_SPECTRUM_L0,
    SWE_VELOCITY_STD_FACTOR,
)
from src.exceptions import GridSizeError, NaNDetectedError, StabilityWarning
from src.models.grid import SphericalGrid, sphere_measure_weights
from src.models.legendre import (
    build_tables,
    degree_major,
    legendre_analysis,
    legendre_synthesis,
    legendre_theta_derivative,
    ring_major,
)
from src.models.spectral import SpectralCoeffs, degree_eigenvalues, triangular_mask
from src.models.swe_state import SWEState
from src.schemas.solver_schemas import SWEParams
from src.services.sht_service import irfft_lon, rfft_lon
from src.utils.logging import get_logger
from src.utils.prometheus import prometheus_metrics

logger = get_logger(__name__)

AB_COEFFICIENTS = {
    1: (1.0,),
    2: (1.5, -0.5),
    3: (23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0),
}
AB_SCHEMES = {1: "euler", 2: "ab2", 3: "ab3"}


def swe_truncation(grid: SphericalGrid) -> int:
    """Largest T with alias-free quadratic products on `grid`."""
    truncation = min((grid.nlon - 1) // 3, (2 * grid.nlat - 1) // 3, grid.max_degree, grid.max_order)
    if truncation < 1:
        raise GridSizeError(grid.nlat, grid.nlon, "too coarse for a dealiased shallow-water truncation")
    return truncation


def hyperdiffusion_coefficient(params: SWEParams, truncation: int) -> float:
    if params.hyperdiffusion is not None:
        return params.hyperdiffusion
    rate = 1.0 / (params.hyperdiffusion_efold_hours * 3600.0)
    scale = params.radius ** 2 / (truncation * (truncation + 1.0))
    return rate * scale ** params.hyperdiffusion_order


def adams_bashforth_update(y: np.ndarray, tendencies: Sequence[np.ndarray], dt: float) -> np.ndarray:
    """y + dt·Σ c_k f_{n−k}; `tendencies` is newest first and its length picks the order."""
    coefficients = AB_COEFFICIENTS[len(tendencies)]
    update = sum(c * f for c, f in zip(coefficients, tendencies))
    return y + dt * update


class ShallowWaterSolver:
    """Single-threaded solver bound to one grid; keeps the multistep history between calls."""

    def __init__(self, grid: SphericalGrid, params: Optional[SWEParams] = None):
        self.grid = grid
        self.params = params or SWEParams()
        self.truncation = swe_truncation(grid)
        T = self.truncation
        self.table = build_tables(grid, T, T)

        theta = grid.colatitudes
        sin_theta = np.sin(theta)
        weights = grid.quadrature_weights
        p = self.table.inverse_weights
        dp = legendre_theta_derivative(T, T, theta)

        self._synth_p = self.table.synthesis_kernel
        self._synth_p_sin = degree_major(p / sin_theta)
        self._synth_dp = degree_major(dp)
        self._analysis_p = self.table.analysis_kernel
        self._analysis_p_sin = ring_major(p * weights / sin_theta)
        self._analysis_dp = ring_major(dp * weights)

        radius = self.params.radius
        self._im = 1j * np.arange(T + 1)
        self.eigenvalues = degree_eigenvalues(T, radius)[:, None]
        inverse = np.zeros_like(self.eigenvalues)
        inverse[1:] = 1.0 / self.eigenvalues[1:]
        self._inverse_eigenvalues = inverse

        self.hyperdiffusion = hyperdiffusion_coefficient(self.params, T)
        self._damping = -self.hyperdiffusion * (-self.eigenvalues) ** self.params.hyperdiffusion_order
        self.coriolis = (2.0 * self.params.angular_velocity * np.cos(theta))[:, None]
        self.area_weights = sphere_measure_weights(grid)
        # Smallest wavelength the triangular truncation resolves; isotropic, so polar ring
        # clustering does not shrink it.
        self.dx_min = radius * min(np.pi / grid.nlat, 2.0 * np.pi / grid.nlon)
        self.max_speed = 0.0
        self._history: deque = deque(maxlen=2)

        logger.info(
            "Shallow-water solver ready",
            grid=grid.spec.label(),
            truncation=T,
            dt=self.params.dt,
            hyperdiffusion=self.hyperdiffusion,
        )

    # ------------------------------------------------------------------ transforms

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return irfft_lon(legendre_synthesis(self._synth_p, coeffs), self.grid.nlon)

    def analyze(self, field: np.ndarray) -> np.ndarray:
        return legendre_analysis(self._analysis_p, rfft_lon(field, self.truncation))

    def velocities_from(self, vorticity: np.ndarray, divergence: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(u_λ, u_θ) on the grid from spectral ζ and D through ψ and χ."""
        psi = vorticity * self._inverse_eigenvalues
        chi = divergence * self._inverse_eigenvalues
        a = self.params.radius
        chi_p = legendre_synthesis(self._synth_p_sin, chi)
        chi_d = legendre_synthesis(self._synth_dp, chi)
        psi_p = legendre_synthesis(self._synth_p_sin, psi)
        psi_d = legendre_synthesis(self._synth_dp, psi)
        u_lambda = irfft_lon((self._im * chi_p + psi_d) / a, self.grid.nlon)
        u_theta = irfft_lon((chi_d - self._im * psi_p) / a, self.grid.nlon)
        return u_lambda, u_theta

    def divergence_of(self, a_lambda: np.ndarray, a_theta: np.ndarray) -> np.ndarray:
        """Spectral ∇·A, projected by parts against the quadrature."""
        T = self.truncation
        spec_lambda, spec_theta = rfft_lon(a_lambda, T), rfft_lon(a_theta, T)
        return -(
            legendre_analysis(self._analysis_dp, spec_theta)
            - self._im * legendre_analysis(self._analysis_p_sin, spec_lambda)
        ) / self.params.radius

    def curl_of(self, a_lambda: np.ndarray, a_theta: np.ndarray) -> np.ndarray:
        """Spectral k·∇×A."""
        T = self.truncation
        spec_lambda, spec_theta = rfft_lon(a_lambda, T), rfft_lon(a_theta, T)
        return -(
            legendre_analysis(self._analysis_dp, spec_lambda)
            + self._im * legendre_analysis(self._analysis_p_sin, spec_theta)
        ) / self.params.radius

    # ------------------------------------------------------------------ dynamics

    def tendency(self, state: SWEState) -> np.ndarray:
        """Time derivatives stacked as [Φ̂, ζ̂, D̂]."""
        y = state.stacked()
        if not np.all(np.isfinite(y)):
            raise NaNDetectedError("shallow-water state")

        phi = self.synthesize(y[0])
        zeta = self.synthesize(y[1])
        u_lambda, u_theta = self.velocities_from(y[1], y[2])
        speed_sq = u_lambda * u_lambda + u_theta * u_theta
        self.max_speed = float(np.sqrt(np.max(speed_sq)))

        eta = zeta + self.coriolis
        d_zeta = -self.divergence_of(eta * u_lambda, eta * u_theta)
        energy = y[0] + self.analyze(0.5 * speed_sq)
        d_div = self.curl_of(eta * u_lambda, eta * u_theta) - self.eigenvalues * energy
        d_phi = -self.divergence_of(phi * u_lambda, phi * u_theta)

        out = np.stack([d_phi, d_zeta, d_div]) + self._damping * y
        if not np.all(np.isfinite(out)):
            raise NaNDetectedError("shallow-water tendency")
        return out

    def reset_history(self):
        self._history.clear()

    def cfl_number(self) -> float:
        return self.max_speed * self.params.dt / self.dx_min

    def step_ab3(self, state: SWEState) -> SWEState:
        """One third-order Adams-Bashforth step; the first two calls bootstrap with Euler then AB2."""
        current = self.tendency(state)
        tendencies = [current] + list(self._history)
        updated = adams_bashforth_update(state.stacked(), tendencies, self.params.dt)
        self._history.appendleft(current)

        cfl = self.cfl_number()
        if cfl > 1.0:
            logger.warning("CFL heuristic exceeded", cfl=cfl, max_speed=self.max_speed, dt=self.params.dt)
            warnings.warn(f"CFL number {cfl:.2f} exceeds 1 (max |V| = {self.max_speed:.1f} m/s)", StabilityWarning)
        prometheus_metrics.record_solver_step(AB_SCHEMES[len(tendencies)])
        return SWEState.from_stacked(state.time + self.params.dt, updated)

    def run(self, state: SWEState, n_steps: int) -> SWEState:
        for _ in range(n_steps):
            state = self.step_ab3(state)
        return state

    # ------------------------------------------------------------------ grid views and diagnostics

    def to_grid(self, state: SWEState) -> np.ndarray:
        """Grid fields [Φ, ζ, D] of shape (3, nlat, nlon), cached on the state."""
        cached = state.cache.get("grid")
        if cached is None:
            cached = self.synthesize(state.stacked())
            state.cache["grid"] = cached
        return cached

    def velocities(self, state: SWEState) -> Tuple[np.ndarray, np.ndarray]:
        return self.velocities_from(state.vorticity.data, state.divergence.data)

    def from_grid(self, time: float, geopotential: np.ndarray, u_lambda: np.ndarray,
                  u_theta: np.ndarray) -> SWEState:
        """Spectral state from grid Φ and velocity, truncated to T."""
        stacked = np.stack([
            self.analyze(geopotential),
            self.curl_of(u_lambda, u_theta),
            self.divergence_of(u_lambda, u_theta),
        ])
        return SWEState.from_stacked(time, stacked)

    def mass(self, state: SWEState) -> float:
        """∫Φ dΩ over the unit sphere."""
        return float(np.sqrt(4.0 * np.pi) * state.geopotential.data[0, 0].real)

    def energy(self, state: SWEState) -> float:
        """½∫(Φ|V|² + Φ²) dΩ over the unit sphere."""
        phi = self.to_grid(state)[0]
        u_lambda, u_theta = self.velocities(state)
        density = phi * (u_lambda ** 2 + u_theta ** 2) + phi ** 2
        return float(0.5 * np.sum(density * self.area_weights))


def _random_field(rng: np.random.Generator, truncation: int) -> np.ndarray:
    """Zero-mean Gaussian random field coefficients with spectrum (1 + (l/l₀)⁴)⁻¹."""
    shape = (truncation + 1, truncation + 1)
    l = np.arange(truncation + 1, dtype=np.float64)
    amplitude = np.sqrt(1.0 / (1.0 + (l / SWE_SPECTRUM_L0) ** 4))[:, None]
    data = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * amplitude
    data *= triangular_mask(truncation, truncation)
    data[:, 0] = data[:, 0].real
    data[0, 0] = 0.0
    return data


def _spectral_std(data: np.ndarray) -> float:
    """Area-weighted standard deviation of the field with coefficients `data`."""
    coeffs = SpectralCoeffs(data.shape[-2] - 1, data.shape[-1] - 1, data)
    return float(np.sqrt(coeffs.power_spectrum()[1:].sum() / (4.0 * np.pi)))


def random_initial_condition(seed: Union[int, Sequence[int]], grid: SphericalGrid, params: Optional[SWEParams] = None,
                             solver: Optional[ShallowWaterSolver] = None) -> SWEState:
    """Gaussian-random-field state: mean Φ = 10³·g, std 120·g, velocity components with std 0.2·√Φ_avg."""
    params = params or SWEParams()
    solver = solver or ShallowWaterSolver(grid, params)
    rng = np.random.default_rng(seed)
    T = solver.truncation

    mean_geopotential = SWE_MEAN_DEPTH * params.gravity
    phi = _random_field(rng, T)
    phi *= SWE_DEPTH_STD * params.gravity / _spectral_std(phi)
    phi[0, 0] = np.sqrt(4.0 * np.pi) * mean_geopotential

    vorticity = solver.eigenvalues * _random_field(rng, T)
    divergence = solver.eigenvalues * _random_field(rng, T)
    u_lambda, u_theta = solver.velocities_from(vorticity, divergence)
    weights = solver.area_weights / solver.area_weights.sum()
    variances = [np.sum(weights * (c - np.sum(weights * c)) ** 2) for c in (u_lambda, u_theta)]
    target = SWE_VELOCITY_STD_FACTOR * np.sqrt(mean_geopotential)
    scale = target / np.sqrt(0.5 * (variances[0] + variances[1]))

    return SWEState.from_stacked(0.0, np.stack([phi, vorticity * scale, divergence * scale]))


def balanced_state(grid: SphericalGrid, params: Optional[SWEParams] = None, velocity: float = 20.0,
                   mean_geopotential: Optional[float] = None,
                   solver: Optional[ShallowWaterSolver] = None) -> SWEState:
    """Solid-body zonal flow u_λ = U·sinθ with the geopotential that balances it exactly.

    Φ = Φ₀ − (aΩU + U²/2)·cos²θ.
    """
    params = params or SWEParams()
    solver = solver or ShallowWaterSolver(grid, params)
    a, omega, U = params.radius, params.angular_velocity, velocity
    cos_theta = np.cos(grid.colatitudes)[:, None] * np.ones((1, grid.nlon))
    phi0 = SWE_MEAN_DEPTH * params.gravity if mean_geopotential is None else mean_geopotential

    phi = phi0 - (a * omega * U + 0.5 * U * U) * cos_theta ** 2
    zeta = 2.0 * U * cos_theta / a
    stacked = np.stack([
        solver.analyze(phi),
        solver.analyze(zeta),
        np.zeros((solver.truncation + 1, solver.truncation + 1), dtype=np.complex128),
    ])
    return SWEState.from_stacked(0.0, stacked)
