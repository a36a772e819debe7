"""
Optical distribution network: symmetric split-step Fourier propagation
through lossy, dispersive, Kerr-nonlinear fiber, EDFA amplification with
ASE noise, and a saturable semiconductor optical amplifier.

The split-step solver integrates

    dA/dz = -(alpha/2) A - 1j (beta2/2) d2A/dt2 + (beta3/6) d3A/dt3
            + 1j gamma |A|^2 A

on the whole simulation band, so self- and cross-phase modulation and
four-wave mixing emerge from total-field propagation rather than from
coupled per-channel equations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as C_LIGHT
from scipy.constants import h as H_PLANCK

from .exceptions import AliasingError, ConfigurationError, SimulationError
from .signals import ComplexEnvelope, RngSeed, fft, ifft, mean_power

try:
    from numba import njit, prange

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


def dispersion_to_beta2(d_ps_nm_km: float, wavelength_m: float) -> float:
    """Convert dispersion D (ps/nm/km) to beta2 (ps^2/km) at a wavelength."""
    d_si = d_ps_nm_km * 1e-6  # s/m^2 per km
    beta2_s2_km = -d_si * wavelength_m ** 2 / (2.0 * np.pi * C_LIGHT)
    return beta2_s2_km * 1e24


@dataclass(frozen=True)
class FiberParams:
    """Single span of standard fiber (per-km coefficients)."""

    length_km: float
    alpha_db_per_km: float = 0.2
    beta2_ps2_per_km: float = -21.2
    beta3_ps3_per_km: float = 0.0
    gamma_per_w_km: float = 1.3

    def __post_init__(self):
        if self.length_km < 0:
            raise ConfigurationError("length_km must be >= 0")
        if self.alpha_db_per_km < 0:
            raise ConfigurationError("alpha_db_per_km must be >= 0")
        if self.gamma_per_w_km < 0:
            raise ConfigurationError("gamma_per_w_km must be >= 0")


@dataclass(frozen=True)
class SsfmConfig:
    """Split-step controls.

    The step is ``min(max_step_km, h)`` with ``gamma * P_peak * h <=
    max_nl_phase_rad``, snapped down to ``max_step_km / 2**k`` so the linear
    operator can be cached between steps.
    """

    max_step_km: float = 1.0
    max_nl_phase_rad: float = 0.003
    scheme: str = "symmetric"
    max_steps: int = 10_000_000
    strict_aliasing: bool = False
    edge_guard_db: float = 40.0

    def __post_init__(self):
        if self.max_step_km <= 0 or self.max_nl_phase_rad <= 0:
            raise ConfigurationError("step bounds must be positive")
        if self.scheme != "symmetric":
            raise ConfigurationError(f"unsupported scheme {self.scheme!r}")


if _HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _kerr_rotate(a, coeff):
        """In-place A *= exp(1j*coeff*|A|^2); returns peak power."""
        peak = 0.0
        for i in prange(a.size):
            v = a[i]
            p = v.real * v.real + v.imag * v.imag
            peak = max(peak, p)
            phi = coeff * p
            cr = math.cos(phi)
            si = math.sin(phi)
            a[i] = complex(v.real * cr - v.imag * si, v.real * si + v.imag * cr)
        return peak

else:  # pragma: no cover

    def _kerr_rotate(a, coeff):
        p = a.real ** 2 + a.imag ** 2
        a *= np.exp(1j * coeff * p)
        return float(p.max())


def _peak_power(a: np.ndarray) -> float:
    return float(np.max(a.real ** 2 + a.imag ** 2))


def _edge_fraction_db(x_freq: np.ndarray, guard_bins: int) -> float:
    """Peak spectral magnitude in the outer guard band relative to the global peak, in dB."""
    mag = np.abs(x_freq)
    peak = mag.max()
    if peak == 0.0:
        return -np.inf
    n = mag.size
    lo = n // 2 - guard_bins
    hi = n // 2 + guard_bins
    edge = mag[lo:hi].max()  # fftfreq layout: band edge sits at the array middle
    if edge == 0.0:
        return -np.inf
    return 20.0 * np.log10(edge / peak)


def propagate_ssfm(env: ComplexEnvelope, fiber: FiberParams, cfg: SsfmConfig,
                   stats: dict | None = None) -> ComplexEnvelope:
    """Propagate the field through one fiber span by symmetric split-step.

    Linear half-steps (loss, beta2, beta3) are applied in the frequency
    domain; the full Kerr step in the time domain.  Adjacent half-steps are
    merged so each step costs one FFT/IFFT pair.  Deterministic.
    """
    length = fiber.length_km
    if length == 0.0 or (
        fiber.alpha_db_per_km == 0.0
        and fiber.beta2_ps2_per_km == 0.0
        and fiber.beta3_ps3_per_km == 0.0
        and fiber.gamma_per_w_km == 0.0
    ):
        return env
    a = env.samples.copy()
    n = a.size
    fs = env.sample_rate_hz
    gamma = fiber.gamma_per_w_km
    alpha_np = fiber.alpha_db_per_km * np.log(10.0) / 10.0

    # Upfront cost guard against absurd step bounds.
    if gamma > 0:
        p0 = _peak_power(a)
        l_eff = (1.0 - np.exp(-alpha_np * length)) / alpha_np if alpha_np > 0 else length
        est = gamma * p0 * l_eff / cfg.max_nl_phase_rad + length / cfg.max_step_km
        if est > cfg.max_steps:
            raise ConfigurationError(
                f"estimated {est:.3g} split-steps exceeds the {cfg.max_steps} guard"
            )

    omega = 2.0 * np.pi * np.fft.fftfreq(n, 1.0 / fs)
    beta2 = fiber.beta2_ps2_per_km * 1e-24  # s^2/km
    beta3 = fiber.beta3_ps3_per_km * 1e-36  # s^3/km
    # Exponent rate per km; exp(rate*h) advances the linear sub-equation by h km.
    lin_rate = (-alpha_np / 2.0) + 0.5j * beta2 * omega ** 2 - (1j / 6.0) * beta3 * omega ** 3

    guard_bins = max(1, int(0.01 * n))

    def check_edges(x_freq, where):
        edge_db = _edge_fraction_db(x_freq, guard_bins)
        if edge_db > -cfg.edge_guard_db:
            msg = (f"spectral energy within {-edge_db:.1f} dB of peak at the band edge "
                   f"({where}); increase the sample rate")
            if cfg.strict_aliasing:
                raise AliasingError(msg)
            warnings.warn(msg, RuntimeWarning, stacklevel=3)

    def step_size(peak_w, remaining):
        h = min(cfg.max_step_km, remaining)
        if gamma > 0 and peak_w > 0:
            h_nl = cfg.max_nl_phase_rad / (gamma * peak_w)
            if h_nl < h:
                # Snap down to max_step/2^k so the cached operator is reused.
                k = math.ceil(math.log2(cfg.max_step_km / h_nl))
                h = min(cfg.max_step_km / (2 ** k), remaining)
        return h

    lin_cache: dict[float, np.ndarray] = {}

    def lin_op(h):
        op = lin_cache.get(h)
        if op is None:
            op = np.exp(lin_rate * h)
            lin_cache[h] = op
            if len(lin_cache) > 48:
                lin_cache.clear()
                lin_cache[h] = op
        return op

    x = fft(a)
    check_edges(x, "input")

    if gamma == 0.0 or not a.any():
        # Purely linear span: the frequency-domain solution is exact in one step.
        x *= lin_op(length)
        check_edges(x, "output")
        if stats is not None:
            stats["steps"] = stats.get("steps", 0) + 1
        return ComplexEnvelope(ifft(x), fs, env.center_frequency_hz)

    steps = 0
    z = 0.0
    h = step_size(_peak_power(a), length)
    x *= lin_op(h / 2.0)
    a = ifft(x)
    while True:
        peak = _kerr_rotate(a, gamma * h)
        z += h
        steps += 1
        if steps > cfg.max_steps:
            raise SimulationError(f"split-step count exceeded {cfg.max_steps}")
        remaining = length - z
        x = fft(a)
        if remaining <= 1e-12:
            x *= lin_op(h / 2.0)
            check_edges(x, "output")
            a = ifft(x)
            break
        h_next = step_size(peak, remaining)
        x *= lin_op((h + h_next) / 2.0)
        a = ifft(x)
        h = h_next
    if stats is not None:
        stats["steps"] = stats.get("steps", 0) + steps
    return ComplexEnvelope(a, fs, env.center_frequency_hz)


@dataclass(frozen=True)
class EdfaParams:
    """Flat-gain amplifier with white ASE over the simulation band."""

    gain_db: float
    noise_figure_db: float = 5.0
    center_hz: float = 194.164e12

    def __post_init__(self):
        if self.noise_figure_db != 0.0 and self.noise_figure_db < 3.0:
            raise ConfigurationError("noise_figure_db must be >= 3 dB (or 0 to disable ASE)")
        if self.center_hz <= 0:
            raise ConfigurationError("center_hz must be > 0")


def edfa_amplify(env: ComplexEnvelope, p: EdfaParams, seed: RngSeed) -> ComplexEnvelope:
    """Apply field gain and add circular complex Gaussian ASE.

    The ASE density per polarization is ``n_sp (G - 1) h nu`` with
    ``n_sp = 10^(NF/10)/2`` (high-gain approximation), flat over the band.
    """
    g_field = 10.0 ** (p.gain_db / 20.0)
    out = env.samples * g_field
    if p.noise_figure_db > 0.0:
        g = 10.0 ** (p.gain_db / 10.0)
        n_sp = 10.0 ** (p.noise_figure_db / 10.0) / 2.0
        s_ase = n_sp * max(g - 1.0, 0.0) * H_PLANCK * p.center_hz  # W/Hz
        var = s_ase * env.sample_rate_hz
        rng = seed.rng()
        noise = rng.normal(0.0, np.sqrt(var / 2.0), env.n) + 1j * rng.normal(
            0.0, np.sqrt(var / 2.0), env.n
        )
        out = out + noise
    return ComplexEnvelope(out, env.sample_rate_hz, env.center_frequency_hz)


@dataclass(frozen=True)
class SoaParams:
    """Reservoir-model semiconductor optical amplifier."""

    small_signal_gain_db: float = 20.0
    saturation_energy_j: float = 5e-12
    carrier_lifetime_s: float = 200e-12
    linewidth_enhancement: float = 5.0

    def __post_init__(self):
        if self.saturation_energy_j <= 0 or self.carrier_lifetime_s <= 0:
            raise ConfigurationError("saturation energy and carrier lifetime must be > 0")
        if self.linewidth_enhancement < 0:
            raise ConfigurationError("linewidth_enhancement must be >= 0")


if _HAVE_NUMBA:

    @njit(cache=True)
    def _soa_integrate(power, dt, h0, tau, esat, h_init):
        h = np.empty(power.size)
        hv = h_init
        for i in range(power.size):
            h[i] = hv
            dh = (h0 - hv) / tau - (math.exp(hv) - 1.0) * power[i] / esat
            hv += dt * dh
        return h

else:  # pragma: no cover

    def _soa_integrate(power, dt, h0, tau, esat, h_init):
        h = np.empty(power.size)
        hv = h_init
        for i in range(power.size):
            h[i] = hv
            hv += dt * ((h0 - hv) / tau - (math.exp(hv) - 1.0) * power[i] / esat)
        return h


def soa_steady_state_h(p: SoaParams, power_w: float) -> float:
    """Integrated gain h solving the CW balance (h0-h)/tau = (e^h - 1) P / E_sat."""
    h0 = p.small_signal_gain_db * np.log(10.0) / 10.0
    if power_w <= 0.0:
        return h0

    def f(h):
        return h0 - h - (np.exp(h) - 1.0) * power_w * p.carrier_lifetime_s / p.saturation_energy_j

    lo, hi = 0.0, h0
    if f(lo) < 0 or f(hi) > 0:
        raise SimulationError("SOA steady-state initialization failed to bracket a root")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def soa_amplify(env: ComplexEnvelope, p: SoaParams) -> ComplexEnvelope:
    """Saturable SOA: integrate the reservoir gain driven by |A(t)|^2.

    Output field is ``A * exp(h/2) * exp(-1j * alpha_H * h / 2)``; the gain
    state starts from the steady state for the leading-edge mean power.
    """
    dt = 1.0 / env.sample_rate_hz
    if dt > p.carrier_lifetime_s / 10.0:
        warnings.warn(
            "sample interval exceeds carrier_lifetime/10; SOA dynamics under-resolved",
            RuntimeWarning,
        )
    power = np.abs(env.samples) ** 2
    if not power.any():
        return env
    lead = power[: max(1, min(power.size, int(5 * p.carrier_lifetime_s / dt)))]
    h_init = soa_steady_state_h(p, float(lead.mean()))
    h0 = p.small_signal_gain_db * np.log(10.0) / 10.0
    h = _soa_integrate(power, dt, h0, p.carrier_lifetime_s, p.saturation_energy_j, h_init)
    out = env.samples * np.exp(0.5 * h - 0.5j * p.linewidth_enhancement * h)
    return ComplexEnvelope(out, env.sample_rate_hz, env.center_frequency_hz)


def link_propagate(env: ComplexEnvelope, plan, cfg: SsfmConfig, seed: RngSeed,
                   power_log: list | None = None, stats: dict | None = None) -> ComplexEnvelope:
    """Run the field through an ordered list of fiber/EDFA/SOA elements.

    ``plan`` holds FiberParams, EdfaParams, or SoaParams values.  EDFA seeds
    are derived per element index so the plan is order-deterministic.  Errors
    are re-raised with the failing element index attached.
    """
    plan = list(plan)
    if not plan:
        raise ConfigurationError("link plan must contain at least one element")
    out = env
    for idx, element in enumerate(plan):
        p_in = mean_power(out)
        try:
            if isinstance(element, FiberParams):
                out = propagate_ssfm(out, element, cfg, stats=stats)
                kind = "fiber"
            elif isinstance(element, EdfaParams):
                out = edfa_amplify(out, element, seed.derive("edfa", idx))
                kind = "edfa"
            elif isinstance(element, SoaParams):
                out = soa_amplify(out, element)
                kind = "soa"
            else:
                raise ConfigurationError(f"unknown element type {type(element).__name__}")
        except SimulationError as exc:
            raise type(exc)(f"element {idx} ({type(element).__name__}): {exc}") from exc
        if power_log is not None:
            power_log.append(
                (idx, kind, _w_to_dbm(p_in), _w_to_dbm(mean_power(out)))
            )
    return out


def _w_to_dbm(p_w: float) -> float:
    return 10.0 * np.log10(max(p_w, 1e-30) * 1e3)
