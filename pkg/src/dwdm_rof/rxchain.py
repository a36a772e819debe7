"""
Receiver chain: DWDM demultiplexing, PIN photodetection with shot and
thermal noise, quadrature demodulation, matched root-raised-cosine
filtering with symbol sampling, data-aided calibration, and QAM decision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as ssig
from scipy.constants import e as Q_ELECTRON

from .exceptions import ConfigurationError
from .signals import BitStream, ComplexEnvelope, RngSeed, SymbolStream, fft, ifft
from .txchain import PulseShaper, QamConstellation


@dataclass(frozen=True)
class DemuxFilter:
    """Gaussian-shaped optical bandpass used to extract one WDM channel."""

    center_hz: float
    bandwidth_3db_hz: float
    order: int = 2
    grid_spacing_hz: float | None = None

    def __post_init__(self):
        if self.bandwidth_3db_hz <= 0:
            raise ConfigurationError("bandwidth_3db_hz must be > 0")
        if self.order < 1:
            raise ConfigurationError("order must be >= 1")
        if self.grid_spacing_hz is not None and self.bandwidth_3db_hz >= self.grid_spacing_hz:
            raise ConfigurationError("demux bandwidth must be below the grid spacing")


def dwdm_demux(total: ComplexEnvelope, f: DemuxFilter) -> ComplexEnvelope:
    """Bandpass one channel out of the total field and shift it to baseband.

    The filter power response is a super-Gaussian of the configured order;
    output center_frequency_hz is the channel's absolute frequency.
    """
    offset = f.center_hz - total.center_frequency_hz
    if abs(offset) >= total.sample_rate_hz / 2:
        raise ConfigurationError("demux center lies outside the simulated band")
    freqs = np.fft.fftfreq(total.n, 1.0 / total.sample_rate_hz)
    u = (freqs - offset) / (f.bandwidth_3db_hz / 2.0)
    h = np.exp(-(np.log(2.0) / 2.0) * u ** (2 * f.order))
    filtered = ifft(fft(total.samples) * h)
    down = filtered * np.exp(-2j * np.pi * offset * total.time_s())
    return ComplexEnvelope(down, total.sample_rate_hz, f.center_hz)


@dataclass(frozen=True)
class PinParams:
    """Square-law photodiode with Gaussian shot/thermal noise models."""

    responsivity_a_per_w: float = 0.9
    thermal_noise_a_per_sqrt_hz: float = 10e-12
    dark_current_a: float = 1e-9
    shot_noise_enabled: bool = True

    def __post_init__(self):
        if self.responsivity_a_per_w <= 0:
            raise ConfigurationError("responsivity must be > 0")
        if self.thermal_noise_a_per_sqrt_hz < 0 or self.dark_current_a < 0:
            raise ConfigurationError("noise parameters must be >= 0")


def pin_detect(env: ComplexEnvelope, p: PinParams, seed: RngSeed) -> ComplexEnvelope:
    """Detected current i(t) = R|E|^2 + I_dark + shot + thermal.

    Shot noise is Gaussian-approximated with per-sample variance
    ``2 q (R P(t) + I_dark) B_sim`` and the thermal density integrates over
    the same ``B_sim = sample_rate / 2`` Nyquist bandwidth.
    """
    b_sim = env.sample_rate_hz / 2.0
    current = p.responsivity_a_per_w * np.abs(env.samples) ** 2 + p.dark_current_a
    rng = seed.rng()
    if p.shot_noise_enabled:
        var = 2.0 * Q_ELECTRON * np.maximum(current, 0.0) * b_sim
        current = current + rng.normal(0.0, 1.0, env.n) * np.sqrt(var)
    if p.thermal_noise_a_per_sqrt_hz > 0:
        sigma = p.thermal_noise_a_per_sqrt_hz * np.sqrt(b_sim)
        current = current + rng.normal(0.0, sigma, env.n)
    return ComplexEnvelope(current.astype(np.complex128), env.sample_rate_hz, 0.0)


def design_lowpass(cutoff_hz: float, sample_rate_hz: float, numtaps: int = 801) -> np.ndarray:
    """Kaiser-window FIR low-pass (80 dB stopband), odd length, zero delay in 'same' mode."""
    if numtaps % 2 == 0:
        numtaps += 1
    return ssig.firwin(numtaps, cutoff_hz, window=("kaiser", 8.6), fs=sample_rate_hz)


def quadrature_demodulate(current: ComplexEnvelope, rf_hz: float,
                          cutoff_hz: float, numtaps: int = 801) -> ComplexEnvelope:
    """Coherent RF downconversion: I = 2 LPF(s cos), Q = -2 LPF(s sin).

    ``cutoff_hz`` should be the occupied half-bandwidth (1+rolloff)*R_s/2
    plus a ~20% guard; rf_hz must match the transmit convention.
    """
    fs = current.sample_rate_hz
    if not 0 < rf_hz < fs / 2:
        raise ConfigurationError("rf_hz must lie inside (0, Nyquist)")
    if not 0 < cutoff_hz < fs / 2:
        raise ConfigurationError("cutoff_hz must lie inside (0, Nyquist)")
    s = current.samples.real
    wt = 2.0 * np.pi * rf_hz * current.time_s()
    taps = design_lowpass(cutoff_hz, fs, numtaps)
    mixed = s * np.exp(-1j * wt)  # I + jQ sit in 2*Re/-2*Im of this product
    base = ssig.fftconvolve(mixed, taps, mode="same")
    return ComplexEnvelope(2.0 * base, fs, 0.0)


@dataclass(frozen=True)
class RxCalibration:
    """Data-aided complex gain and integer timing correction.

    ``timing_offset_samples`` is expressed in samples of whatever stream it
    is applied to (baseband samples for `matched_filter_sample`, symbols for
    the stream returned by `estimate_calibration`).
    """

    scalar: complex = 1.0 + 0.0j
    timing_offset_samples: int = 0

    def __post_init__(self):
        if not np.isfinite(self.scalar):
            raise ConfigurationError("calibration scalar must be finite")


def matched_filter_sample(baseband: ComplexEnvelope, p: PulseShaper,
                          cal: RxCalibration = RxCalibration()) -> SymbolStream:
    """Matched-filter with the TX taps and decimate at symbol instants.

    Sampling honors the TX group delay (full-convolution shaping) plus
    ``cal.timing_offset_samples``; the calibration scalar is applied to the
    recovered symbols.
    """
    sps = p.samples_per_symbol
    if baseband.n < p.taps.size:
        raise ConfigurationError("stream shorter than the matched-filter span")
    y = ssig.fftconvolve(baseband.samples, p.taps, mode="same")
    start = p.group_delay_samples + int(cal.timing_offset_samples)
    if start < 0 or start >= baseband.n:
        raise ConfigurationError("timing offset places the first symbol outside the stream")
    idx = np.arange(start, baseband.n, sps)
    symbols = cal.scalar * y[idx]
    return SymbolStream(symbols, baseband.sample_rate_hz / sps, 1)


def estimate_calibration(rx_raw: SymbolStream, tx_known: SymbolStream) -> RxCalibration:
    """Genie calibration against the known transmit sequence.

    Timing is the argmax of the cross-correlation magnitude (in symbol
    samples, positive = rx delayed); the scalar is the least-squares complex
    coefficient minimizing ``sum |c*rx - tx|^2`` over the aligned overlap.
    """
    rx = rx_raw.symbols
    tx = tx_known.symbols
    n = min(rx.size, tx.size)
    if n < 64:
        raise ConfigurationError("calibration needs at least 64 symbols")
    rx = rx[:n]
    tx = tx[:n]
    corr = ssig.fftconvolve(rx, np.conj(tx[::-1]), mode="full")
    mags = np.abs(corr)
    best = int(np.argmax(mags))
    if mags.size > 1:
        second = float(np.partition(mags, -2)[-2])
        if second >= 0.99 * mags[best]:
            raise ConfigurationError("ambiguous correlation peak; cannot resolve timing")
    lag = best - (n - 1)  # >0: rx delayed relative to tx
    if lag >= 0:
        rx_al, tx_al = rx[lag:], tx[: n - lag]
    else:
        rx_al, tx_al = rx[: n + lag], tx[-lag:]
    denom = np.vdot(rx_al, rx_al).real
    if denom == 0.0:
        raise ConfigurationError("received stream has zero power")
    scalar = complex(np.vdot(rx_al, tx_al) / denom)
    return RxCalibration(scalar=scalar, timing_offset_samples=lag)


def qam_demap(sym: SymbolStream, c: QamConstellation) -> BitStream:
    """Minimum-distance decision; labels concatenated MSB first.

    Ties break deterministically toward the lowest label (points are stored
    in label order, so the first minimum wins).
    """
    k = c.bits_per_symbol
    if sym.n == 0:
        return BitStream(np.empty(0, dtype=np.uint8), k * sym.symbol_rate_hz)
    d2 = np.abs(sym.symbols[:, None] - c.points[None, :]) ** 2
    labels = np.argmin(d2, axis=1)
    shifts = np.arange(k - 1, -1, -1)
    bits = ((labels[:, None] >> shifts[None, :]) & 1).astype(np.uint8).reshape(-1)
    return BitStream(bits, k * sym.symbol_rate_hz)
