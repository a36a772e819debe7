"""
Link-quality metrics: error vector magnitude, counted and estimated bit
error rates, Q-factor conversions, eye diagrams, and second-order harmonic
distortion measured on detected-current spectra.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .exceptions import ConfigurationError
from .signals import ComplexEnvelope, SpectrumEstimate, SymbolStream, format_decimal

# Effective order used in the square-QAM BER estimate for the 128 cross:
# its unit-power geometry has mean energy 82*s^2 over half-spacing s, and
# 2*(M_eff - 1)/3 = 82 gives M_eff = 124.
M_EFF_128_CROSS = 124


def evm_percent(rx: SymbolStream, ref: SymbolStream) -> float:
    """RMS error vector magnitude in percent, normalized to the reference RMS."""
    if rx.n != ref.n or rx.n < 1:
        raise ConfigurationError("rx and ref must have equal nonzero length")
    ref_pow = float(np.sum(np.abs(ref.symbols) ** 2))
    if ref_pow == 0.0:
        raise ConfigurationError("reference stream has zero power")
    err = float(np.sum(np.abs(rx.symbols - ref.symbols) ** 2))
    return 100.0 * np.sqrt(err / ref_pow)


def ber_count(tx, rx) -> tuple[int, float, bool]:
    """Count bit errors between two equal-length streams.

    Returns ``(errors, ber, resolvable)``; with zero errors the BER reported
    is the 1/length upper bound and ``resolvable`` is False.  A fully
    inverted stream is reported as-is with a polarity warning.
    """
    a = np.asarray(tx.bits if hasattr(tx, "bits") else tx, dtype=np.uint8)
    b = np.asarray(rx.bits if hasattr(rx, "bits") else rx, dtype=np.uint8)
    if a.size != b.size or a.size < 1:
        raise ConfigurationError("bit streams must have equal nonzero length")
    errors = int(np.count_nonzero(a != b))
    if errors == 0:
        return 0, 1.0 / a.size, False
    ber = errors / a.size
    if errors == a.size:
        warnings.warn("received stream is the exact complement; check polarity", RuntimeWarning)
    return errors, ber, True


def ber_from_evm(evm_pct: float, m: int) -> float:
    """Estimate BER from EVM via the square-QAM union-bound approximation.

    SNR is inferred as ``(100/evm)^2``; M=128 substitutes the cross-geometry
    effective order ``M_EFF_128_CROSS`` in the distance term.
    """
    if m not in (4, 16, 64, 128):
        raise ConfigurationError(f"unsupported constellation order {m}")
    if evm_pct < 0:
        raise ConfigurationError("EVM must be >= 0")
    if evm_pct == 0.0:
        return 0.0
    k = int(np.log2(m))
    m_eff = M_EFF_128_CROSS if m == 128 else m
    snr = (100.0 / evm_pct) ** 2
    arg = np.sqrt(3.0 * snr / (2.0 * (m_eff - 1)))
    return float(2.0 * (1.0 - 1.0 / np.sqrt(m)) / k * special.erfc(arg))


def ber_from_q(q: float) -> float:
    """BER = 0.5 erfc(Q / sqrt(2))."""
    if q < 0:
        raise ConfigurationError("Q must be >= 0")
    return float(0.5 * special.erfc(q / np.sqrt(2.0)))


def q_from_ber(ber: float) -> float:
    """Inverse of `ber_from_q` on BER in (0, 0.5]."""
    if not 0.0 < ber <= 0.5:
        raise ConfigurationError("BER must lie in (0, 0.5]")
    return float(np.sqrt(2.0) * special.erfcinv(2.0 * ber))


@dataclass(frozen=True)
class EyeData:
    """Overlaid two-UI traces plus the best-phase vertical opening."""

    traces: np.ndarray
    time_ui: np.ndarray
    opening: float
    degenerate: bool

    def to_csv(self, path) -> None:
        """First row is the time axis (UI); following rows are traces."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([format_decimal(t, 9) for t in self.time_ui])
            for row in self.traces:
                w.writerow([format_decimal(v, 9) for v in row])


def eye_diagram(waveform: ComplexEnvelope, symbol_period_s: float,
                max_traces: int = 256) -> EyeData:
    """Cut the real waveform into 2-UI traces aligned to the symbol clock.

    The opening statistic is the two-level vertical gap at the best sampling
    phase (samples split at the waveform midline); degenerate waveforms are
    flagged with zero opening.
    """
    sps = int(round(symbol_period_s * waveform.sample_rate_hz))
    if sps < 2:
        raise ConfigurationError("fewer than 2 samples per symbol period")
    if waveform.n < 2 * sps:
        raise ConfigurationError("waveform shorter than two symbol periods")
    x = waveform.samples.real
    n_traces = min((waveform.n - 2 * sps) // sps + 1, max_traces)
    if n_traces < 1:
        raise ConfigurationError("waveform too short for a single trace")
    traces = np.stack([x[i * sps: i * sps + 2 * sps] for i in range(n_traces)])
    time_ui = np.arange(2 * sps) / sps

    lo, hi = float(traces.min()), float(traces.max())
    if hi - lo <= 1e-15 * max(abs(hi), abs(lo), 1.0):
        return EyeData(traces, time_ui, 0.0, True)
    mid = 0.5 * (lo + hi)
    opening = 0.0
    for col in range(traces.shape[1]):
        vals = traces[:, col]
        upper = vals[vals > mid]
        lower = vals[vals <= mid]
        if upper.size == 0 or lower.size == 0:
            continue
        opening = max(opening, float(upper.min() - lower.max()))
    return EyeData(traces, time_ui, max(opening, 0.0), False)


def harmonic_ratio(spec: SpectrumEstimate, f_rf: float,
                   window_half_width_hz: float | None = None) -> float:
    """Second-harmonic to fundamental power ratio, in dB (negative = suppressed).

    Powers are integrated over resolution-scaled windows centered at f_rf
    and 2 f_rf (default half-width 3 resolution bandwidths).
    """
    if window_half_width_hz is None:
        window_half_width_hz = 3.0 * spec.resolution_bw_hz
    w = window_half_width_hz
    if f_rf + w >= 2 * f_rf - w:
        raise ConfigurationError("fundamental and harmonic windows overlap")
    if 2 * f_rf + w > spec.freq_hz[-1] or f_rf - w < spec.freq_hz[0]:
        raise ConfigurationError("harmonic band lies outside the spectrum range")
    p_fund = spec.integrate_w(f_rf - w, f_rf + w)
    p_harm = spec.integrate_w(2 * f_rf - w, 2 * f_rf + w)
    if p_fund <= 0.0:
        raise ConfigurationError("no power in the fundamental window")
    return float(10.0 * np.log10(max(p_harm, 1e-300) / p_fund))


@dataclass(frozen=True)
class ChannelMetrics:
    channel: int
    freq_hz: float
    evm_percent: float
    ber: float
    ber_source: str  # 'counted' | 'estimated' | 'zero'
    errors: int
    q_factor: float
    harmonic_db: float


@dataclass(frozen=True)
class MetricsReport:
    """Per-channel quality metrics plus channel-mean aggregates."""

    channels: tuple[ChannelMetrics, ...]

    @property
    def mean_evm_percent(self) -> float:
        return float(np.mean([c.evm_percent for c in self.channels]))

    @property
    def mean_ber(self) -> float:
        return float(np.mean([c.ber for c in self.channels]))

    @property
    def mean_q_factor(self) -> float:
        return float(np.mean([c.q_factor for c in self.channels]))

    @property
    def mean_harmonic_db(self) -> float:
        return float(np.mean([c.harmonic_db for c in self.channels]))


def reported_ber(errors: int, counted_ber: float, evm_pct: float, m: int,
                 min_errors: int = 10) -> tuple[float, str]:
    """Select the BER to report: counted when statistically resolvable, else
    the EVM-based estimate (tagged with its source)."""
    if errors >= min_errors:
        return counted_ber, "counted"
    est = ber_from_evm(evm_pct, m)
    if est == 0.0:
        return 0.0, "zero"
    return est, "estimated"
