"""
Core waveform containers and frequency-domain utilities.

Every block of the simulator exchanges `ComplexEnvelope` values: uniformly
sampled complex baseband fields whose squared magnitude is instantaneous
power in watts.  The module also provides the bit/symbol stream containers,
deterministic seeding, and Welch spectral estimation used for all spectrum
artifacts.

Conventions
-----------
* A sample value ``a`` carries power ``|a|**2`` W (amplitudes in sqrt(W)).
* Container frequency ``f`` (from ``fftfreq``) maps to absolute frequency
  ``center_frequency_hz + f``; a tone ``exp(+1j*2*pi*f*t)`` sits at ``+f``.
* ``frequency_shift`` moves content and the nominal center together, so the
  shifted envelope describes a signal whose carrier physically moved.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft
from scipy import signal as ssig

from .exceptions import AliasingError, ConfigurationError, ResolutionError

PSD_FLOOR_DBM_PER_HZ = -200.0

# Workers handed to scipy.fft; recorded in run telemetry by the harness.
_fft_workers = 1


def set_fft_workers(n: int) -> None:
    """Set the scipy.fft worker count used by all transforms."""
    global _fft_workers
    _fft_workers = max(1, int(n))


def get_fft_workers() -> int:
    return _fft_workers


def fft(x: np.ndarray) -> np.ndarray:
    return sfft.fft(x, workers=_fft_workers)


def ifft(x: np.ndarray) -> np.ndarray:
    return sfft.ifft(x, workers=_fft_workers)


@dataclass(frozen=True)
class RngSeed:
    """64-bit seed for deterministic noise generation."""

    seed: int

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {self.seed}")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def derive(self, *labels) -> "RngSeed":
        """Derive a child seed from string/int labels (order-sensitive, stable)."""
        h = hashlib.sha256()
        h.update(str(self.seed).encode())
        for lab in labels:
            h.update(b"/")
            h.update(str(lab).encode())
        return RngSeed(int.from_bytes(h.digest()[:8], "big"))


@dataclass(frozen=True)
class ComplexEnvelope:
    """Uniformly sampled complex field with rate and center-frequency metadata."""

    samples: np.ndarray
    sample_rate_hz: float
    center_frequency_hz: float = 0.0

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.complex128)
        object.__setattr__(self, "samples", arr)
        if self.sample_rate_hz <= 0:
            raise ConfigurationError(f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        if arr.ndim != 1 or arr.size < 1:
            raise ConfigurationError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(arr.view(np.float64))):
            raise ConfigurationError("samples contain NaN or Inf")

    @property
    def n(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.n / self.sample_rate_hz

    def time_s(self) -> np.ndarray:
        return np.arange(self.n) / self.sample_rate_hz


@dataclass(frozen=True)
class BitStream:
    """Sequence of {0,1} bits with an associated bit rate."""

    bits: np.ndarray
    bit_rate_hz: float

    def __post_init__(self):
        arr = np.asarray(self.bits, dtype=np.uint8)
        object.__setattr__(self, "bits", arr)
        if self.bit_rate_hz <= 0:
            raise ConfigurationError(f"bit_rate_hz must be > 0, got {self.bit_rate_hz}")
        if arr.size and arr.max() > 1:
            raise ConfigurationError("bits must contain only 0 or 1")

    @property
    def n(self) -> int:
        return self.bits.size


@dataclass(frozen=True)
class SymbolStream:
    """Sequence of complex constellation points at a fixed symbol rate."""

    symbols: np.ndarray
    symbol_rate_hz: float
    bits_per_symbol: int

    def __post_init__(self):
        arr = np.asarray(self.symbols, dtype=np.complex128)
        object.__setattr__(self, "symbols", arr)
        if self.symbol_rate_hz <= 0:
            raise ConfigurationError(f"symbol_rate_hz must be > 0, got {self.symbol_rate_hz}")
        if self.bits_per_symbol < 1:
            raise ConfigurationError("bits_per_symbol must be >= 1")

    @property
    def n(self) -> int:
        return self.symbols.size


@dataclass(frozen=True)
class SpectrumEstimate:
    """Welch power spectral density on absolute frequency bins.

    ``psd`` is stored in dBm/Hz, clamped at ``PSD_FLOOR_DBM_PER_HZ`` so empty
    bins stay finite in exported CSV files.
    """

    freq_hz: np.ndarray
    psd: np.ndarray
    resolution_bw_hz: float
    window: str = "hann"
    enbw_hz: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.freq_hz, dtype=np.float64)
        p = np.asarray(self.psd, dtype=np.float64)
        object.__setattr__(self, "freq_hz", f)
        object.__setattr__(self, "psd", p)
        if f.size != p.size:
            raise ConfigurationError("freq_hz and psd must have equal length")
        if f.size > 1 and np.any(np.diff(f) <= 0):
            raise ConfigurationError("freq_hz must be strictly increasing")

    def psd_linear_w_per_hz(self) -> np.ndarray:
        return 10.0 ** (self.psd / 10.0) * 1e-3

    def bin_width_hz(self) -> float:
        return float(self.freq_hz[1] - self.freq_hz[0]) if self.freq_hz.size > 1 else self.resolution_bw_hz

    def integrate_w(self, f_lo: float | None = None, f_hi: float | None = None) -> float:
        """Total power (W) in [f_lo, f_hi] (whole axis when omitted)."""
        lin = self.psd_linear_w_per_hz()
        mask = np.ones(self.freq_hz.size, dtype=bool)
        if f_lo is not None:
            mask &= self.freq_hz >= f_lo
        if f_hi is not None:
            mask &= self.freq_hz <= f_hi
        return float(np.sum(lin[mask]) * self.bin_width_hz())

    def to_csv(self, path) -> None:
        """Write `freq_hz,psd_dbm_per_hz` rows in plain decimal notation."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["freq_hz", "psd_dbm_per_hz"])
            for f, p in zip(self.freq_hz, self.psd):
                w.writerow([format_decimal(f), format_decimal(p)])


def format_decimal(x: float, sig_digits: int = 12) -> str:
    """Format a float in positional decimal notation with fixed significant digits."""
    return np.format_float_positional(
        float(x), precision=sig_digits, unique=False, fractional=False, trim="-"
    )


def mean_power(env: ComplexEnvelope) -> float:
    """Average power of the envelope in watts: (1/N) * sum(|a_k|^2)."""
    return float(np.mean(np.abs(env.samples) ** 2))


def frequency_shift(env: ComplexEnvelope, delta_hz: float) -> ComplexEnvelope:
    """Shift the envelope content (and its nominal center) by ``delta_hz``.

    Multiplies by ``exp(+1j*2*pi*delta_hz*t)``; mean power is preserved
    exactly since the multiplier has unit modulus.
    """
    if abs(delta_hz) >= env.sample_rate_hz / 2:
        raise AliasingError(
            f"shift of {delta_hz:g} Hz exceeds the Nyquist range +-{env.sample_rate_hz / 2:g} Hz"
        )
    if delta_hz == 0.0:
        return env
    phase = np.exp(2j * np.pi * delta_hz * env.time_s())
    return ComplexEnvelope(
        env.samples * phase, env.sample_rate_hz, env.center_frequency_hz + delta_hz
    )


def combine(envs) -> ComplexEnvelope:
    """Pointwise field superposition of compatible envelopes."""
    envs = list(envs)
    if not envs:
        raise ConfigurationError("combine requires at least one envelope")
    ref = envs[0]
    for i, e in enumerate(envs[1:], start=1):
        if e.sample_rate_hz != ref.sample_rate_hz:
            raise ConfigurationError(f"envelope {i} sample rate differs from envelope 0")
        if e.n != ref.n:
            raise ConfigurationError(f"envelope {i} length differs from envelope 0")
        if e.center_frequency_hz != ref.center_frequency_hz:
            raise ConfigurationError(f"envelope {i} center frequency differs from envelope 0")
    total = np.sum([e.samples for e in envs], axis=0)
    return ComplexEnvelope(total, ref.sample_rate_hz, ref.center_frequency_hz)


def spectrum(env: ComplexEnvelope, resolution_bw_hz: float) -> SpectrumEstimate:
    """Welch-averaged PSD (Hann window, 50% overlap) on absolute frequencies.

    The integrated linear PSD matches ``mean_power(env)`` up to window
    leakage (<=1% for tones, <=5% broadband).
    """
    fs = env.sample_rate_hz
    if resolution_bw_hz <= 0:
        raise ResolutionError("resolution_bw_hz must be > 0")
    nperseg = int(round(fs / resolution_bw_hz))
    if nperseg > env.n:
        raise ResolutionError(
            f"resolution {resolution_bw_hz:g} Hz needs {nperseg} samples per segment, "
            f"but only {env.n} are available"
        )
    nperseg = max(nperseg, 2)
    freqs, psd = ssig.welch(
        env.samples,
        fs=fs,
        window="hann",
        nperseg=nperseg,
        noverlap=nperseg // 2,
        detrend=False,
        return_onesided=False,
        scaling="density",
    )
    order = np.argsort(freqs)
    freqs = freqs[order] + env.center_frequency_hz
    psd = psd[order].real
    floor_w = 10.0 ** (PSD_FLOOR_DBM_PER_HZ / 10.0) * 1e-3
    psd_dbm = 10.0 * np.log10(np.maximum(psd, floor_w) * 1e3)
    return SpectrumEstimate(
        freq_hz=freqs,
        psd=psd_dbm,
        resolution_bw_hz=fs / nperseg,
        window="hann",
        enbw_hz=1.5 * fs / nperseg,
    )


def resample_envelope(env: ComplexEnvelope, new_rate_hz: float) -> ComplexEnvelope:
    """Band-limited (FFT) resampling to a new rate.

    The rate ratio must map the sample count to an integer; the harness keeps
    all rates integer-locked to the symbol rate so this is exact.
    """
    if new_rate_hz <= 0:
        raise ConfigurationError("new_rate_hz must be > 0")
    if new_rate_hz == env.sample_rate_hz:
        return env
    n_out_f = env.n * new_rate_hz / env.sample_rate_hz
    n_out = int(round(n_out_f))
    if abs(n_out_f - n_out) > 1e-6:
        raise ConfigurationError(
            f"resampling {env.sample_rate_hz:g} -> {new_rate_hz:g} Hz does not "
            f"yield an integer sample count ({n_out_f:g})"
        )
    out = ssig.resample(env.samples, n_out)
    return ComplexEnvelope(out, new_rate_hz, env.center_frequency_hz)


def envelope_hash(env: ComplexEnvelope) -> str:
    """SHA-256 of the raw sample bytes (used for scenario-isolation checks)."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(env.samples).tobytes())
    h.update(f"{env.sample_rate_hz!r}/{env.center_frequency_hz!r}".encode())
    return h.hexdigest()
