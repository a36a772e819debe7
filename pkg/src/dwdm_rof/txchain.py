"""
Transmitter chain: PRBS data, M-QAM mapping, root-raised-cosine pulse
shaping, quadrature RF modulation, CW laser, Mach-Zehnder modulation, and
dense WDM multiplexing of the per-channel optical fields.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import signal as ssig

from .exceptions import AliasingError, ConfigurationError
from .signals import BitStream, ComplexEnvelope, RngSeed, SymbolStream, combine, frequency_shift

# Maximal-length LFSR feedback taps (Fibonacci form, x^n + x^m + 1).
_PRBS_POLYNOMIALS = {
    "prbs7": (7, 6),
    "prbs15": (15, 14),
    "prbs23": (23, 18),
}


def prbs_generate(seed: RngSeed, length: int, polynomial: str = "prbs15",
                  bit_rate_hz: float = 1.0) -> BitStream:
    """Generate a maximal-length pseudo-random bit sequence.

    Parameters
    ----------
    seed : RngSeed
        Determines the (nonzero) LFSR start state.
    length : int
        Number of bits to produce.
    polynomial : str
        One of 'prbs7', 'prbs15', 'prbs23'.
    bit_rate_hz : float
        Rate attached to the returned stream.
    """
    if length < 0:
        raise ConfigurationError("length must be >= 0")
    try:
        degree, tap = _PRBS_POLYNOMIALS[polynomial.lower()]
    except KeyError:
        raise ConfigurationError(
            f"unsupported polynomial {polynomial!r}; choose from {sorted(_PRBS_POLYNOMIALS)}"
        ) from None
    state = int(seed.seed) % (1 << degree)
    if state == 0:
        raise ConfigurationError("all-zero LFSR state; choose a different seed")
    if length == 0:
        return BitStream(np.empty(0, dtype=np.uint8), bit_rate_hz)

    # One full period is enough: the sequence then repeats cyclically.
    period = (1 << degree) - 1
    steps = min(length, period)
    out = np.empty(steps, dtype=np.uint8)
    s = state
    for i in range(steps):
        out[i] = s & 1
        fb = (s ^ (s >> (degree - tap))) & 1
        s = (s >> 1) | (fb << (degree - 1))
    if length <= period:
        return BitStream(out, bit_rate_hz)
    reps = -(-length // period)
    return BitStream(np.tile(out, reps)[:length], bit_rate_hz)


@dataclass(frozen=True)
class QamConstellation:
    """M-QAM mapping table, unit mean power, indexed by integer label.

    ``points[label]`` is the coordinate transmitted for the ``log2(M)``-bit
    pattern whose MSB-first integer value is ``label``.
    """

    order: int
    points: np.ndarray

    def __post_init__(self):
        m = self.order
        if m < 2 or (m & (m - 1)) != 0:
            raise ConfigurationError(f"order must be a power of two, got {m}")
        pts = np.asarray(self.points, dtype=np.complex128)
        object.__setattr__(self, "points", pts)
        if pts.size != m:
            raise ConfigurationError(f"expected {m} points, got {pts.size}")
        mp = float(np.mean(np.abs(pts) ** 2))
        if abs(mp - 1.0) > 1e-9:
            raise ConfigurationError(f"constellation mean power is {mp}, expected 1")

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.order))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["label_bits", "i", "q"])
            k = self.bits_per_symbol
            for label, p in enumerate(self.points):
                w.writerow([format(label, f"0{k}b"), repr(p.real), repr(p.imag)])

    @classmethod
    def from_csv(cls, path) -> "QamConstellation":
        labels, coords = [], []
        with open(path, newline="") as fh:
            rdr = csv.DictReader(fh)
            for row in rdr:
                labels.append(int(row["label_bits"], 2))
                coords.append(complex(float(row["i"]), float(row["q"])))
        m = len(labels)
        pts = np.zeros(m, dtype=np.complex128)
        seen = set()
        for lab, c in zip(labels, coords):
            if lab in seen or not 0 <= lab < m:
                raise ConfigurationError("labels must be a bijection onto 0..M-1")
            seen.add(lab)
            pts[lab] = c
        return cls(m, pts)


def _gray_decode(g: int) -> int:
    b = 0
    while g:
        b ^= g
        g >>= 1
    return b


@lru_cache(maxsize=None)
def make_constellation(order: int) -> QamConstellation:
    """Build the default constellation for M in {16, 64, 128}.

    Square orders use per-axis Gray labeling (adjacent points differ in one
    bit).  M=128 uses the 12x12 cross (corners removed) with quasi-Gray
    labels obtained by folding the outer rows of a Gray-coded 8x16 rectangle
    into the cross wings.
    """
    if order in (16, 64):
        k = int(np.log2(order))
        half = k // 2
        levels = 1 << half
        coords = np.zeros(order, dtype=np.complex128)
        for label in range(order):
            gi = label >> half
            gq = label & (levels - 1)
            i_idx = _gray_decode(gi)
            q_idx = _gray_decode(gq)
            coords[label] = complex(2 * i_idx - (levels - 1), 2 * q_idx - (levels - 1))
        coords /= np.sqrt(np.mean(np.abs(coords) ** 2))
        return QamConstellation(order, coords)
    if order == 128:
        coords = np.zeros(128, dtype=np.complex128)
        # Gray-coded 8-wide x 16-tall rectangle; |y|>11 rows fold into the
        # side columns so the result is the standard 12x12 cross.
        for label in range(128):
            gx = label >> 4
            gy = label & 15
            x = 2 * _gray_decode(gx) - 7
            y = 2 * _gray_decode(gy) - 15
            if abs(y) > 11:
                x, y = np.sign(x) * (abs(y) - 4), np.sign(y) * (8 - abs(x))
            coords[label] = complex(x, y)
        coords /= np.sqrt(np.mean(np.abs(coords) ** 2))
        return QamConstellation(128, coords)
    raise ConfigurationError(f"unsupported constellation order {order} (use 16, 64 or 128)")


def qam_map(bits: BitStream, c: QamConstellation) -> SymbolStream:
    """Map bit groups (MSB first) onto constellation points."""
    k = c.bits_per_symbol
    if bits.n % k != 0:
        raise ConfigurationError(f"bit count {bits.n} is not divisible by log2(M)={k}")
    if bits.n == 0:
        return SymbolStream(np.empty(0, dtype=np.complex128), bits.bit_rate_hz / k, k)
    groups = bits.bits.reshape(-1, k)
    weights = 1 << np.arange(k - 1, -1, -1)
    labels = groups @ weights
    return SymbolStream(c.points[labels], bits.bit_rate_hz / k, k)


@dataclass(frozen=True)
class PulseShaper:
    """Root-raised-cosine FIR shaping filter (unit energy, symmetric taps).

    The TX/RX cascade of two of these filters is the Nyquist raised-cosine
    ("squared cosine roll-off") response, so symbol-instant ISI vanishes.
    """

    rolloff: float
    samples_per_symbol: int
    span_symbols: int
    taps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "taps", np.asarray(self.taps, dtype=np.float64))

    @property
    def group_delay_samples(self) -> int:
        return self.span_symbols * self.samples_per_symbol // 2


def scro_taps(rolloff: float, samples_per_symbol: int, span_symbols: int) -> PulseShaper:
    """Root-raised-cosine taps with analytic limits at the removable singularities.

    Parameters
    ----------
    rolloff : float
        Excess-bandwidth factor in [0, 1].
    samples_per_symbol : int
        Oversampling of the shaped output (>= 2).
    span_symbols : int
        Even filter span; total length span*sps + 1 taps.
    """
    if not 0.0 <= rolloff <= 1.0:
        raise ConfigurationError(f"rolloff must be in [0, 1], got {rolloff}")
    if samples_per_symbol < 2:
        raise ConfigurationError("samples_per_symbol must be >= 2")
    if span_symbols < 8 or span_symbols % 2 != 0:
        raise ConfigurationError("span_symbols must be an even integer >= 8")

    sps = samples_per_symbol
    half = span_symbols * sps // 2
    k = np.arange(-half, half + 1)
    t = k / sps  # in symbol periods
    b = rolloff
    h = np.empty(t.size, dtype=np.float64)
    for i, ti in enumerate(t):
        if ti == 0.0:
            h[i] = 1.0 + b * (4.0 / np.pi - 1.0)
        elif b > 0.0 and np.isclose(abs(ti), 1.0 / (4.0 * b), rtol=1e-12, atol=1e-12):
            h[i] = (b / np.sqrt(2.0)) * (
                (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * b))
                + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * b))
            )
        else:
            num = np.sin(np.pi * ti * (1.0 - b)) + 4.0 * b * ti * np.cos(np.pi * ti * (1.0 + b))
            den = np.pi * ti * (1.0 - (4.0 * b * ti) ** 2)
            h[i] = num / den
    h /= np.sqrt(np.sum(h ** 2))
    return PulseShaper(rolloff, sps, span_symbols, h)


def pulse_shape(sym: SymbolStream, p: PulseShaper) -> ComplexEnvelope:
    """Zero-stuff to the shaper's rate and convolve with its taps.

    The output is the full convolution: length ``n*sps + span*sps`` with the
    k-th symbol centered ``p.group_delay_samples + k*sps`` samples in.
    """
    sps = p.samples_per_symbol
    up = np.zeros(max(sym.n, 1) * sps, dtype=np.complex128)
    if sym.n:
        up[::sps] = sym.symbols
    out = ssig.fftconvolve(up, p.taps, mode="full")
    return ComplexEnvelope(out, sym.symbol_rate_hz * sps, 0.0)


def quadrature_modulate(baseband: ComplexEnvelope, rf_hz: float,
                        occupied_bw_hz: float | None = None) -> ComplexEnvelope:
    """Mix I/Q baseband onto an RF subcarrier: s(t) = I cos(wt) - Q sin(wt).

    The result is a real waveform kept in the complex container (imag = 0).
    """
    fs = baseband.sample_rate_hz
    if occupied_bw_hz is not None:
        if rf_hz <= occupied_bw_hz / 2:
            raise ConfigurationError("RF carrier must exceed half the occupied bandwidth")
        if rf_hz + occupied_bw_hz / 2 >= fs / 2:
            raise AliasingError("RF carrier plus half-bandwidth exceeds Nyquist")
    elif not 0 < rf_hz < fs / 2:
        raise AliasingError(f"RF carrier {rf_hz:g} Hz outside (0, Nyquist)")
    wt = 2.0 * np.pi * rf_hz * baseband.time_s()
    s = baseband.samples.real * np.cos(wt) - baseband.samples.imag * np.sin(wt)
    return ComplexEnvelope(s.astype(np.complex128), fs, 0.0)


@dataclass(frozen=True)
class LaserParams:
    power_dbm: float
    frequency_hz: float
    linewidth_hz: float = 0.0

    def __post_init__(self):
        if self.frequency_hz <= 0:
            raise ConfigurationError("laser frequency must be > 0")
        if self.linewidth_hz < 0:
            raise ConfigurationError("linewidth must be >= 0")


def cw_laser(params: LaserParams, duration_s: float, sample_rate_hz: float,
             seed: RngSeed = RngSeed(0)) -> ComplexEnvelope:
    """Continuous-wave field at the laser frequency.

    With nonzero linewidth the phase performs a Wiener walk with increment
    variance ``2*pi*linewidth*dt`` (Lorentzian line of that FWHM).
    """
    n = int(round(duration_s * sample_rate_hz))
    if n < 1:
        raise ConfigurationError("duration too short for one sample")
    amp = np.sqrt(10.0 ** ((params.power_dbm - 30.0) / 10.0))
    if params.linewidth_hz > 0:
        var = 2.0 * np.pi * params.linewidth_hz / sample_rate_hz
        steps = seed.rng().normal(0.0, np.sqrt(var), n)
        steps[0] = 0.0
        phases = np.cumsum(steps)
        samples = amp * np.exp(1j * phases)
    else:
        samples = np.full(n, amp, dtype=np.complex128)
    return ComplexEnvelope(samples, sample_rate_hz, params.frequency_hz)


@dataclass(frozen=True)
class MzmParams:
    v_pi: float
    bias_v: float
    insertion_loss_db: float = 0.0
    extinction_ratio_db: float = 30.0

    def __post_init__(self):
        if self.v_pi <= 0:
            raise ConfigurationError("v_pi must be > 0")
        if self.insertion_loss_db < 0:
            raise ConfigurationError("insertion_loss_db must be >= 0")
        if self.extinction_ratio_db <= 0:
            raise ConfigurationError("extinction_ratio_db must be > 0")


def mzm_modulate(carrier: ComplexEnvelope, drive: ComplexEnvelope, m: MzmParams) -> ComplexEnvelope:
    """Mach-Zehnder field transfer with finite extinction and insertion loss.

    E_out = E_in * (cos(theta) + 1j*delta*sin(theta)) * 10^(-IL/20) with
    theta = (pi/2)(V_drive + bias)/v_pi; the arm-imbalance term delta =
    10^(-ER/20) sets the extinction floor.
    """
    if carrier.n != drive.n or carrier.sample_rate_hz != drive.sample_rate_hz:
        raise ConfigurationError("carrier and drive must share the sample grid")
    theta = (np.pi / 2.0) * (drive.samples.real + m.bias_v) / m.v_pi
    delta = 10.0 ** (-m.extinction_ratio_db / 20.0)
    il = 10.0 ** (-m.insertion_loss_db / 20.0)
    field = carrier.samples * (np.cos(theta) + 1j * delta * np.sin(theta)) * il
    return ComplexEnvelope(field, carrier.sample_rate_hz, carrier.center_frequency_hz)


@dataclass(frozen=True)
class WdmGrid:
    """Equally spaced optical channel grid."""

    channel_count: int = 16
    start_hz: float = 193.414e12
    spacing_hz: float = 100e9

    def __post_init__(self):
        if self.channel_count < 1:
            raise ConfigurationError("channel_count must be >= 1")
        if self.spacing_hz <= 0 or self.start_hz <= 0:
            raise ConfigurationError("grid frequencies must be positive")

    def frequency_hz(self, k: int) -> float:
        return self.start_hz + k * self.spacing_hz

    @property
    def center_hz(self) -> float:
        return self.start_hz + (self.channel_count - 1) / 2.0 * self.spacing_hz

    def offsets_hz(self) -> np.ndarray:
        return np.array([self.frequency_hz(k) - self.center_hz for k in range(self.channel_count)])


def _occupied_halfwidth_hz(env: ComplexEnvelope, floor_db: float = 40.0) -> float:
    """Half-width of the band holding content within `floor_db` of the spectral peak."""
    x = np.fft.fft(env.samples)
    mag = np.abs(x)
    peak = mag.max()
    if peak == 0.0:
        return 0.0
    idx = np.nonzero(mag >= peak * 10 ** (-floor_db / 20.0))[0]
    freqs = np.fft.fftfreq(env.n, 1.0 / env.sample_rate_hz)
    return float(np.max(np.abs(freqs[idx])))


def dwdm_mux(channel_fields, grid: WdmGrid) -> ComplexEnvelope:
    """Shift each channel to its grid offset (relative to band center) and sum.

    All inputs must share the common sample grid; each shifted channel (plus
    its content) must stay inside Nyquist.
    """
    fields = list(channel_fields)
    if len(fields) != grid.channel_count:
        raise ConfigurationError(
            f"expected {grid.channel_count} channel fields, got {len(fields)}"
        )
    offsets = grid.offsets_hz()
    shifted = []
    for k, env in enumerate(fields):
        bw = _occupied_halfwidth_hz(env)
        if abs(offsets[k]) + bw >= env.sample_rate_hz / 2:
            raise AliasingError(
                f"channel {k} at offset {offsets[k]:g} Hz (+-{bw:g} Hz content) "
                "exceeds the Nyquist band"
            )
        rebased = ComplexEnvelope(env.samples, env.sample_rate_hz, grid.center_hz)
        sh = frequency_shift(rebased, float(offsets[k]))
        shifted.append(ComplexEnvelope(sh.samples, sh.sample_rate_hz, grid.center_hz))
    return combine(shifted)
