"""
Scenario orchestration: configuration loading, the two mitigation pipelines
(receiver-side saturable SOA with a plain low-pass receiver vs. matched
root-raised-cosine DSP filtering), distance sweeps, and CSV artifact
emission with a hashed manifest.

Scenario semantics
------------------
Both scenarios share the identical transmitter (PRBS -> M-QAM -> RRC pulse
shaping -> quadrature RF -> MZM -> DWDM mux), the identical span plan
(loss-compensating EDFAs), and identical noise seeds; they differ only in
the mitigation elements:

* ``soa``  - a saturable SOA in front of the demux, and a plain low-pass
             symbol filter of equal bandwidth instead of the matched filter;
* ``scro`` - no SOA, matched root-raised-cosine filtering at the receiver.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import signal as ssig

from . import signals
from .channel import (EdfaParams, FiberParams, SoaParams, SsfmConfig,
                      dispersion_to_beta2, link_propagate, soa_amplify)
from .exceptions import ConfigurationError, SimulationError
from .metrics import (ChannelMetrics, EyeData, MetricsReport, ber_count,
                      eye_diagram, evm_percent, harmonic_ratio, q_from_ber,
                      reported_ber)
from .rxchain import (DemuxFilter, PinParams, RxCalibration, design_lowpass,
                      dwdm_demux, estimate_calibration, matched_filter_sample,
                      pin_detect, quadrature_demodulate, qam_demap)
from .signals import (ComplexEnvelope, RngSeed, SymbolStream, envelope_hash,
                      format_decimal, frequency_shift, mean_power,
                      resample_envelope, spectrum)
from .txchain import (LaserParams, MzmParams, PulseShaper, WdmGrid, cw_laser,
                      make_constellation, mzm_modulate, prbs_generate,
                      pulse_shape, qam_map, quadrature_modulate, scro_taps)

C_LIGHT = 299792458.0

SCENARIO_SOA = "soa"
SCENARIO_SCRO = "scro"


@dataclass(frozen=True)
class ModemConfig:
    bit_rate_hz: float = 18.75e9
    qam_order: int = 128
    rolloff: float = 0.2
    samples_per_symbol: int = 8
    span_symbols: int = 32
    rf_carrier_hz: float = 2.5e9
    lpf_guard_factor: float = 1.2
    prbs: str = "prbs15"

    @property
    def symbol_rate_hz(self) -> float:
        return self.bit_rate_hz / np.log2(self.qam_order)

    @property
    def occupied_bw_hz(self) -> float:
        return (1.0 + self.rolloff) * self.symbol_rate_hz

    @property
    def lpf_cutoff_hz(self) -> float:
        return self.occupied_bw_hz / 2.0 * self.lpf_guard_factor


@dataclass(frozen=True)
class RunConfig:
    distances_km: tuple[float, ...] = (50.0, 100.0, 150.0, 200.0, 250.0, 300.0)
    symbols_per_run: int = 4096
    master_seed: int = 20260810
    mitigation: str = "both"  # 'soa' | 'scro' | 'both'
    guard_symbols: int = 128
    rf_spectrum_rbw_hz: float = 50e6
    optical_spectrum_rbw_hz: float = 2e9
    eye_channel: int = 0


@dataclass(frozen=True)
class LinkConfig:
    """One complete scenario description (grid, modem, devices, sweep)."""

    grid: WdmGrid = WdmGrid()
    modem: ModemConfig = ModemConfig()
    laser: LaserParams = LaserParams(power_dbm=0.0, frequency_hz=193.414e12, linewidth_hz=0.0)
    mzm: MzmParams = MzmParams(v_pi=4.0, bias_v=2.0, insertion_loss_db=5.0,
                               extinction_ratio_db=30.0)
    modulation_index: float = 0.2
    fiber_alpha_db_per_km: float = 0.2
    fiber_dispersion_ps_nm_km: float = 16.75
    fiber_beta3_ps3_per_km: float = 0.0
    fiber_gamma_per_w_km: float = 1.3
    ssfm: SsfmConfig = SsfmConfig()
    target_sample_rate_hz: float = 2.56e12
    edfa_span_km: float = 100.0
    edfa_noise_figure_db: float = 5.0
    soa: SoaParams = SoaParams()
    pin: PinParams = PinParams()
    demux_bandwidth_hz: float = 70e9
    demux_order: int = 2
    run: RunConfig = RunConfig()

    def __post_init__(self):
        if self.run.symbols_per_run < 256:
            raise ConfigurationError("symbols_per_run must be >= 256")
        for d in self.run.distances_km:
            if not 0.0 <= d <= 1000.0:
                raise ConfigurationError(f"distance {d} km outside [0, 1000]")
        if self.run.mitigation not in ("soa", "scro", "both"):
            raise ConfigurationError("mitigation must be 'soa', 'scro' or 'both'")
        if not 0.0 < self.modulation_index <= 1.0:
            raise ConfigurationError("modulation_index must be in (0, 1]")
        if self.demux_bandwidth_hz >= self.grid.spacing_hz:
            raise ConfigurationError("demux bandwidth must be below the grid spacing")
        if 2 * self.run.guard_symbols >= self.run.symbols_per_run:
            raise ConfigurationError("guard_symbols leave no symbols for metrics")

    def scenarios(self) -> tuple[str, ...]:
        if self.run.mitigation == "both":
            return (SCENARIO_SOA, SCENARIO_SCRO)
        return (self.run.mitigation,)

    def fiber_beta2_ps2_per_km(self) -> float:
        lam = C_LIGHT / self.grid.center_hz
        return dispersion_to_beta2(self.fiber_dispersion_ps_nm_km, lam)

    def fiber_params(self, length_km: float) -> FiberParams:
        return FiberParams(
            length_km=length_km,
            alpha_db_per_km=self.fiber_alpha_db_per_km,
            beta2_ps2_per_km=self.fiber_beta2_ps2_per_km(),
            beta3_ps3_per_km=self.fiber_beta3_ps3_per_km,
            gamma_per_w_km=self.fiber_gamma_per_w_km,
        )

    def global_samples_per_symbol(self) -> int:
        """Smallest multiple of the modem oversampling whose rate reaches the target."""
        sps = self.modem.samples_per_symbol
        factor = int(np.ceil(self.target_sample_rate_hz / (self.modem.symbol_rate_hz * sps)))
        return sps * max(factor, 1)

    def global_sample_rate_hz(self) -> float:
        return self.modem.symbol_rate_hz * self.global_samples_per_symbol()

    def span_plan(self, distance_km: float) -> list:
        """Loss-compensating span layout: full spans plus a final partial span."""
        plan = []
        remaining = distance_km
        while remaining > 1e-9:
            seg = min(self.edfa_span_km, remaining)
            plan.append(self.fiber_params(seg))
            plan.append(EdfaParams(
                gain_db=self.fiber_alpha_db_per_km * seg,
                noise_figure_db=self.edfa_noise_figure_db,
                center_hz=self.grid.center_hz,
            ))
            remaining -= seg
        return plan


# ---------------------------------------------------------------------------
# Configuration file handling (flat sectioned key=value text).
# ---------------------------------------------------------------------------

_SCHEMA = {
    "grid": {"channels": int, "start_thz": float, "spacing_ghz": float},
    "modem": {
        "bit_rate_gbps": float, "qam_order": int, "rolloff": float,
        "samples_per_symbol": int, "span_symbols": int, "rf_carrier_ghz": float,
        "lpf_guard_factor": float, "prbs": str,
    },
    "laser": {"power_dbm": float, "linewidth_hz": float},
    "mzm": {
        "v_pi_v": float, "bias_v": float, "insertion_loss_db": float,
        "extinction_db": float, "modulation_index": float,
    },
    "fiber": {
        "alpha_db_per_km": float, "dispersion_ps_nm_km": float,
        "beta3_ps3_per_km": float, "gamma_per_w_km": float,
    },
    "ssfm": {
        "max_step_km": float, "max_nl_phase_rad": float,
        "target_sample_rate_thz": float, "strict_aliasing": bool,
    },
    "edfa": {"span_km": float, "noise_figure_db": float},
    "soa": {
        "small_signal_gain_db": float, "saturation_energy_pj": float,
        "carrier_lifetime_ps": float, "linewidth_enhancement": float,
    },
    "pin": {
        "responsivity_a_per_w": float, "thermal_pa_per_sqrt_hz": float,
        "dark_current_na": float, "shot_noise": bool,
    },
    "demux": {"bandwidth_ghz": float, "order": int},
    "run": {
        "distances_km": str, "symbols_per_run": int, "master_seed": int,
        "mitigation": str, "guard_symbols": int, "rf_spectrum_rbw_mhz": float,
        "optical_spectrum_rbw_ghz": float, "eye_channel": int,
    },
}


def _parse_value(section: str, key: str, raw: str, typ):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return typ(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{section}.{key}: {exc}") from None


def load_config(path) -> LinkConfig:
    """Parse and validate a sectioned key=value configuration file.

    Every section and key of the schema must be present; unknown keys are
    rejected.  Invariant violations report the offending ``section.key``.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigurationError(f"parse error in {path}: {exc}") from None

    if not parser.sections():
        raise ConfigurationError(f"parse error in {path}: no sections found")

    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigurationError(f"unknown section [{section}]")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigurationError(f"unknown key {section}.{key}")
            values[section][key] = _parse_value(section, key, raw, _SCHEMA[section][key])
    for section, keys in _SCHEMA.items():
        if section not in values:
            raise ConfigurationError(f"missing section [{section}]")
        for key in keys:
            if key not in values[section]:
                raise ConfigurationError(f"missing key {section}.{key}")

    g, mo, la, mz = values["grid"], values["modem"], values["laser"], values["mzm"]
    fi, sf, ed, so = values["fiber"], values["ssfm"], values["edfa"], values["soa"]
    pi, de, ru = values["pin"], values["demux"], values["run"]

    try:
        distances = tuple(float(x) for x in ru["distances_km"].split(",") if x.strip())
    except ValueError:
        raise ConfigurationError("run.distances_km: expected comma-separated numbers") from None
    mitigation = ru["mitigation"].strip().lower()
    if mitigation == "scro_dsp":
        mitigation = "scro"

    def build(section, exc_key, fn):
        try:
            return fn()
        except (ConfigurationError, ValueError) as exc:
            raise ConfigurationError(f"{section}.{exc_key}: {exc}") from None

    grid = build("grid", "*", lambda: WdmGrid(g["channels"], g["start_thz"] * 1e12,
                                              g["spacing_ghz"] * 1e9))
    modem = build("modem", "*", lambda: ModemConfig(
        bit_rate_hz=mo["bit_rate_gbps"] * 1e9, qam_order=mo["qam_order"],
        rolloff=mo["rolloff"], samples_per_symbol=mo["samples_per_symbol"],
        span_symbols=mo["span_symbols"], rf_carrier_hz=mo["rf_carrier_ghz"] * 1e9,
        lpf_guard_factor=mo["lpf_guard_factor"], prbs=mo["prbs"].strip().lower()))
    laser = build("laser", "*", lambda: LaserParams(
        power_dbm=la["power_dbm"], frequency_hz=grid.start_hz,
        linewidth_hz=la["linewidth_hz"]))
    mzm = build("mzm", "*", lambda: MzmParams(
        v_pi=mz["v_pi_v"], bias_v=mz["bias_v"],
        insertion_loss_db=mz["insertion_loss_db"], extinction_ratio_db=mz["extinction_db"]))
    ssfm = build("ssfm", "*", lambda: SsfmConfig(
        max_step_km=sf["max_step_km"], max_nl_phase_rad=sf["max_nl_phase_rad"],
        strict_aliasing=sf["strict_aliasing"]))
    soa = build("soa", "*", lambda: SoaParams(
        small_signal_gain_db=so["small_signal_gain_db"],
        saturation_energy_j=so["saturation_energy_pj"] * 1e-12,
        carrier_lifetime_s=so["carrier_lifetime_ps"] * 1e-12,
        linewidth_enhancement=so["linewidth_enhancement"]))
    pin = build("pin", "*", lambda: PinParams(
        responsivity_a_per_w=pi["responsivity_a_per_w"],
        thermal_noise_a_per_sqrt_hz=pi["thermal_pa_per_sqrt_hz"] * 1e-12,
        dark_current_a=pi["dark_current_na"] * 1e-9,
        shot_noise_enabled=pi["shot_noise"]))
    runc = build("run", "*", lambda: RunConfig(
        distances_km=distances, symbols_per_run=ru["symbols_per_run"],
        master_seed=ru["master_seed"], mitigation=mitigation,
        guard_symbols=ru["guard_symbols"],
        rf_spectrum_rbw_hz=ru["rf_spectrum_rbw_mhz"] * 1e6,
        optical_spectrum_rbw_hz=ru["optical_spectrum_rbw_ghz"] * 1e9,
        eye_channel=ru["eye_channel"]))

    return LinkConfig(
        grid=grid, modem=modem, laser=laser, mzm=mzm,
        modulation_index=mz["modulation_index"],
        fiber_alpha_db_per_km=fi["alpha_db_per_km"],
        fiber_dispersion_ps_nm_km=fi["dispersion_ps_nm_km"],
        fiber_beta3_ps3_per_km=fi["beta3_ps3_per_km"],
        fiber_gamma_per_w_km=fi["gamma_per_w_km"],
        ssfm=ssfm,
        target_sample_rate_hz=sf["target_sample_rate_thz"] * 1e12,
        edfa_span_km=ed["span_km"], edfa_noise_figure_db=ed["noise_figure_db"],
        soa=soa, pin=pin,
        demux_bandwidth_hz=de["bandwidth_ghz"] * 1e9, demux_order=de["order"],
        run=runc,
    )


def default_config_path() -> Path:
    return Path(__file__).parent / "data" / "default.cfg"


def default_config() -> LinkConfig:
    return load_config(default_config_path())


def validate_strict_paper(cfg: LinkConfig) -> None:
    """Reject configurations outside the published architecture ranges."""
    if cfg.grid.spacing_hz > 100e9 + 1.0:
        raise ConfigurationError("strict-paper mode requires channel spacing <= 100 GHz")
    first = cfg.grid.frequency_hz(0)
    last = cfg.grid.frequency_hz(cfg.grid.channel_count - 1)
    if first < 193.414e12 - 1.0 or last > 194.914e12 + 1.0:
        raise ConfigurationError(
            "strict-paper mode requires the grid inside 193.414-194.914 THz"
        )
    for d in cfg.run.distances_km:
        if not 50.0 <= d <= 300.0:
            raise ConfigurationError("strict-paper mode requires distances in 50-300 km")


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


@dataclass
class TxData:
    total: ComplexEnvelope
    tx_bits: list[np.ndarray]
    tx_symbols: list[SymbolStream]
    shaper: PulseShaper
    modem_rate_hz: float
    modem_samples: int  # padded per-channel length at the modem rate
    offset_bins: np.ndarray | None  # integral FFT bins of the grid offsets, if exact

    @property
    def fast_path(self) -> bool:
        return self.offset_bins is not None


# Channels are modulated at this multiple of the modem rate so the MZM
# harmonic zones stay inside the per-channel Nyquist band.
_TX_OVERSAMPLE = 4


def _offset_bins(cfg: LinkConfig, n_big: int, fs_big: float) -> np.ndarray | None:
    """Grid offsets as FFT bin indices, or None when they miss the bins."""
    bins = cfg.grid.offsets_hz() * n_big / fs_big
    rounded = np.round(bins)
    if np.max(np.abs(bins - rounded)) > 1e-6:
        return None
    return rounded.astype(np.int64)


def _signed_bins(n: int) -> np.ndarray:
    """FFT bin indices in fftfreq order: 0..n/2-1, -n/2..-1."""
    j = np.arange(n, dtype=np.int64)
    return np.where(j < (n + 1) // 2, j, j - n)


def build_tx(cfg: LinkConfig) -> TxData:
    """Build all channel transmitters and multiplex them onto one field.

    Each channel is modulated at a small multiple of the modem rate; when
    every grid offset lands on an FFT bin of the common window the channels
    are assembled directly in the frequency domain (an exact equivalent of
    frequency_shift + combine at the full rate).  Each laser starts at a
    seeded random phase, as independent carriers do.
    """
    modem = cfg.modem
    const = make_constellation(modem.qam_order)
    k = const.bits_per_symbol
    shaper = scro_taps(modem.rolloff, modem.samples_per_symbol, modem.span_symbols)
    n_sym = cfg.run.symbols_per_run
    master = RngSeed(cfg.run.master_seed)

    fs_global = cfg.global_sample_rate_hz()
    modem_rate = modem.symbol_rate_hz * modem.samples_per_symbol
    up_factor = cfg.global_samples_per_symbol() // modem.samples_per_symbol

    # Pad the per-channel window to an FFT-friendly length (keeps the big
    # transform sizes 5-smooth) while preserving the symbol grid.
    from scipy.fft import next_fast_len

    raw_len = n_sym * modem.samples_per_symbol + shaper.taps.size - 1
    n_m = next_fast_len(raw_len)
    n_big = n_m * up_factor
    offset_bins = _offset_bins(cfg, n_big, fs_global)

    fs_int = modem_rate * _TX_OVERSAMPLE
    n_int = n_m * _TX_OVERSAMPLE
    offsets = cfg.grid.offsets_hz()
    drive_scale_v = cfg.modulation_index * (2.0 / np.pi) * cfg.mzm.v_pi

    x_big = np.zeros(n_big, dtype=np.complex128) if offset_bins is not None else None
    total = None
    tx_bits, tx_symbols = [], []

    for ch in range(cfg.grid.channel_count):
        bits = prbs_generate(master.derive("bits", ch), n_sym * k, modem.prbs,
                             bit_rate_hz=modem.bit_rate_hz)
        syms = qam_map(bits, const)
        baseband = pulse_shape(syms, shaper)
        padded = np.zeros(n_m, dtype=np.complex128)
        padded[: baseband.n] = baseband.samples
        rf = quadrature_modulate(ComplexEnvelope(padded, modem_rate, 0.0),
                                 modem.rf_carrier_hz, occupied_bw_hz=modem.occupied_bw_hz)
        rf_int = resample_envelope(rf, fs_int)
        peak = float(np.max(np.abs(rf_int.samples.real)))
        drive = ComplexEnvelope(rf_int.samples.real * (drive_scale_v / peak), fs_int, 0.0)
        carrier = cw_laser(
            replace(cfg.laser, frequency_hz=cfg.grid.frequency_hz(ch)),
            n_int / fs_int, fs_int, seed=master.derive("laser", ch))
        phase = master.derive("phase", ch).rng().uniform(0.0, 2.0 * np.pi)
        carrier = ComplexEnvelope(carrier.samples * np.exp(1j * phase),
                                  fs_int, carrier.center_frequency_hz)
        field = mzm_modulate(carrier, drive, cfg.mzm)

        if offset_bins is not None:
            spec_int = signals.fft(field.samples) * (n_big / n_int)
            idx = _signed_bins(n_int)
            big_idx = (idx + offset_bins[ch]) % n_big
            x_big[big_idx] += spec_int
        else:
            field_g = resample_envelope(field, fs_global)
            shifted = frequency_shift(
                ComplexEnvelope(field_g.samples, fs_global, cfg.grid.center_hz),
                float(offsets[ch]))
            total = shifted.samples.copy() if total is None else total + shifted.samples
        tx_bits.append(bits.bits)
        tx_symbols.append(syms)

    if offset_bins is not None:
        total = signals.ifft(x_big)
    env = ComplexEnvelope(total, fs_global, cfg.grid.center_hz)
    return TxData(env, tx_bits, tx_symbols, shaper, modem_rate, n_m, offset_bins)


def _sample_symbols(env: ComplexEnvelope, shaper: PulseShaper, n_sym: int,
                    timing_offset: int, scalar: complex) -> SymbolStream:
    sps = shaper.samples_per_symbol
    start = shaper.group_delay_samples + timing_offset
    idx = start + np.arange(n_sym) * sps
    idx = idx[(idx >= 0) & (idx < env.n)]
    return SymbolStream(scalar * env.samples[idx], env.sample_rate_hz / sps, 1)


def _extract_channel(cfg: LinkConfig, tx: TxData, field: ComplexEnvelope,
                     x_big: np.ndarray | None, ch: int) -> ComplexEnvelope:
    """One channel's demuxed baseband field, decimated to the modem rate.

    The fast path slices the precomputed full-band spectrum at the channel's
    (integral) offset bin and applies the Gaussian demux response on the
    slice; this equals dwdm_demux followed by band-limited resampling.
    """
    f_ch = cfg.grid.frequency_hz(ch)
    if tx.fast_path and x_big is not None:
        n_m = tx.modem_samples
        j = _signed_bins(n_m)
        sl = (j + tx.offset_bins[ch]) % field.n
        f_rel = j * (tx.modem_rate_hz / n_m)
        u = f_rel / (cfg.demux_bandwidth_hz / 2.0)
        gauss = np.exp(-(np.log(2.0) / 2.0) * u ** (2 * cfg.demux_order))
        y = signals.ifft(x_big[sl] * gauss) * (n_m / field.n)
        return ComplexEnvelope(y, tx.modem_rate_hz, f_ch)
    demux = DemuxFilter(
        center_hz=f_ch,
        bandwidth_3db_hz=cfg.demux_bandwidth_hz,
        order=cfg.demux_order,
        grid_spacing_hz=cfg.grid.spacing_hz,
    )
    return resample_envelope(dwdm_demux(field, demux), tx.modem_rate_hz)


def _receive_channel(cfg: LinkConfig, tx: TxData, field: ComplexEnvelope,
                     x_big: np.ndarray | None, scenario: str, distance: float,
                     ch: int, master: RngSeed):
    """Demux, detect, demodulate, filter, calibrate and measure one channel."""
    modem = cfg.modem
    chan_field = _extract_channel(cfg, tx, field, x_big, ch)
    current_m = pin_detect(chan_field, cfg.pin, master.derive("pin", distance, ch))
    rf_spec = spectrum(current_m, cfg.run.rf_spectrum_rbw_hz)
    harm_db = harmonic_ratio(rf_spec, modem.rf_carrier_hz)

    base = quadrature_demodulate(current_m, modem.rf_carrier_hz, modem.lpf_cutoff_hz)
    if scenario == SCENARIO_SCRO:
        filt = ssig.fftconvolve(base.samples, tx.shaper.taps, mode="same")
    else:
        lpf = design_lowpass(modem.occupied_bw_hz / 2.0, base.sample_rate_hz)
        filt = ssig.fftconvolve(base.samples, lpf, mode="same")
    filt_env = ComplexEnvelope(filt, base.sample_rate_hz, 0.0)

    n_sym = cfg.run.symbols_per_run
    tx_syms = tx.tx_symbols[ch]
    raw = _sample_symbols(filt_env, tx.shaper, n_sym, 0, 1.0 + 0.0j)
    cal = estimate_calibration(raw, tx_syms)
    # Positive timing = rx delayed; realign by sampling that many symbols later.
    timing_samples = int(cal.timing_offset_samples) * tx.shaper.samples_per_symbol
    if timing_samples != 0:
        raw = _sample_symbols(filt_env, tx.shaper, n_sym, timing_samples, 1.0 + 0.0j)
        cal = estimate_calibration(raw, tx_syms)
    rx_syms = SymbolStream(cal.scalar * raw.symbols, raw.symbol_rate_hz,
                           tx_syms.bits_per_symbol)

    g = cfg.run.guard_symbols
    sl = slice(g, min(rx_syms.n, n_sym) - g)
    const = make_constellation(modem.qam_order)
    k = const.bits_per_symbol
    rx_win = SymbolStream(rx_syms.symbols[sl], rx_syms.symbol_rate_hz, k)
    tx_win = SymbolStream(tx_syms.symbols[sl], tx_syms.symbol_rate_hz, k)
    evm = evm_percent(rx_win, tx_win)
    rx_bits = qam_demap(rx_win, const)
    tx_bits = tx.tx_bits[ch][sl.start * k: sl.stop * k]
    errors, counted, _ = ber_count(tx_bits, rx_bits.bits)
    ber, source = reported_ber(errors, counted, evm, modem.qam_order)
    if source == "counted":
        q = q_from_ber(min(ber, 0.5))
    elif ber > 0.0:
        q = q_from_ber(min(ber, 0.5))
    else:
        q = q_from_ber(1.0 / max(tx_bits.size, 2))  # upper-bound Q for error-free runs
    cm = ChannelMetrics(
        channel=ch, freq_hz=cfg.grid.frequency_hz(ch), evm_percent=evm,
        ber=ber, ber_source=source, errors=errors, q_factor=q, harmonic_db=harm_db,
    )
    extras = {}
    if ch == cfg.run.eye_channel:
        extras["rf_spectrum"] = rf_spec
        extras["eye"] = eye_diagram(
            ComplexEnvelope(filt_env.samples.real.astype(np.complex128),
                            filt_env.sample_rate_hz, 0.0),
            1.0 / modem.symbol_rate_hz)
        extras["constellation"] = rx_win.symbols
    return cm, extras


@dataclass
class PointResult:
    scenario: str
    distance_km: float
    status: str = "ok"
    reason: str = ""
    metrics: MetricsReport | None = None
    power_log: list = field(default_factory=list)
    output_spectrum: object = None
    rf_spectrum: object = None
    eye: EyeData | None = None
    constellation: np.ndarray | None = None
    telemetry: dict = field(default_factory=dict)


@dataclass
class RunResult:
    config_echo: dict
    points: list[PointResult] = field(default_factory=list)
    input_spectrum: object = None
    tx_field_hash: str = ""
    telemetry: dict = field(default_factory=dict)

    def point(self, scenario: str, distance_km: float) -> PointResult:
        for p in self.points:
            if p.scenario == scenario and p.distance_km == distance_km:
                return p
        raise KeyError((scenario, distance_km))

    @property
    def all_ok(self) -> bool:
        return all(p.status == "ok" for p in self.points)


def config_echo(cfg: LinkConfig) -> dict:
    echo = asdict(cfg)
    echo["derived"] = {
        "symbol_rate_hz": cfg.modem.symbol_rate_hz,
        "global_sample_rate_hz": cfg.global_sample_rate_hz(),
        "global_samples_per_symbol": cfg.global_samples_per_symbol(),
        "fiber_beta2_ps2_per_km": cfg.fiber_beta2_ps2_per_km(),
        "fft_workers": signals.get_fft_workers(),
    }
    return echo


def run_scenario(cfg: LinkConfig, progress=None) -> RunResult:
    """Run every requested (scenario, distance) point.

    The transmitter and the shared span propagation are computed once per
    distance and reused by both scenarios (they share seeds and link plans by
    construction); per-point errors are recorded and the run continues.
    """
    t_start = time.perf_counter()
    master = RngSeed(cfg.run.master_seed)
    result = RunResult(config_echo=config_echo(cfg))

    def note(msg):
        if progress:
            progress(msg)

    note("building transmitter")
    tx = build_tx(cfg)
    result.tx_field_hash = envelope_hash(tx.total)
    result.input_spectrum = spectrum(tx.total, cfg.run.optical_spectrum_rbw_hz)

    for distance in cfg.run.distances_km:
        note(f"propagating {distance:g} km")
        plan = cfg.span_plan(distance)
        stats: dict = {}
        power_log: list = []
        t_prop = time.perf_counter()
        try:
            if plan:
                shared = link_propagate(tx.total, plan, cfg.ssfm,
                                        master.derive("link", distance),
                                        power_log=power_log, stats=stats)
            else:
                shared = tx.total
        except SimulationError as exc:
            for scenario in cfg.scenarios():
                result.points.append(PointResult(scenario, distance, "failed", str(exc)))
            continue
        prop_s = time.perf_counter() - t_prop

        for scenario in cfg.scenarios():
            note(f"receiving {scenario} @ {distance:g} km")
            t_rx = time.perf_counter()
            try:
                if scenario == SCENARIO_SOA:
                    p_in = mean_power(shared)
                    field = soa_amplify(shared, cfg.soa)
                    slog = power_log + [(len(plan), "soa",
                                         10 * np.log10(max(p_in, 1e-30) * 1e3),
                                         10 * np.log10(max(mean_power(field), 1e-30) * 1e3))]
                else:
                    field = shared
                    slog = list(power_log)
                x_big = signals.fft(field.samples) if tx.fast_path else None
                chans, extras_keep = [], {}
                for ch in range(cfg.grid.channel_count):
                    cm, extras = _receive_channel(cfg, tx, field, x_big, scenario,
                                                  distance, ch, master)
                    chans.append(cm)
                    extras_keep.update(extras)
                x_big = None
                point = PointResult(
                    scenario=scenario, distance_km=distance,
                    metrics=MetricsReport(tuple(chans)), power_log=slog,
                    output_spectrum=spectrum(field, cfg.run.optical_spectrum_rbw_hz),
                    rf_spectrum=extras_keep.get("rf_spectrum"),
                    eye=extras_keep.get("eye"),
                    constellation=extras_keep.get("constellation"),
                    telemetry={"ssfm_steps": stats.get("steps", 0),
                               "propagate_s": round(prop_s, 3),
                               "receive_s": round(time.perf_counter() - t_rx, 3)},
                )
                result.points.append(point)
            except SimulationError as exc:
                result.points.append(PointResult(scenario, distance, "failed", str(exc)))

    result.telemetry = {
        "wall_s": round(time.perf_counter() - t_start, 3),
        "fft_workers": signals.get_fft_workers(),
        "points_ok": sum(1 for p in result.points if p.status == "ok"),
        "points_failed": sum(1 for p in result.points if p.status != "ok"),
    }
    return result


# ---------------------------------------------------------------------------
# Artifact emission
# ---------------------------------------------------------------------------


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def _fmt(x) -> str:
    if isinstance(x, float):
        return format_decimal(x, 12)
    return str(x)


def emit_artifacts(result: RunResult, out_dir) -> dict:
    """Write every CSV artifact plus a manifest with content hashes.

    Emits the aggregate metrics table, per-point optical/RF spectra, eye and
    constellation exports, the distance and wavelength sweep tables, and the
    per-element link power logs.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigurationError(f"output directory not writable: {exc}") from None

    files: list[Path] = []

    def track(path):
        files.append(path)
        return path

    ok_points = [p for p in result.points if p.status == "ok" and p.metrics]

    if ok_points:
        rows = []
        for p in ok_points:
            for cm in p.metrics.channels:
                rows.append([p.scenario, _fmt(float(p.distance_km)), cm.channel,
                             _fmt(cm.freq_hz / 1e12), _fmt(cm.evm_percent), _fmt(cm.ber),
                             cm.ber_source, _fmt(cm.q_factor), _fmt(cm.harmonic_db)])
        _write_csv(track(out / "metrics.csv"),
                   ["scenario", "distance_km", "channel", "freq_thz", "evm_percent",
                    "ber", "ber_source", "q_factor", "harmonic_db"], rows)

        _write_csv(track(out / "evm_vs_distance.csv"),
                   ["scenario", "distance_km", "evm_percent"],
                   [[p.scenario, _fmt(float(p.distance_km)), _fmt(p.metrics.mean_evm_percent)]
                    for p in ok_points])
        _write_csv(track(out / "ber_vs_distance.csv"),
                   ["scenario", "distance_km", "ber"],
                   [[p.scenario, _fmt(float(p.distance_km)), _fmt(p.metrics.mean_ber)]
                    for p in ok_points])
        _write_csv(track(out / "q_vs_distance.csv"),
                   ["scenario", "distance_km", "q_factor"],
                   [[p.scenario, _fmt(float(p.distance_km)), _fmt(p.metrics.mean_q_factor)]
                    for p in ok_points])

        max_d = max(p.distance_km for p in ok_points)
        rows = []
        for p in ok_points:
            if p.distance_km == max_d:
                for cm in p.metrics.channels:
                    rows.append([p.scenario, cm.channel, _fmt(cm.freq_hz / 1e12),
                                 _fmt(cm.ber), cm.ber_source])
        _write_csv(track(out / "ber_vs_wavelength.csv"),
                   ["scenario", "channel", "freq_thz", "ber", "ber_source"], rows)

    if result.input_spectrum is not None and ok_points:
        path = track(out / "spectrum_input.csv")
        result.input_spectrum.to_csv(path)

    for p in ok_points:
        tag = f"{p.scenario}_{p.distance_km:g}km"
        if p.output_spectrum is not None:
            p.output_spectrum.to_csv(track(out / f"spectrum_output_{tag}.csv"))
        if p.rf_spectrum is not None:
            p.rf_spectrum.to_csv(track(out / f"rf_spectrum_{tag}.csv"))
        if p.eye is not None:
            p.eye.to_csv(track(out / f"eye_{tag}.csv"))
        if p.constellation is not None:
            _write_csv(track(out / f"constellation_{tag}.csv"),
                       ["channel", "symbol_index", "i", "q"],
                       [[result.config_echo["run"]["eye_channel"], i,
                         _fmt(float(s.real)), _fmt(float(s.imag))]
                        for i, s in enumerate(p.constellation)])
        if p.power_log:
            _write_csv(track(out / f"link_power_{tag}.csv"),
                       ["element_index", "element_type", "input_dbm", "output_dbm"],
                       [[i, kind, _fmt(pi), _fmt(po)] for i, kind, pi, po in p.power_log])

    manifest = {
        "config": result.config_echo,
        "telemetry": result.telemetry,
        "tx_field_hash": result.tx_field_hash,
        "failures": [
            {"scenario": p.scenario, "distance_km": p.distance_km, "reason": p.reason}
            for p in result.points if p.status != "ok"
        ],
        "files": [],
    }
    for path in sorted(files):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        manifest["files"].append({"name": path.name, "sha256": digest,
                                  "bytes": path.stat().st_size})
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
    return manifest
