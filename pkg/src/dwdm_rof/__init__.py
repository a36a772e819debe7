"""DWDM radio-over-fiber physical-layer simulator."""

from .channel import (EdfaParams, FiberParams, SoaParams, SsfmConfig,
                      dispersion_to_beta2, edfa_amplify, link_propagate,
                      propagate_ssfm, soa_amplify)
from .exceptions import (AliasingError, ConfigurationError, ResolutionError,
                         SimulationError)
from .harness import (LinkConfig, ModemConfig, RunConfig, RunResult,
                      default_config, emit_artifacts, load_config,
                      run_scenario, validate_strict_paper)
from .metrics import (EyeData, MetricsReport, ber_count, ber_from_evm,
                      ber_from_q, eye_diagram, evm_percent, harmonic_ratio,
                      q_from_ber)
from .rxchain import (DemuxFilter, PinParams, RxCalibration, dwdm_demux,
                      estimate_calibration, matched_filter_sample, pin_detect,
                      quadrature_demodulate, qam_demap)
from .signals import (BitStream, ComplexEnvelope, RngSeed, SpectrumEstimate,
                      SymbolStream, combine, frequency_shift, mean_power,
                      resample_envelope, set_fft_workers, spectrum)
from .txchain import (LaserParams, MzmParams, PulseShaper, QamConstellation,
                      WdmGrid, cw_laser, dwdm_mux, make_constellation,
                      mzm_modulate, prbs_generate, pulse_shape, qam_map,
                      quadrature_modulate, scro_taps)

__version__ = "0.1.0"
