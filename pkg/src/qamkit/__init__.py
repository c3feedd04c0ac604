"""Hankel-based spectral estimation and CRB benchmarks for acoustic microscopy RF data."""

__version__ = "0.1.0"

from . import _kernels
from .signal_forward import (ExponentialModel, GroundTruth, MediumConstants, RFTrace,
                             acoustic_to_spectral, simulate_trace, synth_reference)
from .spectrum_prep import (BandSelection, NormalizedSpectrum, cadzow,
                            normalized_spectrum, select_model_order)
from .hankel_admm import ADMMConfig, HankelSolution, SolverError, antidiag_avg, hankel, solve
from .estimators import (ReweightConfig, SpectralEstimate, estimate_ar, estimate_esprit,
                         estimate_hk, estimate_rhk, extract_frequencies, ls_amplitudes,
                         rank_pulses, tukey_weight)
from .acoustics import (AcousticEstimate, AcousticMap, PipelineConfig, build_map,
                        classify_outlier, estimate_pixel, spectral_to_acoustic)
from .crb import CRBReport, ThetaVector, approx_sigma2, crb_acoustic, crb_spectral, fim
from .harness import (ExperimentManifest, SweepResult, emit_tables, ingest_scan,
                      load_manifest, rmse, run_sweep)


def warmup():
    """Precompile the JIT kernels (no-op on the numpy fallback path)."""
    _kernels.warmup()
