"""Acoustic parameter maps from ranked spectral estimates.

The two ranked components carry everything: the first echo's frequency
gives thickness and (with the second) the speed of sound, its amplitude
the impedance, the second component's damping the attenuation. Pixels
whose (c, Z) leave the physically admissible tissue ranges are flagged
as outliers rather than discarded, so maps stay complete.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import estimators, spectrum_prep
from .estimators import ReweightConfig, SpectralEstimate
from .hankel_admm import ADMMConfig
from .signal_forward import MediumConstants, RFTrace, attenuation_from_damping
from .spectrum_prep import BandSelection
from .units import UM_PER_M

C_ADMISSIBLE = (1500.0, 2200.0)   # m/s, closed interval
Z_ADMISSIBLE = (1.48, 2.2)        # MRayl, closed interval

METHODS = ("hk", "rhk", "ar", "esprit")


@dataclass(frozen=True)
class AcousticEstimate:
    """Per-pixel acoustic parameters (I/O units) with outlier provenance."""

    c: float = float("nan")       # m/s
    Z: float = float("nan")       # MRayl
    alpha: float = float("nan")   # dB/MHz/cm
    d: float = float("nan")       # um
    outlier: bool = True
    failure_reason: str | None = None


@dataclass
class AcousticMap:
    rows: int
    cols: int
    step_um: float
    cells: list[list[AcousticEstimate]]

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("map dimensions must be positive")
        if len(self.cells) != self.rows or any(len(r) != self.cols for r in self.cells):
            raise ValueError("cell grid does not match the declared dimensions")

    @property
    def outlier_pct(self) -> float:
        flags = [cell.outlier for row in self.cells for cell in row]
        return 100.0 * sum(flags) / len(flags)

    def values(self, name: str, include_outliers: bool = False) -> np.ndarray:
        out = [getattr(cell, name) for row in self.cells for cell in row
               if include_outliers or not cell.outlier]
        return np.asarray(out)


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for the per-pixel estimation chain."""

    method: str = "rhk"
    band: BandSelection = field(default_factory=BandSelection)
    P: int | None = 2                  # None: pick order from Hankel energy
    order_energy_frac: float = 0.10
    order_min: int = 2
    cadzow_iters: int = 1
    admm: ADMMConfig = field(default_factory=ADMMConfig)
    reweight: ReweightConfig = field(default_factory=ReweightConfig)
    medium: MediumConstants = field(default_factory=MediumConstants)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.cadzow_iters < 0:
            raise ValueError("cadzow iteration count must be nonnegative")


def spectral_to_acoustic(est: SpectralEstimate, mc: MediumConstants,
                         fs: float) -> AcousticEstimate:
    """Invert a ranked two-component estimate to (c, Z, alpha, d).

    Never raises for finite inputs: unusable estimates come back as
    outliers carrying a reason.
    """
    if not est.ok:
        return AcousticEstimate(failure_reason=est.failure)
    if est.P < 2:
        return AcousticEstimate(failure_reason="need two ranked components")
    gamma = est.gamma
    nu = est.nu
    a1 = est.a[0]
    if not (np.all(np.isfinite(gamma[:2])) and np.all(np.isfinite(nu[:2]))
            and np.isfinite(a1)):
        return AcousticEstimate(failure_reason="non-finite spectral parameters")
    if nu[0] == nu[1]:
        return AcousticEstimate(failure_reason="coincident echo frequencies")
    if nu[0] == 0:
        return AcousticEstimate(failure_reason="vanishing first-echo frequency")
    c = mc.c_w * nu[0] / (nu[0] - nu[1])
    d_um = 0.5 * mc.c_w * (nu[0] / fs) * UM_PER_M
    alpha_db = attenuation_from_damping(gamma[1], mc.c_w, nu[0])
    A1 = float(np.real(a1))
    ratio = A1 / mc.R_wg
    if ratio == 1.0:
        return AcousticEstimate(failure_reason="impedance pole: A1 equals R_wg")
    Z = mc.Z_w * (1.0 + ratio) / (1.0 - ratio)
    values = (c, Z, alpha_db, d_um)
    if not all(np.isfinite(values)):
        return AcousticEstimate(failure_reason="non-finite acoustic parameters")
    ae = AcousticEstimate(c=c, Z=Z, alpha=alpha_db, d=d_um, outlier=False)
    if classify_outlier(ae):
        ae = AcousticEstimate(c=c, Z=Z, alpha=alpha_db, d=d_um, outlier=True,
                              failure_reason="outside admissible (c, Z) ranges")
    return ae


def classify_outlier(ae: AcousticEstimate) -> bool:
    """True when (c, Z) leaves the admissible tissue ranges (closed intervals)."""
    if not (np.isfinite(ae.c) and np.isfinite(ae.Z)):
        return True
    return (ae.c < C_ADMISSIBLE[0] or ae.c > C_ADMISSIBLE[1]
            or ae.Z < Z_ADMISSIBLE[0] or ae.Z > Z_ADMISSIBLE[1])


def run_estimator(x, method: str, P: int, cfg: PipelineConfig) -> SpectralEstimate:
    if method == "hk":
        return estimators.estimate_hk(x, P, cfg.admm)
    if method == "rhk":
        return estimators.estimate_rhk(x, P, cfg.admm, cfg.reweight)
    if method == "ar":
        return estimators.estimate_ar(x, P)
    if method == "esprit":
        return estimators.estimate_esprit(x, P)
    raise ValueError(f"unknown method {method!r}")


def estimate_pixel(trace: RFTrace, h0: RFTrace, cfg: PipelineConfig) -> AcousticEstimate:
    """Full chain for one scan position: normalize, denoise, estimate, rank, invert.

    The Cadzow pre-filter feeds the Hankel and autoregressive estimators;
    the subspace baseline runs on the unfiltered spectrum, as the
    classical method would.
    """
    try:
        x = spectrum_prep.normalized_spectrum(trace, h0, cfg.band)
    except ValueError as exc:
        return AcousticEstimate(failure_reason=f"spectrum: {exc}")
    P = cfg.P
    if P is None:
        P = spectrum_prep.select_model_order(x, cfg.order_min, cfg.order_energy_frac)
    if cfg.method != "esprit" and cfg.cadzow_iters > 0 and P < x.N + 1:
        x = spectrum_prep.cadzow(x, P, cfg.cadzow_iters)
    est = run_estimator(x, cfg.method, P, cfg)
    ranked, _ = estimators.rank_pulses(est, h0)
    return spectral_to_acoustic(ranked, cfg.medium, trace.fs)


def build_map(traces: np.ndarray, h0: RFTrace, cfg: PipelineConfig,
              step_um: float = 1.0) -> AcousticMap:
    """Apply the pixel chain over a (rows, cols, samples) scan array."""
    traces = np.asarray(traces, dtype=np.float64)
    if traces.ndim != 3:
        raise ValueError("expected a (rows, cols, samples) array")
    rows, cols, _ = traces.shape
    cells = []
    for i in range(rows):
        row = []
        for j in range(cols):
            try:
                trace = RFTrace(samples=traces[i, j], fs=h0.fs)
                row.append(estimate_pixel(trace, h0, cfg))
            except ValueError as exc:
                row.append(AcousticEstimate(failure_reason=f"trace: {exc}"))
        cells.append(row)
    return AcousticMap(rows=rows, cols=cols, step_um=step_um, cells=cells)


def map_to_csv(amap: AcousticMap, path) -> None:
    """One row per pixel: row, col, c, Z, alpha, d, outlier."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["row", "col", "c", "Z", "alpha", "d", "outlier"])
        for i, row in enumerate(amap.cells):
            for j, cell in enumerate(row):
                writer.writerow([i, j,
                                 _fmt(cell.c), _fmt(cell.Z), _fmt(cell.alpha), _fmt(cell.d),
                                 int(cell.outlier)])


def map_summary(amap: AcousticMap) -> dict:
    """Percentile summary of the inlier distributions plus the outlier rate."""
    qs = (5, 25, 50, 75, 95)
    summary = {
        "rows": amap.rows,
        "cols": amap.cols,
        "step_um": amap.step_um,
        "outlier_pct": amap.outlier_pct,
        "parameters": {},
    }
    for name in ("c", "Z", "alpha", "d"):
        vals = amap.values(name)
        if vals.size:
            summary["parameters"][name] = {
                f"p{q}": float(np.percentile(vals, q)) for q in qs
            }
        else:
            summary["parameters"][name] = None
    return summary


def write_map_summary(amap: AcousticMap, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(map_summary(amap), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(v: float) -> str:
    return "" if not np.isfinite(v) else format(v, ".10g")
