"""Line-shape measurements on beam spectra.

Spectra are densities (atoms per unit abscissa) sampled on a monotonic
abscissa: wavenumber, angular frequency or energy.  Estimators return
:class:`LineMeasurement` records and never hide their fit residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, optimize, signal
from scipy.constants import hbar

from .errors import ClippedSpectrumError, DivergenceError, MeasurementError, MultiPeakError

LORENTZIAN_XTOL = 1e-10


class ModelMismatchError(MeasurementError):
    pass


@dataclass(frozen=True)
class Spectrum:
    abscissa: np.ndarray
    density: np.ndarray
    t: float = 0.0
    unit: str = "k"
    provenance: str = ""

    def __post_init__(self):
        x = np.asarray(self.abscissa, dtype=float)
        y = np.asarray(self.density, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError("abscissa and density must be 1D arrays of equal length")
        if np.any(np.diff(x) <= 0):
            raise ValueError("abscissa must be strictly increasing")
        if np.any(y < 0):
            raise ValueError("spectral density must be non-negative")
        object.__setattr__(self, "abscissa", x)
        object.__setattr__(self, "density", y)

    @property
    def uniform(self):
        d = np.diff(self.abscissa)
        return bool(np.allclose(d, d[0], rtol=1e-9, atol=0))

    def number(self):
        """Atoms in the spectrum: a Riemann sum on uniform grids, trapezoid otherwise."""
        if self.uniform:
            return float(self.density.sum() * (self.abscissa[1] - self.abscissa[0]))
        return float(integrate.trapezoid(self.density, self.abscissa))

    def scaled(self, factor):
        return replace(self, density=self.density * factor)

    def window(self, lo, hi):
        m = (self.abscissa >= lo) & (self.abscissa <= hi)
        return replace(self, abscissa=self.abscissa[m], density=self.density[m])


@dataclass(frozen=True)
class LineMeasurement:
    fwhm: float
    center: float
    residual: float
    method: str
    unit: str = "k"
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.fwhm > 0:
            raise MeasurementError(f"non-positive width {self.fwhm!r}")


def _crossing(x, y, i, j, level):
    """Abscissa where the segment (i, j) crosses ``level``."""
    return x[i] + (level - y[i]) * (x[j] - x[i]) / (y[j] - y[i])


def _half_max_intervals(y, level):
    above = y >= level
    edges = np.flatnonzero(np.diff(above.astype(np.int8)))
    starts = list(edges[~above[edges]] + 1)
    ends = list(edges[above[edges]])
    if above[0]:
        starts.insert(0, 0)
    if above[-1]:
        ends.append(y.size - 1)
    return list(zip(starts, ends))


def measure_fwhm(s, policy="strict"):
    """Direct full width at half maximum.

    Half-maximum crossings are located by linear interpolation and the
    centre is their midpoint.  With ``policy="strict"`` more than one
    disjoint region above half maximum raises :class:`MultiPeakError`;
    ``policy="outer"`` measures between the outermost crossings instead,
    which is the envelope width of structured (chirped) lines.
    """
    x, y = s.abscissa, s.density
    peak = float(y.max())
    if peak <= 0:
        raise MeasurementError("empty spectrum")
    level = 0.5 * peak
    intervals = _half_max_intervals(y, level)
    if len(intervals) > 1 and policy == "strict":
        raise MultiPeakError(f"{len(intervals)} disjoint half-maximum regions")
    lo, hi = intervals[0][0], intervals[-1][1]
    if lo == 0 or hi == y.size - 1:
        raise ClippedSpectrumError("line is clipped by the sampling window")
    left = _crossing(x, y, lo - 1, lo, level)
    right = _crossing(x, y, hi, hi + 1, level)
    method = "direct-fwhm" if len(intervals) == 1 else "direct-fwhm-outer"
    return LineMeasurement(right - left, 0.5 * (left + right), float("nan"), method, s.unit,
                           {"n_regions": len(intervals)})


def lorentzian(x, amplitude, center, fwhm):
    return amplitude / (1.0 + ((x - center) / (0.5 * fwhm)) ** 2)


def fit_lorentzian(s, max_nfev=2000):
    """Least-squares Lorentzian fit of amplitude, centre and FWHM.

    Initialization: centre and width from the first and second moments of
    the region above half maximum (width falls back to the direct FWHM when
    that is measurable), amplitude from the peak sample.  Converges when
    the relative parameter change drops below 1e-10.  The reported residual
    is the rms misfit relative to the peak.
    """
    x, y = s.abscissa, s.density
    peak = float(y.max())
    if peak <= 0:
        raise MeasurementError("empty spectrum")
    core = y >= 0.5 * peak
    w = y[core]
    c0 = float(np.sum(w * x[core]) / np.sum(w))
    try:
        g0 = measure_fwhm(s, policy="outer").fwhm
    except MeasurementError:
        var = float(np.sum(w * (x[core] - c0) ** 2) / np.sum(w))
        g0 = max(2.0 * math.sqrt(var), 2.0 * float(np.min(np.diff(x))))
    scale = float(x[-1] - x[0])

    # scaled variables: amplitude/peak, (centre - c0)/g0, width/g0
    def model(u):
        return lorentzian(x, u[0] * peak, c0 + u[1] * g0, u[2] * g0)

    sol = optimize.least_squares(lambda u: (model(u) - y) / peak, x0=[1.0, 0.0, 1.0],
                                 xtol=LORENTZIAN_XTOL, ftol=1e-15, gtol=1e-15,
                                 max_nfev=max_nfev, method="lm")
    if not sol.success:
        raise DivergenceError(f"Lorentzian fit did not converge: {sol.message}")
    amp, center, width = sol.x[0] * peak, c0 + sol.x[1] * g0, abs(sol.x[2] * g0)
    if width >= scale or width <= float(np.min(np.diff(x))) * 1e-3:
        raise MeasurementError(f"fitted width {width:.4g} hit the grid bounds")
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    return LineMeasurement(width, center, rms, "lorentzian-fit", s.unit, {"amplitude": amp})


@dataclass(frozen=True)
class DrainFit:
    rate: float
    n0: float
    residual: float
    monotone: bool


def fit_drain_time(t, n, strict=True, noise=1e-9):
    """Log-linear fit N(t) = N0 exp(-rate t); returns the inverse drain time.

    Needs at least 10 samples spanning one fitted drain time.  Growth of N
    beyond ``noise`` (relative) raises :class:`ModelMismatchError` when
    ``strict``; otherwise the fit is returned with ``monotone=False``.
    """
    t = np.asarray(t, dtype=float)
    n = np.asarray(n, dtype=float)
    if t.size < 10:
        raise MeasurementError("need at least 10 samples")
    if np.any(n <= 0):
        raise MeasurementError("atom numbers must be positive for a log fit")
    monotone = bool(np.all(np.diff(n) <= noise * n[:-1]))
    if strict and not monotone:
        raise ModelMismatchError("condensate number is not monotonically decreasing")
    slope, intercept = np.polyfit(t, np.log(n), 1)
    rate = -float(slope)
    if strict and rate * (t[-1] - t[0]) < 1.0:
        raise MeasurementError("samples span less than one drain time")
    fitted = intercept + slope * t
    residual = float(np.sqrt(np.mean((np.log(n) - fitted) ** 2)))
    return DrainFit(rate, float(np.exp(intercept)), residual, monotone)


def support_width(s, fraction=0.95):
    """Width of the central interval holding ``fraction`` of the atoms."""
    x, y = s.abscissa, s.density
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))))
    total = cum[-1]
    if total <= 0:
        raise MeasurementError("empty spectrum")
    tail = 0.5 * (1.0 - fraction) * total
    lo = float(np.interp(tail, cum, x))
    hi = float(np.interp(total - tail, cum, x))
    if hi <= lo:
        raise MeasurementError("support interval collapsed")
    return LineMeasurement(hi - lo, 0.5 * (lo + hi), float("nan"),
                           f"support-{round(100 * fraction)}", s.unit)


@dataclass
class ChirpTrack:
    times: np.ndarray
    centers: np.ndarray
    widths: np.ndarray
    failures: dict

    @property
    def drift(self):
        ok = np.isfinite(self.centers)
        c = self.centers[ok]
        return float(c[-1] - c[0]) if c.size else float("nan")

    @property
    def descending_fraction(self):
        c = self.centers[np.isfinite(self.centers)]
        if c.size < 2:
            return float("nan")
        return float(np.mean(np.diff(c) < 0))


def track_line_center(spectra, policy="outer"):
    """Line centre and direct FWHM of each snapshot.

    Snapshots the estimator rejects become NaN gaps; their errors are kept
    in ``failures`` keyed by snapshot index.
    """
    times, centers, widths, failures = [], [], [], {}
    for i, s in enumerate(spectra):
        times.append(s.t)
        try:
            m = measure_fwhm(s, policy=policy)
        except MeasurementError as exc:
            failures[i] = exc
            centers.append(np.nan)
            widths.append(np.nan)
        else:
            centers.append(m.center)
            widths.append(m.fwhm)
    return ChirpTrack(np.array(times), np.array(centers), np.array(widths), failures)


def peak_decompose(s, prominence=0.01):
    """Local maxima with prominence above ``prominence`` times the global
    maximum, each with its own interpolated half-height width."""
    y = s.density
    peak = float(y.max())
    if peak <= 0:
        raise MeasurementError("empty spectrum")
    idx, _ = signal.find_peaks(y, prominence=prominence * peak)
    if idx.size == 0:
        raise MeasurementError("no peak passes the prominence threshold")
    widths, _, left, right = signal.peak_widths(y, idx, rel_height=0.5)
    grid = np.arange(y.size)
    out = []
    for i, lo, hi in zip(idx, left, right):
        xl = float(np.interp(lo, grid, s.abscissa))
        xr = float(np.interp(hi, grid, s.abscissa))
        out.append(LineMeasurement(xr - xl, float(s.abscissa[i]), float("nan"), "peak-decompose",
                                   s.unit, {"height": float(y[i]), "index": int(i)}))
    return out


def field_momentum_spectrum(psi, dx, x0=0.0, pad=4, t=0.0, provenance=""):
    """|psi(k)|^2 of a sampled field with the unitary transform
    (2 pi)^-1/2 int psi(x) exp(-ikx) dx, zero-padded ``pad`` times.

    The result is sorted by k and sums (times dk) to int |psi|^2 dx.
    """
    psi = np.asarray(psi)
    n = psi.size * pad
    spec = np.fft.fft(psi, n) * dx / math.sqrt(2.0 * math.pi)
    k = 2.0 * math.pi * np.fft.fftfreq(n, d=dx)
    spec *= np.exp(-1j * k * x0)
    order = np.argsort(k)
    return Spectrum(k[order], np.abs(spec[order]) ** 2, t, "k", provenance)


def energy_width(fwhm_k, center_k, mass):
    """Jacobian conversion of a narrow k-space width to energy (J)."""
    return hbar**2 * abs(center_k) * fwhm_k / mass


def to_energy(s, mass):
    """Re-express a k spectrum (k > 0 part) as a density per unit energy."""
    if s.unit != "k":
        raise ValueError("to_energy expects a wavenumber spectrum")
    m = s.abscissa > 0
    k = s.abscissa[m]
    e = hbar**2 * k**2 / (2.0 * mass)
    return Spectrum(e, s.density[m] * mass / (hbar**2 * k), s.t, "E", s.provenance)


def loglog_slope(t, width, window=None):
    """Least-squares slope of log(width) against log(t), optionally inside
    ``window = (t_lo, t_hi)``."""
    t = np.asarray(t, dtype=float)
    w = np.asarray(width, dtype=float)
    m = np.isfinite(w) & (t > 0) & (w > 0)
    if window is not None:
        m &= (t >= window[0]) & (t <= window[1])
    if m.sum() < 2:
        raise MeasurementError("need two finite points for a slope")
    return float(np.polyfit(np.log(t[m]), np.log(w[m]), 1)[0])


def extrapolate_line_center(times, centers, t_min=0.0, n_points=4, degree=2):
    """Line centre at t = 0 from a polynomial fit to the first ``n_points``
    finite centres at or after ``t_min``.

    Early snapshots of a chirped line are biased by the Fourier width and
    by atoms still climbing down the mean-field hill, so the initial centre
    is best read off the smooth track that follows.
    """
    t = np.asarray(times, dtype=float)
    c = np.asarray(centers, dtype=float)
    m = np.isfinite(c) & (t >= t_min)
    t, c = t[m][:n_points], c[m][:n_points]
    if t.size < degree + 1:
        raise MeasurementError(f"need {degree + 1} finite centres after t = {t_min}")
    return float(np.polyval(np.polyfit(t, c, degree), 0.0))


def is_monotone(values, increasing=True):
    """True if the finite entries are strictly monotone in the given direction."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    d = np.diff(v)
    return bool(v.size >= 2 and np.all(d > 0 if increasing else d < 0))
