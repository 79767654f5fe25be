"""Photocount statistics from scattering strengths and scattering spectra.

Everything here reduces to one object: the per-mode emission weight
``mu_n = (1 - sigma_n) * f`` built from a scattering strength ``sigma_n``
(eigenvalue of S S-dagger) and the signed thermal occupation ``f``.  In the
long-time, frequency-resolved regime the counting distribution is a
convolution of negative-binomial laws with non-integer shape ``nu / N`` and
means ``(nu / N) * mu_n``; its factorial cumulants, effective degrees of
freedom and Monte Carlo samples all follow from the same weights.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import ConvergenceError, RegimeError, ValidationError

__all__ = [
    "Regime",
    "OccupationFactor",
    "CountingWindow",
    "ScatteringStrengths",
    "FactorialCumulants",
    "PhotocountPMF",
    "SpectralScatteringData",
    "bose_einstein",
    "black_body_pmf",
    "factorial_cumulants",
    "mean_variance",
    "nu_eff",
    "nu_eff_ratio",
    "pmf_from_strengths",
    "sample_counts",
    "log_generating_long_time",
    "log_generating_short_time",
    "pmf_from_log_generating",
    "default_extraction_radius",
    "tv_distance",
    "tv_distance_counts",
]

# Strengths straddling 1 beyond this tolerance are a mixed (rejected) regime;
# within it they are round-off on the lossless boundary.
REGIME_TOL = 1e-9

# Per-mode tail mass discarded when building convolution factors.
_MODE_TAIL_MASS = 1e-14

# Above this mode count the convolution switches to the transform path.
_DIRECT_CONV_MAX_MODES = 64

_TWO_PI = 2.0 * math.pi


class Regime(enum.Enum):
    """Global definiteness class of ``1 - S S†``."""

    ABSORBING = "absorbing"
    AMPLIFYING = "amplifying"


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OccupationFactor:
    """Signed mean thermal occupation per mode.

    Positive values describe an absorbing medium in equilibrium; values at or
    below -1 describe a linear amplifier (population inversion), with -1 the
    completely inverted limit.  The open interval (-1, 0] is unphysical.
    """

    value: float

    def __post_init__(self) -> None:
        v = float(self.value)
        if not math.isfinite(v):
            raise ValidationError(f"occupation factor must be finite, got {v!r}")
        if -1.0 < v <= 0.0:
            raise ValidationError(
                f"occupation factor {v} lies in the forbidden interval (-1, 0]"
            )
        object.__setattr__(self, "value", v)

    @property
    def regime(self) -> Regime:
        return Regime.AMPLIFYING if self.value <= -1.0 else Regime.ABSORBING

    @classmethod
    def coerce(cls, f: "OccupationFactor | float") -> "OccupationFactor":
        return f if isinstance(f, OccupationFactor) else cls(float(f))


def bose_einstein(omega: float, temperature: float) -> OccupationFactor:
    """Thermal occupation 1/(exp(omega/T) - 1) with omega in units of k_B/hbar.

    ``temperature`` may be negative, which models a linear amplifier; the
    T -> 0- limit is complete population inversion (occupation -1).
    """
    if omega <= 0.0:
        raise ValidationError(f"omega must be positive, got {omega}")
    if temperature == 0.0:
        raise ValidationError("temperature must be nonzero")
    x = omega / temperature
    if x > 700.0:  # exp overflow; occupation is indistinguishable from 0+
        raise ValidationError(
            f"omega/T = {x:.3g} gives an occupation below the positive float range"
        )
    return OccupationFactor(1.0 / math.expm1(x))


@dataclass(frozen=True)
class CountingWindow:
    """Detection parameters: mode count, counting time, frequency interval.

    The derived number of degrees of freedom is
    ``nu = n_modes * t * delta_omega / (2 pi)``.  Optional coherence scales
    ``omega_c`` (variation scale of S S†) and ``big_omega_c`` (deviation scale
    from unitarity) are used only for regime warnings.
    """

    n_modes: int
    t: float
    delta_omega: float
    omega_c: float | None = None
    big_omega_c: float | None = None

    def __post_init__(self) -> None:
        if int(self.n_modes) != self.n_modes or self.n_modes < 1:
            raise ValidationError(f"n_modes must be a positive integer, got {self.n_modes}")
        if not (self.t > 0.0) or not (self.delta_omega > 0.0):
            raise ValidationError("counting time and frequency interval must be positive")
        object.__setattr__(self, "n_modes", int(self.n_modes))

    @property
    def nu(self) -> float:
        return self.n_modes * self.t * self.delta_omega / _TWO_PI

    @classmethod
    def from_nu(cls, nu: float, n_modes: int = 1, **kwargs) -> "CountingWindow":
        """Window with unit counting time realizing the requested ``nu``."""
        if nu <= 0.0:
            raise ValidationError(f"nu must be positive, got {nu}")
        return cls(n_modes=n_modes, t=1.0, delta_omega=_TWO_PI * nu / n_modes, **kwargs)

    def is_frequency_resolved_long_time(self, threshold: float = 20.0) -> bool:
        """True when t * delta_omega exceeds ``threshold`` periods of 2 pi."""
        return self.t * self.delta_omega >= threshold * _TWO_PI

    def regime_warnings(self, threshold: float = 20.0) -> tuple[str, ...]:
        warns = []
        if not self.is_frequency_resolved_long_time(threshold):
            warns.append(
                "counting window has t*delta_omega = "
                f"{self.t * self.delta_omega / _TWO_PI:.3g} cycles of 2*pi; "
                "frequency-resolved long-time statistics assume >> 1"
            )
        if self.omega_c is not None and self.omega_c * self.t < 10.0:
            warns.append(
                f"omega_c*t = {self.omega_c * self.t:.3g}; long-time expressions assume >> 1"
            )
        if self.big_omega_c is not None and self.big_omega_c * self.t > 0.1:
            warns.append(
                f"Omega_c*t = {self.big_omega_c * self.t:.3g}; "
                "short-time expressions assume << 1"
            )
        return tuple(warns)


@dataclass(frozen=True)
class ScatteringStrengths:
    """Eigenvalues of S S† with their global regime.

    Absorbing spectra lie in [0, 1], amplifying spectra in [1, inf); values
    may sit on the lossless boundary within round-off (REGIME_TOL).
    """

    sigma: np.ndarray
    regime: Regime

    def __post_init__(self) -> None:
        arr = np.asarray(self.sigma, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("sigma must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("sigma contains non-finite entries")
        if np.any(arr < -REGIME_TOL):
            raise ValidationError("scattering strengths must be nonnegative")
        if self.regime is Regime.ABSORBING and np.any(arr > 1.0 + REGIME_TOL):
            raise RegimeError("absorbing strengths must satisfy sigma <= 1")
        if self.regime is Regime.AMPLIFYING and np.any(arr < 1.0 - REGIME_TOL):
            raise RegimeError("amplifying strengths must satisfy sigma >= 1")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "sigma", arr)

    @classmethod
    def from_values(cls, values) -> "ScatteringStrengths":
        """Classify a raw vector; mixed spectra straddling 1 are rejected."""
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("sigma must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("sigma contains non-finite entries")
        if np.max(arr) <= 1.0 + REGIME_TOL:
            return cls(arr, Regime.ABSORBING)
        if np.min(arr) >= 1.0 - REGIME_TOL:
            return cls(arr, Regime.AMPLIFYING)
        raise RegimeError(
            "strengths lie on both sides of 1; absorbing and amplifying modes "
            "cannot be mixed in one spectrum"
        )

    @property
    def n_modes(self) -> int:
        return self.sigma.size

    def mu(self, f: OccupationFactor | float) -> np.ndarray:
        """Per-mode emission weights (1 - sigma) * f, checked nonnegative."""
        occ = OccupationFactor.coerce(f)
        if occ.regime is not self.regime:
            raise RegimeError(
                f"{self.regime.value} strengths require a matching occupation sign; "
                f"got f = {occ.value}"
            )
        weights = (1.0 - self.sigma) * occ.value
        # Boundary round-off only; anything larger was caught above.
        return np.maximum(weights, 0.0)


@dataclass(frozen=True)
class FactorialCumulants:
    """Factorial cumulants kappa_p for p = 1..p_max (index 0 is p = 1)."""

    kappa: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.kappa, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("kappa must be a non-empty 1-D vector")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "kappa", arr)

    @property
    def p_max(self) -> int:
        return self.kappa.size

    def __getitem__(self, p: int) -> float:
        if not 1 <= p <= self.p_max:
            raise IndexError(f"kappa_{p} not available (p_max = {self.p_max})")
        return float(self.kappa[p - 1])


def mean_variance(kappa: FactorialCumulants) -> tuple[float, float]:
    """Mean and variance of the count: (kappa_1, kappa_1 + kappa_2)."""
    if kappa.p_max < 2:
        raise ValidationError("variance needs cumulants up to p = 2")
    return kappa[1], kappa[1] + kappa[2]


@dataclass(frozen=True)
class PhotocountPMF:
    """Probability table P(0..n_max) plus the mass beyond the table.

    ``probs.sum() + truncation_mass == 1`` within 1e-12 by construction;
    builders attach a warning when the truncated mass exceeds their bound.
    """

    probs: np.ndarray
    truncation_mass: float
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self) -> None:
        arr = np.asarray(self.probs, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValidationError("probs must be a non-empty 1-D vector")
        if np.any(arr < 0.0) or self.truncation_mass < 0.0:
            raise ValidationError("probabilities must be nonnegative")
        total = float(arr.sum()) + float(self.truncation_mass)
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"pmf mass {total!r} differs from 1 beyond 1e-12")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)
        object.__setattr__(self, "truncation_mass", float(self.truncation_mass))
        object.__setattr__(self, "warnings", tuple(self.warnings))

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    def mean(self) -> float:
        return float(np.arange(self.probs.size) @ self.probs)

    def variance(self) -> float:
        n = np.arange(self.probs.size)
        m = self.mean()
        return float((n - m) ** 2 @ self.probs)


def tv_distance(p: PhotocountPMF, q: PhotocountPMF) -> float:
    """Total-variation distance, with each truncated tail as one extra bucket."""
    size = max(p.probs.size, q.probs.size)
    a = np.zeros(size)
    b = np.zeros(size)
    a[: p.probs.size] = p.probs
    b[: q.probs.size] = q.probs
    return 0.5 * (float(np.abs(a - b).sum()) + abs(p.truncation_mass - q.truncation_mass))


def tv_distance_counts(counts: np.ndarray, pmf: PhotocountPMF) -> float:
    """Total-variation distance between an empirical sample and a PMF table."""
    counts = np.asarray(counts)
    hist = np.bincount(np.minimum(counts, pmf.probs.size), minlength=pmf.probs.size + 1)
    emp = hist / counts.size
    diff = float(np.abs(emp[:-1] - pmf.probs).sum())
    return 0.5 * (diff + abs(float(emp[-1]) - pmf.truncation_mass))


@dataclass(frozen=True)
class SpectralScatteringData:
    """Frequency-resolved scattering matrices S(omega) with a signed temperature.

    The per-frequency strengths (eigenvalues of S S†) are extracted once at
    construction; mixed spectra and occupation/regime sign mismatches are
    rejected here so the generating-function evaluators can assume a single
    global regime.
    """

    omega_grid: np.ndarray
    matrices: np.ndarray
    temperature: float
    sigma_spectra: np.ndarray = field(init=False, repr=False)
    regime: Regime = field(init=False)

    def __post_init__(self) -> None:
        grid = np.asarray(self.omega_grid, dtype=float)
        mats = np.asarray(self.matrices, dtype=complex)
        if grid.ndim != 1 or grid.size < 2:
            raise ValidationError("omega_grid must hold at least two frequencies")
        if np.any(np.diff(grid) <= 0.0):
            raise ValidationError("omega_grid must be strictly ascending")
        if grid[0] <= 0.0:
            raise ValidationError("frequencies must be positive")
        if mats.ndim != 3 or mats.shape[0] != grid.size or mats.shape[1] != mats.shape[2]:
            raise ValidationError(
                "matrices must have shape (len(omega_grid), N, N); got "
                f"{mats.shape}"
            )
        if self.temperature == 0.0:
            raise ValidationError("temperature must be nonzero")

        svals = np.linalg.svd(mats, compute_uv=False)
        sigma = np.sort(svals**2, axis=1)
        absorbing_ok = bool(np.all(sigma <= 1.0 + REGIME_TOL))
        amplifying_ok = bool(np.all(sigma >= 1.0 - REGIME_TOL))
        if not absorbing_ok and not amplifying_ok:
            raise RegimeError(
                "scattering spectra straddle 1; absorbing and amplifying "
                "frequencies cannot be mixed"
            )
        regime = Regime.ABSORBING if self.temperature > 0.0 else Regime.AMPLIFYING
        if regime is Regime.ABSORBING and not absorbing_ok:
            raise RegimeError("positive temperature requires sub-unitary scattering")
        if regime is Regime.AMPLIFYING and not amplifying_ok:
            raise RegimeError("negative temperature requires super-unitary scattering")

        grid = grid.copy()
        grid.setflags(write=False)
        mats = mats.copy()
        mats.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "omega_grid", grid)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "sigma_spectra", sigma)
        object.__setattr__(self, "regime", regime)

    @property
    def n_modes(self) -> int:
        return self.matrices.shape[1]

    def occupations(self) -> np.ndarray:
        """Thermal occupation at every grid frequency."""
        return 1.0 / np.expm1(self.omega_grid / self.temperature)

    def emission_weights(self) -> np.ndarray:
        """Per-frequency weights (1 - sigma_k(omega)) * f(omega), shape (n_omega, N)."""
        w = (1.0 - self.sigma_spectra) * self.occupations()[:, None]
        return np.maximum(w, 0.0)


# ---------------------------------------------------------------------------
# closed-form statistics
# ---------------------------------------------------------------------------


def _nb_log_pmf(n: np.ndarray, shape: float, mu: float) -> np.ndarray:
    # Negative binomial with PGF [1 - mu (z-1)]^(-shape): non-integer shape,
    # so everything goes through log-gamma, never factorials.
    log_q = math.log(mu) - math.log1p(mu)
    return (
        gammaln(n + shape)
        - gammaln(shape)
        - gammaln(n + 1.0)
        + n * log_q
        - shape * math.log1p(mu)
    )


def _finalize_pmf(
    probs: np.ndarray,
    *,
    truncation_bound: float,
    warnings: tuple[str, ...] = (),
) -> PhotocountPMF:
    probs = np.maximum(np.asarray(probs, dtype=float), 0.0)
    total = float(probs.sum())
    if total > 1.0:
        # Round-off can push the table a few ulp above 1.
        probs = probs / total
        truncation = 0.0
    else:
        truncation = 1.0 - total
    if truncation > truncation_bound:
        warnings = warnings + (
            f"truncated tail mass {truncation:.3e} exceeds bound {truncation_bound:.1e}; "
            "increase n_max",
        )
    return PhotocountPMF(probs, truncation, warnings)


def black_body_pmf(
    window: CountingWindow,
    f: OccupationFactor | float,
    n_max: int,
    *,
    truncation_bound: float = 1e-10,
) -> PhotocountPMF:
    """Negative-binomial counting distribution of a perfect absorber.

    P(n) is proportional to binom(n + nu - 1, n) f^n (1 + f)^(-n-nu) with
    mean nu*f and variance nu*f*(1+f).
    """
    occ = OccupationFactor.coerce(f)
    if occ.value <= 0.0:
        raise ValidationError("a black body absorbs; its occupation must be positive")
    if n_max < 0:
        raise ValidationError("n_max must be nonnegative")
    n = np.arange(n_max + 1, dtype=float)
    probs = np.exp(_nb_log_pmf(n, window.nu, occ.value))
    return _finalize_pmf(probs, truncation_bound=truncation_bound)


def factorial_cumulants(
    strengths: ScatteringStrengths,
    window: CountingWindow,
    f: OccupationFactor | float,
    p_max: int,
) -> FactorialCumulants:
    """Factorial cumulants kappa_p = (p-1)! (nu/N) sum_n mu_n^p."""
    if p_max < 1:
        raise ValidationError("p_max must be at least 1")
    _check_mode_count(strengths, window)
    mu = strengths.mu(f)
    shape = window.nu / strengths.n_modes
    kappa = np.empty(p_max)
    power = np.ones_like(mu)
    fact = 1.0
    for p in range(1, p_max + 1):
        power = power * mu
        kappa[p - 1] = fact * shape * power.sum()
        fact *= p
    return FactorialCumulants(kappa)


def nu_eff_ratio(sigma) -> float:
    """Effective-to-nominal degrees-of-freedom ratio of a strengths vector."""
    sigma = np.asarray(sigma, dtype=float)
    e = 1.0 - sigma
    s2 = float(e @ e)
    if s2 == 0.0:
        raise ValidationError(
            "all strengths equal 1: a lossless scatterer emits nothing and has "
            "no effective degrees of freedom"
        )
    s1 = float(e.sum())
    return s1 * s1 / (sigma.size * s2)


def nu_eff(strengths: ScatteringStrengths, window: CountingWindow) -> float:
    """Effective number of degrees of freedom; always <= window.nu."""
    _check_mode_count(strengths, window)
    return window.nu * nu_eff_ratio(strengths.sigma)


def _check_mode_count(strengths: ScatteringStrengths, window: CountingWindow) -> None:
    if strengths.n_modes != window.n_modes:
        raise ValidationError(
            f"strengths have {strengths.n_modes} modes but the window counts "
            f"{window.n_modes}"
        )


# ---------------------------------------------------------------------------
# full counting distribution
# ---------------------------------------------------------------------------


def pmf_from_strengths(
    strengths: ScatteringStrengths,
    window: CountingWindow,
    f: OccupationFactor | float,
    n_max: int,
    *,
    method: str = "auto",
    truncation_bound: float = 1e-10,
) -> PhotocountPMF:
    """Counting distribution for a fixed set of scattering strengths.

    With S S† constant across the narrow counting interval, the frequency
    integral of the log-determinant generating function collapses to a sum of
    per-mode logarithms, -(nu/N) sum_n ln(1 - mu_n xi).  The distribution is
    therefore the convolution of N negative-binomial laws with common
    non-integer shape nu/N and means (nu/N) mu_n.

    ``method`` selects the convolution route: "direct" convolves per-mode
    tables, "fft" inverts the product generating function sampled on a circle,
    "auto" switches to "fft" above 64 modes.  Both routes agree to 1e-10.
    """
    if n_max < 0:
        raise ValidationError("n_max must be nonnegative")
    if method not in ("auto", "direct", "fft"):
        raise ValidationError(f"unknown method {method!r}")
    _check_mode_count(strengths, window)
    mu = strengths.mu(f)
    shape = window.nu / strengths.n_modes
    if method == "auto":
        method = "direct" if strengths.n_modes <= _DIRECT_CONV_MAX_MODES else "fft"

    if np.all(mu == 0.0):
        probs = np.zeros(n_max + 1)
        probs[0] = 1.0
        return PhotocountPMF(probs, 0.0)

    if method == "direct":
        probs = _convolve_nb_modes(mu, shape, n_max)
        return _finalize_pmf(probs, truncation_bound=truncation_bound)

    radius = default_extraction_radius(mu)
    log_pgf = _mode_sum_log_pgf(mu, shape)
    singularity = 1.0 + 1.0 / float(np.max(mu))
    raw, warns = _extract_coefficients(
        log_pgf, n_max, radius, singularity_radius=singularity
    )
    return _finalize_pmf(raw, truncation_bound=truncation_bound, warnings=warns)


def _convolve_nb_modes(mu: np.ndarray, shape: float, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1, dtype=float)
    result = np.zeros(n_max + 1)
    result[0] = 1.0
    for m in mu:
        if m == 0.0:
            continue
        table = np.exp(_nb_log_pmf(n, shape, float(m)))
        # Drop the per-mode tail once its mass is below _MODE_TAIL_MASS.
        tail = 1.0 - np.cumsum(table)
        cut = int(np.searchsorted(-tail, -_MODE_TAIL_MASS)) + 1
        result = np.convolve(result, table[:cut])[: n_max + 1]
    return result


def _mode_sum_log_pgf(mu: np.ndarray, shape: float):
    """Log PGF xi -> -(nu/N) sum_n ln(1 - mu_n xi), complex-safe, vectorized."""

    def log_pgf(xi):
        xi_arr = np.atleast_1d(np.asarray(xi))
        out = np.zeros(xi_arr.shape, dtype=np.result_type(xi_arr.dtype, float))
        # Chunk the mode axis so huge strength vectors stay in cache.
        for start in range(0, mu.size, 512):
            block = mu[start : start + 512]
            out = out - shape * np.sum(np.log1p(-np.outer(xi_arr, block)), axis=1)
        return out if np.ndim(xi) else out[0]

    return log_pgf


def default_extraction_radius(mu, clamp: float = 1e8) -> float:
    """Sampling radius halfway to the nearest generating-function singularity."""
    mu_max = float(np.max(np.asarray(mu, dtype=float), initial=0.0))
    if mu_max <= 0.0:
        return clamp
    return min(1.0 + 0.5 / mu_max, clamp)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

_SAMPLE_BLOCK = 1 << 16


def sample_counts(
    strengths: ScatteringStrengths,
    window: CountingWindow,
    f: OccupationFactor | float,
    n_samples: int,
    seed: int,
) -> np.ndarray:
    """Monte Carlo photocounts via a gamma-Poisson mixture.

    Each mode contributes a gamma-distributed intensity with shape nu/N and
    scale mu_n; one Poisson draw on the summed intensity realizes the full
    convolution.  Samples are generated in fixed blocks of 2**16, each block
    on its own child stream of ``seed``, so a parallel implementation
    partitioning blocks across workers reproduces this output bit for bit.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be positive")
    _check_mode_count(strengths, window)
    mu = strengths.mu(f)
    shape = window.nu / strengths.n_modes
    active = mu[mu > 0.0]

    out = np.zeros(n_samples, dtype=np.int64)
    n_blocks = (n_samples + _SAMPLE_BLOCK - 1) // _SAMPLE_BLOCK
    streams = np.random.SeedSequence(seed).spawn(n_blocks)
    for b in range(n_blocks):
        lo = b * _SAMPLE_BLOCK
        hi = min(lo + _SAMPLE_BLOCK, n_samples)
        if active.size == 0:
            continue
        rng = np.random.default_rng(streams[b])
        lam = np.zeros(hi - lo)
        for m in active:
            lam += rng.gamma(shape, float(m), hi - lo)
        out[lo:hi] = rng.poisson(lam)
    return out


# ---------------------------------------------------------------------------
# generating functions for full spectral data
# ---------------------------------------------------------------------------


def log_generating_long_time(data: SpectralScatteringData, xi, t: float):
    """Factorial-cumulant generating function in the long-time regime.

    Evaluates -(t / 2 pi) * integral over the grid of
    sum_k ln(1 - mu_k(omega) xi) by composite trapezoid; ``xi`` may be a
    real scalar, a complex scalar, or an array (complex values are used for
    coefficient extraction).
    """
    if t <= 0.0:
        raise ValidationError("counting time must be positive")
    weights = data.emission_weights()
    _check_convergence_domain(xi, weights, data.omega_grid)
    xi_arr = np.atleast_1d(np.asarray(xi))
    # (n_xi, n_omega, N) product; chunk xi to bound memory for large grids.
    out = np.empty(xi_arr.shape, dtype=np.result_type(xi_arr.dtype, float))
    step = max(1, int(2e6 / max(weights.size, 1)))
    for start in range(0, xi_arr.size, step):
        chunk = xi_arr[start : start + step]
        integrand = np.sum(np.log1p(-chunk[:, None, None] * weights[None, :, :]), axis=2)
        out[start : start + step] = np.trapezoid(integrand, data.omega_grid, axis=1)
    out = -(t / _TWO_PI) * out
    return out if np.ndim(xi) else out[()][0] if out.shape else out


def log_generating_short_time(data: SpectralScatteringData, xi, t: float):
    """Generating function in the short-time regime: -ln det(1 - xi M).

    M is the matrix t/(2 pi) * integral of (1 - S S†) f(omega) over the grid,
    accumulated by composite trapezoid and diagonalized once.
    """
    if t <= 0.0:
        raise ValidationError("counting time must be positive")
    eye = np.eye(data.n_modes)
    integrand = (eye[None, :, :] - data.matrices @ np.conj(np.swapaxes(data.matrices, 1, 2)))
    integrand = integrand * data.occupations()[:, None, None]
    m_matrix = (t / _TWO_PI) * np.trapezoid(integrand, data.omega_grid, axis=0)
    levels = np.linalg.eigvalsh(m_matrix)
    levels = np.maximum(levels, 0.0)  # PSD up to round-off
    _check_convergence_domain(xi, levels, None)
    xi_arr = np.atleast_1d(np.asarray(xi))
    out = -np.sum(np.log1p(-np.outer(xi_arr, levels)), axis=1)
    return out if np.ndim(xi) else out[0]


def _check_convergence_domain(xi, weights: np.ndarray, grid: np.ndarray | None) -> None:
    xi_arr = np.asarray(xi)
    bound = float(np.max(np.abs(xi_arr.real))) if np.isrealobj(xi_arr) else float(
        np.max(np.abs(xi_arr))
    )
    if grid is None:
        top = float(np.max(weights, initial=0.0))
        if top > 0.0 and bound >= 1.0 / top:
            raise ConvergenceError(
                f"xi = {bound:.6g} is outside the convergence domain "
                f"(the determinant argument turns singular at xi = {1.0 / top:.6g})"
            )
        return
    per_freq = np.max(weights, axis=1)
    worst = int(np.argmax(per_freq))
    top = float(per_freq[worst])
    if top > 0.0 and bound >= 1.0 / top:
        raise ConvergenceError(
            f"xi = {bound:.6g} is outside the convergence domain at omega = "
            f"{grid[worst]:.6g} (singular at xi = {1.0 / top:.6g})"
        )


# ---------------------------------------------------------------------------
# coefficient extraction
# ---------------------------------------------------------------------------


def pmf_from_log_generating(
    log_generating,
    n_max: int,
    radius: float,
    *,
    n_points: int | None = None,
    truncation_bound: float = 1e-10,
) -> PhotocountPMF:
    """Recover P(n) from a log generating function F by Fourier inversion.

    exp(F(z - 1)) is the probability generating function; its Taylor
    coefficients are read off from samples on the circle |z| = radius, which
    must lie strictly inside the analyticity domain (radius > 1).  At least
    4 * n_max points are used.  Tiny negative coefficients from round-off are
    clipped to zero and the clipped mass is reported as a warning when it is
    not negligible.  A radius outside the analyticity domain is detected
    heuristically: coefficients exceeding 1, a large clipped mass, or a
    decayed coefficient tail that still leaves most of the probability mass
    missing all raise ConvergenceError.

    ``log_generating`` is called with a complex ndarray of xi values; a
    callable accepting only scalars is handled by a fallback loop.
    """
    if n_max < 0:
        raise ValidationError("n_max must be nonnegative")
    if not radius > 1.0:
        raise ValidationError(f"extraction radius must exceed 1, got {radius}")
    raw, warns = _extract_coefficients(log_generating, n_max, radius, n_points=n_points)
    return _finalize_pmf(raw, truncation_bound=truncation_bound, warnings=warns)


def _extract_coefficients(
    log_generating,
    n_max: int,
    radius: float,
    *,
    singularity_radius: float | None = None,
    n_points: int | None = None,
) -> tuple[np.ndarray, tuple[str, ...]]:
    m = n_points if n_points is not None else _circle_points(n_max, radius, singularity_radius)
    theta = _TWO_PI * np.arange(m) / m
    xi = radius * np.exp(1j * theta) - 1.0
    log_vals = _call_log_generating(log_generating, xi)

    # Factor out the peak magnitude so exp never overflows; fold it back in
    # log space together with the radius^-n scaling.
    peak = float(np.max(log_vals.real))
    coeff = np.fft.fft(np.exp(log_vals - peak)) / m
    n = np.arange(n_max + 1)
    scale = peak - n * math.log(radius)
    real_part = coeff[: n_max + 1].real
    mag = np.abs(real_part)
    with np.errstate(divide="ignore"):
        raw = np.sign(real_part) * np.exp(np.where(mag > 0.0, np.log(mag, where=mag > 0.0), -np.inf) + scale)

    if float(np.max(raw, initial=0.0)) > 1.0 + 1e-6:
        raise ConvergenceError(
            "extracted coefficients exceed 1; the sampling radius lies outside "
            "the analyticity domain"
        )
    clip_mass = float(-np.sum(raw[raw < 0.0]))
    if clip_mass > 1e-3:
        raise ConvergenceError(
            f"extracted coefficients carry negative mass {clip_mass:.3e}; the "
            "sampling radius lies outside the analyticity domain"
        )
    positive_sum = float(np.sum(raw[raw > 0.0]))
    tail = float(np.max(np.abs(raw[-4:]))) if raw.size >= 4 else float(np.max(np.abs(raw)))
    head = float(np.max(raw, initial=0.0))
    if positive_sum < 0.99 and tail <= 1e-9 * max(head, 1e-300):
        raise ConvergenceError(
            "coefficient tail has decayed but the probability mass "
            f"recovered is only {positive_sum:.3g}; the sampling radius lies "
            "outside the analyticity domain"
        )
    warns: tuple[str, ...] = ()
    if clip_mass > 1e-8:
        warns = (f"clipped negative coefficient mass {clip_mass:.3e}",)
    return raw, warns


def _circle_points(n_max: int, radius: float, singularity_radius: float | None) -> int:
    need = max(4 * (n_max + 1), 256)
    if singularity_radius is not None and singularity_radius > radius:
        # Aliased tail mass scales like (radius / singularity)^m; push it
        # below double precision.
        decay = math.log(singularity_radius / radius)
        need = max(need, int(math.ceil(37.0 / decay)))
    if need > 1 << 22:
        raise ConvergenceError(
            "coefficient extraction would need more than 2^22 sample points; "
            "the radius is too close to the singularity"
        )
    return 1 << int(math.ceil(math.log2(need)))


def _call_log_generating(log_generating, xi: np.ndarray) -> np.ndarray:
    try:
        vals = np.asarray(log_generating(xi))
        if vals.shape == xi.shape:
            return vals
    except (TypeError, ValueError):
        pass
    return np.asarray([log_generating(complex(x)) for x in xi])
