"""Exception hierarchy shared by all photocount modules."""

from __future__ import annotations


class PhotocountError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PhotocountError, ValueError):
    """Invalid argument, file content, or domain violation."""


class RegimeError(ValidationError):
    """Scattering strengths, occupation sign, or spectra in inconsistent regimes."""


class ThresholdError(PhotocountError):
    """Requested amplifying configuration is at or above the laser threshold."""


class ConvergenceError(PhotocountError):
    """A quadrature, series, or coefficient extraction failed to converge."""
