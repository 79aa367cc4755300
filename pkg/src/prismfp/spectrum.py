"""2-D DFT, DC centring and log-magnitude / phase planes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch


@dataclass(frozen=True, eq=False)
class CentralizedSpectrum:
    """Log-magnitude and phase planes of a DC-centred spectrum.

    ``log_magnitude`` holds ``log(|z| + 1)`` and ``phase`` holds ``arg(z)``
    in ``(-pi, pi]`` with ``arg(0) == 0``.
    """

    log_magnitude: np.ndarray
    phase: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.log_magnitude.shape


def _as_channel(channel) -> np.ndarray:
    a = np.asarray(channel, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 2 or a.shape[1] < 2:
        raise DimensionMismatch(f"channel must be a 2-D matrix of at least 2x2, got {a.shape}")
    return a


def dft2(channel) -> np.ndarray:
    """Unnormalised 2-D DFT of a real ``(n_y, n_x)`` channel, in double precision."""
    return np.fft.fft2(_as_channel(channel))


def centralize(spectrum: np.ndarray) -> np.ndarray:
    """Circularly shift by ``(n_y // 2, n_x // 2)`` so DC lands at the centre."""
    return np.fft.fftshift(spectrum, axes=(0, 1))


def decentralize(spectrum: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`centralize`."""
    return np.fft.ifftshift(spectrum, axes=(0, 1))


def to_planes(spectrum: np.ndarray) -> CentralizedSpectrum:
    z = np.asarray(spectrum, dtype=np.complex128)
    magnitude = np.abs(z)
    log_mag = np.log1p(magnitude)
    phase = np.angle(z)
    # signed zeros can yield -pi (or arg(0) = +-pi); pin to the (-pi, pi] range
    phase[phase == -np.pi] = np.pi
    phase[magnitude == 0] = 0.0
    log_mag.setflags(write=False)
    phase.setflags(write=False)
    return CentralizedSpectrum(log_mag, phase)


def channel_spectrum(channel) -> CentralizedSpectrum:
    return to_planes(centralize(dft2(channel)))
