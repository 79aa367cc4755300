"""Radial aggregation of centred spectra into fixed-length fingerprints."""

from __future__ import annotations

import functools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import DimensionMismatch
from .io import RgbImage, decode_image
from .spectrum import CentralizedSpectrum, channel_spectrum

DEFAULT_N_R = 64
CHANNEL_NAMES = ("R", "G", "B")
SUBSETS = ("all", "magnitude", "phase")

# resultant length below which the circular mean's angle is meaningless
_RESULTANT_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class RadialBinning:
    """Assignment of every index of an ``(n_y, n_x)`` grid to one of ``n_r`` rings.

    Rings are evenly spaced from radius 0 to the distance between the centre
    ``(n_y // 2, n_x // 2)`` and the farthest grid corner. Intervals are
    half-open except the last one, which is closed.
    """

    n_y: int
    n_x: int
    n_r: int
    max_radius: float
    edges: np.ndarray
    bin_index: np.ndarray
    counts: np.ndarray

    @property
    def center(self) -> tuple[int, int]:
        return self.n_y // 2, self.n_x // 2


@functools.lru_cache(maxsize=32)
def make_binning(n_y: int, n_x: int, n_r: int = DEFAULT_N_R) -> RadialBinning:
    n_y, n_x, n_r = int(n_y), int(n_x), int(n_r)
    if n_r < 1:
        raise ValueError(f"n_r must be >= 1, got {n_r}")
    if n_y < 2 or n_x < 2:
        raise DimensionMismatch(f"grid must be at least 2x2, got {n_y}x{n_x}")
    cy, cx = n_y // 2, n_x // 2
    # sqrt of exact integer squares: correctly rounded, so ring-edge ties are reproducible
    max_radius = max(
        float(np.sqrt((y - cy) ** 2 + (x - cx) ** 2)) for y in (0, n_y - 1) for x in (0, n_x - 1)
    )
    edges = np.linspace(0.0, max_radius, n_r + 1)
    dy2 = (np.arange(n_y, dtype=np.int64) - cy) ** 2
    dx2 = (np.arange(n_x, dtype=np.int64) - cx) ** 2
    r = np.sqrt((dy2[:, None] + dx2[None, :]).astype(np.float64)).ravel()
    idx = np.searchsorted(edges, r, side="right") - 1
    np.minimum(idx, n_r - 1, out=idx)
    counts = np.bincount(idx, minlength=n_r)
    for a in (edges, idx, counts):
        a.setflags(write=False)
    return RadialBinning(n_y, n_x, n_r, max_radius, edges, idx, counts)


@dataclass(frozen=True, eq=False)
class RadialProfile:
    magnitude: np.ndarray
    phase: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.magnitude, self.phase])


def radial_reduce(spectrum: CentralizedSpectrum, binning: RadialBinning) -> RadialProfile:
    """Ring means of log-magnitude, and cosine of the circular mean phase.

    Empty rings get magnitude 0 and phase 1; so do rings whose mean phasor
    has (numerically) vanished.
    """
    if spectrum.shape != (binning.n_y, binning.n_x):
        raise DimensionMismatch(
            f"spectrum {spectrum.shape} vs binning {(binning.n_y, binning.n_x)}"
        )
    idx, n_r, counts = binning.bin_index, binning.n_r, binning.counts
    filled = counts > 0
    denom = np.where(filled, counts, 1)

    mag_sum = np.bincount(idx, weights=spectrum.log_magnitude.ravel(), minlength=n_r)
    magnitude = np.where(filled, mag_sum / denom, 0.0)

    phase = spectrum.phase.ravel()
    re = np.bincount(idx, weights=np.cos(phase), minlength=n_r) / denom
    im = np.bincount(idx, weights=np.sin(phase), minlength=n_r) / denom
    defined = filled & (np.hypot(re, im) >= _RESULTANT_FLOOR)
    cos_phase = np.where(defined, np.cos(np.arctan2(im, re)), 1.0)
    return RadialProfile(magnitude, cos_phase)


def _as_image(image) -> RgbImage:
    if isinstance(image, RgbImage):
        return image
    if isinstance(image, (str, os.PathLike)):
        return decode_image(image)
    return RgbImage.from_array(image)


def extract_features(image, n_r: int = DEFAULT_N_R) -> np.ndarray:
    """Fingerprint of length ``6 * n_r``: ``[R.M | R.phi | G.M | G.phi | B.M | B.phi]``.

    ``image`` may be an :class:`RgbImage`, an array accepted by
    :meth:`RgbImage.from_array`, or a path to decode.
    """
    image = _as_image(image)
    binning = make_binning(*image.shape, n_r)
    parts = [radial_reduce(channel_spectrum(ch), binning).to_vector() for ch in image.channels()]
    return np.concatenate(parts)


def feature_names(n_r: int = DEFAULT_N_R) -> list[str]:
    return [
        f"{c}_{kind}_{i}"
        for c in CHANNEL_NAMES
        for kind in ("M", "Phi")
        for i in range(n_r)
    ]


def subset_indices(n_features: int, subset: str = "all", n_r: int | None = None) -> np.ndarray:
    """Column indices kept by a feature subset (``all``, ``magnitude`` or ``phase``)."""
    if subset not in SUBSETS:
        raise ValueError(f"subset must be one of {SUBSETS}, got {subset!r}")
    if subset == "all":
        return np.arange(n_features)
    if n_r is None:
        if n_features % 6:
            raise DimensionMismatch(
                f"{n_features} features is not a 6*n_r layout; subset {subset!r} undefined"
            )
        n_r = n_features // 6
    if n_features != 6 * n_r:
        raise DimensionMismatch(f"expected {6 * n_r} features for n_r={n_r}, got {n_features}")
    offset = 0 if subset == "magnitude" else n_r
    return np.concatenate([c * 2 * n_r + offset + np.arange(n_r) for c in range(3)])


def _extract_path(args):
    path, n_r = args
    try:
        return extract_features(decode_image(path), n_r), None
    except Exception as exc:  # collected per entry, reported by the caller
        return None, exc


def extract_many(paths: Sequence, n_r: int = DEFAULT_N_R, workers: int = 1) -> list:
    """Extract features for many image files.

    Returns one ``(features, error)`` pair per path, in input order, whatever
    the worker count. Exactly one of the two is ``None``.
    """
    jobs = [(p, n_r) for p in paths]
    if workers <= 1 or len(jobs) <= 1:
        return [_extract_path(j) for j in jobs]
    chunk = max(1, len(jobs) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_extract_path, jobs, chunksize=chunk))


class RadialSpectrumFeatures(TransformerMixin, BaseEstimator):
    """Stateless transformer mapping images to radial DFT fingerprints.

    Parameters
    ----------
    n_r : int, default=64
        Number of radial rings per channel; output has ``6 * n_r`` columns.
    n_jobs : int, default=1
        Worker processes used when ``X`` holds file paths.
    """

    def __init__(self, n_r: int = DEFAULT_N_R, n_jobs: int = 1):
        self.n_r = n_r
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        if int(self.n_r) < 1:
            raise ValueError(f"n_r must be >= 1, got {self.n_r}")
        self.n_features_out_ = 6 * int(self.n_r)
        return self

    def transform(self, X: Iterable) -> np.ndarray:
        items = list(X)
        if items and all(isinstance(x, (str, os.PathLike)) for x in items):
            rows = []
            for path, (f, err) in zip(items, extract_many(items, self.n_r, self.n_jobs)):
                if err is not None:
                    raise err
                rows.append(f)
        else:
            rows = [extract_features(x, self.n_r) for x in items]
        if not rows:
            return np.empty((0, 6 * int(self.n_r)))
        return np.vstack(rows)

    def get_feature_names_out(self, input_features=None):
        return np.asarray(feature_names(int(self.n_r)), dtype=object)
