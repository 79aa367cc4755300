"""Image decoding, dataset manifests and feature files."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import png
from PIL import Image, UnidentifiedImageError

from .exceptions import (
    CorruptImage,
    DimensionMismatch,
    EmptyManifest,
    ParseError,
    UnsupportedFormat,
)

logger = logging.getLogger(__name__)

MANIFEST_HEADER = ("path", "label", "prompt_id")
MAX_PROMPT_ID = 40

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_GRAY_MODES = {"1", "L", "LA", "La"}


@dataclass(frozen=True, eq=False)
class RgbImage:
    """Three equally sized channel matrices with samples in [0, 255]."""

    red: np.ndarray
    green: np.ndarray
    blue: np.ndarray

    def __post_init__(self):
        channels = []
        for name in ("red", "green", "blue"):
            ch = np.array(getattr(self, name), dtype=np.float64)
            if ch.ndim != 2:
                raise DimensionMismatch(f"{name} channel must be 2-D, got shape {ch.shape}")
            if ch.shape[0] < 2 or ch.shape[1] < 2:
                raise DimensionMismatch(f"channels must be at least 2x2, got {ch.shape}")
            if not np.all(np.isfinite(ch)) or ch.min() < 0 or ch.max() > 255:
                raise ValueError(f"{name} channel has samples outside [0, 255]")
            ch.setflags(write=False)
            object.__setattr__(self, name, ch)
            channels.append(ch)
        if not channels[0].shape == channels[1].shape == channels[2].shape:
            raise DimensionMismatch("channels differ in shape")

    @classmethod
    def from_array(cls, array) -> "RgbImage":
        """Build from an ``(n_y, n_x)`` grayscale or ``(n_y, n_x, C)`` array.

        With 4 channels the last one is treated as alpha and dropped.
        """
        a = np.asarray(array)
        if a.ndim == 2:
            return cls(a, a, a)
        if a.ndim == 3 and a.shape[2] in (1, 2):
            return cls(a[..., 0], a[..., 0], a[..., 0])
        if a.ndim == 3 and a.shape[2] in (3, 4):
            return cls(a[..., 0], a[..., 1], a[..., 2])
        raise DimensionMismatch(f"cannot interpret array of shape {a.shape} as an image")

    @property
    def shape(self) -> tuple[int, int]:
        return self.red.shape

    def channels(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.red, self.green, self.blue

    def to_array(self) -> np.ndarray:
        return np.stack(self.channels(), axis=-1)


def _sniff(head: bytes) -> str:
    if head.startswith(_PNG_MAGIC):
        return "PNG"
    if head[:3] == b"\xff\xd8\xff":
        return "JPEG"
    if head[:4] == b"RIFF" and head[8:12] == b"WEBP":
        return "WEBP"
    raise UnsupportedFormat("not a PNG, JPEG or WebP file")


def _rescale16(samples: np.ndarray) -> np.ndarray:
    # v/257 never lands on .5 for integer v, so rint is unambiguous
    return np.rint(samples.astype(np.float64) / 257.0)


def _decode_png16(data: bytes) -> np.ndarray:
    width, height, rows, info = png.Reader(bytes=data).asDirect()
    planes = info["planes"]
    pixels = np.vstack([np.asarray(row, dtype=np.uint32) for row in rows])
    pixels = pixels.reshape(height, width, planes)
    colour = planes - int(info["alpha"])
    pixels = pixels[..., :colour]
    if info["bitdepth"] == 16:
        return _rescale16(pixels)
    return pixels.astype(np.float64)


def _decode_pillow(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        im.load()
        if im.mode in _GRAY_MODES:
            return np.asarray(im.convert("L"), dtype=np.float64)
        if im.mode.startswith("I"):
            return np.clip(_rescale16(np.asarray(im)), 0, 255)
        # drops alpha without premultiplying
        return np.asarray(im.convert("RGB"), dtype=np.float64)


def decode_image(path) -> RgbImage:
    """Decode a PNG, JPEG or WebP file into an :class:`RgbImage`.

    Alpha is discarded, grayscale is replicated into three channels and
    16-bit PNG samples are rescaled by 1/257 with rounding.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image: {path}")
    data = path.read_bytes()
    fmt = _sniff(data[:16])
    try:
        # IHDR bit depth lives at byte 24
        if fmt == "PNG" and len(data) > 24 and data[24] == 16:
            pixels = _decode_png16(data)
        else:
            pixels = _decode_pillow(data)
    except (OSError, SyntaxError, ValueError, UnidentifiedImageError, png.Error) as exc:
        raise CorruptImage(f"{path}: {exc}") from exc
    return RgbImage.from_array(pixels)


def encode_png(image: RgbImage, path) -> None:
    """Write an 8-bit RGB PNG (lossless, so decoding reproduces the samples)."""
    arr = np.clip(np.rint(image.to_array()), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    prompt_id: Optional[int] = None
    base_dir: Optional[Path] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not self.label:
            raise ValueError("label must be a non-empty string")
        if self.prompt_id is not None and not 1 <= self.prompt_id <= MAX_PROMPT_ID:
            raise ValueError(f"prompt_id {self.prompt_id} outside [1, {MAX_PROMPT_ID}]")

    @property
    def resolved_path(self) -> Path:
        p = Path(self.path)
        if p.is_absolute() or self.base_dir is None:
            return p
        return self.base_dir / p


class Manifest(list):
    """A list of :class:`ManifestEntry` that remembers its duplicate count."""

    def __init__(self, entries: Iterable[ManifestEntry] = (), duplicates: int = 0):
        super().__init__(entries)
        self.duplicates = duplicates


def _parse_prompt_id(text: str, line: int) -> Optional[int]:
    text = text.strip()
    if not text:
        return None
    try:
        value = int(text)
    except ValueError:
        raise ParseError(f"prompt_id {text!r} is not an integer", line) from None
    if not 1 <= value <= MAX_PROMPT_ID:
        raise ParseError(f"prompt_id {value} outside [1, {MAX_PROMPT_ID}]", line)
    return value


def read_manifest(path) -> Manifest:
    """Parse a ``path,label,prompt_id`` CSV manifest.

    Entries keep file order. Relative paths are resolved against the
    manifest's own directory. Duplicate paths are allowed; their count is
    logged and stored on the result as ``duplicates``.
    """
    path = Path(path)
    base = path.resolve().parent
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyManifest(f"{path} is empty")
        if tuple(h.strip() for h in header) != MANIFEST_HEADER:
            raise ParseError(f"expected header {','.join(MANIFEST_HEADER)!r}, got {header!r}", 1)
        entries = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 fields, got {len(row)}", line)
            img, label, prompt = (c.strip() for c in row)
            if not img:
                raise ParseError("empty path", line)
            if not label:
                raise ParseError("empty label", line)
            entries.append(ManifestEntry(img, label, _parse_prompt_id(prompt, line), base))
    if not entries:
        raise EmptyManifest(f"{path} has no entries")
    seen = set()
    duplicates = 0
    for e in entries:
        key = e.resolved_path
        duplicates += key in seen
        seen.add(key)
    if duplicates:
        logger.warning("%s: %d duplicate path(s)", path, duplicates)
    return Manifest(entries, duplicates)


def write_manifest(entries: Sequence[ManifestEntry], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for e in entries:
            w.writerow([e.path, e.label, "" if e.prompt_id is None else e.prompt_id])


@dataclass
class FeatureTable:
    """Feature rows together with their manifest metadata."""

    paths: list
    labels: list
    prompt_ids: list
    X: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise DimensionMismatch("feature matrix must be 2-D")
        n = self.X.shape[0]
        if not len(self.paths) == len(self.labels) == len(self.prompt_ids) == n:
            raise DimensionMismatch("metadata length does not match feature rows")

    def __len__(self):
        return self.X.shape[0]

    @property
    def entries(self) -> list[ManifestEntry]:
        return [ManifestEntry(p, l, q) for p, l, q in zip(self.paths, self.labels, self.prompt_ids)]

    def with_labels(self, labels) -> "FeatureTable":
        return FeatureTable(list(self.paths), list(labels), list(self.prompt_ids), self.X)


def write_features(table: FeatureTable, path) -> None:
    """Write features as CSV with 17 significant digits (lossless for doubles)."""
    d = table.X.shape[1]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*MANIFEST_HEADER, *(f"f_{j}" for j in range(d))])
        for p, label, q, row in zip(table.paths, table.labels, table.prompt_ids, table.X):
            w.writerow([p, label, "" if q is None else q, *(format(v, ".17g") for v in row)])


def read_features(path) -> FeatureTable:
    path = Path(path)
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise EmptyManifest(f"{path} is empty")
        if tuple(header[:3]) != MANIFEST_HEADER:
            raise ParseError(f"bad feature file header {header[:3]!r}", 1)
        d = len(header) - 3
        if d < 1 or header[3:] != [f"f_{j}" for j in range(d)]:
            raise ParseError("feature columns must be f_0..f_{d-1}", 1)
        paths, labels, prompts, rows = [], [], [], []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != d + 3:
                raise ParseError(f"expected {d + 3} fields, got {len(row)}", line)
            if not row[1]:
                raise ParseError("empty label", line)
            try:
                rows.append([float(v) for v in row[3:]])
            except ValueError as exc:
                raise ParseError(str(exc), line) from None
            paths.append(row[0])
            labels.append(row[1])
            prompts.append(_parse_prompt_id(row[2], line))
    if not rows:
        raise EmptyManifest(f"{path} has no feature rows")
    return FeatureTable(paths, labels, prompts, np.array(rows, dtype=np.float64))
