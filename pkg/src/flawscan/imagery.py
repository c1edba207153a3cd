"""Image and manifest I/O, input validation and bias estimation.

Images are plain 2-D ``float64`` numpy arrays indexed ``img[v, u]``: ``v`` is
the row (vertical coordinate) and ``u`` the column (horizontal coordinate).
A stack of images is a 3-D array ``(n_images, n_rows, n_cols)``.
"""

from __future__ import annotations

import csv
import os
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DataError, DegenerateRegionError, FormatError, ManifestError

__all__ = [
    "SpecimenRecord",
    "check_image",
    "check_image_stack",
    "load_image",
    "save_image",
    "save_pgm",
    "estimate_bias",
    "load_manifest",
]


def check_image(img, name="image"):
    """Validate a single image and return it as a C-contiguous float64 array.

    Raises
    ------
    DataError
        If the input is not 2-D, is empty, or contains NaN/Inf.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise DataError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


def check_image_stack(X, name="X"):
    """Accept one image or a stack and return a 3-D float64 array."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[np.newaxis]
    if arr.ndim != 3:
        raise DataError(f"{name} must be an image or a stack of images, got shape {arr.shape}")
    if arr.shape[0] and not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


# ---------------------------------------------------------------------------
# file formats

_SPLIT = re.compile(r"[,\s]+")


def _read_matrix_text(path):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(tok) for tok in _SPLIT.split(line) if tok])
            except ValueError as exc:
                raise FormatError(f"{path}: line {lineno}: {exc}") from None
            if rows and len(rows[-1]) != len(rows[0]):
                raise FormatError(
                    f"{path}: line {lineno}: expected {len(rows[0])} values, got {len(rows[-1])}"
                )
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def _pgm_tokens(data, count, offset):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    i = offset
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
            i += 1
        if start == i:
            raise FormatError(f"truncated PGM header at byte {i}")
        tok = data[start:i]
        try:
            tokens.append(int(tok))
        except ValueError:
            raise FormatError(f"bad PGM header token {tok!r} at byte {start}") from None
    return tokens, i


def _read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise FormatError(f"{path}: byte 0: not a PGM file (magic {magic!r})")
    (width, height, maxval), pos = _pgm_tokens(data, 3, 2)
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: invalid PGM header {width}x{height} maxval {maxval}")
    n = width * height
    if magic == b"P2":
        values = np.empty(n)
        k = 0
        for m in re.finditer(rb"\S+", data[pos:]):
            if k == n:
                break
            try:
                values[k] = int(m.group())
            except ValueError:
                raise FormatError(
                    f"{path}: byte {pos + m.start()}: bad pixel value {m.group()!r}"
                ) from None
            k += 1
        if k < n:
            raise FormatError(f"{path}: byte {len(data)}: expected {n} pixel values, found {k}")
    else:
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos : pos + n * dtype.itemsize]
        if len(raw) < n * dtype.itemsize:
            raise FormatError(f"{path}: byte {pos}: raster truncated")
        values = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    return values.reshape(height, width)


def load_image(path, format=None):
    """Load an image from a matrix-text or PGM (P2/P5) file.

    Parameters
    ----------
    path : str
    format : {"matrix-text", "pgm"}, optional
        Inferred from the extension when omitted (``.pgm`` means PGM).

    Returns
    -------
    ndarray of shape (n_rows, n_cols)
    """
    if format is None:
        format = "pgm" if str(path).lower().endswith(".pgm") else "matrix-text"
    if format == "matrix-text":
        img = _read_matrix_text(path)
    elif format == "pgm":
        img = _read_pgm(path)
    else:
        raise FormatError(f"unknown image format {format!r}")
    if not np.all(np.isfinite(img)):
        raise DataError(f"{path}: image contains non-finite values")
    return img


def save_image(path, img):
    """Write an image as matrix text. ``repr`` of each float round-trips exactly."""
    img = check_image(img)
    with open(path, "w", encoding="utf-8") as fh:
        for row in img:
            fh.write(" ".join(repr(float(x)) for x in row))
            fh.write("\n")


def save_pgm(path, img, maxval=255):
    """Write a P2 PGM, linearly rescaling intensities to ``[0, maxval]``."""
    img = check_image(img)
    lo, hi = float(img.min()), float(img.max())
    scale = maxval / (hi - lo) if hi > lo else 0.0
    levels = np.rint((img - lo) * scale).astype(int)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"P2\n{img.shape[1]} {img.shape[0]}\n{maxval}\n")
        for row in levels:
            fh.write(" ".join(str(v) for v in row))
            fh.write("\n")


# ---------------------------------------------------------------------------
# bias


def _exclusion_mask(exclude, shape):
    if exclude is None:
        return np.zeros(shape, dtype=bool)
    if hasattr(exclude, "mask"):
        return exclude.mask(shape)
    mask = np.asarray(exclude, dtype=bool)
    if mask.shape != shape:
        raise DataError(f"exclusion mask shape {mask.shape} does not match image {shape}")
    return mask


def estimate_bias(img, exclude=None, method="mean"):
    """Estimate the systematic offset of an image from pixels outside a region.

    Parameters
    ----------
    img : array_like, 2-D
    exclude : region or boolean mask, optional
        Pixels inside it are ignored. Anything with a ``mask(shape)`` method
        (see :mod:`flawscan.geometry`) is accepted.
    method : {"mean", "median"}

    Raises
    ------
    DegenerateRegionError
        If every pixel is excluded.
    """
    img = check_image(img)
    keep = ~_exclusion_mask(exclude, img.shape)
    if not keep.any():
        raise DegenerateRegionError("no pixels outside the excluded region")
    values = img[keep]
    if method == "mean":
        return float(values.mean())
    if method == "median":
        return float(np.median(values))
    raise ValueError(f"unknown bias method {method!r}")


# ---------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class SpecimenRecord:
    image: str
    flaw_size: Optional[float] = None
    is_flawed: bool = False

    def __post_init__(self):
        if self.is_flawed != (self.flaw_size is not None):
            raise ManifestError(
                f"{self.image}: flawed={self.is_flawed} inconsistent with flaw_size={self.flaw_size}"
            )
        if self.flaw_size is not None and not self.flaw_size > 0:
            raise ManifestError(f"{self.image}: flaw size must be positive")


_TRUE = {"true", "1", "yes", "y", "t"}
_FALSE = {"false", "0", "no", "n", "f"}


def load_manifest(path):
    """Read a ``image,flaw_size,flawed`` CSV into a list of SpecimenRecord.

    Relative image paths are resolved against the manifest's directory.
    """
    base = os.path.dirname(os.path.abspath(path))
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"image", "flaw_size", "flawed"} - set(reader.fieldnames or ())
        if missing:
            raise ManifestError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            flag = (row["flawed"] or "").strip().lower()
            if flag in _TRUE:
                flawed = True
            elif flag in _FALSE:
                flawed = False
            else:
                raise ManifestError(f"{path}: line {lineno}: bad flawed value {row['flawed']!r}")
            size_text = (row["flaw_size"] or "").strip()
            try:
                size = float(size_text) if size_text else None
            except ValueError:
                raise ManifestError(f"{path}: line {lineno}: bad flaw_size {size_text!r}") from None
            image = row["image"].strip()
            if not os.path.isabs(image):
                image = os.path.join(base, image)
            try:
                records.append(SpecimenRecord(image, size, flawed))
            except ManifestError as exc:
                raise ManifestError(f"{path}: line {lineno}: {exc}") from None
    return records
