"""Raster primitives.

An *image* is a ``float64`` array of shape ``(height, width, 3)`` holding RGB
samples in ``[0, 1]``; a *plane* is the single-channel ``(height, width)``
counterpart.  8-bit quantization happens only in :func:`load_image` and
:func:`save_image`.  All filtering uses replicate-edge padding.
"""

from __future__ import annotations

import os
from pathlib import Path

import cv2
import numpy as np
from PIL import Image as PILImage

from .exceptions import CorruptData, EvenKernel, IoFailure, MissingFile, UnsupportedFormat

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def check_image(image, copy=False):
    """Validate an RGB image array and return it as clamped ``float64``.

    Raises ``ValueError`` for anything that is not ``(H, W, 3)`` with
    ``H, W >= 1``; grayscale input is rejected rather than promoted.
    """
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) RGB image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("image dimensions must be >= 1")
    arr = arr.astype(np.float64, copy=copy)
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite samples")
    if arr.min() < 0.0 or arr.max() > 1.0:
        arr = np.clip(arr, 0.0, 1.0)
    return arr


def check_plane(plane):
    arr = np.asarray(plane, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty (H, W) plane, got shape {arr.shape}")
    return arr


def _read_ppm(data: bytes, path) -> np.ndarray:
    if data[:2] != b"P6":
        raise UnsupportedFormat(f"{path}: only binary RGB PPM (P6) is supported, got {data[:2]!r}")
    fields = []
    pos = 2
    n = len(data)
    while len(fields) < 3:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise CorruptData(f"{path}: malformed PPM header")
        fields.append(int(data[start:pos]))
    if pos >= n or not data[pos : pos + 1].isspace():
        raise CorruptData(f"{path}: malformed PPM header")
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        raise UnsupportedFormat(f"{path}: maxval {maxval} not supported (8-bit only)")
    if width < 1 or height < 1:
        raise CorruptData(f"{path}: invalid dimensions {width}x{height}")
    need = width * height * 3
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise CorruptData(f"{path}: truncated payload ({len(payload)} of {need} bytes)")
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)


def _read_png(path) -> np.ndarray:
    try:
        with PILImage.open(path) as im:
            im.load()
            if im.mode == "P" and "transparency" not in im.info:
                im = im.convert("RGB")
            if im.mode != "RGB":
                raise UnsupportedFormat(f"{path}: PNG mode {im.mode} not supported (8-bit RGB only)")
            return np.asarray(im, dtype=np.uint8)
    except UnsupportedFormat:
        raise
    except (OSError, SyntaxError, ValueError) as exc:
        raise CorruptData(f"{path}: {exc}") from exc


def load_image(path) -> np.ndarray:
    """Decode a P6 PPM or 8-bit RGB PNG into a float image (``v / 255``)."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    data = path.read_bytes()
    if data.startswith(_PNG_MAGIC):
        raw = _read_png(path)
    elif data[:1] == b"P":
        raw = _read_ppm(data, path)
    else:
        raise UnsupportedFormat(f"{path}: unrecognized magic {data[:4]!r}")
    return raw.astype(np.float64) / 255.0


def to_uint8(image) -> np.ndarray:
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    # round-half-up so that 0.5 maps to 128
    return np.floor(arr * 255.0 + 0.5).astype(np.uint8)


def encode_ppm(image) -> bytes:
    raw = to_uint8(check_image(image))
    h, w = raw.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + raw.tobytes()


def save_image(image, path) -> None:
    """Write ``image`` as PPM or PNG depending on the file extension."""
    path = Path(path)
    ext = path.suffix.lower()
    try:
        if ext == ".png":
            PILImage.fromarray(to_uint8(check_image(image)), mode="RGB").save(path, format="PNG")
        elif ext in (".ppm", ".pnm", ""):
            tmp = path.with_name(path.name + ".part")
            tmp.write_bytes(encode_ppm(image))
            os.replace(tmp, path)
        else:
            raise UnsupportedFormat(f"cannot infer codec from extension {ext!r}")
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def _nearest_index(n_in: int, n_out: int) -> np.ndarray:
    idx = np.floor((np.arange(n_out) + 0.5) * n_in / n_out).astype(np.intp)
    return np.minimum(idx, n_in - 1)


def resize(image, new_width: int, new_height: int, method: str = "bicubic") -> np.ndarray:
    """Resample to ``new_width x new_height`` (pixel-center aligned)."""
    image = check_image(image)
    if new_width < 1 or new_height < 1:
        raise ValueError("new dimensions must be >= 1")
    h, w = image.shape[:2]
    if (w, h) == (new_width, new_height):
        return image.copy()
    if method == "nearest":
        return image[_nearest_index(h, new_height)][:, _nearest_index(w, new_width)]
    if method != "bicubic":
        raise ValueError(f"unknown resize method {method!r}")
    out = cv2.resize(image, (new_width, new_height), interpolation=cv2.INTER_CUBIC)
    return np.clip(out, 0.0, 1.0)


def box_downsample(image, factor: int = 2) -> np.ndarray:
    """Average non-overlapping ``factor x factor`` blocks; trailing rows/cols dropped."""
    image = check_image(image)
    h, w = image.shape[0] // factor, image.shape[1] // factor
    if h < 1 or w < 1:
        raise ValueError("image too small to downsample")
    blocks = image[: h * factor, : w * factor].reshape(h, factor, w, factor, 3)
    return blocks.mean(axis=(1, 3))


def to_luminance(image) -> np.ndarray:
    """Rec. 601 luma plane."""
    image = check_image(image)
    y = image @ LUMA_WEIGHTS
    return np.clip(y, 0.0, 1.0)


def filter2d(array, kernel) -> np.ndarray:
    """True convolution with replicate padding, no clamping.

    Works on planes and on multi-channel images (kernel applied per channel).
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise EvenKernel(f"kernel dimensions must be odd, got {kernel.shape}")
    src = np.ascontiguousarray(array, dtype=np.float64)
    # cv2.filter2D correlates, so flip for convolution
    return cv2.filter2D(src, cv2.CV_64F, kernel[::-1, ::-1].copy(), borderType=cv2.BORDER_REPLICATE)


def convolve(plane, kernel) -> np.ndarray:
    """Convolve a plane with an odd-sized stencil; output clamped to ``[0, 1]``."""
    plane = check_plane(plane)
    return np.clip(filter2d(plane, kernel), 0.0, 1.0)


def gaussian_kernel(sigma: float, radius: int | None = None) -> np.ndarray:
    if radius is None:
        radius = max(1, int(np.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


def gaussian_blur(array, sigma: float) -> np.ndarray:
    return filter2d(array, gaussian_kernel(sigma))


LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
