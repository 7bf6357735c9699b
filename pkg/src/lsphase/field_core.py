"""Grid containers, deterministic noise, separable convolution and file formats.

Fields are plain numpy arrays indexed ``[row, col]`` (``y`` down, ``x`` right):
scalar fields are real 2-D arrays, complex fields complex 2-D arrays.  The
symmetric 2x2 tensor field gets a small container of its own.

Boundary handling is mirror reflection without repeating the edge sample
(``d c b | a b c d | c b a``) everywhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

BOUNDARY_MODE = "mirror"
TRUNCATE = 3.5
RNG_ALGORITHM = "PCG64"

PHF_MAGIC = b"PHF1"


class FieldFormatError(ValueError):
    """Raised when a field file is malformed."""


@dataclass(frozen=True)
class TensorField:
    """Per-pixel symmetric 2x2 tensor ``[[xx, xy], [xy, yy]]``."""

    xx: np.ndarray
    xy: np.ndarray
    yy: np.ndarray

    @property
    def shape(self):
        return self.xx.shape

    @property
    def trace(self) -> np.ndarray:
        return self.xx + self.yy

    def stack(self) -> np.ndarray:
        return np.stack([self.xx, self.xy, self.yy], axis=-1)

    @classmethod
    def from_stack(cls, arr: np.ndarray) -> "TensorField":
        return cls(arr[..., 0], arr[..., 1], arr[..., 2])

    def is_psd(self, rel_eps: float = 1e-9) -> bool:
        eps = rel_eps * max(float(np.max(np.abs(self.stack()), initial=0.0)), 1e-300)
        return bool(
            np.all(self.xx >= -eps)
            and np.all(self.yy >= -eps)
            and np.all(self.xy**2 <= self.xx * self.yy + eps)
        )


def make_rng(seed: int) -> np.random.Generator:
    """Return the generator used for every random draw in the package.

    The stream is numpy's PCG64 seeded with the unsigned 64-bit ``seed``;
    PCG64 output is specified bit-for-bit, so equal seeds give equal streams
    on every platform.
    """
    if not 0 <= int(seed) < 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(int(seed)))


# -- kernels and convolution -------------------------------------------------

def kernel_radius(sigma: float) -> int:
    return int(math.ceil(TRUNCATE * sigma))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled Gaussian truncated at ``ceil(3.5 sigma)``, normalized to unit sum."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = kernel_radius(sigma)
    x = np.arange(-r, r + 1, dtype=float)
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def gaussian_derivative_kernel(sigma: float) -> np.ndarray:
    """First derivative of the sampled Gaussian, for use with convolution.

    Scaled so that convolving the ramp ``f(x) = x`` returns exactly 1.
    """
    r = kernel_radius(sigma)
    x = np.arange(-r, r + 1, dtype=float)
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return -x * g / np.sum(x * x * g)


def _check_kernel(k: np.ndarray, name: str) -> np.ndarray:
    k = np.asarray(k)
    if k.ndim != 1 or k.size % 2 == 0:
        raise ValueError(f"{name} must be a 1-D kernel of odd length, got shape {k.shape}")
    return k


def convolve_separable(field: np.ndarray, kernel_x, kernel_y) -> np.ndarray:
    """Convolve ``field`` with ``kernel_x`` along rows and ``kernel_y`` along columns.

    Works for real or complex fields and kernels.  Output has the input shape.
    """
    field = np.asarray(field)
    if field.ndim != 2 or field.size == 0:
        raise ValueError("field must be a non-empty 2-D array")
    kx = _check_kernel(kernel_x, "kernel_x")
    ky = _check_kernel(kernel_y, "kernel_y")
    out = ndimage.convolve1d(field, kx, axis=1, mode=BOUNDARY_MODE)
    return ndimage.convolve1d(out, ky, axis=0, mode=BOUNDARY_MODE)


def gaussian_smooth(field: np.ndarray, sigma: float) -> np.ndarray:
    k = gaussian_kernel(sigma)
    return convolve_separable(field, k, k)


def gaussian_gradient(field: np.ndarray, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Gradient ``(d/dx, d/dy)`` by convolution with Gaussian derivatives."""
    g = gaussian_kernel(sigma)
    d = gaussian_derivative_kernel(sigma)
    return convolve_separable(field, d, g), convolve_separable(field, g, d)


# kernels with more taps than this go through the FFT path
FFT_MIN_TAPS = 225


def mirror_pad(field: np.ndarray, pad_y: int, pad_x: int) -> np.ndarray:
    """Mirror padding; pads wider than the field reflect repeatedly."""
    out = np.asarray(field)
    while pad_y > 0 or pad_x > 0:
        sy = min(pad_y, out.shape[0] - 1)
        sx = min(pad_x, out.shape[1] - 1)
        if (pad_y > 0 and sy <= 0) or (pad_x > 0 and sx <= 0):
            return np.pad(out, ((pad_y, pad_y), (pad_x, pad_x)), mode="edge")
        out = np.pad(out, ((sy, sy), (sx, sx)), mode="reflect")
        pad_y -= sy
        pad_x -= sx
    return out


def _fft_convolve2d(field: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    from scipy.signal import fftconvolve

    ry, rx = kernel.shape[0] // 2, kernel.shape[1] // 2
    padded = mirror_pad(field, ry, rx)
    out = fftconvolve(padded, kernel, mode="valid")
    if not (np.iscomplexobj(field) or np.iscomplexobj(kernel)):
        out = out.real
    return out


def convolve2d(field: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Dense 2-D convolution with an odd-sized, possibly complex kernel.

    Large kernels are applied through the FFT on a mirror-padded copy; the
    result matches direct summation to rounding error.
    """
    field = np.asarray(field)
    kernel = np.asarray(kernel)
    if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise ValueError("kernel must be 2-D with odd sides")
    if kernel.size > FFT_MIN_TAPS:
        return _fft_convolve2d(field, kernel)
    if np.iscomplexobj(field) or np.iscomplexobj(kernel):
        return ndimage.convolve(field.astype(complex), kernel.astype(complex), mode=BOUNDARY_MODE)
    return ndimage.convolve(field.astype(float), kernel.astype(float), mode=BOUNDARY_MODE)


def correlate2d(field: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Dense 2-D inner product ``out[r] = sum_s conj(kernel[s]) field[r + s]``."""
    return convolve2d(field, np.conj(kernel[::-1, ::-1]))


# -- PHF1 files --------------------------------------------------------------

def _as_channels(field) -> np.ndarray:
    if isinstance(field, TensorField):
        return field.stack()
    arr = np.asarray(field)
    if np.iscomplexobj(arr):
        return np.stack([arr.real, arr.imag], axis=-1)
    if arr.ndim == 2:
        return arr[..., None]
    if arr.ndim == 3 and arr.shape[-1] in (1, 2, 3, 4):
        return arr
    raise ValueError(f"cannot store array of shape {arr.shape} as a field")


def write_field(path, field) -> None:
    """Write a scalar, complex, tensor or 4-channel field as PHF1.

    Samples are stored as little-endian float32, row-major, channel-interleaved.
    """
    data = _as_channels(field)
    if not np.all(np.isfinite(data)):
        raise FieldFormatError("refusing to write non-finite samples")
    h, w, c = data.shape
    header = f"PHF1 {w} {h} {c}\n".encode("ascii")
    payload = np.ascontiguousarray(data, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_field(path):
    """Read a PHF1 file written by :func:`write_field`.

    Returns a float32 array for 1 channel, complex64 for 2, a
    :class:`TensorField` for 3 and an ``(h, w, 4)`` float32 array for 4.
    """
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0 or not raw.startswith(PHF_MAGIC + b" "):
        raise FieldFormatError(f"{path}: bad magic at byte offset 0")
    parts = raw[:nl].split()
    try:
        w, h, c = (int(p) for p in parts[1:])
    except ValueError:
        raise FieldFormatError(f"{path}: malformed header at byte offset 5") from None
    if w <= 0 or h <= 0 or c not in (1, 2, 3, 4):
        raise FieldFormatError(f"{path}: invalid dimensions in header at byte offset 5")
    start = nl + 1
    expected = w * h * c * 4
    if len(raw) - start != expected:
        raise FieldFormatError(
            f"{path}: payload size mismatch at byte offset {start}: "
            f"expected {expected} bytes, found {len(raw) - start}"
        )
    data = np.frombuffer(raw, dtype="<f4", offset=start).reshape(h, w, c)
    bad = np.flatnonzero(~np.isfinite(data.ravel()))
    if bad.size:
        raise FieldFormatError(f"{path}: non-finite sample at byte offset {start + 4 * int(bad[0])}")
    data = data.astype(np.float32)
    if c == 1:
        return data[..., 0]
    if c == 2:
        return (data[..., 0] + 1j * data[..., 1]).astype(np.complex64)
    if c == 3:
        return TensorField.from_stack(data)
    return data


def phf1_header_size(width: int, height: int, channels: int) -> int:
    return len(f"PHF1 {width} {height} {channels}\n")


# -- 8-bit export ------------------------------------------------------------

def to_gray8(field: np.ndarray) -> np.ndarray:
    """Linear map of ``[min, max]`` onto ``[0, 255]``."""
    f = np.asarray(field, dtype=float)
    lo, hi = float(f.min()), float(f.max())
    if hi <= lo:
        return np.zeros(f.shape, dtype=np.uint8)
    return np.round((f - lo) / (hi - lo) * 255.0).astype(np.uint8)


def to_hsv8(field: np.ndarray) -> np.ndarray:
    """RGB rendering of a complex field: hue = argument, value = scaled magnitude."""
    from matplotlib.colors import hsv_to_rgb

    z = np.asarray(field, dtype=complex)
    mag = np.abs(z)
    ref = float(np.percentile(mag, 99)) if mag.size else 0.0
    value = np.clip(mag / ref, 0.0, 1.0) if ref > 0 else np.zeros_like(mag)
    hue = np.mod(np.angle(z), 2 * np.pi) / (2 * np.pi)
    hsv = np.stack([hue, np.ones_like(hue), value], axis=-1)
    return np.round(hsv_to_rgb(hsv) * 255.0).astype(np.uint8)


def write_pgm(path, field: np.ndarray) -> None:
    img = to_gray8(field)
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes())


def write_png(path, field: np.ndarray, mode: str = "gray", text: dict | None = None) -> None:
    """Write an 8-bit PNG; ``mode`` is ``gray`` (real input) or ``hsv`` (complex input)."""
    from PIL import Image
    from PIL.PngImagePlugin import PngInfo

    if mode == "gray":
        img = Image.fromarray(to_gray8(np.real(field)), mode="L")
    elif mode == "hsv":
        img = Image.fromarray(to_hsv8(field), mode="RGB")
    else:
        raise ValueError(f"unknown render mode {mode!r}")
    info = PngInfo()
    for key, value in (text or {}).items():
        info.add_text(key, value)
    img.save(path, format="PNG", pnginfo=info)
