"""Gabor filter bank steered by the local wave vector, and the resulting local phase."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .field_core import TRUNCATE, mirror_pad
from .ls_tensor import FrequencyField

DEFAULT_BAND = (4.0, 64.0)


@dataclass(frozen=True)
class GaborBank:
    """Tune-ins on a polar grid covering the half plane ``omega . n >= 0``.

    ``directions`` are angles of the tune-in vectors, ``frequencies`` their
    norms (rad/pixel, ascending).  Each filter's envelope width is
    ``alpha * 2 pi / |omega|``, i.e. a fixed number of periods.
    """

    directions: np.ndarray
    frequencies: np.ndarray
    n: tuple[float, float]
    alpha: float

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.directions), len(self.frequencies)

    def tune_in(self, i: int, j: int) -> np.ndarray:
        w = self.frequencies[j]
        return np.array([w * math.cos(self.directions[i]), w * math.sin(self.directions[i])])

    def sigma(self, j: int) -> float:
        return self.alpha * 2 * math.pi / float(self.frequencies[j])

    def radius(self, j: int) -> int:
        return int(math.ceil(TRUNCATE * self.sigma(j)))

    def kernels_1d(self, i: int, j: int):
        """Complex 1-D factors ``(kx, ky)``; their outer product is the 2-D filter."""
        wx, wy = self.tune_in(i, j)
        sigma = self.sigma(j)
        r = self.radius(j)
        t = np.arange(-r, r + 1, dtype=float)
        env = np.exp(-(t**2) / (2 * sigma**2)) / math.sqrt(2 * math.pi * sigma**2)
        return env * np.exp(1j * wx * t), env * np.exp(1j * wy * t)

    def kernel(self, i: int, j: int) -> np.ndarray:
        kx, ky = self.kernels_1d(i, j)
        return np.outer(ky, kx)


def build_bank(band=DEFAULT_BAND, k_dir: int = 16, k_freq: int = 6, n=(1.0, 0.0), alpha: float = 0.8) -> GaborBank:
    """Bank of ``k_dir * k_freq`` filters for periods inside ``band`` (pixels)."""
    t_min, t_max = float(band[0]), float(band[1])
    if not 2.0 <= t_min < t_max:
        raise ValueError(f"period band must satisfy 2 <= T_min < T_max, got {band}")
    if k_dir < 8 or k_freq < 3:
        raise ValueError(f"need k_dir >= 8 and k_freq >= 3, got {k_dir} and {k_freq}")
    if not 0 < alpha < 2:
        raise ValueError(f"alpha must lie in (0, 2), got {alpha}")
    nx, ny = float(n[0]), float(n[1])
    length = math.hypot(nx, ny)
    if length == 0:
        raise ValueError("walking direction must be non-zero")
    nx, ny = nx / length, ny / length
    base = math.atan2(ny, nx) - math.pi / 2
    directions = base + (np.arange(k_dir) + 0.5) * math.pi / k_dir
    frequencies = np.geomspace(2 * math.pi / t_max, 2 * math.pi / t_min, k_freq)
    return GaborBank(directions, frequencies, (nx, ny), float(alpha))


def select_filters(omega: np.ndarray, bank: GaborBank):
    """Nearest tune-in per pixel in log-polar coordinates: ``(dir_index, freq_index)``.

    ``omega`` is expected in the bank's half plane; the angle is measured as a
    vector, so the sign of ``omega`` across the boundary line decides which
    of the two edge filters is used.
    """
    k_dir, k_freq = bank.shape
    nx, ny = bank.n
    rel = np.arctan2(omega[..., 1], omega[..., 0]) - math.atan2(ny, nx)
    rel = np.mod(rel + math.pi, 2 * math.pi) - math.pi
    rel = np.clip(rel, -math.pi / 2, math.pi / 2)
    di = np.clip(np.floor((rel + math.pi / 2) / (math.pi / k_dir)).astype(int), 0, k_dir - 1)
    norm = np.hypot(omega[..., 0], omega[..., 1])
    logf = np.log(bank.frequencies)
    step = (logf[-1] - logf[0]) / (k_freq - 1)
    with np.errstate(divide="ignore"):
        pos = (np.log(np.maximum(norm, 1e-300)) - logf[0]) / step
    fi = np.clip(np.rint(pos).astype(int), 0, k_freq - 1)
    return di, fi


class _Spectrum:
    """Mirror-padded image spectrum, reused for every filter of a bank."""

    def __init__(self, f: np.ndarray, pad: int):
        h, w = f.shape
        self.h, self.w, self.pad = h, w, pad
        # numpy "reflect" is the no-edge-repeat mirror used throughout
        padded = mirror_pad(f, pad, pad)
        self.H = sfft.next_fast_len(padded.shape[0])
        self.W = sfft.next_fast_len(padded.shape[1])
        self.spec = sfft.fft2(padded, s=(self.H, self.W), workers=-1)

    def _kernel_fft(self, k: np.ndarray, size: int) -> np.ndarray:
        r = k.size // 2
        buf = np.zeros(size, dtype=complex)
        buf[: r + 1] = k[r:]
        buf[size - r:] = k[:r]
        return sfft.fft(buf)

    def convolve(self, kx: np.ndarray, ky: np.ndarray) -> np.ndarray:
        fk = np.outer(self._kernel_fft(ky, self.H), self._kernel_fft(kx, self.W))
        out = sfft.ifft2(self.spec * fk, workers=-1)
        p = self.pad
        return out[p : p + self.h, p : p + self.w]


def gabor_response(f: np.ndarray, bank: GaborBank, i: int, j: int) -> np.ndarray:
    """Convolution of a real or complex ``f`` with one bank filter, mirror boundary."""
    spec = _Spectrum(np.asarray(f), bank.radius(j))
    return spec.convolve(*bank.kernels_1d(i, j))


@dataclass
class PhaseField:
    """Local phase, response magnitude, validity mask and the tune-in used per pixel."""

    phase: np.ndarray
    magnitude: np.ndarray
    valid: np.ndarray
    tune_in: np.ndarray | None = None  # (h, w, 2), zero where invalid

    @property
    def unit(self) -> np.ndarray:
        """``exp(i phase)`` on valid pixels, 0 elsewhere."""
        return np.where(self.valid, np.exp(1j * self.phase), 0.0)


def ls_phase(f: np.ndarray, freq: FrequencyField, bank: GaborBank | None = None, gate: float = 0.3) -> PhaseField:
    """Phase of the Gabor response whose tune-in is nearest the local wave vector.

    Pixels with ``coherence * certainty < gate`` or an estimate outside the
    bank's band are marked invalid and get phase 0.
    """
    f = np.asarray(f, dtype=float)
    if bank is None:
        bank = build_bank(n=freq.n)
    di, fi = select_filters(freq.omega, bank)
    norm = freq.norm
    lo, hi = bank.frequencies[0], bank.frequencies[-1]
    tol = 1e-9
    valid = (freq.coherence * freq.certainty >= gate) & (norm >= lo * (1 - tol)) & (norm <= hi * (1 + tol))
    z = np.zeros(f.shape, dtype=complex)
    tune = np.zeros(f.shape + (2,))
    needed = sorted({(int(a), int(b)) for a, b in zip(di[valid], fi[valid])})
    if needed:
        spec = _Spectrum(f, max(bank.radius(j) for _, j in needed))
        for i, j in needed:
            sel = valid & (di == i) & (fi == j)
            z[sel] = spec.convolve(*bank.kernels_1d(i, j))[sel]
            tune[sel] = bank.tune_in(i, j)
    phase = np.where(valid, np.angle(z), 0.0)
    return PhaseField(phase, np.abs(z), valid, tune)


def reconstruct(pf: PhaseField) -> np.ndarray:
    """Unit-amplitude image ``cos(phase)`` on valid pixels, 0 elsewhere."""
    return np.where(pf.valid, np.cos(pf.phase), 0.0)
