"""Linear-symmetry (structure) tensor: local direction, scale and wave vector."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .field_core import TensorField, gaussian_derivative_kernel, gaussian_gradient, gaussian_smooth

# For cos(w x) the sigma^2-normalized gradient energy peaks at sigma = 1/w in
# the continuous limit.  The sampled kernels and the parabolic interpolation
# bend this at small sigma, so the peak-to-frequency map is tabulated from the
# exact discrete responses instead (see _calibration).
KAPPA = 1.0

INTEGRATION_RATIO = 2.0


@dataclass(frozen=True)
class ScaleLadder:
    """Geometric sequence of derivative scales ``sigma0 * ratio**s``."""

    sigma0: float = 0.5
    ratio: float = 2.0 ** (1.0 / 3.0)
    count: int = 15

    def __post_init__(self):
        if self.count < 3:
            raise ValueError("a scale ladder needs at least 3 samples")
        if not self.ratio > 1:
            raise ValueError("ladder ratio must exceed 1")
        if not self.sigma0 > 0:
            raise ValueError("sigma0 must be positive")

    @property
    def sigmas(self) -> np.ndarray:
        return self.sigma0 * self.ratio ** np.arange(self.count)

    @property
    def period_band(self) -> tuple[float, float]:
        """Shortest and longest period an in-ladder peak can report.

        The peak index is kept off both ends and the interpolated offset is
        clipped to half a step, which bounds the interpolated scale.
        """
        lo = self.sigma0 * self.ratio**0.5
        hi = self.sigma0 * self.ratio ** (self.count - 1.5)
        w = peak_to_frequency(np.array([lo, hi]), self)
        return float(2 * math.pi / w[0]), float(2 * math.pi / w[1])


@lru_cache(maxsize=16)
def _calibration(ladder: ScaleLadder):
    """Tabulated ``(log sigma_hat, log omega)`` for pure sinusoids on ``ladder``.

    The energy of the sampled derivative filter at frequency w is
    ``sigma^2 |D(w)|^2 / 2``; running the same peak interpolation on those
    exact values gives the estimate a clean wave produces.
    """
    sig = ladder.sigmas
    omegas = np.geomspace(KAPPA / sig[-1] / 1.5, min(math.pi, 1.5 * KAPPA / sig[0]), 4000)
    energy = np.empty((sig.size, omegas.size))
    for s, sigma in enumerate(sig):
        d = gaussian_derivative_kernel(sigma)
        r = d.size // 2
        k = np.arange(-r, r + 1)
        resp = np.abs(np.exp(-1j * np.outer(omegas, k)) @ d)
        energy[s] = sigma**2 * resp**2 / 2
    sigma_hat, _, _ = _peak(energy[:, None, :], ladder)
    log_hat = np.log(sigma_hat[0])
    log_w = np.log(omegas)
    # keep a strictly decreasing branch so the map inverts
    keep = np.concatenate([[True], np.diff(log_hat) < 0])
    keep &= np.minimum.accumulate(np.where(keep, log_hat, np.inf)) == log_hat
    return log_hat[keep][::-1], log_w[keep][::-1]


def peak_to_frequency(sigma_hat: np.ndarray, ladder: ScaleLadder) -> np.ndarray:
    """Map an interpolated peak scale to the frequency of the sinusoid that yields it."""
    xs, ys = _calibration(ladder)
    return np.exp(np.interp(np.log(sigma_hat), xs, ys))


@dataclass
class FrequencyField:
    """Per-pixel wave vector with direction coherence and scale certainty."""

    omega: np.ndarray  # (h, w, 2), radians / pixel
    coherence: np.ndarray
    certainty: np.ndarray
    n: tuple[float, float] = (1.0, 0.0)

    @property
    def shape(self):
        return self.coherence.shape

    @property
    def norm(self) -> np.ndarray:
        return np.hypot(self.omega[..., 0], self.omega[..., 1])

    @property
    def period(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 2 * math.pi / self.norm

    def as_channels(self) -> np.ndarray:
        return np.concatenate(
            [self.omega, self.coherence[..., None], self.certainty[..., None]], axis=-1
        )

    @classmethod
    def from_channels(cls, arr: np.ndarray, n=(1.0, 0.0)) -> "FrequencyField":
        arr = np.asarray(arr, dtype=float)
        return cls(arr[..., :2].copy(), arr[..., 2].copy(), arr[..., 3].copy(), tuple(n))


def direction_tensor(f: np.ndarray, sigma_d: float = 1.0, sigma_t: float = 3.0) -> TensorField:
    """Smoothed outer product of Gaussian-derivative gradients."""
    if not (sigma_d > 0 and sigma_t > 0):
        raise ValueError("sigma_d and sigma_t must be positive")
    gx, gy = gaussian_gradient(np.asarray(f, dtype=float), sigma_d)
    return TensorField(
        gaussian_smooth(gx * gx, sigma_t),
        gaussian_smooth(gx * gy, sigma_t),
        gaussian_smooth(gy * gy, sigma_t),
    )


def _direction_from_components(xx, xy, yy):
    trace = xx + yy
    eps = 1e-12 * max(float(np.max(trace, initial=0.0)), 1e-300)
    angle = np.mod(0.5 * np.arctan2(2 * xy, xx - yy), np.pi)
    coherence = np.hypot(xx - yy, 2 * xy) / (trace + eps)
    return angle, np.clip(coherence, 0.0, 1.0)


def estimate_direction(S: TensorField):
    """Dominant axis angle in ``[0, pi)`` and coherence ``(l1 - l2) / (l1 + l2)``."""
    return _direction_from_components(S.xx, S.xy, S.yy)


def _ladder_responses(f: np.ndarray, ladder: ScaleLadder, integration: float):
    """Per scale: sigma^2 * smoothed gradient energy, and the smoothed squared gradient."""
    energies, doubles = [], []
    for sigma in ladder.sigmas:
        gx, gy = gaussian_gradient(f, sigma)
        g2 = (gx + 1j * gy) ** 2
        st = integration * sigma
        energies.append(sigma**2 * gaussian_smooth(gx * gx + gy * gy, st))
        doubles.append((sigma**2 * gaussian_smooth(g2, st)).astype(np.complex64))
    return np.stack(energies), doubles


def _peak(energies: np.ndarray, ladder: ScaleLadder):
    """Interpolated peak scale and certainty from the stacked ladder responses."""
    count = energies.shape[0]
    floor = 1e-30 + 1e-12 * float(np.max(energies, initial=0.0))
    logm = np.log(np.maximum(energies, floor))
    best = np.argmax(logm, axis=0)
    inner = np.clip(best, 1, count - 2)
    rows, cols = np.indices(best.shape)
    lo = logm[inner - 1, rows, cols]
    mid = logm[inner, rows, cols]
    hi = logm[inner + 1, rows, cols]
    curv = lo - 2 * mid + hi
    with np.errstate(divide="ignore", invalid="ignore"):
        offset = np.where(curv < 0, 0.5 * (lo - hi) / curv, 0.0)
    offset = np.clip(offset, -0.5, 0.5)
    step = math.log(ladder.ratio)
    sigma_hat = ladder.sigma0 * np.exp((inner + offset) * step)
    # log-domain prominence, relative to the value a pure sinusoid gives
    ideal = 2.0 * math.sinh(step) ** 2
    certainty = np.clip((mid - 0.5 * (lo + hi)) / ideal, 0.0, 1.0)
    dead = (best == 0) | (best == count - 1) | (energies[inner, rows, cols] <= floor)
    certainty = np.where(dead, 0.0, certainty)
    return sigma_hat, certainty, inner


def estimate_abs_frequency(f: np.ndarray, ladder: ScaleLadder = ScaleLadder(), integration: float = INTEGRATION_RATIO):
    """Absolute frequency from the peak of the scale-normalized gradient energy.

    Returns ``(norm_omega, certainty)``.  Pixels whose peak sits on the first
    or last ladder sample are out of band and get certainty 0.
    """
    energies, _ = _ladder_responses(np.asarray(f, dtype=float), ladder, integration)
    sigma_hat, certainty, _ = _peak(energies, ladder)
    return peak_to_frequency(sigma_hat, ladder), certainty


def orient_half_plane(omega: np.ndarray, n) -> np.ndarray:
    """Flip wave vectors into ``omega . n >= 0``; ties go to the side of ``n`` rotated by +90 degrees."""
    nx, ny = n
    dot = omega[..., 0] * nx + omega[..., 1] * ny
    side = -omega[..., 0] * ny + omega[..., 1] * nx
    tie = dot == 0
    flip = np.where(tie, side < 0, dot < 0)
    return np.where(flip[..., None], -omega, omega)


def frequency_field(
    f: np.ndarray,
    ladder: ScaleLadder = ScaleLadder(),
    n=(1.0, 0.0),
    integration: float = INTEGRATION_RATIO,
) -> FrequencyField:
    """Wave vector per pixel: axis from the tensor at the selected scale, norm from the ladder peak."""
    f = np.asarray(f, dtype=float)
    n = _unit(n)
    energies, doubles = _ladder_responses(f, ladder, integration)
    sigma_hat, certainty, inner = _peak(energies, ladder)
    double = np.zeros(f.shape, dtype=complex)
    for s, d in enumerate(doubles):
        np.copyto(double, d, where=inner == s)
    chosen = np.take_along_axis(energies, inner[None], axis=0)[0]
    # half the double angle, in (-pi/2, pi/2]; the half-plane rule is applied after
    angle = 0.5 * np.angle(double)
    coherence = np.clip(np.abs(double) / np.maximum(chosen, 1e-300), 0.0, 1.0)
    coherence = np.where(chosen > 0, coherence, 0.0)
    norm = peak_to_frequency(sigma_hat, ladder)
    omega = np.stack([norm * np.cos(angle), norm * np.sin(angle)], axis=-1)
    return FrequencyField(orient_half_plane(omega, n), coherence, certainty, n)


def _unit(n) -> tuple[float, float]:
    nx, ny = float(n[0]), float(n[1])
    length = math.hypot(nx, ny)
    if length == 0:
        raise ValueError("walking direction must be non-zero")
    return nx / length, ny / length
