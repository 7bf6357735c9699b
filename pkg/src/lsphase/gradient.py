"""Phase gradients free of wrap seams, the compound gradient and the phase tensor."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .field_core import TensorField, gaussian_gradient, gaussian_smooth


@dataclass
class GradientField:
    g: np.ndarray  # (h, w, 2)
    valid: np.ndarray

    @property
    def magnitude(self) -> np.ndarray:
        return np.hypot(self.g[..., 0], self.g[..., 1])


def direct_gradient(phase: np.ndarray, valid: np.ndarray | None = None, sigma: float = 1.0) -> GradientField:
    """Gradient of a wrapped phase computed through ``u = cos, v = sin``.

    ``(u dv - v du) / (u^2 + v^2)`` on Gaussian-smoothed ``u, v`` is blind to
    2 pi seams.  Dividing by the smoothed amplitude removes the low-pass
    attenuation, so a linear phase gives its exact slope.
    """
    phase = np.asarray(phase, dtype=float)
    if valid is None:
        valid = np.ones(phase.shape, dtype=bool)
    u = np.where(valid, np.cos(phase), 0.0)
    v = np.where(valid, np.sin(phase), 0.0)
    su, sv = gaussian_smooth(u, sigma), gaussian_smooth(v, sigma)
    ux, uy = gaussian_gradient(u, sigma)
    vx, vy = gaussian_gradient(v, sigma)
    amp = su * su + sv * sv
    ok = valid & (amp > 1e-6)
    with np.errstate(divide="ignore", invalid="ignore"):
        gx = np.where(ok, (su * vx - sv * ux) / amp, 0.0)
        gy = np.where(ok, (su * vy - sv * uy) / amp, 0.0)
    return GradientField(np.stack([gx, gy], axis=-1), ok)


def walking_axes(n=(1.0, 0.0)) -> np.ndarray:
    """Orthonormal axes ``[n, n rotated +90 deg]`` as rows."""
    nx, ny = float(n[0]), float(n[1])
    length = math.hypot(nx, ny)
    if length == 0:
        raise ValueError("walking direction must be non-zero")
    nx, ny = nx / length, ny / length
    return np.array([[nx, ny], [-ny, nx]])


def _sign(x):
    return np.where(x < 0, -1.0, 1.0)


def pyramid_index(omega: np.ndarray, axes: np.ndarray) -> np.ndarray:
    """Index of the axis with the largest ``|axis . omega|``; ties take the lower index."""
    proj = np.abs(omega @ axes.T)
    return np.argmax(proj, axis=-1)


def alternate_phase(phase: np.ndarray, omega: np.ndarray, axes: np.ndarray, j: int) -> np.ndarray:
    """Phase seen with walking direction ``axes[j]``: ``sign(axes[j] . omega) * phase``."""
    return _sign(omega @ axes[j]) * phase


def compound_gradient(phase: np.ndarray, omega: np.ndarray, valid=None, n=(1.0, 0.0), sigma: float = 1.0) -> GradientField:
    """Gradient assembled from one phase representation per axis.

    Each pixel takes the representation whose axis is most aligned with the
    local wave vector, so no sample sits near that representation's
    sign-flip line.  The result is rectified to ``g . n >= 0``.
    """
    axes = walking_axes(n)
    phase = np.asarray(phase, dtype=float)
    J = pyramid_index(omega, axes)
    g = np.zeros(phase.shape + (2,))
    ok = np.zeros(phase.shape, dtype=bool)
    for j in range(axes.shape[0]):
        sel = J == j
        if not sel.any():
            continue
        s = _sign(omega @ axes[j])
        gf = direct_gradient(s * phase, valid, sigma)
        g[sel] = (s[..., None] * gf.g)[sel]
        ok[sel] = gf.valid[sel]
    flip = (g @ axes[0]) < 0
    g[flip] = -g[flip]
    return GradientField(g, ok)


@dataclass
class PhaseTensor:
    tensor: TensorField
    complex: np.ndarray  # (gx + i gy)^2 scaled by |omega|^-gamma


def phase_tensor(grad: GradientField, omega: np.ndarray | None = None, gamma: float = 0.0) -> PhaseTensor:
    """Outer product of the phase gradient, optionally scaled by ``|omega|^-gamma``."""
    g = grad.g
    scale = np.ones(g.shape[:2])
    if gamma and omega is not None:
        norm = np.hypot(omega[..., 0], omega[..., 1])
        with np.errstate(divide="ignore"):
            scale = np.where(norm > 0, norm ** (-gamma), 0.0)
    scale = np.where(grad.valid, scale, 0.0)
    gx, gy = g[..., 0], g[..., 1]
    t = TensorField(scale * gx * gx, scale * gx * gy, scale * gy * gy)
    return PhaseTensor(t, scale * (gx + 1j * gy) ** 2)
