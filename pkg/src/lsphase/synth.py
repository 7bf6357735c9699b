"""Fingerprint-like test images with exact minutia ground truth.

The phase of the image is a slowly varying linear part ``C log|r|`` plus one
polar (spiral) term per minutia::

    phi(r) = C log|r| + sum_j arg((-1)**t_j (r - r_j) / (1j * w_j))

where ``w_j`` is the instantaneous wave vector at ``r_j`` with the minutia's
own singular term left out.  Coordinates are pixels with the origin at the
image center, ``x`` to the right and ``y`` downward; 2-D vectors are handled
as complex numbers ``x + 1j*y`` throughout.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

BIFURCATION = 0
RIDGE_END = 1
TYPE_NAMES = {BIFURCATION: "bifurcation", RIDGE_END: "ridge_end"}
TYPE_CODES = {v: k for k, v in TYPE_NAMES.items()}

DEFAULT_BAND = (6.0, 48.0)


def wrap_angle(a):
    """Wrap angles to ``(-pi, pi]``."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2 * np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def iso_direction(omega) -> float:
    """Minutia direction ``arg(1j * omega)`` of a wave vector ``(wx, wy)``."""
    return wrap_angle(math.atan2(omega[0], -omega[1]))


@dataclass(frozen=True)
class Minutia:
    x: float
    y: float
    type: int = BIFURCATION

    def __post_init__(self):
        if self.type not in TYPE_NAMES:
            raise ValueError(f"minutia type must be 0 or 1, got {self.type}")

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)


def derive_constant_C(t_max: float, r_max: float) -> float:
    """Log-phase constant that puts period ``t_max`` at radius ``r_max``."""
    if not (t_max > 0 and r_max > 0):
        raise ValueError("t_max and r_max must be positive")
    return 2 * math.pi * r_max / t_max


def inner_radius(C: float, t_min: float) -> float:
    """Radius at which the log phase reaches period ``t_min``."""
    if not (C > 0 and t_min > 0):
        raise ValueError("C and t_min must be positive")
    return C * t_min / (2 * math.pi)


@dataclass(frozen=True)
class SynthConfig:
    width: int = 1024
    height: int = 1024
    t_min: float = 4.0
    t_max: float = 128.0
    seed: int = 0

    def __post_init__(self):
        if self.width < 8 or self.height < 8:
            raise ValueError("image must be at least 8x8")
        if not (2 <= self.t_min < self.t_max):
            raise ValueError("need 2 <= t_min < t_max")
        if self.r_min > self.r_max:
            raise ValueError("inner radius exceeds outer radius")

    @property
    def r_max(self) -> float:
        return min(self.width, self.height) / 2.0

    @property
    def C(self) -> float:
        return derive_constant_C(self.t_max, self.r_max)

    @property
    def r_min(self) -> float:
        return inner_radius(self.C, self.t_min)

    def period_at(self, radius: float) -> float:
        """Period of the log phase alone at ``radius``."""
        return 2 * math.pi * radius / self.C


def pixel_coords(width: int, height: int) -> np.ndarray:
    """Complex coordinates of every pixel, origin at the image center."""
    x = np.arange(width) - (width - 1) / 2.0
    y = np.arange(height) - (height - 1) / 2.0
    return x[None, :] + 1j * y[:, None]


def to_pixel(x: float, y: float, width: int, height: int) -> tuple[float, float]:
    """Centered coordinates to ``(col, row)`` pixel indices."""
    return x + (width - 1) / 2.0, y + (height - 1) / 2.0


def from_pixel(col: float, row: float, width: int, height: int) -> tuple[float, float]:
    return col - (width - 1) / 2.0, row - (height - 1) / 2.0


# -- wave vectors ---------------------------------------------------------

def _interaction(zj: complex, others: Sequence[complex]) -> complex:
    total = 0j
    for zk in others:
        d = zj - zk
        if abs(d) == 0:
            raise ValueError(f"coincident minutiae at {zj}")
        total += 1j * d / abs(d) ** 2
    return total


def corrected_omega(j: int, specs: Sequence[Minutia], C: float) -> np.ndarray:
    """Wave vector at minutia ``j``: log-phase gradient plus the other minutiae's pull."""
    zj = specs[j].z
    if abs(zj) == 0:
        raise ValueError("minutia at the origin has no defined log-phase gradient")
    others = [m.z for k, m in enumerate(specs) if k != j]
    w = C * zj / abs(zj) ** 2 + _interaction(zj, others)
    return np.array([w.real, w.imag])


def corrected_omegas(specs: Sequence[Minutia], C: float) -> np.ndarray:
    """Vectorized :func:`corrected_omega` for every minutia, shape ``(n, 2)``."""
    if not specs:
        return np.zeros((0, 2))
    z = np.array([m.z for m in specs])
    if np.any(z == 0):
        raise ValueError("minutia at the origin has no defined log-phase gradient")
    d = z[:, None] - z[None, :]
    dist2 = np.abs(d) ** 2
    np.fill_diagonal(dist2, np.inf)
    if np.any(dist2 == 0):
        raise ValueError("coincident minutiae")
    w = C * z / np.abs(z) ** 2 + np.sum(1j * d / dist2, axis=1)
    return np.stack([w.real, w.imag], axis=-1)


# -- phase, frequency, image ----------------------------------------------

def _polar_terms(z: np.ndarray, specs, omegas) -> np.ndarray:
    out = np.zeros(z.shape)
    for m, w in zip(specs, omegas):
        sign = -1.0 if m.type == RIDGE_END else 1.0
        out += np.angle(sign * (z - m.z) / (1j * complex(w[0], w[1])))
    return out


def synthesize_phase(specs: Sequence[Minutia], config: SynthConfig, omegas=None):
    """Phase of the minutia constellation and its validity mask.

    Pixels inside the inner disc get phase 0 and ``valid = False``.
    Returns ``(phase, valid)``.
    """
    validate_specs(specs, config)
    if omegas is None:
        omegas = corrected_omegas(specs, config.C)
    z = pixel_coords(config.width, config.height)
    valid = np.abs(z) >= config.r_min
    phase = np.where(valid, phase_at(z, specs, config.C, omegas), 0.0)
    return phase, valid


def phase_at(z, specs: Sequence[Minutia], C: float, omegas=None) -> np.ndarray:
    """Phase at arbitrary centered points ``z = x + iy``, inner disc not masked."""
    z = np.asarray(z, dtype=complex)
    if omegas is None:
        omegas = corrected_omegas(specs, C)
    return C * np.log(np.maximum(np.abs(z), 1e-300)) + _polar_terms(z, specs, omegas)


def analytic_frequency_field(specs: Sequence[Minutia], config: SynthConfig) -> np.ndarray:
    """Exact wave vector ``(wx, wy)`` of the synthesized phase at every pixel.

    Returns an ``(h, w, 2)`` array; pixels inside the inner disc are zero.
    """
    z = pixel_coords(config.width, config.height)
    radius = np.abs(z)
    w = config.C * z / np.maximum(radius**2, 1e-300)
    for m in specs:
        d = z - m.z
        w = w + 1j * d / np.maximum(np.abs(d) ** 2, 1e-300)
    w = np.where(radius >= config.r_min, w, 0)
    return np.stack([w.real, w.imag], axis=-1)


def render_image(phase: np.ndarray, valid: np.ndarray | None = None) -> np.ndarray:
    """Image ``Re exp(i phase)``; pixels outside ``valid`` are set to the constant 0."""
    image = np.cos(phase)
    if valid is not None:
        image = np.where(valid, image, 0.0)
    return image


def contaminate(image: np.ndarray, kind: str, level: float, rng: np.random.Generator) -> np.ndarray:
    """Degrade an image with salt-and-pepper replacement or additive Gaussian noise.

    For ``spr`` the level is the SNR in ``(0, 1]``: a fraction ``(1 - SNR)**2``
    of the pixels, drawn without replacement over row-major indices, is set to
    -1 (first half) or +1 (rest).  For ``gaussian`` the level is the noise sigma.
    """
    out = np.array(image, dtype=float, copy=True)
    if kind == "spr":
        if not 0 < level <= 1:
            raise ValueError(f"SPR level is an SNR in (0, 1], got {level}")
        n_pix = out.size
        count = int(math.floor((1 - level) ** 2 * n_pix + 0.5))
        if count == 0:
            return out
        idx = rng.choice(n_pix, size=count, replace=False)
        n_black = int(math.floor(count / 2 + 0.5))
        flat = out.reshape(-1)
        flat[idx[:n_black]] = -1.0
        flat[idx[n_black:]] = 1.0
        return out
    if kind == "gaussian":
        if not level >= 0:
            raise ValueError(f"gaussian sigma must be non-negative, got {level}")
        return out + rng.normal(0.0, level, size=out.shape)
    if kind == "none":
        return out
    raise ValueError(f"unknown noise kind {kind!r}")


def spr_fraction(snr: float) -> float:
    return (1.0 - snr) ** 2


# -- constellations -------------------------------------------------------

def validate_specs(specs: Sequence[Minutia], config: SynthConfig) -> None:
    for m in specs:
        r = abs(m.z)
        if not config.r_min < r < config.r_max:
            raise ValueError(
                f"minutia at ({m.x:.2f}, {m.y:.2f}) lies outside the annulus "
                f"({config.r_min:.2f}, {config.r_max:.2f})"
            )
    for a in range(len(specs)):
        for b in range(a + 1, len(specs)):
            za, zb = specs[a].z, specs[b].z
            need = max(config.period_at(abs(za)), config.period_at(abs(zb)))
            if abs(za - zb) < need:
                raise ValueError(
                    f"minutiae {a} and {b} are {abs(za - zb):.2f} px apart, "
                    f"closer than the local period {need:.2f}"
                )


def type_sequence(kind: str, count: int, offset: int = 0) -> list[int]:
    if kind == "alternate":
        return [(i + offset) % 2 for i in range(count)]
    if kind in TYPE_CODES:
        return [TYPE_CODES[kind]] * count
    raise ValueError(f"unknown type pattern {kind!r}")


def _ring(radius: float, k: int, per_scale: int, kinds: list[int]) -> list[Minutia]:
    out = []
    for m in range(per_scale):
        angle = 2 * math.pi * (m + 0.5 * (k % 2) + 0.13 * k) / per_scale
        out.append(Minutia(radius * math.cos(angle), radius * math.sin(angle), kinds[m]))
    return out


def ladder_constellation(
    config: SynthConfig,
    scales: int = 7,
    per_scale: int = 10,
    band: tuple[float, float] = DEFAULT_BAND,
    types: str = "alternate",
) -> list[Minutia]:
    """Rings of minutiae, one ring per geometric period band.

    Ring ``k`` is meant to carry the band's geometric mid period.  Every
    minutia adds a unit vortex to the wave field, so the enclosed rings shorten
    the periods further out; ring radii are therefore solved (inner ring first)
    so that the mean corrected period on each ring hits its target.
    Rings are rotated against each other so neighbours do not line up.
    """
    if scales < 1 or per_scale < 1:
        raise ValueError("scales and per_scale must be positive")
    lo, hi = band
    if not 0 < lo < hi:
        raise ValueError(f"bad period band {band}")
    specs: list[Minutia] = []
    for k in range(scales):
        target = lo * (hi / lo) ** ((k + 0.5) / scales)
        kinds = type_sequence(types, per_scale, offset=k)

        def mean_period(radius):
            ring = _ring(radius, k, per_scale, kinds)
            om = corrected_omegas(specs + ring, config.C)[-per_scale:]
            return float(np.mean(2 * math.pi / np.hypot(om[:, 0], om[:, 1])))

        a = max(config.r_min, abs(specs[-1].z) if specs else 0.0) + 1e-6
        b = 4.0 * config.r_max
        for _ in range(60):
            mid = 0.5 * (a + b)
            if mean_period(mid) < target:
                a = mid
            else:
                b = mid
        specs += _ring(0.5 * (a + b), k, per_scale, kinds)
    return specs


def phase_offset(j: int, specs: Sequence[Minutia], omegas, C: float) -> float:
    """Phase the rest of the field contributes at minutia ``j`` (mod 2 pi)."""
    zj = specs[j].z
    total = C * math.log(abs(zj))
    for k, (m, w) in enumerate(zip(specs, omegas)):
        if k == j:
            continue
        sign = -1.0 if m.type == RIDGE_END else 1.0
        total += np.angle(sign * (zj - m.z) / (1j * complex(w[0], w[1])))
    return wrap_angle(total)


def snap_types(specs: Sequence[Minutia], config: SynthConfig, iterations: int = 20) -> list[Minutia]:
    """Shift minutiae along their wave vector so the stated type is the visible one.

    A minutia shows its nominal type only when the surrounding phase at its
    location is a multiple of 2 pi.  Each minutia is moved by at most half a
    local period; the moves interact, so a few sweeps are made.
    """
    specs = list(specs)
    for _ in range(iterations):
        omegas = corrected_omegas(specs, config.C)
        worst = 0.0
        moved = []
        for j, (m, w) in enumerate(zip(specs, omegas)):
            off = phase_offset(j, specs, omegas, config.C)
            norm2 = float(w[0] ** 2 + w[1] ** 2)
            step = -off / norm2
            moved.append(Minutia(m.x + step * w[0], m.y + step * w[1], m.type))
            worst = max(worst, abs(off))
        specs = moved
        if worst < 1e-9:
            break
    return specs


# -- ground truth ---------------------------------------------------------

@dataclass
class NoiseSpec:
    kind: str = "none"
    level: float = 0.0
    seed: int = 0

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "NoiseSpec":
        """Parse ``spr:<snr>``, ``gauss:<sigma>`` or ``none``."""
        if text == "none":
            return cls("none", 0.0, seed)
        kind, _, value = text.partition(":")
        kinds = {"spr": "spr", "gauss": "gaussian", "gaussian": "gaussian"}
        if kind not in kinds or not value:
            raise ValueError(f"bad noise spec {text!r}; use spr:<snr>, gauss:<sigma> or none")
        return cls(kinds[kind], float(value), seed)


@dataclass
class GroundTruth:
    width: int
    height: int
    t_min: float
    t_max: float
    C: float
    r_min: float
    minutiae: list[dict] = field(default_factory=list)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def to_json(self) -> dict:
        return {
            "image": {
                "width": self.width,
                "height": self.height,
                "t_min": self.t_min,
                "t_max": self.t_max,
                "C": self.C,
                "r_min": self.r_min,
            },
            "minutiae": self.minutiae,
            "noise": asdict(self.noise),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, doc: dict) -> "GroundTruth":
        try:
            img = doc["image"]
            noise = doc.get("noise", {"kind": "none", "level": 0.0, "seed": 0})
            gt = cls(
                int(img["width"]), int(img["height"]), float(img["t_min"]), float(img["t_max"]),
                float(img["C"]), float(img["r_min"]),
                [check_minutia_record(m) for m in doc["minutiae"]],
                NoiseSpec(noise["kind"], float(noise["level"]), int(noise["seed"])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"ground-truth document does not match the schema: {exc}") from exc
        return gt

    @classmethod
    def load(cls, path) -> "GroundTruth":
        return cls.from_json(json.loads(Path(path).read_text()))


def check_minutia_record(rec: dict) -> dict:
    for key in ("x", "y", "type", "direction_rad", "period_px"):
        if key not in rec:
            raise ValueError(f"minutia record lacks {key!r}")
    if rec["type"] not in TYPE_CODES:
        raise ValueError(f"unknown minutia type {rec['type']!r}")
    return rec


def minutia_record(x, y, omega, type_code) -> dict:
    wx, wy = float(omega[0]), float(omega[1])
    return {
        "x": float(x),
        "y": float(y),
        "type": TYPE_NAMES[int(type_code)],
        "direction_rad": iso_direction((wx, wy)),
        "period_px": 2 * math.pi / math.hypot(wx, wy),
        "omega": [wx, wy],
    }


def ground_truth(specs: Sequence[Minutia], config: SynthConfig, noise: NoiseSpec | None = None) -> GroundTruth:
    omegas = corrected_omegas(specs, config.C)
    return GroundTruth(
        config.width, config.height, config.t_min, config.t_max, config.C, config.r_min,
        [minutia_record(m.x, m.y, w, m.type) for m, w in zip(specs, omegas)],
        noise or NoiseSpec(seed=config.seed),
    )


@dataclass
class Synthesis:
    phase: np.ndarray
    valid: np.ndarray
    clean: np.ndarray
    image: np.ndarray
    truth: GroundTruth


def synthesize(specs: Sequence[Minutia], config: SynthConfig, noise: NoiseSpec | None = None) -> Synthesis:
    """Phase, clean image, contaminated image and ground truth in one go."""
    noise = noise or NoiseSpec(seed=config.seed)
    omegas = corrected_omegas(specs, config.C)
    phase, valid = synthesize_phase(specs, config, omegas)
    clean = render_image(phase, valid)
    image = contaminate(clean, noise.kind, noise.level, _rng(noise.seed)) if noise.kind != "none" else clean.copy()
    return Synthesis(phase, valid, clean, image, ground_truth(specs, config, noise))


def _rng(seed):
    from .field_core import make_rng

    return make_rng(seed)


# -- isolated minutiae ----------------------------------------------------

def single_minutia_phase(
    width: int, height: int, direction: float, period: float, type_code: int = BIFURCATION,
    x: float = 0.0, y: float = 0.0,
) -> tuple[np.ndarray, dict]:
    """Planar wave with one minutia of given ISO direction, period and type.

    The wave vector is the one whose ``arg(1j * w)`` equals ``direction``.
    Returns ``(phase, ground-truth record)``.
    """
    k = 2 * math.pi / period
    w = -1j * k * complex(math.cos(direction), math.sin(direction))
    z = pixel_coords(width, height) - complex(x, y)
    sign = -1.0 if type_code == RIDGE_END else 1.0
    phase = (w.conjugate() * z).real + np.angle(sign * z / (1j * w))
    return phase, minutia_record(x, y, (w.real, w.imag), type_code)
