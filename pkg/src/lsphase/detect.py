"""Multi-scale minutia detection on the squared phase gradient.

Near a minutia the complex squared gradient ``c = g**2`` of the phase is

    c = w**2 + (2i w / r) exp(i phi) - exp(2i phi) / r**2

in polar coordinates ``(r, phi)`` around it.  Projecting ``c`` on the
symmetry ``i exp(i phi)`` keeps only the middle term, whose argument carries
the minutia direction, while planar-wave regions (``c`` constant) project to
zero.  Periods vary over the image, so ``c`` is split into scale partitions
by a Gaussian membership in ``|w|`` and each partition gets a filter sized to
its own period.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .field_core import correlate2d, gaussian_smooth
from .gabor import PhaseField
from .ls_tensor import FrequencyField
from .synth import BIFURCATION, RIDGE_END, TYPE_NAMES, iso_direction, minutia_record, wrap_angle

DEFAULT_BAND = (4.0, 48.0)
DEFAULT_PARTITIONS = 3
WINDOW = 1.5  # filter window diameter, in periods
TAPER = 0.35  # radial Gaussian taper sigma, in periods
THRESHOLD = 0.42
MIN_MASS = 0.15  # least membership mass, as a fraction of the window mass
MIN_AREA = 2
SUPPORT_FRACTION = 0.3
SUPPORT_SMOOTH = 2.0  # amplitude smoothing for the support mask, pixels


@dataclass(frozen=True)
class ScalePartition:
    """One scale interval: center frequency, membership width and filter radius."""

    center: float  # rad / pixel
    sigma: float  # rad / pixel
    radius: int  # pixels

    @property
    def period(self) -> float:
        return 2 * math.pi / self.center


def build_partitions(band=DEFAULT_BAND, count: int = DEFAULT_PARTITIONS, window: float = WINDOW) -> list[ScalePartition]:
    """``count`` partitions with geometric period centers over ``band``.

    Each membership width is a third of the gap to the neighbouring center,
    so a neighbour's center lies about 3 sigma away.
    """
    if count < 2:
        raise ValueError(f"need at least 2 partitions, got {count}")
    lo, hi = float(band[0]), float(band[1])
    if not 0 < lo < hi:
        raise ValueError(f"bad period band {band}")
    periods = lo * (hi / lo) ** ((np.arange(count) + 0.5) / count)
    centers = 2 * math.pi / periods
    out = []
    for p in range(count):
        gap = abs(centers[p] - centers[p + 1]) if p + 1 < count else abs(centers[p] - centers[p - 1])
        radius = int(math.ceil(0.5 * window * periods[p]))
        out.append(ScalePartition(float(centers[p]), gap / 3.0, radius))
    return out


def belongingness(norm: np.ndarray, p: ScalePartition) -> np.ndarray:
    """Gaussian membership of ``|w|`` in partition ``p``."""
    return np.exp(-((np.asarray(norm) - p.center) ** 2) / (2 * p.sigma**2))


def belongingness_map(c: np.ndarray, freq: FrequencyField, p: ScalePartition, valid=None) -> np.ndarray:
    """Membership as magnitude, argument of ``c`` as argument; 0 where invalid."""
    beta = belongingness(freq.norm, p)
    mag = np.abs(c)
    ok = mag > 0
    if valid is not None:
        ok &= valid
    unit = np.where(ok, c / np.where(ok, mag, 1.0), 0.0)
    return beta * unit


def detection_window(p: ScalePartition, taper: float = TAPER):
    """Radial taper ``G`` (center sample 0) and the polar angle of each tap."""
    r = p.radius
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1].astype(float)
    rr = np.hypot(xx, yy)
    s = taper * p.period
    G = np.exp(-(rr**2) / (2 * s * s)) * (rr <= r)
    G[r, r] = 0.0
    return G, np.arctan2(yy, xx)


def detection_filter(p: ScalePartition, order: int = 1, taper: float = TAPER) -> np.ndarray:
    """``(i exp(i phi))**order * G``; order 1 is the minutia filter, order 2 its square."""
    G, phi = detection_window(p, taper)
    return (1j * np.exp(1j * phi)) ** order * G


def complex_detect(
    bmap: np.ndarray,
    p: ScalePartition,
    order: int = 1,
    consistency: bool = True,
    taper: float = TAPER,
    min_mass: float = MIN_MASS,
) -> np.ndarray:
    """Normalized projection of a membership map on the detection filter.

    The projection is divided by the local membership mass so scale
    transitions do not change the response level, and the local mean of the
    map is projected out first, since a partially covered window would
    otherwise leak the planar-wave term.  With ``consistency`` the response
    is weighted by how well its square agrees with that local mean, which a
    minutia satisfies and bending ridge flow does not.
    """
    G, _ = detection_window(p, taper)
    w = detection_filter(p, order, taper)
    beta = np.abs(bmap)
    mass = correlate2d(beta, G).real
    safe = np.maximum(mass, 1e-12)
    mean = correlate2d(bmap, G) / safe
    num = correlate2d(bmap, w) - mean * correlate2d(beta, w)
    resp = np.where(mass > min_mass * G.sum(), num / safe, 0.0)
    if consistency:
        agree = np.real(resp**2 * np.conj(mean))
        scale = np.maximum(np.abs(resp) ** 2 * np.abs(mean), 1e-12)
        resp = resp * np.clip(agree / scale, 0.0, 1.0)
    return resp


def signal_support(pf: PhaseField, freq: FrequencyField, smooth: float = SUPPORT_SMOOTH, fraction: float = SUPPORT_FRACTION) -> np.ndarray:
    """Pixels carrying a ridge pattern.

    The smoothed filter amplitude drops where there is no pattern and, briefly,
    at minutia cores.  Gaps smaller than a disc of one local period in diameter
    are cores and are filled; larger gaps are kept out of the support.
    """
    amp = gaussian_smooth(np.where(pf.valid, pf.magnitude, 0.0), smooth)
    positive = amp[amp > 0]
    if positive.size == 0:
        return np.zeros(amp.shape, dtype=bool)
    support = amp > fraction * np.median(positive)
    labels, count = ndimage.label(~support)
    if count == 0:
        return support
    idx = np.arange(1, count + 1)
    area = ndimage.sum(np.ones(amp.shape), labels, idx)
    rim = ndimage.binary_dilation(~support, iterations=2) & support
    # period around each gap, read on its rim
    rim_labels = ndimage.grey_dilation(labels, size=(5, 5)) * rim
    period = freq.period
    finite = rim & np.isfinite(period)
    rim_period = ndimage.median(np.where(finite, period, 0.0), np.where(finite, rim_labels, 0), idx)
    rim_period = np.nan_to_num(np.asarray(rim_period, dtype=float), nan=np.inf)
    fill = np.concatenate([[False], area < math.pi * (rim_period / 2) ** 2])
    return support | fill[labels]


def border_mask(support: np.ndarray, radius: int) -> np.ndarray:
    """Pixels whose full window of ``radius`` lies inside ``support`` and the image."""
    dist = ndimage.distance_transform_edt(np.pad(support, 1))[1:-1, 1:-1]
    return dist > radius


def aggregate(responses: list[np.ndarray]) -> np.ndarray:
    """Pixelwise response of largest magnitude over partitions."""
    best = responses[0].copy()
    for r in responses[1:]:
        take = np.abs(r) > np.abs(best)
        best[take] = r[take]
    return best


@dataclass
class DetectedMinutia:
    x: float  # centered coordinates, pixels
    y: float
    direction: float  # ISO, radians in (-pi, pi]
    period: float
    type: int
    certainty: float

    def to_record(self) -> dict:
        k = 2 * math.pi / self.period
        # the wave vector whose arg(i w) is the direction
        omega = (k * math.sin(self.direction), -k * math.cos(self.direction))
        rec = minutia_record(self.x, self.y, omega, self.type)
        rec["direction_rad"] = float(self.direction)
        rec["period_px"] = float(self.period)
        rec["certainty"] = float(self.certainty)
        return rec


# The detector peaks near where the phase gradient vanishes, which for a
# single minutia lies 1/|w| = T / (2 pi) from the singular point, against the
# ISO direction.  Detections are moved back by this distance before the core
# search.
CORE_OFFSET = 1.0 / (2 * math.pi)


def _minutia_kernel(omega, period: float, sign: int, fx: float = 0.0, fy: float = 0.0) -> np.ndarray:
    """Complex template ``G exp(-i w.d) exp(-i s arg(d / (i w)))`` centered at ``(fx, fy)``.

    Against ``cos(w.d + s arg(d / (i w)) + t pi)`` the template cancels one
    of the two exponentials of the cosine and leaves ``exp(i t pi)`` times
    the window mass; the other exponential oscillates at twice the frequency
    and averages out under the window.
    """
    r = max(2, int(math.ceil(0.75 * period)))
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1].astype(float)
    dx, dy = xx - fx, yy - fy
    d = dx + 1j * dy
    rr = np.abs(d)
    G = np.exp(-(rr**2) / (2 * (0.35 * period) ** 2)) * (rr <= r) * (rr > 0)
    wv = complex(omega[0], omega[1])
    safe = np.where(rr > 0, d, 1.0)
    return G * np.exp(-1j * (wv.conjugate() * d).real) * np.exp(-1j * sign * np.angle(safe / (1j * wv)))


def _patch(image: np.ndarray, col: int, row: int, r: int):
    h, w = image.shape
    if row - r < 0 or col - r < 0 or row + r >= h or col + r >= w:
        return None
    return image[row - r : row + r + 1, col - r : col + r + 1]


def detect_type(image: np.ndarray, omega, x: float, y: float, period: float) -> tuple[int, float]:
    """Classify the minutia at ``(x, y)`` (pixel col, row) from the image.

    The spiral sign that fits better also absorbs the sign ambiguity of the
    wave vector.  Returns ``(type, discriminant)``; the discriminant lies in
    ``[-1, 1]`` and is positive for bifurcations.
    """
    c0, r0 = int(round(x)), int(round(y))
    best = (1, 0j)
    for sign in (1, -1):
        K = _minutia_kernel(omega, period, sign, x - c0, y - r0)
        patch = _patch(np.asarray(image, dtype=float), c0, r0, K.shape[0] // 2)
        if patch is None:
            return BIFURCATION, 0.0
        val = np.sum(patch * K)
        if abs(val) > abs(best[1]):
            best = (sign, val)
    sign, val = best
    mass = 0.5 * np.sum(np.abs(_minutia_kernel(omega, period, 1)))
    disc = float(np.clip(sign * val.real / max(mass, 1e-12), -1.0, 1.0))
    return (BIFURCATION if disc > 0 else RIDGE_END), disc


SEARCH = 0.5  # core search radius around the first guess, in periods


def _parabolic(m1: float, m0: float, p1: float) -> float:
    curv = m1 - 2 * m0 + p1
    return 0.0 if curv >= 0 else float(np.clip(0.5 * (m1 - p1) / curv, -0.5, 0.5))


def locate_core(image: np.ndarray, omega, x: float, y: float, period: float, search: float = SEARCH):
    """Singular point of the ridge pattern near ``(x, y)`` (pixel col, row).

    The magnitude of the image's projection on the minutia template is
    largest when the template sits on the core.  It is evaluated on the
    integer grid within ``search`` periods and refined by a parabola along
    each axis.  Returns ``(x, y)``, unchanged if the search leaves the image.
    """
    rs = max(1, int(math.ceil(search * period)))
    c0, r0 = int(round(x)), int(round(y))
    K1 = _minutia_kernel(omega, period, 1)
    patch = _patch(np.asarray(image, dtype=float), c0, r0, rs + K1.shape[0] // 2)
    if patch is None:
        return x, y
    score = None
    for sign in (1, -1):
        K = K1 if sign == 1 else _minutia_kernel(omega, period, -1)
        D = np.abs(signal.correlate(patch, np.conj(K), mode="valid"))
        score = D if score is None else np.maximum(score, D)
    gy, gx = np.mgrid[-rs : rs + 1, -rs : rs + 1]
    score = np.where(np.hypot(gx, gy) <= rs, score, -np.inf)
    i, j = np.unravel_index(int(np.argmax(score)), score.shape)
    dy = dx = 0.0
    if 0 < i < score.shape[0] - 1 and np.isfinite(score[i - 1, j]) and np.isfinite(score[i + 1, j]):
        dy = _parabolic(score[i - 1, j], score[i, j], score[i + 1, j])
    if 0 < j < score.shape[1] - 1 and np.isfinite(score[i, j - 1]) and np.isfinite(score[i, j + 1]):
        dx = _parabolic(score[i, j - 1], score[i, j], score[i, j + 1])
    return c0 + (j - rs) + dx, r0 + (i - rs) + dy


def oriented_direction(omega, hint: float) -> float:
    """ISO direction of the axis of ``omega``, with the polarity closest to ``hint``."""
    d = iso_direction(omega)
    return d if abs(wrap_angle(d - hint)) <= math.pi / 2 else wrap_angle(d + math.pi)


RING = (0.5, 1.5)  # annulus for local wave-vector reads, in periods


def ring_wave_vector(freq: FrequencyField, row: float, col: float, period: float, ring=RING, iterations: int = 3) -> np.ndarray:
    """Wave vector around a minutia, read on an annulus that skips its core.

    At the core the singular term dominates the local frequency and shortens
    the apparent period.  On the annulus it averages out: the axis comes from
    the mean double angle, the norm from the median.  The annulus is rescaled
    with the period found and the read repeated.
    """
    h, w = freq.shape
    v = None
    for _ in range(iterations):
        r_out = int(math.ceil(ring[1] * period)) + 1
        r0, c0 = int(round(row)), int(round(col))
        ys = slice(max(r0 - r_out, 0), min(r0 + r_out + 1, h))
        xs = slice(max(c0 - r_out, 0), min(c0 + r_out + 1, w))
        yy, xx = np.mgrid[ys, xs]
        rr = np.hypot(xx - col, yy - row)
        om = freq.omega[ys, xs]
        z = om[..., 0] + 1j * om[..., 1]
        sel = (rr >= ring[0] * period) & (rr <= ring[1] * period) & (np.abs(z) > 0)
        if not sel.any():
            break
        axis = 0.5 * np.angle(np.sum(z[sel] ** 2))
        norm = float(np.median(np.abs(z[sel])))
        v = norm * np.array([math.cos(axis), math.sin(axis)])
        period = 2 * math.pi / norm
    if v is None:
        v = freq.omega[min(max(int(round(row)), 0), h - 1), min(max(int(round(col)), 0), w - 1)].copy()
    nx, ny = freq.n
    if v[0] * nx + v[1] * ny < 0:
        v = -v
    return v


@dataclass
class Detection:
    minutiae: list[DetectedMinutia]
    response: np.ndarray  # aggregated complex response
    support: np.ndarray
    partitions: list[ScalePartition]


def extract(
    image: np.ndarray,
    response: np.ndarray,
    freq: FrequencyField,
    pf: PhaseField,
    threshold: float = THRESHOLD,
    min_area: int = MIN_AREA,
) -> list[DetectedMinutia]:
    """Blobs of the aggregated response turned into minutiae.

    The magnitude-weighted blob centroid, moved by the core offset, seeds a
    search for the singular point of the phase.  Period and direction axis
    come from the frequency field on an annulus around the minutia, the
    direction polarity from the response argument at the blob maximum, and
    the type from the phase.
    """
    if not 0 < threshold < 1:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    mag = np.abs(response)
    top = float(mag.max(initial=0.0))
    if top <= 0:
        return []
    labels, count = ndimage.label(mag > threshold * top, structure=np.ones((3, 3)))
    if count == 0:
        return []
    idx = np.arange(1, count + 1)
    area = ndimage.sum(np.ones(mag.shape), labels, idx)
    cent = np.array(ndimage.center_of_mass(mag, labels, idx)).reshape(-1, 2)
    peaks = np.array(ndimage.maximum_position(mag, labels, idx)).reshape(-1, 2)
    h, w = mag.shape
    found = []
    for k in np.argsort(peaks[:, 0] * w + peaks[:, 1], kind="stable"):
        if area[k] < min_area:
            continue
        pr, pc = int(peaks[k, 0]), int(peaks[k, 1])
        hint = wrap_angle(float(np.angle(1j * response[pr, pc])))
        row, col = cent[k]
        norm = float(freq.norm[int(round(row)), int(round(col))])
        if not norm > 0:
            continue
        period = 2 * math.pi / norm
        col += CORE_OFFSET * period * math.cos(hint)
        row += CORE_OFFSET * period * math.sin(hint)
        omega = ring_wave_vector(freq, row, col, period)
        period = 2 * math.pi / float(np.hypot(omega[0], omega[1]))
        col, row = locate_core(image, omega, col, row, period)
        omega = ring_wave_vector(freq, row, col, period)
        period = 2 * math.pi / float(np.hypot(omega[0], omega[1]))
        direction = oriented_direction(omega, hint)
        kind, _ = detect_type(image, omega, col, row, period)
        found.append(
            DetectedMinutia(
                col - (w - 1) / 2.0, row - (h - 1) / 2.0, direction, period, kind, float(mag[pr, pc])
            )
        )
    return found


def detect(
    image: np.ndarray,
    c: np.ndarray,
    freq: FrequencyField,
    pf: PhaseField,
    partitions: list[ScalePartition] | None = None,
    threshold: float = THRESHOLD,
    support: np.ndarray | None = None,
    consistency: bool = True,
) -> Detection:
    """Full detector: partition, filter, aggregate, extract.

    ``c`` is the complex squared phase gradient (0 where invalid); ``image``
    is the analyzed image, used to pin down the cores and their types.
    """
    if partitions is None:
        partitions = build_partitions()
    if support is None:
        support = signal_support(pf, freq)
    valid = pf.valid & (np.abs(c) > 0)
    responses = []
    for p in partitions:
        bmap = belongingness_map(c, freq, p, valid)
        resp = complex_detect(bmap, p, consistency=consistency)
        responses.append(np.where(border_mask(support, p.radius), resp, 0.0))
    best = aggregate(responses)
    return Detection(extract(image, best, freq, pf, threshold), best, support, partitions)


def type_name(code: int) -> str:
    return TYPE_NAMES[code]
