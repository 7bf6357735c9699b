import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import run_detect
from lsphase.detect import (
    CORE_OFFSET,
    DetectedMinutia,
    ScalePartition,
    aggregate,
    belongingness,
    belongingness_map,
    build_partitions,
    complex_detect,
    detect,
    detect_type,
    extract,
)
from lsphase.evaluate import match
from lsphase.ls_tensor import FrequencyField
from lsphase.pipeline import analyze
from lsphase.synth import (
    BIFURCATION,
    RIDGE_END,
    SynthConfig,
    iso_direction,
    ladder_constellation,
    pixel_coords,
    single_minutia_phase,
    snap_types,
    synthesize,
    to_pixel,
    wrap_angle,
)

# arg(response) at a minutia = ISO direction + RESPONSE_OFFSET
RESPONSE_OFFSET = -math.pi / 2


def matched_partition(T: float) -> ScalePartition:
    k = 2 * math.pi / T
    return ScalePartition(k, 0.3 * k, int(math.ceil(0.75 * T)))


def oracle_field(size, direction, T, type_code=BIFURCATION):
    """Exact gradient of a single-minutia phase, its square and frequency field."""
    z = pixel_coords(size, size)
    _, rec = single_minutia_phase(size, size, direction, T, type_code)
    w = complex(*rec["omega"])
    g = w + 1j * z / np.maximum(np.abs(z) ** 2, 1e-12)
    ones = np.ones(z.shape)
    freq = FrequencyField(np.stack([g.real, g.imag], axis=-1), ones, ones)
    return z, g**2, freq


def oracle_response(size, direction, T, order=1):
    z, c, freq = oracle_field(size, direction, T)
    p = matched_partition(T)
    return z, complex_detect(belongingness_map(c, freq, p), p, order=order, consistency=False)


def analyze_detect(image):
    a = analyze(image)
    return detect(image, a.tensor.complex, a.freq, a.phase)


# -- partitions ---------------------------------------------------------------


def test_partition_geometry():
    parts = build_partitions((4.0, 48.0), 3)
    periods = [p.period for p in parts]
    assert periods == sorted(periods)
    np.testing.assert_allclose(periods, 4.0 * 12.0 ** ((np.arange(3) + 0.5) / 3))
    for a, b in zip(parts, parts[1:]):
        assert abs(a.center - b.center) == pytest.approx(3 * a.sigma)
    for p in parts:
        assert p.radius == math.ceil(0.75 * p.period)


def test_partition_errors():
    with pytest.raises(ValueError):
        build_partitions(count=1)
    with pytest.raises(ValueError):
        build_partitions((10.0, 5.0), 3)


def test_belongingness_examples():
    p = build_partitions()[1]
    assert belongingness(p.center, p) == pytest.approx(1.0)
    assert belongingness(p.center + p.sigma, p) == pytest.approx(math.exp(-0.5))
    assert belongingness(p.center - 4 * p.sigma, p) <= 3.4e-4


def test_belongingness_map_keeps_argument():
    p = build_partitions()[0]
    c = np.array([[2.0 * np.exp(0.7j), 0.0]])
    freq = FrequencyField(np.full((1, 2, 2), [p.center, 0.0]), np.ones((1, 2)), np.ones((1, 2)))
    b = belongingness_map(c, freq, p)
    assert b[0, 0] == pytest.approx(np.exp(0.7j))
    assert b[0, 1] == 0
    assert belongingness_map(c, freq, p, valid=np.array([[False, True]]))[0, 0] == 0


# -- filters --------------------------------------------------------------------


@pytest.mark.parametrize("order", [1, 2])
@pytest.mark.parametrize("arg", [0.0, 1.3, -2.4])
def test_planar_region_annihilated(order, arg):
    p = build_partitions()[1]
    size = 64
    c = np.full((size, size), 0.8 * np.exp(1j * arg))
    freq = FrequencyField(np.full((size, size, 2), [p.center, 0.0]), np.ones((size, size)), np.ones((size, size)))
    r = complex_detect(belongingness_map(c, freq, p), p, order=order)
    assert np.abs(r).max() <= 1e-3 * 0.8


@pytest.mark.parametrize("T", [8.0, 12.0])
def test_peak_at_minutia(T):
    for d in np.arange(8) * 2 * math.pi / 8 + 0.1:
        z, r = oracle_response(128, d, T)
        i = np.unravel_index(np.argmax(np.abs(r)), r.shape)
        assert abs(z[i]) <= 1.0


@pytest.mark.parametrize("T", [16.0, 24.0])
def test_peak_near_minutia_long_period(T):
    for d in np.arange(8) * 2 * math.pi / 8 + 0.1:
        z, r = oracle_response(128, d, T)
        i = np.unravel_index(np.argmax(np.abs(r)), r.shape)
        assert abs(z[i]) <= CORE_OFFSET * T


@pytest.mark.parametrize("T", [8.0, 16.0])
def test_square_filter_peak(T):
    for d in np.arange(4) * math.pi / 2 + 0.3:
        z, r = oracle_response(128, d, T, order=2)
        i = np.unravel_index(np.argmax(np.abs(r)), r.shape)
        assert abs(z[i]) <= 0.3 * T


def test_response_argument_offset():
    for d in np.arange(16) * 2 * math.pi / 16 + 0.1:
        z, r = oracle_response(128, d, 16.0)
        i = np.unravel_index(np.argmax(np.abs(r)), r.shape)
        assert abs(wrap_angle(np.angle(r[i]) - d - RESPONSE_OFFSET)) <= 0.1


@pytest.mark.parametrize("consistency", [False, True])
def test_steerability_quarter_turn(consistency):
    # a quarter turn of the grid is exact, so the response must rotate exactly
    T, size, d = 12.0, 96, 0.4
    p = matched_partition(T)
    out = []
    for direction in (d, d + math.pi / 2):
        _, c, freq = oracle_field(size, direction, T)
        out.append(complex_detect(belongingness_map(c, freq, p), p, consistency=consistency))
    np.testing.assert_allclose(out[1], 1j * np.rot90(out[0], 3), atol=1e-12)


def test_steerability_argument_tracks_direction():
    z, r0 = oracle_response(128, 0.2, 12.0)
    i = np.unravel_index(np.argmax(np.abs(r0)), r0.shape)
    for delta in (0.05, 0.2, 0.5):
        _, r = oracle_response(128, 0.2 + delta, 12.0)
        assert abs(wrap_angle(np.angle(r[i]) - np.angle(r0[i]) - delta)) <= 0.05


def test_aggregate_takes_largest_magnitude():
    a = np.array([1.0, -3.0j, 0.5])
    b = np.array([2.0j, 1.0, -0.1])
    np.testing.assert_array_equal(aggregate([a, b]), [2.0j, -3.0j, 0.5])


# -- type and extraction ----------------------------------------------------------


def test_type_discriminant_separates_pair():
    size, T, d = 128, 12.0, 0.7
    _, rec = single_minutia_phase(size, size, d, T)
    x, y = to_pixel(0.0, 0.0, size, size)
    discs = {}
    for t in (BIFURCATION, RIDGE_END):
        phase, _ = single_minutia_phase(size, size, d, T, t)
        kind, disc = detect_type(np.cos(phase), rec["omega"], x, y, T)
        assert kind == t
        discs[t] = disc
    assert discs[BIFURCATION] > 0.5 and discs[RIDGE_END] < -0.5


def test_blank_image_gives_no_minutiae():
    assert analyze_detect(np.zeros((96, 96))).minutiae == []


def test_extract_threshold_bounds():
    z = np.zeros((8, 8), dtype=complex)
    freq = FrequencyField(np.zeros((8, 8, 2)), np.zeros((8, 8)), np.zeros((8, 8)))
    for tau in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            extract(np.zeros((8, 8)), z, freq, None, tau)
    assert extract(np.zeros((8, 8)), z, freq, None, 0.5) == []


def test_record_direction_and_period():
    m = DetectedMinutia(3.0, -2.0, 2.5, 11.0, RIDGE_END, 0.4)
    rec = m.to_record()
    assert iso_direction(rec["omega"]) == pytest.approx(2.5)
    assert 2 * math.pi / math.hypot(*rec["omega"]) == pytest.approx(11.0)
    assert rec["type"] == "ridge_end"
    assert rec["certainty"] == pytest.approx(0.4)


# -- full detector ----------------------------------------------------------------


def test_single_ring_clean():
    config = SynthConfig(512, 512, 4.0, 64.0, 0)
    specs = snap_types(ladder_constellation(config, 1, 10), config)
    syn = synthesize(specs, config)
    det = analyze_detect(syn.image)
    assert len(det.minutiae) == 10
    rep = match([m.to_record() for m in det.minutiae], syn.truth.minutiae)
    assert rep.fr == 0 and rep.fa == 0


@pytest.mark.slow
@pytest.mark.parametrize("partitions", [3, 5, 7])
def test_partition_count_invariance(standard_clean, partitions):
    _, syn, ana = standard_clean
    det = run_detect(syn, ana, partitions)
    assert len(det.minutiae) == len(syn.truth.minutiae)
    rep = match([m.to_record() for m in det.minutiae], syn.truth.minutiae)
    assert rep.fr == 0 and rep.fa == 0


@settings(max_examples=8, deadline=None)
@given(dx=st.integers(-6, 6), dy=st.integers(-6, 6))
def test_translation_equivariance(dx, dy):
    size, T, d = 128, 12.0, 1.0
    base, _ = single_minutia_phase(size, size, d, T, BIFURCATION, 0.3, -0.2)
    moved, _ = single_minutia_phase(size, size, d, T, BIFURCATION, 0.3 + dx, -0.2 + dy)
    a = analyze_detect(np.cos(base)).minutiae
    b = analyze_detect(np.cos(moved)).minutiae
    assert len(a) == len(b) == 1
    assert abs(b[0].x - a[0].x - dx) <= 0.5
    assert abs(b[0].y - a[0].y - dy) <= 0.5


def test_detected_minutia_invariants(standard_noisy):
    _, syn, ana = standard_noisy
    det = run_detect(syn, ana)
    lo, hi = 4.0 / 1.2, 48.0 * 1.2
    for m in det.minutiae:
        assert -math.pi < m.direction <= math.pi
        assert m.type in (BIFURCATION, RIDGE_END)
        assert lo <= m.period <= hi
        assert 0 < m.certainty
    assert det.response.shape == syn.image.shape

