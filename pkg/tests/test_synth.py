import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lsphase.field_core import make_rng
from lsphase.synth import (
    BIFURCATION,
    RIDGE_END,
    GroundTruth,
    Minutia,
    NoiseSpec,
    SynthConfig,
    analytic_frequency_field,
    check_minutia_record,
    contaminate,
    corrected_omega,
    corrected_omegas,
    derive_constant_C,
    ground_truth,
    inner_radius,
    iso_direction,
    ladder_constellation,
    phase_at,
    phase_offset,
    pixel_coords,
    render_image,
    single_minutia_phase,
    snap_types,
    spr_fraction,
    synthesize,
    synthesize_phase,
    validate_specs,
    wrap_angle,
)

SMALL = SynthConfig(256, 256, 4.0, 32.0, seed=0)
FOUR = [
    Minutia(60.0, 0.0, BIFURCATION),
    Minutia(0.0, 60.0, RIDGE_END),
    Minutia(-60.0, 0.0, RIDGE_END),
    Minutia(0.0, -60.0, BIFURCATION),
]


def winding(phase: np.ndarray, row: int, col: int, half: int) -> float:
    """Sum of wrapped phase steps around the square loop of half-width ``half``."""
    r0, r1, c0, c1 = row - half, row + half, col - half, col + half
    path = (
        [(r0, c) for c in range(c0, c1)]
        + [(r, c1) for r in range(r0, r1)]
        + [(r1, c) for c in range(c1, c0, -1)]
        + [(r, c0) for r in range(r1, r0, -1)]
    )
    vals = np.array([phase[p] for p in path + path[:1]])
    return float(np.sum(wrap_angle(np.diff(vals))))


# -- constants --------------------------------------------------------------

def test_constant_C_examples():
    assert derive_constant_C(20.0, 256.0) == pytest.approx(80.4248, abs=1e-4)
    assert derive_constant_C(2 * math.pi * 37.0, 37.0) == pytest.approx(1.0)
    assert inner_radius(derive_constant_C(20.0, 256.0), 6.0) == pytest.approx(76.8, abs=1e-9)


@pytest.mark.parametrize("args", [(0.0, 10.0), (10.0, -1.0)])
def test_constant_C_rejects_nonpositive(args):
    with pytest.raises(ValueError):
        derive_constant_C(*args)


def test_config_invariants():
    with pytest.raises(ValueError):
        SynthConfig(t_min=1.5)
    with pytest.raises(ValueError):
        SynthConfig(t_min=40.0, t_max=20.0)
    cfg = SynthConfig()
    assert cfg.C > 0 and cfg.r_min <= cfg.r_max
    assert cfg.r_min == pytest.approx(cfg.C * cfg.t_min / (2 * math.pi))


# -- wave vectors -----------------------------------------------------------

def test_corrected_omega_examples():
    np.testing.assert_allclose(corrected_omega(0, [Minutia(40, 0)], 80.0), [2.0, 0.0])
    pair = [Minutia(40, 0), Minutia(40, 10)]
    np.testing.assert_allclose(corrected_omega(0, pair, 80.0), [2.1, 0.0], atol=1e-12)
    np.testing.assert_allclose(corrected_omegas(pair, 80.0)[0], [2.1, 0.0], atol=1e-12)


def test_corrected_omega_rejects_coincident():
    with pytest.raises(ValueError):
        corrected_omega(0, [Minutia(40, 0), Minutia(40, 0)], 80.0)
    with pytest.raises(ValueError):
        corrected_omegas([Minutia(40, 0), Minutia(40, 0)], 80.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(20, 500), st.floats(-math.pi, math.pi))
def test_far_minutia_perturbs_by_inverse_distance(d, angle):
    base = [Minutia(40.0, 5.0)]
    extra = Minutia(40.0 + d * math.cos(angle), 5.0 + d * math.sin(angle))
    delta = corrected_omega(0, base + [extra], 80.0) - corrected_omega(0, base, 80.0)
    assert np.hypot(*delta) == pytest.approx(1.0 / d, rel=1e-9)


# -- phase ------------------------------------------------------------------

def test_log_phase_without_minutiae():
    assert float(phase_at(complex(math.e, 0.0), [], 1.0)) == pytest.approx(1.0)


def test_polar_term_example():
    # bifurcation with wave vector (0, w); one pixel to the right: arg(1 / (i * i w)) = pi
    w = 2.0
    spec = [Minutia(100.0, 0.0, BIFURCATION)]
    got = phase_at(complex(101.0, 0.0), spec, 0.0, np.array([[0.0, w]]))
    assert abs(wrap_angle(float(got) - math.pi)) < 1e-12


def test_type_flip_shifts_phase_by_pi():
    flipped = [FOUR[0].__class__(FOUR[0].x, FOUR[0].y, RIDGE_END)] + FOUR[1:]
    a, valid = synthesize_phase(FOUR, SMALL)
    b, _ = synthesize_phase(flipped, SMALL)
    diff = wrap_angle(b - a)[valid]
    np.testing.assert_allclose(np.abs(diff), math.pi, atol=1e-9)


def test_inner_disc_is_masked():
    phase, valid = synthesize_phase(FOUR, SMALL)
    r = np.abs(pixel_coords(256, 256))
    np.testing.assert_array_equal(valid, r >= SMALL.r_min)
    assert np.all(phase[~valid] == 0)


def test_analytic_field_unit_norm_example():
    cfg = SynthConfig(257, 257, 2.0, 2 * math.pi * 128.5 / 80.0)
    assert cfg.C == pytest.approx(80.0)
    w = analytic_frequency_field([], cfg)
    np.testing.assert_allclose(w[128, 128 + 80], [1.0, 0.0], atol=1e-12)


def test_analytic_field_matches_finite_differences():
    specs = snap_types(FOUR, SMALL)
    omegas = corrected_omegas(specs, SMALL.C)
    w = analytic_frequency_field(specs, SMALL)
    z = pixel_coords(256, 256)
    near = np.min([np.abs(z - m.z) for m in specs], axis=0)
    mask = (near >= 2) & (np.abs(z) >= SMALL.r_min + 2) & (np.abs(z) <= SMALL.r_max - 2)
    h = 1e-4
    zs = z[mask]

    def d(step):
        up = phase_at(zs + step, specs, SMALL.C, omegas)
        dn = phase_at(zs - step, specs, SMALL.C, omegas)
        return wrap_angle(up - dn) / (2 * h)

    fd = np.stack([d(h), d(1j * h)], axis=-1)
    rel = np.hypot(*(fd - w[mask]).T) / np.hypot(*w[mask].T)
    assert rel.max() <= 1e-3


def test_winding_around_minutiae_and_elsewhere():
    specs = snap_types(FOUR, SMALL)
    phase, valid = synthesize_phase(specs, SMALL)
    c = 127.5
    for m in specs:
        row, col = int(round(m.y + c)), int(round(m.x + c))
        assert abs(abs(winding(phase, row, col, 4)) - 2 * math.pi) < 1e-9
    # loops in the annulus that enclose no minutia
    for row, col in [(128 + 40, 128 + 40), (128 - 40, 128 + 40), (128 + 90, 128), (128, 128 - 95)]:
        assert abs(winding(phase, row, col, 6)) < 1e-9


def test_render_examples():
    np.testing.assert_array_equal(render_image(np.zeros((3, 3))), 1.0)
    phi = np.linspace(-20, 20, 101).reshape(1, -1)
    np.testing.assert_allclose(render_image(phi + 2 * math.pi), render_image(phi), atol=1e-12)
    np.testing.assert_array_equal(render_image(-phi), render_image(phi))
    assert render_image(phi, np.zeros_like(phi, dtype=bool)).max() == 0


# -- noise ------------------------------------------------------------------

def test_spr_fraction_example():
    assert spr_fraction(0.61) == pytest.approx(0.1521)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 1.0), st.integers(0, 2**32))
def test_spr_replaces_exact_count(snr, seed):
    img = np.zeros((37, 41))
    out = contaminate(img, "spr", snr, make_rng(seed))
    count = int(math.floor(spr_fraction(snr) * img.size + 0.5))
    assert np.count_nonzero(out) == count
    assert np.count_nonzero(out == -1) == int(math.floor(count / 2 + 0.5))
    assert set(np.unique(out)) <= {-1.0, 0.0, 1.0}


def test_contaminate_determinism_and_identity():
    img = np.cos(np.arange(400.0)).reshape(20, 20)
    a = contaminate(img, "spr", 0.61, make_rng(9))
    b = contaminate(img, "spr", 0.61, make_rng(9))
    assert a.tobytes() == b.tobytes()
    np.testing.assert_array_equal(contaminate(img, "spr", 1.0, make_rng(9)), img)
    g = contaminate(img, "gaussian", 0.5, make_rng(9))
    assert 0.4 < np.std(g - img) < 0.6


@pytest.mark.parametrize("kind,level", [("spr", 0.0), ("spr", 1.5), ("gaussian", -1.0), ("pink", 0.1)])
def test_contaminate_rejects_bad_level(kind, level):
    with pytest.raises(ValueError):
        contaminate(np.zeros((4, 4)), kind, level, make_rng(0))


def test_noise_spec_parse():
    assert NoiseSpec.parse("spr:0.61", 3) == NoiseSpec("spr", 0.61, 3)
    assert NoiseSpec.parse("gauss:0.2").kind == "gaussian"
    assert NoiseSpec.parse("none").kind == "none"
    for bad in ("spr", "salt:0.5", ""):
        with pytest.raises(ValueError):
            NoiseSpec.parse(bad)


# -- constellations and ground truth ----------------------------------------

def test_validate_specs():
    validate_specs(FOUR, SMALL)
    with pytest.raises(ValueError, match="annulus"):
        validate_specs([Minutia(5.0, 0.0)], SMALL)
    with pytest.raises(ValueError, match="apart"):
        validate_specs([Minutia(60.0, 0.0), Minutia(62.0, 0.0)], SMALL)


@settings(max_examples=200)
@given(st.floats(-1e4, 1e4))
def test_wrap_angle_range_and_congruence(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert abs(math.remainder(w - a, 2 * math.pi)) < 1e-9


def test_standard_ladder_periods_and_directions():
    cfg = SynthConfig()
    raw = ladder_constellation(cfg)
    rings = [2 * math.pi / np.hypot(*corrected_omegas(raw, cfg.C).T)]
    specs = snap_types(raw, cfg)
    validate_specs(specs, cfg)
    gt = ground_truth(specs, cfg)
    assert len(gt.minutiae) == 70
    periods = np.array([m["period_px"] for m in gt.minutiae])
    rings.append(periods)
    assert periods.min() >= 0.9 * cfg.t_min and periods.max() <= 1.1 * cfg.t_max
    targets = 6.0 * 8.0 ** ((np.arange(7) + 0.5) / 7)
    # rings are solved inner first; later rings pull the earlier ones slightly
    np.testing.assert_allclose(rings[0].reshape(7, 10).mean(axis=1), targets, rtol=5e-3)
    # snapping moves each minutia by at most half a period
    np.testing.assert_allclose(rings[1].reshape(7, 10).mean(axis=1), targets, rtol=0.05)
    for m in gt.minutiae:
        assert -math.pi < m["direction_rad"] <= math.pi
    types = [m["type"] for m in gt.minutiae]
    assert types.count("bifurcation") == 35


def test_snap_types_zeroes_phase_offsets():
    specs = snap_types(FOUR, SMALL)
    om = corrected_omegas(specs, SMALL.C)
    for j in range(len(specs)):
        assert abs(phase_offset(j, specs, om, SMALL.C)) < 1e-8


def test_ground_truth_json_round_trip(tmp_path):
    syn = synthesize(FOUR, SMALL, NoiseSpec("spr", 0.8, 5))
    doc = syn.truth.to_json()
    assert set(doc) == {"image", "minutiae", "noise"}
    assert set(doc["image"]) == {"width", "height", "t_min", "t_max", "C", "r_min"}
    assert set(doc["minutiae"][0]) == {"x", "y", "type", "direction_rad", "period_px", "omega"}
    assert doc["noise"] == {"kind": "spr", "level": 0.8, "seed": 5}
    syn.truth.save(tmp_path / "t.json")
    assert GroundTruth.load(tmp_path / "t.json") == syn.truth
    json.dumps(doc)
    with pytest.raises(ValueError):
        GroundTruth.from_json({"minutiae": []})
    with pytest.raises(ValueError):
        check_minutia_record({"x": 0, "y": 0, "type": "loop", "direction_rad": 0, "period_px": 1})


def test_synthesize_is_seed_deterministic():
    a = synthesize(FOUR, SMALL, NoiseSpec("spr", 0.61, 11))
    b = synthesize(FOUR, SMALL, NoiseSpec("spr", 0.61, 11))
    assert a.image.tobytes() == b.image.tobytes()
    np.testing.assert_array_equal(a.clean, render_image(a.phase, a.valid))


@settings(max_examples=40, deadline=None)
@given(st.floats(-math.pi, math.pi), st.floats(5, 30), st.sampled_from([0, 1]))
def test_single_minutia_record(direction, period, t):
    phase, rec = single_minutia_phase(32, 32, direction, period, t)
    assert abs(wrap_angle(rec["direction_rad"] - direction)) < 1e-9
    assert rec["period_px"] == pytest.approx(period)
    assert iso_direction(rec["omega"]) == pytest.approx(rec["direction_rad"])
    assert abs(abs(winding(phase, 16, 16, 3)) - 2 * math.pi) < 1e-9
