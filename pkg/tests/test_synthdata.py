"""Synthetic pattern dataset and harmonic toy image tests."""

import json
import math

import numpy as np
import pytest

from solidsph import synthdata as sd
from solidsph.invariants import spectrum
from solidsph.kernels import rotate_grid
from solidsph.sph import Rotation, random_rotation


# ---------------------------------------------------------------------------
# patterns
# ---------------------------------------------------------------------------

def test_pattern_norms():
    segment = sd.make_pattern("segment")
    cross = sd.make_pattern("cross")
    assert np.linalg.norm(segment) == pytest.approx(math.sqrt(7))
    assert np.linalg.norm(cross) == pytest.approx(math.sqrt(7))
    assert np.count_nonzero(segment) == 7
    assert np.count_nonzero(cross) == 13
    assert cross.max() == pytest.approx(math.sqrt(7.0 / 13.0))
    with pytest.raises(ValueError):
        sd.make_pattern("sphere")


def test_patterns_symmetric_about_main_axis():
    segment = sd.make_pattern("segment")  # line along axis 0
    half_turn_axis0 = Rotation(np.diag([1.0, -1.0, -1.0]))
    np.testing.assert_array_equal(rotate_grid(segment, half_turn_axis0), segment)
    cross = sd.make_pattern("cross")  # plus shape in the (0, 1) plane
    half_turn_axis2 = Rotation(np.diag([-1.0, -1.0, 1.0]))
    np.testing.assert_array_equal(rotate_grid(cross, half_turn_axis2), cross)


def test_resample_identity_and_norm_tolerance():
    pattern = sd.make_pattern("cross")
    same = sd.resample_rotated(pattern, Rotation.identity())
    np.testing.assert_allclose(same, pattern, atol=1e-14)
    rng = np.random.default_rng(80)
    rotated = sd.resample_rotated(pattern, random_rotation(rng))
    assert rotated.shape == pattern.shape
    assert rotated.min() >= 0.0


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------

def test_pattern_count_arithmetic():
    assert sd.pattern_count(0.1, 32) == 9
    assert sd.pattern_count(0.5, 32) == 47


def test_place_patterns_reproducible():
    cfg = sd.GenConfig()
    vol1, rec1 = sd.place_patterns(0, np.random.default_rng(7), cfg)
    vol2, rec2 = sd.place_patterns(0, np.random.default_rng(7), cfg)
    np.testing.assert_array_equal(vol1, vol2)
    assert rec1 == rec2
    assert rec1["count"] == sd.pattern_count(rec1["density"], cfg.volume_size)
    assert vol1.shape == (32, 32, 32)


def test_generate_dataset_structure(tmp_path):
    cfg = sd.GenConfig(n_per_class=5, seed=3)
    manifest = sd.generate_dataset(cfg, tmp_path)
    samples = manifest["samples"]
    assert len(samples) == 10
    assert sum(s["label"] == 0 for s in samples) == 5
    assert sum(s["split"] == "train" for s in samples) == 8
    assert manifest["format_version"] == 1
    on_disk = json.loads((tmp_path / "manifest.json").read_text())
    assert on_disk == manifest
    # placement count law recorded per sample
    for s in samples:
        assert s["count"] == sd.pattern_count(s["density"], cfg.volume_size)
        data = sd.load_volume(tmp_path / s["file"], manifest["shape"])
        assert data.shape == (32, 32, 32)
        assert np.all(np.isfinite(data))


def test_regeneration_from_manifest_seed(tmp_path):
    cfg = sd.GenConfig(n_per_class=2, seed=11)
    manifest = sd.generate_dataset(cfg, tmp_path)
    sample = manifest["samples"][3]
    vol, _ = sd.place_patterns(sample["label"],
                               np.random.default_rng(sample["seed"]), cfg)
    regenerated = vol.astype("<f4").tobytes()
    assert regenerated == (tmp_path / sample["file"]).read_bytes()


def test_same_seed_same_manifest(tmp_path):
    m1 = sd.generate_dataset(sd.GenConfig(n_per_class=2, seed=4), tmp_path / "a")
    m2 = sd.generate_dataset(sd.GenConfig(n_per_class=2, seed=4), tmp_path / "b")
    assert m1 == m2
    assert (tmp_path / "a" / "sample_00000.f32raw").read_bytes() == \
        (tmp_path / "b" / "sample_00000.f32raw").read_bytes()


def test_parallel_generation_matches_serial(tmp_path):
    cfg = sd.GenConfig(n_per_class=3, seed=21)
    m1 = sd.generate_dataset(cfg, tmp_path / "serial", jobs=1)
    m2 = sd.generate_dataset(cfg, tmp_path / "parallel", jobs=2)
    assert m1["samples"] == m2["samples"]
    for s in m1["samples"]:
        assert (tmp_path / "serial" / s["file"]).read_bytes() == \
            (tmp_path / "parallel" / s["file"]).read_bytes()


def test_load_dataset_split(tmp_path):
    sd.generate_dataset(sd.GenConfig(n_per_class=5, seed=9), tmp_path)
    vols, labels = sd.load_dataset(tmp_path, "test")
    assert len(vols) == 2 and sorted(labels.tolist()) == [0, 1]
    vols, labels = sd.load_dataset(tmp_path, "train", limit=3)
    assert len(vols) == 3


# ---------------------------------------------------------------------------
# harmonic synthesis
# ---------------------------------------------------------------------------

def test_synthesize_radially_symmetric():
    c0 = 1.7
    profile = sd.shell_profile(4.0, 1.0)
    vol = sd.synthesize_from_sh([np.array([c0], dtype=complex)], profile, 16)
    ax = np.arange(16.0) - 8.0
    x1, x2, x3 = np.meshgrid(ax, ax, ax, indexing="ij")
    rho = np.sqrt(x1 ** 2 + x2 ** 2 + x3 ** 2)
    expected = c0 * profile(rho) / (2.0 * math.sqrt(math.pi))
    np.testing.assert_allclose(vol, expected, atol=1e-12)


def test_synthesize_zero_rows():
    vol = sd.synthesize_from_sh([np.zeros(1), np.zeros(3, dtype=complex)],
                                sd.shell_profile(4.0), 12)
    assert np.all(vol == 0.0)


def test_synthesize_rejects_asymmetric_rows():
    bad = [np.zeros(1), np.array([1.0, 1.0j, 1.0])]  # degree-0 entry imaginary
    with pytest.raises(ValueError):
        sd.synthesize_from_sh(bad, sd.shell_profile(4.0), 12)


def test_profiles():
    h = sd.simoncelli_profile(8.0)
    assert h(8.0) == pytest.approx(1.0)
    assert h(4.0) == 0.0 and h(16.0) == 0.0
    assert h(4.0001) == pytest.approx(0.0, abs=1e-4)
    g = sd.shell_profile(8.0, 2.0)
    assert g(8.0) == pytest.approx(1.0)
    assert g(0.0) < 4e-4
    with pytest.raises(ValueError):
        sd.radial_profile("boxcar")


def test_synthesis_analysis_calibration():
    # matched-profile projection oracle: unit-coefficient volumes measure the
    # per-degree calibration factor; toy class-1 spectra then normalize to 1
    spec = sd.ToySpec(experiment=1, noise=0.0)
    profile = sd.radial_profile(spec.profile, spec.rho0)
    gamma = {}
    for n in (1, 2, 3):
        rows = [np.zeros(2 * k + 1, dtype=complex) for k in range(n + 1)]
        rows[n][n] = 1.0  # m = 0, real: a valid real-function row
        vol = sd.synthesize_from_sh(rows, profile, spec.volume_size)
        measured = sd.analyze_at_center(vol, spec)
        gamma[n] = abs(measured[n][n])
        # leakage into other orders of the same degree stays tiny
        others = np.delete(measured[n], n)
        assert np.max(np.abs(others)) < 1e-6 * gamma[n]
    base_rows, _ = sd.toy_class_rows(1, spec.seed)
    vol = sd.synthesize_from_sh(base_rows, profile, spec.volume_size)
    measured = sd.analyze_at_center(vol, spec)
    for n in (1, 2, 3):
        assert spectrum(measured[n]) / gamma[n] ** 2 == pytest.approx(1.0, rel=1e-6)


# ---------------------------------------------------------------------------
# toy experiments
# ---------------------------------------------------------------------------

def test_toy_class_rows_have_unit_spectra():
    for experiment in (1, 2):
        first, second = sd.toy_class_rows(experiment)
        for rows in (first, second):
            for n in (1, 2, 3):
                assert spectrum(rows[n]) == pytest.approx(1.0)
    # the published intra-degree example row also has unit spectrum
    assert spectrum(np.array([math.sqrt(1.5), 0.0, math.sqrt(1.5)])) \
        == pytest.approx(1.0)


def test_toy_noiseless_spectra_match_but_bispectra_differ():
    for experiment in (1, 2):
        table = sd.toy_class_table(sd.ToySpec(experiment=experiment))
        bisp_scale = max(abs(v) for (kind, _), v in table[0].items()
                         if kind == "bispectrum")
        rel_diffs = []
        for key, v0 in table[0].items():
            v1 = table[1][key]
            if key[0] == "spectrum" and key[1] != "0":
                assert abs(v0 - v1) <= 1e-6 * max(v0, v1)
            elif key[0] == "bispectrum" and max(abs(v0), abs(v1)) > 0.01 * bisp_scale:
                rel_diffs.append(abs(v0 - v1) / max(abs(v0), abs(v1)))
        assert max(rel_diffs) > 0.10


def test_run_toy_rows_and_determinism():
    spec = sd.ToySpec(experiment=1, n_instances=3, noise=0.05, seed=2,
                      volume_size=16, rho0=4.0)
    t1 = sd.run_toy(spec)
    t2 = sd.run_toy(spec)
    assert t1 == t2
    n_channels = 4 + 8  # spectra 0..3 plus the 8 bispectrum triples for N=3
    assert len(t1) == 2 * 3 * n_channels
    labels = {row["label"] for row in t1}
    assert labels == {0, 1}


def test_threshold_accuracy():
    labels = np.array([0, 0, 0, 1, 1, 1])
    assert sd.threshold_accuracy(np.array([0, 1, 2, 5, 6, 7]), labels) == 1.0
    assert sd.threshold_accuracy(np.array([5, 6, 7, 0, 1, 2]), labels) == 1.0
    assert sd.threshold_accuracy(np.zeros(6), labels) == 0.5
    # ties across the class boundary cannot be split
    assert sd.threshold_accuracy(np.array([0, 0, 1, 1, 2, 2]), labels) \
        == pytest.approx(5 / 6)


def test_pair_threshold_accuracy():
    rng = np.random.default_rng(81)
    labels = np.repeat([0, 1], 50)
    # neither coordinate separates alone; the pair does
    base = rng.standard_normal(100)
    a = base + labels * 0.2
    b = -base + labels * 0.2
    assert sd.threshold_accuracy(a, labels) < 0.8
    assert sd.pair_threshold_accuracy(a, b, labels) > 0.95
