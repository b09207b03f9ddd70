"""Feature catalog: registry contracts, forcing cases, and persistence."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adlens.aesthetics.features import (
    FeatureVector,
    default_registry,
    extract_features,
    load_feature_csv,
    load_registry_manifest,
    write_feature_csv,
    write_registry_manifest,
)
from adlens.aesthetics.image import buffer_from_rgb
from adlens.errors import RegistryMismatch

REGISTRY = default_registry()
FAMILIES = {
    "ColorExposure",
    "RuleOfThirds",
    "WaveletTexture",
    "SizeAspect",
    "Region",
    "DepthOfField",
    "KeComposition",
    "RAG",
}


def flat_image(value=0.5, h=48, w=48):
    return buffer_from_rgb(np.full((h, w, 3), float(value)))


def features_of(img):
    return extract_features(img, REGISTRY).as_dict(REGISTRY)


# ---------------------------------------------------------------------------
# Registry contracts


def test_registry_shape_and_families():
    assert len(REGISTRY) >= 40
    assert len(set(REGISTRY.ids)) == len(REGISTRY)
    assert {d.family for d in REGISTRY} == FAMILIES
    for d in REGISTRY:
        assert d.lower < d.upper
        assert d.human_name


def test_registry_hash_is_order_sensitive_and_stable():
    again = default_registry()
    assert again.hash == REGISTRY.hash
    reordered = type(REGISTRY)(descriptors=tuple(reversed(REGISTRY.descriptors)))
    assert reordered.hash != REGISTRY.hash


def test_counting_features_are_not_tunable():
    for fid in ("region_significant_count", "ke_hue_count", "rag_segment_count", "rag_cut_depth"):
        assert not REGISTRY.get(fid).tunable
    assert REGISTRY.get("color_mean_saturation").tunable


# ---------------------------------------------------------------------------
# Forcing cases with known answers


def test_flat_grey_forcings():
    f = features_of(flat_image(0.5))
    assert f["color_colorfulness"] == pytest.approx(0.0, abs=1e-12)
    assert f["ke_hue_count"] == 1.0
    for chan in ("hue", "saturation", "value"):
        for level in (1, 2, 3):
            assert f[f"wavelet_{chan}_l{level}"] == 0.0
        assert f[f"wavelet_{chan}_sum"] == 0.0
    assert f["region_significant_count"] == 1.0
    assert f["rag_segment_count"] == 1.0
    assert f["ke_edge_bbox_fraction"] == 0.0
    assert f["ke_contrast"] == pytest.approx(0.0, abs=1e-6)


def test_pure_red_forcings():
    rgb = np.zeros((32, 32, 3))
    rgb[..., 0] = 1.0
    f = features_of(buffer_from_rgb(rgb))
    assert f["color_mean_saturation"] == pytest.approx(1.0)
    assert f["color_mean_value"] == pytest.approx(1.0)
    assert f["color_circular_mean_hue"] == pytest.approx(0.0, abs=1e-9)
    assert f["ke_brightness"] == pytest.approx(0.2126)


def test_two_tone_split_forcings():
    rgb = np.zeros((32, 32, 3))
    rgb[:, :16, 0] = 1.0
    rgb[:, 16:, 2] = 1.0
    f = features_of(buffer_from_rgb(rgb))
    assert f["rag_segment_count"] == 2.0
    assert f["region_top1_size"] == pytest.approx(0.5)
    assert f["region_top2_size"] == pytest.approx(0.5)
    assert f["region_top3_size"] == 0.0
    assert f["region_largest_convexity"] == pytest.approx(1.0)  # a rectangle


def test_thirds_equal_global_means_on_uniform_image():
    f = features_of(flat_image(0.37))
    assert f["thirds_mean_value"] == f["color_mean_value"]
    assert f["thirds_mean_saturation"] == f["color_mean_saturation"]
    assert f["thirds_mean_hue"] == f["color_circular_mean_hue"]


def test_size_features_use_buffer_dimensions():
    f = features_of(flat_image(0.2, h=30, w=60))
    assert f["size_sum"] == 90.0
    assert f["size_aspect_ratio"] == 2.0


def test_dof_ratio_detects_central_texture():
    # texture confined to the central half (aligned to the 8-pixel wavelet
    # cells of a 64x64 image) puts all level-3 detail energy in the center
    rng = np.random.default_rng(0)
    quiet = np.full((64, 64, 3), 0.5)
    quiet[16:48, 16:48, :] = rng.uniform(0.0, 1.0, size=(32, 32, 3))
    f = features_of(buffer_from_rgb(quiet))
    assert f["dof_value"] > 0.99
    uniform_noise = buffer_from_rgb(rng.uniform(size=(64, 64, 3)))
    g = features_of(uniform_noise)
    assert 0.05 < g["dof_value"] < 0.6  # ~quarter of the energy is central


def test_contrast_and_blur_move_the_right_way():
    rng = np.random.default_rng(1)
    noisy = rng.uniform(size=(64, 64))
    soft = noisy * 0.1 + 0.45
    sharp_img = buffer_from_rgb(np.repeat(noisy[..., None], 3, axis=2))
    soft_img = buffer_from_rgb(np.repeat(soft[..., None], 3, axis=2))
    fs, fo = features_of(sharp_img), features_of(soft_img)
    assert fs["ke_contrast"] > fo["ke_contrast"]
    assert fs["ke_blur"] >= fo["ke_blur"]


# ---------------------------------------------------------------------------
# Vector-level properties


@given(st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_every_feature_finite_on_random_images(seed):
    rng = np.random.default_rng(seed)
    h = int(rng.integers(8, 64))
    w = int(rng.integers(8, 64))
    vec = extract_features(buffer_from_rgb(rng.uniform(size=(h, w, 3))), REGISTRY)
    assert vec.values.size == len(REGISTRY)
    assert np.all(np.isfinite(vec.values))
    assert vec.registry_hash == REGISTRY.hash


def test_extraction_is_deterministic():
    rng = np.random.default_rng(55)
    rgb = rng.uniform(size=(40, 40, 3))
    v1 = extract_features(buffer_from_rgb(rgb), REGISTRY)
    v2 = extract_features(buffer_from_rgb(rgb.copy()), REGISTRY)
    assert np.array_equal(v1.values, v2.values)


def test_as_dict_requires_matching_registry():
    vec = extract_features(flat_image(), REGISTRY)
    other = type(REGISTRY)(descriptors=REGISTRY.descriptors[:40])
    with pytest.raises(RegistryMismatch):
        vec.as_dict(other)


# ---------------------------------------------------------------------------
# Persistence


def test_registry_manifest_round_trip(tmp_path):
    path = tmp_path / "registry.json"
    write_registry_manifest(REGISTRY, path)
    loaded = load_registry_manifest(path)
    assert loaded.hash == REGISTRY.hash
    assert loaded.descriptors == REGISTRY.descriptors


def test_feature_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(9)
    rows = [
        (f"post{i}", extract_features(buffer_from_rgb(rng.uniform(size=(16, 16, 3))), REGISTRY))
        for i in range(4)
    ]
    path = tmp_path / "features.csv"
    write_feature_csv(rows, REGISTRY, path)
    loaded = load_feature_csv(path, REGISTRY)
    assert [pid for pid, _ in loaded] == [pid for pid, _ in rows]
    for (_, got), (_, want) in zip(loaded, rows):
        # repr round-trip preserves float64 bit patterns exactly
        assert np.array_equal(got.values, want.values)


def test_feature_csv_rejects_foreign_registry(tmp_path):
    vec = FeatureVector(registry_hash="deadbeef", values=np.zeros(len(REGISTRY)))
    with pytest.raises(RegistryMismatch):
        write_feature_csv([("p", vec)], REGISTRY, tmp_path / "f.csv")
    good = extract_features(flat_image(), REGISTRY)
    write_feature_csv([("p", good)], REGISTRY, tmp_path / "ok.csv")
    other = type(REGISTRY)(descriptors=REGISTRY.descriptors[:-1])
    with pytest.raises(RegistryMismatch):
        load_feature_csv(tmp_path / "ok.csv", other)
