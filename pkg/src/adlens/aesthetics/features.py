"""The describable aesthetic feature catalog.

Every feature has a stable id, a family, a human-readable name, and bounds
used when tuning. The registry order defines the feature-vector layout and
its hash fingerprints the catalog so model artifacts can refuse vectors
extracted under a different registry.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from ..errors import RegistryMismatch
from .image import ImageBuffer, circular_mean_degrees, luminance, pad_to_multiple
from .rag import build_rag
from .segmentation import segment_image
from .wavelet import decompose

EDGE_ENERGY_COVERAGE = 0.96  # per-axis Laplacian energy inside the edge box
BLUR_CUTOFF = 0.1  # cycles/pixel (0.2 x Nyquist); |FFT| mass above = sharpness
HUE_BIN_DEGREES = 20.0
HUE_BIN_MIN_FRAC = 0.05  # of the fullest bin
CONTRAST_COVERAGE = 0.98  # middle luminance mass defining the contrast width

FAMILIES = (
    "ColorExposure",
    "RuleOfThirds",
    "WaveletTexture",
    "SizeAspect",
    "Region",
    "DepthOfField",
    "KeComposition",
    "RAG",
)


@dataclass(frozen=True)
class FeatureDescriptor:
    id: str
    family: str
    human_name: str
    tunable: bool
    lower: float  # clamp bounds for tuned values
    upper: float


@dataclass(frozen=True)
class FeatureRegistry:
    """Ordered, hashable catalog of feature descriptors."""

    descriptors: tuple[FeatureDescriptor, ...]

    def __post_init__(self):
        ids = [d.id for d in self.descriptors]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate feature ids in registry")

    def __len__(self) -> int:
        return len(self.descriptors)

    def __iter__(self):
        return iter(self.descriptors)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self.descriptors)

    @property
    def hash(self) -> str:
        payload = [
            [d.id, d.family, d.human_name, d.tunable, d.lower, d.upper]
            for d in self.descriptors
        ]
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def index(self, feature_id: str) -> int:
        return self.ids.index(feature_id)

    def get(self, feature_id: str) -> FeatureDescriptor:
        for d in self.descriptors:
            if d.id == feature_id:
                return d
        raise KeyError(feature_id)


@dataclass(frozen=True)
class FeatureVector:
    """Feature values aligned to the registry order that produced them."""

    registry_hash: str
    values: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")

    def as_dict(self, registry: FeatureRegistry) -> dict[str, float]:
        if registry.hash != self.registry_hash:
            raise RegistryMismatch("vector was extracted under a different registry")
        return {d.id: float(v) for d, v in zip(registry, self.values)}


def _d(
    fid: str, family: str, name: str, lower: float, upper: float, tunable: bool = True
) -> FeatureDescriptor:
    return FeatureDescriptor(
        id=fid, family=family, human_name=name, tunable=tunable, lower=lower, upper=upper
    )


_CHANNELS = (("hue", "hue"), ("saturation", "saturation"), ("value", "intensity"))


def default_registry() -> FeatureRegistry:
    """The built-in catalog (43 features across all eight families)."""
    ds: list[FeatureDescriptor] = [
        _d("color_mean_value", "ColorExposure", "Light exposure (mean value)", 0.0, 1.0),
        _d("color_mean_saturation", "ColorExposure", "Mean saturation", 0.0, 1.0),
        _d("color_circular_mean_hue", "ColorExposure", "Mean hue (circular, degrees)", 0.0, 360.0),
        _d("color_colorfulness", "ColorExposure", "Colorfulness (opponent-space)", 0.0, 2.0),
        _d("color_log_luminance", "ColorExposure", "Log-average luminance", 0.0, 1.0),
        _d("thirds_mean_hue", "RuleOfThirds", "Central-ninth mean hue", 0.0, 360.0),
        _d("thirds_mean_saturation", "RuleOfThirds", "Central-ninth mean saturation", 0.0, 1.0),
        _d("thirds_mean_value", "RuleOfThirds", "Central-ninth mean value", 0.0, 1.0),
    ]
    for chan, label in _CHANNELS:
        for level in (1, 2, 3):
            ds.append(
                _d(
                    f"wavelet_{chan}_l{level}",
                    "WaveletTexture",
                    f"Spatial smoothness (level {level}) of {label}",
                    0.0,
                    1.0,
                )
            )
    for chan, label in _CHANNELS:
        ds.append(
            _d(
                f"wavelet_{chan}_sum",
                "WaveletTexture",
                f"Total spatial smoothness of {label}",
                0.0,
                1.0,
            )
        )
    ds += [
        _d("size_sum", "SizeAspect", "Image width + height", 16.0, 1024.0),
        _d("size_aspect_ratio", "SizeAspect", "Aspect ratio (w/h)", 0.05, 20.0),
        _d("region_significant_count", "Region", "Segments covering at least 1%", 0.0, 512.0, tunable=False),
        _d("region_top1_size", "Region", "Largest patch relative size", 0.0, 1.0),
        _d("region_top2_size", "Region", "2nd largest patch relative size", 0.0, 1.0),
        _d("region_top3_size", "Region", "3rd largest patch relative size", 0.0, 1.0),
        _d("region_top4_size", "Region", "4th largest patch relative size", 0.0, 1.0),
        _d("region_top5_size", "Region", "5th largest patch relative size", 0.0, 1.0),
        _d("region_largest_mean_value", "Region", "Largest segment avg. intensity", 0.0, 1.0),
        _d("region_largest_mean_hue", "Region", "Largest segment avg. hue", 0.0, 360.0),
        _d("region_largest_mean_saturation", "Region", "Largest segment avg. saturation", 0.0, 1.0),
        _d("region_largest_convexity", "Region", "Largest segment convexity", 0.0, 1.0),
        _d("dof_hue", "DepthOfField", "Low depth of field (hue)", 0.0, 1.0),
        _d("dof_saturation", "DepthOfField", "Low depth of field (saturation)", 0.0, 1.0),
        _d("dof_value", "DepthOfField", "Low depth of field (intensity)", 0.0, 1.0),
        _d("ke_edge_bbox_fraction", "KeComposition", "Edge bounding-box area fraction", 0.0, 1.0),
        _d("ke_hue_count", "KeComposition", "Distinct hue count", 0.0, 18.0, tunable=False),
        _d("ke_blur", "KeComposition", "Sharpness (high-frequency mass)", 0.0, 1.0),
        _d("ke_contrast", "KeComposition", "Luminance contrast", 0.0, 1.0),
        _d("ke_brightness", "KeComposition", "Mean brightness", 0.0, 1.0),
        _d("rag_segment_count", "RAG", "RAG segment count", 1.0, 512.0, tunable=False),
        _d("rag_best_ncut", "RAG", "Best normalized-cut value", 0.0, 2.0),
        _d("rag_cut_depth", "RAG", "Recursive cut depth", 0.0, 64.0, tunable=False),
    ]
    return FeatureRegistry(descriptors=tuple(ds))


def _colorfulness(rgb: np.ndarray) -> float:
    """Opponent-space colorfulness: std and mean magnitude of rg / yb."""
    rg = rgb[..., 0] - rgb[..., 1]
    yb = 0.5 * (rgb[..., 0] + rgb[..., 1]) - rgb[..., 2]
    std = np.hypot(rg.std(), yb.std())
    mean = np.hypot(rg.mean(), yb.mean())
    return float(std + 0.3 * mean)


def _log_average_luminance(lum: np.ndarray, delta: float = 1e-4) -> float:
    return float(np.exp(np.log(delta + lum).mean()) - delta)


def _central_ninth(arr: np.ndarray) -> np.ndarray:
    h, w = arr.shape[:2]
    return arr[h // 3 : 2 * h // 3, w // 3 : 2 * w // 3]


def _wavelet_fractions(channel: np.ndarray) -> tuple[list[float], float]:
    """Per-level detail-energy fractions of total energy, plus their sum."""
    padded = pad_to_multiple(channel, 8)
    pyr = decompose(padded, levels=3)
    total = pyr.total_energy()
    if total <= 0:
        return [0.0, 0.0, 0.0], 0.0
    fracs = [pyr.level_energy(level) / total for level in (1, 2, 3)]
    return fracs, float(sum(fracs))


def _dof_ratio(channel: np.ndarray) -> float:
    """Level-3 detail energy in the central half-width/height block / whole."""
    padded = pad_to_multiple(channel, 8)
    pyr = decompose(padded, levels=3)
    total = pyr.level_energy(3)
    if total <= 0:
        return 0.0
    center = 0.0
    for band in pyr.details[2]:
        bh, bw = band.shape
        r0, c0 = bh // 4, bw // 4
        center += float(
            (band[r0 : r0 + max(bh // 2, 1), c0 : c0 + max(bw // 2, 1)] ** 2).sum()
        )
    return center / total


def _axis_extent(projection: np.ndarray, coverage: float) -> float:
    """Fraction of the axis length whose middle mass reaches `coverage`."""
    total = float(projection.sum())
    if total <= 0:
        return 0.0
    tail = (1.0 - coverage) / 2.0 * total
    csum = np.cumsum(projection)
    lo = int(np.searchsorted(csum, tail, side="right"))
    hi = int(np.searchsorted(csum, total - tail, side="left"))
    return (hi - lo + 1) / projection.size


def _edge_bbox_fraction(lum: np.ndarray) -> float:
    energy = ndimage.laplace(lum) ** 2
    return _axis_extent(energy.sum(axis=1), EDGE_ENERGY_COVERAGE) * _axis_extent(
        energy.sum(axis=0), EDGE_ENERGY_COVERAGE
    )


def _hue_count(hue_deg: np.ndarray) -> float:
    counts, _ = np.histogram(hue_deg.ravel() % 360.0, bins=18, range=(0.0, 360.0))
    top = counts.max()
    if top == 0:
        return 0.0
    return float((counts > HUE_BIN_MIN_FRAC * top).sum())


def _blur_sharpness(lum: np.ndarray) -> float:
    spectrum = np.abs(np.fft.fft2(lum))
    total = float(spectrum.sum())
    if total <= 0:
        return 0.0
    fy = np.fft.fftfreq(lum.shape[0])
    fx = np.fft.fftfreq(lum.shape[1])
    radius = np.hypot(fy[:, None], fx[None, :])
    return float(spectrum[radius > BLUR_CUTOFF].sum()) / total


def _contrast(lum: np.ndarray) -> float:
    tail = (1.0 - CONTRAST_COVERAGE) / 2.0
    lo, hi = np.quantile(lum.ravel(), [tail, 1.0 - tail])
    return float(hi - lo)


def _convexity(mask: np.ndarray) -> float:
    """Pixel area over convex-hull area of the mask, capped at 1."""
    pts = np.argwhere(mask).astype(float)
    area = float(mask.sum())
    if pts.shape[0] < 3:
        return 1.0
    try:
        hull_area = ConvexHull(pts).volume  # 2-D "volume" is the area
    except QhullError:  # collinear pixels: the hull is a line, call it convex
        return 1.0
    if hull_area <= 0:
        return 1.0
    return min(area / hull_area, 1.0)


def extract_features(
    img: ImageBuffer, registry: FeatureRegistry | None = None, seed: int = 42
) -> FeatureVector:
    """Compute every registry feature for one image."""
    registry = registry if registry is not None else default_registry()
    rgb = img.rgb
    hsv = img.hsv
    lum = luminance(rgb)
    hue_deg = hsv[..., 0]
    hue01 = hue_deg / 360.0
    sat = hsv[..., 1]
    val = hsv[..., 2]

    out: dict[str, float] = {
        "color_mean_value": float(val.mean()),
        "color_mean_saturation": float(sat.mean()),
        "color_circular_mean_hue": circular_mean_degrees(hue_deg),
        "color_colorfulness": _colorfulness(rgb),
        "color_log_luminance": _log_average_luminance(lum),
        "thirds_mean_hue": circular_mean_degrees(_central_ninth(hue_deg)),
        "thirds_mean_saturation": float(_central_ninth(sat).mean()),
        "thirds_mean_value": float(_central_ninth(val).mean()),
        "size_sum": float(img.width + img.height),
        "size_aspect_ratio": float(img.width / img.height),
        "ke_edge_bbox_fraction": _edge_bbox_fraction(lum),
        "ke_hue_count": _hue_count(hue_deg),
        "ke_blur": _blur_sharpness(lum),
        "ke_contrast": _contrast(lum),
        "ke_brightness": float(lum.mean()),
    }

    for chan_name, channel in (("hue", hue01), ("saturation", sat), ("value", val)):
        fracs, tot = _wavelet_fractions(channel)
        for level, frac in zip((1, 2, 3), fracs):
            out[f"wavelet_{chan_name}_l{level}"] = frac
        out[f"wavelet_{chan_name}_sum"] = tot
        out[f"dof_{chan_name}"] = _dof_ratio(channel)

    seg = segment_image(img, seed=seed)
    n_pixels = img.width * img.height
    rel_sizes = [s.area / n_pixels for s in seg.segments]
    out["region_significant_count"] = float(sum(1 for r in rel_sizes if r >= 0.01))
    for i in range(5):
        out[f"region_top{i + 1}_size"] = rel_sizes[i] if i < len(rel_sizes) else 0.0
    largest = seg.largest
    out["region_largest_mean_value"] = largest.mean_value
    out["region_largest_mean_hue"] = largest.mean_hue
    out["region_largest_mean_saturation"] = largest.mean_saturation
    out["region_largest_convexity"] = _convexity(seg.labels == largest.id)

    rag = build_rag(seg)
    out["rag_segment_count"] = float(rag.merged_segment_count)
    out["rag_best_ncut"] = rag.best_ncut
    out["rag_cut_depth"] = float(rag.cut_depth)

    values = np.array([out[d.id] for d in registry], dtype=float)
    return FeatureVector(registry_hash=registry.hash, values=values)


def write_registry_manifest(registry: FeatureRegistry, path: str | Path) -> None:
    payload = {
        "hash": registry.hash,
        "features": [
            {
                "id": d.id,
                "family": d.family,
                "human_name": d.human_name,
                "tunable": d.tunable,
                "lower": d.lower,
                "upper": d.upper,
            }
            for d in registry
        ],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_registry_manifest(path: str | Path) -> FeatureRegistry:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    registry = FeatureRegistry(
        descriptors=tuple(
            FeatureDescriptor(
                id=f["id"],
                family=f["family"],
                human_name=f["human_name"],
                tunable=bool(f["tunable"]),
                lower=float(f["lower"]),
                upper=float(f["upper"]),
            )
            for f in payload["features"]
        )
    )
    if registry.hash != payload["hash"]:
        raise RegistryMismatch(f"registry manifest hash mismatch in {path}")
    return registry


def write_feature_csv(
    rows: Sequence[tuple[str, FeatureVector]], registry: FeatureRegistry, path: str | Path
) -> None:
    """Feature dump: header of registry ids, one row per post."""
    import csv

    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["post_id", *registry.ids])
        for post_id, vec in rows:
            if vec.registry_hash != registry.hash:
                raise RegistryMismatch(f"feature vector for {post_id} has stale registry")
            writer.writerow([post_id, *[repr(float(v)) for v in vec.values]])


def load_feature_csv(
    path: str | Path, registry: FeatureRegistry
) -> list[tuple[str, FeatureVector]]:
    import csv

    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header[1:]) != registry.ids:
            raise RegistryMismatch(f"feature CSV columns do not match registry: {path}")
        return [
            (row[0], FeatureVector(registry.hash, np.array([float(v) for v in row[1:]])))
            for row in reader
        ]
