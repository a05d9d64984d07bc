"""Structured region reports, per-pixel weight maps, and their lift into voxel space.

Reports follow a fixed line grammar, one region per line:

    REGION: <horizontal>-<vertical> / TYPE: <category> / PRIORITY: <level> / SIZE: <size> / REASON: <text>

The image is a fixed 4x3 grid: horizontal cells left, center-left, center-right,
right; vertical cells top, middle, bottom. Parsing is total: malformed blocks are
skipped and counted, never fatal, so a flaky report generator cannot crash planning.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .geometry import CameraIntrinsics, Pose, back_project_pixels
from .voxel_field import VoxelGrid, minmax_unit

CATEGORIES = ("OCCLUSION", "GEOMETRIC", "LIGHTING", "BOUNDARY", "TEXTURE")
PRIORITIES = ("HIGH", "MEDIUM", "LOW")
SIZES = ("small", "medium", "large")
HORIZONTAL = ("left", "center-left", "center-right", "right")
VERTICAL = ("top", "middle", "bottom")

# Mask shaping relative to one grid cell.
TAPER_SIGMA_FRACTION = 0.10   # of the cell diagonal
DILATION_FRACTION = 0.05      # of the cell edge, per axis
MASK_FLOOR = 1e-6             # taper values below this are clamped to exactly 0


@dataclass(frozen=True)
class SemanticRegion:
    """One parsed report line, resolved to a grid cell and closed-enum attributes."""

    horizontal: str
    vertical: str
    category: str
    priority: str
    size: str
    reason: str = ""

    def __post_init__(self):
        if self.horizontal not in HORIZONTAL:
            raise InvalidInputError(f"unknown horizontal cell {self.horizontal!r}")
        if self.vertical not in VERTICAL:
            raise InvalidInputError(f"unknown vertical cell {self.vertical!r}")
        if self.category not in CATEGORIES:
            raise InvalidInputError(f"unknown category {self.category!r}")
        if self.priority not in PRIORITIES:
            raise InvalidInputError(f"unknown priority {self.priority!r}")
        if self.size not in SIZES:
            raise InvalidInputError(f"unknown size {self.size!r}")

    @property
    def col(self) -> int:
        return HORIZONTAL.index(self.horizontal)

    @property
    def row(self) -> int:
        return VERTICAL.index(self.vertical)

    @property
    def location(self) -> str:
        return f"{self.horizontal}-{self.vertical}"


def format_region_line(region: SemanticRegion) -> str:
    """Render one region in the report grammar (the inverse of parse_regions)."""
    return (
        f"REGION: {region.location} / TYPE: {region.category} / "
        f"PRIORITY: {region.priority} / SIZE: {region.size} / REASON: {region.reason}"
    )


@dataclass
class ParseResult:
    regions: list[SemanticRegion] = field(default_factory=list)
    malformed: int = 0

    def __iter__(self):
        return iter(self.regions)

    def __len__(self):
        return len(self.regions)


_FIELD_RE = {
    "type": re.compile(r"TYPE:\s*([A-Za-z]+)"),
    "priority": re.compile(r"PRIORITY:\s*([A-Za-z]+)"),
    "size": re.compile(r"SIZE:\s*([A-Za-z]+)"),
    "reason": re.compile(r"REASON:\s*(.*)", re.DOTALL),
}
_LOCATION_RE = re.compile(r"\s*([A-Za-z][A-Za-z \-]*)")


def _parse_location(text: str) -> tuple[str, str] | None:
    tokens = re.sub(r"\s+", "-", text.strip().lower()).split("-")
    tokens = [t for t in tokens if t]
    if len(tokens) < 2:
        return None
    vertical = tokens[-1]
    horizontal = "-".join(tokens[:-1])
    if horizontal in HORIZONTAL and vertical in VERTICAL:
        return horizontal, vertical
    return None


def parse_regions(report: str | bytes) -> ParseResult:
    """Extract well-formed regions from a report; skip and count malformed blocks."""
    if isinstance(report, bytes):
        report = report.decode("latin-1")
    result = ParseResult()
    chunks = report.split("REGION:")[1:]
    for chunk in chunks:
        loc_match = _LOCATION_RE.match(chunk)
        location = _parse_location(loc_match.group(1)) if loc_match else None
        fields = {}
        for name, rx in _FIELD_RE.items():
            m = rx.search(chunk)
            fields[name] = m.group(1) if m else None
        if (
            location is None
            or fields["type"] is None
            or fields["priority"] is None
            or fields["size"] is None
        ):
            result.malformed += 1
            continue
        category = fields["type"].upper()
        priority = fields["priority"].upper()
        size = fields["size"].lower()
        if category not in CATEGORIES or priority not in PRIORITIES or size not in SIZES:
            result.malformed += 1
            continue
        reason = (fields["reason"] or "").strip()
        result.regions.append(
            SemanticRegion(
                horizontal=location[0],
                vertical=location[1],
                category=category,
                priority=priority,
                size=size,
                reason=reason,
            )
        )
    return result


@dataclass(frozen=True)
class CoefficientTable:
    """Fixed weighting for region category, priority and size, plus modulation strength.

    Category weights follow the high/high/medium/medium/low ranking of the five
    categories; priority and size values are the published constants.
    """

    alpha: dict = field(
        default_factory=lambda: {
            "OCCLUSION": 1.0,
            "GEOMETRIC": 1.0,
            "LIGHTING": 0.7,
            "BOUNDARY": 0.7,
            "TEXTURE": 0.4,
        }
    )
    beta: dict = field(default_factory=lambda: {"HIGH": 3.0, "MEDIUM": 1.5, "LOW": 0.5})
    size: dict = field(default_factory=lambda: {"small": 0.8, "medium": 1.0, "large": 1.2})
    lam: float = 1.0

    def __post_init__(self):
        values = list(self.alpha.values()) + list(self.beta.values()) + list(self.size.values())
        if any(v < 0 for v in values) or self.lam < 0:
            raise InvalidInputError("coefficients must be non-negative")
        if not (self.beta["HIGH"] >= self.beta["MEDIUM"] >= self.beta["LOW"]):
            raise InvalidInputError("priority weights must be ordered HIGH >= MEDIUM >= LOW")


@dataclass
class WeightMap:
    """Per-pixel aggregated region weight, normalized to [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.min() < 0 or self.values.max() > 1:
            raise InvalidInputError("weight map values must lie in [0, 1]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _cell_box(region: SemanticRegion, shape: tuple[int, int]):
    h, w = shape
    cell_w, cell_h = w / 4.0, h / 3.0
    cx = (region.col + 0.5) * cell_w
    cy = (region.row + 0.5) * cell_h
    return cx, cy, cell_w, cell_h


def region_to_mask(
    region: SemanticRegion, shape: tuple[int, int], size_scale: float | None = None
) -> np.ndarray:
    """Soft mask for one region: 1 on the (size-scaled, dilated) cell core, Gaussian taper outside."""
    h, w = shape
    if w < 4 or h < 3:
        raise InvalidInputError(f"image must be at least 4x3 pixels, got {w}x{h}")
    if size_scale is None:
        size_scale = CoefficientTable().size[region.size]
    cx, cy, cell_w, cell_h = _cell_box(region, shape)
    half_w = cell_w / 2.0 * size_scale + DILATION_FRACTION * cell_w
    half_h = cell_h / 2.0 * size_scale + DILATION_FRACTION * cell_h
    sigma = TAPER_SIGMA_FRACTION * float(np.hypot(cell_w, cell_h))
    ys = np.arange(h, dtype=np.float64)[:, None] + 0.5
    xs = np.arange(w, dtype=np.float64)[None, :] + 0.5
    dx = np.maximum(np.abs(xs - cx) - half_w, 0.0)
    dy = np.maximum(np.abs(ys - cy) - half_h, 0.0)
    mask = np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma))
    mask[mask < MASK_FLOOR] = 0.0
    return mask


def raw_region_weights(
    regions, table: CoefficientTable, shape: tuple[int, int]
) -> np.ndarray:
    """Pre-normalization weight sum: sum_k alpha_cat * beta_prio * s_size * M_k(u)."""
    acc = np.zeros(shape, dtype=np.float64)
    for region in regions:
        scale = table.alpha[region.category] * table.beta[region.priority] * table.size[region.size]
        acc += scale * region_to_mask(region, shape, size_scale=table.size[region.size])
    return acc


def aggregate_weight_map(regions, table: CoefficientTable, shape: tuple[int, int]) -> WeightMap:
    """Aggregate regions and min-max normalize per image; no regions yields a zero map."""
    raw = raw_region_weights(regions, table, shape)
    if not len(list(regions)):
        return WeightMap(values=np.zeros(shape, dtype=np.float64))
    return WeightMap(values=minmax_unit(raw))


def modulate(sigma: np.ndarray, weights: WeightMap | np.ndarray, lam: float) -> np.ndarray:
    """Semantic modulation: min-max normalized sigma * (1 + lam * W)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    w = weights.values if isinstance(weights, WeightMap) else np.asarray(weights, dtype=np.float64)
    if sigma.shape != w.shape:
        raise InvalidInputError(f"sigma shape {sigma.shape} != weight shape {w.shape}")
    if sigma.min() < 0:
        raise InvalidInputError("sigma must be non-negative")
    return minmax_unit(sigma * (1.0 + lam * w))


def lift_to_3d(
    u_sem: np.ndarray,
    depth_map: np.ndarray,
    pose: Pose,
    intrinsics: CameraIntrinsics,
    grid: VoxelGrid,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Deposit per-pixel semantic values at their back-projected voxels, combining by max.

    Pass `out` to fold several frames into one per-voxel array; untouched voxels stay 0.
    Pixels with invalid depth or zero value deposit nothing; out-of-grid points drop.
    """
    u_sem = np.asarray(u_sem, dtype=np.float64)
    depth_map = np.asarray(depth_map, dtype=np.float64)
    if u_sem.shape != depth_map.shape:
        raise InvalidInputError(f"u_sem shape {u_sem.shape} != depth shape {depth_map.shape}")
    if out is None:
        out = np.zeros(grid.dims, dtype=np.float64)
    valid = np.isfinite(depth_map) & (depth_map > 0) & (u_sem > 0)
    if not valid.any():
        return out
    rows, cols = np.nonzero(valid)
    points = back_project_pixels(cols + 0.5, rows + 0.5, depth_map[valid], intrinsics, pose)
    idx = grid.world_to_index(points)
    inb = grid.in_bounds(idx)
    idx = idx[inb]
    np.maximum.at(out, (idx[:, 0], idx[:, 1], idx[:, 2]), u_sem[valid][inb])
    return out
