"""Input-patch preparation: windows, overlapping tiles, masks, band stacks.

Objects are polygons in pixel coordinates.  An object whose bounding box fits
into a single window (256 x 256 by default) gets one window centred at its
centre of gravity.  Larger objects are covered by a stride-128 grid of
windows over the bounding box; the final row/column is clamped to the box
boundary so tiles never extend past it (when an extent is smaller than the
window, the single tile is anchored at the box minimum).  Tiles overlapping
the object by less than 10% of the tile area are discarded, and if more than
``N_MIN`` tiles survive, 40% of them (rounded up) are kept by a seeded random
draw.

Masks are rasterized with the pixel-centre even-odd rule; additional rings
act as holes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import Array
from .taxonomy import LabelTuple

WINDOW = 256
STRIDE = 128
MIN_OVERLAP = 0.10
KEEP_FRACTION = 0.40
N_MIN = 3


@dataclass
class PolygonObject:
    """A polygon with optional holes; vertices in pixel coordinates."""

    id: str
    rings: list[np.ndarray]  # each (V, 2) float64; first ring is the outline
    label: LabelTuple | None = None

    def __post_init__(self):
        if not self.rings:
            raise ValueError(f"object '{self.id}': no rings")
        rings = []
        for r, ring in enumerate(self.rings):
            arr = np.asarray(ring, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
                raise ValueError(
                    f"object '{self.id}': ring {r} needs >= 3 (x, y) vertices"
                )
            if not np.isfinite(arr).all():
                raise ValueError(f"object '{self.id}': non-finite coordinates")
            rings.append(arr)
        self.rings = rings
        if _ring_area(rings[0]) == 0.0:
            raise ValueError(f"object '{self.id}': degenerate (zero-area) outline")

    def bbox(self) -> tuple[float, float, float, float]:
        pts = np.vstack(self.rings)
        return (float(pts[:, 0].min()), float(pts[:, 1].min()),
                float(pts[:, 0].max()), float(pts[:, 1].max()))

    def centroid(self) -> tuple[float, float]:
        """Area centroid; hole rings subtract from the outline."""
        area_total = 0.0
        cx = 0.0
        cy = 0.0
        for r, ring in enumerate(self.rings):
            a = _ring_area(ring)
            c = _ring_centroid(ring)
            sign = 1.0 if r == 0 else -1.0
            area_total += sign * a
            cx += sign * a * c[0]
            cy += sign * a * c[1]
        if area_total == 0.0:
            raise ValueError(f"object '{self.id}': degenerate (zero net area)")
        return cx / area_total, cy / area_total


def _ring_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return float(abs(np.sum(x * yn - xn * y)) / 2.0)


def _ring_centroid(ring: np.ndarray) -> tuple[float, float]:
    x, y = ring[:, 0], ring[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    signed = np.sum(cross) / 2.0
    if signed == 0.0:
        return float(x.mean()), float(y.mean())
    cx = np.sum((x + xn) * cross) / (6.0 * signed)
    cy = np.sum((y + yn) * cross) / (6.0 * signed)
    return float(cx), float(cy)


@dataclass
class TileSpec:
    """One window placement with the object mask rasterized inside it."""

    origin: tuple[int, int]
    mask: Array = field(repr=False)
    overlap_fraction: float = 0.0


def object_window(p: PolygonObject, window: int = WINDOW
                  ) -> tuple[bool, tuple[float, float, float, float],
                             tuple[int, int] | None]:
    """Whether the object fits a single window, plus bbox and window origin.

    Returns ``(fits, bbox, origin)``; ``origin`` is the centroid-centred
    window origin when the object fits, else None.
    """
    x0, y0, x1, y1 = p.bbox()
    fits = (x1 - x0) <= window and (y1 - y0) <= window
    if not fits:
        return False, (x0, y0, x1, y1), None
    cx, cy = p.centroid()
    origin = (int(round(cx - window / 2.0)), int(round(cy - window / 2.0)))
    return True, (x0, y0, x1, y1), origin


def _grid_positions(lo: int, hi: int, window: int, stride: int) -> list[int]:
    """Stride grid over [lo, hi) with the final position clamped to the end."""
    extent = hi - lo
    if extent <= window:
        return [lo]
    positions = list(range(lo, hi - window + 1, stride))
    if positions[-1] + window < hi:
        positions.append(hi - window)
    return positions


def candidate_tiles(p: PolygonObject, window: int = WINDOW,
                    stride: int = STRIDE) -> list[TileSpec]:
    """The full clamped grid of tiles before area filtering.

    Seed-independent: the grid depends only on the polygon and geometry
    parameters.
    """
    fits, (x0, y0, x1, y1), origin = object_window(p, window)
    if fits:
        assert origin is not None
        mask = rasterize_mask(p, origin, window)
        return [TileSpec(origin, mask, float(mask.sum()) / (window * window))]
    gx0, gy0 = math.floor(x0), math.floor(y0)
    gx1, gy1 = math.ceil(x1), math.ceil(y1)
    tiles = []
    for oy in _grid_positions(gy0, gy1, window, stride):
        for ox in _grid_positions(gx0, gx1, window, stride):
            mask = rasterize_mask(p, (ox, oy), window)
            frac = float(mask.sum()) / (window * window)
            tiles.append(TileSpec((ox, oy), mask, frac))
    return tiles


def compute_tiles(p: PolygonObject, rng_seed: int, window: int = WINDOW,
                  stride: int = STRIDE) -> list[TileSpec]:
    """Tiles retained for classification, deterministic given the seed.

    A single centred tile when the object fits; otherwise the candidate grid
    filtered by the 10% overlap rule, then randomly thinned to 40% (ceil)
    whenever more than ``N_MIN`` tiles remain.
    """
    fits, _, _ = object_window(p, window)
    tiles = candidate_tiles(p, window, stride)
    if fits:
        return tiles
    kept = [t for t in tiles if t.overlap_fraction >= MIN_OVERLAP]
    if len(kept) <= N_MIN:
        return kept
    retain = math.ceil(KEEP_FRACTION * len(kept))
    rng = np.random.default_rng(rng_seed)
    chosen = np.sort(rng.choice(len(kept), size=retain, replace=False))
    return [kept[i] for i in chosen]


def rasterize_mask(p: PolygonObject, origin: tuple[int, int],
                   size: int = WINDOW) -> Array:
    """Binary mask: 1 where the pixel centre is inside by the even-odd rule.

    ``mask[iy, ix]`` covers the pixel whose centre is
    ``(origin_x + ix + 0.5, origin_y + iy + 0.5)``.
    """
    ox, oy = origin
    xs = ox + np.arange(size) + 0.5
    ys = oy + np.arange(size) + 0.5
    crossings = np.zeros((size, size), dtype=np.int64)
    for ring in p.rings:
        x1, y1 = ring[:, 0], ring[:, 1]
        x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
        for ex1, ey1, ex2, ey2 in zip(x1, y1, x2, y2):
            if ey1 == ey2:
                continue
            ylo, yhi = (ey1, ey2) if ey1 < ey2 else (ey2, ey1)
            rows = (ys >= ylo) & (ys < yhi)  # half-open: shared vertices once
            if not rows.any():
                continue
            t = (ys[rows] - ey1) / (ey2 - ey1)
            xint = ex1 + t * (ex2 - ex1)
            crossings[rows] += xs[None, :] < xint[:, None]
    return (crossings & 1).astype(np.uint8)


def assemble_patch(mask: Array, spectral: Array, height: Array,
                   lc_scores: Array) -> Array:
    """Stack the input bands: (mask, R, G, B, IR, height, lc_1..lc_Dc).

    ``spectral`` is (4, S, S), ``height`` (S, S), ``lc_scores`` (D_c, S, S)
    with D_c >= 0.  Returns a (6 + D_c, S, S) float64 stack.
    """
    mask = np.asarray(mask, dtype=np.float64)
    spectral = np.asarray(spectral, dtype=np.float64)
    height = np.asarray(height, dtype=np.float64)
    lc = np.asarray(lc_scores, dtype=np.float64)
    s = mask.shape
    if len(s) != 2 or s[0] != s[1]:
        raise ValueError(f"mask must be square, got {s}")
    if spectral.shape != (4,) + s:
        raise ValueError(f"spectral bands must be {(4,) + s}, got {spectral.shape}")
    if height.shape != s:
        raise ValueError(f"height band must be {s}, got {height.shape}")
    if lc.ndim != 3 or lc.shape[1:] != s:
        raise ValueError(f"land-cover bands must be (D_c,) + {s}, got {lc.shape}")
    return np.concatenate([mask[None], spectral, height[None], lc], axis=0)


def roi_extract(feature_grid: Array, bbox: tuple[int, int, int, int],
                out_size: int = 16) -> Array:
    """Bilinear crop-resize of a bbox region to ``out_size`` squared.

    ``feature_grid`` is (H, W, F); ``bbox`` is (x0, y0, width, height) in
    pixel indices.  Sample positions span the bbox pixel centres inclusively,
    so a bbox of exactly ``out_size`` pixels is copied through unchanged and
    corner samples always equal the bbox corner pixels.
    """
    grid = np.asarray(feature_grid, dtype=np.float64)
    if grid.ndim == 2:
        grid = grid[:, :, None]
    h, w, _ = grid.shape
    x0, y0, bw, bh = bbox
    if bw <= 0 or bh <= 0:
        raise ValueError(f"empty bbox {bbox}")
    if x0 < 0 or y0 < 0 or x0 + bw > w or y0 + bh > h:
        raise ValueError(f"bbox {bbox} outside grid {(h, w)}")
    xs = np.linspace(x0, x0 + bw - 1, out_size) if bw > 1 else np.full(out_size, x0)
    ys = np.linspace(y0, y0 + bh - 1, out_size) if bh > 1 else np.full(out_size, y0)
    fx = np.floor(xs).astype(int)
    fy = np.floor(ys).astype(int)
    fx = np.minimum(fx, w - 2) if w > 1 else fx * 0
    fy = np.minimum(fy, h - 2) if h > 1 else fy * 0
    tx = (xs - fx)[None, :, None]
    ty = (ys - fy)[:, None, None]
    x1 = np.minimum(fx + 1, w - 1)
    y1 = np.minimum(fy + 1, h - 1)
    g00 = grid[np.ix_(fy, fx)]
    g01 = grid[np.ix_(fy, x1)]
    g10 = grid[np.ix_(y1, fx)]
    g11 = grid[np.ix_(y1, x1)]
    top = g00 * (1 - tx) + g01 * tx
    bot = g10 * (1 - tx) + g11 * tx
    out = top * (1 - ty) + bot * ty
    return out if feature_grid.ndim == 3 else out[:, :, 0]
