"""Tiling of grayscale images into fixed-size patches with per-patch features.

A patch feature is 66 values: an 8x8 grid of block means over the patch's
luminance (row-major), then the patch's normalized grid coordinates.  The
pooled means keep coarse texture; the two trailing values keep global
position so a pruned subset of patches still knows where it came from.

Images travel as binary PGM (P5), the only codec supported here.  Pixel
value p maps to luminance p / 255.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyImage,
    MalformedHeader,
    NonDivisibleDimensions,
    TruncatedPayload,
)

POOL = 8  # per-side block count for patch pooling
FEATURE_DIM = POOL * POOL + 2


@dataclass(frozen=True)
class GrayImage:
    """Single-channel image, luminance in [0, 1], row-major."""

    height: int
    width: int
    pixels: np.ndarray  # flat, length height*width, float64

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise EmptyImage(f"image is {self.height}x{self.width}")
        px = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if px.ndim != 1 or px.size != self.height * self.width:
            raise ValueError("pixel buffer does not match height*width")
        if not np.all(np.isfinite(px)):
            raise ValueError("non-finite luminance")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError("luminance outside [0, 1]")
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    def as_array(self) -> np.ndarray:
        return self.pixels.reshape(self.height, self.width)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise ValueError("feature must be 1-D")
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite feature value")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class Patch:
    index: int
    grid_row: int
    grid_col: int
    feature: FeatureVector


@dataclass(frozen=True)
class PatchGrid:
    rows: int
    cols: int
    patch_size: int
    patches: tuple = field(repr=False)

    def __post_init__(self):
        if len(self.patches) != self.rows * self.cols:
            raise ValueError("patch count does not match grid shape")

    @property
    def count(self) -> int:
        return self.rows * self.cols

    def feature_matrix(self) -> np.ndarray:
        """(N, dim) float64 matrix of patch features in index order."""
        return np.stack([p.feature.values for p in self.patches])


def patch_feature(
    image: GrayImage, grid_row: int, grid_col: int, patch_size: int
) -> FeatureVector:
    """66-value feature for one patch: 8x8 block means + position.

    Positional values are grid_row/(rows-1) and grid_col/(cols-1), or 0
    along a degenerate axis with a single patch.
    """
    if patch_size <= 0:
        raise NonDivisibleDimensions("patch_size must be positive")
    # exact 8x8 pooling needs an integer block side
    if patch_size % POOL != 0:
        raise NonDivisibleDimensions(
            f"patch_size {patch_size} not divisible by {POOL}"
        )
    rows = image.height // patch_size
    cols = image.width // patch_size
    if not (0 <= grid_row < rows and 0 <= grid_col < cols):
        raise ValueError("patch lies outside the image")
    block = patch_size // POOL
    top = grid_row * patch_size
    left = grid_col * patch_size
    window = image.as_array()[top : top + patch_size, left : left + patch_size]
    means = window.reshape(POOL, block, POOL, block).mean(axis=(1, 3))
    pos_r = grid_row / (rows - 1) if rows > 1 else 0.0
    pos_c = grid_col / (cols - 1) if cols > 1 else 0.0
    out = np.empty(FEATURE_DIM, np.float64)
    out[: POOL * POOL] = means.ravel()
    out[POOL * POOL] = pos_r
    out[POOL * POOL + 1] = pos_c
    return FeatureVector(out)


def tile_image(image: GrayImage, patch_size: int) -> PatchGrid:
    """Split the image into non-overlapping patches in row-major order."""
    if patch_size <= 0:
        raise NonDivisibleDimensions("patch_size must be positive")
    if image.height % patch_size or image.width % patch_size:
        raise NonDivisibleDimensions(
            f"{image.height}x{image.width} image not divisible by {patch_size}"
        )
    rows = image.height // patch_size
    cols = image.width // patch_size
    patches = []
    for r in range(rows):
        for c in range(cols):
            patches.append(
                Patch(
                    index=r * cols + c,
                    grid_row=r,
                    grid_col=c,
                    feature=patch_feature(image, r, c, patch_size),
                )
            )
    return PatchGrid(rows=rows, cols=cols, patch_size=patch_size, patches=tuple(patches))


def _read_pgm_tokens(data: bytes, count: int, start: int):
    """Read `count` whitespace-separated header tokens, skipping comments."""
    tokens = []
    i = start
    n = len(data)
    while len(tokens) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i] != 0x0A:
                i += 1
            continue
        if i >= n:
            raise MalformedHeader("unexpected end of header")
        j = i
        while j < n and not data[j : j + 1].isspace() and data[j : j + 1] != b"#":
            j += 1
        tokens.append(data[i:j])
        i = j
    if i >= n:
        raise MalformedHeader("missing raster separator")
    return tokens, i + 1  # consume the single whitespace after maxval


def load_pgm(data: bytes) -> GrayImage:
    """Parse binary PGM (P5), 8-bit, into a GrayImage."""
    if data[:2] != b"P5":
        raise MalformedHeader("not a P5 file")
    tokens, offset = _read_pgm_tokens(data, 3, 2)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise MalformedHeader(f"non-numeric header token in {tokens!r}") from None
    if width <= 0 or height <= 0:
        raise EmptyImage(f"declared size {width}x{height}")
    if not 0 < maxval <= 255:
        raise MalformedHeader(f"maxval {maxval} outside 8-bit range")
    expected = width * height
    raster = data[offset : offset + expected]
    if len(raster) < expected:
        raise TruncatedPayload(
            f"raster has {len(raster)} bytes, expected {expected}"
        )
    levels = np.frombuffer(raster, dtype=np.uint8).astype(np.float64)
    return GrayImage(height=height, width=width, pixels=levels / maxval)


def dump_pgm(image: GrayImage) -> bytes:
    """Serialize to binary PGM with maxval 255."""
    header = f"P5\n{image.width} {image.height}\n255\n".encode()
    levels = np.clip(np.rint(image.pixels * 255.0), 0, 255).astype(np.uint8)
    return header + levels.tobytes()
