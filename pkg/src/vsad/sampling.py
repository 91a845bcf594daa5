"""Multi-scale dense sampling grid of square patches."""

from __future__ import annotations

from typing import NamedTuple, Sequence

from .errors import EmptyScales, ScaleTooLarge

DEFAULT_IMAGE_SIDE = 256
DEFAULT_SCALES = (64, 80, 96, 112, 128, 144, 160, 176, 192)
DEFAULT_GRID = 10


class PatchRect(NamedTuple):
    x: int
    y: int
    side: int
    flipped: bool
    scale_index: int


def grid_offsets(image_side: int, side: int, grid: int) -> list:
    """Evenly spaced offsets covering both borders, rounded half away from zero.

    Integer arithmetic keeps exact halves exact.
    """
    if grid == 1:
        return [0]
    span, den = image_side - side, grid - 1
    return [(2 * i * span + den) // (2 * den) for i in range(grid)]


def sample_grid(
    image_side: int = DEFAULT_IMAGE_SIDE,
    scales: Sequence[int] = DEFAULT_SCALES,
    grid: int = DEFAULT_GRID,
    with_flips: bool = True,
) -> list:
    """Every patch rectangle of the dense grid, scale by scale.

    Order is scale, then row (y), then column (x), then the unflipped copy
    before the flipped one.  Yields ``len(scales) * grid**2 * (1 + with_flips)``
    rectangles.
    """
    scales = [int(s) for s in scales]
    if not scales:
        raise EmptyScales("at least one patch scale is required")
    if grid < 1:
        raise ValueError("grid must be >= 1")
    for s in scales:
        if s > image_side or s < 1:
            raise ScaleTooLarge(f"patch side {s} does not fit in a {image_side}px image")
    flips = (False, True) if with_flips else (False,)
    rects = []
    for si, s in enumerate(scales):
        offsets = grid_offsets(image_side, s, grid)
        for y in offsets:
            for x in offsets:
                for flipped in flips:
                    rects.append(PatchRect(x, y, s, flipped, si))
    return rects


def patch_count(scales: Sequence[int] = DEFAULT_SCALES, grid: int = DEFAULT_GRID,
                with_flips: bool = True) -> int:
    return len(scales) * grid * grid * (2 if with_flips else 1)
