"""Dense multi-scale patch grid.

Nine square scales on a 10x10 grid with horizontal flips give 1800 patches
per 256x256 image, 200 per scale.
"""

from collections import Counter

from vsad.sampling import DEFAULT_SCALES, grid_offsets, sample_grid

rects = sample_grid(256, DEFAULT_SCALES, grid=10, with_flips=True)
print(f"{len(rects)} patches")
for scale_index, n in sorted(Counter(r.scale_index for r in rects).items()):
    print(f"  scale {DEFAULT_SCALES[scale_index]:3d}px: {n} patches")

# offsets are evenly spread so the last patch touches the far border
for side in (64, 192):
    print(f"offsets for {side}px patches:", grid_offsets(256, side, 10))
