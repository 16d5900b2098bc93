"""
What crosses the wire
=====================

Each tile sends P * 11 bytes to the producer (direction, accumulation and
link per perimeter cell) and gets P * 8 bytes of offsets back, where P is
its perimeter cell count.  The message header adds 13 bytes each way.
"""

from flowaccum.raster import perimeter_count

print(f"{'tile':>13s} {'P':>7s} {'up':>9s} {'down':>9s} {'total':>9s} {'header %':>9s}")
for side in (64, 512, 3601, 10812, 16384):
    P = perimeter_count(side, side)
    up, down = 11 * P, 8 * P
    print(f"{side:>6d}x{side:<6d} {P:>7d} {up:>9d} {down:>9d} {up + down:>9d} {100 * 26 / (up + down):>8.3f}%")

# The full tile would be side*side bytes of directions plus 8 bytes per cell of
# accumulation; the perimeter is a vanishing fraction of that.
side = 3601
print(f"\na {side}^2 tile holds {side * side * 9 / 1e6:.0f} MB of state, "
      f"but exchanges only {19 * perimeter_count(side, side) / 1e3:.1f} kB")
