"""Brute-force reference edge detector (test oracle).

Implements the documented integer pipeline with explicit per-pixel loops
and BFS hysteresis, independently of the vectorized production code:
integer luminance, replicate-padded 3x3 Sobel, squared-magnitude
thresholds, integer sector tests, >=-both-neighbors suppression with
out-of-bounds neighbors counting as zero, and 8-connected hysteresis.
"""

from __future__ import annotations

from collections import deque


def gray_of_rgb(pixels: list[list[tuple[int, int, int]]]) -> list[list[int]]:
    return [
        [(299 * r + 587 * g + 114 * b) // 1000 for (r, g, b) in row]
        for row in pixels
    ]


def _at(gray: list[list[int]], y: int, x: int) -> int:
    h, w = len(gray), len(gray[0])
    yy = 0 if y < 0 else (h - 1 if y >= h else y)
    xx = 0 if x < 0 else (w - 1 if x >= w else x)
    return gray[yy][xx]


def reference_canny(gray: list[list[int]], low: int, high: int) -> list[list[bool]]:
    h, w = len(gray), len(gray[0])
    gx = [[0] * w for _ in range(h)]
    gy = [[0] * w for _ in range(h)]
    m2 = [[0] * w for _ in range(h)]
    for y in range(h):
        for x in range(w):
            gxv = (
                _at(gray, y - 1, x + 1) + 2 * _at(gray, y, x + 1) + _at(gray, y + 1, x + 1)
                - _at(gray, y - 1, x - 1) - 2 * _at(gray, y, x - 1) - _at(gray, y + 1, x - 1)
            )
            gyv = (
                _at(gray, y + 1, x - 1) + 2 * _at(gray, y + 1, x) + _at(gray, y + 1, x + 1)
                - _at(gray, y - 1, x - 1) - 2 * _at(gray, y - 1, x) - _at(gray, y - 1, x + 1)
            )
            gx[y][x] = gxv
            gy[y][x] = gyv
            m2[y][x] = gxv * gxv + gyv * gyv

    def mag(y: int, x: int) -> int:
        if 0 <= y < h and 0 <= x < w:
            return m2[y][x]
        return 0

    strong = [[False] * w for _ in range(h)]
    weak = [[False] * w for _ in range(h)]
    for y in range(h):
        for x in range(w):
            agx, agy = abs(gx[y][x]), abs(gy[y][x])
            if (agy + agx) ** 2 <= 2 * agx * agx:
                n1, n2 = mag(y, x - 1), mag(y, x + 1)
            elif agy >= agx and (agy - agx) ** 2 >= 2 * agx * agx:
                n1, n2 = mag(y - 1, x), mag(y + 1, x)
            elif gx[y][x] * gy[y][x] > 0:
                n1, n2 = mag(y - 1, x - 1), mag(y + 1, x + 1)
            else:
                n1, n2 = mag(y - 1, x + 1), mag(y + 1, x - 1)
            if m2[y][x] >= n1 and m2[y][x] >= n2:
                if m2[y][x] >= high * high:
                    strong[y][x] = True
                if m2[y][x] >= low * low:
                    weak[y][x] = True

    edges = [[False] * w for _ in range(h)]
    queue: deque[tuple[int, int]] = deque()
    for y in range(h):
        for x in range(w):
            if strong[y][x]:
                edges[y][x] = True
                queue.append((y, x))
    while queue:
        y, x = queue.popleft()
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and weak[ny][nx] and not edges[ny][nx]:
                    edges[ny][nx] = True
                    queue.append((ny, nx))
    return edges


def reference_edge_density(
    pixels: list[list[tuple[int, int, int]]], low: int, high: int
) -> float:
    gray = gray_of_rgb(pixels)
    edges = reference_canny(gray, low, high)
    total = len(gray) * len(gray[0])
    return sum(sum(1 for v in row if v) for row in edges) / total
