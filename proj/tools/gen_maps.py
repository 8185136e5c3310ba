#!/usr/bin/env python3
"""Generates the bundled scenario maps (deterministic)."""

import argparse
import pathlib
import random
from collections import deque

SIZE = 100


def blank(size):
    rows = [["."] * size for _ in range(size)]
    for i in range(size):
        rows[0][i] = rows[size - 1][i] = rows[i][0] = rows[i][size - 1] = "#"
    return rows


def seal(rows, oc):
    """Turns free cells unreachable from the OC into obstacles."""
    h, w = len(rows), len(rows[0])
    seen = {oc}
    queue = deque([oc])
    while queue:
        x, y = queue.popleft()
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < w and 0 <= ny < h and rows[ny][nx] != "#" and (nx, ny) not in seen:
                seen.add((nx, ny))
                queue.append((nx, ny))
    for y in range(h):
        for x in range(w):
            if rows[y][x] != "#" and (x, y) not in seen:
                rows[y][x] = "#"


def homogeneous(seed):
    rng = random.Random(seed)
    rows = blank(SIZE)
    oc = (5, SIZE - 6)
    placed = 0
    while placed < 170:
        bw, bh = rng.randint(2, 6), rng.randint(2, 6)
        x0, y0 = rng.randint(2, SIZE - bw - 2), rng.randint(2, SIZE - bh - 2)
        if x0 - 3 <= oc[0] <= x0 + bw + 3 and y0 - 3 <= oc[1] <= y0 + bh + 3:
            continue
        for y in range(y0, y0 + bh):
            for x in range(x0, x0 + bw):
                rows[y][x] = "#"
        placed += 1
    seal(rows, oc)
    rows[oc[1]][oc[0]] = "O"
    return rows


def divide(rows, rng, x0, y0, x1, y1, min_room):
    """Recursive division of the free rectangle [x0, x1) x [y0, y1) with doorways."""
    w, h = x1 - x0, y1 - y0
    if w < 2 * min_room + 1 and h < 2 * min_room + 1:
        return
    if rng.random() < 0.2 and w < 3 * min_room and h < 3 * min_room:
        return  # leave a hall
    vertical = w > h if w != h else rng.random() < 0.5
    if vertical and w < 2 * min_room + 1:
        vertical = False
    if not vertical and h < 2 * min_room + 1:
        vertical = True
    if vertical:
        wx = rng.randint(x0 + min_room, x1 - min_room - 1)
        door = rng.randint(y0 + 1, y1 - 4)
        for y in range(y0, y1):
            if not door <= y < door + 3:
                rows[y][wx] = "#"
        divide(rows, rng, x0, y0, wx, y1, min_room)
        divide(rows, rng, wx + 1, y0, x1, y1, min_room)
    else:
        wy = rng.randint(y0 + min_room, y1 - min_room - 1)
        door = rng.randint(x0 + 1, x1 - 4)
        for x in range(x0, x1):
            if not door <= x < door + 3:
                rows[wy][x] = "#"
        divide(rows, rng, x0, y0, x1, wy, min_room)
        divide(rows, rng, x0, wy + 1, x1, y1, min_room)


def rooms(seed):
    rng = random.Random(seed)
    rows = blank(SIZE)
    # A cross of 3-cell corridors between walls splits the map into four wings.
    for i in range(1, SIZE - 1):
        rows[46][i] = rows[50][i] = "#"
        rows[i][46] = rows[i][50] = "#"
    for i in range(47, 50):
        for j in range(1, SIZE - 1):
            rows[i][j] = "."
            rows[j][i] = "."
    wings = [(1, 1, 46, 46), (51, 1, SIZE - 1, 46), (1, 51, 46, SIZE - 1), (51, 51, SIZE - 1, SIZE - 1)]
    for x0, y0, x1, y1 in wings:
        divide(rows, rng, x0, y0, x1, y1, 10)
        # Doors from each wing onto both corridors.
        dx = rng.randint(x0 + 3, x1 - 6)
        dy = rng.randint(y0 + 3, y1 - 6)
        wall_y = 46 if y0 == 1 else 50
        wall_x = 46 if x0 == 1 else 50
        for k in range(3):
            rows[wall_y][dx + k] = "."
            rows[dy + k][wall_x] = "."
    oc = (5, SIZE - 6)
    seal(rows, oc)
    rows[oc[1]][oc[0]] = "O"
    return rows


def write(path, rows, title):
    with open(path, "w") as f:
        f.write(f"; {title}\n")
        f.write("; cell_size=1\n")
        for row in rows:
            f.write("".join(row) + "\n")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "maps"))
    args = parser.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write(out / "homogeneous.map", homogeneous(7), "homogeneous obstacles, 100x100")
    write(out / "rooms.map", rooms(11), "rooms and corridors, 100x100")


if __name__ == "__main__":
    main()
