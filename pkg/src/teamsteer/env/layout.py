"""Kitchen layout parsing, validation, and the shipped layout registry.

Layout files are plain-text ASCII grids with an optional ``key: value`` header
block. Alphabet: 'X' counter, 'O' onion source, 'D' dish source, 'P' pot,
'S' serve window, ' ' or '_' floor, digits '1'..'4' spawn points (floor).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from importlib import resources


class Tile(IntEnum):
    FLOOR = 0
    COUNTER = 1
    ONION_SOURCE = 2
    DISH_SOURCE = 3
    POT = 4
    SERVE = 5


CHAR_TILES = {
    "X": Tile.COUNTER,
    "O": Tile.ONION_SOURCE,
    "D": Tile.DISH_SOURCE,
    "P": Tile.POT,
    "S": Tile.SERVE,
    " ": Tile.FLOOR,
    "_": Tile.FLOOR,
}
TILE_CHARS = {v: k for k, v in CHAR_TILES.items() if k not in (" ",)}
SPAWN_CHARS = "1234"

DEFAULT_COOK_TIME = 20

REQUIRED_TILES = (Tile.ONION_SOURCE, Tile.DISH_SOURCE, Tile.POT, Tile.SERVE)
REQUIRED_NAMES = {
    Tile.ONION_SOURCE: "OnionSource",
    Tile.DISH_SOURCE: "DishSource",
    Tile.POT: "Pot",
    Tile.SERVE: "ServeWindow",
}


class LayoutError(ValueError):
    """Malformed layout text; carries the offending grid position when known."""

    def __init__(self, message, row=None, col=None):
        if row is not None and col is not None:
            message = f"{message} (row {row}, col {col})"
        elif row is not None:
            message = f"{message} (row {row})"
        super().__init__(message)
        self.row = row
        self.col = col


@dataclass(frozen=True)
class Layout:
    """Static kitchen geometry: tile grid, ordered spawns, cook duration."""

    name: str
    width: int
    height: int
    tiles: tuple  # row-major Tile values, length width*height
    spawn_points: tuple  # ((x, y), ...) ordered by spawn digit
    cook_time: int = DEFAULT_COOK_TIME

    @property
    def max_agents(self):
        return len(self.spawn_points)

    def tile(self, x, y):
        return self.tiles[y * self.width + x]

    def in_bounds(self, x, y):
        return 0 <= x < self.width and 0 <= y < self.height

    def is_floor(self, x, y):
        return self.in_bounds(x, y) and self.tiles[y * self.width + x] == Tile.FLOOR

    def cells_of(self, kind):
        w = self.width
        return tuple((i % w, i // w) for i, t in enumerate(self.tiles) if t == kind)

    @cached_property
    def pot_cells(self):
        return self.cells_of(Tile.POT)

    @cached_property
    def counter_cells(self):
        return self.cells_of(Tile.COUNTER)

    def ascii_grid(self):
        """Reconstruct the grid text (spawn digits included), for round-trips."""
        chars = []
        for y in range(self.height):
            row = [TILE_CHARS[self.tile(x, y)] for x in range(self.width)]
            chars.append(row)
        for idx, (x, y) in enumerate(self.spawn_points):
            chars[y][x] = str(idx + 1)
        return "\n".join("".join(row) for row in chars)


def parse_layout(text, name="custom"):
    """Parse layout text into a validated :class:`Layout`.

    Header lines of the form ``key: value`` (``name``, ``cook_time``) may
    precede the grid. Raises :class:`LayoutError` with the grid position for
    every defect named in the module docstring alphabet.
    """
    cook_time = DEFAULT_COOK_TIME
    lines = text.splitlines()
    grid_start = 0
    for line in lines:
        stripped = line.strip()
        if stripped and ":" in stripped and stripped.split(":")[0].strip().isidentifier():
            key, _, value = stripped.partition(":")
            key, value = key.strip(), value.strip()
            if key == "cook_time":
                try:
                    cook_time = int(value)
                except ValueError:
                    raise LayoutError(f"cook_time is not an integer: {value!r}")
                if cook_time < 1:
                    raise LayoutError(f"cook_time must be >= 1, got {cook_time}")
            elif key == "name":
                name = value
            else:
                raise LayoutError(f"unknown header key {key!r}")
            grid_start += 1
        else:
            break

    rows = [line for line in lines[grid_start:] if line.strip()]
    if not rows:
        raise LayoutError("empty grid")
    width = len(rows[0])
    height = len(rows)
    if width < 3 or height < 3:
        raise LayoutError(f"grid too small: {width}x{height}")

    tiles = []
    spawns = {}
    for r, row in enumerate(rows):
        if len(row) != width:
            raise LayoutError(f"non-rectangular grid: length {len(row)} != {width}", row=r)
        for c, ch in enumerate(row):
            if ch in SPAWN_CHARS:
                idx = int(ch) - 1
                if idx in spawns:
                    raise LayoutError(f"duplicate spawn digit {ch!r}", row=r, col=c)
                spawns[idx] = (c, r)
                tiles.append(Tile.FLOOR)
            elif ch in CHAR_TILES:
                tiles.append(CHAR_TILES[ch])
            else:
                raise LayoutError(f"unknown character {ch!r}", row=r, col=c)

    n_spawn = len(spawns)
    if not 2 <= n_spawn <= 4:
        raise LayoutError(f"spawn count {n_spawn} outside 2..4")
    for idx in range(n_spawn):
        if idx not in spawns:
            raise LayoutError(f"spawn digits not contiguous: missing {idx + 1!r}")
    spawn_points = tuple(spawns[i] for i in range(n_spawn))

    layout = Layout(
        name=name,
        width=width,
        height=height,
        tiles=tuple(tiles),
        spawn_points=spawn_points,
        cook_time=cook_time,
    )
    _validate(layout)
    return layout


def _validate(layout):
    for x in range(layout.width):
        for y in (0, layout.height - 1):
            if layout.tile(x, y) == Tile.FLOOR:
                raise LayoutError("boundary cell is Floor", row=y, col=x)
    for y in range(layout.height):
        for x in (0, layout.width - 1):
            if layout.tile(x, y) == Tile.FLOOR:
                raise LayoutError("boundary cell is Floor", row=y, col=x)
    for kind in REQUIRED_TILES:
        if not layout.cells_of(kind):
            raise LayoutError(f"missing {REQUIRED_NAMES[kind]}")


_SHIPPED_CACHE = {}


def shipped_layouts():
    """Names of layouts shipped with the package."""
    files = resources.files("teamsteer.env") / "layouts"
    return sorted(p.name[: -len(".layout")] for p in files.iterdir() if p.name.endswith(".layout"))


def load_layout(name):
    """Load a shipped layout by name (e.g. ``pl-3``, ``fc-2``, ``aa-3``)."""
    if name in _SHIPPED_CACHE:
        return _SHIPPED_CACHE[name]
    path = resources.files("teamsteer.env") / "layouts" / f"{name}.layout"
    try:
        text = path.read_text()
    except (FileNotFoundError, OSError):
        raise LayoutError(f"no shipped layout named {name!r}; known: {', '.join(shipped_layouts())}")
    layout = parse_layout(text, name=name)
    _SHIPPED_CACHE[name] = layout
    return layout
