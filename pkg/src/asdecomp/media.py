"""Piecewise-constant media and their nodal P1 interpolants.

A medium is a background made of pieces that reach the domain boundary plus
a list of interior inclusions. Shapes are closed sets and later entries win,
so evaluation is defined everywhere, including on interfaces.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .mesh import Mesh, Rectangle, check_rectangle

# Slack for "on the boundary" tests; shapes are closed sets.
_ON_EDGE_TOL = 1e-12


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.shape[-1] != 2:
        raise ValueError(f"points must have trailing dimension 2, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class Disc:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("disc radius must be positive")

    def contains(self, points) -> np.ndarray:
        p = _as_points(points)
        cx, cy = self.center
        r2 = (p[:, 0] - cx) ** 2 + (p[:, 1] - cy) ** 2
        return r2 <= self.radius**2 * (1 + _ON_EDGE_TOL)

    def boundary_distance(self, points) -> np.ndarray:
        p = _as_points(points)
        return np.abs(np.hypot(p[:, 0] - self.center[0], p[:, 1] - self.center[1]) - self.radius)


@dataclass(frozen=True)
class Rect:
    corner_min: tuple[float, float]
    corner_max: tuple[float, float]

    def __post_init__(self):
        if not (self.corner_max[0] > self.corner_min[0] and self.corner_max[1] > self.corner_min[1]):
            raise ValueError("rectangle corners must satisfy corner_max > corner_min")

    def contains(self, points) -> np.ndarray:
        p = _as_points(points)
        (x0, y0), (x1, y1) = self.corner_min, self.corner_max
        return (p[:, 0] >= x0) & (p[:, 0] <= x1) & (p[:, 1] >= y0) & (p[:, 1] <= y1)

    def as_polygon(self) -> "Polygon":
        (x0, y0), (x1, y1) = self.corner_min, self.corner_max
        return Polygon(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))

    def boundary_distance(self, points) -> np.ndarray:
        return self.as_polygon().boundary_distance(points)


def _segments_simple(verts: np.ndarray) -> bool:
    n = len(verts)
    a = verts
    b = np.roll(verts, -1, axis=0)

    def orient(p, q, r):
        return np.sign((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))

    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            o1, o2 = orient(a[i], b[i], a[j]), orient(a[i], b[i], b[j])
            o3, o4 = orient(a[j], b[j], a[i]), orient(a[j], b[j], b[i])
            if o1 != o2 and o3 != o4:
                return False
    return True


@dataclass(frozen=True)
class Polygon:
    """Simple polygon; vertex order is normalised to counterclockwise."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ValueError("polygon needs at least three 2D vertices")
        area = self._signed_area(v)
        if abs(area) <= 0:
            raise ValueError("polygon has zero area")
        if not _segments_simple(v):
            raise ValueError("polygon is not simple")
        if area < 0:
            v = v[::-1]
        object.__setattr__(self, "vertices", tuple(map(tuple, v.tolist())))

    @staticmethod
    def _signed_area(v: np.ndarray) -> float:
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def area(self) -> float:
        return self._signed_area(np.asarray(self.vertices))

    def _edges(self):
        v = np.asarray(self.vertices)
        return v, np.roll(v, -1, axis=0)

    def boundary_distance(self, points) -> np.ndarray:
        p = _as_points(points)
        a, b = self._edges()
        out = np.full(len(p), np.inf)
        for (ax, ay), (bx, by) in zip(a, b):
            dx, dy = bx - ax, by - ay
            s = ((p[:, 0] - ax) * dx + (p[:, 1] - ay) * dy) / (dx * dx + dy * dy)
            s = np.clip(s, 0.0, 1.0)
            out = np.minimum(out, np.hypot(p[:, 0] - ax - s * dx, p[:, 1] - ay - s * dy))
        return out

    def contains(self, points) -> np.ndarray:
        p = _as_points(points)
        px, py = p[:, 0], p[:, 1]
        a, b = self._edges()
        scale = float(np.ptp(np.vstack([a, b]), axis=0).max())
        inside = np.zeros(len(p), dtype=bool)
        on_edge = np.zeros(len(p), dtype=bool)
        for (ax, ay), (bx, by) in zip(a, b):
            # crossing number, half-open in y
            crosses = (ay > py) != (by > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = ax + (py - ay) * (bx - ax) / (by - ay)
            inside ^= crosses & (px < xint)
            cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
            seg = math.hypot(bx - ax, by - ay)
            near = np.abs(cross) <= _ON_EDGE_TOL * scale * seg
            within = (
                (px >= min(ax, bx) - _ON_EDGE_TOL * scale)
                & (px <= max(ax, bx) + _ON_EDGE_TOL * scale)
                & (py >= min(ay, by) - _ON_EDGE_TOL * scale)
                & (py <= max(ay, by) + _ON_EDGE_TOL * scale)
            )
            on_edge |= near & within
        return inside | on_edge


@dataclass(frozen=True)
class SectorComplement:
    """Disc with the open angular sector (angle_start, angle_end) removed.

    Angles are in degrees, measured counterclockwise from the positive x-axis.
    With a symmetric sector around angle 0 this is the familiar Pac-Man.
    """

    center: tuple[float, float]
    radius: float
    angle_start: float
    angle_end: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if not 0 < self.angle_end - self.angle_start < 360:
            raise ValueError("sector must satisfy 0 < angle_end - angle_start < 360")

    def contains(self, points) -> np.ndarray:
        p = _as_points(points)
        dx = p[:, 0] - self.center[0]
        dy = p[:, 1] - self.center[1]
        in_disc = dx * dx + dy * dy <= self.radius**2 * (1 + _ON_EDGE_TOL)
        theta = np.degrees(np.arctan2(dy, dx))
        rel = np.mod(theta - self.angle_start, 360.0)
        in_sector = (rel > 0) & (rel < self.angle_end - self.angle_start) & ((dx != 0) | (dy != 0))
        return in_disc & ~in_sector


@dataclass(frozen=True)
class Star:
    center: tuple[float, float]
    n_points: int
    r_outer: float
    r_inner: float

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("a star needs at least two points")
        if not 0 < self.r_inner < self.r_outer:
            raise ValueError("star radii must satisfy 0 < r_inner < r_outer")
        object.__setattr__(self, "_polygon", Polygon(self.polygon_vertices()))

    def polygon_vertices(self) -> tuple[tuple[float, float], ...]:
        n = self.n_points
        angles = np.pi / 2 + np.pi * np.arange(2 * n) / n
        radii = np.where(np.arange(2 * n) % 2 == 0, self.r_outer, self.r_inner)
        cx, cy = self.center
        return tuple(zip((cx + radii * np.cos(angles)).tolist(), (cy + radii * np.sin(angles)).tolist()))

    def contains(self, points) -> np.ndarray:
        return self._polygon.contains(points)

    def boundary_distance(self, points) -> np.ndarray:
        return self._polygon.boundary_distance(points)


Shape = Union[Disc, Rect, Polygon, SectorComplement, Star]


@dataclass(frozen=True)
class Medium:
    """Piecewise-constant medium ``u = u0 + u~`` on a rectangle.

    ``background`` holds ``(shape, value)`` pairs; ``shape=None`` stands for
    the rest of the domain. ``inclusions`` hold ``(shape, alpha)`` with
    ``alpha != 0``. In ``"override"`` mode an inclusion value replaces the
    background beneath it; in ``"add"`` mode it is added to it.
    """

    domain: Rectangle
    background: tuple = ((None, 0.0),)
    inclusions: tuple = ()
    mode: str = "override"

    def __post_init__(self):
        object.__setattr__(self, "domain", check_rectangle(self.domain))
        object.__setattr__(self, "background", tuple((s, float(v)) for s, v in self.background))
        object.__setattr__(self, "inclusions", tuple((s, float(v)) for s, v in self.inclusions))
        if self.mode not in ("override", "add"):
            raise ValueError(f"unknown inclusion mode {self.mode!r}")
        for shape, alpha in self.inclusions:
            if shape is None:
                raise ValueError("inclusions need a shape")
            if alpha == 0:
                raise ValueError("inclusion values must be nonzero")

    def in_domain(self, points) -> np.ndarray:
        p = _as_points(points)
        xmin, ymin, xmax, ymax = self.domain
        return (p[:, 0] >= xmin) & (p[:, 0] <= xmax) & (p[:, 1] >= ymin) & (p[:, 1] <= ymax)

    def background_values(self, points) -> np.ndarray:
        p = _as_points(points)
        out = np.zeros(len(p))
        for shape, value in self.background:
            mask = np.ones(len(p), dtype=bool) if shape is None else shape.contains(p)
            out[mask] = value
        return out

    def __call__(self, points) -> np.ndarray:
        p = _as_points(points)
        out = self.background_values(p)
        for shape, alpha in self.inclusions:
            mask = shape.contains(p)
            if self.mode == "add":
                out[mask] += alpha
            else:
                out[mask] = alpha
        return out

    def indicator(self, k: int) -> "Medium":
        """Characteristic function of the k-th inclusion (0-based) as a medium."""
        shape, _ = self.inclusions[k]
        return Medium(self.domain, ((None, 0.0),), ((shape, 1.0),))


@dataclass(frozen=True, eq=False)
class RasterMedium:
    """Pixel medium; ``pixel_values[r, c]`` with row 0 at the top edge."""

    width: int
    height: int
    pixel_values: np.ndarray = field(repr=False)
    domain: Rectangle = (0.0, 0.0, 1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "domain", check_rectangle(self.domain))
        vals = np.asarray(self.pixel_values, dtype=float)
        if vals.size != self.width * self.height:
            raise ValueError(f"expected {self.width * self.height} pixel values, got {vals.size}")
        vals = vals.reshape(self.height, self.width)
        vals.setflags(write=False)
        object.__setattr__(self, "pixel_values", vals)

    def in_domain(self, points) -> np.ndarray:
        p = _as_points(points)
        xmin, ymin, xmax, ymax = self.domain
        return (p[:, 0] >= xmin) & (p[:, 0] <= xmax) & (p[:, 1] >= ymin) & (p[:, 1] <= ymax)

    def __call__(self, points) -> np.ndarray:
        # nearest pixel centre; pixel centres tile the domain
        p = _as_points(points)
        xmin, ymin, xmax, ymax = self.domain
        col = np.floor((p[:, 0] - xmin) / (xmax - xmin) * self.width).astype(np.int64)
        row = np.floor((ymax - p[:, 1]) / (ymax - ymin) * self.height).astype(np.int64)
        col = np.clip(col, 0, self.width - 1)
        row = np.clip(row, 0, self.height - 1)
        return self.pixel_values[row, col]


AnyMedium = Union[Medium, RasterMedium]


def evaluate_medium(m: AnyMedium, p) -> float:
    """Value of ``m`` at a single point ``p`` of its (closed) domain."""
    pts = _as_points(p)
    if pts.shape[0] != 1:
        raise ValueError("evaluate_medium takes a single point; call the medium for arrays")
    if not m.in_domain(pts)[0]:
        raise ValueError(f"point {tuple(pts[0])} lies outside the domain {m.domain}")
    return float(m(pts)[0])


@dataclass(frozen=True, eq=False)
class FeFunction:
    """Continuous piecewise-linear function given by its nodal values."""

    mesh: Mesh
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float).reshape(-1)
        if c.size != self.mesh.n_vertices:
            raise ValueError(f"expected {self.mesh.n_vertices} coefficients, got {c.size}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    def _check(self, other: "FeFunction") -> None:
        if not self.mesh.same_as(other.mesh):
            raise ValueError("FE functions live on different meshes")

    def __add__(self, other: "FeFunction") -> "FeFunction":
        self._check(other)
        return FeFunction(self.mesh, self.coefficients + other.coefficients)

    def __sub__(self, other: "FeFunction") -> "FeFunction":
        self._check(other)
        return FeFunction(self.mesh, self.coefficients - other.coefficients)

    def __mul__(self, scalar: float) -> "FeFunction":
        return FeFunction(self.mesh, self.coefficients * float(scalar))

    __rmul__ = __mul__

    def element_gradients(self) -> np.ndarray:
        """Constant gradient on every triangle, shape ``(n_triangles, 2)``."""
        c = self.coefficients[self.mesh.triangles]
        return np.einsum("ta,tad->td", c, self.mesh.basis_gradients)

    def boundary_values(self) -> np.ndarray:
        return self.coefficients[self.mesh.boundary_indices]


def interpolate_to_mesh(m: Union[AnyMedium, Callable], mesh: Mesh) -> FeFunction:
    """Nodal P1 interpolant of a medium (the admissible ``u_delta`` with delta = h)."""
    domain = getattr(m, "domain", None)
    if domain is not None and not np.allclose(domain, mesh.domain, rtol=0, atol=1e-12):
        raise ValueError(f"medium domain {domain} does not match mesh domain {mesh.domain}")
    return FeFunction(mesh, np.asarray(m(mesh.vertices), dtype=float))


def constant_function(mesh: Mesh, value: float) -> FeFunction:
    return FeFunction(mesh, np.full(mesh.n_vertices, float(value)))


# --------------------------------------------------------------------------
# PGM rasters


class PgmError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


_WS = b" \t\r\n\v\f"


def _pgm_tokens(data: bytes, start: int, count: int) -> tuple[list[int], int]:
    """Read ``count`` unsigned integer header tokens, skipping comments."""
    values = []
    pos = start
    n = len(data)
    while len(values) < count:
        while pos < n and (data[pos] in _WS or data[pos] == ord("#")):
            if data[pos] == ord("#"):
                while pos < n and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise PgmError("unexpected end of data in header", pos)
        m = re.compile(rb"\d+").match(data, pos)
        if m is None:
            raise PgmError(f"expected an unsigned integer, found {data[pos:pos + 1]!r}", pos)
        values.append(int(m.group()))
        pos = m.end()
    return values, pos


def medium_from_raster(payload: bytes, domain: Rectangle = (0.0, 0.0, 1.0, 1.0)) -> RasterMedium:
    """Parse a grayscale PGM image (``P2`` or ``P5``) into a raster medium.

    Gray levels are used as medium values as they are stored, without
    rescaling by ``maxval``.
    """
    domain = check_rectangle(domain)
    data = bytes(payload)
    if len(data) < 2:
        raise PgmError("payload too short for a PGM magic number", len(data))
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PgmError(f"unsupported magic number {magic!r}", 0)
    (width, height, maxval), pos = _pgm_tokens(data, 2, 3)
    if width < 1 or height < 1:
        raise PgmError("image dimensions must be positive", pos)
    if not 0 < maxval < 65536:
        raise PgmError(f"maxval {maxval} outside 1..65535", pos)
    n = width * height

    if magic == b"P2":
        values, end = _pgm_tokens(data, pos, n)
        pixels = np.asarray(values, dtype=float)
        if pixels.max() > maxval:
            raise PgmError("pixel value exceeds maxval", end)
    else:
        if pos >= len(data) or data[pos] not in _WS:
            raise PgmError("missing whitespace after maxval", pos)
        pos += 1
        nbytes = 1 if maxval < 256 else 2
        need = n * nbytes
        if len(data) - pos < need:
            raise PgmError(f"truncated raster: need {need} bytes, have {len(data) - pos}", len(data))
        dtype = np.uint8 if nbytes == 1 else np.dtype(">u2")
        pixels = np.frombuffer(data, dtype=dtype, count=n, offset=pos).astype(float)
    return RasterMedium(width, height, pixels, domain)


def write_pgm(values: np.ndarray, maxval: int = 255, binary: bool = True) -> bytes:
    """Encode a 2D integer array (row 0 = top) as PGM."""
    arr = np.asarray(values)
    h, w = arr.shape
    if binary:
        header = f"P5\n{w} {h}\n{maxval}\n".encode()
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        return header + arr.astype(dtype).tobytes()
    lines = [f"P2\n{w} {h}\n{maxval}"] + [" ".join(str(int(v)) for v in row) for row in arr]
    return ("\n".join(lines) + "\n").encode()


# --------------------------------------------------------------------------
# Test media. The geometries are fixed choices; only the qualitative layout
# follows the reference pictures.

UNIT_SQUARE: Rectangle = (0.0, 0.0, 1.0, 1.0)

DISC = Disc((0.5, 0.5), 0.3)
SQUARE = Rect((0.2, 0.2), (0.8, 0.8))
PACMAN = SectorComplement((0.5, 0.5), 0.3, -30.0, 30.0)
STAR = Star((0.5, 0.5), 5, 0.35, 0.15)


def single_inclusion(shape: Shape, value: float = 1.0, domain: Rectangle = UNIT_SQUARE) -> Medium:
    return Medium(domain, ((None, 0.0),), ((shape, value),))


def constant_medium(value: float, domain: Rectangle = UNIT_SQUARE) -> Medium:
    return Medium(domain, ((None, float(value)),), ())


def four_squares(domain: Rectangle = UNIT_SQUARE) -> Medium:
    """Four adjacent squares tiling [0.25, 0.75]^2 with values 1..4.

    Square k counts row-major from the bottom left: 1 lower-left,
    2 lower-right, 3 upper-left, 4 upper-right.
    """
    lo, mid, hi = 0.25, 0.5, 0.75
    squares = [
        Rect((lo, lo), (mid, mid)),
        Rect((mid, lo), (hi, mid)),
        Rect((lo, mid), (mid, hi)),
        Rect((mid, mid), (hi, hi)),
    ]
    return Medium(domain, ((None, 0.0),), tuple((s, float(k + 1)) for k, s in enumerate(squares)))


def nonuniform_background(domain: Rectangle = UNIT_SQUARE) -> Medium:
    """Five boundary-connected background pieces with four interior inclusions.

    Pieces meet the boundary at wide angles and stay well apart from each
    other, so no grid vertex on the levels h = 0.05 / 2**m ends up isolated
    in a thin sliver of a single value.
    """
    hexagon = tuple(
        (0.92 + 0.055 * math.cos(math.pi / 3 * k), 0.6 + 0.055 * math.sin(math.pi / 3 * k))
        for k in range(6)
    )
    background = (
        (None, 1.0),
        (Disc((1.1, 0.62), 0.28), 3.0),
        (Disc((0.0, 1.0), 0.33), 0.5),
        (Disc((0.66, 1.06), 0.24), 1.5),
        (Polygon(((0.0, 0.0), (1.0, 0.0), (1.0, 0.27), (0.0, 0.19))), 2.0),
    )
    inclusions = (
        (Disc((0.45, 0.55), 0.12), 2.5),
        (Rect((0.16, 0.31), (0.31, 0.46)), 0.2),
        (Disc((0.6, 0.11), 0.06), 3.5),
        (Polygon(hexagon), 0.8),
    )
    return Medium(domain, background, inclusions)


PRESETS: dict[str, Callable[[], Medium]] = {
    "disc": lambda: single_inclusion(DISC),
    "square": lambda: single_inclusion(SQUARE),
    "pacman": lambda: single_inclusion(PACMAN),
    "star": lambda: single_inclusion(STAR),
    "four_squares": four_squares,
    "nonuniform_background": nonuniform_background,
}


def preset(name: str) -> Medium:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown medium preset {name!r}; choose from {sorted(PRESETS)}") from None


def shape_from_dict(d: dict) -> Shape:
    kind = d.get("type")
    if kind == "disc":
        return Disc(tuple(d["center"]), float(d["radius"]))
    if kind == "rectangle":
        return Rect(tuple(d["corner_min"]), tuple(d["corner_max"]))
    if kind == "polygon":
        return Polygon(tuple(tuple(v) for v in d["vertices"]))
    if kind == "sector_complement":
        return SectorComplement(tuple(d["center"]), float(d["radius"]), float(d["angle_start"]), float(d["angle_end"]))
    if kind == "star":
        return Star(tuple(d["center"]), int(d["n_points"]), float(d["r_outer"]), float(d["r_inner"]))
    raise ValueError(f"unknown shape type {kind!r}")


def medium_from_pieces(
    domain: Rectangle,
    background: Sequence[tuple[dict | None, float]],
    inclusions: Sequence[tuple[dict, float]] = (),
    mode: str = "override",
) -> Medium:
    bg = tuple((None if s is None else shape_from_dict(s), v) for s, v in background)
    inc = tuple((shape_from_dict(s), v) for s, v in inclusions)
    return Medium(domain, bg, inc, mode)
