"""Parametric articulated cabinet generator.

Models are axis-aligned open boxes centered at the origin with the
opening facing -z. Movable parts fill the front opening: doors hinge on
a vertical front edge, lids hinge on a horizontal top edge, drawers
slide out along -z. Everything behind the front parts (inner faces of
the shell panels, shelves, drawer boxes) is sealed at rest.

Part id 0 is the static shell; movable parts take ids 1..n_parts.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import Pose, TriMesh, _freeze, look_at_pose
from ..errors import ContractViolation, GenerationError
from ..kinematics import MotionParams, MotionType, PartArticulation, motion_to_transform


class Category(str, enum.Enum):
    STORAGE = "storage"
    FRIDGE = "fridge"
    MICROWAVE = "microwave"
    WASHER = "washer"
    DISHWASHER = "dishwasher"
    OVEN = "oven"
    SAFE = "safe"
    BOX = "box"
    BIN = "bin"


_CATEGORY_KINDS: dict[Category, tuple[str, ...]] = {
    Category.STORAGE: ("door", "drawer"),
    Category.FRIDGE: ("door", "drawer"),
    Category.MICROWAVE: ("door",),
    Category.WASHER: ("lid", "drawer"),
    Category.DISHWASHER: ("lid",),
    Category.OVEN: ("lid", "drawer"),
    Category.SAFE: ("door",),
    Category.BOX: ("lid",),
    Category.BIN: ("lid",),
}

PART_KINDS = ("door", "lid", "drawer")


@dataclass(frozen=True, eq=False)
class SceneSpec:
    """Parameters of one synthetic model; everything is seeded."""

    category: Category
    n_parts: int
    extents: tuple[float, float, float]
    wall_thickness: float
    shelf_count: int
    seed: int
    part_kinds: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))
        object.__setattr__(self, "extents", tuple(float(e) for e in self.extents))
        if self.part_kinds is not None:
            object.__setattr__(self, "part_kinds", tuple(self.part_kinds))
        if not 1 <= self.n_parts <= 3:
            raise ContractViolation("n_parts must be 1..3")
        if len(self.extents) != 3 or any(not 0.5 <= e <= 2.0 for e in self.extents):
            raise ContractViolation("extents must be three values in [0.5, 2.0]")
        if not 0 < self.wall_thickness < min(self.extents) / 4:
            raise ContractViolation("wall thickness must be < min extent / 4")
        if not 0 <= self.shelf_count <= 2:
            raise ContractViolation("shelf_count must be 0..2")
        if self.part_kinds is not None:
            if len(self.part_kinds) != self.n_parts:
                raise ContractViolation("part_kinds must have n_parts entries")
            if any(k not in PART_KINDS for k in self.part_kinds):
                raise ContractViolation(f"part kinds must be in {PART_KINDS}")

    def to_json(self) -> dict:
        return {
            "category": self.category.value,
            "n_parts": self.n_parts,
            "extents": list(self.extents),
            "wall_thickness": self.wall_thickness,
            "shelf_count": self.shelf_count,
            "seed": self.seed,
            "part_kinds": None if self.part_kinds is None else list(self.part_kinds),
        }

    @staticmethod
    def from_json(d: dict) -> "SceneSpec":
        kinds = d.get("part_kinds")
        return SceneSpec(
            Category(d["category"]), int(d["n_parts"]), tuple(d["extents"]),
            float(d["wall_thickness"]), int(d["shelf_count"]), int(d["seed"]),
            None if kinds is None else tuple(kinds),
        )


@dataclass(frozen=True, eq=False)
class PartTemplate:
    """A movable part and the motion range it may be articulated over."""

    part_id: int
    kind: str
    mtype: MotionType
    axis: np.ndarray
    origin: Optional[np.ndarray]
    value_range: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "axis", _freeze(np.asarray(self.axis, dtype=np.float64)))
        if self.origin is not None:
            object.__setattr__(self, "origin", _freeze(np.asarray(self.origin, dtype=np.float64)))
        object.__setattr__(self, "value_range", tuple(float(v) for v in self.value_range))

    def motion(self, value: float) -> MotionParams:
        return MotionParams(self.mtype, self.axis, self.origin, value)

    def to_json(self) -> dict:
        return {
            "part_id": self.part_id,
            "kind": self.kind,
            "type": self.mtype.value,
            "axis": [float(x) for x in self.axis],
            "origin": None if self.origin is None else [float(x) for x in self.origin],
            "value_range": list(self.value_range),
        }

    @staticmethod
    def from_json(d: dict) -> "PartTemplate":
        origin = d.get("origin")
        return PartTemplate(
            int(d["part_id"]), d["kind"], MotionType(d["type"]),
            np.asarray(d["axis"], dtype=np.float64),
            None if origin is None else np.asarray(origin, dtype=np.float64),
            tuple(d["value_range"]),
        )


@dataclass(frozen=True, eq=False)
class ArticulatedModel:
    """Full model geometry plus articulation templates.

    `mesh` holds every triangle (exterior and interior) with global face
    ids; `interior_faces` flags the faces that are sealed inside the
    shell at rest (inner panel surfaces, shelves).
    """

    mesh: TriMesh
    interior_faces: np.ndarray
    parts: tuple[PartTemplate, ...]
    shelf_ys: tuple[float, ...] = ()

    def __post_init__(self):
        flags = np.asarray(self.interior_faces, dtype=bool)
        if flags.shape[0] != self.mesh.n_faces:
            raise ContractViolation("interior_faces length must match face count")
        object.__setattr__(self, "interior_faces", _freeze(flags))
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "shelf_ys", tuple(self.shelf_ys))

    @property
    def rest_mesh(self) -> TriMesh:
        """Exterior shell and movable parts, without interior faces."""
        return self.mesh.submesh(~self.interior_faces)

    @property
    def interior_mesh(self) -> TriMesh:
        """Ground-truth interior faces only."""
        return self.mesh.submesh(self.interior_faces)

    def diagonal(self) -> float:
        lo, hi = self.mesh.bounds()
        return float(np.linalg.norm(hi - lo))

    def center(self) -> np.ndarray:
        lo, hi = self.mesh.bounds()
        return (lo + hi) / 2.0


# Cuboid corner order: (x0,y0,z0) (x1,y0,z0) (x1,y1,z0) (x0,y1,z0) then z1.
_CUBOID_TRIS = (
    ("nz", (0, 3, 2)), ("nz", (0, 2, 1)),
    ("pz", (4, 5, 6)), ("pz", (4, 6, 7)),
    ("nx", (0, 4, 7)), ("nx", (0, 7, 3)),
    ("px", (1, 2, 6)), ("px", (1, 6, 5)),
    ("ny", (0, 1, 5)), ("ny", (0, 5, 4)),
    ("py", (3, 7, 6)), ("py", (3, 6, 2)),
)


class _MeshBuilder:
    def __init__(self):
        self.vertices: list[np.ndarray] = []
        self.faces: list[tuple[int, int, int]] = []
        self.part_ids: list[int] = []
        self.interior: list[bool] = []

    def add_box(self, lo, hi, part_id: int, interior_sides=()) -> None:
        """Add an axis-aligned cuboid; `interior_sides` is a set of side
        keys (nx/px/ny/py/nz/pz) or "all"."""
        x0, y0, z0 = lo
        x1, y1, z1 = hi
        if not (x1 > x0 and y1 > y0 and z1 > z0):
            raise GenerationError(f"degenerate cuboid {lo}..{hi}")
        base = len(self.vertices)
        self.vertices.extend(
            np.array(c, dtype=np.float64)
            for c in (
                (x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0),
                (x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1),
            )
        )
        for side, (a, b, c) in _CUBOID_TRIS:
            self.faces.append((base + a, base + b, base + c))
            self.part_ids.append(part_id)
            self.interior.append(interior_sides == "all" or side in interior_sides)

    def build(self) -> tuple[TriMesh, np.ndarray]:
        mesh = TriMesh(
            np.array(self.vertices), np.array(self.faces, dtype=np.int64),
            np.array(self.part_ids, dtype=np.int64),
        )
        return mesh, np.array(self.interior, dtype=bool)


# Parallel same-facing interior planes closer than the fusion subsume
# distance (0.3) would be merged by the pipeline while RANSAC keeps them
# apart, so shelves keep a safety gap from each other and the shell.
_MIN_PLANE_GAP = 0.35


def _shelf_positions(intervals: list[tuple[float, float]], count: int, thickness: float,
                     floor_y: float, ceil_y: float) -> list[float]:
    """Evenly spaced shelf bottoms, dropping shelves that would sit too
    close to a neighboring horizontal surface."""
    usable = [(a, b) for a, b in intervals if b - a > thickness]
    if not usable or count == 0:
        return []
    total = sum(b - a for a, b in usable)
    candidates = []
    for i in range(count):
        s = total * (i + 1) / (count + 1)
        for a, b in usable:
            if s <= (b - a):
                candidates.append(a + s)
                break
            s -= b - a
    gap = _MIN_PLANE_GAP + thickness
    ys: list[float] = []
    prev = floor_y
    for y in candidates:
        if y - prev >= gap and ceil_y - y >= gap:
            ys.append(y)
            prev = y
    return ys


def generate_model(spec: SceneSpec) -> ArticulatedModel:
    """Build the deterministic articulated model for a scene spec."""
    rng = np.random.default_rng(spec.seed)
    W, H, D = spec.extents
    t = spec.wall_thickness
    hw, hh, hd = W / 2, H / 2, D / 2

    allowed = _CATEGORY_KINDS[spec.category]
    if spec.part_kinds is not None:
        kinds = list(spec.part_kinds)
    else:
        kinds = [allowed[int(rng.integers(len(allowed)))] for _ in range(spec.n_parts)]

    ox0, ox1 = -hw + t, hw - t
    oy0, oy1 = -hh + t, hh - t

    columns = spec.n_parts > 1 and all(k == "door" for k in kinds)
    cells: list[tuple[float, float, float, float]] = []
    if columns:
        xs = np.linspace(ox0, ox1, spec.n_parts + 1)
        cells = [(xs[i], xs[i + 1], oy0, oy1) for i in range(spec.n_parts)]
    else:
        ys = np.linspace(oy0, oy1, spec.n_parts + 1)
        cells = [(ox0, ox1, ys[i], ys[i + 1]) for i in range(spec.n_parts)]

    for (cx0, cx1, cy0, cy1) in cells:
        if cx1 - cx0 < 4 * t or cy1 - cy0 < 4 * t:
            raise GenerationError(
                f"parts do not fit the front face: cell {cx1 - cx0:.3f} x {cy1 - cy0:.3f} "
                f"needs at least 4x wall thickness ({4 * t:.3f})"
            )

    builder = _MeshBuilder()
    # Shell panels. Inner faces (toward the cavity) are interior geometry.
    builder.add_box((-hw, -hh, hd - t), (hw, hh, hd), 0, {"nz"})           # back
    builder.add_box((-hw, -hh, -hd), (-hw + t, hh, hd - t), 0, {"px"})     # left
    builder.add_box((hw - t, -hh, -hd), (hw, hh, hd - t), 0, {"nx"})       # right
    builder.add_box((ox0, -hh, -hd), (ox1, -hh + t, hd - t), 0, {"py"})    # bottom
    builder.add_box((ox0, hh - t, -hd), (ox1, hh, hd - t), 0, {"ny"})      # top

    # Shelves go behind door/lid cells only so sliding drawers stay clear.
    shelf_ys: list[float] = []
    if spec.shelf_count > 0:
        margin = 2 * t
        eligible = [
            (cy0 + margin, cy1 - margin - t)
            for (kind, (_, _, cy0, cy1)) in zip(kinds, cells)
            if kind != "drawer"
        ]
        if columns:
            eligible = [(oy0 + margin, oy1 - margin - t)]
        shelf_ys = _shelf_positions(eligible, spec.shelf_count, t, oy0, oy1)
        for ys_ in shelf_ys:
            builder.add_box((ox0, ys_, -hd + t), (ox1, ys_ + t, hd - t), 0, "all")

    templates: list[PartTemplate] = []
    for idx, (kind, (cx0, cx1, cy0, cy1)) in enumerate(zip(kinds, cells)):
        pid = idx + 1
        if kind == "door":
            builder.add_box((cx0, cy0, -hd), (cx1, cy1, -hd + t), pid)
            if columns and spec.n_parts > 1:
                hinge_left = idx == 0 if idx in (0, spec.n_parts - 1) else bool(rng.integers(2))
            else:
                hinge_left = bool(rng.integers(2))
            if hinge_left:
                axis, origin = (0.0, 1.0, 0.0), (cx0, (cy0 + cy1) / 2, -hd)
            else:
                axis, origin = (0.0, -1.0, 0.0), (cx1, (cy0 + cy1) / 2, -hd)
            templates.append(PartTemplate(pid, kind, MotionType.REVOLUTE,
                                          np.array(axis), np.array(origin), (25.0, 120.0)))
        elif kind == "lid":
            builder.add_box((cx0, cy0, -hd), (cx1, cy1, -hd + t), pid)
            origin = ((cx0 + cx1) / 2, cy1, -hd)
            templates.append(PartTemplate(pid, kind, MotionType.REVOLUTE,
                                          np.array([1.0, 0.0, 0.0]), np.array(origin),
                                          (25.0, 120.0)))
        else:  # drawer
            builder.add_box((cx0, cy0, -hd), (cx1, cy1, -hd + t), pid)
            cl = t / 2
            bx0, bx1 = cx0 + cl, cx1 - cl
            by0, by1 = cy0 + cl, cy1 - cl
            bz0, bz1 = -hd + t, hd - t - cl
            builder.add_box((bx0, by0, bz0), (bx1, by0 + t, bz1), pid)            # bottom
            builder.add_box((bx0, by0 + t, bz0), (bx0 + t, by1, bz1), pid)        # left wall
            builder.add_box((bx1 - t, by0 + t, bz0), (bx1, by1, bz1), pid)        # right wall
            builder.add_box((bx0 + t, by0 + t, bz1 - t), (bx1 - t, by1, bz1), pid)  # back wall
            depth = bz1 - bz0
            templates.append(PartTemplate(pid, kind, MotionType.PRISMATIC,
                                          np.array([0.0, 0.0, -1.0]), None,
                                          (0.3 * depth, 0.9 * depth)))

    mesh, interior = builder.build()
    return ArticulatedModel(mesh, interior, tuple(templates), tuple(shelf_ys))


def articulated_mesh(model: ArticulatedModel, states: list[PartArticulation]) -> TriMesh:
    """Model mesh with the given part motions applied.

    The generator gives every part its own vertices, so transforming the
    vertex set referenced by a part's faces moves only that part.
    """
    verts = np.array(model.mesh.vertices)
    for art in states:
        tf = motion_to_transform(art.motion)
        face_sel = model.mesh.face_part_id == art.part_id
        vids = np.unique(model.mesh.faces[face_sel])
        verts[vids] = tf.apply(verts[vids])
    return TriMesh(verts, model.mesh.faces, model.mesh.face_part_id)


def random_scene_specs(n: int, seed: int) -> list[SceneSpec]:
    """Draw n diverse feasible scene specs (categories cycle uniformly)."""
    rng = np.random.default_rng(seed)
    cats = list(Category)
    specs = []
    for i in range(n):
        specs.append(
            SceneSpec(
                category=cats[int(rng.integers(len(cats)))],
                n_parts=int(rng.integers(1, 4)),
                extents=tuple(float(x) for x in rng.uniform(0.8, 1.8, 3)),
                wall_thickness=float(rng.uniform(0.02, 0.04)),
                shelf_count=int(rng.integers(0, 3)),
                seed=int(rng.integers(0, 2**31 - 1)),
            )
        )
    return specs


def sample_views(model: ArticulatedModel, n_views: int, seed: int
                 ) -> list[tuple[Pose, list[PartArticulation]]]:
    """Draw camera poses on a front-facing cap plus random articulations.

    Azimuth is within +-60 degrees of the front, elevation 0..45 degrees,
    radius 2..4 model diagonals. Every view articulates a nonempty random
    subset of parts with magnitudes from each part's motion range.
    """
    if n_views < 1:
        raise ContractViolation("n_views must be >= 1")
    rng = np.random.default_rng(seed)
    center = model.center()
    diag = model.diagonal()
    views = []
    for _ in range(n_views):
        az = math.radians(float(rng.uniform(-60.0, 60.0)))
        el = math.radians(float(rng.uniform(0.0, 45.0)))
        radius = float(rng.uniform(2.0, 4.0)) * diag
        offset = np.array(
            [math.sin(az) * math.cos(el), math.sin(el), -math.cos(az) * math.cos(el)]
        )
        pose = look_at_pose(center + radius * offset, center)
        n_art = int(rng.integers(1, len(model.parts) + 1))
        chosen = sorted(rng.choice(len(model.parts), size=n_art, replace=False).tolist())
        states = []
        for ci in chosen:
            tpl = model.parts[ci]
            value = float(rng.uniform(*tpl.value_range))
            states.append(PartArticulation(tpl.part_id, tpl.motion(value)))
        views.append((pose, states))
    return views
