"""Reflector mesh, antenna ports, imaging grid and measurement plan."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MESH_FORMAT = "cra-reflector-mesh"
MESH_VERSION = 1


class GeometryError(ValueError):
    pass


def _unit(v, name="vector"):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n == 0.0:
        raise GeometryError(f"{name} must be a non-zero finite vector")
    return v / n


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _orthonormal_frame(axis):
    w = _unit(axis, "axis")
    helper = np.array([0.0, 0.0, 1.0]) if abs(w[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(helper, w)
    u /= np.linalg.norm(u)
    v = np.cross(w, u)
    return u, v, w


@dataclass(frozen=True)
class Facet:
    vertices: np.ndarray
    centroid: np.ndarray
    normal: np.ndarray
    area: float
    thickness: float


@dataclass(frozen=True, eq=False)
class ReflectorMesh:
    """Triangulated paraboloid ``w = rho^2 / (4 f)`` in the frame of ``axis``.

    Geometry is stored as shared vertex coordinates plus an index triple per
    facet; per-facet quantities are exposed as read-only arrays of length
    ``P`` (one design variable per facet).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    thickness: np.ndarray
    focal_length: float
    diameter: float
    apex_position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        verts = _frozen(self.vertices)
        tris = _frozen(self.triangles, dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 3:
            raise GeometryError("vertices must have shape (V, 3)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise GeometryError("triangles must have shape (P, 3)")
        if tris.min() < 0 or tris.max() >= len(verts):
            raise GeometryError("triangle index out of range")
        thick = np.broadcast_to(np.asarray(self.thickness, dtype=float), (len(tris),))
        if np.any(thick < 0):
            raise GeometryError("layer thickness must be non-negative")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "thickness", _frozen(thick))
        object.__setattr__(self, "apex_position", _frozen(self.apex_position))
        object.__setattr__(self, "axis", _frozen(_unit(self.axis, "axis")))

        corners = verts[tris]
        cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        twice_area = np.linalg.norm(cross, axis=1)
        if np.any(twice_area <= 0):
            raise GeometryError("degenerate facet with zero area")
        normals = cross / twice_area[:, None]
        centroids = corners.mean(axis=1)
        # orient toward the focal point (concave, illuminated side)
        focus = self.apex_position + self.focal_length * self.axis
        flip = np.einsum("ij,ij->i", normals, focus - centroids) < 0
        normals[flip] *= -1.0
        object.__setattr__(self, "facet_vertices", _frozen(corners))
        object.__setattr__(self, "centroids", _frozen(centroids))
        object.__setattr__(self, "normals", _frozen(normals))
        object.__setattr__(self, "areas", _frozen(0.5 * twice_area))

    @property
    def num_facets(self) -> int:
        return len(self.triangles)

    @property
    def facets(self) -> tuple[Facet, ...]:
        return tuple(
            Facet(self.facet_vertices[i], self.centroids[i], self.normals[i],
                  float(self.areas[i]), float(self.thickness[i]))
            for i in range(self.num_facets)
        )

    @property
    def edge_lengths(self) -> np.ndarray:
        c = self.facet_vertices
        return np.stack([np.linalg.norm(c[:, 1] - c[:, 0], axis=1),
                         np.linalg.norm(c[:, 2] - c[:, 1], axis=1),
                         np.linalg.norm(c[:, 0] - c[:, 2], axis=1)], axis=1)

    @property
    def facet_diameters(self) -> np.ndarray:
        return self.edge_lengths.max(axis=1)

    def surface_offset(self, points) -> np.ndarray:
        """First-order signed distance from ``points`` to the paraboloid."""
        u, v, w = _orthonormal_frame(self.axis)
        d = np.atleast_2d(points) - self.apex_position
        rho2 = (d @ u) ** 2 + (d @ v) ** 2
        implicit = d @ w - rho2 / (4.0 * self.focal_length)
        grad = np.sqrt(1.0 + rho2 / (4.0 * self.focal_length**2))
        return implicit / grad

    def permuted(self, order) -> "ReflectorMesh":
        order = np.asarray(order)
        return ReflectorMesh(self.vertices, self.triangles[order], self.thickness[order],
                             self.focal_length, self.diameter, self.apex_position, self.axis)

    def to_dict(self) -> dict:
        return {
            "format": MESH_FORMAT,
            "version": MESH_VERSION,
            "units": "SI (meters)",
            "focal_length": self.focal_length,
            "diameter": self.diameter,
            "apex_position": self.apex_position.tolist(),
            "axis": self.axis.tolist(),
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
            "thickness": self.thickness.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ReflectorMesh":
        if doc.get("format") != MESH_FORMAT:
            raise GeometryError(f"not a reflector mesh document (format={doc.get('format')!r})")
        if doc.get("version") != MESH_VERSION:
            raise GeometryError(f"unsupported mesh version {doc.get('version')!r}")
        return cls(np.array(doc["vertices"]), np.array(doc["triangles"]),
                   np.array(doc["thickness"]), float(doc["focal_length"]),
                   float(doc["diameter"]), np.array(doc["apex_position"]),
                   np.array(doc["axis"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "ReflectorMesh":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _ring_counts(target: int) -> list[int]:
    # ring j carries ~c*j vertices; a fan plus zipper strips gives c*R^2 facets
    best = None
    for rings in range(1, int(np.sqrt(target)) + 2):
        c = target / rings**2
        if c < 3:
            break
        counts = [max(3, int(round(c * j))) for j in range(1, rings + 1)]
        total = 2 * sum(counts) - counts[-1]
        counts[-1] += target - total
        if rings > 1 and counts[-1] < counts[-2]:
            continue
        score = abs(np.log(c / 6.0))
        if best is None or score < best[0]:
            best = (score, counts)
    if best is None:
        raise GeometryError(f"cannot triangulate {target} facets")
    return best[1]


def _zip_rings(inner: list[int], inner_ang, outer: list[int], outer_ang):
    """Triangulate the annulus between two closed rings by angular merge."""
    tris = []
    ni, no = len(inner), len(outer)
    i = k = 0
    while i < ni or k < no:
        a_i = inner_ang[(i + 1) % ni] + (2 * np.pi if i + 1 >= ni else 0.0)
        a_o = outer_ang[(k + 1) % no] + (2 * np.pi if k + 1 >= no else 0.0)
        if k < no and (i >= ni or a_o <= a_i):
            tris.append((inner[i % ni], outer[k % no], outer[(k + 1) % no]))
            k += 1
        else:
            tris.append((inner[i % ni], outer[k % no], inner[(i + 1) % ni]))
            i += 1
    return tris


def build_paraboloid_mesh(focal_length: float, diameter: float, target_facets: int,
                          thickness: float, apex_position=(0.0, 0.0, 0.0),
                          axis=(0.0, 0.0, 1.0)) -> ReflectorMesh:
    """Concentric-ring triangulation of a paraboloidal dish.

    Ring vertices are lifted along the axis by a per-ring least-squares offset
    so that facet centroids straddle the true surface instead of sitting on
    the chord side of it.
    """
    if not (focal_length > 0 and diameter > 0):
        raise GeometryError("focal_length and diameter must be positive")
    if thickness < 0:
        raise GeometryError("thickness must be non-negative")
    if int(target_facets) < 4:
        raise GeometryError("need at least 4 facets")
    counts = _ring_counts(int(target_facets))
    rings = len(counts)
    radius = 0.5 * diameter

    rho = [np.zeros(1)]
    ang = [np.zeros(1)]
    ring_of = [0]
    for j, n in enumerate(counts, start=1):
        offset = np.pi / n if j % 2 else 0.0
        ang.append(offset + 2 * np.pi * np.arange(n) / n)
        rho.append(np.full(n, radius * j / rings))
        ring_of.extend([j] * n)
    ring_of = np.array(ring_of)
    ang_all = np.concatenate(ang)
    rho_all = np.concatenate(rho)
    local = np.stack([rho_all * np.cos(ang_all), rho_all * np.sin(ang_all),
                      rho_all**2 / (4 * focal_length)], axis=1)

    starts = np.cumsum([0] + [1] + counts)
    tris = []
    for j in range(1, rings + 1):
        outer = list(range(starts[j], starts[j + 1]))
        if j == 1:
            n = len(outer)
            tris.extend((0, outer[k], outer[(k + 1) % n]) for k in range(n))
        else:
            inner = list(range(starts[j - 1], starts[j]))
            tris.extend(_zip_rings(inner, ang[j - 1] % (2 * np.pi), outer, ang[j] % (2 * np.pi)))
    tris = np.array(tris, dtype=np.int64)

    # per-ring axial lift: mean(lift of corners) should cancel the chord sag
    corners = local[tris]
    cen = corners.mean(axis=1)
    sag = corners[:, :, 2].mean(axis=1) - (cen[:, 0] ** 2 + cen[:, 1] ** 2) / (4 * focal_length)
    design = np.zeros((len(tris), rings + 1))
    for c in range(3):
        np.add.at(design, (np.arange(len(tris)), ring_of[tris[:, c]]), 1.0 / 3.0)
    lift, *_ = np.linalg.lstsq(design, -sag, rcond=None)
    local[:, 2] += lift[ring_of]

    u, v, w = _orthonormal_frame(axis)
    apex = np.asarray(apex_position, dtype=float)
    world = apex + local[:, :1] * u + local[:, 1:2] * v + local[:, 2:3] * w
    return ReflectorMesh(world, tris, np.full(len(tris), float(thickness)),
                         float(focal_length), float(diameter), apex, w)


def paraboloid_cap_area(focal_length: float, diameter: float) -> float:
    a = 0.5 * diameter
    f = focal_length
    return 8.0 * np.pi * f**2 / 3.0 * ((1.0 + a**2 / (4 * f**2)) ** 1.5 - 1.0)


@dataclass(frozen=True, eq=False)
class Port:
    """Point-source feed with a ``cos^q`` amplitude taper about its boresight."""

    position: np.ndarray
    polarization: np.ndarray
    boresight: np.ndarray
    taper_exponent: float = 2.0

    def __post_init__(self):
        pol = _unit(self.polarization, "polarization")
        bore = _unit(self.boresight, "boresight")
        if abs(pol @ bore) > 1e-9:
            raise GeometryError("polarization must be perpendicular to boresight")
        if self.taper_exponent < 0:
            raise GeometryError("taper exponent must be >= 0")
        object.__setattr__(self, "position", _frozen(self.position))
        object.__setattr__(self, "polarization", _frozen(pol))
        object.__setattr__(self, "boresight", _frozen(bore))

    def to_dict(self) -> dict:
        return {"position": self.position.tolist(), "polarization": self.polarization.tolist(),
                "boresight": self.boresight.tolist(), "taper_exponent": self.taper_exponent}


@dataclass(frozen=True, eq=False)
class ImagingGrid:
    points: np.ndarray
    spacing: tuple[float, float]
    counts: tuple[int, int]

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points))

    @property
    def size(self) -> int:
        return len(self.points)

    def as_image(self, values) -> np.ndarray:
        """Reshape a length-N vector to ``(nz, ny)``, row = z index."""
        ny, nz = self.counts
        return np.asarray(values).reshape(nz, ny)


def build_imaging_grid(center, extent_y: float, extent_z: float, counts) -> ImagingGrid:
    """Uniform grid in the plane ``x = center[0]``; y varies fastest."""
    ny, nz = (int(c) for c in counts)
    if ny < 1 or nz < 1:
        raise GeometryError("grid counts must be >= 1")
    center = np.asarray(center, dtype=float)
    ys = np.linspace(-extent_y / 2, extent_y / 2, ny) if ny > 1 else np.zeros(1)
    zs = np.linspace(-extent_z / 2, extent_z / 2, nz) if nz > 1 else np.zeros(1)
    zz, yy = np.meshgrid(zs, ys, indexing="ij")
    pts = np.stack([np.full(yy.size, center[0]), center[1] + yy.ravel(), center[2] + zz.ravel()], axis=1)
    dy = extent_y / (ny - 1) if ny > 1 else 0.0
    dz = extent_z / (nz - 1) if nz > 1 else 0.0
    return ImagingGrid(pts, (dy, dz), (ny, nz))


@dataclass(frozen=True)
class Measurement:
    tx: int
    rx: int
    frequency: float


@dataclass(frozen=True)
class MeasurementPlan:
    entries: tuple[Measurement, ...]
    num_tx: int
    num_rx: int

    def __post_init__(self):
        for e in self.entries:
            if e.frequency <= 0:
                raise GeometryError("frequencies must be positive")
            if not (0 <= e.tx < self.num_tx and 0 <= e.rx < self.num_rx):
                raise GeometryError("port index out of range")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([e.frequency for e in self.entries])


def build_measurement_plan(tx_ports, rx_ports, frequencies) -> MeasurementPlan:
    """Full multistatic sweep, ordered tx-major then rx then frequency."""
    if not tx_ports or not rx_ports or len(frequencies) == 0:
        raise GeometryError("ports and frequencies must be non-empty")
    entries = tuple(Measurement(t, r, float(f)) for t, r, f in itertools.product(
        range(len(tx_ports)), range(len(rx_ports)), frequencies))
    return MeasurementPlan(entries, len(tx_ports), len(rx_ports))


def frequency_sweep(start: float, stop: float, count: int) -> np.ndarray:
    return np.linspace(start, stop, int(count))


def incidence_angles(port: Port, mesh: ReflectorMesh) -> np.ndarray:
    d = mesh.centroids - port.position
    k = d / np.linalg.norm(d, axis=1, keepdims=True)
    cos_i = -np.einsum("ij,ij->i", k, mesh.normals)
    return np.arccos(np.clip(cos_i, -1.0, 1.0))


def check_illumination(mesh: ReflectorMesh, ports) -> None:
    """Reject layouts where some port sees the back of some facet."""
    for idx, port in enumerate(ports):
        theta = incidence_angles(port, mesh)
        bad = np.flatnonzero(theta >= np.pi / 2)
        if bad.size:
            raise GeometryError(
                f"port {idx} illuminates {bad.size} facet(s) from behind (first: facet {bad[0]})")
