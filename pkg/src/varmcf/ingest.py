"""Data ingestion and synthetic shapes.

File loaders accept CSV (columns ``x1..xn[,t11..tdn][,m]``) and JSON in
the same atom schema the trajectory writer emits.  Raw clouds without
frames get tangent planes from local PCA over k nearest neighbors.  The
shape generators produce varifolds with analytic positions and exact
tangent planes; in ``uniform-per-length`` mass mode every atom carries
``total measure / N``.
"""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionMismatch, LoadError
from .varifold import Varifold

__all__ = [
    "RawCloud",
    "ShapeSpec",
    "load",
    "save_varifold_json",
    "estimate_tangent_planes",
    "generate",
    "SHAPE_KINDS",
]

MASS_MODES = ("uniform-per-length", "unit-per-atom")
SHAPE_KINDS = (
    "circle",
    "sphere",
    "segment",
    "torus",
    "dumbbell",
    "crossing-lines",
    "custom-graph",
)

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class RawCloud:
    """Points with optional frames and masses, prior to varifold assembly."""

    points: np.ndarray
    frames: np.ndarray | None = None
    masses: np.ndarray | None = None

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", points)
        if self.frames is not None:
            frames = np.asarray(self.frames, dtype=float)
            if frames.shape[0] != points.shape[0] or frames.shape[2] != points.shape[1]:
                raise DimensionMismatch(
                    f"frames shaped {frames.shape} do not match {points.shape[0]} points in "
                    f"R^{points.shape[1]}"
                )
            object.__setattr__(self, "frames", frames)
        if self.masses is not None:
            masses = np.asarray(self.masses, dtype=float).reshape(-1)
            if masses.shape[0] != points.shape[0]:
                raise DimensionMismatch("one mass per point required")
            object.__setattr__(self, "masses", masses)

    def __len__(self) -> int:
        return self.points.shape[0]


def _reorthonormalize(frame: np.ndarray, row: int) -> np.ndarray:
    """Snap a nearly orthonormal frame back to the manifold (polar factor).

    The deviation is the largest singular-value offset from 1, i.e. the
    operator distance to the closest orthonormal frame; up to 1e-6 it is
    corrected, beyond that the row is rejected.
    """
    gram = frame @ frame.T
    if float(np.abs(gram - np.eye(frame.shape[0])).max()) <= 1e-12:
        return frame
    u, s, vt = np.linalg.svd(frame, full_matrices=False)
    dev = float(np.abs(s - 1.0).max())
    if dev > 1e-6:
        raise LoadError(f"row {row}: frame is not orthonormal (deviation {dev:.3e} > 1e-6)")
    return u @ vt


def _load_csv(path: Path) -> RawCloud:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        xcols = [i for i, h in enumerate(header) if re.fullmatch(r"x\d+", h)]
        tcols = [(i, h) for i, h in enumerate(header) if re.fullmatch(r"t\d\d", h)]
        mcol = [i for i, h in enumerate(header) if h == "m"]
        if not xcols:
            raise LoadError(f"{path}: header defines no coordinate columns x1..xn")
        n = len(xcols)
        d = max(int(h[1]) for _, h in tcols) if tcols else 0
        if tcols and len(tcols) != d * n:
            raise LoadError(
                f"{path}: expected {d * n} frame columns t11..t{d}{n}, found {len(tcols)}"
            )
        points, frames, masses = [], [], []
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                points.append([float(row[i]) for i in xcols])
                if tcols:
                    frame = np.zeros((d, n))
                    for i, h in tcols:
                        frame[int(h[1]) - 1, int(h[2]) - 1] = float(row[i])
                    frames.append(_reorthonormalize(frame, rownum))
                if mcol:
                    masses.append(float(row[mcol[0]]))
            except (ValueError, IndexError) as exc:
                raise LoadError(f"{path}: row {rownum}: {exc}") from None
    return RawCloud(
        np.array(points, dtype=float),
        np.array(frames) if frames else None,
        np.array(masses) if masses else None,
    )


def _load_json(path: Path) -> RawCloud:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise LoadError(f"{path}: invalid JSON ({exc})") from None
    atoms = doc.get("atoms")
    if atoms is None:
        raise LoadError(f"{path}: missing 'atoms' field")
    points, frames, masses = [], [], []
    has_frames = atoms and "frame" in atoms[0]
    for i, atom in enumerate(atoms):
        try:
            points.append([float(c) for c in atom["x"]])
            if has_frames:
                frames.append(_reorthonormalize(np.asarray(atom["frame"], dtype=float), i))
            if "m" in atom:
                masses.append(float(atom["m"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise LoadError(f"{path}: atom {i}: {exc}") from None
    return RawCloud(
        np.array(points, dtype=float).reshape(len(atoms), -1),
        np.array(frames) if frames else None,
        np.array(masses) if masses else None,
    )


def load(path, format: str | None = None) -> RawCloud:
    """Read a raw cloud from a CSV or JSON file.

    The format is inferred from the suffix unless given.  Frames, when
    present, are validated orthonormal (re-orthonormalized when off by at
    most 1e-6, rejected beyond); parse failures name the offending row.
    """
    path = Path(path)
    if not path.exists():
        raise LoadError(f"input file not found: {path}")
    fmt = format or ("json" if path.suffix.lower() == ".json" else "csv")
    if fmt == "json":
        return _load_json(path)
    if fmt == "csv":
        return _load_csv(path)
    raise LoadError(f"unknown format {fmt!r} (expected 'json' or 'csv')")


def save_varifold_json(v: Varifold, path) -> None:
    from .flow import _to_json, varifold_to_dict

    with open(path, "w") as fh:
        fh.write(_to_json(varifold_to_dict(v)))
        fh.write("\n")


def cloud_to_varifold(cloud: RawCloud, d: int | None = None, k: int = 8) -> Varifold:
    """Assemble a varifold from a raw cloud, estimating planes when absent."""
    if cloud.frames is not None:
        d = cloud.frames.shape[1]
        masses = cloud.masses if cloud.masses is not None else np.ones(len(cloud))
        return Varifold(d, cloud.points.shape[1], cloud.points, cloud.frames, masses)
    if d is None:
        raise ValueError("plane dimension d is required when the cloud carries no frames")
    return estimate_tangent_planes(cloud, d, k)


def estimate_tangent_planes(cloud: RawCloud, d: int, k: int) -> Varifold:
    """Tangent planes from the top principal directions of k-NN neighborhoods.

    Ties in the eigendecomposition are broken deterministically by fixing
    each direction's sign at its largest-magnitude component (first index
    wins).  Degenerate neighborhoods (zero covariance) are an error naming
    the point.
    """
    points = cloud.points
    count, n = points.shape
    if k < d + 1:
        raise ValueError(f"need k >= d + 1 neighbors, got k = {k}, d = {d}")
    if count <= k:
        raise ValueError(f"need more than k = {k} points, got {count}")
    tree = cKDTree(points)
    _, idx = tree.query(points, k=k)
    frames = np.empty((count, d, n))
    for j in range(count):
        nbrs = points[idx[j]]
        centered = nbrs - nbrs.mean(axis=0)
        cov = centered.T @ centered
        if float(np.abs(cov).max()) <= 1e-30:
            raise LoadError(f"degenerate neighborhood at point {j}: zero covariance")
        evals, evecs = np.linalg.eigh(cov)
        basis = evecs[:, ::-1][:, :d].T  # rows, leading directions first
        if evals[::-1][d - 1] <= 1e-30:
            raise LoadError(f"degenerate neighborhood at point {j}: rank below {d}")
        for r in range(d):
            lead = int(np.argmax(np.abs(basis[r])))
            if basis[r, lead] < 0.0:
                basis[r] = -basis[r]
        frames[j] = basis
    masses = cloud.masses if cloud.masses is not None else np.ones(count)
    return Varifold(d, n, points, frames, masses)


@dataclass(frozen=True)
class ShapeSpec:
    """Parameters of an analytic test shape.

    kind : one of SHAPE_KINDS.
    samples : atom count (its exact meaning is per kind: per line for
        crossing-lines, total otherwise); at least 3.
    mass_mode : "uniform-per-length" spreads the total measure evenly,
        "unit-per-atom" gives every atom mass 1.
    radius / minor_radius / neck / angle / length : per-kind parameters.
    intersection : crossing-lines only; "double" places one atom per line
        at the crossing (half mass each), "single" keeps one atom with the
        first line's direction.
    graph : custom-graph only; {"vertices": [[...]], "edges": [[i, j]]}.
    """

    kind: str
    samples: int
    mass_mode: str = "uniform-per-length"
    radius: float = 1.0
    minor_radius: float = 0.25
    neck: float = 0.35
    angle: float = math.pi / 2
    length: float = 2.0
    intersection: str = "double"
    graph: dict | None = None

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.samples < 3:
            raise ValueError("need at least 3 samples")
        if self.mass_mode not in MASS_MODES:
            raise ValueError(f"mass_mode must be one of {MASS_MODES}")
        for name in ("radius", "minor_radius", "neck", "length"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.intersection not in ("double", "single"):
            raise ValueError("intersection must be 'double' or 'single'")


def _masses(spec: ShapeSpec, count: int, total_measure: float) -> np.ndarray:
    if spec.mass_mode == "unit-per-atom":
        return np.ones(count)
    return np.full(count, total_measure / count)


def _circle(spec: ShapeSpec) -> Varifold:
    r, n_atoms = spec.radius, spec.samples
    theta = 2.0 * math.pi * np.arange(n_atoms) / n_atoms
    pos = r * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    frames = np.stack([-np.sin(theta), np.cos(theta)], axis=1)[:, None, :]
    return Varifold(1, 2, pos, frames, _masses(spec, n_atoms, 2.0 * math.pi * r))


def _segment(spec: ShapeSpec) -> Varifold:
    length, n_atoms = spec.length, spec.samples
    s = ((np.arange(n_atoms) + 0.5) / n_atoms - 0.5) * length
    pos = np.stack([s, np.zeros(n_atoms)], axis=1)
    frames = np.tile(np.array([[1.0, 0.0]]), (n_atoms, 1))[:, None, :]
    return Varifold(1, 2, pos, frames, _masses(spec, n_atoms, length))


def _sphere(spec: ShapeSpec) -> Varifold:
    r, n_atoms = spec.radius, spec.samples
    k = np.arange(n_atoms)
    z = 1.0 - (2.0 * k + 1.0) / n_atoms
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = k * GOLDEN_ANGLE
    units = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)
    pos = r * units
    frames = np.empty((n_atoms, 2, 3))
    for j in range(n_atoms):
        u = units[j]
        # tangent basis orthogonal to the radial direction
        a = np.array([1.0, 0.0, 0.0]) if abs(u[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        t1 = a - np.dot(a, u) * u
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(u, t1)
        frames[j] = np.stack([t1, t2])
    return Varifold(2, 3, pos, frames, _masses(spec, n_atoms, 4.0 * math.pi * r * r))


def _torus(spec: ShapeSpec) -> Varifold:
    big, small, n_atoms = spec.radius, spec.minor_radius, spec.samples
    k = np.arange(n_atoms)
    u = 2.0 * math.pi * k / n_atoms
    v = 2.0 * math.pi * np.mod(k * GOLDEN_ANGLE / (2.0 * math.pi), 1.0)
    cu, su, cv, sv = np.cos(u), np.sin(u), np.cos(v), np.sin(v)
    pos = np.stack([(big + small * cv) * cu, (big + small * cv) * su, small * sv], axis=1)
    t_u = np.stack([-su, cu, np.zeros(n_atoms)], axis=1)
    t_v = np.stack([-sv * cu, -sv * su, cv], axis=1)
    frames = np.stack([t_u, t_v], axis=1)
    area = 4.0 * math.pi**2 * big * small
    return Varifold(2, 3, pos, frames, _masses(spec, n_atoms, area))


def _dumbbell(spec: ShapeSpec) -> Varifold:
    """Closed pinched curve (Cassini oval) with neck half-width ``neck``.

    In polar form ``rho(theta)^2 = c^2 cos(2 theta) + sqrt(c^4 cos^2(2 theta)
    + a^4 - c^4)`` with ``a^2 = (1 + neck^2)/2`` and ``c^2 = (1 - neck^2)/2``,
    so the bells reach radius 1 and the waist sits at the requested width.
    Atoms are placed uniformly in arc length via a dense parameter table.
    """
    w = spec.neck
    if w >= 1.0:
        raise ValueError("dumbbell neck must be < 1")
    a2 = (1.0 + w * w) / 2.0
    c2 = (1.0 - w * w) / 2.0

    def curve(theta):
        c2t = np.cos(2.0 * theta)
        rho = np.sqrt(c2 * c2t + np.sqrt((c2 * c2t) ** 2 + a2 * a2 - c2 * c2))
        return np.stack([rho * np.cos(theta), rho * np.sin(theta)], axis=-1)

    def tangent_of(theta):
        c2t, s2t = np.cos(2.0 * theta), np.sin(2.0 * theta)
        inner = np.sqrt((c2 * c2t) ** 2 + a2 * a2 - c2 * c2)
        rho = np.sqrt(c2 * c2t + inner)
        drho = -c2 * s2t * (1.0 + c2 * c2t / inner) / rho
        t = (
            drho[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
            + rho[:, None] * np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
        )
        return t / np.linalg.norm(t, axis=1, keepdims=True)

    dense = np.linspace(0.0, 2.0 * math.pi, 20001)
    pts = curve(dense)
    seglen = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seglen)])
    total = arc[-1]
    targets = total * np.arange(spec.samples) / spec.samples
    theta = np.interp(targets, arc, dense)
    pos = curve(theta)
    tangent = tangent_of(theta)
    return Varifold(1, 2, pos, tangent[:, None, :], _masses(spec, spec.samples, total))


def _crossing_lines(spec: ShapeSpec) -> Varifold:
    """Two segments of equal length crossing at the origin.

    Sampling is endpoint-inclusive and exactly symmetric about the center;
    with an odd sample count each line contributes an atom at the crossing
    itself.  In "double" mode both center atoms are kept (one per line); in
    "single" mode they merge into one atom carrying the first line's
    direction and the combined mass.
    """
    n_atoms, length, angle = spec.samples, spec.length, spec.angle
    dirs = [np.array([1.0, 0.0]), np.array([math.cos(angle), math.sin(angle)])]
    # integer-scaled offsets negate exactly, keeping the fixture symmetric
    ticks = (2 * np.arange(n_atoms) - (n_atoms - 1)).astype(float)
    offsets = ticks * (length / (2.0 * (n_atoms - 1)))
    per_atom = 1.0 if spec.mass_mode == "unit-per-atom" else length / n_atoms

    positions, frames, masses = [], [], []
    for line, u in enumerate(dirs):
        for s in offsets:
            if (
                spec.intersection == "single"
                and line == 1
                and s == 0.0
            ):
                continue
            positions.append(s * u)
            frames.append(u[None, :])
            masses.append(per_atom)
    pos = np.stack(positions)
    frm = np.stack(frames)
    mas = np.array(masses)
    if spec.intersection == "single" and n_atoms % 2 == 1:
        center = int(np.argmin(np.abs(offsets)))  # index within line 0
        mas[center] += per_atom
    return Varifold(1, 2, pos, frm, mas)


def _custom_graph(spec: ShapeSpec) -> Varifold:
    if not spec.graph:
        raise ValueError("custom-graph needs a graph specification")
    try:
        vertices = np.asarray(spec.graph["vertices"], dtype=float)
        edges = [(int(i), int(j)) for i, j in spec.graph["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"invalid graph specification: {exc}") from None
    n = vertices.shape[1]
    lengths = np.array([np.linalg.norm(vertices[j] - vertices[i]) for i, j in edges])
    if np.any(lengths <= 0.0):
        raise ValueError("graph edges must have positive length")
    total = float(lengths.sum())
    counts = np.maximum(1, np.round(spec.samples * lengths / total).astype(int))
    positions, frames = [], []
    for (i, j), count in zip(edges, counts):
        u = (vertices[j] - vertices[i]) / np.linalg.norm(vertices[j] - vertices[i])
        for t in (np.arange(count) + 0.5) / count:
            positions.append(vertices[i] + t * (vertices[j] - vertices[i]))
            frames.append(u[None, :])
    pos = np.stack(positions)
    return Varifold(1, n, pos, np.stack(frames), _masses(spec, pos.shape[0], total))


_GENERATORS = {
    "circle": _circle,
    "sphere": _sphere,
    "segment": _segment,
    "torus": _torus,
    "dumbbell": _dumbbell,
    "crossing-lines": _crossing_lines,
    "custom-graph": _custom_graph,
}


def generate(spec: ShapeSpec) -> Varifold:
    """Sample an analytic shape into a varifold with exact tangent planes."""
    return _GENERATORS[spec.kind](spec)
