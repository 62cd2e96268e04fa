"""Text formats for feature sets, ground truth scenes and match reports.

Feature file::

    #descriptors sift:128 liop:144
    <id> <x> <y> <a11> <a12> <a21> <a22> | <v1 ...> | <v2 ...>

Ground-truth file::

    #objects 2
    <obj_id> <h11> <h12> <h13> <h21> <h22> <h23>
    assign <feature_id> <obj_id>
    tolerance 8

Match report (descending score)::

    <p_id> <q_id> <score> <descriptor_tag> <correct: 1|0|-1>

Floats are written with ``repr`` so a save/load cycle is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError

DET_EPS = 1e-12
BACKGROUND = -1


def _fmt(x: float) -> str:
    return repr(float(x))


def _rows(v: np.ndarray, n: int) -> np.ndarray:
    if v.ndim == 2 and v.shape[0] == n:
        return v
    if n == 0:
        raise DataError("descriptor array of an empty feature set must be 2-D")
    return v.reshape(n, -1)


@dataclass(eq=False)
class FeatureFrame:
    """Elliptical interest region: a center and a 2x2 affine shape."""

    id: int
    center: np.ndarray
    shape: np.ndarray


@dataclass(eq=False)
class FeatureSet:
    """All features of one image, stored column-wise.

    ``descriptors`` maps a descriptor name to an ``(n, dim)`` array whose
    rows align with ``ids``. Names keep their header order.
    """

    ids: np.ndarray
    centers: np.ndarray
    shapes: np.ndarray
    descriptors: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        n = self.ids.shape[0]
        self.centers = np.asarray(self.centers, dtype=float).reshape(n, 2)
        self.shapes = np.asarray(self.shapes, dtype=float).reshape(n, 2, 2)
        self.descriptors = {
            name: _rows(np.asarray(v, dtype=float), n)
            for name, v in self.descriptors.items()
        }
        self.validate()

    def __len__(self):
        return int(self.ids.shape[0])

    @property
    def descriptor_names(self) -> list[str]:
        return list(self.descriptors)

    @property
    def frames(self) -> list[FeatureFrame]:
        return [
            FeatureFrame(int(i), self.centers[k].copy(), self.shapes[k].copy())
            for k, i in enumerate(self.ids)
        ]

    @property
    def bundles(self) -> list[dict[str, np.ndarray]]:
        return [
            {name: v[k].copy() for name, v in self.descriptors.items()}
            for k in range(len(self))
        ]

    def index_of(self) -> dict[int, int]:
        return {int(i): k for k, i in enumerate(self.ids)}

    def subset(self, names) -> "FeatureSet":
        """Copy restricted to the given descriptor names."""
        missing = [n for n in names if n not in self.descriptors]
        if missing:
            raise DataError(f"unknown descriptor(s): {', '.join(missing)}")
        return FeatureSet(
            self.ids, self.centers, self.shapes,
            {n: self.descriptors[n] for n in names},
        )

    def validate(self):
        ids, counts = np.unique(self.ids, return_counts=True)
        if np.any(counts > 1):
            raise DataError(f"duplicate feature id {int(ids[counts > 1][0])}")
        if not np.all(np.isfinite(self.centers)):
            bad = int(self.ids[~np.isfinite(self.centers).all(axis=1)][0])
            raise DataError(f"feature {bad}: non-finite center")
        if len(self):
            dets = np.linalg.det(self.shapes)
            bad = ~(np.abs(dets) > DET_EPS)
            if np.any(bad):
                raise DataError(
                    f"feature {int(self.ids[bad][0])}: singular shape matrix "
                    f"(det={dets[bad][0]:.3g})"
                )
        for name, v in self.descriptors.items():
            finite = np.isfinite(v).all(axis=1)
            if not finite.all():
                bad = int(self.ids[~finite][0])
                raise DataError(f"feature {bad}: non-finite '{name}' descriptor")


def load_feature_set(path) -> FeatureSet:
    path = Path(path)
    names: list[str] | None = None
    dims: list[int] = []
    ids, centers, shapes = [], [], []
    vectors: list[list[list[float]]] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("#descriptors"):
                    if names is not None:
                        raise FormatError("repeated #descriptors header", path, lineno)
                    names, dims = [], []
                    for tok in line.split()[1:]:
                        name, sep, dim = tok.rpartition(":")
                        if not sep or not name:
                            raise FormatError(f"bad descriptor spec {tok!r}", path, lineno)
                        try:
                            d = int(dim)
                        except ValueError:
                            raise FormatError(f"bad dimension in {tok!r}", path, lineno) from None
                        if d < 1 or name in names:
                            raise FormatError(f"bad descriptor spec {tok!r}", path, lineno)
                        names.append(name)
                        dims.append(d)
                    vectors = [[] for _ in names]
                continue
            if names is None:
                raise FormatError("record before #descriptors header", path, lineno)
            parts = [p.split() for p in line.split("|")]
            head = parts[0]
            if len(head) != 7:
                raise FormatError(
                    f"expected 'id x y a11 a12 a21 a22', got {len(head)} fields",
                    path, lineno,
                )
            if len(parts) - 1 != len(names):
                raise FormatError(
                    f"expected {len(names)} descriptor blocks, got {len(parts) - 1}",
                    path, lineno,
                )
            try:
                fid = int(head[0])
                nums = [float(t) for t in head[1:]]
                vecs = [[float(t) for t in block] for block in parts[1:]]
            except ValueError as exc:
                raise FormatError(str(exc), path, lineno) from None
            for m, (vec, d) in enumerate(zip(vecs, dims)):
                if len(vec) != d:
                    raise FormatError(
                        f"feature {fid}: descriptor '{names[m]}' has {len(vec)} "
                        f"values, header says {d}", path, lineno,
                    )
                vectors[m].append(vec)
            ids.append(fid)
            centers.append(nums[0:2])
            shapes.append(nums[2:6])
    if names is None:
        raise FormatError("missing #descriptors header", path)
    # a header with no records is an image without features
    try:
        return FeatureSet(
            np.array(ids, dtype=np.int64), np.array(centers).reshape(-1, 2),
            np.array(shapes).reshape(-1, 2, 2),
            {n: np.array(v, dtype=float).reshape(len(ids), d)
             for n, v, d in zip(names, vectors, dims)},
        )
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def save_feature_set(path, fs: FeatureSet):
    names = fs.descriptor_names
    header = "#descriptors " + " ".join(
        f"{n}:{fs.descriptors[n].shape[1]}" for n in names
    )
    lines = [header]
    for k in range(len(fs)):
        head = [str(int(fs.ids[k]))]
        head += [_fmt(v) for v in fs.centers[k]]
        head += [_fmt(v) for v in fs.shapes[k].ravel()]
        blocks = [" ".join(head)]
        blocks += [" ".join(_fmt(v) for v in fs.descriptors[n][k]) for n in names]
        lines.append(" | ".join(blocks))
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(eq=False)
class SceneGroundTruth:
    """Which object each feature belongs to, and each object's P->Q map.

    Feature ids are shared across the two images of a pair, so one map
    covers both. Unlisted features count as background.
    """

    object_assignment: dict[int, int]
    object_transforms: dict[int, np.ndarray]
    pixel_tolerance: float = 8.0

    def __post_init__(self):
        self.object_assignment = {int(k): int(v) for k, v in self.object_assignment.items()}
        self.object_transforms = {
            int(k): np.asarray(v, dtype=float).reshape(3, 3)
            for k, v in self.object_transforms.items()
        }
        self.validate()

    def validate(self):
        for oid, h in self.object_transforms.items():
            if oid == BACKGROUND:
                raise DataError("object id -1 is reserved for background")
            if not np.all(np.isfinite(h)):
                raise DataError(f"object {oid}: non-finite transform")
            if np.max(np.abs(h[2] - [0.0, 0.0, 1.0])) > 1e-12:
                raise DataError(f"object {oid}: transform bottom row must be (0, 0, 1)")
            if not abs(np.linalg.det(h[:2, :2])) > DET_EPS:
                raise DataError(f"object {oid}: singular transform")
        for fid, oid in self.object_assignment.items():
            if oid != BACKGROUND and oid not in self.object_transforms:
                raise DataError(f"feature {fid}: object {oid} has no transform")
        if not self.pixel_tolerance >= 0:
            raise DataError("tolerance must be non-negative")

    def object_of(self, fid: int) -> int:
        return self.object_assignment.get(int(fid), BACKGROUND)


def load_ground_truth(path) -> SceneGroundTruth:
    path = Path(path)
    declared = None
    transforms: dict[int, np.ndarray] = {}
    assignment: dict[int, int] = {}
    tolerance = 8.0
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            tok = raw.split()
            if not tok:
                continue
            try:
                if tok[0] == "#objects":
                    declared = int(tok[1])
                elif tok[0].startswith("#"):
                    continue
                elif tok[0] == "assign":
                    if len(tok) != 3:
                        raise FormatError("expected 'assign feature_id obj_id'", path, lineno)
                    fid = int(tok[1])
                    if fid in assignment:
                        raise FormatError(f"feature {fid} assigned twice", path, lineno)
                    assignment[fid] = int(tok[2])
                elif tok[0] == "tolerance":
                    tolerance = float(tok[1])
                else:
                    oid = int(tok[0])
                    vals = [float(t) for t in tok[1:]]
                    if len(vals) == 6:
                        vals += [0.0, 0.0, 1.0]
                    elif len(vals) != 9:
                        raise FormatError(
                            f"object {oid}: expected 6 (or 9) transform entries", path, lineno
                        )
                    if oid in transforms:
                        raise FormatError(f"object {oid} defined twice", path, lineno)
                    transforms[oid] = np.array(vals).reshape(3, 3)
            except (ValueError, IndexError) as exc:
                raise FormatError(str(exc) or "malformed line", path, lineno) from None
    if declared is None:
        raise FormatError("missing #objects header", path)
    if declared != len(transforms):
        raise FormatError(f"#objects says {declared}, found {len(transforms)}", path)
    try:
        return SceneGroundTruth(assignment, transforms, tolerance)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def save_ground_truth(path, gt: SceneGroundTruth):
    lines = [f"#objects {len(gt.object_transforms)}"]
    for oid in sorted(gt.object_transforms):
        h = gt.object_transforms[oid]
        lines.append(" ".join([str(oid)] + [_fmt(v) for v in h[:2].ravel()]))
    for fid in sorted(gt.object_assignment):
        lines.append(f"assign {fid} {gt.object_assignment[fid]}")
    lines.append(f"tolerance {_fmt(gt.pixel_tolerance)}")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class ReportLine:
    p_id: int
    q_id: int
    score: float
    tag: str
    correct: int = -1


def save_match_report(path, lines, header: list[str] | tuple = ()):
    """Write report lines (already sorted) behind ``#`` header comments."""
    out = [f"# {h}" if not h.startswith("#") else h for h in header]
    for ln in lines:
        out.append(f"{ln.p_id} {ln.q_id} {_fmt(ln.score)} {ln.tag} {int(ln.correct)}")
    Path(path).write_text("\n".join(out) + "\n")


def load_match_report(path) -> list[ReportLine]:
    path = Path(path)
    result = []
    prev = np.inf
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            tok = raw.split()
            if not tok or tok[0].startswith("#"):
                continue
            if len(tok) != 5:
                raise FormatError("expected 'p_id q_id score tag correct'", path, lineno)
            try:
                ln = ReportLine(int(tok[0]), int(tok[1]), float(tok[2]), tok[3], int(tok[4]))
            except ValueError as exc:
                raise FormatError(str(exc), path, lineno) from None
            if ln.correct not in (-1, 0, 1):
                raise FormatError("correct must be 1, 0 or -1", path, lineno)
            if ln.score > prev:
                raise FormatError("scores are not in descending order", path, lineno)
            prev = ln.score
            result.append(ln)
    return result
