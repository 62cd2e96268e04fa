"""Selection, ground-truth labelling, precision/recall and MDS embedding."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .candidates import CandidateSet
from .errors import DataError
from .feature_io import BACKGROUND, FeatureSet, ReportLine, SceneGroundTruth

YES, NO, UNKNOWN = 1, 0, -1


@dataclass
class MatchEntry:
    p_index: int
    q_index: int
    p_id: int
    q_id: int
    score: float
    tag: str
    correct: int = UNKNOWN

    def to_line(self) -> ReportLine:
        return ReportLine(self.p_id, self.q_id, self.score, self.tag, self.correct)


@dataclass
class MatchReport:
    entries: list[MatchEntry]
    precision_recall: list[tuple[float, float]] = field(default_factory=list)
    map_value: float | None = None
    total_correct: int | None = None

    @property
    def n_true_positive(self) -> int:
        return sum(e.correct == YES for e in self.entries)

    @property
    def precision_at_full(self) -> float | None:
        if not self.precision_recall:
            return None
        return self.precision_recall[-1][1]


def select_per_feature(cands: CandidateSet, scores) -> np.ndarray:
    """Positions (into ``cands``) of the best-scoring candidate per p-feature.

    Ties go to the lowest q-feature id.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (len(cands),):
        raise DataError("need exactly one score per candidate")
    q_ids = cands.q_ids
    picked = []
    for _, pos in sorted(cands.groups().items()):
        s = scores[pos]
        top = pos[s == s.max()]
        picked.append(int(top[np.argmin(q_ids[top])]))
    return np.array(picked, dtype=np.int64)


def rank_entries(cands: CandidateSet, positions, scores) -> list[MatchEntry]:
    """Entries for the given candidate positions, by descending score.

    Equal scores keep ascending p-feature id order.
    """
    positions = np.asarray(positions, dtype=np.int64)
    scores = np.asarray(scores, dtype=float)
    s = scores[positions]
    order = np.lexsort((cands.p_ids[positions], -s))
    tags = cands.tags()
    out = []
    for k in positions[order]:
        out.append(MatchEntry(
            int(cands.p_index[k]), int(cands.q_index[k]),
            int(cands.p_ids[k]), int(cands.q_ids[k]),
            float(scores[k]), tags[k],
        ))
    return out


def _map_point(h, x):
    return h[:2, :2] @ x + h[:2, 2]


def label_correct_pixel(p_id, q_id, xp, xq, gt: SceneGroundTruth) -> bool:
    """True iff both features lie on the same object and ``xq`` is within
    tolerance of the object transform applied to ``xp``."""
    obj = gt.object_of(p_id)
    if obj == BACKGROUND or gt.object_of(q_id) != obj:
        return False
    h = gt.object_transforms[obj]
    err = np.asarray(xq, dtype=float) - _map_point(h, np.asarray(xp, dtype=float))
    return bool(math.hypot(err[0], err[1]) <= gt.pixel_tolerance)


def _ellipse_box(a, c):
    half = np.sqrt((np.asarray(a) ** 2).sum(axis=1))
    return c - half, c + half


def overlap_error(a1, c1, a2, c2, samples: int = 20000) -> float:
    """1 - IoU of ellipses ``{a u + c : |u| <= 1}``, by grid sampling.

    The union's bounding box is cut into ``ceil(sqrt(samples))**2`` cells and
    each cell center is tested for membership.
    """
    a1, a2 = np.asarray(a1, float), np.asarray(a2, float)
    c1, c2 = np.asarray(c1, float), np.asarray(c2, float)
    lo1, hi1 = _ellipse_box(a1, c1)
    lo2, hi2 = _ellipse_box(a2, c2)
    lo, hi = np.minimum(lo1, lo2), np.maximum(hi1, hi2)
    m = max(2, int(math.ceil(math.sqrt(samples))))
    xs = lo[0] + (np.arange(m) + 0.5) * (hi[0] - lo[0]) / m
    ys = lo[1] + (np.arange(m) + 0.5) * (hi[1] - lo[1]) / m
    pts = np.stack(np.meshgrid(xs, ys, indexing="xy"), axis=-1).reshape(-1, 2)

    def inside(a, c):
        u = np.linalg.solve(a, (pts - c).T)
        return (u * u).sum(axis=0) <= 1.0

    in1, in2 = inside(a1, c1), inside(a2, c2)
    union = np.count_nonzero(in1 | in2)
    if union == 0:
        return 1.0
    return 1.0 - np.count_nonzero(in1 & in2) / union


def label_correct_overlap(p_id, q_id, xp, ap, xq, aq, gt: SceneGroundTruth,
                          threshold: float = 0.5, samples: int = 20000) -> bool:
    """True iff the q-ellipse overlaps the ground-truth image of the
    p-ellipse with overlap error below ``threshold``."""
    obj = gt.object_of(p_id)
    if obj == BACKGROUND or gt.object_of(q_id) != obj:
        return False
    h = gt.object_transforms[obj]
    mapped_a = h[:2, :2] @ np.asarray(ap, float)
    mapped_c = _map_point(h, np.asarray(xp, float))
    return overlap_error(aq, xq, mapped_a, mapped_c, samples) < threshold


@dataclass(frozen=True)
class Criterion:
    kind: str = "pixel"
    tolerance: float | None = None
    overlap_threshold: float = 0.5
    samples: int = 20000

    def tol(self, gt: SceneGroundTruth) -> float:
        return gt.pixel_tolerance if self.tolerance is None else self.tolerance


def _with_tolerance(gt: SceneGroundTruth, tol: float) -> SceneGroundTruth:
    if tol == gt.pixel_tolerance:
        return gt
    return SceneGroundTruth(gt.object_assignment, gt.object_transforms, tol)


def label_pair(fp: FeatureSet, fq: FeatureSet, p: int, q: int, gt, criterion: Criterion) -> bool:
    if criterion.kind == "pixel":
        return label_correct_pixel(
            fp.ids[p], fq.ids[q], fp.centers[p], fq.centers[q],
            _with_tolerance(gt, criterion.tol(gt)),
        )
    if criterion.kind == "overlap":
        return label_correct_overlap(
            fp.ids[p], fq.ids[q], fp.centers[p], fp.shapes[p], fq.centers[q], fq.shapes[q],
            gt, criterion.overlap_threshold, criterion.samples,
        )
    raise DataError(f"unknown criterion {criterion.kind!r}")


def label_entries(entries, fp: FeatureSet, fq: FeatureSet, gt, criterion: Criterion = Criterion()):
    for e in entries:
        e.correct = YES if label_pair(fp, fq, e.p_index, e.q_index, gt, criterion) else NO
    return entries


def total_correct_possible(fp: FeatureSet, fq: FeatureSet, gt: SceneGroundTruth,
                           criterion: Criterion = Criterion()) -> int:
    """Number of p-features on an object that have at least one correct
    q-feature anywhere in image Q (exhaustive scan)."""
    q_obj = np.array([gt.object_of(i) for i in fq.ids])
    tol = criterion.tol(gt)
    count = 0
    for p in range(len(fp)):
        obj = gt.object_of(fp.ids[p])
        if obj == BACKGROUND:
            continue
        qs = np.flatnonzero(q_obj == obj)
        if not len(qs):
            continue
        h = gt.object_transforms[obj]
        target = _map_point(h, fp.centers[p])
        dist = np.hypot(*(fq.centers[qs] - target).T)
        if criterion.kind == "pixel":
            count += bool(np.any(dist <= tol))
            continue
        # overlap: only ellipses whose boxes can touch are worth sampling
        reach = np.sqrt((fq.shapes[qs] ** 2).sum(axis=2)).max(axis=1)
        reach += np.sqrt(((h[:2, :2] @ fp.shapes[p]) ** 2).sum(axis=1)).max()
        for q in qs[dist <= reach * math.sqrt(2)]:
            if label_pair(fp, fq, p, int(q), gt, criterion):
                count += 1
                break
    return count


def precision_recall(labels, total_correct: int):
    """PR samples after each entry of a score-sorted list, and its AP.

    ``labels`` are 1/0 correctness flags in list order. AP is the sum of
    precision at each correct entry divided by ``total_correct``, so missed
    matches count against it.
    """
    if total_correct <= 0:
        raise DataError("recall undefined: no correct correspondence is possible")
    labels = np.asarray(labels, dtype=np.int64)
    if np.any((labels != 0) & (labels != 1)):
        raise DataError("every entry needs a 0/1 correctness label")
    tp = np.cumsum(labels)
    if len(labels) and tp[-1] > total_correct:
        raise DataError("more true positives than possible correct matches")
    depth = np.arange(1, len(labels) + 1)
    precision = tp / depth
    recall = tp / total_correct
    # accumulate in rationals so AP is the correctly rounded exact value
    hits = np.flatnonzero(labels == 1)
    ap = float(sum((Fraction(int(tp[i]), int(i + 1)) for i in hits), Fraction(0)) / total_correct)
    curve = list(zip(recall.tolist(), precision.tolist()))
    return curve, ap


def evaluate_entries(entries, fp, fq, gt, criterion: Criterion = Criterion(), total=None) -> MatchReport:
    label_entries(entries, fp, fq, gt, criterion)
    if total is None:
        total = total_correct_possible(fp, fq, gt, criterion)
    curve, ap = precision_recall([e.correct for e in entries], total)
    return MatchReport(entries, curve, ap, total)


def mds_embed(d, dims: int = 2) -> np.ndarray:
    """Classical MDS coordinates of an ``(n, n)`` distance matrix.

    Infinite entries are replaced by twice the largest finite one. Each axis
    is flipped so that its first non-negligible coordinate is positive.
    """
    d = np.array(d, dtype=float)
    n = d.shape[0]
    if n == 0:
        return np.zeros((0, dims))
    finite = np.isfinite(d)
    if not finite.all():
        big = d[finite].max(initial=0.0)
        d[~finite] = 2.0 * big if big > 0 else 1.0
    d2 = d ** 2
    b = -0.5 * (d2 - d2.mean(axis=0) - d2.mean(axis=1)[:, None] + d2.mean())
    b = 0.5 * (b + b.T)
    evals, evecs = np.linalg.eigh(b)
    order = np.argsort(evals)[::-1][:dims]
    evals, evecs = evals[order], evecs[:, order]
    scale = max(1.0, float(np.abs(evals).max(initial=0.0)))
    out = np.zeros((n, dims))
    positive = evals > 1e-12 * scale
    if positive.sum() < dims:
        warnings.warn(
            f"only {int(positive.sum())} positive eigenvalue(s); padding embedding with zeros",
            RuntimeWarning, stacklevel=2,
        )
    for a in range(len(evals)):
        if not positive[a]:
            continue
        col = evecs[:, a] * math.sqrt(evals[a])
        nz = np.flatnonzero(np.abs(col) > 1e-12 * max(1.0, np.abs(col).max()))
        if len(nz) and col[nz[0]] < 0:
            col = -col
        out[:, a] = col
    return out


def write_embedding_csv(path, coords, tags, correct):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["corr_id", "x", "y", "source_tags", "correct"])
        for k in range(len(coords)):
            w.writerow([k, repr(float(coords[k, 0])), repr(float(coords[k, 1])),
                        tags[k], int(correct[k])])
