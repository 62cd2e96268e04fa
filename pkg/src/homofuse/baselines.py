"""Reference fusion baselines (CAT, Ranking, Ratio) and spectral matching."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .candidates import CandidateSet, euclidean, nearest_neighbors
from .errors import ConvergenceError, DataError, UsageError
from .evaluation import MatchEntry, rank_entries, select_per_feature
from .feature_io import FeatureSet
from .geometry import reprojection_matrix
from .ocsvm import auto_sigma

METHODS = ("cat", "ranking", "ratio", "sm")

log = logging.getLogger(__name__)


@dataclass
class BaselineResult:
    method: str
    entries: list[MatchEntry]


def _check_shared(fp: FeatureSet, fq: FeatureSet) -> list[str]:
    names = sorted(fp.descriptor_names)
    if names != sorted(fq.descriptor_names):
        raise DataError("descriptor sets differ between images")
    if not names:
        raise DataError("no descriptors")
    return names


def _entries(fp, fq, q_index, scores, tags) -> list[MatchEntry]:
    order = np.lexsort((fp.ids, -np.asarray(scores)))
    return [
        MatchEntry(int(p), int(q_index[p]), int(fp.ids[p]), int(fq.ids[q_index[p]]),
                   float(scores[p]), tags[p])
        for p in order
    ]


def baseline_cat(fp: FeatureSet, fq: FeatureSet) -> BaselineResult:
    """Nearest neighbour on the concatenation of std-normalised descriptors.

    Each channel is divided by the standard deviation of its P x Q pairwise
    distances. Score is the negated concatenated distance.
    """
    names = _check_shared(fp, fq)
    parts_p, parts_q, used = [], [], []
    for name in names:
        s = float(np.std(euclidean(fp.descriptors[name], fq.descriptors[name])))
        if not s > 0:
            warnings.warn(f"CAT: descriptor '{name}' has zero distance spread; dropped",
                          RuntimeWarning, stacklevel=2)
            continue
        parts_p.append(fp.descriptors[name] / s)
        parts_q.append(fq.descriptors[name] / s)
        used.append(name)
    if not used:
        raise DataError("CAT: every descriptor channel was dropped")
    dist = euclidean(np.hstack(parts_p), np.hstack(parts_q))
    idx, d = nearest_neighbors(dist, fq.ids, 1)
    tag = "+".join(used)
    return BaselineResult("cat", _entries(fp, fq, idx[:, 0], -d[:, 0], [tag] * len(fp)))


def baseline_ranking(fp: FeatureSet, fq: FeatureSet) -> BaselineResult:
    """Each p-feature uses the descriptor under which its NN distance ranks best.

    Ranks run from 1 (smallest NN distance among all p-features); ties in
    distance go to the lower p index, ties in rank to the descriptor name
    that sorts first. Score is the negated best rank.
    """
    names = _check_shared(fp, fq)
    n = len(fp)
    best_rank = np.full(n, np.inf)
    best_q = np.zeros(n, dtype=np.int64)
    best_name = [""] * n
    for name in names:
        idx, d = nearest_neighbors(euclidean(fp.descriptors[name], fq.descriptors[name]), fq.ids, 1)
        ranks = np.empty(n)
        ranks[np.argsort(d[:, 0], kind="stable")] = np.arange(1, n + 1)
        better = ranks < best_rank
        best_rank[better] = ranks[better]
        best_q[better] = idx[better, 0]
        for p in np.flatnonzero(better):
            best_name[p] = name
    return BaselineResult("ranking", _entries(fp, fq, best_q, -best_rank, best_name))


def baseline_ratio(fp: FeatureSet, fq: FeatureSet) -> BaselineResult:
    """Each p-feature uses the descriptor with the smallest first/second NN
    distance ratio. Score is ``1 - ratio``; a zero second distance (or a
    single q-feature) counts as ratio 1."""
    names = _check_shared(fp, fq)
    n = len(fp)
    best_ratio = np.full(n, np.inf)
    best_q = np.zeros(n, dtype=np.int64)
    best_name = [""] * n
    for name in names:
        idx, d = nearest_neighbors(euclidean(fp.descriptors[name], fq.descriptors[name]), fq.ids, 2)
        if d.shape[1] < 2:
            ratio = np.ones(n)
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = np.where(d[:, 1] > 0, d[:, 0] / d[:, 1], 1.0)
        better = ratio < best_ratio
        best_ratio[better] = ratio[better]
        best_q[better] = idx[better, 0]
        for p in np.flatnonzero(better):
            best_name[p] = name
    return BaselineResult("ratio", _entries(fp, fq, best_q, 1.0 - best_ratio, best_name))


def dominant_eigenvector(a: np.ndarray, max_iter: int = 1000, tol: float = 1e-10) -> np.ndarray:
    """Non-negative unit eigenvector of the largest eigenvalue of a
    symmetric non-negative matrix, by power iteration.

    Iterates on ``a + I``: same eigenvectors, but the spectrum is shifted
    away from ``-lambda_max`` so the iteration cannot oscillate. Stops when
    the largest entry change drops below ``tol`` or after ``max_iter``
    steps, whichever comes first; with a near-degenerate top eigenvalue the
    capped iterate is returned as is.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    x = np.full(n, 1.0 / np.sqrt(n))
    delta = np.inf
    for it in range(max_iter):
        y = a @ x + x
        norm = np.linalg.norm(y)
        if not (np.isfinite(norm) and norm > 0):
            raise ConvergenceError("power iteration degenerated", iterations=it)
        y /= norm
        delta = np.abs(y - x).max()
        x = y
        if delta < tol:
            break
    else:
        log.debug("power iteration stopped at %d iterations, delta %.3g", max_iter, delta)
    return np.abs(x)


def sm_scores(cands: CandidateSet, max_iter: int = 1000, tol: float = 1e-10) -> np.ndarray:
    """Spectral-matching score of every candidate.

    Affinity ``exp(-d^2 / sigma^2)`` over reprojection errors, zero diagonal,
    sigma by the same nearest-neighbour heuristic as the main pipeline.
    """
    n = len(cands)
    if n == 0:
        raise DataError("no candidates")
    if n == 1:
        return np.ones(1)
    d = reprojection_matrix(cands.xp, cands.xq, cands.homographies)
    sigma = auto_sigma(d)
    a = np.exp(-np.square(d / sigma))
    np.fill_diagonal(a, 0.0)
    return dominant_eigenvector(a, max_iter, tol)


def baseline_sm(cands: CandidateSet) -> BaselineResult:
    scores = sm_scores(cands)
    picked = select_per_feature(cands, scores)
    return BaselineResult("sm", rank_entries(cands, picked, scores))


def run_baseline(method: str, fp: FeatureSet, fq: FeatureSet, cands: CandidateSet | None = None):
    if method == "cat":
        return baseline_cat(fp, fq)
    if method == "ranking":
        return baseline_ranking(fp, fq)
    if method == "ratio":
        return baseline_ratio(fp, fq)
    if method == "sm":
        if cands is None:
            raise UsageError("SM needs a candidate set")
        return baseline_sm(cands)
    raise UsageError(f"unknown baseline {method!r}")
