"""Candidate correspondences from per-descriptor r-nearest-neighbour search."""

from __future__ import annotations

from collections.abc import Callable, Mapping

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError, UsageError
from .feature_io import FeatureSet
from .geometry import Correspondence, batch_homographies

Metric = Callable[[np.ndarray, np.ndarray], np.ndarray]


def euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return cdist(a, b, "euclidean")


def nearest_neighbors(dist: np.ndarray, q_ids: np.ndarray, r: int):
    """Column indices of the ``r`` smallest entries per row.

    Ties are broken by ascending ``q_ids``. Returns ``(index, distance)``
    arrays of shape ``(rows, min(r, cols))``.
    """
    by_id = np.argsort(q_ids, kind="stable")
    ranked = np.argsort(dist[:, by_id], axis=1, kind="stable")[:, :r]
    idx = by_id[ranked]
    return idx, np.take_along_axis(dist, idx, axis=1)


class CandidateSet:
    """The reduced set of candidate correspondences, sorted by (p, q) index.

    Columnar storage: ``p_index``, ``q_index`` and ``homographies`` are
    aligned arrays of length ``n``; ``sources[k]`` is the sorted tuple of
    descriptor names that proposed candidate ``k`` and ``distances[k]`` the
    descriptor distance under each of them.
    """

    def __init__(self, features_p: FeatureSet, features_q: FeatureSet,
                 p_index, q_index, sources, distances, homographies=None):
        self.features_p = features_p
        self.features_q = features_q
        self.p_index = np.asarray(p_index, dtype=np.int64)
        self.q_index = np.asarray(q_index, dtype=np.int64)
        self.sources = list(sources)
        self.distances = list(distances)
        if homographies is None:
            homographies = batch_homographies(
                features_p.centers[self.p_index], features_p.shapes[self.p_index],
                features_q.centers[self.q_index], features_q.shapes[self.q_index],
            )
        self.homographies = homographies

    def __len__(self):
        return int(self.p_index.shape[0])

    @property
    def n(self) -> int:
        return len(self)

    @property
    def xp(self) -> np.ndarray:
        return self.features_p.centers[self.p_index]

    @property
    def xq(self) -> np.ndarray:
        return self.features_q.centers[self.q_index]

    @property
    def p_ids(self) -> np.ndarray:
        return self.features_p.ids[self.p_index]

    @property
    def q_ids(self) -> np.ndarray:
        return self.features_q.ids[self.q_index]

    def tags(self) -> list[str]:
        return ["+".join(s) for s in self.sources]

    def correspondence(self, k: int) -> Correspondence:
        return Correspondence(
            int(self.p_index[k]), int(self.q_index[k]), self.homographies[k],
            self.sources[k], dict(self.distances[k]),
        )

    @property
    def flat(self) -> list[Correspondence]:
        return [self.correspondence(k) for k in range(len(self))]

    def groups(self) -> dict[int, np.ndarray]:
        """p-feature index -> positions of its candidates in the flat list."""
        out: dict[int, np.ndarray] = {}
        if not len(self):
            return out
        starts = np.flatnonzero(np.r_[True, self.p_index[1:] != self.p_index[:-1]])
        ends = np.r_[starts[1:], len(self)]
        for s, e in zip(starts, ends):
            out[int(self.p_index[s])] = np.arange(s, e)
        return out

    @property
    def per_feature(self) -> dict[int, list[Correspondence]]:
        ids = self.features_p.ids
        return {
            int(ids[p]): [self.correspondence(int(k)) for k in pos]
            for p, pos in self.groups().items()
        }

    def pair_set(self) -> set[tuple[int, int]]:
        return set(zip(self.p_index.tolist(), self.q_index.tolist()))

    def source_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for src in self.sources:
            for name in src:
                counts[name] = counts.get(name, 0) + 1
        return dict(sorted(counts.items()))


def build_candidates(features_p: FeatureSet, features_q: FeatureSet, r: int = 5,
                     metrics: Mapping[str, Metric] | None = None) -> CandidateSet:
    """Union over descriptors of each p-feature's ``r`` nearest q-features.

    A pair proposed by several descriptors is kept once, tagged with every
    descriptor that proposed it.
    """
    if r < 1:
        raise UsageError("r must be >= 1")
    names = features_p.descriptor_names
    if sorted(names) != sorted(features_q.descriptor_names):
        raise DataError(
            "descriptor sets differ between images: "
            f"{sorted(names)} vs {sorted(features_q.descriptor_names)}"
        )
    for name in names:
        dp, dq = features_p.descriptors[name].shape[1], features_q.descriptors[name].shape[1]
        if dp != dq:
            raise DataError(f"descriptor '{name}' has dimension {dp} vs {dq}")
    metrics = dict(metrics or {})
    merged: dict[tuple[int, int], dict[str, float]] = {}
    for name in sorted(names):
        metric = metrics.get(name, euclidean)
        dist = metric(features_p.descriptors[name], features_q.descriptors[name])
        idx, d = nearest_neighbors(dist, features_q.ids, r)
        for p in range(idx.shape[0]):
            for q, dv in zip(idx[p].tolist(), d[p].tolist()):
                merged.setdefault((p, q), {})[name] = dv
    keys = sorted(merged)
    p_index = [k[0] for k in keys]
    q_index = [k[1] for k in keys]
    sources = [tuple(sorted(merged[k])) for k in keys]
    distances = [merged[k] for k in keys]
    return CandidateSet(features_p, features_q, p_index, q_index, sources, distances)
