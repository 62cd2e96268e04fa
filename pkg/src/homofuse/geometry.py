"""Affine frame algebra and the reprojection error between correspondences.

A correspondence (p, q) is represented by the affine map carrying the
p-frame onto the q-frame, ``H = T(q) @ inv(T(p))``. Two correspondences
are compared by swapping their homographies and measuring how far each
endpoint lands from where it should (a symmetric four-term average).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateFrameError
from .feature_io import DET_EPS, FeatureFrame, FeatureSet

__all__ = [
    "Correspondence",
    "check_affine",
    "correspondence_homography",
    "frame_transform",
    "invert_affine",
    "projection_error",
    "rho",
    "reprojection_error",
    "reprojection_matrix",
    "reprojection_pairs",
]


def check_affine(h, name="homography"):
    """Validate a 3x3 affine matrix and return it as a float array."""
    h = np.asarray(h, dtype=float)
    if h.shape != (3, 3):
        raise DataError(f"{name}: expected 3x3 matrix, got shape {h.shape}")
    if np.max(np.abs(h[2] - (0.0, 0.0, 1.0))) > 1e-12:
        raise DataError(f"{name}: bottom row must be (0, 0, 1)")
    if not abs(np.linalg.det(h[:2, :2])) > DET_EPS:
        raise DegenerateFrameError(f"{name}: singular linear part")
    return h


def frame_transform(f: FeatureFrame) -> np.ndarray:
    t = np.eye(3)
    t[:2, :2] = f.shape
    t[:2, 2] = f.center
    return t


def invert_affine(h: np.ndarray) -> np.ndarray:
    """Closed-form inverse that keeps the bottom row exactly (0, 0, 1)."""
    a = h[..., :2, :2]
    det = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    if np.any(~(np.abs(det) > DET_EPS)):
        raise DegenerateFrameError("cannot invert a degenerate affine frame")
    ai = np.empty_like(a)
    ai[..., 0, 0] = a[..., 1, 1] / det
    ai[..., 1, 1] = a[..., 0, 0] / det
    ai[..., 0, 1] = -a[..., 0, 1] / det
    ai[..., 1, 0] = -a[..., 1, 0] / det
    out = np.zeros(h.shape)
    out[..., :2, :2] = ai
    out[..., :2, 2] = -np.einsum("...ij,...j->...i", ai, h[..., :2, 2])
    out[..., 2, 2] = 1.0
    return out


def correspondence_homography(fp: FeatureFrame, fq: FeatureFrame) -> np.ndarray:
    if not abs(np.linalg.det(fp.shape)) > DET_EPS:
        raise DegenerateFrameError(f"feature {fp.id}: degenerate frame")
    return frame_transform(fq) @ invert_affine(frame_transform(fp))


def batch_homographies(cp, sp, cq, sq):
    """Homographies for aligned arrays of p/q centers ``(n, 2)`` and shapes ``(n, 2, 2)``."""
    n = len(cp)
    tp = np.zeros((n, 3, 3))
    tp[:, :2, :2] = sp
    tp[:, :2, 2] = cp
    tp[:, 2, 2] = 1.0
    tq = tp.copy()
    tq[:, :2, :2] = sq
    tq[:, :2, 2] = cq
    h = tq @ invert_affine(tp)
    h[:, 2] = (0.0, 0.0, 1.0)
    return h


def rho(v) -> np.ndarray:
    """Dehomogenize a 3-vector."""
    v = np.asarray(v, dtype=float)
    if not abs(v[2]) > 1e-12:
        raise DegenerateFrameError("homogeneous coordinate is zero")
    return v[:2] / v[2]


def projection_error(xp, xq, h) -> float:
    """Distance from ``xq`` to the image of ``xp`` under ``h``."""
    mapped = rho(np.asarray(h) @ np.array([xp[0], xp[1], 1.0]))
    return float(np.hypot(*(np.asarray(xq, dtype=float) - mapped)))


@dataclass(eq=False)
class Correspondence:
    p_index: int
    q_index: int
    homography: np.ndarray
    source_descriptors: tuple[str, ...]
    match_distance: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.source_descriptors:
            raise DataError("correspondence without a source descriptor")

    @property
    def tag(self) -> str:
        return "+".join(self.source_descriptors)


def _center(frames, idx):
    if isinstance(frames, FeatureSet):
        return frames.centers[idx]
    return np.asarray(frames[idx].center, dtype=float)


def reprojection_error(c: Correspondence, c2: Correspondence, frames_p, frames_q) -> float:
    h, h2 = c.homography, c2.homography
    xp, xq = _center(frames_p, c.p_index), _center(frames_q, c.q_index)
    xp2, xq2 = _center(frames_p, c2.p_index), _center(frames_q, c2.q_index)
    a = projection_error(xp, xq, h2) + projection_error(xq, xp, invert_affine(h2))
    b = projection_error(xp2, xq2, h) + projection_error(xq2, xp2, invert_affine(h))
    return 0.25 * (a + b)


def _one_sided(xp, xq, a, t, ai, ti):
    """Row-i, column-j entries ``e[i, j] = |xq_i - H_j xp_i| + |xp_i - H_j^-1 xq_i|``."""
    fwd = xq[:, None, :] - np.einsum("jab,ib->ija", a, xp) - t[None, :, :]
    bwd = xp[:, None, :] - np.einsum("jab,ib->ija", ai, xq) - ti[None, :, :]
    return np.hypot(fwd[..., 0], fwd[..., 1]) + np.hypot(bwd[..., 0], bwd[..., 1])


def reprojection_matrix(xp, xq, h, block=512) -> np.ndarray:
    """Dense symmetric matrix of reprojection errors.

    ``xp`` and ``xq`` are ``(n, 2)`` endpoint centers, ``h`` the ``(n, 3, 3)``
    affine homographies. Memory is bounded by processing ``block`` rows at a
    time.
    """
    xp = np.asarray(xp, dtype=float)
    xq = np.asarray(xq, dtype=float)
    hi = invert_affine(h)
    a, t = h[:, :2, :2], h[:, :2, 2]
    ai, ti = hi[:, :2, :2], hi[:, :2, 2]
    n = len(xp)
    e = np.empty((n, n))
    for s in range(0, n, block):
        sl = slice(s, min(n, s + block))
        e[sl] = _one_sided(xp[sl], xq[sl], a, t, ai, ti)
    d = 0.25 * (e + e.T)
    np.fill_diagonal(d, 0.0)
    return d


def reprojection_pairs(xp, xq, h, i, j) -> np.ndarray:
    """Reprojection error for the index pairs ``(i[k], j[k])``.

    Symmetric bit for bit: swapping ``i`` and ``j`` swaps two addends.
    """
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    hi = invert_affine(h)

    def half(u, v):
        # error of correspondence u under the homography of v
        fwd = xq[u] - np.einsum("kab,kb->ka", h[v, :2, :2], xp[u]) - h[v, :2, 2]
        bwd = xp[u] - np.einsum("kab,kb->ka", hi[v, :2, :2], xq[u]) - hi[v, :2, 2]
        return np.hypot(fwd[:, 0], fwd[:, 1]) + np.hypot(bwd[:, 0], bwd[:, 1])

    return 0.25 * (half(i, j) + half(j, i))
