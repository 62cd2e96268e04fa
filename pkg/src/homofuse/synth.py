"""Synthetic two-image scenes with planted ground truth.

Each object is a planar patch carried from image P to image Q by its own
affine map, plus a smooth displacement field (three low-frequency
sinusoids, magnitude at most ``smoothness`` pixels). Descriptor channels
are informative only on chosen objects: there, p and q share a prototype
vector and differ by noise; elsewhere the two vectors are unrelated.

All randomness comes from one PCG64 stream seeded by ``SceneSpec.seed``
and consumed in a fixed order, so a given spec always yields the same
scene on any platform.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .feature_io import (
    BACKGROUND,
    FeatureSet,
    SceneGroundTruth,
    save_feature_set,
    save_ground_truth,
)
from .geometry import check_affine


@dataclass
class ObjectSpec:
    feature_count: int
    transform: np.ndarray
    smoothness: float = 0.0
    region: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        t = np.asarray(self.transform, dtype=float)
        if t.shape == (2, 3):
            t = np.vstack([t, [0.0, 0.0, 1.0]])
        self.transform = t


@dataclass
class DescriptorSpec:
    name: str
    dim: int
    informative_on: frozenset[int] = frozenset()
    noise_sigma: float = 0.1

    def __post_init__(self):
        self.informative_on = frozenset(int(i) for i in self.informative_on)


@dataclass
class SceneSpec:
    """Scene recipe. Objects get ids 1, 2, ... in list order."""

    seed: int
    objects: list[ObjectSpec]
    descriptors: list[DescriptorSpec]
    background_count: int = 0
    image_extent: tuple[float, float] = (640.0, 480.0)
    scale_range: tuple[float, float] = (4.0, 10.0)

    def validate(self):
        if not self.objects:
            raise DataError("scene needs at least one object")
        if not self.descriptors:
            raise DataError("scene needs at least one descriptor")
        if self.background_count < 0:
            raise DataError("background_count must be >= 0")
        w, h = self.image_extent
        if not (w > 0 and h > 0):
            raise DataError("image_extent must be positive")
        for k, obj in enumerate(self.objects, start=1):
            if obj.feature_count < 0:
                raise DataError(f"object {k}: feature_count must be >= 0")
            if obj.smoothness < 0:
                raise DataError(f"object {k}: smoothness must be >= 0")
            try:
                check_affine(obj.transform, f"object {k} transform")
            except DataError as exc:
                raise DataError(str(exc)) from None
        names = [d.name for d in self.descriptors]
        if len(set(names)) != len(names):
            raise DataError("descriptor names must be unique")
        for d in self.descriptors:
            if d.dim < 1:
                raise DataError(f"descriptor '{d.name}': dim must be >= 1")
            if d.noise_sigma < 0:
                raise DataError(f"descriptor '{d.name}': noise_sigma must be >= 0")
            bad = [i for i in d.informative_on if not 1 <= i <= len(self.objects)]
            if bad:
                raise DataError(f"descriptor '{d.name}': unknown object id {bad[0]}")

    @classmethod
    def from_dict(cls, raw: dict) -> "SceneSpec":
        try:
            return cls(
                seed=int(raw.get("seed", 0)),
                objects=[ObjectSpec(
                    int(o["feature_count"]), np.asarray(o["transform"], dtype=float),
                    float(o.get("smoothness", 0.0)),
                    tuple(o["region"]) if o.get("region") is not None else None,
                ) for o in raw["objects"]],
                descriptors=[DescriptorSpec(
                    str(d["name"]), int(d["dim"]), frozenset(d.get("informative_on", ())),
                    float(d.get("noise_sigma", 0.1)),
                ) for d in raw["descriptors"]],
                background_count=int(raw.get("background_count", 0)),
                image_extent=tuple(float(v) for v in raw.get("image_extent", (640, 480))),
                scale_range=tuple(float(v) for v in raw.get("scale_range", (4.0, 10.0))),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad scene spec: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "image_extent": list(self.image_extent),
            "background_count": self.background_count,
            "scale_range": list(self.scale_range),
            "objects": [{
                "feature_count": o.feature_count,
                "transform": o.transform[:2].tolist(),
                "smoothness": o.smoothness,
                "region": list(o.region) if o.region is not None else None,
            } for o in self.objects],
            "descriptors": [{
                "name": d.name, "dim": d.dim,
                "informative_on": sorted(d.informative_on),
                "noise_sigma": d.noise_sigma,
            } for d in self.descriptors],
        }

    def with_seed(self, seed: int) -> "SceneSpec":
        return SceneSpec.from_dict({**self.to_dict(), "seed": int(seed)})


def load_scene_spec(path) -> SceneSpec:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: {exc}") from None
    return SceneSpec.from_dict(raw)


@dataclass
class Scene:
    features_p: FeatureSet
    features_q: FeatureSet
    ground_truth: SceneGroundTruth
    true_pairs: list[tuple[int, int]] = field(default_factory=list)


def _unit(rng, n, dim):
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _shapes(rng, n, lo, hi):
    scale = rng.uniform(lo, hi, n)
    aniso = rng.uniform(0.6, 1.0, n)
    theta = rng.uniform(0.0, 2 * np.pi, n)
    c, s = np.cos(theta), np.sin(theta)
    rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    return rot * (scale[:, None, None] * np.stack([np.ones(n), aniso], -1)[:, None, :])


class DisplacementField:
    """Sum of three random planar sinusoids, ``|D(x)| <= 1`` everywhere."""

    def __init__(self, rng, extent):
        size = float(max(extent))
        direction = _unit(rng, 3, 2)
        self.amplitude = _unit(rng, 3, 2) / 3.0
        wavelength = rng.uniform(0.75, 1.5, 3) * size
        self.omega = direction * (2 * np.pi / wavelength)[:, None]
        self.phase = rng.uniform(0.0, 2 * np.pi, 3)

    def __call__(self, x):
        arg = np.asarray(x) @ self.omega.T + self.phase
        return np.sin(arg) @ self.amplitude


def _default_region(k, count, extent):
    w, h = extent
    x0, x1 = k * w / count, (k + 1) * w / count
    mx, my = 0.05 * (x1 - x0), 0.05 * h
    return (x0 + mx, my, x1 - mx, h - my)


def generate_scene(spec: SceneSpec) -> Scene:
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    lo, hi = spec.scale_range
    w, h = spec.image_extent

    p_centers, p_shapes, q_centers, q_shapes, owner = [], [], [], [], []
    for k, obj in enumerate(spec.objects):
        n = obj.feature_count
        x0, y0, x1, y1 = obj.region or _default_region(k, len(spec.objects), spec.image_extent)
        field_ = DisplacementField(rng, spec.image_extent)
        xp = np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])
        ap = _shapes(rng, n, lo, hi)
        lin, t = obj.transform[:2, :2], obj.transform[:2, 2]
        xq = xp @ lin.T + t + obj.smoothness * field_(xp)
        p_centers.append(xp)
        p_shapes.append(ap)
        q_centers.append(xq)
        q_shapes.append(lin @ ap)
        owner.append(np.full(n, k + 1))

    nb = spec.background_count
    bg_p = np.column_stack([rng.uniform(0, w, nb), rng.uniform(0, h, nb)])
    bg_ps = _shapes(rng, nb, lo, hi)
    bg_q = np.column_stack([rng.uniform(0, w, nb), rng.uniform(0, h, nb)])
    bg_qs = _shapes(rng, nb, lo, hi)

    n_obj = int(sum(o.feature_count for o in spec.objects))
    owner = np.concatenate(owner + [np.zeros(0, dtype=int)]).astype(int)
    centers_p = np.vstack(p_centers + [bg_p])
    shapes_p = np.concatenate(p_shapes + [bg_ps])
    centers_q = np.vstack(q_centers + [bg_q])
    shapes_q = np.concatenate(q_shapes + [bg_qs])
    n_p, n_q = n_obj + nb, n_obj + nb

    desc_p, desc_q = {}, {}
    for d in spec.descriptors:
        informative = np.isin(owner, sorted(d.informative_on))
        proto = _unit(rng, n_obj, d.dim)
        other = _unit(rng, n_obj, d.dim)
        vp = np.vstack([proto, _unit(rng, nb, d.dim)])
        vq = np.vstack([np.where(informative[:, None], proto, other), _unit(rng, nb, d.dim)])
        vp = vp + d.noise_sigma * rng.standard_normal(vp.shape)
        vq = vq + d.noise_sigma * rng.standard_normal(vq.shape)
        desc_p[d.name] = vp
        desc_q[d.name] = vq

    # shuffle Q so file order carries no hint of the true match
    perm = rng.permutation(n_q)
    p_ids = np.arange(n_p)
    q_ids = n_p + np.arange(n_q)
    fp = FeatureSet(p_ids, centers_p, shapes_p, desc_p)
    fq = FeatureSet(q_ids, centers_q[perm], shapes_q[perm],
                    {k: v[perm] for k, v in desc_q.items()})

    inv = np.empty(n_q, dtype=np.int64)
    inv[perm] = np.arange(n_q)
    assignment = {}
    for i in range(n_p):
        assignment[int(p_ids[i])] = int(owner[i]) if i < n_obj else BACKGROUND
    for i in range(n_q):
        assignment[int(q_ids[inv[i]])] = int(owner[i]) if i < n_obj else BACKGROUND
    transforms = {k + 1: o.transform.copy() for k, o in enumerate(spec.objects)}
    gt = SceneGroundTruth(assignment, transforms)
    pairs = [(int(p_ids[i]), int(q_ids[inv[i]])) for i in range(n_obj)]
    return Scene(fp, fq, gt, pairs)


def write_scene(scene: Scene, prefix) -> dict[str, Path]:
    prefix = str(prefix)
    paths = {
        "p": Path(prefix + "_p.feat"),
        "q": Path(prefix + "_q.feat"),
        "gt": Path(prefix + ".gt"),
    }
    for p in paths.values():
        p.parent.mkdir(parents=True, exist_ok=True)
    save_feature_set(paths["p"], scene.features_p)
    save_feature_set(paths["q"], scene.features_q)
    save_ground_truth(paths["gt"], scene.ground_truth)
    return paths


def similarity(scale, angle_deg, tx, ty) -> np.ndarray:
    a = np.deg2rad(angle_deg)
    c, s = scale * np.cos(a), scale * np.sin(a)
    return np.array([[c, -s, tx], [s, c, ty], [0.0, 0.0, 1.0]])


def complementary_spec(seed: int = 0, per_object: int = 40, background: int = 40,
                       noise_sigma: float = 0.1, smoothness: float = 0.0,
                       dim: int = 16) -> SceneSpec:
    """Two objects; descriptor A is informative on object 1 only, B on object 2 only."""
    return SceneSpec(
        seed=seed,
        objects=[
            ObjectSpec(per_object, similarity(1.1, 15.0, 60.0, 20.0), smoothness),
            ObjectSpec(per_object, similarity(0.9, -20.0, -40.0, 90.0), smoothness),
        ],
        descriptors=[
            DescriptorSpec("A", dim, frozenset({1}), noise_sigma),
            DescriptorSpec("B", dim, frozenset({2}), noise_sigma),
        ],
        background_count=background,
    )
