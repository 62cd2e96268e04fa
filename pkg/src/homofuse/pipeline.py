"""End-to-end matching: candidates -> graph -> geodesics -> kernel -> OCSVM."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .baselines import METHODS, run_baseline
from .candidates import CandidateSet, build_candidates
from .errors import DataError, UsageError
from .evaluation import (
    Criterion,
    MatchEntry,
    MatchReport,
    evaluate_entries,
    rank_entries,
    select_per_feature,
)
from .feature_io import FeatureSet, SceneGroundTruth
from .geodesic import build_graph, geodesic_all_pairs
from .geometry import reprojection_matrix
from .ocsvm import FORMULATIONS, OcsvmSolution, auto_sigma, build_kernel, solve_ocsvm


@dataclass(frozen=True)
class PipelineConfig:
    r: int = 5
    k: int = 8
    nu: float = 0.5
    co: float = 1.0
    sigma: str | float = "auto"
    geodesic: str = "capped"
    max_updates: int = 200
    formulation: str = "scholkopf"
    criterion: str = "pixel"
    tolerance: float | None = None
    overlap_threshold: float = 0.5
    distance: str = "geodesic"
    descriptors: tuple[str, ...] | None = None
    baseline: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "formulation", self.formulation.replace("-", "_"))
        if isinstance(self.descriptors, str):
            names = tuple(n for n in self.descriptors.split("+") if n)
            object.__setattr__(self, "descriptors", names or None)
        elif self.descriptors is not None:
            object.__setattr__(self, "descriptors", tuple(self.descriptors))
        if isinstance(self.sigma, str) and self.sigma != "auto":
            try:
                object.__setattr__(self, "sigma", float(self.sigma))
            except ValueError:
                raise UsageError(f"sigma must be 'auto' or a number, got {self.sigma!r}") from None
        if self.baseline in ("", "none"):
            object.__setattr__(self, "baseline", None)
        self.validate()

    def validate(self):
        if self.r < 1:
            raise UsageError("r must be >= 1")
        if self.k < 1:
            raise UsageError("k must be >= 1")
        if not 0 < self.nu <= 1:
            raise UsageError("nu must be in (0, 1]")
        if not self.co > 0:
            raise UsageError("co must be positive")
        if self.sigma != "auto" and not self.sigma > 0:
            raise UsageError("sigma must be positive")
        if self.geodesic not in ("exact", "capped"):
            raise UsageError(f"unknown geodesic mode {self.geodesic!r}")
        if self.max_updates < 1:
            raise UsageError("max_updates must be >= 1")
        if self.formulation not in FORMULATIONS:
            raise UsageError(f"unknown formulation {self.formulation!r}")
        if self.criterion not in ("pixel", "overlap"):
            raise UsageError(f"unknown criterion {self.criterion!r}")
        if self.tolerance is not None and not self.tolerance >= 0:
            raise UsageError("tolerance must be >= 0")
        if self.distance not in ("geodesic", "reprojection"):
            raise UsageError(f"unknown distance {self.distance!r}")
        if self.baseline is not None and self.baseline not in METHODS:
            raise UsageError(f"unknown baseline {self.baseline!r}")

    @classmethod
    def from_mapping(cls, values: dict) -> "PipelineConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in values.items():
            key = key.replace("-", "_")
            if key not in known:
                raise UsageError(f"unknown config key {key!r}")
            kwargs[key] = value
        for key in ("r", "k", "max_updates"):
            if key in kwargs:
                kwargs[key] = int(kwargs[key])
        for key in ("nu", "co", "tolerance", "overlap_threshold"):
            if kwargs.get(key) is not None:
                kwargs[key] = float(kwargs[key])
        return cls(**kwargs)

    def updated(self, **changes) -> "PipelineConfig":
        return replace(self, **changes)

    def criterion_obj(self) -> Criterion:
        return Criterion(self.criterion, self.tolerance, self.overlap_threshold)

    def to_json(self) -> str:
        d = asdict(self)
        if d["descriptors"] is not None:
            d["descriptors"] = list(d["descriptors"])
        return json.dumps(d, sort_keys=True)


@dataclass(eq=False)
class MatchResult:
    config: PipelineConfig
    candidates: CandidateSet
    entries: list[MatchEntry]
    scores: np.ndarray
    distances: np.ndarray | None = None
    sigma: float | None = None
    solution: OcsvmSolution | None = None
    stats: dict = field(default_factory=dict)

    def header(self) -> list[str]:
        lines = [f"config {self.config.to_json()}"]
        counts = self.candidates.source_counts()
        lines.append("candidates " + " ".join(f"{k}={v}" for k, v in counts.items())
                     + f" total={len(self.candidates)}")
        sel: dict[str, int] = {}
        for e in self.entries:
            for name in e.tag.split("+"):
                sel[name] = sel.get(name, 0) + 1
        n = max(1, len(self.entries))
        lines.append("selected " + " ".join(f"{k}={v / n:.6f}" for k, v in sorted(sel.items()))
                     + f" total={len(self.entries)}")
        if self.sigma is not None:
            lines.append(f"sigma {self.sigma!r}")
        return lines


def distance_matrix(cands: CandidateSet, config: PipelineConfig) -> np.ndarray:
    if config.distance == "reprojection":
        return reprojection_matrix(cands.xp, cands.xq, cands.homographies)
    graph = build_graph(cands, config.k)
    return geodesic_all_pairs(graph, config.geodesic, config.max_updates)


def score_candidates(cands: CandidateSet, config: PipelineConfig):
    """OCSVM score for every candidate; returns ``(scores, d, sigma, solution)``."""
    n = len(cands)
    if n == 0:
        raise DataError("no candidates")
    if n == 1:
        sol = solve_ocsvm(np.ones((1, 1)), config.formulation, config.co, config.nu)
        return sol.scores, np.zeros((1, 1)), None, sol
    d = distance_matrix(cands, config)
    sigma = auto_sigma(d) if config.sigma == "auto" else float(config.sigma)
    k = build_kernel(d, sigma)
    sol = solve_ocsvm(k, config.formulation, config.co, config.nu)
    return sol.scores, d, sigma, sol


def _restrict(fs: FeatureSet, config: PipelineConfig) -> FeatureSet:
    return fs if config.descriptors is None else fs.subset(config.descriptors)


def run_match(fp: FeatureSet, fq: FeatureSet, config: PipelineConfig = PipelineConfig()) -> MatchResult:
    """Run the descriptor-fusion pipeline (or ``config.baseline``)."""
    fp, fq = _restrict(fp, config), _restrict(fq, config)
    if len(fq) == 0 or len(fp) == 0:
        raise DataError("no candidates")
    needs_cands = config.baseline in (None, "sm")
    cands = build_candidates(fp, fq, config.r) if needs_cands else None
    if cands is not None and len(cands) == 0:
        raise DataError("no candidates")
    if config.baseline is not None:
        res = run_baseline(config.baseline, fp, fq, cands)
        if cands is None:
            cands = build_candidates(fp, fq, 1)
        return MatchResult(config, cands, res.entries, np.array([e.score for e in res.entries]))
    scores, d, sigma, sol = score_candidates(cands, config)
    picked = select_per_feature(cands, scores)
    entries = rank_entries(cands, picked, scores)
    return MatchResult(config, cands, entries, scores, d, sigma, sol)


def evaluate_match(result: MatchResult, gt: SceneGroundTruth, total: int | None = None) -> MatchReport:
    fp, fq = result.candidates.features_p, result.candidates.features_q
    return evaluate_entries(result.entries, fp, fq, gt, result.config.criterion_obj(), total)
