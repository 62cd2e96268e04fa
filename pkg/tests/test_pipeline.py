import json

import numpy as np
import pytest

from homofuse.errors import DataError, UsageError
from homofuse.feature_io import FeatureSet
from homofuse.geometry import reprojection_matrix
from homofuse.pipeline import PipelineConfig, evaluate_match, run_match
from homofuse.synth import (
    DescriptorSpec,
    ObjectSpec,
    SceneSpec,
    complementary_spec,
    generate_scene,
    similarity,
)


def test_defaults():
    cfg = PipelineConfig()
    assert (cfg.r, cfg.co, cfg.nu, cfg.max_updates) == (5, 1.0, 0.5, 200)
    assert cfg.k == 8 and cfg.geodesic == "capped" and cfg.formulation == "scholkopf"
    assert cfg.criterion_obj().tol(generate_scene(complementary_spec(0)).ground_truth) == 8.0


def test_noise_free_single_object_is_perfect():
    spec = SceneSpec(seed=4, objects=[ObjectSpec(60, similarity(1.05, 10, 20, 15))],
                     descriptors=[DescriptorSpec("A", 8, frozenset({1}), 0.0)])
    scene = generate_scene(spec)
    result = run_match(scene.features_p, scene.features_q)
    report = evaluate_match(result, scene.ground_truth)
    assert report.precision_at_full == 1.0
    assert report.precision_recall[-1][0] == 1.0
    assert report.map_value == 1.0


def test_no_candidates():
    fp = FeatureSet([0], [[0, 0]], [np.eye(2)], {"A": [[0.0]]})
    fq = FeatureSet([], np.zeros((0, 2)), np.zeros((0, 2, 2)), {"A": np.zeros((0, 1))})
    with pytest.raises(DataError, match="no candidates"):
        run_match(fp, fq)


def test_single_candidate():
    fp = FeatureSet([0], [[0, 0]], [np.eye(2)], {"A": [[0.0]]})
    fq = FeatureSet([1], [[1, 1]], [np.eye(2)], {"A": [[0.5]]})
    result = run_match(fp, fq)
    assert len(result.entries) == 1 and result.entries[0].score == 0.0


def test_reprojection_arm_uses_reprojection_matrix():
    scene = generate_scene(complementary_spec(1, per_object=15, background=10))
    result = run_match(scene.features_p, scene.features_q, PipelineConfig(distance="reprojection"))
    c = result.candidates
    np.testing.assert_array_equal(result.distances, reprojection_matrix(c.xp, c.xq, c.homographies))
    geo = run_match(scene.features_p, scene.features_q)
    assert np.isinf(geo.distances).any() or not np.array_equal(geo.distances, result.distances)


def test_one_entry_per_feature_sorted():
    scene = generate_scene(complementary_spec(2, per_object=20, background=20))
    result = run_match(scene.features_p, scene.features_q)
    ids = [e.p_id for e in result.entries]
    assert sorted(ids) == sorted(set(ids)) == list(range(len(scene.features_p)))
    scores = [e.score for e in result.entries]
    assert scores == sorted(scores, reverse=True)


def test_descriptor_restriction_and_baselines():
    scene = generate_scene(complementary_spec(3, per_object=15, background=10))
    fp, fq = scene.features_p, scene.features_q
    only_a = run_match(fp, fq, PipelineConfig(descriptors="A"))
    assert set(only_a.candidates.source_counts()) == {"A"}
    for method in ("cat", "ranking", "ratio", "sm"):
        res = run_match(fp, fq, PipelineConfig(baseline=method))
        assert len(res.entries) == len(fp)
        evaluate_match(res, scene.ground_truth)
    with pytest.raises(DataError):
        run_match(fp, fq, PipelineConfig(descriptors="A+C"))


def test_config_mapping_and_validation():
    cfg = PipelineConfig.from_mapping({"r": "3", "max-updates": 50, "formulation": "paper-eq8", "sigma": "2.5"})
    assert (cfg.r, cfg.max_updates, cfg.formulation, cfg.sigma) == (3, 50, "paper_eq8", 2.5)
    assert json.loads(cfg.to_json())["r"] == 3
    with pytest.raises(UsageError, match="unknown config key"):
        PipelineConfig.from_mapping({"gamma": 1})
    for bad in ({"nu": 0}, {"r": 0}, {"sigma": "wide"}, {"geodesic": "fast"}, {"baseline": "hv"}):
        with pytest.raises(UsageError):
            PipelineConfig.from_mapping(bad)


def test_header_echoes_config():
    scene = generate_scene(complementary_spec(0, per_object=10, background=5))
    result = run_match(scene.features_p, scene.features_q, PipelineConfig(k=5))
    header = result.header()
    assert header[0].startswith("config ") and json.loads(header[0][7:])["k"] == 5
    assert header[1].startswith("candidates A=") and "B=" in header[1]
    assert header[-1].startswith("sigma ")
