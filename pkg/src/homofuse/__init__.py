"""Descriptor fusion for feature matching in the affine homography space."""

from .baselines import baseline_cat, baseline_ranking, baseline_ratio, baseline_sm
from .candidates import CandidateSet, build_candidates
from .errors import ConvergenceError, DataError, HomofuseError, UsageError
from .evaluation import (
    MatchReport,
    label_correct_overlap,
    label_correct_pixel,
    mds_embed,
    precision_recall,
    select_per_feature,
)
from .feature_io import (
    FeatureFrame,
    FeatureSet,
    SceneGroundTruth,
    load_feature_set,
    load_ground_truth,
    save_feature_set,
    save_ground_truth,
)
from .geodesic import build_graph, geodesic_all_pairs
from .geometry import (
    correspondence_homography,
    frame_transform,
    projection_error,
    reprojection_error,
)
from .ocsvm import build_kernel, sigma_heuristic, solve_ocsvm
from .pipeline import PipelineConfig, evaluate_match, run_match
from .synth import SceneSpec, generate_scene

__version__ = "0.1.0"
