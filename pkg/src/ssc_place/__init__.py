"""Semantic Scan Context place recognition for labeled LiDAR scans."""
from .estimator import SemanticScanContext
from .evaluation import EvalReport, LabeledPair, evaluate, sample_pairs
from .global_sicp import RelativePose, compute_yaw, estimate_relative_pose, semantic_icp
from .pipeline import AblationConfig, MatchResult, match_pair
from .point_model import LabeledCloud, PriorityTable, SemanticClass, default_priority
from .projection import SicpParams, build_ring, filter_representative
from .ssc import SscDescriptor, SscParams, encode, similarity
from .synthetic import OracleTransform, SceneSpec, apply_transform, generate_scene

__all__ = [
    "AblationConfig", "EvalReport", "LabeledCloud", "LabeledPair", "MatchResult",
    "OracleTransform", "PriorityTable", "SceneSpec", "RelativePose", "SemanticClass", "SemanticScanContext", "SicpParams",
    "SscDescriptor", "SscParams", "build_ring", "compute_yaw", "default_priority", "encode",
    "estimate_relative_pose", "evaluate", "filter_representative", "match_pair",
    "sample_pairs", "semantic_icp", "similarity", "apply_transform", "generate_scene",
]
__version__ = "0.1.0"
