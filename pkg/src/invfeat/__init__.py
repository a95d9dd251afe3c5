"""Group-invariant random features from empirical CDFs of transformed projections."""

__version__ = "0.1.0"

from .groups import (CapacityError, GroupAction, GroupElement, block_permutation, cyclic_shift,
                     enumerate_elements, image_euclidean, sample_elements, trivial_group)
from .templates import ProjectionTable, TemplateBank, build_projection_table, make_bank
from .features import FeatureMeta, FeatureVector, compute_features, feature_dot, feature_matrix
from .kernels import (GramMatrix, asymptotic_ks, exact_haar_kernel, gram, orbit_distance,
                      sampled_ks)
from .learning import RlsModel, bag_of_words, nn_classify, rls_predict, rls_train, select_lambda
from .datasets import LabeledDataset, gen_xperm, load_idx, split_train_test, write_idx
from .config import ConfigError, ExperimentConfig, parse_config

__all__ = [
    "CapacityError", "GroupAction", "GroupElement", "block_permutation", "cyclic_shift",
    "enumerate_elements", "image_euclidean", "sample_elements", "trivial_group",
    "ProjectionTable", "TemplateBank", "build_projection_table", "make_bank",
    "FeatureMeta", "FeatureVector", "compute_features", "feature_dot", "feature_matrix",
    "GramMatrix", "asymptotic_ks", "exact_haar_kernel", "gram", "orbit_distance", "sampled_ks",
    "RlsModel", "bag_of_words", "nn_classify", "rls_predict", "rls_train", "select_lambda",
    "LabeledDataset", "gen_xperm", "load_idx", "split_train_test", "write_idx",
    "ConfigError", "ExperimentConfig", "parse_config",
]
