"""onnxnet: condensed text encodings for ONNX graphs, plus the analysis
stack around them (diversity metrics, rank-correlation evaluation, dataset
manifests, and a pairwise-ranking surrogate)."""

from .chains import Chain, NamingTable, build_chains, chain_cover_check
from .diversity import (
    DiversityReport,
    OpHistogram,
    between_space_diversity,
    jsd,
    op_histogram,
    within_space_diversity,
)
from .encoding import (
    EncodedArch,
    EncodingConfig,
    TextEncoder,
    VARIANTS,
    encode,
    encode_bytes,
    encode_file,
    prepare_graph,
    validate_encoding,
)
from .exceptions import OnnxNetError
from .graph import GraphBuilder, GraphIR, NodeSpec, TensorShape, parse_onnx, topo_order
from .manifest import (
    ArchRecord,
    ByKey,
    RandomFraction,
    Split,
    assign_splits,
    batch_encode,
    read_manifest,
    write_manifest,
)
from .metrics import ScoredSet, hinge_loss, kendall_tau, spearman_rho
from .passes import (
    PassReport,
    PatternRule,
    fold_constants,
    merge_patterns,
    remove_low_importance,
    serialize,
    simplify,
)
from .ranker import (
    PairwiseRanker,
    RankerModel,
    TrainConfig,
    featurize,
    load_model,
    predict,
    save_model,
    train_ranker,
)
from .refexec import DenseTensor, execute, random_instance
from .shape_inference import infer_shapes

__version__ = "0.1.0"

__all__ = [
    "ArchRecord",
    "ByKey",
    "Chain",
    "DenseTensor",
    "DiversityReport",
    "EncodedArch",
    "EncodingConfig",
    "GraphBuilder",
    "GraphIR",
    "NamingTable",
    "NodeSpec",
    "OnnxNetError",
    "OpHistogram",
    "PairwiseRanker",
    "PassReport",
    "PatternRule",
    "RandomFraction",
    "RankerModel",
    "ScoredSet",
    "Split",
    "TensorShape",
    "TextEncoder",
    "TrainConfig",
    "VARIANTS",
    "assign_splits",
    "batch_encode",
    "between_space_diversity",
    "build_chains",
    "chain_cover_check",
    "encode",
    "encode_bytes",
    "encode_file",
    "execute",
    "featurize",
    "fold_constants",
    "hinge_loss",
    "infer_shapes",
    "jsd",
    "kendall_tau",
    "load_model",
    "merge_patterns",
    "op_histogram",
    "parse_onnx",
    "predict",
    "prepare_graph",
    "random_instance",
    "read_manifest",
    "remove_low_importance",
    "save_model",
    "serialize",
    "simplify",
    "spearman_rho",
    "topo_order",
    "train_ranker",
    "validate_encoding",
    "within_space_diversity",
    "write_manifest",
]
