"""Exception taxonomy shared across the toolchain.

Every operational failure raised by this package derives from
:class:`OnnxNetError`, so callers (and the CLI) can distinguish bad input
from genuine bugs with a single except clause.
"""


class OnnxNetError(Exception):
    """Base class for all errors raised by onnxnet."""


class MalformedFile(OnnxNetError):
    """The byte stream is not a decodable ONNX model."""


class CyclicGraph(OnnxNetError):
    """The operator graph contains a directed cycle."""


class DanglingReference(OnnxNetError):
    """A node consumes a value name that is never defined."""


class MultipleComponents(OnnxNetError):
    """The graph has more than one weakly connected component."""


class UnsupportedConstruct(OnnxNetError):
    """The file uses a construct outside the supported subset
    (subgraph-bearing ops, out-of-range opsets, ...)."""


class ShapeMismatch(OnnxNetError):
    """Operator input shapes are incompatible with its semantics."""


class FoldOverflow(OnnxNetError):
    """Constant folding would materialize a tensor above the element budget."""


class FixpointNotReached(OnnxNetError):
    """Simplification passes kept changing the graph past the iteration cap."""


class UnsupportedOp(OnnxNetError):
    """The reference executor has no kernel for this op type."""


class EmptyHistogram(OnnxNetError):
    """The graph has no countable (non-Constant) nodes."""


class InsufficientSamples(OnnxNetError):
    """Too few histograms to compute the requested diversity statistic."""


class DegenerateInput(OnnxNetError):
    """Rank correlation is undefined for the given scores/accuracies."""


class NoComparablePairs(OnnxNetError):
    """Pairwise training needs at least two distinct accuracy values."""


class MalformedRecord(OnnxNetError):
    """A manifest line violates the record schema."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class DuplicateId(OnnxNetError):
    """Two manifest records share an id."""


class EmptyValidationSplit(OnnxNetError):
    """The split specification yields an empty validation set."""


class MissingText(OnnxNetError):
    """A record lacks the inline encoding text this operation needs."""
