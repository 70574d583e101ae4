"""Coreference annotations as token sequences.

Codecs between cluster-labeled span sets and decoder-ready sequences,
constrained-decoding state machines, affine-gap mention alignment, corpus
preparation, and the standard coreference evaluation stack.
"""

from .model import (
    CorefAnnotation,
    CorefDataError,
    DEFAULT_SYMBOLS,
    Document,
    EMPTY_ANNOTATION,
    Segment,
    Span,
    SymbolTable,
    dense_relabel,
    is_valid,
    restrict_annotation,
    validate,
)
from .linearize import (
    Diagnostics,
    LinearizedPair,
    ParseError,
    PartialParse,
    Scheme,
    SchemeKind,
    delinearize,
    linearize,
)
from .decoding import (
    DecodeOptions,
    DecodeResult,
    GenerationState,
    MaskDirective,
    MaskViolation,
    OracleScorer,
    RandomScorer,
    advance,
    check_sequence,
    decode,
    decode_vocabulary,
    initial_state,
    mask,
    state_from_prefix,
    unconstrained_decode,
)
from .align import (
    Alignment,
    AlignmentProblem,
    ProjectionReport,
    align_partial,
    gotoh_align,
    project_mentions,
    sentence_constrained_align,
)
from .metrics import (
    PRF,
    ScoreOptions,
    ScoreReport,
    mention_detection_f1,
    optimal_cluster_matching,
    restricted_clustering_score,
    score,
)
from .corpus import (
    PrepConfig,
    insert_speakers,
    merge_segment_predictions,
    read_conll,
    read_corpus,
    read_records,
    segment,
    write_conll,
    write_corpus,
    write_records,
)

__version__ = "0.1.0"
