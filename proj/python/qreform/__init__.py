"""Query reformulation for code search: span infilling, expansion, BM25, MRR."""

from ._qreform import (
    Bm25Index,
    CandidateExpansion,
    Document,
    Error,
    EvalCase,
    Expander,
    InfillModel,
    ModelConfig,
    SpanPrediction,
    TrainConfig,
    Vocabulary,
    corrupt,
    corrupt_at,
    enumerate_candidates,
    evaluate,
    information_gain,
    make_intent_benchmark,
    make_memorizable_queries,
    masked_span_length,
    mrr,
    splice,
    tokenize,
)

__all__ = [name for name in dir() if not name.startswith("_")]
