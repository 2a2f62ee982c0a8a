"""Generative conversational music recommendation (C++ core bindings)."""

from talkplay._core import (
    MODALITIES,
    Bm25Index,
    Error,
    IntegrityError,
    InvalidArgument,
    LoadError,
    NotFound,
    ParseError,
    TokenIndex,
    TrainingError,
    Vocabulary,
    assign,
    bm25_tokenize,
    fit_kmeans,
    hit_at_k,
    mix_seed,
    mrr,
    sample,
    score_partial,
    stable_hash,
    standard_profiles,
)

__all__ = [
    "MODALITIES",
    "Bm25Index",
    "Error",
    "IntegrityError",
    "InvalidArgument",
    "LoadError",
    "NotFound",
    "ParseError",
    "TokenIndex",
    "TrainingError",
    "Vocabulary",
    "assign",
    "bm25_tokenize",
    "fit_kmeans",
    "hit_at_k",
    "mix_seed",
    "mrr",
    "sample",
    "score_partial",
    "stable_hash",
    "standard_profiles",
]
