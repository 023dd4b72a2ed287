"""Corpus parsing, vocabularies, pretrained embeddings and batching."""

from .alphabet import PAD, PAD_ID, UNK, UNK_ID, Alphabet, AlphabetError, label_alphabet
from .batching import Batch, BatchConfigError, batch_instances, encode_batch
from .corpus import (
    Alphabets,
    FormatError,
    Instance,
    Token,
    build_alphabets,
    normalize_word,
    read_classification_corpus,
    read_corpus,
    read_labeling_corpus,
    write_classification_corpus,
    write_labeling_corpus,
)
from .embeddings import EmbeddingTable, load_pretrained_embeddings, read_embedding_file

__all__ = [
    "PAD", "PAD_ID", "UNK", "UNK_ID", "Alphabet", "AlphabetError", "Alphabets", "Batch",
    "BatchConfigError", "EmbeddingTable", "FormatError", "Instance", "Token", "batch_instances",
    "build_alphabets", "encode_batch", "label_alphabet", "load_pretrained_embeddings", "normalize_word",
    "read_classification_corpus", "read_corpus", "read_embedding_file", "read_labeling_corpus",
    "write_classification_corpus", "write_labeling_corpus",
]
