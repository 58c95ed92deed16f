"""Entity tagging with trie-constrained decoding."""

from ._ettag import (
    BOS,
    EOS,
    SEP,
    UNK,
    DecodeConfig,
    EntityCatalog,
    EttagError,
    TokenTrie,
    Vocabulary,
    build_input_vocabulary,
    build_output_vocabulary,
    canonicalize,
    convert,
    cross_dataset_average,
    decode,
    evaluate,
    make_synthetic,
    parse_aida_conll,
    prf1,
    read_et_jsonl,
    tag,
    train,
)

__all__ = [
    "BOS",
    "EOS",
    "SEP",
    "UNK",
    "DecodeConfig",
    "EntityCatalog",
    "EttagError",
    "TokenTrie",
    "Vocabulary",
    "build_input_vocabulary",
    "build_output_vocabulary",
    "canonicalize",
    "convert",
    "cross_dataset_average",
    "decode",
    "evaluate",
    "make_synthetic",
    "parse_aida_conll",
    "prf1",
    "read_et_jsonl",
    "tag",
    "train",
]
