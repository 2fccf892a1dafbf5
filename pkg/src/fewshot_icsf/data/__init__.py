from .corpus import (
    OUTSIDE,
    CorpusFormatError,
    UtteranceRecord,
    apply_slot_prefixing,
    format_corpus,
    parse_corpus,
    parse_dataset_file,
    prefix_slot,
    write_dataset_file,
)
