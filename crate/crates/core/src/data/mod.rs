//! Corpus ingestion, BILOU span encoding, vocabularies, word dropout and
//! pretrained word vectors.

mod bilou;
mod corpus;
mod pretrained;
mod vocab;

pub use bilou::{
    bilou_to_spans, parse_tag, spans_to_bilou, validate_bilou, Boundary, EntitySpan,
};
pub use corpus::{parse_corpus, parse_corpus_str, write_corpus, AnnotatedSentence, Relation};
pub use pretrained::{load_pretrained_words, read_pretrained_words};
pub use vocab::{unk_probability, word_dropout_replace, SymbolTable, Vocabularies, NEG, UNK};
