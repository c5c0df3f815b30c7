//! Okapi BM25 lexical baseline with pluggable tokenization.

mod bm25;
mod tokenize;

pub use bm25::{bm25_score, bm25_search, build_index, Bm25Index, Bm25Params, IdfMode, Posting};
pub use tokenize::{
    load_token_file, CharTokenizer, DictionaryTokenizer, PretokenizedTokenizer, Tokenize,
    UnigramTokenizer,
};
