//! Dictionary-based dual-polarity sentiment scoring.
//!
//! Every text gets an independent positive strength and negative strength,
//! each on a 1–5 scale where 1 means "none". A text is labeled positive
//! (negative) when its positive (negative) strength is at least 2; both
//! labels can hold at once.

mod lexicon;
mod score;
mod tokenize;

pub use lexicon::{load_lexicon, Lexicon, LexiconRole};
pub use score::{polarity_labels, score_text, PolarityLabels, SentimentScore};
pub use tokenize::{tokenize, Token, Tokens};

/// Lexicon shipped with the crate, used by the synthetic corpus and the
/// demo fixture.
pub const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon.tsv");
