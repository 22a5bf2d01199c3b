//! Masked text prompts, operator preferences and the closed vocabulary.

mod preference;
mod render;
mod vocab;

pub use preference::{q_for_preference, OperatorPreference, Orientation};
pub use render::{render_prompt, PromptText};
pub use vocab::{detokenize, tokenize, TokenSequence, Vocabulary, DEFAULT_SEQ_LEN};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("prompt needs {needed} tokens but only {available} fit")]
    Overflow { needed: usize, available: usize },
    #[error("token {0:?} is not in the vocabulary")]
    OutOfVocabulary(String),
    #[error("prompt must contain exactly one [MASK], found {0}")]
    MaskCount(usize),
    #[error("unknown operator preference {given:?}; valid phrases: {valid:?}")]
    UnknownPreference { given: String, valid: Vec<String> },
    #[error("malformed vocabulary file: {0}")]
    VocabFormat(String),
}
