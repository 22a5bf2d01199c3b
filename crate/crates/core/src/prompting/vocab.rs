use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{PromptError, PromptText};

/// Default token sequence length.
pub const DEFAULT_SEQ_LEN: usize = 96;

const VOCAB_VERSION: u32 = 1;

pub const PAD: &str = "[PAD]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";

const STANDARD_TOKENS: &[&str] = &[
    PAD, CLS, SEP, MASK, // specials
    "cell", "time", "past", "mean", "dev", "next", "goal", ";", // template
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9", ".", "-", ":", // numbers
    "No", "specific", "focus", "Focus", "on", "highly", "service", "quality", "power",
    "savings", // preference phrases
];

/// Closed id ↔ token table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Vocabulary {
    /// The fixed vocabulary covering the prompt template.
    pub fn standard() -> Self {
        Self::from_tokens(STANDARD_TOKENS.iter().map(|s| s.to_string()).collect())
            .expect("standard vocabulary is well formed")
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self, PromptError> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(PromptError::VocabFormat(format!("duplicate token {t:?}")));
            }
        }
        for special in [PAD, CLS, SEP, MASK] {
            if !ids.contains_key(special) {
                return Err(PromptError::VocabFormat(format!("missing {special}")));
            }
        }
        Ok(Self { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn pad_id(&self) -> u32 {
        self.ids[PAD]
    }

    pub fn mask_id(&self) -> u32 {
        self.ids[MASK]
    }

    /// `version<TAB>1` followed by one `id<TAB>token` line per entry.
    pub fn serialize(&self) -> String {
        let mut out = format!("version\t{VOCAB_VERSION}\n");
        for (i, t) in self.tokens.iter().enumerate() {
            out.push_str(&format!("{i}\t{t}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| PromptError::VocabFormat("empty file".into()))?;
        match header.split_once('\t') {
            Some(("version", v)) if v.trim() == VOCAB_VERSION.to_string() => {}
            _ => {
                return Err(PromptError::VocabFormat(format!(
                    "unsupported header {header:?}"
                )))
            }
        }
        let mut tokens = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let (id, tok) = line
                .split_once('\t')
                .ok_or_else(|| PromptError::VocabFormat(format!("bad line {line:?}")))?;
            let id: usize = id
                .parse()
                .map_err(|_| PromptError::VocabFormat(format!("bad id in {line:?}")))?;
            if id != tokens.len() {
                return Err(PromptError::VocabFormat(format!(
                    "ids must be dense and ascending, got {id}"
                )));
            }
            tokens.push(tok.to_string());
        }
        Self::from_tokens(tokens)
    }

    /// Hex SHA-256 of the serialized table; stored in checkpoints.
    pub fn hash_hex(&self) -> String {
        let digest = Sha256::digest(self.serialize().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Model input: fixed-length ids with attention mask and the `[MASK]` index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub mask_index: usize,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// One past the last attended position. Positions beyond it are padding
    /// and cannot influence any attended position or the pooled head.
    pub fn active_len(&self) -> usize {
        self.attention_mask
            .iter()
            .rposition(|&m| m != 0)
            .map_or(0, |i| i + 1)
    }
}

fn is_number_char(tok: &str) -> bool {
    matches!(tok.as_bytes(), [b'0'..=b'9' | b'.' | b'-'])
}

/// Split on whitespace; numeric words are split into one token per character.
fn lex(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let numeric = word
            .chars()
            .all(|c| c.is_ascii_digit() || c == '.' || c == '-');
        if numeric {
            out.extend(word.chars().map(String::from));
        } else {
            out.push(word.to_string());
        }
    }
    out
}

/// `[CLS] body [SEP]` padded to `len`. Never truncates.
pub fn tokenize(
    prompt: &PromptText,
    vocab: &Vocabulary,
    len: usize,
) -> Result<TokenSequence, PromptError> {
    let body = lex(prompt.as_str());
    let needed = body.len() + 2;
    if needed > len {
        return Err(PromptError::Overflow {
            needed,
            available: len,
        });
    }
    let masks = body.iter().filter(|t| *t == MASK).count();
    if masks != 1 {
        return Err(PromptError::MaskCount(masks));
    }

    let mut ids = Vec::with_capacity(len);
    ids.push(vocab.ids[CLS]);
    for tok in &body {
        let id = vocab
            .id(tok)
            .ok_or_else(|| PromptError::OutOfVocabulary(tok.clone()))?;
        ids.push(id);
    }
    ids.push(vocab.ids[SEP]);
    let real = ids.len();
    ids.resize(len, vocab.pad_id());

    let mask_id = vocab.mask_id();
    let mask_index = ids.iter().position(|&i| i == mask_id).expect("one mask");
    let mut attention_mask = vec![1u8; real];
    attention_mask.resize(len, 0);
    Ok(TokenSequence {
        ids,
        attention_mask,
        mask_index,
    })
}

/// Inverse of [`tokenize`] for canonical prompts.
///
/// Number characters are re-joined; since every rendered decimal carries
/// exactly one fractional digit, a number ends right after the digit that
/// follows its `.`.
pub fn detokenize(seq: &TokenSequence, vocab: &Vocabulary) -> String {
    let mut words: Vec<String> = Vec::new();
    let mut number = String::new();
    for &id in &seq.ids {
        let tok = vocab.token(id).unwrap_or("");
        if matches!(tok, PAD | CLS | SEP) {
            continue;
        }
        if is_number_char(tok) {
            let complete = number.contains('.') && number.ends_with(|c: char| c.is_ascii_digit());
            if !number.is_empty() && (complete || tok == "-") {
                words.push(std::mem::take(&mut number));
            }
            number.push_str(tok);
        } else {
            if !number.is_empty() {
                words.push(std::mem::take(&mut number));
            }
            words.push(tok.to_string());
        }
    }
    if !number.is_empty() {
        words.push(number);
    }
    words.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PredictionSample;
    use crate::prompting::{render_prompt, OperatorPreference};
    use proptest::prelude::*;

    fn sample(history: Vec<f64>, mean: f64, dev: f64, cell: u64, tod: u16) -> PredictionSample {
        PredictionSample {
            cell_id: cell,
            target_time_ms: 0,
            history,
            mean,
            deviation: dev,
            tod_bucket: tod,
            target: 0.0,
        }
    }

    #[test]
    fn standard_vocab_shape() {
        let v = Vocabulary::standard();
        assert_eq!(v.len(), STANDARD_TOKENS.len());
        assert_eq!(v.pad_id(), 0);
        assert_eq!(v.token(v.mask_id()), Some(MASK));
    }

    #[test]
    fn serialization_round_trip() {
        let v = Vocabulary::standard();
        let text = v.serialize();
        assert!(text.starts_with("version\t1\n0\t[PAD]\n"));
        assert_eq!(Vocabulary::parse(&text).unwrap(), v);
        assert_eq!(v.hash_hex().len(), 64);
        assert!(Vocabulary::parse("version\t2\n").is_err());
        assert!(Vocabulary::parse("version\t1\n1\t[PAD]\n").is_err());
    }

    #[test]
    fn tokenizes_with_padding_and_mask() {
        let v = Vocabulary::standard();
        let p = render_prompt(
            &sample(vec![10.0, 12.0, 11.0, 13.0, 12.0], 11.6, 1.0, 7, 36),
            None,
        );
        let seq = tokenize(&p, &v, DEFAULT_SEQ_LEN).unwrap();
        assert_eq!(seq.len(), 96);
        assert_eq!(seq.ids[0], v.id(CLS).unwrap());
        assert_eq!(seq.ids[seq.mask_index], v.mask_id());
        let real = seq.active_len();
        assert_eq!(seq.ids[real - 1], v.id(SEP).unwrap());
        assert_eq!(
            seq.attention_mask
                .iter()
                .map(|&m| m as usize)
                .sum::<usize>(),
            real
        );
        for (i, &m) in seq.attention_mask.iter().enumerate() {
            assert_eq!(m == 0, seq.ids[i] == v.pad_id());
        }
        assert_eq!(detokenize(&seq, &v), p.as_str());
    }

    #[test]
    fn overflow_is_an_error() {
        let v = Vocabulary::standard();
        let long = format!("{}next [MASK]", "cell ; ".repeat(100));
        assert!(matches!(
            tokenize(&PromptText(long), &v, 96),
            Err(PromptError::Overflow {
                needed: 204,
                available: 96
            })
        ));
    }

    #[test]
    fn unknown_token_is_named() {
        let v = Vocabulary::standard();
        let err = tokenize(&PromptText("cell 1 ; banana [MASK]".into()), &v, 96).unwrap_err();
        assert_eq!(err, PromptError::OutOfVocabulary("banana".into()));
    }

    #[test]
    fn mask_count_enforced() {
        let v = Vocabulary::standard();
        assert_eq!(
            tokenize(&PromptText("cell 1".into()), &v, 96).unwrap_err(),
            PromptError::MaskCount(0)
        );
        assert_eq!(
            tokenize(&PromptText("[MASK] [MASK]".into()), &v, 96).unwrap_err(),
            PromptError::MaskCount(2)
        );
    }

    #[test]
    fn longest_prompt_fits() {
        let v = Vocabulary::standard();
        let s = sample(vec![120.0; 5], 120.0, 120.0, 99_999, 143);
        let p = render_prompt(&s, Some(OperatorPreference::HighServiceQuality));
        let seq = tokenize(&p, &v, DEFAULT_SEQ_LEN).unwrap();
        assert!(seq.active_len() <= DEFAULT_SEQ_LEN);
    }

    fn pref_strategy() -> impl Strategy<Value = Option<OperatorPreference>> {
        prop_oneof![
            Just(None),
            (0usize..5).prop_map(|i| Some(OperatorPreference::ALL[i]))
        ]
    }

    proptest! {
        #[test]
        fn round_trip_any_rendered_prompt(
            history in proptest::collection::vec(0.0f64..120.0, 5),
            mean in 0.0f64..120.0,
            dev in 0.0f64..60.0,
            cell in 0u64..10_000,
            tod in 0u16..144,
            pref in pref_strategy(),
        ) {
            let v = Vocabulary::standard();
            let p = render_prompt(&sample(history, mean, dev, cell, tod), pref);
            let seq = tokenize(&p, &v, DEFAULT_SEQ_LEN).unwrap();
            prop_assert_eq!(detokenize(&seq, &v), p.as_str());
            prop_assert_eq!(seq.ids.iter().filter(|&&i| i == v.mask_id()).count(), 1);
        }

        #[test]
        fn rendering_is_injective(
            a in proptest::collection::vec(0u32..1200, 8),
            b in proptest::collection::vec(0u32..1200, 8),
            pa in pref_strategy(),
            pb in pref_strategy(),
        ) {
            // values on the one-decimal grid, so rounding is the identity
            let mk = |v: &[u32]| sample(
                v[..5].iter().map(|&x| x as f64 / 10.0).collect(),
                v[5] as f64 / 10.0,
                v[6] as f64 / 10.0,
                v[7] as u64,
                (v[7] % 144) as u16,
            );
            let (sa, sb) = (mk(&a), mk(&b));
            let same_input = a == b && pa == pb;
            prop_assert_eq!(render_prompt(&sa, pa) == render_prompt(&sb, pb), same_input);
        }
    }
}
