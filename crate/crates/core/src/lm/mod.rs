//! Vocabulary, next-token log-probability vectors, and the backend contract
//! every autoregressive scorer implements.

mod ngram;

pub use ngram::{read_corpus_lines, train_toy_lm, ToyNGramLm};

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::text;

pub type TokenId = u32;

pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";
pub const QUOTE_TOKEN: &str = "\"";

const SPECIALS: [&str; 4] = [BOS_TOKEN, EOS_TOKEN, UNK_TOKEN, QUOTE_TOKEN];

/// Dense token-id space with fixed special ids.
///
/// The four specials always occupy ids 0..4; the quotation mark is a
/// first-class special because generation prompts open quotes and the
/// filtering rule checks for the closing one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Build a vocabulary from the given tokens. Duplicates and tokens that
    /// collide with a special are ignored; ids are assigned in first
    /// appearance order after the specials.
    pub fn new<S: AsRef<str>>(tokens: impl IntoIterator<Item = S>) -> Self {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for special in SPECIALS {
            vocab.push(special);
        }
        for token in tokens {
            vocab.push(token.as_ref());
        }
        vocab
    }

    /// Collect the vocabulary of a line-oriented text corpus.
    pub fn from_corpus_lines<S: AsRef<str>>(lines: impl IntoIterator<Item = S>) -> Self {
        let mut tokens = Vec::new();
        for line in lines {
            tokens.extend(text::split_tokens(line.as_ref()));
        }
        Self::new(tokens)
    }

    fn push(&mut self, token: &str) {
        if !self.index.contains_key(token) {
            self.index
                .insert(token.to_string(), self.tokens.len() as TokenId);
            self.tokens.push(token.to_string());
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false // specials are always present
    }

    pub fn bos(&self) -> TokenId {
        0
    }

    pub fn eos(&self) -> TokenId {
        1
    }

    pub fn unk(&self) -> TokenId {
        2
    }

    pub fn quote(&self) -> TokenId {
        3
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Map text to token ids; out-of-vocabulary tokens map to `<unk>`.
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        text::split_tokens(text)
            .into_iter()
            .map(|t| self.id(&t).unwrap_or(self.unk()))
            .collect()
    }

    /// Inverse of [`tokenize`](Self::tokenize) on in-vocabulary text.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        let tokens: Vec<&str> = ids
            .iter()
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN))
            .collect();
        text::join_tokens(&tokens)
    }

    pub fn check_ids(&self, ids: &[TokenId]) -> Result<()> {
        for &id in ids {
            if id as usize >= self.len() {
                return Err(Error::InvalidToken {
                    id,
                    vocab_size: self.len(),
                });
            }
        }
        Ok(())
    }
}

/// A normalized next-token distribution in natural-log scale.
///
/// Masked-out entries are negative infinity; `exp` of the values sums to 1
/// within 1e-9 for every vector produced by a backend or a filter.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    values: Vec<f64>,
}

impl LogitVector {
    /// Normalize raw log-scale scores into a distribution (log-softmax).
    pub fn from_log_scores(scores: Vec<f64>) -> Self {
        let mut v = LogitVector { values: scores };
        v.renormalize();
        v
    }

    /// Build from linear-scale probabilities (zero maps to -inf).
    pub fn from_probs(probs: &[f64]) -> Self {
        let values = probs
            .iter()
            .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            .collect();
        Self::from_log_scores(values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn prob(&self, id: TokenId) -> f64 {
        self.values[id as usize].exp()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.exp()).collect()
    }

    /// Index of the most probable token, ties broken toward the lower id.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0usize;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best as TokenId
    }

    /// True when exp of the values sums to 1 within `tol`.
    pub fn is_normalized(&self, tol: f64) -> bool {
        let total: f64 = self.values.iter().map(|v| v.exp()).sum();
        (total - 1.0).abs() < tol
    }

    pub(crate) fn renormalize(&mut self) {
        let max = self
            .values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return; // no mass; callers surface DegenerateDistribution
        }
        let log_sum = max
            + self
                .values
                .iter()
                .map(|v| (v - max).exp())
                .sum::<f64>()
                .ln();
        for v in &mut self.values {
            *v -= log_sum;
        }
    }
}

/// Behavioral contract for an autoregressive language model: next-token
/// log-probabilities and sequence scoring. Implementations are immutable
/// once constructed and safe to share across threads; identical prefixes
/// must yield identical logits.
pub trait LmBackend: Send + Sync {
    fn vocab(&self) -> &Vocabulary;

    /// Normalized log-probability vector over the vocabulary given `prefix`.
    fn next_token_logits(&self, prefix: &[TokenId]) -> Result<LogitVector>;

    /// Sum of per-token log-probabilities of `continuation` given `prefix`,
    /// consuming continuation tokens left to right (chain rule).
    fn sequence_logprob(&self, prefix: &[TokenId], continuation: &[TokenId]) -> Result<f64> {
        if continuation.is_empty() {
            return Err(Error::EmptyContinuation);
        }
        self.vocab().check_ids(continuation)?;
        let mut ctx = prefix.to_vec();
        let mut total = 0.0;
        for &tok in continuation {
            let logits = self.next_token_logits(&ctx)?;
            total += logits.values()[tok as usize];
            ctx.push(tok);
        }
        Ok(total)
    }
}
