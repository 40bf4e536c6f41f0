//! String-level tokenization shared by the language model, the feature
//! hasher, and the text metrics.
//!
//! Tokens are whitespace-delimited words with every ASCII punctuation
//! character (quotation marks included) split off as its own single-char
//! token. Joining tokens with single spaces is the inverse on text that is
//! already in tokenized form.

/// Split `text` into word and punctuation tokens.
pub fn split_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
        } else if ch.is_ascii_punctuation() {
            if !word.is_empty() {
                tokens.push(std::mem::take(&mut word));
            }
            tokens.push(ch.to_string());
        } else {
            word.push(ch);
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Join tokens back into a single line of text.
pub fn join_tokens<S: AsRef<str>>(tokens: &[S]) -> String {
    tokens
        .iter()
        .map(|t| t.as_ref())
        .collect::<Vec<_>>()
        .join(" ")
}
