//! Trainable add-δ n-gram language model with simple backoff, the
//! desk-scale stand-in for a large pre-trained generator.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lm::{LmBackend, LogitVector, TokenId, Vocabulary};

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    per_token: BTreeMap<TokenId, u64>,
}

/// Add-δ smoothed n-gram model.
///
/// Conditionals are estimated at the highest order whose context was seen in
/// training; an entirely unseen context backs off to the (n-1)-gram
/// distribution for its suffix, bottoming out at the smoothed unigram.
///
/// Smoothing adds δ on the frequency simplex,
/// p(w | ctx) = (count(w)/total + δ) / (1 + δ|V|),
/// so every conditional sums to 1 over the full vocabulary and duplicating
/// the corpus leaves the model unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNGramLm {
    order: usize,
    delta: f64,
    vocab: Vocabulary,
    /// `counts[k]` holds (k+1)-gram statistics: context of length k → token → count.
    counts: Vec<BTreeMap<Vec<TokenId>, ContextCounts>>,
}

/// Train an n-gram model on tokenized sentences. Each sentence is padded
/// with BOS on the left and terminated with EOS at every order.
pub fn train_toy_lm(
    corpus: &[Vec<TokenId>],
    order: usize,
    delta: f64,
    vocab: Vocabulary,
) -> Result<ToyNGramLm> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if order < 1 {
        return Err(Error::InvalidOrder);
    }
    if delta <= 0.0 {
        return Err(Error::InvalidDelta(delta));
    }
    for sentence in corpus {
        vocab.check_ids(sentence)?;
    }

    let mut counts = vec![BTreeMap::new(); order];
    for sentence in corpus {
        for (k, table) in counts.iter_mut().enumerate() {
            let mut padded = vec![vocab.bos(); k];
            padded.extend_from_slice(sentence);
            padded.push(vocab.eos());
            for i in k..padded.len() {
                let ctx = padded[i - k..i].to_vec();
                let entry: &mut ContextCounts = table.entry(ctx).or_default();
                entry.total += 1;
                *entry.per_token.entry(padded[i]).or_insert(0) += 1;
            }
        }
    }

    Ok(ToyNGramLm {
        order,
        delta,
        vocab,
        counts,
    })
}

impl ToyNGramLm {
    /// Tokenize one line per sentence, build the vocabulary from the corpus,
    /// and train.
    pub fn train_from_lines<S: AsRef<str>>(
        lines: &[S],
        order: usize,
        delta: f64,
    ) -> Result<ToyNGramLm> {
        let vocab = Vocabulary::from_corpus_lines(lines.iter().map(|l| l.as_ref()));
        let corpus: Vec<Vec<TokenId>> = lines
            .iter()
            .map(|l| vocab.tokenize(l.as_ref()))
            .filter(|ids| !ids.is_empty())
            .collect();
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        train_toy_lm(&corpus, order, delta, vocab)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Smoothed conditional distribution for the context ending at `prefix`.
    fn conditional(&self, prefix: &[TokenId]) -> Vec<f64> {
        let vocab_size = self.vocab.len();
        // Longest usable context: the last (order-1) tokens, BOS-padded.
        let mut ctx: Vec<TokenId> = Vec::with_capacity(self.order - 1);
        let want = self.order - 1;
        if prefix.len() >= want {
            ctx.extend_from_slice(&prefix[prefix.len() - want..]);
        } else {
            ctx.extend(std::iter::repeat_n(self.vocab.bos(), want - prefix.len()));
            ctx.extend_from_slice(prefix);
        }

        // Back off through shorter suffixes until a seen context (the empty
        // unigram context always exists after training).
        loop {
            let k = ctx.len();
            if let Some(entry) = self.counts[k].get(&ctx) {
                if entry.total > 0 {
                    let denom = 1.0 + self.delta * vocab_size as f64;
                    let total = entry.total as f64;
                    let mut probs = vec![self.delta / denom; vocab_size];
                    for (&tok, &count) in &entry.per_token {
                        probs[tok as usize] = (count as f64 / total + self.delta) / denom;
                    }
                    return probs;
                }
            }
            debug_assert!(k > 0, "unigram context missing from a trained model");
            ctx.remove(0);
        }
    }

    /// Write the model as a plain-text file:
    /// header `ngram-lm v1 order=<n> delta=<δ>`, one vocabulary line per
    /// token, then one line per context entry `ctx_ids<TAB>token_id<TAB>count`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!(
            "ngram-lm v1 order={} delta={}\n",
            self.order, self.delta
        ));
        for token in self.vocab.tokens() {
            out.push_str(token);
            out.push('\n');
        }
        for table in &self.counts {
            for (ctx, entry) in table {
                let ctx_ids = ctx
                    .iter()
                    .map(|id| id.to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                for (&tok, &count) in &entry.per_token {
                    out.push_str(&format!("{ctx_ids}\t{tok}\t{count}\n"));
                }
            }
        }
        fs::write(path, out)?;
        Ok(())
    }

    /// Load a model written by [`save`](Self::save).
    pub fn load(path: &Path) -> Result<ToyNGramLm> {
        let content = fs::read_to_string(path)?;
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };

        let mut lines = content.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty model file".into()))?;
        let mut order = None;
        let mut delta = None;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("ngram-lm") || fields.next() != Some("v1") {
            return Err(parse_err(1, format!("unrecognized header {header:?}")));
        }
        for field in fields {
            if let Some(v) = field.strip_prefix("order=") {
                order = v.parse::<usize>().ok();
            } else if let Some(v) = field.strip_prefix("delta=") {
                delta = v.parse::<f64>().ok();
            }
        }
        let order = order.ok_or_else(|| parse_err(1, "missing or invalid order".into()))?;
        let delta = delta.ok_or_else(|| parse_err(1, "missing or invalid delta".into()))?;
        if order < 1 {
            return Err(Error::InvalidOrder);
        }
        if delta <= 0.0 {
            return Err(Error::InvalidDelta(delta));
        }

        // Vocabulary lines carry no tab; count entries always do.
        let mut tokens: Vec<String> = Vec::new();
        let mut counts: Vec<BTreeMap<Vec<TokenId>, ContextCounts>> = vec![BTreeMap::new(); order];
        let mut in_counts = false;
        for (idx, line) in lines {
            let lineno = idx + 1;
            if !line.contains('\t') {
                if in_counts {
                    return Err(parse_err(
                        lineno,
                        "vocabulary line after count entries".into(),
                    ));
                }
                tokens.push(line.to_string());
                continue;
            }
            in_counts = true;
            let mut parts = line.split('\t');
            let (ctx_part, tok_part, count_part) =
                match (parts.next(), parts.next(), parts.next(), parts.next()) {
                    (Some(a), Some(b), Some(c), None) => (a, b, c),
                    _ => {
                        return Err(parse_err(
                            lineno,
                            "expected ctx_ids\\ttoken_id\\tcount".into(),
                        ))
                    }
                };
            let ctx: Vec<TokenId> = if ctx_part.is_empty() {
                Vec::new()
            } else {
                ctx_part
                    .split(',')
                    .map(|p| {
                        p.parse::<TokenId>()
                            .map_err(|e| parse_err(lineno, format!("bad context id {p:?}: {e}")))
                    })
                    .collect::<Result<_>>()?
            };
            if ctx.len() >= order {
                return Err(parse_err(
                    lineno,
                    format!("context of length {} exceeds order {order}", ctx.len()),
                ));
            }
            let tok: TokenId = tok_part
                .parse()
                .map_err(|e| parse_err(lineno, format!("bad token id {tok_part:?}: {e}")))?;
            let count: u64 = count_part
                .parse()
                .map_err(|e| parse_err(lineno, format!("bad count {count_part:?}: {e}")))?;
            let entry: &mut ContextCounts = counts[ctx.len()].entry(ctx).or_default();
            entry.total += count;
            entry.per_token.insert(tok, count);
        }

        if tokens.len() < 4 || tokens[0] != super::BOS_TOKEN {
            return Err(parse_err(
                2,
                "vocabulary must start with the special tokens".into(),
            ));
        }
        let vocab = Vocabulary::new(tokens.iter().skip(4));
        if vocab.tokens() != tokens.as_slice() {
            return Err(parse_err(2, "vocabulary lines are not unique".into()));
        }

        Ok(ToyNGramLm {
            order,
            delta,
            vocab,
            counts,
        })
    }
}

impl LmBackend for ToyNGramLm {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_token_logits(&self, prefix: &[TokenId]) -> Result<LogitVector> {
        self.vocab.check_ids(prefix)?;
        Ok(LogitVector::from_probs(&self.conditional(prefix)))
    }
}

/// Read a one-sentence-per-line UTF-8 corpus file, skipping blank lines.
pub fn read_corpus_lines(path: &Path) -> Result<Vec<String>> {
    let content = fs::read_to_string(path)?;
    Ok(content
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn one_sentence_bigram() -> ToyNGramLm {
        ToyNGramLm::train_from_lines(&["a b"], 2, 0.1).unwrap()
    }

    #[test]
    fn additive_smoothing_on_one_sentence_corpus() {
        // vocab = 4 specials + {a, b}; count(a -> b) = 1, total(a) = 1,
        // so p(b | a) = (1 + delta) / (1 + delta * |V|)
        let lm = one_sentence_bigram();
        let v = lm.vocab().len() as f64;
        assert_eq!(lm.vocab().len(), 6);
        let a = lm.vocab().id("a").unwrap();
        let b = lm.vocab().id("b").unwrap();
        let logits = lm.next_token_logits(&[lm.vocab().bos(), a]).unwrap();
        let expected = (1.0 + 0.1) / (1.0 + 0.1 * v);
        assert!((logits.prob(b) - expected).abs() < 1e-12);
        // unseen continuation gets the smoothing floor
        let floor = 0.1 / (1.0 + 0.1 * v);
        assert!((logits.prob(a) - floor).abs() < 1e-12);
    }

    #[test]
    fn conditionals_normalize() {
        let lm = ToyNGramLm::train_from_lines(&["a b c", "a c b", "b a"], 3, 0.5).unwrap();
        for prefix in [&[][..], &[4], &[4, 5], &[5, 5, 5]] {
            let logits = lm.next_token_logits(prefix).unwrap();
            assert!(logits.is_normalized(1e-9));
        }
    }

    #[test]
    fn backend_purity_on_random_prefixes() {
        let lm = ToyNGramLm::train_from_lines(&["a b c d", "b c a", "d d a"], 3, 0.1).unwrap();
        let mut r = rng::stream(11, "test-purity", 0);
        for _ in 0..100 {
            let len = r.random_range(0..6);
            let prefix: Vec<TokenId> = (0..len)
                .map(|_| r.random_range(0..lm.vocab().len() as TokenId))
                .collect();
            let a = lm.next_token_logits(&prefix).unwrap();
            let b = lm.next_token_logits(&prefix).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn unseen_context_backs_off_to_lower_order() {
        let lm = ToyNGramLm::train_from_lines(&["a b c", "c b a", "b b c"], 3, 0.1).unwrap();
        let a = lm.vocab().id("a").unwrap();
        let c = lm.vocab().id("c").unwrap();
        // [c, a] never occurs as a trigram context; must equal the bigram
        // distribution for context [a].
        assert!(!lm.counts[2].contains_key(&vec![c, a]));
        let backed_off = lm.next_token_logits(&[c, a]).unwrap();
        let bigram_only = {
            let entry = lm.counts[1].get(&vec![a]).unwrap();
            let denom = 1.0 + lm.delta * lm.vocab().len() as f64;
            let mut probs = vec![lm.delta / denom; lm.vocab().len()];
            for (&tok, &count) in &entry.per_token {
                probs[tok as usize] = (count as f64 / entry.total as f64 + lm.delta) / denom;
            }
            LogitVector::from_probs(&probs)
        };
        assert_eq!(backed_off, bigram_only);
    }

    #[test]
    fn order_one_ignores_context() {
        let lm = ToyNGramLm::train_from_lines(&["a b", "b c"], 1, 0.1).unwrap();
        let x = lm.next_token_logits(&[]).unwrap();
        let y = lm.next_token_logits(&[4, 5]).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn duplicated_corpus_keeps_conditionals() {
        let once = ToyNGramLm::train_from_lines(&["a b c", "c a"], 2, 0.1).unwrap();
        let twice =
            ToyNGramLm::train_from_lines(&["a b c", "c a", "a b c", "c a"], 2, 0.1).unwrap();
        for prefix in [&[][..], &[4], &[5], &[6]] {
            let p = once.next_token_logits(prefix).unwrap();
            let q = twice.next_token_logits(prefix).unwrap();
            for (a, b) in p.values().iter().zip(q.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sequence_logprob_matches_hand_arithmetic() {
        let lm = one_sentence_bigram();
        let v = lm.vocab().len() as f64;
        let a = lm.vocab().id("a").unwrap();
        let b = lm.vocab().id("b").unwrap();
        // P(a | BOS) * P(b | a), each add-δ smoothed with one observation.
        let step = ((1.0 + 0.1) / (1.0 + 0.1 * v)).ln();
        let got = lm.sequence_logprob(&[lm.vocab().bos()], &[a, b]).unwrap();
        assert!((got - 2.0 * step).abs() < 1e-9);
    }

    #[test]
    fn sequence_logprob_chains_single_steps() {
        let lm = ToyNGramLm::train_from_lines(&["a b c", "b a c"], 2, 0.2).unwrap();
        let ids = lm.vocab().tokenize("a c");
        let one = lm.next_token_logits(&[]).unwrap().values()[ids[0] as usize];
        let two = lm.next_token_logits(&[ids[0]]).unwrap().values()[ids[1] as usize];
        let chained = lm.sequence_logprob(&[], &ids).unwrap();
        assert!((chained - (one + two)).abs() < 1e-12);
        // single-token continuation equals the logit entry
        let single = lm.sequence_logprob(&[], &ids[..1]).unwrap();
        assert!((single - one).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs_error() {
        assert!(matches!(
            ToyNGramLm::train_from_lines::<&str>(&[], 2, 0.1),
            Err(Error::EmptyCorpus)
        ));
        let lm = one_sentence_bigram();
        assert!(matches!(
            lm.next_token_logits(&[999]),
            Err(Error::InvalidToken { .. })
        ));
        assert!(matches!(
            lm.sequence_logprob(&[], &[]),
            Err(Error::EmptyContinuation)
        ));
        let vocab = Vocabulary::new(["a"]);
        assert!(matches!(
            train_toy_lm(&[vec![0]], 0, 0.1, vocab.clone()),
            Err(Error::InvalidOrder)
        ));
        assert!(matches!(
            train_toy_lm(&[vec![0]], 2, 0.0, vocab),
            Err(Error::InvalidDelta(_))
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let lm = ToyNGramLm::train_from_lines(&["a b c", "c \" b", "a a"], 3, 0.25).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.lm");
        lm.save(&path).unwrap();
        let loaded = ToyNGramLm::load(&path).unwrap();
        assert_eq!(lm, loaded);
    }

    #[test]
    fn load_reports_failing_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.lm");
        let lm = one_sentence_bigram();
        lm.save(&path).unwrap();
        let mut content = std::fs::read_to_string(&path).unwrap();
        content.push_str("not,numeric\tx\t1\n");
        let bad_line = content.lines().count();
        std::fs::write(&path, content).unwrap();
        match ToyNGramLm::load(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, bad_line),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
