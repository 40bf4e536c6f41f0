//! Rule-based answer-entity tagging, the stand-in for an off-the-shelf
//! annotator: maximal runs of capitalized words plus standalone number
//! tokens. A capitalized word that only opens a sentence (a singleton run
//! with no other capitalized run anywhere in the context) is discounted as
//! sentence capitalization rather than a name.

use rand::Rng;

use crate::error::{Error, Result};
use crate::text;

fn is_number(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_ascii_digit())
}

fn is_capitalized(token: &str) -> bool {
    token
        .chars()
        .next()
        .map(|c| c.is_uppercase())
        .unwrap_or(false)
}

fn is_sentence_end(token: &str) -> bool {
    matches!(token, "." | "!" | "?")
}

/// Entity candidates in first-appearance order, deduplicated.
pub fn entity_candidates(context: &str) -> Vec<String> {
    let tokens = text::split_tokens(context);

    struct Run {
        words: Vec<String>,
        sentence_initial: bool,
    }

    let mut runs: Vec<Run> = Vec::new();
    let mut numbers: Vec<(usize, String)> = Vec::new(); // (first token position, text)
    let mut run_positions: Vec<usize> = Vec::new();
    let mut current: Option<Run> = None;
    let mut current_start = 0usize;
    let mut at_sentence_start = true;

    for (pos, token) in tokens.iter().enumerate() {
        if is_number(token) {
            if let Some(run) = current.take() {
                runs.push(run);
                run_positions.push(current_start);
            }
            numbers.push((pos, token.clone()));
            at_sentence_start = false;
        } else if is_capitalized(token) {
            match &mut current {
                Some(run) => run.words.push(token.clone()),
                None => {
                    current = Some(Run {
                        words: vec![token.clone()],
                        sentence_initial: at_sentence_start,
                    });
                    current_start = pos;
                }
            }
            at_sentence_start = false;
        } else {
            if let Some(run) = current.take() {
                runs.push(run);
                run_positions.push(current_start);
            }
            if is_sentence_end(token) {
                at_sentence_start = true;
            } else if !token.chars().all(|c| c.is_ascii_punctuation()) {
                at_sentence_start = false;
            }
        }
    }
    if let Some(run) = current.take() {
        runs.push(run);
        run_positions.push(current_start);
    }

    let keep = |run: &Run| {
        // a lone sentence-opening word with no other capitalized run in the
        // context is just sentence case
        !(run.words.len() == 1 && run.sentence_initial && runs.len() == 1)
    };

    let mut ordered: Vec<(usize, String)> = runs
        .iter()
        .zip(&run_positions)
        .filter(|(run, _)| keep(run))
        .map(|(run, &pos)| (pos, run.words.join(" ")))
        .chain(numbers)
        .collect();
    ordered.sort_by_key(|(pos, _)| *pos);

    let mut seen = std::collections::HashSet::new();
    ordered
        .into_iter()
        .filter(|(_, text)| seen.insert(text.clone()))
        .map(|(_, text)| text)
        .collect()
}

/// Pick one entity candidate uniformly at random.
pub fn select_answer_entity(context: &str, rng: &mut impl Rng) -> Result<String> {
    let candidates = entity_candidates(context);
    if candidates.is_empty() {
        return Err(Error::NoEntityFound);
    }
    Ok(candidates[rng.random_range(0..candidates.len())].clone())
}
