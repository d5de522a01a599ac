//! Seeded question perturbations for the hard test split.
//!
//! Each transform leaves the entity spans it is given untouched, so entity
//! labels stay recoverable from the paired query. Draw counts are fixed per
//! word boundary or character, so a stream can be audited by replaying it.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuzzConfig {
    pub filler_prob: f64,
    pub fillers: Vec<String>,
    pub case_prob: f64,
    pub char_noise_prob: f64,
    /// Mixed into the pipeline seed so fuzz draws are independent of generation draws.
    pub salt: u64,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            filler_prob: 0.0,
            fillers: default_fillers(),
            case_prob: 0.0,
            char_noise_prob: 0.0,
            salt: 0x5eed_f022,
        }
    }
}

fn default_fillers() -> Vec<String> {
    ["Hey", "Do you know", "Tell me"]
        .into_iter()
        .map(String::from)
        .collect()
}

impl FuzzConfig {
    /// Defaults for the hard split: filler 0.5, case 0.1, character noise 0.01.
    pub fn test_hard() -> Self {
        FuzzConfig {
            filler_prob: 0.5,
            case_prob: 0.1,
            char_noise_prob: 0.01,
            ..FuzzConfig::default()
        }
    }

    pub fn is_identity(&self) -> bool {
        self.filler_prob == 0.0 && self.case_prob == 0.0 && self.char_noise_prob == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("filler_prob", self.filler_prob),
            ("case_prob", self.case_prob),
            ("char_noise_prob", self.char_noise_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        if self.filler_prob > 0.0 && self.fillers.is_empty() {
            return Err(Error::Config("filler_prob > 0 needs a non-empty filler list".into()));
        }
        Ok(())
    }
}

/// A perturbed question with its relocated entity spans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fuzzed {
    pub text: String,
    pub spans: Vec<Range<usize>>,
    /// Character edits applied by [`char_noise`].
    pub edits: usize,
    pub filler: Option<String>,
}

impl Fuzzed {
    pub fn new(text: &str, spans: &[Range<usize>]) -> Self {
        Fuzzed {
            text: text.to_string(),
            spans: spans.to_vec(),
            edits: 0,
            filler: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    ch: char,
    entity: Option<usize>,
}

fn explode(f: &Fuzzed) -> Vec<Cell> {
    f.text
        .char_indices()
        .map(|(at, ch)| Cell {
            ch,
            entity: f.spans.iter().position(|s| s.contains(&at)),
        })
        .collect()
}

fn rebuild(cells: &[Cell], n_spans: usize, edits: usize, filler: Option<String>) -> Fuzzed {
    let mut text = String::with_capacity(cells.len());
    let mut spans: Vec<Option<Range<usize>>> = vec![None; n_spans];
    for c in cells {
        let start = text.len();
        text.push(c.ch);
        if let Some(k) = c.entity {
            let span = spans[k].get_or_insert(start..start);
            span.end = text.len();
        }
    }
    Fuzzed {
        text,
        spans: spans.into_iter().map(|s| s.unwrap_or(0..0)).collect(),
        edits,
        filler,
    }
}

/// With probability `filler_prob`, prepends a uniformly chosen filler and a
/// space. The question's own first letter keeps its case.
pub fn add_filler<R: Rng + ?Sized>(input: &Fuzzed, config: &FuzzConfig, rng: &mut R) -> Fuzzed {
    let hit = rng.gen::<f64>() < config.filler_prob;
    if !hit || config.fillers.is_empty() {
        return input.clone();
    }
    let filler = &config.fillers[rng.gen_range(0..config.fillers.len())];
    let shift = filler.len() + 1;
    Fuzzed {
        text: format!("{filler} {}", input.text),
        spans: input
            .spans
            .iter()
            .map(|s| s.start + shift..s.end + shift)
            .collect(),
        edits: input.edits,
        filler: Some(filler.clone()),
    }
}

/// With probability `case_prob` per word start, flips the case of the word's
/// first letter. Word starts inside entity spans are skipped (one draw each
/// regardless).
pub fn perturb_case<R: Rng + ?Sized>(input: &Fuzzed, config: &FuzzConfig, rng: &mut R) -> Fuzzed {
    let cells = explode(input);
    let mut out = Vec::with_capacity(cells.len());
    let mut prev_space = true;
    for c in cells {
        let boundary = prev_space && !c.ch.is_whitespace();
        prev_space = c.ch.is_whitespace();
        if !boundary {
            out.push(c);
            continue;
        }
        let hit = rng.gen::<f64>() < config.case_prob;
        if hit && c.entity.is_none() && c.ch.is_alphabetic() {
            let flipped: Vec<char> = if c.ch.is_uppercase() {
                c.ch.to_lowercase().collect()
            } else {
                c.ch.to_uppercase().collect()
            };
            out.extend(flipped.into_iter().map(|ch| Cell { ch, entity: None }));
        } else {
            out.push(c);
        }
    }
    rebuild(&out, input.spans.len(), input.edits, input.filler.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharEdit {
    Swap,
    Delete,
    Duplicate,
}

/// Applies one edit at character index `at`: swap with the next character,
/// delete, or duplicate.
pub fn apply_edit(text: &str, at: usize, edit: CharEdit) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    match edit {
        CharEdit::Swap if at + 1 < chars.len() => chars.swap(at, at + 1),
        CharEdit::Swap => {}
        CharEdit::Delete => {
            chars.remove(at);
        }
        CharEdit::Duplicate => chars.insert(at, chars[at]),
    }
    chars.into_iter().collect()
}

/// With probability `char_noise_prob` per character outside entity spans,
/// applies a uniformly chosen [`CharEdit`]. A swap that would touch an entity
/// span or run off the end falls back to delete or duplicate.
pub fn char_noise<R: Rng + ?Sized>(input: &Fuzzed, config: &FuzzConfig, rng: &mut R) -> Fuzzed {
    let cells = explode(input);
    let mut out = Vec::with_capacity(cells.len() + 4);
    let mut edits = input.edits;
    let mut i = 0;
    while i < cells.len() {
        let c = cells[i];
        if c.entity.is_some() {
            out.push(c);
            i += 1;
            continue;
        }
        if rng.gen::<f64>() >= config.char_noise_prob {
            out.push(c);
            i += 1;
            continue;
        }
        edits += 1;
        let can_swap = i + 1 < cells.len() && cells[i + 1].entity.is_none();
        let edit = match rng.gen_range(0..3) {
            0 if can_swap => CharEdit::Swap,
            0 if rng.gen_bool(0.5) => CharEdit::Delete,
            0 => CharEdit::Duplicate,
            1 => CharEdit::Delete,
            _ => CharEdit::Duplicate,
        };
        match edit {
            CharEdit::Swap => {
                out.push(cells[i + 1]);
                out.push(c);
                i += 2;
            }
            CharEdit::Delete => i += 1,
            CharEdit::Duplicate => {
                out.push(c);
                out.push(c);
                i += 1;
            }
        }
    }
    rebuild(&out, input.spans.len(), edits, input.filler.clone())
}

/// Filler, then casing, then character noise.
pub fn fuzz_question<R: Rng + ?Sized>(
    question: &str,
    spans: &[Range<usize>],
    config: &FuzzConfig,
    rng: &mut R,
) -> Fuzzed {
    let f = Fuzzed::new(question, spans);
    let f = add_filler(&f, config, rng);
    let f = perturb_case(&f, config, rng);
    char_noise(&f, config, rng)
}
