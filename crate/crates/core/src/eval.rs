//! Query scoring: spacing normalization, subset validation, BLEU and ROUGE.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::QuestionType;

const PUNCT: &[char] = &['{', '}', '(', ')', '.', '/', '[', ']'];

/// Splits a query into tokens. A `[` with a later `]` yields `[`, the
/// whitespace-collapsed content (when non-empty) and `]`, so entity labels
/// survive as single tokens.
fn query_tokens(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut word = String::new();
    let flush = |word: &mut String, tokens: &mut Vec<String>| {
        if !word.is_empty() {
            tokens.push(std::mem::take(word));
        }
    };
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '[' {
            if let Some(close) = chars[i + 1..].iter().position(|&c| c == ']') {
                flush(&mut word, &mut tokens);
                let inner: String = chars[i + 1..i + 1 + close].iter().collect();
                let inner = inner.split_whitespace().collect::<Vec<_>>().join(" ");
                tokens.push("[".into());
                if !inner.is_empty() {
                    tokens.push(inner);
                }
                tokens.push("]".into());
                i += close + 2;
                continue;
            }
        }
        if c.is_whitespace() {
            flush(&mut word, &mut tokens);
        } else if PUNCT.contains(&c) {
            flush(&mut word, &mut tokens);
            tokens.push(c.to_string());
        } else {
            word.push(c);
        }
        i += 1;
    }
    flush(&mut word, &mut tokens);
    tokens
}

/// Collapses whitespace and puts single spaces around `{ } ( ) . / [ ]`.
/// Text inside `[ ... ]` only has its whitespace collapsed.
pub fn normalize_query(text: &str) -> String {
    query_tokens(text).join(" ")
}

/// Whitespace tokens of the normalized query.
pub fn tokenize(text: &str, normalize: bool) -> Vec<String> {
    if normalize {
        normalize_query(text)
    } else {
        text.to_string()
    }
    .split_whitespace()
    .map(String::from)
    .collect()
}

/// First token outside the supported query subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetError {
    pub position: usize,
    /// The offending token, or empty at end of input.
    pub token: String,
    pub expected: String,
}

impl fmt::Display for SubsetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.token.is_empty() {
            write!(f, "unexpected end of query at token {}, expected {}", self.position, self.expected)
        } else {
            write!(
                f,
                "unexpected token `{}` at position {}, expected {}",
                self.token, self.position, self.expected
            )
        }
    }
}

impl std::error::Error for SubsetError {}

/// A query in one of the five supported shapes. Entities and chains are in
/// query order, with a `BIND` entity carrying an empty chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedQuery {
    pub question_type: QuestionType,
    pub entities: Vec<String>,
    pub chains: Vec<Vec<String>>,
}

struct Parser {
    tokens: Vec<String>,
    at: usize,
}

impl Parser {
    fn peek(&self) -> Option<&str> {
        self.tokens.get(self.at).map(String::as_str)
    }

    fn fail<T>(&self, expected: &str) -> Result<T, SubsetError> {
        Err(SubsetError {
            position: self.at,
            token: self.peek().unwrap_or("").to_string(),
            expected: expected.to_string(),
        })
    }

    fn expect(&mut self, tok: &str) -> Result<(), SubsetError> {
        if self.peek() == Some(tok) {
            self.at += 1;
            Ok(())
        } else {
            self.fail(&format!("`{tok}`"))
        }
    }

    fn entity(&mut self) -> Result<String, SubsetError> {
        self.expect("[")?;
        match self.peek() {
            Some(label) if label != "]" => {
                let label = label.to_string();
                self.at += 1;
                self.expect("]")?;
                Ok(label)
            }
            _ => self.fail("entity label"),
        }
    }

    fn predicate(&mut self) -> Result<String, SubsetError> {
        let id = self
            .peek()
            .and_then(|t| t.strip_prefix("wdt:"))
            .filter(|id| {
                id.strip_prefix('P')
                    .is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
            })
            .map(String::from);
        match id {
            Some(id) => {
                self.at += 1;
                Ok(id)
            }
            None => self.fail("`wdt:P<digits>`"),
        }
    }

    /// `[ E ] wdt:P1 / wdt:P2 ?end .`
    fn triple(&mut self) -> Result<(String, Vec<String>), SubsetError> {
        let e = self.entity()?;
        let mut chain = vec![self.predicate()?];
        while self.peek() == Some("/") {
            self.at += 1;
            chain.push(self.predicate()?);
        }
        self.expect("?end")?;
        self.expect(".")?;
        Ok((e, chain))
    }

    /// `BIND ( [ E ] as ?end ) .`
    fn bind(&mut self) -> Result<String, SubsetError> {
        self.expect("BIND")?;
        self.expect("(")?;
        let e = self.entity()?;
        self.expect("as")?;
        self.expect("?end")?;
        self.expect(")")?;
        self.expect(".")?;
        Ok(e)
    }

    fn clause(&mut self) -> Result<(String, Vec<String>), SubsetError> {
        match self.peek() {
            Some("BIND") => Ok((self.bind()?, vec![])),
            Some("[") => self.triple(),
            _ => self.fail("`BIND` or `[`"),
        }
    }

    fn query(&mut self) -> Result<ParsedQuery, SubsetError> {
        let parsed = match self.peek() {
            Some("SELECT") => {
                self.at += 1;
                let count = self.peek() == Some("(");
                if count {
                    for t in ["(", "COUNT", "(", "DISTINCT", "?end", ")", "as", "?endcount", ")"] {
                        self.expect(t)?;
                    }
                } else {
                    self.expect("?end")?;
                }
                self.expect("WHERE")?;
                self.expect("{")?;
                let (e, chain) = if count { self.triple()? } else { self.clause()? };
                self.expect("}")?;
                ParsedQuery {
                    question_type: if count {
                        QuestionType::Count
                    } else {
                        QuestionType::SingleEntity
                    },
                    entities: vec![e],
                    chains: vec![chain],
                }
            }
            Some("ASK") => {
                self.at += 1;
                self.expect("{")?;
                let (e1, c1) = self.clause()?;
                let (e2, c2) = self.triple()?;
                self.expect("}")?;
                ParsedQuery {
                    question_type: QuestionType::MultiEntity,
                    entities: vec![e1, e2],
                    chains: vec![c1, c2],
                }
            }
            _ => return self.fail("`SELECT` or `ASK`"),
        };
        if self.at < self.tokens.len() {
            return self.fail("end of query");
        }
        Ok(parsed)
    }
}

/// Parses a query against the grammar of the five emitted shapes.
pub fn parse_query(text: &str) -> Result<ParsedQuery, SubsetError> {
    Parser {
        tokens: query_tokens(text),
        at: 0,
    }
    .query()
}

pub fn validate_sparql_subset(text: &str) -> Result<(), SubsetError> {
    parse_query(text).map(|_| ())
}

fn ngrams<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for w in tokens.windows(n) {
        *counts
            .entry(w.iter().map(AsRef::as_ref).collect())
            .or_insert(0) += 1;
    }
    counts
}

fn overlap(a: &HashMap<Vec<&str>, usize>, b: &HashMap<Vec<&str>, usize>) -> usize {
    a.iter()
        .map(|(g, &c)| c.min(b.get(g).copied().unwrap_or(0)))
        .sum()
}

/// Clipped n-gram matches and total candidate n-grams for one pair.
pub fn modified_precision<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> (usize, usize) {
    if n == 0 {
        return (0, 0);
    }
    let cand = ngrams(candidate, n);
    let total = (candidate.len() + 1).saturating_sub(n);
    (overlap(&cand, &ngrams(reference, n)), total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BleuSmoothing {
    #[default]
    None,
    /// Add one to matches and totals for orders above 1.
    AddOne,
}

/// Corpus BLEU-4 with uniform weights and a single reference per candidate.
/// Orders for which the corpus has no candidate n-grams at all are left out
/// of the geometric mean.
pub fn bleu<S: AsRef<str> + Sync>(
    candidates: &[Vec<S>],
    references: &[Vec<S>],
    smoothing: BleuSmoothing,
) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(Error::Contract(format!(
            "bleu: {} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::Contract("bleu: empty corpus".into()));
    }
    const N: usize = 4;
    let mut matched = [0usize; N];
    let mut total = [0usize; N];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        c_len += c.len();
        r_len += r.len();
        for n in 1..=N {
            let (m, t) = modified_precision(c, r, n);
            matched[n - 1] += m;
            total[n - 1] += t;
        }
    }
    if c_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    let mut orders = 0;
    for n in 0..N {
        if total[n] == 0 {
            continue;
        }
        let (m, t) = match smoothing {
            BleuSmoothing::AddOne if n > 0 => (matched[n] + 1, total[n] + 1),
            _ => (matched[n], total[n]),
        };
        if m == 0 {
            return Ok(0.0);
        }
        log_sum += (m as f64 / t as f64).ln();
        orders += 1;
    }
    let bp = if c_len > r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    Ok(bp * (log_sum / orders as f64).exp())
}

fn f1(hits: f64, cand: f64, reference: f64) -> f64 {
    if hits == 0.0 || cand == 0.0 || reference == 0.0 {
        return 0.0;
    }
    let (p, r) = (hits / cand, hits / reference);
    2.0 * p * r / (p + r)
}

/// ROUGE-N F1 for one pair.
pub fn rouge_n<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> f64 {
    let (c, r) = (ngrams(candidate, n), ngrams(reference, n));
    let hits = overlap(&c, &r);
    f1(
        hits as f64,
        c.values().sum::<usize>() as f64,
        r.values().sum::<usize>() as f64,
    )
}

fn lcs_len<S: AsRef<str>>(a: &[S], b: &[S]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x.as_ref() == y.as_ref() {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 for one pair.
pub fn rouge_l<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> f64 {
    f1(
        lcs_len(candidate, reference) as f64,
        candidate.len() as f64,
        reference.len() as f64,
    )
}

/// Weighted LCS by dynamic programming, rewarding consecutive matches with
/// `f(k) = k^exponent`.
pub fn weighted_lcs<S: AsRef<str>>(reference: &[S], candidate: &[S], exponent: f64) -> f64 {
    let f = |k: usize| (k as f64).powf(exponent);
    let (m, n) = (reference.len(), candidate.len());
    let mut c = vec![vec![0.0f64; n + 1]; m + 1];
    let mut w = vec![vec![0usize; n + 1]; m + 1];
    for i in 1..=m {
        for j in 1..=n {
            if reference[i - 1].as_ref() == candidate[j - 1].as_ref() {
                let k = w[i - 1][j - 1];
                c[i][j] = c[i - 1][j - 1] + f(k + 1) - f(k);
                w[i][j] = k + 1;
            } else if c[i - 1][j] > c[i][j - 1] {
                c[i][j] = c[i - 1][j];
            } else {
                c[i][j] = c[i][j - 1];
            }
        }
    }
    c[m][n]
}

/// ROUGE-W F-measure (β = 1) for one pair, with recall and precision
/// normalized through `f^-1(WLCS / f(len))`.
pub fn rouge_w<S: AsRef<str>>(candidate: &[S], reference: &[S], exponent: f64) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let wlcs = weighted_lcs(reference, candidate, exponent);
    if wlcs == 0.0 {
        return 0.0;
    }
    let inv = |x: f64| x.powf(1.0 / exponent);
    let r = inv(wlcs / (reference.len() as f64).powf(exponent));
    let p = inv(wlcs / (candidate.len() as f64).powf(exponent));
    2.0 * p * r / (p + r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub normalize: bool,
    pub bleu_smoothing: BleuSmoothing,
    pub rouge_w_exponent: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            normalize: true,
            bleu_smoothing: BleuSmoothing::None,
            rouge_w_exponent: 1.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bleu: f64,
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
    pub rouge_w: f64,
    pub n: usize,
}

impl MetricsReport {
    /// Two-line aligned table, scores to 5 decimals.
    pub fn table(&self, dataset: &str) -> String {
        let width = dataset.len().max("Dataset".len());
        let mut out = format!(
            "{:<width$}  {:>7}  {:>7}  {:>7}  {:>7}  {:>7}\n",
            "Dataset", "BLEU", "ROUGE-1", "ROUGE-2", "ROUGE-L", "ROUGE-W"
        );
        out.push_str(&format!(
            "{:<width$}  {:>7.5}  {:>7.5}  {:>7.5}  {:>7.5}  {:>7.5}\n",
            dataset, self.bleu, self.rouge_1, self.rouge_2, self.rouge_l, self.rouge_w
        ));
        out
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.table("corpus"))
    }
}

/// Scores aligned prediction and gold queries.
pub fn score_lines(pred: &[String], gold: &[String], opts: &EvalOptions) -> Result<MetricsReport> {
    if pred.len() != gold.len() {
        return Err(Error::Contract(format!(
            "{} predicted lines but {} gold lines",
            pred.len(),
            gold.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Contract("no query pairs to score".into()));
    }
    if opts.rouge_w_exponent <= 1.0 {
        return Err(Error::Config(format!(
            "ROUGE-W exponent must exceed 1, got {}",
            opts.rouge_w_exponent
        )));
    }
    let cands: Vec<Vec<String>> = pred.par_iter().map(|l| tokenize(l, opts.normalize)).collect();
    let refs: Vec<Vec<String>> = gold.par_iter().map(|l| tokenize(l, opts.normalize)).collect();
    let per_pair: Vec<[f64; 4]> = cands
        .par_iter()
        .zip(refs.par_iter())
        .map(|(c, r)| {
            [
                rouge_n(c, r, 1),
                rouge_n(c, r, 2),
                rouge_l(c, r),
                rouge_w(c, r, opts.rouge_w_exponent),
            ]
        })
        .collect();
    let n = per_pair.len();
    let mean = |k: usize| per_pair.iter().map(|s| s[k]).sum::<f64>() / n as f64;
    Ok(MetricsReport {
        bleu: bleu(&cands, &refs, opts.bleu_smoothing)?,
        rouge_1: mean(0),
        rouge_2: mean(1),
        rouge_l: mean(2),
        rouge_w: mean(3),
        n,
    })
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(String::from).collect())
}

/// Scores two line-aligned query files.
pub fn score_corpus(pred: impl AsRef<Path>, gold: impl AsRef<Path>, opts: &EvalOptions) -> Result<MetricsReport> {
    score_lines(&read_lines(pred.as_ref())?, &read_lines(gold.as_ref())?, opts)
}
