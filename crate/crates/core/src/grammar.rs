//! Context-free grammars whose bounded language is the set of baseline
//! question templates.
//!
//! Grammar source is line oriented:
//!
//! ```text
//! %type single-entity
//! S -> "[WH]" IS Q "?"
//! IS -> "is" | "was"
//! NOUN -> "[THING]" | NOUN "'s [NOUN]"
//!       | "the [NOUN] of" NOUN
//! ```
//!
//! Terminals are double-quoted and may hold several whitespace-separated
//! tokens. A line starting with `|` continues the previous rule. `#` starts a
//! comment outside quotes. The first rule's left-hand side is the start symbol.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::QuestionType;

pub const WH_SLOT: &str = "[WH]";
pub const THING_SLOT: &str = "[THING]";
pub const NOUN_SLOT: &str = "[NOUN]";
pub const VERB_ADP_SLOT: &str = "[VERB-ADP]";

pub fn is_predicate_slot(token: &str) -> bool {
    token == NOUN_SLOT || token == VERB_ADP_SLOT
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Symbol {
    Terminal(String),
    Nonterminal(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub lhs: String,
    pub alternatives: Vec<Vec<Symbol>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    pub name: String,
    pub start_symbol: String,
    pub question_type: QuestionType,
    /// Rules in source order.
    pub rules: Vec<Rule>,
    /// Non-fatal diagnostics, e.g. unreachable nonterminals.
    pub warnings: Vec<String>,
    index: HashMap<String, usize>,
}

impl Grammar {
    pub fn alternatives(&self, nonterminal: &str) -> &[Vec<Symbol>] {
        self.index
            .get(nonterminal)
            .map(|&i| self.rules[i].alternatives.as_slice())
            .unwrap_or(&[])
    }

    pub fn nonterminals(&self) -> impl Iterator<Item = &str> {
        self.rules.iter().map(|r| r.lhs.as_str())
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        parse_grammar(&text)
            .map(|g| g.with_name(name))
            .map_err(|e| match e {
                Error::Grammar(msg) => Error::Grammar(format!("{}: {msg}", path.display())),
                other => other,
            })
    }
}

enum Piece {
    Sym(Symbol),
    Bar,
}

fn syntax_error(line: usize, msg: impl fmt::Display) -> Error {
    Error::Grammar(format!("line {line}: {msg}"))
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-'
}

fn lex_rhs(text: &str, line: usize) -> Result<Vec<Piece>> {
    let mut out = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '#' {
            break;
        } else if c == '|' {
            chars.next();
            out.push(Piece::Bar);
        } else if c == '"' {
            chars.next();
            let mut lit = String::new();
            loop {
                match chars.next() {
                    Some('\\') => match chars.next() {
                        Some(e) => lit.push(e),
                        None => return Err(syntax_error(line, "dangling escape")),
                    },
                    Some('"') => break,
                    Some(ch) => lit.push(ch),
                    None => return Err(syntax_error(line, "unterminated terminal")),
                }
            }
            out.push(Piece::Sym(Symbol::Terminal(lit)));
        } else if is_ident_char(c) {
            let mut ident = String::new();
            while let Some(&ch) = chars.peek() {
                if !is_ident_char(ch) {
                    break;
                }
                ident.push(ch);
                chars.next();
            }
            out.push(Piece::Sym(Symbol::Nonterminal(ident)));
        } else {
            return Err(syntax_error(line, format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

fn split_alternatives(pieces: Vec<Piece>, line: usize) -> Result<Vec<Vec<Symbol>>> {
    let mut alts = vec![Vec::new()];
    for piece in pieces {
        match piece {
            Piece::Bar => alts.push(Vec::new()),
            Piece::Sym(s) => alts.last_mut().unwrap().push(s),
        }
    }
    if alts.iter().any(Vec::is_empty) {
        return Err(syntax_error(line, "empty alternative"));
    }
    Ok(alts)
}

/// Parses and validates grammar source.
pub fn parse_grammar(text: &str) -> Result<Grammar> {
    let mut rules: Vec<Rule> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut question_type = QuestionType::SingleEntity;
    let mut current: Option<usize> = None;

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(directive) = line.strip_prefix('%') {
            let directive = directive.split('#').next().unwrap_or("").trim();
            match directive.split_once(char::is_whitespace) {
                Some(("type", value)) => {
                    question_type = value
                        .parse()
                        .map_err(|e: Error| syntax_error(line_no, e))?;
                }
                _ => return Err(syntax_error(line_no, format!("unknown directive `%{directive}`"))),
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix('|') {
            let i = current.ok_or_else(|| syntax_error(line_no, "continuation without a rule"))?;
            let alts = split_alternatives(lex_rhs(rest, line_no)?, line_no)?;
            rules[i].alternatives.extend(alts);
            continue;
        }
        let (lhs, rhs) = line
            .split_once("->")
            .ok_or_else(|| syntax_error(line_no, "expected `->`"))?;
        let lhs = lhs.trim();
        if lhs.is_empty() || !lhs.chars().all(is_ident_char) {
            return Err(syntax_error(line_no, format!("invalid nonterminal `{lhs}`")));
        }
        let alts = split_alternatives(lex_rhs(rhs, line_no)?, line_no)?;
        let i = *index.entry(lhs.to_string()).or_insert_with(|| {
            rules.push(Rule {
                lhs: lhs.to_string(),
                alternatives: Vec::new(),
            });
            rules.len() - 1
        });
        rules[i].alternatives.extend(alts);
        current = Some(i);
    }

    let start_symbol = rules
        .first()
        .map(|r| r.lhs.clone())
        .ok_or_else(|| Error::Grammar("grammar has no rules".into()))?;

    for rule in &rules {
        for alt in &rule.alternatives {
            for sym in alt {
                if let Symbol::Nonterminal(nt) = sym {
                    if !index.contains_key(nt) {
                        return Err(Error::Grammar(format!("undefined nonterminal {nt}")));
                    }
                }
            }
        }
    }

    let mut reachable = HashSet::new();
    let mut stack = vec![start_symbol.as_str()];
    while let Some(nt) = stack.pop() {
        if !reachable.insert(nt) {
            continue;
        }
        for alt in &rules[index[nt]].alternatives {
            for sym in alt {
                if let Symbol::Nonterminal(next) = sym {
                    stack.push(next);
                }
            }
        }
    }
    let warnings: Vec<String> = rules
        .iter()
        .filter(|r| !reachable.contains(r.lhs.as_str()))
        .map(|r| format!("unreachable nonterminal {}", r.lhs))
        .collect();
    for w in &warnings {
        log::warn!("{w}");
    }

    Ok(Grammar {
        name: question_type.as_str().replace('-', "_"),
        start_symbol,
        question_type,
        rules,
        warnings,
        index,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BaselineTemplate {
    pub id: String,
    pub tokens: Vec<String>,
    /// Height of the shallowest derivation tree producing these tokens.
    pub depth: usize,
    pub question_type: QuestionType,
}

impl BaselineTemplate {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn predicate_slots(&self) -> usize {
        self.tokens.iter().filter(|t| is_predicate_slot(t)).count()
    }

    pub fn entity_slots(&self) -> usize {
        self.tokens.iter().filter(|t| *t == THING_SLOT).count()
    }

    /// Checks slot counts for the template's question type. Single-entity
    /// templates may have no predicate slot (the `BIND` form); the other types
    /// need at least one.
    pub fn check_slots(&self) -> Result<()> {
        let fail = |message: String| {
            Err(Error::Structure {
                template: self.text(),
                message,
            })
        };
        let things = self.entity_slots();
        if things != self.question_type.entity_slots() {
            return fail(format!(
                "{} template has {things} [THING] slot(s), expected {}",
                self.question_type,
                self.question_type.entity_slots()
            ));
        }
        if self.question_type != QuestionType::SingleEntity && self.predicate_slots() == 0 {
            return fail(format!("{} template has no predicate slot", self.question_type));
        }
        Ok(())
    }
}

impl fmt::Display for BaselineTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

type Sentence = Vec<String>;

/// Sentences derivable from `symbols` when every nonterminal child may use
/// trees from `level` (the previous height's languages).
fn expand_alternative(symbols: &[Symbol], level: &HashMap<&str, Vec<Sentence>>) -> Vec<Sentence> {
    let mut partial: Vec<Sentence> = vec![Vec::new()];
    for sym in symbols {
        match sym {
            Symbol::Terminal(t) => {
                for s in &mut partial {
                    s.extend(t.split_whitespace().map(str::to_string));
                }
            }
            Symbol::Nonterminal(nt) => {
                let options = level.get(nt.as_str()).map(Vec::as_slice).unwrap_or(&[]);
                if options.is_empty() {
                    return Vec::new();
                }
                let mut next = Vec::with_capacity(partial.len() * options.len());
                for prefix in &partial {
                    for opt in options {
                        let mut s = prefix.clone();
                        s.extend(opt.iter().cloned());
                        next.push(s);
                    }
                }
                partial = next;
            }
        }
    }
    partial
}

/// Every distinct token sequence derivable with a derivation tree of height at
/// most `max_depth`, each tagged with its minimal height.
///
/// Results are ordered by minimal depth, then by the order the derivation at
/// that depth produces them (alternatives in source order, leftmost symbol
/// varying slowest).
pub fn enumerate_templates(grammar: &Grammar, max_depth: usize) -> Result<Vec<BaselineTemplate>> {
    if max_depth == 0 {
        return Err(Error::Contract("max_depth must be at least 1".into()));
    }
    let mut level: HashMap<&str, Vec<Sentence>> = HashMap::new();
    let mut found: HashSet<Sentence> = HashSet::new();
    let mut ordered: Vec<(Sentence, usize)> = Vec::new();

    for height in 1..=max_depth {
        let mut next: HashMap<&str, Vec<Sentence>> = HashMap::new();
        for rule in &grammar.rules {
            let mut seen = HashSet::new();
            let mut lang = Vec::new();
            for alt in &rule.alternatives {
                for s in expand_alternative(alt, &level) {
                    if seen.insert(s.clone()) {
                        lang.push(s);
                    }
                }
            }
            next.insert(rule.lhs.as_str(), lang);
        }
        level = next;
        for s in &level[grammar.start_symbol.as_str()] {
            if found.insert(s.clone()) {
                ordered.push((s.clone(), height));
            }
        }
    }

    Ok(ordered
        .into_iter()
        .enumerate()
        .map(|(i, (tokens, depth))| BaselineTemplate {
            id: format!("{}/{i:04}", grammar.name),
            tokens,
            depth,
            question_type: grammar.question_type,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TemplateStats {
    pub count: usize,
    pub mean_depth: f64,
    pub per_type: BTreeMap<QuestionType, usize>,
}

pub fn template_stats(templates: &[BaselineTemplate]) -> TemplateStats {
    let mut per_type = BTreeMap::new();
    for t in templates {
        *per_type.entry(t.question_type).or_insert(0) += 1;
    }
    let mean_depth = if templates.is_empty() {
        0.0
    } else {
        templates.iter().map(|t| t.depth as f64).sum::<f64>() / templates.len() as f64
    };
    TemplateStats {
        count: templates.len(),
        mean_depth,
        per_type,
    }
}

impl fmt::Display for TemplateStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "templates\t{}", self.count)?;
        writeln!(f, "mean depth\t{:.2}", self.mean_depth)?;
        for (qt, n) in &self.per_type {
            writeln!(f, "{qt}\t{n}")?;
        }
        Ok(())
    }
}

pub const SINGLE_ENTITY_CFG: &str = include_str!("../grammars/single_entity.cfg");
pub const MULTI_ENTITY_CFG: &str = include_str!("../grammars/multi_entity.cfg");
pub const COUNT_CFG: &str = include_str!("../grammars/count.cfg");

/// The three shipped grammars, one per question type.
pub fn default_grammars() -> Vec<Grammar> {
    [
        ("single_entity", SINGLE_ENTITY_CFG),
        ("multi_entity", MULTI_ENTITY_CFG),
        ("count", COUNT_CFG),
    ]
    .into_iter()
    .map(|(name, src)| {
        parse_grammar(src)
            .expect("shipped grammar parses")
            .with_name(name)
    })
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGLE_ENTITY_CFG: &str = r#"
S -> "[WH]" IS Q "?"
IS -> "is" | "was"
Q -> NOUN | VERB-ADP
NOUN -> "[THING]" | NOUN "'s [NOUN]" | "the [NOUN] of" NOUN
VERB-ADP -> NOUN "[VERB-ADP]"
"#;

    #[test]
    fn parses_single_entity_grammar() {
        let g = parse_grammar(SINGLE_ENTITY_CFG).unwrap();
        let nts: Vec<&str> = g.nonterminals().collect();
        assert_eq!(nts, vec!["S", "IS", "Q", "NOUN", "VERB-ADP"]);
        assert_eq!(g.start_symbol, "S");
        assert_eq!(g.alternatives("NOUN").len(), 3);
        assert!(g.warnings.is_empty());
    }

    #[test]
    fn minimal_grammar() {
        let g = parse_grammar(r#"S -> "x""#).unwrap();
        assert_eq!(g.rules.len(), 1);
        let t = enumerate_templates(&g, 1).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].tokens, vec!["x"]);
        assert_eq!(t[0].depth, 1);
    }

    #[test]
    fn undefined_nonterminal_is_named() {
        let err = parse_grammar("S -> VP \"x\"").unwrap_err();
        assert_eq!(err.to_string(), "grammar: undefined nonterminal VP");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        let err = parse_grammar("S -> \"x\"\n\nT => \"y\"").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = parse_grammar("S -> \"x").unwrap_err();
        assert!(err.to_string().contains("unterminated"), "{err}");
        let err = parse_grammar("S -> \"x\" | ").unwrap_err();
        assert!(err.to_string().contains("empty alternative"), "{err}");
    }

    #[test]
    fn unreachable_nonterminal_is_a_warning() {
        let g = parse_grammar("S -> \"x\"\nT -> \"y\"").unwrap();
        assert_eq!(g.warnings, vec!["unreachable nonterminal T"]);
    }

    #[test]
    fn continuation_lines_and_directives() {
        let g = parse_grammar("%type count\nS -> \"a\" # trailing\n  | \"b\"\n").unwrap();
        assert_eq!(g.question_type, QuestionType::Count);
        assert_eq!(g.alternatives("S").len(), 2);
        assert!(parse_grammar("%flavor x\nS -> \"a\"").is_err());
    }

    #[test]
    fn nested_template_is_enumerated() {
        let g = parse_grammar(SINGLE_ENTITY_CFG).unwrap();
        let t = enumerate_templates(&g, 5).unwrap();
        let texts: Vec<String> = t.iter().map(|t| t.text()).collect();
        assert!(texts.contains(&"[WH] was the [NOUN] of [THING] 's [NOUN] ?".to_string()));
        assert!(texts.contains(&"[WH] is [THING] [VERB-ADP] ?".to_string()));
        assert_eq!(t[0].text(), "[WH] is [THING] ?");
        assert_eq!(t[0].depth, 3);
        // 2^h - 1 NOUN derivations of height <= h, but "the [NOUN] of [THING] 's [NOUN]"
        // has two of them, leaving 6 distinct strings at height 3:
        // 2 * (6 + 3) templates at height 5.
        assert_eq!(t.len(), 18);
    }

    #[test]
    fn unproductive_grammar_yields_nothing() {
        let g = parse_grammar("S -> S \"x\"").unwrap();
        assert!(enumerate_templates(&g, 4).unwrap().is_empty());
        assert!(enumerate_templates(&g, 0).is_err());
    }

    #[test]
    fn stats_of_small_lists() {
        let t = BaselineTemplate {
            id: "a".into(),
            tokens: vec!["x".into()],
            depth: 5,
            question_type: QuestionType::Count,
        };
        let s = template_stats(&[t]);
        assert_eq!(format!("{:.2}", s.mean_depth), "5.00");
        let empty = template_stats(&[]);
        assert_eq!(empty.count, 0);
        assert_eq!(empty.mean_depth, 0.0);
    }

    #[test]
    fn shipped_grammars_satisfy_slot_invariants() {
        for g in default_grammars() {
            let ts = enumerate_templates(&g, 6).unwrap();
            assert!(!ts.is_empty(), "{}", g.name);
            for t in &ts {
                t.check_slots().unwrap();
            }
        }
    }

    #[test]
    fn slot_check_rejects_wrong_entity_count() {
        let t = BaselineTemplate {
            id: "x".into(),
            tokens: "Is [THING] 's [NOUN] ?".split(' ').map(String::from).collect(),
            depth: 3,
            question_type: QuestionType::MultiEntity,
        };
        assert!(matches!(t.check_slots(), Err(Error::Structure { .. })));
    }
}
