//! Typed templates: baseline templates whose predicate slots are numbered in
//! application order and labeled with type signatures from a graph walk.
//!
//! Numbering recognizes three nesting constructions around each `[THING]`:
//!
//! * possessive `X 's [P]`: the slot applies to X; possessives bind tightest
//!   and apply left to right,
//! * prefix `the [P] of X` (also `[P] of X` and `[P] does X`): the slot
//!   applies to the whole phrase on its right; these apply inside out,
//! * verb suffix `X [P]` with no linker: the slot applies to the complete
//!   noun phrase X, so it comes last.
//!
//! So `the [NOUN] of [THING] 's [NOUN]` numbers as `the [NOUN-1] of [THING]
//! 's [NOUN-0]`, the order the predicates take in the SPARQL property path.

use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grammar::{is_predicate_slot, BaselineTemplate, THING_SLOT, VERB_ADP_SLOT, WH_SLOT};
use crate::kb_ingest::Pos;
use crate::typegraph::{
    sample_bidirectional_pair, sample_unidirectional_path, PredicatePath, TraversalPolicy,
    TypeGraph,
};
use crate::QuestionType;

/// Tokens that link a prefix slot to the noun phrase on its right.
const PREFIX_LINKERS: &[&str] = &["of", "does"];
const POSSESSIVE: &str = "'s";
const ARTICLE: &str = "the";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Slot {
    Word(String),
    Wh,
    Entity { chain: usize },
    Predicate { chain: usize, index: usize, pos: Pos },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NumberedTemplate {
    pub template: BaselineTemplate,
    pub slots: Vec<Slot>,
    /// Number of predicate slots in each entity's chain, in `[THING]` order.
    pub chain_lengths: Vec<usize>,
}

fn slot_pos(token: &str) -> Pos {
    if token == VERB_ADP_SLOT {
        Pos::VerbAdp
    } else {
        Pos::Noun
    }
}

fn chain_letter(chain: usize) -> char {
    (b'A' + chain as u8) as char
}

/// Numbers each predicate slot by the order it applies to its entity.
pub fn number_predicates(template: &BaselineTemplate) -> Result<NumberedTemplate> {
    let tokens = &template.tokens;
    let structural = |message: String| Error::Structure {
        template: template.text(),
        message,
    };
    let mut assigned: Vec<Option<(usize, usize)>> = vec![None; tokens.len()];
    let things: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| *t == THING_SLOT)
        .map(|(i, _)| i)
        .collect();
    let mut chain_lengths = Vec::with_capacity(things.len());

    for (chain, &at) in things.iter().enumerate() {
        let mut order = Vec::new();

        let mut j = at + 1;
        while j + 1 < tokens.len() && tokens[j] == POSSESSIVE && is_predicate_slot(&tokens[j + 1]) {
            order.push(j + 1);
            j += 2;
        }
        let verb_suffix = (j < tokens.len() && is_predicate_slot(&tokens[j])).then_some(j);

        let mut k = at;
        while k >= 2
            && PREFIX_LINKERS.contains(&tokens[k - 1].as_str())
            && is_predicate_slot(&tokens[k - 2])
        {
            order.push(k - 2);
            k -= 2;
            if k >= 1 && tokens[k - 1] == ARTICLE {
                k -= 1;
            }
        }
        order.extend(verb_suffix);

        for (index, &pos) in order.iter().enumerate() {
            if assigned[pos].is_some() {
                return Err(structural(format!("slot at token {pos} claimed by two entities")));
            }
            assigned[pos] = Some((chain, index));
        }
        chain_lengths.push(order.len());
    }

    let mut slots = Vec::with_capacity(tokens.len());
    let mut chain_of_thing = 0;
    for (i, tok) in tokens.iter().enumerate() {
        let slot = if tok == WH_SLOT {
            Slot::Wh
        } else if tok == THING_SLOT {
            chain_of_thing += 1;
            Slot::Entity {
                chain: chain_of_thing - 1,
            }
        } else if is_predicate_slot(tok) {
            let (chain, index) = assigned[i].ok_or_else(|| {
                structural(format!(
                    "predicate slot at token {i} is not attached by a registered construction"
                ))
            })?;
            Slot::Predicate {
                chain,
                index,
                pos: slot_pos(tok),
            }
        } else {
            Slot::Word(tok.clone())
        };
        slots.push(slot);
    }

    Ok(NumberedTemplate {
        template: template.clone(),
        slots,
        chain_lengths,
    })
}

impl NumberedTemplate {
    pub fn question_type(&self) -> QuestionType {
        self.template.question_type
    }

    /// POS requirement of each slot in `chain`, in application order.
    pub fn chain_slots(&self, chain: usize) -> Vec<Option<Pos>> {
        let mut out = vec![None; self.chain_lengths[chain]];
        for s in &self.slots {
            if let Slot::Predicate { chain: c, index, pos } = s {
                if *c == chain {
                    out[*index] = Some(*pos);
                }
            }
        }
        out
    }

    fn marker(&self, chain: usize, index: usize, pos: Pos) -> String {
        if self.chain_lengths.len() > 1 {
            format!("[{pos}-{}{index}]", chain_letter(chain))
        } else {
            format!("[{pos}-{index}]")
        }
    }

    pub fn render(&self) -> String {
        self.slots
            .iter()
            .map(|s| match s {
                Slot::Word(w) => w.clone(),
                Slot::Wh => WH_SLOT.to_string(),
                Slot::Entity { .. } => THING_SLOT.to_string(),
                Slot::Predicate { chain, index, pos } => self.marker(*chain, *index, *pos),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for NumberedTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TypedTemplate {
    pub numbered: NumberedTemplate,
    /// Required type of each entity slot, in chain order.
    pub entity_types: Vec<String>,
    /// One path per chain; slot `i` of chain `c` has signature `paths[c].steps[i]`.
    pub paths: Vec<PredicatePath>,
    pub wh_range_type: String,
}

impl TypedTemplate {
    /// Assembles a typed template from explicit paths, checking that each
    /// path starts at its entity type, chains, matches its slots' count and
    /// POS, and that multi-chain paths meet on one type.
    pub fn from_paths(
        numbered: NumberedTemplate,
        entity_types: Vec<String>,
        paths: Vec<PredicatePath>,
    ) -> Result<Self> {
        let fail = |m: String| {
            Err(Error::Structure {
                template: numbered.render(),
                message: m,
            })
        };
        if entity_types.len() != numbered.chain_lengths.len() || paths.len() != entity_types.len() {
            return fail(format!(
                "{} chain(s) but {} entity type(s) and {} path(s)",
                numbered.chain_lengths.len(),
                entity_types.len(),
                paths.len()
            ));
        }
        for (c, (path, ty)) in paths.iter().zip(&entity_types).enumerate() {
            if &path.start_type != ty || !path.is_chained() {
                return fail(format!("path {c} does not start at `{ty}` or does not chain"));
            }
            let wanted = numbered.chain_slots(c);
            if path.len() != wanted.len() {
                return fail(format!("path {c} has {} steps for {} slots", path.len(), wanted.len()));
            }
            if path.steps.iter().zip(&wanted).any(|(s, w)| s.pos != *w) {
                return fail(format!("path {c} POS constraints differ from its slots"));
            }
        }
        if paths.windows(2).any(|w| w[0].end_type != w[1].end_type) {
            return fail("chains do not end on a shared type".into());
        }
        let wh_range_type = paths[0].end_type.clone();
        Ok(TypedTemplate {
            numbered,
            entity_types,
            paths,
            wh_range_type,
        })
    }

    pub fn question_type(&self) -> QuestionType {
        self.numbered.question_type()
    }

    /// Template tokens with typed markers, e.g. `[NOUN-0:film->person]`.
    pub fn tokens(&self) -> Vec<String> {
        self.numbered
            .slots
            .iter()
            .map(|s| match s {
                Slot::Word(w) => w.clone(),
                Slot::Wh => WH_SLOT.to_string(),
                Slot::Entity { chain } => format!("[THING:{}]", self.entity_types[*chain]),
                Slot::Predicate { chain, index, pos } => {
                    let step = &self.paths[*chain].steps[*index];
                    let marker = self.numbered.marker(*chain, *index, *pos);
                    format!("{}:{}->{}]", &marker[..marker.len() - 1], step.from, step.to)
                }
            })
            .collect()
    }
}

/// Knobs for typing templates against the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TypingConfig {
    pub policy: TraversalPolicy,
    /// Fresh entity-type draws before giving up on one template instance.
    pub max_retries: usize,
    /// Redraws of the second chain per first-chain draw.
    pub bidirectional_attempts: usize,
}

impl Default for TypingConfig {
    fn default() -> Self {
        TypingConfig {
            policy: TraversalPolicy::EdgeUniform,
            max_retries: 32,
            bidirectional_attempts: 64,
        }
    }
}

/// Types `numbered` for the given entity types by sampling one path per chain
/// (a meeting pair for two chains).
pub fn type_chains<R: Rng + ?Sized>(
    numbered: &NumberedTemplate,
    graph: &TypeGraph,
    entity_types: &[String],
    config: &TypingConfig,
    rng: &mut R,
) -> Result<TypedTemplate> {
    let slots: Vec<Vec<Option<Pos>>> = (0..numbered.chain_lengths.len())
        .map(|c| numbered.chain_slots(c))
        .collect();
    for (ty, s) in entity_types.iter().zip(&slots) {
        if !s.is_empty() && !graph.contains(ty) {
            return Err(Error::DeadEnd {
                partial: PredicatePath::empty(ty.clone()),
            });
        }
    }
    let paths = match slots.as_slice() {
        [a] => vec![sample_unidirectional_path(graph, &entity_types[0], a, config.policy, rng)?],
        [a, b] => {
            let (pa, pb) = sample_bidirectional_pair(
                graph,
                &entity_types[0],
                a,
                &entity_types[1],
                b,
                config.policy,
                config.bidirectional_attempts,
                rng,
            )?;
            vec![pa, pb]
        }
        other => {
            return Err(Error::Contract(format!(
                "templates with {} entity slots are not supported",
                other.len()
            )))
        }
    };
    TypedTemplate::from_paths(numbered.clone(), entity_types.to_vec(), paths)
}

/// Picks an entity type per `[THING]` uniformly from `pool` and types the
/// template, redrawing on dead ends up to `config.max_retries` times.
pub fn assign_types<R: Rng + ?Sized>(
    numbered: &NumberedTemplate,
    graph: &TypeGraph,
    pool: &[String],
    config: &TypingConfig,
    rng: &mut R,
) -> Result<TypedTemplate> {
    if pool.is_empty() {
        return Err(Error::Contract("entity type pool is empty".into()));
    }
    let mut last = None;
    for _ in 0..config.max_retries.max(1) {
        let types: Vec<String> = numbered
            .chain_lengths
            .iter()
            .map(|_| pool[rng.gen_range(0..pool.len())].clone())
            .collect();
        match type_chains(numbered, graph, &types, config, rng) {
            Err(e @ Error::DeadEnd { .. }) => last = Some(e),
            other => return other,
        }
    }
    Err(last.expect("at least one attempt"))
}
