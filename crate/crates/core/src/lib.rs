//! Synthetic question/query dataset generation over a typed knowledge-base slice.
//!
//! The pipeline runs in three layers:
//!
//! 1. [`grammar`] enumerates baseline question templates from one context-free
//!    grammar per question type.
//! 2. [`template_gen`] numbers each template's predicate slots in the order the
//!    predicates are applied, then types them with a walk over the predicate
//!    type graph built by [`typegraph`].
//! 3. [`constructor`] fills the typed slots with entity and predicate aliases
//!    from a [`kb_ingest::KnowledgeSlice`] and assembles the matching SPARQL.
//!
//! [`pipeline`] drives whole splits, [`fuzz`] perturbs questions for the hard
//! split, and [`eval`] scores predicted queries with BLEU and ROUGE.

pub mod constructor;
pub mod error;
pub mod eval;
pub mod fuzz;
pub mod grammar;
pub mod kb_ingest;
pub mod pipeline;
pub mod rng;
pub mod template_gen;
pub mod typegraph;

pub use error::{Error, Result};

/// The three question types the generator covers.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum QuestionType {
    SingleEntity,
    MultiEntity,
    Count,
}

impl QuestionType {
    pub const ALL: [QuestionType; 3] = [
        QuestionType::SingleEntity,
        QuestionType::MultiEntity,
        QuestionType::Count,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::SingleEntity => "single-entity",
            QuestionType::MultiEntity => "multi-entity",
            QuestionType::Count => "count",
        }
    }

    /// Number of `[THING]` slots a template of this type carries.
    pub fn entity_slots(self) -> usize {
        match self {
            QuestionType::MultiEntity => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for QuestionType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for QuestionType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "single-entity" | "singleentity" | "single" => Ok(QuestionType::SingleEntity),
            "multi-entity" | "multientity" | "multi" => Ok(QuestionType::MultiEntity),
            "count" => Ok(QuestionType::Count),
            other => Err(Error::Config(format!("unknown question type `{other}`"))),
        }
    }
}
