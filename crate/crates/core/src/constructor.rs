//! Question and query construction from typed templates.

use std::collections::HashMap;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb_ingest::{EntityRecord, KnowledgeSlice, Pos, PredicateRecord};
use crate::template_gen::{Slot, TypedTemplate};
use crate::QuestionType;

/// Predicates grouped by `(domain, range, POS)` and entities by type.
#[derive(Debug, Clone)]
pub struct SliceIndex<'a> {
    slice: &'a KnowledgeSlice,
    predicates: HashMap<&'a str, HashMap<&'a str, HashMap<Pos, Vec<&'a PredicateRecord>>>>,
    entities: HashMap<&'a str, Vec<&'a EntityRecord>>,
}

impl<'a> SliceIndex<'a> {
    pub fn new(slice: &'a KnowledgeSlice) -> Self {
        let mut predicates: HashMap<_, HashMap<_, HashMap<_, Vec<_>>>> = HashMap::new();
        for p in &slice.predicates {
            predicates
                .entry(p.domain_type.as_str())
                .or_default()
                .entry(p.range_type.as_str())
                .or_default()
                .entry(p.pos)
                .or_default()
                .push(p);
        }
        let mut entities: HashMap<_, Vec<_>> = HashMap::new();
        for e in &slice.entities {
            entities.entry(e.entity_type.as_str()).or_default().push(e);
        }
        SliceIndex {
            slice,
            predicates,
            entities,
        }
    }

    pub fn slice(&self) -> &'a KnowledgeSlice {
        self.slice
    }

    pub fn predicates(&self, domain: &str, range: &str, pos: Pos) -> &[&'a PredicateRecord] {
        self.predicates
            .get(domain)
            .and_then(|m| m.get(range))
            .and_then(|m| m.get(&pos))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn entities_of(&self, entity_type: &str) -> &[&'a EntityRecord] {
        self.entities
            .get(entity_type)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Maps range types to interrogatives. Unmapped types get "What".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WhTable(pub HashMap<String, String>);

impl Default for WhTable {
    fn default() -> Self {
        WhTable(
            ["person", "human", "fictional character"]
                .into_iter()
                .map(|t| (t.to_string(), "Who".to_string()))
                .collect(),
        )
    }
}

pub fn select_wh<'t>(range_type: &str, table: &'t WhTable) -> &'t str {
    table.0.get(range_type).map(String::as_str).unwrap_or("What")
}

/// Tokens written flush against the previous token in questions.
const ATTACHED: &[&str] = &["'s", "?", ","];

/// Joins question tokens with single spaces, attaching `'s`, `?` and `,` to
/// the preceding token. Returns the text and the byte span of every token.
pub fn detokenize(tokens: &[&str]) -> (String, Vec<Range<usize>>) {
    let mut out = String::new();
    let mut spans = Vec::with_capacity(tokens.len());
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 && !ATTACHED.contains(tok) {
            out.push(' ');
        }
        let start = out.len();
        out.push_str(tok);
        spans.push(start..out.len());
    }
    (out, spans)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilledQuestion {
    pub question: String,
    /// Chosen entity per chain.
    pub entities: Vec<(String, String)>,
    /// Chosen `(id, label)` per predicate slot, per chain, in application order.
    pub predicates: Vec<Vec<(String, String)>>,
    /// Byte span of each entity label in `question`, per chain.
    pub entity_spans: Vec<Range<usize>>,
}

fn pick<'v, T, R: Rng + ?Sized>(items: &'v [T], rng: &mut R) -> &'v T {
    &items[rng.gen_range(0..items.len())]
}

/// Fills every slot of `template` with uniformly sampled records and aliases.
/// The entities of a multi-entity template are distinct.
pub fn fill_question<R: Rng + ?Sized>(
    template: &TypedTemplate,
    index: &SliceIndex<'_>,
    wh: &WhTable,
    rng: &mut R,
) -> Result<FilledQuestion> {
    let mut entities = Vec::with_capacity(template.entity_types.len());
    for ty in &template.entity_types {
        let candidates: Vec<_> = index
            .entities_of(ty)
            .iter()
            .filter(|e| entities.iter().all(|(id, _)| id != &e.id))
            .collect();
        if candidates.is_empty() {
            return Err(Error::UnsatisfiableSlot(format!("[THING:{ty}]")));
        }
        let e = pick(&candidates, rng);
        entities.push((e.id.clone(), pick(&e.labels, rng).clone()));
    }

    let mut predicates = Vec::with_capacity(template.paths.len());
    for path in &template.paths {
        let mut chain = Vec::with_capacity(path.len());
        for step in &path.steps {
            let pos = step.pos.unwrap_or(Pos::Noun);
            let candidates = index.predicates(&step.from, &step.to, pos);
            if candidates.is_empty() {
                return Err(Error::UnsatisfiableSlot(format!(
                    "[{pos}:{}->{}]",
                    step.from, step.to
                )));
            }
            let p = pick(candidates, rng);
            chain.push((p.id.clone(), pick(&p.labels, rng).clone()));
        }
        predicates.push(chain);
    }

    let wh_word = select_wh(&template.wh_range_type, wh);
    let mut tokens: Vec<&str> = Vec::with_capacity(template.numbered.slots.len());
    let mut entity_token = vec![0; entities.len()];
    for slot in &template.numbered.slots {
        match slot {
            Slot::Word(w) => tokens.push(w),
            Slot::Wh => tokens.push(wh_word),
            Slot::Entity { chain } => {
                entity_token[*chain] = tokens.len();
                tokens.push(&entities[*chain].1);
            }
            Slot::Predicate { chain, index, .. } => tokens.push(&predicates[*chain][*index].1),
        }
    }
    let (question, spans) = detokenize(&tokens);
    let entity_spans = entity_token.iter().map(|&i| spans[i].clone()).collect();

    Ok(FilledQuestion {
        question,
        entities,
        predicates,
        entity_spans,
    })
}

fn property_path(chain: &[impl AsRef<str>]) -> String {
    chain
        .iter()
        .map(|id| format!("wdt:{}", id.as_ref()))
        .collect::<Vec<_>>()
        .join(" / ")
}

fn triple(label: &str, chain: &[impl AsRef<str>]) -> String {
    format!("[ {label} ] {} ?end .", property_path(chain))
}

fn bind(label: &str) -> String {
    format!("BIND ( [ {label} ] as ?end ) .")
}

/// Assembles the SPARQL query for a question type, entity labels and
/// predicate-id chains (ids without the `wdt:` prefix).
pub fn build_query(
    question_type: QuestionType,
    entity_labels: &[impl AsRef<str>],
    chains: &[Vec<impl AsRef<str>>],
) -> Result<String> {
    let contract = |m: &str| Err(Error::Contract(format!("{question_type}: {m}")));
    let labels: Vec<&str> = entity_labels.iter().map(AsRef::as_ref).collect();
    match question_type {
        QuestionType::SingleEntity | QuestionType::Count => {
            if labels.len() != 1 || chains.len() != 1 {
                return contract("expects one entity and one chain");
            }
            let chain = &chains[0];
            match (question_type, chain.is_empty()) {
                (QuestionType::SingleEntity, true) => {
                    Ok(format!("SELECT ?end WHERE {{ {} }}", bind(labels[0])))
                }
                (QuestionType::SingleEntity, false) => {
                    Ok(format!("SELECT ?end WHERE {{ {} }}", triple(labels[0], chain)))
                }
                (_, true) => contract("count chain must not be empty"),
                (_, false) => Ok(format!(
                    "SELECT ( COUNT ( DISTINCT ?end ) as ?endcount ) WHERE {{ {} }}",
                    triple(labels[0], chain)
                )),
            }
        }
        QuestionType::MultiEntity => {
            if labels.len() != 2 || chains.len() != 2 {
                return contract("expects two entities and two chains");
            }
            match (chains[0].is_empty(), chains[1].is_empty()) {
                (true, true) => contract("at most one chain may be empty"),
                (true, false) => Ok(format!(
                    "ASK {{ {} {} }}",
                    bind(labels[0]),
                    triple(labels[1], &chains[1])
                )),
                (false, true) => Ok(format!(
                    "ASK {{ {} {} }}",
                    bind(labels[1]),
                    triple(labels[0], &chains[0])
                )),
                (false, false) => Ok(format!(
                    "ASK {{ {} {} }}",
                    triple(labels[0], &chains[0]),
                    triple(labels[1], &chains[1])
                )),
            }
        }
    }
}

/// One generated question/query pair with its provenance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QAPair {
    pub question: String,
    pub query: String,
    pub question_type: QuestionType,
    pub entity_ids: Vec<String>,
    pub entity_labels: Vec<String>,
    pub predicate_ids: Vec<Vec<String>>,
    pub template_id: String,
    pub depth: usize,
    pub split_tag: Option<String>,
    /// Byte spans of the entity labels inside `question`.
    pub entity_spans: Vec<Range<usize>>,
}

pub fn generate_pair<R: Rng + ?Sized>(
    template: &TypedTemplate,
    index: &SliceIndex<'_>,
    wh: &WhTable,
    rng: &mut R,
) -> Result<QAPair> {
    let filled = fill_question(template, index, wh, rng)?;
    let labels: Vec<&str> = filled.entities.iter().map(|(_, l)| l.as_str()).collect();
    let predicate_ids: Vec<Vec<String>> = filled
        .predicates
        .iter()
        .map(|c| c.iter().map(|(id, _)| id.clone()).collect())
        .collect();
    let query = build_query(template.question_type(), &labels, &predicate_ids)?;
    Ok(QAPair {
        question: filled.question,
        query,
        question_type: template.question_type(),
        entity_ids: filled.entities.iter().map(|(id, _)| id.clone()).collect(),
        entity_labels: filled.entities.into_iter().map(|(_, l)| l).collect(),
        predicate_ids,
        template_id: template.numbered.template.id.clone(),
        depth: template.numbered.template.depth,
        split_tag: None,
        entity_spans: filled.entity_spans,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::BaselineTemplate;
    use crate::rng::seeded;
    use crate::template_gen::{number_predicates, type_chains, TypingConfig};
    use crate::typegraph::build_graph;

    fn pred(id: &str, label: &str, pos: Pos, d: &str, r: &str) -> PredicateRecord {
        PredicateRecord {
            id: id.into(),
            labels: vec![label.into()],
            pos,
            domain_type: d.into(),
            range_type: r.into(),
        }
    }

    fn ent(id: &str, label: &str, ty: &str) -> EntityRecord {
        EntityRecord {
            id: id.into(),
            labels: vec![label.into()],
            entity_type: ty.into(),
        }
    }

    fn typed(slice: &KnowledgeSlice, text: &str, qt: QuestionType, types: &[&str], seed: u64) -> TypedTemplate {
        let base = BaselineTemplate {
            id: "t/0".into(),
            tokens: text.split(' ').map(String::from).collect(),
            depth: 4,
            question_type: qt,
        };
        let n = number_predicates(&base).unwrap();
        let g = build_graph(&slice.predicates).unwrap();
        let types: Vec<String> = types.iter().map(|s| s.to_string()).collect();
        type_chains(&n, &g, &types, &TypingConfig::default(), &mut seeded(seed)).unwrap()
    }

    #[test]
    fn mother_of_the_director() {
        let slice = KnowledgeSlice::new(
            vec![
                pred("P5", "director", Pos::Noun, "film", "person"),
                pred("P25", "mother", Pos::Noun, "person", "person"),
            ],
            vec![ent("Q104123", "Pulp Fiction", "film")],
        )
        .unwrap();
        let t = typed(&slice, "[WH] is the [NOUN] of the [NOUN] of [THING] ?", QuestionType::SingleEntity, &["film"], 0);
        let idx = SliceIndex::new(&slice);
        let pair = generate_pair(&t, &idx, &WhTable::default(), &mut seeded(7)).unwrap();
        assert_eq!(pair.question, "Who is the mother of the director of Pulp Fiction?");
        assert_eq!(pair.query, "SELECT ?end WHERE { [ Pulp Fiction ] wdt:P5 / wdt:P25 ?end . }");
        assert_eq!(&pair.question[pair.entity_spans[0].clone()], "Pulp Fiction");
    }

    #[test]
    fn verb_adp_slot() {
        let slice = KnowledgeSlice::new(
            vec![pred("P840", "playing in", Pos::VerbAdp, "film", "location")],
            vec![ent("Q1", "The Mummy", "film")],
        )
        .unwrap();
        let t = typed(&slice, "[WH] is [THING] [VERB-ADP] ?", QuestionType::SingleEntity, &["film"], 0);
        let idx = SliceIndex::new(&slice);
        let filled = fill_question(&t, &idx, &WhTable::default(), &mut seeded(1)).unwrap();
        assert_eq!(filled.question, "What is The Mummy playing in?");
    }

    #[test]
    fn filling_is_deterministic_under_seed() {
        let slice = KnowledgeSlice::new(
            vec![
                PredicateRecord {
                    labels: vec!["director".into(), "directed by".into(), "filmmaker".into()],
                    ..pred("P57", "", Pos::Noun, "film", "person")
                },
                pred("P5", "director", Pos::Noun, "film", "person"),
            ],
            vec![ent("Q1", "Alien", "film"), ent("Q2", "Heat", "film")],
        )
        .unwrap();
        let t = typed(&slice, "[WH] is [THING] 's [NOUN] ?", QuestionType::SingleEntity, &["film"], 0);
        let idx = SliceIndex::new(&slice);
        let a = generate_pair(&t, &idx, &WhTable::default(), &mut seeded(3)).unwrap();
        let b = generate_pair(&t, &idx, &WhTable::default(), &mut seeded(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_candidates_are_unsatisfiable() {
        let slice = KnowledgeSlice::new(vec![pred("P5", "director", Pos::Noun, "film", "person")], vec![]).unwrap();
        let t = typed(&slice, "[WH] is [THING] 's [NOUN] ?", QuestionType::SingleEntity, &["film"], 0);
        let idx = SliceIndex::new(&slice);
        let err = fill_question(&t, &idx, &WhTable::default(), &mut seeded(0)).unwrap_err();
        assert!(matches!(err, Error::UnsatisfiableSlot(_)));
    }

    #[test]
    fn multi_entity_draws_distinct_entities() {
        let slice = KnowledgeSlice::new(
            vec![pred("P5", "director", Pos::Noun, "film", "person")],
            vec![ent("Q1", "Alien", "film"), ent("Q2", "Heat", "film")],
        )
        .unwrap();
        let t = typed(
            &slice,
            "Is [THING] 's [NOUN] [THING] 's [NOUN] ?",
            QuestionType::MultiEntity,
            &["film", "film"],
            0,
        );
        let idx = SliceIndex::new(&slice);
        for seed in 0..20 {
            let f = fill_question(&t, &idx, &WhTable::default(), &mut seeded(seed)).unwrap();
            assert_ne!(f.entities[0].0, f.entities[1].0);
        }
        let lone = KnowledgeSlice::new(slice.predicates.clone(), vec![ent("Q1", "Alien", "film")]).unwrap();
        let err = fill_question(&t, &SliceIndex::new(&lone), &WhTable::default(), &mut seeded(0)).unwrap_err();
        assert!(matches!(err, Error::UnsatisfiableSlot(_)));
    }

    #[test]
    fn wh_selection() {
        let table = WhTable::default();
        assert_eq!(select_wh("person", &table), "Who");
        assert_eq!(select_wh("location", &table), "What");
        assert_eq!(select_wh("xyz", &table), "What");
    }

    #[test]
    fn query_shapes() {
        assert_eq!(
            build_query(
                QuestionType::MultiEntity,
                &["John Steinbeck", "Green Eggs and Ham"],
                &[vec![], vec!["P50"]]
            )
            .unwrap(),
            "ASK { BIND ( [ John Steinbeck ] as ?end ) . [ Green Eggs and Ham ] wdt:P50 ?end . }"
        );
        assert_eq!(
            build_query(QuestionType::Count, &["Fast and Furious"], &[vec!["P162", "P166"]]).unwrap(),
            "SELECT ( COUNT ( DISTINCT ?end ) as ?endcount ) WHERE { [ Fast and Furious ] wdt:P162 / wdt:P166 ?end . }"
        );
        assert_eq!(
            build_query(QuestionType::SingleEntity, &["2,4-MCPA"], &[Vec::<&str>::new()]).unwrap(),
            "SELECT ?end WHERE { BIND ( [ 2,4-MCPA ] as ?end ) . }"
        );
        assert_eq!(
            build_query(
                QuestionType::MultiEntity,
                &["Lion of the Desert", "Cold Case"],
                &[vec!["P915"], vec!["P86", "P551"]]
            )
            .unwrap(),
            "ASK { [ Lion of the Desert ] wdt:P915 ?end . [ Cold Case ] wdt:P86 / wdt:P551 ?end . }"
        );
    }

    #[test]
    fn query_contract_errors() {
        let none: Vec<Vec<&str>> = vec![vec![], vec![]];
        assert!(build_query(QuestionType::MultiEntity, &["a", "b"], &none).is_err());
        assert!(build_query(QuestionType::SingleEntity, &["a", "b"], &none).is_err());
        assert!(build_query(QuestionType::Count, &["a"], &[Vec::<&str>::new()]).is_err());
    }

    #[test]
    fn detokenizer_attaches_possessive_and_question_mark() {
        let (q, spans) = detokenize(&["What", "is", "Gisla saga", "'s", "adaptation", "'s", "place of origin", "?"]);
        assert_eq!(q, "What is Gisla saga's adaptation's place of origin?");
        assert_eq!(&q[spans[2].clone()], "Gisla saga");
    }
}
