//! Loading and filtering of knowledge-base predicates and entities.
//!
//! Dumps are UTF-8 JSON lines. A predicate line looks like
//!
//! ```text
//! {"id":"P50","labels":["author","writer"],"pos":"NOUN","domain_type":"literary work","range_type":"person"}
//! ```
//!
//! and an entity line like
//!
//! ```text
//! {"id":"Q172241","labels":["Pulp Fiction"],"entity_type":"film"}
//! ```
//!
//! `pos` is optional. A predicate shared by several subject types is written as
//! one line per `(domain_type, range_type)` signature with the same `id`.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coarse part-of-speech category of a predicate label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pos {
    #[serde(rename = "NOUN")]
    Noun,
    #[serde(rename = "VERB-ADP")]
    VerbAdp,
    #[serde(rename = "NOUN-ADP")]
    NounAdp,
    #[serde(rename = "OTHER")]
    Other,
}

impl Pos {
    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "NOUN",
            Pos::VerbAdp => "VERB-ADP",
            Pos::NounAdp => "NOUN-ADP",
            Pos::Other => "OTHER",
        }
    }

    /// Whether predicates of this category are used to fill template slots.
    pub fn is_fillable(self) -> bool {
        matches!(self, Pos::Noun | Pos::VerbAdp)
    }
}

impl std::fmt::Display for Pos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Pos {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "NOUN" => Ok(Pos::Noun),
            "VERB-ADP" => Ok(Pos::VerbAdp),
            "NOUN-ADP" => Ok(Pos::NounAdp),
            "OTHER" => Ok(Pos::Other),
            other => Err(Error::Config(format!("unknown POS category `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateRecord {
    pub id: String,
    pub labels: Vec<String>,
    pub pos: Pos,
    pub domain_type: String,
    pub range_type: String,
}

impl PredicateRecord {
    pub fn signature(&self) -> (&str, &str) {
        (&self.domain_type, &self.range_type)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub id: String,
    pub labels: Vec<String>,
    pub entity_type: String,
}

/// The predicates and entities one pipeline run draws from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeSlice {
    pub predicates: Vec<PredicateRecord>,
    pub entities: Vec<EntityRecord>,
    pub domains: Vec<String>,
}

impl KnowledgeSlice {
    /// Builds a slice, rejecting duplicate entity ids and duplicate predicate
    /// signatures (`id`, `domain_type`, `range_type`).
    pub fn new(predicates: Vec<PredicateRecord>, entities: Vec<EntityRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &predicates {
            if !seen.insert((p.id.as_str(), p.domain_type.as_str(), p.range_type.as_str())) {
                return Err(Error::Schema {
                    id: p.id.clone(),
                    message: format!(
                        "duplicate signature {} -> {}",
                        p.domain_type, p.range_type
                    ),
                });
            }
        }
        let mut seen = HashSet::new();
        for e in &entities {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Schema {
                    id: e.id.clone(),
                    message: "duplicate entity id".into(),
                });
            }
        }
        let domains: BTreeSet<String> = entities
            .iter()
            .map(|e| e.entity_type.clone())
            .chain(predicates.iter().map(|p| p.domain_type.clone()))
            .collect();
        Ok(KnowledgeSlice {
            predicates,
            entities,
            domains: domains.into_iter().collect(),
        })
    }

    pub fn load(
        predicates: impl AsRef<Path>,
        entities: impl AsRef<Path>,
        pos_lexicon: Option<&Path>,
    ) -> Result<Self> {
        let predicates = load_predicates(predicates, pos_lexicon)?;
        let entities = load_entities(entities)?;
        Self::new(predicates, entities)
    }

    /// Keeps predicates whose domain is in `predicate_domains` and entities whose
    /// type is in `entity_domains`.
    pub fn restrict(&self, entity_domains: &[String], predicate_domains: &[String]) -> Self {
        let predicates = self
            .predicates
            .iter()
            .filter(|p| predicate_domains.contains(&p.domain_type))
            .cloned()
            .collect();
        let entities = self
            .entities
            .iter()
            .filter(|e| entity_domains.contains(&e.entity_type))
            .cloned()
            .collect();
        KnowledgeSlice::new(predicates, entities).expect("subset of a valid slice is valid")
    }

    pub fn predicate_labels(&self) -> HashMap<&str, BTreeSet<&str>> {
        let mut out: HashMap<&str, BTreeSet<&str>> = HashMap::new();
        for p in &self.predicates {
            out.entry(&p.id)
                .or_default()
                .extend(p.labels.iter().map(String::as_str));
        }
        out
    }

    pub fn entity(&self, id: &str) -> Option<&EntityRecord> {
        self.entities.iter().find(|e| e.id == id)
    }
}

const ADPOSITIONS: &[&str] = &["in", "of", "by", "at", "on", "for", "with", "from"];

// Irregular participles and bare verbs the suffix rule would miss.
const VERBS: &[&str] = &[
    "born", "built", "drawn", "held", "known", "led", "made", "set", "shot", "sung", "taught",
    "won", "written", "plays", "play", "works", "work", "lives", "live", "stars", "star",
    "appears", "appear", "participates", "participate",
];

/// Assigns a POS category to a predicate label.
///
/// A lexicon entry always wins. Otherwise: a label ending in an adposition is
/// `VERB-ADP` when the preceding token looks verbal (`-ing`, `-ed`, or a known
/// verb) and `NOUN-ADP` otherwise; everything else is `NOUN`.
pub fn tag_pos(label: &str, lexicon: Option<&HashMap<String, Pos>>) -> Pos {
    if let Some(pos) = lexicon.and_then(|lex| lex.get(label)) {
        return *pos;
    }
    let tokens: Vec<String> = label
        .split_whitespace()
        .map(|t| t.to_lowercase())
        .collect();
    match tokens.as_slice() {
        [.., prev, last] if ADPOSITIONS.contains(&last.as_str()) => {
            if prev.ends_with("ing") || prev.ends_with("ed") || VERBS.contains(&prev.as_str()) {
                Pos::VerbAdp
            } else {
                Pos::NounAdp
            }
        }
        [last] if ADPOSITIONS.contains(&last.as_str()) => Pos::NounAdp,
        _ => Pos::Noun,
    }
}

/// Reads a POS lexicon: one `label<TAB>POS` pair per line, `#` comments.
pub fn load_pos_lexicon(path: impl AsRef<Path>) -> Result<HashMap<String, Pos>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (label, pos) = line.rsplit_once('\t').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: "expected `label<TAB>POS`".into(),
        })?;
        let pos = pos.parse().map_err(|e: Error| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.insert(label.trim().to_string(), pos);
    }
    Ok(out)
}

fn normalize_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Collapses whitespace and drops empty, bracket-bearing and duplicate labels.
/// Brackets are reserved for delimiting entity labels inside queries.
fn clean_labels(labels: Vec<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    labels
        .into_iter()
        .map(|l| normalize_label(&l))
        .filter(|l| !l.is_empty() && !l.contains(['[', ']']))
        .filter(|l| seen.insert(l.clone()))
        .collect()
}

#[derive(Deserialize)]
struct RawPredicate {
    id: String,
    #[serde(default)]
    labels: Vec<String>,
    #[serde(default)]
    pos: Option<Pos>,
    #[serde(default)]
    domain_type: Option<String>,
    #[serde(default)]
    range_type: Option<String>,
}

#[derive(Deserialize)]
struct RawEntity {
    id: String,
    #[serde(default)]
    labels: Vec<String>,
    #[serde(default)]
    entity_type: Option<String>,
}

fn read_json_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        out.push((n + 1, record));
    }
    Ok(out)
}

fn required_type(id: &str, field: &str, value: Option<String>) -> Result<String> {
    match value.map(|v| normalize_label(&v)) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::Schema {
            id: id.to_string(),
            message: format!("missing {field}"),
        }),
    }
}

/// Loads a predicate dump, dropping `" ID"` aliases and records left without
/// labels. The POS category comes from the record, then the lexicon, then
/// [`tag_pos`] on the primary label.
pub fn load_predicates(
    path: impl AsRef<Path>,
    pos_lexicon: Option<&Path>,
) -> Result<Vec<PredicateRecord>> {
    let path = path.as_ref();
    let lexicon = pos_lexicon.map(load_pos_lexicon).transpose()?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (_, raw) in read_json_lines::<RawPredicate>(path)? {
        let labels: Vec<String> = clean_labels(raw.labels)
            .into_iter()
            .filter(|l| !l.ends_with(" ID"))
            .collect();
        if labels.is_empty() {
            log::debug!("dropping predicate {}: no usable label", raw.id);
            continue;
        }
        let domain_type = required_type(&raw.id, "domain_type", raw.domain_type)?;
        let range_type = required_type(&raw.id, "range_type", raw.range_type)?;
        if !seen.insert((raw.id.clone(), domain_type.clone(), range_type.clone())) {
            continue;
        }
        let pos = raw
            .pos
            .unwrap_or_else(|| tag_pos(&labels[0], lexicon.as_ref()));
        out.push(PredicateRecord {
            id: raw.id,
            labels,
            pos,
            domain_type,
            range_type,
        });
    }
    Ok(out)
}

/// Loads an entity dump. Unlabeled entities are dropped, then duplicates by id
/// are removed keeping the first occurrence.
pub fn load_entities(path: impl AsRef<Path>) -> Result<Vec<EntityRecord>> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (_, raw) in read_json_lines::<RawEntity>(path)? {
        let labels = clean_labels(raw.labels);
        if labels.is_empty() {
            continue;
        }
        let entity_type = required_type(&raw.id, "entity_type", raw.entity_type)?;
        if !seen.insert(raw.id.clone()) {
            continue;
        }
        out.push(EntityRecord {
            id: raw.id,
            labels,
            entity_type,
        });
    }
    Ok(out)
}

fn write_json_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).expect("records serialize");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_predicates(path: impl AsRef<Path>, records: &[PredicateRecord]) -> Result<()> {
    write_json_lines(path.as_ref(), records)
}

pub fn write_entities(path: impl AsRef<Path>, records: &[EntityRecord]) -> Result<()> {
    write_json_lines(path.as_ref(), records)
}

/// Dump file locations for a cached endpoint slice.
#[derive(Debug, Clone)]
pub struct SliceCache {
    pub predicates: PathBuf,
    pub entities: PathBuf,
}

impl SliceCache {
    pub fn in_dir(dir: impl AsRef<Path>, domain_type: &str) -> Self {
        let slug: String = domain_type
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
            .collect();
        let dir = dir.as_ref();
        SliceCache {
            predicates: dir.join(format!("{slug}.predicates.jsonl")),
            entities: dir.join(format!("{slug}.entities.jsonl")),
        }
    }
}

fn entity_query(domain_type: &str, limit: usize) -> String {
    let class = domain_type.replace('"', "\\\"");
    format!(
        "SELECT ?item ?label WHERE {{ \
         {{ SELECT DISTINCT ?item WHERE {{ ?class rdfs:label \"{class}\"@en . ?item wdt:P31 ?class . }} LIMIT {limit} }} \
         {{ ?item rdfs:label ?label }} UNION {{ ?item skos:altLabel ?label }} \
         FILTER(LANG(?label) = \"en\") }}"
    )
}

// Range types come from each property's value-type constraint (Q21510865 / P2308).
fn predicate_query(domain_type: &str, limit: usize) -> String {
    let class = domain_type.replace('"', "\\\"");
    format!(
        "SELECT ?prop ?label ?range WHERE {{ \
         {{ SELECT DISTINCT ?p WHERE {{ \
            {{ SELECT DISTINCT ?item WHERE {{ ?class rdfs:label \"{class}\"@en . ?item wdt:P31 ?class . }} LIMIT {limit} }} \
            ?item ?p ?o . }} }} \
         ?prop wikibase:directClaim ?p . \
         ?prop p:P2302 ?c . ?c ps:P2302 wd:Q21510865 ; pq:P2308 ?rangeClass . \
         ?rangeClass rdfs:label ?range . FILTER(LANG(?range) = \"en\") \
         {{ ?prop rdfs:label ?label }} UNION {{ ?prop skos:altLabel ?label }} \
         FILTER(LANG(?label) = \"en\") }}"
    )
}

fn run_select(agent: &ureq::Agent, endpoint: &str, query: &str) -> Result<Vec<HashMap<String, String>>> {
    let mut response = agent
        .get(endpoint)
        .query("query", query)
        .header("Accept", "application/sparql-results+json")
        .header("User-Agent", concat!("squit/", env!("CARGO_PKG_VERSION")))
        .call()
        .map_err(|e| match e {
            ureq::Error::StatusCode(code) => Error::Status(code),
            other => Error::Network(other.to_string()),
        })?;
    let body = response
        .body_mut()
        .read_to_string()
        .map_err(|e| Error::Network(e.to_string()))?;
    let json: serde_json::Value =
        serde_json::from_str(&body).map_err(|e| Error::Protocol(e.to_string()))?;
    let bindings = json
        .pointer("/results/bindings")
        .and_then(|b| b.as_array())
        .ok_or_else(|| Error::Protocol("missing results.bindings".into()))?;
    bindings
        .iter()
        .map(|row| {
            let row = row
                .as_object()
                .ok_or_else(|| Error::Protocol("binding row is not an object".into()))?;
            row.iter()
                .map(|(var, term)| {
                    term.get("value")
                        .and_then(|v| v.as_str())
                        .map(|v| (var.clone(), v.to_string()))
                        .ok_or_else(|| Error::Protocol(format!("binding `{var}` has no value")))
                })
                .collect()
        })
        .collect()
}

fn local_id(uri: &str) -> &str {
    uri.rsplit(['/', '#']).next().unwrap_or(uri)
}

fn column<'a>(row: &'a HashMap<String, String>, var: &str) -> Result<&'a str> {
    row.get(var)
        .map(String::as_str)
        .ok_or_else(|| Error::Protocol(format!("result row lacks `{var}`")))
}

/// Pulls one domain's entities and typed predicates from a SPARQL endpoint.
///
/// Results are written to `cache` as ordinary dumps and then loaded through
/// [`load_predicates`] / [`load_entities`], so the returned slice is exactly
/// what an offline run over the cache would see. Nothing is written unless
/// both queries succeed.
pub fn fetch_slice(
    endpoint: &str,
    domain_type: &str,
    entity_limit: usize,
    cache: &SliceCache,
) -> Result<KnowledgeSlice> {
    if entity_limit == 0 {
        return Err(Error::Contract("entity_limit must be at least 1".into()));
    }
    let agent = ureq::Agent::new_with_defaults();
    let entity_rows = run_select(&agent, endpoint, &entity_query(domain_type, entity_limit))?;
    let predicate_rows =
        run_select(&agent, endpoint, &predicate_query(domain_type, entity_limit))?;

    let mut entities: Vec<(String, Vec<String>)> = Vec::new();
    let mut entity_index: HashMap<String, usize> = HashMap::new();
    for row in &entity_rows {
        let id = local_id(column(row, "item")?).to_string();
        let label = column(row, "label")?.to_string();
        let slot = *entity_index.entry(id.clone()).or_insert_with(|| {
            entities.push((id, Vec::new()));
            entities.len() - 1
        });
        entities[slot].1.push(label);
    }
    if entities.len() > entity_limit {
        entities.truncate(entity_limit);
    }

    let mut predicates: Vec<(String, String, Vec<String>)> = Vec::new();
    let mut predicate_index: HashMap<(String, String), usize> = HashMap::new();
    for row in &predicate_rows {
        let id = local_id(column(row, "prop")?).to_string();
        let range = column(row, "range")?.to_string();
        let label = column(row, "label")?.to_string();
        let slot = *predicate_index
            .entry((id.clone(), range.clone()))
            .or_insert_with(|| {
                predicates.push((id, range, Vec::new()));
                predicates.len() - 1
            });
        predicates[slot].2.push(label);
    }

    let entity_lines: Vec<serde_json::Value> = entities
        .into_iter()
        .map(|(id, labels)| {
            serde_json::json!({"id": id, "labels": labels, "entity_type": domain_type})
        })
        .collect();
    let predicate_lines: Vec<serde_json::Value> = predicates
        .into_iter()
        .map(|(id, range, labels)| {
            serde_json::json!({
                "id": id, "labels": labels, "domain_type": domain_type, "range_type": range
            })
        })
        .collect();

    for target in [&cache.predicates, &cache.entities] {
        if let Some(dir) = target.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let tmp_predicates = cache.predicates.with_extension("jsonl.tmp");
    let tmp_entities = cache.entities.with_extension("jsonl.tmp");
    write_json_lines(&tmp_predicates, &predicate_lines)?;
    write_json_lines(&tmp_entities, &entity_lines)?;
    fs::rename(&tmp_predicates, &cache.predicates).map_err(|e| Error::io(&cache.predicates, e))?;
    fs::rename(&tmp_entities, &cache.entities).map_err(|e| Error::io(&cache.entities, e))?;

    KnowledgeSlice::load(&cache.predicates, &cache.entities, None)
}

/// Alias-count summary of a slice. Both conventions are reported: all labels,
/// and aliases beyond the primary label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelStats {
    pub distinct_predicates: usize,
    pub predicate_labels: usize,
    pub mean_labels_per_predicate: f64,
    pub mean_aliases_per_predicate: f64,
    pub entities: usize,
    pub entity_labels: usize,
    pub unique_entity_labels: usize,
    pub mean_labels_per_entity: f64,
    pub mean_aliases_per_entity: f64,
}

pub fn label_stats(slice: &KnowledgeSlice) -> LabelStats {
    let predicate_labels = slice.predicate_labels();
    let n_pred = predicate_labels.len();
    let total_pred: usize = predicate_labels.values().map(BTreeSet::len).sum();
    let n_ent = slice.entities.len();
    let total_ent: usize = slice.entities.iter().map(|e| e.labels.len()).sum();
    let unique_ent: HashSet<&str> = slice
        .entities
        .iter()
        .flat_map(|e| e.labels.iter().map(String::as_str))
        .collect();
    let mean = |total: usize, n: usize| if n == 0 { 0.0 } else { total as f64 / n as f64 };
    LabelStats {
        distinct_predicates: n_pred,
        predicate_labels: total_pred,
        mean_labels_per_predicate: mean(total_pred, n_pred),
        mean_aliases_per_predicate: mean(total_pred.saturating_sub(n_pred), n_pred),
        entities: n_ent,
        entity_labels: total_ent,
        unique_entity_labels: unique_ent.len(),
        mean_labels_per_entity: mean(total_ent, n_ent),
        mean_aliases_per_entity: mean(total_ent.saturating_sub(n_ent), n_ent),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dump(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn author_is_kept_as_noun() {
        let f = dump(&[
            r#"{"id":"P50","labels":["author","writer"],"domain_type":"literary work","range_type":"person"}"#,
        ]);
        let preds = load_predicates(f.path(), None).unwrap();
        assert_eq!(preds.len(), 1);
        assert_eq!(preds[0].pos, Pos::Noun);
        assert_eq!(preds[0].labels, vec!["author", "writer"]);
    }

    #[test]
    fn id_only_predicate_is_dropped_before_schema_check() {
        let f = dump(&[r#"{"id":"P345","labels":["IMDb ID"]}"#]);
        assert!(load_predicates(f.path(), None).unwrap().is_empty());
    }

    #[test]
    fn id_suffix_is_case_and_space_sensitive() {
        let f = dump(&[
            r#"{"id":"P1","labels":["IMDb ID","some id","VIAF"],"domain_type":"a","range_type":"b"}"#,
        ]);
        let preds = load_predicates(f.path(), None).unwrap();
        assert_eq!(preds[0].labels, vec!["some id", "VIAF"]);
    }

    #[test]
    fn missing_range_is_schema_error_naming_id() {
        let f = dump(&[r#"{"id":"P9","labels":["x"],"domain_type":"film"}"#]);
        match load_predicates(f.path(), None) {
            Err(Error::Schema { id, message }) => {
                assert_eq!(id, "P9");
                assert!(message.contains("range_type"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = dump(&[
            r#"{"id":"P1","labels":["a"],"domain_type":"x","range_type":"y"}"#,
            "",
            "{not json",
        ]);
        match load_predicates(f.path(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unreadable_file_is_io_error_with_path() {
        let err = load_entities("/nonexistent/dump.jsonl").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/dump.jsonl"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn entity_with_no_label_is_dropped() {
        let f = dump(&[
            r#"{"id":"Q172241","labels":["Pulp Fiction"],"entity_type":"film"}"#,
            r#"{"id":"Q1","labels":[],"entity_type":"film"}"#,
            r#"{"id":"Q2","labels":["  "],"entity_type":"film"}"#,
        ]);
        let ents = load_entities(f.path()).unwrap();
        assert_eq!(ents.len(), 1);
        assert_eq!(ents[0].labels, vec!["Pulp Fiction"]);
    }

    #[test]
    fn explicit_pos_then_lexicon_then_heuristic() {
        let f = dump(&[
            r#"{"id":"P1","labels":["playing in"],"pos":"NOUN","domain_type":"x","range_type":"y"}"#,
            r#"{"id":"P2","labels":["playing in"],"domain_type":"x","range_type":"y"}"#,
            r#"{"id":"P3","labels":["part of"],"domain_type":"x","range_type":"y"}"#,
        ]);
        let mut lex = tempfile::NamedTempFile::new().unwrap();
        writeln!(lex, "# overrides\npart of\tOTHER").unwrap();
        let preds = load_predicates(f.path(), Some(lex.path())).unwrap();
        let pos: Vec<Pos> = preds.iter().map(|p| p.pos).collect();
        assert_eq!(pos, vec![Pos::Noun, Pos::VerbAdp, Pos::Other]);
    }

    #[test]
    fn tag_pos_examples() {
        assert_eq!(tag_pos("playing in", None), Pos::VerbAdp);
        assert_eq!(tag_pos("author", None), Pos::Noun);
        assert_eq!(tag_pos("place of origin", None), Pos::Noun);
        assert_eq!(tag_pos("located in", None), Pos::VerbAdp);
        assert_eq!(tag_pos("member of", None), Pos::NounAdp);
        assert_eq!(tag_pos("born in", None), Pos::VerbAdp);
    }

    #[test]
    fn lexicon_overrides_heuristic() {
        let mut lex = HashMap::new();
        lex.insert("author".to_string(), Pos::Other);
        assert_eq!(tag_pos("author", Some(&lex)), Pos::Other);
        assert_eq!(tag_pos("playing in", Some(&lex)), Pos::VerbAdp);
    }

    #[test]
    fn slice_rejects_duplicate_entity_ids() {
        let e = EntityRecord {
            id: "Q1".into(),
            labels: vec!["a".into()],
            entity_type: "film".into(),
        };
        assert!(KnowledgeSlice::new(vec![], vec![e.clone(), e]).is_err());
    }

    #[test]
    fn shared_predicate_id_across_signatures_is_allowed() {
        let p = |d: &str| PredicateRecord {
            id: "P136".into(),
            labels: vec!["genre".into()],
            pos: Pos::Noun,
            domain_type: d.into(),
            range_type: "genre".into(),
        };
        let slice = KnowledgeSlice::new(vec![p("film"), p("television series")], vec![]).unwrap();
        assert_eq!(slice.predicates.len(), 2);
        assert!(KnowledgeSlice::new(vec![p("film"), p("film")], vec![]).is_err());
    }

    #[test]
    fn label_stats_counts_both_conventions() {
        let p = |id: &str, n: usize| PredicateRecord {
            id: id.into(),
            labels: (0..n).map(|i| format!("{id}-{i}")).collect(),
            pos: Pos::Noun,
            domain_type: "a".into(),
            range_type: "b".into(),
        };
        let slice =
            KnowledgeSlice::new(vec![p("P1", 2), p("P2", 2), p("P3", 3), p("P4", 1)], vec![])
                .unwrap();
        let stats = label_stats(&slice);
        assert_eq!(format!("{:.2}", stats.mean_labels_per_predicate), "2.00");
        assert_eq!(format!("{:.2}", stats.mean_aliases_per_predicate), "1.00");
        assert_eq!(stats.predicate_labels, 8);
    }

    #[test]
    fn zero_entity_limit_is_rejected_without_network() {
        let dir = tempfile::tempdir().unwrap();
        let cache = SliceCache::in_dir(dir.path(), "film");
        let err = fetch_slice("http://127.0.0.1:9/sparql", "film", 0, &cache).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }
}
