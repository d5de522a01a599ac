//! Split recipes, end-to-end generation, corpus I/O and corpus statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constructor::{generate_pair, QAPair, SliceIndex, WhTable};
use crate::error::{Error, Result};
use crate::fuzz::{fuzz_question, FuzzConfig};
use crate::grammar::{enumerate_templates, BaselineTemplate, Grammar};
use crate::kb_ingest::KnowledgeSlice;
use crate::rng::item_rng;
use crate::template_gen::{assign_types, number_predicates, NumberedTemplate, TypingConfig};
use crate::typegraph::{build_graph, TypeGraph};
use crate::QuestionType;

const GENERATION_SALT: u64 = 0x6765_6e65;
/// Attempts per requested pair before generation gives up.
pub const ATTEMPT_FACTOR: usize = 10;
const BATCH: usize = 4096;

/// One split's generation settings, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRecipe {
    pub name: String,
    pub target_count: usize,
    pub grammars: Vec<PathBuf>,
    pub max_depth: usize,
    pub entity_domains: Vec<String>,
    pub predicate_domains: Vec<String>,
    #[serde(default)]
    pub fuzz: FuzzConfig,
    #[serde(default)]
    pub seed: u64,
    /// Knowledge-slice dumps; relative paths resolve against the recipe file.
    #[serde(default)]
    pub predicates: Option<PathBuf>,
    #[serde(default)]
    pub entities: Option<PathBuf>,
    /// Relative weight per question type. Empty means uniform over the types
    /// the grammars cover.
    #[serde(default)]
    pub type_mix: BTreeMap<QuestionType, f64>,
    #[serde(default)]
    pub typing: TypingConfig,
}

impl SplitRecipe {
    /// Reads a recipe and resolves its relative paths against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut recipe: SplitRecipe =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        recipe.grammars.iter_mut().for_each(resolve);
        recipe.predicates.iter_mut().for_each(resolve);
        recipe.entities.iter_mut().for_each(resolve);
        recipe.validate()?;
        Ok(recipe)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("recipe `{}`: {m}", self.name)));
        if self.target_count == 0 {
            return bad("target_count must be at least 1".into());
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1".into());
        }
        if self.grammars.is_empty() {
            return bad("no grammars listed".into());
        }
        if self.entity_domains.is_empty() {
            return bad("no entity domains listed".into());
        }
        for p in self.grammars.iter().chain(&self.predicates).chain(&self.entities) {
            if !p.is_file() {
                return bad(format!("{} does not exist", p.display()));
            }
        }
        if self.type_mix.values().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("type_mix weights must be finite and non-negative".into());
        }
        self.fuzz.validate()
    }

    /// Loads the slice named by the recipe's `predicates` and `entities` paths.
    pub fn load_slice(&self) -> Result<KnowledgeSlice> {
        match (&self.predicates, &self.entities) {
            (Some(p), Some(e)) => KnowledgeSlice::load(p, e, None),
            _ => Err(Error::Config(format!(
                "recipe `{}` names no predicates/entities dumps",
                self.name
            ))),
        }
    }

    pub fn load_grammars(&self) -> Result<Vec<Grammar>> {
        self.grammars.iter().map(Grammar::load).collect()
    }
}

/// Everything a split needs, prepared once before items are drawn.
pub struct Generator {
    pub recipe: SplitRecipe,
    pub slice: KnowledgeSlice,
    pub graph: TypeGraph,
    pub templates: Vec<BaselineTemplate>,
    by_type: Vec<(QuestionType, Vec<NumberedTemplate>)>,
    weights: Option<WeightedIndex<f64>>,
    wh: WhTable,
}

impl Generator {
    /// Restricts the slice to the recipe's domains, builds the type graph and
    /// enumerates and numbers every template. Fails before any item is drawn
    /// if a domain is missing or a template is malformed.
    pub fn new(recipe: &SplitRecipe, slice: &KnowledgeSlice, grammars: &[Grammar]) -> Result<Self> {
        recipe.validate()?;
        for d in &recipe.entity_domains {
            if !slice.entities.iter().any(|e| &e.entity_type == d) {
                return Err(Error::Config(format!("slice has no entities of type `{d}`")));
            }
        }
        for d in &recipe.predicate_domains {
            if !slice.predicates.iter().any(|p| &p.domain_type == d) {
                return Err(Error::Config(format!("slice has no predicates with domain `{d}`")));
            }
        }
        let slice = slice.restrict(&recipe.entity_domains, &recipe.predicate_domains);
        let graph = build_graph(&slice.predicates)?;

        let mut templates = Vec::new();
        for g in grammars {
            templates.extend(enumerate_templates(g, recipe.max_depth)?);
        }
        let mut grouped: BTreeMap<QuestionType, Vec<NumberedTemplate>> = BTreeMap::new();
        for t in &templates {
            t.check_slots()?;
            grouped
                .entry(t.question_type)
                .or_default()
                .push(number_predicates(t)?);
        }
        if let Some(qt) = recipe.type_mix.keys().find(|qt| !grouped.contains_key(qt)) {
            if recipe.type_mix[qt] > 0.0 {
                return Err(Error::Config(format!("type_mix weights {qt} but no grammar covers it")));
            }
        }
        let by_type: Vec<_> = grouped
            .into_iter()
            .filter(|(qt, _)| recipe.type_mix.is_empty() || recipe.type_mix.get(qt).is_some_and(|w| *w > 0.0))
            .collect();
        if by_type.is_empty() {
            return Err(Error::Config("no templates to draw from".into()));
        }
        let weights = if recipe.type_mix.is_empty() {
            None
        } else {
            let w: Vec<f64> = by_type.iter().map(|(qt, _)| recipe.type_mix[qt]).collect();
            Some(WeightedIndex::new(w).map_err(|e| Error::Config(format!("type_mix: {e}")))?)
        };
        log::info!(
            "recipe `{}`: {} templates, {} graph nodes, {} predicates, {} entities",
            recipe.name,
            templates.len(),
            graph.nodes().len(),
            slice.predicates.len(),
            slice.entities.len()
        );
        Ok(Generator {
            recipe: recipe.clone(),
            slice,
            graph,
            templates,
            by_type,
            weights,
            wh: WhTable::default(),
        })
    }

    /// Draws item `index`. `None` when typing or filling hit a dead end.
    pub fn item(&self, index: &SliceIndex<'_>, i: u64) -> Option<QAPair> {
        let mut rng = item_rng(self.recipe.seed, GENERATION_SALT, i);
        let k = match &self.weights {
            Some(w) => w.sample(&mut rng),
            None => rng.gen_range(0..self.by_type.len()),
        };
        let pool = &self.by_type[k].1;
        let numbered = &pool[rng.gen_range(0..pool.len())];
        let typed = match assign_types(
            numbered,
            &self.graph,
            &self.recipe.entity_domains,
            &self.recipe.typing,
            &mut rng,
        ) {
            Ok(t) => t,
            Err(e) => {
                log::trace!("item {i}: {e}");
                return None;
            }
        };
        let mut pair = match generate_pair(&typed, index, &self.wh, &mut rng) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("item {i}: {e}");
                return None;
            }
        };
        if !self.recipe.fuzz.is_identity() {
            let mut frng = item_rng(self.recipe.seed, self.recipe.fuzz.salt, i);
            let f = fuzz_question(&pair.question, &pair.entity_spans, &self.recipe.fuzz, &mut frng);
            pair.question = f.text;
            pair.entity_spans = f.spans;
        }
        pair.split_tag = Some(self.recipe.name.clone());
        Some(pair)
    }

    /// Generates the split: items are drawn in parallel batches and kept in
    /// index order, skipping failures and duplicate `(question, query)` pairs.
    pub fn generate(&self) -> Result<Vec<QAPair>> {
        let target = self.recipe.target_count;
        let budget = target.saturating_mul(ATTEMPT_FACTOR);
        let index = SliceIndex::new(&self.slice);
        let mut seen: HashSet<(String, String)> = HashSet::with_capacity(target);
        let mut out = Vec::with_capacity(target);
        let mut next = 0usize;
        while out.len() < target && next < budget {
            let remaining = target - out.len();
            let end = (next + (remaining + remaining / 4).clamp(BATCH, 16 * BATCH)).min(budget);
            let batch: Vec<Option<QAPair>> = (next..end)
                .into_par_iter()
                .map(|i| self.item(&index, i as u64))
                .collect();
            next = end;
            for pair in batch.into_iter().flatten() {
                if out.len() == target {
                    break;
                }
                if seen.insert((pair.question.clone(), pair.query.clone())) {
                    out.push(pair);
                }
            }
        }
        if out.len() < target {
            return Err(Error::PartialOutput {
                achieved: out.len(),
                target,
            });
        }
        Ok(out)
    }
}

/// Convenience wrapper over [`Generator`].
pub fn generate_split(recipe: &SplitRecipe, slice: &KnowledgeSlice, grammars: &[Grammar]) -> Result<Vec<QAPair>> {
    Generator::new(recipe, slice, grammars)?.generate()
}

/// One serialized corpus line. Field order is the on-disk order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub question: String,
    pub query: String,
    #[serde(rename = "type")]
    pub question_type: QuestionType,
    pub template_id: String,
    pub depth: usize,
    pub entity_ids: Vec<String>,
    pub predicate_ids: Vec<Vec<String>>,
}

impl From<&QAPair> for CorpusRecord {
    fn from(p: &QAPair) -> Self {
        CorpusRecord {
            question: p.question.clone(),
            query: p.query.clone(),
            question_type: p.question_type,
            template_id: p.template_id.clone(),
            depth: p.depth,
            entity_ids: p.entity_ids.clone(),
            predicate_ids: p.predicate_ids.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    #[default]
    Jsonl,
    Tsv,
}

impl std::str::FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "tsv" => Ok(CorpusFormat::Tsv),
            other => Err(Error::Config(format!("unknown format `{other}` (jsonl or tsv)"))),
        }
    }
}

/// Writes records to any sink, one per line with LF endings.
pub fn write_records<W: Write>(out: W, records: &[CorpusRecord], format: CorpusFormat) -> std::io::Result<()> {
    let mut out = BufWriter::new(out);
    for r in records {
        match format {
            CorpusFormat::Jsonl => {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
            CorpusFormat::Tsv => writeln!(out, "{}\t{}", r.question, r.query)?,
        }
    }
    out.flush()
}

pub fn write_corpus(path: impl AsRef<Path>, pairs: &[QAPair], format: CorpusFormat) -> Result<()> {
    let path = path.as_ref();
    let records: Vec<CorpusRecord> = pairs.iter().map(CorpusRecord::from).collect();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(file, &records, format).map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<CorpusRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Byte spans of the query's bracketed entity labels inside `question`,
/// matched left to right without overlap. Labels not found are skipped.
pub fn entity_spans_from_query(question: &str, query: &str) -> Vec<Range<usize>> {
    let Ok(parsed) = crate::eval::parse_query(query) else {
        return Vec::new();
    };
    let mut spans: Vec<Range<usize>> = Vec::new();
    for label in &parsed.entities {
        let hit = question
            .match_indices(label.as_str())
            .map(|(s, _)| s..s + label.len())
            .find(|r| spans.iter().all(|o| r.end <= o.start || r.start >= o.end));
        spans.extend(hit);
    }
    spans
}

/// Corpus statistics, recomputable from the corpus file and its slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub pairs: usize,
    pub per_type: BTreeMap<QuestionType, usize>,
    pub unique_predicates: usize,
    pub unique_entities: usize,
    /// Labels across the distinct predicates used.
    pub predicate_labels: usize,
    /// Labels across the distinct entities used.
    pub entity_labels: usize,
    pub mean_labels_per_predicate: f64,
    pub mean_labels_per_entity: f64,
    pub depth_histogram: BTreeMap<usize, usize>,
}

/// Two-decimal rendering used for the mean label counts.
pub fn format_mean(x: f64) -> String {
    format!("{x:.2}")
}

pub fn compute_stats(records: &[CorpusRecord], slice: &KnowledgeSlice) -> Result<CorpusStats> {
    let predicate_labels = slice.predicate_labels();
    let entities: HashMap<&str, usize> = slice
        .entities
        .iter()
        .map(|e| (e.id.as_str(), e.labels.len()))
        .collect();
    let mut per_type = BTreeMap::new();
    let mut depth_histogram = BTreeMap::new();
    let mut preds = BTreeSet::new();
    let mut ents = BTreeSet::new();
    for r in records {
        *per_type.entry(r.question_type).or_insert(0) += 1;
        *depth_histogram.entry(r.depth).or_insert(0) += 1;
        for id in r.predicate_ids.iter().flatten() {
            if !predicate_labels.contains_key(id.as_str()) {
                return Err(Error::Integrity(format!("predicate {id}")));
            }
            preds.insert(id.as_str());
        }
        for id in &r.entity_ids {
            if !entities.contains_key(id.as_str()) {
                return Err(Error::Integrity(format!("entity {id}")));
            }
            ents.insert(id.as_str());
        }
    }
    let p_labels: usize = preds.iter().map(|id| predicate_labels[id].len()).sum();
    let e_labels: usize = ents.iter().map(|id| entities[id]).sum();
    let mean = |t: usize, n: usize| if n == 0 { 0.0 } else { t as f64 / n as f64 };
    Ok(CorpusStats {
        pairs: records.len(),
        per_type,
        unique_predicates: preds.len(),
        unique_entities: ents.len(),
        predicate_labels: p_labels,
        entity_labels: e_labels,
        mean_labels_per_predicate: mean(p_labels, preds.len()),
        mean_labels_per_entity: mean(e_labels, ents.len()),
        depth_histogram,
    })
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pairs\t{}", self.pairs)?;
        for (qt, n) in &self.per_type {
            writeln!(f, "  {qt}\t{n}")?;
        }
        writeln!(f, "unique predicates\t{}", self.unique_predicates)?;
        writeln!(f, "predicate labels\t{}", self.predicate_labels)?;
        writeln!(f, "mean labels per predicate\t{}", format_mean(self.mean_labels_per_predicate))?;
        writeln!(f, "unique entities\t{}", self.unique_entities)?;
        writeln!(f, "entity labels\t{}", self.entity_labels)?;
        writeln!(f, "mean labels per entity\t{}", format_mean(self.mean_labels_per_entity))?;
        writeln!(f, "depth histogram")?;
        for (d, n) in &self.depth_histogram {
            writeln!(f, "  {d}\t{n}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb_ingest::{EntityRecord, Pos, PredicateRecord};

    fn slice() -> KnowledgeSlice {
        let p = |id: &str, labels: &[&str], d: &str, r: &str| PredicateRecord {
            id: id.into(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            pos: Pos::Noun,
            domain_type: d.into(),
            range_type: r.into(),
        };
        let e = |id: &str, label: &str, t: &str| EntityRecord {
            id: id.into(),
            labels: vec![label.into()],
            entity_type: t.into(),
        };
        KnowledgeSlice::new(
            vec![
                p("P57", &["director", "directed by"], "film", "person"),
                p("P25", &["mother", "mom"], "person", "person"),
                p("P22", &["father", "dad", "pa"], "person", "person"),
                p("P50", &["author"], "literary work", "person"),
            ],
            vec![
                e("Q104123", "Pulp Fiction", "film"),
                e("Q3772", "Quentin Tarantino", "person"),
                e("Q47209", "The Grapes of Wrath", "literary work"),
            ],
        )
        .unwrap()
    }

    fn recipe(dir: &Path, target: usize) -> SplitRecipe {
        let g = dir.join("s.cfg");
        fs::write(&g, crate::grammar::SINGLE_ENTITY_CFG).unwrap();
        SplitRecipe {
            name: "t".into(),
            target_count: target,
            grammars: vec![g],
            max_depth: 4,
            entity_domains: vec!["film".into(), "person".into(), "literary work".into()],
            predicate_domains: vec!["film".into(), "person".into(), "literary work".into()],
            fuzz: FuzzConfig::default(),
            seed: 7,
            predicates: None,
            entities: None,
            type_mix: BTreeMap::new(),
            typing: TypingConfig::default(),
        }
    }

    #[test]
    fn mean_label_formatting() {
        let s = slice();
        let recs = vec![CorpusRecord {
            question: "q".into(),
            query: "SELECT ?end WHERE { [ A ] wdt:P57 / wdt:P25 / wdt:P22 ?end . }".into(),
            question_type: QuestionType::SingleEntity,
            template_id: "t/0".into(),
            depth: 4,
            entity_ids: vec!["Q104123".into()],
            predicate_ids: vec![vec!["P57".into(), "P25".into(), "P22".into(), "P50".into()]],
        }];
        let st = compute_stats(&recs, &s).unwrap();
        assert_eq!(st.unique_predicates, 4);
        assert_eq!(format_mean(st.mean_labels_per_predicate), "2.00");
        assert_eq!(format_mean(1.994), "1.99");
        assert_eq!(format_mean(8.456), "8.46");
    }

    #[test]
    fn unknown_id_is_an_integrity_error() {
        let recs = vec![CorpusRecord {
            question: "q".into(),
            query: "x".into(),
            question_type: QuestionType::Count,
            template_id: "t".into(),
            depth: 3,
            entity_ids: vec!["Q104123".into()],
            predicate_ids: vec![vec!["P999".into()]],
        }];
        let err = compute_stats(&recs, &slice()).unwrap_err();
        assert!(err.to_string().contains("P999"));
    }

    #[test]
    fn target_one_gives_one_pair() {
        let dir = tempfile::tempdir().unwrap();
        let r = recipe(dir.path(), 1);
        let grammars = r.load_grammars().unwrap();
        let pairs = generate_split(&r, &slice(), &grammars).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].split_tag.as_deref(), Some("t"));
    }

    #[test]
    fn missing_domain_fails_before_generation() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = recipe(dir.path(), 5);
        r.entity_domains.push("chemical".into());
        let grammars = r.load_grammars().unwrap();
        let err = generate_split(&r, &slice(), &grammars).err().unwrap();
        assert!(matches!(err, Error::Config(ref m) if m.contains("chemical")));
    }

    #[test]
    fn exhaustion_reports_partial_count() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = recipe(dir.path(), 1000);
        r.entity_domains = vec!["literary work".into()];
        r.max_depth = 3;
        let grammars = r.load_grammars().unwrap();
        match generate_split(&r, &slice(), &grammars) {
            Err(Error::PartialOutput { achieved, target }) => {
                assert_eq!(target, 1000);
                assert!(achieved > 0 && achieved < target);
            }
            other => panic!("expected partial output, got {:?}", other.map(|v| v.len())),
        }
    }

    #[test]
    fn jsonl_field_order_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = recipe(dir.path(), 20);
        let grammars = r.load_grammars().unwrap();
        let pairs = generate_split(&r, &slice(), &grammars).unwrap();
        let out = dir.path().join("c.jsonl");
        write_corpus(&out, &pairs, CorpusFormat::Jsonl).unwrap();
        let text = fs::read_to_string(&out).unwrap();
        let first = text.lines().next().unwrap();
        let keys: Vec<usize> = ["\"question\"", "\"query\"", "\"type\"", "\"template_id\"", "\"depth\"", "\"entity_ids\"", "\"predicate_ids\""]
            .iter()
            .map(|k| first.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
        let back = read_corpus(&out).unwrap();
        let expected: Vec<CorpusRecord> = pairs.iter().map(CorpusRecord::from).collect();
        assert_eq!(back, expected);

        write_corpus(&out, &[], CorpusFormat::Tsv).unwrap();
        assert_eq!(fs::read_to_string(&out).unwrap(), "");
    }

    #[test]
    fn spans_recovered_from_query() {
        let q = "Was John Steinbeck the author of Green Eggs and Ham?";
        let query = "ASK { BIND ( [ John Steinbeck ] as ?end ) . [ Green Eggs and Ham ] wdt:P50 ?end . }";
        let spans = entity_spans_from_query(q, query);
        assert_eq!(&q[spans[0].clone()], "John Steinbeck");
        assert_eq!(&q[spans[1].clone()], "Green Eggs and Ham");
    }
}
