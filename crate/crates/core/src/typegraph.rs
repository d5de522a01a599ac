//! The predicate type graph: ontological types as nodes, one edge per
//! `(domain_type, range_type)` signature carrying every predicate with it.
//!
//! A walk over this graph is a chain of signatures that compose, so any
//! predicates later drawn for those signatures type-check end to end.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb_ingest::{Pos, PredicateRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub from: String,
    pub to: String,
    /// Predicate ids with this signature and their POS, sorted by id.
    pub predicates: Vec<(String, Pos)>,
}

impl Edge {
    fn matching(&self, pos: Option<Pos>) -> usize {
        match pos {
            None => self.predicates.len(),
            Some(p) => self.predicates.iter().filter(|(_, q)| *q == p).count(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TypeGraph {
    nodes: BTreeSet<String>,
    edges: Vec<Edge>,
    outgoing: BTreeMap<String, Vec<usize>>,
    by_predicate: HashMap<String, Vec<usize>>,
}

/// Builds the graph from validated predicate records.
pub fn build_graph(predicates: &[PredicateRecord]) -> Result<TypeGraph> {
    if predicates.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let mut grouped: BTreeMap<(String, String), BTreeMap<String, Pos>> = BTreeMap::new();
    for p in predicates {
        grouped
            .entry((p.domain_type.clone(), p.range_type.clone()))
            .or_default()
            .insert(p.id.clone(), p.pos);
    }
    let mut nodes = BTreeSet::new();
    let mut edges = Vec::with_capacity(grouped.len());
    let mut outgoing: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut by_predicate: HashMap<String, Vec<usize>> = HashMap::new();
    for ((from, to), preds) in grouped {
        let i = edges.len();
        nodes.insert(from.clone());
        nodes.insert(to.clone());
        outgoing.entry(from.clone()).or_default().push(i);
        for id in preds.keys() {
            by_predicate.entry(id.clone()).or_default().push(i);
        }
        edges.push(Edge {
            from,
            to,
            predicates: preds.into_iter().collect(),
        });
    }
    Ok(TypeGraph {
        nodes,
        edges,
        outgoing,
        by_predicate,
    })
}

impl TypeGraph {
    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains(&self, node: &str) -> bool {
        self.nodes.contains(node)
    }

    pub fn outgoing(&self, node: &str) -> impl Iterator<Item = &Edge> {
        self.outgoing
            .get(node)
            .into_iter()
            .flatten()
            .map(|&i| &self.edges[i])
    }

    pub fn edge(&self, from: &str, to: &str) -> Option<&Edge> {
        self.outgoing(from).find(|e| e.to == to)
    }

    /// Signatures a predicate id occurs with.
    pub fn signatures_of(&self, predicate_id: &str) -> impl Iterator<Item = (&str, &str)> {
        self.by_predicate
            .get(predicate_id)
            .into_iter()
            .flatten()
            .map(|&i| (self.edges[i].from.as_str(), self.edges[i].to.as_str()))
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph types {\n");
        for n in &self.nodes {
            let _ = writeln!(out, "  {n:?};");
        }
        for e in &self.edges {
            let ids: Vec<&str> = e.predicates.iter().map(|(id, _)| id.as_str()).collect();
            let _ = writeln!(out, "  {:?} -> {:?} [label={:?}];", e.from, e.to, ids.join(","));
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStep {
    pub from: String,
    pub to: String,
    /// POS the slot filled from this step requires, if any.
    pub pos: Option<Pos>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicatePath {
    pub start_type: String,
    pub steps: Vec<PathStep>,
    pub end_type: String,
}

impl PredicatePath {
    pub fn empty(start_type: impl Into<String>) -> Self {
        let start_type = start_type.into();
        PredicatePath {
            end_type: start_type.clone(),
            start_type,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Both felicity conditions: the first step leaves `start_type` and every
    /// step starts where the previous one ended.
    pub fn is_chained(&self) -> bool {
        let mut at = self.start_type.as_str();
        for s in &self.steps {
            if s.from != at {
                return false;
            }
            at = &s.to;
        }
        at == self.end_type
    }
}

/// How the next edge is picked at each node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraversalPolicy {
    /// Uniform over admissible edges.
    #[default]
    EdgeUniform,
    /// Proportional to the number of admissible predicates on each edge.
    PredicateUniform,
}

impl std::str::FromStr for TraversalPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge-uniform" => Ok(TraversalPolicy::EdgeUniform),
            "predicate-uniform" => Ok(TraversalPolicy::PredicateUniform),
            other => Err(Error::Config(format!("unknown traversal policy `{other}`"))),
        }
    }
}

fn require_node(graph: &TypeGraph, node: &str) -> Result<()> {
    if graph.contains(node) {
        Ok(())
    } else {
        Err(Error::Contract(format!("type `{node}` is not in the graph")))
    }
}

/// Walks `slots.len()` edges from `start_type`. Each step's edge must carry at
/// least one predicate of the slot's POS (when given). A zero-length walk is
/// the empty path at `start_type`, which need not be a graph node.
pub fn sample_unidirectional_path<R: Rng + ?Sized>(
    graph: &TypeGraph,
    start_type: &str,
    slots: &[Option<Pos>],
    policy: TraversalPolicy,
    rng: &mut R,
) -> Result<PredicatePath> {
    if !slots.is_empty() {
        require_node(graph, start_type)?;
    }
    let mut path = PredicatePath::empty(start_type);
    for &pos in slots {
        let candidates: Vec<(&Edge, usize)> = graph
            .outgoing(&path.end_type)
            .map(|e| (e, e.matching(pos)))
            .filter(|(_, n)| *n > 0)
            .collect();
        let chosen = match policy {
            _ if candidates.is_empty() => return Err(Error::DeadEnd { partial: path }),
            TraversalPolicy::EdgeUniform => candidates[rng.gen_range(0..candidates.len())].0,
            TraversalPolicy::PredicateUniform => {
                let total: usize = candidates.iter().map(|(_, n)| n).sum();
                let mut pick = rng.gen_range(0..total);
                candidates
                    .iter()
                    .find(|(_, n)| {
                        if pick < *n {
                            true
                        } else {
                            pick -= n;
                            false
                        }
                    })
                    .expect("pick < total")
                    .0
            }
        };
        path.steps.push(PathStep {
            from: chosen.from.clone(),
            to: chosen.to.clone(),
            pos,
        });
        path.end_type = chosen.to.clone();
    }
    Ok(path)
}

/// Unconstrained edge-uniform walk of `length` steps.
pub fn sample_path<R: Rng + ?Sized>(
    graph: &TypeGraph,
    start_type: &str,
    length: usize,
    rng: &mut R,
) -> Result<PredicatePath> {
    sample_unidirectional_path(
        graph,
        start_type,
        &vec![None; length],
        TraversalPolicy::EdgeUniform,
        rng,
    )
}

/// Samples two walks that end on the same type.
///
/// Path A is drawn once; path B is redrawn up to `attempts` times until its end
/// type matches. A zero-length path ends at its own start type.
pub fn sample_bidirectional_pair<R: Rng + ?Sized>(
    graph: &TypeGraph,
    start_a: &str,
    slots_a: &[Option<Pos>],
    start_b: &str,
    slots_b: &[Option<Pos>],
    policy: TraversalPolicy,
    attempts: usize,
    rng: &mut R,
) -> Result<(PredicatePath, PredicatePath)> {
    let a = sample_unidirectional_path(graph, start_a, slots_a, policy, rng)?;
    if slots_b.is_empty() {
        return if start_b == a.end_type {
            Ok((a, PredicatePath::empty(start_b)))
        } else {
            Err(Error::DeadEnd { partial: a })
        };
    }
    require_node(graph, start_b)?;
    for _ in 0..attempts {
        if let Ok(b) = sample_unidirectional_path(graph, start_b, slots_b, policy, rng) {
            if b.end_type == a.end_type {
                return Ok((a, b));
            }
        }
    }
    Err(Error::DeadEnd { partial: a })
}

/// Checks that `predicate_ids` compose from `start_type` under some choice of
/// signature per id. Unknown ids fail with a diagnostic naming them.
pub fn check_chain(
    graph: &TypeGraph,
    start_type: &str,
    predicate_ids: &[impl AsRef<str>],
) -> std::result::Result<String, String> {
    let mut frontier: BTreeSet<&str> = BTreeSet::from([start_type]);
    for id in predicate_ids {
        let id = id.as_ref();
        let sigs: Vec<(&str, &str)> = graph.signatures_of(id).collect();
        if sigs.is_empty() {
            return Err(format!("unknown predicate {id}"));
        }
        let next: BTreeSet<&str> = sigs
            .iter()
            .filter(|(from, _)| frontier.contains(from))
            .map(|&(_, to)| to)
            .collect();
        if next.is_empty() {
            return Err(format!(
                "{id} does not accept any of {:?}",
                frontier.iter().collect::<Vec<_>>()
            ));
        }
        frontier = next;
    }
    Ok(frontier.into_iter().next().unwrap_or(start_type).to_string())
}

pub fn validate_chain(graph: &TypeGraph, start_type: &str, predicate_ids: &[impl AsRef<str>]) -> bool {
    match check_chain(graph, start_type, predicate_ids) {
        Ok(_) => true,
        Err(why) => {
            log::debug!("chain from {start_type} rejected: {why}");
            false
        }
    }
}
