//! Knowledge graph over canonical variable entities.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::Polarity;
use crate::text;
use crate::triples::{Provenance, RdfTriple};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
    #[error("edge {subject:?} -> {object:?} references a missing node")]
    DanglingEdge { subject: String, object: String },
    #[error("self-loop on {0:?}")]
    SelfLoop(String),
    #[error("duplicate edge ({subject:?}, {polarity}, {object:?})")]
    DuplicateEdge {
        subject: String,
        polarity: Polarity,
        object: String,
    },
    #[error("duplicate node {0:?}")]
    DuplicateNode(String),
    #[error("graph JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub is_center: bool,
    /// Number of triple occurrences the entity takes part in.
    pub frequency: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub subject: String,
    pub polarity: Polarity,
    pub object: String,
    pub keywords: Vec<String>,
    pub provenance: Vec<Provenance>,
}

type EdgeKey = (String, Polarity, String);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<String, Node>,
    edges: BTreeMap<EdgeKey, Edge>,
    pub warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    warnings: Vec<String>,
}

/// One node per entity, one edge per `(subject, polarity, object)`.
/// Triples should already be canonicalized; repeats are merged here too.
pub fn build_graph(triples: &[RdfTriple], centers: &[String]) -> KnowledgeGraph {
    let mut g = KnowledgeGraph::default();
    for t in triples {
        let (s, o) = (text::entity_key(&t.subject), text::entity_key(&t.object));
        if s == o {
            g.warnings.push(format!("dropped self-loop on {s:?}"));
            continue;
        }
        let weight = t.provenance.len().max(1) as u64;
        for name in [&s, &o] {
            g.node_mut(name).frequency += weight;
        }
        let edge = g
            .edges
            .entry((s.clone(), t.polarity, o.clone()))
            .or_insert_with(|| Edge {
                subject: s,
                polarity: t.polarity,
                object: o,
                keywords: Vec::new(),
                provenance: Vec::new(),
            });
        if !edge.keywords.contains(&t.relation) {
            edge.keywords.push(t.relation.clone());
        }
        for p in &t.provenance {
            if !edge.provenance.contains(p) {
                edge.provenance.push(p.clone());
            }
        }
    }
    for c in centers {
        let key = text::entity_key(c);
        if !g.nodes.contains_key(&key) {
            g.warnings
                .push(format!("center {key:?} does not occur in any triple"));
        }
        g.node_mut(&key).is_center = true;
    }
    g
}

impl KnowledgeGraph {
    fn node_mut(&mut self, name: &str) -> &mut Node {
        self.nodes.entry(name.to_string()).or_insert_with(|| Node {
            name: name.to_string(),
            is_center: false,
            frequency: 0,
        })
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.get(&text::entity_key(name))
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.nodes.contains_key(&text::entity_key(name))
    }

    /// Undirected neighbor sets; parallel edges count once.
    fn adjacency(&self) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut adj: BTreeMap<&str, BTreeSet<&str>> =
            self.nodes.keys().map(|k| (k.as_str(), BTreeSet::new())).collect();
        for e in self.edges.values() {
            adj.get_mut(e.subject.as_str()).map(|s| s.insert(e.object.as_str()));
            adj.get_mut(e.object.as_str()).map(|s| s.insert(e.subject.as_str()));
        }
        adj
    }

    /// Number of incident edges, in either direction.
    pub fn degree(&self, name: &str) -> usize {
        let key = text::entity_key(name);
        self.edges
            .values()
            .filter(|e| e.subject == key || e.object == key)
            .count()
    }

    /// Hop distance from `center` to every node within `hops`, ignoring
    /// edge direction.
    pub fn distances(&self, center: &str, hops: usize) -> Result<BTreeMap<String, usize>, GraphError> {
        let center = text::entity_key(center);
        if !self.nodes.contains_key(&center) {
            return Err(GraphError::UnknownEntity(center));
        }
        let adj = self.adjacency();
        let mut dist = BTreeMap::new();
        dist.insert(center.clone(), 0);
        let mut queue = VecDeque::from([center]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[&cur];
            if d == hops {
                continue;
            }
            for &next in &adj[cur.as_str()] {
                if !dist.contains_key(next) {
                    dist.insert(next.to_string(), d + 1);
                    queue.push_back(next.to_string());
                }
            }
        }
        Ok(dist)
    }

    /// Induced subgraph on the nodes within `hops` of `center`.
    pub fn subgraph_around(&self, center: &str, hops: usize) -> Result<KnowledgeGraph, GraphError> {
        let keep = self.distances(center, hops)?;
        Ok(KnowledgeGraph {
            nodes: self
                .nodes
                .iter()
                .filter(|(k, _)| keep.contains_key(*k))
                .map(|(k, n)| (k.clone(), n.clone()))
                .collect(),
            edges: self
                .edges
                .iter()
                .filter(|(_, e)| keep.contains_key(&e.subject) && keep.contains_key(&e.object))
                .map(|(k, e)| (k.clone(), e.clone()))
                .collect(),
            warnings: Vec::new(),
        })
    }

    /// Entities within `hops` of `center`, nearest first, then by degree
    /// (descending), then by name.
    pub fn linked_variables(&self, center: &str, hops: usize) -> Result<Vec<String>, GraphError> {
        let dist = self.distances(center, hops)?;
        let mut out: Vec<(usize, std::cmp::Reverse<usize>, String)> = dist
            .into_iter()
            .filter(|&(_, d)| d > 0)
            .map(|(name, d)| (d, std::cmp::Reverse(self.degree(&name)), name))
            .collect();
        out.sort();
        Ok(out.into_iter().map(|(_, _, n)| n).collect())
    }

    /// Ordered pairs reported with more than one polarity.
    pub fn polarity_conflicts(&self) -> Vec<(String, String, Vec<Polarity>)> {
        let mut by_pair: BTreeMap<(&str, &str), Vec<Polarity>> = BTreeMap::new();
        for e in self.edges.values() {
            by_pair
                .entry((e.subject.as_str(), e.object.as_str()))
                .or_default()
                .push(e.polarity);
        }
        by_pair
            .into_iter()
            .filter(|(_, p)| p.len() > 1)
            .map(|((s, o), p)| (s.to_string(), o.to_string(), p))
            .collect()
    }

    pub fn to_json(&self) -> String {
        let doc = GraphJson {
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.values().cloned().collect(),
            warnings: self.warnings.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("graph serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, GraphError> {
        let doc: GraphJson = serde_json::from_str(s)?;
        let mut g = KnowledgeGraph {
            warnings: doc.warnings,
            ..Default::default()
        };
        for n in doc.nodes {
            if g.nodes.contains_key(&n.name) {
                return Err(GraphError::DuplicateNode(n.name));
            }
            g.nodes.insert(n.name.clone(), n);
        }
        for e in doc.edges {
            if e.subject == e.object {
                return Err(GraphError::SelfLoop(e.subject));
            }
            if !g.nodes.contains_key(&e.subject) || !g.nodes.contains_key(&e.object) {
                return Err(GraphError::DanglingEdge {
                    subject: e.subject,
                    object: e.object,
                });
            }
            let key = (e.subject.clone(), e.polarity, e.object.clone());
            if g.edges.contains_key(&key) {
                return Err(GraphError::DuplicateEdge {
                    subject: e.subject,
                    polarity: e.polarity,
                    object: e.object,
                });
            }
            g.edges.insert(key, e);
        }
        Ok(g)
    }

    /// Graphviz digraph. Center nodes are filled and bold; edges carry the
    /// polarity as label and a polarity colour.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph kg {\n  rankdir=LR;\n  node [shape=box, fontname=\"Helvetica\"];\n");
        for n in self.nodes.values() {
            if n.is_center {
                let _ = writeln!(
                    out,
                    "  {} [style=\"filled,bold\", fillcolor=\"#f4d58d\", penwidth=2];",
                    dot_id(&n.name)
                );
            } else {
                let _ = writeln!(out, "  {};", dot_id(&n.name));
            }
        }
        for e in self.edges.values() {
            let color = match e.polarity {
                Polarity::Increase => "#2a7f3f",
                Polarity::Decrease => "#b22222",
                Polarity::Neutral => "#555555",
            };
            let _ = writeln!(
                out,
                "  {} -> {} [label={}, color=\"{color}\", tooltip={}];",
                dot_id(&e.subject),
                dot_id(&e.object),
                dot_id(e.polarity.as_str()),
                dot_id(&e.keywords.join("; ")),
            );
        }
        out.push_str("}\n");
        out
    }
}

fn dot_id(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
