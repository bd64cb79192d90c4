//! Entity similarity, duplicate proposals and name unification.
//!
//! `Sim(u, v) = 1 - cos(u, v)` is a distance: duplicates are the pairs with
//! small values. Entity vectors come from a plain-text vector file, falling
//! back to averaged token vectors and then to character-trigram hashing.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::fnv1a64;
use crate::lexicon::Lexicon;
use crate::text;

#[derive(Debug, Error)]
pub enum CorefError {
    #[error("cannot read vectors {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("vector file line {line}: {message}")]
    BadVectorLine { line: usize, message: String },
    #[error("vector dimension {found} does not match configured dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("zero-norm vector for {0:?}")]
    ZeroNorm(String),
    #[error("cannot embed an empty entity name")]
    EmptyName,
    #[error("threshold {0} outside [0, 2]")]
    BadThreshold(f64),
    #[error("conflicting canonical names {names:?} for component {component:?}")]
    Conflict {
        component: Vec<String>,
        names: Vec<String>,
    },
    #[error("merge decisions line {line}: {message}")]
    BadDecision { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VectorProvenance {
    File,
    TokenAverage,
    CharHash,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityVector {
    pub name: String,
    pub vector: Vec<f64>,
    pub provenance: VectorProvenance,
}

/// Word vectors keyed by folded token; multi-word entries use `_` joins.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingSource {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingSource {
    /// No vocabulary: every entity falls back to character hashing.
    pub fn hashing_only(dim: usize) -> Self {
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn load(path: &Path, dim: usize) -> Result<Self, CorefError> {
        let file = File::open(path).map_err(|source| CorefError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(BufReader::new(file), dim)
    }

    pub fn parse<R: BufRead>(reader: R, dim: usize) -> Result<Self, CorefError> {
        let mut vectors = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| CorefError::BadVectorLine {
                line: i + 1,
                message: e.to_string(),
            })?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else {
                continue;
            };
            let values = parts
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CorefError::BadVectorLine {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if values.len() != dim {
                return Err(CorefError::DimensionMismatch {
                    expected: dim,
                    found: values.len(),
                });
            }
            vectors.insert(text::fold(token), values);
        }
        Ok(Self { dim, vectors })
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) -> Result<(), CorefError> {
        if vector.len() != self.dim {
            return Err(CorefError::DimensionMismatch {
                expected: self.dim,
                found: vector.len(),
            });
        }
        self.vectors.insert(text::fold(token), vector);
        Ok(())
    }

    pub fn embed(&self, name: &str) -> Result<EntityVector, CorefError> {
        let key = text::entity_key(name);
        if key.is_empty() {
            return Err(CorefError::EmptyName);
        }
        let tokens: Vec<String> = text::folded_tokens(&key)
            .into_iter()
            .filter(|t| !text::is_punctuation(t))
            .collect();
        let joined = tokens.join("_");
        if let Some(v) = self.vectors.get(&joined) {
            return Ok(EntityVector {
                name: key,
                vector: v.clone(),
                provenance: VectorProvenance::File,
            });
        }
        if !tokens.is_empty() && tokens.iter().all(|t| self.vectors.contains_key(t)) {
            let mut mean = vec![0.0; self.dim];
            for t in &tokens {
                for (m, x) in mean.iter_mut().zip(&self.vectors[t]) {
                    *m += x;
                }
            }
            let n = tokens.len() as f64;
            mean.iter_mut().for_each(|m| *m /= n);
            if mean.iter().any(|&x| x != 0.0) {
                return Ok(EntityVector {
                    name: key,
                    vector: mean,
                    provenance: VectorProvenance::TokenAverage,
                });
            }
        }
        Ok(EntityVector {
            vector: char_hash_vector(&key, self.dim),
            name: key,
            provenance: VectorProvenance::CharHash,
        })
    }
}

/// Character-trigram counts hashed into `dim` buckets. Never all-zero for a
/// non-empty key because the padded key always yields a trigram.
fn char_hash_vector(key: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim.max(1)];
    let padded: Vec<char> = format!("<{key}>").chars().collect();
    for w in padded.windows(3) {
        let gram: String = w.iter().collect();
        let bucket = (fnv1a64(gram.as_bytes()) % v.len() as u64) as usize;
        v[bucket] += 1.0;
    }
    v
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// `1 - u.v / (|u| |v|)`, in [0, 2].
pub fn similarity(u: &EntityVector, v: &EntityVector) -> Result<f64, CorefError> {
    if u.vector.len() != v.vector.len() {
        return Err(CorefError::DimensionMismatch {
            expected: u.vector.len(),
            found: v.vector.len(),
        });
    }
    let uu = dot(&u.vector, &u.vector);
    let vv = dot(&v.vector, &v.vector);
    if uu == 0.0 {
        return Err(CorefError::ZeroNorm(u.name.clone()));
    }
    if vv == 0.0 {
        return Err(CorefError::ZeroNorm(v.name.clone()));
    }
    let cos = (dot(&u.vector, &v.vector) / (uu * vv).sqrt()).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuplicateProposal {
    pub a: String,
    pub b: String,
    pub score: f64,
}

pub const DEFAULT_TAU: f64 = 0.15;

/// Pairs with `Sim <= tau`, plus known alias pairs at score 0, ascending.
pub fn propose_duplicates(
    entities: &[String],
    source: &EmbeddingSource,
    aliases: &[(String, String)],
    tau: f64,
) -> Result<Vec<DuplicateProposal>, CorefError> {
    if !(0.0..=2.0).contains(&tau) {
        return Err(CorefError::BadThreshold(tau));
    }
    let names: Vec<String> = entities
        .iter()
        .map(|e| text::entity_key(e))
        .filter(|e| !e.is_empty())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let vectors = names
        .iter()
        .map(|n| source.embed(n))
        .collect::<Result<Vec<_>, _>>()?;
    let mut pairs: BTreeMap<(String, String), f64> = BTreeMap::new();
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            let s = similarity(&vectors[i], &vectors[j])?;
            if s <= tau {
                pairs.insert((names[i].clone(), names[j].clone()), s);
            }
        }
    }
    let known: BTreeSet<&String> = names.iter().collect();
    for (x, y) in aliases {
        let (x, y) = (text::entity_key(x), text::entity_key(y));
        if x != y && known.contains(&x) && known.contains(&y) {
            let key = if x < y { (x, y) } else { (y, x) };
            pairs.insert(key, 0.0);
        }
    }
    let mut out: Vec<DuplicateProposal> = pairs
        .into_iter()
        .map(|((a, b), score)| DuplicateProposal { a, b, score })
        .collect();
    out.sort_by(|p, q| {
        p.score
            .total_cmp(&q.score)
            .then_with(|| p.a.cmp(&q.a))
            .then_with(|| p.b.cmp(&q.b))
    });
    Ok(out)
}

/// An editor's verdict on one proposed pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeDecision {
    pub a: String,
    pub b: String,
    pub confirm: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canonical: Option<String>,
}

/// Total map from entity key to canonical key. Names never merged map to
/// themselves.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalMap {
    map: BTreeMap<String, String>,
}

impl CanonicalMap {
    pub fn identity() -> Self {
        Self::default()
    }

    /// Each variant maps to its entry's name.
    pub fn from_lexicon(lexicon: &Lexicon) -> Self {
        let mut map = BTreeMap::new();
        for v in lexicon.variables() {
            let name = text::entity_key(&v.name);
            for form in v.forms() {
                map.insert(text::entity_key(form), name.clone());
            }
        }
        Self { map }
    }

    pub fn canonical(&self, name: &str) -> String {
        let key = text::entity_key(name);
        self.map.get(&key).cloned().unwrap_or(key)
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().all(|(k, v)| k == v)
    }

    /// Compose: apply `self`, then `next`.
    pub fn then(&self, next: &CanonicalMap) -> CanonicalMap {
        let mut map = BTreeMap::new();
        for k in self.map.keys().chain(next.map.keys()) {
            map.insert(k.clone(), next.canonical(&self.canonical(k)));
        }
        let mut out = CanonicalMap { map };
        // Targets must map to themselves.
        let targets: Vec<String> = out.map.values().cloned().collect();
        for t in targets {
            out.map.entry(t.clone()).or_insert(t);
        }
        out
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller index becomes root; the result does not depend on call order.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Equivalence closure of confirmed pairs. Each component maps to the
/// editor's canonical choice, else the most frequent member (ties by name).
pub fn merge_entities(
    decisions: &[MergeDecision],
    frequency: &HashMap<String, u64>,
) -> Result<CanonicalMap, CorefError> {
    let confirmed: Vec<&MergeDecision> = decisions.iter().filter(|d| d.confirm).collect();
    let mut names = BTreeSet::new();
    for d in &confirmed {
        names.insert(text::entity_key(&d.a));
        names.insert(text::entity_key(&d.b));
        if let Some(c) = &d.canonical {
            names.insert(text::entity_key(c));
        }
    }
    let names: Vec<String> = names.into_iter().collect();
    let index: HashMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut uf = UnionFind::new(names.len());
    let mut choices: Vec<(usize, String)> = Vec::new();
    for d in &confirmed {
        let a = index[text::entity_key(&d.a).as_str()];
        let b = index[text::entity_key(&d.b).as_str()];
        uf.union(a, b);
        if let Some(c) = &d.canonical {
            let c = text::entity_key(c);
            uf.union(a, index[c.as_str()]);
            choices.push((a, c));
        }
    }
    let mut components: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..names.len() {
        components.entry(uf.find(i)).or_default().push(i);
    }
    let mut chosen: HashMap<usize, BTreeSet<String>> = HashMap::new();
    for (member, c) in choices {
        chosen.entry(uf.find(member)).or_default().insert(c);
    }
    let freq = |n: &str| frequency.get(n).copied().unwrap_or(0);
    let mut map = BTreeMap::new();
    for (root, members) in components {
        let canonical = match chosen.get(&root) {
            Some(set) if set.len() > 1 => {
                return Err(CorefError::Conflict {
                    component: members.iter().map(|&i| names[i].clone()).collect(),
                    names: set.iter().cloned().collect(),
                })
            }
            Some(set) => set.iter().next().cloned().unwrap_or_default(),
            None => members
                .iter()
                .map(|&i| &names[i])
                .min_by(|x, y| freq(y).cmp(&freq(x)).then_with(|| x.cmp(y)))
                .cloned()
                .unwrap_or_default(),
        };
        for &i in &members {
            map.insert(names[i].clone(), canonical.clone());
        }
    }
    Ok(CanonicalMap { map })
}

/// Merge decisions JSONL, one `{"a", "b", "confirm", "canonical"?}` per line.
pub fn read_merge_decisions<R: BufRead>(input: R) -> Result<Vec<MergeDecision>, CorefError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let bad = |message: String| CorefError::BadDecision {
            line: i + 1,
            message,
        };
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?);
    }
    Ok(out)
}

pub fn write_merge_decisions<W: std::io::Write>(
    decisions: &[MergeDecision],
    mut out: W,
) -> std::io::Result<()> {
    for d in decisions {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_entity(v: &[f64]) -> EntityVector {
        EntityVector {
            name: "x".into(),
            vector: v.to_vec(),
            provenance: VectorProvenance::File,
        }
    }

    fn pair(a: &str, b: &str, canonical: Option<&str>) -> MergeDecision {
        MergeDecision {
            a: a.into(),
            b: b.into(),
            confirm: true,
            canonical: canonical.map(String::from),
        }
    }

    #[test]
    fn similarity_reference_values() {
        let u = vec_entity(&[1.0, 0.0]);
        let v = vec_entity(&[1.0, 1.0]);
        let w = vec_entity(&[0.0, 3.0]);
        assert_eq!(similarity(&u, &u).unwrap(), 0.0);
        assert_eq!(similarity(&u, &w).unwrap(), 1.0);
        assert!((similarity(&u, &v).unwrap() - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-15);
        assert_eq!(similarity(&u, &vec_entity(&[-1.0, 0.0])).unwrap(), 2.0);
        assert!(matches!(
            similarity(&u, &vec_entity(&[0.0, 0.0])),
            Err(CorefError::ZeroNorm(_))
        ));
    }

    #[test]
    fn embedding_sources() {
        let file = "rate 1 0 0\ninterest 0 1 0\nconsumer_price_index 0 0 2\n";
        let src = EmbeddingSource::parse(file.as_bytes(), 3).unwrap();
        let single = src.embed("Rate").unwrap();
        assert_eq!(single.vector, vec![1.0, 0.0, 0.0]);
        assert_eq!(single.provenance, VectorProvenance::File);
        let avg = src.embed("interest rate").unwrap();
        assert_eq!(avg.vector, vec![0.5, 0.5, 0.0]);
        assert_eq!(avg.provenance, VectorProvenance::TokenAverage);
        assert_eq!(
            src.embed("Consumer Price Index").unwrap().provenance,
            VectorProvenance::File
        );
        let oov1 = src.embed("migrant worker shortage").unwrap();
        let oov2 = src.embed("migrant worker shortage").unwrap();
        assert_eq!(oov1, oov2);
        assert_eq!(oov1.provenance, VectorProvenance::CharHash);
        assert!(oov1.vector.iter().any(|&x| x > 0.0));
        assert!(matches!(
            EmbeddingSource::parse("a 1 2\n".as_bytes(), 3),
            Err(CorefError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn alias_pairs_are_proposed_at_zero() {
        let src = EmbeddingSource::hashing_only(64);
        let ents = vec!["Inflation".to_string(), "CPI".to_string(), "GDP".to_string()];
        let aliases = vec![("Inflation".to_string(), "CPI".to_string())];
        let out = propose_duplicates(&ents, &src, &aliases, 0.0).unwrap();
        assert_eq!(
            out,
            vec![DuplicateProposal {
                a: "cpi".into(),
                b: "inflation".into(),
                score: 0.0
            }]
        );
        assert!(propose_duplicates(&ents, &src, &[], 0.0).unwrap().is_empty());
        assert!(propose_duplicates(&ents, &src, &[], 2.5).is_err());
    }

    #[test]
    fn merge_with_explicit_canonical() {
        let map = merge_entities(
            &[
                pair("CPI", "consumer price index", None),
                pair("CPI", "inflation", Some("inflation")),
            ],
            &HashMap::new(),
        )
        .unwrap();
        for n in ["cpi", "consumer price index", "inflation"] {
            assert_eq!(map.canonical(n), "inflation");
        }
        assert_eq!(map.canonical("gdp"), "gdp");
    }

    #[test]
    fn merge_defaults_to_frequency_then_name() {
        let freq = HashMap::from([("b".to_string(), 5u64), ("c".to_string(), 5u64)]);
        let map = merge_entities(&[pair("a", "b", None), pair("c", "a", None)], &freq).unwrap();
        assert_eq!(map.canonical("a"), "b");
        assert_eq!(map.canonical("c"), "b");
        assert!(merge_entities(&[], &freq).unwrap().is_identity());
    }

    #[test]
    fn merge_conflict_is_reported() {
        let err = merge_entities(
            &[pair("a", "b", Some("a")), pair("b", "c", Some("c"))],
            &HashMap::new(),
        )
        .unwrap_err();
        match err {
            CorefError::Conflict { component, names } => {
                assert_eq!(component, vec!["a", "b", "c"]);
                assert_eq!(names, vec!["a", "c"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejected_pairs_do_not_merge() {
        let mut d = pair("a", "b", None);
        d.confirm = false;
        assert!(merge_entities(&[d], &HashMap::new()).unwrap().is_identity());
    }
}
