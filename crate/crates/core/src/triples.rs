//! `{variable, relation, variable}` triples.
//!
//! Pairing rule: for each relation-keyword mention the object is the first
//! variable mention starting after the keyword's first segment, and the
//! subject is the nearest variable mention ending before the keyword that is
//! not co-referent with the object. A mention pair yields at most one triple;
//! the leftmost keyword names it.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::annotate::Matcher;
use crate::coref::CanonicalMap;
use crate::corpus::{Corpus, Sentence};
use crate::lexicon::{Lexicon, Polarity};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub doc: String,
    pub sent: usize,
    /// Half-open token range of the relation keyword.
    pub span: (usize, usize),
    pub keyword: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RdfTriple {
    pub subject: String,
    pub relation: String,
    pub polarity: Polarity,
    pub object: String,
    pub provenance: Vec<Provenance>,
}

impl RdfTriple {
    pub fn key(&self) -> (String, Polarity, String) {
        (self.subject.clone(), self.polarity, self.object.clone())
    }
}

/// Triple extraction bound to one lexicon snapshot.
pub struct TripleExtractor {
    matcher: Matcher,
    coref: Option<CanonicalMap>,
}

impl TripleExtractor {
    pub fn new(lexicon: &Lexicon) -> Self {
        Self {
            matcher: Matcher::new(lexicon),
            coref: None,
        }
    }

    /// Mentions that share a canonical name under `map` also count as
    /// co-referent for the subject skip rule.
    pub fn with_coreference(mut self, map: CanonicalMap) -> Self {
        self.coref = Some(map);
        self
    }

    fn coreferent(&self, a: (usize, &str), b: (usize, &str)) -> bool {
        a.0 == b.0
            || self
                .coref
                .as_ref()
                .is_some_and(|m| m.canonical(a.1) == m.canonical(b.1))
    }

    pub fn extract(&self, sentence: &Sentence) -> Vec<RdfTriple> {
        let ann = self.matcher.annotate(sentence);
        let vars = &ann.variables;
        let mut pairs = HashSet::new();
        let mut out = Vec::new();
        for rel in &ann.relations {
            let Some(obj) = vars.iter().position(|v| v.start >= rel.anchor_end) else {
                continue;
            };
            let object = &vars[obj];
            let subj = vars
                .iter()
                .enumerate()
                .rev()
                .filter(|(_, v)| v.end <= rel.start)
                .find(|(_, v)| {
                    !self.coreferent((v.entry, &v.form), (object.entry, &object.form))
                })
                .map(|(i, _)| i);
            let Some(subj) = subj else {
                continue;
            };
            if !pairs.insert((subj, obj)) {
                continue;
            }
            out.push(RdfTriple {
                subject: vars[subj].form.clone(),
                relation: rel.label.clone(),
                polarity: rel.polarity,
                object: object.form.clone(),
                provenance: vec![Provenance {
                    doc: sentence.doc_id.clone(),
                    sent: sentence.index,
                    span: (rel.start, rel.end),
                    keyword: rel.label.clone(),
                }],
            });
        }
        out
    }

    pub fn extract_corpus(&self, corpus: &Corpus) -> Vec<RdfTriple> {
        corpus.sentences().flat_map(|s| self.extract(s)).collect()
    }
}

pub fn extract_triples(sentence: &Sentence, lexicon: &Lexicon) -> Vec<RdfTriple> {
    TripleExtractor::new(lexicon).extract(sentence)
}

/// Canonicalize endpoints, keep the first triple per
/// `(subject, polarity, object)` with provenance merged, drop self-loops.
pub fn dedup_triples(triples: &[RdfTriple], canonical: &CanonicalMap) -> Vec<RdfTriple> {
    let mut index: HashMap<(String, Polarity, String), usize> = HashMap::new();
    let mut out: Vec<RdfTriple> = Vec::new();
    for t in triples {
        let subject = canonical.canonical(&t.subject);
        let object = canonical.canonical(&t.object);
        if subject == object {
            continue;
        }
        let key = (subject.clone(), t.polarity, object.clone());
        match index.get(&key) {
            Some(&i) => {
                for p in &t.provenance {
                    if !out[i].provenance.contains(p) {
                        out[i].provenance.push(p.clone());
                    }
                }
            }
            None => {
                index.insert(key, out.len());
                out.push(RdfTriple {
                    subject,
                    relation: t.relation.clone(),
                    polarity: t.polarity,
                    object,
                    provenance: t.provenance.clone(),
                });
            }
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct TripleRecord {
    subject: String,
    relation: String,
    polarity: Polarity,
    object: String,
    doc: String,
    sent: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    provenance: Vec<Provenance>,
}

/// One JSON object per line; merged provenance beyond the first occurrence
/// is carried in an extra `provenance` array.
pub fn write_triples_jsonl<W: Write>(triples: &[RdfTriple], mut out: W) -> std::io::Result<()> {
    for t in triples {
        let first = t.provenance.first();
        let record = TripleRecord {
            subject: t.subject.clone(),
            relation: t.relation.clone(),
            polarity: t.polarity,
            object: t.object.clone(),
            doc: first.map(|p| p.doc.clone()).unwrap_or_default(),
            sent: first.map_or(0, |p| p.sent),
            provenance: if t.provenance.len() > 1 {
                t.provenance.clone()
            } else {
                Vec::new()
            },
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_triples_jsonl<R: BufRead>(input: R) -> Result<Vec<RdfTriple>, String> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let r: TripleRecord =
            serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))?;
        let provenance = if r.provenance.is_empty() {
            vec![Provenance {
                doc: r.doc,
                sent: r.sent,
                span: (0, 0),
                keyword: r.relation.clone(),
            }]
        } else {
            r.provenance
        };
        out.push(RdfTriple {
            subject: r.subject,
            relation: r.relation,
            polarity: r.polarity,
            object: r.object,
            provenance,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::split_sentences;
    use crate::lexicon::Source;

    fn lexicon() -> Lexicon {
        let mut lex = Lexicon::new();
        for v in ["oil price", "inflation", "wages"] {
            lex.add_variable(v, vec![], Source::Seed).unwrap();
        }
        lex.add_relation("push up", Polarity::Increase, Source::Seed)
            .unwrap();
        lex.add_relation("drag down", Polarity::Decrease, Source::Seed)
            .unwrap();
        lex
    }

    #[test]
    fn simple_pattern_and_missing_pattern() {
        let lex = lexicon();
        let s = &split_sentences("The oil price pushed up inflation.")[0];
        let t = extract_triples(s, &lex);
        assert_eq!(t.len(), 1);
        assert_eq!(
            (t[0].subject.as_str(), t[0].relation.as_str(), t[0].object.as_str()),
            ("oil price", "push up", "inflation")
        );
        assert_eq!(t[0].provenance[0].span, (3, 5));
        let s = &split_sentences("The oil price and inflation moved.")[0];
        assert!(extract_triples(s, &lex).is_empty());
    }

    #[test]
    fn dedup_merges_and_drops_self_loops() {
        let lex = lexicon();
        let sents = split_sentences(
            "The oil price pushed up inflation. The oil price pushed up inflation. Wages pushed up inflation.",
        );
        let all: Vec<_> = sents.iter().flat_map(|s| extract_triples(s, &lex)).collect();
        assert_eq!(all.len(), 3);
        let d = dedup_triples(&all, &CanonicalMap::identity());
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].provenance.len(), 2);
        let merged = crate::coref::merge_entities(
            &[crate::coref::MergeDecision {
                a: "wages".into(),
                b: "inflation".into(),
                confirm: true,
                canonical: Some("inflation".into()),
            }],
            &Default::default(),
        )
        .unwrap();
        assert_eq!(dedup_triples(&all, &merged).len(), 1);
        assert!(dedup_triples(&[], &merged).is_empty());
    }

    #[test]
    fn jsonl_round_trip_keeps_merged_provenance() {
        let lex = lexicon();
        let sents = split_sentences("Wages pushed up inflation. Wages pushed up inflation.");
        let all: Vec<_> = sents.iter().flat_map(|s| extract_triples(s, &lex)).collect();
        let d = dedup_triples(&all, &CanonicalMap::identity());
        let mut buf = Vec::new();
        write_triples_jsonl(&d, &mut buf).unwrap();
        let back = read_triples_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, d);
        let first_line = String::from_utf8(buf).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(first_line.lines().next().unwrap()).unwrap();
        assert_eq!(v["polarity"], "increase");
        assert_eq!(v["sent"], 0);
    }
}
