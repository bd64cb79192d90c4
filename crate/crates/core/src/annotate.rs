//! Variable and relation-keyword mentions within a sentence.
//!
//! Variable mentions are found longest-match-first (then leftmost) and never
//! overlap. Relation mentions are matched on stems, may span a gap, and never
//! share tokens with a variable mention or with each other.

use std::collections::HashMap;

use crate::corpus::Sentence;
use crate::lexicon::{Lexicon, Polarity, RelationPattern};
use crate::text;

/// Tokens that close a clause; a relation keyword gap may not cross them.
const CLAUSE_BREAKS: [&str; 8] = [",", ";", ":", "，", "；", "：", "。", "."];

pub const DEFAULT_MAX_GAP: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableMention {
    pub start: usize,
    pub end: usize,
    pub entry: usize,
    /// Lowercased lexicon form (name or variant) that matched.
    pub form: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationMention {
    pub start: usize,
    /// One past the last matched token.
    pub end: usize,
    /// One past the first segment; objects are searched from here.
    pub anchor_end: usize,
    pub positions: Vec<usize>,
    pub entry: usize,
    pub label: String,
    pub polarity: Polarity,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Annotation {
    pub variables: Vec<VariableMention>,
    pub relations: Vec<RelationMention>,
}

impl Annotation {
    pub fn distinct_variables(&self) -> usize {
        let mut entries: Vec<_> = self.variables.iter().map(|m| m.entry).collect();
        entries.sort_unstable();
        entries.dedup();
        entries.len()
    }

    pub fn distinct_relations(&self) -> usize {
        let mut entries: Vec<_> = self.relations.iter().map(|m| m.entry).collect();
        entries.sort_unstable();
        entries.dedup();
        entries.len()
    }

    /// Token positions covered by any mention (relation gaps excluded).
    pub fn covered(&self, len: usize) -> Vec<bool> {
        let mut covered = vec![false; len];
        for m in &self.variables {
            covered[m.start..m.end].iter_mut().for_each(|c| *c = true);
        }
        for m in &self.relations {
            for &p in &m.positions {
                covered[p] = true;
            }
        }
        covered
    }
}

struct CompiledRelation {
    entry: usize,
    pattern: RelationPattern,
    label: String,
    polarity: Polarity,
}

/// Compiled view of a lexicon snapshot.
pub struct Matcher {
    variables: HashMap<Vec<String>, (usize, String)>,
    max_variable_len: usize,
    relations: Vec<CompiledRelation>,
    by_first_stem: HashMap<String, Vec<usize>>,
    max_gap: usize,
}

impl Matcher {
    pub fn new(lexicon: &Lexicon) -> Self {
        Self::with_max_gap(lexicon, DEFAULT_MAX_GAP)
    }

    pub fn with_max_gap(lexicon: &Lexicon, max_gap: usize) -> Self {
        let mut variables = HashMap::new();
        let mut max_variable_len = 0;
        for (entry, v) in lexicon.variables().iter().enumerate() {
            for form in v.forms() {
                let tokens = text::folded_tokens(form);
                max_variable_len = max_variable_len.max(tokens.len());
                variables.insert(tokens, (entry, text::entity_key(form)));
            }
        }
        let mut relations = Vec::new();
        let mut by_first_stem: HashMap<String, Vec<usize>> = HashMap::new();
        for (entry, r) in lexicon.relations().iter().enumerate() {
            let pattern = r.pattern();
            if pattern.segments.is_empty() {
                continue;
            }
            by_first_stem
                .entry(pattern.segments[0][0].clone())
                .or_default()
                .push(relations.len());
            relations.push(CompiledRelation {
                entry,
                label: r.label(),
                polarity: r.polarity,
                pattern,
            });
        }
        Self {
            variables,
            max_variable_len,
            relations,
            by_first_stem,
            max_gap,
        }
    }

    pub fn annotate(&self, sentence: &Sentence) -> Annotation {
        let folded = sentence.folded();
        let variables = self.variable_mentions(&folded);
        let relations = self.relation_mentions(&folded, &variables);
        Annotation {
            variables,
            relations,
        }
    }

    fn variable_mentions(&self, folded: &[String]) -> Vec<VariableMention> {
        let mut candidates = Vec::new();
        for start in 0..folded.len() {
            let longest = self.max_variable_len.min(folded.len() - start);
            for len in 1..=longest {
                if let Some((entry, form)) = self.variables.get(&folded[start..start + len]) {
                    candidates.push(VariableMention {
                        start,
                        end: start + len,
                        entry: *entry,
                        form: form.clone(),
                    });
                }
            }
        }
        candidates.sort_by_key(|m| (std::cmp::Reverse(m.end - m.start), m.start));
        let mut taken = vec![false; folded.len()];
        let mut accepted = Vec::new();
        for m in candidates {
            if taken[m.start..m.end].iter().any(|&t| t) {
                continue;
            }
            taken[m.start..m.end].iter_mut().for_each(|t| *t = true);
            accepted.push(m);
        }
        accepted.sort_by_key(|m| m.start);
        accepted
    }

    fn relation_mentions(
        &self,
        folded: &[String],
        variables: &[VariableMention],
    ) -> Vec<RelationMention> {
        let stems: Vec<String> = folded.iter().map(|t| text::stem(t)).collect();
        let mut blocked = vec![false; folded.len()];
        for m in variables {
            blocked[m.start..m.end].iter_mut().for_each(|b| *b = true);
        }
        let mut candidates = Vec::new();
        for start in 0..stems.len() {
            let Some(ids) = self.by_first_stem.get(&stems[start]) else {
                continue;
            };
            for &id in ids {
                let rel = &self.relations[id];
                if let Some(positions) = self.match_at(&rel.pattern, &stems, folded, start) {
                    if positions.iter().any(|&p| blocked[p]) {
                        continue;
                    }
                    let first_len = rel.pattern.segments[0].len();
                    candidates.push(RelationMention {
                        start,
                        end: positions[positions.len() - 1] + 1,
                        anchor_end: start + first_len,
                        positions,
                        entry: rel.entry,
                        label: rel.label.clone(),
                        polarity: rel.polarity,
                    });
                }
            }
        }
        candidates.sort_by_key(|m| (std::cmp::Reverse(m.positions.len()), m.start, m.entry));
        let mut taken = vec![false; folded.len()];
        let mut accepted = Vec::new();
        for m in candidates {
            if m.positions.iter().any(|&p| taken[p]) {
                continue;
            }
            for &p in &m.positions {
                taken[p] = true;
            }
            accepted.push(m);
        }
        accepted.sort_by_key(|m| (m.start, m.end));
        accepted
    }

    fn match_at(
        &self,
        pattern: &RelationPattern,
        stems: &[String],
        folded: &[String],
        start: usize,
    ) -> Option<Vec<usize>> {
        let mut positions = Vec::with_capacity(pattern.token_count());
        let first = &pattern.segments[0];
        if stems.len() < start + first.len() || stems[start..start + first.len()] != first[..] {
            return None;
        }
        positions.extend(start..start + first.len());
        let mut cursor = start + first.len();
        for segment in &pattern.segments[1..] {
            let mut found = None;
            let limit = (cursor + self.max_gap).min(stems.len());
            for s in cursor..=limit {
                if s + segment.len() > stems.len() {
                    break;
                }
                if stems[s..s + segment.len()] == segment[..] {
                    found = Some(s);
                    break;
                }
                if s < stems.len() && CLAUSE_BREAKS.contains(&folded[s].as_str()) {
                    break;
                }
            }
            let s = found?;
            positions.extend(s..s + segment.len());
            cursor = s + segment.len();
        }
        Some(positions)
    }
}
