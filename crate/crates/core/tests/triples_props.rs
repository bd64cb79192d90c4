use std::collections::BTreeMap;

use econkg::coref::CanonicalMap;
use econkg::corpus::split_sentences;
use econkg::lexicon::{Lexicon, Polarity, Source};
use econkg::triples::{dedup_triples, extract_triples, Provenance, RdfTriple};
use proptest::prelude::*;

const VARIABLES: [&str; 6] = [
    "coal output",
    "steel price",
    "freight volume",
    "bank lending",
    "retail sales",
    "power usage",
];
const RELATIONS: [(&str, Polarity); 4] = [
    ("push up", Polarity::Increase),
    ("drag down", Polarity::Decrease),
    ("boost", Polarity::Increase),
    ("relate to", Polarity::Neutral),
];
const FILLER: [&str; 6] = ["the", "sharply", "in", "april", "strongly", "then"];

fn lexicon() -> Lexicon {
    let mut lex = Lexicon::new();
    for v in VARIABLES {
        lex.add_variable(v, vec![], Source::Seed).unwrap();
    }
    for (k, p) in RELATIONS {
        lex.add_relation(k, p, Source::Seed).unwrap();
    }
    lex
}

fn filler() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..FILLER.len(), 0..3)
}

/// A chain V0 R0 V1 R1 V2 ... with filler between every piece, plus the
/// triples planted by construction.
fn planted() -> impl Strategy<Value = (String, Vec<(String, String, String)>)> {
    (1usize..4)
        .prop_flat_map(|links| {
            (
                prop::sample::subsequence((0..VARIABLES.len()).collect::<Vec<_>>(), links + 1)
                    .prop_shuffle(),
                prop::collection::vec(0..RELATIONS.len(), links),
                prop::collection::vec(filler(), 2 * links + 2),
            )
        })
        .prop_map(|(vars, rels, fills)| {
            let mut words: Vec<String> = Vec::new();
            let mut fills = fills.into_iter();
            let mut push_fill = |words: &mut Vec<String>| {
                for f in fills.next().unwrap_or_default() {
                    words.push(FILLER[f].to_string());
                }
            };
            let mut expected = Vec::new();
            push_fill(&mut words);
            words.push(VARIABLES[vars[0]].to_string());
            for (i, &r) in rels.iter().enumerate() {
                push_fill(&mut words);
                words.push(RELATIONS[r].0.to_string());
                push_fill(&mut words);
                words.push(VARIABLES[vars[i + 1]].to_string());
                expected.push((
                    VARIABLES[vars[i]].to_string(),
                    RELATIONS[r].0.to_string(),
                    VARIABLES[vars[i + 1]].to_string(),
                ));
            }
            (format!("{}.", words.join(" ")), expected)
        })
}

fn triple(s: &str, p: Polarity, o: &str, sent: usize) -> RdfTriple {
    RdfTriple {
        subject: s.into(),
        relation: p.as_str().into(),
        polarity: p,
        object: o.into(),
        provenance: vec![Provenance {
            doc: "d".into(),
            sent,
            span: (0, 1),
            keyword: p.as_str().into(),
        }],
    }
}

fn random_triples() -> impl Strategy<Value = (Vec<RdfTriple>, Vec<usize>)> {
    (
        prop::collection::vec((0..8usize, 0..3usize, 0..8usize), 0..100),
        prop::collection::vec(0..8usize, 8),
    )
        .prop_map(|(raw, alias)| {
            let triples = raw
                .into_iter()
                .enumerate()
                .map(|(i, (s, p, o))| triple(&format!("e{s}"), Polarity::ALL[p], &format!("e{o}"), i))
                .collect();
            (triples, alias)
        })
}

/// Alias map sending each `e{i}` to the smallest index of its alias class.
fn alias_map(alias: &[usize]) -> CanonicalMap {
    let decisions: Vec<_> = alias
        .iter()
        .enumerate()
        .filter(|(i, a)| *i != **a)
        .map(|(i, a)| econkg::coref::MergeDecision {
            a: format!("e{i}"),
            b: format!("e{a}"),
            confirm: true,
            canonical: None,
        })
        .collect();
    econkg::coref::merge_entities(&decisions, &Default::default()).unwrap()
}

proptest! {
    #[test]
    fn planted_chains_are_recovered((text, expected) in planted()) {
        let lex = lexicon();
        let sentences = split_sentences(&text);
        prop_assert_eq!(sentences.len(), 1);
        let got: Vec<_> = extract_triples(&sentences[0], &lex)
            .into_iter()
            .map(|t| (t.subject, t.relation, t.object))
            .collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn extraction_is_deterministic((text, _) in planted()) {
        let lex = lexicon();
        let s = &split_sentences(&text)[0];
        prop_assert_eq!(extract_triples(s, &lex), extract_triples(s, &lex));
    }

    #[test]
    fn dedup_matches_grouping_oracle((triples, alias) in random_triples()) {
        let map = alias_map(&alias);
        let got = dedup_triples(&triples, &map);

        let mut order = Vec::new();
        let mut groups: BTreeMap<(String, Polarity, String), Vec<usize>> = BTreeMap::new();
        for (i, t) in triples.iter().enumerate() {
            let s = map.canonical(&t.subject);
            let o = map.canonical(&t.object);
            if s == o {
                continue;
            }
            let key = (s, t.polarity, o);
            if !groups.contains_key(&key) {
                order.push(key.clone());
            }
            groups.entry(key).or_default().push(i);
        }
        prop_assert_eq!(got.len(), order.len());
        for (t, key) in got.iter().zip(&order) {
            prop_assert_eq!(&(t.subject.clone(), t.polarity, t.object.clone()), key);
            let members = &groups[key];
            prop_assert_eq!(&t.relation, &triples[members[0]].relation);
            let sents: Vec<usize> = t.provenance.iter().map(|p| p.sent).collect();
            prop_assert_eq!(&sents, members);
        }
    }

    #[test]
    fn dedup_is_idempotent_and_never_grows((triples, alias) in random_triples()) {
        let map = alias_map(&alias);
        let once = dedup_triples(&triples, &map);
        prop_assert!(once.len() <= triples.len());
        prop_assert_eq!(dedup_triples(&once, &map), once.clone());
        let mut keys: Vec<_> = once.iter().map(|t| t.key()).collect();
        keys.sort();
        keys.dedup();
        prop_assert_eq!(keys.len(), once.len());
        prop_assert!(once.iter().all(|t| t.subject != t.object));
    }
}
