use econkg::corpus::{generate_phrases, split_sentences, Corpus, IngestFormat, SentenceSplitter};
use proptest::prelude::*;

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-z]{1,7}", 1..25)
}

fn documents() -> impl Strategy<Value = Vec<(String, String)>> {
    prop::collection::vec(
        prop::collection::vec(words(), 1..4).prop_map(|sents| {
            sents
                .iter()
                .map(|w| format!("{}.", w.join(" ")))
                .collect::<Vec<_>>()
                .join(" ")
        }),
        0..5,
    )
    .prop_map(|texts| {
        texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| (format!("doc-{i}"), t))
            .collect()
    })
}

proptest! {
    #[test]
    fn phrase_count_matches_enumeration(w in words(), n_max in 1usize..7) {
        let text = w.join(" ");
        let s = &split_sentences(&text)[0];
        let t = s.tokens.len();
        let phrases = generate_phrases(s, n_max);
        let formula: usize = (1..=n_max.min(t)).map(|n| t - n + 1).sum();
        prop_assert_eq!(phrases.len(), formula);

        let mut brute = Vec::new();
        for a in 0..t {
            for b in a + 1..=t {
                if b - a <= n_max {
                    brute.push((a, b));
                }
            }
        }
        let spans: Vec<_> = phrases.iter().map(|p| p.span).collect();
        prop_assert_eq!(spans, brute);
        for p in &phrases {
            prop_assert_eq!(p.n(), p.span.1 - p.span.0);
            prop_assert_eq!(&p.tokens[..], &s.tokens[p.span.0..p.span.1]);
        }
    }

    #[test]
    fn splitting_is_idempotent(docs in documents()) {
        for (_, text) in docs {
            for s in split_sentences(&text) {
                let again = split_sentences(&s.raw);
                prop_assert_eq!(again.len(), 1);
                prop_assert_eq!(&again[0].tokens, &s.tokens);
                prop_assert_eq!(&again[0].raw, &s.raw);
            }
        }
    }

    #[test]
    fn tokens_reproduce_raw_modulo_whitespace(docs in documents()) {
        for (_, text) in docs {
            for s in split_sentences(&text) {
                let joined: String = s.tokens.concat();
                let squeezed: String = s.raw.chars().filter(|c| !c.is_whitespace()).collect();
                prop_assert_eq!(joined, squeezed);
            }
        }
    }

    #[test]
    fn jsonl_round_trip(docs in documents()) {
        let corpus = Corpus::from_texts(docs).unwrap();
        let mut buf = Vec::new();
        corpus.write_jsonl(&mut buf).unwrap();
        let back = Corpus::parse_jsonl(buf.as_slice(), IngestFormat::Auto, &SentenceSplitter::default()).unwrap();
        prop_assert_eq!(back, corpus);
    }
}

#[test]
fn ingest_examples() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(Corpus::read_jsonl(&empty, IngestFormat::Plain).unwrap().len(), 0);

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(
        &bad,
        "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\n{\"id\":\"c\",\"text\":\"z\"}\n",
    )
    .unwrap();
    let err = Corpus::read_jsonl(&bad, IngestFormat::Plain).unwrap_err();
    assert!(err.to_string().contains("line 2"), "{err}");

    let dup = dir.path().join("dup.jsonl");
    std::fs::write(&dup, "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n").unwrap();
    assert!(Corpus::read_jsonl(&dup, IngestFormat::Plain).is_err());

    let pre = dir.path().join("pre.jsonl");
    std::fs::write(&pre, "{\"id\":\"zh\",\"sentences\":[[\"猪肉\",\"价格\",\"推高\",\"CPI\"]]}\n").unwrap();
    let c = Corpus::read_jsonl(&pre, IngestFormat::PreTokenized).unwrap();
    assert_eq!(c.sentence_count(), 1);
    assert_eq!(c.documents()[0].sentences[0].tokens.len(), 4);
}

#[test]
fn ten_tokens_give_forty_phrases() {
    let s = &split_sentences("a b c d e f g h i j")[0];
    assert_eq!(generate_phrases(s, 5).len(), 40);
    assert_eq!(generate_phrases(s, 1).len(), 10);
    assert!(split_sentences("").is_empty());
}
