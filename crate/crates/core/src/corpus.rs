//! Documents, sentences and candidate phrases.
//!
//! A [`Corpus`] is read from JSONL with one document per line, either as
//! plain text (`{"id", "title", "date"?, "text"}`) or pre-tokenized
//! (`{"id", "sentences": [[token, ...], ...]}`). Once built it is read-only.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate document id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: expected a {expected} record")]
    FormatMismatch { line: usize, expected: &'static str },
    #[error("failed to write corpus: {0}")]
    Write(#[from] std::io::Error),
}

/// One sentence of a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub index: usize,
    pub tokens: Vec<String>,
    pub raw: String,
}

impl Sentence {
    pub fn reference(&self) -> SentenceRef {
        SentenceRef {
            doc: self.doc_id.clone(),
            sent: self.index,
        }
    }

    /// Case-folded tokens, the form used for all matching.
    pub fn folded(&self) -> Vec<String> {
        self.tokens.iter().map(|t| text::fold(t)).collect()
    }
}

/// Stable pointer to a sentence: document id plus ordinal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SentenceRef {
    pub doc: String,
    pub sent: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub date: Option<NaiveDate>,
    pub sentences: Vec<Sentence>,
}

/// A contiguous token n-gram of a sentence. `span` is the half-open token
/// range `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phrase {
    pub tokens: Vec<String>,
    pub span: (usize, usize),
}

impl Phrase {
    pub fn n(&self) -> usize {
        self.tokens.len()
    }

    /// Folded text with single spaces between tokens.
    pub fn text(&self) -> String {
        self.tokens
            .iter()
            .map(|t| text::fold(t))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Sentence boundary detection over raw text.
#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    terminators: HashSet<char>,
    abbreviations: HashSet<String>,
}

const DEFAULT_TERMINATORS: [char; 7] = ['.', '!', '?', '。', '！', '？', ';'];
const DEFAULT_ABBREVIATIONS: [&str; 13] = [
    "dr", "mr", "mrs", "ms", "prof", "st", "jr", "sr", "vs", "e.g", "i.e", "fig", "inc",
];
const CLOSERS: [char; 7] = ['"', '\'', ')', ']', '”', '’', '」'];

impl Default for SentenceSplitter {
    fn default() -> Self {
        Self::new(DEFAULT_TERMINATORS, DEFAULT_ABBREVIATIONS)
    }
}

impl SentenceSplitter {
    pub fn new<T, A, S>(terminators: T, abbreviations: A) -> Self
    where
        T: IntoIterator<Item = char>,
        A: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            terminators: terminators.into_iter().collect(),
            abbreviations: abbreviations
                .into_iter()
                .map(|a| a.as_ref().to_lowercase())
                .collect(),
        }
    }

    /// Split `text` into sentences belonging to `doc_id`.
    pub fn split(&self, doc_id: &str, text: &str) -> Vec<Sentence> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut sentences = Vec::new();
        let mut start = 0usize;
        let mut i = 0usize;
        while i < chars.len() {
            let (_, ch) = chars[i];
            if self.terminators.contains(&ch) && self.is_boundary(&chars, i, text) {
                let mut j = i + 1;
                while j < chars.len()
                    && (self.terminators.contains(&chars[j].1) || CLOSERS.contains(&chars[j].1))
                {
                    j += 1;
                }
                let end = chars.get(j).map_or(text.len(), |c| c.0);
                push_sentence(&mut sentences, doc_id, &text[start..end]);
                start = end;
                i = j;
                continue;
            }
            i += 1;
        }
        push_sentence(&mut sentences, doc_id, &text[start..]);
        sentences
    }

    fn is_boundary(&self, chars: &[(usize, char)], i: usize, text: &str) -> bool {
        let ch = chars[i].1;
        if !ch.is_ascii() {
            return true;
        }
        // ASCII terminators only end a sentence before whitespace or end of text.
        let mut j = i + 1;
        while j < chars.len() && CLOSERS.contains(&chars[j].1) {
            j += 1;
        }
        if j < chars.len() && !chars[j].1.is_whitespace() {
            return false;
        }
        if ch != '.' {
            return true;
        }
        let word_start = chars[..i]
            .iter()
            .rposition(|(_, c)| c.is_whitespace())
            .map_or(0, |p| p + 1);
        let word = &text[chars.get(word_start).map_or(0, |c| c.0)..chars[i].0];
        !self.abbreviations.contains(&word.to_lowercase())
    }
}

fn push_sentence(out: &mut Vec<Sentence>, doc_id: &str, segment: &str) {
    let raw = segment.trim();
    if raw.is_empty() {
        return;
    }
    out.push(Sentence {
        doc_id: doc_id.to_string(),
        index: out.len(),
        tokens: text::tokenize(raw),
        raw: raw.to_string(),
    });
}

/// Split with the default terminators `. ! ? 。 ！ ？ ;`.
pub fn split_sentences(document_text: &str) -> Vec<Sentence> {
    SentenceSplitter::default().split("", document_text)
}

/// All contiguous n-grams with `1 <= n <= n_max`, ordered by start then length.
pub fn generate_phrases(sentence: &Sentence, n_max: usize) -> Vec<Phrase> {
    let len = sentence.tokens.len();
    let mut out = Vec::new();
    for start in 0..len {
        for n in 1..=n_max.min(len - start) {
            out.push(Phrase {
                tokens: sentence.tokens[start..start + n].to_vec(),
                span: (start, start + n),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IngestFormat {
    #[default]
    Auto,
    Plain,
    PreTokenized,
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    date: Option<String>,
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    sentences: Option<Vec<Vec<String>>>,
    #[serde(default)]
    raw: Option<Vec<String>>,
}

#[derive(Serialize)]
struct TokenizedRecord<'a> {
    id: &'a str,
    title: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    date: Option<String>,
    sentences: Vec<&'a [String]>,
    raw: Vec<&'a str>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_documents(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::new();
        for (i, doc) in documents.iter().enumerate() {
            if by_id.insert(doc.id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    line: i + 1,
                    id: doc.id.clone(),
                });
            }
        }
        Ok(Self { documents, by_id })
    }

    /// Build a corpus from in-memory plain texts keyed by id.
    pub fn from_texts<I, S, T>(texts: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: AsRef<str>,
    {
        let splitter = SentenceSplitter::default();
        let docs = texts
            .into_iter()
            .map(|(id, body)| {
                let id = id.into();
                Document {
                    sentences: splitter.split(&id, body.as_ref()),
                    id,
                    title: String::new(),
                    date: None,
                }
            })
            .collect();
        Self::from_documents(docs)
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.documents[i])
    }

    pub fn sentence(&self, r: &SentenceRef) -> Option<&Sentence> {
        self.document(&r.doc).and_then(|d| d.sentences.get(r.sent))
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.documents.iter().flat_map(|d| d.sentences.iter())
    }

    pub fn sentence_count(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }

    pub fn read_jsonl(path: &Path, format: IngestFormat) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_jsonl(BufReader::new(file), format, &SentenceSplitter::default())
    }

    pub fn parse_jsonl<R: BufRead>(
        reader: R,
        format: IngestFormat,
        splitter: &SentenceSplitter,
    ) -> Result<Self, CorpusError> {
        let mut documents = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: RawRecord =
                serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
                    line: line_no,
                    message: e.to_string(),
                })?;
            let doc = record_to_document(record, line_no, format, splitter)?;
            if !seen.insert(doc.id.clone()) {
                return Err(CorpusError::DuplicateId {
                    line: line_no,
                    id: doc.id,
                });
            }
            documents.push(doc);
        }
        Self::from_documents(documents)
    }

    /// Serialize in the pre-tokenized shape, keeping titles, dates and raw
    /// sentence text so that re-ingesting yields an identical corpus.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), CorpusError> {
        for doc in &self.documents {
            let rec = TokenizedRecord {
                id: &doc.id,
                title: &doc.title,
                date: doc.date.map(|d| d.format("%Y-%m-%d").to_string()),
                sentences: doc.sentences.iter().map(|s| s.tokens.as_slice()).collect(),
                raw: doc.sentences.iter().map(|s| s.raw.as_str()).collect(),
            };
            serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn record_to_document(
    record: RawRecord,
    line: usize,
    format: IngestFormat,
    splitter: &SentenceSplitter,
) -> Result<Document, CorpusError> {
    let malformed = |message: String| CorpusError::Malformed { line, message };
    if record.id.trim().is_empty() {
        return Err(malformed("empty document id".into()));
    }
    let date = record
        .date
        .as_deref()
        .map(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d"))
        .transpose()
        .map_err(|e| malformed(format!("bad date: {e}")))?;
    let sentences = match (record.text, record.sentences) {
        (Some(_), Some(_)) => return Err(malformed("both \"text\" and \"sentences\" given".into())),
        (None, None) => return Err(malformed("missing \"text\" or \"sentences\"".into())),
        (Some(body), None) => {
            if format == IngestFormat::PreTokenized {
                return Err(CorpusError::FormatMismatch {
                    line,
                    expected: "pre-tokenized",
                });
            }
            splitter.split(&record.id, &body)
        }
        (None, Some(token_lists)) => {
            if format == IngestFormat::Plain {
                return Err(CorpusError::FormatMismatch {
                    line,
                    expected: "plain",
                });
            }
            if let Some(raw) = &record.raw {
                if raw.len() != token_lists.len() {
                    return Err(malformed("\"raw\" and \"sentences\" differ in length".into()));
                }
            }
            let mut out = Vec::with_capacity(token_lists.len());
            for (index, tokens) in token_lists.into_iter().enumerate() {
                if tokens.is_empty() || tokens.iter().any(|t| t.trim().is_empty()) {
                    return Err(malformed(format!("sentence {index} has an empty token")));
                }
                let raw = match &record.raw {
                    Some(raw) => raw[index].clone(),
                    None => tokens.join(" "),
                };
                out.push(Sentence {
                    doc_id: record.id.clone(),
                    index,
                    tokens,
                    raw,
                });
            }
            out
        }
    };
    Ok(Document {
        id: record.id,
        title: record.title.unwrap_or_default(),
        date,
        sentences,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAO: &str = "Dr. Gao concluded that a long-term systematic migrant worker shortage began to appear in the Chinese migrant labor market around 2005, which greatly increased the growth rate of migrant workers' wages, resulted in the increase of food prices, and pushed up the increase in consumer price index, making the average level of inflation probably 100 to 200 basis points higher.";

    fn parse(s: &str) -> Result<Corpus, CorpusError> {
        Corpus::parse_jsonl(s.as_bytes(), IngestFormat::Auto, &SentenceSplitter::default())
    }

    #[test]
    fn empty_text_has_no_sentences() {
        assert!(split_sentences("").is_empty());
        assert!(split_sentences("  \n ").is_empty());
    }

    #[test]
    fn two_periods_two_sentences() {
        let s = split_sentences("A rises. B falls.");
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].raw, "A rises.");
        assert_eq!(s[1].raw, "B falls.");
        assert_eq!((s[0].index, s[1].index), (0, 1));
    }

    #[test]
    fn title_abbreviation_does_not_split() {
        let s = split_sentences(GAO);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].tokens.first().map(String::as_str), Some("Dr"));
    }

    #[test]
    fn decimals_and_cjk_terminators() {
        assert_eq!(split_sentences("Rates rose 2.5 points. Then fell.").len(), 2);
        assert_eq!(split_sentences("物价上涨。工资上升！").len(), 2);
        assert_eq!(split_sentences("Prices rose; wages fell.").len(), 2);
    }

    #[test]
    fn custom_terminators() {
        let splitter = SentenceSplitter::new(['|'], Vec::<String>::new());
        assert_eq!(splitter.split("d", "a b | c d. e").len(), 2);
    }

    #[test]
    fn phrase_counts() {
        let sentence = &split_sentences("alpha beta gamma")[0];
        assert_eq!(generate_phrases(sentence, 5).len(), 6);
        let unigrams = generate_phrases(sentence, 1);
        let texts: Vec<_> = unigrams.iter().map(|p| p.tokens[0].clone()).collect();
        assert_eq!(texts, sentence.tokens);
    }

    #[test]
    fn ingest_empty_and_single() {
        assert_eq!(parse("").unwrap().len(), 0);
        let line = serde_json::json!({"id": "gao", "title": "t", "date": "2020-08-15", "text": GAO});
        let c = parse(&line.to_string()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.documents()[0].sentences.len(), 1);
        assert_eq!(
            c.documents()[0].date,
            NaiveDate::from_ymd_opt(2020, 8, 15)
        );
    }

    #[test]
    fn malformed_line_is_reported() {
        let input = "{\"id\":\"a\",\"text\":\"x.\"}\n{\"id\": 3}\n{\"id\":\"c\",\"text\":\"y.\"}\n";
        match parse(input) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let input = "{\"id\":\"a\",\"text\":\"x.\"}\n{\"id\":\"a\",\"text\":\"y.\"}\n";
        assert!(matches!(
            parse(input),
            Err(CorpusError::DuplicateId { line: 2, .. })
        ));
    }

    #[test]
    fn format_is_enforced_when_requested() {
        let input = "{\"id\":\"a\",\"sentences\":[[\"x\",\"y\"]]}\n";
        let err = Corpus::parse_jsonl(
            input.as_bytes(),
            IngestFormat::Plain,
            &SentenceSplitter::default(),
        )
        .unwrap_err();
        assert!(matches!(err, CorpusError::FormatMismatch { line: 1, .. }));
        let c = parse(input).unwrap();
        assert_eq!(c.documents()[0].sentences[0].raw, "x y");
    }

    #[test]
    fn empty_token_sentence_rejected() {
        let input = "{\"id\":\"a\",\"sentences\":[[]]}\n";
        assert!(matches!(parse(input), Err(CorpusError::Malformed { line: 1, .. })));
    }
}
