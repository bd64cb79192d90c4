//! Tokenization and normalization shared by every extraction stage.
//!
//! The default tokenizer splits on Unicode whitespace and emits every
//! punctuation character as its own token. Runs of alphanumeric characters
//! (including unsegmented CJK text) stay together; segmented input should be
//! supplied pre-tokenized instead.

use std::sync::OnceLock;

use rust_stemmers::{Algorithm, Stemmer};

/// Split `text` into word and punctuation tokens, preserving case.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            tokens.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            tokens.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Case fold used for all matching.
pub fn fold(token: &str) -> String {
    token.to_lowercase()
}

/// Tokenize and case fold in one pass.
pub fn folded_tokens(text: &str) -> Vec<String> {
    tokenize(text).iter().map(|t| fold(t)).collect()
}

/// Canonical key for an entity name: trimmed, inner whitespace collapsed,
/// lowercased. Entity names in triples, canonical maps and graphs are keys.
pub fn entity_key(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

fn english_stemmer() -> &'static Stemmer {
    static STEMMER: OnceLock<Stemmer> = OnceLock::new();
    STEMMER.get_or_init(|| Stemmer::create(Algorithm::English))
}

/// Stem an already folded token. Tokens without ASCII letters are returned
/// unchanged so non-Latin scripts pass through untouched.
pub fn stem(folded: &str) -> String {
    if folded.chars().any(|c| c.is_ascii_alphabetic()) {
        english_stemmer().stem(folded).into_owned()
    } else {
        folded.to_string()
    }
}

/// True when the token carries no letters or digits.
pub fn is_punctuation(token: &str) -> bool {
    !token.chars().any(char::is_alphanumeric)
}

/// Join tokens for display: no space before closing punctuation or after
/// opening brackets.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    const ATTACH_LEFT: &[&str] = &[",", ".", ";", ":", "!", "?", ")", "]", "'", "’", "”", "%"];
    const ATTACH_RIGHT: &[&str] = &["(", "[", "“", "$"];
    let mut out = String::new();
    let mut glue = true;
    for t in tokens {
        let t = t.as_ref();
        if !glue && !ATTACH_LEFT.contains(&t) {
            out.push(' ');
        }
        out.push_str(t);
        glue = ATTACH_RIGHT.contains(&t);
    }
    out
}

/// Remove all whitespace; used to compare token sequences against raw text.
pub fn strip_whitespace(text: &str) -> String {
    text.chars().filter(|c| !c.is_whitespace()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detokenize_attaches_punctuation() {
        let t = tokenize("growth rate of migrant workers' wages (yoy), 5%");
        assert_eq!(detokenize(&t), "growth rate of migrant workers' wages (yoy), 5%");
    }

    #[test]
    fn splits_words_and_punctuation() {
        assert_eq!(
            tokenize("migrant workers' wages, 2005."),
            vec!["migrant", "workers", "'", "wages", ",", "2005", "."]
        );
        assert_eq!(tokenize("long-term"), vec!["long", "-", "term"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn cjk_runs_stay_whole_and_cjk_punctuation_splits() {
        assert_eq!(tokenize("通货膨胀上升。"), vec!["通货膨胀上升", "。"]);
    }

    #[test]
    fn stems_inflections_to_shared_roots() {
        assert_eq!(stem("pushed"), stem("push"));
        assert_eq!(stem("increased"), stem("increase"));
        assert_eq!(stem("making"), stem("make"));
        assert_eq!(stem("resulted"), stem("result"));
        assert_eq!(stem("2005"), "2005");
    }

    #[test]
    fn entity_key_collapses_space_and_case() {
        assert_eq!(entity_key("  Consumer   Price Index "), "consumer price index");
    }
}
