//! Tokenization and TF-IDF weighting shared by the similarity and analytics code.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use crate::error::{Error, Result};

const STOP_WORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "amp", "an", "and", "any", "are", "as", "at",
    "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could", "did", "do",
    "does", "doing", "don", "down", "during", "each", "few", "for", "from", "further", "get", "got", "had", "has",
    "have", "having", "he", "her", "here", "hers", "herself", "him", "himself", "his", "how", "i", "if", "in",
    "into", "is", "it", "its", "itself", "just", "let", "like", "me", "more", "most", "my", "myself", "no", "nor",
    "not", "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over",
    "own", "re", "rt", "same", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs",
    "them", "themselves", "then", "there", "these", "they", "this", "those", "through", "to", "too", "under",
    "until", "up", "us", "very", "via", "was", "we", "were", "what", "when", "where", "which", "while", "who",
    "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself", "yourselves",
];

fn stop_words() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOP_WORDS.iter().copied().collect())
}

/// Lowercases, drops URLs, splits on anything non-alphanumeric and removes
/// stop words and single characters.
pub fn tokenize(text: &str) -> Vec<String> {
    let stop = stop_words();
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let lower = chunk.to_lowercase();
        if lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.") {
            continue;
        }
        for tok in lower.split(|c: char| !c.is_alphanumeric()) {
            if tok.chars().count() > 1 && !stop.contains(tok) {
                tokens.push(tok.to_owned());
            }
        }
    }
    tokens
}

/// Term counts per document plus document frequencies over a corpus.
#[derive(Clone, Debug)]
pub struct TermStats {
    pub n_docs: usize,
    pub counts: Vec<HashMap<String, usize>>,
    pub df: HashMap<String, usize>,
}

impl TermStats {
    pub fn from_corpus<S: AsRef<str>>(corpus: &[S]) -> Self {
        let counts: Vec<HashMap<String, usize>> = corpus
            .iter()
            .map(|doc| {
                let mut tf = HashMap::new();
                for tok in tokenize(doc.as_ref()) {
                    *tf.entry(tok).or_insert(0) += 1;
                }
                tf
            })
            .collect();
        let mut df = HashMap::new();
        for tf in &counts {
            for term in tf.keys() {
                *df.entry(term.clone()).or_insert(0) += 1;
            }
        }
        TermStats {
            n_docs: corpus.len(),
            counts,
            df,
        }
    }

    /// `ln(N_docs / df)`.
    pub fn idf(&self, term: &str) -> f64 {
        match self.df.get(term) {
            Some(&df) if df > 0 => (self.n_docs as f64 / df as f64).ln(),
            _ => 0.0,
        }
    }

    /// Up to `size` terms by descending document frequency, ties lexicographic.
    pub fn vocabulary(&self, size: usize) -> Result<Vec<String>> {
        if self.df.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let mut terms: Vec<(&String, usize)> = self.df.iter().map(|(t, &d)| (t, d)).collect();
        terms.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Ok(terms.into_iter().take(size).map(|(t, _)| t.clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_strips_urls_punctuation_and_stop_words() {
        let toks = tokenize("RT @snopes: The claim is FALSE! https://t.co/xyz see www.snopes.com Trump's");
        assert_eq!(toks, vec!["snopes", "claim", "false", "see", "trump"]);
    }

    #[test]
    fn vocabulary_ties_are_lexicographic() {
        let stats = TermStats::from_corpus(&["beta alpha", "gamma alpha", "delta"]);
        assert_eq!(stats.vocabulary(3).unwrap(), vec!["alpha", "beta", "delta"]);
        assert!(TermStats::from_corpus(&["", "the of"]).vocabulary(5).is_err());
    }
}
