use std::path::Path;

use serde::{Deserialize, Serialize};

use super::QueryResponse;

const QUERY_PHRASES: [&str; 19] = [
    "what is the composer",
    "who is the composer",
    "tell me about the composer",
    "name of the composer",
    "who is the artist",
    "tell me about the artist",
    "what tags are associated with the artist",
    "what are the tags associated with the artist",
    "is there any information available about the album",
    "about the album",
    "name of the artist",
    "what is the name",
    "what is the movement",
    "what is the specific movement",
    "what is the title",
    "which movement is",
    "what is the length of this clip",
    "duration",
    "pack",
];

const RESPONSE_PHRASES: [&str; 23] = [
    "metadata",
    "is not provided",
    "based on the provided metadata",
    "based on the provided beat",
    "based on the provided chord",
    "based on the provided information",
    "based on the provided annotations",
    "no specific mood",
    "there is no mention of",
    "there is no specific mention of any",
    "As an AI assistant, I am unable to",
    "As an AI assistant, I do not",
    "it is difficult to determine",
    "it is not possible to determine",
    "no information is available about the album",
    "cannot determine",
    "violin 1",
    "violin 2",
    "violin 3",
    "viola 1",
    "viola 2",
    "viola 3",
    "pack",
];

/// Disallowed substrings for queries and responses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterList {
    pub query_phrases: Vec<String>,
    pub response_phrases: Vec<String>,
}

impl Default for FilterList {
    fn default() -> Self {
        Self {
            query_phrases: QUERY_PHRASES.iter().map(|s| s.to_string()).collect(),
            response_phrases: RESPONSE_PHRASES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl FilterList {
    /// JSON file `{"query_phrases": [...], "response_phrases": [...]}`.
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }

    /// Longest phrase contained in `text` (case-insensitive); earlier
    /// entries win ties.
    fn longest_match<'a>(phrases: &'a [String], text: &str) -> Option<&'a str> {
        let folded = text.to_lowercase();
        phrases
            .iter()
            .filter(|p| !p.is_empty() && folded.contains(&p.to_lowercase()))
            .fold(None, |best: Option<&String>, p| match best {
                Some(b) if b.chars().count() >= p.chars().count() => Some(b),
                _ => Some(p),
            })
            .map(String::as_str)
    }

    /// Why a pair is disallowed, checking the query first.
    pub fn check(&self, query: &str, response: &str) -> Option<(MatchedField, String)> {
        if let Some(p) = Self::longest_match(&self.query_phrases, query) {
            return Some((MatchedField::Query, p.to_string()));
        }
        Self::longest_match(&self.response_phrases, response).map(|p| (MatchedField::Response, p.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchedField {
    Query,
    Response,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection<T> {
    pub item: T,
    pub field: MatchedField,
    pub phrase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome<T> {
    pub kept: Vec<T>,
    pub rejected: Vec<Rejection<T>>,
}

pub fn filter_pairs<T: QueryResponse>(pairs: Vec<T>, filters: &FilterList) -> FilterOutcome<T> {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for item in pairs {
        match filters.check(item.query(), item.response()) {
            Some((field, phrase)) => rejected.push(Rejection { item, field, phrase }),
            None => kept.push(item),
        }
    }
    FilterOutcome { kept, rejected }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruct::QaPair;
    use proptest::prelude::*;

    fn pair(q: &str, a: &str) -> QaPair {
        QaPair {
            query: q.into(),
            response: a.into(),
        }
    }

    #[test]
    fn listed_examples() {
        let f = FilterList::default();
        assert_eq!(
            f.check("Who is the artist of this piece?", "x"),
            Some((MatchedField::Query, "who is the artist".into()))
        );
        assert_eq!(
            f.check("What is the tempo?", "Based on the provided metadata, the tempo is 120."),
            Some((MatchedField::Response, "based on the provided metadata".into()))
        );
        assert_eq!(f.check("What is the tempo?", "Around 120 BPM."), None);
    }

    #[test]
    fn case_folds_both_sides() {
        let f = FilterList::default();
        let (_, p) = f.check("q", "as an ai assistant, i do not know").unwrap();
        assert_eq!(p, "As an AI assistant, I do not");
        assert!(f.check("WHAT IS THE TITLE?", "").is_some());
    }

    #[test]
    fn table_sizes() {
        let f = FilterList::default();
        assert_eq!(f.query_phrases.len(), 19);
        assert_eq!(f.response_phrases.len(), 23);
    }

    proptest! {
        #[test]
        fn filtering_partitions_input(texts in prop::collection::vec(("[a-z ]{0,30}", "[a-z ]{0,30}"), 0..20)) {
            let pairs: Vec<QaPair> = texts.iter().map(|(q, a)| pair(q, a)).collect();
            let out = filter_pairs(pairs.clone(), &FilterList::default());
            prop_assert_eq!(out.kept.len() + out.rejected.len(), pairs.len());
            for r in &out.rejected {
                let text = match r.field {
                    MatchedField::Query => &r.item.query,
                    MatchedField::Response => &r.item.response,
                };
                prop_assert!(text.to_lowercase().contains(&r.phrase.to_lowercase()));
            }
        }
    }
}
