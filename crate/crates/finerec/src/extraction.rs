//! Attribute-opinion pair mining from reviews.
//!
//! Two extractors share one pair store: a chat-completion client driving the
//! prompt template (with record/replay caching, see [`llm`]) and a
//! deterministic lexicon matcher for offline runs (see [`lexicon`]).

pub mod lexicon;
pub mod llm;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::ops::Bound;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FineRecError, Result};

pub use lexicon::{extract_with_lexicon, AttributeLexicon};
pub use llm::{extract_with_llm, CassetteClient, ChatEndpoint, ExtractionReport, HttpChatClient};

/// Ordered attribute names; the position of a name is its canonical index
/// everywhere downstream (graphs, embeddings, concatenation).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSet {
    names: Vec<String>,
}

impl AttributeSet {
    pub fn new(names: Vec<String>) -> Result<AttributeSet> {
        if names.is_empty() {
            return Err(FineRecError::Config("attribute set is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(FineRecError::Config("empty attribute name".into()));
            }
            if !seen.insert(name.clone()) {
                return Err(FineRecError::Config(format!(
                    "duplicate attribute name `{name}`"
                )));
            }
        }
        Ok(AttributeSet { names })
    }

    /// Shipped default attribute lists, keyed by dataset family.
    pub fn builtin(name: &str) -> Option<AttributeSet> {
        let names: &[&str] = match name {
            "cellphones" => &[
                "Battery",
                "Brand",
                "Color",
                "Connectivity",
                "Performance",
                "Price",
                "Size",
            ],
            "beauty" => &[
                "Brand",
                "Color",
                "Effectiveness",
                "Ingredients",
                "Price",
                "Scent",
                "Size",
            ],
            "sports" => &[
                "Brand",
                "Comfort",
                "Functionality",
                "Material",
                "Price",
                "Quality",
                "Size",
            ],
            "yelp" => &[
                "Ambience",
                "Cleanliness",
                "Food",
                "Location",
                "Parking",
                "Price",
                "Service",
            ],
            _ => return None,
        };
        Some(AttributeSet {
            names: names.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// Load a JSON array of attribute names.
    pub fn load(path: &Path) -> Result<AttributeSet> {
        let text = fs::read_to_string(path)
            .map_err(|e| FineRecError::io(path.display().to_string(), e))?;
        let names: Vec<String> = serde_json::from_str(&text)
            .map_err(|e| FineRecError::parse(path.display().to_string(), 1, e.to_string()))?;
        AttributeSet::new(names)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.names).expect("names serialize");
        text.push('\n');
        fs::write(path, text).map_err(|e| FineRecError::io(path.display().to_string(), e))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Normalize opinion text: lowercase, trimmed, single-space separated.
pub fn normalize_opinion(text: &str) -> String {
    text.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// One extracted fact: user expressed `opinion` about `attribute` of `item`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttributeOpinionPair {
    pub user: String,
    pub item: String,
    pub attribute: usize,
    pub opinion: String,
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    user: String,
    item: String,
    attribute: String,
    opinion: String,
}

/// Deduplicated set of attribute-opinion pairs with an inverted index from
/// (user, item, attribute) to the opinions expressed there.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairStore {
    pairs: BTreeSet<AttributeOpinionPair>,
    index: BTreeMap<(String, String, usize), BTreeSet<String>>,
}

impl PairStore {
    /// Insert a pair; returns false when the exact quadruple was present.
    pub fn insert(&mut self, pair: AttributeOpinionPair) -> bool {
        let fresh = self.pairs.insert(pair.clone());
        if fresh {
            self.index
                .entry((pair.user, pair.item, pair.attribute))
                .or_default()
                .insert(pair.opinion);
        }
        fresh
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Pairs in (user, item, attribute, opinion) order.
    pub fn iter(&self) -> impl Iterator<Item = &AttributeOpinionPair> {
        self.pairs.iter()
    }

    /// Grouped view: ((user, item, attribute), opinions) in key order.
    pub fn iter_grouped(
        &self,
    ) -> impl Iterator<Item = (&(String, String, usize), &BTreeSet<String>)> {
        self.index.iter()
    }

    pub fn opinions(&self, user: &str, item: &str, attribute: usize) -> Option<&BTreeSet<String>> {
        self.index
            .get(&(user.to_string(), item.to_string(), attribute))
    }

    /// Whether any attribute-opinion pair exists for this interaction.
    pub fn has_pairs_for(&self, user: &str, item: &str) -> bool {
        let lo = (user.to_string(), item.to_string(), 0usize);
        let hi = (user.to_string(), item.to_string(), usize::MAX);
        self.index
            .range((Bound::Included(lo), Bound::Included(hi)))
            .next()
            .is_some()
    }

    pub fn is_superset_of(&self, other: &PairStore) -> bool {
        other.pairs.is_subset(&self.pairs)
    }

    /// Keep only pairs whose (user, item) is an interaction in `corpus`.
    /// Extraction runs before the 5-core filter and the split, so a pair
    /// store legitimately references users, items and held-out interactions
    /// that a later corpus no longer contains.
    pub fn restrict_to(&self, corpus: &crate::corpus::Corpus) -> PairStore {
        let mut out = PairStore::default();
        for pair in &self.pairs {
            if corpus.has_interaction(&pair.user, &pair.item) {
                out.insert(pair.clone());
            }
        }
        out
    }

    /// Write one JSON object per pair, sorted by (user, item, attribute,
    /// opinion) so repeated runs diff cleanly.
    pub fn save(&self, path: &Path, attributes: &AttributeSet) -> Result<()> {
        let mut out = String::new();
        for pair in &self.pairs {
            let record = PairRecord {
                user: pair.user.clone(),
                item: pair.item.clone(),
                attribute: attributes.name(pair.attribute).to_string(),
                opinion: pair.opinion.clone(),
            };
            out.push_str(&serde_json::to_string(&record).expect("pair serializes"));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| FineRecError::io(path.display().to_string(), e))
    }

    /// Load pairs saved by [`PairStore::save`]. Duplicate lines collapse to
    /// one pair; unknown attribute names are an error.
    pub fn load(path: &Path, attributes: &AttributeSet) -> Result<PairStore> {
        let text = fs::read_to_string(path)
            .map_err(|e| FineRecError::io(path.display().to_string(), e))?;
        let path_str = path.display().to_string();
        let mut store = PairStore::default();
        for (lineno, line) in text.lines().enumerate() {
            let lineno = lineno + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: PairRecord = serde_json::from_str(line)
                .map_err(|e| FineRecError::parse(&path_str, lineno, e.to_string()))?;
            let attribute = attributes.index_of(&record.attribute).ok_or_else(|| {
                FineRecError::parse(
                    &path_str,
                    lineno,
                    format!(
                        "unknown attribute `{}` (valid: {})",
                        record.attribute,
                        attributes.names().join(", ")
                    ),
                )
            })?;
            let opinion = normalize_opinion(&record.opinion);
            if opinion.is_empty() {
                return Err(FineRecError::parse(&path_str, lineno, "empty opinion"));
            }
            store.insert(AttributeOpinionPair {
                user: record.user,
                item: record.item,
                attribute,
                opinion,
            });
        }
        Ok(store)
    }
}

/// Exact prompt sent to the chat endpoint for one (attribute, review) pair.
pub fn render_prompt(attribute: &str, review: &str) -> String {
    format!(
        "Please extract user opinion words towards the attribute \"{attribute}\" from the review: \"{review}\". Only return the opinion words! Your answer should be short."
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn attrs() -> AttributeSet {
        AttributeSet::new(vec!["Scent".into(), "Price".into(), "Brand".into()]).unwrap()
    }

    #[test]
    fn prompt_is_byte_exact() {
        assert_eq!(
            render_prompt("Price", "too expensive"),
            "Please extract user opinion words towards the attribute \"Price\" from the review: \"too expensive\". Only return the opinion words! Your answer should be short."
        );
        assert_eq!(
            render_prompt("Scent", ""),
            "Please extract user opinion words towards the attribute \"Scent\" from the review: \"\". Only return the opinion words! Your answer should be short."
        );
        // Quote characters are embedded verbatim.
        assert_eq!(
            render_prompt("a\"b", "r"),
            "Please extract user opinion words towards the attribute \"a\"b\" from the review: \"r\". Only return the opinion words! Your answer should be short."
        );
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_opinion("Nice "), "nice");
        assert_eq!(normalize_opinion("  Not\tCHEAP  at all "), "not cheap at all");
        assert_eq!(normalize_opinion(""), "");
    }

    #[test]
    fn store_dedups_and_sorts() {
        let mut store = PairStore::default();
        let pair = AttributeOpinionPair {
            user: "u1".into(),
            item: "x1".into(),
            attribute: 1,
            opinion: "expensive".into(),
        };
        assert!(store.insert(pair.clone()));
        assert!(!store.insert(pair));
        store.insert(AttributeOpinionPair {
            user: "u1".into(),
            item: "x1".into(),
            attribute: 0,
            opinion: "nice".into(),
        });
        let order: Vec<usize> = store.iter().map(|p| p.attribute).collect();
        assert_eq!(order, [0, 1]);
        assert!(store.has_pairs_for("u1", "x1"));
        assert!(!store.has_pairs_for("u1", "x2"));
    }

    #[test]
    fn save_load_round_trip_and_duplicate_lines() {
        let attrs = attrs();
        let mut store = PairStore::default();
        store.insert(AttributeOpinionPair {
            user: "u2".into(),
            item: "x1".into(),
            attribute: 1,
            opinion: "expensive".into(),
        });
        store.insert(AttributeOpinionPair {
            user: "u1".into(),
            item: "x1".into(),
            attribute: 0,
            opinion: "nice".into(),
        });
        let f = tempfile::NamedTempFile::new().unwrap();
        store.save(f.path(), &attrs).unwrap();
        let loaded = PairStore::load(f.path(), &attrs).unwrap();
        assert_eq!(loaded, store);

        // A duplicated line still loads to a single pair.
        let text = std::fs::read_to_string(f.path()).unwrap();
        let first_line = text.lines().next().unwrap();
        std::fs::write(f.path(), format!("{first_line}\n{text}")).unwrap();
        let loaded = PairStore::load(f.path(), &attrs).unwrap();
        assert_eq!(loaded, store);

        // Empty store round-trips through an empty file.
        let empty = tempfile::NamedTempFile::new().unwrap();
        PairStore::default().save(empty.path(), &attrs).unwrap();
        assert_eq!(std::fs::read_to_string(empty.path()).unwrap(), "");
        assert!(PairStore::load(empty.path(), &attrs).unwrap().is_empty());
    }

    #[test]
    fn load_rejects_unknown_attribute() {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(
            f.path(),
            r#"{"user":"u1","item":"x1","attribute":"Weight","opinion":"heavy"}"#,
        )
        .unwrap();
        let err = PairStore::load(f.path(), &attrs()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("Weight") && msg.contains("Scent"), "{msg}");
    }

    #[test]
    fn attribute_set_rejects_duplicates_and_empties() {
        assert!(AttributeSet::new(vec![]).is_err());
        assert!(AttributeSet::new(vec!["A".into(), "A".into()]).is_err());
        assert!(AttributeSet::new(vec!["".into()]).is_err());
        let builtin = AttributeSet::builtin("beauty").unwrap();
        assert_eq!(builtin.len(), 7);
        assert_eq!(builtin.index_of("Scent"), Some(5));
        assert!(AttributeSet::builtin("unknown").is_none());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize_opinion(&s);
            prop_assert_eq!(normalize_opinion(&once), once);
        }
    }
}
