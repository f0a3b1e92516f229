//! Deterministic lexicon-based extractor, the offline substitute for the
//! chat-completion path.
//!
//! For every occurrence of an attribute trigger token the nearest opinion
//! word within a window of four tokens on either side becomes the opinion;
//! equidistant candidates prefer the word following the trigger. A negation
//! token strictly between trigger and opinion prefixes the opinion with
//! "not ".

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::encoder::tokenize;
use crate::error::{FineRecError, Result};
use crate::extraction::{AttributeOpinionPair, AttributeSet, PairStore};

const WINDOW: usize = 4;

/// Trigger terms per attribute plus shared opinion and negation word lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeLexicon {
    pub triggers: BTreeMap<String, Vec<String>>,
    pub opinions: BTreeSet<String>,
    pub negations: BTreeSet<String>,
}

impl AttributeLexicon {
    pub fn new(
        triggers: BTreeMap<String, Vec<String>>,
        opinions: impl IntoIterator<Item = String>,
        negations: impl IntoIterator<Item = String>,
    ) -> AttributeLexicon {
        AttributeLexicon {
            triggers: triggers
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().map(|t| t.to_lowercase()).collect()))
                .collect(),
            opinions: opinions.into_iter().map(|s| s.to_lowercase()).collect(),
            negations: negations.into_iter().map(|s| s.to_lowercase()).collect(),
        }
    }

    /// The default negation tokens.
    pub fn default_negations() -> Vec<String> {
        ["not", "no", "never", "hardly"]
            .into_iter()
            .map(String::from)
            .collect()
    }

    pub fn load(path: &Path) -> Result<AttributeLexicon> {
        let text = fs::read_to_string(path)
            .map_err(|e| FineRecError::io(path.display().to_string(), e))?;
        let lexicon: AttributeLexicon = serde_json::from_str(&text)
            .map_err(|e| FineRecError::parse(path.display().to_string(), 1, e.to_string()))?;
        Ok(AttributeLexicon::new(
            lexicon.triggers,
            lexicon.opinions,
            lexicon.negations,
        ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("lexicon serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| FineRecError::io(path.display().to_string(), e))
    }

    /// Every attribute must have at least one trigger term.
    fn validate_for(&self, attributes: &AttributeSet) -> Result<()> {
        for name in attributes.names() {
            match self.triggers.get(name) {
                Some(terms) if !terms.is_empty() => {}
                _ => {
                    return Err(FineRecError::Config(format!(
                        "lexicon has no trigger terms for attribute `{name}`"
                    )))
                }
            }
        }
        Ok(())
    }
}

fn nearest_opinion(
    tokens: &[String],
    trigger_pos: usize,
    lexicon: &AttributeLexicon,
) -> Option<String> {
    let lo = trigger_pos.saturating_sub(WINDOW);
    let hi = (trigger_pos + WINDOW).min(tokens.len().saturating_sub(1));
    let mut best: Option<(usize, usize)> = None; // (distance, position)
    for pos in lo..=hi {
        if pos == trigger_pos || !lexicon.opinions.contains(&tokens[pos]) {
            continue;
        }
        let distance = pos.abs_diff(trigger_pos);
        let better = match best {
            None => true,
            Some((bd, bp)) => {
                // Prefer the closer candidate; on ties prefer the one after
                // the trigger (larger position).
                distance < bd || (distance == bd && pos > bp)
            }
        };
        if better {
            best = Some((distance, pos));
        }
    }
    let (_, pos) = best?;
    let (between_lo, between_hi) = if pos > trigger_pos {
        (trigger_pos + 1, pos)
    } else {
        (pos + 1, trigger_pos)
    };
    let negated = tokens[between_lo..between_hi]
        .iter()
        .any(|t| lexicon.negations.contains(t));
    if negated {
        Some(format!("not {}", tokens[pos]))
    } else {
        Some(tokens[pos].clone())
    }
}

/// Run the window matcher over every review. Pure: identical inputs produce
/// an identical store.
pub fn extract_with_lexicon(
    attributes: &AttributeSet,
    lexicon: &AttributeLexicon,
    corpus: &Corpus,
) -> Result<PairStore> {
    lexicon.validate_for(attributes)?;
    let mut store = PairStore::default();
    for (u, user) in corpus.users().iter().enumerate() {
        for interaction in corpus.sequence(u) {
            let tokens = tokenize(&interaction.review);
            if tokens.is_empty() {
                continue;
            }
            for (attr_idx, attr_name) in attributes.names().iter().enumerate() {
                for trigger in &lexicon.triggers[attr_name] {
                    for (pos, _) in tokens.iter().enumerate().filter(|(_, t)| *t == trigger) {
                        if let Some(opinion) = nearest_opinion(&tokens, pos, lexicon) {
                            store.insert(AttributeOpinionPair {
                                user: user.clone(),
                                item: interaction.item.clone(),
                                attribute: attr_idx,
                                opinion,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::InteractionRecord;

    fn lexicon() -> AttributeLexicon {
        let mut triggers = BTreeMap::new();
        triggers.insert("Price".to_string(), vec!["price".to_string()]);
        triggers.insert("Battery".to_string(), vec!["battery".to_string()]);
        AttributeLexicon::new(
            triggers,
            ["cheap", "great", "long"].map(String::from),
            AttributeLexicon::default_negations(),
        )
    }

    fn attrs() -> AttributeSet {
        AttributeSet::new(vec!["Price".into(), "Battery".into()]).unwrap()
    }

    fn corpus(review: &str) -> Corpus {
        Corpus::from_records(vec![InteractionRecord {
            user: "u1".into(),
            item: "x1".into(),
            timestamp: 1,
            review: review.into(),
        }])
        .unwrap()
    }

    fn extract(review: &str) -> Vec<(usize, String)> {
        extract_with_lexicon(&attrs(), &lexicon(), &corpus(review))
            .unwrap()
            .iter()
            .map(|p| (p.attribute, p.opinion.clone()))
            .collect()
    }

    #[test]
    fn negation_window_rule_traced_by_hand() {
        // tokens: [the, price, is, not, cheap]; trigger at 1, opinion at 4,
        // negation at 3 sits strictly between them.
        assert_eq!(extract("the price is not cheap"), vec![(0, "not cheap".into())]);
    }

    #[test]
    fn review_without_triggers_yields_nothing() {
        assert!(extract("lovely packaging and fast shipping").is_empty());
    }

    #[test]
    fn repeated_trigger_dedups_per_opinion() {
        // trigger at 1: nearest is "great" (distance 1 left wins over "long"
        // at distance 3); trigger at 2: tie at distance 2 prefers the
        // following "long".
        assert_eq!(
            extract("great battery, battery lasts long"),
            vec![(1, "great".into()), (1, "long".into())]
        );
    }

    #[test]
    fn opinion_outside_window_is_ignored() {
        assert_eq!(extract("price one two three four five cheap"), vec![]);
        assert_eq!(
            extract("price one two three cheap"),
            vec![(0, "cheap".into())]
        );
    }

    #[test]
    fn missing_trigger_entry_is_config_error() {
        let mut lex = lexicon();
        lex.triggers.remove("Battery");
        let err = extract_with_lexicon(&attrs(), &lex, &corpus("x")).unwrap_err();
        assert!(err.to_string().contains("Battery"), "{err}");
    }

    #[test]
    fn extraction_is_pure() {
        let attrs = attrs();
        let lex = lexicon();
        let corp = corpus("the price is not cheap and the battery is great");
        let a = extract_with_lexicon(&attrs, &lex, &corp).unwrap();
        let b = extract_with_lexicon(&attrs, &lex, &corp).unwrap();
        assert_eq!(a, b);
        let f1 = tempfile::NamedTempFile::new().unwrap();
        let f2 = tempfile::NamedTempFile::new().unwrap();
        a.save(f1.path(), &attrs).unwrap();
        b.save(f2.path(), &attrs).unwrap();
        assert_eq!(
            std::fs::read(f1.path()).unwrap(),
            std::fs::read(f2.path()).unwrap()
        );
    }

    #[test]
    fn lexicon_file_round_trip() {
        let lex = lexicon();
        let f = tempfile::NamedTempFile::new().unwrap();
        lex.save(f.path()).unwrap();
        assert_eq!(AttributeLexicon::load(f.path()).unwrap(), lex);
    }
}
