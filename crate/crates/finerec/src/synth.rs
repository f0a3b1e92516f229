//! Deterministic synthetic corpora with planted attribute-level preference
//! signal, for end-to-end verification.
//!
//! Every item gets one opinion word per attribute; every user gets
//! per-attribute liked/disliked words and an attribute weight. Users pick
//! the unseen item with the best profile agreement (with probability
//! `1 - noise`, else uniformly), and the review embeds each item opinion
//! word next to its attribute trigger so the lexicon extractor recovers the
//! planted pairs.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, InteractionRecord};
use crate::error::{FineRecError, Result};
use crate::extraction::{AttributeLexicon, AttributeOpinionPair, AttributeSet, PairStore};

const ATTRIBUTE_POOL: [&str; 7] = [
    "battery", "price", "quality", "size", "comfort", "scent", "color",
];

const OPINION_POOL: [&str; 32] = [
    "great", "poor", "sleek", "bulky", "cheap", "costly", "sturdy", "fragile", "fresh", "stale",
    "bright", "dull", "smooth", "rough", "light", "heavy", "crisp", "soggy", "quiet", "loud",
    "soft", "stiff", "warm", "cold", "fast", "slow", "clean", "messy", "strong", "weak", "fine",
    "bad",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub num_attributes: usize,
    /// Opinion vocabulary size per attribute.
    pub opinions_per_attribute: usize,
    pub interactions_per_user: usize,
    /// Probability of a uniformly random pick instead of the best-agreement
    /// pick; keeps the baselines from saturating.
    pub noise: f64,
    /// Probability that a review describes an attribute with a random
    /// vocabulary word instead of the item's true one, making the opinions
    /// on an item genuinely diverse across reviewers.
    pub review_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_users: 200,
            num_items: 300,
            num_attributes: 3,
            opinions_per_attribute: 4,
            interactions_per_user: 15,
            noise: 0.2,
            review_noise: 0.2,
            seed: 42,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.num_users == 0 || self.num_items == 0 || self.num_attributes == 0 {
            return Err(FineRecError::Config(
                "synth sizes must be at least 1".into(),
            ));
        }
        if self.opinions_per_attribute < 2 {
            return Err(FineRecError::Config(
                "need at least 2 opinion words per attribute".into(),
            ));
        }
        if self.interactions_per_user > self.num_items {
            return Err(FineRecError::Config(format!(
                "{} interactions per user but only {} items",
                self.interactions_per_user, self.num_items
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) || !(0.0..=1.0).contains(&self.review_noise) {
            return Err(FineRecError::Config("noise levels must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Ground-truth profiles behind a generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub attribute_names: Vec<String>,
    /// Vocabulary per attribute.
    pub opinion_vocab: Vec<Vec<String>>,
    /// `item_opinions[item][attr]` indexes into the attribute vocabulary.
    pub item_opinions: Vec<Vec<usize>>,
    pub user_liked: Vec<Vec<usize>>,
    pub user_disliked: Vec<Vec<usize>>,
    /// How much each user cares about each attribute (0 = indifferent).
    pub user_weight: Vec<Vec<f64>>,
}

impl SynthTruth {
    /// Profile agreement score of an item for a user.
    pub fn agreement(&self, user: usize, item: usize) -> f64 {
        let mut total = 0.0;
        for (n, &word) in self.item_opinions[item].iter().enumerate() {
            let w = self.user_weight[user][n];
            if word == self.user_liked[user][n] {
                total += w;
            } else if word == self.user_disliked[user][n] {
                total -= w;
            }
        }
        total
    }

    pub fn attribute_set(&self) -> AttributeSet {
        AttributeSet::new(self.attribute_names.clone()).expect("planted names are valid")
    }

    /// Lexicon matching the generated review template: the attribute name is
    /// its own trigger, all vocabularies are opinion words.
    pub fn lexicon(&self) -> AttributeLexicon {
        let triggers = self
            .attribute_names
            .iter()
            .map(|name| (name.clone(), vec![name.clone()]))
            .collect();
        AttributeLexicon::new(
            triggers,
            self.opinion_vocab.iter().flatten().cloned(),
            AttributeLexicon::default_negations(),
        )
    }

    fn review_from_words(&self, words: &[usize]) -> String {
        let mut sentences = Vec::with_capacity(self.attribute_names.len());
        for (n, name) in self.attribute_names.iter().enumerate() {
            let word = &self.opinion_vocab[n][words[n]];
            sentences.push(format!("the {name} is {word}."));
        }
        sentences.join(" ")
    }
}

fn attribute_name(n: usize) -> String {
    ATTRIBUTE_POOL
        .get(n)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("aspect{n}"))
}

fn opinion_word(k: usize) -> String {
    OPINION_POOL
        .get(k)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("word{k}"))
}

/// Draw item characteristics and user profiles from the seed.
pub fn plant(config: &SynthConfig) -> Result<SynthTruth> {
    config.validate()?;
    let mut rng = Xoshiro256StarStar::seed_from_u64(config.seed);
    let v = config.opinions_per_attribute;
    let attribute_names: Vec<String> = (0..config.num_attributes).map(attribute_name).collect();
    let opinion_vocab: Vec<Vec<String>> = (0..config.num_attributes)
        .map(|n| (0..v).map(|k| opinion_word(n * v + k)).collect())
        .collect();
    let item_opinions: Vec<Vec<usize>> = (0..config.num_items)
        .map(|_| {
            (0..config.num_attributes)
                .map(|_| rng.random_range(0..v))
                .collect()
        })
        .collect();
    let mut user_liked = Vec::with_capacity(config.num_users);
    let mut user_disliked = Vec::with_capacity(config.num_users);
    let mut user_weight = Vec::with_capacity(config.num_users);
    for _ in 0..config.num_users {
        let mut liked = Vec::with_capacity(config.num_attributes);
        let mut disliked = Vec::with_capacity(config.num_attributes);
        let mut weight = Vec::with_capacity(config.num_attributes);
        for _ in 0..config.num_attributes {
            let like = rng.random_range(0..v);
            let mut dislike = rng.random_range(0..v - 1);
            if dislike >= like {
                dislike += 1;
            }
            liked.push(like);
            disliked.push(dislike);
            weight.push(rng.random_range(0..3) as f64);
        }
        user_liked.push(liked);
        user_disliked.push(disliked);
        user_weight.push(weight);
    }
    Ok(SynthTruth {
        attribute_names,
        opinion_vocab,
        item_opinions,
        user_liked,
        user_disliked,
        user_weight,
    })
}

fn id_width(n: usize) -> usize {
    n.saturating_sub(1).max(1).to_string().len()
}

/// Simulate the interaction sequences for explicit profiles.
pub fn generate_from(config: &SynthConfig, truth: &SynthTruth) -> Result<(Corpus, PairStore)> {
    config.validate()?;
    if truth.item_opinions.len() != config.num_items
        || truth.user_liked.len() != config.num_users
    {
        return Err(FineRecError::Config(
            "profiles do not match the synth sizes".into(),
        ));
    }
    // Selection stream is separate from the planting stream so explicit
    // profiles replay identically.
    let mut rng = Xoshiro256StarStar::seed_from_u64(config.seed ^ 0x7f4a_7c15_9e37_79b9);
    let uw = id_width(config.num_users);
    let iw = id_width(config.num_items);
    let mut records = Vec::new();
    let mut pairs = PairStore::default();
    for user in 0..config.num_users {
        let user_id = format!("user_{user:0uw$}");
        let mut unseen: Vec<usize> = (0..config.num_items).collect();
        for step in 0..config.interactions_per_user {
            let pick_pos = if rng.random::<f64>() < config.noise {
                rng.random_range(0..unseen.len())
            } else {
                let mut best = 0usize;
                let mut best_score = f64::NEG_INFINITY;
                for (pos, &item) in unseen.iter().enumerate() {
                    let score = truth.agreement(user, item);
                    if score > best_score {
                        best_score = score;
                        best = pos;
                    }
                }
                best
            };
            let item = unseen.remove(pick_pos);
            let item_id = format!("item_{item:0iw$}");
            // What this reviewer writes: mostly the item's true words, with
            // occasional off-profile wording.
            let written: Vec<usize> = truth.item_opinions[item]
                .iter()
                .enumerate()
                .map(|(n, &word)| {
                    if rng.random::<f64>() < config.review_noise {
                        rng.random_range(0..truth.opinion_vocab[n].len())
                    } else {
                        word
                    }
                })
                .collect();
            records.push(InteractionRecord {
                user: user_id.clone(),
                item: item_id.clone(),
                timestamp: step as i64,
                review: truth.review_from_words(&written),
            });
            for (n, &word) in written.iter().enumerate() {
                pairs.insert(AttributeOpinionPair {
                    user: user_id.clone(),
                    item: item_id.clone(),
                    attribute: n,
                    opinion: truth.opinion_vocab[n][word].clone(),
                });
            }
        }
    }
    Ok((Corpus::from_records(records)?, pairs))
}

/// Plant profiles and simulate in one call.
pub fn generate(config: &SynthConfig) -> Result<(Corpus, PairStore, SynthTruth)> {
    let truth = plant(config)?;
    let (corpus, pairs) = generate_from(config, &truth)?;
    Ok((corpus, pairs, truth))
}
