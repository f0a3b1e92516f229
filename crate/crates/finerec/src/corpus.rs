//! Interaction/review ingestion, preprocessing filters and the
//! leave-one-out split.
//!
//! Record formats: JSONL objects with keys `user`, `item`, `timestamp`,
//! `review`, or TSV with the same four columns where the review field escapes
//! tab, newline and backslash as `\t`, `\n`, `\\`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FineRecError, Result};
use crate::extraction::PairStore;

/// One raw user-item-review line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionRecord {
    pub user: String,
    pub item: String,
    pub timestamp: i64,
    pub review: String,
}

impl InteractionRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.user.is_empty() {
            return Err("empty user id".into());
        }
        if self.item.is_empty() {
            return Err("empty item id".into());
        }
        if self.timestamp < 0 {
            return Err(format!("negative timestamp {}", self.timestamp));
        }
        Ok(())
    }
}

/// One interaction inside a user's chronological sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interaction {
    pub item: String,
    pub timestamp: i64,
    pub review: String,
}

/// Users, the item catalog and per-user chronological sequences.
///
/// User and item id lists are kept sorted, so the index assigned to an id is
/// a pure function of the id set; rebuilding from permuted input yields an
/// identical corpus.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
    sequences: Vec<Vec<Interaction>>,
}

/// Input format for [`load_interactions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl std::str::FromStr for CorpusFormat {
    type Err = FineRecError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "tsv" => Ok(CorpusFormat::Tsv),
            other => Err(FineRecError::Config(format!(
                "unknown corpus format `{other}` (expected jsonl or tsv)"
            ))),
        }
    }
}

impl Corpus {
    /// Build a corpus from raw records: duplicate (user, item) pairs keep the
    /// earliest record, sequences are sorted by timestamp with ties broken by
    /// input order.
    pub fn from_records(records: Vec<InteractionRecord>) -> Result<Corpus> {
        for r in &records {
            r.validate().map_err(FineRecError::Config)?;
        }
        // Earliest record wins per (user, item); ties keep the first seen.
        let mut chosen: HashMap<(String, String), (usize, InteractionRecord)> = HashMap::new();
        for (pos, r) in records.into_iter().enumerate() {
            let key = (r.user.clone(), r.item.clone());
            match chosen.get(&key) {
                Some((prev_pos, prev)) if (prev.timestamp, *prev_pos) <= (r.timestamp, pos) => {}
                _ => {
                    chosen.insert(key, (pos, r));
                }
            }
        }
        let mut per_user: BTreeMap<String, Vec<(i64, usize, Interaction)>> = BTreeMap::new();
        for ((user, item), (pos, r)) in chosen {
            per_user.entry(user).or_default().push((
                r.timestamp,
                pos,
                Interaction {
                    item,
                    timestamp: r.timestamp,
                    review: r.review,
                },
            ));
        }
        let mut sequence_map = BTreeMap::new();
        for (user, mut entries) in per_user {
            entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
            sequence_map.insert(user, entries.into_iter().map(|(_, _, i)| i).collect());
        }
        Ok(Corpus::from_sequences(sequence_map, std::iter::empty()))
    }

    /// Assemble from already-ordered sequences; `extra_items` extends the
    /// catalog beyond the items present in the sequences.
    pub fn from_sequences(
        sequences: BTreeMap<String, Vec<Interaction>>,
        extra_items: impl IntoIterator<Item = String>,
    ) -> Corpus {
        let mut item_set: HashSet<String> = extra_items.into_iter().collect();
        for seq in sequences.values() {
            for inter in seq {
                item_set.insert(inter.item.clone());
            }
        }
        let mut items: Vec<String> = item_set.into_iter().collect();
        items.sort();
        let users: Vec<String> = sequences.keys().cloned().collect();
        let user_index = users
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i))
            .collect();
        let item_index = items
            .iter()
            .enumerate()
            .map(|(i, x)| (x.clone(), i))
            .collect();
        let sequences = sequences.into_values().collect();
        Corpus {
            users,
            items,
            user_index,
            item_index,
            sequences,
        }
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn user_idx(&self, user: &str) -> Option<usize> {
        self.user_index.get(user).copied()
    }

    pub fn item_idx(&self, item: &str) -> Option<usize> {
        self.item_index.get(item).copied()
    }

    pub fn user_id(&self, idx: usize) -> &str {
        &self.users[idx]
    }

    pub fn item_id(&self, idx: usize) -> &str {
        &self.items[idx]
    }

    pub fn sequence(&self, user_idx: usize) -> &[Interaction] {
        &self.sequences[user_idx]
    }

    pub fn sequence_of(&self, user: &str) -> Option<&[Interaction]> {
        self.user_idx(user).map(|i| self.sequence(i))
    }

    pub fn interaction_count(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn has_interaction(&self, user: &str, item: &str) -> bool {
        self.sequence_of(user)
            .map(|seq| seq.iter().any(|i| i.item == item))
            .unwrap_or(false)
    }

    /// Extend the item catalog without touching sequences; the catalog stays
    /// sorted so item indices may shift.
    pub fn extend_catalog(&mut self, items: impl IntoIterator<Item = String>) {
        let mut set: HashSet<String> = self.items.drain(..).collect();
        set.extend(items);
        let mut items: Vec<String> = set.into_iter().collect();
        items.sort();
        self.item_index = items
            .iter()
            .enumerate()
            .map(|(i, x)| (x.clone(), i))
            .collect();
        self.items = items;
    }

    fn records(&self) -> impl Iterator<Item = InteractionRecord> + '_ {
        self.users.iter().enumerate().flat_map(move |(u, user)| {
            self.sequences[u].iter().map(move |i| InteractionRecord {
                user: user.clone(),
                item: i.item.clone(),
                timestamp: i.timestamp,
                review: i.review.clone(),
            })
        })
    }
}

/// Leave-one-out split: per retained user the last item is the test target,
/// the penultimate the validation target, the rest the train sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitCorpus {
    pub train: Corpus,
    pub validation: BTreeMap<String, Interaction>,
    pub test: BTreeMap<String, Interaction>,
}

impl SplitCorpus {
    pub fn validation_item(&self, user: &str) -> Option<&str> {
        self.validation.get(user).map(|i| i.item.as_str())
    }

    pub fn test_item(&self, user: &str) -> Option<&str> {
        self.test.get(user).map(|i| i.item.as_str())
    }

    /// Write `train.jsonl`, `valid.jsonl`, `test.jsonl` under `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| FineRecError::io(dir.display().to_string(), e))?;
        write_corpus(&self.train, &dir.join("train.jsonl"), CorpusFormat::Jsonl)?;
        write_holdout(&self.validation, &dir.join("valid.jsonl"))?;
        write_holdout(&self.test, &dir.join("test.jsonl"))?;
        Ok(())
    }

    /// Read a split written by [`SplitCorpus::write_dir`]. The train catalog
    /// is extended with items that only occur as held-out targets so the full
    /// ranking candidate set is preserved.
    pub fn read_dir(dir: &Path) -> Result<SplitCorpus> {
        let mut train = load_interactions(&dir.join("train.jsonl"), CorpusFormat::Jsonl)?;
        let validation = read_holdout(&dir.join("valid.jsonl"))?;
        let test = read_holdout(&dir.join("test.jsonl"))?;
        train.extend_catalog(
            validation
                .values()
                .chain(test.values())
                .map(|i| i.item.clone()),
        );
        Ok(SplitCorpus {
            train,
            validation,
            test,
        })
    }
}

fn write_holdout(map: &BTreeMap<String, Interaction>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (user, inter) in map {
        let record = InteractionRecord {
            user: user.clone(),
            item: inter.item.clone(),
            timestamp: inter.timestamp,
            review: inter.review.clone(),
        };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| FineRecError::io(path.display().to_string(), e))
}

fn read_holdout(path: &Path) -> Result<BTreeMap<String, Interaction>> {
    let records = read_records(path, CorpusFormat::Jsonl)?;
    let mut map = BTreeMap::new();
    for r in records {
        map.insert(
            r.user,
            Interaction {
                item: r.item,
                timestamp: r.timestamp,
                review: r.review,
            },
        );
    }
    Ok(map)
}

fn escape_tsv(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            other => out.push(other),
        }
    }
    out
}

fn unescape_tsv(field: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some(other) => return Err(format!("invalid escape `\\{other}`")),
            None => return Err("dangling backslash".into()),
        }
    }
    Ok(out)
}

fn read_records(path: &Path, format: CorpusFormat) -> Result<Vec<InteractionRecord>> {
    let text =
        fs::read_to_string(path).map_err(|e| FineRecError::io(path.display().to_string(), e))?;
    let path_str = path.display().to_string();
    let mut records = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record = match format {
            CorpusFormat::Jsonl => serde_json::from_str::<InteractionRecord>(line)
                .map_err(|e| FineRecError::parse(&path_str, lineno, e.to_string()))?,
            CorpusFormat::Tsv => {
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 4 {
                    return Err(FineRecError::parse(
                        &path_str,
                        lineno,
                        format!("expected 4 tab-separated fields, found {}", fields.len()),
                    ));
                }
                let timestamp = fields[2].parse::<i64>().map_err(|e| {
                    FineRecError::parse(&path_str, lineno, format!("bad timestamp: {e}"))
                })?;
                let review = unescape_tsv(fields[3])
                    .map_err(|e| FineRecError::parse(&path_str, lineno, e))?;
                InteractionRecord {
                    user: fields[0].to_string(),
                    item: fields[1].to_string(),
                    timestamp,
                    review,
                }
            }
        };
        record
            .validate()
            .map_err(|e| FineRecError::parse(&path_str, lineno, e))?;
        records.push(record);
    }
    Ok(records)
}

/// Load a corpus file. An empty file yields an empty corpus.
pub fn load_interactions(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    Corpus::from_records(read_records(path, format)?)
}

/// Write a corpus in record form, users in index order.
pub fn write_corpus(corpus: &Corpus, path: &Path, format: CorpusFormat) -> Result<()> {
    let mut out = Vec::new();
    for record in corpus.records() {
        match format {
            CorpusFormat::Jsonl => {
                serde_json::to_writer(&mut out, &record).expect("record serializes");
                out.push(b'\n');
            }
            CorpusFormat::Tsv => {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}",
                    record.user,
                    record.item,
                    record.timestamp,
                    escape_tsv(&record.review)
                )
                .expect("write to vec");
            }
        }
    }
    fs::write(path, out).map_err(|e| FineRecError::io(path.display().to_string(), e))
}

/// Remove interactions whose review yielded no attribute-opinion pair.
pub fn drop_attributeless_reviews(corpus: &Corpus, pairs: &PairStore) -> Corpus {
    let mut sequences = BTreeMap::new();
    for (u, user) in corpus.users().iter().enumerate() {
        let kept: Vec<Interaction> = corpus
            .sequence(u)
            .iter()
            .filter(|inter| pairs.has_pairs_for(user, &inter.item))
            .cloned()
            .collect();
        if !kept.is_empty() {
            sequences.insert(user.clone(), kept);
        }
    }
    Corpus::from_sequences(sequences, std::iter::empty())
}

/// Iteratively remove users and items with fewer than five interactions
/// until a fixed point; the result is the unique maximal sub-corpus where
/// every user and item has degree at least five.
pub fn five_core_filter(corpus: &Corpus) -> Corpus {
    k_core_filter(corpus, 5)
}

pub fn k_core_filter(corpus: &Corpus, k: usize) -> Corpus {
    let mut sequences: BTreeMap<String, Vec<Interaction>> = corpus
        .users()
        .iter()
        .enumerate()
        .map(|(u, user)| (user.clone(), corpus.sequence(u).to_vec()))
        .collect();
    loop {
        let mut item_degree: HashMap<&str, usize> = HashMap::new();
        for seq in sequences.values() {
            for inter in seq {
                *item_degree.entry(inter.item.as_str()).or_default() += 1;
            }
        }
        let before: usize = sequences.values().map(Vec::len).sum();
        let mut next = BTreeMap::new();
        for (user, seq) in &sequences {
            let kept: Vec<Interaction> = seq
                .iter()
                .filter(|inter| item_degree[inter.item.as_str()] >= k)
                .cloned()
                .collect();
            if kept.len() >= k {
                next.insert(user.clone(), kept);
            }
        }
        let after: usize = next.values().map(Vec::len).sum();
        sequences = next;
        if after == before {
            break;
        }
    }
    Corpus::from_sequences(sequences, std::iter::empty())
}

/// Split each sequence leave-one-out style. Users with fewer than five
/// interactions are dropped. The train corpus keeps the full item catalog so
/// held-out targets remain rankable.
pub fn leave_one_out_split(corpus: &Corpus) -> SplitCorpus {
    let mut train_sequences = BTreeMap::new();
    let mut validation = BTreeMap::new();
    let mut test = BTreeMap::new();
    for (u, user) in corpus.users().iter().enumerate() {
        let seq = corpus.sequence(u);
        if seq.len() < 5 {
            continue;
        }
        let m = seq.len();
        train_sequences.insert(user.clone(), seq[..m - 2].to_vec());
        validation.insert(user.clone(), seq[m - 2].clone());
        test.insert(user.clone(), seq[m - 1].clone());
    }
    let train = Corpus::from_sequences(train_sequences, corpus.items().iter().cloned());
    SplitCorpus {
        train,
        validation,
        test,
    }
}
