//! Full-catalog ranking, Prec@k / NDCG@k, and the popularity and
//! session-kNN baselines.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde_json::json;

use crate::corpus::SplitCorpus;
use crate::error::{FineRecError, Result};
use crate::graphs::{AttributeGraph, GlobalInteractionGraph};
use crate::model::{self, forward, ModelConfig, ModelParams};
use crate::Scalar;

/// Which held-out map to score against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Validation,
    Test,
}

/// One ranking task: user, ground-truth target and the visible history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalCase {
    pub user: usize,
    pub target: usize,
    pub history: Vec<usize>,
}

/// Build ranking tasks from a split. Validation sees the train sequence;
/// test additionally appends the validation item to the history.
pub fn eval_cases(split: &SplitCorpus, which: EvalSplit) -> Result<Vec<EvalCase>> {
    let train = &split.train;
    let holdout = match which {
        EvalSplit::Validation => &split.validation,
        EvalSplit::Test => &split.test,
    };
    let mut cases = Vec::new();
    for (user, interaction) in holdout {
        let u = train.user_idx(user).ok_or_else(|| {
            FineRecError::Protocol(format!("held-out user `{user}` missing from train split"))
        })?;
        let target = train.item_idx(&interaction.item).ok_or_else(|| {
            FineRecError::Protocol(format!(
                "held-out item `{}` missing from the catalog",
                interaction.item
            ))
        })?;
        let mut history: Vec<usize> = train
            .sequence(u)
            .iter()
            .map(|i| train.item_idx(&i.item).expect("sequence item in catalog"))
            .collect();
        if which == EvalSplit::Test {
            let valid = split.validation.get(user).ok_or_else(|| {
                FineRecError::Protocol(format!("user `{user}` has a test item but no validation item"))
            })?;
            history.push(train.item_idx(&valid.item).ok_or_else(|| {
                FineRecError::Protocol(format!(
                    "validation item `{}` missing from the catalog",
                    valid.item
                ))
            })?);
        }
        cases.push(EvalCase {
            user: u,
            target,
            history,
        });
    }
    Ok(cases)
}

/// Item indices by score descending, ties by index ascending, excluding
/// `excluded` candidates.
pub fn ranked_list<F: Scalar>(scores: &[F], excluded: &HashSet<usize>) -> Vec<usize> {
    let mut items: Vec<usize> = (0..scores.len())
        .filter(|i| !excluded.contains(i))
        .collect();
    items.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.cmp(&b))
    });
    items
}

/// 1-based rank of the target; a target missing from the candidate list is a
/// protocol violation.
pub fn rank_of(ranked: &[usize], target: usize) -> Result<usize> {
    ranked
        .iter()
        .position(|&i| i == target)
        .map(|p| p + 1)
        .ok_or_else(|| {
            FineRecError::Protocol(format!("target item {target} is not in the candidate set"))
        })
}

/// Hit-rate style precision: 1 when the target sits within the first `k`.
pub fn precision_at_k(ranked: &[usize], target: usize, k: usize) -> Result<f64> {
    assert!(k >= 1, "k must be at least 1");
    Ok(if rank_of(ranked, target)? <= k { 1.0 } else { 0.0 })
}

/// `1/log2(rank+1)` when the target ranks within `k`, else 0; with a single
/// relevant item the ideal DCG is 1.
pub fn ndcg_at_k(ranked: &[usize], target: usize, k: usize) -> Result<f64> {
    assert!(k >= 1, "k must be at least 1");
    let rank = rank_of(ranked, target)?;
    Ok(if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    })
}

/// `metric,k,value` rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricTable {
    pub rows: Vec<(String, usize, f64)>,
}

impl MetricTable {
    pub fn push(&mut self, metric: impl Into<String>, k: usize, value: f64) {
        self.rows.push((metric.into(), k, value));
    }

    pub fn get(&self, metric: &str, k: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|(m, kk, _)| m == metric && *kk == k)
            .map(|(_, _, v)| *v)
    }

    pub fn extend(&mut self, other: MetricTable) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,k,value\n");
        for (metric, k, value) in &self.rows {
            out.push_str(&format!("{metric},{k},{value}\n"));
        }
        out
    }
}

/// Rank + per-user metric values for the optional dump.
#[derive(Debug, Clone, PartialEq)]
pub struct PerUserOutcome {
    pub user: String,
    pub target: String,
    pub rank: usize,
}

pub fn per_user_jsonl(outcomes: &[PerUserOutcome]) -> String {
    let mut out = String::new();
    for o in outcomes {
        out.push_str(
            &json!({"user": o.user, "target": o.target, "rank": o.rank}).to_string(),
        );
        out.push('\n');
    }
    out
}

fn metrics_from_ranks(ranks: &[usize], ks: &[usize], prefix: &str) -> MetricTable {
    let mut table = MetricTable::default();
    let n = ranks.len().max(1) as f64;
    for &k in ks {
        let prec: f64 = ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        table.push(format!("{prefix}prec"), k, prec);
    }
    for &k in ks {
        let ndcg: f64 = ranks
            .iter()
            .map(|&r| {
                if r <= k {
                    1.0 / ((r + 1) as f64).log2()
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / n;
        table.push(format!("{prefix}ndcg"), k, ndcg);
    }
    table
}

/// Rank every case against per-item scores produced by `score_fn`, honoring
/// the history-exclusion protocol.
fn rank_cases<F: Scalar>(
    num_items: usize,
    cases: &[EvalCase],
    exclude_history: bool,
    mut score_fn: impl FnMut(&EvalCase) -> Vec<F>,
) -> Result<Vec<usize>> {
    let mut ranks = Vec::with_capacity(cases.len());
    for case in cases {
        let scores = score_fn(case);
        debug_assert_eq!(scores.len(), num_items);
        let excluded: HashSet<usize> = if exclude_history {
            case.history.iter().copied().collect()
        } else {
            HashSet::new()
        };
        let ranked = ranked_list(&scores, &excluded);
        ranks.push(rank_of(&ranked, case.target)?);
    }
    Ok(ranks)
}

/// Score the model on arbitrary (user, target, history) cases; used for the
/// held-out splits and for train-set memorization checks.
pub fn evaluate_model_on_cases<F: Scalar>(
    params: &ModelParams<F>,
    config: &ModelConfig,
    graphs: &[AttributeGraph<F>],
    global: &GlobalInteractionGraph,
    cases: &[EvalCase],
    ks: &[usize],
    exclude_history: bool,
) -> Result<(MetricTable, Vec<usize>)> {
    let state = forward(graphs, global, params, config)?;
    let ranks = rank_cases(
        params.num_items(),
        cases,
        exclude_history,
        |case: &EvalCase| {
            let recent =
                model::recent_interest(&case.history, &state.fused_item, config.recent_window)
                    .expect("eval case has history");
            model::score_all(state.fused_user.row(case.user), &recent, &state.fused_item)
        },
    )?;
    Ok((metrics_from_ranks(&ranks, ks, ""), ranks))
}

/// Full evaluation protocol on a held-out split.
pub fn evaluate_model<F: Scalar>(
    params: &ModelParams<F>,
    config: &ModelConfig,
    graphs: &[AttributeGraph<F>],
    global: &GlobalInteractionGraph,
    split: &SplitCorpus,
    which: EvalSplit,
    ks: &[usize],
    exclude_history: bool,
) -> Result<(MetricTable, Vec<PerUserOutcome>)> {
    if params.num_users() != split.train.num_users()
        || params.num_items() != split.train.num_items()
    {
        return Err(FineRecError::Shape(format!(
            "checkpoint holds {} users / {} items, corpus has {} / {}",
            params.num_users(),
            params.num_items(),
            split.train.num_users(),
            split.train.num_items()
        )));
    }
    let cases = eval_cases(split, which)?;
    let (table, ranks) =
        evaluate_model_on_cases(params, config, graphs, global, &cases, ks, exclude_history)?;
    let outcomes = cases
        .iter()
        .zip(&ranks)
        .map(|(case, &rank)| PerUserOutcome {
            user: split.train.user_id(case.user).to_string(),
            target: split.train.item_id(case.target).to_string(),
            rank,
        })
        .collect();
    Ok((table, outcomes))
}

fn train_item_counts(split: &SplitCorpus) -> Vec<usize> {
    let train = &split.train;
    let mut counts = vec![0usize; train.num_items()];
    for (u, _) in train.users().iter().enumerate() {
        for interaction in train.sequence(u) {
            counts[train.item_idx(&interaction.item).expect("catalog item")] += 1;
        }
    }
    counts
}

/// Rank items by train-set interaction count, ties by index.
pub fn popularity_baseline(
    split: &SplitCorpus,
    which: EvalSplit,
    ks: &[usize],
    exclude_history: bool,
) -> Result<MetricTable> {
    let counts = train_item_counts(split);
    let cases = eval_cases(split, which)?;
    let ranks = rank_cases(
        counts.len(),
        &cases,
        exclude_history,
        |_case: &EvalCase| counts.iter().map(|&c| c as f64).collect::<Vec<f64>>(),
    )?;
    Ok(metrics_from_ranks(&ranks, ks, "popularity_"))
}

/// Session-kNN: cosine similarity between binary item-incidence vectors of
/// the evaluation history and every other user's train history; the top
/// `k_neighbors` neighbors vote for their items weighted by similarity.
/// Without any overlapping neighbor the ranking falls back to popularity.
pub fn sknn_baseline(
    split: &SplitCorpus,
    which: EvalSplit,
    k_neighbors: usize,
    ks: &[usize],
    exclude_history: bool,
) -> Result<MetricTable> {
    assert!(k_neighbors >= 1, "neighbor count must be at least 1");
    let train = &split.train;
    let counts = train_item_counts(split);
    let user_items: Vec<HashSet<usize>> = (0..train.num_users())
        .map(|u| {
            train
                .sequence(u)
                .iter()
                .map(|i| train.item_idx(&i.item).expect("catalog item"))
                .collect()
        })
        .collect();
    let cases = eval_cases(split, which)?;
    let ranks = rank_cases(train.num_items(), &cases, exclude_history, |case| {
        let history: HashSet<usize> = case.history.iter().copied().collect();
        let mut sims: Vec<(usize, f64)> = Vec::new();
        for (v, items) in user_items.iter().enumerate() {
            if v == case.user || items.is_empty() {
                continue;
            }
            let shared = history.intersection(items).count();
            if shared == 0 {
                continue;
            }
            let sim = shared as f64 / ((history.len() as f64).sqrt() * (items.len() as f64).sqrt());
            sims.push((v, sim));
        }
        if sims.is_empty() {
            return counts.iter().map(|&c| c as f64).collect::<Vec<f64>>();
        }
        sims.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        sims.truncate(k_neighbors);
        let mut scores = vec![0.0f64; train.num_items()];
        for (v, sim) in sims {
            for &item in &user_items[v] {
                scores[item] += sim;
            }
        }
        scores
    })?;
    Ok(metrics_from_ranks(&ranks, ks, "sknn_"))
}
