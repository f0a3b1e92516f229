//! Forward pass: convolution rounds, concatenation, fusion, recent interest
//! and scoring. Intermediates are cached in [`ForwardState`] for the
//! backward pass.

use crate::error::{FineRecError, Result};
use crate::graphs::{AttributeGraph, GlobalInteractionGraph};
use crate::linalg::{add_assign, axpy, cosine, mean_rows, Matrix};
use crate::model::{FusionParams, ModelConfig, ModelParams, SimilarityMode};
use crate::{count, sc, Scalar};

/// Per-attribute user and item embedding tables.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTables<F> {
    pub user: Matrix<F>,
    pub item: Matrix<F>,
}

pub(crate) struct WeightTrace<F> {
    pub cosines: Vec<F>,
    pub weights: Vec<F>,
    /// Normalizer of the clamped similarities (clamp mode only).
    pub denom: F,
}

pub(crate) fn weight_trace<F: Scalar>(
    self_vec: &[F],
    attr: &[F],
    neighbor_vecs: &[&[F]],
    config: &ModelConfig,
) -> WeightTrace<F> {
    let k = neighbor_vecs.len();
    assert!(k > 0, "weights need at least one neighbor");
    if config.uniform_weights() {
        return WeightTrace {
            cosines: Vec::new(),
            weights: vec![F::one() / count(k); k],
            denom: F::zero(),
        };
    }
    let cosines: Vec<F> = neighbor_vecs
        .iter()
        .map(|x| {
            let shifted: Vec<F> = attr.iter().zip(x.iter()).map(|(a, xi)| *a + *xi).collect();
            cosine(self_vec, &shifted)
        })
        .collect();
    match config.similarity {
        SimilarityMode::ClampCosine => {
            let eps = sc::<F>(config.epsilon);
            let sims: Vec<F> = cosines.iter().map(|c| c.max(F::zero()) + eps).collect();
            let denom: F = sims.iter().copied().sum();
            WeightTrace {
                cosines,
                weights: sims.into_iter().map(|s| s / denom).collect(),
                denom,
            }
        }
        SimilarityMode::Softmax => {
            let max = cosines
                .iter()
                .copied()
                .fold(F::neg_infinity(), |a, b| a.max(b));
            let exps: Vec<F> = cosines.iter().map(|c| (*c - max).exp()).collect();
            let denom: F = exps.iter().copied().sum();
            WeightTrace {
                cosines,
                weights: exps.into_iter().map(|e| e / denom).collect(),
                denom,
            }
        }
    }
}

/// Aggregation weights of a node over its neighbors: similarity of the node
/// embedding against each attribute-shifted neighbor embedding, normalized
/// to a convex combination (uniform under the uniform-weight ablations).
pub fn neighbor_weights<F: Scalar>(
    self_vec: &[F],
    attr: &[F],
    neighbor_vecs: &[&[F]],
    config: &ModelConfig,
) -> Vec<F> {
    weight_trace(self_vec, attr, neighbor_vecs, config).weights
}

fn aggregate<F: Scalar>(
    self_vec: &[F],
    attr: &[F],
    neighbors: &[(usize, Vec<F>)],
    other_table: &Matrix<F>,
    config: &ModelConfig,
) -> Vec<F> {
    let neighbor_vecs: Vec<&[F]> = neighbors
        .iter()
        .map(|(j, _)| other_table.row(*j))
        .collect();
    let weights = neighbor_weights(self_vec, attr, &neighbor_vecs, config);
    let mut out = self_vec.to_vec();
    for ((j, opinion), w) in neighbors.iter().zip(&weights) {
        let other = other_table.row(*j);
        if config.ablation.no_opinion {
            axpy(&mut out, *w, other);
        } else {
            for (o, (x, op)) in out.iter_mut().zip(other.iter().zip(opinion)) {
                *o += *w * (*x + *op);
            }
        }
    }
    out
}

/// One convolution update of a single user from the base tables.
pub fn conv_user<F: Scalar>(
    graph: &AttributeGraph<F>,
    params: &ModelParams<F>,
    config: &ModelConfig,
    user: usize,
) -> Result<Vec<F>> {
    let n = graph.attribute;
    let neighbors = graph.user_neighbors(user).ok_or_else(|| {
        FineRecError::Protocol(format!("user {user} has no neighbors in graph {n}"))
    })?;
    Ok(aggregate(
        params.user_emb[n].row(user),
        &params.attr_vec[n],
        neighbors,
        &params.item_emb[n],
        config,
    ))
}

/// One convolution update of a single item from the base tables.
pub fn conv_item<F: Scalar>(
    graph: &AttributeGraph<F>,
    params: &ModelParams<F>,
    config: &ModelConfig,
    item: usize,
) -> Result<Vec<F>> {
    let n = graph.attribute;
    let neighbors = graph.item_neighbors(item).ok_or_else(|| {
        FineRecError::Protocol(format!("item {item} has no neighbors in graph {n}"))
    })?;
    Ok(aggregate(
        params.item_emb[n].row(item),
        &params.attr_vec[n],
        neighbors,
        &params.user_emb[n],
        config,
    ))
}

/// Synchronous round: every updated vector is computed from the previous
/// round's tables, so update order cannot matter.
fn conv_round<F: Scalar>(
    graph: &AttributeGraph<F>,
    input: &AttributeTables<F>,
    attr: &[F],
    config: &ModelConfig,
) -> AttributeTables<F> {
    let mut out = input.clone();
    for user in graph.users() {
        let neighbors = graph.user_neighbors(user).expect("listed user has edges");
        let updated = aggregate(input.user.row(user), attr, neighbors, &input.item, config);
        out.user.row_mut(user).copy_from_slice(&updated);
    }
    for item in graph.items() {
        let neighbors = graph.item_neighbors(item).expect("listed item has edges");
        let updated = aggregate(input.item.row(item), attr, neighbors, &input.user, config);
        out.item.row_mut(item).copy_from_slice(&updated);
    }
    out
}

/// All rounds per attribute, keeping every intermediate table
/// (`result[n][t]` is attribute `n` after `t` rounds; `t = 0` is the base).
pub fn run_convolution_traced<F: Scalar>(
    graphs: &[AttributeGraph<F>],
    params: &ModelParams<F>,
    config: &ModelConfig,
) -> Vec<Vec<AttributeTables<F>>> {
    (0..config.num_attributes)
        .map(|n| {
            let mut rounds = vec![AttributeTables {
                user: params.user_emb[n].clone(),
                item: params.item_emb[n].clone(),
            }];
            for _ in 0..config.conv_layers {
                rounds.push(conv_round(
                    &graphs[n],
                    rounds.last().expect("base round present"),
                    &params.attr_vec[n],
                    config,
                ));
            }
            rounds
        })
        .collect()
}

/// Final per-attribute tables after all convolution rounds.
pub fn run_convolution<F: Scalar>(
    graphs: &[AttributeGraph<F>],
    params: &ModelParams<F>,
    config: &ModelConfig,
) -> Vec<AttributeTables<F>> {
    run_convolution_traced(graphs, params, config)
        .into_iter()
        .map(|mut rounds| rounds.pop().expect("at least the base round"))
        .collect()
}

/// Cached fusion intermediates.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionTrace<F> {
    pub user_item_mean: Matrix<F>,
    pub user_couser_mean: Matrix<F>,
    pub item_user_mean: Matrix<F>,
    pub item_coitem_mean: Matrix<F>,
    pub user_preact: Option<Matrix<F>>,
    pub item_preact: Option<Matrix<F>>,
}

fn concat_tables<F: Scalar>(tables: &[AttributeTables<F>], config: &ModelConfig) -> (Matrix<F>, Matrix<F>) {
    let d = config.dim;
    let nd = config.fused_dim();
    let num_users = tables[0].user.rows();
    let num_items = tables[0].item.rows();
    let mut concat_user = Matrix::zeros(num_users, nd);
    let mut concat_item = Matrix::zeros(num_items, nd);
    for n in 0..config.num_attributes {
        for i in 0..num_users {
            concat_user.row_mut(i)[n * d..(n + 1) * d].copy_from_slice(tables[n].user.row(i));
        }
        for j in 0..num_items {
            concat_item.row_mut(j)[n * d..(n + 1) * d].copy_from_slice(tables[n].item.row(j));
        }
    }
    (concat_user, concat_item)
}

fn relu_rows<F: Scalar>(preact: &Matrix<F>) -> Matrix<F> {
    let mut out = preact.clone();
    for v in out.data_mut() {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
    out
}

/// Concatenate the per-attribute tables and integrate them through the
/// interaction neighborhoods (or the affine+ReLU ablation).
pub fn fuse<F: Scalar>(
    global: &GlobalInteractionGraph,
    tables: &[AttributeTables<F>],
    params: &ModelParams<F>,
    config: &ModelConfig,
) -> (Matrix<F>, Matrix<F>, FusionTrace<F>, Matrix<F>, Matrix<F>) {
    let (concat_user, concat_item) = concat_tables(tables, config);
    let nd = config.fused_dim();
    let num_users = concat_user.rows();
    let num_items = concat_item.rows();
    match &params.fusion {
        FusionParams::Interaction { w1, w2, w3, w4 } => {
            let mut user_item_mean = Matrix::zeros(num_users, nd);
            let mut user_couser_mean = Matrix::zeros(num_users, nd);
            let mut item_user_mean = Matrix::zeros(num_items, nd);
            let mut item_coitem_mean = Matrix::zeros(num_items, nd);
            let mut fused_user = concat_user.clone();
            let mut fused_item = concat_item.clone();
            for i in 0..num_users {
                let m = mean_rows(&concat_item, &global.items_of_user[i]);
                let p = mean_rows(&concat_user, &global.cousers_of_user[i]);
                if !global.items_of_user[i].is_empty() {
                    add_assign(fused_user.row_mut(i), &w1.matvec(&m));
                }
                if !global.cousers_of_user[i].is_empty() {
                    add_assign(fused_user.row_mut(i), &w2.matvec(&p));
                }
                user_item_mean.row_mut(i).copy_from_slice(&m);
                user_couser_mean.row_mut(i).copy_from_slice(&p);
            }
            for j in 0..num_items {
                let m = mean_rows(&concat_user, &global.users_of_item[j]);
                let p = mean_rows(&concat_item, &global.coitems_of_item[j]);
                if !global.users_of_item[j].is_empty() {
                    add_assign(fused_item.row_mut(j), &w3.matvec(&m));
                }
                if !global.coitems_of_item[j].is_empty() {
                    add_assign(fused_item.row_mut(j), &w4.matvec(&p));
                }
                item_user_mean.row_mut(j).copy_from_slice(&m);
                item_coitem_mean.row_mut(j).copy_from_slice(&p);
            }
            let trace = FusionTrace {
                user_item_mean,
                user_couser_mean,
                item_user_mean,
                item_coitem_mean,
                user_preact: None,
                item_preact: None,
            };
            (concat_user, concat_item, trace, fused_user, fused_item)
        }
        FusionParams::ConcatMlp {
            user_w,
            user_b,
            item_w,
            item_b,
        } => {
            let mut user_preact = Matrix::zeros(num_users, nd);
            let mut item_preact = Matrix::zeros(num_items, nd);
            for i in 0..num_users {
                let mut z = user_w.matvec(concat_user.row(i));
                add_assign(&mut z, user_b);
                user_preact.row_mut(i).copy_from_slice(&z);
            }
            for j in 0..num_items {
                let mut z = item_w.matvec(concat_item.row(j));
                add_assign(&mut z, item_b);
                item_preact.row_mut(j).copy_from_slice(&z);
            }
            let fused_user = relu_rows(&user_preact);
            let fused_item = relu_rows(&item_preact);
            let trace = FusionTrace {
                user_item_mean: Matrix::zeros(0, 0),
                user_couser_mean: Matrix::zeros(0, 0),
                item_user_mean: Matrix::zeros(0, 0),
                item_coitem_mean: Matrix::zeros(0, 0),
                user_preact: Some(user_preact),
                item_preact: Some(item_preact),
            };
            (concat_user, concat_item, trace, fused_user, fused_item)
        }
    }
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct ForwardState<F> {
    pub conv_rounds: Vec<Vec<AttributeTables<F>>>,
    pub concat_user: Matrix<F>,
    pub concat_item: Matrix<F>,
    pub fusion: FusionTrace<F>,
    pub fused_user: Matrix<F>,
    pub fused_item: Matrix<F>,
}

fn validate_shapes<F: Scalar>(
    graphs: &[AttributeGraph<F>],
    global: &GlobalInteractionGraph,
    params: &ModelParams<F>,
    config: &ModelConfig,
) -> Result<()> {
    config.validate()?;
    if graphs.len() != config.num_attributes {
        return Err(FineRecError::Shape(format!(
            "{} graphs supplied, config needs {}",
            graphs.len(),
            config.num_attributes
        )));
    }
    if params.user_emb.len() != config.num_attributes || params.dim() != config.dim {
        return Err(FineRecError::Shape(format!(
            "parameters hold {} attribute tables of dim {}, config needs {} of dim {}",
            params.user_emb.len(),
            params.dim(),
            config.num_attributes,
            config.dim
        )));
    }
    let (num_users, num_items) = (params.num_users(), params.num_items());
    if global.items_of_user.len() != num_users || global.users_of_item.len() != num_items {
        return Err(FineRecError::Shape(format!(
            "interaction graph covers {} users / {} items, parameters hold {num_users} / {num_items}",
            global.items_of_user.len(),
            global.users_of_item.len(),
        )));
    }
    for graph in graphs {
        if let Some(max_user) = graph.users().max() {
            if max_user >= num_users {
                return Err(FineRecError::Shape(format!(
                    "graph {} references user index {max_user}, parameters hold {num_users} users",
                    graph.attribute
                )));
            }
        }
        if let Some(max_item) = graph.items().max() {
            if max_item >= num_items {
                return Err(FineRecError::Shape(format!(
                    "graph {} references item index {max_item}, parameters hold {num_items} items",
                    graph.attribute
                )));
            }
        }
    }
    Ok(())
}

/// Full forward pass over all users and items.
pub fn forward<F: Scalar>(
    graphs: &[AttributeGraph<F>],
    global: &GlobalInteractionGraph,
    params: &ModelParams<F>,
    config: &ModelConfig,
) -> Result<ForwardState<F>> {
    validate_shapes(graphs, global, params, config)?;
    let conv_rounds = run_convolution_traced(graphs, params, config);
    let finals: Vec<AttributeTables<F>> = conv_rounds
        .iter()
        .map(|rounds| rounds.last().expect("base round present").clone())
        .collect();
    let (concat_user, concat_item, fusion, fused_user, fused_item) =
        fuse(global, &finals, params, config);
    Ok(ForwardState {
        conv_rounds,
        concat_user,
        concat_item,
        fusion,
        fused_user,
        fused_item,
    })
}

/// Indices of the last `l` history items (all of them when shorter).
pub fn recent_window(history: &[usize], l: usize) -> &[usize] {
    &history[history.len().saturating_sub(l)..]
}

/// Mean fused embedding of the recent window; empty history is an error.
pub fn recent_interest<F: Scalar>(
    history: &[usize],
    fused_item: &Matrix<F>,
    l: usize,
) -> Result<Vec<F>> {
    if history.is_empty() {
        return Err(FineRecError::Protocol(
            "recent interest needs at least one history item".into(),
        ));
    }
    Ok(mean_rows(fused_item, recent_window(history, l)))
}

/// Interaction score of one candidate: `(u + u_recent) . x`.
pub fn score<F: Scalar>(fused_user: &[F], recent: &[F], fused_item: &[F]) -> F {
    fused_user
        .iter()
        .zip(recent)
        .zip(fused_item)
        .map(|((u, r), x)| (*u + *r) * *x)
        .sum()
}

/// Scores of every item for one user.
pub fn score_all<F: Scalar>(fused_user: &[F], recent: &[F], fused_item: &Matrix<F>) -> Vec<F> {
    let v: Vec<F> = fused_user.iter().zip(recent).map(|(u, r)| *u + *r).collect();
    fused_item.matvec(&v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::encode_text;
    use crate::graphs::build_global_graph;
    use crate::model::init_params_scaled;

    fn config(n: usize, d: usize) -> ModelConfig {
        ModelConfig::new(n, d)
    }

    fn attr_vectors(n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| encode_text(&format!("attr{i}"), d)).collect()
    }

    /// Direct transcription of the update formulas with scalar loops, used
    /// as an independent oracle for the convolution code.
    fn naive_round(
        graph: &AttributeGraph<f64>,
        input: &AttributeTables<f64>,
        attr: &[f64],
        eps: f64,
    ) -> AttributeTables<f64> {
        let d = attr.len();
        let mut out = input.clone();
        for user in graph.users() {
            let u = input.user.row(user);
            let neighbors = graph.user_neighbors(user).unwrap();
            let sims: Vec<f64> = neighbors
                .iter()
                .map(|(j, _)| {
                    let q: Vec<f64> = (0..d).map(|k| attr[k] + input.item.row(*j)[k]).collect();
                    crate::linalg::cosine(u, &q).max(0.0) + eps
                })
                .collect();
            let total: f64 = sims.iter().sum();
            let mut new = u.to_vec();
            for ((j, o), s) in neighbors.iter().zip(&sims) {
                for k in 0..d {
                    new[k] += s / total * (input.item.row(*j)[k] + o[k]);
                }
            }
            out.user.row_mut(user).copy_from_slice(&new);
        }
        for item in graph.items() {
            let x = input.item.row(item);
            let neighbors = graph.item_neighbors(item).unwrap();
            let sims: Vec<f64> = neighbors
                .iter()
                .map(|(i, _)| {
                    let q: Vec<f64> = (0..d).map(|k| attr[k] + input.user.row(*i)[k]).collect();
                    crate::linalg::cosine(x, &q).max(0.0) + eps
                })
                .collect();
            let total: f64 = sims.iter().sum();
            let mut new = x.to_vec();
            for ((i, o), s) in neighbors.iter().zip(&sims) {
                for k in 0..d {
                    new[k] += s / total * (input.user.row(*i)[k] + o[k]);
                }
            }
            out.item.row_mut(item).copy_from_slice(&new);
        }
        out
    }

    fn toy_graph(d: usize) -> AttributeGraph<f64> {
        let mut g = AttributeGraph::new(0);
        g.insert_edge(0, 0, encode_text("nice", d));
        g.insert_edge(0, 1, encode_text("sharp", d));
        g.insert_edge(1, 0, encode_text("bad", d));
        g.insert_edge(1, 1, encode_text("soft", d));
        g
    }

    #[test]
    fn single_neighbor_weight_is_exactly_one() {
        let cfg = config(1, 4);
        let self_vec = [0.3, -0.2, 0.5, 0.1];
        let attr = [0.5, 0.5, 0.0, 0.0];
        let neighbor = [0.1, 0.2, 0.3, 0.4];
        let w = neighbor_weights(&self_vec, &attr, &[&neighbor], &cfg);
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn single_neighbor_output_is_sum_of_parts() {
        let cfg = config(1, 4);
        let mut params = init_params_scaled::<f64>(&cfg, 5, 2, 2, attr_vectors(1, 4), 0.0).unwrap();
        let mut g = AttributeGraph::new(0);
        let opinion = encode_text::<f64>("nice", 4);
        g.insert_edge(0, 1, opinion.clone());
        params.user_emb[0].row_mut(0).copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        params.item_emb[0].row_mut(1).copy_from_slice(&[0.5, 0.5, 0.5, 0.5]);
        let out = conv_user(&g, &params, &cfg, 0).unwrap();
        for k in 0..4 {
            let expect = params.user_emb[0].row(0)[k] + params.item_emb[0].row(1)[k] + opinion[k];
            assert!((out[k] - expect).abs() < 1e-12);
        }
        // Mirror case for the item side.
        let out = conv_item(&g, &params, &cfg, 1).unwrap();
        for k in 0..4 {
            let expect = params.item_emb[0].row(1)[k] + params.user_emb[0].row(0)[k] + opinion[k];
            assert!((out[k] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_neighbors_split_weight_evenly() {
        let cfg = config(1, 4);
        let mut params = init_params_scaled::<f64>(&cfg, 5, 1, 2, attr_vectors(1, 4), 0.0).unwrap();
        let opinion = encode_text::<f64>("fine", 4);
        let mut g = AttributeGraph::new(0);
        g.insert_edge(0, 0, opinion.clone());
        g.insert_edge(0, 1, opinion.clone());
        let row = [0.2, -0.4, 0.6, 0.1];
        params.item_emb[0].row_mut(0).copy_from_slice(&row);
        params.item_emb[0].row_mut(1).copy_from_slice(&row);
        let nvecs: Vec<&[f64]> = vec![params.item_emb[0].row(0), params.item_emb[0].row(1)];
        let w = neighbor_weights(params.user_emb[0].row(0), &params.attr_vec[0], &nvecs, &cfg);
        assert!((w[0] - 0.5).abs() < 1e-12 && (w[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn clamped_weights_match_hand_computation() {
        // Cosines 0.8 and -0.3 with eps 1e-8: the negative branch clamps to
        // the floor, leaving weights {~1, ~1.25e-8}.
        let mut cfg = config(1, 2);
        cfg.epsilon = 1e-8;
        let self_vec = [1.0, 0.0];
        let attr = [0.0, 0.0];
        let n1 = [0.8, 0.6];
        let n2 = [-0.3, (1.0f64 - 0.09).sqrt()];
        let w = neighbor_weights(&self_vec, &attr, &[&n1[..], &n2[..]], &cfg);
        let s1 = 0.8 + 1e-8;
        let s2 = 1e-8;
        assert!((w[0] - s1 / (s1 + s2)).abs() < 1e-15);
        assert!((w[1] - s2 / (s1 + s2)).abs() < 1e-15);
        assert!(w[1] > 0.0 && w[1] < 2e-8);
    }

    #[test]
    fn convolution_matches_naive_oracle_and_composes() {
        let d = 4;
        let cfg = config(1, d);
        let params = init_params::<f64>(&cfg, 42, 2, 2, attr_vectors(1, d)).unwrap();
        let g = toy_graph(d);
        let rounds = run_convolution_traced(&[g.clone()], &params, &cfg);
        let base = &rounds[0][0];
        let expect1 = naive_round(&g, base, &params.attr_vec[0], cfg.epsilon);
        assert_eq!(rounds[0][1], expect1);

        let mut cfg2 = cfg.clone();
        cfg2.conv_layers = 2;
        let rounds2 = run_convolution_traced(&[g.clone()], &params, &cfg2);
        let expect2 = naive_round(&g, &expect1, &params.attr_vec[0], cfg.epsilon);
        for (a, b) in rounds2[0][2].user.data().iter().zip(expect2.user.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in rounds2[0][2].item.data().iter().zip(expect2.item.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    use crate::model::init_params;

    #[test]
    fn empty_graph_leaves_tables_unchanged() {
        let cfg = config(2, 4);
        let params = init_params::<f64>(&cfg, 9, 3, 3, attr_vectors(2, 4)).unwrap();
        let g0 = toy_graph(4);
        let g1 = AttributeGraph::new(1);
        let tables = run_convolution(&[g0, g1], &params, &cfg);
        assert_eq!(tables[1].user, params.user_emb[1]);
        assert_eq!(tables[1].item, params.item_emb[1]);
        assert_ne!(tables[0].user, params.user_emb[0]);
    }

    #[test]
    fn no_diversity_equals_full_model_on_symmetric_toy() {
        let d = 4;
        let cfg = config(1, d);
        let mut uniform_cfg = cfg.clone();
        uniform_cfg.ablation.no_diversity = true;
        let mut params = init_params::<f64>(&cfg, 42, 1, 2, attr_vectors(1, d)).unwrap();
        let opinion = encode_text::<f64>("fine", d);
        let row = [0.2, -0.4, 0.6, 0.1];
        params.item_emb[0].row_mut(0).copy_from_slice(&row);
        params.item_emb[0].row_mut(1).copy_from_slice(&row);
        let mut g = AttributeGraph::new(0);
        g.insert_edge(0, 0, opinion.clone());
        g.insert_edge(0, 1, opinion);
        let full = conv_user(&g, &params, &cfg, 0).unwrap();
        let uni = conv_user(&g, &params, &uniform_cfg, 0).unwrap();
        for (a, b) in full.iter().zip(&uni) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn fusion_fixture() -> (GlobalInteractionGraph, Vec<AttributeTables<f64>>, ModelConfig) {
        let cfg = config(2, 2);
        // One user, one item, a single interaction.
        let corpus = crate::corpus::Corpus::from_records(vec![crate::corpus::InteractionRecord {
            user: "u1".into(),
            item: "x1".into(),
            timestamp: 1,
            review: "r".into(),
        }])
        .unwrap();
        let global = build_global_graph(&corpus, 10);
        let tables = vec![
            AttributeTables {
                user: Matrix::from_data(1, 2, vec![1.0, 2.0]),
                item: Matrix::from_data(1, 2, vec![5.0, 6.0]),
            },
            AttributeTables {
                user: Matrix::from_data(1, 2, vec![3.0, 4.0]),
                item: Matrix::from_data(1, 2, vec![7.0, 8.0]),
            },
        ];
        (global, tables, cfg)
    }

    #[test]
    fn fusion_with_identity_weights_adds_neighbor_concat() {
        let (global, tables, cfg) = fusion_fixture();
        let params = init_params_scaled::<f64>(&cfg, 3, 1, 1, attr_vectors(2, 2), 0.0).unwrap();
        let (cu, cx, _, fu, fx) = fuse(&global, &tables, &params, &cfg);
        assert_eq!(cu.row(0), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(cx.row(0), &[5.0, 6.0, 7.0, 8.0]);
        // Couser set is empty, so u = u_hat + W1 x_hat = u_hat + x_hat.
        assert_eq!(fu.row(0), &[6.0, 8.0, 10.0, 12.0]);
        // Coitem set is empty, so x = x_hat + W3 u_hat.
        assert_eq!(fx.row(0), &[6.0, 8.0, 10.0, 12.0]);
    }

    #[test]
    fn zero_fusion_matrices_pass_concat_through() {
        let (global, tables, cfg) = fusion_fixture();
        let mut params = init_params_scaled::<f64>(&cfg, 3, 1, 1, attr_vectors(2, 2), 0.0).unwrap();
        if let FusionParams::Interaction { w1, w2, w3, w4 } = &mut params.fusion {
            for w in [w1, w2, w3, w4] {
                for v in w.data_mut() {
                    *v = 0.0;
                }
            }
        }
        let (cu, _, _, fu, _) = fuse(&global, &tables, &params, &cfg);
        assert_eq!(fu, cu);
    }

    #[test]
    fn recent_interest_windows() {
        let fused = Matrix::from_data(7, 1, (0..7).map(|i| i as f64).collect());
        assert_eq!(recent_interest(&[3], &fused, 5).unwrap(), vec![3.0]);
        assert_eq!(recent_interest(&[0, 1, 2], &fused, 5).unwrap(), vec![1.0]);
        // Seven history items, window five: mean of the last five indices.
        let history: Vec<usize> = (0..7).collect();
        let expect = (2..7).map(|i| i as f64).sum::<f64>() / 5.0;
        assert_eq!(recent_interest(&history, &fused, 5).unwrap(), vec![expect]);
        assert!(recent_interest(&[], &fused, 5).is_err());
    }

    #[test]
    fn forward_instantiates_in_single_precision() {
        let cfg = config(1, 4);
        let attrs: Vec<Vec<f32>> = vec![encode_text("attr0", 4)];
        let params = init_params::<f32>(&cfg, 11, 2, 2, attrs).unwrap();
        let mut g = AttributeGraph::<f32>::new(0);
        g.insert_edge(0, 0, encode_text("nice", 4));
        g.insert_edge(1, 1, encode_text("bad", 4));
        let corpus = crate::corpus::Corpus::from_records(vec![
            crate::corpus::InteractionRecord {
                user: "u1".into(),
                item: "x1".into(),
                timestamp: 1,
                review: String::new(),
            },
            crate::corpus::InteractionRecord {
                user: "u2".into(),
                item: "x2".into(),
                timestamp: 1,
                review: String::new(),
            },
        ])
        .unwrap();
        let global = build_global_graph(&corpus, 10);
        let a = forward(&[g.clone()], &global, &params, &cfg).unwrap();
        let b = forward(&[g], &global, &params, &cfg).unwrap();
        assert_eq!(a.fused_user, b.fused_user);
        assert!(a.fused_user.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn score_examples() {
        assert_eq!(score(&[0.0, 0.0], &[0.0, 0.0], &[3.0, -1.0]), 0.0);
        assert_eq!(score(&[1.0, 0.0], &[0.0, 0.0], &[0.0, 5.0]), 0.0);
        // (u + recent) = [1, 2], x = [3, -1] gives 1.
        assert_eq!(score(&[0.5, 1.0], &[0.5, 1.0], &[3.0, -1.0]), 1.0);
        let items = Matrix::from_data(2, 2, vec![3.0, -1.0, 1.0, 1.0]);
        assert_eq!(score_all(&[0.5, 1.0], &[0.5, 1.0], &items), vec![1.0, 3.0]);
    }
}
