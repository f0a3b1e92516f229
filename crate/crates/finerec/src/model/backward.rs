//! Reverse-mode gradients through fusion, concatenation and every
//! convolution round.
//!
//! The computation graph is fixed, so instead of a generic tape each forward
//! stage has a hand-written adjoint consuming the cached [`ForwardState`].
//! The similarity clamp contributes zero gradient where the cosine is
//! non-positive, and frozen attribute vectors receive none unless unfrozen.

use crate::error::Result;
use crate::graphs::{AttributeGraph, GlobalInteractionGraph};
use crate::linalg::{add_assign, axpy, dot, norm, scale, Matrix};
use crate::model::forward::{weight_trace, AttributeTables, ForwardState};
use crate::model::{FusionParams, ModelConfig, ModelParams, SimilarityMode};
use crate::{count, Scalar};

/// Adjoint of the similarity-weight computation: given `d loss / d weights`
/// returns `d loss / d cosines` (`None` for the uniform ablations).
fn weight_grad_to_cosine_grad<F: Scalar>(
    cosines: &[F],
    weights: &[F],
    denom: F,
    weight_grads: &[F],
    config: &ModelConfig,
) -> Option<Vec<F>> {
    if config.uniform_weights() {
        return None;
    }
    let weighted_sum: F = weights
        .iter()
        .zip(weight_grads)
        .map(|(w, g)| *w * *g)
        .sum();
    let out = match config.similarity {
        SimilarityMode::ClampCosine => cosines
            .iter()
            .zip(weight_grads)
            .map(|(c, g)| {
                if *c > F::zero() {
                    (*g - weighted_sum) / denom
                } else {
                    F::zero()
                }
            })
            .collect(),
        SimilarityMode::Softmax => weights
            .iter()
            .zip(weight_grads)
            .map(|(w, g)| *w * (*g - weighted_sum))
            .collect(),
    };
    Some(out)
}

/// Accumulate the adjoint of `c = cos(u, q)` into `du` and `dq`; zero-norm
/// inputs define the cosine as constant zero, so they contribute nothing.
fn cosine_backward<F: Scalar>(u: &[F], q: &[F], c: F, dc: F, du: &mut [F], dq: &mut [F]) {
    if dc == F::zero() {
        return;
    }
    let nu = norm(u);
    let nq = norm(q);
    if nu == F::zero() || nq == F::zero() {
        return;
    }
    let inv = F::one() / (nu * nq);
    for k in 0..u.len() {
        du[k] += dc * (q[k] * inv - c * u[k] / (nu * nu));
        dq[k] += dc * (u[k] * inv - c * q[k] / (nq * nq));
    }
}

struct NodeGrads<'a, F> {
    self_grad: &'a mut Matrix<F>,
    other_grad: &'a mut Matrix<F>,
    attr_grad: &'a mut [F],
}

/// Adjoint of one node aggregation `self' = self + sum_j w_j (other_j [+ o_j])`
/// with `w` from the similarity trace. `upstream` is `d loss / d self'`;
/// contributions land in the previous round's tables.
#[allow(clippy::too_many_arguments)]
fn aggregate_backward<F: Scalar>(
    node: usize,
    neighbors: &[(usize, Vec<F>)],
    self_table: &Matrix<F>,
    other_table: &Matrix<F>,
    attr: &[F],
    config: &ModelConfig,
    upstream: &[F],
    grads: &mut NodeGrads<'_, F>,
    attr_trainable: bool,
) {
    let self_vec = self_table.row(node);
    let neighbor_vecs: Vec<&[F]> = neighbors
        .iter()
        .map(|(j, _)| other_table.row(*j))
        .collect();
    let trace = weight_trace(self_vec, attr, &neighbor_vecs, config);

    // Message path: d/d other_j of w_j * (other_j + o_j).
    for ((j, _), w) in neighbors.iter().zip(&trace.weights) {
        axpy(grads.other_grad.row_mut(*j), *w, upstream);
    }

    // Weight path (absent under uniform ablations).
    if config.uniform_weights() {
        return;
    }
    let weight_grads: Vec<F> = neighbors
        .iter()
        .map(|(j, opinion)| {
            let other = other_table.row(*j);
            if config.ablation.no_opinion {
                dot(upstream, other)
            } else {
                upstream
                    .iter()
                    .zip(other.iter().zip(opinion))
                    .map(|(g, (x, o))| *g * (*x + *o))
                    .sum()
            }
        })
        .collect();
    let Some(cosine_grads) = weight_grad_to_cosine_grad(
        &trace.cosines,
        &trace.weights,
        trace.denom,
        &weight_grads,
        config,
    ) else {
        return;
    };
    let mut du = vec![F::zero(); self_vec.len()];
    for (((j, _), c), dc) in neighbors.iter().zip(&trace.cosines).zip(&cosine_grads) {
        if *dc == F::zero() {
            continue;
        }
        let other = other_table.row(*j);
        let shifted: Vec<F> = attr.iter().zip(other).map(|(a, x)| *a + *x).collect();
        let mut dq = vec![F::zero(); shifted.len()];
        cosine_backward(self_vec, &shifted, *c, *dc, &mut du, &mut dq);
        add_assign(grads.other_grad.row_mut(*j), &dq);
        if attr_trainable {
            add_assign(grads.attr_grad, &dq);
        }
    }
    add_assign(grads.self_grad.row_mut(node), &du);
}

/// Adjoint of one synchronous convolution round for one attribute: maps
/// gradients w.r.t. the round output tables onto the round input tables.
fn conv_round_backward<F: Scalar>(
    graph: &AttributeGraph<F>,
    input: &AttributeTables<F>,
    config: &ModelConfig,
    grad_user_out: &Matrix<F>,
    grad_item_out: &Matrix<F>,
    attr: &[F],
    attr_grad: &mut [F],
    attr_trainable: bool,
) -> (Matrix<F>, Matrix<F>) {
    // Identity path covers every node, updated or not.
    let mut grad_user_in = grad_user_out.clone();
    let mut grad_item_in = grad_item_out.clone();
    for user in graph.users() {
        let neighbors = graph.user_neighbors(user).expect("listed user has edges");
        let upstream = grad_user_out.row(user).to_vec();
        let mut grads = NodeGrads {
            self_grad: &mut grad_user_in,
            other_grad: &mut grad_item_in,
            attr_grad,
        };
        aggregate_backward(
            user,
            neighbors,
            &input.user,
            &input.item,
            attr,
            config,
            &upstream,
            &mut grads,
            attr_trainable,
        );
    }
    for item in graph.items() {
        let neighbors = graph.item_neighbors(item).expect("listed item has edges");
        let upstream = grad_item_out.row(item).to_vec();
        let mut grads = NodeGrads {
            self_grad: &mut grad_item_in,
            other_grad: &mut grad_user_in,
            attr_grad,
        };
        aggregate_backward(
            item,
            neighbors,
            &input.item,
            &input.user,
            attr,
            config,
            &upstream,
            &mut grads,
            attr_trainable,
        );
    }
    (grad_user_in, grad_item_in)
}

fn relu_mask_mul<F: Scalar>(grad: &[F], preact: &[F]) -> Vec<F> {
    grad.iter()
        .zip(preact)
        .map(|(g, z)| if *z > F::zero() { *g } else { F::zero() })
        .collect()
}

/// Exact gradients of a scalar loss w.r.t. every trainable parameter, given
/// the loss gradient w.r.t. the fused user and item tables.
pub fn backward<F: Scalar>(
    graphs: &[AttributeGraph<F>],
    global: &GlobalInteractionGraph,
    params: &ModelParams<F>,
    config: &ModelConfig,
    state: &ForwardState<F>,
    grad_fused_user: &Matrix<F>,
    grad_fused_item: &Matrix<F>,
) -> Result<ModelParams<F>> {
    let mut grads = params.zeros_like();
    let num_users = params.num_users();
    let num_items = params.num_items();
    let nd = config.fused_dim();

    // Fusion backward: from fused tables to the concatenated tables.
    let mut grad_concat_user;
    let mut grad_concat_item;
    match (&params.fusion, &mut grads.fusion) {
        (
            FusionParams::Interaction { w1, w2, w3, w4 },
            FusionParams::Interaction {
                w1: gw1,
                w2: gw2,
                w3: gw3,
                w4: gw4,
            },
        ) => {
            grad_concat_user = grad_fused_user.clone();
            grad_concat_item = grad_fused_item.clone();
            for i in 0..num_users {
                let g = grad_fused_user.row(i);
                let items = &global.items_of_user[i];
                if !items.is_empty() {
                    gw1.add_outer(g, state.fusion.user_item_mean.row(i));
                    let mut t = w1.matvec_transpose(g);
                    scale(&mut t, F::one() / count(items.len()));
                    for &j in items {
                        add_assign(grad_concat_item.row_mut(j), &t);
                    }
                }
                let cousers = &global.cousers_of_user[i];
                if !cousers.is_empty() {
                    gw2.add_outer(g, state.fusion.user_couser_mean.row(i));
                    let mut t = w2.matvec_transpose(g);
                    scale(&mut t, F::one() / count(cousers.len()));
                    for &k in cousers {
                        add_assign(grad_concat_user.row_mut(k), &t);
                    }
                }
            }
            for j in 0..num_items {
                let g = grad_fused_item.row(j);
                let users = &global.users_of_item[j];
                if !users.is_empty() {
                    gw3.add_outer(g, state.fusion.item_user_mean.row(j));
                    let mut t = w3.matvec_transpose(g);
                    scale(&mut t, F::one() / count(users.len()));
                    for &i in users {
                        add_assign(grad_concat_user.row_mut(i), &t);
                    }
                }
                let coitems = &global.coitems_of_item[j];
                if !coitems.is_empty() {
                    gw4.add_outer(g, state.fusion.item_coitem_mean.row(j));
                    let mut t = w4.matvec_transpose(g);
                    scale(&mut t, F::one() / count(coitems.len()));
                    for &k in coitems {
                        add_assign(grad_concat_item.row_mut(k), &t);
                    }
                }
            }
        }
        (
            FusionParams::ConcatMlp {
                user_w, item_w, ..
            },
            FusionParams::ConcatMlp {
                user_w: guw,
                user_b: gub,
                item_w: giw,
                item_b: gib,
            },
        ) => {
            grad_concat_user = Matrix::zeros(num_users, nd);
            grad_concat_item = Matrix::zeros(num_items, nd);
            let user_preact = state
                .fusion
                .user_preact
                .as_ref()
                .expect("mlp trace cached");
            let item_preact = state
                .fusion
                .item_preact
                .as_ref()
                .expect("mlp trace cached");
            for i in 0..num_users {
                let gm = relu_mask_mul(grad_fused_user.row(i), user_preact.row(i));
                guw.add_outer(&gm, state.concat_user.row(i));
                add_assign(gub, &gm);
                add_assign(grad_concat_user.row_mut(i), &user_w.matvec_transpose(&gm));
            }
            for j in 0..num_items {
                let gm = relu_mask_mul(grad_fused_item.row(j), item_preact.row(j));
                giw.add_outer(&gm, state.concat_item.row(j));
                add_assign(gib, &gm);
                add_assign(grad_concat_item.row_mut(j), &item_w.matvec_transpose(&gm));
            }
        }
        _ => unreachable!("gradient container mirrors parameter structure"),
    }

    // Concatenation backward: split the fused-dimension gradients into
    // per-attribute table gradients after the last convolution round.
    let d = config.dim;
    let mut grad_tables: Vec<(Matrix<F>, Matrix<F>)> = (0..config.num_attributes)
        .map(|_| {
            (
                Matrix::zeros(num_users, d),
                Matrix::zeros(num_items, d),
            )
        })
        .collect();
    for n in 0..config.num_attributes {
        for i in 0..num_users {
            grad_tables[n]
                .0
                .row_mut(i)
                .copy_from_slice(&grad_concat_user.row(i)[n * d..(n + 1) * d]);
        }
        for j in 0..num_items {
            grad_tables[n]
                .1
                .row_mut(j)
                .copy_from_slice(&grad_concat_item.row(j)[n * d..(n + 1) * d]);
        }
    }

    // Convolution rounds backward, newest round first.
    let attr_trainable = params.attr_trainable;
    for n in 0..config.num_attributes {
        let (mut gu, mut gx) = std::mem::replace(
            &mut grad_tables[n],
            (Matrix::zeros(0, 0), Matrix::zeros(0, 0)),
        );
        for round in (0..config.conv_layers).rev() {
            let input = &state.conv_rounds[n][round];
            let (next_gu, next_gx) = conv_round_backward(
                &graphs[n],
                input,
                config,
                &gu,
                &gx,
                &params.attr_vec[n],
                &mut grads.attr_vec[n],
                attr_trainable,
            );
            gu = next_gu;
            gx = next_gx;
        }
        grads.user_emb[n] = gu;
        grads.item_emb[n] = gx;
    }

    if !attr_trainable {
        for g in &mut grads.attr_vec {
            for v in g.iter_mut() {
                *v = F::zero();
            }
        }
    }
    grads.check_finite()?;
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::encode_text;
    use crate::graphs::build_global_graph;
    use crate::model::forward::forward;
    use crate::model::{init_params, ModelConfig};

    fn setup(
        cfg: &ModelConfig,
        seed: u64,
    ) -> (
        Vec<AttributeGraph<f64>>,
        GlobalInteractionGraph,
        ModelParams<f64>,
    ) {
        let mut records = Vec::new();
        for (u, items) in [(0, vec![0, 1, 2]), (1, vec![1, 2]), (2, vec![0, 2, 3])] {
            for (t, x) in items.iter().enumerate() {
                records.push(crate::corpus::InteractionRecord {
                    user: format!("u{u}"),
                    item: format!("x{x}"),
                    timestamp: t as i64,
                    review: "r".into(),
                });
            }
        }
        let corpus = crate::corpus::Corpus::from_records(records).unwrap();
        let global = build_global_graph(&corpus, 10);
        let words = ["nice", "bad", "fine", "big", "small", "sharp"];
        let mut graphs = Vec::new();
        for n in 0..cfg.num_attributes {
            let mut g = AttributeGraph::new(n);
            let mut w = 0;
            for (u, items) in [(0usize, vec![0usize, 1]), (1, vec![2]), (2, vec![0, 3])] {
                for &x in &items {
                    g.insert_edge(u, x, encode_text(words[(w + n) % words.len()], cfg.dim));
                    w += 1;
                }
            }
            graphs.push(g);
        }
        let attr_vectors = (0..cfg.num_attributes)
            .map(|i| encode_text(&format!("attr{i}"), cfg.dim))
            .collect();
        let params = init_params(cfg, seed, 3, 4, attr_vectors).unwrap();
        (graphs, global, params)
    }

    /// Scalar objective for finite differencing: weighted sums of the fused
    /// tables, which exercises every backward stage.
    fn objective(
        graphs: &[AttributeGraph<f64>],
        global: &GlobalInteractionGraph,
        params: &ModelParams<f64>,
        cfg: &ModelConfig,
    ) -> f64 {
        let state = forward(graphs, global, params, cfg).unwrap();
        let mut total = 0.0;
        for i in 0..state.fused_user.rows() {
            for (k, v) in state.fused_user.row(i).iter().enumerate() {
                total += v * ((i + 2 * k + 1) as f64 * 0.01);
            }
        }
        for j in 0..state.fused_item.rows() {
            for (k, v) in state.fused_item.row(j).iter().enumerate() {
                total += v * ((3 * j + k + 2) as f64 * 0.01).sin();
            }
        }
        total
    }

    fn objective_grads(
        graphs: &[AttributeGraph<f64>],
        global: &GlobalInteractionGraph,
        params: &ModelParams<f64>,
        cfg: &ModelConfig,
    ) -> ModelParams<f64> {
        let state = forward(graphs, global, params, cfg).unwrap();
        let mut gu = Matrix::zeros(state.fused_user.rows(), cfg.fused_dim());
        let mut gx = Matrix::zeros(state.fused_item.rows(), cfg.fused_dim());
        for i in 0..gu.rows() {
            for k in 0..cfg.fused_dim() {
                gu.row_mut(i)[k] = (i + 2 * k + 1) as f64 * 0.01;
            }
        }
        for j in 0..gx.rows() {
            for k in 0..cfg.fused_dim() {
                gx.row_mut(j)[k] = ((3 * j + k + 2) as f64 * 0.01).sin();
            }
        }
        backward(graphs, global, params, cfg, &state, &gu, &gx).unwrap()
    }

    fn check_fd(cfg: &ModelConfig, seed: u64) {
        let (graphs, global, params) = setup(cfg, seed);
        let grads = objective_grads(&graphs, &global, &params, cfg);
        let mut probe = params.clone();
        let h = 1e-5;
        let analytic: Vec<(String, Vec<f64>)> = grads
            .blocks()
            .iter()
            .map(|(n, _, v, _)| (n.clone(), v.to_vec()))
            .collect();
        for (bi, (name, values)) in analytic.iter().enumerate() {
            let trainable = grads.blocks()[bi].3;
            for idx in (0..values.len()).step_by(3) {
                let orig = probe.blocks()[bi].2[idx];
                probe.blocks_mut()[bi].1[idx] = orig + h;
                let up = objective(&graphs, &global, &probe, cfg);
                probe.blocks_mut()[bi].1[idx] = orig - h;
                let down = objective(&graphs, &global, &probe, cfg);
                probe.blocks_mut()[bi].1[idx] = orig;
                let fd = (up - down) / (2.0 * h);
                let a = values[idx];
                if !trainable {
                    assert_eq!(a, 0.0, "frozen block {name} got gradient");
                    continue;
                }
                // Mixed tolerance: tiny gradients sit at the FD noise floor.
                let err = (a - fd).abs();
                let bound = 1e-6 * a.abs().max(fd.abs()) + 1e-10;
                assert!(
                    err < bound,
                    "block {name}[{idx}]: analytic {a} vs fd {fd} (err {err})"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut cfg = ModelConfig::new(2, 3);
        cfg.conv_layers = 2;
        check_fd(&cfg, 17);
    }

    #[test]
    fn gradients_match_fd_under_ablations() {
        let mut cfg = ModelConfig::new(2, 3);
        cfg.ablation.no_diversity = true;
        check_fd(&cfg, 5);

        let mut cfg = ModelConfig::new(2, 3);
        cfg.ablation.no_opinion = true;
        check_fd(&cfg, 6);

        let mut cfg = ModelConfig::new(2, 3);
        cfg.ablation.concat_mlp_fusion = true;
        cfg.conv_layers = 2;
        check_fd(&cfg, 7);

        let mut cfg = ModelConfig::new(2, 3);
        cfg.similarity = SimilarityMode::Softmax;
        check_fd(&cfg, 8);
    }

    #[test]
    fn unfrozen_attribute_vectors_get_checked_gradients() {
        let mut cfg = ModelConfig::new(2, 3);
        cfg.train_attr_vectors = true;
        check_fd(&cfg, 9);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let cfg = ModelConfig::new(2, 3);
        let (graphs, global, params) = setup(&cfg, 3);
        let state = forward(&graphs, &global, &params, &cfg).unwrap();
        let gu = Matrix::zeros(3, cfg.fused_dim());
        let gx = Matrix::zeros(4, cfg.fused_dim());
        let grads = backward(&graphs, &global, &params, &cfg, &state, &gu, &gx).unwrap();
        for (name, _, values, _) in grads.blocks() {
            assert!(
                values.iter().all(|v| *v == 0.0),
                "block {name} expected all-zero"
            );
        }
    }

    #[test]
    fn frozen_attr_vec_gradient_is_identically_zero() {
        let cfg = ModelConfig::new(2, 3);
        let (graphs, global, params) = setup(&cfg, 4);
        let grads = objective_grads(&graphs, &global, &params, &cfg);
        for g in &grads.attr_vec {
            assert!(g.iter().all(|v| *v == 0.0));
        }
        // The embedding gradients are not all zero for this objective.
        assert!(grads.user_emb[0].data().iter().any(|v| *v != 0.0));
    }
}
