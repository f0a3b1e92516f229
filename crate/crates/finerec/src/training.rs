//! Training instances, the full-ranking cross-entropy loss, Adam, and the
//! epoch loop with early stopping on validation Prec@20.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

use crate::corpus::SplitCorpus;
use crate::error::{FineRecError, Result};
use crate::evaluation::{self, EvalSplit};
use crate::graphs::{AttributeGraph, GlobalInteractionGraph};
use crate::linalg::{add_assign, axpy, scale, Matrix};
use crate::model::{
    self, backward, forward, init_params, recent_window, CheckpointHeader, ForwardState,
    ModelConfig, ModelParams,
};
use crate::{count, sc, Scalar};

/// One next-item prediction task: guess `target` from `history`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingInstance {
    pub user: usize,
    pub target: usize,
    pub history: Vec<usize>,
}

/// Expand every train sequence into per-position instances: for
/// `[x1...xT]` emit targets `x2..xT` with the strict prefix as history.
/// Ordered by user index, then position.
pub fn make_training_instances(split: &SplitCorpus) -> Vec<TrainingInstance> {
    let train = &split.train;
    let mut out = Vec::new();
    for (u, _) in train.users().iter().enumerate() {
        let items: Vec<usize> = train
            .sequence(u)
            .iter()
            .map(|i| train.item_idx(&i.item).expect("sequence item in catalog"))
            .collect();
        for t in 1..items.len() {
            out.push(TrainingInstance {
                user: u,
                target: items[t],
                history: items[..t].to_vec(),
            });
        }
    }
    out
}

fn softplus<F: Scalar>(x: F) -> F {
    x.max(F::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// Binary cross-entropy over the full item set against a one-hot target,
/// evaluated in softplus form so scores far from zero stay stable. Returns
/// the loss and its gradient w.r.t. the scores (`sigmoid(s_j) - p_j`).
pub fn bce_loss<F: Scalar>(scores: &[F], target: usize) -> (F, Vec<F>) {
    let mut loss = F::zero();
    let mut grad = Vec::with_capacity(scores.len());
    for (j, s) in scores.iter().enumerate() {
        if j == target {
            loss += softplus(-*s);
            grad.push(sigmoid(*s) - F::one());
        } else {
            loss += softplus(*s);
            grad.push(sigmoid(*s));
        }
    }
    (loss, grad)
}

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam over the trainable parameter blocks.
#[derive(Debug, Clone)]
pub struct OptimizerState<F> {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<F>>,
    second: Vec<Vec<F>>,
}

impl<F: Scalar> OptimizerState<F> {
    pub fn new(params: &ModelParams<F>, config: AdamConfig) -> Self {
        let mut first = Vec::new();
        let mut second = Vec::new();
        for (_, _, values, trainable) in params.blocks() {
            if trainable {
                first.push(vec![F::zero(); values.len()]);
                second.push(vec![F::zero(); values.len()]);
            }
        }
        OptimizerState {
            config,
            step: 0,
            first,
            second,
        }
    }

    /// One update; zero gradients leave parameters unchanged while the step
    /// counter still advances.
    pub fn step(&mut self, params: &mut ModelParams<F>, grads: &ModelParams<F>) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = sc::<F>(1.0 - self.config.beta1.powi(t));
        let bc2 = sc::<F>(1.0 - self.config.beta2.powi(t));
        let lr = sc::<F>(self.config.lr);
        let b1 = sc::<F>(self.config.beta1);
        let b2 = sc::<F>(self.config.beta2);
        let eps = sc::<F>(self.config.epsilon);
        let grad_blocks = grads.blocks();
        let mut slot = 0;
        for ((name, values, trainable), (grad_name, _, grad_values, _)) in
            params.blocks_mut().into_iter().zip(grad_blocks)
        {
            debug_assert_eq!(name, grad_name, "parameter/gradient block order");
            if !trainable {
                continue;
            }
            if values.len() != grad_values.len() {
                return Err(FineRecError::Shape(format!(
                    "gradient block `{name}` has {} values, parameters hold {}",
                    grad_values.len(),
                    values.len()
                )));
            }
            let m = &mut self.first[slot];
            let v = &mut self.second[slot];
            slot += 1;
            for i in 0..values.len() {
                let g = grad_values[i];
                m[i] = b1 * m[i] + (F::one() - b1) * g;
                v[i] = b2 * v[i] + (F::one() - b2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let updated = values[i] - lr * m_hat / (v_hat.sqrt() + eps);
                if !updated.is_finite() {
                    return Err(FineRecError::NonFinite {
                        block: name.clone(),
                    });
                }
                values[i] = updated;
            }
        }
        Ok(())
    }
}

fn instance_scores<F: Scalar>(
    state: &ForwardState<F>,
    instance: &TrainingInstance,
    window: usize,
) -> Result<(Vec<F>, Vec<F>)> {
    let recent = model::recent_interest(&instance.history, &state.fused_item, window)?;
    let scores = model::score_all(state.fused_user.row(instance.user), &recent, &state.fused_item);
    let v: Vec<F> = state
        .fused_user
        .row(instance.user)
        .iter()
        .zip(&recent)
        .map(|(u, r)| *u + *r)
        .collect();
    Ok((scores, v))
}

/// Mean full-ranking loss of a batch under the current parameters.
pub fn batch_loss<F: Scalar>(
    graphs: &[AttributeGraph<F>],
    global: &GlobalInteractionGraph,
    params: &ModelParams<F>,
    config: &ModelConfig,
    instances: &[&TrainingInstance],
) -> Result<F> {
    if instances.is_empty() {
        return Err(FineRecError::Config("empty batch".into()));
    }
    let state = forward(graphs, global, params, config)?;
    let mut total = F::zero();
    for instance in instances {
        let (scores, _) = instance_scores(&state, instance, config.recent_window)?;
        total += bce_loss(&scores, instance.target).0;
    }
    Ok(total / count(instances.len()))
}

/// Mean batch loss plus exact gradients for every trainable parameter.
pub fn batch_loss_and_grads<F: Scalar>(
    graphs: &[AttributeGraph<F>],
    global: &GlobalInteractionGraph,
    params: &ModelParams<F>,
    config: &ModelConfig,
    instances: &[&TrainingInstance],
) -> Result<(F, ModelParams<F>)> {
    if instances.is_empty() {
        return Err(FineRecError::Config("empty batch".into()));
    }
    let state = forward(graphs, global, params, config)?;
    let nd = config.fused_dim();
    let mut grad_user = Matrix::zeros(state.fused_user.rows(), nd);
    let mut grad_item = Matrix::zeros(state.fused_item.rows(), nd);
    let inv_batch = F::one() / count(instances.len());
    let mut total = F::zero();
    for instance in instances {
        let (scores, v) = instance_scores(&state, instance, config.recent_window)?;
        let (loss, mut grad_scores) = bce_loss(&scores, instance.target);
        total += loss;
        scale(&mut grad_scores, inv_batch);
        // d loss / d v where score_j = v . x_j.
        let grad_v = state.fused_item.matvec_transpose(&grad_scores);
        add_assign(grad_user.row_mut(instance.user), &grad_v);
        let window = recent_window(&instance.history, config.recent_window);
        let share = F::one() / count(window.len());
        for &h in window {
            axpy(grad_item.row_mut(h), share, &grad_v);
        }
        // Every candidate item receives grad_scores_j * v.
        for (j, g) in grad_scores.iter().enumerate() {
            if *g != F::zero() {
                axpy(grad_item.row_mut(j), *g, &v);
            }
        }
    }
    let grads = backward(graphs, global, params, config, &state, &grad_user, &grad_item)?;
    Ok((total * inv_batch, grads))
}

/// Loop hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub max_epochs: usize,
    /// Consecutive epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            batch_size: 512,
            adam: AdamConfig::default(),
            max_epochs: 200,
            patience: 10,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_prec20: f64,
    pub valid_ndcg20: f64,
    pub seconds: f64,
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,train_loss,valid_prec20,valid_ndcg20,seconds\n");
    for row in log {
        out.push_str(&format!(
            "{},{},{},{},{:.3}\n",
            row.epoch, row.train_loss, row.valid_prec20, row.valid_ndcg20, row.seconds
        ));
    }
    out
}

#[derive(Debug)]
pub struct TrainOutcome<F> {
    /// Parameters of the best validation epoch (what `best.ckpt` holds).
    pub best_params: ModelParams<F>,
    /// Parameters after the last epoch (what `last.ckpt` holds).
    pub final_params: ModelParams<F>,
    pub best_epoch: usize,
    pub best_valid_prec20: f64,
    pub log: Vec<EpochLog>,
}

fn save_checkpoint_atomic<F: Scalar>(
    dir: &Path,
    name: &str,
    header: &CheckpointHeader,
    params: &ModelParams<F>,
) -> Result<()> {
    let tmp = dir.join(format!("{name}.tmp"));
    model::save_checkpoint(&tmp, header, params)?;
    let target = dir.join(name);
    fs::rename(&tmp, &target).map_err(|e| FineRecError::io(target.display().to_string(), e))
}

/// Run the optimization loop: seeded shuffles, mini-batches with a full
/// forward/backward per step, per-epoch validation on Prec@20, best/last
/// checkpoints on disk when `out_dir` is given.
pub fn train<F: Scalar>(
    split: &SplitCorpus,
    graphs: &[AttributeGraph<F>],
    global: &GlobalInteractionGraph,
    config: &ModelConfig,
    attr_vectors: Vec<Vec<F>>,
    header: &CheckpointHeader,
    hyper: &TrainHyper,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome<F>> {
    let instances = make_training_instances(split);
    if instances.is_empty() {
        return Err(FineRecError::Config(
            "no training instances (empty train split)".into(),
        ));
    }
    if hyper.batch_size == 0 || hyper.max_epochs == 0 {
        return Err(FineRecError::Config(
            "batch_size and max_epochs must be at least 1".into(),
        ));
    }
    let num_users = split.train.num_users();
    let num_items = split.train.num_items();
    if header.num_users != num_users || header.num_items != num_items {
        return Err(FineRecError::Shape(format!(
            "checkpoint header declares {} users / {} items, split has {num_users} / {num_items}",
            header.num_users, header.num_items
        )));
    }
    let mut params = init_params(config, hyper.seed, num_users, num_items, attr_vectors)?;
    let mut optimizer = OptimizerState::new(&params, hyper.adam);
    // Shuffle stream decoupled from the init stream.
    let mut rng = Xoshiro256StarStar::seed_from_u64(hyper.seed ^ 0x9e37_79b9_7f4a_7c15);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| FineRecError::io(dir.display().to_string(), e))?;
    }

    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut best_prec = f64::NEG_INFINITY;
    let mut bad_epochs = 0usize;
    let mut log = Vec::new();

    for epoch in 1..=hyper.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(hyper.batch_size) {
            let batch: Vec<&TrainingInstance> = chunk.iter().map(|&i| &instances[i]).collect();
            let (loss, grads) = batch_loss_and_grads(graphs, global, &params, config, &batch)?;
            optimizer.step(&mut params, &grads)?;
            loss_sum += loss.to_f64().expect("loss fits f64") * batch.len() as f64;
        }
        let train_loss = loss_sum / instances.len() as f64;

        let (valid_metrics, _) = evaluation::evaluate_model(
            &params,
            config,
            graphs,
            global,
            split,
            EvalSplit::Validation,
            &[20],
            true,
        )?;
        let valid_prec20 = valid_metrics.get("prec", 20).unwrap_or(0.0);
        let valid_ndcg20 = valid_metrics.get("ndcg", 20).unwrap_or(0.0);

        let improved = valid_prec20 > best_prec;
        if improved {
            best_prec = valid_prec20;
            best_epoch = epoch;
            best_params = params.clone();
            bad_epochs = 0;
            if let Some(dir) = out_dir {
                save_checkpoint_atomic(dir, "best.ckpt", header, &best_params)?;
            }
        } else {
            bad_epochs += 1;
        }
        if let Some(dir) = out_dir {
            save_checkpoint_atomic(dir, "last.ckpt", header, &params)?;
        }

        log.push(EpochLog {
            epoch,
            train_loss,
            valid_prec20,
            valid_ndcg20,
            seconds: started.elapsed().as_secs_f64(),
        });
        if let Some(dir) = out_dir {
            let mut f = fs::File::create(dir.join("train_log.csv"))
                .map_err(|e| FineRecError::io("train_log.csv", e))?;
            f.write_all(log_csv(&log).as_bytes())
                .map_err(|e| FineRecError::io("train_log.csv", e))?;
        }
        if bad_epochs >= hyper.patience {
            break;
        }
    }
    Ok(TrainOutcome {
        best_params,
        final_params: params,
        best_epoch,
        best_valid_prec20: best_prec,
        log,
    })
}
