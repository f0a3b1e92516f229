//! Trainable parameters and the differentiable forward/backward pass:
//! diversity-aware convolution over the attribute graphs, concatenation,
//! interaction-driven fusion, recent-interest pooling and dot-product
//! scoring.

pub mod backward;
pub mod forward;

use std::fs;
use std::io::Read;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;
use serde::{Deserialize, Serialize};

use crate::error::{FineRecError, Result};
use crate::linalg::Matrix;
use crate::{sc, Scalar};

pub use backward::backward;
pub use forward::{
    conv_item, conv_user, forward, fuse, neighbor_weights, recent_interest, recent_window,
    run_convolution, score, score_all, AttributeTables, ForwardState,
};

/// Variant switches mirroring the ablation studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Replace the similarity-derived convolution weights with uniform ones.
    pub no_diversity: bool,
    /// Drop opinion vectors from aggregation and use uniform weights
    /// (conventional mean aggregation).
    pub no_opinion: bool,
    /// One graph whose edges carry whole-review vectors instead of
    /// per-attribute opinion graphs.
    pub coarse_single_graph: bool,
    /// Replace interaction-driven fusion with a single affine map + ReLU.
    pub concat_mlp_fusion: bool,
}

/// How convolution turns similarities into aggregation weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMode {
    /// Cosine clamped at zero plus a small floor, normalized to sum one.
    #[default]
    ClampCosine,
    /// Softmax over raw cosines.
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_attributes: usize,
    /// Per-attribute embedding dimension.
    pub dim: usize,
    /// Convolution rounds (synchronous updates).
    pub conv_layers: usize,
    /// Recent-interest window length.
    pub recent_window: usize,
    pub ablation: Ablation,
    /// Similarity floor keeping convolution weights a valid convex
    /// combination.
    pub epsilon: f64,
    pub similarity: SimilarityMode,
    /// Attribute vectors are frozen features by default.
    pub train_attr_vectors: bool,
}

impl ModelConfig {
    pub fn new(num_attributes: usize, dim: usize) -> ModelConfig {
        ModelConfig {
            num_attributes,
            dim,
            conv_layers: 1,
            recent_window: 5,
            ablation: Ablation::default(),
            epsilon: 1e-8,
            similarity: SimilarityMode::ClampCosine,
            train_attr_vectors: false,
        }
    }

    pub fn fused_dim(&self) -> usize {
        self.num_attributes * self.dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_attributes == 0 || self.dim == 0 {
            return Err(FineRecError::Config(
                "num_attributes and dim must be at least 1".into(),
            ));
        }
        if self.conv_layers == 0 || self.recent_window == 0 {
            return Err(FineRecError::Config(
                "conv_layers and recent_window must be at least 1".into(),
            ));
        }
        if self.epsilon <= 0.0 {
            return Err(FineRecError::Config("epsilon must be positive".into()));
        }
        Ok(())
    }

    /// Uniform aggregation weights apply in both uniform-style ablations.
    pub(crate) fn uniform_weights(&self) -> bool {
        self.ablation.no_diversity || self.ablation.no_opinion
    }
}

/// Fusion parameters; the variant follows `Ablation::concat_mlp_fusion`.
#[derive(Debug, Clone, PartialEq)]
pub enum FusionParams<F> {
    Interaction {
        w1: Matrix<F>,
        w2: Matrix<F>,
        w3: Matrix<F>,
        w4: Matrix<F>,
    },
    ConcatMlp {
        user_w: Matrix<F>,
        user_b: Vec<F>,
        item_w: Matrix<F>,
        item_b: Vec<F>,
    },
}

/// All model state: per-attribute user/item embedding tables, frozen
/// attribute vectors and the fusion parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub user_emb: Vec<Matrix<F>>,
    pub item_emb: Vec<Matrix<F>>,
    pub attr_vec: Vec<Vec<F>>,
    pub fusion: FusionParams<F>,
    /// When false (the default) attribute vectors receive no gradient.
    pub attr_trainable: bool,
}

impl<F: Scalar> ModelParams<F> {
    pub fn num_users(&self) -> usize {
        self.user_emb.first().map(Matrix::rows).unwrap_or(0)
    }

    pub fn num_items(&self) -> usize {
        self.item_emb.first().map(Matrix::rows).unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.user_emb.first().map(Matrix::cols).unwrap_or(0)
    }

    /// Zero-filled parameter set with the shapes demanded by `config`.
    pub fn shaped(config: &ModelConfig, num_users: usize, num_items: usize) -> Self {
        let n = config.num_attributes;
        let d = config.dim;
        let nd = config.fused_dim();
        let fusion = if config.ablation.concat_mlp_fusion {
            FusionParams::ConcatMlp {
                user_w: Matrix::zeros(nd, nd),
                user_b: vec![F::zero(); nd],
                item_w: Matrix::zeros(nd, nd),
                item_b: vec![F::zero(); nd],
            }
        } else {
            FusionParams::Interaction {
                w1: Matrix::zeros(nd, nd),
                w2: Matrix::zeros(nd, nd),
                w3: Matrix::zeros(nd, nd),
                w4: Matrix::zeros(nd, nd),
            }
        };
        ModelParams {
            user_emb: (0..n).map(|_| Matrix::zeros(num_users, d)).collect(),
            item_emb: (0..n).map(|_| Matrix::zeros(num_items, d)).collect(),
            attr_vec: (0..n).map(|_| vec![F::zero(); d]).collect(),
            fusion,
            attr_trainable: config.train_attr_vectors,
        }
    }

    pub fn zeros_like(&self) -> Self {
        ModelParams {
            user_emb: self
                .user_emb
                .iter()
                .map(|m| Matrix::zeros(m.rows(), m.cols()))
                .collect(),
            item_emb: self
                .item_emb
                .iter()
                .map(|m| Matrix::zeros(m.rows(), m.cols()))
                .collect(),
            attr_vec: self
                .attr_vec
                .iter()
                .map(|v| vec![F::zero(); v.len()])
                .collect(),
            fusion: match &self.fusion {
                FusionParams::Interaction { w1, w2, w3, w4 } => FusionParams::Interaction {
                    w1: Matrix::zeros(w1.rows(), w1.cols()),
                    w2: Matrix::zeros(w2.rows(), w2.cols()),
                    w3: Matrix::zeros(w3.rows(), w3.cols()),
                    w4: Matrix::zeros(w4.rows(), w4.cols()),
                },
                FusionParams::ConcatMlp {
                    user_w,
                    user_b,
                    item_w,
                    item_b,
                } => FusionParams::ConcatMlp {
                    user_w: Matrix::zeros(user_w.rows(), user_w.cols()),
                    user_b: vec![F::zero(); user_b.len()],
                    item_w: Matrix::zeros(item_w.rows(), item_w.cols()),
                    item_b: vec![F::zero(); item_b.len()],
                },
            },
            attr_trainable: self.attr_trainable,
        }
    }

    /// Named views of every parameter block, in a fixed order shared with
    /// [`ModelParams::blocks_mut`], the optimizer and the checkpoint format.
    pub fn blocks(&self) -> Vec<(String, Vec<usize>, &[F], bool)> {
        let mut out = Vec::new();
        for (n, m) in self.user_emb.iter().enumerate() {
            out.push((
                format!("user_emb.{n}"),
                vec![m.rows(), m.cols()],
                m.data(),
                true,
            ));
        }
        for (n, m) in self.item_emb.iter().enumerate() {
            out.push((
                format!("item_emb.{n}"),
                vec![m.rows(), m.cols()],
                m.data(),
                true,
            ));
        }
        for (n, v) in self.attr_vec.iter().enumerate() {
            out.push((
                format!("attr_vec.{n}"),
                vec![v.len()],
                v.as_slice(),
                self.attr_trainable,
            ));
        }
        match &self.fusion {
            FusionParams::Interaction { w1, w2, w3, w4 } => {
                for (name, m) in [("w1", w1), ("w2", w2), ("w3", w3), ("w4", w4)] {
                    out.push((
                        name.to_string(),
                        vec![m.rows(), m.cols()],
                        m.data(),
                        true,
                    ));
                }
            }
            FusionParams::ConcatMlp {
                user_w,
                user_b,
                item_w,
                item_b,
            } => {
                out.push((
                    "mlp_user_w".into(),
                    vec![user_w.rows(), user_w.cols()],
                    user_w.data(),
                    true,
                ));
                out.push(("mlp_user_b".into(), vec![user_b.len()], user_b.as_slice(), true));
                out.push((
                    "mlp_item_w".into(),
                    vec![item_w.rows(), item_w.cols()],
                    item_w.data(),
                    true,
                ));
                out.push(("mlp_item_b".into(), vec![item_b.len()], item_b.as_slice(), true));
            }
        }
        out
    }

    /// Mutable counterpart of [`ModelParams::blocks`], same order.
    pub fn blocks_mut(&mut self) -> Vec<(String, &mut [F], bool)> {
        let attr_trainable = self.attr_trainable;
        let mut out = Vec::new();
        for (n, m) in self.user_emb.iter_mut().enumerate() {
            out.push((format!("user_emb.{n}"), m.data_mut(), true));
        }
        for (n, m) in self.item_emb.iter_mut().enumerate() {
            out.push((format!("item_emb.{n}"), m.data_mut(), true));
        }
        for (n, v) in self.attr_vec.iter_mut().enumerate() {
            out.push((format!("attr_vec.{n}"), v.as_mut_slice(), attr_trainable));
        }
        match &mut self.fusion {
            FusionParams::Interaction { w1, w2, w3, w4 } => {
                out.push(("w1".into(), w1.data_mut(), true));
                out.push(("w2".into(), w2.data_mut(), true));
                out.push(("w3".into(), w3.data_mut(), true));
                out.push(("w4".into(), w4.data_mut(), true));
            }
            FusionParams::ConcatMlp {
                user_w,
                user_b,
                item_w,
                item_b,
            } => {
                out.push(("mlp_user_w".into(), user_w.data_mut(), true));
                out.push(("mlp_user_b".into(), user_b.as_mut_slice(), true));
                out.push(("mlp_item_w".into(), item_w.data_mut(), true));
                out.push(("mlp_item_b".into(), item_b.as_mut_slice(), true));
            }
        }
        out
    }

    /// Error naming the first block containing a non-finite entry.
    pub fn check_finite(&self) -> Result<()> {
        for (name, _, values, _) in self.blocks() {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(FineRecError::NonFinite { block: name });
            }
        }
        Ok(())
    }

    fn validate_against(&self, config: &ModelConfig, num_users: usize, num_items: usize) -> Result<()> {
        let expect = ModelParams::<F>::shaped(config, num_users, num_items);
        let got: Vec<(String, Vec<usize>)> = self
            .blocks()
            .into_iter()
            .map(|(n, s, _, _)| (n, s))
            .collect();
        let want: Vec<(String, Vec<usize>)> = expect
            .blocks()
            .into_iter()
            .map(|(n, s, _, _)| (n, s))
            .collect();
        if got != want {
            return Err(FineRecError::Shape(format!(
                "parameter blocks {got:?} do not match configuration {want:?}"
            )));
        }
        Ok(())
    }
}

fn unit_uniform(rng: &mut Xoshiro256StarStar) -> f64 {
    // 53 uniform mantissa bits in [0, 1).
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn fill_uniform<F: Scalar>(rng: &mut Xoshiro256StarStar, values: &mut [F], half: f64) {
    for v in values.iter_mut() {
        *v = sc((2.0 * unit_uniform(rng) - 1.0) * half);
    }
}

/// Initialize parameters from a seeded xoshiro256** stream: embeddings
/// uniform on [-1/sqrt(d), 1/sqrt(d)], fusion matrices identity plus uniform
/// [-scale, scale] noise with `scale = 1/sqrt(N*d)`.
pub fn init_params<F: Scalar>(
    config: &ModelConfig,
    seed: u64,
    num_users: usize,
    num_items: usize,
    attr_vectors: Vec<Vec<F>>,
) -> Result<ModelParams<F>> {
    let nd = config.fused_dim();
    init_params_scaled(
        config,
        seed,
        num_users,
        num_items,
        attr_vectors,
        1.0 / (nd as f64).sqrt(),
    )
}

/// [`init_params`] with an explicit fusion-noise scale (0 gives exact
/// identity matrices).
pub fn init_params_scaled<F: Scalar>(
    config: &ModelConfig,
    seed: u64,
    num_users: usize,
    num_items: usize,
    attr_vectors: Vec<Vec<F>>,
    fusion_noise: f64,
) -> Result<ModelParams<F>> {
    config.validate()?;
    if attr_vectors.len() != config.num_attributes {
        return Err(FineRecError::Shape(format!(
            "{} attribute vectors supplied, config needs {}",
            attr_vectors.len(),
            config.num_attributes
        )));
    }
    for (n, v) in attr_vectors.iter().enumerate() {
        if v.len() != config.dim {
            return Err(FineRecError::Shape(format!(
                "attribute vector {n} has dimension {}, config needs {}",
                v.len(),
                config.dim
            )));
        }
    }
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut params = ModelParams::shaped(config, num_users, num_items);
    params.attr_vec = attr_vectors;
    let emb_half = 1.0 / (config.dim as f64).sqrt();
    for table in params.user_emb.iter_mut().chain(params.item_emb.iter_mut()) {
        fill_uniform(&mut rng, table.data_mut(), emb_half);
    }
    let mut init_square = |m: &mut Matrix<F>| {
        fill_uniform(&mut rng, m.data_mut(), fusion_noise);
        for i in 0..m.rows() {
            m.row_mut(i)[i] += F::one();
        }
    };
    match &mut params.fusion {
        FusionParams::Interaction { w1, w2, w3, w4 } => {
            init_square(w1);
            init_square(w2);
            init_square(w3);
            init_square(w4);
        }
        FusionParams::ConcatMlp {
            user_w, item_w, ..
        } => {
            init_square(user_w);
            init_square(item_w);
        }
    }
    Ok(params)
}

/// Checkpoint header serialized as JSON inside the binary container. The
/// two-hop cap is recorded so evaluation rebuilds the exact interaction
/// graph the parameters were trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub num_users: usize,
    pub num_items: usize,
    pub attributes: Vec<String>,
    pub two_hop_cap: usize,
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"FINERECK";
const CHECKPOINT_VERSION: u8 = 1;

/// Write magic, version, a length-prefixed JSON header, then the named
/// parameter blocks as row-major little-endian f64.
pub fn save_checkpoint<F: Scalar>(
    path: &Path,
    header: &CheckpointHeader,
    params: &ModelParams<F>,
) -> Result<()> {
    params.validate_against(&header.config, header.num_users, header.num_items)?;
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    let header_json = serde_json::to_vec(header).expect("header serializes");
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for (name, shape, values, _) in params.blocks() {
        let name_bytes = name.as_bytes();
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(name_bytes);
        out.push(shape.len() as u8);
        for dim in &shape {
            out.extend_from_slice(&(*dim as u64).to_le_bytes());
        }
        for v in values {
            let v = v.to_f64().expect("scalar fits f64");
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| FineRecError::io(path.display().to_string(), e))
}

fn read_exact(
    reader: &mut impl Read,
    buf: &mut [u8],
    path: &str,
    what: &str,
) -> Result<()> {
    reader
        .read_exact(buf)
        .map_err(|e| FineRecError::Parse {
            path: path.into(),
            line: 0,
            msg: format!("truncated checkpoint while reading {what}: {e}"),
        })
}

/// Load a checkpoint, validating block names and shapes against the header.
pub fn load_checkpoint<F: Scalar>(path: &Path) -> Result<(CheckpointHeader, ModelParams<F>)> {
    let bytes =
        fs::read(path).map_err(|e| FineRecError::io(path.display().to_string(), e))?;
    let path_str = path.display().to_string();
    let mut reader = bytes.as_slice();
    let mut magic = [0u8; 8];
    read_exact(&mut reader, &mut magic, &path_str, "magic")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(FineRecError::parse(&path_str, 0, "not a checkpoint file"));
    }
    let mut version = [0u8; 1];
    read_exact(&mut reader, &mut version, &path_str, "version")?;
    if version[0] != CHECKPOINT_VERSION {
        return Err(FineRecError::parse(
            &path_str,
            0,
            format!("unsupported checkpoint version {}", version[0]),
        ));
    }
    let mut len = [0u8; 4];
    read_exact(&mut reader, &mut len, &path_str, "header length")?;
    let header_len = u32::from_le_bytes(len) as usize;
    let mut header_json = vec![0u8; header_len];
    read_exact(&mut reader, &mut header_json, &path_str, "header")?;
    let header: CheckpointHeader = serde_json::from_slice(&header_json)
        .map_err(|e| FineRecError::parse(&path_str, 0, format!("bad header: {e}")))?;

    let mut params = ModelParams::<F>::shaped(&header.config, header.num_users, header.num_items);
    let mut pending: std::collections::HashMap<String, (Vec<usize>, Vec<F>)> =
        std::collections::HashMap::new();
    while !reader.is_empty() {
        let mut name_len = [0u8; 2];
        read_exact(&mut reader, &mut name_len, &path_str, "block name length")?;
        let mut name = vec![0u8; u16::from_le_bytes(name_len) as usize];
        read_exact(&mut reader, &mut name, &path_str, "block name")?;
        let name = String::from_utf8(name)
            .map_err(|_| FineRecError::parse(&path_str, 0, "block name is not utf-8"))?;
        let mut ndims = [0u8; 1];
        read_exact(&mut reader, &mut ndims, &path_str, "block rank")?;
        let mut shape = Vec::with_capacity(ndims[0] as usize);
        for _ in 0..ndims[0] {
            let mut dim = [0u8; 8];
            read_exact(&mut reader, &mut dim, &path_str, "block shape")?;
            shape.push(u64::from_le_bytes(dim) as usize);
        }
        let count: usize = shape.iter().product();
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let mut v = [0u8; 8];
            read_exact(&mut reader, &mut v, &path_str, "block data")?;
            values.push(sc::<F>(f64::from_le_bytes(v)));
        }
        if pending.insert(name.clone(), (shape, values)).is_some() {
            return Err(FineRecError::parse(
                &path_str,
                0,
                format!("duplicate block `{name}`"),
            ));
        }
    }
    for (name, slice, _) in params.blocks_mut() {
        let (shape, values) = pending.remove(&name).ok_or_else(|| {
            FineRecError::Shape(format!("checkpoint is missing block `{name}`"))
        })?;
        let count: usize = shape.iter().product();
        if count != slice.len() {
            return Err(FineRecError::Shape(format!(
                "block `{name}` has shape {shape:?} ({count} values), configuration needs {}",
                slice.len()
            )));
        }
        slice.copy_from_slice(&values);
    }
    if let Some(name) = pending.keys().next() {
        return Err(FineRecError::Shape(format!(
            "checkpoint contains unexpected block `{name}`"
        )));
    }
    Ok((header, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::encode_text;

    fn attr_vectors(n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| encode_text(&format!("attr{i}"), d)).collect()
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let config = ModelConfig::new(2, 4);
        let a = init_params::<f64>(&config, 7, 5, 6, attr_vectors(2, 4)).unwrap();
        let b = init_params::<f64>(&config, 7, 5, 6, attr_vectors(2, 4)).unwrap();
        assert_eq!(a, b);
        let c = init_params::<f64>(&config, 8, 5, 6, attr_vectors(2, 4)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn embedding_entries_respect_bound() {
        let config = ModelConfig::new(1, 4);
        let params = init_params::<f64>(&config, 3, 10, 10, attr_vectors(1, 4)).unwrap();
        for table in params.user_emb.iter().chain(params.item_emb.iter()) {
            for v in table.data() {
                assert!(v.abs() <= 0.5, "entry {v} outside [-0.5, 0.5]");
            }
        }
    }

    #[test]
    fn zero_noise_gives_exact_identity() {
        let config = ModelConfig::new(2, 3);
        let params =
            init_params_scaled::<f64>(&config, 1, 4, 4, attr_vectors(2, 3), 0.0).unwrap();
        match &params.fusion {
            FusionParams::Interaction { w1, .. } => {
                assert_eq!(w1, &Matrix::identity(6));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn blocks_cover_every_parameter_once() {
        let config = ModelConfig::new(2, 3);
        let params = init_params::<f64>(&config, 1, 4, 5, attr_vectors(2, 3)).unwrap();
        let blocks = params.blocks();
        let names: Vec<&str> = blocks.iter().map(|(n, _, _, _)| n.as_str()).collect();
        assert_eq!(
            names,
            [
                "user_emb.0",
                "user_emb.1",
                "item_emb.0",
                "item_emb.1",
                "attr_vec.0",
                "attr_vec.1",
                "w1",
                "w2",
                "w3",
                "w4"
            ]
        );
        let total: usize = blocks.iter().map(|(_, _, v, _)| v.len()).sum();
        assert_eq!(total, 2 * 4 * 3 + 2 * 5 * 3 + 2 * 3 + 4 * 36);
        // Attribute blocks are frozen by default.
        assert!(blocks
            .iter()
            .all(|(n, _, _, t)| *t != n.starts_with("attr_vec")));
    }

    #[test]
    fn checkpoint_round_trips_bit_exact() {
        let mut config = ModelConfig::new(2, 3);
        config.conv_layers = 2;
        let params = init_params::<f64>(&config, 11, 4, 5, attr_vectors(2, 3)).unwrap();
        let header = CheckpointHeader {
            config: config.clone(),
            num_users: 4,
            num_items: 5,
            attributes: vec!["A".into(), "B".into()],
            two_hop_cap: 100,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &header, &params).unwrap();
        let (loaded_header, loaded) = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(loaded_header, header);
        assert_eq!(loaded, params);
        // Magic bytes up front.
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"FINERECK");
        assert_eq!(bytes[8], 1);
    }

    #[test]
    fn checkpoint_shape_mismatch_is_reported() {
        let config = ModelConfig::new(1, 3);
        let params = init_params::<f64>(&config, 11, 4, 5, attr_vectors(1, 3)).unwrap();
        let header = CheckpointHeader {
            config: config.clone(),
            num_users: 9,
            num_items: 5,
            attributes: vec!["A".into()],
            two_hop_cap: 100,
        };
        let err = save_checkpoint(
            &std::env::temp_dir().join("finerec_bad.ckpt"),
            &header,
            &params,
        )
        .unwrap_err();
        assert!(matches!(err, FineRecError::Shape(_)), "{err}");
    }

    #[test]
    fn mlp_fusion_blocks_have_their_own_names() {
        let mut config = ModelConfig::new(2, 2);
        config.ablation.concat_mlp_fusion = true;
        let params = init_params::<f64>(&config, 1, 3, 3, attr_vectors(2, 2)).unwrap();
        let names: Vec<String> = params.blocks().into_iter().map(|(n, _, _, _)| n).collect();
        assert!(names.contains(&"mlp_user_w".to_string()));
        assert!(names.contains(&"mlp_item_b".to_string()));
        match &params.fusion {
            FusionParams::ConcatMlp { user_b, .. } => {
                assert!(user_b.iter().all(|v| *v == 0.0));
            }
            _ => unreachable!(),
        }
    }
}
