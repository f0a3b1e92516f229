//! Glue between corpus, pairs, graphs and the model: one place that derives
//! the model configuration (including the coarse ablation rewiring), builds
//! graph artifacts and runs training, shared by the CLI and the test
//! harness.

use std::path::Path;

use crate::corpus::SplitCorpus;
use crate::encoder::{encode_text, HashingEncoder};
use crate::error::Result;
use crate::extraction::{AttributeSet, PairStore};
use crate::graphs::{
    build_attribute_graphs, build_coarse_graph, build_global_graph, AttributeGraph,
    GlobalInteractionGraph,
};
use crate::model::{Ablation, CheckpointHeader, ModelConfig, SimilarityMode};
use crate::training::{train, TrainHyper, TrainOutcome};
use crate::Scalar;

/// Everything the trainer and evaluator need besides the split corpus.
#[derive(Debug, Clone)]
pub struct Artifacts<F> {
    pub graphs: Vec<AttributeGraph<F>>,
    pub global: GlobalInteractionGraph,
    pub attr_vectors: Vec<Vec<F>>,
    pub attribute_names: Vec<String>,
    pub model_config: ModelConfig,
}

/// Pipeline-level knobs on top of [`ModelConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dim: usize,
    pub conv_layers: usize,
    pub recent_window: usize,
    pub two_hop_cap: usize,
    pub epsilon: f64,
    pub similarity: SimilarityMode,
    pub ablation: Ablation,
    pub train_attr_vectors: bool,
    pub hyper: TrainHyper,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dim: 16,
            conv_layers: 1,
            recent_window: 5,
            two_hop_cap: 100,
            epsilon: 1e-8,
            similarity: SimilarityMode::ClampCosine,
            ablation: Ablation::default(),
            train_attr_vectors: false,
            hyper: TrainHyper::default(),
        }
    }
}

/// Resolve the model configuration. The coarse ablation collapses the
/// attribute axis into a single whole-review pseudo-attribute of the same
/// per-graph dimension `d`, so the variant differs from the full model only
/// in granularity, exactly one graph instead of N.
pub fn derive_model_config(attributes: &AttributeSet, pcfg: &PipelineConfig) -> ModelConfig {
    let num_attributes = if pcfg.ablation.coarse_single_graph {
        1
    } else {
        attributes.len()
    };
    ModelConfig {
        num_attributes,
        dim: pcfg.dim,
        conv_layers: pcfg.conv_layers,
        recent_window: pcfg.recent_window,
        ablation: pcfg.ablation,
        epsilon: pcfg.epsilon,
        similarity: pcfg.similarity,
        train_attr_vectors: pcfg.train_attr_vectors,
    }
}

/// Build graphs and frozen vectors for a resolved model configuration;
/// the same routine reconstructs artifacts when evaluating a checkpoint.
pub fn build_artifacts<F: Scalar>(
    split: &SplitCorpus,
    pairs: &PairStore,
    attributes: &AttributeSet,
    model_config: &ModelConfig,
    two_hop_cap: usize,
) -> Result<Artifacts<F>> {
    model_config.validate()?;
    let encoder = HashingEncoder {
        dim: model_config.dim,
    };
    let (graphs, attr_vectors, attribute_names) = if model_config.ablation.coarse_single_graph {
        let graphs = vec![build_coarse_graph(&split.train, &encoder)];
        let attr_vectors = vec![encode_text::<F>("review", model_config.dim)];
        (graphs, attr_vectors, vec!["review".to_string()])
    } else {
        // Pairs were extracted before the 5-core filter and the split, so
        // drop the ones whose interactions are no longer in the train corpus.
        let train_pairs = pairs.restrict_to(&split.train);
        let graphs = build_attribute_graphs(
            &train_pairs,
            &split.train,
            model_config.num_attributes,
            &encoder,
        )?;
        let attr_vectors = attributes
            .names()
            .iter()
            .map(|name| encode_text::<F>(name, model_config.dim))
            .collect();
        (graphs, attr_vectors, attributes.names().to_vec())
    };
    let global = build_global_graph(&split.train, two_hop_cap);
    Ok(Artifacts {
        graphs,
        global,
        attr_vectors,
        attribute_names,
        model_config: model_config.clone(),
    })
}

/// Checkpoint header describing a trained artifact set.
pub fn checkpoint_header<F: Scalar>(
    split: &SplitCorpus,
    artifacts: &Artifacts<F>,
    two_hop_cap: usize,
) -> CheckpointHeader {
    CheckpointHeader {
        config: artifacts.model_config.clone(),
        num_users: split.train.num_users(),
        num_items: split.train.num_items(),
        attributes: artifacts.attribute_names.clone(),
        two_hop_cap,
    }
}

/// Derive the configuration, build artifacts and train.
pub fn train_pipeline<F: Scalar>(
    split: &SplitCorpus,
    pairs: &PairStore,
    attributes: &AttributeSet,
    pcfg: &PipelineConfig,
    out_dir: Option<&Path>,
) -> Result<(Artifacts<F>, TrainOutcome<F>)> {
    let model_config = derive_model_config(attributes, pcfg);
    let artifacts = build_artifacts::<F>(split, pairs, attributes, &model_config, pcfg.two_hop_cap)?;
    let header = checkpoint_header(split, &artifacts, pcfg.two_hop_cap);
    let outcome = train(
        split,
        &artifacts.graphs,
        &artifacts.global,
        &artifacts.model_config,
        artifacts.attr_vectors.clone(),
        &header,
        &pcfg.hyper,
        out_dir,
    )?;
    Ok((artifacts, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::leave_one_out_split;
    use crate::synth;

    #[test]
    fn coarse_mode_collapses_attributes_but_keeps_capacity() {
        let config = synth::SynthConfig {
            num_users: 8,
            num_items: 12,
            interactions_per_user: 6,
            ..synth::SynthConfig::default()
        };
        let (corpus, pairs, truth) = synth::generate(&config).unwrap();
        let split = leave_one_out_split(&corpus);
        let attributes = truth.attribute_set();
        let mut pcfg = PipelineConfig {
            dim: 4,
            ..PipelineConfig::default()
        };
        pcfg.ablation.coarse_single_graph = true;
        let model_config = derive_model_config(&attributes, &pcfg);
        assert_eq!(model_config.num_attributes, 1);
        assert_eq!(model_config.dim, 4);
        assert_eq!(model_config.fused_dim(), 4);
        let artifacts =
            build_artifacts::<f64>(&split, &pairs, &attributes, &model_config, 100).unwrap();
        assert_eq!(artifacts.graphs.len(), 1);
        assert_eq!(artifacts.attribute_names, vec!["review".to_string()]);
        // Edge count equals train interactions.
        assert_eq!(
            artifacts.graphs[0].num_edges(),
            split.train.interaction_count()
        );
    }

    #[test]
    fn full_mode_builds_per_attribute_graphs() {
        let config = synth::SynthConfig {
            num_users: 8,
            num_items: 12,
            interactions_per_user: 6,
            ..synth::SynthConfig::default()
        };
        let (corpus, pairs, truth) = synth::generate(&config).unwrap();
        let split = leave_one_out_split(&corpus);
        let attributes = truth.attribute_set();
        let pcfg = PipelineConfig {
            dim: 4,
            ..PipelineConfig::default()
        };
        let model_config = derive_model_config(&attributes, &pcfg);
        let artifacts =
            build_artifacts::<f64>(&split, &pairs, &attributes, &model_config, 100).unwrap();
        assert_eq!(artifacts.graphs.len(), 3);
        assert_eq!(artifacts.attr_vectors.len(), 3);
        assert_eq!(artifacts.model_config.fused_dim(), 12);
    }
}
