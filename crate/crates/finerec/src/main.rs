use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Deserialize;

use finerec::corpus::{
    drop_attributeless_reviews, five_core_filter, leave_one_out_split, load_interactions,
    CorpusFormat, SplitCorpus,
};
use finerec::encoder::encode_text;
use finerec::evaluation::{
    self, per_user_jsonl, EvalSplit, MetricTable,
};
use finerec::extraction::{
    extract_with_lexicon, extract_with_llm, AttributeLexicon, AttributeSet, CassetteClient,
    ChatEndpoint, HttpChatClient, PairStore,
};
use finerec::graphs::dump_graph;
use finerec::linalg::cosine;
use finerec::model::{load_checkpoint, Ablation, ModelParams, SimilarityMode};
use finerec::pipeline::{self, Artifacts, PipelineConfig};
use finerec::synth::{self, SynthConfig};
use finerec::training::{AdamConfig, TrainHyper};
use finerec::Real;

/// Fine-grained sequential recommender: mines attribute-opinion pairs from
/// reviews, learns per-attribute user/item embeddings on opinion graphs and
/// ranks the full catalog.
#[derive(Parser)]
#[command(name = "finerec", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply the attribute-mention filter, 5-core and leave-one-out split.
    Preprocess(PreprocessArgs),
    /// Mine attribute-opinion pairs from reviews.
    Extract(ExtractArgs),
    /// Build and dump the per-attribute opinion graphs.
    BuildGraphs(BuildGraphsArgs),
    /// Train a model on a preprocessed split.
    Train(TrainArgs),
    /// Score a checkpoint (and optionally the baselines) on a held-out split.
    Evaluate(EvaluateArgs),
    /// Print top-k recommendations with opinion explanations for one user.
    Recommend(RecommendArgs),
    /// Generate a planted-signal synthetic dataset.
    Synth(SynthArgs),
}

/// Overlay `file` values under the flag values: a flag that was set wins.
macro_rules! overlay {
    ($flags:expr, $file:expr, [$($field:ident),* $(,)?]) => {
        $( $flags.$field = $flags.$field.take().or($file.$field.take()); )*
    };
}

fn read_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn load_attribute_set(spec: &str) -> Result<AttributeSet> {
    if let Some(builtin) = AttributeSet::builtin(spec) {
        return Ok(builtin);
    }
    let path = Path::new(spec);
    if path.exists() {
        return Ok(AttributeSet::load(path)?);
    }
    bail!("`{spec}` is neither a builtin attribute list (cellphones, beauty, sports, yelp) nor a file");
}

fn parse_format(format: Option<String>) -> Result<CorpusFormat> {
    Ok(format.as_deref().unwrap_or("jsonl").parse()?)
}

fn parse_ks(spec: Option<String>) -> Result<Vec<usize>> {
    let spec = spec.unwrap_or_else(|| "10,20".to_string());
    let ks: Result<Vec<usize>> = spec
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .with_context(|| format!("bad k value `{s}`"))
        })
        .collect();
    let ks = ks?;
    if ks.is_empty() || ks.contains(&0) {
        bail!("k list must contain positive integers");
    }
    Ok(ks)
}

fn parse_similarity(spec: Option<String>) -> Result<SimilarityMode> {
    match spec.as_deref().unwrap_or("clamp") {
        "clamp" => Ok(SimilarityMode::ClampCosine),
        "softmax" => Ok(SimilarityMode::Softmax),
        other => bail!("unknown similarity mode `{other}` (expected clamp or softmax)"),
    }
}

// ---------------------------------------------------------------- preprocess

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct PreprocessArgs {
    /// JSON file mirroring these flags; explicit flags win.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Raw interaction file.
    #[arg(long = "in")]
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    /// Input format: jsonl or tsv.
    #[arg(long)]
    format: Option<String>,
    /// Output directory for train/valid/test files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Existing pair file driving the attribute-mention filter.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Lexicon for inline extraction when no pair file exists.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Attribute list (builtin name or JSON file); required with --lexicon.
    #[arg(long)]
    attributes: Option<String>,
}

fn run_preprocess(mut args: PreprocessArgs) -> Result<()> {
    if let Some(path) = args.config.take() {
        let mut file: PreprocessArgs = read_config(&path)?;
        overlay!(args, file, [input, format, out_dir, pairs, lexicon, attributes]);
    }
    let input = args.input.ok_or_else(|| anyhow!("--in is required"))?;
    let out_dir = args.out_dir.ok_or_else(|| anyhow!("--out-dir is required"))?;
    let format = parse_format(args.format)?;
    let corpus = load_interactions(&input, format)?;

    let (pairs, attributes) = match (&args.pairs, &args.lexicon) {
        (Some(pair_path), _) => {
            let attributes = match &args.attributes {
                Some(spec) => load_attribute_set(spec)?,
                None => bail!("--attributes is required to interpret the pair file"),
            };
            (PairStore::load(pair_path, &attributes)?, attributes)
        }
        (None, Some(lexicon_path)) => {
            let spec = args
                .attributes
                .as_ref()
                .ok_or_else(|| anyhow!("--attributes is required with --lexicon"))?;
            let attributes = load_attribute_set(spec)?;
            let lexicon = AttributeLexicon::load(lexicon_path)?;
            (extract_with_lexicon(&attributes, &lexicon, &corpus)?, attributes)
        }
        (None, None) => bail!("preprocess needs --pairs or --lexicon to filter reviews"),
    };

    let filtered = drop_attributeless_reviews(&corpus, &pairs);
    let cored = five_core_filter(&filtered);
    let split = leave_one_out_split(&cored);
    split.write_dir(&out_dir)?;
    pairs.save(&out_dir.join("pairs.jsonl"), &attributes)?;
    attributes.save(&out_dir.join("attributes.json"))?;
    println!(
        "preprocess: {} raw interactions -> {} after attribute filter -> {} after 5-core; {} users retained",
        corpus.interaction_count(),
        filtered.interaction_count(),
        cored.interaction_count(),
        split.train.num_users(),
    );
    Ok(())
}

// ------------------------------------------------------------------- extract

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ExtractArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long = "in")]
    #[serde(rename = "in")]
    input: Option<PathBuf>,
    #[arg(long)]
    format: Option<String>,
    /// llm or lexicon.
    #[arg(long)]
    mode: Option<String>,
    /// Attribute list (builtin name or JSON file).
    #[arg(long)]
    attributes: Option<String>,
    /// Output pair file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Lexicon file (lexicon mode).
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Prompt repetitions per (review, attribute) (llm mode).
    #[arg(long)]
    runs: Option<usize>,
    /// Chat-completion endpoint URL (llm mode; credential in FINEREC_API_KEY).
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent in the request body (llm mode).
    #[arg(long)]
    model: Option<String>,
    /// Record/replay cassette path (llm mode).
    #[arg(long)]
    cassette: Option<PathBuf>,
}

fn run_extract(mut args: ExtractArgs) -> Result<()> {
    if let Some(path) = args.config.take() {
        let mut file: ExtractArgs = read_config(&path)?;
        overlay!(
            args,
            file,
            [input, format, mode, attributes, out, lexicon, runs, endpoint, model, cassette]
        );
    }
    let input = args.input.ok_or_else(|| anyhow!("--in is required"))?;
    let out = args.out.ok_or_else(|| anyhow!("--out is required"))?;
    let spec = args
        .attributes
        .ok_or_else(|| anyhow!("--attributes is required"))?;
    let attributes = load_attribute_set(&spec)?;
    let corpus = load_interactions(&input, parse_format(args.format)?)?;

    match args.mode.as_deref().unwrap_or("lexicon") {
        "lexicon" => {
            let lexicon_path = args
                .lexicon
                .ok_or_else(|| anyhow!("--lexicon is required in lexicon mode"))?;
            let lexicon = AttributeLexicon::load(&lexicon_path)?;
            let store = extract_with_lexicon(&attributes, &lexicon, &corpus)?;
            store.save(&out, &attributes)?;
            println!("extract: {} pairs -> {}", store.len(), out.display());
        }
        "llm" => {
            let runs = args.runs.unwrap_or(5);
            let model = args.model.unwrap_or_else(|| "gpt-3.5-turbo".to_string());
            let client: Box<dyn ChatEndpoint> = match (&args.cassette, &args.endpoint) {
                (Some(cassette), Some(endpoint)) => Box::new(CassetteClient::recording(
                    cassette.clone(),
                    HttpChatClient::from_env(endpoint.clone(), model)?,
                )?),
                (Some(cassette), None) => Box::new(CassetteClient::replay(cassette)?),
                (None, Some(endpoint)) => {
                    Box::new(HttpChatClient::from_env(endpoint.clone(), model)?)
                }
                (None, None) => bail!("llm mode needs --endpoint and/or --cassette"),
            };
            let report = extract_with_llm(client.as_ref(), &attributes, &corpus, runs)?;
            report.store.save(&out, &attributes)?;
            println!("extract: {} pairs -> {}", report.store.len(), out.display());
            if !report.failures.is_empty() {
                let failure_path = out.with_extension("failures.jsonl");
                let mut text = String::new();
                for f in &report.failures {
                    text.push_str(
                        &serde_json::json!({
                            "user": f.user,
                            "item": f.item,
                            "attribute": attributes.name(f.attribute),
                            "error": f.error,
                        })
                        .to_string(),
                    );
                    text.push('\n');
                }
                fs::write(&failure_path, text)?;
                eprintln!(
                    "extract: {} prompts failed after retries -> {}",
                    report.failures.len(),
                    failure_path.display()
                );
            }
        }
        other => bail!("unknown extraction mode `{other}` (expected llm or lexicon)"),
    }
    Ok(())
}

// -------------------------------------------------------------- build-graphs

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct BuildGraphsArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Directory holding train/valid/test from preprocess.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    attributes: Option<String>,
    /// Embedding dimension for the opinion vectors.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn run_build_graphs(mut args: BuildGraphsArgs) -> Result<()> {
    if let Some(path) = args.config.take() {
        let mut file: BuildGraphsArgs = read_config(&path)?;
        overlay!(args, file, [data_dir, pairs, attributes, d, out_dir]);
    }
    let data_dir = args.data_dir.ok_or_else(|| anyhow!("--data-dir is required"))?;
    let out_dir = args.out_dir.ok_or_else(|| anyhow!("--out-dir is required"))?;
    let (split, pairs, attributes) = load_data(&data_dir, args.pairs, args.attributes)?;
    let encoder = finerec::encoder::HashingEncoder {
        dim: args.d.unwrap_or(16),
    };
    // Pairs may reference interactions the 5-core filter or the split
    // removed; graphs are built from what remains in the train corpus.
    let train_pairs = pairs.restrict_to(&split.train);
    let graphs = finerec::graphs::build_attribute_graphs::<Real>(
        &train_pairs,
        &split.train,
        attributes.len(),
        &encoder,
    )?;
    fs::create_dir_all(&out_dir)?;
    for graph in &graphs {
        let path = out_dir.join(format!("graph-{}.jsonl", graph.attribute));
        dump_graph(graph, &split.train, &path)?;
        println!(
            "graph {} ({}): {} edges -> {}",
            graph.attribute,
            attributes.name(graph.attribute),
            graph.num_edges(),
            path.display()
        );
    }
    Ok(())
}

// --------------------------------------------------------------------- train

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    attributes: Option<String>,
    /// Output directory for checkpoints and the metric log.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-attribute embedding dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Convolution rounds.
    #[arg(long)]
    layers: Option<usize>,
    /// Recent-interest window.
    #[arg(long)]
    window: Option<usize>,
    /// Two-hop neighborhood cap (0 = unlimited).
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// clamp or softmax.
    #[arg(long)]
    similarity: Option<String>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, action = ArgAction::SetTrue)]
    no_diversity: Option<bool>,
    #[arg(long, action = ArgAction::SetTrue)]
    no_opinion: Option<bool>,
    #[arg(long, action = ArgAction::SetTrue)]
    coarse: Option<bool>,
    #[arg(long, action = ArgAction::SetTrue)]
    cat_fusion: Option<bool>,
    #[arg(long, action = ArgAction::SetTrue)]
    train_attr_vectors: Option<bool>,
}

fn pipeline_config_from(args: &TrainArgs) -> Result<PipelineConfig> {
    let mut pcfg = PipelineConfig::default();
    if let Some(d) = args.d {
        pcfg.dim = d;
    }
    if let Some(layers) = args.layers {
        pcfg.conv_layers = layers;
    }
    if let Some(window) = args.window {
        pcfg.recent_window = window;
    }
    if let Some(cap) = args.cap {
        pcfg.two_hop_cap = if cap == 0 { usize::MAX } else { cap };
    }
    if let Some(epsilon) = args.epsilon {
        pcfg.epsilon = epsilon;
    }
    pcfg.similarity = parse_similarity(args.similarity.clone())?;
    pcfg.ablation = Ablation {
        no_diversity: args.no_diversity.unwrap_or(false),
        no_opinion: args.no_opinion.unwrap_or(false),
        coarse_single_graph: args.coarse.unwrap_or(false),
        concat_mlp_fusion: args.cat_fusion.unwrap_or(false),
    };
    pcfg.train_attr_vectors = args.train_attr_vectors.unwrap_or(false);
    pcfg.hyper = TrainHyper {
        batch_size: args.batch.unwrap_or(512),
        adam: AdamConfig {
            lr: args.lr.unwrap_or(0.001),
            ..AdamConfig::default()
        },
        max_epochs: args.epochs.unwrap_or(200),
        patience: args.patience.unwrap_or(10),
        seed: args.seed.unwrap_or(42),
    };
    Ok(pcfg)
}

fn run_train(mut args: TrainArgs) -> Result<()> {
    if let Some(path) = args.config.take() {
        let mut file: TrainArgs = read_config(&path)?;
        overlay!(
            args,
            file,
            [
                data_dir, pairs, attributes, out, d, layers, window, cap, epsilon, similarity,
                batch, lr, epochs, patience, seed, no_diversity, no_opinion, coarse, cat_fusion,
                train_attr_vectors
            ]
        );
    }
    let data_dir = args.data_dir.clone().ok_or_else(|| anyhow!("--data-dir is required"))?;
    let out = args.out.clone().ok_or_else(|| anyhow!("--out is required"))?;
    let (split, pairs, attributes) = load_data(&data_dir, args.pairs.clone(), args.attributes.clone())?;
    let pcfg = pipeline_config_from(&args)?;
    let (_, outcome) =
        pipeline::train_pipeline::<Real>(&split, &pairs, &attributes, &pcfg, Some(&out))?;
    println!(
        "train: best epoch {} with validation Prec@20 = {:.4}; checkpoints and train_log.csv in {}",
        outcome.best_epoch,
        outcome.best_valid_prec20,
        out.display()
    );
    Ok(())
}

// ------------------------------------------------------------------ evaluate

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct EvaluateArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    attributes: Option<String>,
    /// Comma-separated cutoffs, e.g. 10,20.
    #[arg(long)]
    k: Option<String>,
    /// valid or test.
    #[arg(long)]
    split: Option<String>,
    /// Also run the popularity and session-kNN baselines.
    #[arg(long, action = ArgAction::SetTrue)]
    baselines: Option<bool>,
    #[arg(long)]
    sknn_k: Option<usize>,
    /// Rank the full catalog without excluding history items.
    #[arg(long, action = ArgAction::SetTrue)]
    full_ranking: Option<bool>,
    /// Per-user JSONL dump path.
    #[arg(long)]
    per_user: Option<PathBuf>,
    /// Write the metric CSV here as well as stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_evaluate(mut args: EvaluateArgs) -> Result<()> {
    if let Some(path) = args.config.take() {
        let mut file: EvaluateArgs = read_config(&path)?;
        overlay!(
            args,
            file,
            [ckpt, data_dir, pairs, attributes, k, split, baselines, sknn_k, full_ranking, per_user, out]
        );
    }
    let data_dir = args.data_dir.ok_or_else(|| anyhow!("--data-dir is required"))?;
    let run_baselines = args.baselines.unwrap_or(false);
    if args.ckpt.is_none() && !run_baselines {
        bail!("nothing to do: pass --ckpt and/or --baselines");
    }
    let ks = parse_ks(args.k)?;
    let which = match args.split.as_deref().unwrap_or("test") {
        "test" => EvalSplit::Test,
        "valid" | "validation" => EvalSplit::Validation,
        other => bail!("unknown split `{other}` (expected valid or test)"),
    };
    let exclude_history = !args.full_ranking.unwrap_or(false);
    let (split, pairs, attributes) = load_data(&data_dir, args.pairs, args.attributes)?;

    let mut table = MetricTable::default();
    let mut per_user = Vec::new();
    if let Some(ckpt) = args.ckpt {
        let (params, artifacts) = load_model(&ckpt, &split, &pairs, &attributes)?;
        let (model_table, outcomes) = evaluation::evaluate_model(
            &params,
            &artifacts.model_config,
            &artifacts.graphs,
            &artifacts.global,
            &split,
            which,
            &ks,
            exclude_history,
        )?;
        table.extend(model_table);
        per_user = outcomes;
    }
    if run_baselines {
        table.extend(evaluation::popularity_baseline(
            &split,
            which,
            &ks,
            exclude_history,
        )?);
        table.extend(evaluation::sknn_baseline(
            &split,
            which,
            args.sknn_k.unwrap_or(50),
            &ks,
            exclude_history,
        )?);
    }
    let csv = table.to_csv();
    print!("{csv}");
    if let Some(out) = args.out {
        fs::write(&out, &csv)?;
    }
    if let Some(path) = args.per_user {
        fs::write(&path, per_user_jsonl(&per_user))?;
    }
    Ok(())
}

// ----------------------------------------------------------------- recommend

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RecommendArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    attributes: Option<String>,
    /// User id to recommend for.
    #[arg(long)]
    user: Option<String>,
    /// List length.
    #[arg(long)]
    top: Option<usize>,
}

fn run_recommend(mut args: RecommendArgs) -> Result<()> {
    if let Some(path) = args.config.take() {
        let mut file: RecommendArgs = read_config(&path)?;
        overlay!(args, file, [ckpt, data_dir, pairs, attributes, user, top]);
    }
    let ckpt = args.ckpt.ok_or_else(|| anyhow!("--ckpt is required"))?;
    let data_dir = args.data_dir.ok_or_else(|| anyhow!("--data-dir is required"))?;
    let user_id = args.user.ok_or_else(|| anyhow!("--user is required"))?;
    let top = args.top.unwrap_or(20);
    let (split, pairs, attributes) = load_data(&data_dir, args.pairs, args.attributes)?;
    let (params, artifacts) = load_model(&ckpt, &split, &pairs, &attributes)?;
    let train = &split.train;
    let user = train
        .user_idx(&user_id)
        .ok_or_else(|| anyhow!("user `{user_id}` is not in the training split"))?;

    // Full known history: train sequence plus the held-out items.
    let mut history: Vec<usize> = train
        .sequence(user)
        .iter()
        .map(|i| train.item_idx(&i.item).expect("catalog item"))
        .collect();
    for holdout in [&split.validation, &split.test] {
        if let Some(interaction) = holdout.get(&user_id) {
            if let Some(idx) = train.item_idx(&interaction.item) {
                history.push(idx);
            }
        }
    }

    let config = &artifacts.model_config;
    let state = finerec::model::forward(&artifacts.graphs, &artifacts.global, &params, config)?;
    let recent = finerec::model::recent_interest(&history, &state.fused_item, config.recent_window)?;
    let scores =
        finerec::model::score_all(state.fused_user.row(user), &recent, &state.fused_item);
    let excluded: std::collections::HashSet<usize> = history.iter().copied().collect();
    let ranked = evaluation::ranked_list(&scores, &excluded);

    // Opinion texts per (item, attribute) across all users, for explanations.
    let mut item_opinions: BTreeMap<(usize, usize), BTreeSet<String>> = BTreeMap::new();
    if !config.ablation.coarse_single_graph {
        for ((_, item, attribute), opinions) in pairs.iter_grouped() {
            if let Some(item_idx) = train.item_idx(item) {
                item_opinions
                    .entry((item_idx, *attribute))
                    .or_default()
                    .extend(opinions.iter().cloned());
            }
        }
    }

    println!("top {top} recommendations for {user_id}:");
    for (rank, &item) in ranked.iter().take(top).enumerate() {
        let mut explanation = Vec::new();
        for n in 0..attributes.len().min(config.num_attributes) {
            if let Some(opinions) = item_opinions.get(&(item, n)) {
                // Opinion closest to this user's attribute-level embedding.
                let conv_user = state.conv_rounds[n]
                    .last()
                    .expect("rounds present")
                    .user
                    .row(user);
                let best = opinions.iter().max_by(|a, b| {
                    let ca = cosine(conv_user, &encode_text::<Real>(a, config.dim));
                    let cb = cosine(conv_user, &encode_text::<Real>(b, config.dim));
                    ca.partial_cmp(&cb).unwrap_or(std::cmp::Ordering::Equal)
                });
                if let Some(opinion) = best {
                    explanation.push(format!("{}: {}", attributes.name(n), opinion));
                }
            }
        }
        let suffix = if explanation.is_empty() {
            String::new()
        } else {
            format!(" | {}", explanation.join("; "))
        };
        println!(
            "{:2}. {} score={:.4}{}",
            rank + 1,
            train.item_id(item),
            scores[item],
            suffix
        );
    }
    Ok(())
}

// --------------------------------------------------------------------- synth

#[derive(Args, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct SynthArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    items: Option<usize>,
    #[arg(long)]
    num_attributes: Option<usize>,
    #[arg(long)]
    opinions: Option<usize>,
    #[arg(long)]
    interactions: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    review_noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the ground-truth profiles.
    #[arg(long, action = ArgAction::SetTrue)]
    dump_truth: Option<bool>,
}

fn run_synth(mut args: SynthArgs) -> Result<()> {
    if let Some(path) = args.config.take() {
        let mut file: SynthArgs = read_config(&path)?;
        overlay!(
            args,
            file,
            [out_dir, users, items, num_attributes, opinions, interactions, noise, review_noise, seed, dump_truth]
        );
    }
    let out_dir = args.out_dir.ok_or_else(|| anyhow!("--out-dir is required"))?;
    let defaults = SynthConfig::default();
    let config = SynthConfig {
        num_users: args.users.unwrap_or(defaults.num_users),
        num_items: args.items.unwrap_or(defaults.num_items),
        num_attributes: args.num_attributes.unwrap_or(defaults.num_attributes),
        opinions_per_attribute: args.opinions.unwrap_or(defaults.opinions_per_attribute),
        interactions_per_user: args.interactions.unwrap_or(defaults.interactions_per_user),
        noise: args.noise.unwrap_or(defaults.noise),
        review_noise: args.review_noise.unwrap_or(defaults.review_noise),
        seed: args.seed.unwrap_or(defaults.seed),
    };
    let (corpus, pairs, truth) = synth::generate(&config)?;
    fs::create_dir_all(&out_dir)?;
    let attributes = truth.attribute_set();
    finerec::corpus::write_corpus(&corpus, &out_dir.join("corpus.jsonl"), CorpusFormat::Jsonl)?;
    pairs.save(&out_dir.join("pairs.jsonl"), &attributes)?;
    attributes.save(&out_dir.join("attributes.json"))?;
    truth.lexicon().save(&out_dir.join("lexicon.json"))?;
    if args.dump_truth.unwrap_or(false) {
        let mut text = serde_json::to_string_pretty(&truth)?;
        text.push('\n');
        fs::write(out_dir.join("truth.json"), text)?;
    }
    println!(
        "synth: {} users x {} items, {} interactions, {} planted pairs -> {}",
        config.num_users,
        config.num_items,
        corpus.interaction_count(),
        pairs.len(),
        out_dir.display()
    );
    Ok(())
}

// ------------------------------------------------------------------- helpers

/// Load the split plus pair file and attribute set, defaulting the paths to
/// the data directory layout that preprocess/synth write.
fn load_data(
    data_dir: &Path,
    pairs: Option<PathBuf>,
    attributes: Option<String>,
) -> Result<(SplitCorpus, PairStore, AttributeSet)> {
    let split = SplitCorpus::read_dir(data_dir)?;
    let attr_spec = attributes
        .unwrap_or_else(|| data_dir.join("attributes.json").display().to_string());
    let attributes = load_attribute_set(&attr_spec)?;
    let pair_path = pairs.unwrap_or_else(|| data_dir.join("pairs.jsonl"));
    let pairs = PairStore::load(&pair_path, &attributes)?;
    Ok((split, pairs, attributes))
}

/// Load a checkpoint and rebuild the graph artifacts it was trained with.
fn load_model(
    ckpt: &Path,
    split: &SplitCorpus,
    pairs: &PairStore,
    attributes: &AttributeSet,
) -> Result<(ModelParams<Real>, Artifacts<Real>)> {
    let (header, params) = load_checkpoint::<Real>(ckpt)?;
    if header.num_users != split.train.num_users() || header.num_items != split.train.num_items()
    {
        bail!(
            "checkpoint was trained on {} users / {} items but the data directory holds {} / {}",
            header.num_users,
            header.num_items,
            split.train.num_users(),
            split.train.num_items()
        );
    }
    if !header.config.ablation.coarse_single_graph
        && header.attributes != attributes.names()
    {
        bail!(
            "checkpoint attributes {:?} do not match the supplied attribute set {:?}",
            header.attributes,
            attributes.names()
        );
    }
    let artifacts = pipeline::build_artifacts::<Real>(
        split,
        pairs,
        attributes,
        &header.config,
        header.two_hop_cap,
    )?;
    Ok((params, artifacts))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Preprocess(args) => run_preprocess(args),
        Command::Extract(args) => run_extract(args),
        Command::BuildGraphs(args) => run_build_graphs(args),
        Command::Train(args) => run_train(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Recommend(args) => run_recommend(args),
        Command::Synth(args) => run_synth(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
