//! Scratch harness for tuning the planted-signal experiment.

use finerec::corpus::{drop_attributeless_reviews, five_core_filter, leave_one_out_split};
use finerec::evaluation::{self, EvalSplit};
use finerec::extraction::extract_with_lexicon;
use finerec::model::Ablation;
use finerec::pipeline::{self, PipelineConfig};
use finerec::synth::{self, SynthConfig};
use finerec::training::TrainHyper;
use finerec::Real;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(40);
    let patience: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(10);
    let review_noise: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.2);
    let dim: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(8);
    let lr: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.001);
    let epsilon: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(1e-8);
    let layers: usize = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(1);
    println!("epochs={epochs} patience={patience} review_noise={review_noise} d={dim} lr={lr} epsilon={epsilon} layers={layers}");

    for seed in [11u64, 12, 13] {
        let config = SynthConfig {
            num_users: 200,
            num_items: 300,
            num_attributes: 3,
            interactions_per_user: 15,
            noise: 0.2,
            review_noise,
            seed,
            ..SynthConfig::default()
        };
        let (corpus, _, truth) = synth::generate(&config).unwrap();
        let attributes = truth.attribute_set();
        let pairs = extract_with_lexicon(&attributes, &truth.lexicon(), &corpus).unwrap();
        let filtered = drop_attributeless_reviews(&corpus, &pairs);
        let split = leave_one_out_split(&five_core_filter(&filtered));

        let run = |ablation: Ablation| -> f64 {
            let mut pcfg = PipelineConfig {
                dim,
                two_hop_cap: 50,
                epsilon,
                conv_layers: layers,
                ablation,
                hyper: TrainHyper {
                    batch_size: 512,
                    max_epochs: epochs,
                    patience,
                    seed,
                    ..TrainHyper::default()
                },
                ..PipelineConfig::default()
            };
            pcfg.hyper.adam.lr = lr;
            let (artifacts, outcome) =
                pipeline::train_pipeline::<Real>(&split, &pairs, &attributes, &pcfg, None)
                    .unwrap();
            let (table, _) = evaluation::evaluate_model(
                &outcome.best_params,
                &artifacts.model_config,
                &artifacts.graphs,
                &artifacts.global,
                &split,
                EvalSplit::Test,
                &[20],
                true,
            )
            .unwrap();
            table.get("prec", 20).unwrap()
        };

        let start = std::time::Instant::now();
        let full = run(Ablation::default());
        let wo_diver = run(Ablation {
            no_diversity: true,
            ..Ablation::default()
        });
        let no_opinion = run(Ablation {
            no_opinion: true,
            ..Ablation::default()
        });
        let coarse = run(Ablation {
            coarse_single_graph: true,
            ..Ablation::default()
        });
        let popularity = evaluation::popularity_baseline(&split, EvalSplit::Test, &[20], true)
            .unwrap()
            .get("popularity_prec", 20)
            .unwrap();
        let sknn = evaluation::sknn_baseline(&split, EvalSplit::Test, 50, &[20], true)
            .unwrap()
            .get("sknn_prec", 20)
            .unwrap();
        println!(
            "seed {seed}: full={full:.4} wo_diver={wo_diver:.4} no_opinion={no_opinion:.4} coarse={coarse:.4} pop={popularity:.4} sknn={sknn:.4}  ({:.1}s)",
            start.elapsed().as_secs_f64()
        );
    }
}
