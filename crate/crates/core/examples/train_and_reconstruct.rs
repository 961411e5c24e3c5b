//! Trains a small encoder-decoder policy with teacher forcing on a 16x16
//! grammar, then reconstructs held-out shapes with beam search, best-of-beam
//! selection and parameter refinement.
//!
//! ```text
//! cargo run --release --example train_and_reconstruct -- [stack_k] [epochs]
//! ```

use std::collections::BTreeMap;

use csgkit::datagen::{generate_dataset, DatasetSpec, Split, SplitCounts};
use csgkit::eval::eval_reconstruction;
use csgkit::exec::Raster;
use csgkit::lang::{build_vocabulary, GrammarConfig, GridRange};
use csgkit::policy::{init_policy, ArchConfig, NeuralPolicy, PolicyNet};
use csgkit::training::{train_supervised, Example, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let stack_k: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let epochs: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(25);

    let grammar = GrammarConfig {
        canvas: 16,
        locations: GridRange::new(4, 4, 12),
        radii: GridRange::new(2, 2, 4),
        ..GrammarConfig::default_2d()
    };
    let vocab = build_vocabulary(&grammar);
    let mut counts = BTreeMap::new();
    counts.insert(3, SplitCounts::new(400, 50, 50));
    counts.insert(5, SplitCounts::new(400, 50, 50));
    let data = generate_dataset(&DatasetSpec::new(counts, 3, grammar.clone()))?;
    let examples = |s: Split| -> Vec<Example> {
        data.split(s).filter_map(|r| Example::new(r.raster.clone(), &r.program, &vocab)).collect()
    };
    let (train, val) = (examples(Split::Train), examples(Split::Val));

    let arch = ArchConfig {
        conv_channels: vec![8, 16],
        code_width: 64,
        embed_width: 16,
        hidden_width: 64,
        fc_width: 64,
        dropout: 0.0,
        ..ArchConfig::for_grammar(&grammar, stack_k)
    };
    let mut net = init_policy(&arch, &vocab, 0)?;
    println!("vocabulary {} tokens, {} parameters, stack maps {stack_k}", vocab.len(), net.num_params());
    let cfg = TrainConfig { epochs, lr: 0.003, ..TrainConfig::supervised() };
    let mut log = std::io::stdout();
    let outcome = train_supervised(&mut net, &train, &val, &cfg, &vocab, &grammar, Some(&mut log), None)?;
    println!("lowest validation loss at epoch {}", outcome.best_epoch);

    let ckpt = std::env::temp_dir().join("csgkit-example-policy.ckpt");
    net.save(&mut std::io::BufWriter::new(std::fs::File::create(&ckpt)?))?;
    let net = PolicyNet::load(&mut std::io::BufReader::new(std::fs::File::open(&ckpt)?), &vocab)?;
    println!("checkpoint round trip through {}", ckpt.display());

    let targets: Vec<Raster> = data.split(Split::Test).map(|r| r.raster.clone()).collect();
    let policy = NeuralPolicy::new(&net, &vocab, &grammar);
    for (k, iters) in [(1, 0), (5, 0), (5, 5)] {
        let report = eval_reconstruction(&policy, &targets, k, iters, &grammar);
        println!("beam {k}, refine {iters}: mean CD {:.3} px, mean IoU {:.3}", report.mean_cd_pixels(), report.mean_iou());
    }
    let report = eval_reconstruction(&policy, &targets[..3], 5, 5, &grammar);
    for item in &report.items {
        let program = item.program.as_ref().map(|p| p.to_string()).unwrap_or_default();
        println!("  target {}: {program}  (CD {:.3} -> {:.3})", item.id, item.cd_unrefined, item.cd_pixels);
    }
    Ok(())
}
