//! Pretrains a small policy briefly with supervision, then fine-tunes it on
//! unlabeled target shapes with REINFORCE for two reward-shaping exponents.

use std::collections::BTreeMap;

use csgkit::datagen::{generate_dataset, DatasetSpec, Split, SplitCounts};
use csgkit::exec::{render_program, Raster};
use csgkit::lang::{build_vocabulary, GrammarConfig, GridRange, Vocabulary};
use csgkit::metrics::shape_chamfer;
use csgkit::policy::{init_policy, ArchConfig, NeuralPolicy, PolicyNet};
use csgkit::search::greedy_decode;
use csgkit::training::{train_reinforce, train_supervised, Example, TrainConfig};

fn greedy_cd(net: &PolicyNet, vocab: &Vocabulary, grammar: &GrammarConfig, targets: &[Raster]) -> f64 {
    let policy = NeuralPolicy::new(net, vocab, grammar);
    let total: f64 = targets
        .iter()
        .map(|t| {
            let decoded = greedy_decode(&policy, t, grammar);
            render_program(&decoded.program, grammar)
                .ok()
                .and_then(|r| shape_chamfer(&r, t).ok())
                .map_or(t.diagonal(), |cd| cd.pixels)
        })
        .sum();
    total / targets.len() as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grammar = GrammarConfig {
        canvas: 16,
        locations: GridRange::new(4, 4, 12),
        radii: GridRange::new(2, 2, 4),
        ..GrammarConfig::default_2d()
    };
    let vocab = build_vocabulary(&grammar);
    let mut counts = BTreeMap::new();
    counts.insert(3, SplitCounts::new(300, 0, 100));
    let data = generate_dataset(&DatasetSpec::new(counts, 7, grammar.clone()))?;
    let train: Vec<Example> = data.split(Split::Train).filter_map(|r| Example::new(r.raster.clone(), &r.program, &vocab)).collect();
    let targets: Vec<Raster> = data.split(Split::Test).map(|r| r.raster.clone()).collect();

    let arch = ArchConfig {
        conv_channels: vec![8, 16],
        code_width: 64,
        embed_width: 16,
        hidden_width: 64,
        fc_width: 64,
        dropout: 0.0,
        ..ArchConfig::for_grammar(&grammar, 0)
    };
    let mut net = init_policy(&arch, &vocab, 1)?;
    let pre = TrainConfig { epochs: 20, lr: 0.003, seed: 1, ..TrainConfig::supervised() };
    train_supervised(&mut net, &train, &[], &pre, &vocab, &grammar, None, None)?;
    println!("pretrained: mean greedy CD {:.3} px on {} targets", greedy_cd(&net, &vocab, &grammar, &targets), targets.len());

    for gamma in [1.0, 20.0] {
        let mut tuned = net.clone();
        let cfg = TrainConfig { epochs: 300, lr: 0.01, gamma, seed: 1, ..TrainConfig::reinforce() };
        let stats = train_reinforce(&mut tuned, &targets, &cfg, &vocab, &grammar, None)?;
        let tail: f64 = stats.iter().rev().take(20).map(|s| s.mean_reward).sum::<f64>() / 20.0;
        println!(
            "gamma {gamma:>4}: mean shaped reward over last 20 updates {tail:.3}, greedy CD {:.3} px",
            greedy_cd(&tuned, &vocab, &grammar, &targets)
        );
    }
    Ok(())
}
