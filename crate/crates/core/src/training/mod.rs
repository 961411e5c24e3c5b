//! Supervised (teacher-forced cross-entropy) and policy-gradient training
//! of [`PolicyNet`].

mod optim;
mod reinforce;

pub use optim::{clip_global_norm, Optimizer};
pub use reinforce::{
    episode_reward, estimator_statistics, reinforce_estimate, BaselineState, ReinforceEstimate, ScorePolicy,
    TabularPolicy,
};

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exec::Raster;
use crate::lang::{GrammarConfig, Program, Vocabulary};
use crate::metrics::ChamferTarget;
use crate::policy::{NeuralPolicy, PolicyError, PolicyNet, SeqExample};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("program {0} is not in the vocabulary")]
    Unencodable(usize),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    Supervised,
    Reinforce,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Hyperparameters for both training modes.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Passes over the data (supervised) or parameter updates (reinforce).
    pub epochs: usize,
    /// Rollouts per target.
    pub rollouts: usize,
    pub gamma: f64,
    pub baseline_decay: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn supervised() -> Self {
        TrainConfig {
            mode: TrainMode::Supervised,
            optimizer: OptimizerKind::Adam,
            lr: 0.001,
            momentum: 0.9,
            batch_size: 32,
            epochs: 20,
            rollouts: 5,
            gamma: 20.0,
            baseline_decay: 0.9,
            clip_norm: 5.0,
            seed: 0,
        }
    }

    pub fn reinforce() -> Self {
        TrainConfig {
            mode: TrainMode::Reinforce,
            optimizer: OptimizerKind::Sgd,
            lr: 0.01,
            batch_size: 8,
            epochs: 200,
            ..Self::supervised()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if self.rollouts == 0 || self.batch_size == 0 {
            return bad("rollouts and batch_size must be at least 1");
        }
        if !(self.gamma > 0.0) {
            return bad("gamma must be positive");
        }
        if !(0.0..=1.0).contains(&self.baseline_decay) {
            return bad("baseline_decay must be in [0, 1]");
        }
        Ok(())
    }

    pub fn optimizer_for(&self, n: usize) -> Optimizer {
        match self.optimizer {
            OptimizerKind::Adam => Optimizer::adam(self.lr, n),
            OptimizerKind::Sgd => Optimizer::sgd(self.lr, self.momentum, n),
        }
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mode = match self.mode {
            TrainMode::Supervised => "supervised",
            TrainMode::Reinforce => "reinforce",
        };
        let opt = match self.optimizer {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        };
        let _ = writeln!(s, "mode = {mode}");
        let _ = writeln!(s, "optimizer = {opt}");
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "momentum = {}", self.momentum);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "rollouts = {}", self.rollouts);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "baseline_decay = {}", self.baseline_decay);
        let _ = writeln!(s, "clip_norm = {}", self.clip_norm);
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }

    /// Parses `key = value` lines. A `mode` key selects the defaults that the
    /// remaining keys override.
    pub fn from_kv(text: &str) -> Result<Self, TrainError> {
        let pairs: Vec<(String, String)> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| TrainError::Config(format!("expected `key = value`, got `{l}`")))
            })
            .collect::<Result<_, _>>()?;
        let mut cfg = match pairs.iter().find(|(k, _)| k == "mode").map(|(_, v)| v.as_str()) {
            Some("reinforce") => Self::reinforce(),
            Some("supervised") | None => Self::supervised(),
            Some(other) => return Err(TrainError::Config(format!("unknown mode `{other}`"))),
        };
        for (k, v) in &pairs {
            let num = |what: &str| TrainError::Config(format!("`{k}` expects {what}, got `{v}`"));
            let f = || v.parse::<f64>().map_err(|_| num("a number"));
            let u = || v.parse::<usize>().map_err(|_| num("an integer"));
            match k.as_str() {
                "mode" => {}
                "optimizer" => {
                    cfg.optimizer = match v.as_str() {
                        "adam" => OptimizerKind::Adam,
                        "sgd" => OptimizerKind::Sgd,
                        _ => return Err(num("adam or sgd")),
                    }
                }
                "lr" => cfg.lr = f()?,
                "momentum" => cfg.momentum = f()?,
                "batch_size" => cfg.batch_size = u()?,
                "epochs" => cfg.epochs = u()?,
                "rollouts" => cfg.rollouts = u()?,
                "gamma" => cfg.gamma = f()?,
                "baseline_decay" => cfg.baseline_decay = f()?,
                "clip_norm" => cfg.clip_norm = f()?,
                "seed" => cfg.seed = v.parse().map_err(|_| num("an integer"))?,
                _ => return Err(TrainError::Config(format!("unknown key `{k}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A target shape with the token ids of its program (ending in stop).
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub target: Raster,
    pub tokens: Vec<usize>,
}

impl Example {
    pub fn new(target: Raster, program: &Program, vocab: &Vocabulary) -> Option<Self> {
        vocab.encode(&program.with_stop()).ok().map(|tokens| Example { target, tokens })
    }
}

/// Per-epoch supervised statistics. Row 0 is measured before any update.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupervisedOutcome {
    pub curve: Vec<EpochStats>,
    pub best_epoch: usize,
    /// Parameters at the epoch with the lowest validation loss.
    pub best_params: Option<Vec<f64>>,
}

fn batch_of<'a>(data: &'a [Example], idx: &[usize], weights: &'a [Vec<f64>]) -> Vec<SeqExample<'a>> {
    idx.iter()
        .zip(weights)
        .map(|(&i, w)| SeqExample { target: &data[i].target, tokens: &data[i].tokens, weights: w })
        .collect()
}

/// Mean per-token loss and token accuracy with dropout disabled.
pub fn evaluate_tokens(
    net: &PolicyNet,
    data: &[Example],
    vocab: &Vocabulary,
    config: &GrammarConfig,
    batch_size: usize,
) -> (f64, f64) {
    let (mut loss, mut correct, mut counted) = (0.0, 0, 0);
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let weights: Vec<Vec<f64>> = chunk.iter().map(|&i| vec![1.0; data[i].tokens.len()]).collect();
        let batch = net.make_batch(&batch_of(data, chunk, &weights), vocab, config);
        let out = net.run_batch(&batch, None, false);
        loss += out.loss;
        correct += out.correct;
        counted += out.counted;
    }
    let n = counted.max(1) as f64;
    (loss / n, correct as f64 / n)
}

/// Minimizes mean per-token negative log-likelihood with teacher forcing.
/// Parameters are left at the final epoch; the best-validation parameters are
/// returned and, if `checkpoint` is given, saved there. One CSV row per epoch
/// goes to `log`.
#[allow(clippy::too_many_arguments)]
pub fn train_supervised(
    net: &mut PolicyNet,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
    vocab: &Vocabulary,
    config: &GrammarConfig,
    mut log: Option<&mut dyn Write>,
    checkpoint: Option<&Path>,
) -> Result<SupervisedOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = cfg.optimizer_for(net.num_params());
    let eval_bs = cfg.batch_size.max(32);
    let mut curve = Vec::with_capacity(cfg.epochs + 1);
    let (l0, a0) = evaluate_tokens(net, train, vocab, config, eval_bs);
    let v0 = (!val.is_empty()).then(|| evaluate_tokens(net, val, vocab, config, eval_bs));
    curve.push(EpochStats { epoch: 0, train_loss: l0, train_acc: a0, val_loss: v0.map(|v| v.0), val_acc: v0.map(|v| v.1), lr: opt.lr() });
    if let Some(w) = log.as_deref_mut() {
        writeln!(w, "epoch,train_loss,train_acc,val_loss,val_acc,lr")?;
        write_epoch(w, &curve[0])?;
    }
    let mut best = (0, v0.map(|v| v.0).unwrap_or(f64::INFINITY), None);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct, mut counted) = (0.0, 0, 0);
        for chunk in order.chunks(cfg.batch_size) {
            let tokens: usize = chunk.iter().map(|&i| train[i].tokens.len()).sum();
            let w = 1.0 / tokens as f64;
            let weights: Vec<Vec<f64>> = chunk.iter().map(|&i| vec![w; train[i].tokens.len()]).collect();
            let batch = net.make_batch(&batch_of(train, chunk, &weights), vocab, config);
            let out = net.run_batch(&batch, Some(&mut rng), true);
            let mut grad = out.grad.unwrap();
            if cfg.clip_norm > 0.0 {
                clip_global_norm(&mut grad, cfg.clip_norm);
            }
            opt.step(net.params_mut(), &grad);
            loss_sum += out.loss * tokens as f64;
            correct += out.correct;
            counted += out.counted;
        }
        let v = (!val.is_empty()).then(|| evaluate_tokens(net, val, vocab, config, eval_bs));
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / counted.max(1) as f64,
            train_acc: correct as f64 / counted.max(1) as f64,
            val_loss: v.map(|v| v.0),
            val_acc: v.map(|v| v.1),
            lr: opt.lr(),
        };
        if let Some(w) = log.as_deref_mut() {
            write_epoch(w, &stats)?;
        }
        if let Some((vl, _)) = v {
            if vl < best.1 {
                best = (epoch, vl, Some(net.params().to_vec()));
                if let Some(path) = checkpoint {
                    net.save(&mut std::io::BufWriter::new(std::fs::File::create(path)?))?;
                }
            }
        }
        curve.push(stats);
    }
    if val.is_empty() {
        if let Some(path) = checkpoint {
            net.save(&mut std::io::BufWriter::new(std::fs::File::create(path)?))?;
        }
    }
    Ok(SupervisedOutcome { curve, best_epoch: best.0, best_params: best.2 })
}

fn write_epoch(w: &mut dyn Write, s: &EpochStats) -> std::io::Result<()> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    writeln!(w, "{},{:.6},{:.6},{},{},{}", s.epoch, s.train_loss, s.train_acc, opt(s.val_loss), opt(s.val_acc), s.lr)
}

/// One policy-gradient estimate on a batch of targets.
#[derive(Clone, Debug, PartialEq)]
pub struct ReinforceStep {
    /// Ascent direction for expected reward.
    pub grad: Vec<f64>,
    pub mean_reward: f64,
    /// Baseline after folding in this batch's mean reward.
    pub baseline: BaselineState,
}

/// Samples `cfg.rollouts` unmasked episodes per target, scores them with
/// the shaped reward, and forms the baseline-corrected gradient estimate.
pub fn reinforce_step(
    policy: &NeuralPolicy,
    targets: &[ChamferTarget],
    cfg: &TrainConfig,
    baseline: BaselineState,
    rng: &mut ChaCha8Rng,
) -> ReinforceStep {
    let rasters: Vec<Raster> = targets.iter().map(|t| t.raster().clone()).collect();
    let est = reinforce_estimate(
        policy,
        &rasters,
        cfg.rollouts,
        baseline.value,
        |i, ep| episode_reward(policy, &targets[i], ep, cfg.gamma, policy.config),
        rng,
    );
    let mean_reward = est.mean_reward();
    let mut next = baseline;
    next.update(mean_reward);
    ReinforceStep { grad: est.grad, mean_reward, baseline: next }
}

/// Per-update statistics of a policy-gradient run.
#[derive(Clone, Debug, PartialEq)]
pub struct RlStats {
    pub step: usize,
    pub mean_reward: f64,
    pub baseline: f64,
    pub lr: f64,
}

/// Fine-tunes on unlabeled targets for `cfg.epochs` updates of
/// `cfg.batch_size` targets each, cycling through a shuffled order.
pub fn train_reinforce(
    net: &mut PolicyNet,
    targets: &[Raster],
    cfg: &TrainConfig,
    vocab: &Vocabulary,
    config: &GrammarConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<Vec<RlStats>, TrainError> {
    cfg.validate()?;
    if targets.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let cached: Vec<ChamferTarget> = targets.iter().map(ChamferTarget::new).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = cfg.optimizer_for(net.num_params());
    let mut baseline = BaselineState::new(cfg.baseline_decay);
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut stats = Vec::with_capacity(cfg.epochs);
    if let Some(w) = log.as_deref_mut() {
        writeln!(w, "step,mean_reward,baseline,lr")?;
    }
    for step in 1..=cfg.epochs {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size.min(targets.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(cached[order[cursor]].clone());
            cursor += 1;
        }
        let out = {
            let policy = NeuralPolicy::new(net, vocab, config);
            reinforce_step(&policy, &batch, cfg, baseline, &mut rng)
        };
        let mut descent: Vec<f64> = out.grad.iter().map(|g| -g).collect();
        if cfg.clip_norm > 0.0 {
            clip_global_norm(&mut descent, cfg.clip_norm);
        }
        opt.step(net.params_mut(), &descent);
        baseline = out.baseline;
        let row = RlStats { step, mean_reward: out.mean_reward, baseline: baseline.value, lr: opt.lr() };
        if let Some(w) = log.as_deref_mut() {
            writeln!(w, "{},{:.6},{:.6},{}", row.step, row.mean_reward, row.baseline, row.lr)?;
        }
        stats.push(row);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::render_program;
    use crate::lang::{build_vocabulary, parse_program, GridRange};
    use crate::policy::{init_policy, supervised_grads, ArchConfig};
    use crate::search::greedy_decode;
    use rand::Rng;

    fn small() -> (GrammarConfig, Vocabulary) {
        let mut cfg = GrammarConfig::default_2d();
        cfg.canvas = 16;
        cfg.locations = GridRange::new(4, 4, 12);
        cfg.radii = GridRange::new(2, 2, 4);
        let v = build_vocabulary(&cfg);
        (cfg, v)
    }

    fn arch(cfg: &GrammarConfig, k: usize) -> ArchConfig {
        ArchConfig {
            conv_channels: vec![4, 8],
            code_width: 32,
            embed_width: 8,
            hidden_width: 32,
            fc_width: 32,
            ..ArchConfig::for_grammar(cfg, k)
        }
    }

    fn example(text: &str, cfg: &GrammarConfig, vocab: &Vocabulary) -> Example {
        let p = parse_program(text, cfg).unwrap();
        Example::new(render_program(&p, cfg).unwrap(), &p, vocab).unwrap()
    }

    #[test]
    fn config_round_trip() {
        let mut c = TrainConfig::reinforce();
        c.gamma = 5.0;
        c.seed = 42;
        assert_eq!(TrainConfig::from_kv(&c.to_kv()).unwrap(), c);
        assert!(TrainConfig::from_kv("lr = 0").is_err());
        assert!(TrainConfig::from_kv("bogus = 1").is_err());
        assert_eq!(TrainConfig::from_kv("").unwrap(), TrainConfig::supervised());
    }

    #[test]
    fn memorizes_one_sample_and_is_deterministic() {
        let (cfg, vocab) = small();
        let ex = vec![example("circle(8,8,4) square(4,8,2) subtract", &cfg, &vocab)];
        let tc = TrainConfig { epochs: 300, lr: 0.01, ..TrainConfig::supervised() };
        let run = || {
            let mut net = init_policy(&arch(&cfg, 0), &vocab, 1).unwrap();
            let out = train_supervised(&mut net, &ex, &ex, &tc, &vocab, &cfg, None, None).unwrap();
            (net, out)
        };
        let (net, out) = run();
        assert!((out.curve[0].train_loss - (vocab.len() as f64).ln()).abs() < 0.05);
        let (final_loss, acc) = evaluate_tokens(&net, &ex, &vocab, &cfg, 8);
        assert!(final_loss < 0.01, "loss {final_loss}");
        assert_eq!(acc, 1.0);
        let g = greedy_decode(&NeuralPolicy::new(&net, &vocab, &cfg), &ex[0].target, &cfg);
        assert_eq!(g.tokens, ex[0].tokens);
        let (_, out2) = run();
        assert_eq!(out.curve, out2.curve);
    }

    #[test]
    fn stack_policy_memorizes_too() {
        let (cfg, vocab) = small();
        let ex = vec![example("circle(8,8,4) square(4,8,2) circle(12,8,2) union subtract", &cfg, &vocab)];
        let tc = TrainConfig { epochs: 150, lr: 0.01, ..TrainConfig::supervised() };
        let mut net = init_policy(&arch(&cfg, 2), &vocab, 1).unwrap();
        train_supervised(&mut net, &ex, &[], &tc, &vocab, &cfg, None, None).unwrap();
        let g = greedy_decode(&NeuralPolicy::new(&net, &vocab, &cfg), &ex[0].target, &cfg);
        assert_eq!(g.tokens, ex[0].tokens);
    }

    #[test]
    fn supervised_gradient_check() {
        let (cfg, vocab) = small();
        let mut net = init_policy(&arch(&cfg, 1), &vocab, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        net.params_mut().iter_mut().for_each(|p| *p += rng.random_range(-0.1..0.1));
        let ex = example("triangle(8,8,4) circle(4,4,2) union", &cfg, &vocab);
        let batch = [(&ex.target, ex.tokens.as_slice())];
        let (_, g) = supervised_grads(&net, &batch, &vocab, &cfg);
        for _ in 0..50 {
            let i = rng.random_range(0..net.num_params());
            let orig = net.params()[i];
            net.params_mut()[i] = orig + 1e-4;
            let (a, _) = supervised_grads(&net, &batch, &vocab, &cfg);
            net.params_mut()[i] = orig - 1e-4;
            let (b, _) = supervised_grads(&net, &batch, &vocab, &cfg);
            net.params_mut()[i] = orig;
            let fd = (a - b) / 2e-4;
            assert!((fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-7) < 1e-4);
        }
    }

    #[test]
    fn neural_estimator_zero_when_rewards_equal_baseline() {
        let (cfg, vocab) = small();
        let net = init_policy(&arch(&cfg, 0), &vocab, 0).unwrap();
        let pol = NeuralPolicy::new(&net, &vocab, &cfg);
        let t = example("circle(8,8,4)", &cfg, &vocab).target;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let est = reinforce_estimate(&pol, &[t], 3, 0.5, |_, _| 0.5, &mut rng);
        assert!(est.grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn reinforce_runs_and_logs() {
        let (cfg, vocab) = small();
        let mut net = init_policy(&arch(&cfg, 0), &vocab, 0).unwrap();
        let targets = vec![example("circle(8,8,4)", &cfg, &vocab).target];
        let tc = TrainConfig { epochs: 3, batch_size: 2, rollouts: 2, ..TrainConfig::reinforce() };
        let mut log = Vec::new();
        let stats = train_reinforce(&mut net, &targets, &tc, &vocab, &cfg, Some(&mut log)).unwrap();
        assert_eq!(stats.len(), 3);
        assert!(stats.iter().all(|s| (0.0..=1.0).contains(&s.baseline)));
        assert_eq!(String::from_utf8(log).unwrap().lines().count(), 4);
    }
}
