//! Score-function (REINFORCE) gradient estimation with a running-average
//! baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::{render_program, Raster};
use crate::lang::GrammarConfig;
use crate::metrics::{reward_for_render, ChamferTarget};
use crate::policy::{NeuralPolicy, SeqExample};
use crate::search::sample_rollouts;

/// Scalar running average of past mean rewards.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineState {
    pub value: f64,
    pub decay: f64,
}

impl BaselineState {
    pub fn new(decay: f64) -> Self {
        BaselineState { value: 0.0, decay }
    }

    /// `b <- decay * b + (1 - decay) * mean_reward`.
    pub fn update(&mut self, mean_reward: f64) {
        self.value = self.decay * self.value + (1.0 - self.decay) * mean_reward;
    }
}

/// A stochastic policy that can sample episodes and differentiate their
/// log-likelihood.
pub trait ScorePolicy {
    type Target;

    fn num_params(&self) -> usize;

    fn sample_episodes(&self, target: &Self::Target, m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>>;

    /// Adds `sum_i w_i * grad log pi(episode_i | target_i)` into `grad`.
    fn accumulate_log_prob_grad(&self, episodes: &[(&Self::Target, &[usize], f64)], grad: &mut [f64]);
}

/// One estimate of the expected-reward gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct ReinforceEstimate {
    /// Ascent direction `(1/NM) sum (R - b) grad log pi`.
    pub grad: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl ReinforceEstimate {
    pub fn mean_reward(&self) -> f64 {
        self.rewards.iter().sum::<f64>() / self.rewards.len().max(1) as f64
    }
}

/// Samples `m` episodes per target and weights each episode's
/// log-likelihood gradient by its reward minus `baseline`. `reward` receives
/// the target's index and the episode.
pub fn reinforce_estimate<P, F>(
    policy: &P,
    targets: &[P::Target],
    m: usize,
    baseline: f64,
    mut reward: F,
    rng: &mut ChaCha8Rng,
) -> ReinforceEstimate
where
    P: ScorePolicy,
    F: FnMut(usize, &[usize]) -> f64,
{
    let scale = 1.0 / (targets.len() * m).max(1) as f64;
    let mut episodes = Vec::with_capacity(targets.len() * m);
    let mut rewards = Vec::with_capacity(targets.len() * m);
    for (i, t) in targets.iter().enumerate() {
        for ep in policy.sample_episodes(t, m, rng) {
            let r = reward(i, &ep);
            rewards.push(r);
            episodes.push((t, ep, (r - baseline) * scale));
        }
    }
    let mut grad = vec![0.0; policy.num_params()];
    let refs: Vec<(&P::Target, &[usize], f64)> =
        episodes.iter().filter(|e| e.2 != 0.0).map(|(t, ep, w)| (*t, ep.as_slice(), *w)).collect();
    if !refs.is_empty() {
        policy.accumulate_log_prob_grad(&refs, &mut grad);
    }
    ReinforceEstimate { grad, rewards }
}

impl ScorePolicy for NeuralPolicy<'_> {
    type Target = Raster;

    fn num_params(&self) -> usize {
        self.net.num_params()
    }

    fn sample_episodes(&self, target: &Raster, m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
        sample_rollouts(self, target, m, self.config, rng).into_iter().map(|r| r.tokens).collect()
    }

    fn accumulate_log_prob_grad(&self, episodes: &[(&Raster, &[usize], f64)], grad: &mut [f64]) {
        let weights: Vec<Vec<f64>> = episodes.iter().map(|(_, ep, w)| vec![*w; ep.len()]).collect();
        let seqs: Vec<SeqExample> = episodes
            .iter()
            .zip(&weights)
            .map(|(&(target, tokens, _), weights)| SeqExample { target, tokens, weights })
            .collect();
        let batch = self.net.make_batch(&seqs, self.vocab, self.config);
        // the batch loss is -sum w log pi, so its gradient has the opposite sign
        let g = self.net.run_batch(&batch, None, true).grad.unwrap();
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a -= b);
    }
}

/// Shaped reward of a sampled token sequence: zero unless it ends in stop
/// and executes to a nonempty shape.
pub fn episode_reward(policy: &NeuralPolicy, target: &ChamferTarget, tokens: &[usize], gamma: f64, config: &GrammarConfig) -> f64 {
    if tokens.last() != Some(&policy.vocab.stop_id()) {
        return 0.0;
    }
    let Ok(program) = policy.vocab.decode(tokens) else { return 0.0 };
    match render_program(&program, config) {
        Ok(out) => reward_for_render(&out, target, gamma),
        Err(_) => 0.0,
    }
}

/// Independent per-step softmax policy over a small token set with a fixed
/// episode length; every episode is enumerable.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy {
    pub tokens: usize,
    pub steps: usize,
    /// `steps x tokens` logits.
    pub logits: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(tokens: usize, steps: usize, logits: Vec<f64>) -> Self {
        assert_eq!(logits.len(), tokens * steps);
        TabularPolicy { tokens, steps, logits }
    }

    pub fn probs(&self, step: usize) -> Vec<f64> {
        let row = &self.logits[step * self.tokens..(step + 1) * self.tokens];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    pub fn prob_of(&self, episode: &[usize]) -> f64 {
        episode.iter().enumerate().map(|(t, &y)| self.probs(t)[y]).product()
    }

    /// Every episode in lexicographic order.
    pub fn episodes(&self) -> Vec<Vec<usize>> {
        let n = self.tokens.pow(self.steps as u32);
        (0..n)
            .map(|mut i| {
                let mut ep = vec![0; self.steps];
                for t in (0..self.steps).rev() {
                    ep[t] = i % self.tokens;
                    i /= self.tokens;
                }
                ep
            })
            .collect()
    }

    /// `grad sum_y pi(y) R(y)` by enumeration.
    pub fn exact_gradient(&self, reward: impl Fn(&[usize]) -> f64) -> Vec<f64> {
        let mut grad = vec![0.0; self.logits.len()];
        for ep in self.episodes() {
            let w = self.prob_of(&ep) * reward(&ep);
            self.add_score(&ep, w, &mut grad);
        }
        grad
    }

    fn add_score(&self, ep: &[usize], w: f64, grad: &mut [f64]) {
        for (t, &y) in ep.iter().enumerate() {
            let p = self.probs(t);
            for k in 0..self.tokens {
                grad[t * self.tokens + k] += w * ((k == y) as u8 as f64 - p[k]);
            }
        }
    }
}

impl ScorePolicy for TabularPolicy {
    type Target = ();

    fn num_params(&self) -> usize {
        self.logits.len()
    }

    fn sample_episodes(&self, _: &(), m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
        let tables: Vec<Vec<f64>> = (0..self.steps).map(|t| self.probs(t)).collect();
        (0..m)
            .map(|_| {
                tables
                    .iter()
                    .map(|p| {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        p.iter().position(|&q| {
                            acc += q;
                            u < acc
                        })
                        .unwrap_or(self.tokens - 1)
                    })
                    .collect()
            })
            .collect()
    }

    fn accumulate_log_prob_grad(&self, episodes: &[(&(), &[usize], f64)], grad: &mut [f64]) {
        for (_, ep, w) in episodes {
            self.add_score(ep, *w, grad);
        }
    }
}

/// Mean and standard error per coordinate of `trials` independent
/// single-episode estimates, optionally with a running baseline.
pub fn estimator_statistics(
    policy: &TabularPolicy,
    reward: impl Fn(&[usize]) -> f64,
    trials: usize,
    baseline_decay: Option<f64>,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = policy.num_params();
    let (mut sum, mut sum_sq) = (vec![0.0; n], vec![0.0; n]);
    let mut baseline = BaselineState::new(baseline_decay.unwrap_or(0.0));
    for _ in 0..trials {
        let b = if baseline_decay.is_some() { baseline.value } else { 0.0 };
        let est = reinforce_estimate(policy, &[()], 1, b, |_, ep| reward(ep), &mut rng);
        baseline.update(est.mean_reward());
        for i in 0..n {
            sum[i] += est.grad[i];
            sum_sq[i] += est.grad[i] * est.grad[i];
        }
    }
    let t = trials as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / t).collect();
    let se = (0..n).map(|i| ((sum_sq[i] / t - mean[i] * mean[i]).max(0.0) / t).sqrt()).collect();
    (mean, se)
}
