//! Program-proposal policies: a trainable encoder-decoder over instruction
//! tokens (optionally conditioned on the execution stack) and a
//! nearest-neighbor retrieval baseline.

mod net;
mod ops;
mod retrieval;

pub use net::{
    init_policy, ArchConfig, DecoderState, Observation, PolicyNet, SeqBatch, SeqExample, SeqOutput,
};
pub use retrieval::{nn_build_index, nn_retrieve, Retrieval, RetrievalIndex};

use rand::Rng;
use thiserror::Error;

use crate::exec::{ExecStack, Raster};
use crate::lang::{GrammarConfig, Vocabulary};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid architecture: {0}")]
    Arch(String),
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("checkpoint vocabulary {found:016x} does not match {expected:016x}")]
    VocabMismatch { expected: u64, found: u64 },
    #[error("malformed checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("retrieval index is empty")]
    EmptyIndex,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Categorical distribution over token ids, stored as log-probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenDistribution {
    log_probs: Vec<f64>,
}

impl TokenDistribution {
    pub fn from_log_probs(log_probs: Vec<f64>) -> Self {
        TokenDistribution { log_probs }
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(w: &[f64]) -> Self {
        let total: f64 = w.iter().sum();
        TokenDistribution { log_probs: w.iter().map(|x| (x / total).ln()).collect() }
    }

    pub fn uniform(n: usize) -> Self {
        TokenDistribution { log_probs: vec![-(n as f64).ln(); n] }
    }

    pub fn one_hot(n: usize, id: usize) -> Self {
        let mut log_probs = vec![f64::NEG_INFINITY; n];
        log_probs[id] = 0.0;
        TokenDistribution { log_probs }
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_prob(&self, id: usize) -> f64 {
        self.log_probs[id]
    }

    pub fn prob(&self, id: usize) -> f64 {
        self.log_probs[id].exp()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    /// Most likely id, lowest id on ties.
    pub fn argmax(&self) -> usize {
        net::argmax(&self.log_probs)
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, l) in self.log_probs.iter().enumerate() {
            let p = l.exp();
            if p > 0.0 {
                last = i;
                acc += p;
                if u < acc {
                    return i;
                }
            }
        }
        last
    }
}

/// A step-wise proposal distribution over instruction tokens, conditioned on
/// the target and (optionally) on the execution stack of the emitted prefix.
pub trait Policy {
    type State: Clone;

    fn vocab(&self) -> &Vocabulary;

    /// Whether [`Policy::next`] reads the execution stack. Decoders skip
    /// rendering when it does not.
    fn uses_stack(&self) -> bool {
        false
    }

    fn start(&self, target: &Raster) -> Self::State;

    /// Distribution for the next token given the previous one (`None` at the
    /// first step) and the stack after executing the prefix.
    fn next(
        &self,
        target: &Raster,
        state: &Self::State,
        stack: &ExecStack,
        prev: Option<usize>,
    ) -> (TokenDistribution, Self::State);
}

/// One inference step of the network on an explicit observation.
pub fn policy_step(
    net: &PolicyNet,
    obs: &Observation,
    state: &DecoderState,
    prev: Option<usize>,
) -> (TokenDistribution, DecoderState) {
    let code = net.encode_image(&net.encode_input(obs));
    let (lp, next) = net.decode_step(&code, state, prev);
    (TokenDistribution::from_log_probs(lp), next)
}

/// Decoder state plus the cached target code when the stack is not observed.
#[derive(Clone, Debug)]
pub struct NeuralState {
    pub decoder: DecoderState,
    code: Option<Vec<f64>>,
}

/// Adapter exposing a [`PolicyNet`] through the [`Policy`] trait.
#[derive(Clone, Copy, Debug)]
pub struct NeuralPolicy<'a> {
    pub net: &'a PolicyNet,
    pub vocab: &'a Vocabulary,
    pub config: &'a GrammarConfig,
}

impl<'a> NeuralPolicy<'a> {
    pub fn new(net: &'a PolicyNet, vocab: &'a Vocabulary, config: &'a GrammarConfig) -> Self {
        NeuralPolicy { net, vocab, config }
    }
}

impl Policy for NeuralPolicy<'_> {
    type State = NeuralState;

    fn vocab(&self) -> &Vocabulary {
        self.vocab
    }

    fn uses_stack(&self) -> bool {
        self.net.arch().stack_k > 0
    }

    fn start(&self, target: &Raster) -> NeuralState {
        let code = (!self.uses_stack())
            .then(|| self.net.encode_image(&self.net.observe(target, &ExecStack::new(), self.config)));
        NeuralState { decoder: self.net.initial_state(), code }
    }

    fn next(
        &self,
        target: &Raster,
        state: &NeuralState,
        stack: &ExecStack,
        prev: Option<usize>,
    ) -> (TokenDistribution, NeuralState) {
        let fresh;
        let code = match &state.code {
            Some(c) => c,
            None => {
                fresh = self.net.encode_image(&self.net.observe(target, stack, self.config));
                &fresh
            }
        };
        let (lp, decoder) = self.net.decode_step(code, &state.decoder, prev);
        (TokenDistribution::from_log_probs(lp), NeuralState { decoder, code: state.code.clone() })
    }
}

/// Mean per-token negative log-likelihood of `(target, tokens)` pairs under
/// teacher forcing, with its gradient. Dropout is disabled.
pub fn supervised_grads(
    net: &PolicyNet,
    examples: &[(&Raster, &[usize])],
    vocab: &Vocabulary,
    config: &GrammarConfig,
) -> (f64, Vec<f64>) {
    let total: usize = examples.iter().map(|(_, t)| t.len()).sum();
    let w = 1.0 / total.max(1) as f64;
    let weights: Vec<Vec<f64>> = examples.iter().map(|(_, t)| vec![w; t.len()]).collect();
    let seqs: Vec<SeqExample> = examples
        .iter()
        .zip(&weights)
        .map(|(&(target, tokens), weights)| SeqExample { target, tokens, weights })
        .collect();
    let batch = net.make_batch(&seqs, vocab, config);
    let out = net.run_batch(&batch, None, true);
    (out.loss, out.grad.unwrap())
}
