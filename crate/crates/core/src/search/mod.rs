//! Decoding strategies over a [`Policy`]: greedy, beam search with an
//! optional grammar mask, Monte-Carlo rollouts, plus continuous refinement of
//! primitive parameters against a target.

mod refine;

pub use refine::{refine, refine_with_report, RefineReport};

use rand::Rng;

use crate::exec::{ExecStack, Raster};
use crate::lang::{GrammarConfig, Program, Vocabulary};
use crate::policy::{Policy, TokenDistribution};

/// A decoded token sequence with its total log-probability.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub tokens: Vec<usize>,
    pub program: Program,
    pub log_prob: f64,
}

impl Decoded {
    fn new(tokens: Vec<usize>, log_prob: f64, vocab: &Vocabulary) -> Self {
        let program = vocab.decode(&tokens).expect("decoded ids come from the vocabulary");
        Decoded { tokens, program, log_prob }
    }
}

/// Stack depth after a token under lenient execution (underflowing ops are
/// no-ops).
fn depth_after(vocab: &Vocabulary, depth: usize, tok: usize) -> usize {
    if vocab.is_primitive(tok) {
        depth + 1
    } else if vocab.is_op(tok) && depth >= 2 {
        depth - 1
    } else {
        depth
    }
}

/// Whether `tok` may follow a prefix of `len` tokens with stack `depth`.
/// At the length cap only stop is allowed; the grammar mask additionally
/// keeps every prefix completable to a valid program.
fn allowed(vocab: &Vocabulary, tok: usize, len: usize, depth: usize, max_length: usize, mask: bool) -> bool {
    let stop = tok == vocab.stop_id();
    if len >= max_length {
        return stop;
    }
    if !mask {
        return true;
    }
    if stop {
        depth == 1
    } else if vocab.is_op(tok) {
        depth >= 2
    } else {
        len + 1 + depth <= max_length
    }
}

fn advance<P: Policy>(policy: &P, stack: &mut ExecStack, tok: usize, config: &GrammarConfig) {
    if policy.uses_stack() {
        if let Some(ins) = policy.vocab().get(tok) {
            stack.step_lenient(ins, config);
        }
    }
}

/// Most likely token at every step (lowest id on ties) until stop or the
/// length cap. Unmasked.
pub fn greedy_decode<P: Policy>(policy: &P, target: &Raster, config: &GrammarConfig) -> Decoded {
    let vocab = policy.vocab();
    let mut state = policy.start(target);
    let mut stack = ExecStack::new();
    let mut tokens = Vec::new();
    let mut log_prob = 0.0;
    loop {
        let (dist, next) = policy.next(target, &state, &stack, tokens.last().copied());
        let tok = if tokens.len() >= config.max_length { vocab.stop_id() } else { dist.argmax() };
        log_prob += dist.log_prob(tok);
        tokens.push(tok);
        if tok == vocab.stop_id() {
            return Decoded::new(tokens, log_prob, vocab);
        }
        advance(policy, &mut stack, tok, config);
        state = next;
    }
}

#[derive(Clone)]
struct Hypothesis<S> {
    tokens: Vec<usize>,
    score: f64,
    depth: usize,
    state: S,
    stack: ExecStack,
}

/// Length-synchronous beam search. Each step keeps the `k` best expansions;
/// those ending in stop retire to a pool, and the `k` best retired sequences
/// are returned by total log-probability (no length normalization).
pub fn beam_search<P: Policy>(
    policy: &P,
    target: &Raster,
    k: usize,
    config: &GrammarConfig,
    grammar_mask: bool,
) -> Vec<Decoded> {
    assert!(k >= 1, "beam width must be positive");
    let vocab = policy.vocab();
    let stop = vocab.stop_id();
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        depth: 0,
        state: policy.start(target),
        stack: ExecStack::new(),
    }];
    let mut pool: Vec<(Vec<usize>, f64)> = Vec::new();
    while !live.is_empty() {
        let mut expansions: Vec<(TokenDistribution, P::State)> = Vec::with_capacity(live.len());
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        for (hi, h) in live.iter().enumerate() {
            let (dist, next) = policy.next(target, &h.state, &h.stack, h.tokens.last().copied());
            for (tok, &lp) in dist.log_probs().iter().enumerate() {
                let score = h.score + lp;
                if score.is_finite() && allowed(vocab, tok, h.tokens.len(), h.depth, config.max_length, grammar_mask) {
                    cands.push((score, hi, tok));
                }
            }
            expansions.push((dist, next));
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(k);
        let mut next_live = Vec::with_capacity(k);
        for (score, hi, tok) in cands {
            let h = &live[hi];
            let mut tokens = h.tokens.clone();
            tokens.push(tok);
            if tok == stop {
                pool.push((tokens, score));
                continue;
            }
            let mut stack = h.stack.clone();
            advance(policy, &mut stack, tok, config);
            next_live.push(Hypothesis {
                tokens,
                score,
                depth: depth_after(vocab, h.depth, tok),
                state: expansions[hi].1.clone(),
                stack,
            });
        }
        live = next_live;
        if pool.len() >= k {
            pool.sort_by(|a, b| b.1.total_cmp(&a.1));
            let kth = pool[k - 1].1;
            live.retain(|h| h.score > kth);
        }
    }
    pool.sort_by(|a, b| b.1.total_cmp(&a.1));
    pool.truncate(k);
    pool.into_iter().map(|(t, s)| Decoded::new(t, s, vocab)).collect()
}

/// One sampled episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    /// Every sampled token. An unterminated rollout also holds the
    /// non-stop draw that exceeded the cap, which `program` omits.
    pub tokens: Vec<usize>,
    pub program: Program,
    /// False when the length cap was hit before stop was drawn.
    pub terminated: bool,
}

/// Ancestral sampling without a grammar mask. A rollout that draws no stop
/// within `max_length + 1` tokens is cut off and returned unterminated.
pub fn sample_rollouts<P: Policy, R: Rng + ?Sized>(
    policy: &P,
    target: &Raster,
    m: usize,
    config: &GrammarConfig,
    rng: &mut R,
) -> Vec<Rollout> {
    let vocab = policy.vocab();
    let start = policy.start(target);
    (0..m)
        .map(|_| {
            let mut state = start.clone();
            let mut stack = ExecStack::new();
            let mut tokens = Vec::new();
            let mut terminated = false;
            while tokens.len() <= config.max_length {
                let (dist, next) = policy.next(target, &state, &stack, tokens.last().copied());
                let tok = dist.sample(rng);
                tokens.push(tok);
                if tok == vocab.stop_id() {
                    terminated = true;
                    break;
                }
                advance(policy, &mut stack, tok, config);
                state = next;
            }
            let kept = tokens.len().min(config.max_length + terminated as usize);
            let program = vocab.decode(&tokens[..kept]).expect("sampled ids come from the vocabulary");
            Rollout { tokens, program, terminated }
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod toy {
    use super::*;
    use crate::lang::{build_vocabulary, BoolOp, GridRange, PrimitiveKind};

    /// Grammar whose vocabulary is exactly [circle, union, stop].
    pub fn three_token_grammar() -> GrammarConfig {
        GrammarConfig {
            locations: GridRange::new(32, 8, 32),
            radii: GridRange::new(16, 4, 16),
            primitives: vec![PrimitiveKind::Circle],
            ops: vec![BoolOp::Union],
            ..GrammarConfig::default_2d()
        }
    }

    /// Next-token table indexed by (step, previous token).
    pub struct TablePolicy {
        pub vocab: Vocabulary,
        pub table: Box<dyn Fn(usize, Option<usize>) -> TokenDistribution>,
    }

    impl TablePolicy {
        pub fn new(config: &GrammarConfig, table: impl Fn(usize, Option<usize>) -> TokenDistribution + 'static) -> Self {
            TablePolicy { vocab: build_vocabulary(config), table: Box::new(table) }
        }
    }

    impl Policy for TablePolicy {
        type State = usize;

        fn vocab(&self) -> &Vocabulary {
            &self.vocab
        }

        fn start(&self, _: &Raster) -> usize {
            0
        }

        fn next(&self, _: &Raster, step: &usize, _: &ExecStack, prev: Option<usize>) -> (TokenDistribution, usize) {
            ((self.table)(*step, prev), step + 1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::toy::*;
    use super::*;
    use crate::lang::{build_vocabulary, parse_program, validate};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixed_program_policy(cfg: &GrammarConfig, text: &str) -> (TablePolicy, Vec<usize>) {
        let vocab = build_vocabulary(cfg);
        let toks = vocab.encode(&parse_program(text, cfg).unwrap().with_stop()).unwrap();
        let n = vocab.len();
        let t2 = toks.clone();
        (TablePolicy::new(cfg, move |s, _| TokenDistribution::one_hot(n, t2[s.min(t2.len() - 1)])), toks)
    }

    #[test]
    fn one_hot_policy_decodes_its_program() {
        let cfg = GrammarConfig::default_2d();
        let text = "circle(32,32,16) square(24,24,8) subtract";
        let (pol, toks) = fixed_program_policy(&cfg, text);
        let t = Raster::empty_2d(64);
        let g = greedy_decode(&pol, &t, &cfg);
        assert_eq!(g.tokens, toks);
        assert_eq!(g.log_prob, 0.0);
        for k in [1, 3, 10] {
            let beams = beam_search(&pol, &t, k, &cfg, true);
            assert_eq!(beams.len(), 1);
            assert_eq!(beams[0], g);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rolls = sample_rollouts(&pol, &t, 20, &cfg, &mut rng);
        assert!(rolls.iter().all(|r| r.tokens == toks && r.terminated));
    }

    #[test]
    fn length_cap() {
        let cfg = GrammarConfig::default_2d();
        let vocab = build_vocabulary(&cfg);
        let n = vocab.len();
        // always prefers the first primitive
        let pol = TablePolicy::new(&cfg, move |_, _| {
            let mut w = vec![1.0; n];
            w[0] = 100.0;
            TokenDistribution::from_weights(&w)
        });
        let t = Raster::empty_2d(64);
        let g = greedy_decode(&pol, &t, &cfg);
        assert_eq!(g.program.body().len(), cfg.max_length);
        assert!(g.program.terminated());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for r in sample_rollouts(&pol, &t, 50, &cfg, &mut rng) {
            assert!(r.program.body().len() <= 13);
            assert!(!r.terminated || r.tokens.last() == Some(&vocab.stop_id()));
        }
    }

    #[test]
    fn masked_beam_is_valid() {
        let cfg = GrammarConfig::default_2d();
        let vocab = build_vocabulary(&cfg);
        let n = vocab.len();
        let pol = TablePolicy::new(&cfg, move |s, p| {
            let w: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 31 + s * 7 + p.unwrap_or(3)) % 17) as f64).collect();
            TokenDistribution::from_weights(&w)
        });
        let beams = beam_search(&pol, &Raster::empty_2d(64), 5, &cfg, true);
        assert_eq!(beams.len(), 5);
        for b in &beams {
            assert!(validate(&b.program, cfg.max_length).valid, "{}", b.program);
        }
        assert!(beams.windows(2).all(|w| w[0].log_prob >= w[1].log_prob));
    }

    #[test]
    fn beam_matches_enumeration_on_toy_space() {
        let cfg = GrammarConfig { max_length: 2, ..three_token_grammar() };
        let table = |s: usize, p: Option<usize>| {
            let w = match (s, p) {
                (0, _) => [0.5, 0.2, 0.3],
                (_, Some(0)) => [0.3, 0.45, 0.25],
                (_, Some(1)) => [0.1, 0.1, 0.8],
                _ => [0.6, 0.3, 0.1],
            };
            TokenDistribution::from_weights(&w)
        };
        let pol = TablePolicy::new(&cfg, table);
        // every sequence of at most T=2 instructions followed by stop, scored exactly
        let mut all: Vec<(Vec<usize>, f64)> = Vec::new();
        let mut frontier: Vec<(Vec<usize>, f64)> = vec![(vec![], 0.0)];
        for step in 0..=2 {
            let mut next = Vec::new();
            for (seq, lp) in frontier {
                let prev = seq.last().copied();
                let d = table(step, prev);
                let mut done = seq.clone();
                done.push(2);
                all.push((done, lp + d.log_prob(2)));
                if step < 2 {
                    for tok in 0..2 {
                        let mut s = seq.clone();
                        s.push(tok);
                        next.push((s, lp + d.log_prob(tok)));
                    }
                }
            }
            frontier = next;
        }
        all.sort_by(|a, b| b.1.total_cmp(&a.1));
        let beams = beam_search(&pol, &Raster::empty_2d(64), 2, &cfg, false);
        assert_eq!(beams.len(), 2);
        for (b, (seq, lp)) in beams.iter().zip(&all) {
            assert_eq!(&b.tokens, seq);
            assert!((b.log_prob - lp).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_equals_unit_beam() {
        let cfg = GrammarConfig::default_2d();
        let vocab = build_vocabulary(&cfg);
        let n = vocab.len();
        for seed in 0..100u64 {
            let pol = TablePolicy::new(&cfg, move |s, p| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed * 1000 + s as u64 * 37 + p.unwrap_or(n) as u64);
                let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>().powi(8)).collect();
                TokenDistribution::from_weights(&w)
            });
            let t = Raster::empty_2d(64);
            assert_eq!(vec![greedy_decode(&pol, &t, &cfg)], beam_search(&pol, &t, 1, &cfg, false), "seed {seed}");
        }
    }

    #[test]
    fn rollout_first_step_frequency() {
        let cfg = GrammarConfig::default_2d();
        let vocab = build_vocabulary(&cfg);
        let (n, nprim, stop) = (vocab.len(), vocab.num_primitives(), vocab.stop_id());
        // uniform over primitives and ops, never stop
        let pol = TablePolicy::new(&cfg, move |_, _| {
            let w: Vec<f64> = (0..n).map(|i| if i == stop { 0.0 } else { 1.0 }).collect();
            TokenDistribution::from_weights(&w)
        });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 4000;
        let rolls = sample_rollouts(&pol, &Raster::empty_2d(64), m, &cfg, &mut rng);
        let p = nprim as f64 / (n - 1) as f64;
        let hits = rolls.iter().filter(|r| vocab.is_primitive(r.tokens[0])).count() as f64;
        let sigma = (m as f64 * p * (1.0 - p)).sqrt();
        assert!((hits - m as f64 * p).abs() <= 3.0 * sigma);
        assert!(rolls.iter().all(|r| !r.terminated && r.tokens.len() == 14 && r.program.len() == 13));
        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(rolls, sample_rollouts(&pol, &Raster::empty_2d(64), m, &cfg, &mut rng2));
    }
}
