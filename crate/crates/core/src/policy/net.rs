//! Convolutional encoder feeding a gated recurrent decoder that emits one
//! categorical distribution over instruction tokens per step.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::{stack_observation, ExecStack, Raster};
use crate::lang::{Dim, GrammarConfig, Vocabulary};

use super::ops::{col2im, conv_out, im2col, linear, linear_backward, log_softmax_rows, sigmoid};
use super::PolicyError;

/// Layer widths and observation format of a [`PolicyNet`].
#[derive(Clone, Debug, PartialEq)]
pub struct ArchConfig {
    pub dim: Dim,
    pub canvas: usize,
    /// Number of execution-stack maps stacked onto the target (0 = target only).
    pub stack_k: usize,
    pub conv_channels: Vec<usize>,
    pub code_width: usize,
    pub embed_width: usize,
    pub hidden_width: usize,
    pub fc_width: usize,
    pub dropout: f64,
    /// Adds normalized row and column coordinate channels to the input.
    pub coord_channels: bool,
    /// Classifier and embedding rows of primitive tokens get shared
    /// per-kind and per-coordinate components added to their own rows.
    pub tied_factors: bool,
}

impl ArchConfig {
    /// Default desk-scale architecture for a grammar's canvas.
    pub fn for_grammar(config: &GrammarConfig, stack_k: usize) -> Self {
        ArchConfig {
            dim: config.dim,
            canvas: config.canvas as usize,
            stack_k,
            conv_channels: vec![8, 16, 32],
            code_width: 128,
            embed_width: 32,
            hidden_width: 128,
            fc_width: 128,
            dropout: 0.2,
            coord_channels: true,
            tied_factors: true,
        }
    }

    /// Side length of the encoder input. Voxel grids are pooled to at most 32.
    pub fn input_side(&self) -> usize {
        match self.dim {
            Dim::Two => self.canvas,
            Dim::Three => self.canvas.min(32),
        }
    }

    fn pool(&self) -> usize {
        self.canvas / self.input_side()
    }

    fn channels_per_map(&self) -> usize {
        match self.dim {
            Dim::Two => 1,
            Dim::Three => self.input_side(),
        }
    }

    /// Channel count of the encoder input: every map contributes one channel
    /// in 2D and one per depth slice in 3D.
    pub fn input_channels(&self) -> usize {
        self.channels_per_map() * (self.stack_k + 1) + self.coord_offset()
    }

    fn coord_offset(&self) -> usize {
        if self.coord_channels {
            2
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::Arch(m.to_string()));
        if self.canvas == 0 || self.canvas % self.input_side() != 0 {
            return bad("canvas must be a positive multiple of the input side");
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return bad("conv_channels must be nonempty and positive");
        }
        if [self.code_width, self.embed_width, self.hidden_width, self.fc_width].contains(&0) {
            return bad("layer widths must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let chans: Vec<String> = self.conv_channels.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "dim = {}", self.dim.axes());
        let _ = writeln!(s, "canvas = {}", self.canvas);
        let _ = writeln!(s, "stack_k = {}", self.stack_k);
        let _ = writeln!(s, "conv_channels = {}", chans.join(","));
        let _ = writeln!(s, "code_width = {}", self.code_width);
        let _ = writeln!(s, "embed_width = {}", self.embed_width);
        let _ = writeln!(s, "hidden_width = {}", self.hidden_width);
        let _ = writeln!(s, "fc_width = {}", self.fc_width);
        let _ = writeln!(s, "dropout = {}", self.dropout);
        let _ = writeln!(s, "coord_channels = {}", self.coord_channels);
        let _ = writeln!(s, "tied_factors = {}", self.tied_factors);
        s
    }

    pub fn from_kv(text: &str) -> Result<Self, PolicyError> {
        let mut a = ArchConfig::for_grammar(&GrammarConfig::default_2d(), 0);
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| PolicyError::Arch(format!("bad line `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            let int = || v.parse::<usize>().map_err(|_| PolicyError::Arch(format!("`{k}` expects an integer")));
            match k {
                "dim" => {
                    a.dim = match v {
                        "2" => Dim::Two,
                        "3" => Dim::Three,
                        _ => return Err(PolicyError::Arch("dim must be 2 or 3".into())),
                    }
                }
                "canvas" => a.canvas = int()?,
                "stack_k" => a.stack_k = int()?,
                "conv_channels" => {
                    a.conv_channels = v
                        .split(',')
                        .map(|c| c.trim().parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| PolicyError::Arch("bad conv_channels".into()))?
                }
                "code_width" => a.code_width = int()?,
                "embed_width" => a.embed_width = int()?,
                "hidden_width" => a.hidden_width = int()?,
                "fc_width" => a.fc_width = int()?,
                "dropout" => a.dropout = v.parse().map_err(|_| PolicyError::Arch("bad dropout".into()))?,
                "coord_channels" => a.coord_channels = v.parse().map_err(|_| PolicyError::Arch("bad coord_channels".into()))?,
                "tied_factors" => a.tied_factors = v.parse().map_err(|_| PolicyError::Arch("bad tied_factors".into()))?,
                _ => return Err(PolicyError::Arch(format!("unknown key `{k}`"))),
            }
        }
        a.validate()?;
        Ok(a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Slot {
    off: usize,
    len: usize,
}

impl Slot {
    fn range(self) -> std::ops::Range<usize> {
        self.off..self.off + self.len
    }
}

/// Offsets of every tensor inside the flat parameter vector. Each weight is
/// immediately followed by its bias.
#[derive(Clone, Debug, PartialEq)]
struct Layout {
    conv: Vec<(Slot, Slot)>,
    sides: Vec<usize>,
    chans: Vec<usize>,
    code: (Slot, Slot),
    embed: Slot,
    gru_x: (Slot, Slot),
    gru_h: (Slot, Slot),
    fc1: (Slot, Slot),
    fc2: (Slot, Slot),
    out: (Slot, Slot),
    out_factors: Slot,
    embed_factors: Slot,
    total: usize,
}

impl Layout {
    fn new(arch: &ArchConfig, vocab_size: usize, factor_rows: usize) -> Layout {
        let mut off = 0;
        let mut take = |len: usize| {
            let s = Slot { off, len };
            off += len;
            s
        };
        let mut sides = vec![arch.input_side()];
        let mut chans = vec![arch.input_channels()];
        let mut conv = Vec::new();
        for &c in &arch.conv_channels {
            let cin = *chans.last().unwrap();
            conv.push((take(c * 9 * cin), take(c)));
            sides.push(conv_out(*sides.last().unwrap()));
            chans.push(c);
        }
        let flat = sides.last().unwrap().pow(2) * chans.last().unwrap();
        let (c, e, h, f) = (arch.code_width, arch.embed_width, arch.hidden_width, arch.fc_width);
        let code = (take(c * flat), take(c));
        let embed = take((vocab_size + 1) * e);
        let gru_x = (take(3 * h * (c + e)), take(3 * h));
        let gru_h = (take(3 * h * h), take(3 * h));
        let fc1 = (take(f * h), take(f));
        let fc2 = (take(f * f), take(f));
        let out = (take(vocab_size * f), take(vocab_size));
        let out_factors = take(factor_rows * f);
        let embed_factors = take(factor_rows * e);
        Layout { conv, sides, chans, code, embed, gru_x, gru_h, fc1, fc2, out, out_factors, embed_factors, total: off }
    }

    fn flat(&self) -> usize {
        self.sides.last().unwrap().pow(2) * self.chans.last().unwrap()
    }
}

/// Recurrent state carried between decoding steps.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderState {
    pub hidden: Vec<f64>,
    pub step: usize,
}

/// Target raster plus the top-`K` execution-stack maps (top first).
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub target: Raster,
    pub stack: Vec<Raster>,
}

impl Observation {
    pub fn new(target: &Raster, stack: &ExecStack, k: usize, config: &GrammarConfig) -> Self {
        Observation { target: target.clone(), stack: stack_observation(stack, k, config) }
    }
}

/// Teacher-forced batch of token sequences, padded to a common length.
#[derive(Clone, Debug)]
pub struct SeqBatch {
    seqs: usize,
    steps: usize,
    prev: Vec<usize>,
    target: Vec<usize>,
    weight: Vec<f64>,
    images: Vec<f64>,
    n_images: usize,
    code_row: Vec<usize>,
}

impl SeqBatch {
    pub fn num_sequences(&self) -> usize {
        self.seqs
    }

    /// Encoder inputs, one flattened (row, col, channel) image per entry.
    pub fn images(&self) -> impl Iterator<Item = &[f64]> {
        let len = self.images.len() / self.n_images.max(1);
        self.images.chunks(len.max(1))
    }

    /// Index into [`SeqBatch::images`] conditioning step `t` of sequence `b`.
    pub fn image_for(&self, b: usize, t: usize) -> usize {
        self.code_row[b * self.steps + t]
    }
}

/// One sequence to score: tokens (including any trailing stop) with a
/// per-token loss weight.
#[derive(Clone, Copy, Debug)]
pub struct SeqExample<'a> {
    pub target: &'a Raster,
    pub tokens: &'a [usize],
    pub weights: &'a [f64],
}

/// Result of a teacher-forced pass.
#[derive(Clone, Debug)]
pub struct SeqOutput {
    /// `sum(weight * -log p(token))`.
    pub loss: f64,
    /// Positions with nonzero weight whose argmax equals the token.
    pub correct: usize,
    /// Positions with nonzero weight.
    pub counted: usize,
    pub grad: Option<Vec<f64>>,
}

struct EncCache {
    cols: Vec<Vec<f64>>,
    acts: Vec<Vec<f64>>,
    code_pre: Vec<f64>,
    code_mask: Option<Vec<f64>>,
    code: Vec<f64>,
}

struct GruCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    ghn: Vec<f64>,
}

struct HeadCache {
    a1_pre: Vec<f64>,
    m1: Option<Vec<f64>>,
    a1: Vec<f64>,
    a2_pre: Vec<f64>,
    m2: Option<Vec<f64>>,
    a2: Vec<f64>,
    log_probs: Vec<f64>,
}

fn relu(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

fn dropout(v: &mut [f64], p: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Vec<f64>> {
    let rng = rng?;
    if p <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = (0..v.len()).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect();
    v.iter_mut().zip(&mask).for_each(|(x, m)| *x *= m);
    Some(mask)
}

/// Gradient through dropout and ReLU given the pre-dropout activation.
fn relu_dropout_backward(d: &mut [f64], pre: &[f64], mask: &Option<Vec<f64>>) {
    for (i, g) in d.iter_mut().enumerate() {
        if pre[i] <= 0.0 {
            *g = 0.0;
        } else if let Some(m) = mask {
            *g *= m[i];
        }
    }
}

const MAGIC: &[u8; 8] = b"CSGPOLv\0";
const VERSION: u32 = 1;

/// Encoder-decoder sequence policy with a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyNet {
    arch: ArchConfig,
    vocab_size: usize,
    vocab_fingerprint: u64,
    layout: Layout,
    /// Shared factor rows of each token (empty for ops, stop, or untied nets).
    token_factors: Vec<Vec<usize>>,
    params: Vec<f64>,
}

/// Factor rows of every vocabulary entry: one row per primitive kind and
/// one per distinct (parameter slot, value) pair. Returns the per-token
/// row lists and the row count.
fn factor_table(vocab: &Vocabulary) -> (Vec<Vec<usize>>, usize) {
    let mut ids: BTreeMap<(usize, i64), usize> = BTreeMap::new();
    let keys: Vec<Option<Vec<(usize, i64)>>> = vocab
        .entries()
        .iter()
        .map(|ins| {
            let (kind, vals) = ins.as_primitive()?.grid_key()?;
            let mut k = vec![(0, kind as i64)];
            k.extend(vals.iter().take(kind.arity()).enumerate().map(|(i, &v)| (i + 1, v)));
            Some(k)
        })
        .collect();
    for k in keys.iter().flatten().flatten() {
        let n = ids.len();
        ids.entry(*k).or_insert(n);
    }
    let rows = keys.into_iter().map(|k| k.map(|k| k.iter().map(|f| ids[f]).collect()).unwrap_or_default()).collect();
    (rows, ids.len())
}

fn net_factors(arch: &ArchConfig, vocab: &Vocabulary) -> (Vec<Vec<usize>>, usize) {
    if arch.tied_factors {
        factor_table(vocab)
    } else {
        (vec![Vec::new(); vocab.len()], 0)
    }
}

/// Seed-deterministic initialization for a vocabulary.
pub fn init_policy(arch: &ArchConfig, vocab: &Vocabulary, seed: u64) -> Result<PolicyNet, PolicyError> {
    arch.validate()?;
    if vocab.is_empty() {
        return Err(PolicyError::EmptyVocabulary);
    }
    let (token_factors, factor_rows) = net_factors(arch, vocab);
    let layout = Layout::new(arch, vocab.len(), factor_rows);
    let mut params = vec![0.0; layout.total];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fill = |s: Slot, bound: f64| {
        for v in &mut params[s.range()] {
            *v = rng.random_range(-bound..bound);
        }
    };
    let he = |fan_in: usize| (6.0 / fan_in as f64).sqrt();
    for (l, &(w, _)) in layout.conv.iter().enumerate() {
        fill(w, he(9 * layout.chans[l]));
    }
    fill(layout.code.0, he(layout.flat()));
    fill(layout.embed, 0.1);
    let g = 1.0 / (arch.hidden_width as f64).sqrt();
    fill(layout.gru_x.0, g);
    fill(layout.gru_x.1, g);
    fill(layout.gru_h.0, g);
    fill(layout.gru_h.1, g);
    fill(layout.fc1.0, he(arch.hidden_width));
    fill(layout.fc2.0, he(arch.fc_width));
    fill(layout.out.0, 1e-3);
    fill(layout.out_factors, 1e-3);
    fill(layout.embed_factors, 0.1);
    Ok(PolicyNet {
        arch: arch.clone(),
        vocab_size: vocab.len(),
        vocab_fingerprint: vocab.fingerprint(),
        layout,
        token_factors,
        params,
    })
}

impl PolicyNet {
    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn vocab_fingerprint(&self) -> u64 {
        self.vocab_fingerprint
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn p(&self, s: Slot) -> &[f64] {
        &self.params[s.range()]
    }

    /// Zeroes the classifier so every step predicts the uniform distribution.
    pub fn zero_classifier(&mut self) {
        let (w, b) = self.layout.out;
        self.params[w.off..b.off + b.len].iter_mut().for_each(|v| *v = 0.0);
        let f = self.layout.out_factors;
        self.params[f.range()].iter_mut().for_each(|v| *v = 0.0);
    }

    /// `base` rows (`width` wide) plus each token's shared factor rows.
    fn tied_rows(&self, base: Slot, factors: Slot, width: usize) -> Vec<f64> {
        let mut rows = self.p(base).to_vec();
        let shared = self.p(factors);
        for (t, fs) in self.token_factors.iter().enumerate() {
            let row = &mut rows[t * width..(t + 1) * width];
            for &f in fs {
                row.iter_mut().zip(&shared[f * width..(f + 1) * width]).for_each(|(a, b)| *a += b);
            }
        }
        rows
    }

    /// Adds gradients of tied rows into `grad` for both components.
    fn tied_backward(&self, drows: &[f64], base: Slot, factors: Slot, width: usize, grad: &mut [f64]) {
        grad[base.range()].iter_mut().zip(drows).for_each(|(a, b)| *a += b);
        let g = &mut grad[factors.range()];
        for (t, fs) in self.token_factors.iter().enumerate() {
            let row = &drows[t * width..(t + 1) * width];
            for &f in fs {
                g[f * width..(f + 1) * width].iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
        }
    }

    fn classifier_weights(&self) -> Vec<f64> {
        self.tied_rows(self.layout.out.0, self.layout.out_factors, self.arch.fc_width)
    }

    fn embeddings(&self) -> Vec<f64> {
        self.tied_rows(self.layout.embed, self.layout.embed_factors, self.arch.embed_width)
    }

    /// Flattened encoder input for the target and stack maps.
    pub fn encode_input(&self, obs: &Observation) -> Vec<f64> {
        let side = self.arch.input_side();
        let f = self.arch.pool();
        let per = self.arch.channels_per_map();
        let ch = self.arch.input_channels();
        let mut out = vec![0.0; side * side * ch];
        if self.arch.coord_channels {
            let scale = 2.0 / (side.max(2) - 1) as f64;
            for y in 0..side {
                for x in 0..side {
                    let o = (y * side + x) * ch + ch - 2;
                    out[o] = x as f64 * scale - 1.0;
                    out[o + 1] = y as f64 * scale - 1.0;
                }
            }
        }
        let maps = std::iter::once(&obs.target).chain(obs.stack.iter()).take(self.arch.stack_k + 1);
        for (m, map) in maps.enumerate() {
            for i in map.ones() {
                let [z, y, x] = map.coords(i);
                out[((y / f) * side + x / f) * ch + m * per + z / f] = 1.0;
            }
        }
        out
    }

    /// Encoder input built directly from a live execution stack.
    pub fn observe(&self, target: &Raster, stack: &ExecStack, config: &GrammarConfig) -> Vec<f64> {
        self.encode_input(&Observation::new(target, stack, self.arch.stack_k, config))
    }

    fn encode(&self, input: &[f64], n: usize, mut rng: Option<&mut ChaCha8Rng>) -> EncCache {
        let l = &self.layout;
        let mut cols_all = Vec::with_capacity(l.conv.len());
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(l.conv.len());
        for (i, &(w, b)) in l.conv.iter().enumerate() {
            let x: &[f64] = if i == 0 { input } else { &acts[i - 1] };
            let cols = im2col(x, n, l.sides[i], l.chans[i]);
            let rows = n * l.sides[i + 1].pow(2);
            let mut y = linear(&cols, rows, self.p(w), self.p(b), l.chans[i + 1]);
            relu(&mut y);
            cols_all.push(cols);
            acts.push(y);
        }
        let mut code_pre = linear(acts.last().unwrap(), n, self.p(l.code.0), self.p(l.code.1), self.arch.code_width);
        relu(&mut code_pre);
        let mut code = code_pre.clone();
        let code_mask = dropout(&mut code, self.arch.dropout, rng.as_deref_mut());
        EncCache { cols: cols_all, acts, code_pre, code_mask, code }
    }

    fn encode_backward(&self, cache: &EncCache, mut dcode: Vec<f64>, n: usize, grad: &mut [f64]) {
        let l = &self.layout;
        relu_dropout_backward(&mut dcode, &cache.code_pre, &cache.code_mask);
        let (w, b) = l.code;
        let (dw, db) = grad[w.off..b.off + b.len].split_at_mut(w.len);
        let mut d = linear_backward(&dcode, cache.acts.last().unwrap(), n, self.p(w), self.arch.code_width, dw, db, true);
        for i in (0..l.conv.len()).rev() {
            let act = &cache.acts[i];
            for (g, a) in d.iter_mut().zip(act) {
                if *a <= 0.0 {
                    *g = 0.0;
                }
            }
            let (w, b) = l.conv[i];
            let rows = n * l.sides[i + 1].pow(2);
            let (dw, db) = grad[w.off..b.off + b.len].split_at_mut(w.len);
            let dcols = linear_backward(&d, &cache.cols[i], rows, self.p(w), l.chans[i + 1], dw, db, i > 0);
            if i > 0 {
                d = col2im(&dcols, n, l.sides[i], l.chans[i]);
            }
        }
    }

    fn gru_forward(&self, x: Vec<f64>, h_prev: Vec<f64>, rows: usize) -> (Vec<f64>, GruCache) {
        let h = self.arch.hidden_width;
        let gx = linear(&x, rows, self.p(self.layout.gru_x.0), self.p(self.layout.gru_x.1), 3 * h);
        let gh = linear(&h_prev, rows, self.p(self.layout.gru_h.0), self.p(self.layout.gru_h.1), 3 * h);
        let mut r = vec![0.0; rows * h];
        let mut z = vec![0.0; rows * h];
        let mut n = vec![0.0; rows * h];
        let mut ghn = vec![0.0; rows * h];
        let mut out = vec![0.0; rows * h];
        for b in 0..rows {
            let (gxb, ghb) = (&gx[b * 3 * h..(b + 1) * 3 * h], &gh[b * 3 * h..(b + 1) * 3 * h]);
            for j in 0..h {
                let i = b * h + j;
                r[i] = sigmoid(gxb[j] + ghb[j]);
                z[i] = sigmoid(gxb[h + j] + ghb[h + j]);
                ghn[i] = ghb[2 * h + j];
                n[i] = (gxb[2 * h + j] + r[i] * ghn[i]).tanh();
                out[i] = (1.0 - z[i]) * n[i] + z[i] * h_prev[i];
            }
        }
        (out, GruCache { x, h_prev, r, z, n, ghn })
    }

    /// Returns `(dx, dh_prev)`.
    fn gru_backward(&self, c: &GruCache, dh: &[f64], rows: usize, grad: &mut [f64]) -> (Vec<f64>, Vec<f64>) {
        let h = self.arch.hidden_width;
        let mut dgx = vec![0.0; rows * 3 * h];
        let mut dgh = vec![0.0; rows * 3 * h];
        let mut dh_prev = vec![0.0; rows * h];
        for b in 0..rows {
            for j in 0..h {
                let i = b * h + j;
                let g = dh[i];
                let dn = g * (1.0 - c.z[i]);
                let dz = g * (c.h_prev[i] - c.n[i]);
                dh_prev[i] = g * c.z[i];
                let dan = dn * (1.0 - c.n[i] * c.n[i]);
                let dr = dan * c.ghn[i];
                let daz = dz * c.z[i] * (1.0 - c.z[i]);
                let dar = dr * c.r[i] * (1.0 - c.r[i]);
                let o = b * 3 * h;
                dgx[o + j] = dar;
                dgx[o + h + j] = daz;
                dgx[o + 2 * h + j] = dan;
                dgh[o + j] = dar;
                dgh[o + h + j] = daz;
                dgh[o + 2 * h + j] = dan * c.r[i];
            }
        }
        let (w, bs) = self.layout.gru_x;
        let (dw, db) = grad[w.off..bs.off + bs.len].split_at_mut(w.len);
        let dx = linear_backward(&dgx, &c.x, rows, self.p(w), 3 * h, dw, db, true);
        let (w, bs) = self.layout.gru_h;
        let (dw, db) = grad[w.off..bs.off + bs.len].split_at_mut(w.len);
        let dhh = linear_backward(&dgh, &c.h_prev, rows, self.p(w), 3 * h, dw, db, true);
        dh_prev.iter_mut().zip(&dhh).for_each(|(a, b)| *a += b);
        (dx, dh_prev)
    }

    fn head(&self, hs: &[f64], rows: usize, mut rng: Option<&mut ChaCha8Rng>, out_w: &[f64]) -> HeadCache {
        let (f, v) = (self.arch.fc_width, self.vocab_size);
        let l = &self.layout;
        let mut a1_pre = linear(hs, rows, self.p(l.fc1.0), self.p(l.fc1.1), f);
        relu(&mut a1_pre);
        let mut a1 = a1_pre.clone();
        let m1 = dropout(&mut a1, self.arch.dropout, rng.as_deref_mut());
        let mut a2_pre = linear(&a1, rows, self.p(l.fc2.0), self.p(l.fc2.1), f);
        relu(&mut a2_pre);
        let mut a2 = a2_pre.clone();
        let m2 = dropout(&mut a2, self.arch.dropout, rng.as_deref_mut());
        let mut log_probs = linear(&a2, rows, out_w, self.p(l.out.1), v);
        log_softmax_rows(&mut log_probs, v);
        HeadCache { a1_pre, m1, a1, a2_pre, m2, a2, log_probs }
    }

    fn head_backward(
        &self,
        c: &HeadCache,
        hs: &[f64],
        mut dlogits: Vec<f64>,
        rows: usize,
        out_w: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        let (f, v) = (self.arch.fc_width, self.vocab_size);
        let l = &self.layout;
        let (w, b) = l.out;
        let mut dw = vec![0.0; w.len];
        let mut da2 = linear_backward(&dlogits, &c.a2, rows, out_w, v, &mut dw, &mut grad[b.range()], true);
        self.tied_backward(&dw, w, l.out_factors, f, grad);
        dlogits.clear();
        relu_dropout_backward(&mut da2, &c.a2_pre, &c.m2);
        let (w, b) = l.fc2;
        let (dw, db) = grad[w.off..b.off + b.len].split_at_mut(w.len);
        let mut da1 = linear_backward(&da2, &c.a1, rows, self.p(w), f, dw, db, true);
        relu_dropout_backward(&mut da1, &c.a1_pre, &c.m1);
        let (w, b) = l.fc1;
        let (dw, db) = grad[w.off..b.off + b.len].split_at_mut(w.len);
        linear_backward(&da1, hs, rows, self.p(w), f, dw, db, true)
    }

    /// Builds a teacher-forced batch. With stack maps enabled, the input at
    /// step `t` reflects execution of the first `t` tokens of the sequence.
    pub fn make_batch(&self, examples: &[SeqExample], vocab: &Vocabulary, config: &GrammarConfig) -> SeqBatch {
        let seqs = examples.len();
        let steps = examples.iter().map(|e| e.tokens.len()).max().unwrap_or(0);
        let rows = seqs * steps;
        let mut prev = vec![self.vocab_size; rows];
        let mut target = vec![0; rows];
        let mut weight = vec![0.0; rows];
        let mut code_row = vec![0; rows];
        let mut images = Vec::new();
        let mut n_images = 0usize;
        for (b, ex) in examples.iter().enumerate() {
            assert_eq!(ex.tokens.len(), ex.weights.len(), "one weight per token");
            let first_image = n_images;
            if self.arch.stack_k == 0 {
                images.extend(self.observe(ex.target, &ExecStack::new(), config));
                n_images += 1;
            } else {
                let mut stack = ExecStack::new();
                for &tok in ex.tokens {
                    images.extend(self.observe(ex.target, &stack, config));
                    n_images += 1;
                    if let Some(ins) = vocab.get(tok) {
                        stack.step_lenient(ins, config);
                    }
                }
            }
            let last = n_images.saturating_sub(1).max(first_image);
            for t in 0..steps {
                let r = b * steps + t;
                code_row[r] = if self.arch.stack_k == 0 { first_image } else { (first_image + t).min(last) };
                if t < ex.tokens.len() {
                    if t > 0 {
                        prev[r] = ex.tokens[t - 1];
                    }
                    target[r] = ex.tokens[t];
                    weight[r] = ex.weights[t];
                }
            }
        }
        SeqBatch { seqs, steps, prev, target, weight, images, n_images, code_row }
    }

    /// Teacher-forced forward pass and optional reverse-mode gradient of the
    /// weighted negative log-likelihood. Dropout is active iff `rng` is given.
    pub fn run_batch(&self, batch: &SeqBatch, mut rng: Option<&mut ChaCha8Rng>, want_grad: bool) -> SeqOutput {
        let (bn, tn) = (batch.seqs, batch.steps);
        let (c, e, h, v) = (self.arch.code_width, self.arch.embed_width, self.arch.hidden_width, self.vocab_size);
        if bn == 0 || tn == 0 {
            let grad = want_grad.then(|| vec![0.0; self.params.len()]);
            return SeqOutput { loss: 0.0, correct: 0, counted: 0, grad };
        }
        let enc = self.encode(&batch.images, batch.n_images, rng.as_deref_mut());
        let embed = self.embeddings();
        let out_w = self.classifier_weights();
        let in_w = c + e;
        let mut hidden = vec![0.0; bn * h];
        let mut all_h = vec![0.0; bn * tn * h];
        let mut caches = Vec::with_capacity(tn);
        for t in 0..tn {
            let mut x = vec![0.0; bn * in_w];
            for b in 0..bn {
                let r = b * tn + t;
                let cr = batch.code_row[r];
                x[b * in_w..b * in_w + c].copy_from_slice(&enc.code[cr * c..(cr + 1) * c]);
                let pr = batch.prev[r];
                x[b * in_w + c..(b + 1) * in_w].copy_from_slice(&embed[pr * e..(pr + 1) * e]);
            }
            let (next, cache) = self.gru_forward(x, hidden, bn);
            for b in 0..bn {
                let r = b * tn + t;
                all_h[r * h..(r + 1) * h].copy_from_slice(&next[b * h..(b + 1) * h]);
            }
            caches.push(cache);
            hidden = next;
        }
        let rows = bn * tn;
        let head = self.head(&all_h, rows, rng.as_deref_mut(), &out_w);
        let mut loss = 0.0;
        let (mut correct, mut counted) = (0, 0);
        for r in 0..rows {
            let w = batch.weight[r];
            if w == 0.0 {
                continue;
            }
            let lp = &head.log_probs[r * v..(r + 1) * v];
            loss -= w * lp[batch.target[r]];
            counted += 1;
            if argmax(lp) == batch.target[r] {
                correct += 1;
            }
        }
        if !want_grad {
            return SeqOutput { loss, correct, counted, grad: None };
        }

        let mut grad = vec![0.0; self.params.len()];
        let mut dlogits = vec![0.0; rows * v];
        for r in 0..rows {
            let w = batch.weight[r];
            if w == 0.0 {
                continue;
            }
            let lp = &head.log_probs[r * v..(r + 1) * v];
            let d = &mut dlogits[r * v..(r + 1) * v];
            for (di, l) in d.iter_mut().zip(lp) {
                *di = w * l.exp();
            }
            d[batch.target[r]] -= w;
        }
        let dall_h = self.head_backward(&head, &all_h, dlogits, rows, &out_w, &mut grad);
        let mut dcode = vec![0.0; batch.n_images * c];
        let mut dh_next = vec![0.0; bn * h];
        let mut dembed = vec![0.0; self.layout.embed.len];
        for t in (0..tn).rev() {
            let mut dh = dh_next;
            for b in 0..bn {
                let r = b * tn + t;
                for j in 0..h {
                    dh[b * h + j] += dall_h[r * h + j];
                }
            }
            let (dx, dh_prev) = self.gru_backward(&caches[t], &dh, bn, &mut grad);
            for b in 0..bn {
                let r = b * tn + t;
                let cr = batch.code_row[r];
                for j in 0..c {
                    dcode[cr * c + j] += dx[b * in_w + j];
                }
                let pr = batch.prev[r];
                for j in 0..e {
                    dembed[pr * e + j] += dx[b * in_w + c + j];
                }
            }
            dh_next = dh_prev;
        }
        self.tied_backward(&dembed, self.layout.embed, self.layout.embed_factors, e, &mut grad);
        self.encode_backward(&enc, dcode, batch.n_images, &mut grad);
        SeqOutput { loss, correct, counted, grad: Some(grad) }
    }

    /// Code vector of one encoder input (inference mode).
    pub fn encode_image(&self, image: &[f64]) -> Vec<f64> {
        self.encode(image, 1, None).code
    }

    pub fn initial_state(&self) -> DecoderState {
        DecoderState { hidden: vec![0.0; self.arch.hidden_width], step: 0 }
    }

    /// One inference step from an encoded observation; returns log-probabilities.
    pub fn decode_step(&self, code: &[f64], state: &DecoderState, prev: Option<usize>) -> (Vec<f64>, DecoderState) {
        let (c, e) = (self.arch.code_width, self.arch.embed_width);
        let row = prev.filter(|&p| p < self.vocab_size).unwrap_or(self.vocab_size);
        let mut x = Vec::with_capacity(c + e);
        x.extend_from_slice(code);
        let base = &self.p(self.layout.embed)[row * e..(row + 1) * e];
        x.extend_from_slice(base);
        if let Some(fs) = self.token_factors.get(row) {
            let shared = self.p(self.layout.embed_factors);
            for &f in fs {
                x[c..].iter_mut().zip(&shared[f * e..(f + 1) * e]).for_each(|(a, b)| *a += b);
            }
        }
        let (hidden, _) = self.gru_forward(x, state.hidden.clone(), 1);
        let head = self.head(&hidden, 1, None, &self.classifier_weights());
        (head.log_probs, DecoderState { hidden, step: state.step + 1 })
    }

    pub fn save<W: Write>(&self, w: &mut W) -> Result<(), PolicyError> {
        let arch = self.arch.to_kv();
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(arch.len() as u32).to_le_bytes())?;
        w.write_all(arch.as_bytes())?;
        w.write_all(&(self.vocab_size as u64).to_le_bytes())?;
        w.write_all(&self.vocab_fingerprint.to_le_bytes())?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.params.len() * 8);
        for p in &self.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads a checkpoint, refusing one written for a different vocabulary.
    pub fn load<R: Read>(r: &mut R, vocab: &Vocabulary) -> Result<PolicyNet, PolicyError> {
        let bad = |m: &str| PolicyError::BadCheckpoint(m.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a policy checkpoint"));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        if u32::from_le_bytes(b4) != VERSION {
            return Err(bad("unsupported checkpoint version"));
        }
        r.read_exact(&mut b4)?;
        let mut arch = vec![0u8; u32::from_le_bytes(b4) as usize];
        r.read_exact(&mut arch)?;
        let arch = ArchConfig::from_kv(std::str::from_utf8(&arch).map_err(|_| bad("architecture is not utf-8"))?)?;
        r.read_exact(&mut b8)?;
        let vocab_size = u64::from_le_bytes(b8) as usize;
        r.read_exact(&mut b8)?;
        let fingerprint = u64::from_le_bytes(b8);
        if fingerprint != vocab.fingerprint() || vocab_size != vocab.len() {
            return Err(PolicyError::VocabMismatch { expected: vocab.fingerprint(), found: fingerprint });
        }
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let (token_factors, factor_rows) = net_factors(&arch, vocab);
        let layout = Layout::new(&arch, vocab_size, factor_rows);
        if n != layout.total {
            return Err(bad("parameter count does not match architecture"));
        }
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw)?;
        let params: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if params.iter().any(|p| !p.is_finite()) {
            return Err(bad("non-finite parameter"));
        }
        Ok(PolicyNet { arch, vocab_size, vocab_fingerprint: fingerprint, layout, token_factors, params })
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
