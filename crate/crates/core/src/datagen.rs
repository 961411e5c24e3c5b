//! Synthetic program datasets: random grammar derivations with uniform
//! primitive and op marginals, deduplicated on canonical program text.
//!
//! Every sampling attempt draws from its own ChaCha stream keyed by
//! `(seed, length, attempt)`, so output depends only on the spec.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::{io as rio, render_program, Raster};
use crate::lang::{contained, parse_program, Dim, GrammarConfig, Instruction, ParseError, Primitive, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub const fn new(train: usize, val: usize, test: usize) -> Self {
        SplitCounts { train, val, test }
    }

    pub fn get(&self, s: Split) -> usize {
        match s {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    fn scaled(&self, percent: usize) -> Self {
        let s = |n: usize| (n * percent).div_ceil(100);
        SplitCounts::new(s(self.train), s(self.val), s(self.test))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    /// Program length -> per-split counts.
    pub counts: BTreeMap<usize, SplitCounts>,
    pub seed: u64,
    pub grammar: GrammarConfig,
    /// Resample programs that render to an empty raster.
    pub reject_empty: bool,
}

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("program length {0} must be odd, at least 3 and at most max_length {1}")]
    BadLength(usize, usize),
    #[error("requested {requested} programs of length {length} but only {available} distinct ones exist")]
    Capacity { length: usize, requested: usize, available: u128 },
    #[error("gave up after {attempts} attempts collecting distinct length-{length} programs")]
    Exhausted { length: usize, attempts: u64 },
    #[error(transparent)]
    Config(#[from] crate::lang::ConfigError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Raster(#[from] rio::RasterIoError),
    #[error("{file}:{line}: {source}")]
    Parse { file: String, line: usize, source: ParseError },
    #[error("{0}")]
    Manifest(String),
}

impl DatasetSpec {
    /// Spec with the given counts that rejects empty renders.
    pub fn new(counts: BTreeMap<usize, SplitCounts>, seed: u64, grammar: GrammarConfig) -> Self {
        DatasetSpec { counts, seed, grammar, reject_empty: true }
    }

    /// Split sizes of the full synthetic corpora (2D lengths 3..=13, 3D 3..=7).
    pub fn full(grammar: GrammarConfig, seed: u64) -> Self {
        let k = 1000;
        let table: &[(usize, SplitCounts)] = match grammar.dim {
            Dim::Two => &[
                (3, SplitCounts::new(25 * k, 5 * k, 5 * k)),
                (5, SplitCounts::new(100 * k, 10 * k, 50 * k)),
                (7, SplitCounts::new(150 * k, 20 * k, 50 * k)),
                (9, SplitCounts::new(250 * k, 20 * k, 50 * k)),
                (11, SplitCounts::new(350 * k, 20 * k, 100 * k)),
                (13, SplitCounts::new(350 * k, 20 * k, 100 * k)),
            ],
            Dim::Three => &[
                (3, SplitCounts::new(100 * k, 10 * k, 20 * k)),
                (5, SplitCounts::new(200 * k, 20 * k, 40 * k)),
                (7, SplitCounts::new(400 * k, 40 * k, 80 * k)),
            ],
        };
        DatasetSpec::new(table.iter().copied().collect(), seed, grammar)
    }

    /// One percent of [`DatasetSpec::full`], rounded up.
    pub fn small(grammar: GrammarConfig, seed: u64) -> Self {
        let mut spec = Self::full(grammar, seed);
        spec.counts.values_mut().for_each(|c| *c = c.scaled(1));
        spec
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        self.grammar.validate()?;
        for &len in self.counts.keys() {
            check_length(len, self.grammar.max_length)?;
        }
        Ok(())
    }
}

fn check_length(len: usize, max_length: usize) -> Result<(), DatagenError> {
    if len % 2 == 0 || len < 3 || len > max_length {
        return Err(DatagenError::BadLength(len, max_length));
    }
    Ok(())
}

fn catalan(n: usize) -> u128 {
    let mut c: u128 = 1;
    for i in 0..n as u128 {
        c = c.saturating_mul(2 * (2 * i + 1)) / (i + 2);
    }
    c
}

/// Number of primitives the sampler can draw under `config`.
pub fn primitive_choices(config: &GrammarConfig) -> u128 {
    crate::lang::build_vocabulary(config).num_primitives() as u128
}

/// Count of distinct valid programs of `length`: tree shapes times leaf and
/// operator labelings.
pub fn distinct_programs(length: usize, config: &GrammarConfig) -> u128 {
    let leaves = length.div_ceil(2);
    let prims = primitive_choices(config);
    let ops = config.ops.len() as u128;
    let mut n = catalan(leaves - 1);
    for _ in 0..leaves {
        n = n.saturating_mul(prims);
    }
    for _ in 0..leaves - 1 {
        n = n.saturating_mul(ops);
    }
    n
}

fn pick<'a, T, R: Rng + ?Sized>(rng: &mut R, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

/// Draws kind, location and size uniformly from their grids; with the
/// containment filter on, draws again until the primitive fits the canvas.
pub fn sample_primitive<R: Rng + ?Sized>(rng: &mut R, config: &GrammarConfig) -> Primitive {
    let locs = config.locations.values();
    let radii = config.radii.values();
    let heights = config.heights.values();
    loop {
        let kind = *pick(rng, &config.primitives);
        let x = *pick(rng, &locs) as f64;
        let y = *pick(rng, &locs) as f64;
        let r = *pick(rng, &radii) as f64;
        let p = match config.dim {
            Dim::Two => Primitive::new_2d(kind, x, y, r),
            Dim::Three => {
                let z = *pick(rng, &locs) as f64;
                let h = *pick(rng, &heights) as f64;
                Primitive::new_3d(kind, x, y, z, r, h)
            }
        };
        if !config.containment_filter || contained(&p, config.canvas as f64) {
            return p;
        }
    }
}

/// Samples a valid program of exactly `length` instructions. At each position
/// the token class (primitive or op) is chosen uniformly among the classes that
/// keep the program completable.
pub fn sample_program<R: Rng + ?Sized>(length: usize, rng: &mut R, config: &GrammarConfig) -> Program {
    assert!(length % 2 == 1 && length >= 3, "length must be odd and >= 3");
    let leaves = length.div_ceil(2);
    let (mut prims_left, mut ops_left, mut depth) = (leaves, leaves - 1, 0usize);
    let mut out = Vec::with_capacity(length);
    for _ in 0..length {
        let can_push = prims_left > 0;
        let can_reduce = ops_left > 0 && depth >= 2;
        let push = match (can_push, can_reduce) {
            (true, true) => rng.random_bool(0.5),
            (p, _) => p,
        };
        if push {
            out.push(Instruction::Prim(sample_primitive(rng, config)));
            prims_left -= 1;
            depth += 1;
        } else {
            out.push(Instruction::Op(*pick(rng, &config.ops)));
            ops_left -= 1;
            depth -= 1;
        }
    }
    Program::new(out)
}

/// RNG for one sampling attempt.
pub fn attempt_rng(seed: u64, length: usize, attempt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((length as u64) << 48) ^ attempt);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub program: Program,
    pub raster: Raster,
    pub split: Split,
    pub length: usize,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn split(&self, s: Split) -> impl Iterator<Item = &DatasetRecord> {
        self.records.iter().filter(move |r| r.split == s)
    }
}

/// Samples the dataset described by `spec` in memory. Lengths are processed in
/// ascending order and splits in train/val/test order; a program already
/// present anywhere in the dataset, or one with an empty render when
/// `reject_empty` is set, is rejected and resampled. Capacity checks count
/// distinct programs regardless of their renders.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Dataset, DatagenError> {
    spec.validate()?;
    for (&len, counts) in &spec.counts {
        let available = distinct_programs(len, &spec.grammar);
        if counts.total() as u128 > available {
            return Err(DatagenError::Capacity { length: len, requested: counts.total(), available });
        }
    }
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (&len, counts) in &spec.counts {
        let mut attempt = 0u64;
        let budget = 1000 + 200 * counts.total() as u64;
        for split in Split::ALL {
            let mut made = 0;
            while made < counts.get(split) {
                if attempt >= budget {
                    return Err(DatagenError::Exhausted { length: len, attempts: attempt });
                }
                let mut rng = attempt_rng(spec.seed, len, attempt);
                attempt += 1;
                let program = sample_program(len, &mut rng, &spec.grammar);
                if !seen.insert(program.to_string()) {
                    continue;
                }
                let raster = render_program(&program, &spec.grammar).expect("sampled programs are valid");
                if spec.reject_empty && raster.count() == 0 {
                    continue;
                }
                records.push(DatasetRecord { program, raster, split, length: len });
                made += 1;
            }
        }
    }
    Ok(Dataset { spec: spec.clone(), records })
}

pub fn programs_file(split: Split, length: usize) -> String {
    format!("{}/programs_len{length}.csg", split.name())
}

pub fn rasters_file(split: Split, length: usize) -> String {
    format!("{}/rasters_len{length}.bin", split.name())
}

/// Writes `<root>/<split>/programs_len<L>.csg`, optional packed raster
/// archives next to them, `<root>/grammar.cfg` and `<root>/manifest.txt`.
/// Returns the manifest text.
pub fn write_dataset(ds: &Dataset, root: &Path, with_rasters: bool) -> Result<String, DatagenError> {
    let mut hasher = Sha256::new();
    for split in Split::ALL {
        fs::create_dir_all(root.join(split.name()))?;
    }
    let grammar_text = ds.spec.grammar.to_kv();
    fs::write(root.join("grammar.cfg"), &grammar_text)?;
    for split in Split::ALL {
        for &len in ds.spec.counts.keys() {
            let recs: Vec<_> = ds.records.iter().filter(|r| r.split == split && r.length == len).collect();
            let mut text = String::new();
            for r in &recs {
                let _ = writeln!(text, "{}", r.program);
            }
            let rel = programs_file(split, len);
            fs::write(root.join(&rel), &text)?;
            hasher.update(rel.as_bytes());
            hasher.update(text.as_bytes());
            if with_rasters {
                let mut w = BufWriter::new(fs::File::create(root.join(rasters_file(split, len)))?);
                for r in &recs {
                    rio::write_packed(&mut w, &r.raster)?;
                }
                w.flush()?;
            }
        }
    }
    let mut m = String::new();
    let _ = writeln!(m, "seed = {}", ds.spec.seed);
    let _ = writeln!(m, "dim = {}", ds.spec.grammar.dim.axes());
    let _ = writeln!(m, "config_sha256 = {}", ds.spec.grammar.fingerprint());
    for (&len, c) in &ds.spec.counts {
        for split in Split::ALL {
            let _ = writeln!(m, "{}_len{len} = {}", split.name(), c.get(split));
        }
    }
    let _ = writeln!(m, "reject_empty = {}", ds.spec.reject_empty as u8);
    let _ = writeln!(m, "rasters = {}", with_rasters as u8);
    let digest = hasher.finalize();
    let _ = writeln!(m, "programs_sha256 = {}", digest.iter().map(|b| format!("{b:02x}")).collect::<String>());
    fs::write(root.join("manifest.txt"), &m)?;
    Ok(m)
}

/// Reads one `.csg` file: one program per line, blank lines skipped.
pub fn read_programs(path: &Path, config: &GrammarConfig) -> Result<Vec<Program>, DatagenError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p = parse_program(line, config).map_err(|source| DatagenError::Parse {
            file: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        out.push(p);
    }
    Ok(out)
}

/// Loads every program of one split from a dataset directory written by
/// [`write_dataset`], re-rendering rasters from the programs.
pub fn load_split(root: &Path, split: Split) -> Result<(GrammarConfig, Vec<DatasetRecord>), DatagenError> {
    let grammar = GrammarConfig::from_kv(&fs::read_to_string(root.join("grammar.cfg"))?)?;
    let mut lengths = Vec::new();
    for entry in fs::read_dir(root.join(split.name()))? {
        let name = entry?.file_name().to_string_lossy().into_owned();
        if let Some(l) = name.strip_prefix("programs_len").and_then(|s| s.strip_suffix(".csg")) {
            if let Ok(l) = l.parse::<usize>() {
                lengths.push(l);
            }
        }
    }
    lengths.sort_unstable();
    let mut records = Vec::new();
    for len in lengths {
        for program in read_programs(&root.join(programs_file(split, len)), &grammar)? {
            let raster = render_program(&program, &grammar)
                .map_err(|e| DatagenError::Manifest(format!("stored program `{program}` does not execute: {e}")))?;
            records.push(DatasetRecord { program, raster, split, length: len });
        }
    }
    Ok((grammar, records))
}
