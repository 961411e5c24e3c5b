//! Command-line front end: dataset generation, execution, training,
//! inference, evaluation, detection and plotting.

pub mod plot;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::datagen::{generate_dataset, load_split, read_programs, write_dataset, DatasetSpec, Split, SplitCounts};
use crate::eval::{
    default_jobs, eval_reconstruction_with, map_evaluation, par_map, reconstruct, write_detections, Detection,
    EvalOptions, GroundTruth,
};
use crate::exec::{execute, io as rio, Raster};
use crate::lang::{build_vocabulary, format_program, parse_program, Dim, GrammarConfig, Program, Vocabulary};
use crate::policy::{init_policy, ArchConfig, NeuralPolicy, PolicyNet};
use crate::search::beam_search;
use crate::training::{train_reinforce, train_supervised, Example, OptimizerKind, TrainConfig, TrainMode};

/// Environment variable naming a default grammar config file.
pub const CONFIG_ENV: &str = "CSGKIT_CONFIG";

#[derive(Parser, Debug)]
#[command(name = "csgkit", version, about = "CSG program induction toolkit")]
pub struct Cli {
    /// Grammar config file (key = value lines).
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Grammar dimension used when no config file is given.
    #[arg(long, global = true, value_enum, default_value = "2d")]
    pub dim: DimArg,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for per-item stages (default: available cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Report per-item failures in the output and still exit 0.
    #[arg(long, global = true)]
    pub keep_going: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DimArg {
    #[value(name = "2d")]
    Two,
    #[value(name = "3d")]
    Three,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Full,
    Small,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Supervised,
    Reinforce,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample, deduplicate and render a synthetic dataset.
    Gen(GenArgs),
    /// Execute programs from a file and write their renderings.
    Exec(ExecArgs),
    /// Train a policy with supervision or policy gradients.
    Train(TrainArgs),
    /// Decode programs for target shapes.
    Infer(InferArgs),
    /// Reconstruction metrics for a set of targets.
    Eval(InferArgs),
    /// Score primitive detections and average precision.
    Detect(DetectArgs),
    /// Render SVG charts.
    Plot(PlotArgs),
}

fn odd_length(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|_| format!("`{s}` is not a length"))?;
    if n % 2 == 0 || n < 3 {
        return Err(format!("program length must be odd and at least 3, got {n}"));
    }
    Ok(n)
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "small")]
    pub preset: Preset,
    /// Restrict to these program lengths (repeatable, odd).
    #[arg(long = "len", value_parser = odd_length)]
    pub lengths: Vec<usize>,
    /// Override per-length split sizes.
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub val: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    /// Also write packed raster archives.
    #[arg(long)]
    pub rasters: bool,
    /// Keep programs whose rendering is empty.
    #[arg(long)]
    pub keep_empty: bool,
}

#[derive(Args, Debug)]
pub struct ExecArgs {
    /// Program file, one program per line.
    pub programs: PathBuf,
    /// Output directory for renderings (PGM in 2D, packed archive in 3D).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write every intermediate top-of-stack.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset root written by `gen`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "supervised")]
    pub mode: ModeArg,
    /// Training hyperparameters file; flags override it.
    #[arg(long)]
    pub train_config: Option<PathBuf>,
    /// Starting checkpoint (for fine-tuning).
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub rollouts: Option<usize>,
    /// Execution-stack maps fed to the encoder.
    #[arg(long, default_value_t = 0)]
    pub stack_k: usize,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Use at most this many training items.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TargetArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset root, `.csg` program file, `.bin` raster archive or `.pgm` image.
    #[arg(long)]
    pub targets: PathBuf,
    /// Split to read when `--targets` is a dataset root.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Use at most this many targets.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub beam: usize,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[arg(long, default_value_t = 0)]
    pub refine_iters: usize,
    #[arg(long, value_enum, default_value = "on")]
    pub mask: Switch,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[arg(long, default_value_t = 0.5)]
    pub iou_threshold: f64,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Reward-shaping curves for these comma-separated gammas.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub shaping: Vec<f64>,
    /// Training log CSV to draw as curves against its first column.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Columns of `--curve` to draw (default: all but the first).
    #[arg(long, value_delimiter = ',')]
    pub columns: Vec<String>,
    /// Two-column CSV (label,value[,error]) to draw as bars, e.g. CD per gamma.
    #[arg(long)]
    pub bars: Option<PathBuf>,
    #[arg(long)]
    pub title: Option<String>,
}

/// Error of a subcommand; `Usage` maps to exit code 2.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed(String),
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Failed(e.to_string())
    }
}

fn fail(msg: impl Into<String>) -> CliError {
    CliError::Failed(msg.into())
}

/// Settings shared by every subcommand.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub config_path: Option<PathBuf>,
    pub dim: Dim,
    pub seed: u64,
    pub jobs: usize,
    pub keep_going: bool,
}

impl RunConfig {
    fn from_cli(cli: &Cli) -> Self {
        RunConfig {
            config_path: cli.config.clone(),
            dim: match cli.dim {
                DimArg::Two => Dim::Two,
                DimArg::Three => Dim::Three,
            },
            seed: cli.seed,
            jobs: cli.jobs.unwrap_or_else(default_jobs).max(1),
            keep_going: cli.keep_going,
        }
    }

    /// Grammar from `--config`/the environment, else `fallback`, else the
    /// default for `--dim`.
    fn grammar(&self, fallback: Option<&Path>) -> Result<GrammarConfig, CliError> {
        if let Some(p) = self.config_path.as_deref().or(fallback) {
            let text = fs::read_to_string(p).map_err(|e| fail(format!("{}: {e}", p.display())))?;
            return Ok(GrammarConfig::from_kv(&text)?);
        }
        Ok(match self.dim {
            Dim::Two => GrammarConfig::default_2d(),
            Dim::Three => GrammarConfig::default_3d(),
        })
    }
}

/// Parses arguments, runs the subcommand and maps the outcome to an exit code.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Failed(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let rc = RunConfig::from_cli(cli);
    match &cli.command {
        Command::Gen(a) => cmd_gen(&rc, a),
        Command::Exec(a) => cmd_exec(&rc, a),
        Command::Train(a) => cmd_train(&rc, a),
        Command::Infer(a) => cmd_infer(&rc, a),
        Command::Eval(a) => cmd_eval(&rc, a),
        Command::Detect(a) => cmd_detect(&rc, a),
        Command::Plot(a) => cmd_plot(a),
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn cmd_gen(rc: &RunConfig, a: &GenArgs) -> Result<(), CliError> {
    let grammar = rc.grammar(None)?;
    let mut spec = match a.preset {
        Preset::Full => DatasetSpec::full(grammar, rc.seed),
        Preset::Small => DatasetSpec::small(grammar, rc.seed),
    };
    spec.reject_empty = !a.keep_empty;
    if !a.lengths.is_empty() {
        let mut counts = BTreeMap::new();
        for &len in &a.lengths {
            let base = spec.counts.get(&len).copied().unwrap_or(SplitCounts::new(100, 10, 10));
            counts.insert(len, base);
        }
        spec.counts = counts;
    }
    for c in spec.counts.values_mut() {
        *c = SplitCounts::new(a.train.unwrap_or(c.train), a.val.unwrap_or(c.val), a.test.unwrap_or(c.test));
    }
    let ds = generate_dataset(&spec)?;
    let manifest = write_dataset(&ds, &a.out, a.rasters)?;
    print!("{manifest}");
    Ok(())
}

pub fn cmd_exec(rc: &RunConfig, a: &ExecArgs) -> Result<(), CliError> {
    let grammar = rc.grammar(None)?;
    let text = fs::read_to_string(&a.programs).map_err(|e| fail(format!("{}: {e}", a.programs.display())))?;
    if let Some(out) = &a.out {
        fs::create_dir_all(out)?;
    }
    let mut errors = 0;
    let mut index = 0;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = n + 1;
        let result = parse_program(line, &grammar)
            .map_err(|e| e.to_string())
            .and_then(|p| execute(&p, &grammar).map_err(|e| e.to_string()).map(|r| (p, r)));
        let (program, (raster, trace)) = match result {
            Ok(v) => v,
            Err(e) => {
                eprintln!("{}:{lineno}: {e}", a.programs.display());
                errors += 1;
                continue;
            }
        };
        let depths: Vec<String> = trace.iter().map(|s| s.depth.to_string()).collect();
        println!("{lineno}\t{}\tcells={}\tdepths=[{}]", format_program(&program), raster.count(), depths.join(","));
        if let Some(out) = &a.out {
            write_raster(&out.join(format!("{index:04}")), &raster)?;
            if a.trace {
                let mut log = create(&out.join(format!("{index:04}_trace.txt")))?;
                for (t, step) in trace.iter().enumerate() {
                    writeln!(log, "{t}\t{}\tdepth={}\ttop_cells={}", step.instruction, step.depth, step.top.count())?;
                    write_raster(&out.join(format!("{index:04}_step{t:02}")), &step.top)?;
                }
                log.flush()?;
            }
        }
        index += 1;
    }
    if errors > 0 && !rc.keep_going {
        return Err(fail(format!("{errors} program(s) failed")));
    }
    Ok(())
}

fn write_raster(stem: &Path, r: &Raster) -> Result<(), CliError> {
    match r.dim() {
        Dim::Two => {
            let mut w = create(&stem.with_extension("pgm"))?;
            rio::write_pgm(&mut w, r)?;
            w.flush()?;
        }
        Dim::Three => {
            let mut w = create(&stem.with_extension("bin"))?;
            rio::write_packed(&mut w, r)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn examples_of(records: &[crate::datagen::DatasetRecord], vocab: &Vocabulary) -> Result<Vec<Example>, CliError> {
    records
        .iter()
        .map(|r| {
            Example::new(r.raster.clone(), &r.program, vocab)
                .ok_or_else(|| fail(format!("program `{}` is not in the vocabulary", r.program)))
        })
        .collect()
}

pub fn cmd_train(rc: &RunConfig, a: &TrainArgs) -> Result<(), CliError> {
    let grammar = rc.grammar(Some(&a.data.join("grammar.cfg")))?;
    let vocab = build_vocabulary(&grammar);
    let mut cfg = match &a.train_config {
        Some(p) => TrainConfig::from_kv(&fs::read_to_string(p)?)?,
        None => match a.mode {
            ModeArg::Supervised => TrainConfig::supervised(),
            ModeArg::Reinforce => TrainConfig::reinforce(),
        },
    };
    cfg.mode = match a.mode {
        ModeArg::Supervised => TrainMode::Supervised,
        ModeArg::Reinforce => TrainMode::Reinforce,
    };
    if a.train_config.is_none() && cfg.mode == TrainMode::Reinforce {
        cfg.optimizer = OptimizerKind::Sgd;
    }
    cfg.seed = rc.seed;
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.lr = a.lr.unwrap_or(cfg.lr);
    cfg.batch_size = a.batch.unwrap_or(cfg.batch_size);
    cfg.gamma = a.gamma.unwrap_or(cfg.gamma);
    cfg.rollouts = a.rollouts.unwrap_or(cfg.rollouts);
    cfg.validate()?;

    let mut net = match &a.init {
        Some(p) => PolicyNet::load(&mut fs::File::open(p).map_err(|e| fail(format!("{}: {e}", p.display())))?, &vocab)?,
        None => {
            let mut arch = ArchConfig::for_grammar(&grammar, a.stack_k);
            if let Some(d) = a.dropout {
                arch.dropout = d;
            }
            init_policy(&arch, &vocab, rc.seed)?
        }
    };
    fs::create_dir_all(&a.out)?;
    fs::write(a.out.join("grammar.cfg"), grammar.to_kv())?;
    fs::write(a.out.join("train.cfg"), cfg.to_kv())?;
    fs::write(a.out.join("arch.cfg"), net.arch().to_kv())?;
    let (_, mut train) = load_split(&a.data, Split::Train)?;
    if let Some(n) = a.limit {
        train.truncate(n);
    }
    let mut log = create(&a.out.join("log.csv"))?;
    match cfg.mode {
        TrainMode::Supervised => {
            let (_, val) = load_split(&a.data, Split::Val)?;
            let train = examples_of(&train, &vocab)?;
            let val = examples_of(&val, &vocab)?;
            let best = a.out.join("best.ckpt");
            let outcome = train_supervised(&mut net, &train, &val, &cfg, &vocab, &grammar, Some(&mut log), Some(&best))?;
            if let Some(last) = outcome.curve.last() {
                println!(
                    "epoch {}: train loss {:.4} acc {:.4}; best val epoch {}",
                    last.epoch, last.train_loss, last.train_acc, outcome.best_epoch
                );
            }
        }
        TrainMode::Reinforce => {
            let targets: Vec<Raster> = train.into_iter().map(|r| r.raster).collect();
            let stats = train_reinforce(&mut net, &targets, &cfg, &vocab, &grammar, Some(&mut log))?;
            if let Some(last) = stats.last() {
                println!("step {}: mean reward {:.4}, baseline {:.4}", last.step, last.mean_reward, last.baseline);
            }
        }
    }
    log.flush()?;
    let mut w = create(&a.out.join("policy.ckpt"))?;
    net.save(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Targets plus their source programs when known.
struct Targets {
    rasters: Vec<Raster>,
    programs: Option<Vec<Program>>,
}

fn load_targets(a: &TargetArgs, grammar: &GrammarConfig) -> Result<Targets, CliError> {
    let p = &a.targets;
    let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
    let mut t = if p.is_dir() {
        let (_, recs) = load_split(p, a.split.into())?;
        let programs = recs.iter().map(|r| r.program.clone()).collect();
        Targets { rasters: recs.into_iter().map(|r| r.raster).collect(), programs: Some(programs) }
    } else if ext == "csg" {
        let programs = read_programs(p, grammar)?;
        let rasters = programs
            .iter()
            .map(|q| execute(q, grammar).map(|r| r.0))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| fail(format!("{}: {e}", p.display())))?;
        Targets { rasters, programs: Some(programs) }
    } else if ext == "pgm" {
        Targets { rasters: vec![rio::read_pgm(&mut fs::File::open(p)?)?], programs: None }
    } else if ext == "bin" {
        Targets { rasters: rio::read_archive(&mut std::io::BufReader::new(fs::File::open(p)?))?, programs: None }
    } else {
        return Err(CliError::Usage(format!("{}: expected a dataset directory, .csg, .bin or .pgm", p.display())));
    };
    if let Some(n) = a.limit {
        t.rasters.truncate(n);
        if let Some(ps) = t.programs.as_mut() {
            ps.truncate(n);
        }
    }
    let shape = grammar.raster_shape();
    if let Some(bad) = t.rasters.iter().position(|r| r.shape() != shape) {
        return Err(fail(format!("target {bad} has shape {:?}, the grammar expects {shape:?}", t.rasters[bad].shape())));
    }
    Ok(t)
}

fn load_policy(rc: &RunConfig, a: &TargetArgs) -> Result<(GrammarConfig, Vocabulary, PolicyNet), CliError> {
    let beside = a.checkpoint.parent().map(|d| d.join("grammar.cfg")).filter(|p| p.exists());
    let grammar = rc.grammar(beside.as_deref())?;
    let vocab = build_vocabulary(&grammar);
    let file = fs::File::open(&a.checkpoint).map_err(|e| fail(format!("{}: {e}", a.checkpoint.display())))?;
    let net = PolicyNet::load(&mut std::io::BufReader::new(file), &vocab)?;
    Ok((grammar, vocab, net))
}

fn check_beam(k: usize) -> Result<(), CliError> {
    if k == 0 {
        return Err(CliError::Usage("--beam must be at least 1".into()));
    }
    Ok(())
}

pub fn cmd_infer(rc: &RunConfig, a: &InferArgs) -> Result<(), CliError> {
    check_beam(a.target.beam)?;
    let (grammar, vocab, net) = load_policy(rc, &a.target)?;
    let targets = load_targets(&a.target, &grammar)?;
    let policy = NeuralPolicy::new(&net, &vocab, &grammar);
    let opts = EvalOptions { k: a.target.beam, refine_iters: a.refine_iters, grammar_mask: a.mask == Switch::On, jobs: rc.jobs };
    let items = par_map(&targets.rasters, rc.jobs, |i, t| reconstruct(&policy, i, t, &opts, &grammar));
    let mut w = output(a.target.out.as_deref())?;
    writeln!(w, "id,program,cd_unrefined,cd_pixels,error")?;
    for it in &items {
        let prog = it.program.as_ref().map(format_program).unwrap_or_default();
        let err = it.error.as_deref().unwrap_or("").replace(',', ";");
        writeln!(w, "{},{},{:.6},{:.6},{}", it.id, prog, it.cd_unrefined, it.cd_pixels, err)?;
    }
    w.flush()?;
    finish(rc, items.iter().filter(|i| i.error.is_some()).count())
}

fn finish(rc: &RunConfig, errors: usize) -> Result<(), CliError> {
    if errors > 0 && !rc.keep_going {
        return Err(fail(format!("{errors} item(s) failed")));
    }
    Ok(())
}

pub fn cmd_eval(rc: &RunConfig, a: &InferArgs) -> Result<(), CliError> {
    check_beam(a.target.beam)?;
    let (grammar, vocab, net) = load_policy(rc, &a.target)?;
    let targets = load_targets(&a.target, &grammar)?;
    let policy = NeuralPolicy::new(&net, &vocab, &grammar);
    let opts = EvalOptions { k: a.target.beam, refine_iters: a.refine_iters, grammar_mask: a.mask == Switch::On, jobs: rc.jobs };
    let report = eval_reconstruction_with(&policy, &targets.rasters, &opts, &grammar);
    let mut w = output(a.target.out.as_deref())?;
    report.write_csv(&mut w)?;
    w.flush()?;
    eprint!("{}", report.summary());
    finish(rc, report.num_errors())
}

pub fn cmd_detect(rc: &RunConfig, a: &DetectArgs) -> Result<(), CliError> {
    check_beam(a.target.beam)?;
    let (grammar, vocab, net) = load_policy(rc, &a.target)?;
    let targets = load_targets(&a.target, &grammar)?;
    let policy = NeuralPolicy::new(&net, &vocab, &grammar);
    let k = a.target.beam;
    let detections: Vec<Vec<Detection>> = par_map(&targets.rasters, rc.jobs, |_, t| {
        let programs: Vec<Program> = beam_search(&policy, t, k, &grammar, true).into_iter().map(|d| d.program).collect();
        crate::eval::detections_from_programs(&programs)
    });
    let mut w = output(a.target.out.as_deref())?;
    write_detections(&mut w, &detections)?;
    w.flush()?;
    if let Some(programs) = &targets.programs {
        let truth: Vec<Vec<GroundTruth>> = programs.iter().map(|p| p.primitives().map(GroundTruth::of).collect()).collect();
        let rep = map_evaluation(&detections, &truth, a.iou_threshold);
        for (kind, ap) in &rep.per_class {
            eprintln!("AP {:<9} {ap:.4}", kind.name());
        }
        eprintln!("MAP {:.4}", rep.map);
    }
    Ok(())
}

pub fn cmd_plot(a: &PlotArgs) -> Result<(), CliError> {
    let chosen = [!a.shaping.is_empty(), a.curve.is_some(), a.bars.is_some()].iter().filter(|b| **b).count();
    if chosen != 1 {
        return Err(CliError::Usage("give exactly one of --shaping, --curve or --bars".into()));
    }
    let svg = if !a.shaping.is_empty() {
        if a.shaping.iter().any(|g| !(*g > 0.0)) {
            return Err(CliError::Usage("gammas must be positive".into()));
        }
        let title = a.title.clone().unwrap_or_else(|| "Reward shaping (1 - x)^gamma".into());
        plot::line_chart(&title, "normalized Chamfer distance", "reward", &plot::shaping_series(&a.shaping, 200))
    } else if let Some(path) = &a.curve {
        let (header, cols) = plot::read_numeric_csv(&fs::read_to_string(path)?).map_err(|e| fail(format!("{}: {e}", path.display())))?;
        let wanted: Vec<usize> = if a.columns.is_empty() {
            (1..header.len()).collect()
        } else {
            a.columns
                .iter()
                .map(|c| header.iter().position(|h| h == c).ok_or_else(|| fail(format!("no column `{c}` in {}", path.display()))))
                .collect::<Result<_, _>>()?
        };
        let series: Vec<plot::Series> = wanted
            .iter()
            .map(|&c| plot::Series { name: header[c].clone(), points: cols[0].iter().copied().zip(cols[c].iter().copied()).collect() })
            .collect();
        let title = a.title.clone().unwrap_or_else(|| path.display().to_string());
        plot::line_chart(&title, &header[0], "value", &series)
    } else {
        let path = a.bars.as_ref().unwrap();
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| fail("empty CSV"))?.split(',').collect();
        let mut bars = Vec::new();
        for (n, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            let num = |s: &str| s.parse::<f64>().map_err(|_| fail(format!("{}: row {}: `{s}` is not a number", path.display(), n + 2)));
            if cells.len() < 2 {
                return Err(fail(format!("{}: row {} needs label,value", path.display(), n + 2)));
            }
            let err = cells.get(2).filter(|s| !s.is_empty()).map(|s| num(s)).transpose()?;
            bars.push((cells[0].to_string(), num(cells[1])?, err));
        }
        let title = a.title.clone().unwrap_or_else(|| format!("{} by {}", header.get(1).unwrap_or(&"value"), header[0]));
        plot::bar_chart(&title, header[0], header.get(1).copied().unwrap_or("value"), &bars)
    };
    let mut w = create(&a.out)?;
    w.write_all(svg.as_bytes())?;
    w.flush()?;
    Ok(())
}
