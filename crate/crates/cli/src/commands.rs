use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use vtinv_core::corpus::{load_corpus, write_contour_csv, write_matrix_csv, SeqKey, Split};
use vtinv_core::eval::{compare_to_baseline, parse_frame_errors_csv};
use vtinv_core::experiment::{
    evaluate_constant_mean, evaluate_model, frame_errors_path, predict_sequence, prepare_corpus,
    prepare_from_checkpoint, train_experiment, ExperimentKind, RunConfig, PRESETS,
};
use vtinv_core::net::{grad_check, small_config, Checkpoint};
use vtinv_core::synth::{write_corpus, SynthSpec};
use vtinv_core::Error;

use crate::svg::emit_contour_svg;

const CONFIG_HELP: &str = "\
Configuration precedence, lowest to highest:
  1. --preset (desk: 64 units, 30 epochs; paper: 300 units, 300 epochs)
  2. --config FILE (flat `key = value` lines, `#` comments)
  3. --set KEY=VALUE, applied in order
  4. --seed N, which sets both model.seed and train.seed";

#[derive(Parser, Debug)]
#[command(name = "vtinv", version, about = "Vocal-tract contour inversion experiments")]
#[command(after_help = "Environment: VTINV_THREADS caps the worker pool. RUST_LOG sets log verbosity (default info).")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic corpus directory.
    Synth(SynthArgs),
    /// Write the normalized network inputs of every sequence.
    #[command(after_help = CONFIG_HELP)]
    Featurize(FeaturizeArgs),
    /// Train one experiment; writes checkpoint, history, config and a
    /// validation report.
    #[command(after_help = CONFIG_HELP)]
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split and write a report CSV.
    Eval(EvalArgs),
    /// Write predicted contours for one sequence's speech frames.
    Predict(PredictArgs),
    /// Compare analytic and finite-difference gradients on a small network.
    Gradcheck(GradcheckArgs),
    /// Overlay predicted and true contours of one frame as SVG.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 40)]
    pub sequences: usize,
    #[arg(long, default_value_t = 120)]
    pub frames: usize,
    /// Phone labels including silence.
    #[arg(long, default_value_t = 12)]
    pub inventory: usize,
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    #[arg(long, default_value = "paper", value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
    pub preset: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct FeaturizeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub experiment: ExperimentKind,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub experiment: ExperimentKind,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_parser = ["train", "val", "test"])]
    pub split: String,
    /// Report of a baseline evaluated on the same split; its per-frame
    /// companion file supplies the t-test samples.
    #[arg(long)]
    pub baseline_report: Option<PathBuf>,
    /// Evaluate the training-mean contour instead of the network.
    #[arg(long)]
    pub constant_mean: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `session/sequence`
    #[arg(long)]
    pub seq: SeqKey,
    /// Contour CSV; frames are numbered over speech frames only.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Single seed; without it seeds 0, 1 and 2 are checked.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 7)]
    pub frames: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub seq: SeqKey,
    /// Frame index in the original sequence; must be a speech frame.
    #[arg(long)]
    pub frame: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CliError::Usage(m),
            other => CliError::Data(other),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("VTINV_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("VTINV_THREADS must be a positive integer, found `{v}`")))?;
    // A second call in the same process (tests) finds the pool already built.
    if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_ok() {
        log::info!("worker pool capped at {n} threads");
    }
    Ok(())
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Synth(a) => synth(a),
        Command::Featurize(a) => featurize(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Plot(a) => plot(a),
    }
}

/// Preset, then config file, then `--set` pairs, then `--seed`.
pub fn resolve_config(args: &ConfigArgs) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::preset(&args.preset)?;
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(Error::Io { path: path.clone(), source: e }))?;
        cfg.apply_text(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => CliError::Usage(format!("{}: line {line}: {msg}", path.display())),
            other => other.into(),
        })?;
    }
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, found `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = args.seed {
        cfg.model_seed = seed;
        cfg.train.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn log_config(cfg: &RunConfig) {
    log::info!(
        "model seed {}, train seed {}, split seed {}",
        cfg.model_seed,
        cfg.train.seed,
        cfg.split_seed
    );
    for (k, v) in cfg.pairs() {
        log::info!("  {k} = {v}");
    }
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Data(Error::Io { path: path.into(), source: e }))
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    let ck = Checkpoint::load(path)?;
    log::info!(
        "checkpoint {}: experiment {}, model seed {}, train seed {}",
        path.display(),
        ck.setting("experiment")?,
        ck.setting("model.seed")?,
        ck.setting("train.seed")?
    );
    Ok(ck)
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let spec = SynthSpec {
        n_sequences: a.sequences,
        frames_per_sequence: a.frames,
        inventory_size: a.inventory,
        seed: a.seed,
        ..SynthSpec::default()
    };
    spec.validate()?;
    if std::fs::read_dir(&a.out).is_ok_and(|mut d| d.next().is_some()) {
        return Err(CliError::Usage(format!("{}: output directory is not empty", a.out.display())));
    }
    log::info!("{spec:?}");
    let keys = write_corpus(&a.out, &spec)?;
    println!("wrote {} sequences to {}", keys.len(), a.out.display());
    Ok(())
}

fn featurize(a: FeaturizeArgs) -> CliResult<()> {
    let cfg = resolve_config(&a.config)?;
    log_config(&cfg);
    let records = load_corpus(&a.corpus)?;
    let data = prepare_corpus(&records, a.experiment, &cfg, None)?;
    let mut index = String::from("sequence,split,speech_frames,dim\n");
    for (split, name) in [(Split::Train, "train"), (Split::Validation, "val"), (Split::Test, "test")] {
        for key in data.split.get(split) {
            let s = &data.sequences[key];
            index.push_str(&format!("{key},{name},{},{}\n", s.kept.len(), s.features.ncols()));
            if !s.kept.is_empty() {
                let path = a.out.join(&key.session_id).join(format!("{}.csv", key.seq_id));
                write_file(&path, &write_matrix_csv(&s.features))?;
            }
        }
    }
    write_file(&a.out.join("index.csv"), &index)?;
    println!(
        "{} features ({} dims) for {} sequences in {}",
        a.experiment,
        data.input_dim(),
        data.sequences.len(),
        a.out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> CliResult<()> {
    let cfg = resolve_config(&a.config)?;
    log::info!("experiment {}", a.experiment);
    log_config(&cfg);
    let records = load_corpus(&a.corpus)?;
    let outcome = train_experiment(&records, a.experiment, &cfg)?;
    outcome.write(&a.out)?;
    let h = &outcome.history;
    println!(
        "best epoch {} of {} (val mse {:.6}); validation mean RMSE {:.4} mm; outputs in {}",
        h.best_epoch,
        h.stopped_epoch,
        h.best_val_loss(),
        outcome.validation.report.overall.rmse_mean_mm,
        a.out.display()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> CliResult<()> {
    let split: Split = a.split.parse().map_err(CliError::Usage)?;
    let ck = load_checkpoint(&a.checkpoint)?;
    let records = load_corpus(&a.corpus)?;
    let (data, cfg) = prepare_from_checkpoint(&records, &ck)?;
    let mut evaluation = if a.constant_mean {
        evaluate_constant_mean(&data, split, &cfg)?
    } else {
        evaluate_model(&ck.params, &data, split, &cfg)?
    };
    if let Some(b) = &a.baseline_report {
        let fp = frame_errors_path(b);
        let text = std::fs::read_to_string(&fp).map_err(|e| CliError::Data(Error::Io { path: fp.clone(), source: e }))?;
        let baseline = parse_frame_errors_csv(&text)?;
        compare_to_baseline(&mut evaluation.report, &evaluation.frames, &baseline)?;
    }
    evaluation.write(&a.out)?;
    println!(
        "{} frames; mean RMSE {:.4} ± {:.4} mm; report in {}",
        evaluation.frames.len(),
        evaluation.report.overall.rmse_mean_mm,
        evaluation.report.overall.rmse_std_mm,
        a.out.display()
    );
    Ok(())
}

fn predict(a: PredictArgs) -> CliResult<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let records = load_corpus(&a.corpus)?;
    let (pred, _) = predict_sequence(&records, &ck, &a.seq)?;
    write_file(&a.out, &write_contour_csv(&pred))?;
    println!("{} speech frames of {} written to {}", pred.len(), a.seq, a.out.display());
    Ok(())
}

fn gradcheck(a: GradcheckArgs) -> CliResult<()> {
    let seeds: Vec<u64> = match a.seed {
        Some(s) => vec![s],
        None => vec![0, 1, 2],
    };
    let mut failed = Vec::new();
    for seed in seeds {
        let r = grad_check(&small_config(seed), a.frames, a.eps)?;
        let ok = r.max_rel_error < a.tolerance;
        println!(
            "seed {seed}: max relative error {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e}), {} parameters, sample seed {} -> {}",
            r.max_rel_error,
            r.worst.0,
            r.worst.1,
            r.worst_values.0,
            r.worst_values.1,
            r.n_checked,
            r.seed_used,
            if ok { "ok" } else { "FAIL" }
        );
        if !ok {
            failed.push(seed);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Data(Error::Contract(format!(
            "gradient check above {} for seeds {failed:?}",
            a.tolerance
        ))))
    }
}

fn plot(a: PlotArgs) -> CliResult<()> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let records = load_corpus(&a.corpus)?;
    let (pred, seq) = predict_sequence(&records, &ck, &a.seq)?;
    let pos = seq.kept.iter().position(|&t| t == a.frame).ok_or_else(|| {
        CliError::Usage(format!("frame {} of {} is not a speech frame", a.frame, a.seq))
    })?;
    let svg = emit_contour_svg(
        &pred.frames[pos],
        &seq.contours.frames[pos],
        &format!("{} frame {}", a.seq, a.frame),
    )?;
    write_file(&a.out, &svg)?;
    println!("wrote {}", a.out.display());
    Ok(())
}
