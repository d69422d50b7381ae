//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration, 3 data, 4 numeric blow-up,
//! 5 checkpoint.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{
    build_windows, load_utterances, DatasetError, Manifest, SamplerConfig, SamplingMode, Utterance, WindowExample,
};
use crate::ensemble::{
    alpha_sweep, blend, evaluate, format_sweep, EnsembleConfig, EnsembleError, EvalReport, DEFAULT_ALPHAS,
};
use crate::ingest::{self, IngestError};
use crate::synth::{self, SynthError, SynthSpec};
use crate::tdnn::{
    load_checkpoint, save_checkpoint, train_with_callback, EpochLog, Mode, OptimizerState, TdnnConfig, TdnnError,
    TdnnModel, TrainOptions, DEFAULT_CHANNELS,
};
use crate::types::{argmax, ModalityDims, PosteriorRecord, PunctClass, NUM_CLASSES};

pub const CONFIG_VERSION: u32 = 1;
pub const PREDICTION_HEADER: &str = "# utterance\ttoken_index\tlabel\tp_comma\tp_fullstop\tp_question\tp_nopunct";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
    #[error("{0}")]
    Checkpoint(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Checkpoint(_) => 5,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<TdnnError> for CliError {
    fn from(e: TdnnError) -> Self {
        let msg = e.to_string();
        match e {
            TdnnError::NonFiniteActivation { .. } | TdnnError::Diverged { .. } => CliError::Numeric(msg),
            TdnnError::VersionMismatch { .. } | TdnnError::CorruptCheckpoint(_) | TdnnError::Io { .. } => {
                CliError::Checkpoint(msg)
            }
            TdnnError::Config(_) | TdnnError::NonPositiveOutput { .. } => CliError::Config(msg),
            TdnnError::Shape(_) | TdnnError::EmptyDataset | TdnnError::StaleCache | TdnnError::EvalCache => {
                CliError::Data(msg)
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "punctfuse", version, about = "Multimodal punctuation restoration")]
pub struct Cli {
    /// Overrides the seed in the run config or synthesis spec.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; output does not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic fixture tree and manifest.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a manifest and write a checkpoint; per-epoch TSV on stdout.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Held-out manifest scored after each epoch.
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Per-transition predictions as TSV.
    Predict {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Weight of the network's posteriors; defaults to the config value.
        #[arg(long)]
        alpha: Option<f64>,
        /// Blend with the text posteriors listed in the manifest's fifth column.
        #[arg(long)]
        text_posteriors: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a prediction file against a gold manifest.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// F1 for each ensemble weight; TSV on stdout, table on stderr.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
}

/// Declarative run configuration.
///
/// ```toml
/// version = 1
///
/// [model]            # optional; chosen from the manifest widths if absent
/// input_dim = 24
/// d_fused = 8
/// head_hidden = 8
///
/// [train]
/// learning_rate = 1e-5
/// momentum = 0.9
/// batch_size = 32
/// epochs = 10
/// epoch_size = 1024
/// sampling = "balanced"  # or "natural"
/// seed = 0
/// target_accuracy = 0.99 # optional early stop
///
/// [ensemble]
/// alpha = 0.4
/// alphas = [0.3, 0.4, 0.5, 0.6, 0.7]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub model: Option<TdnnConfig>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub epoch_size: usize,
    pub sampling: SamplingMode,
    pub seed: u64,
    pub target_accuracy: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: OptimizerState::DEFAULT_LEARNING_RATE,
            momentum: OptimizerState::DEFAULT_MOMENTUM,
            batch_size: 32,
            epochs: 10,
            epoch_size: 1024,
            sampling: SamplingMode::Balanced,
            seed: 0,
            target_accuracy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub alpha: f64,
    pub alphas: Vec<f64>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self { alpha: 0.4, alphas: DEFAULT_ALPHAS.to_vec() }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { version: CONFIG_VERSION, model: None, train: TrainSection::default(), ensemble: EnsembleSection::default() }
    }
}

impl RunConfig {
    /// Parses and validates; `origin` names the file in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))?;
        cfg.validate().map_err(|m| CliError::Config(format!("{origin}: {m}")))?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.version != CONFIG_VERSION {
            return Err(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if let Some(model) = &self.model {
            model.validate().map_err(|e| format!("[model] {e}"))?;
        }
        let t = &self.train;
        if !(t.learning_rate >= 0.0 && t.learning_rate.is_finite()) {
            return Err("[train] learning_rate must be finite and non-negative".into());
        }
        if !(0.0..1.0).contains(&t.momentum) {
            return Err("[train] momentum must lie in [0, 1)".into());
        }
        if t.batch_size == 0 || t.epoch_size == 0 {
            return Err("[train] batch_size and epoch_size must be positive".into());
        }
        if t.target_accuracy.is_some_and(|a| !(0.0..=1.0).contains(&a)) {
            return Err("[train] target_accuracy must lie in [0, 1]".into());
        }
        for a in std::iter::once(&self.ensemble.alpha).chain(&self.ensemble.alphas) {
            EnsembleConfig::new(*a).map_err(|e| format!("[ensemble] {e}"))?;
        }
        Ok(())
    }

    /// Network for a manifest with the given widths: the configured one, or
    /// the default schedule sized to the widths.
    pub fn model_for(&self, dims: ModalityDims) -> Result<TdnnConfig, CliError> {
        let cfg = match &self.model {
            Some(m) => m.clone(),
            None if dims == ModalityDims::MINI => TdnnConfig::mini(),
            None => TdnnConfig::with_channels(dims.fused(), &DEFAULT_CHANNELS, 32),
        };
        if cfg.input_dim != dims.fused() {
            return Err(CliError::Config(format!(
                "[model] input_dim is {} but the manifest's frames are {}-dimensional",
                cfg.input_dim,
                dims.fused()
            )));
        }
        Ok(cfg)
    }

    pub fn train_options(&self) -> TrainOptions {
        let t = &self.train;
        TrainOptions {
            epochs: t.epochs,
            batch_size: t.batch_size,
            sampler: SamplerConfig { seed: t.seed.wrapping_add(1), epoch_size: t.epoch_size, mode: t.sampling },
            target_accuracy: t.target_accuracy,
            track_accuracy: true,
            ..TrainOptions::default()
        }
    }
}

/// One row of a prediction file.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub utterance: String,
    pub token_index: usize,
    pub label: PunctClass,
    pub probs: [f64; NUM_CLASSES],
}

pub fn format_predictions(rows: &[Prediction]) -> String {
    let mut out = String::from(PREDICTION_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!("{}\t{}\t{}", r.utterance, r.token_index, r.label.tsv_name()));
        for p in r.probs {
            out.push_str(&format!("\t{p}"));
        }
        out.push('\n');
    }
    out
}

pub fn parse_predictions(text: &str, origin: &str) -> Result<Vec<Prediction>, CliError> {
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |m: &str| CliError::Data(format!("{origin}:{}: {m}", i + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 + NUM_CLASSES {
            return Err(err(&format!("expected {} fields, found {}", 3 + NUM_CLASSES, f.len())));
        }
        let token_index = f[1].parse().map_err(|_| err("bad token index"))?;
        let label = PunctClass::from_tsv_name(f[2]).ok_or_else(|| err("unknown label"))?;
        let mut probs = [0.0; NUM_CLASSES];
        for (dst, src) in probs.iter_mut().zip(&f[3..]) {
            *dst = src.parse().map_err(|_| err("bad probability"))?;
        }
        rows.push(Prediction { utterance: f[0].to_string(), token_index, label, probs });
    }
    Ok(rows)
}

/// Parses arguments, runs the command and maps failures to exit codes.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli, &mut std::io::stdout(), &mut std::io::stderr()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Runs a parsed command, writing reports to `out` and diagnostics to `err`.
pub fn run(cli: &Cli, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    pool.install(|| dispatch(cli, out, err))
}

fn dispatch(cli: &Cli, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth { spec, out: dir } => cmd_synth(spec, dir, cli.seed, err),
        Command::Train { manifest, out: ckpt, validation } => {
            let cfg = with_seed(RunConfig::load(cli.config.as_deref())?, cli.seed);
            cmd_train(manifest, validation.as_deref(), &cfg, ckpt, out, err)
        }
        Command::Predict { manifest, checkpoint, alpha, text_posteriors, out: dest } => {
            let cfg = RunConfig::load(cli.config.as_deref())?;
            cmd_predict(manifest, checkpoint, alpha.unwrap_or(cfg.ensemble.alpha), *text_posteriors, dest, err)
        }
        Command::Evaluate { predictions, manifest } => cmd_evaluate(predictions, manifest, out, err),
        Command::Sweep { manifest, checkpoint, alphas } => {
            let cfg = RunConfig::load(cli.config.as_deref())?;
            cmd_sweep(manifest, checkpoint, alphas.as_deref().unwrap_or(&cfg.ensemble.alphas), out, err)
        }
    }
}

fn with_seed(mut cfg: RunConfig, seed: Option<u64>) -> RunConfig {
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    cfg
}

fn io_note(err: &mut dyn Write, msg: std::fmt::Arguments<'_>) {
    let _ = writeln!(err, "{msg}");
}

pub fn cmd_synth(spec_path: &Path, out_dir: &Path, seed: Option<u64>, err: &mut dyn Write) -> Result<(), CliError> {
    let text = fs::read_to_string(spec_path).map_err(|e| CliError::Config(format!("{}: {e}", spec_path.display())))?;
    let mut spec = SynthSpec::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", spec_path.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let utterances = synth::generate(&spec).map_err(|e| CliError::Config(e.to_string()))?;
    let manifest = synth::write_fixture(&utterances, spec.dims(), out_dir).map_err(|e| match e {
        SynthError::Ingest(inner) => CliError::Config(inner.to_string()),
        other => CliError::Config(other.to_string()),
    })?;
    io_note(err, format_args!("wrote {} utterances; manifest {}", utterances.len(), manifest.display()));
    Ok(())
}

fn load_examples(manifest: &Manifest, window_len: usize) -> Result<(Vec<Utterance>, Vec<WindowExample>), CliError> {
    let utterances = load_utterances(manifest)?;
    let windows = build_windows(&utterances, manifest.dims, window_len)?;
    Ok((utterances, windows))
}

pub fn cmd_train(
    manifest_path: &Path,
    validation: Option<&Path>,
    cfg: &RunConfig,
    checkpoint: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let manifest = Manifest::read(manifest_path)?;
    let model_cfg = cfg.model_for(manifest.dims)?;
    let (_, examples) = load_examples(&manifest, model_cfg.window_len)?;
    if examples.is_empty() {
        return Err(CliError::Data(format!("{}: no transitions to train on", manifest_path.display())));
    }
    let val_examples = match validation {
        Some(p) => {
            let m = Manifest::read(p)?;
            if m.dims != manifest.dims {
                return Err(CliError::Data(format!("{}: embedding widths differ from the training manifest", p.display())));
            }
            Some(load_examples(&m, model_cfg.window_len)?.1)
        }
        None => None,
    };

    let mut model = TdnnModel::init(model_cfg, cfg.train.seed)?;
    let mut opt = OptimizerState::new(&model, cfg.train.learning_rate, cfg.train.momentum)?;
    io_note(err, format_args!("{} training windows, {} parameters", examples.len(), model.num_params()));
    let mut write_failed = None;
    writeln!(out, "{}", EpochLog::TSV_HEADER).map_err(|e| CliError::Data(e.to_string()))?;
    train_with_callback(&mut model, &mut opt, &examples, val_examples.as_deref(), &cfg.train_options(), &mut |log| {
        if let Err(e) = writeln!(out, "{}", log.tsv_row()).and_then(|_| out.flush()) {
            write_failed.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_failed {
        return Err(CliError::Data(format!("writing the training log: {e}")));
    }
    model.set_mode(Mode::Eval);
    save_checkpoint(&model, &opt, checkpoint)?;
    Ok(())
}

fn load_model(checkpoint: &Path, dims: ModalityDims) -> Result<TdnnModel, CliError> {
    let (mut model, _) = load_checkpoint(checkpoint).map_err(|e| match e {
        TdnnError::Io { .. } | TdnnError::VersionMismatch { .. } | TdnnError::CorruptCheckpoint(_) => {
            CliError::Checkpoint(format!("{}: {e}", checkpoint.display()))
        }
        other => other.into(),
    })?;
    if model.config().input_dim != dims.fused() {
        return Err(CliError::Data(format!(
            "checkpoint expects {}-dimensional frames, manifest provides {}",
            model.config().input_dim,
            dims.fused()
        )));
    }
    model.set_mode(Mode::Eval);
    Ok(model)
}

/// Network posteriors for every window, paired with the matching text
/// posterior when `with_text` is set.
fn branch_posteriors(
    model: &TdnnModel,
    utterances: &[Utterance],
    windows: &[WindowExample],
    with_text: bool,
) -> Result<Vec<(PosteriorRecord, Option<PosteriorRecord>)>, CliError> {
    let views: Vec<_> = windows.iter().map(|w| w.window.view()).collect();
    let probs = model.predict_proba(&views, 64)?;
    windows
        .iter()
        .zip(probs)
        .map(|(w, p)| {
            let k = w.source.token_index;
            let y_a = PosteriorRecord::new(k, p).map_err(|e| CliError::Numeric(e.to_string()))?;
            if !with_text {
                return Ok((y_a, None));
            }
            let utt = utterances.iter().find(|u| u.id == w.source.utterance).expect("window from a loaded utterance");
            let records = utt
                .posteriors
                .as_ref()
                .ok_or_else(|| CliError::Data(format!("utterance {}: manifest lists no text posteriors", utt.id)))?;
            let y_t = records.iter().find(|r| r.token_index == k).ok_or_else(|| {
                CliError::Data(format!("utterance {}: no text posterior for token {k}", utt.id))
            })?;
            Ok((y_a, Some(*y_t)))
        })
        .collect()
}

pub fn cmd_predict(
    manifest_path: &Path,
    checkpoint: &Path,
    alpha: f64,
    text_posteriors: bool,
    dest: &Path,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    let cfg = EnsembleConfig::new(alpha).map_err(|e| CliError::Config(e.to_string()))?;
    let manifest = Manifest::read(manifest_path)?;
    let model = load_model(checkpoint, manifest.dims)?;
    let (utterances, windows) = load_examples(&manifest, model.config().window_len)?;
    let alpha = if text_posteriors {
        cfg.alpha()
    } else {
        io_note(err, format_args!("no text posteriors requested; predicting from the network alone (alpha = 1)"));
        1.0
    };
    let pairs = branch_posteriors(&model, &utterances, &windows, text_posteriors)?;
    let rows: Vec<Prediction> = windows
        .iter()
        .zip(&pairs)
        .map(|(w, (y_a, y_t))| {
            let probs = match y_t {
                Some(t) => blend(&y_a.probs, &t.probs, alpha),
                None => y_a.probs,
            };
            Prediction { utterance: w.source.utterance.clone(), token_index: y_a.token_index, label: argmax(&probs), probs }
        })
        .collect();
    fs::write(dest, format_predictions(&rows)).map_err(|e| CliError::Data(format!("{}: {e}", dest.display())))?;
    io_note(err, format_args!("wrote {} predictions to {}", rows.len(), dest.display()));
    Ok(())
}

pub fn cmd_evaluate(predictions: &Path, manifest_path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let text = fs::read_to_string(predictions).map_err(|e| CliError::Data(format!("{}: {e}", predictions.display())))?;
    let rows = parse_predictions(&text, &predictions.display().to_string())?;
    let manifest = Manifest::read(manifest_path)?;

    let mut preds = Vec::new();
    let mut golds = Vec::new();
    for entry in &manifest.entries {
        let align = ingest::read_alignment(&entry.alignment)?;
        let mine: Vec<&Prediction> = rows.iter().filter(|r| r.utterance == entry.utterance).collect();
        let aligned = mine.len() == align.len() && mine.iter().zip(align.entries()).all(|(p, e)| p.token_index == e.token_index);
        if !aligned {
            return Err(CliError::Data(format!(
                "utterance {}: {} predictions do not match its {} gold tokens",
                entry.utterance,
                mine.len(),
                align.len()
            )));
        }
        preds.extend(mine.iter().map(|p| p.label));
        golds.extend(align.labels());
    }
    if let Some(stray) = rows.iter().find(|r| !manifest.entries.iter().any(|e| e.utterance == r.utterance)) {
        return Err(CliError::Data(format!("utterance {}: not in the gold manifest", stray.utterance)));
    }
    let report = evaluate(&preds, &golds)?;
    writeln!(out, "{}\n{}", EvalReport::TSV_HEADER, report.tsv_fields()).map_err(|e| CliError::Data(e.to_string()))?;
    let _ = write!(err, "{}", report.table());
    Ok(())
}

pub fn cmd_sweep(
    manifest_path: &Path,
    checkpoint: &Path,
    alphas: &[f64],
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    for a in alphas {
        EnsembleConfig::new(*a).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let manifest = Manifest::read(manifest_path)?;
    let model = load_model(checkpoint, manifest.dims)?;
    let (utterances, windows) = load_examples(&manifest, model.config().window_len)?;
    let pairs = branch_posteriors(&model, &utterances, &windows, true)?;
    let (y_a, y_t): (Vec<PosteriorRecord>, Vec<PosteriorRecord>) =
        pairs.into_iter().map(|(a, t)| (a, t.expect("text posteriors requested"))).unzip();
    let golds: Vec<PunctClass> = windows.iter().map(|w| w.label).collect();
    let rows = alpha_sweep(&y_a, &y_t, &golds, alphas)?;
    write!(out, "{}", format_sweep(&rows)).map_err(|e| CliError::Data(e.to_string()))?;
    let mut table = String::from("alpha  comma    fullstop question overall\n");
    for r in &rows {
        let f = |c: usize| r.report.per_class[c].f1;
        table.push_str(&format!("{:<6} {:<8.2} {:<8.2} {:<8.2} {:.2}\n", r.alpha, f(0), f(1), f(2), r.report.overall_f1));
    }
    let _ = write!(err, "{table}");
    Ok(())
}
