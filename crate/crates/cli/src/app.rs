use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::Settings;
use crate::corpus::{load_corpus, write_corpus};
use crate::error::{EvalError, Result};
use crate::metrics::{best_f1, theta_grid, threshold_sweep, write_sweep_csv, SweepInput};
use crate::report::{read_reports, summarize, write_line, FailedRecord, ReportLine, ReportRecord};
use crate::run::{Mode, Runner};
use crate::synth::{synth_corpus, SynthConfig};

#[derive(Debug, Parser)]
#[command(
    name = "ce-ocr",
    version,
    about = "Score, ensemble and route multi-model OCR outputs by consensus entropy"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Entropy and per-candidate weights for every sample.
    Score(RunArgs),
    /// Entropy plus the weighted-vote ensemble text.
    Ensemble(RunArgs),
    /// Full pipeline: high-entropy samples go to the expert backend.
    Route(RunArgs),
    /// Route a corpus with truth and report candidate, ensemble and ROVER scores.
    Eval(EvalArgs),
    /// Routed fraction, precision, recall and F1 over a threshold grid (CSV).
    Sweep(SweepArgs),
    /// Generate a synthetic corpus of truths and corrupted candidates.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Corpus JSONL, one sample per line.
    pub corpus: PathBuf,
    /// TOML file with default settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
    /// Write reports here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Write the JSON summary here instead of stderr.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Score this corpus first.
    #[arg(long, required_unless_present = "reports", conflicts_with = "reports")]
    pub corpus: Option<PathBuf>,
    /// Reuse deltas, labels and scores from an earlier report file.
    #[arg(long)]
    pub reports: Option<PathBuf>,
    /// Comma-separated ascending thresholds.
    #[arg(long, value_delimiter = ',')]
    pub thetas: Option<Vec<f64>>,
    /// Evenly spaced thresholds from 0 to 1 when --thetas is absent.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Draw truths from windows of this text instead of generated word salad.
    #[arg(long)]
    pub seed_text: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 200)]
    pub min_len: usize,
    #[arg(long, default_value_t = 800)]
    pub max_len: usize,
    #[arg(long, default_value_t = 5)]
    pub candidates: usize,
    /// Per-character corruption rate of good candidates.
    #[arg(long, default_value_t = 0.05)]
    pub rate: f64,
    /// Share of samples labeled bad.
    #[arg(long, default_value_t = 0.0)]
    pub bad_fraction: f64,
    #[arg(long, default_value_t = 0.3)]
    pub bad_rate: f64,
    /// Fewest candidates of a bad sample corrupted at --bad-rate.
    #[arg(long, default_value_t = 3)]
    pub min_bad: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(EvalError::io(p))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_err(path: Option<&Path>) -> impl Fn(io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.map_or_else(|| PathBuf::from("<stdout>"), Path::to_path_buf),
        source,
    }
}

fn runner(config: Option<&Path>, settings: Settings) -> Result<Runner> {
    let file = match config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    Runner::new(settings.over(file).resolve()?)
}

/// Runs the corpus and writes one line per sample. Without `--keep-going`
/// output stops before the first failed sample and its error is returned.
fn run_corpus(args: &RunArgs, mode: Mode) -> Result<Vec<ReportRecord>> {
    let runner = runner(args.config.as_deref(), args.settings.clone())?;
    let records = load_corpus(&args.corpus, runner.backends_configured())?;
    let results = runner.run(&records, mode);
    let keep_going = runner.settings().keep_going;

    let out_path = args.out.as_deref();
    let mut out = output(out_path)?;
    let mut ok = Vec::with_capacity(results.len());
    let mut failed = 0usize;
    let mut first_error = None;
    for (record, result) in records.iter().zip(results) {
        let line = match result {
            Ok(r) => {
                ok.push(r.clone());
                ReportLine::Ok(Box::new(r))
            }
            Err(e) if keep_going => {
                failed += 1;
                eprintln!("sample `{}` failed: {e}", record.sample_id);
                ReportLine::Failed(FailedRecord {
                    sample_id: record.sample_id.clone(),
                    error: e.to_string(),
                })
            }
            Err(e) => {
                first_error = Some(e);
                break;
            }
        };
        write_line(&line, &mut out).map_err(write_err(out_path))?;
    }
    out.flush().map_err(write_err(out_path))?;
    if let Some(e) = first_error {
        return Err(e);
    }
    let routed = ok
        .iter()
        .filter(|r| r.decision == ce_core::Route::Expert)
        .count();
    eprintln!(
        "{} sample(s): {} ok, {failed} failed, {routed} above theta",
        records.len(),
        ok.len()
    );
    if let Some(e) = runner.expert() {
        eprintln!("expert `{}` called {} time(s)", e.model_name(), e.calls());
    }
    Ok(ok)
}

fn eval(args: &EvalArgs) -> Result<()> {
    let records = run_corpus(&args.run, Mode::Eval)?;
    let theta = runner_theta(&args.run)?;
    let summary = summarize(&records, theta)?;
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    match &args.summary {
        Some(p) => fs::write(p, json + "\n").map_err(EvalError::io(p)),
        None => {
            eprintln!("{json}");
            Ok(())
        }
    }
}

fn runner_theta(args: &RunArgs) -> Result<f64> {
    let file = match &args.config {
        Some(p) => Settings::load(p)?,
        None => Settings::default(),
    };
    Ok(args
        .settings
        .clone()
        .over(file)
        .resolve()?
        .pipeline
        .consensus
        .theta)
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let inputs: Vec<SweepInput> = match (&args.reports, &args.corpus) {
        (Some(path), _) => {
            let file = File::open(path).map_err(EvalError::io(path))?;
            let lines = read_reports(BufReader::new(file))?;
            let mut inputs = Vec::with_capacity(lines.len());
            for line in lines {
                match line {
                    ReportLine::Ok(r) => inputs.push(r.sweep_input()),
                    ReportLine::Failed(f) => eprintln!("skipping failed sample `{}`", f.sample_id),
                }
            }
            inputs
        }
        (None, Some(corpus)) => {
            let runner = runner(args.config.as_deref(), args.settings.clone())?;
            let records = load_corpus(corpus, runner.backends_configured())?;
            let mut inputs = Vec::with_capacity(records.len());
            for (record, result) in records.iter().zip(runner.run(&records, Mode::Ensemble)) {
                match result {
                    Ok(r) => inputs.push(r.sweep_input()),
                    Err(e) if runner.settings().keep_going => {
                        eprintln!("sample `{}` failed: {e}", record.sample_id)
                    }
                    Err(e) => return Err(e),
                }
            }
            inputs
        }
        (None, None) => return Err(EvalError::Usage("sweep needs --corpus or --reports".into())),
    };

    let thetas = args
        .thetas
        .clone()
        .unwrap_or_else(|| theta_grid(args.steps));
    let points = threshold_sweep(&inputs, &thetas)?;
    write_sweep_csv(&points, output(args.out.as_deref())?)?;
    if let Some(best) = best_f1(&points) {
        eprintln!(
            "best F1 {:.4} at theta {} (routed {:.1}%)",
            best.f1.unwrap_or(0.0),
            best.theta,
            best.routed_fraction * 100.0
        );
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let seed_text = args
        .seed_text
        .as_ref()
        .map(|p| fs::read_to_string(p).map_err(EvalError::io(p)))
        .transpose()?;
    let config = SynthConfig {
        samples: args.samples,
        min_len: args.min_len,
        max_len: args.max_len,
        candidates: args.candidates,
        rate: args.rate,
        bad_fraction: args.bad_fraction,
        bad_rate: args.bad_rate,
        min_bad: args.min_bad,
        seed: args.seed,
    };
    let corpus = synth_corpus(&config, seed_text.as_deref())?;
    let out_path = args.out.as_deref();
    let mut out = output(out_path)?;
    write_corpus(&corpus, &mut out).map_err(write_err(out_path))?;
    out.flush().map_err(write_err(out_path))
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Score(a) => run_corpus(a, Mode::Score).map(drop),
        Command::Ensemble(a) => run_corpus(a, Mode::Ensemble).map(drop),
        Command::Route(a) => run_corpus(a, Mode::Route).map(drop),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Synth(a) => synth(a),
    }
}
