//! Command-line front end.

use crate::checkpoint::Checkpoint;
use crate::config::{ModelKind, RunConfig};
use crate::embeddings::load_embeddings;
use crate::error::{Error, Result};
use crate::fsutil::{to_json_string, write_atomic, write_json};
use crate::pairs::load_word_list;
use crate::report::{emit_tsv, write_distances, write_history, write_mirrors};
use crate::workflow::{self, GradCheckSettings};
use clap::{Args, Parser, Subcommand};
use reflect_core::eval::{export_distances, export_mirror_params, test_pair_words};
use reflect_core::synth::{synth_generate, SyntheticSpec};
use reflect_core::training::StopReason;
use serde_json::json;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "reflect", version, about = "Word attribute transfer by learned reflections")]
pub struct Cli {
    /// Print exactly one JSON document on stdout; all other text goes to stderr.
    #[arg(long, global = true)]
    pub json: bool,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model (or compute an analogy baseline) and write a checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on the test split; the report goes to stdout and a file.
    Eval(EvalArgs),
    /// Transfer words or a sentence through one or more checkpoints in sequence.
    Transfer(TransferArgs),
    /// Generate planted-mirror data in the standard file formats.
    Synth(SynthArgs),
    /// Per-word distance to the mirror and to the paired word.
    ExportDistances(ExportArgs),
    /// Mirror normal vectors for the test-pair words (or a word list).
    ExportMirrors(ExportMirrorArgs),
    /// Compare analytic and finite-difference gradients of the transfer loss.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct DataOverrides {
    /// Run configuration (JSON).
    #[arg(short, long)]
    pub config: PathBuf,
    /// Replace the embedding file named in the config.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Keep only the first N embedding rows.
    #[arg(long)]
    pub limit: Option<usize>,
}

impl DataOverrides {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(p) = &self.embeddings {
            let e = cfg.embeddings.get_or_insert(crate::config::EmbeddingSource {
                path: p.clone(),
                limit: None,
            });
            e.path = p.clone();
        }
        if let Some(l) = self.limit {
            match &mut cfg.embeddings {
                Some(e) => e.limit = Some(l),
                None => return Err(Error::Usage("--limit needs an embedding file".into())),
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataOverrides,
    /// Output directory (default: the config's `output_dir`, else `./run`).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// ref, refpm, mlp, diff, diff+, diff-, meandiff, meandiff+ or meandiff-.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Adam step size.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Maximum number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs without validation improvement before stopping (0 disables).
    #[arg(long)]
    pub patience: Option<usize>,
    /// Initialization seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataOverrides,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Where to write `report.json` and the resolved config (default: beside the checkpoint).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Embedding file to retrieve from.
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub limit: Option<usize>,
    /// Checkpoint; repeat to chain transfers in the given order.
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// Whitespace-separated sentence to transfer token by token.
    #[arg(long, conflicts_with = "words")]
    pub text: Option<String>,
    pub words: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator settings (JSON); defaults when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub data: DataOverrides,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// TSV destination (default: stdout).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportMirrorArgs {
    #[command(flatten)]
    pub export: ExportArgs,
    /// Words to export, one per line, instead of the test pairs.
    #[arg(long)]
    pub words: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Models to check.
    #[arg(long, value_delimiter = ',', default_value = "ref,refpm,mlp")]
    pub models: Vec<ModelKind>,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    pub threshold: f64,
    #[arg(long, default_value_t = 6)]
    pub dim: usize,
    #[arg(long, default_value_t = 8)]
    pub hidden: usize,
    #[arg(long, default_value_t = 4)]
    pub pairs: usize,
    #[arg(long, default_value_t = 3)]
    pub non_attribute: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Deliberately break the analytic gradient, to see the check fail.
    #[arg(long)]
    pub corrupt_gradient: bool,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .try_init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if cli.json {
                println!("{}", json!({ "error": e.to_string(), "exit_code": e.exit_code() }));
            }
            e.exit_code()
        }
    }
}

fn print_json(value: &serde_json::Value) {
    print!("{}", to_json_string(value));
}

fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Train(a) => cmd_train(cli, a),
        Command::Eval(a) => cmd_eval(cli, a),
        Command::Transfer(a) => cmd_transfer(cli, a),
        Command::Synth(a) => cmd_synth(cli, a),
        Command::ExportDistances(a) => cmd_export_distances(cli, a),
        Command::ExportMirrors(a) => cmd_export_mirrors(cli, a),
        Command::Gradcheck(a) => cmd_gradcheck(cli, a),
    }
}

fn write_resolved(dir: &Path, cfg: &RunConfig) -> Result<()> {
    write_json(&dir.join("config.resolved.json"), &cfg.resolved())
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<i32> {
    let mut cfg = a.data.load()?;
    if let Some(k) = a.model {
        cfg.model.kind = k;
        cfg.model.hidden = None;
    }
    if let Some(x) = a.alpha {
        cfg.train.alpha = Some(x);
    }
    if let Some(n) = a.epochs {
        cfg.train.max_epochs = n;
    }
    if let Some(n) = a.patience {
        cfg.train.patience = n;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let out = a
        .output
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("run"));
    cfg.output_dir = Some(out.clone());
    let prep = workflow::prepare(&cfg)?;
    let trained = workflow::train_model(&cfg, &prep)?;
    let ck_path = out.join("checkpoint.json");
    let hist_path = out.join("history.tsv");
    trained.checkpoint.save(&ck_path)?;
    write_atomic(&hist_path, |w| write_history(w, &trained.history))?;
    write_resolved(&out, &cfg)?;
    let last_val = trained.history.iter().rev().find_map(|h| h.val_accuracy);
    let best_val = trained
        .checkpoint
        .best_epoch
        .and_then(|e| trained.history.iter().find(|h| h.epoch == e))
        .and_then(|h| h.val_accuracy);
    let stop = trained.stop.map(|s| match s {
        StopReason::MaxEpochs => "max_epochs".to_string(),
        StopReason::EarlyStopping => "early_stopping".to_string(),
        StopReason::Diverged { epoch } => format!("diverged_at_epoch_{epoch}"),
    });
    eprintln!(
        "trained {} for `{}`: {} epochs, {} steps, best val accuracy {}",
        cfg.model.kind,
        cfg.attribute,
        trained.history.len(),
        trained.checkpoint.steps,
        best_val.map_or("n/a".into(), |v| format!("{v:.4}")),
    );
    eprintln!("checkpoint: {}", ck_path.display());
    if cli.json {
        print_json(&json!({
            "checkpoint": ck_path,
            "history": hist_path,
            "model_kind": cfg.model.kind,
            "epochs": trained.history.len(),
            "steps": trained.checkpoint.steps,
            "best_epoch": trained.checkpoint.best_epoch,
            "best_val_accuracy": best_val,
            "last_val_accuracy": last_val,
            "stop": stop,
        }));
    }
    if let Some(epoch) = trained.diverged() {
        let e = Error::Numeric(format!(
            "training diverged at epoch {epoch}; the checkpoint holds the last finite parameters"
        ));
        eprintln!("error: {e}");
        return Ok(e.exit_code());
    }
    Ok(0)
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<i32> {
    let cfg = a.data.load()?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let prep = workflow::prepare(&cfg)?;
    let doc = workflow::evaluate_checkpoint(&cfg, &prep, &ck)?;
    let out = a
        .output
        .clone()
        .or_else(|| a.checkpoint.parent().map(Path::to_path_buf))
        .unwrap_or_default();
    let report_path = out.join("report.json");
    doc.save(&report_path)?;
    write_resolved(&out, &cfg)?;
    let pct = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{:.1}%", 100.0 * v));
    eprintln!(
        "{} on `{}` (|V| = {}): accuracy {}, stability {}",
        doc.model_kind,
        doc.attribute,
        doc.vocab_size,
        pct(doc.accuracy),
        pct(doc.stability)
    );
    for n in &doc.notes {
        eprintln!("note: {n}");
    }
    eprintln!("report: {}", report_path.display());
    // the report is the stdout document with or without --json
    let _ = cli.json;
    print!("{}", doc.to_json());
    Ok(0)
}

fn cmd_transfer(cli: &Cli, a: &TransferArgs) -> Result<i32> {
    let table = load_embeddings(&a.embeddings, a.limit)?;
    let cks = a
        .checkpoints
        .iter()
        .map(Checkpoint::load)
        .collect::<Result<Vec<_>>>()?;
    for (ck, p) in cks.iter().zip(&a.checkpoints) {
        if ck.dim != table.dim() {
            return Err(Error::Data(format!(
                "{}: dimension {} does not match embeddings ({})",
                p.display(),
                ck.dim,
                table.dim()
            )));
        }
    }
    let words: Vec<String> = match &a.text {
        Some(t) => t.split_whitespace().map(str::to_string).collect(),
        None => a.words.clone(),
    };
    if words.is_empty() {
        return Err(Error::Usage("nothing to transfer: give words or --text".into()));
    }
    let models: Vec<_> = cks.iter().map(|c| &c.model).collect();
    let rows = workflow::transfer_words(&models, &table, &words);
    let outputs: Vec<&str> = rows
        .iter()
        .map(|r| r.last().map_or("", |x| x.output.as_str()))
        .collect();
    if cli.json {
        print_json(&json!({
            "input": words,
            "output": outputs,
            "steps": rows,
        }));
        return Ok(0);
    }
    emit_tsv(None, |w| {
        writeln!(w, "stage\tinput\toutput\tcosine\tmirror_distance\tnote")?;
        for r in rows.iter().flatten() {
            let note = if r.oov {
                "OOV".to_string()
            } else {
                r.error.clone().unwrap_or_default()
            };
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{note}",
                r.stage,
                r.input,
                r.output,
                r.cosine.map(|x| format!("{x:.6}")).unwrap_or_default(),
                r.mirror_distance.map(|x| format!("{x:.6}")).unwrap_or_default(),
            )?;
        }
        Ok(())
    })?;
    eprintln!("{}", outputs.join(" "));
    Ok(0)
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> Result<i32> {
    let mut spec: SyntheticSpec = match &a.spec {
        Some(p) => crate::fsutil::read_json(p)?,
        None => SyntheticSpec::default(),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let data = synth_generate(&spec)?;
    workflow::write_synthetic(&a.output, &spec, &data)?;
    eprintln!(
        "wrote {} words, {} pairs, {} mirrors to {}",
        data.table.len(),
        data.pairs.len(),
        data.mirrors.len(),
        a.output.display()
    );
    if cli.json {
        print_json(&json!({
            "output": a.output,
            "config": a.output.join("config.json"),
            "vocab_size": data.table.len(),
            "pairs": data.pairs.len(),
            "split": data.dataset.counts(),
            "non_attribute_train": data.non_attribute.train.len(),
            "non_attribute_test": data.non_attribute.test.len(),
        }));
    }
    Ok(0)
}

fn load_reflection(cfg_args: &DataOverrides, ck_path: &Path) -> Result<(RunConfig, workflow::Prepared, Checkpoint)> {
    let cfg = cfg_args.load()?;
    let ck = Checkpoint::load(ck_path)?;
    if ck.model.as_reflection().is_none() {
        return Err(Error::Usage(format!(
            "{}: `{}` is not a reflection model",
            ck_path.display(),
            ck.kind
        )));
    }
    let prep = workflow::prepare(&cfg)?;
    if ck.dim != prep.table.dim() {
        return Err(Error::Data(format!(
            "checkpoint dimension {} does not match embedding dimension {}",
            ck.dim,
            prep.table.dim()
        )));
    }
    Ok((cfg, prep, ck))
}

fn cmd_export_distances(cli: &Cli, a: &ExportArgs) -> Result<i32> {
    let (_, prep, ck) = load_reflection(&a.data, &a.checkpoint)?;
    let model = ck.model.as_reflection().expect("checked");
    let rows = export_distances(model, &prep.dataset, &prep.non_attribute.test, &prep.table)?;
    finish_export(cli, a.output.as_deref(), rows.len(), |w| write_distances(w, &rows))
}

fn cmd_export_mirrors(cli: &Cli, a: &ExportMirrorArgs) -> Result<i32> {
    let (_, prep, ck) = load_reflection(&a.export.data, &a.export.checkpoint)?;
    let model = ck.model.as_reflection().expect("checked");
    let words = match &a.words {
        Some(p) => load_word_list(p)?.into_iter().map(|w| (w, None)).collect(),
        None => test_pair_words(&prep.dataset),
    };
    let rows = export_mirror_params(model, &words, &prep.table)?;
    let dim = ck.dim;
    finish_export(cli, a.export.output.as_deref(), rows.len(), |w| write_mirrors(w, &rows, dim))
}

/// TSV goes to the file or stdout; in JSON mode it must go to a file and the
/// summary is the stdout document.
fn finish_export<F>(cli: &Cli, output: Option<&Path>, rows: usize, fill: F) -> Result<i32>
where
    F: FnOnce(&mut dyn Write) -> std::io::Result<()>,
{
    if cli.json && output.is_none() {
        return Err(Error::Usage("--json export needs --output".into()));
    }
    emit_tsv(output, fill)?;
    if let Some(p) = output {
        eprintln!("wrote {rows} rows to {}", p.display());
    }
    if cli.json {
        print_json(&json!({ "output": output, "rows": rows }));
    }
    Ok(0)
}

fn cmd_gradcheck(cli: &Cli, a: &GradcheckArgs) -> Result<i32> {
    if !(a.threshold > 0.0) {
        return Err(Error::Usage("--threshold must be positive".into()));
    }
    let settings = GradCheckSettings {
        dim: a.dim,
        hidden: a.hidden,
        pairs: a.pairs,
        non_attribute: a.non_attribute,
        seed: a.seed,
        corrupt: a.corrupt_gradient,
    };
    let mut results = Vec::new();
    for &k in &a.models {
        let r = workflow::gradcheck(k, &settings)?;
        let ok = r.max_relative_error < a.threshold;
        eprintln!(
            "{:<6} params {:>6} checked {:>6} max rel err {:.3e} {}",
            k.name(),
            r.parameters,
            r.checked,
            r.max_relative_error,
            if ok { "ok" } else { "FAIL" }
        );
        results.push((r, ok));
    }
    let passed = results.iter().all(|(_, ok)| *ok);
    if cli.json {
        let models: Vec<_> = results
            .iter()
            .map(|(r, ok)| {
                json!({
                    "model": r.model,
                    "parameters": r.parameters,
                    "checked": r.checked,
                    "max_relative_error": r.max_relative_error,
                    "passed": ok,
                })
            })
            .collect();
        print_json(&json!({ "threshold": a.threshold, "passed": passed, "models": models }));
    }
    Ok(if passed { 0 } else { 3 })
}
