//! `ppg`: command-line driver for the PPG authentication pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;

use ppg_core::eval::{per_user_breakdown, render_boxplot_svg, BreakdownRow, EvalReport, Protocol};
use ppg_core::features::FeatureMatrix;
use ppg_core::ingest::{
    extract_luma, read_frames_raw, read_red_means_csv, read_trace_csv, red_channel_means, validate_trace,
    write_frames_raw, write_red_means_csv, write_trace_csv, Trace,
};
use ppg_core::models::{ModelKind, TrainedModel};
use ppg_core::pipeline::{
    apply_variant, config_keys, evaluate, feature_matrix, filter_all, parse_stem, read_beats_csv, read_reference_csv,
    records_from_rows, segment_all, trace_stem, validate_all, write_beats_csv, write_reference_csv, BeatRow,
    PipelineConfig,
};
use ppg_core::select::SelectionModel;
use ppg_core::synth::{render_frames, synth_dataset, SynthConfig};

/// Exit status for a capture rejected by validation.
const EXIT_REJECTED: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "ppg", version, about = "Smartphone-camera PPG biometric authentication pipeline")]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set eval.windows=[1,20]`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More log output; repeat for debug messages.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Frame files (`user__session.ppgf`) to luma trace CSVs and red-mean side files.
    Extract(InOut),
    /// Check raw traces for sudden jumps, short length and missing red light.
    Validate(Input),
    /// Filter traces, cut beats, gate them and write `beats.csv`.
    Beats(BeatsArgs),
    /// Per-beat feature matrix from a `beats` output directory.
    Features(InOut),
    /// Fit the feature selection on a feature matrix.
    Select(InOut),
    /// Train a model on a feature matrix.
    Train(TrainArgs),
    /// Run the evaluation protocols on a feature matrix.
    Evaluate(InOut),
    /// Tables and box plots from a report JSON.
    Report(InOut),
    /// Write a synthetic multi-user dataset.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct InOut {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct Input {
    #[arg(short, long)]
    input: PathBuf,
}

#[derive(Args, Debug)]
struct BeatsArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Reference beat (one value per line) instead of the dataset average.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// svm, one_class_svm or isolation_forest.
    #[arg(long, default_value = "svm")]
    kind: String,
    /// Selection model to apply first; fitted on the input when omitted.
    #[arg(long)]
    selection: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(short, long)]
    output: PathBuf,
    /// Generator settings (JSON); flags below override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    sessions: Option<usize>,
    #[arg(long)]
    seconds: Option<f64>,
    #[arg(long)]
    drift: Option<f64>,
    /// Also write frame files for the `extract` stage.
    #[arg(long)]
    frames: bool,
}

fn key_role(key: &str) -> &'static str {
    const ROLES: &[(&str, &str)] = &[
        ("input_dir", "default input directory"),
        ("output_dir", "default output directory"),
        ("seed", "master seed for every random choice"),
        ("variant", "beats evaluated: ALL or PostFTA"),
        ("protocols", "evaluation protocols to run"),
        ("validation", "capture validation"),
        ("detrend_seconds", "rolling-mean detrend window"),
        ("filter", "low-pass filter"),
        ("segment", "beat separation"),
        ("quality", "failure-to-acquire gate"),
        ("eval.models", "classifier hyperparameters"),
        ("eval.selection", "feature selection"),
        ("eval", "evaluation protocol grid"),
    ];
    ROLES
        .iter()
        .filter(|(p, _)| key == *p || key.starts_with(&format!("{p}.")))
        .max_by_key(|(p, _)| p.len())
        .map(|(_, r)| *r)
        .unwrap_or("")
}

fn config_help() -> String {
    let keys = config_keys(&PipelineConfig::default());
    let width = keys.iter().map(|(k, v)| k.len() + v.len()).max().unwrap_or(0) + 3;
    let mut out = String::from(
        "Configuration keys and defaults (set in --config, PPG_SEED overrides seed, --set overrides any key):\n",
    );
    for (k, v) in keys {
        let kv = format!("{k} = {v}");
        out.push_str(&format!("  {kv:<width$} {}\n", key_role(&k)));
    }
    out.push_str("\nExit status: 0 on success, 2 when validation rejects a capture, 1 on error.");
    out
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Ok(seed) = std::env::var("PPG_SEED") {
        cfg.seed = seed
            .trim()
            .parse()
            .with_context(|| format!("PPG_SEED must be an unsigned integer, got {seed:?}"))?;
    }
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {o:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    if dir.is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == ext))
        .collect();
    out.sort();
    Ok(out)
}

/// Trace CSVs in a directory, skipping red-mean side files.
fn trace_files(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(files_with_ext(dir, "csv")?
        .into_iter()
        .filter(|p| !p.to_string_lossy().ends_with(".red.csv"))
        .collect())
}

fn read_traces(dir: &Path) -> Result<Vec<Trace>> {
    let files = trace_files(dir)?;
    if files.is_empty() {
        bail!("no trace CSVs in {}", dir.display());
    }
    files
        .par_iter()
        .map(|p| read_trace_csv(p).with_context(|| format!("reading trace {}", p.display())))
        .collect()
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn parent_dir(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    parent_dir(path)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_features(path: &Path) -> Result<FeatureMatrix> {
    FeatureMatrix::read_csv(path).with_context(|| format!("reading features {}", path.display()))
}

fn cmd_extract(io: &InOut) -> Result<()> {
    let files = files_with_ext(&io.input, "ppgf")?;
    if files.is_empty() {
        bail!("no .ppgf frame files in {}", io.input.display());
    }
    create_dir(&io.output)?;
    files.par_iter().try_for_each(|p| -> Result<()> {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let (user, session) =
            parse_stem(stem).with_context(|| format!("{}: file name must be user__session.ppgf", p.display()))?;
        let stream = read_frames_raw(p).with_context(|| format!("reading frames {}", p.display()))?;
        let trace = extract_luma(&stream)?.with_identity(&user, &session);
        let base = io.output.join(trace_stem(&user, &session));
        write_trace_csv(&trace, base.with_extension("csv"))?;
        write_red_means_csv(&red_channel_means(&stream), &base.with_extension("red.csv"))?;
        info!("{} -> {} samples", p.display(), trace.len());
        Ok(())
    })
}

fn cmd_validate(input: &Path, cfg: &PipelineConfig) -> Result<bool> {
    let mut all_ok = true;
    for p in trace_files(input)? {
        let trace = read_trace_csv(&p).with_context(|| format!("reading trace {}", p.display()))?;
        let red_path = p.with_extension("red.csv");
        let red = if red_path.exists() {
            Some(read_red_means_csv(&red_path).with_context(|| format!("reading {}", red_path.display()))?)
        } else {
            None
        };
        let v = validate_trace(&trace, red.as_deref(), &cfg.validation);
        if v.accepted {
            println!("{}\taccepted", p.display());
        } else {
            all_ok = false;
            let why: Vec<String> = v.reasons.iter().map(|r| format!("{r:?}")).collect();
            println!("{}\trejected\t{}", p.display(), why.join(","));
        }
    }
    Ok(all_ok)
}

fn cmd_beats(args: &BeatsArgs, cfg: &PipelineConfig) -> Result<()> {
    let (traces, rejected) = validate_all(read_traces(&args.input)?, &cfg.validation);
    for r in &rejected {
        warn!("{r}");
    }
    let filtered = filter_all(&traces, cfg)?;
    let reference = match &args.reference {
        Some(p) => Some(read_reference_csv(p).with_context(|| format!("reading reference {}", p.display()))?),
        None => None,
    };
    let (records, reference) = segment_all(&filtered, &cfg.segment, &cfg.quality, reference)?;
    let dir = args.output.join("filtered");
    create_dir(&dir)?;
    filtered.par_iter().try_for_each(|t| {
        write_trace_csv(t, dir.join(trace_stem(t.user_id(), t.session_id())).with_extension("csv"))
    })?;
    let rows: Vec<BeatRow> = records.iter().map(BeatRow::from_record).collect();
    write_beats_csv(&rows, &args.output.join("beats.csv"))?;
    write_reference_csv(&reference, &args.output.join("reference.csv"))?;
    let pass = rows.iter().filter(|r| !r.fta).count();
    println!("{} beats, {} pass the quality gate", rows.len(), pass);
    Ok(())
}

fn cmd_features(io: &InOut) -> Result<()> {
    let beats = io.input.join("beats.csv");
    let rows = read_beats_csv(&beats).with_context(|| format!("reading {}", beats.display()))?;
    let traces: BTreeMap<(String, String), Trace> = read_traces(&io.input.join("filtered"))?
        .into_iter()
        .map(|t| ((t.user_id().to_string(), t.session_id().to_string()), t))
        .collect();
    let records = records_from_rows(&rows, &traces)?;
    let m = feature_matrix(&records);
    parent_dir(&io.output)?;
    m.write_csv(&io.output)?;
    println!("{} rows x {} features", m.n_rows(), m.n_cols());
    Ok(())
}

fn cmd_select(io: &InOut, cfg: &PipelineConfig) -> Result<()> {
    let m = apply_variant(&read_features(&io.input)?, cfg.variant);
    let sel = SelectionModel::fit(&m, &cfg.eval.selection, cfg.seed)?;
    parent_dir(&io.output)?;
    sel.save(&io.output)?;
    println!("{} features selected: {}", sel.selected.len(), sel.selected.join(", "));
    Ok(())
}

fn cmd_train(args: &TrainArgs, cfg: &PipelineConfig) -> Result<()> {
    let kind = ModelKind::parse(&args.kind).with_context(|| format!("unknown model kind {:?}", args.kind))?;
    let m = apply_variant(&read_features(&args.input)?, cfg.variant);
    let sel = match &args.selection {
        Some(p) => SelectionModel::load(p).with_context(|| format!("loading selection {}", p.display()))?,
        None => SelectionModel::fit(&m, &cfg.eval.selection, cfg.seed)?,
    };
    let x = sel.transform(&m)?;
    let model = TrainedModel::fit(kind, &x.rows, &x.user_ids, x.names.clone(), &cfg.eval.models, cfg.seed)?;
    parent_dir(&args.output)?;
    model.save(&args.output)?;
    println!("{} model for {} users on {} features", kind.as_str(), model.users().len(), x.n_cols());
    Ok(())
}

fn write_report_files(report: &EvalReport, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    fs::write(dir.join("report.csv"), csv)?;
    write_breakdown(&per_user_breakdown(report), &dir.join("users.csv"))?;
    let protocols: std::collections::BTreeSet<Protocol> = report.cells.iter().map(|c| c.protocol).collect();
    for p in protocols {
        write_text(&dir.join(format!("{}.svg", p.as_str())), &render_boxplot_svg(report, p))?;
    }
    Ok(())
}

fn write_breakdown(rows: &[BreakdownRow], path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "protocol,variant,classifier,window,enrol_size,enrol_sessions,user,eer,ci_low,ci_high,worst")?;
    let opt = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.protocol.as_str(),
            r.variant,
            r.classifier.as_str(),
            r.window,
            opt(r.enrol_size),
            opt(r.enrol_sessions),
            r.user,
            r.eer,
            r.ci_low,
            r.ci_high,
            u8::from(r.worst)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_evaluate(io: &InOut, cfg: &PipelineConfig) -> Result<()> {
    let report = evaluate(&read_features(&io.input)?, cfg)?;
    create_dir(&io.output)?;
    report.save_json(&io.output.join("report.json"))?;
    write_report_files(&report, &io.output)?;
    for s in &report.summary {
        println!(
            "{:<14} {:<17} window {:>2} enrol {:>4} sessions {:>2}  mean EER {:.4}  median {:.4}  ({} users)",
            s.protocol.as_str(),
            s.classifier.as_str(),
            s.window,
            s.enrol_size.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
            s.enrol_sessions.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
            s.mean_eer,
            s.median_eer,
            s.n_users
        );
    }
    Ok(())
}

fn cmd_report(io: &InOut) -> Result<()> {
    let report =
        EvalReport::load_json(&io.input).with_context(|| format!("reading report {}", io.input.display()))?;
    write_report_files(&report, &io.output)
}

fn cmd_synth(args: &SynthArgs, cfg: &PipelineConfig) -> Result<()> {
    let mut spec: SynthConfig = match &args.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(v) = args.users {
        spec.users = v;
    }
    if let Some(v) = args.sessions {
        spec.sessions = v;
    }
    if let Some(v) = args.seconds {
        spec.seconds = v;
    }
    if let Some(v) = args.drift {
        spec.session_drift = v;
    }
    let data = synth_dataset(&spec, cfg.seed)?;
    create_dir(&args.output)?;
    data.par_iter().try_for_each(|s| -> Result<()> {
        let base = args.output.join(trace_stem(s.trace.user_id(), s.trace.session_id()));
        if args.frames {
            write_frames_raw(&render_frames(&s.trace, 8, 8)?, base.with_extension("ppgf"))?;
        } else {
            write_trace_csv(&s.trace, base.with_extension("csv"))?;
        }
        Ok(())
    })?;
    write_text(&args.output.join("synth.json"), &serde_json::to_string_pretty(&spec)?)?;
    println!("{} traces for {} users", data.len(), spec.users);
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let cfg = load_config(cli)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match &cli.command {
        Command::Extract(io) => cmd_extract(io)?,
        Command::Validate(i) => {
            if !cmd_validate(&i.input, &cfg)? {
                return Ok(ExitCode::from(EXIT_REJECTED));
            }
        }
        Command::Beats(a) => cmd_beats(a, &cfg)?,
        Command::Features(io) => cmd_features(io)?,
        Command::Select(io) => cmd_select(io, &cfg)?,
        Command::Train(a) => cmd_train(a, &cfg)?,
        Command::Evaluate(io) => cmd_evaluate(io, &cfg)?,
        Command::Report(io) => cmd_report(io)?,
        Command::Synth(a) => cmd_synth(a, &cfg)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let matches = Cli::command().after_long_help(config_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
