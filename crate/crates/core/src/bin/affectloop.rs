use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use affectloop::bench::{column_mean, run_bench, BenchConfig};
use affectloop::decoder::{evaluate_trials, Decoder, DecoderConfig};
use affectloop::metrics::write_table_csv;
use affectloop::planner::KnowledgeBase;
use affectloop::service::{self, SessionManager};
use affectloop::session::{run_session, ClipAffectSource, DirSink, LoopConfig, SubjectMode};
use affectloop::signal::synth::{affect_recording, labelled_trials};
use affectloop::signal::{self as sig, load_recording, write_binary, write_csv, EegRecording, RecordingFormat, TrialMeta};
use affectloop::AffectState;

#[derive(Parser)]
#[command(name = "affectloop", version, about = "Closed-loop EEG-driven affective music engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an offline closed-loop session; writes the round log, report and clips.
    Simulate(SimulateArgs),
    /// Decode labelled trials and print accuracy and CCC per axis as CSV.
    Decode(DecodeArgs),
    /// Metric sweep over random plans, printed as CSV.
    Bench(BenchArgs),
    /// Host sessions over HTTP and WebSocket.
    Serve(ServeArgs),
    /// Knowledge base tools.
    Kb {
        #[command(subcommand)]
        command: KbCommand,
    },
    /// Write a synthetic recording with a prescribed affect.
    SynthEeg(SynthEegArgs),
}

#[derive(Subcommand)]
enum KbCommand {
    /// Parse and lint a knowledge base (the bundled one by default).
    Validate { path: Option<PathBuf> },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Binary,
}

#[derive(Args)]
struct RecordingArgs {
    /// Recording format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Sample rate of CSV recordings.
    #[arg(long, default_value_t = sig::DEFAULT_SAMPLE_RATE_HZ)]
    sample_rate: f64,
}

impl RecordingArgs {
    fn load(&self, path: &Path) -> Result<EegRecording> {
        let format = match self.format.unwrap_or_else(|| infer_format(path)) {
            Format::Csv => RecordingFormat::Csv { sample_rate_hz: self.sample_rate },
            Format::Binary => RecordingFormat::Binary,
        };
        load_recording(path, format).with_context(|| format!("loading {}", path.display()))
    }
}

fn infer_format(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
        _ => Format::Binary,
    }
}

fn parse_state(s: &str) -> Result<AffectState, String> {
    let (v, a) = s.split_once(',').ok_or("expected V,A")?;
    let v: f64 = v.trim().parse().map_err(|e| format!("valence: {e}"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("arousal: {e}"))?;
    AffectState::checked(v, a).map_err(|e| e.to_string())
}

#[derive(Args)]
struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Loop configuration as JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Baseline recording that sets the initial state.
    #[arg(long)]
    recording: Option<PathBuf>,
    #[command(flatten)]
    rec: RecordingArgs,
    #[arg(long)]
    alpha: Option<f64>,
    /// Target as `V,A` in [-1, 1].
    #[arg(long, value_parser = parse_state, allow_hyphen_values = true)]
    target: Option<AffectState>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Simulated subject's pull toward the music per round.
    #[arg(long)]
    beta: Option<f64>,
    /// Simulated subject's per-axis noise.
    #[arg(long)]
    noise: Option<f64>,
    /// Simulated subject's starting state as `V,A`.
    #[arg(long, value_parser = parse_state, allow_hyphen_values = true)]
    initial: Option<AffectState>,
    /// Take each clip's affect from its plan instead of estimating it.
    #[arg(long)]
    ideal: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Knowledge base as JSON Lines.
    #[arg(long)]
    kb: Option<PathBuf>,
}

fn load_kb(path: Option<&Path>) -> Result<KnowledgeBase> {
    match path {
        Some(p) => KnowledgeBase::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(KnowledgeBase::starter()),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg: LoopConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => LoopConfig::default(),
    };
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(t) = args.target {
        cfg.target = t;
    }
    if let Some(r) = args.rounds {
        cfg.max_rounds = r;
    }
    if args.ideal {
        cfg.clip_affect = ClipAffectSource::Ideal;
    }
    match &mut cfg.subject {
        SubjectMode::Simulated { params, .. } => {
            params.beta = args.beta.unwrap_or(params.beta);
            params.noise_std = args.noise.unwrap_or(params.noise_std);
            params.initial = args.initial.unwrap_or(params.initial);
        }
        SubjectMode::Live { .. } => bail!("simulate needs a simulated subject; live sessions run under `serve`"),
    }
    let recording = args.recording.as_deref().map(|p| args.rec.load(p)).transpose()?;
    let kb = load_kb(args.kb.as_deref())?;
    let mut sink = DirSink::create(&args.out)?;
    let report = run_session(&cfg, kb, recording.as_ref(), args.seed, &mut sink)?;
    println!("{}", report.narrative);
    println!("report: {}", args.out.join("report.json").display());
    Ok(())
}

#[derive(Args)]
struct DecodeArgs {
    /// CSV with columns `path,valence,arousal`; labels on the 1-9 scale,
    /// paths relative to the manifest.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    manifest: Option<PathBuf>,
    /// Evaluate on this many generated trials instead.
    #[arg(long)]
    synthetic: Option<usize>,
    #[command(flatten)]
    rec: RecordingArgs,
    /// Length of generated trials.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    /// Noise of generated trials, in µV.
    #[arg(long, default_value_t = 2.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// High/low split on the 1-9 scale.
    #[arg(long, default_value_t = 5.0)]
    threshold: f64,
    #[arg(long, default_value_t = sig::DEFAULT_WINDOW_S)]
    window: f64,
    #[arg(long, default_value_t = sig::DEFAULT_HOP_S)]
    hop: f64,
    /// Decoder configuration as JSON.
    #[arg(long)]
    decoder: Option<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(serde::Deserialize)]
struct ManifestRow {
    path: PathBuf,
    valence: f64,
    arousal: f64,
}

fn load_manifest(path: &Path, rec: &RecordingArgs) -> Result<Vec<EegRecording>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let mut trials = Vec::new();
    for (i, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let row = row.with_context(|| format!("{} row {}", path.display(), i + 1))?;
        let file = base.join(&row.path);
        let meta = TrialMeta {
            subject_id: String::new(),
            trial_id: row.path.display().to_string(),
            valence: Some(row.valence),
            arousal: Some(row.arousal),
        };
        trials.push(rec.load(&file)?.with_trial_meta(meta)?);
    }
    Ok(trials)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    })
}

fn decode(args: DecodeArgs) -> Result<()> {
    let trials = match (&args.manifest, args.synthetic) {
        (Some(m), _) => load_manifest(m, &args.rec)?,
        (None, Some(n)) => labelled_trials(n, args.duration, args.rec.sample_rate, args.noise, args.seed)?,
        (None, None) => bail!("give --manifest or --synthetic"),
    };
    let cfg: DecoderConfig = match &args.decoder {
        Some(p) => read_json(p)?,
        None => DecoderConfig::default(),
    };
    let mut decoder = Decoder::new(cfg);
    let (_, report) = evaluate_trials(&mut decoder, &trials, args.window, args.hop, args.threshold)?;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.serialize(report)?;
    w.flush()?;
    Ok(())
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 20)]
    plans: usize,
    #[arg(long, default_value_t = 1)]
    seeds_per_plan: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    sections: usize,
    #[arg(long, default_value_t = 10.0)]
    duration: f64,
    #[arg(long, default_value_t = affectloop::engine::DEFAULT_CLIP_SAMPLE_RATE_HZ)]
    sample_rate: u32,
    #[arg(long)]
    kb: Option<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn bench(args: BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        plans: args.plans,
        seeds_per_plan: args.seeds_per_plan,
        seed: args.seed,
        sections: args.sections,
        duration_s: args.duration,
        sample_rate_hz: args.sample_rate,
        ..Default::default()
    };
    let rows = run_bench(load_kb(args.kb.as_deref())?, &cfg)?;
    write_table_csv(output(args.out.as_deref())?, &rows)?;
    for method in ["full", "shuffled"] {
        let dc = column_mean(&rows, method, |r| r.dyn_corr).unwrap_or(f64::NAN);
        let pc = column_mean(&rows, method, |r| Some(r.plan_cons)).unwrap_or(f64::NAN);
        eprintln!("{method:>8}: mean Dyn-Corr {dc:.3}, mean Plan-Cons {pc:.3}");
    }
    Ok(())
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "AFFECTLOOP_DATA_DIR", default_value = "affectloop-data")]
    data_dir: PathBuf,
    #[arg(long, env = "AFFECTLOOP_BIND", default_value = "127.0.0.1:8080")]
    bind: String,
    #[arg(long, env = "AFFECTLOOP_MAX_SESSIONS", default_value_t = service::DEFAULT_MAX_SESSIONS)]
    max_sessions: usize,
    #[arg(long)]
    kb: Option<PathBuf>,
}

fn serve(args: ServeArgs) -> Result<()> {
    let manager = SessionManager::open(&args.data_dir, args.max_sessions, load_kb(args.kb.as_deref())?)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.bind).await.with_context(|| format!("binding {}", args.bind))?;
        println!("listening on {}", listener.local_addr()?);
        io::stdout().flush()?;
        service::serve(manager, listener).await?;
        Ok(())
    })
}

fn kb_validate(path: Option<PathBuf>) -> Result<()> {
    let kb = load_kb(path.as_deref())?;
    let findings = kb.lint();
    for f in &findings {
        println!("warning: {f}");
    }
    println!("ok: {} entries, {} warnings", kb.len(), findings.len());
    Ok(())
}

#[derive(Args)]
struct SynthEegArgs {
    #[arg(long, allow_hyphen_values = true)]
    valence: f64,
    #[arg(long, allow_hyphen_values = true)]
    arousal: f64,
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    #[arg(long, default_value_t = sig::DEFAULT_SAMPLE_RATE_HZ)]
    sample_rate: f64,
    /// Gaussian noise in µV.
    #[arg(long, default_value_t = 2.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: PathBuf,
}

fn synth_eeg(args: SynthEegArgs) -> Result<()> {
    let rec = affect_recording(args.valence, args.arousal, args.duration, args.sample_rate, args.noise, args.seed)?;
    match args.format.unwrap_or_else(|| infer_format(&args.out)) {
        Format::Csv => write_csv(&rec, &args.out)?,
        Format::Binary => write_binary(&rec, &args.out)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Decode(a) => decode(a),
        Command::Bench(a) => bench(a),
        Command::Serve(a) => serve(a),
        Command::Kb { command: KbCommand::Validate { path } } => kb_validate(path),
        Command::SynthEeg(a) => synth_eeg(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
