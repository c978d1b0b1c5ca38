//! Command-line entry point wiring the whole pipeline:
//! generate -> preprocess -> featurize -> train -> evaluate -> stream -> report.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gaitstream::features::{build_dataset, FeatureSelection, FeatureTable, Task};
use gaitstream::learn::{
    adapt_split, cross_validate, pca_project, train, trend_over_rounds, CvStrategy, GbdtModel, Hyperparams,
};
use gaitstream::session::{load_session, save_session, validate_session, Session};
use gaitstream::stream::{
    run_stream, session_frames, session_handshake, AlertPolicy, StreamError,
};
use gaitstream::synthgait::{featurize_study, generate_from_spec, preprocess_session, study_specs, StudyConfig};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "gaitstream", version, about = "Gait sensing data layer: synthesis, featurization, modeling, streaming")]
struct Cli {
    /// Base directory all relative paths resolve against.
    #[arg(long, global = true, default_value = ".")]
    workdir: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TaskArg {
    Suit,
    Rollator,
    Movement,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Suit => Task::Suit,
            TaskArg::Rollator => Task::Rollator,
            TaskArg::Movement => Task::Movement,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SelectionArg {
    Auto,
    EmgOnly,
    ImuOnly,
    Fused,
}

impl From<SelectionArg> for FeatureSelection {
    fn from(s: SelectionArg) -> FeatureSelection {
        match s {
            SelectionArg::Auto => FeatureSelection::Auto,
            SelectionArg::EmgOnly => FeatureSelection::EmgOnly,
            SelectionArg::ImuOnly => FeatureSelection::ImuOnly,
            SelectionArg::Fused => FeatureSelection::Fused,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Loso,
    LeaveTwoRoundsOut,
}

impl From<StrategyArg> for CvStrategy {
    fn from(s: StrategyArg) -> CvStrategy {
        match s {
            StrategyArg::Loso => CvStrategy::Loso,
            StrategyArg::LeaveTwoRoundsOut => CvStrategy::LeaveTwoRoundsOut,
        }
    }
}

#[derive(clap::Args, Debug, Clone, Serialize)]
struct HyperArgs {
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 5)]
    min_samples_leaf: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

impl HyperArgs {
    fn to_hp(&self, seed: u64) -> Hyperparams {
        Hyperparams {
            n_trees: self.trees,
            max_depth: self.depth,
            learning_rate: self.learning_rate,
            min_samples_leaf: self.min_samples_leaf,
            lambda: self.lambda,
            seed,
        }
    }
}

#[derive(clap::Args, Debug, Clone, Serialize)]
struct PolicyArgs {
    #[arg(long, default_value_t = 5)]
    k_consecutive: usize,
    #[arg(long, default_value_t = 0.7)]
    min_confidence: f64,
    #[arg(long, default_value_t = 1.0)]
    proximity_threshold_m: f64,
}

impl PolicyArgs {
    fn to_policy(&self) -> AlertPolicy {
        AlertPolicy {
            k_consecutive: self.k_consecutive,
            min_confidence: self.min_confidence,
            proximity_threshold_m: self.proximity_threshold_m,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic study as session directories.
    Generate {
        #[arg(long, default_value_t = 11)]
        subjects: usize,
        #[arg(long, default_value_t = 10)]
        rounds: u32,
        #[arg(long, env = "GAITSTREAM_SEED", default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        drift_per_round: f64,
        #[arg(long, default_value = "sessions")]
        out: PathBuf,
    },
    /// Causal band-pass EMG channels of stored sessions.
    Preprocess {
        #[arg(long, default_value = "sessions")]
        input: PathBuf,
        #[arg(long, default_value = "preprocessed")]
        out: PathBuf,
    },
    /// Extract windowed features from stored sessions into a CSV table.
    Featurize {
        #[arg(long, default_value = "preprocessed")]
        input: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, value_enum, default_value_t = SelectionArg::Auto)]
        selection: SelectionArg,
        #[arg(long, default_value_t = 0.0)]
        ssc_threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a feature CSV.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, env = "GAITSTREAM_SEED", default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate a task on a feature CSV.
    Evaluate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        #[arg(long, env = "GAITSTREAM_SEED", default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Adapt a cross-subject model to one held-out subject.
    Adapt {
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        subject: String,
        #[arg(long, default_value_t = 0.1)]
        fraction: f64,
        #[arg(long, env = "GAITSTREAM_SEED", default_value_t = 42)]
        seed: u64,
        #[command(flatten)]
        hyper: HyperArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Round-over-round trend of one feature.
    Trend {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        feature: String,
        /// Restrict to one subject.
        #[arg(long)]
        subject: Option<String>,
        /// Restrict to one scenario id (1-4).
        #[arg(long)]
        scenario: Option<u8>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the streaming pipeline over stdin/stdout or TCP.
    Stream {
        /// Listen address (e.g. 127.0.0.1:7071); stdin/stdout when absent.
        #[arg(long)]
        listen: Option<String>,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Replay a stored session over the wire protocol.
    Replay {
        #[arg(long)]
        session: PathBuf,
        /// Model path the receiving service should load.
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 50.0)]
        chunk_ms: f64,
        /// Constant proximity to attach to every frame.
        #[arg(long)]
        proximity: Option<f64>,
        /// Replay speed factor; 0 streams as fast as possible.
        #[arg(long, default_value_t = 0.0)]
        speed: f64,
        /// Connect address; stdout when absent.
        #[arg(long)]
        connect: Option<String>,
    },
    /// Run the full synthetic-study analysis and write summary + plot data.
    Report {
        #[arg(long, default_value_t = 11)]
        subjects: usize,
        #[arg(long, default_value_t = 10)]
        rounds: u32,
        #[arg(long, env = "GAITSTREAM_SEED", default_value_t = 42)]
        seed: u64,
        #[arg(long, env = "GAITSTREAM_TREES", default_value_t = 100)]
        trees: usize,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

#[derive(Debug)]
struct CliError(String);

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError(e.to_string())
    }
}

fn err(msg: impl Into<String>) -> CliError {
    CliError(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gaitstream: error: {e}");
            ExitCode::from(1)
        }
    }
}

/// Reproducibility header lines embedded into CSV/text artifacts.
fn config_header(command: &str, config: &impl Serialize) -> Vec<String> {
    vec![
        format!("tool: gaitstream {TOOL_VERSION}"),
        format!("command: {command}"),
        format!("config: {}", serde_json::to_string(config).expect("config serialization")),
    ]
}

/// Envelope for JSON artifacts; keeps the resolved config next to the result.
fn write_json_artifact(
    path: &Path,
    command: &str,
    config: &impl Serialize,
    result: &impl Serialize,
) -> Result<(), CliError> {
    let doc = serde_json::json!({
        "tool": format!("gaitstream {TOOL_VERSION}"),
        "command": command,
        "config": serde_json::to_value(config)?,
        "result": serde_json::to_value(result)?,
    });
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")
        .map_err(|e| err(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// Session directories under `root`, detected by their manifest, in sorted
/// order for reproducibility.
fn find_sessions(root: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut found = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if dir.join("manifest.json").is_file() {
            found.push(dir);
            continue;
        }
        let entries = fs::read_dir(&dir).map_err(|e| err(format!("cannot read {}: {e}", dir.display())))?;
        for entry in entries {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            }
        }
    }
    if found.is_empty() {
        return Err(err(format!("no sessions found under {}", root.display())));
    }
    found.sort();
    Ok(found)
}

fn load_sessions(root: &Path) -> Result<Vec<Session>, CliError> {
    find_sessions(root)?
        .iter()
        .map(|dir| load_session(dir).map_err(|e| err(format!("{}: {e}", dir.display()))))
        .collect()
}

fn session_rel_dir(s: &Session) -> PathBuf {
    PathBuf::from(&s.subject.subject_id)
        .join(format!("scenario{}", s.scenario.id()))
        .join(format!("round{:02}", s.round_index))
}

fn read_feature_table(path: &Path) -> Result<FeatureTable, CliError> {
    let text = fs::read_to_string(path).map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
    FeatureTable::from_csv(&text).map_err(|e| err(format!("{}: {e}", path.display())))
}

/// Model artifacts carry an envelope; accept bare models too.
fn read_model(path: &Path) -> Result<GbdtModel, CliError> {
    let text = fs::read_to_string(path).map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
    if let Ok(doc) = serde_json::from_str::<serde_json::Value>(&text) {
        if let Some(model) = doc.get("result") {
            return GbdtModel::from_json(&serde_json::to_string(model)?)
                .map_err(|e| err(format!("{}: {e}", path.display())));
        }
    }
    GbdtModel::from_json(&text).map_err(|e| err(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let wd = &cli.workdir;
    match cli.cmd {
        Cmd::Generate { subjects, rounds, seed, drift_per_round, out } => {
            #[derive(Serialize)]
            struct Cfg {
                subjects: usize,
                rounds: u32,
                seed: u64,
                drift_per_round: f64,
            }
            let cfg = StudyConfig { n_subjects: subjects, rounds, master_seed: seed, drift_per_round };
            let out = wd.join(out);
            for spec in study_specs(&cfg) {
                let s = generate_from_spec(&spec);
                let dir = out.join(session_rel_dir(&s));
                let meta = serde_json::to_value(config_header(
                    "generate",
                    &Cfg { subjects, rounds, seed, drift_per_round },
                ))?;
                gaitstream::session::save_session_with_meta(&s, &dir, Some(meta))?;
            }
            println!("wrote {} sessions under {}", subjects * 4 * rounds as usize, out.display());
            Ok(())
        }
        Cmd::Preprocess { input, out } => {
            let input = wd.join(input);
            let out = wd.join(out);
            let dirs = find_sessions(&input)?;
            for dir in &dirs {
                let mut s = load_session(dir).map_err(|e| err(format!("{}: {e}", dir.display())))?;
                preprocess_session(&mut s).map_err(|e| err(format!("{}: {e}", dir.display())))?;
                let rel = dir.strip_prefix(&input).unwrap_or(dir);
                save_session(&s, &out.join(rel))?;
            }
            println!("preprocessed {} sessions into {}", dirs.len(), out.display());
            Ok(())
        }
        Cmd::Featurize { input, task, selection, ssc_threshold, out } => {
            #[derive(Serialize)]
            struct Cfg {
                input: String,
                task: Task,
                selection: String,
                ssc_threshold: f64,
            }
            let sessions = load_sessions(&wd.join(&input))?;
            for s in &sessions {
                let report = validate_session(s);
                if !report.violations.is_empty() {
                    return Err(err(format!(
                        "session {}/{}/{} is invalid: {:?}",
                        s.subject.subject_id,
                        s.scenario.id(),
                        s.round_index,
                        report.violations[0]
                    )));
                }
            }
            let (table, report) = build_dataset(&sessions, task.into(), selection.into(), ssc_threshold)?;
            let cfg = Cfg {
                input: input.display().to_string(),
                task: task.into(),
                selection: format!("{selection:?}").to_lowercase(),
                ssc_threshold,
            };
            let path = wd.join(out);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, table.to_csv(&config_header("featurize", &cfg)))?;
            println!(
                "wrote {} rows x {} features to {} ({} windows dropped, {} sessions skipped)",
                table.rows.len(),
                table.schema.len(),
                path.display(),
                report.dropped_windows,
                report.skipped_sessions
            );
            Ok(())
        }
        Cmd::Train { features, task, seed, hyper, out } => {
            #[derive(Serialize)]
            struct Cfg {
                features: String,
                task: Task,
                seed: u64,
                hyper: HyperArgs,
            }
            let table = read_feature_table(&wd.join(&features))?;
            let model = train(&table, task.into(), &hyper.to_hp(seed))?;
            let cfg = Cfg { features: features.display().to_string(), task: task.into(), seed, hyper };
            write_json_artifact(&wd.join(&out), "train", &cfg, &model)?;
            println!(
                "trained {} model on {} rows; training accuracy {:.4}",
                model.classes.join("/"),
                table.rows.len(),
                model.accuracy(&table, task.into())
            );
            Ok(())
        }
        Cmd::Evaluate { features, task, strategy, seed, hyper, out } => {
            #[derive(Serialize)]
            struct Cfg {
                features: String,
                task: Task,
                strategy: CvStrategy,
                seed: u64,
                hyper: HyperArgs,
            }
            let table = read_feature_table(&wd.join(&features))?;
            let report = cross_validate(&table, task.into(), strategy.into(), &hyper.to_hp(seed))?;
            println!(
                "{:?} {:?}: mean accuracy {:.4} over {} folds",
                report.task, report.strategy, report.mean_accuracy, report.folds.len()
            );
            for f in &report.folds {
                println!(
                    "  {} rounds {:?}: {:.4} ({} test rows)",
                    f.subject_id, f.held_out_rounds, f.accuracy, f.n_test
                );
            }
            if let Some(out) = out {
                let cfg = Cfg {
                    features: features.display().to_string(),
                    task: task.into(),
                    strategy: strategy.into(),
                    seed,
                    hyper,
                };
                write_json_artifact(&wd.join(out), "evaluate", &cfg, &report)?;
            }
            Ok(())
        }
        Cmd::Adapt { features, task, subject, fraction, seed, hyper, out } => {
            #[derive(Serialize)]
            struct Cfg {
                features: String,
                task: Task,
                subject: String,
                fraction: f64,
                seed: u64,
                hyper: HyperArgs,
            }
            #[derive(Serialize)]
            struct AdaptResult {
                subject: String,
                fraction: f64,
                zero_shot_accuracy: f64,
                adapted_accuracy: f64,
                eval_rows: usize,
            }
            let table = read_feature_table(&wd.join(&features))?;
            let task: Task = task.into();
            let base_table = table.filtered(|r| r.subject_id != subject);
            let subject_table = table.filtered(|r| r.subject_id == subject);
            if subject_table.rows.is_empty() {
                return Err(err(format!("subject '{subject}' not present in {}", features.display())));
            }
            let hp = hyper.to_hp(seed);
            let base = train(&base_table, task, &hp)?;
            let (adapt_rows, eval) = adapt_split(&subject_table, fraction)?;
            let mut pooled = base_table.clone();
            pooled.rows.extend(adapt_rows.rows);
            let adapted = train(&pooled, task, &hp)?;
            let result = AdaptResult {
                subject: subject.clone(),
                fraction,
                zero_shot_accuracy: base.accuracy(&eval, task),
                adapted_accuracy: adapted.accuracy(&eval, task),
                eval_rows: eval.rows.len(),
            };
            println!(
                "{subject}: zero-shot {:.4} -> adapted {:.4} on {} held-out rows",
                result.zero_shot_accuracy, result.adapted_accuracy, result.eval_rows
            );
            if let Some(out) = out {
                let cfg = Cfg {
                    features: features.display().to_string(),
                    task,
                    subject,
                    fraction,
                    seed,
                    hyper,
                };
                write_json_artifact(&wd.join(out), "adapt", &cfg, &result)?;
            }
            Ok(())
        }
        Cmd::Trend { features, feature, subject, scenario, out } => {
            #[derive(Serialize)]
            struct Cfg {
                features: String,
                feature: String,
                subject: Option<String>,
                scenario: Option<u8>,
            }
            let table = read_feature_table(&wd.join(&features))?;
            let filtered = table.filtered(|r| {
                subject.as_deref().map(|s| r.subject_id == s).unwrap_or(true)
                    && scenario.map(|id| r.scenario.id() == id).unwrap_or(true)
            });
            let trend = trend_over_rounds(&filtered, &feature)?;
            println!(
                "{feature}: slope {:.6} per round, correlation {:.4}",
                trend.slope, trend.correlation
            );
            if let Some(out) = out {
                let cfg = Cfg { features: features.display().to_string(), feature, subject, scenario };
                write_json_artifact(&wd.join(out), "trend", &cfg, &trend)?;
            }
            Ok(())
        }
        Cmd::Stream { listen, policy } => {
            let policy = policy.to_policy();
            let load = |path: &str| -> Result<GbdtModel, StreamError> {
                read_model(&wd.join(path)).map_err(|e| StreamError::Config(e.to_string()))
            };
            match listen {
                None => {
                    let stdin = std::io::stdin();
                    let stdout = std::io::stdout();
                    let stats = run_stream(stdin.lock(), stdout.lock(), &policy, load)?;
                    eprintln!(
                        "stream done: {} frames ({} rejected), {} windows, {} predictions, {} alerts",
                        stats.frames, stats.rejected_frames, stats.windows, stats.predictions, stats.alerts
                    );
                }
                Some(addr) => {
                    let listener = TcpListener::bind(&addr).map_err(|e| err(format!("cannot listen on {addr}: {e}")))?;
                    eprintln!("listening on {addr}");
                    for conn in listener.incoming() {
                        let conn = conn?;
                        let reader = BufReader::new(conn.try_clone()?);
                        let writer = BufWriter::new(conn);
                        match run_stream(reader, writer, &policy, load) {
                            Ok(stats) => eprintln!(
                                "connection done: {} frames, {} predictions, {} alerts",
                                stats.frames, stats.predictions, stats.alerts
                            ),
                            Err(e) => eprintln!("connection failed: {e}"),
                        }
                    }
                }
            }
            Ok(())
        }
        Cmd::Replay { session, model, chunk_ms, proximity, speed, connect } => {
            let dir = wd.join(&session);
            let s = load_session(&dir).map_err(|e| err(format!("{}: {e}", dir.display())))?;
            let handshake = session_handshake(&s, &model);
            let frames = session_frames(&s, chunk_ms, proximity);
            let mut out: Box<dyn Write> = match &connect {
                Some(addr) => Box::new(BufWriter::new(
                    TcpStream::connect(addr).map_err(|e| err(format!("cannot connect to {addr}: {e}")))?,
                )),
                None => Box::new(BufWriter::new(std::io::stdout())),
            };
            writeln!(out, "{}", serde_json::to_string(&handshake)?)?;
            let mut last_t = 0.0;
            for f in &frames {
                if speed > 0.0 && f.t_s > last_t {
                    std::thread::sleep(std::time::Duration::from_secs_f64((f.t_s - last_t) / speed));
                    last_t = f.t_s;
                }
                writeln!(out, "{}", serde_json::to_string(f)?)?;
            }
            out.flush()?;
            Ok(())
        }
        Cmd::Report { subjects, rounds, seed, trees, out } => {
            run_report(wd, subjects, rounds, seed, trees, &out)
        }
    }
}

#[derive(Serialize, Clone)]
struct ReportCfg {
    subjects: usize,
    rounds: u32,
    seed: u64,
    trees: usize,
}

/// Full synthetic-study analysis: accuracies, adaptation, the restricted-leg
/// SSC effect, round trends with and without drift, feature importances, and
/// PCA plot coordinates.
fn run_report(wd: &Path, subjects: usize, rounds: u32, seed: u64, trees: usize, out: &Path) -> Result<(), CliError> {
    let out = wd.join(out);
    fs::create_dir_all(&out)?;
    let cfg = ReportCfg { subjects, rounds, seed, trees };
    let header = config_header("report", &cfg);
    let study = StudyConfig { n_subjects: subjects, rounds, master_seed: seed, drift_per_round: 0.0 };
    let hp = Hyperparams { n_trees: trees, ..Default::default() };

    let emg_table = featurize_study(&study, Task::Suit, FeatureSelection::Auto, 0.0).map_err(err)?;
    let imu_table = featurize_study(&study, Task::Movement, FeatureSelection::Auto, 0.0).map_err(err)?;

    let mut summary = String::new();
    for line in &header {
        summary.push_str(&format!("# {line}\n"));
    }
    let mut cv_rows = vec!["task,strategy,subject,held_out_rounds,n_test,accuracy".to_string()];

    // Classification accuracies.
    let mut record = |name: &str, report: &gaitstream::learn::CvReport, summary: &mut String| {
        summary.push_str(&format!("{name}: mean accuracy {:.4} over {} folds\n", report.mean_accuracy, report.folds.len()));
        for f in &report.folds {
            cv_rows.push(format!(
                "{:?},{:?},{},{},{},{}",
                report.task,
                report.strategy,
                f.subject_id,
                f.held_out_rounds.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("+"),
                f.n_test,
                f.accuracy
            ));
        }
    };
    let suit_cv = cross_validate(&emg_table, Task::Suit, CvStrategy::LeaveTwoRoundsOut, &hp)?;
    record("suit detection (intra-subject)", &suit_cv, &mut summary);
    let rollator_cv = cross_validate(&emg_table, Task::Rollator, CvStrategy::LeaveTwoRoundsOut, &hp)?;
    record("rollator detection (intra-subject)", &rollator_cv, &mut summary);
    let movement_cv = cross_validate(&imu_table, Task::Movement, CvStrategy::LeaveTwoRoundsOut, &hp)?;
    record("movement forward/turning (intra-subject)", &movement_cv, &mut summary);
    let movement_loso = cross_validate(&imu_table, Task::Movement, CvStrategy::Loso, &hp)?;
    record("movement forward/turning (cross-subject)", &movement_loso, &mut summary);
    fs::write(out.join("cv_accuracy.csv"), {
        let mut text: String = header.iter().map(|l| format!("# {l}\n")).collect();
        text.push_str(&cv_rows.join("\n"));
        text.push('\n');
        text
    })?;

    // Adaptation: zero-shot vs 10% pooled retraining per held-out subject.
    summary.push_str("movement adaptation (10% of the new subject's windows):\n");
    let mut adapt_rows = vec!["subject,zero_shot_accuracy,adapted_accuracy".to_string()];
    for subject in imu_table.subject_ids() {
        let base_table = imu_table.filtered(|r| r.subject_id != subject);
        let subject_table = imu_table.filtered(|r| r.subject_id == subject);
        let base = train(&base_table, Task::Movement, &hp)?;
        let (adapt, eval) = adapt_split(&subject_table, 0.1)?;
        let mut pooled = base_table.clone();
        pooled.rows.extend(adapt.rows);
        let adapted = train(&pooled, Task::Movement, &hp)?;
        let zs = base.accuracy(&eval, Task::Movement);
        let ad = adapted.accuracy(&eval, Task::Movement);
        summary.push_str(&format!("  {subject}: zero-shot {zs:.4} -> adapted {ad:.4}\n"));
        adapt_rows.push(format!("{subject},{zs},{ad}"));
    }
    fs::write(out.join("adaptation.csv"), {
        let mut text: String = header.iter().map(|l| format!("# {l}\n")).collect();
        text.push_str(&adapt_rows.join("\n"));
        text.push('\n');
        text
    })?;

    // Restricted-side SSC effect.
    summary.push_str("restricted-leg SSC (suit on vs off):\n");
    let mut ssc_rows = vec!["subject,mean_ssc_no_suit,mean_ssc_suit".to_string()];
    for subject in emg_table.subject_ids() {
        let (on, off) = restricted_leg_ssc(&emg_table, &subject, seed)?;
        summary.push_str(&format!("  {subject}: no-suit {off:.2}, suit {on:.2}\n"));
        ssc_rows.push(format!("{subject},{off},{on}"));
    }
    fs::write(out.join("ssc_comparison.csv"), {
        let mut text: String = header.iter().map(|l| format!("# {l}\n")).collect();
        text.push_str(&ssc_rows.join("\n"));
        text.push('\n');
        text
    })?;

    // Trends: drift-free study vs drift-injected study, first subject,
    // restricted-leg RMS.
    let drift_study = StudyConfig { drift_per_round: 0.02, ..study };
    let drift_table = featurize_study(&drift_study, Task::Suit, FeatureSelection::Auto, 0.0).map_err(err)?;
    let subject = emg_table.subject_ids()[0].clone();
    let rms_feature = emg_table
        .schema
        .iter()
        .find(|n| n.ends_with(".rms"))
        .cloned()
        .ok_or_else(|| err("no rms feature in schema"))?;
    let flat = trend_over_rounds(&emg_table.filtered(|r| r.subject_id == subject), &rms_feature)?;
    let drifting = trend_over_rounds(&drift_table.filtered(|r| r.subject_id == subject), &rms_feature)?;
    summary.push_str(&format!(
        "trend ({rms_feature}, {subject}): drift-free slope {:.6} (corr {:.3}); drift-injected slope {:.6} (corr {:.3})\n",
        flat.slope, flat.correlation, drifting.slope, drifting.correlation
    ));
    let mut trend_rows = vec!["study,round,mean_value".to_string()];
    for (r, v) in &flat.per_round {
        trend_rows.push(format!("drift_free,{r},{v}"));
    }
    for (r, v) in &drifting.per_round {
        trend_rows.push(format!("drift_injected,{r},{v}"));
    }
    fs::write(out.join("trend.csv"), {
        let mut text: String = header.iter().map(|l| format!("# {l}\n")).collect();
        text.push_str(&trend_rows.join("\n"));
        text.push('\n');
        text
    })?;

    // Feature importance on the movement task.
    let movement_model = train(&imu_table, Task::Movement, &hp)?;
    let importance = movement_model.feature_importance();
    summary.push_str("top movement-task features by total gain:\n");
    let mut imp_rows = vec!["rank,feature,importance".to_string()];
    for (rank, (name, value)) in importance.iter().enumerate() {
        if rank < 10 {
            summary.push_str(&format!("  {:>2}. {name} {value:.4}\n", rank + 1));
        }
        imp_rows.push(format!("{},{name},{value}", rank + 1));
    }
    fs::write(out.join("feature_importance.csv"), {
        let mut text: String = header.iter().map(|l| format!("# {l}\n")).collect();
        text.push_str(&imp_rows.join("\n"));
        text.push('\n');
        text
    })?;

    // PCA plot coordinates for the movement windows.
    let pca = pca_project(&imu_table)?;
    let mut pca_rows = vec!["pc1,pc2,subject,movement".to_string()];
    for (p, r) in pca.points.iter().zip(&imu_table.rows) {
        let label = r
            .movement_label
            .map(|m| format!("{m:?}").to_lowercase())
            .unwrap_or_else(|| "unlabeled".into());
        pca_rows.push(format!("{},{},{},{}", p[0], p[1], r.subject_id, label));
    }
    summary.push_str(&format!(
        "pca: explained variance {:.3} + {:.3}\n",
        pca.explained_variance_ratio[0], pca.explained_variance_ratio[1]
    ));
    fs::write(out.join("pca.csv"), {
        let mut text: String = header.iter().map(|l| format!("# {l}\n")).collect();
        text.push_str(&pca_rows.join("\n"));
        text.push('\n');
        text
    })?;

    fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");
    println!("report written to {}", out.display());
    Ok(())
}

/// Mean SSC over the restricted-side leg channels, with and without the suit,
/// for one subject. The restricted side alternates with subject index, same
/// as the generator's assignment.
fn restricted_leg_ssc(emg_table: &FeatureTable, subject: &str, seed: u64) -> Result<(f64, f64), CliError> {
    use gaitstream::session::SuitSide;
    // Recover the subject's suit side from the generator parameters.
    let idx: usize = subject
        .trim_start_matches('s')
        .parse::<usize>()
        .map(|n| n - 1)
        .map_err(|_| err(format!("unexpected subject id '{subject}'")))?;
    let params = gaitstream::synthgait::SubjectParams::derive(seed, idx, 0.0);
    let side = match params.suit_side {
        SuitSide::Left => "left_leg",
        SuitSide::Right => "right_leg",
    };
    let cols: Vec<usize> = emg_table
        .schema
        .iter()
        .enumerate()
        .filter(|(_, n)| n.contains(side) && n.ends_with(".ssc"))
        .map(|(i, _)| i)
        .collect();
    if cols.is_empty() {
        return Err(err(format!("no {side} ssc features in schema")));
    }
    let mean_for = |suit: bool| {
        let mut sum = 0.0;
        let mut count = 0usize;
        for r in emg_table.rows.iter().filter(|r| r.subject_id == subject && r.scenario.suit == suit) {
            for &c in &cols {
                sum += r.values[c];
                count += 1;
            }
        }
        sum / count.max(1) as f64
    };
    Ok((mean_for(true), mean_for(false)))
}
