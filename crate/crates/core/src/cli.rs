//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 usage, 3 configuration, 4 file access,
//! 5 invalid data, 6 backend failure, 8 some reports failed.
//! Failures print one JSON object on stderr:
//! `{"error": kind, "message": text, "exit_code": n}`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{validate_config, ConfigFileError, PipelineConfig};
use crate::evalstats::{self, StatsError};
use crate::gateway::{Gateway, GatewayError, HttpBackend, RateLimiter, RetryPolicy};
use crate::ingest::{self, IngestError};
use crate::model::StudentId;
use crate::parallel::Exec;
use crate::preprocess::{CategoryMapping, MappingError};
use crate::promptgen::{PromptError, PromptTemplate, StudentTagDataset};
use crate::report::{self, ReportError};
use crate::synth::{self, CohortSpec, LabelSource, SpecError};
use crate::tagger;

#[derive(Debug, Parser)]
#[command(name = "edutag", version, about = "Learning tags and personalized reports from question-attempt logs")]
pub struct Cli {
    /// Pipeline configuration file (flat `key = value`).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Run every stage on a single thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a raw attempt log and report rejected rows.
    IngestCheck(IngestCheckArgs),
    /// Compute the 34-flag tag vector for every student.
    Tag(TagArgs),
    /// Generate personalized reports.
    Report(ReportArgs),
    /// Summarize teacher survey scores.
    EvalStats(EvalStatsArgs),
    /// Write a synthetic attempt log with planted profiles.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct IngestCheckArgs {
    /// Attempt log (CSV, or JSON lines for .jsonl/.ndjson).
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct MappingArgs {
    /// Knowledge-label mapping file (raw_label<TAB>area).
    #[arg(long = "mapping-k", value_name = "PATH", requires = "mapping_a")]
    pub mapping_k: Option<PathBuf>,
    /// Ability-label mapping file (raw_label<TAB>domain).
    #[arg(long = "mapping-a", value_name = "PATH", requires = "mapping_k")]
    pub mapping_a: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TagArgs {
    /// Attempt log (CSV, or JSON lines for .jsonl/.ndjson).
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    #[command(flatten)]
    pub mapping: MappingArgs,
    /// Output student_tag file.
    #[arg(long, value_name = "PATH", default_value = "student_tag.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// student_tag file produced by `tag`.
    #[arg(long, value_name = "PATH", conflicts_with = "input", required_unless_present = "input")]
    pub tags: Option<PathBuf>,
    /// Raw attempt log; tags are computed on the fly.
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub mapping: MappingArgs,
    /// Comma-separated student ids (default: every student).
    #[arg(long, value_name = "IDS", value_delimiter = ',')]
    pub students: Vec<String>,
    /// Completion backend; `http` needs the credential variable from config.
    #[arg(long, value_enum, default_value_t = BackendKind::Mock)]
    pub backend: BackendKind,
    /// Directory for report_<id>.md and report_<id>.meta.json.
    #[arg(long, value_name = "DIR", default_value = "reports")]
    pub out_dir: PathBuf,
    /// Prompt template replacing the bundled one.
    #[arg(long, value_name = "PATH")]
    pub template: Option<PathBuf>,
    /// Model name sent to the backend.
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvalStatsArgs {
    /// Survey CSV: respondent_id,u,p,m,c,o[,advice].
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Totals at or below this are discarded (default from config).
    #[arg(long, value_name = "N")]
    pub low_threshold: Option<u32>,
    /// Write the summary table here instead of stdout.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Write a box plot (SVG).
    #[arg(long, value_name = "PATH")]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Cohort spec file (flat `key = value`).
    #[arg(long, value_name = "PATH")]
    pub spec: Option<PathBuf>,
    /// Random seed; equal seeds give identical output.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides the cohort size from the spec.
    #[arg(long, value_name = "N")]
    pub students: Option<usize>,
    /// Output attempt log (CSV).
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Also write knowledge_map.tsv and ability_map.tsv here.
    #[arg(long, value_name = "DIR")]
    pub mapping_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(kind: &'static str, code: i32, message: impl Into<String>) -> Self {
        CliError { kind, code, message: message.into() }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::new("io", 4, format!("{}: {e}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({"error": self.kind, "message": self.message, "exit_code": self.code}).to_string()
    }
}

impl From<ConfigFileError> for CliError {
    fn from(e: ConfigFileError) -> Self {
        match e {
            ConfigFileError::Io { .. } => CliError::new("io", 4, e.to_string()),
            _ => CliError::new("config", 3, e.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } => CliError::new("io", 4, e.to_string()),
            _ => CliError::new("data", 5, e.to_string()),
        }
    }
}

impl From<MappingError> for CliError {
    fn from(e: MappingError) -> Self {
        match e {
            MappingError::Io { .. } => CliError::new("io", 4, e.to_string()),
            _ => CliError::new("mapping", 5, e.to_string()),
        }
    }
}

impl From<PromptError> for CliError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Io { .. } => CliError::new("io", 4, e.to_string()),
            _ => CliError::new("data", 5, e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::Io { .. } => CliError::new("io", 4, e.to_string()),
            _ => CliError::new("data", 5, e.to_string()),
        }
    }
}

impl From<SpecError> for CliError {
    fn from(e: SpecError) -> Self {
        match e {
            SpecError::Io { .. } => CliError::new("io", 4, e.to_string()),
            _ => CliError::new("config", 3, e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::new("io", 4, e.to_string())
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::MissingCredential(_) => CliError::new("config", 3, e.to_string()),
            _ => CliError::new("backend", 6, e.to_string()),
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let err = CliError::new("usage", 2, e.to_string().trim_end());
            eprintln!("{}", err.to_json());
            return err.code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("{}", err.to_json());
            err.code
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    let cfg = match path {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    validate_config(cfg).map_err(|errs| {
        let msgs: Vec<String> = errs.iter().map(ToString::to_string).collect();
        CliError::new("config", 3, msgs.join("; "))
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn load_mapping(args: &MappingArgs, cfg: &PipelineConfig) -> Result<CategoryMapping, CliError> {
    let k = args.mapping_k.as_ref().or(cfg.knowledge_mapping.as_ref());
    let a = args.mapping_a.as_ref().or(cfg.ability_mapping.as_ref());
    match (k, a) {
        (Some(k), Some(a)) => Ok(CategoryMapping::from_files(k, a)?.0),
        (None, None) => {
            log::warn!("no mapping files given; using the built-in illustrative mapping");
            Ok(CategoryMapping::illustrative_default())
        }
        _ => Err(CliError::new("config", 3, "knowledge and ability mappings must be given together")),
    }
}

fn read_attempts(path: &Path) -> Result<Vec<crate::model::AttemptRecord>, CliError> {
    let (records, rep) = ingest::parse_attempts_path(path)?;
    if rep.rejected > 0 {
        log::warn!("{}: {} rows rejected", path.display(), rep.rejected);
    }
    Ok(records)
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    let mut out = std::io::stdout().lock();
    let say = |out: &mut std::io::StdoutLock<'_>, line: String| {
        let _ = writeln!(out, "{line}");
    };

    match cli.command {
        Command::IngestCheck(args) => {
            let (_, rep) = ingest::parse_attempts_path(&args.input)?;
            say(&mut out, serde_json::to_string(&rep).expect("report serializes"));
            Ok(0)
        }
        Command::Tag(args) => {
            let records = read_attempts(&args.input)?;
            let mapping = load_mapping(&args.mapping, &cfg)?;
            let (dataset, summary) = report::dataset_from_attempts(&records, &mapping, &cfg, exec)?;
            let mut w = create(&args.out)?;
            tagger::write_student_tags(&mut w, dataset.rows()).map_err(|e| CliError::io(&args.out, e))?;
            w.flush().map_err(|e| CliError::io(&args.out, e))?;
            say(&mut out, serde_json::to_string(&summary).expect("summary serializes"));
            Ok(0)
        }
        Command::Report(args) => {
            let dataset = match (&args.tags, &args.input) {
                (Some(tags), _) => StudentTagDataset::load(tags)?,
                (None, Some(input)) => {
                    let records = read_attempts(input)?;
                    let mapping = load_mapping(&args.mapping, &cfg)?;
                    report::dataset_from_attempts(&records, &mapping, &cfg, exec)?.0
                }
                (None, None) => return Err(CliError::new("usage", 2, "either --tags or --input is required")),
            };
            let template = match &args.template {
                Some(p) => PromptTemplate::load(p)?,
                None => PromptTemplate::default(),
            };
            let mut params = cfg.llm.params.clone();
            if let Some(m) = &args.model {
                params.model = m.clone();
            }
            params.validate().map_err(|e| CliError::new("config", 3, e))?;
            let gateway = match args.backend {
                BackendKind::Mock => Gateway::mock(),
                BackendKind::Http => Gateway::new(Arc::new(HttpBackend::from_settings(&cfg.llm)?))
                    .with_retry(RetryPolicy::from_settings(&cfg.llm))
                    .with_rate_limit(RateLimiter::per_minute(cfg.llm.requests_per_minute)),
            }
            .with_max_concurrency(cfg.llm.max_concurrency);
            let students: Vec<StudentId> = if args.students.is_empty() {
                dataset.students().cloned().collect()
            } else {
                args.students.iter().map(|s| StudentId::new(s.trim())).collect()
            };
            let outcome =
                report::generate_batch(&students, &dataset, &template, &gateway, &params, Some(&args.out_dir))?;
            for r in &outcome.reports {
                let (md, _) = report::report_paths(&args.out_dir, &r.student_id);
                let flag = if r.truncated { " (truncated)" } else { "" };
                say(&mut out, format!("{}{flag}", md.display()));
            }
            if outcome.failures.is_empty() {
                return Ok(0);
            }
            let detail: Vec<String> =
                outcome.failures.iter().map(|f| format!("{}: {}", f.student_id, f.error)).collect();
            if outcome.reports.is_empty() {
                Err(CliError::new("backend", 6, detail.join("; ")))
            } else {
                Err(CliError::new("partial", 8, detail.join("; ")))
            }
        }
        Command::EvalStats(args) => {
            let responses = evalstats::load_survey(&args.input)?;
            let threshold = args.low_threshold.unwrap_or(cfg.survey_low_total_threshold);
            let filtered = evalstats::filter_responses(&responses, threshold);
            let (v, l, p) = filtered.counts();
            say(&mut out, format!("valid={v} low={l} perfect={p}"));
            let summaries = evalstats::summarize(&filtered.valid)?;
            match &args.out {
                Some(path) => {
                    let mut w = create(path)?;
                    evalstats::write_summary_csv(&mut w, &summaries)?;
                    w.flush().map_err(|e| CliError::io(path, e))?;
                }
                None => evalstats::write_summary_csv(&mut out, &summaries)?,
            }
            if let Some(path) = &args.plot {
                let mut w = create(path)?;
                w.write_all(evalstats::render_boxplot_svg(&summaries).as_bytes())
                    .and_then(|_| w.flush())
                    .map_err(|e| CliError::io(path, e))?;
            }
            Ok(0)
        }
        Command::Synth(args) => {
            let mut spec = match &args.spec {
                Some(p) => CohortSpec::from_file(p)?,
                None => CohortSpec::default(),
            };
            if let Some(n) = args.students {
                spec.students = n;
            }
            if spec.students == 0 {
                return Err(CliError::new("config", 3, "cohort needs at least one student"));
            }
            let profiles = spec.profiles(args.seed);
            let labels = LabelSource::default();
            let records = synth::generate_cohort_with(exec, &profiles, args.seed, &labels, spec.noise)
                .map_err(|e| CliError::new("config", 3, e.to_string()))?;
            let mut w = create(&args.out)?;
            synth::write_attempts_csv(&mut w, &records)
                .map_err(|e| CliError::new("io", 4, format!("{}: {e}", args.out.display())))?;
            w.flush().map_err(|e| CliError::io(&args.out, e))?;
            if let Some(dir) = &args.mapping_dir {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                let (k, a) = CategoryMapping::illustrative_default().to_tsv();
                for (name, text) in [("knowledge_map.tsv", k), ("ability_map.tsv", a)] {
                    let path = dir.join(name);
                    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
                }
            }
            say(&mut out, format!("students={} records={}", profiles.len(), records.len()));
            Ok(0)
        }
    }
}
