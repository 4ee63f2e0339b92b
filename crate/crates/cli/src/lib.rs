//! Command-line driver: synthetic data, input checks, full runs, truth
//! verification and output comparison.
//!
//! Exit codes: 0 success, 1 analytical failure, 2 usage, configuration or
//! input error.

pub mod config;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use mvrisk::ingest::{parse_fundamentals, parse_prices, parse_riskfree, PriceSeries};
use mvrisk::panel::{build_dataset, PanelDataset};
use mvrisk::pipeline::{analyze, Analysis};
use mvrisk::report::{
    build_tables, compare_dirs, emit, model_summaries, read_tables, truth_check_table, ExcludedRow, Manifest,
    ReportBundle, ReportError, MANIFEST_FILE, SCHEMA_VERSION,
};
use mvrisk::synth::{generate_panel, Truth};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use config::{parse_config, ConfigError, RunConfig, Settings, Source};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ANALYSIS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Hex digits of the config hash used as the run id.
const RUN_ID_LEN: usize = 12;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Analysis(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Analysis(_) => EXIT_ANALYSIS,
            _ => EXIT_USAGE,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "mvrisk", version, about = "Marketing intensity, firm value and systematic risk on firm-year panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic panel with planted coefficients
    Synth(SettingsArgs),
    /// Parse and validate input files without estimating anything
    IngestCheck(SettingsArgs),
    /// Run the full analysis and write every table
    Run(SettingsArgs),
    /// Check estimated coefficients against a synthetic truth record
    Verify {
        /// Directory holding truth.json
        #[arg(long)]
        data: PathBuf,
        /// Run output directory, or a directory holding exactly one run
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the tables of two output directories cell by cell
    ReportDiff {
        expected: PathBuf,
        actual: PathBuf,
        /// Maximum relative difference per numeric cell
        #[arg(long, default_value_t = 0.0)]
        rel_tol: f64,
    },
}

#[derive(Args, Debug, Default)]
struct SettingsArgs {
    /// Flat key = value config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Marketing intensity measure
    #[arg(long, value_parser = ["sales", "assets", "log"])]
    marin_variant: Option<String>,
    /// Build the interaction from mean-centered OW and Marin
    #[arg(long)]
    center: bool,
    /// Fix the book value coefficient at 1 and model P - B
    #[arg(long)]
    constrain_book_unit: bool,
    /// Beta window length in months
    #[arg(long)]
    beta_window: Option<usize>,
    /// Minimum paired months in a beta window
    #[arg(long)]
    beta_min: Option<usize>,
    /// Directory with fundamentals.csv, prices.csv and riskfree.csv
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    fundamentals: Option<PathBuf>,
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    riskfree: Option<PathBuf>,
}

impl SettingsArgs {
    fn settings(&self) -> Result<Settings, CliError> {
        let mut s = match &self.config {
            Some(path) => parse_config(&read(path)?)?,
            None => Settings::new(),
        };
        let mut set = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                s.insert(k.to_owned(), v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        set("seed", self.seed.map(|v| v.to_string()));
        set("out", path(&self.out));
        set("marin_variant", self.marin_variant.clone());
        set("center", self.center.then(|| "true".to_owned()));
        set("constrain_book_unit", self.constrain_book_unit.then(|| "true".to_owned()));
        set("beta_window", self.beta_window.map(|v| v.to_string()));
        set("beta_min", self.beta_min.map(|v| v.to_string()));
        set("data", path(&self.data));
        set("fundamentals", path(&self.fundamentals));
        set("prices", path(&self.prices));
        set("riskfree", path(&self.riskfree));
        Ok(s)
    }

    fn run_config(&self) -> Result<RunConfig, CliError> {
        Ok(RunConfig::from_settings(&self.settings()?)?)
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, body: &str) -> Result<(), CliError> {
    fs::write(path, body).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn print_json(value: &serde_json::Value) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", serde_json::to_string(value).expect("summary serializes"));
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Usage errors are printed by the argument parser.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::IngestCheck(a) => cmd_ingest_check(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Verify { data, out } => cmd_verify(&data, &out),
        Command::ReportDiff { expected, actual, rel_tol } => cmd_report_diff(&expected, &actual, rel_tol),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}

fn cmd_synth(args: &SettingsArgs) -> Result<i32, CliError> {
    let cfg = args.run_config()?;
    let out = cfg.out.clone().ok_or_else(|| CliError::Usage("synth needs an output directory (--out)".into()))?;
    let Source::Synth(dgp) = &cfg.source else {
        return Err(CliError::Usage("synth does not read input files".into()));
    };
    let generated = generate_panel(dgp).map_err(|e| CliError::Input(e.to_string()))?;
    fs::create_dir_all(&out).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
    let files = [
        ("fundamentals.csv", generated.fundamentals_csv.as_str()),
        ("prices.csv", generated.prices_csv.as_str()),
        ("riskfree.csv", generated.riskfree_csv.as_str()),
        ("truth.json", &generated.truth.to_json()),
    ];
    for (name, body) in files {
        write(&out.join(name), body)?;
    }
    print_json(&json!({
        "command": "synth",
        "seed": dgp.seed,
        "observations": generated.dataset.len(),
        "output_dir": out.display().to_string(),
        "files": files.iter().map(|f| f.0).collect::<Vec<_>>(),
    }));
    Ok(EXIT_OK)
}

struct Loaded {
    dataset: PanelDataset,
    prices: Vec<PriceSeries>,
    rows_rejected: usize,
    /// SHA-256 of each input file, keyed by role.
    digests: BTreeMap<String, String>,
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn load(cfg: &RunConfig) -> Result<Loaded, CliError> {
    match &cfg.source {
        Source::Synth(dgp) => {
            let g = generate_panel(dgp).map_err(|e| CliError::Input(e.to_string()))?;
            Ok(Loaded { dataset: g.dataset, prices: g.prices, rows_rejected: 0, digests: BTreeMap::new() })
        }
        Source::Files { fundamentals, prices, riskfree } => {
            let input = |what: &str, path: &Path, e: &dyn std::fmt::Display| {
                CliError::Input(format!("{what} ({}): {e}", path.display()))
            };
            let (f_text, p_text, r_text) = (read(fundamentals)?, read(prices)?, read(riskfree)?);
            let (rows, report) = parse_fundamentals(&f_text).map_err(|e| input("fundamentals", fundamentals, &e))?;
            for r in &report.rejections {
                warn!("fundamentals line {}: {}", r.line, r.reason);
            }
            let price_series = parse_prices(&p_text).map_err(|e| input("prices", prices, &e))?;
            let rf = parse_riskfree(&r_text).map_err(|e| input("riskfree", riskfree, &e))?;
            let dataset = build_dataset(rows, rf).map_err(|e| CliError::Input(format!("panel: {e}")))?;
            let digests = BTreeMap::from([
                ("fundamentals".to_owned(), hex_digest(f_text.as_bytes())),
                ("prices".to_owned(), hex_digest(p_text.as_bytes())),
                ("riskfree".to_owned(), hex_digest(r_text.as_bytes())),
            ]);
            Ok(Loaded { dataset, prices: price_series, rows_rejected: report.rows_rejected, digests })
        }
    }
}

fn cmd_ingest_check(args: &SettingsArgs) -> Result<i32, CliError> {
    let cfg = args.run_config()?;
    if matches!(cfg.source, Source::Synth(_)) {
        return Err(CliError::Usage("ingest-check needs --data or the three input paths".into()));
    }
    let l = load(&cfg)?;
    let gaps: usize = l.prices.iter().map(|p| p.gaps.len()).sum();
    print_json(&json!({
        "command": "ingest-check",
        "observations": l.dataset.len(),
        "rows_rejected": l.rows_rejected,
        "firms": l.dataset.firms().len(),
        "years": l.dataset.years(),
        "balanced": l.dataset.is_balanced(),
        "price_series": l.prices.len(),
        "price_gaps": gaps,
    }));
    Ok(EXIT_OK)
}

/// SHA-256 over the effective settings and input file digests.
fn config_hash(effective: &Settings, digests: &BTreeMap<String, String>) -> String {
    let mut material = String::new();
    for (k, v) in effective {
        material.push_str(&format!("{k}={v}\n"));
    }
    for (k, v) in digests {
        material.push_str(&format!("sha256:{k}={v}\n"));
    }
    hex_digest(material.as_bytes())
}

/// RFC 3339 time from `SOURCE_DATE_EPOCH`, or the Unix epoch when unset,
/// so that output bytes depend only on inputs.
fn timestamp() -> Result<String, CliError> {
    let secs = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v.trim().parse::<i64>().map_err(|e| CliError::Usage(format!("SOURCE_DATE_EPOCH `{v}`: {e}")))?,
        Err(_) => 0,
    };
    let t = time::OffsetDateTime::from_unix_timestamp(secs)
        .map_err(|e| CliError::Usage(format!("SOURCE_DATE_EPOCH {secs}: {e}")))?;
    Ok(t.format(&time::format_description::well_known::Rfc3339).expect("valid timestamp formats"))
}

fn manifest(cfg: &RunConfig, loaded: &Loaded, a: &Analysis) -> Result<Manifest, CliError> {
    let effective = cfg.effective();
    let config_hash = config_hash(&effective, &loaded.digests);
    let versions = BTreeMap::from([
        ("mvrisk".to_owned(), mvrisk::VERSION.to_owned()),
        ("mvrisk-cli".to_owned(), env!("CARGO_PKG_VERSION").to_owned()),
        ("table_schema".to_owned(), SCHEMA_VERSION.to_string()),
    ]);
    let excluded_rows = a
        .derived
        .exclusions
        .iter()
        .map(|e| ExcludedRow { firm_id: e.firm_id.as_str().to_owned(), year: e.year, reason: e.reason.clone() })
        .collect();
    Ok(Manifest {
        run_id: config_hash[..RUN_ID_LEN].to_owned(),
        config_hash,
        timestamp: timestamp()?,
        versions,
        config: effective,
        tables: Vec::new(),
        files: Vec::new(),
        models: model_summaries(a),
        excluded_rows,
    })
}

fn cmd_run(args: &SettingsArgs) -> Result<i32, CliError> {
    let cfg = args.run_config()?;
    let root = cfg.out.clone().ok_or_else(|| CliError::Usage("run needs an output directory (--out)".into()))?;
    let loaded = load(&cfg)?;
    info!("panel: {} firm-years", loaded.dataset.len());
    let analysis =
        analyze(&loaded.dataset, &loaded.prices, cfg.options).map_err(|e| CliError::Analysis(e.to_string()))?;

    let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &analysis.derived.exclusions {
        *reasons.entry(e.reason.as_str()).or_default() += 1;
    }
    for (reason, n) in &reasons {
        warn!("{n} firm-year row(s) excluded: {reason}");
    }
    // The same warning often applies to every model; report it once.
    let mut warnings: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for r in analysis.models.iter().chain(&analysis.robustness) {
        for w in &r.warnings {
            warnings.entry(w.as_str()).or_default().push(format!("{}/{}", r.model_id(), r.spec.marin_variant.name()));
        }
    }
    for (w, models) in &warnings {
        warn!("{w} [{}]", models.join(", "));
    }

    let manifest = manifest(&cfg, &loaded, &analysis)?;
    let dir = root.join(&manifest.run_id);
    let bundle = ReportBundle { tables: build_tables(&analysis), manifest };
    let written = emit(&bundle, &dir).map_err(|e| CliError::Input(e.to_string()))?;
    print_json(&json!({
        "command": "run",
        "run_id": bundle.manifest.run_id,
        "output_dir": dir.display().to_string(),
        "files": written.len(),
        "observations": analysis.derived.len(),
        "excluded_rows": analysis.derived.exclusions.len(),
        "models": bundle.manifest.models.iter().map(|m| json!({
            "table": m.table,
            "nobs": m.nobs,
            "r_squared": m.r_squared,
            "hausman_p": m.hausman_p,
        })).collect::<Vec<_>>(),
    }));
    Ok(EXIT_OK)
}

/// `out` itself when it holds a manifest, else its single run subdirectory.
fn resolve_run_dir(out: &Path) -> Result<PathBuf, CliError> {
    if out.join(MANIFEST_FILE).is_file() {
        return Ok(out.to_owned());
    }
    let entries = fs::read_dir(out).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
    let runs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    match runs.as_slice() {
        [one] => Ok(one.clone()),
        [] => Err(CliError::Input(format!("no run output under {}", out.display()))),
        _ => Err(CliError::Input(format!("{} holds several runs; name one", out.display()))),
    }
}

fn cmd_verify(data: &Path, out: &Path) -> Result<i32, CliError> {
    let truth_path = data.join("truth.json");
    if !truth_path.is_file() {
        return Err(CliError::Input(format!("{} not found", truth_path.display())));
    }
    let truth = Truth::from_json(&read(&truth_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", truth_path.display())))?;
    let dir = resolve_run_dir(out)?;
    let tables = read_tables(&dir).map_err(|e| CliError::Input(e.to_string()))?;
    let mut failures = 0;
    let mut checks = Vec::new();
    for name in [&truth.value_model, &truth.risk_model] {
        let table = tables
            .iter()
            .find(|t| &t.name == name)
            .ok_or_else(|| CliError::Input(format!("table {name} missing from {}", dir.display())))?;
        let results = truth_check_table(table, &truth).map_err(|e| CliError::Input(e.to_string()))?;
        for c in results {
            if !c.pass {
                failures += 1;
                eprintln!(
                    "FAIL {name} / {} / Coefficient: estimate {} vs planted {} ({:.2} SE)",
                    c.variable, c.estimate, c.truth, c.deviation_se
                );
            }
            checks.push(json!({
                "table": name,
                "variable": c.variable,
                "estimate": c.estimate,
                "std_error": c.std_error,
                "truth": c.truth,
                "deviation_se": c.deviation_se,
                "pass": c.pass,
            }));
        }
    }
    print_json(&json!({ "command": "verify", "checks": checks, "failures": failures }));
    Ok(if failures == 0 { EXIT_OK } else { EXIT_ANALYSIS })
}

fn cmd_report_diff(expected: &Path, actual: &Path, rel_tol: f64) -> Result<i32, CliError> {
    if !(rel_tol >= 0.0) {
        return Err(CliError::Usage(format!("rel-tol must be non-negative, got {rel_tol}")));
    }
    // Schema mismatches and unreadable files are input errors, not differences.
    let diffs = compare_dirs(expected, actual, rel_tol).map_err(|e: ReportError| CliError::Input(e.to_string()))?;
    for d in &diffs {
        eprintln!("{d}");
    }
    print_json(&json!({ "command": "report-diff", "rel_tol": rel_tol, "differences": diffs.len() }));
    Ok(if diffs.is_empty() { EXIT_OK } else { EXIT_ANALYSIS })
}
