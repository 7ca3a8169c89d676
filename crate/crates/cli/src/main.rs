use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cryptoscan::bench::{self, ToolReport};
use cryptoscan::classify::{match_signature, prevalence_csv, prevalence_report, ArgumentSignature};
use cryptoscan::exec::Execution;
use cryptoscan::ingest::{ApiKind, ApiSignature};
use cryptoscan::report::{
    exit_code, plan_sample, read_report, render_jsonl, render_text, run_scan, strata_csv, strata_table, FailOn,
    ScanConfig,
};

#[derive(Parser)]
#[command(name = "cryptoscan", version, about = "Find crypto-API misuse in Java sources")]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write a JSON-lines report.
    Scan {
        dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum, default_value_t = Format::Jsonl)]
        format: Format,
        /// Write the report here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        strata_csv: Option<PathBuf>,
        #[arg(long)]
        prevalence_csv: Option<PathBuf>,
    },
    /// Draw a stratified sample from a scan report.
    Sample {
        report: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
        #[arg(long, default_value_t = 0.05)]
        margin: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the stratum table of a scan report as CSV.
    Stratify {
        report: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
        #[arg(long, default_value_t = 0.05)]
        margin: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Label prevalence as CSV, or the sites matching an argument signature.
    Classify {
        dir: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// e.g. `identifier=3,ternary_expression=1`
        #[arg(long)]
        signature: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Generate or grade the benchmark corpus.
    Bench {
        #[command(subcommand)]
        action: BenchAction,
    },
    /// Print reference data.
    Report {
        /// The rule catalog as JSON.
        #[arg(long)]
        catalog: bool,
    },
}

#[derive(Subcommand)]
enum BenchAction {
    Gen {
        outdir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Run {
        corpus: PathBuf,
        /// `self` for the bundled detector, otherwise a report CSV.
        #[arg(long, default_value = "self")]
        report: String,
        /// Also write the verdict matrix as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Jsonl,
    Text,
}

#[derive(Args)]
struct ConfigArgs {
    /// `key = value` configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// API kind (e.g. RESTRICTIVE_SECRETKEYSPEC) or pattern (`Class.method`,
    /// `new Type`, `impl method`). Repeatable; replaces the defaults.
    #[arg(long = "api")]
    apis: Vec<String>,
    /// Scan every built-in API.
    #[arg(long, conflicts_with = "apis")]
    all_apis: bool,
    #[arg(long)]
    max_indirection: Option<usize>,
    #[arg(long)]
    max_candidates: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    confidence: Option<f64>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long, value_parser = FailOn::parse_arg)]
    fail_on: Option<FailOn>,
    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

trait ParseArg: Sized {
    fn parse_arg(s: &str) -> Result<Self, String>;
}

impl ParseArg for FailOn {
    fn parse_arg(s: &str) -> Result<Self, String> {
        FailOn::parse(s).ok_or_else(|| format!("expected error, warning or none, got {s:?}"))
    }
}

impl ConfigArgs {
    fn build(&self) -> Result<ScanConfig> {
        let mut cfg = match &self.config {
            Some(p) => ScanConfig::parse(&read(p)?).with_context(|| format!("in {}", p.display()))?,
            None => ScanConfig::default(),
        };
        if self.all_apis {
            cfg = cfg.all_apis();
        }
        if !self.apis.is_empty() {
            cfg.apis = self
                .apis
                .iter()
                .map(|a| {
                    ApiKind::parse(a)
                        .and_then(ApiSignature::canonical)
                        .or_else(|| ApiSignature::parse(a))
                        .with_context(|| format!("unknown api {a:?}"))
                })
                .collect::<Result<_>>()?;
        }
        if let Some(v) = self.max_indirection {
            cfg.budget.max_indirection = v;
        }
        if let Some(v) = self.max_candidates {
            cfg.budget.max_candidates = v;
        }
        if let Some(v) = self.max_steps {
            cfg.budget.max_steps = v;
        }
        if let Some(v) = self.confidence {
            cfg.confidence = v;
        }
        if let Some(v) = self.margin {
            cfg.margin = v;
        }
        if let Some(v) = self.fail_on {
            cfg.fail_on = v;
        }
        if self.sequential {
            cfg.execution = Execution::Sequential;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn parse_signature(spec: &str) -> Result<ArgumentSignature> {
    let mut pairs = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (kind, n) = part.split_once('=').with_context(|| format!("expected kind=count, got {part:?}"))?;
        let n: usize = n.trim().parse().with_context(|| format!("bad count in {part:?}"))?;
        pairs.push((kind.trim(), n));
    }
    Ok(ArgumentSignature::from_pairs(pairs))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Scan { dir, config, format, output, strata_csv: strata_path, prevalence_csv: prev_path } => {
            let cfg = config.build()?;
            let result = run_scan(&dir, &cfg)?;
            let text = match format {
                Format::Jsonl => render_jsonl(&result, &cfg)?,
                Format::Text => render_text(&result),
            };
            emit(output.as_deref(), &text)?;
            if let Some(p) = strata_path {
                let rows = strata_table(
                    result.analyses.iter().map(|a| (a.site.api, a.site.id.as_str(), a.complexity.d)),
                    cfg.confidence,
                    cfg.margin,
                )?;
                emit(Some(&p), &strata_csv(&rows))?;
            }
            if let Some(p) = prev_path {
                emit(Some(&p), &prevalence_csv(&prevalence_report(result.analyses.iter().map(|a| &a.labels))))?;
            }
            Ok(exit_code(result.findings(), cfg.fail_on) as u8)
        }
        Command::Sample { report, seed, confidence, margin, output } => {
            let sites = read_report(&read(&report)?, &report.display().to_string())?;
            let plans = plan_sample(&sites, seed, confidence, margin)?;
            let mut text = serde_json::to_string_pretty(&plans)?;
            text.push('\n');
            emit(output.as_deref(), &text)?;
            Ok(0)
        }
        Command::Stratify { report, confidence, margin, output } => {
            let sites = read_report(&read(&report)?, &report.display().to_string())?;
            let rows = strata_table(sites.iter().map(|s| (s.api, s.id.as_str(), s.d)), confidence, margin)?;
            emit(output.as_deref(), &strata_csv(&rows))?;
            Ok(0)
        }
        Command::Classify { dir, config, signature, output } => {
            let cfg = config.build()?;
            let result = run_scan(&dir, &cfg)?;
            let text = match signature {
                Some(spec) => {
                    let pattern = parse_signature(&spec)?;
                    let ids = match_signature(result.analyses.iter().map(|a| (a.site.id.as_str(), &a.signature)), &pattern);
                    ids.iter().map(|id| format!("{id}\n")).collect()
                }
                None => prevalence_csv(&prevalence_report(result.analyses.iter().map(|a| &a.labels))),
            };
            emit(output.as_deref(), &text)?;
            Ok(0)
        }
        Command::Bench { action: BenchAction::Gen { outdir, seed } } => {
            let cases = bench::generate_corpus(&outdir, seed)?;
            let variants: usize = cases.iter().map(|c| c.variants.len()).sum();
            eprintln!("wrote {} cases ({variants} variants) to {}", cases.len(), outdir.display());
            Ok(0)
        }
        Command::Bench { action: BenchAction::Run { corpus, report, csv } } => {
            let manifest = bench::load_manifest(&corpus)?;
            let reports: Vec<ToolReport> = if report == "self" {
                vec![bench::self_report(&corpus, &ScanConfig::default().all_apis())?]
            } else {
                let path = Path::new(&report);
                bench::parse_tool_reports(&read(path)?, &report)?
            };
            if reports.is_empty() {
                bail!("{report} holds no rows");
            }
            let columns: Vec<(String, Vec<bench::DetectionVerdict>)> =
                reports.iter().map(|r| (r.tool.clone(), bench::grade(&manifest.cases, r))).collect();
            let table = bench::summarize(&columns);
            emit(None, &table.text)?;
            if let Some(p) = csv {
                emit(Some(&p), &table.csv)?;
            }
            Ok(0)
        }
        Command::Report { catalog } => {
            if !catalog {
                bail!("nothing to report; try --catalog");
            }
            emit(None, &(ScanConfig::default().catalog.to_json() + "\n"))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
