use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use intersect_rsa::experiment::{SuiteRow, TableRow};
use intersect_rsa::glossary::builtin_set_names;
use intersect_rsa::{
    builtin_set, render_table, run_experiment, run_suite, validate_experiment, Error, Experiment,
    ExperimentConfig, ExperimentResult, ItemSet, LoadedSource, SourceCache, SuiteConfig,
    TableFormat, TemplateSet, ValidationReport,
};
use serde::Serialize;

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_USAGE: u8 = 64;

/// Probe embedding spaces for differential association biases with
/// representational similarity analysis.
#[derive(Parser)]
#[command(name = "intersect-rsa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that every item of an experiment (or suite) has an embedding.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Write the full result JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the full result JSON instead of the summary line.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run a suite of experiments and tabulate them.
    Suite {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Expand an item set into an extractor manifest (JSONL of id/text/target).
    Templates {
        /// Built-in set name, or a path to a template-set or item-set JSON file.
        #[arg(long)]
        spec: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate saved result files.
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long, conflicts_with = "json")]
        tsv: bool,
        #[arg(long)]
        json: bool,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::Missing(_)
            | Error::InvalidSet { .. }
            | Error::UnknownSet(_)
            | Error::InvalidInput(_)
            | Error::PoolTooSmall { .. }
            | Error::SlotCount { .. }
            | Error::Json { .. } => EXIT_VALIDATION,
            _ => EXIT_RUNTIME,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn base_dir(config: &Path) -> PathBuf {
    config
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn with_threads<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, Failure> {
    match threads {
        Some(0) => Err(Failure::usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Failure::runtime(format!("thread pool: {e}"))),
        None => Ok(f()),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))
}

fn read_json(path: &Path) -> Result<serde_json::Value, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

/// Experiments named by a config file that may hold one experiment or a
/// suite.
fn load_configs(path: &Path) -> Result<Vec<ExperimentConfig>, Failure> {
    let value = read_json(path)?;
    let parsed = if value.get("experiments").is_some() {
        serde_json::from_value::<SuiteConfig>(value).map(|s| s.experiments)
    } else {
        serde_json::from_value::<ExperimentConfig>(value).map(|c| vec![c])
    };
    parsed.map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct NamedReport<'a> {
    experiment: &'a str,
    #[serde(flatten)]
    report: ValidationReport,
}

fn cmd_validate(config: &Path, json: bool) -> CmdResult {
    let configs = load_configs(config)?;
    let dir = base_dir(config);
    let mut cache = SourceCache::new();
    let mut reports = Vec::new();
    for cfg in configs {
        let experiment = Experiment::resolve(cfg.clone(), &dir)?;
        let source = cache.get(&cfg.source, &dir).map_err(Failure::runtime)?;
        reports.push((cfg.name, validate_experiment(&experiment, &source)));
    }
    let clean = reports.iter().all(|(_, r)| r.is_clean());

    if json {
        let named: Vec<NamedReport> = reports
            .iter()
            .map(|(name, report)| NamedReport {
                experiment: name,
                report: report.clone(),
            })
            .collect();
        println!(
            "{}",
            serde_json::to_string_pretty(&named).expect("serializable")
        );
    } else {
        for (name, report) in &reports {
            println!("{name}");
            for set in &report.sets {
                let status = if set.missing.is_empty() {
                    "ok".to_string()
                } else {
                    format!("missing {}", set.missing.join(", "))
                };
                println!(
                    "  {:<8} {:<24} {:>3} items  {status}",
                    set.role, set.set, set.items
                );
            }
        }
    }
    Ok(if clean { 0 } else { EXIT_VALIDATION })
}

fn cmd_run(config: &Path, out: Option<&Path>, json: bool, threads: Option<usize>) -> CmdResult {
    let cfg = ExperimentConfig::load(config)?;
    let dir = base_dir(config);
    let source = LoadedSource::load(&cfg.source, &dir)?;
    let experiment = Experiment::resolve(cfg, &dir)?;
    let result = with_threads(threads, || run_experiment(&experiment, &source))??;
    if let Some(out) = out {
        write_file(out, &result.to_json())?;
    }
    if json {
        println!("{}", result.to_json());
    } else {
        println!("{}", result.summary_line());
    }
    Ok(0)
}

fn file_stem(index: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{index:02}-{clean}")
}

#[derive(Serialize)]
struct RowSummary<'a> {
    name: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_s1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_s2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    direction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

fn row_summary(row: &SuiteRow) -> RowSummary<'_> {
    match &row.outcome {
        Ok(r) => RowSummary {
            name: &row.config.name,
            mean_s1: Some(r.mean_s1),
            mean_s2: Some(r.mean_s2),
            p_value: Some(r.sign_test.p_value),
            direction: Some(r.sign_test.direction.to_string()),
            error: None,
        },
        Err(e) => RowSummary {
            name: &row.config.name,
            mean_s1: None,
            mean_s2: None,
            p_value: None,
            direction: None,
            error: Some(e),
        },
    }
}

fn cmd_suite(config: &Path, out: &Path, threads: Option<usize>, json: bool) -> CmdResult {
    let suite = SuiteConfig::load(config)?;
    let dir = base_dir(config);
    fs::create_dir_all(out).map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;

    let mut cache = SourceCache::new();
    let rows = with_threads(threads, || run_suite(&suite.experiments, &dir, &mut cache))?;

    for (index, row) in rows.iter().enumerate() {
        if let Ok(result) = &row.outcome {
            let path = out.join(format!("{}.json", file_stem(index, &row.config.name)));
            write_file(&path, &result.to_json())?;
        }
    }
    let table: Vec<TableRow> = rows.iter().map(TableRow::from_suite_row).collect();
    let markdown = render_table(&table, TableFormat::Markdown);
    write_file(&out.join("table.md"), &markdown)?;
    write_file(
        &out.join("table.tsv"),
        &render_table(&table, TableFormat::Tsv),
    )?;

    if json {
        let summaries: Vec<RowSummary> = rows.iter().map(row_summary).collect();
        println!(
            "{}",
            serde_json::to_string_pretty(&summaries).expect("serializable")
        );
    } else {
        print!("{markdown}");
    }
    for row in &rows {
        if let Err(e) = &row.outcome {
            eprintln!("{}: {e}", row.config.name);
        }
    }
    Ok(if rows.iter().all(|r| r.outcome.is_ok()) {
        0
    } else {
        EXIT_RUNTIME
    })
}

fn load_item_set_spec(spec: &str) -> Result<ItemSet, Failure> {
    if spec.trim().is_empty() {
        return Err(Failure::usage(
            "--spec must name a built-in set or a JSON file",
        ));
    }
    match builtin_set(spec) {
        Ok(set) => return Ok(set),
        Err(Error::UnknownSet(_)) => {}
        Err(e) => return Err(e.into()),
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Failure::usage(format!(
            "unknown set {spec:?}; built-in sets: {}",
            builtin_set_names().join(", ")
        )));
    }
    let value = read_json(path)?;
    if value.get("fillers").is_some() {
        let template: TemplateSet = serde_json::from_value(value)
            .map_err(|e| Failure::validation(format!("{spec}: {e}")))?;
        Ok(template.expand()?)
    } else {
        Ok(ItemSet::load(path)?)
    }
}

fn cmd_templates(spec: &str, out: &Path) -> CmdResult {
    let set = load_item_set_spec(spec)?;
    let mut buf = Vec::new();
    for item in set.items() {
        serde_json::to_writer(&mut buf, item).expect("items serialize");
        buf.push(b'\n');
    }
    fs::File::create(out)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Failure::runtime(format!("{}: {e}", out.display())))?;
    eprintln!(
        "wrote {} items of {} to {}",
        set.len(),
        set.name(),
        out.display()
    );
    Ok(0)
}

fn cmd_report(paths: &[PathBuf], tsv: bool, json: bool) -> CmdResult {
    let results: Vec<ExperimentResult> = paths
        .iter()
        .map(|p| ExperimentResult::load(p))
        .collect::<Result<_, _>>()?;
    if json {
        let rows: Vec<serde_json::Value> = results
            .iter()
            .map(|r| {
                serde_json::json!({
                    "name": r.config.name,
                    "group1": r.sets.group1,
                    "group2": r.sets.group2,
                    "concept": r.sets.concept,
                    "mean_s1": r.mean_s1,
                    "mean_s2": r.mean_s2,
                    "sign_test": r.sign_test,
                    "seed": r.seed,
                })
            })
            .collect();
        println!(
            "{}",
            serde_json::to_string_pretty(&rows).expect("serializable")
        );
    } else {
        let table: Vec<TableRow> = results.iter().map(TableRow::from_result).collect();
        let format = if tsv {
            TableFormat::Tsv
        } else {
            TableFormat::Markdown
        };
        print!("{}", render_table(&table, format));
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match &cli.command {
        Command::Validate { config, json } => cmd_validate(config, *json),
        Command::Run {
            config,
            out,
            json,
            threads,
        } => cmd_run(config, out.as_deref(), *json, *threads),
        Command::Suite {
            config,
            out,
            threads,
            json,
        } => cmd_suite(config, out, *threads, *json),
        Command::Templates { spec, out } => cmd_templates(spec, out),
        Command::Report { results, tsv, json } => cmd_report(results, *tsv, *json),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
