mod config;
mod output;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use addon_core::estimate::analyze;
use addon_core::graph::{check_exchangeability, CausalGraph};
use addon_core::panel::{
    read_panel_file, validate_panel, write_panel, Delimiter, Panel, ValidationReport, VariableSchema,
};
use addon_core::rng::{derive_seed, Purpose};
use addon_core::sem::simulate_observed;

use config::{RunConfig, Source};
use output::{sha256_hex, Manifest, OutDir};

#[derive(Parser)]
#[command(name = "addon", version, about = "Add-on treatment regime estimation on longitudinal panels")]
struct Cli {
    /// Worker threads for rollouts and bootstrap (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an observed panel from the structural model in the config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Estimate regime means and contrasts; writes report.json, plot.csv, summary.csv.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check sequential exchangeability of add-on regimes on a causal graph file.
    CheckGraph {
        graph: PathBuf,
        #[arg(long)]
        kappa: usize,
        /// Target times, comma separated.
        #[arg(long = "k", value_delimiter = ',', required = true)]
        k: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a config and its panel without estimating anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Panel file to check instead of the config's data source.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Tsv,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Simulate { config, out, seed, format } => simulate(&config, &out, seed, format),
        Command::Estimate { config, out, seed } => estimate(&config, &out, seed),
        Command::CheckGraph { graph, kappa, k, out } => check_graph(&graph, kappa, &k, out.as_deref()),
        Command::Validate { config, data, out } => validate(&config, data.as_deref(), out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn manifest_for(command: &str, config: &Path, text: &str, seed: u64) -> Manifest {
    let mut m = Manifest::new(command);
    m.config = Some(config.display().to_string());
    m.config_sha256 = Some(sha256_hex(text.as_bytes()));
    m.seed = Some(seed);
    m
}

/// Loads and validates the panel file, or simulates the panel from the model.
fn load_data(cfg: &RunConfig, schema: &VariableSchema, base: &Path, seed: u64, m: &mut Manifest) -> Result<Panel<f64>> {
    match cfg.source(schema, base)? {
        Source::File { path, delimiter } => {
            m.input(&path)?;
            let panel =
                read_panel_file(&path, schema, delimiter).with_context(|| format!("loading {}", path.display()))?;
            let report = validate_panel(&panel);
            if !report.is_clean() {
                let first: Vec<String> = report.violations.iter().take(5).map(ToString::to_string).collect();
                bail!("{} panel violations, e.g. {}", report.violations.len(), first.join("; "));
            }
            Ok(panel)
        }
        Source::Model { sem, n } => {
            let sim_seed = derive_seed(seed, Purpose::Simulation, 0);
            m.derived_seeds.push(("simulation".into(), sim_seed));
            m.model_sha256 = Some(sem_digest(cfg)?);
            Ok(simulate_observed(&sem, n, sim_seed)?)
        }
    }
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>, format: Format) -> Result<()> {
    let (cfg, text) = RunConfig::load(config)?;
    let schema = cfg.schema()?;
    let seed = seed.unwrap_or(cfg.seed);
    let sem = cfg.structural_model(&schema)?;
    let n = cfg.sem.as_ref().map(|s| s.n).unwrap_or_default();
    let mut m = manifest_for("simulate", config, &text, seed);
    let sim_seed = derive_seed(seed, Purpose::Simulation, 0);
    m.derived_seeds.push(("simulation".into(), sim_seed));
    m.model_sha256 = Some(sem_digest(&cfg)?);
    let panel = simulate_observed(&sem, n, sim_seed)?;
    let (name, delimiter) = match format {
        Format::Csv => ("panel.csv", Delimiter::Comma),
        Format::Tsv => ("panel.tsv", Delimiter::Tab),
    };
    let mut bytes = Vec::new();
    write_panel(&panel, &mut bytes, delimiter)?;
    let mut dir = OutDir::create(out, m)?;
    dir.write(name, &bytes)?;
    dir.finish()?;
    println!("simulated {} subjects x {} times into {}", panel.len(), schema.horizon() + 1, out.join(name).display());
    Ok(())
}

fn sem_digest(cfg: &RunConfig) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(&cfg.sem)?.as_bytes()))
}

fn estimate(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let (cfg, text) = RunConfig::load(config)?;
    let schema = cfg.schema()?;
    let seed = seed.unwrap_or(cfg.seed);
    let comparisons = cfg.comparisons(schema.horizon())?;
    let analysis = cfg.analysis(&schema, seed)?;
    let mut m = manifest_for("estimate", config, &text, seed);
    let panel = load_data(&cfg, &schema, &base_dir(config), seed, &mut m)?;
    if let Some(b) = &analysis.bootstrap {
        m.derived_seeds.push(("bootstrap".into(), b.seed));
    }
    let mut report = analyze(&panel, &analysis, &comparisons)?;
    report.provenance.config_digest = m.config_sha256.clone().unwrap_or_default();
    let mut dir = OutDir::create(out, m)?;
    dir.write_json("report.json", &report)?;
    dir.write("plot.csv", output::plot_table(&report, ',').as_bytes())?;
    dir.write("summary.csv", output::summary_table(&report, ',').as_bytes())?;
    dir.finish()?;
    print!("{}", output::summary_text(&report));
    Ok(())
}

fn check_graph(graph: &Path, kappa: usize, k: &[usize], out: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(graph).with_context(|| format!("reading {}", graph.display()))?;
    let dag = CausalGraph::parse(&text).with_context(|| format!("parsing {}", graph.display()))?;
    let targets: BTreeSet<usize> = k.iter().copied().collect();
    let report = check_exchangeability(&dag, kappa, &targets)?;
    print!("{}", report.to_text());
    if let Some(dir) = out {
        let mut m = Manifest::new("check-graph");
        m.input(graph)?;
        let mut d = OutDir::create(dir, m)?;
        d.write_json("exchangeability.json", &report)?;
        d.write("exchangeability.tsv", report.to_rows().as_bytes())?;
        d.finish()?;
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct Validation {
    subjects: Option<usize>,
    load_error: Option<String>,
    report: Option<ValidationReport>,
}

fn validate(config: &Path, data: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let (cfg, text) = RunConfig::load(config)?;
    let schema = cfg.schema()?;
    let comparisons = cfg.comparisons(schema.horizon())?;
    cfg.analysis(&schema, cfg.seed)?;
    println!("config ok: {} comparison(s), horizon {}", comparisons.len(), schema.horizon());
    let mut m = manifest_for("validate", config, &text, cfg.seed);
    let file = match data {
        Some(path) => Some((path.to_path_buf(), None)),
        None => match cfg.source(&schema, &base_dir(config))? {
            Source::File { path, delimiter } => Some((path, delimiter)),
            Source::Model { .. } => None,
        },
    };
    let mut result = Validation { subjects: None, load_error: None, report: None };
    if let Some((path, delimiter)) = &file {
        m.input(path)?;
        match read_panel_file::<f64>(path, &schema, *delimiter) {
            Ok(panel) => {
                let report = validate_panel(&panel);
                println!("panel: {} subjects, {} violation(s)", panel.len(), report.violations.len());
                for v in report.violations.iter().take(20) {
                    println!("  {v}");
                }
                result.subjects = Some(panel.len());
                result.report = Some(report);
            }
            Err(e) => {
                println!("panel: {e}");
                result.load_error = Some(e.to_string());
            }
        }
    }
    if let Some(dir) = out {
        let mut d = OutDir::create(dir, m)?;
        d.write_json("validation.json", &result)?;
        d.finish()?;
    }
    if let Some(e) = result.load_error {
        bail!("panel cannot be loaded: {e}");
    }
    if result.report.is_some_and(|r| !r.is_clean()) {
        bail!("panel has violations");
    }
    Ok(())
}
