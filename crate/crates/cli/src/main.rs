//! Batch command surface for the conjoint simulation and verification
//! engine. Every command reads one JSON config and emits CSV/JSON
//! artifacts with fixed formatting, byte-identical for identical seeds.

mod config;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use conjoint_core::lab::SweepSpec;
use conjoint_core::{
    absolute_effect_mode, amce_estimate, meta_regression, Contrast, EffectRow, EffectTable,
    Error as CoreError, Population, ResponseDataset,
};

const EXIT_VALIDATION: u8 = 1;
const EXIT_ASSERTION: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "conjoint",
    version,
    about = "Conjoint choice simulation and verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace every configured seed deterministically.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one response dataset per consideration-set size.
    Simulate(CommonArgs),
    /// Estimate per-level effects from a simulated dataset.
    Estimate {
        /// Response dataset CSV produced by `simulate`.
        dataset: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the amplification, rank-stability, and reversal-search checks.
    Verify(CommonArgs),
    /// Sweep the target effect over k, meta-regress it, and export heatmaps.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Meta-regress absolute effect sizes.
        #[arg(long)]
        abs_effects: bool,
    },
    /// Random-effects meta-regression of an effect table CSV.
    Meta {
        /// Effect table CSV (study_id,k_attributes,effect,variance\[,country\]).
        table: PathBuf,
        /// Output directory for the fit JSON (defaults to stdout only).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Meta-regress absolute effect sizes.
        #[arg(long)]
        abs_effects: bool,
    },
}

struct CommandError {
    code: u8,
    message: String,
}

impl CommandError {
    fn validation(message: impl Into<String>) -> Self {
        CommandError {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        CommandError {
            code: EXIT_IO,
            message: message.into(),
        }
    }

    fn from_core(error: CoreError) -> Self {
        let code = match &error {
            CoreError::Io(_) | CoreError::Csv(_) => EXIT_IO,
            _ => EXIT_VALIDATION,
        };
        CommandError {
            code,
            message: error.to_string(),
        }
    }
}

type CommandResult<T> = Result<T, CommandError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(error) => {
            // Help/version requests are not failures.
            let benign = matches!(
                error.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = error.print();
            return if benign {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VALIDATION)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {}", error.message);
            ExitCode::from(error.code)
        }
    }
}

fn run(cli: Cli) -> CommandResult<()> {
    match cli.command {
        Command::Simulate(common) => {
            let (config, out) = prepare(&common)?;
            cmd_simulate(&config, &out)
        }
        Command::Estimate { dataset, common } => {
            let (config, out) = prepare(&common)?;
            cmd_estimate(&config, &dataset, &out)
        }
        Command::Verify(common) => {
            let (config, out) = prepare(&common)?;
            cmd_verify(&config, &out)
        }
        Command::Sweep {
            common,
            abs_effects,
        } => {
            let (config, out) = prepare(&common)?;
            cmd_sweep(&config, &out, abs_effects)
        }
        Command::Meta {
            table,
            out,
            abs_effects,
        } => cmd_meta(&table, out.as_deref(), abs_effects),
    }
}

fn prepare(common: &CommonArgs) -> CommandResult<(RunConfig, PathBuf)> {
    if let Some(threads) = common.threads {
        if threads == 0 {
            return Err(CommandError::validation("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CommandError::validation(format!("thread pool: {e}")))?;
    }
    let mut config = RunConfig::load(&common.config).map_err(CommandError::validation)?;
    if let Some(seed) = common.seed_override {
        config.override_seeds(seed);
    }
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| config.output_dir.clone());
    std::fs::create_dir_all(&out)
        .map_err(|e| CommandError::io(format!("cannot create {}: {e}", out.display())))?;
    Ok((config, out))
}

/// One dataset CSV per consideration-set size.
fn cmd_simulate(config: &RunConfig, out: &Path) -> CommandResult<()> {
    let population = Population::generate(&config.schema, &config.population)
        .map_err(CommandError::from_core)?;
    for &k in &config.design.k_list {
        let design = config.design_for(k).map_err(CommandError::from_core)?;
        let seed = conjoint_core::rng::mix_seed(config.design.seed, k as u64);
        let dataset = conjoint_core::simulate_study(&population, &design, seed)
            .map_err(CommandError::from_core)?;
        let path = out.join(format!("dataset_k{k}.csv"));
        dataset
            .write_csv_path(&path)
            .map_err(CommandError::from_core)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Effect table over every attribute's non-baseline levels.
fn cmd_estimate(config: &RunConfig, dataset_path: &Path, out: &Path) -> CommandResult<()> {
    if !dataset_path.exists() {
        return Err(CommandError::io(format!(
            "dataset {} not found",
            dataset_path.display()
        )));
    }
    let dataset = ResponseDataset::read_csv_path(dataset_path).map_err(CommandError::from_core)?;
    if dataset.rows.is_empty() {
        return Err(CommandError::validation("dataset has no rows"));
    }
    let k = dataset.num_attributes();
    let mut rows: Vec<EffectRow> = Vec::new();
    for (a, name) in dataset.attr_names.iter().enumerate() {
        let attr_index = config.schema.attribute_index(name).ok_or_else(|| {
            CommandError::validation(format!("dataset attribute '{name}' not in the schema"))
        })?;
        let attribute = config.schema.attribute(attr_index);
        if dataset.level_counts[a] > attribute.levels.len() {
            return Err(CommandError::validation(format!(
                "dataset attribute '{name}' has more levels than the schema"
            )));
        }
        for level in 1..dataset.level_counts[a] {
            let estimate = amce_estimate(
                &dataset,
                Contrast {
                    attribute: a,
                    level_t: level,
                    level_c: 0,
                },
                config.estimation.method,
                config.estimation.outcome,
                config.estimation.bootstrap_resamples,
                conjoint_core::rng::mix_seed(config.estimation.seed, (a * 100 + level) as u64),
            )
            .map_err(CommandError::from_core)?;
            rows.push(EffectRow {
                attribute: name.clone(),
                level: attribute.levels[level].label.clone(),
                baseline: attribute.levels[0].label.clone(),
                estimate: estimate.point,
                variance: estimate.variance,
                n: estimate.n,
                method: estimate.method,
                k_attributes: k,
            });
        }
    }
    let stem = dataset_path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset");
    let path = out.join(format!("effects_{stem}.csv"));
    conjoint_core::estimands::write_effect_rows_path(&path, &rows)
        .map_err(CommandError::from_core)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Model verification checks; exits 2 when an assertion is violated.
fn cmd_verify(config: &RunConfig, out: &Path) -> CommandResult<()> {
    let verify = config
        .verify
        .clone()
        .ok_or_else(|| CommandError::validation("config has no verify section"))?;
    let report = report::run_verification(&verify).map_err(CommandError::from_core)?;
    let path = out.join("verify_report.json");
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| CommandError::io(format!("serialize report: {e}")))?;
    std::fs::write(&path, json.as_bytes())
        .map_err(|e| CommandError::io(format!("write {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    for line in report.summary_lines() {
        println!("{line}");
    }
    if !report.pass {
        return Err(CommandError {
            code: EXIT_ASSERTION,
            message: "verification assertions failed (see verify_report.json)".into(),
        });
    }
    Ok(())
}

/// AMCE-vs-k sweep, its meta-regression, and the sign/importance heatmaps.
fn cmd_sweep(config: &RunConfig, out: &Path, abs_effects: bool) -> CommandResult<()> {
    let (target, level_t, level_c) = config.sweep_target().map_err(CommandError::validation)?;
    let template = config
        .design_for(*config.design.k_list.last().unwrap())
        .map_err(CommandError::from_core)?;
    let spec = SweepSpec {
        design: template,
        k_list: config.design.k_list.clone(),
        target_attribute: target,
        contrast: (level_t, level_c),
        study_seed: config.design.seed,
        outcome: config.estimation.outcome,
        method: config.estimation.method,
        bootstrap_resamples: config.estimation.bootstrap_resamples,
        estimation_seed: config.estimation.seed,
    };
    let population = Population::generate(&config.schema, &config.population)
        .map_err(CommandError::from_core)?;

    let table =
        conjoint_core::lab::sweep_amce_vs_k(&spec, &population).map_err(CommandError::from_core)?;
    let effects_path = out.join("sweep_effects.csv");
    table
        .write_csv_path(&effects_path)
        .map_err(CommandError::from_core)?;

    let fit_input = if abs_effects {
        absolute_effect_mode(&table)
    } else {
        table.clone()
    };
    let fit = meta_regression(&fit_input).map_err(CommandError::from_core)?;
    let fit_path = out.join("sweep_meta.json");
    std::fs::write(
        &fit_path,
        serde_json::to_string_pretty(&fit)
            .map_err(|e| CommandError::io(format!("serialize fit: {e}")))?,
    )
    .map_err(|e| CommandError::io(format!("write {}: {e}", fit_path.display())))?;

    let signs =
        conjoint_core::lab::sign_heatmap(&spec, &population).map_err(CommandError::from_core)?;
    let signs_path = out.join("sign_heatmap.csv");
    signs
        .write_csv_path(&signs_path)
        .map_err(CommandError::from_core)?;

    let importance = conjoint_core::lab::importance_heatmap(&spec, &population)
        .map_err(CommandError::from_core)?;
    let amce_path = out.join("importance_amce_heatmap.csv");
    importance
        .write_amce_csv_path(&amce_path)
        .map_err(CommandError::from_core)?;
    let r2_path = out.join("importance_r2_heatmap.csv");
    importance
        .write_r2_csv_path(&r2_path)
        .map_err(CommandError::from_core)?;

    for path in [&effects_path, &fit_path, &signs_path, &amce_path, &r2_path] {
        println!("wrote {}", path.display());
    }
    println!(
        "meta fit: slope {:.6} (se {:.6}), intercept {:.6}, tau2 {:.6}",
        fit.slope, fit.slope_se, fit.intercept, fit.tau2
    );
    Ok(())
}

/// Meta-regression of an external effect table.
fn cmd_meta(table_path: &Path, out: Option<&Path>, abs_effects: bool) -> CommandResult<()> {
    if !table_path.exists() {
        return Err(CommandError::io(format!(
            "effect table {} not found",
            table_path.display()
        )));
    }
    let table = EffectTable::read_csv_path(table_path).map_err(CommandError::from_core)?;
    let input = if abs_effects {
        absolute_effect_mode(&table)
    } else {
        table
    };
    let fit = meta_regression(&input).map_err(CommandError::from_core)?;
    let json = serde_json::to_string_pretty(&fit)
        .map_err(|e| CommandError::io(format!("serialize fit: {e}")))?;
    println!("{json}");
    if let Some(out) = out {
        std::fs::create_dir_all(out)
            .map_err(|e| CommandError::io(format!("cannot create {}: {e}", out.display())))?;
        let path = out.join("meta_fit.json");
        std::fs::write(&path, json.as_bytes())
            .map_err(|e| CommandError::io(format!("write {}: {e}", path.display())))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
