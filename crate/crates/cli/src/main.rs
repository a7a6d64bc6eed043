use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sae_core::datapool::{generate_synthetic_pool, load_pool, save_pool, SynthConfig};
use sae_core::experiment::{
    ablation_csv, read_result, recompute_calibration, recompute_probe_calibration, run_ablation, run_experiment,
    sibling_test_dir, write_outputs, AblationAxis, AblationRow, ExperimentResult, RunConfig, RELIABILITY_CSV,
};
use sae_core::io_util::write_atomic;
use sae_core::metrics::reliability_csv;
use sae_core::SaeError;
use serde_json::{json, Map, Value};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "sae", version, about = "Evidential active learning over embedding pools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic pool and its `<out>_test` split.
    Gen(GenArgs),
    /// Run one strategy over the configured seeds.
    Run(RunArgs),
    /// Rerun the base config once per value of an ablation axis.
    Ablate(AblateArgs),
    /// Recompute calibration from a finished run.
    Calib(CalibArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..))]
    k: u64,
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(2..))]
    d: u64,
    #[arg(long, default_value_t = 400)]
    n_per_class: usize,
    #[arg(long, default_value_t = 100)]
    test_per_class: usize,
    /// Comma-separated relative class sizes, one per class.
    #[arg(long, value_delimiter = ',')]
    imbalance: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.35)]
    intra_sigma: f64,
    #[arg(long, default_value_t = 0.15)]
    proto_noise: f64,
    #[arg(long, default_value_t = 1)]
    descriptions_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Run-config fields; each flag overrides the same field of `--config`.
#[derive(Args)]
struct ConfigArgs {
    /// JSON run config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    pool_path: Option<PathBuf>,
    #[arg(long)]
    test_path: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    loss_variant: Option<String>,
    #[arg(long)]
    regression_form: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    tau_f: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    n_seed_per_class: Option<usize>,
    #[arg(long)]
    budget_basis: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// One of loss_variant, regression_form, beta, epsilon, schedule.
    #[arg(long)]
    axis: String,
}

#[derive(Args)]
struct CalibArgs {
    /// `result.json` or the directory holding it.
    #[arg(long)]
    result: PathBuf,
    /// Where to write the reliability CSV; defaults to the result's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &SaeError) -> u8 {
    match e {
        SaeError::Config(_) | SaeError::InvalidArgument(_) => EXIT_USAGE,
        e if e.is_data_error() => EXIT_DATA,
        SaeError::Io { .. } | SaeError::Json(_) => EXIT_DATA,
        _ => EXIT_NUMERICAL,
    }
}

impl ConfigArgs {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| json!(p));
        let entries = [
            ("pool_path", path(&self.pool_path)),
            ("test_path", path(&self.test_path)),
            ("strategy", self.strategy.as_ref().map(|v| json!(v))),
            ("schedule", self.schedule.as_ref().map(|v| json!(v))),
            ("loss_variant", self.loss_variant.as_ref().map(|v| json!(v))),
            ("regression_form", self.regression_form.as_ref().map(|v| json!(v))),
            ("rho", self.rho.map(|v| json!(v))),
            ("rounds", self.rounds.map(|v| json!(v))),
            ("seeds", self.seeds.as_ref().map(|v| json!(v))),
            ("tau", self.tau.map(|v| json!(v))),
            ("tau_f", self.tau_f.map(|v| json!(v))),
            ("beta", self.beta.map(|v| json!(v))),
            ("epsilon", self.epsilon.map(|v| json!(v))),
            ("n_seed_per_class", self.n_seed_per_class.map(|v| json!(v))),
            ("budget_basis", self.budget_basis.as_ref().map(|v| json!(v))),
            ("output_dir", path(&self.output_dir)),
        ];
        for (key, value) in entries {
            if let Some(v) = value {
                m.insert(key.to_string(), v);
            }
        }
        m
    }

    /// The config file with flag overrides applied, validated as one document.
    fn resolve(&self) -> Result<RunConfig, SaeError> {
        let mut doc = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| SaeError::Config(format!("{}: {e}", path.display())))?;
                match serde_json::from_str::<Value>(&text) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(SaeError::Config(format!("{}: expected a JSON object", path.display()))),
                    Err(e) => return Err(SaeError::Config(format!("{}: {e}", path.display()))),
                }
            }
            None => Map::new(),
        };
        doc.extend(self.overrides());
        RunConfig::from_json(&Value::Object(doc).to_string())
    }
}

fn cmd_gen(a: &GenArgs) -> Result<(), SaeError> {
    let mut cfg = SynthConfig::new(a.k as usize, a.d as usize, a.n_per_class);
    cfg.test_per_class = a.test_per_class;
    cfg.imbalance = a.imbalance.clone();
    cfg.intra_sigma = a.intra_sigma;
    cfg.proto_noise = a.proto_noise;
    cfg.descriptions_per_class = a.descriptions_per_class;
    cfg.seed = a.seed;
    cfg.validate().map_err(|e| SaeError::Config(e.to_string()))?;
    let out = generate_synthetic_pool(&cfg)?;
    let test_dir = sibling_test_dir(&a.out);
    save_pool(&out.pool, &a.out)?;
    save_pool(&out.test, &test_dir)?;
    println!("wrote {} ({} samples) and {} ({} samples)", a.out.display(), out.pool.n(), test_dir.display(), out.test.n());
    println!(
        "zero-shot accuracy: pool={:.6} test={:.6}",
        out.pool.zero_shot_accuracy(),
        out.test.zero_shot_accuracy()
    );
    Ok(())
}

fn print_summary(result: &ExperimentResult) {
    for a in &result.aggregate {
        println!(
            "{} round {} n_labeled={:.0} accuracy={:.6}±{:.6} nll={:.6} ece={:.6}",
            result.strategy, a.round, a.n_labeled.mean, a.accuracy.mean, a.accuracy.std, a.nll.mean, a.ece.mean
        );
    }
    if let Some(r) = result.round_efficiency {
        println!("round efficiency (t=3 / t=5) = {:.6}", r);
    }
}

fn cmd_run(a: &RunArgs) -> Result<(), SaeError> {
    let cfg = a.cfg.resolve()?;
    let result = run_experiment(&cfg)?;
    write_outputs(&result, &cfg.output_dir)?;
    print_summary(&result);
    println!("outputs in {}", cfg.output_dir.display());
    Ok(())
}

fn cmd_ablate(a: &AblateArgs) -> Result<(), SaeError> {
    let axis = AblationAxis::parse(&a.axis).ok_or_else(|| {
        let names: Vec<&str> = AblationAxis::ALL.iter().map(|x| x.name()).collect();
        SaeError::Config(format!("unknown ablation axis {:?}; expected one of {}", a.axis, names.join(", ")))
    })?;
    let base = a.cfg.resolve()?;
    let pool = load_pool(&base.pool_path)?;
    let test = load_pool(&base.test_path())?;
    let runs = run_ablation(&pool, &test, &base, axis)?;
    let mut rows: Vec<AblationRow> = Vec::with_capacity(runs.len());
    for (row, result) in &runs {
        write_outputs(result, &base.output_dir.join(&row.variant))?;
        println!(
            "{}: accuracy={:.6}±{:.6} nll={:.6} ece={:.6}",
            row.variant, row.accuracy.mean, row.accuracy.std, row.nll.mean, row.ece.mean
        );
        rows.push(row.clone());
    }
    let path = base.output_dir.join("ablation.csv");
    write_atomic(&path, ablation_csv(&rows).as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn result_dir(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

fn cmd_calib(a: &CalibArgs) -> Result<(), SaeError> {
    let result = read_result(&a.result)?;
    let report = recompute_calibration(&result.seeds)?;
    let out = a.out.clone().unwrap_or_else(|| result_dir(&a.result));
    write_atomic(&out.join(RELIABILITY_CSV), reliability_csv(&report.bins).as_bytes())?;
    println!("ECE={:.6} NLL={:.6}", report.ece, report.nll);
    if let Some(probe) = recompute_probe_calibration(&result.seeds)? {
        println!("probe ECE={:.6} NLL={:.6}", probe.ece, probe.nll);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Run(a) => cmd_run(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Calib(a) => cmd_calib(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
