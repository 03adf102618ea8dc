//! Command-line pipeline: generate or ingest skeleton recordings, fit the
//! movement primitive, train the hand predictor, replay interactions and
//! evaluate reaching errors.
//!
//! A full run against synthetic data:
//!
//! ```text
//! handshake-sim --out run synth-data --count 50
//! handshake-sim --out run prepare-data
//! handshake-sim --out run fit-promp
//! handshake-sim --out run train-predictor --epochs 30
//! handshake-sim --out run simulate
//! handshake-sim --out run eval
//! ```
//!
//! Exit codes: 0 on success, 2 on validation failures (bad inputs, malformed
//! files), 3 on numerical failures.

use clap::{Args, Parser, Subcommand};
use handshake_core::control::InteractionLog;
use handshake_core::predictor::{train, PredictorWeights};
use handshake_core::promp::ProMP;
use handshake_core::sim::{
    self, evaluate, files, generate_synthetic_dataset, prepare_dataset, replay_split, reports,
    DatasetManifest, FailureKind, PipelineConfig, PipelineError, Role, Split, SynthConfig,
};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "handshake-sim", version, about = "Handshake reaching simulator")]
struct Cli {
    /// Master seed for data generation, splitting and training.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Pipeline configuration file (versioned JSON); defaults apply when
    /// omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; subcommands write into subdirectories of it.
    /// Given before the subcommand (`handshake-sim --out DIR <command>`).
    #[arg(long, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic two-person handshake recordings.
    SynthData(SynthArgs),
    /// Parse, validate, segment and split raw recordings.
    PrepareData(PrepareArgs),
    /// Fit the movement primitive and arm model on the training split.
    FitPromp(FitArgs),
    /// Train the final-hand predictor on the training split.
    TrainPredictor(TrainArgs),
    /// Replay the test split through the controller.
    Simulate(SimulateArgs),
    /// Aggregate reaching errors over interaction logs.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// How many interactions to generate.
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Additive Gaussian joint noise, meters.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// How many of the interactions shake left-handed.
    #[arg(long, default_value_t = 0)]
    left_handed: usize,
}

#[derive(Args)]
struct PrepareArgs {
    /// Directory of .skeleton recordings; defaults to OUT/raw.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Prepared dataset directory (with manifest.json); defaults to
    /// OUT/prepared.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Weight regularizer: "ridge" or "jerk"; defaults to the config value.
    #[arg(long)]
    regularizer: Option<String>,
    /// Regularizer strength; defaults to the config value.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Prepared dataset directory; defaults to OUT/prepared.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Training epochs; defaults to the config value.
    #[arg(long)]
    epochs: Option<usize>,
    /// Batch size; defaults to the config value.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Weight file destination; defaults to OUT/models/predictor.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Prepared dataset directory; defaults to OUT/prepared.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Movement primitive file; defaults to OUT/models/promp.json.
    #[arg(long)]
    promp: Option<PathBuf>,
    /// Predictor weight file; defaults to OUT/models/predictor.json.
    #[arg(long)]
    predictor: Option<PathBuf>,
    /// Arm model file; defaults to OUT/models/arm.json.
    #[arg(long)]
    arm: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of interaction logs; defaults to OUT/logs.
    #[arg(long)]
    logs: Option<PathBuf>,
    /// Histogram bin count.
    #[arg(long, default_value_t = 20)]
    bins: usize,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    match &cli.config {
        Some(path) => PipelineConfig::load(path),
        None => Ok(PipelineConfig::default()),
    }
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = load_config(cli)?;
    let out = &cli.out;
    match &cli.command {
        Command::SynthData(args) => {
            let dir = out.join("raw");
            let generated = generate_synthetic_dataset(
                &dir,
                &SynthConfig {
                    count: args.count,
                    seed: cli.seed,
                    noise_std: args.noise,
                    left_handed: args.left_handed,
                },
            )?;
            println!("wrote {} recordings to {}", generated.len(), dir.display());
        }
        Command::PrepareData(args) => {
            let data = args.data.clone().unwrap_or_else(|| out.join("raw"));
            let prepared = out.join("prepared");
            let manifest = prepare_dataset(
                &data,
                &prepared,
                &cfg.segmentation,
                cfg.discontinuity_threshold(),
                cli.seed,
                cfg.split.train_fraction,
            )?;
            println!(
                "prepared {} interactions ({} accepted: {} train / {} test, {} rejected) -> {}",
                manifest.entries.len(),
                manifest.counts.accepted,
                manifest.counts.train,
                manifest.counts.test,
                manifest.counts.rejected,
                prepared.display()
            );
        }
        Command::FitPromp(args) => {
            let data = args.data.clone().unwrap_or_else(|| out.join("prepared"));
            let manifest = DatasetManifest::load(&data.join("manifest.json"))?;
            let mut promp_settings = cfg.promp.clone();
            if let Some(reg) = &args.regularizer {
                promp_settings.regularizer = reg.clone();
            }
            if let Some(lambda) = args.lambda {
                promp_settings.lambda = lambda;
            }
            let (promp, arm) = sim::fit_promp_from_manifest(
                &manifest,
                &data,
                cfg.basis.to_basis()?,
                promp_settings.to_regularizer()?,
                promp_settings.obs_noise_std,
            )?;
            let models = out.join("models");
            fs::create_dir_all(&models)?;
            fs::write(models.join("promp.json"), promp.to_json())?;
            files::write_arm_model(&models.join("arm.json"), &arm)?;
            println!(
                "fitted primitive ({} basis functions, 4 DoF) and arm model ({:.3} m / {:.3} m) -> {}",
                promp.basis.n_basis,
                arm.upper_arm_length,
                arm.forearm_length,
                models.display()
            );
        }
        Command::TrainPredictor(args) => {
            let data = args.data.clone().unwrap_or_else(|| out.join("prepared"));
            let manifest = DatasetManifest::load(&data.join("manifest.json"))?;
            let dataset = sim::predictor_dataset(&manifest, &data, Split::Train)?;
            let mut predictor_cfg = cfg.predictor.clone();
            predictor_cfg.seed = cli.seed;
            if let Some(epochs) = args.epochs {
                predictor_cfg.epochs = epochs;
            }
            if let Some(batch) = args.batch_size {
                predictor_cfg.batch_size = batch;
            }
            let (weights, curve) = train(&dataset, &predictor_cfg)?;
            let weights_path = args
                .out
                .clone()
                .unwrap_or_else(|| out.join("models").join("predictor.json"));
            if let Some(parent) = weights_path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&weights_path, weights.to_json())?;
            let reports_dir = out.join("reports");
            fs::create_dir_all(&reports_dir)?;
            reports::write_loss_curve_csv(&reports_dir.join("predictor_loss.csv"), &curve)?;
            println!(
                "trained on {} trajectories for {} epochs (final loss {:.6}) -> {}",
                dataset.len(),
                curve.len(),
                curve.last().copied().unwrap_or(f64::NAN),
                weights_path.display()
            );
        }
        Command::Simulate(args) => {
            let data = args.data.clone().unwrap_or_else(|| out.join("prepared"));
            let manifest = DatasetManifest::load(&data.join("manifest.json"))?;
            let promp_path = args
                .promp
                .clone()
                .unwrap_or_else(|| out.join("models").join("promp.json"));
            let predictor_path = args
                .predictor
                .clone()
                .unwrap_or_else(|| out.join("models").join("predictor.json"));
            let arm_path = args
                .arm
                .clone()
                .unwrap_or_else(|| out.join("models").join("arm.json"));

            let promp = ProMP::from_json(&fs::read_to_string(&promp_path)?)?;
            let predictor = PredictorWeights::from_json(&fs::read_to_string(&predictor_path)?)?;
            let arm = files::read_arm_model(&arm_path)?;

            let logs = replay_split(
                &manifest,
                &data,
                Split::Test,
                &promp,
                &arm,
                &predictor,
                &cfg.controller_config(),
            )?;
            let logs_dir = out.join("logs");
            let reports_dir = out.join("reports");
            fs::create_dir_all(&logs_dir)?;
            fs::create_dir_all(&reports_dir)?;

            // Subject angle trajectories line up with the logs in manifest
            // order for the observed-vs-commanded report.
            let mut subjects = Vec::new();
            for (_, persons, _) in manifest.accepted(Some(Split::Test)) {
                let subject = persons
                    .iter()
                    .find(|p| p.role == Role::Subject)
                    .expect("accepted interactions carry a subject");
                subjects.push(files::read_angle_trajectory(
                    &data.join(&subject.angles),
                    30.0,
                )?);
            }
            for (i, log) in logs.iter().enumerate() {
                fs::write(
                    logs_dir.join(format!("interaction_{i:03}.jsonl")),
                    log.to_jsonl(),
                )?;
                reports::write_interaction_csv(
                    &reports_dir.join(format!("interaction_{i:03}.csv")),
                    log,
                    subjects.get(i).map(|t| t as _),
                )?;
            }
            println!("replayed {} test interactions -> {}", logs.len(), logs_dir.display());
        }
        Command::Eval(args) => {
            let logs_dir = args.logs.clone().unwrap_or_else(|| out.join("logs"));
            let mut paths: Vec<PathBuf> = fs::read_dir(&logs_dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
                .collect();
            paths.sort();
            let mut logs = Vec::new();
            for path in &paths {
                logs.push(InteractionLog::from_jsonl(&fs::read_to_string(path)?)?);
            }
            let summary = evaluate(&logs)?;
            let eval_dir = out.join("eval");
            fs::create_dir_all(&eval_dir)?;
            fs::write(
                eval_dir.join("summary.json"),
                serde_json::to_string_pretty(&summary).expect("summary serializes"),
            )?;
            reports::write_error_histogram_csv(
                &eval_dir.join("error_histogram.csv"),
                &summary.errors,
                args.bins,
            )?;
            println!(
                "{} interactions: mean final reaching error {:.4} m (std {:.4} m), {} non-converged steps",
                summary.count, summary.mean, summary.std, summary.non_convergence_flags
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err.kind() {
                FailureKind::Validation => ExitCode::from(2),
                FailureKind::Numerical => ExitCode::from(3),
            }
        }
    }
}
