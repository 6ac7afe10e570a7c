use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cod_core::belief::{Backend, BeliefBackendConfig, LlmConfig};
use cod_core::datagen::{build_training_set, export_training_set, CodOutcome, DatagenConfig, DEFAULT_RETHINK_LIMIT};
use cod_core::engine::{Engine, EntropyMode, SessionConfig};
use cod_core::knowledge::{demo_catalog, load_cases, save_cases, split_cases, synthesize_cases, CaseRecord, DiseaseDB};
use cod_core::retriever::{eval_retriever, train_retriever, RetrieverModel, TrainConfig, DEFAULT_K};
use cod_core::simeval::{curve_csv, run_benchmark, sweep_tau, threshold_curve, DEFAULT_SEEDS};

use crate::server::{self, AppState, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "cod", version, about = "Chain-of-diagnosis decision engine tools")]
pub struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize patient cases from the catalog.
    Synth(SynthArgs),
    /// Train the symptom/disease embedding retriever.
    TrainRetriever(TrainArgs),
    /// Recall@k and MRR of a trained retriever on held-out cases.
    EvalRetriever(EvalRetrieverArgs),
    /// Run the simulated-patient benchmark.
    Eval(EvalArgs),
    /// Benchmark once per confidence threshold.
    Sweep(SweepArgs),
    /// Diagnosis rate and accuracy per threshold without any questions.
    Curve(CurveArgs),
    /// Build verified dialogue training records.
    Datagen(DatagenArgs),
    /// Serve the HTTP session API.
    Serve(ServeArgs),
    /// Diagnose yourself at the terminal.
    Interactive(InteractiveArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CatalogArg {
    /// Disease catalog (JSONL). The bundled demo catalog when omitted.
    #[arg(long)]
    pub db: Option<PathBuf>,
}

impl CatalogArg {
    pub fn load(&self) -> anyhow::Result<DiseaseDB> {
        match &self.db {
            Some(p) => DiseaseDB::load(p).with_context(|| format!("loading catalog {}", p.display())),
            None => Ok(demo_catalog()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendName {
    Bayes,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeName {
    PresentOnly,
    Expected,
}

#[derive(Debug, Clone, Args)]
pub struct SessionArgs {
    /// Diagnose once the top confidence exceeds this.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Question budget per session.
    #[arg(long, default_value_t = 5)]
    pub max_rounds: usize,
    /// Candidates recalled per round.
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = BackendName::Bayes)]
    pub backend: BackendName,
    #[arg(long, value_enum, default_value_t = ModeName::PresentOnly)]
    pub entropy_mode: ModeName,
}

impl SessionArgs {
    pub fn config(&self) -> anyhow::Result<SessionConfig> {
        let cfg = SessionConfig {
            tau: self.tau,
            max_rounds: self.max_rounds,
            k: self.k,
            backend: match self.backend {
                BackendName::Bayes => BeliefBackendConfig::default(),
                BackendName::Llm => BeliefBackendConfig::Llm(LlmConfig::default()),
            },
            entropy_mode: match self.entropy_mode {
                ModeName::PresentOnly => EntropyMode::PresentOnly,
                ModeName::Expected => EntropyMode::Expected,
            },
            ..SessionConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub catalog: CatalogArg,
    #[arg(long, default_value_t = 5)]
    pub per_disease: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Hold out this fraction of the cases into `--eval-out`.
    #[arg(long, requires = "eval_out")]
    pub eval_fraction: Option<f64>,
    #[arg(long, requires = "eval_fraction")]
    pub eval_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub catalog: CatalogArg,
    #[arg(long)]
    pub cases: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = TrainConfig::default().dim)]
    pub dim: usize,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvalRetrieverArgs {
    #[command(flatten)]
    pub catalog: CatalogArg,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub cases: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchInputs {
    #[command(flatten)]
    pub catalog: CatalogArg,
    #[arg(long)]
    pub cases: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub session: SessionArgs,
}

impl BenchInputs {
    fn load(&self) -> anyhow::Result<(DiseaseDB, RetrieverModel, Vec<CaseRecord>, SessionConfig, Backend)> {
        let db = self.catalog.load()?;
        let model = load_model(&self.model, &db)?;
        let cases = load_cases(&self.cases).with_context(|| format!("loading cases {}", self.cases.display()))?;
        let cfg = self.session.config()?;
        let backend = Backend::from_config(&cfg.backend)?;
        Ok((db, model, cases, cfg, backend))
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub inputs: BenchInputs,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS)]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub inputs: BenchInputs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.4, 0.5, 0.6, 0.7])]
    pub taus: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SEEDS)]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub inputs: BenchInputs,
    /// Thresholds; 0, 0.05, ..., 0.95 when omitted.
    #[arg(long, value_delimiter = ',')]
    pub taus: Vec<f64>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DatagenArgs {
    #[command(flatten)]
    pub inputs: BenchInputs,
    /// Verification threshold; `--tau` when omitted.
    #[arg(long)]
    pub verify_tau: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_RETHINK_LIMIT)]
    pub rethink_limit: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Trained retriever. Without it one is trained on synthesized cases at startup.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub catalog: CatalogArg,
    #[command(flatten)]
    pub model: ModelArg,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: String,
    /// Directory of console assets served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    #[command(flatten)]
    pub session: SessionArgs,
}

#[derive(Debug, Args)]
pub struct InteractiveArgs {
    #[command(flatten)]
    pub catalog: CatalogArg,
    #[command(flatten)]
    pub model: ModelArg,
    #[command(flatten)]
    pub session: SessionArgs,
}

fn load_model(path: &Path, db: &DiseaseDB) -> anyhow::Result<RetrieverModel> {
    RetrieverModel::load(path, db).with_context(|| format!("loading model {}", path.display()))
}

/// Loads `--model`, or trains a default retriever on freshly synthesized cases.
fn model_or_trained(arg: &ModelArg, db: &DiseaseDB) -> anyhow::Result<RetrieverModel> {
    if let Some(p) = &arg.model {
        return load_model(p, db);
    }
    log::info!("no --model given; training a retriever on synthesized cases");
    let cases = synthesize_cases(db, 20, 1)?;
    Ok(train_retriever(db, &cases, &TrainConfig::default())?.model)
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let db = a.catalog.load()?;
            let cases = synthesize_cases(&db, a.per_disease, a.seed)?;
            match (a.eval_fraction, &a.eval_out) {
                (Some(f), Some(eval_out)) => {
                    let (train, eval) = split_cases(&cases, f, a.seed)?;
                    save_cases(&a.out, &train)?;
                    save_cases(eval_out, &eval)?;
                    println!("wrote {} cases to {} and {} to {}", train.len(), a.out.display(), eval.len(), eval_out.display());
                }
                _ => {
                    save_cases(&a.out, &cases)?;
                    println!("wrote {} cases to {}", cases.len(), a.out.display());
                }
            }
        }
        Command::TrainRetriever(a) => {
            let db = a.catalog.load()?;
            let cases = load_cases(&a.cases)?;
            let cfg = TrainConfig {
                dim: a.dim,
                epochs: a.epochs,
                learning_rate: a.learning_rate,
                seed: a.seed,
            };
            let out = train_retriever(&db, &cases, &cfg)?;
            out.model.save(&a.out)?;
            println!(
                "trained on {} cases: loss {:.4} -> {:.4}; model written to {}",
                cases.len(),
                out.losses[0],
                out.final_loss(),
                a.out.display()
            );
        }
        Command::EvalRetriever(a) => {
            let db = a.catalog.load()?;
            let model = load_model(&a.model, &db)?;
            let cases = load_cases(&a.cases)?;
            let report = eval_retriever(&model, &db, &cases)?;
            println!("{report}");
            if let Some(p) = &a.report {
                write_json(p, &report)?;
            }
        }
        Command::Eval(a) => {
            let (db, model, cases, cfg, backend) = a.inputs.load()?;
            let report = run_benchmark(&cases, &cfg, &a.seeds, &db, &model, &backend)?;
            println!(
                "{} cases, tau {}: accuracy {:.4} (se {:.4}), inquiries {:.3} (se {:.4}), diagnosis rate {:.3}",
                cases.len(),
                cfg.tau,
                report.accuracy,
                report.stderr_a,
                report.mean_inquiries,
                report.stderr_n,
                report.diagnosis_rate
            );
            let entropy: Vec<String> = report.entropy_by_round.iter().map(|e| format!("{e:.3}")).collect();
            println!("entropy by round: {}", entropy.join(" "));
            if let Some(p) = &a.report {
                write_json(p, &report)?;
            }
        }
        Command::Sweep(a) => {
            let (db, model, cases, cfg, backend) = a.inputs.load()?;
            let rows = sweep_tau(&cases, &cfg, &a.taus, &a.seeds, &db, &model, &backend)?;
            println!("tau\taccuracy\tinquiries");
            for r in &rows {
                println!("{}\t{:.4}\t{:.3}", r.tau, r.report.accuracy, r.report.mean_inquiries);
            }
            if let Some(p) = &a.report {
                write_json(p, &rows)?;
            }
        }
        Command::Curve(a) => {
            let (db, model, cases, cfg, backend) = a.inputs.load()?;
            let taus = if a.taus.is_empty() {
                (0..20).map(|i| i as f64 / 20.0).collect()
            } else {
                a.taus.clone()
            };
            let csv = curve_csv(&threshold_curve(&cases, &cfg, &taus, &db, &model, &backend)?);
            match &a.out {
                Some(p) => std::fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{csv}"),
            }
        }
        Command::Datagen(a) => {
            let (db, model, cases, session, backend) = a.inputs.load()?;
            let cfg = DatagenConfig {
                session,
                verify_tau: a.verify_tau,
                rethink_limit: a.rethink_limit,
            };
            let outcomes = build_training_set(&cases, &cfg, &db, &model, &backend)?;
            let (retained, discarded): (Vec<CodOutcome>, Vec<CodOutcome>) =
                outcomes.into_iter().partition(|o| o.retained().is_some());
            for d in &discarded {
                if let CodOutcome::Discarded { case_id, reason } = d {
                    log::info!("discarded {case_id}: {reason}");
                }
            }
            let n = export_training_set(&retained, &a.out)?;
            println!("wrote {n} records to {} ({} discarded)", a.out.display(), discarded.len());
        }
        Command::Serve(a) => {
            let db = a.catalog.load()?;
            let model = model_or_trained(&a.model, &db)?;
            let config = ServiceConfig {
                defaults: a.session.config()?,
                static_dir: a.static_dir.clone(),
                ..ServiceConfig::default()
            };
            let state = AppState::new(db, model, config)?;
            tokio::runtime::Runtime::new()?.block_on(server::serve(state, &a.listen))?;
        }
        Command::Interactive(a) => {
            let db = a.catalog.load()?;
            let model = model_or_trained(&a.model, &db)?;
            let cfg = a.session.config()?;
            let backend = Backend::from_config(&cfg.backend)?;
            let engine = Engine::new(&db, &model, &backend, &cfg)?;
            let stdin = std::io::stdin();
            let mut out = std::io::stdout();
            if crate::repl::run(&engine, &mut stdin.lock(), &mut out)?.is_none() {
                println!("Session ended without a diagnosis.");
            }
        }
    }
    Ok(())
}

/// Rejects an argument combination clap cannot express.
pub fn check(cli: &Cli) -> anyhow::Result<()> {
    if let Command::Synth(a) = &cli.command {
        if let Some(f) = a.eval_fraction {
            if !(f > 0.0 && f < 1.0) {
                bail!("--eval-fraction must be in (0, 1), got {f}");
            }
        }
    }
    Ok(())
}
