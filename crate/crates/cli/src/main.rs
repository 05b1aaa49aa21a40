//! `qlm`: train, stage, plot and evaluate entanglement-witness models.

mod artifacts;
mod config;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use qlm_core::circuit::run_circuit;
use qlm_core::dynamics::{propagate_final, step_propagators};
use qlm_core::model::Model;
use qlm_core::optim::{stalled, train, EpochRecord, OptimizerKind};
use qlm_core::qstate::QuantumState;
use qlm_core::training::{make_training_set, run_stage_plan_from, StagePlan, StageSummary};

use artifacts::RunSummary;
use config::{config_err, BackendSpec, ConfigError, Overrides, RunConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_STALLED: u8 = 4;

#[derive(Parser)]
#[command(name = "qlm", version, about = "Train a pairwise entanglement witness on simulated qubits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write epochs.csv, checkpoint.json and summary.json.
    Train(RunArgs),
    /// Train 2, 3, ... qubits in turn, each stage starting from the last.
    Stage(RunArgs),
    /// Write RMS, damping and control-field curves for a run directory.
    Plot {
        /// Directory written by `train` or `stage`.
        run_dir: PathBuf,
    },
    /// Print the witness value of a saved state under a checkpoint.
    Eval(EvalArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from the checkpoints already in the output directory.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    /// exact, shots:N or external.
    #[arg(long)]
    backend: Option<BackendSpec>,
    #[arg(long)]
    shots: Option<u64>,
    /// Qubit count (train) or largest stage (stage).
    #[arg(long)]
    qubits: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    checkpoint: PathBuf,
    /// State document: {"n_qubits", "kind": "pure"|"mixed", "re", "im"}.
    state: PathBuf,
    #[arg(long, default_value_t = 0)]
    alpha: usize,
    #[arg(long, default_value_t = 1)]
    beta: usize,
    /// Only `n_steps` is read, for Hamiltonian checkpoints.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    backend: Option<BackendSpec>,
    #[arg(long)]
    shots: Option<u64>,
}

impl RunArgs {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        cfg.apply(&Overrides {
            seed: self.seed,
            out: self.out.clone(),
            optimizer: self.optimizer,
            backend: self.backend,
            shots: self.shots,
            qubits: self.qubits,
        });
        cfg.validate()?;
        cfg.out_dir()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Stage(args) => cmd_stage(args),
        Command::Plot { run_dir } => cmd_plot(run_dir),
        Command::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}

fn log_epoch(prefix: &str, r: &EpochRecord) {
    match r.lambda {
        Some(l) => eprintln!("{prefix}epoch {:>4}  rms {:.6e}  lambda {:.3e}  rejections {}", r.epoch, r.rms, l, r.n_rejections),
        None => eprintln!("{prefix}epoch {:>4}  rms {:.6e}", r.epoch, r.rms),
    }
}

fn cmd_train(args: &RunArgs) -> anyhow::Result<u8> {
    let cfg = args.resolve()?;
    let out = cfg.out_dir()?;
    let n = cfg.n_qubits;
    let ck_path = out.join(artifacts::CHECKPOINT_JSON);
    let model = if args.resume && ck_path.exists() {
        let ck = artifacts::read_checkpoint(&ck_path)?;
        if ck.n_qubits() != n {
            return Err(config_err(format!("{} holds a {}-qubit model, config asks for {n}", ck_path.display(), ck.n_qubits())));
        }
        ck.into_model(cfg.evolution())
    } else {
        cfg.initial_model(n)?
    };
    let backend = cfg.backend()?;
    let set = make_training_set(n)?;
    artifacts::write_json(&out.join(artifacts::CONFIG_JSON), &cfg)?;
    eprintln!("training {n} qubits, {} pairs, seed {}, backend {}", set.len(), cfg.seed(), cfg.backend);

    let started = Instant::now();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut io_error = None;
    let report = train(&model, &set, cfg.optimizer, &backend, &cfg.train_options(), |m, r| {
        log_epoch("", r);
        log.push(r.clone());
        // keep the directory resumable while the run is in flight
        let saved = artifacts::write_epochs(&out, &log)
            .and_then(|_| artifacts::write_json(&out.join(artifacts::CHECKPOINT_JSON), &m.checkpoint()));
        if let Err(e) = saved {
            io_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }
    let summary = RunSummary {
        seed: cfg.seed(),
        start_rms: report.start_rms,
        finish_rms: report.finish_rms,
        epochs_run: report.records.len(),
        wall_ms: started.elapsed().as_millis() as u64,
        stalled: report.stalled(),
    };
    artifacts::write_json(&out.join(artifacts::SUMMARY_JSON), &summary)?;
    println!("start_rms {:.6e} finish_rms {:.6e} epochs {}", summary.start_rms, summary.finish_rms, summary.epochs_run);
    Ok(if summary.stalled {
        eprintln!("stalled: no accepted step in the last 20% of epochs");
        EXIT_STALLED
    } else {
        0
    })
}

fn cmd_stage(args: &RunArgs) -> anyhow::Result<u8> {
    let cfg = args.resolve()?;
    let out = cfg.out_dir()?;
    let (qubits, epochs) = cfg.stages()?;
    let plan = StagePlan {
        qubits: qubits.clone(),
        epochs,
        optimizer: cfg.optimizer,
        backend: cfg.backend()?,
        options: cfg.train_options(),
    };
    plan.validate()?;

    let mut rows: Vec<StageSummary> = Vec::new();
    let mut initial = None;
    if args.resume && out.join(artifacts::STAGE_SUMMARY_CSV).exists() {
        rows = artifacts::read_stage_summary(&out)?;
        if rows.len() > qubits.len() || rows.iter().zip(&qubits).any(|(r, &n)| r.n_qubits != n) {
            return Err(config_err(format!("{} does not match the configured stages", out.display())));
        }
        if let Some(last) = rows.last() {
            let ck = artifacts::read_checkpoint(&artifacts::stage_dir(&out, last.n_qubits).join(artifacts::CHECKPOINT_JSON))?;
            initial = Some(ck.into_model(cfg.evolution()));
        }
    }
    artifacts::write_json(&out.join(artifacts::CONFIG_JSON), &cfg)?;
    let first = rows.len();
    if first == qubits.len() {
        eprintln!("all {first} stages already complete");
        print_stage_table(&rows);
        return Ok(0);
    }
    let initial = match initial {
        Some(m) => m,
        None => cfg.initial_model(qubits[0])?,
    };
    eprintln!("staging {:?} from stage {first}, seed {}, backend {}", qubits, cfg.seed(), cfg.backend);

    let mut clock = Instant::now();
    let mut last_stalled = false;
    run_stage_plan_from(&plan, first, initial, |stage| {
        let dir = artifacts::stage_dir(&out, stage.summary.n_qubits);
        let mut save = || -> anyhow::Result<()> {
            for r in &stage.records {
                log_epoch(&format!("[N={}] ", stage.summary.n_qubits), r);
            }
            artifacts::write_epochs(&dir, &stage.records)?;
            artifacts::write_json(&dir.join(artifacts::CHECKPOINT_JSON), &stage.checkpoint)?;
            last_stalled = stalled(&stage.records);
            artifacts::write_json(
                &dir.join(artifacts::SUMMARY_JSON),
                &RunSummary {
                    seed: cfg.seed(),
                    start_rms: stage.summary.start_rms,
                    finish_rms: stage.summary.finish_rms,
                    epochs_run: stage.records.len(),
                    wall_ms: clock.elapsed().as_millis() as u64,
                    stalled: last_stalled,
                },
            )?;
            rows.push(stage.summary.clone());
            // the summary goes last: a stage counts as done once it is listed
            artifacts::write_stage_summary(&out, &rows)
        };
        let res = save().map_err(|e| qlm_core::Error::Backend(format!("saving stage artifacts: {e:#}")));
        clock = Instant::now();
        res
    })?;
    print_stage_table(&rows);
    Ok(if last_stalled { EXIT_STALLED } else { 0 })
}

fn print_stage_table(rows: &[StageSummary]) {
    println!("n_qubits,n_pairs,epochs,start_rms,finish_rms");
    for r in rows {
        println!("{},{},{},{:.4},{:.4}", r.n_qubits, r.n_pairs, r.epochs, r.start_rms, r.finish_rms);
    }
}

fn cmd_plot(dir: &Path) -> anyhow::Result<u8> {
    for f in plot::plot_run(dir)? {
        println!("{}", dir.join(f).display());
    }
    Ok(0)
}

fn cmd_eval(args: &EvalArgs) -> anyhow::Result<u8> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    cfg.apply(&Overrides { seed: args.seed, backend: args.backend, shots: args.shots, ..Default::default() });
    if cfg.seed.is_none() && cfg.backend != BackendSpec::Exact {
        return Err(config_err("sampling backends need --seed"));
    }
    cfg.seed.get_or_insert(0);
    let ck = artifacts::read_checkpoint(&args.checkpoint)?;
    let text = std::fs::read_to_string(&args.state).with_context(|| format!("reading {}", args.state.display()))?;
    let state = QuantumState::from_json(&text).with_context(|| format!("parsing {}", args.state.display()))?;
    if state.n_qubits() != ck.n_qubits() {
        anyhow::bail!("state has {} qubits, checkpoint expects {}", state.n_qubits(), ck.n_qubits());
    }
    let backend = cfg.backend()?;
    let estimate = match ck.into_model(cfg.evolution()) {
        Model::Circuit(w) => run_circuit(&w, &state, args.alpha, args.beta, &backend)?,
        Model::Hamiltonian { params, evolution } => {
            let out = propagate_final(&state, &step_propagators(&params, &evolution)?);
            backend.measure(&out, args.alpha, args.beta)?
        }
    };
    println!("{}", serde_json::to_string(&estimate)?);
    Ok(0)
}
