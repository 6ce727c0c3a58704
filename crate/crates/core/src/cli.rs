//! Command-line front end. Each subcommand runs one experiment and writes its
//! outputs, the effective config and a manifest into the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{mode_key, Experiment, ModeKind, RunConfig};
use crate::error::{Result, SimError};
use crate::exec::{init_threads, Exec};
use crate::experiments::{
    convergence_study, estimate_error_probability, expected_error_oracle, margin_sweep,
    mc_distance_study, noise_comparison_report, oracle_covariance, oracle_standard_error,
};
use crate::rng::{SeedStreams, Stream};
use crate::trainer::{train, ClassifierMode, Hyperplane};
use crate::transduction::{generate_dataset, write_dataset_csv, TaskSpec};

#[derive(Debug, Parser)]
#[command(
    name = "slaen-sim",
    version,
    about = "Entangled sensor network SVM simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub args: RunArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Train every mode and record error estimates at each checkpoint.
    Train,
    /// Estimate error probabilities of fixed or freshly trained hyperplanes.
    Evaluate,
    /// Error estimates over the configured margins with hyperplanes fixed.
    SweepMargin,
    /// Distance to the true hyperplane over many random initializations.
    McDistance,
    /// Matched-weight noise of entangled against separable probes.
    NoiseReport,
    /// Expected error of the true hyperplane under each mode's noise.
    Oracle,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::Train => Experiment::Train,
            Command::Evaluate => Experiment::Evaluate,
            Command::SweepMargin => Experiment::SweepMargin,
            Command::McDistance => Experiment::McDistance,
            Command::NoiseReport => Experiment::NoiseReport,
            Command::Oracle => Experiment::Oracle,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "SLAEN_SIM_THREADS")]
    pub threads: Option<usize>,
}

/// Loads the config and applies command-line overrides. The returned config
/// has `output_dir` cleared and `experiment` set, so it only carries what
/// determines the results.
pub fn effective_config(experiment: Experiment, args: &RunArgs) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(e) = cfg.experiment {
        if e != experiment {
            return Err(SimError::config(
                "experiment",
                format!(
                    "config is for `{}`, not `{}`",
                    e.as_str(),
                    experiment.as_str()
                ),
            ));
        }
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    cfg.output_dir = None;
    cfg.experiment = Some(experiment);
    Ok((cfg, out))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.files.push((name.to_string(), sha256_hex(bytes)));
        println!("wrote {}", path.display());
        Ok(())
    }

    fn write_json(&mut self, name: &str, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("json serializes");
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

/// Rows of the shared `experiment,mode,param,step,mean,std` table.
struct Table {
    experiment: &'static str,
    text: String,
}

impl Table {
    fn new(experiment: Experiment) -> Self {
        Self {
            experiment: experiment.as_str(),
            text: String::from("experiment,mode,param,step,mean,std\n"),
        }
    }

    fn row(&mut self, mode: &str, param: f64, step: Option<usize>, mean: f64, std: f64) {
        let step = step.map(|s| s.to_string()).unwrap_or_default();
        writeln!(
            self.text,
            "{},{mode},{param},{step},{mean},{std}",
            self.experiment
        )
        .unwrap();
    }
}

fn modes(cfg: &RunConfig, dim: usize) -> Result<Vec<(ModeKind, ClassifierMode)>> {
    cfg.modes
        .iter()
        .map(|&k| Ok((k, cfg.classifier(k, dim)?)))
        .collect()
}

fn hyperplane_json(h: &Hyperplane) -> Value {
    json!({ "w": h.w, "b": h.b })
}

/// Mode, its hyperplane and the number of steps it was trained for (`None`
/// when fixed by the config).
type Resolved = (ModeKind, ClassifierMode, Hyperplane, Option<usize>);

/// Fixed hyperplanes from the config, or the result of training from the
/// configured start.
fn resolve_hyperplanes(
    cfg: &RunConfig,
    task: &TaskSpec,
    streams: &SeedStreams,
) -> Result<Vec<Resolved>> {
    modes(cfg, task.dim())?
        .into_iter()
        .map(|(k, mode)| match cfg.hyperplanes.get(&k) {
            Some(h) => Ok((k, mode, h.clone(), None)),
            None => {
                let traj = train(&mode, task, &cfg.initial_hyperplane(k), &cfg.spsa, streams)?;
                Ok((
                    k,
                    mode,
                    traj.final_hyperplane().clone(),
                    Some(cfg.spsa.n_steps),
                ))
            }
        })
        .collect()
}

fn run_train(cfg: &RunConfig, out: &mut Outputs, table: &mut Table) -> Result<Value> {
    let task = cfg.task()?;
    let m = task.dim();
    let streams = SeedStreams::new(cfg.seed);
    let exec = Exec::default();
    let data = generate_dataset(&task, cfg.spsa.n_steps, &mut streams.rng(Stream::Data))?;
    let mut buf = Vec::new();
    write_dataset_csv(&data, m, &mut buf)?;
    out.write("dataset.csv", &buf)?;
    let mut summary = Vec::new();
    for (k, mode) in modes(cfg, m)? {
        let init = cfg.initial_hyperplane(k);
        let traj = convergence_study(
            &mode,
            &task,
            &init,
            &cfg.spsa,
            cfg.stride(),
            cfg.evaluation.into(),
            &streams,
            exec,
        )?;
        let mut buf = Vec::new();
        traj.write_csv(&mut buf)?;
        out.write(&format!("trajectory_{}.csv", mode_key(k)), &buf)?;
        for (step, est) in &traj.checkpoints {
            table.row(mode_key(k), task.margin(), Some(*step), est.mean, est.std);
        }
        let cov = oracle_covariance(&mode, &task)?;
        let floor = expected_error_oracle(&task, &cov, cfg.oracle.n_mc, &streams, exec)?;
        let last = traj.final_record();
        summary.push(json!({
            "mode": mode_key(k),
            "initial_hyperplane": hyperplane_json(&init),
            "final_hyperplane": hyperplane_json(&last.hyperplane),
            "final_v": last.vqc.v(),
            "final_phi": last.vqc.phi(),
            "final_error": traj.checkpoints.last().map(|(_, e)| e),
            "oracle_error": floor,
            "oracle_standard_error": oracle_standard_error(floor, cfg.oracle.n_mc),
        }));
    }
    Ok(json!({ "margin": task.margin(), "steps": cfg.spsa.n_steps, "modes": summary }))
}

fn run_evaluate(cfg: &RunConfig, table: &mut Table) -> Result<Value> {
    let task = cfg.task()?;
    let streams = SeedStreams::new(cfg.seed);
    let ev = cfg.evaluation;
    let mut summary = Vec::new();
    for (k, mode, h, steps) in resolve_hyperplanes(cfg, &task, &streams)? {
        let est = estimate_error_probability(
            &h,
            &mode,
            &task,
            ev.n_test,
            ev.reps,
            &streams,
            Exec::default(),
        )?;
        table.row(mode_key(k), task.margin(), steps, est.mean, est.std);
        summary.push(json!({
            "mode": mode_key(k),
            "hyperplane": hyperplane_json(&h),
            "trained_steps": steps,
            "error": est,
        }));
    }
    Ok(json!({ "margin": task.margin(), "modes": summary }))
}

fn run_sweep(cfg: &RunConfig, table: &mut Table) -> Result<Value> {
    let task = cfg.task()?;
    let streams = SeedStreams::new(cfg.seed);
    let resolved = resolve_hyperplanes(cfg, &task, &streams)?;
    let trained: Vec<(ClassifierMode, Hyperplane)> = resolved
        .iter()
        .map(|(_, m, h, _)| (*m, h.clone()))
        .collect();
    let rows = margin_sweep(
        &trained,
        &task,
        &cfg.margins,
        cfg.evaluation.into(),
        &streams,
        Exec::default(),
    )?;
    for row in &rows {
        table.row(
            row.mode,
            row.margin,
            None,
            row.estimate.mean,
            row.estimate.std,
        );
    }
    let hyperplanes: Vec<Value> = resolved
        .iter()
        .map(|(k, _, h, steps)| json!({ "mode": mode_key(*k), "hyperplane": hyperplane_json(h), "trained_steps": steps }))
        .collect();
    Ok(json!({ "trained_margin": task.margin(), "hyperplanes": hyperplanes, "rows": rows }))
}

fn run_mc(cfg: &RunConfig, table: &mut Table) -> Result<Value> {
    let task = cfg.task()?;
    let streams = SeedStreams::new(cfg.seed);
    let mut summary = Vec::new();
    for (k, mode) in modes(cfg, task.dim())? {
        let curve = mc_distance_study(
            &mode,
            &task,
            cfg.mc.n_trials,
            &cfg.spsa,
            &cfg.mc.init_sampler,
            &streams,
            Exec::default(),
        )?;
        for (step, (m, s)) in curve.mean.iter().zip(&curve.std).enumerate() {
            table.row(mode_key(k), curve.trials as f64, Some(step), *m, *s);
        }
        summary.push(json!({
            "mode": mode_key(k),
            "trials": curve.trials,
            "initial_mean": curve.mean[0],
            "initial_std": curve.std[0],
            "final_mean": curve.final_mean(),
            "final_std": curve.final_std(),
        }));
    }
    Ok(json!({ "steps": cfg.spsa.n_steps, "init_sampler": cfg.mc.init_sampler, "modes": summary }))
}

fn run_oracle(cfg: &RunConfig, table: &mut Table) -> Result<Value> {
    let task = cfg.task()?;
    let streams = SeedStreams::new(cfg.seed);
    let n = cfg.oracle.n_mc;
    let mut summary = Vec::new();
    for (k, mode) in modes(cfg, task.dim())? {
        let cov = oracle_covariance(&mode, &task)?;
        let p = expected_error_oracle(&task, &cov, n, &streams, Exec::default())?;
        let se = oracle_standard_error(p, n);
        table.row(mode_key(k), task.margin(), None, p, se);
        summary.push(json!({ "mode": mode_key(k), "error": p, "standard_error": se }));
    }
    Ok(json!({ "margin": task.margin(), "samples": n, "modes": summary }))
}

/// Runs one experiment and returns the output directory.
pub fn run(command: Command, args: &RunArgs) -> Result<PathBuf> {
    let experiment = Experiment::from(command);
    let (cfg, dir) = effective_config(experiment, args)?;
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(SimError::config("--threads", "must be at least 1"));
        }
        init_threads(n);
    }
    let mut out = Outputs::new(&dir)?;
    let mut table = Table::new(experiment);
    let summary = match command {
        Command::Train => run_train(&cfg, &mut out, &mut table)?,
        Command::Evaluate => run_evaluate(&cfg, &mut table)?,
        Command::SweepMargin => run_sweep(&cfg, &mut table)?,
        Command::McDistance => run_mc(&cfg, &mut table)?,
        Command::Oracle => run_oracle(&cfg, &mut table)?,
        Command::NoiseReport => {
            let nr = cfg.noise_report;
            serde_json::to_value(noise_comparison_report(nr.n_s_total, nr.eta, nr.sensors)?)
                .expect("report serializes")
        }
    };
    if command != Command::NoiseReport {
        out.write("results.csv", table.text.as_bytes())?;
    }
    out.write_json(
        "summary.json",
        &json!({ "experiment": experiment.as_str(), "seed": cfg.seed, "result": summary }),
    )?;
    let config_text = format!("{}\n", cfg.to_json());
    out.write("config.json", config_text.as_bytes())?;
    let files: Vec<Value> = out
        .files
        .iter()
        .map(|(name, hash)| json!({ "file": name, "sha256": hash }))
        .collect();
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": experiment.as_str(),
        "seed": cfg.seed,
        "config_sha256": sha256_hex(config_text.as_bytes()),
        "reproduce": format!("slaen-sim {} --config config.json", experiment.as_str()),
        "outputs": files,
    });
    out.write_json("manifest.json", &manifest)?;
    Ok(dir)
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command, &cli.args) {
        Ok(dir) => {
            println!("done: {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
