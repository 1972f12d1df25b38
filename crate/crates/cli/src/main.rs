//! `ucq` command-line front end: instance generation, single solves and
//! side-by-side comparisons.
//!
//! Exit codes: 0 converged (or success), 2 usage error, 3 iteration limit
//! reached, 4 solver or I/O failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ucq_core::admm::{
    commitment_to_csv, comparison_table, dispatch_to_csv, initial_state, run_admm, trace_to_csv, AdmmConfig,
    AdmmStatus, Backend, ComparisonRow, ConvergenceReport, Mode,
};
use ucq_core::block1::assemble_block1_qp;
use ucq_core::model::{generate_synthetic, load_instance, UcInstance};
use ucq_core::qubo::Qubo;
use ucq_core::solve::{brute_force_solve, dvqe_solve, DvqeConfig};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 2;
const EXIT_MAX_ITER: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "ucq", version, about = "Unit commitment by consensus ADMM with QUBO binary updates")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic instance file.
    Gen(GenArgs),
    /// Solve one instance and write trace, dispatch and manifest.
    Solve(SolveArgs),
    /// Solve one instance under several configurations and tabulate them.
    Compare(CompareArgs),
    /// Solve a QUBO given in the plain-text listing format.
    Qubo(QuboArgs),
}

#[derive(Args, Clone)]
struct GenSpecArgs {
    #[arg(long, default_value_t = 5)]
    units: usize,
    #[arg(long, default_value_t = 6)]
    horizon: usize,
    #[arg(long, default_value_t = 1)]
    scenarios: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    spec: GenSpecArgs,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value = "batched")]
    mode: Mode,
    #[arg(long, default_value = "brute")]
    backend: Backend,
    /// Batch count K.
    #[arg(long = "batches", default_value_t = 3)]
    batches: usize,
    #[arg(long)]
    unit_coherent: bool,
    #[arg(long, default_value_t = 9e5)]
    rho: f64,
    #[arg(long, default_value_t = 2e6)]
    beta: f64,
    /// Primal and dual residual threshold.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    #[arg(long, default_value_t = 4000)]
    max_iter: usize,
    /// Ansatz depth.
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// ADAM learning rate.
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    dvqe_iters: usize,
    #[arg(long, default_value_t = 1024)]
    shots: usize,
}

impl SolverArgs {
    fn to_config(&self, seed: u64) -> AdmmConfig {
        AdmmConfig {
            rho: [self.rho; 3],
            beta: [self.beta; 3],
            eps_pri: self.eps,
            eps_dual: self.eps,
            max_iter: self.max_iter,
            mode: self.mode,
            batches: self.batches,
            unit_coherent: self.unit_coherent,
            backend: self.backend,
            dvqe: DvqeConfig {
                depth: self.depth,
                learning_rate: self.lr,
                max_iters: self.dvqe_iters,
                shots: self.shots,
                ..DvqeConfig::default()
            },
            seed,
            threads: threads_from_env(),
            ..AdmmConfig::default()
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Instance file; when absent an instance is generated from the generator flags.
    #[arg(long, conflicts_with = "manifest")]
    instance: Option<PathBuf>,
    #[command(flatten)]
    spec: GenSpecArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Re-run exactly the configuration recorded in a manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "ucq-out")]
    out: PathBuf,
    /// Fill the timing columns of the trace (makes traces non-reproducible).
    #[arg(long)]
    wall_times: bool,
    /// Also write the first Block-1 QP as a text listing.
    #[arg(long)]
    dump_qp: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    spec: GenSpecArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Comma-separated modes to compare (overrides --mode).
    #[arg(long, value_delimiter = ',')]
    modes: Vec<Mode>,
    /// Comma-separated backends to compare (overrides --backend).
    #[arg(long, value_delimiter = ',')]
    backends: Vec<Backend>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    wall_times: bool,
}

#[derive(Args)]
struct QuboArgs {
    /// QUBO listing file.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "brute")]
    backend: Backend,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    dvqe_iters: usize,
    #[arg(long, default_value_t = 1024)]
    shots: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Where the instance of a run came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum InstanceSource {
    File { path: PathBuf },
    Generator { units: usize, horizon: usize, scenarios: usize, seed: u64 },
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunManifest {
    tool_version: String,
    run_id: String,
    instance: InstanceSource,
    config: AdmmConfig,
    out_dir: PathBuf,
    seed: u64,
    wall_times: bool,
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn threads_from_env() -> Option<usize> {
    std::env::var("DUC_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// FNV-1a, used only to name runs reproducibly.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn resolve_instance(source: &InstanceSource) -> Result<UcInstance> {
    match source {
        InstanceSource::File { path } => {
            load_instance(path).with_context(|| format!("loading instance {}", path.display()))
        }
        InstanceSource::Generator {
            units,
            horizon,
            scenarios,
            seed,
        } => generate_synthetic(*units, *horizon, *scenarios, *seed).map_err(|e| usage(e.to_string())),
    }
}

fn source_from(instance: &Option<PathBuf>, spec: &GenSpecArgs) -> InstanceSource {
    match instance {
        Some(p) => InstanceSource::File { path: p.clone() },
        None => InstanceSource::Generator {
            units: spec.units,
            horizon: spec.horizon,
            scenarios: spec.scenarios,
            seed: spec.seed,
        },
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_gen(args: &GenArgs) -> Result<u8> {
    let s = &args.spec;
    let inst = generate_synthetic(s.units, s.horizon, s.scenarios, s.seed).map_err(|e| usage(e.to_string()))?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let path = args.out.join(format!(
        "uc_n{}_t{}_s{}_seed{}.json",
        s.units, s.horizon, s.scenarios, s.seed
    ));
    inst.save(&path)?;
    println!("{}", path.display());
    Ok(EXIT_OK)
}

fn status_code(r: &ConvergenceReport) -> u8 {
    match r.status {
        AdmmStatus::Converged => EXIT_OK,
        AdmmStatus::MaxIter => EXIT_MAX_ITER,
    }
}

fn cmd_solve(args: &SolveArgs) -> Result<u8> {
    let manifest = match &args.manifest {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut m: RunManifest =
                serde_json::from_str(&text).map_err(|e| usage(format!("bad manifest {}: {e}", path.display())))?;
            m.out_dir = args.out.clone();
            m.config.threads = threads_from_env();
            m
        }
        None => {
            let seed = args.spec.seed;
            RunManifest {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                run_id: String::new(),
                instance: source_from(&args.instance, &args.spec),
                config: args.solver.to_config(seed),
                out_dir: args.out.clone(),
                seed,
                wall_times: args.wall_times,
            }
        }
    };
    manifest.config.check().map_err(|e| usage(e.to_string()))?;
    let inst = resolve_instance(&manifest.instance)?;
    inst.validate().map_err(|e| usage(e.to_string()))?;

    let mut manifest = manifest;
    let mut id_config = manifest.config.clone();
    id_config.threads = None;
    let id_src = format!(
        "{}|{}|{}",
        inst.to_json(),
        serde_json::to_string(&id_config)?,
        manifest.seed
    );
    manifest.run_id = format!("{:016x}", fnv1a(id_src.as_bytes()));

    let out = &manifest.out_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    if args.dump_qp {
        let st = initial_state(&inst, &manifest.config);
        let qp = assemble_block1_qp(&inst, &st)?;
        let path = out.join("block1_qp.txt");
        let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        qp.write_debug_dump(std::io::BufWriter::new(f))?;
    }

    let report = run_admm(&inst, &manifest.config).context("ADMM run failed")?;
    write(&out.join("trace.csv"), &trace_to_csv(&report.trace, manifest.wall_times))?;
    write(&out.join("dispatch.csv"), &dispatch_to_csv(&inst, &report.schedule))?;
    write(&out.join("commitment.csv"), &commitment_to_csv(&report.schedule))?;
    write(&out.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    println!(
        "run {}: {:?} after {} iterations, cost {:.6}, max primal residual {:.3e}, dual residual {:.3e}",
        manifest.run_id,
        report.status,
        report.iterations,
        report.final_cost,
        report.residuals.max_pri(),
        report.residuals.dual
    );
    println!("outputs in {}", out.display());
    Ok(status_code(&report))
}

fn cmd_compare(args: &CompareArgs) -> Result<u8> {
    let modes = if args.modes.is_empty() {
        vec![args.solver.mode]
    } else {
        args.modes.clone()
    };
    let backends = if args.backends.is_empty() {
        vec![args.solver.backend]
    } else {
        args.backends.clone()
    };
    if modes.len() * backends.len() < 2 {
        return Err(usage("compare needs at least two configurations (use --modes and/or --backends)"));
    }
    let inst = resolve_instance(&source_from(&args.instance, &args.spec))?;
    inst.validate().map_err(|e| usage(e.to_string()))?;
    let mut rows = Vec::new();
    let mut worst = EXIT_OK;
    for &mode in &modes {
        for &backend in &backends {
            let cfg = AdmmConfig {
                mode,
                backend,
                ..args.solver.to_config(args.spec.seed)
            };
            cfg.check().map_err(|e| usage(e.to_string()))?;
            let label = format!("{mode}/{backend}");
            let r = run_admm(&inst, &cfg).with_context(|| format!("run {label}"))?;
            worst = worst.max(status_code(&r));
            if let Some(dir) = &args.out {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                write(
                    &dir.join(format!("trace_{mode}_{backend}.csv")),
                    &trace_to_csv(&r.trace, args.wall_times),
                )?;
            }
            rows.push(ComparisonRow::from_report(label, &r));
        }
    }
    let table = comparison_table(&rows, args.wall_times);
    print!("{table}");
    if let Some(dir) = &args.out {
        write(&dir.join("comparison.txt"), &table)?;
    }
    Ok(worst)
}

fn cmd_qubo(args: &QuboArgs) -> Result<u8> {
    let text = fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let q = Qubo::from_text(&text).map_err(|e| usage(e.to_string()))?;
    let rep = match args.backend {
        Backend::Brute => brute_force_solve(&q)?,
        Backend::Dvqe => dvqe_solve(
            &q,
            None,
            &DvqeConfig {
                depth: args.depth,
                learning_rate: args.lr,
                max_iters: args.dvqe_iters,
                shots: args.shots,
                seed: args.seed,
                ..DvqeConfig::default()
            },
        )?,
    };
    print!("{}", rep.to_record());
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Qubo(a) => cmd_qubo(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_INTERNAL)
            }
        }
    }
}
