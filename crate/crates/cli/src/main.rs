//! Command-line front end: solve single instances, run sweeps, predict
//! performance with state evolution, classify fixed points and generate
//! problem files.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use uamp_sbl::analysis::fixed_point::classify_fixed_points;
use uamp_sbl::analysis::se::{build_mse_table, default_grid, se_predict, MseTable};
use uamp_sbl::bench::{evaluate, run_experiment, summarize, to_csv, ExperimentConfig, Solver};
use uamp_sbl::model::unitary_transform;
use uamp_sbl::{Error, MatrixKind, MatrixSpec, ProblemInstance, Result, SignalSpec, StopRule};

#[derive(Parser)]
#[command(name = "uamp-sbl", version, about = "Sparse Bayesian learning with unitary AMP")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover one instance and print NMSE and iteration counts.
    Solve(SolveArgs),
    /// Run a sweep described by a TOML config and write CSV.
    Sweep(SweepArgs),
    /// Predict UAMP-SBL performance by state evolution.
    Se(SeArgs),
    /// Classify fixed points of the scalar precision update.
    Fixedpoint(FixedPointArgs),
    /// Generate a problem instance and write it as JSON.
    Gen(GenArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    IidGaussian,
    IllConditioned,
    Correlated,
    NonzeroMean,
    LowRank,
}

#[derive(Args)]
struct InstanceArgs {
    #[arg(long, value_enum, default_value = "iid-gaussian")]
    kind: Kind,
    /// Parameter of the matrix kind: kappa, c, mu or rank ratio.
    #[arg(long)]
    param: Option<f64>,
    #[arg(long, default_value_t = 160)]
    rows: usize,
    #[arg(long, default_value_t = 200)]
    cols: usize,
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    #[arg(long, default_value_t = 1)]
    vectors: usize,
    /// Temporal correlation of the columns.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 60.0)]
    snr_db: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl InstanceArgs {
    fn matrix_spec(&self) -> Result<MatrixSpec> {
        let need = |name: &str| {
            self.param.ok_or_else(|| Error::InvalidArgument(format!("--param ({name}) is required for this kind")))
        };
        let kind = match self.kind {
            Kind::IidGaussian => MatrixKind::IidGaussian,
            Kind::IllConditioned => MatrixKind::IllConditioned { kappa: need("kappa")? },
            Kind::Correlated => MatrixKind::Correlated { c: need("c")? },
            Kind::NonzeroMean => MatrixKind::NonzeroMean { mu: need("mu")? },
            Kind::LowRank => MatrixKind::LowRank { rank_ratio: need("rank ratio")? },
        };
        Ok(MatrixSpec::new(self.rows, self.cols, kind))
    }

    fn generate(&self) -> Result<ProblemInstance> {
        let signal = SignalSpec {
            len: self.cols,
            sparsity_rate: self.rho,
            num_vectors: self.vectors,
            temporal_corr: self.alpha,
        };
        ProblemInstance::generate(&self.matrix_spec()?, &signal, self.snr_db, self.seed)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Read the instance from a JSON file written by `gen` instead of generating one.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Solvers to run, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "uamp_sbl")]
    solver: Vec<String>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// CSV destination; overrides `output` in the config. `-` writes to stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads; overrides `threads` in the config.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SeArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Load the MSE table instead of building it.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Save the table that was built.
    #[arg(long)]
    save_table: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Initial v_x; defaults to the sparsity rate.
    #[arg(long)]
    v_init: Option<f64>,
    #[arg(long, default_value_t = 200)]
    iterations: usize,
    /// Also run UAMP-SBL on the instance and print its NMSE.
    #[arg(long)]
    simulate: bool,
}

#[derive(Args)]
struct FixedPointArgs {
    #[arg(long, value_delimiter = ',', default_value = "1")]
    beta: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    ysq: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    eps: Vec<f64>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    output: PathBuf,
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

fn solve(args: &SolveArgs) -> Result<()> {
    let inst = match &args.input {
        Some(path) => ProblemInstance::from_json(&fs::read_to_string(path)?)?,
        None => args.instance.generate()?,
    };
    let solvers = args.solver.iter().map(|s| s.parse()).collect::<Result<Vec<Solver>>>()?;
    let stop = StopRule { tol: args.tol, max_iter: args.max_iter };
    stop.validate()?;
    let mut out = io::stdout().lock();
    writeln!(out, "solver\tnmse_db\titerations\tconverged\tsupport_recovery\truntime_s")?;
    for e in evaluate(&solvers, &inst, stop, args.instance.alpha)? {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.4}",
            e.solver.as_str(),
            fmt_opt(e.nmse_db.map(|v| format!("{v:.3}"))),
            fmt_opt(e.iterations),
            fmt_opt(e.converged),
            fmt_opt(e.support_recovery.map(u8::from)),
            e.runtime_s
        )?;
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(t) = args.threads {
        config.threads = t;
    }
    let target = args.output.clone().or_else(|| config.output.clone());
    let rows = run_experiment(&config)?;
    let csv = to_csv(&rows);
    match target {
        Some(path) if path.as_os_str() != "-" => {
            fs::write(&path, csv).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
            let mut out = io::stdout().lock();
            writeln!(out, "{} rows written to {}", rows.len(), path.display())?;
            writeln!(out, "{}\tsolver\tmedian_nmse_db\tsupport_rate\tmean_iterations", config.sweep_name())?;
            for s in summarize(&rows) {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}",
                    s.sweep_value,
                    s.solver.as_str(),
                    fmt_opt(s.median_nmse_db.map(|v| format!("{v:.3}"))),
                    fmt_opt(s.support_rate.map(|v| format!("{v:.2}"))),
                    fmt_opt(s.mean_iterations.map(|v| format!("{v:.1}")))
                )?;
            }
        }
        _ => io::stdout().lock().write_all(csv.as_bytes())?,
    }
    Ok(())
}

fn se(args: &SeArgs) -> Result<()> {
    let inst = args.instance.generate()?;
    let rho = args.instance.rho;
    let table = match &args.table {
        Some(path) => MseTable::load(path)?,
        None => build_mse_table(rho, &default_grid(), args.samples, args.instance.seed)?,
    };
    if let Some(path) = &args.save_table {
        table.save(path)?;
    }
    let model = unitary_transform(&inst.a, &inst.y)?;
    let traj =
        se_predict(&model.lambda, model.cols(), inst.beta_true, &table, args.v_init.unwrap_or(rho), args.iterations)?;
    let mut out = io::stdout().lock();
    writeln!(out, "iteration\ttau\tv_x\tnmse_db")?;
    for (i, p) in traj.points.iter().enumerate() {
        writeln!(out, "{}\t{:e}\t{:e}\t{:.3}", i + 1, p.tau, p.v_x, 10.0 * (p.v_x / rho).log10())?;
    }
    writeln!(out, "predicted_nmse_db\t{:.3}", traj.nmse_db(rho))?;
    writeln!(out, "converged\t{}", traj.converged)?;
    if traj.extrapolated {
        eprintln!("warning: the prediction left the tabulated noise range; values were extrapolated");
    }
    if args.simulate {
        let e = evaluate(&[Solver::UampSbl], &inst, StopRule::default(), 0.0)?;
        writeln!(out, "simulated_nmse_db\t{}", fmt_opt(e[0].nmse_db.map(|v| format!("{v:.3}"))))?;
    }
    Ok(())
}

fn fixedpoint(args: &FixedPointArgs) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "beta\ty_sq\teps\tu\tthreshold\tregime\tfp_value\tunstable_root")?;
    for &beta in &args.beta {
        for &eps in &args.eps {
            for &ysq in &args.ysq {
                let r = classify_fixed_points(beta, ysq, eps)?;
                writeln!(
                    out,
                    "{beta}\t{ysq}\t{eps}\t{}\t{}\t{}\t{}\t{}",
                    r.u,
                    r.threshold,
                    r.regime.as_str(),
                    fmt_opt(r.fp_value),
                    fmt_opt(r.unstable_root)
                )?;
            }
        }
    }
    Ok(())
}

fn gen(args: &GenArgs) -> Result<()> {
    let inst = args.instance.generate()?;
    fs::write(&args.output, inst.to_json())
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", args.output.display())))?;
    println!(
        "wrote {}x{} instance with {} vectors to {}",
        inst.a.nrows(),
        inst.a.ncols(),
        inst.num_vectors(),
        args.output.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::Se(a) => se(a),
        Command::Fixedpoint(a) => fixedpoint(a),
        Command::Gen(a) => gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
