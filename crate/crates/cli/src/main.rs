//! `sparsekit` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O or input error, 3 numerical
//! failure (breakdown or non-convergence; a report is still written for
//! non-convergence).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sparsekit::autotune::{measure_spmv, probe_clock_resolution, tune_spmv, SystemClock, TimingProtocol, TuneError};
use sparsekit::formats::{FormatError, HybWidth, SparseMatrix, StorageFormat, DEFAULT_ELL_MAX_SLOTS};
use sparsekit::io::{
    compute_stats, generate_test_matrix, read_matrix_market, write_bench_csv, write_matrix_market, GeneratorKind,
    IoError, JsonReport, RunManifest, DEFAULT_PECLET,
};
use sparsekit::kernels::{ExecPolicy, GridStrategy, KernelError};
use sparsekit::krylov::{solve, Method, Preconditioner, SolverConfig, SolverError};
use sparsekit::substructure::{
    parse_assignment, partition_matrix, partition_stats, solve_cg_substructured, ParallelSolveReport, PartitionSpec,
    SubstructureError,
};

/// `println!` that ignores a closed stdout (e.g. when piped into `head`).
macro_rules! out {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "sparsekit", version, about = "Sparse storage formats, tuned SpMV and Krylov solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Re-encode a Matrix Market file in another storage format.
    Convert {
        input: PathBuf,
        #[arg(long)]
        to: StorageFormat,
        /// ELL part width for HYB (default: 2/3 row-coverage rule).
        #[arg(long)]
        hyb_width: Option<usize>,
        /// `.mtx` writes Matrix Market, anything else writes the storage arrays as JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print matrix characteristics.
    Stats {
        input: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Time SpMV under one execution policy.
    SpmvBench {
        input: PathBuf,
        #[arg(long, default_value = "csr")]
        format: StorageFormat,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Minimum timed repetitions.
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long)]
        json: bool,
    },
    /// Time SpMV over the full policy grid and report the fastest policy.
    Tune {
        input: PathBuf,
        #[arg(long, default_value = "csr")]
        format: StorageFormat,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Solve A x = b with a Krylov method (x0 = 0).
    Solve {
        input: PathBuf,
        #[arg(long, default_value = "cg")]
        method: Method,
        #[command(flatten)]
        solver: SolverArgs,
        /// BiCGStab(l) degree.
        #[arg(long = "l", default_value_t = 2)]
        stab_l: usize,
        /// GCR restart length.
        #[arg(long, default_value_t = 50)]
        restart: usize,
        #[arg(long, default_value = "jacobi")]
        precond: Preconditioner,
        #[arg(long, default_value = "csr")]
        format: StorageFormat,
        /// `ones` or a file with one value per line.
        #[arg(long, default_value = "ones")]
        rhs: String,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Split the matrix into subdomains and print their sizes.
    Partition {
        input: PathBuf,
        #[arg(long)]
        parts: Option<usize>,
        /// One 0-based subdomain id per line.
        #[arg(long)]
        assignment: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Sub-structured parallel CG, one worker per subdomain (x0 = 0, b = ones).
    SolvePar {
        input: PathBuf,
        #[arg(long)]
        parts: Option<usize>,
        #[arg(long)]
        assignment: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
        /// Timed repetitions; wall times are averaged over them.
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write a generated test matrix in Matrix Market format.
    Generate {
        kind: GeneratorKind,
        /// Grid side for 2D kinds, order for laplace1d.
        n: usize,
        #[arg(long, default_value_t = DEFAULT_PECLET)]
        peclet: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct PolicyArgs {
    #[arg(long, default_value_t = 256)]
    block_size: usize,
    #[arg(long, default_value_t = 8)]
    workers_per_row: usize,
    #[arg(long, default_value = "flat")]
    strategy: GridStrategy,
    /// Worker-pool size (default: SPARSEKIT_WORKERS or available cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 30_000)]
    max_iter: usize,
    #[command(flatten)]
    policy: PolicyArgs,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Input(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<KernelError> for Failure {
    fn from(e: KernelError) -> Self {
        match e {
            KernelError::InvalidPolicy(m) => Failure::Usage(m),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidConfig(m) => Failure::Usage(m),
            SolverError::Kernel(k) => k.into(),
            SolverError::NotSquare { .. } => Failure::Input(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

impl From<TuneError> for Failure {
    fn from(e: TuneError) -> Self {
        match e {
            TuneError::Kernel(k) => k.into(),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

impl From<SubstructureError> for Failure {
    fn from(e: SubstructureError) -> Self {
        use SubstructureError as E;
        match e {
            E::Solver(s) => s.into(),
            E::Format(f) => f.into(),
            E::Kernel(k) => k.into(),
            E::InvalidPartCount { .. } | E::EmptySubdomain(_) | E::UnownedEquation { .. } => {
                Failure::Usage(e.to_string())
            }
            E::NotSquare { .. }
            | E::AssignmentLength { .. }
            | E::AssignmentParse { .. }
            | E::DisconnectedAssignment { .. } => Failure::Input(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let args: Vec<OsString> = std::env::args_os().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let arg_strings: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match run(cli.command, arg_strings) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("sparsekit: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(command: Command, args: Vec<String>) -> CmdResult {
    match command {
        Command::Convert { input, to, hyb_width, out } => convert(&input, to, hyb_width, &out),
        Command::Stats { input, json } => stats(&input, json, args),
        Command::SpmvBench { input, format, policy, reps, json } => {
            spmv_bench(&input, format, &policy, reps, json, args)
        }
        Command::Tune { input, format, reps, csv, json } => tune(&input, format, reps, csv.as_deref(), json, args),
        Command::Solve { input, method, solver, stab_l, restart, precond, format, rhs, report } => {
            let cfg = SolverConfig {
                tolerance: solver.tol,
                max_iterations: solver.max_iter,
                preconditioner: precond,
                restart,
                stab_l,
                policy: solver.policy.build()?,
            };
            solve_cmd(&input, method, cfg, format, &rhs, report.as_deref(), args)
        }
        Command::Partition { input, parts, assignment, json } => {
            partition(&input, parts, assignment.as_deref(), json, args)
        }
        Command::SolvePar { input, parts, assignment, solver, reps, report } => {
            let cfg = SolverConfig {
                tolerance: solver.tol,
                max_iterations: solver.max_iter,
                preconditioner: Preconditioner::None,
                policy: solver.policy.build()?,
                ..Default::default()
            };
            solve_par(&input, parts, assignment.as_deref(), cfg, reps, report.as_deref(), args)
        }
        Command::Generate { kind, n, peclet, out } => {
            if n < 2 {
                return Err(Failure::Usage(format!("n must be at least 2, got {n}")));
            }
            let m = generate_test_matrix(kind, n, peclet, &out)?;
            out!("wrote {} ({}x{}, {} entries)", out.display(), m.n_rows(), m.n_cols(), m.nnz());
            Ok(())
        }
    }
}

impl PolicyArgs {
    fn build(&self) -> Result<ExecPolicy, Failure> {
        let p = ExecPolicy::new(self.block_size, self.workers_per_row, self.strategy)?;
        Ok(match self.workers {
            Some(0) => return Err(Failure::Usage("--workers must be at least 1".into())),
            Some(w) => p.with_worker_count(w),
            None => p,
        })
    }
}

fn load(path: &Path) -> Result<SparseMatrix, Failure> {
    Ok(SparseMatrix::Coo(read_matrix_market(path)?))
}

fn load_as(path: &Path, format: StorageFormat) -> Result<SparseMatrix, Failure> {
    Ok(load(path)?.convert(format, HybWidth::Auto, DEFAULT_ELL_MAX_SLOTS)?)
}

fn matrix_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(kind: &str, manifest: RunManifest, result: T) -> CmdResult {
    out!("{}", JsonReport::new(kind, manifest, result).to_json()?);
    Ok(())
}

fn convert(input: &Path, to: StorageFormat, hyb_width: Option<usize>, out: &Path) -> CmdResult {
    let width = hyb_width.map_or(HybWidth::Auto, HybWidth::Fixed);
    let m = load(input)?.convert(to, width, DEFAULT_ELL_MAX_SLOTS)?;
    if out.extension().is_some_and(|e| e == "mtx") {
        write_matrix_market(out, &m.to_csr().to_coo())?;
    } else {
        let json = serde_json::to_string_pretty(&m).map_err(IoError::from)?;
        write_file(out, &json)?;
    }
    out!("wrote {} as {} ({} entries)", out.display(), to, m.nnz());
    Ok(())
}

fn stats(input: &Path, json: bool, args: Vec<String>) -> CmdResult {
    let s = compute_stats(&load(input)?);
    if json {
        return print_json("stats", RunManifest::new("stats", args).with_matrix(&input.display().to_string()), s);
    }
    out!("matrix           {}", matrix_name(input));
    out!("h                {}", s.h);
    out!("nz               {}", s.nz);
    out!("density          {:.6e} ({:.6}%)", s.density, s.density_percent);
    out!("max row          {} (row {})", s.max_row, s.max_row_index);
    out!("bandwidth        {}", s.bandwidth);
    out!("nz/h             {:.3}", s.nz_per_h_mean);
    out!("nz/h stddev      {:.3}", s.nz_per_h_stddev);
    Ok(())
}

fn protocol(reps: usize) -> Result<TimingProtocol, Failure> {
    if reps == 0 {
        return Err(Failure::Usage("--reps must be at least 1".into()));
    }
    Ok(TimingProtocol { min_repetitions: reps, ..Default::default() })
}

fn spmv_bench(
    input: &Path,
    format: StorageFormat,
    policy: &PolicyArgs,
    reps: usize,
    json: bool,
    args: Vec<String>,
) -> CmdResult {
    let policy = policy.build()?;
    let protocol = protocol(reps)?;
    let m = load_as(input, format)?;
    let resolution = probe_clock_resolution(&mut SystemClock::new());
    let rec = measure_spmv(&m, &matrix_name(input), policy, &protocol, resolution)?;
    if json {
        let man = RunManifest::new("spmv-bench", args)
            .with_matrix(&input.display().to_string())
            .with_format(format)
            .with_policy(policy);
        return print_json("spmv-bench", man, vec![rec]);
    }
    write_bench_csv(std::io::stdout().lock(), &[rec])?;
    Ok(())
}

fn tune(
    input: &Path,
    format: StorageFormat,
    reps: usize,
    csv: Option<&Path>,
    json: bool,
    args: Vec<String>,
) -> CmdResult {
    let protocol = protocol(reps)?;
    let m = load_as(input, format)?;
    let grid = ExecPolicy::candidate_grid();
    let result = tune_spmv(&m, &matrix_name(input), &grid, &protocol)?;
    if let Some(path) = csv {
        let mut buf = Vec::new();
        write_bench_csv(&mut buf, &result.table)?;
        write_file(path, &String::from_utf8_lossy(&buf))?;
    }
    if json {
        let man = RunManifest::new("tune", args).with_matrix(&input.display().to_string()).with_format(format);
        return print_json("tune", man, &result);
    }
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "mean SpMV time (ms), {} format, rows = block size, columns = workers per row", format);
    for strategy in GridStrategy::ALL {
        let _ = writeln!(out, "\nstrategy {strategy}");
        let _ = write!(out, "{:>6}", "");
        for tw in sparsekit::kernels::WORKERS_PER_ROW {
            let _ = write!(out, "{tw:>11}");
        }
        let _ = writeln!(out);
        for bs in sparsekit::kernels::BLOCK_SIZES {
            let _ = write!(out, "{bs:>6}");
            for tw in sparsekit::kernels::WORKERS_PER_ROW {
                let cell = result.table.iter().find(|r| {
                    r.policy.block_size() == bs
                        && r.policy.workers_per_row() == tw
                        && r.policy.grid_strategy() == strategy
                });
                match cell {
                    Some(r) => {
                        let _ = write!(out, "{:>11.4}", r.mean_time * 1e3);
                    }
                    None => {
                        let _ = write!(out, "{:>11}", "-");
                    }
                }
            }
            let _ = writeln!(out);
        }
    }
    let _ = writeln!(
        out,
        "\nbest {} at {:.4} ms; default {} at {:.4} ms; speedup {:.3}",
        result.best_policy,
        result.table.iter().find(|r| r.policy == result.best_policy).map_or(f64::NAN, |r| r.mean_time * 1e3),
        result.default_record.policy,
        result.default_record.mean_time * 1e3,
        result.speedup_vs_default
    );
    Ok(())
}

fn read_rhs(spec: &str, n: usize) -> Result<Vec<f64>, Failure> {
    if spec == "ones" {
        return Ok(vec![1.0; n]);
    }
    let text = fs::read_to_string(spec).map_err(|e| Failure::Input(format!("{spec}: {e}")))?;
    let values = text
        .split_whitespace()
        .enumerate()
        .map(|(i, t)| t.parse::<f64>().map_err(|e| Failure::Input(format!("{spec}: value {}: '{t}': {e}", i + 1))))
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != n {
        return Err(Failure::Input(format!("{spec}: {} values for a system of order {n}", values.len())));
    }
    Ok(values)
}

fn solve_cmd(
    input: &Path,
    method: Method,
    cfg: SolverConfig,
    format: StorageFormat,
    rhs: &str,
    report: Option<&Path>,
    args: Vec<String>,
) -> CmdResult {
    cfg.validate()?;
    let a = load_as(input, format)?;
    let b = read_rhs(rhs, a.n_rows())?;
    let x0 = vec![0.0; a.n_cols()];
    let rep = solve(method, &a, &b, &x0, &cfg)?;
    out!(
        "{}: converged={} iterations={} measure={:.3e} time={:.3}s",
        rep.method,
        rep.converged,
        rep.iterations,
        rep.final_residual_measure,
        rep.wall_time
    );
    if let Some(path) = report {
        let man = RunManifest::new("solve", args)
            .with_matrix(&input.display().to_string())
            .with_format(format)
            .with_policy(cfg.policy)
            .with_solver(cfg);
        write_file(path, &JsonReport::new("solve", man, &rep).to_json()?)?;
    }
    if !rep.converged {
        return Err(Failure::Numerical(format!("{} did not converge in {} iterations", rep.method, rep.iterations)));
    }
    Ok(())
}

fn partition_spec(parts: Option<usize>, assignment: Option<&Path>) -> Result<PartitionSpec, Failure> {
    match (parts, assignment) {
        (_, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            let ids = parse_assignment(&text)?;
            let found = ids.iter().max().map_or(0, |m| m + 1);
            if let Some(p) = parts {
                if p != found {
                    return Err(Failure::Usage(format!("--parts {p} but the assignment uses {found} subdomains")));
                }
            }
            Ok(PartitionSpec::Assignment(ids))
        }
        (Some(p), None) => Ok(PartitionSpec::Parts(p)),
        (None, None) => Err(Failure::Usage("one of --parts or --assignment is required".into())),
    }
}

fn partition(
    input: &Path,
    parts: Option<usize>,
    assignment: Option<&Path>,
    json: bool,
    args: Vec<String>,
) -> CmdResult {
    let spec = partition_spec(parts, assignment)?;
    let a = load(input)?.to_csr();
    let b = vec![1.0; a.n_rows()];
    let (_, locals) = partition_matrix(&a, &b, &spec)?;
    let stats = partition_stats(&locals);
    if json {
        return print_json(
            "partition",
            RunManifest::new("partition", args).with_matrix(&input.display().to_string()),
            stats,
        );
    }
    out!("{:>9} {:>10} {:>12} {:>10}  neighbors", "subdomain", "dof", "nnz", "interface");
    for s in &stats {
        let nb: Vec<String> = s.neighbors.iter().map(|n| n.to_string()).collect();
        out!("{:>9} {:>10} {:>12} {:>10}  {}", s.subdomain, s.dof, s.nnz, s.interface_dof, nb.join(","));
    }
    Ok(())
}

#[derive(Serialize)]
struct TimedParallelSolve<'a> {
    #[serde(flatten)]
    run: &'a ParallelSolveReport,
    reps: usize,
    mean_wall_time: f64,
    mean_subdomain_times: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn solve_par(
    input: &Path,
    parts: Option<usize>,
    assignment: Option<&Path>,
    cfg: SolverConfig,
    reps: usize,
    report: Option<&Path>,
    args: Vec<String>,
) -> CmdResult {
    cfg.validate()?;
    if reps == 0 {
        return Err(Failure::Usage("--reps must be at least 1".into()));
    }
    let spec = partition_spec(parts, assignment)?;
    let a = load_as(input, StorageFormat::Csr)?;
    let b = vec![1.0; a.n_rows()];
    let x0 = vec![0.0; a.n_cols()];
    let rep = solve_cg_substructured(&a, &b, &x0, &spec, &cfg)?;
    let mut wall = rep.report.wall_time;
    let mut sub = rep.subdomain_times.clone();
    let done = if rep.report.converged { reps } else { 1 };
    for _ in 1..done {
        let again = solve_cg_substructured(&a, &b, &x0, &spec, &cfg)?;
        wall += again.report.wall_time;
        sub.iter_mut().zip(&again.subdomain_times).for_each(|(s, t)| *s += t);
    }
    let timed = TimedParallelSolve {
        run: &rep,
        reps: done,
        mean_wall_time: wall / done as f64,
        mean_subdomain_times: sub.iter().map(|t| t / done as f64).collect(),
    };
    out!(
        "{} on {} subdomains: converged={} iterations={} measure={:.3e} mean time={:.4}s over {} runs",
        rep.report.method,
        rep.n_subdomains,
        rep.report.converged,
        rep.report.iterations,
        rep.report.final_residual_measure,
        timed.mean_wall_time,
        done
    );
    for (s, t) in rep.subdomains.iter().zip(&timed.mean_subdomain_times) {
        out!(
            "  subdomain {:>3}: dof {:>9} nnz {:>10} interface {:>8} time {:.4}s",
            s.subdomain,
            s.dof,
            s.nnz,
            s.interface_dof,
            t
        );
    }
    if let Some(path) = report {
        let man = RunManifest::new("solve-par", args)
            .with_matrix(&input.display().to_string())
            .with_policy(cfg.policy)
            .with_solver(cfg);
        write_file(path, &JsonReport::new("solve-par", man, &timed).to_json()?)?;
    }
    if !rep.report.converged {
        return Err(Failure::Numerical(format!("did not converge in {} iterations", rep.report.iterations)));
    }
    Ok(())
}
