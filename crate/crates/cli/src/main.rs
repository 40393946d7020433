use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use csp_sched::generate::{generate, CapacityProfile, GeneratorConfig, UtilityModel, WindowModel};
use csp_sched::io::{read_instance, solution_from_json, solution_to_json, write_instance};
use csp_sched::model::{evaluate_mixed, within_capacity, FEASIBILITY_TOL};
use csp_sched::solver::{solve, Algorithm, SolveOptions};
use csp_sched::{CspError, Exec, Instance, MixedSolution};

const MEM_CAP_ENV: &str = "CSP_SCHED_MEM_CAP";
const CSV_HEADER: &str = "instance,algorithm,epsilon,utility,beta,elapsed_ms";

#[derive(Parser)]
#[command(name = "csp-sched", version, about = "Schedule complex power demands under apparent-power capacities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random instance.
    Generate(GenerateArgs),
    /// Solve one instance.
    Solve(SolveArgs),
    /// Check a solution against an instance.
    Verify(VerifyArgs),
    /// Run several algorithms over many instances and tabulate the results.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Constant,
    Random,
    Valley,
}

#[derive(Clone, Copy, ValueEnum)]
enum Utilities {
    Proportional,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum Windows {
    Full,
    RandomContiguous,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 6)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    max_prefs_per_user: usize,
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Largest demand argument in radians.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
    angle_max: f64,
    #[arg(long, value_enum, default_value = "constant")]
    capacity_profile: Profile,
    #[arg(long, default_value_t = 10.0)]
    capacity: f64,
    #[arg(long, default_value_t = 1.0)]
    magnitude_min: f64,
    #[arg(long, default_value_t = 6.0)]
    magnitude_max: f64,
    #[arg(long, value_enum, default_value = "proportional")]
    utility_model: Utilities,
    #[arg(long, default_value_t = 0.0)]
    elastic_fraction: f64,
    #[arg(long, value_enum, default_value = "full")]
    window_model: Windows,
    /// Repeat one value per preference over its window.
    #[arg(long)]
    constant_demands: bool,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    /// Split threshold for the ufp algorithm.
    #[arg(long, default_value_t = 0.5)]
    delta: f64,
    /// Disable data parallelism.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    /// exact, greedy, greedy-sequential, fptas, ptas, ufp or mixed+<inner>.
    #[arg(long, short)]
    algorithm: String,
    #[command(flatten)]
    solver: SolverArgs,
    /// Solution file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Append a CSV report row here (with a header if the file is new);
    /// the row goes to stderr when absent.
    #[arg(long, alias = "beta-report")]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    solution: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
}

#[derive(Args)]
struct CompareArgs {
    /// Glob pattern for instance files.
    pattern: String,
    /// Comma-separated algorithm names.
    #[arg(long, value_delimiter = ',', default_value = "exact,greedy")]
    algorithms: Vec<String>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Exit with status 1 when some ratio against exact is below this.
    #[arg(long)]
    min_ratio: Option<f64>,
}

/// Failure carrying its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<CspError> for Failure {
    fn from(e: CspError) -> Self {
        let code = match e {
            CspError::Resource { .. } => 3,
            CspError::Numerical(_) => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn in_file(path: &Path, e: impl Into<CspError>) -> Failure {
    let mut f = Failure::from(e.into());
    f.message = format!("{}: {}", path.display(), f.message);
    f
}

/// A closed reader (as in `| head`) ends the process quietly with status 0.
fn stdout(text: &str) -> Result<(), Failure> {
    let mut lock = std::io::stdout().lock();
    match lock.write_all(text.as_bytes()).and_then(|_| lock.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        r => r.map_err(|e| Failure::from(CspError::from(e))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_generate(a: GenerateArgs) -> Result<u8, Failure> {
    let config = GeneratorConfig {
        seed: a.seed,
        n: a.n,
        max_prefs_per_user: a.max_prefs_per_user,
        m: a.m,
        angle_max: a.angle_max,
        capacity_profile: match a.capacity_profile {
            Profile::Constant => CapacityProfile::Constant,
            Profile::Random => CapacityProfile::Random,
            Profile::Valley => CapacityProfile::Valley,
        },
        capacity: a.capacity,
        magnitude_range: (a.magnitude_min, a.magnitude_max),
        utility_model: match a.utility_model {
            Utilities::Proportional => UtilityModel::Proportional,
            Utilities::Uniform => UtilityModel::Uniform,
        },
        elastic_fraction: a.elastic_fraction,
        window_model: match a.window_model {
            Windows::Full => WindowModel::Full,
            Windows::RandomContiguous => WindowModel::RandomContiguous,
        },
        constant_demands: a.constant_demands,
    };
    let instance = generate(&config)?;
    match a.out {
        Some(path) => write_instance(&path, &instance).map_err(|e| in_file(&path, e))?,
        None => stdout(&format!("{}\n", csp_sched::io::instance_to_json(&instance)))?,
    }
    Ok(0)
}

/// Accepts a byte count with an optional K, M or G suffix (powers of 1024).
fn parse_bytes(s: &str) -> Option<u64> {
    let s = s.trim();
    let (digits, mult) = match s.chars().last()?.to_ascii_uppercase() {
        'K' => (&s[..s.len() - 1], 1u64 << 10),
        'M' => (&s[..s.len() - 1], 1 << 20),
        'G' => (&s[..s.len() - 1], 1 << 30),
        _ => (s, 1),
    };
    digits.trim().parse::<u64>().ok()?.checked_mul(mult)
}

fn solve_options(a: &SolverArgs) -> Result<SolveOptions, Failure> {
    let memory_cap_bytes = match std::env::var(MEM_CAP_ENV) {
        Ok(v) => Some(parse_bytes(&v).ok_or_else(|| fail(2, format!("{MEM_CAP_ENV}={v:?} is not a byte count")))?),
        Err(_) => None,
    };
    Ok(SolveOptions {
        epsilon: a.epsilon,
        delta: a.delta,
        exec: if a.sequential { Exec::Sequential } else { Exec::default() },
        memory_cap_bytes,
        ..SolveOptions::default()
    })
}

fn parse_algorithm(name: &str) -> Result<Algorithm, Failure> {
    let alg: Algorithm = name.parse()?;
    Ok(alg)
}

fn csv_row(instance: &Path, alg: &Algorithm, epsilon: f64, utility: f64, beta: f64, ms: f64) -> String {
    format!("{},{alg},{epsilon},{utility},{beta},{ms:.3}", instance.display())
}

fn cmd_solve(a: SolveArgs) -> Result<u8, Failure> {
    let alg = parse_algorithm(&a.algorithm)?;
    let opts = solve_options(&a.solver)?;
    let instance = read_instance(&a.instance).map_err(|e| in_file(&a.instance, e))?;
    if alg == Algorithm::GreedySequential {
        eprintln!("note: greedy-sequential is a heuristic with no approximation guarantee");
    }
    let (solution, report) = solve(&alg, &instance, &opts)?;
    let json = solution_to_json(&instance, &solution) + "\n";
    match &a.out {
        Some(path) => std::fs::write(path, json).map_err(|e| in_file(path, e))?,
        None => stdout(&json)?,
    }
    let row = csv_row(
        &a.instance,
        &alg,
        opts.epsilon,
        report.utility,
        report.violation_beta,
        report.elapsed.as_secs_f64() * 1e3,
    );
    match &a.report {
        Some(path) => {
            let fresh = !path.exists();
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| in_file(path, e))?;
            let text = if fresh { format!("{CSV_HEADER}\n{row}\n") } else { format!("{row}\n") };
            f.write_all(text.as_bytes()).map_err(|e| in_file(path, e))?;
        }
        None => eprintln!("{CSV_HEADER}\n{row}"),
    }
    Ok(0)
}

/// Human-readable reasons the solution is not feasible at `beta`.
fn diagnose(instance: &Instance, solution: &MixedSolution, beta: f64) -> Result<Vec<String>, CspError> {
    let mut out = Vec::new();
    if !solution.respects_bags() {
        out.push("more than one preference selected for some user".to_string());
    }
    for (r, x) in solution.fractional.iter() {
        let (u, p) = instance.ids(r);
        if !(-FEASIBILITY_TOL..=1.0 + FEASIBILITY_TOL).contains(&x) {
            out.push(format!("{u}/{p}: amount {x} outside [0, 1]"));
        } else if !instance.pref(r).is_elastic() && x > FEASIBILITY_TOL && x < 1.0 - FEASIBILITY_TOL {
            out.push(format!("{u}/{p}: fractional amount {x} on an inelastic preference"));
        }
    }
    let report = evaluate_mixed(instance, solution)?;
    for (t, (l, &c)) in report.per_slot_load.iter().zip(&instance.capacities).enumerate() {
        if !within_capacity(l.norm(), c, beta) {
            out.push(format!(
                "slot {}: |load|={:.6} exceeds beta*C={:.6} by {:.6}",
                t + 1,
                l.norm(),
                beta * c,
                l.norm() - beta * c
            ));
        }
    }
    Ok(out)
}

fn cmd_verify(a: VerifyArgs) -> Result<u8, Failure> {
    let instance = read_instance(&a.instance).map_err(|e| in_file(&a.instance, e))?;
    csp_sched::model::ensure_valid(&instance).map_err(|e| in_file(&a.instance, e))?;
    let text = std::fs::read_to_string(&a.solution).map_err(|e| in_file(&a.solution, e))?;
    let solution = solution_from_json(&instance, &text).map_err(|e| in_file(&a.solution, e))?;
    let problems = diagnose(&instance, &solution, a.beta)?;
    if problems.is_empty() {
        let r = evaluate_mixed(&instance, &solution)?;
        stdout(&format!("feasible at beta={}: utility={} beta={}\n", a.beta, r.utility, r.violation_beta))?;
        Ok(0)
    } else {
        for p in &problems {
            stdout(&format!("{p}\n"))?;
        }
        stdout(&format!("infeasible at beta={}\n", a.beta))?;
        Ok(1)
    }
}

struct CompareRow {
    instance: String,
    algorithm: String,
    utility: Option<f64>,
    ratio: Option<f64>,
    beta: Option<f64>,
    elapsed_ms: Option<f64>,
    status: String,
}

fn compare_one(path: &Path, algorithms: &[Algorithm], opts: &SolveOptions) -> Vec<CompareRow> {
    let name = path.display().to_string();
    let instance = match read_instance(path) {
        Ok(i) => i,
        Err(e) => {
            return vec![CompareRow {
                instance: name,
                algorithm: "-".into(),
                utility: None,
                ratio: None,
                beta: None,
                elapsed_ms: None,
                status: format!("error: {e}"),
            }]
        }
    };
    let results: Vec<_> = algorithms.iter().map(|a| (a, solve(a, &instance, opts))).collect();
    let exact = results
        .iter()
        .find(|(a, _)| **a == Algorithm::Exact)
        .and_then(|(_, r)| r.as_ref().ok())
        .map(|(_, rep)| rep.utility);
    results
        .into_iter()
        .map(|(alg, r)| match r {
            Ok((_, rep)) => {
                let advertised = alg.advertised_beta(opts.epsilon);
                let ok = within_capacity(rep.violation_beta, advertised, 1.0);
                CompareRow {
                    instance: name.clone(),
                    algorithm: alg.to_string(),
                    utility: Some(rep.utility),
                    ratio: exact.map(|e| if e > 0.0 { rep.utility / e } else { 1.0 }),
                    beta: Some(rep.violation_beta),
                    elapsed_ms: Some(rep.elapsed.as_secs_f64() * 1e3),
                    status: if ok { "ok".into() } else { format!("beta above {advertised}") },
                }
            }
            Err(e) => CompareRow {
                instance: name.clone(),
                algorithm: alg.to_string(),
                utility: None,
                ratio: None,
                beta: None,
                elapsed_ms: None,
                status: format!("error: {e}"),
            },
        })
        .collect()
}

fn cmd_compare(a: CompareArgs) -> Result<u8, Failure> {
    let algorithms = a
        .algorithms
        .iter()
        .map(|s| parse_algorithm(s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let opts = solve_options(&a.solver)?;
    let mut paths: Vec<PathBuf> = glob::glob(&a.pattern)
        .map_err(|e| fail(2, format!("bad glob {:?}: {e}", a.pattern)))?
        .filter_map(|p| p.ok())
        .collect();
    paths.sort();

    // Instances fan out; each instance runs its solvers sequentially.
    let inner = SolveOptions {
        exec: Exec::Sequential,
        ..opts.clone()
    };
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<CompareRow>> = if opts.exec == Exec::Parallel {
        use rayon::prelude::*;
        paths.par_iter().map(|p| compare_one(p, &algorithms, &inner)).collect()
    } else {
        paths.iter().map(|p| compare_one(p, &algorithms, &inner)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<CompareRow>> = paths.iter().map(|p| compare_one(p, &algorithms, &inner)).collect();

    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("instance,algorithm,utility,ratio,beta,elapsed_ms,status\n");
    let mut code = 0;
    for r in rows.iter().flatten() {
        if r.status != "ok" && !r.status.starts_with("error") {
            code = 1;
        }
        if let (Some(min), Some(ratio)) = (a.min_ratio, r.ratio) {
            if ratio < min {
                code = 1;
            }
        }
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.instance,
            r.algorithm,
            cell(r.utility),
            cell(r.ratio),
            cell(r.beta),
            r.elapsed_ms.map(|x| format!("{x:.3}")).unwrap_or_default(),
            r.status.replace(',', ";")
        ));
    }
    stdout(&out)?;
    Ok(code)
}
