//! `socpd`: generate, solve, verify and export logit share-of-choice
//! product design instances.
//!
//! Exit codes: 0 solved (optimal or within gap), 1 verified design is
//! infeasible, 2 time or node limit hit, 3 infeasible instance, 64 bad
//! arguments, 65 invalid instance data, 66 unreadable input.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use socpd::conic::{self, ConicModel};
use socpd::generators::{attach_random_profit, generate_synthetic, recover_assignment, reduce_max3sat, ThreeSatInstance};
use socpd::oa::{solve_instance, WarmStart};
use socpd::oracle::DEFAULT_ENUMERATION_CAP;
use socpd::report::{evaluate_design, read_json, summary_table, to_json, SummaryRow};
use socpd::{
    enumerate, gamma_curve, solve_gm, Criterion, DesignVector, Error, GmReport, Instance, ObjectiveKind, ObjectiveSpec,
    SolveParams, SolveReport, TerminationReason,
};

const EXIT_INFEASIBLE_DESIGN: u8 = 1;
const EXIT_LIMIT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;
const EXIT_NO_INPUT: u8 = 66;

#[derive(Debug, Parser)]
#[command(name = "socpd", version, about = "Exact logit share-of-choice product design")]
struct Cli {
    /// Log branch-and-bound progress (one line per node) to stderr.
    #[arg(long, global = true)]
    trace: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded instance file.
    Generate(GenerateArgs),
    /// Solve an instance and write a JSON report.
    Solve(SolveArgs),
    /// Score a design on an instance.
    Verify(VerifyArgs),
    /// Write an exponential-cone model in CBF.
    Export(ExportArgs),
    /// Tabulate the geometric-mean guarantee Γ against U/L.
    GammaCurve(GammaArgs),
    /// Summarise report files as an objective / gap / time table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GenerateKind {
    Synthetic,
    Max3sat,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    kind: GenerateKind,
    /// Number of attributes (synthetic) or variables (random 3SAT).
    #[arg(long)]
    n: Option<usize>,
    /// Number of customer types (synthetic) or clauses (random 3SAT).
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Attach a random expected-profit objective (synthetic only).
    #[arg(long)]
    profit: bool,
    /// DIMACS CNF file to reduce (max3sat).
    #[arg(long)]
    cnf: Option<PathBuf>,
    /// Number of seeds to generate, starting at `--seed`.
    #[arg(long, default_value_t = 1)]
    replications: u64,
    /// Output file; with several replications `_r<seed>` is inserted before
    /// the extension. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Oa,
    Gm,
    Enum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ObjectiveArg {
    Share,
    Profit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WarmStartArg {
    None,
    Gm,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = Method::Oa)]
    method: Method,
    /// Override the objective stored in the instance.
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// Relative optimality gap.
    #[arg(long, default_value_t = 1e-6)]
    gap: f64,
    /// Seconds.
    #[arg(long, default_value_t = 3600.0)]
    time_limit: f64,
    #[arg(long)]
    node_limit: Option<u64>,
    #[arg(long, value_enum, default_value_t = WarmStartArg::None)]
    warm_start: WarmStartArg,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Accepted for symmetry with `generate`; the solvers are deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Report file; defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    instance: PathBuf,
    /// JSON file holding a 0/1 array or a report with a `design` field.
    #[arg(long)]
    design: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormulationArg {
    Micp,
    Gm,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, value_enum, default_value_t = FormulationArg::Micp)]
    formulation: FormulationArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GammaArgs {
    #[arg(long = "K", value_delimiter = ',', default_values_t = [2usize, 5, 10, 20])]
    k: Vec<usize>,
    /// Largest ratio U/L; ratios run over 1, 2, ..., max.
    #[arg(long, default_value_t = 100)]
    max_ratio: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Solve or GM report files.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Failure::new(EXIT_USAGE, message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io { .. } | Error::Parse { .. } => EXIT_NO_INPUT,
            Error::Invalid(_) | Error::Format(_) | Error::Integrity(_) => EXIT_DATA,
            Error::Infeasible(_) => EXIT_INFEASIBLE,
            _ => EXIT_USAGE,
        };
        Failure::new(code, e.to_string())
    }
}

type CmdResult = std::result::Result<u8, Failure>;

fn emit(text: &str, out: Option<&Path>) -> std::result::Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::new(EXIT_USAGE, format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_valid(path: &Path) -> std::result::Result<Instance, Failure> {
    let inst = Instance::load(path)?;
    inst.validate().into_result()?;
    Ok(inst)
}

fn replication_path(out: &Path, seed: u64) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match out.extension() {
        Some(ext) => format!("{stem}_r{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}_r{seed}"),
    };
    out.with_file_name(name)
}

fn cmd_generate(args: &GenerateArgs) -> CmdResult {
    if args.replications == 0 {
        return Err(Failure::usage("--replications must be positive"));
    }
    for seed in args.seed..args.seed + args.replications {
        let inst = match args.kind {
            GenerateKind::Synthetic => {
                let (n, k) = args
                    .n
                    .zip(args.k)
                    .ok_or_else(|| Failure::usage("synthetic instances need --n and --K"))?;
                if n == 0 || k == 0 {
                    return Err(Failure::usage("--n and --K must be positive"));
                }
                let inst = generate_synthetic(n, k, seed);
                if args.profit {
                    attach_random_profit(inst, seed)
                } else {
                    inst
                }
            }
            GenerateKind::Max3sat => {
                let sat = match (&args.cnf, args.n, args.k) {
                    (Some(path), _, _) => ThreeSatInstance::load_dimacs(path)?,
                    (None, Some(n), Some(k)) if n > 0 && k > 0 => ThreeSatInstance::random(n, k, seed),
                    _ => return Err(Failure::usage("max3sat needs --cnf, or --n and --K for a random formula")),
                };
                reduce_max3sat(&sat)
            }
        };
        eprintln!(
            "seed {seed}: n = {}, K = {}, constraints = {}",
            inst.n,
            inst.num_types,
            inst.constraints.len()
        );
        let out = match &args.out {
            Some(p) if args.replications > 1 => Some(replication_path(p, seed)),
            other => other.clone(),
        };
        emit(&inst.to_json(), out.as_deref())?;
    }
    Ok(0)
}

fn solve_exit(t: TerminationReason) -> u8 {
    match t {
        TerminationReason::Optimal | TerminationReason::GapReached => 0,
        TerminationReason::TimeLimit | TerminationReason::NodeLimit => EXIT_LIMIT,
        TerminationReason::Infeasible => EXIT_INFEASIBLE,
    }
}

fn solve_enum(inst: &Instance) -> std::result::Result<SolveReport, Failure> {
    if inst.n > DEFAULT_ENUMERATION_CAP {
        return Err(Failure::usage(format!(
            "--method enum is limited to n <= {DEFAULT_ENUMERATION_CAP} (instance has n = {})",
            inst.n
        )));
    }
    let criterion = match inst.objective_kind() {
        ObjectiveKind::ShareOfChoice => Criterion::ShareOfChoice,
        ObjectiveKind::ExpectedProfit => Criterion::ExpectedProfit,
    };
    let start = Instant::now();
    let (termination, design, value) = match enumerate(inst, criterion, DEFAULT_ENUMERATION_CAP) {
        Ok(r) => (TerminationReason::Optimal, Some(r.best_design), Some(r.best_value)),
        Err(Error::Infeasible(_)) => (TerminationReason::Infeasible, None, None),
        Err(e) => return Err(e.into()),
    };
    Ok(SolveReport {
        method: "enum".into(),
        objective: inst.objective_kind(),
        termination,
        design,
        objective_value: value,
        best_bound: value,
        gap: value.map(|_| 0.0),
        gap_percent: value.map(|_| 0.0),
        root_bound: None,
        nodes: 0,
        cuts: 0,
        lp_iterations: 0,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

fn cmd_solve(args: &SolveArgs) -> CmdResult {
    if !(args.gap >= 0.0 && args.gap.is_finite()) {
        return Err(Failure::usage("--gap must be a non-negative number"));
    }
    if !(args.time_limit > 0.0 && args.time_limit.is_finite()) {
        return Err(Failure::usage("--time-limit must be positive"));
    }
    if args.node_limit == Some(0) || args.threads == 0 {
        return Err(Failure::usage("--node-limit and --threads must be positive"));
    }
    let mut inst = load_valid(&args.instance)?;
    match args.objective {
        Some(ObjectiveArg::Share) => inst.objective = ObjectiveSpec::share_of_choice(),
        Some(ObjectiveArg::Profit) if inst.objective_kind() != ObjectiveKind::ExpectedProfit => {
            return Err(Failure::usage("--objective profit needs an instance with r0 and r"));
        }
        _ => {}
    }
    if args.method == Method::Gm && inst.objective_kind() == ObjectiveKind::ExpectedProfit {
        eprintln!("note: the geometric-mean method ignores the profit margin");
    }
    let params = SolveParams {
        gap_tol: args.gap,
        time_limit: Some(Duration::from_secs_f64(args.time_limit)),
        node_limit: args.node_limit,
        warm_start: match args.warm_start {
            WarmStartArg::None => WarmStart::None,
            WarmStartArg::Gm => WarmStart::Gm,
        },
        threads: args.threads,
        ..SolveParams::default()
    };
    let label = args.instance.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let (json, row, termination) = match args.method {
        Method::Gm => {
            let r = solve_gm(&inst, &params)?;
            (to_json(&r), SummaryRow::from_gm(label, &r), r.termination)
        }
        Method::Oa => {
            let r = solve_instance(&inst, &params)?;
            (to_json(&r), SummaryRow::from_solve(label, &r), r.termination)
        }
        Method::Enum => {
            let r = solve_enum(&inst)?;
            (to_json(&r), SummaryRow::from_solve(label, &r), r.termination)
        }
    };
    emit(&json, args.out.as_deref())?;
    eprint!("{}", summary_table(&[row]));
    Ok(solve_exit(termination))
}

fn read_design(path: &Path) -> std::result::Result<DesignVector, Failure> {
    let value: serde_json::Value = read_json(path)?;
    let raw = match &value {
        serde_json::Value::Object(map) => map.get("design").cloned().unwrap_or(serde_json::Value::Null),
        other => other.clone(),
    };
    let values: Vec<f64> = match raw {
        serde_json::Value::Array(items) => items
            .iter()
            .map(|v| match v {
                serde_json::Value::Bool(b) => Some(f64::from(u8::from(*b))),
                other => other.as_f64(),
            })
            .collect::<Option<_>>()
            .ok_or_else(|| Failure::new(EXIT_DATA, "design entries must be 0/1 numbers or booleans"))?,
        _ => return Err(Failure::new(EXIT_DATA, "design file holds no design array")),
    };
    DesignVector::from_values(&values).map_err(|e| Failure::new(EXIT_DATA, e.to_string()))
}

fn cmd_verify(args: &VerifyArgs) -> CmdResult {
    let inst = load_valid(&args.instance)?;
    let design = read_design(&args.design)?;
    let eval = evaluate_design(&inst, &design).map_err(|e| Failure::new(EXIT_DATA, e.to_string()))?;
    let mut json = serde_json::to_value(&eval).expect("evaluation serialises");
    // Instances with the 3SAT reduction structure also get the assignment.
    if let Ok((assignment, satisfied)) = recover_assignment(&inst, &design) {
        json["assignment"] = serde_json::json!(assignment);
        json["satisfied_clauses"] = serde_json::json!(satisfied);
    }
    emit(&(serde_json::to_string_pretty(&json).expect("json") + "\n"), args.out.as_deref())?;
    if eval.feasible {
        Ok(0)
    } else {
        eprintln!("design violates constraints {:?}", eval.violated_constraints);
        Ok(EXIT_INFEASIBLE_DESIGN)
    }
}

fn cmd_export(args: &ExportArgs) -> CmdResult {
    let inst = Instance::load(&args.instance)?;
    if let Err(e) = inst.validate().into_result() {
        return Err(Failure::new(EXIT_DATA, e.to_string()));
    }
    let model: ConicModel = match args.formulation {
        FormulationArg::Micp => conic::build_micp(&inst)?,
        FormulationArg::Gm => conic::build_gm_micp(&inst)?,
    };
    let parsed = conic::export_checked(&model, &args.out)?;
    eprintln!(
        "wrote {}: {} variables ({} integer), {} linear rows, {} exponential cones",
        args.out.display(),
        parsed.summary.num_vars,
        parsed.summary.num_int,
        parsed.summary.num_linear_rows,
        parsed.summary.num_exp_cones
    );
    Ok(0)
}

fn cmd_gamma(args: &GammaArgs) -> CmdResult {
    if args.max_ratio == 0 || args.k.iter().any(|&k| k == 0) {
        return Err(Failure::usage("--K values and --max-ratio must be positive"));
    }
    let ratios: Vec<f64> = (1..=args.max_ratio).map(f64::from).collect();
    let mut csv = String::from("K,ratio,gamma\n");
    for &k in &args.k {
        for (r, g) in gamma_curve(k, &ratios)? {
            csv.push_str(&format!("{k},{r},{g:.15}\n"));
        }
    }
    emit(&csv, args.out.as_deref())?;
    Ok(0)
}

fn cmd_report(args: &ReportArgs) -> CmdResult {
    let mut rows = Vec::new();
    for path in &args.reports {
        let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let value: serde_json::Value = read_json(path)?;
        let row = if value.get("gamma").is_some() {
            let r: GmReport = serde_json::from_value(value).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", path.display())))?;
            SummaryRow::from_gm(label, &r)
        } else {
            let r: SolveReport = serde_json::from_value(value).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", path.display())))?;
            SummaryRow::from_solve(label, &r)
        };
        rows.push(row);
    }
    emit(&summary_table(&rows), args.out.as_deref())?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.trace { "socpd=debug" } else { "socpd=warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Export(a) => cmd_export(a),
        Command::GammaCurve(a) => cmd_gamma(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("socpd: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
