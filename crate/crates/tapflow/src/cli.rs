//! Command-line interface: validate, ybus, check-derivs, pf, and opf.
//!
//! Exit codes: 0 success, 1 domain error (parse/validation), 2 numeric
//! failure (divergence or a failed derivative suite), 64 usage error.

use crate::admittance::{branch_admittances, build_system, TapState};
use crate::case::{parse_case, validate_case, Case, CaseFormat};
use crate::derivcheck::{check_case, CheckConfig};
use crate::line_flow::flow_constraints;
use crate::model::{to_internal, InternalModel};
use crate::newton::{newton_power_flow, NewtonOptions};
use crate::opf::{solve_opf, OpfOptions, OpfProblem, SolveResult, SolveStatus};
use crate::variables::VariableVector;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::PathBuf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Mpc,
}

#[derive(Debug, Parser)]
#[command(name = "tapflow", version, about = "AC power flow and tap-adjusting OPF with verified analytic derivatives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Case file path.
    casefile: PathBuf,
    /// Input format.
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
    /// Emit a machine-readable JSON document instead of tables.
    #[arg(long)]
    json: bool,
    /// Suppress warnings.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check every case invariant and print the violation report.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Print the bus admittance matrix as triplets (row col re im).
    Ybus {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the tap ratio of branch K as K=V (repeatable).
        #[arg(long = "tau", value_parser = parse_assignment)]
        tau: Vec<(usize, f64)>,
        /// Override the phase shift (radians) of branch K as K=V (repeatable).
        #[arg(long = "theta", value_parser = parse_assignment)]
        theta: Vec<(usize, f64)>,
    },
    /// Run the randomized finite-difference suites and report per-block errors.
    CheckDerivs {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Newton power flow at fixed taps.
    Pf {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 20)]
        max_iter: usize,
    },
    /// Interior-point optimal power flow over the extended variable vector.
    Opf {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 150)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Freeze taps at their case values instead of optimizing them.
        #[arg(long)]
        fixed_taps: bool,
    },
}

fn parse_assignment(s: &str) -> Result<(usize, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected K=V, got {:?}", s))?;
    Ok((
        k.trim().parse().map_err(|e| format!("bad branch index {:?}: {}", k, e))?,
        v.trim().parse().map_err(|e| format!("bad value {:?}: {}", v, e))?,
    ))
}

pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            return code;
        }
    };

    match cli.command {
        Command::Validate { common } => with_case(&common, |case| cmd_validate(case, &common)),
        Command::Ybus { common, tau, theta } => {
            with_case(&common, |case| cmd_ybus(case, &tau, &theta, &common))
        }
        Command::CheckDerivs { common, seed, trials } => {
            with_case(&common, |case| cmd_check_derivs(case, seed, trials, &common))
        }
        Command::Pf { common, tol, max_iter } => {
            with_case(&common, |case| cmd_pf(case, tol, max_iter, &common))
        }
        Command::Opf {
            common,
            max_iter,
            tol,
            fixed_taps,
        } => with_case(&common, |case| cmd_opf(case, max_iter, tol, fixed_taps, &common)),
    }
}

/// Read and parse the case file, mapping errors to exit 1.
fn with_case<F>(common: &CommonArgs, f: F) -> i32
where
    F: FnOnce(&Case) -> i32,
{
    let text = match std::fs::read_to_string(&common.casefile) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {}", common.casefile.display(), e);
            return EXIT_DOMAIN;
        }
    };
    let format = match common.format {
        FormatArg::Json => CaseFormat::Json,
        FormatArg::Mpc => CaseFormat::MpcTable,
    };
    let parsed = match parse_case(&text, format) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}: {}", common.casefile.display(), e);
            return EXIT_DOMAIN;
        }
    };
    if !common.quiet {
        for w in &parsed.warnings {
            eprintln!("warning: {}", w);
        }
    }
    f(&parsed.case)
}

fn internalize(case: &Case) -> Result<InternalModel, i32> {
    to_internal(case).map_err(|e| {
        eprintln!("error: {}", e);
        EXIT_DOMAIN
    })
}

#[derive(Serialize)]
struct ValidateDoc<'a> {
    valid: bool,
    issues: &'a [crate::case::ValidationIssue],
}

fn cmd_validate(case: &Case, common: &CommonArgs) -> i32 {
    let report = validate_case(case);
    if common.json {
        let doc = ValidateDoc {
            valid: report.is_empty(),
            issues: &report.issues,
        };
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else if report.is_empty() {
        if !common.quiet {
            println!("ok");
        }
    } else {
        print!("{}", report);
    }
    if report.is_empty() {
        EXIT_OK
    } else {
        EXIT_DOMAIN
    }
}

#[derive(Serialize)]
struct YbusDoc {
    nb: usize,
    triplets: Vec<(usize, usize, f64, f64)>,
}

fn cmd_ybus(case: &Case, tau: &[(usize, f64)], theta: &[(usize, f64)], common: &CommonArgs) -> i32 {
    let model = match internalize(case) {
        Ok(m) => m,
        Err(code) => return code,
    };
    let mut taps = TapState::nominal(&model);
    for &(k, v) in tau {
        if k >= model.nl {
            eprintln!("error: --tau index {} out of range ({} branches)", k, model.nl);
            return EXIT_DOMAIN;
        }
        taps.tau[k] = v;
    }
    for &(k, v) in theta {
        if k >= model.nl {
            eprintln!("error: --theta index {} out of range ({} branches)", k, model.nl);
            return EXIT_DOMAIN;
        }
        taps.theta[k] = v;
    }
    if taps.tau.iter().any(|&t| t <= 0.0) {
        eprintln!("error: tap ratios must be positive");
        return EXIT_DOMAIN;
    }
    let sys = build_system(&model, &branch_admittances(&model, &taps));
    let mut triplets: Vec<_> = sys.ybus.triplets().collect();
    triplets.sort_by_key(|&(r, c, _)| (r, c));

    if common.json {
        let doc = YbusDoc {
            nb: model.nb,
            triplets: triplets.iter().map(|&(r, c, v)| (r, c, v.re, v.im)).collect(),
        };
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        for (r, c, v) in triplets {
            println!("{} {} {:.11e} {:.11e}", r, c, v.re, v.im);
        }
    }
    EXIT_OK
}

#[derive(Serialize)]
struct CheckDoc {
    seed: u64,
    trials: usize,
    pass: bool,
    blocks: Vec<crate::fd::FDReport>,
}

fn cmd_check_derivs(case: &Case, seed: u64, trials: usize, common: &CommonArgs) -> i32 {
    let model = match internalize(case) {
        Ok(m) => m,
        Err(code) => return code,
    };
    if trials == 0 {
        eprintln!("error: --trials must be at least 1");
        return EXIT_USAGE;
    }
    let cfg = CheckConfig {
        trials,
        ..CheckConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reports = match check_case(&model, &mut rng, &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {}", e);
            return EXIT_NUMERIC;
        }
    };
    let pass = reports.iter().all(|r| r.pass);

    if common.json {
        let doc = CheckDoc {
            seed,
            trials,
            pass,
            blocks: reports,
        };
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        println!("{:<26} {:>12} {:>12}  {}", "block", "max rel err", "max abs err", "status");
        for r in &reports {
            println!(
                "{:<26} {:>12.3e} {:>12.3e}  {}",
                r.block_name,
                r.max_rel_err,
                r.max_abs_err,
                if r.pass { "pass" } else { "FAIL" }
            );
        }
        println!("{}", if pass { "all blocks pass" } else { "FAILURES PRESENT" });
    }
    if pass {
        EXIT_OK
    } else {
        EXIT_NUMERIC
    }
}

#[derive(Serialize)]
struct BusRow {
    bus: i64,
    vm: f64,
    va_deg: f64,
}

#[derive(Serialize)]
struct GenRow {
    gen: usize,
    bus: i64,
    pg_mw: f64,
    qg_mvar: f64,
}

#[derive(Serialize)]
struct BranchRow {
    branch: usize,
    fbus: i64,
    tbus: i64,
    tau: f64,
    theta_deg: f64,
    i_from: f64,
    i_to: f64,
    binding: bool,
}

#[derive(Serialize)]
struct SolutionDoc {
    status: String,
    iterations: usize,
    objective: f64,
    feas_residual: f64,
    bus: Vec<BusRow>,
    gen: Vec<GenRow>,
    branch: Vec<BranchRow>,
}

fn solution_doc(model: &InternalModel, result: &SolveResult) -> SolutionDoc {
    let x = &result.x;
    let taps = x.tap_state(model);
    let eval = flow_constraints(x, model);
    SolutionDoc {
        status: format!("{:?}", result.status),
        iterations: result.iterations,
        objective: result.objective,
        feas_residual: result.feas_residual,
        bus: (0..model.nb)
            .map(|i| BusRow {
                bus: model.bus_id[i],
                vm: x.vm[i],
                va_deg: x.va[i].to_degrees(),
            })
            .collect(),
        gen: (0..model.ng)
            .map(|g| GenRow {
                gen: g,
                bus: model.bus_id[model.gen_bus[g]],
                pg_mw: x.pg[g] * model.base_mva,
                qg_mvar: x.qg[g] * model.base_mva,
            })
            .collect(),
        branch: (0..model.nl)
            .map(|k| BranchRow {
                branch: k,
                fbus: model.bus_id[model.fbus[k]],
                tbus: model.bus_id[model.tbus[k]],
                tau: taps.tau[k],
                theta_deg: taps.theta[k].to_degrees(),
                i_from: eval.i_f[k].norm(),
                i_to: eval.i_t[k].norm(),
                binding: model.imax[k] > 0.0
                    && (eval.i_f[k].norm() >= model.imax[k] - 1e-6
                        || eval.i_t[k].norm() >= model.imax[k] - 1e-6),
            })
            .collect(),
    }
}

fn print_solution(doc: &SolutionDoc) {
    println!("status: {}   iterations: {}   objective: {:.8}", doc.status, doc.iterations, doc.objective);
    println!("\n  bus      Vm [pu]    Va [deg]");
    for b in &doc.bus {
        println!("{:>5} {:>11.6} {:>11.6}", b.bus, b.vm, b.va_deg);
    }
    println!("\n  gen  bus     Pg [MW]   Qg [MVAr]");
    for g in &doc.gen {
        println!("{:>5} {:>4} {:>11.4} {:>11.4}", g.gen, g.bus, g.pg_mw, g.qg_mvar);
    }
    println!("\n  brc  from   to      tau   theta[deg]   |If| [pu]   |It| [pu]");
    for br in &doc.branch {
        println!(
            "{:>5} {:>5} {:>4} {:>8.5} {:>11.5} {:>11.6} {:>11.6} {}",
            br.branch,
            br.fbus,
            br.tbus,
            br.tau,
            br.theta_deg,
            br.i_from,
            br.i_to,
            if br.binding { "*" } else { "" }
        );
    }
}

fn cmd_pf(case: &Case, tol: f64, max_iter: usize, common: &CommonArgs) -> i32 {
    let model = match internalize(case) {
        Ok(m) => m,
        Err(code) => return code,
    };
    let start = VariableVector::from_case_start(&model);
    let opts = NewtonOptions { tol, max_iter };
    match newton_power_flow(&model, &TapState::nominal(&model), &start, &opts) {
        Ok(result) => {
            let doc = solution_doc(&model, &result);
            if common.json {
                println!("{}", serde_json::to_string_pretty(&doc).unwrap());
            } else {
                print_solution(&doc);
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e);
            EXIT_NUMERIC
        }
    }
}

fn cmd_opf(case: &Case, max_iter: usize, tol: f64, fixed_taps: bool, common: &CommonArgs) -> i32 {
    let model = match internalize(case) {
        Ok(m) => m,
        Err(code) => return code,
    };
    let problem = if fixed_taps {
        let taps = TapState::nominal(&model);
        OpfProblem::with_fixed_taps(model.clone(), &taps)
    } else {
        OpfProblem::new(model.clone())
    };
    let opts = OpfOptions {
        max_iter,
        tol,
        verbose: false,
    };
    let result = solve_opf(&problem, &opts);
    let doc = solution_doc(&model, &result);
    if common.json {
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        print_solution(&doc);
    }
    match result.status {
        SolveStatus::Converged => EXIT_OK,
        _ => {
            eprintln!("error: OPF did not converge ({:?})", result.status);
            EXIT_NUMERIC
        }
    }
}
