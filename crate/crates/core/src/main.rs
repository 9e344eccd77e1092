use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pie2d::convert::{convert, emit_json, emit_pie};
use pie2d::lpi::{bisect_parameter, certify, verdict_word, BisectOutcome, LpiOptions, SizeLimits, StabilityReport};
use pie2d::pde::{instantiate, parse_pde};
use pie2d::poly::{parse_rat, Rat};
use pie2d::sdp::{write_sdpa, SdpSettings};
use pie2d::suite;
use pie2d::{Error, Result};

#[derive(Parser)]
#[command(name = "pie2d", version, about = "2D PDE to PIE conversion and LPI stability certificates")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Convert a PDE file to its PIE and print the kernels
    Convert {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "pie")]
        emit: Emit,
        /// value for a {NAME} placeholder, as NAME=VALUE
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
    },
    /// Search for a Lyapunov certificate of exponential stability
    Stability {
        file: PathBuf,
        #[command(flatten)]
        lpi: LpiArgs,
        /// write the SDP in SDPA sparse format and exit
        #[arg(long, num_args = 2, value_names = ["FORMAT", "OUT"])]
        emit: Option<Vec<String>>,
        /// bisect on a placeholder instead of a single run
        #[arg(long, num_args = 4, value_names = ["PARAM", "LO", "HI", "ITERS"])]
        bisect: Option<Vec<String>>,
    },
    /// Bisection on one placeholder of a templated PDE file
    Bisect {
        file: PathBuf,
        param: String,
        lo: f64,
        hi: f64,
        #[arg(long, default_value_t = 12)]
        iters: usize,
        #[command(flatten)]
        lpi: LpiArgs,
    },
    /// Run the randomized oracle suites and print a scoreboard
    Selftest {
        /// instances per suite
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// add a small error to every composition result
        #[arg(long)]
        perturb: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Emit {
    Pie,
    Json,
}

#[derive(Args)]
struct LpiArgs {
    #[arg(short = 'd', long, default_value_t = 1)]
    degree: u32,
    /// strictness margin of P, decimal or p/q
    #[arg(long, default_value = "1e-5")]
    eps: String,
    /// decay margin; defaults to 1e-5 times the domain area
    #[arg(long)]
    del: Option<String>,
    #[arg(long)]
    slack_degree: Option<u32>,
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = SizeLimits::default().max_block)]
    max_block: usize,
    #[arg(long, default_value_t = SizeLimits::default().max_constraints)]
    max_constraints: usize,
    #[arg(short, long)]
    verbose: bool,
}

fn rat_arg(name: &str, s: &str) -> Result<Rat> {
    let v = parse_rat(s).ok_or_else(|| Error::Op(format!("--{name}: cannot read '{s}' as a number")))?;
    if v < Rat::from_integer(0.into()) {
        return Err(Error::Op(format!("--{name} must be nonnegative")));
    }
    Ok(v)
}

impl LpiArgs {
    fn options(&self) -> Result<LpiOptions> {
        Ok(LpiOptions {
            degree: self.degree,
            eps: rat_arg("eps", &self.eps)?,
            del: self.del.as_deref().map(|s| rat_arg("del", s)).transpose()?,
            slack_degree: self.slack_degree,
            limits: SizeLimits { max_block: self.max_block, max_constraints: self.max_constraints },
        })
    }
    fn settings(&self) -> SdpSettings {
        SdpSettings { tol: self.tol, max_iter: self.max_iter, verbose: self.verbose, ..Default::default() }
    }
}

fn split_params(raw: &[String]) -> Result<Vec<(String, String)>> {
    raw.iter()
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::Op(format!("--param expects NAME=VALUE, got '{p}'")))
        })
        .collect()
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Op(format!("{}: {e}", path.display())))
}

fn load(path: &Path, raw: &[String]) -> Result<String> {
    let params = split_params(raw)?;
    let refs: Vec<(&str, &str)> = params.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
    Ok(instantiate(&read(path)?, &refs))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Op(format!("{}: {e}", path.display())))
}

fn code(certified: bool) -> ExitCode {
    ExitCode::from(if certified { 0 } else { 2 })
}

fn cmd_convert(file: &Path, emit: Emit, params: &[String]) -> Result<ExitCode> {
    let pair = convert(&parse_pde(&load(file, params)?)?)?;
    match emit {
        Emit::Pie => print!("{}", emit_pie(&pair)),
        Emit::Json => println!("{}", emit_json(&pair)),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_stability(file: &Path, a: &LpiArgs, emit: Option<&[String]>) -> Result<ExitCode> {
    let pair = convert(&parse_pde(&load(file, &a.params)?)?)?;
    let opts = a.options()?;
    if let Some([fmt, out]) = emit {
        if fmt != "sdpa" {
            return Err(Error::Op(format!("--emit supports only sdpa, got '{fmt}'")));
        }
        let lpi = pie2d::lpi::assemble_lpi(&pair, &opts)?;
        write(Path::new(out), &write_sdpa(&lpi.sdp))?;
        eprintln!("wrote {out}: {} constraints, blocks {:?}", lpi.sdp.m(), lpi.sdp.blocks);
        return Ok(ExitCode::SUCCESS);
    }
    let run = certify(&pair, &opts, &a.settings())?;
    let report = StabilityReport::from_run(&run);
    let v = &run.verdict;
    println!("{} at degree {} (slack degree {:?})", report.verdict, v.degree, v.slack_degree);
    println!("eps {:.3e}  del {:.3e}  zeta {:.6e}  decay bound {:.6e}", v.eps, v.del, v.zeta, v.decay_bound);
    println!(
        "solver {:?} in {} iterations, gap {:.2e}, residual {:.2e}, min eigenvalue {:.2e}",
        run.solution.status, run.solution.iters, run.solution.gap, v.residual, v.min_eig
    );
    if let Some(f) = &v.failing {
        println!("failing: {f}");
    }
    if let Some(p) = &a.report {
        write(p, &serde_json::to_string_pretty(&report).expect("serializable"))?;
    }
    Ok(code(v.certified))
}

fn cmd_bisect(file: &Path, param: &str, lo: f64, hi: f64, iters: usize, a: &LpiArgs) -> Result<ExitCode> {
    let template = load(file, &a.params)?;
    let out: BisectOutcome = bisect_parameter(&template, param, lo, hi, iters, &a.options()?, &a.settings())?;
    for p in &out.probes {
        println!("{param} = {:<22} {:<14} {}", p.value, verdict_word(p.certified), p.note);
    }
    println!("{}", out.message);
    match out.threshold {
        Some(t) => println!("certified threshold {param} = {t} (resolution {:.3e})", out.resolution),
        None => println!("no certified value of {param} in [{lo}, {hi}]"),
    }
    if let Some(path) = &a.report {
        let report = StabilityReport {
            verdict: verdict_word(out.threshold.is_some()),
            eps: pie2d::poly::rat_to_f64(&a.options()?.eps),
            del: a.options()?.del.as_ref().map(pie2d::poly::rat_to_f64).unwrap_or(f64::NAN),
            zeta: f64::NAN,
            decay_bound: f64::NAN,
            degree: a.degree,
            slack_degree: [0, 0],
            solver: None,
            failing: None,
            threshold: out.threshold,
            probes: out.probes.clone(),
        };
        write(path, &serde_json::to_string_pretty(&report).expect("serializable"))?;
    }
    Ok(code(out.threshold.is_some()))
}

fn cmd_selftest(instances: usize, seed: u64, perturb: bool) -> Result<ExitCode> {
    let pies = suite::reference_pies()?;
    let refs: Vec<_> = pies.iter().map(|(n, p)| (*n, p)).collect();
    let mut checks = suite::composition_suite(instances, seed, perturb)?;
    checks.extend(suite::adjoint_suite(instances, seed + 100)?);
    checks.push(suite::inverse_suite(instances, seed + 200, &refs)?);
    checks.extend(suite::t_identity_suite(instances, seed + 300, &refs)?);
    checks.extend(suite::positivity_suite(instances.min(10), seed + 400, &[0, 1, 2])?);
    checks.extend(suite::sdp_suite(instances, seed + 500)?);
    for c in &checks {
        println!("{}", c.line());
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.cmd {
        Cmd::Convert { file, emit, params } => cmd_convert(file, *emit, params),
        Cmd::Stability { file, lpi, emit, bisect } => match bisect.as_deref() {
            Some([param, lo, hi, iters]) => {
                let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Op(format!("--bisect: bad number '{s}'")));
                let it = iters.parse::<usize>().map_err(|_| Error::Op(format!("--bisect: bad count '{iters}'")))?;
                cmd_bisect(file, param, num(lo)?, num(hi)?, it, lpi)
            }
            _ => cmd_stability(file, lpi, emit.as_deref()),
        },
        Cmd::Bisect { file, param, lo, hi, iters, lpi } => cmd_bisect(file, param, *lo, *hi, *iters, lpi),
        Cmd::Selftest { instances, seed, perturb } => cmd_selftest(*instances, *seed, *perturb),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
