//! `ancosa`: run network-coding simulations and solve storage allocations.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 a simulation
//! finished without every sink decoding.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ancosa::allocation::{
    cutset_bound, enumerate_allocations, even_allocation, failure_probability, format_probability,
    optimal_allocation, regen_points, sweep_reliability, Probability, Rational, ReliabilityGrid,
    StorageParams, RELIABILITY_CSV_HEADER,
};
use ancosa::gf::Field;
use ancosa::netsim::{self, RunResult, SimConfig, Strategy, RESULT_CSV_HEADER, TRACE_CSV_HEADER};
use ancosa::oracle;
use ancosa::rlnc::CodingGroup;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ancosa", version, about = "Adaptive network coding simulator and storage allocation solver")]
struct Cli {
    /// Worker threads for sweeps and allocation search (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation from a JSON config.
    Simulate(SimulateArgs),
    /// Run every strategy over several group sizes and seeds.
    Sweep(SweepArgs),
    /// Find the allocation of n parts over N centers with the lowest failure probability.
    Allocate(AllocateArgs),
    /// List every partition of n into N positive parts.
    Partitions { n: u32, centers: u32 },
    /// Print the MSR and MBR points of a regenerating code.
    RegenParams(RegenArgs),
}

#[derive(Args)]
struct RunOverrides {
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's strategy.
    #[arg(long)]
    strategy: Option<Strategy>,
}

#[derive(Args)]
struct SimulateArgs {
    config: PathBuf,
    #[command(flatten)]
    overrides: RunOverrides,
    /// Carry this file's bytes instead of random data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Result CSV path (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Per-round trace CSV path.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// JSON summary path (default: stdout).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    #[command(flatten)]
    overrides: RunOverrides,
    /// Comma-separated group sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [16, 32, 64, 128])]
    n_values: Vec<usize>,
    /// Seeds per group size.
    #[arg(long, default_value_t = 30)]
    seeds: usize,
    /// CSV path (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct AllocateArgs {
    /// Coded parts; comma-separated values form a grid.
    n: String,
    /// Parts needed to recover the data.
    k: String,
    /// Data centers.
    centers: String,
    /// Per-center failure probability, e.g. 0.01 or 1/100.
    p: String,
    /// Solve by exhaustive search instead (N <= 24).
    #[arg(long)]
    oracle: bool,
    /// Write the CSV rows here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RegenArgs {
    /// File size B.
    b: u64,
    k: u64,
    /// Helpers contacted during repair.
    d: u64,
    /// Check the cut-set bound for this per-node storage.
    #[arg(long, requires = "beta")]
    alpha: Option<String>,
    /// Symbols downloaded from each helper.
    #[arg(long, requires = "alpha")]
    beta: Option<String>,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Dnf,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Config(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Sweep(args) => sweep(args),
        Command::Allocate(args) => allocate(args),
        Command::Partitions { n, centers } => partitions(n, centers),
        Command::RegenParams(args) => regen(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Dnf) => ExitCode::from(2),
    }
}

fn emit(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Config(format!("{}: {e}", p.display()))),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_config(path: &Path, overrides: &RunOverrides) -> Result<SimConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = SimConfig::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(strategy) = overrides.strategy {
        cfg.strategy = strategy;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn simulate(args: SimulateArgs) -> Outcome {
    let mut cfg = load_config(&args.config, &args.overrides)?;
    let result: RunResult = match &args.data {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            let group = CodingGroup::from_bytes(Field::new(cfg.m)?, &bytes, cfg.n)?;
            cfg.payload_len = group.payload_len();
            cfg.data_len = Some(bytes.len());
            netsim::run_group(&cfg, group)?
        }
        None => netsim::run(&cfg)?,
    };
    emit(
        args.output.as_deref(),
        &format!("{RESULT_CSV_HEADER}\n{}\n", result.csv_line(None)),
    )?;
    if let Some(path) = &args.trace {
        let mut text = format!("{TRACE_CSV_HEADER}\n");
        for row in &result.trace {
            text.push_str(&row.csv_line());
            text.push('\n');
        }
        emit(Some(path), &text)?;
    }
    let summary = serde_json::json!({
        "efficiency": result.efficiency(),
        "rounds": result.rounds,
        "decoded_sinks": result.decoded_sinks,
        "sinks": result.sinks,
        "total_sent": result.total_sent,
        "dnf": result.dnf,
        "config": cfg,
    });
    emit(args.summary.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&summary)?))?;
    if result.dnf {
        eprintln!("did not finish: {}/{} sinks decoded", result.decoded_sinks, result.sinks);
        return Err(Failure::Dnf);
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Outcome {
    let cfg = load_config(&args.config, &args.overrides)?;
    let strategies: Vec<Strategy> = match args.overrides.strategy {
        // normalization needs the baseline alongside
        Some(s) if s != Strategy::NoCodingRetransmit => vec![Strategy::NoCodingRetransmit, s],
        Some(s) => vec![s],
        None => Strategy::ALL.to_vec(),
    };
    let rows = netsim::sweep(&cfg, &args.n_values, args.seeds, &strategies)?;
    let mut text = format!("{RESULT_CSV_HEADER}\n");
    for row in &rows {
        text.push_str(&row.csv_line());
        text.push('\n');
        if let Err(e) = &row.outcome {
            eprintln!("n={} seed={} {}: {e}", row.n, row.seed, row.strategy);
        }
    }
    emit(args.output.as_deref(), &text)
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| Failure::Config(format!("bad {what} {s:?}: {e}"))))
        .collect()
}

fn allocate(args: AllocateArgs) -> Outcome {
    let grid = ReliabilityGrid {
        n: parse_list(&args.n, "n")?,
        k: parse_list(&args.k, "k")?,
        centers: parse_list(&args.centers, "N")?,
        p: parse_list::<Probability>(&args.p, "p")?,
    };
    let single = grid.n.len() == 1 && grid.k.len() == 1 && grid.centers.len() == 1 && grid.p.len() == 1;
    if args.oracle {
        if !single {
            return Err(Failure::Config("--oracle takes a single instance".into()));
        }
        let params = StorageParams::new(grid.n[0], grid.k[0], grid.centers[0], grid.p[0].clone())
            .map_err(allocation_failure)?;
        if params.centers > 24 {
            return Err(Failure::Config("--oracle is limited to N <= 24".into()));
        }
        let (alloc, p_osa) = oracle::optimal_allocation(&params).map_err(allocation_failure)?;
        println!("{alloc}  {}", format_probability(&p_osa));
        let even = even_allocation(params.n, params.centers)?;
        let p_even = oracle::failure_probability(even.parts(), params.n, params.k, &params.p);
        return write_rows(
            args.output.as_deref(),
            &[format!(
                "{},{},{},{},{},{},{alloc}",
                params.n,
                params.k,
                params.centers,
                params.p,
                format_probability(&p_even),
                format_probability(&p_osa)
            )],
        );
    }
    if single {
        let params = StorageParams::new(grid.n[0], grid.k[0], grid.centers[0], grid.p[0].clone())
            .map_err(allocation_failure)?;
        let (alloc, p_osa) = optimal_allocation(&params).map_err(allocation_failure)?;
        println!("{alloc}  {}", format_probability(&p_osa));
        if args.output.is_some() {
            let p_even = failure_probability(&even_allocation(params.n, params.centers)?, &params)?;
            return write_rows(
                args.output.as_deref(),
                &[format!(
                    "{},{},{},{},{},{},{alloc}",
                    params.n,
                    params.k,
                    params.centers,
                    params.p,
                    format_probability(&p_even),
                    format_probability(&p_osa)
                )],
            );
        }
        return Ok(());
    }
    let mut lines = Vec::new();
    let mut failed = false;
    for cell in sweep_reliability(&grid)? {
        match cell {
            Ok(row) => lines.push(row.csv_line()),
            Err(((n, k, c, p), e)) => {
                failed = true;
                eprintln!("n={n} k={k} N={c} p={p}: {}", allocation_failure(e).message());
            }
        }
    }
    match args.output {
        Some(_) => write_rows(args.output.as_deref(), &lines)?,
        None => {
            println!("{RELIABILITY_CSV_HEADER}");
            for l in &lines {
                println!("{l}");
            }
        }
    }
    if failed {
        return Err(Failure::Config("some grid cells have no valid allocation".into()));
    }
    Ok(())
}

fn write_rows(path: Option<&Path>, lines: &[String]) -> Outcome {
    if path.is_none() {
        return Ok(());
    }
    let mut text = format!("{RELIABILITY_CSV_HEADER}\n");
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    emit(path, &text)
}

fn allocation_failure(e: ancosa::allocation::AllocationError) -> Failure {
    use ancosa::allocation::AllocationError;
    match e {
        AllocationError::NoValidAllocation { n, centers } => {
            Failure::Config(format!("no valid allocation: N = {centers} exceeds n = {n}"))
        }
        other => Failure::Config(other.to_string()),
    }
}

impl Failure {
    fn message(&self) -> String {
        match self {
            Failure::Config(m) => m.clone(),
            Failure::Dnf => "did not finish".into(),
        }
    }
}

fn partitions(n: u32, centers: u32) -> Outcome {
    let all = enumerate_allocations(n, centers).map_err(allocation_failure)?;
    let mut out = String::new();
    for a in &all {
        out.push_str(&a.to_string());
        out.push('\n');
    }
    out.push_str(&format!("count={}\n", all.len()));
    emit(None, &out)
}

fn parse_rational(s: &str) -> Result<Rational, Failure> {
    let bad = || Failure::Config(format!("expected an integer or a/b fraction, got {s:?}"));
    match s.split_once('/') {
        Some((a, b)) => {
            let (a, b): (u128, u128) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if b == 0 {
                return Err(bad());
            }
            Ok(Rational::new(a, b))
        }
        None => Ok(Rational::from_integer(s.trim().parse().map_err(|_| bad())?)),
    }
}

fn regen(args: RegenArgs) -> Outcome {
    let (msr, mbr) = regen_points(args.b, args.k, args.d)?;
    println!("MSR alpha={} gamma={}", msr.alpha, msr.gamma);
    println!("MBR alpha={} gamma={}", mbr.alpha, mbr.gamma);
    if let (Some(alpha), Some(beta)) = (&args.alpha, &args.beta) {
        let (alpha, beta) = (parse_rational(alpha)?, parse_rational(beta)?);
        let bound = cutset_bound(args.k, args.d, alpha, beta);
        let ok = Rational::from_integer(args.b as u128) <= bound;
        println!("cutset bound={bound} B={} ok={ok}", args.b);
    }
    Ok(())
}
