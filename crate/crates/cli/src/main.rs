//! `defg`: validate, run and generate double-edge factor graphs, and run
//! Bethe-versus-exact experiments.
//!
//! Exit codes: 0 success, 1 validation failure, 2 hard error while running,
//! 3 I/O or parse error, 4 SPA ran to its iteration limit without converging.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use denfg::bethe::annotate;
use denfg::exact::{exact_marginal, exact_partition_sum, DEFAULT_BUDGET};
use denfg::experiment::{self, ExperimentSpec, Family};
use denfg::gen::{self, QuantumChainSpec, RandomGraphParams};
use denfg::graph::{parse_graph, save_graph, validate_psd, validate_structure, DeNfg};
use denfg::spa::{beliefs, run_spa, Belief, InitMode, SpaConfig};
use denfg::tensor::PSD_TOL;
use denfg::{Error, C64};

const EXIT_INVALID: u8 = 1;
const EXIT_RUN: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "defg", version, about = "Double-edge normal factor graphs: SPA, Bethe partition sum, exact oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a graph file for structural and PSD violations.
    Validate { file: PathBuf },
    /// Run the sum-product algorithm and report the Bethe partition sum.
    Run(RunArgs),
    /// Compare Bethe and exact partition sums over random instances.
    Experiment(ExperimentArgs),
    /// Write a generated graph as JSON.
    Gen(GenArgs),
    /// Render the scatter plot of an experiment CSV.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SpaArgs {
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Weight of the previous message. Defaults to 0, or 0.5 for
    /// permanent-random experiments.
    #[arg(long)]
    damping: Option<f64>,
    /// Initial messages: `uniform`, `delta`, or `seeded:<u64>`.
    #[arg(long, default_value = "uniform", value_parser = parse_init)]
    init: InitMode,
}

impl SpaArgs {
    fn config(&self, default_damping: f64) -> SpaConfig {
        SpaConfig {
            max_iters: self.max_iters,
            conv_tol: self.tol,
            damping: self.damping.unwrap_or(default_damping),
            ..SpaConfig::default()
        }
    }
}

fn parse_init(s: &str) -> Result<InitMode, String> {
    match s {
        "uniform" => Ok(InitMode::Uniform),
        "delta" => Ok(InitMode::KroneckerDelta),
        _ => s
            .strip_prefix("seeded:")
            .and_then(|n| n.parse().ok())
            .map(InitMode::Seeded)
            .ok_or_else(|| format!("expected uniform, delta or seeded:<seed>, got `{s}`")),
    }
}

#[derive(Args)]
struct RunArgs {
    file: PathBuf,
    /// Also compute the exact partition sum and the ratio.
    #[arg(long)]
    exact: bool,
    /// Print per-edge beliefs (and exact marginals with `--exact`).
    #[arg(long)]
    beliefs: bool,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    #[command(flatten)]
    spa: SpaArgs,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(value_parser = parse_family)]
    family: Family,
    /// Defaults to 1000, or 200 for permanent-random.
    #[arg(long)]
    samples: Option<usize>,
    /// Cycle length or permanent size. Defaults to 4, or 5 for permanent-random.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; standard output if omitted.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    /// Fill the wall_time_ms column (makes the CSV non-reproducible).
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    spa: SpaArgs,
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Copy, ValueEnum)]
enum GenFamily {
    Cycle,
    Chord,
    Permanent,
    Quantum,
    Tree,
    Random,
}

#[derive(Args)]
struct GenArgs {
    family: GenFamily,
    /// Cycle length, permanent size, or factor count.
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    q: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Quantum: the fixed Hadamard example instead of a random chain.
    #[arg(long)]
    demo: bool,
    /// Quantum: state dimension.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Quantum: number of measurement outcomes.
    #[arg(long, default_value_t = 2)]
    outcomes: usize,
    /// Random: edges beyond the spanning tree.
    #[arg(long, default_value_t = 1)]
    extra: usize,
    /// Tree and random: largest edge alphabet.
    #[arg(long, default_value_t = 2)]
    max_alphabet: usize,
    /// Destination; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    csv: PathBuf,
    #[arg(long)]
    svg: PathBuf,
    #[arg(long, default_value = "")]
    title: String,
}

/// Failure carrying its exit code.
struct Fail(u8, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io(_) | Error::Json(_) | Error::Csv(_) | Error::Schema { .. } => EXIT_IO,
            Error::Structure(_) | Error::InvalidArgument(_) | Error::NotPsd { .. } | Error::NotHermitian { .. } | Error::Shape(_) => {
                EXIT_INVALID
            }
            _ => EXIT_RUN,
        };
        Fail(code, e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Fail> {
    fs::read_to_string(path).map_err(|e| Fail(EXIT_IO, format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Fail> {
    fs::write(path, text).map_err(|e| Fail(EXIT_IO, format!("{}: {e}", path.display())))
}

fn complex(z: C64) -> String {
    format!("{:.12e} {:+.12e}i", z.re, z.im)
}

fn violations(g: &DeNfg) -> Vec<String> {
    let structural = validate_structure(g);
    let found = if structural.is_empty() { validate_psd(g, PSD_TOL) } else { structural };
    found.iter().map(ToString::to_string).collect()
}

fn cmd_validate(file: &Path) -> Result<u8, Fail> {
    let g = parse_graph(&read(file)?)?;
    let found = violations(&g);
    if found.is_empty() {
        println!("OK: {} factors, {} edges", g.factors().len(), g.edges().len());
        return Ok(0);
    }
    for v in &found {
        println!("{v}");
    }
    Ok(EXIT_INVALID)
}

fn print_belief(label: &str, b: &Belief) {
    match b {
        Belief::Single(p) => {
            let parts: Vec<String> = p.iter().map(|x| format!("{x:.9}")).collect();
            println!("  {label}: [{}]", parts.join(", "));
        }
        Belief::Double(m) => {
            let a = m.shape()[0];
            println!("  {label}:");
            for row in m.data().chunks(a) {
                let parts: Vec<String> = row.iter().map(|z| format!("{:.6}{:+.6}i", z.re, z.im)).collect();
                println!("    [{}]", parts.join(", "));
            }
        }
    }
}

fn cmd_run(args: &RunArgs) -> Result<u8, Fail> {
    let g = parse_graph(&read(&args.file)?)?;
    let found = violations(&g);
    if !found.is_empty() {
        for v in &found {
            eprintln!("{v}");
        }
        return Err(Fail(EXIT_INVALID, "graph is not valid".into()));
    }
    println!("graph: {} factors, {} edges", g.factors().len(), g.edges().len());
    let mut res = run_spa(&g, &args.spa.config(0.0), args.spa.init)?;
    let status = if res.converged { "converged" } else { "not converged" };
    println!("iterations: {} ({status})", res.iterations);
    if let (Some(first), Some(last)) = (res.residuals.first(), res.residuals.last()) {
        println!("residual: first {first:.3e}, last {last:.3e}");
    }
    let breakdown = annotate(&g, &mut res)?;
    println!("Z_f:");
    for (id, z) in &breakdown.z_f {
        println!("  {id}: {}", complex(*z));
    }
    println!("Z_e:");
    for (id, z) in &breakdown.z_e {
        println!("  {id}: {}", complex(*z));
    }
    println!("Z_Bethe: {}", complex(breakdown.z_bethe));
    if args.exact {
        let z = exact_partition_sum(&g, args.budget)?;
        println!("Z: {}", complex(z));
        match experiment::ratio_of(breakdown.z_bethe, z) {
            Some(r) => println!("ratio Z_Bethe/Z: {r:.12e}"),
            None => println!("ratio Z_Bethe/Z: undefined"),
        }
    }
    if args.beliefs {
        println!("beliefs:");
        for (e, b) in g.edges().iter().zip(beliefs(&g, &res.state)?) {
            print_belief(&e.id, &b);
            if args.exact {
                print_belief(&format!("{} (exact)", e.id), &exact_marginal(&g, &e.id, args.budget)?);
            }
        }
    }
    Ok(if res.converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<u8, Fail> {
    let mut spec = ExperimentSpec::new(args.family);
    if let Some(s) = args.samples {
        spec.samples = s;
    }
    if let Some(n) = args.n {
        spec.n = n;
    }
    spec.q = args.q;
    spec.base_seed = args.seed;
    spec.spa = args.spa.config(spec.spa.damping);
    spec.init = args.spa.init;
    spec.budget = args.budget;
    spec.timing = args.timing;
    let records = experiment::run_experiment(&spec)?;
    let csv = experiment::csv_string(&records)?;
    let summary = experiment::summarize(&records);
    match &args.csv {
        Some(path) => {
            write(path, &csv)?;
            println!("{summary}");
        }
        None => {
            print!("{csv}");
            eprintln!("{summary}");
        }
    }
    if let Some(path) = &args.svg {
        write(path, &experiment::render_svg(&records, args.family.name()))?;
    }
    Ok(0)
}

fn cmd_gen(args: &GenArgs) -> Result<u8, Fail> {
    let mut rng = gen::rng(args.seed);
    let g = match args.family {
        GenFamily::Cycle => gen::cycle_denfg(&gen::random_psd_chi2(&mut rng, args.q * args.q), args.n)?,
        GenFamily::Chord => gen::cycle_with_chord_denfg(&mut rng, args.q)?,
        GenFamily::Permanent => {
            if !(1..=8).contains(&args.n) {
                return Err(Fail(EXIT_INVALID, "permanent size must be in 1..=8".into()));
            }
            gen::permanent_denfg(&gen::random_theta_tilde_grid(&mut rng, args.n))?
        }
        GenFamily::Quantum => {
            let spec = if args.demo { QuantumChainSpec::demo() } else { QuantumChainSpec::random(&mut rng, args.d, args.outcomes)? };
            gen::quantum_chain_denfg(&spec)?
        }
        GenFamily::Tree => gen::random_tree_denfg(&mut rng, args.n, args.max_alphabet, 0.3)?,
        GenFamily::Random => gen::random_denfg(
            &mut rng,
            &RandomGraphParams { n_factors: args.n, extra_edges: args.extra, max_alphabet: args.max_alphabet, ..RandomGraphParams::default() },
        )?,
    };
    let text = save_graph(&g);
    match &args.out {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn cmd_plot(args: &PlotArgs) -> Result<u8, Fail> {
    let records = experiment::read_csv(read(&args.csv)?.as_bytes())?;
    write(&args.svg, &experiment::render_svg(&records, &args.title))?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_IO } else { 0 });
        }
    };
    let outcome = match &cli.command {
        Command::Validate { file } => cmd_validate(file),
        Command::Run(a) => cmd_run(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Fail(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_flag_parsing() {
        assert_eq!(parse_init("uniform"), Ok(InitMode::Uniform));
        assert_eq!(parse_init("delta"), Ok(InitMode::KroneckerDelta));
        assert_eq!(parse_init("seeded:42"), Ok(InitMode::Seeded(42)));
        assert!(parse_init("seeded:x").is_err());
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(Fail::from(Error::Schema { path: "p".into(), message: "m".into() }).0, EXIT_IO);
        assert_eq!(Fail::from(Error::Structure(vec![])).0, EXIT_INVALID);
        assert_eq!(Fail::from(Error::VanishingEdgeSum { edge: "e".into(), magnitude: 0.0 }).0, EXIT_RUN);
    }
}
