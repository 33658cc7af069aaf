//! Command-line front end: every subcommand is a thin adapter over `ising_lasso`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ising_lasso::bethe::{rr_constants, theory_report};
use ising_lasso::experiment::{calibrate_kappa, run_sweep, ExperimentConfig};
use ising_lasso::graph::{
    assign_couplings, generate_grid_periodic, generate_random_regular, generate_random_tree, generate_regular_tree,
    generate_star, star_degree_linear, star_degree_log, CouplingScheme, SignedGraph,
};
use ising_lasso::rng::derive_seed;
use ising_lasso::sampler::{gibbs_sample, magnetization_alerts, SampleMatrix, SamplerConfig};
use ising_lasso::solvers::{
    extract_signed_neighborhood, recover_graph, LambdaRule, NeighborhoodProblem, SolverConfig, SolverKind,
};
use ising_lasso::witness::{
    construct_witness, construct_witness_population, probe_to_csv, tail_rate_probe, CMinSource, ProbeConfig,
    WitnessOptions,
};
use ising_lasso::{Error, Result};
use serde_json::{json, Value};

const CONVENTIONS: &str = "\
Conventions:
  Spins are ±1 and P(x) ∝ exp(Σ_{(r,t) ∈ E} θ_rt x_r x_t), each edge counted once,
  so on a tree the edge correlation is E[x_r x_t] = tanh θ_rt.
  All logarithms are natural: λ = κ·√(ln p / n) and n = round(β·factor·d·ln p).";

#[derive(Parser)]
#[command(name = "ising-lasso", version, about = "Signed edge recovery for Ising models", after_help = CONVENTIONS)]
struct Cli {
    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long, global = true, env = "ISING_LASSO_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a graph with couplings and write it as JSON.
    #[command(after_help = CONVENTIONS)]
    Graph(GraphArgs),
    /// Draw Gibbs samples from a graph.
    #[command(after_help = CONVENTIONS)]
    Sample(SampleArgs),
    /// Solve the neighbourhood regression at one node or at every node.
    #[command(after_help = CONVENTIONS)]
    Solve(SolveArgs),
    /// Build a primal-dual witness certificate, or run the noise tail probe.
    #[command(after_help = CONVENTIONS)]
    Witness(WitnessArgs),
    /// Closed-form population quantities for regular trees or a given tree.
    #[command(after_help = CONVENTIONS)]
    Theory(TheoryArgs),
    /// Run a success-probability sweep from a JSON config.
    #[command(after_help = CONVENTIONS)]
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    /// Random d-regular graph.
    Rr,
    /// Periodic square grid; p must be a perfect square.
    Grid,
    /// Star with hub degree ⌈0.1 p⌉.
    StarLinear,
    /// Star with hub degree ⌈ln p⌉.
    StarLog,
    /// Star with hub degree `--degree`.
    Star,
    /// Tree whose internal vertices all have degree `--degree`.
    Tree,
    /// Uniform random tree with maximum degree `--degree`.
    RandomTree,
}

#[derive(Clone, Copy, ValueEnum)]
enum CouplingArg {
    /// Every edge gets `+strength`.
    Uniform,
    /// Every edge gets `±strength` with fair random signs.
    Mixed,
    /// Every edge gets `strength/√d`.
    DegreeScaled,
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 3)]
    degree: usize,
    /// Coupling scheme; omit for a bare topology.
    #[arg(long, value_enum, requires = "strength")]
    coupling: Option<CouplingArg>,
    /// θ0 for uniform and mixed couplings, the amplitude for degree-scaled.
    #[arg(long)]
    strength: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleFormat {
    Text,
    Binary,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = SamplerConfig::default().burn_in_sweeps)]
    burn_in: usize,
    #[arg(long, default_value_t = SamplerConfig::default().thinning_sweeps)]
    thinning: usize,
    #[arg(long, value_enum, default_value_t = SampleFormat::Text)]
    format: SampleFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Samples in text or binary format (detected automatically).
    #[arg(long)]
    samples: PathBuf,
    /// Node to regress; omit with `--all`.
    #[arg(long, required_unless_present = "all", conflicts_with = "all")]
    node: Option<usize>,
    /// Solve every node and report the estimated signed neighbourhoods.
    #[arg(long)]
    all: bool,
    #[arg(long, required_unless_present = "kappa", conflicts_with = "kappa")]
    lambda: Option<f64>,
    /// Use λ = κ √(ln p / n).
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, default_value = "lasso")]
    solver: SolverKind,
    #[arg(long, default_value_t = SolverConfig::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = SolverConfig::default().max_iters)]
    max_iters: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WitnessArgs {
    /// Tree with couplings, as written by `graph`.
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 0)]
    node: usize,
    /// Samples for the certificate; omit with `--population` or `--tail-probe`.
    #[arg(long, conflicts_with_all = ["population", "tail_probe"])]
    samples: Option<PathBuf>,
    /// Certify the population problem (exact tree moments, so W = 0).
    #[arg(long, conflicts_with = "tail_probe")]
    population: bool,
    #[arg(long, required_unless_present = "tail_probe")]
    lambda: Option<f64>,
    /// Use this C_min in the ℓ2 bound instead of the measured one.
    #[arg(long)]
    c_min: Option<f64>,
    /// Estimate P((2 − α)/λ ‖W‖_∞ ≥ α/2) over a grid of sample sizes; writes CSV.
    #[arg(long)]
    tail_probe: bool,
    /// Comma-separated sample sizes for the probe.
    #[arg(long, value_delimiter = ',', requires = "tail_probe")]
    n_grid: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    c: f64,
    #[arg(long, default_value_t = 400)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryArgs {
    /// Regular-tree constants, given as `d=<degree> theta0=<coupling>`.
    #[arg(long, num_args = 2, value_names = ["d=D", "theta0=T"], conflicts_with = "graph", required_unless_present = "graph")]
    rr_constants: Option<Vec<String>>,
    /// Full report for a tree with couplings.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Also evaluate the minimum-signal threshold at this λ.
    #[arg(long, requires = "graph")]
    lambda: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory for `curves.csv`, `manifest.json` and `trials.json`.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Calibrate κ over these comma-separated candidates before the sweep.
    #[arg(long, value_delimiter = ',')]
    calibrate: Vec<f64>,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read(path)?).map_err(|_| Error::Parse(format!("{} is not UTF-8", path.display())))
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))),
        None => Ok(std::io::stdout().write_all(bytes)?),
    }
}

fn write_json(out: Option<&Path>, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_output(out, text.as_bytes())
}

fn load_graph(path: &Path) -> Result<SignedGraph> {
    SignedGraph::from_json(&read_text(path)?)
}

fn load_samples(path: &Path) -> Result<SampleMatrix> {
    SampleMatrix::read_any(read(path)?.as_slice())
}

fn graph_cmd(a: GraphArgs) -> Result<()> {
    let topology_seed = derive_seed(a.seed, &[0]);
    let topology = match a.family {
        FamilyArg::Rr => generate_random_regular(a.p, a.degree, topology_seed)?,
        FamilyArg::Grid => {
            let side = (a.p as f64).sqrt().round() as usize;
            if side * side != a.p {
                return Err(Error::InvalidParameter(format!("grid needs p = L² (got {})", a.p)));
            }
            generate_grid_periodic(side, side)?
        }
        FamilyArg::StarLinear => generate_star(a.p, star_degree_linear(a.p))?,
        FamilyArg::StarLog => generate_star(a.p, star_degree_log(a.p))?,
        FamilyArg::Star => generate_star(a.p, a.degree)?,
        FamilyArg::Tree => generate_regular_tree(a.p, a.degree, topology_seed)?,
        FamilyArg::RandomTree => generate_random_tree(a.p, a.degree, topology_seed)?,
    };
    let graph = match (a.coupling, a.strength) {
        (Some(scheme), Some(s)) => {
            let scheme = match scheme {
                CouplingArg::Uniform => CouplingScheme::UniformPositive { theta0: s },
                CouplingArg::Mixed => CouplingScheme::MixedSign { theta0: s },
                CouplingArg::DegreeScaled => CouplingScheme::DegreeScaled { amplitude: s },
            };
            assign_couplings(topology, scheme, derive_seed(a.seed, &[1]))?
        }
        _ => topology,
    };
    let mut text = graph.to_json();
    text.push('\n');
    write_output(a.out.as_deref(), text.as_bytes())
}

fn sample_cmd(a: SampleArgs) -> Result<()> {
    let graph = load_graph(&a.graph)?;
    let config = SamplerConfig { burn_in_sweeps: a.burn_in, thinning_sweeps: a.thinning, seed: a.seed };
    let samples = gibbs_sample(&graph, a.n, config)?;
    let alerts = magnetization_alerts(&samples);
    if !alerts.is_empty() {
        eprintln!("{}", json!({ "warning": "magnetization", "spins": alerts }));
    }
    let bytes = match a.format {
        SampleFormat::Text => samples.to_text().into_bytes(),
        SampleFormat::Binary => samples.to_binary()?,
    };
    write_output(a.out.as_deref(), &bytes)
}

fn solve_cmd(a: SolveArgs) -> Result<()> {
    let samples = load_samples(&a.samples)?;
    let config = SolverConfig { tol: a.tol, max_iters: a.max_iters, ..SolverConfig::default() };
    let rule = match (a.lambda, a.kappa) {
        (Some(lambda), _) => LambdaRule::Fixed { lambda },
        (None, Some(kappa)) => LambdaRule::Scaled { kappa },
        (None, None) => unreachable!("clap requires one of --lambda and --kappa"),
    };
    if a.all {
        let estimate = recover_graph(&samples, rule, a.solver, &config)?;
        return write_json(a.out.as_deref(), &estimate);
    }
    let r = a.node.expect("clap requires --node without --all");
    let lambda = rule.lambda(samples.n(), samples.p());
    let problem = NeighborhoodProblem::from_samples(&samples, r, lambda)?;
    let solution = a.solver.solve(&problem, &config)?;
    let mut value: Value = serde_json::from_str(&solution.to_dump_json())?;
    value["solver"] = json!(a.solver.name());
    value["predictors"] = json!(solution.predictors);
    value["neighbors"] = serde_json::to_value(extract_signed_neighborhood(&solution).neighbors)?;
    write_json(a.out.as_deref(), &value)
}

fn witness_cmd(a: WitnessArgs) -> Result<()> {
    let graph = load_graph(&a.graph)?;
    if a.tail_probe {
        if a.n_grid.is_empty() {
            return Err(Error::InvalidParameter("--n-grid must list at least one sample size".into()));
        }
        let config = ProbeConfig { r: a.node, c: a.c, trials: a.trials, sampler: SamplerConfig::with_seed(a.seed) };
        let rows = tail_rate_probe(&graph, &a.n_grid, &config)?;
        return write_output(a.out.as_deref(), probe_to_csv(&rows)?.as_bytes());
    }
    let lambda = a.lambda.expect("clap requires --lambda without --tail-probe");
    let options = WitnessOptions {
        c_min: a.c_min.map_or(CMinSource::Measured, |value| CMinSource::Injected { value }),
        solver: SolverConfig::default(),
    };
    let cert = match (&a.samples, a.population) {
        (Some(path), _) => construct_witness(&load_samples(path)?, &graph, a.node, lambda, &options)?,
        (None, true) => construct_witness_population(&graph, a.node, lambda, &options)?,
        (None, false) => {
            return Err(Error::InvalidParameter("give --samples or --population".into()));
        }
    };
    write_json(a.out.as_deref(), &cert.to_json_value())
}

fn parse_rr_pair(items: &[String]) -> Result<(usize, f64)> {
    let (mut d, mut theta0) = (None, None);
    for item in items {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got {item:?}")))?;
        let bad = |_| Error::InvalidParameter(format!("cannot parse {item:?}"));
        match key {
            "d" => d = Some(value.parse::<usize>().map_err(|e| bad(e.to_string()))?),
            "theta0" => theta0 = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
            _ => return Err(Error::InvalidParameter(format!("unknown key {key:?}; expected d or theta0"))),
        }
    }
    match (d, theta0) {
        (Some(d), Some(t)) => Ok((d, t)),
        _ => Err(Error::InvalidParameter("--rr-constants needs both d=<degree> and theta0=<coupling>".into())),
    }
}

fn theory_cmd(a: TheoryArgs) -> Result<()> {
    if let Some(items) = &a.rr_constants {
        let (d, theta0) = parse_rr_pair(items)?;
        return write_json(a.out.as_deref(), &rr_constants(d, theta0)?);
    }
    let path = a.graph.as_deref().expect("clap requires --graph without --rr-constants");
    write_json(a.out.as_deref(), &theory_report(&load_graph(path)?, a.lambda)?)
}

fn experiment_cmd(a: ExperimentArgs, workers: Option<usize>) -> Result<()> {
    let mut config = ExperimentConfig::from_json(&read_text(&a.config)?)?;
    if let Some(seed) = a.seed {
        config.master_seed = seed;
    }
    if config.workers.is_none() {
        config.workers = workers;
    }
    fs::create_dir_all(&a.out_dir)?;
    if !a.calibrate.is_empty() {
        let mut reports = Vec::new();
        for solver in config.solver.kinds() {
            let report = calibrate_kappa(&config, &a.calibrate, solver)?;
            match solver {
                SolverKind::Lasso => config.kappa = report.chosen,
                SolverKind::Logistic => config.kappa_logistic = Some(report.chosen),
            }
            reports.push(report);
        }
        write_json(Some(&a.out_dir.join("calibration.json")), &reports)?;
    }
    let result = run_sweep(&config)?;
    write_output(Some(&a.out_dir.join("curves.csv")), result.to_csv()?.as_bytes())?;
    write_json(Some(&a.out_dir.join("manifest.json")), &result.manifest)?;
    write_json(Some(&a.out_dir.join("trials.json")), &result.trials)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(k) = cli.workers {
        if k == 0 {
            return Err(Error::InvalidParameter("workers: must be at least 1".into()));
        }
        // Sizes rayon's global pool, which is built lazily on first use.
        std::env::set_var("RAYON_NUM_THREADS", k.to_string());
    }
    match cli.command {
        Command::Graph(a) => graph_cmd(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Witness(a) => witness_cmd(a),
        Command::Theory(a) => theory_cmd(a),
        Command::Experiment(a) => experiment_cmd(a, cli.workers),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}
