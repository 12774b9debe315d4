use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gmfpart::bounds::verify_bound;
use gmfpart::exact::exact_summary_with_limit;
use gmfpart::gmf::{gmf_lower_bound, run_gmf};
use gmfpart::harness::{
    l1_error, run_bound_campaign, run_inference_experiment, run_partition_benchmark, scheme_partition,
    ExperimentConfig, PartitionScheme,
};
use gmfpart::mrf::generate_random_mrf;
use gmfpart::partition::feasible_to_bound_ratio;
use gmfpart::{rng, Coupling, MarkovRandomField, Partition, RandomModelSpec};

#[derive(Parser)]
#[command(name = "gmfpart", version, about = "Generalized mean field inference with SDP-based graph partitioning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random model and write it in the text format.
    Gen(GenArgs),
    /// Partition a model's graph with one scheme.
    Partition(PartitionArgs),
    /// Run GMF on a model with a given or computed partition.
    Infer(InferArgs),
    /// Relaxation bound versus rounded cut on random graphs.
    BenchGp(BenchArgs),
    /// Marginal error and lower bound of every scheme against the exact oracle.
    BenchInference(BenchArgs),
    /// Check the KL sandwich at GMF fixed points on many small random models.
    VerifyBounds(BenchArgs),
}

#[derive(Args)]
struct Common {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
    /// Edge probability.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    coupling: Option<Coupling>,
    #[arg(long)]
    w_obs: Option<f64>,
    #[arg(long)]
    w_coup: Option<f64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PartitionArgs {
    #[command(flatten)]
    common: Common,
    /// Model file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value = "minc-coupling")]
    scheme: PartitionScheme,
    /// SDP solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    common: Common,
    /// Model file.
    #[arg(long)]
    model: PathBuf,
    /// Partition file; otherwise one is computed from --k and --scheme.
    #[arg(long, conflicts_with = "k")]
    partition: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value = "minc-coupling")]
    scheme: PartitionScheme,
    /// GMF convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Directory for marginals.csv and infer_report.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Overrides for the experiment commands. Lists are comma separated.
#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trials per setting (number of models for verify-bounds).
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<PartitionScheme>,
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Edge probabilities.
    #[arg(long, value_delimiter = ',')]
    p: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    coupling: Vec<Coupling>,
    #[arg(long, value_delimiter = ',')]
    w_obs: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    w_coup: Vec<f64>,
    /// SDP tolerance for bench-gp, GMF tolerance otherwise.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Clone, Copy, PartialEq)]
enum Bench {
    Gp,
    Inference,
    Bounds,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn set_sdp_tol(cfg: &mut ExperimentConfig, tol: f64) {
    cfg.partition.sdp_tol = tol;
    cfg.partition.sdp_accept_tol = cfg.partition.sdp_accept_tol.max(tol);
}

fn single<T: Copy>(flag: &str, values: &[T]) -> Result<Option<T>> {
    match values {
        [] => Ok(None),
        [v] => Ok(Some(*v)),
        _ => bail!("--{flag} takes a single value here"),
    }
}

fn bench_config(args: &BenchArgs, bench: Bench) -> Result<ExperimentConfig> {
    let mut cfg = load_config(&args.common)?;
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if bench == Bench::Bounds {
        if !args.k.is_empty() || !args.scheme.is_empty() {
            bail!("verify-bounds uses random equipartitions with k = 2 and k = n/2; --k and --scheme do not apply");
        }
        let c = &mut cfg.campaign;
        if let Some(t) = args.trials {
            c.models = t;
        }
        if !args.n.is_empty() {
            c.n = args.n.clone();
        }
        if !args.p.is_empty() {
            c.edge_prob = args.p.clone();
        }
        if !args.coupling.is_empty() {
            c.coupling = args.coupling.clone();
        }
        if let Some(w) = single("w-obs", &args.w_obs)? {
            c.w_obs_max = w;
        }
        if let Some(w) = single("w-coup", &args.w_coup)? {
            c.w_coup_max = w;
        }
        if let Some(tol) = args.tol {
            cfg.gmf.tol = tol;
        }
        return Ok(cfg);
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if !args.k.is_empty() {
        cfg.partition.k = args.k.clone();
    }
    if !args.scheme.is_empty() {
        if bench == Bench::Gp {
            bail!("bench-gp compares both cut directions on one affinity; --scheme does not apply");
        }
        cfg.partition.schemes = args.scheme.clone();
    }
    if let Some(n) = single("n", &args.n)? {
        cfg.model.n = n;
    }
    let m = &mut cfg.model;
    for (src, dst) in [(&args.p, &mut m.edge_prob), (&args.w_obs, &mut m.w_obs), (&args.w_coup, &mut m.w_coup)] {
        if !src.is_empty() {
            *dst = src.clone();
        }
    }
    if !args.coupling.is_empty() {
        m.coupling = args.coupling.clone();
    }
    if let Some(tol) = args.tol {
        match bench {
            Bench::Gp => set_sdp_tol(&mut cfg, tol),
            _ => cfg.gmf.tol = tol,
        }
    }
    Ok(cfg)
}

fn read_model(path: &Path) -> Result<MarkovRandomField> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    MarkovRandomField::read_text(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn read_partition(path: &Path) -> Result<Partition> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Partition::read_text(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

fn gen(args: &GenArgs) -> Result<ExitCode> {
    let cfg = load_config(&args.common)?;
    let m = &cfg.model;
    let spec = RandomModelSpec {
        n: args.n.unwrap_or(m.n),
        edge_prob: args.p.unwrap_or(m.edge_prob[0]),
        w_obs: args.w_obs.unwrap_or(m.w_obs[0]),
        w_coup: args.w_coup.unwrap_or(m.w_coup[0]),
        coupling: args.coupling.unwrap_or(m.coupling[0]),
        seed: cfg.seed,
    };
    let mrf = generate_random_mrf(&spec)?;
    emit(args.out.as_deref(), &mrf.to_text())?;
    Ok(ExitCode::SUCCESS)
}

fn partition(args: &PartitionArgs) -> Result<ExitCode> {
    let mut cfg = load_config(&args.common)?;
    if let Some(tol) = args.tol {
        set_sdp_tol(&mut cfg, tol);
    }
    let mrf = read_model(&args.model)?;
    let p = &cfg.partition;
    let sp = scheme_partition(&mrf, args.scheme, args.k, p.inference_rounding, p, &cfg.solver_options(), cfg.seed)?;
    let mut text = String::new();
    writeln!(text, "# scheme {}", args.scheme)?;
    if let (Some(bound), Some(feasible)) = (sp.cut_bound, sp.cut_feasible) {
        writeln!(text, "# bound {bound}")?;
        writeln!(text, "# feasible {feasible}")?;
        writeln!(text, "# ratio {}", feasible_to_bound_ratio(feasible, bound))?;
    }
    text.push_str(&sp.partition.to_text());
    emit(args.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

fn infer(args: &InferArgs) -> Result<ExitCode> {
    let mut cfg = load_config(&args.common)?;
    if let Some(tol) = args.tol {
        cfg.gmf.tol = tol;
    }
    let mrf = read_model(&args.model)?;
    let partition = match (&args.partition, args.k) {
        (Some(path), _) => read_partition(path)?,
        (None, Some(k)) => {
            let p = &cfg.partition;
            let seed = rng::derive_seed(cfg.seed, k as u64);
            scheme_partition(&mrf, args.scheme, k, p.inference_rounding, p, &cfg.solver_options(), seed)?.partition
        }
        (None, None) => bail!("infer needs --partition or --k"),
    };
    if partition.n() != mrf.n() {
        bail!("partition covers {} nodes, model has {}", partition.n(), mrf.n());
    }
    let (state, conv) = run_gmf(&mrf, &partition, &cfg.gmf_config())?;
    let marginals = state.singleton_marginals();
    let mut report = String::new();
    writeln!(report, "n = {}", mrf.n())?;
    writeln!(report, "clusters = {}", partition.k())?;
    writeln!(report, "sweeps = {}", conv.sweeps)?;
    writeln!(report, "converged = {}", conv.converged)?;
    writeln!(report, "gmf_lower_bound = {}", gmf_lower_bound(&mrf, &state)?)?;
    let exact =
        (mrf.n() <= cfg.oracle.max_nodes).then(|| exact_summary_with_limit(&mrf, cfg.oracle.max_nodes)).transpose()?;
    let mut holds = true;
    match &exact {
        Some(oracle) => {
            let check = verify_bound(&mrf, &partition, &state, oracle)?;
            holds = check.holds;
            writeln!(report, "w = {}", check.report.w)?;
            writeln!(report, "kl_lower = {}", check.lower)?;
            writeln!(report, "kl_upper = {}", check.upper)?;
            writeln!(report, "log_z = {}", oracle.log_partition)?;
            writeln!(report, "kl = {}", check.kl)?;
            writeln!(report, "bound_holds = {}", check.holds)?;
            writeln!(report, "l1_error = {}", l1_error(&marginals, &oracle.singleton_marginals)?)?;
        }
        None => {
            let bounds = gmfpart::bounds::compute_bound_constants(&mrf, &partition)?;
            writeln!(report, "w = {}", bounds.w)?;
            writeln!(report, "kl_lower = {}", bounds.lower())?;
            writeln!(report, "kl_upper = {}", bounds.upper())?;
        }
    }
    let mut csv = String::from("node,cluster,p_plus,exact_p_plus\n");
    for (i, m) in marginals.iter().enumerate() {
        let ex = exact.as_ref().map(|o| o.singleton_marginals[i].to_string()).unwrap_or_default();
        writeln!(csv, "{i},{},{m},{ex}", partition.cluster_of(i))?;
    }
    print!("{report}");
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("infer_report.txt"), &report)?;
        fs::write(dir.join("marginals.csv"), &csv)?;
    } else {
        print!("{csv}");
    }
    Ok(if holds { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn bench_gp(args: &BenchArgs) -> Result<ExitCode> {
    let cfg = bench_config(args, Bench::Gp)?;
    let res = run_partition_benchmark(&cfg)?;
    res.write(&cfg.out_dir, &cfg)?;
    println!("setting,k,direction,rounding,mean_bound,mean_feasible,mean_ratio,std_ratio");
    for s in &res.summaries {
        println!(
            "{},{},{},{},{:.3},{:.3},{:.4},{:.4}",
            s.setting,
            s.k,
            s.direction.as_str(),
            s.rounding.as_str(),
            s.mean_bound,
            s.mean_feasible,
            s.mean_ratio,
            s.std_ratio
        );
    }
    eprintln!("results in {}", cfg.out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn bench_inference(args: &BenchArgs) -> Result<ExitCode> {
    let cfg = bench_config(args, Bench::Inference)?;
    let res = run_inference_experiment(&cfg)?;
    res.write(&cfg.out_dir, &cfg)?;
    println!("setting,scheme,k,mean_l1,mean_gap,bound_violations,unconverged");
    let mut violations = 0;
    for s in &res.summaries {
        violations += s.bound_violations;
        println!(
            "{},{},{},{:.4},{:.4},{},{}",
            s.setting, s.scheme, s.k, s.mean_l1, s.mean_gap, s.bound_violations, s.unconverged
        );
    }
    eprintln!("results in {}", cfg.out_dir.display());
    Ok(if violations == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn verify_bounds(args: &BenchArgs) -> Result<ExitCode> {
    let cfg = bench_config(args, Bench::Bounds)?;
    let res = run_bound_campaign(&cfg)?;
    res.write(&cfg.out_dir, &cfg)?;
    let fixed = res.records.iter().filter(|r| r.state == gmfpart::harness::StateKind::FixedPoint).count();
    println!("fixed_point_checks = {fixed}");
    println!("violations = {}", res.violations());
    println!("unconverged = {}", res.unconverged());
    println!("random_state_violations = {}", res.random_state_violations());
    eprintln!("results in {}", cfg.out_dir.display());
    Ok(if res.violations() == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Gen(a) => gen(a),
        Command::Partition(a) => partition(a),
        Command::Infer(a) => infer(a),
        Command::BenchGp(a) => bench_gp(a),
        Command::BenchInference(a) => bench_inference(a),
        Command::VerifyBounds(a) => verify_bounds(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    run(&cli).unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
