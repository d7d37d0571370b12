use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dpbyz::analyzer::{quadratic_testbed, theorem_lower_bound, theorem_upper_bound, RateBoundQuery};
use dpbyz::config::ConfigDocument;
use dpbyz::gar::GarKind;
use dpbyz::numerics::{streams, RandomStream};
use dpbyz::privacy::{calibrate, PrivacyBudget};
use dpbyz::report::{emit_grid, feasibility_rows, feasibility_text, write_feasibility_csv};
use dpbyz::simulator::run_grid;
use dpbyz::{Error, ErrorKind, Result};

#[derive(Parser)]
#[command(name = "dpbyz", version, about = "Differentially private, Byzantine-resilient SGD simulator")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration with one seed.
    Simulate(SimulateArgs),
    /// Run every configuration of a sweep for several seeds.
    Grid(GridArgs),
    /// VN-ratio feasibility of aggregation rules under the Gaussian mechanism.
    Feasibility(FeasibilityArgs),
    /// Upper and lower convergence-rate bounds.
    Bounds(BoundsArgs),
    /// Quadratic mean-estimation testbed for the lower bound.
    Testbed(TestbedArgs),
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// `section.key=value`, applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Overrides `training.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// `a..b` (inclusive) or a comma list.
    #[arg(long, default_value = "1..5", value_parser = parse_seeds)]
    seeds: SeedList,
}

#[derive(Args)]
struct FeasibilityArgs {
    /// Rule name, or `all` for the seven resilient rules.
    #[arg(long, default_value = "all")]
    gar: String,
    #[arg(long, default_value_t = 11)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    f: usize,
    #[arg(long, default_value_t = 50)]
    b: u64,
    #[arg(long, default_value_t = 69)]
    d: u64,
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
    /// Also write the rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct NoiseArgs {
    /// Per-coordinate noise standard deviation. Derived from the privacy
    /// budget when omitted.
    #[arg(long)]
    noise_std: Option<f64>,
    /// Privacy budget used to derive the noise; no noise when omitted.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    delta: f64,
    #[arg(long, default_value_t = 1e-2)]
    g_max: f64,
}

impl NoiseArgs {
    fn resolve(&self, b: u64) -> Result<f64> {
        match (self.noise_std, self.epsilon) {
            (Some(_), Some(_)) => Err(Error::Parameter("give either --noise-std or --epsilon, not both".into())),
            (Some(s), None) => Ok(s),
            (None, Some(eps)) => {
                let budget = PrivacyBudget::new(eps, self.delta)?;
                Ok(calibrate(&budget, self.g_max, b as usize)?.noise_std)
            }
            (None, None) => Ok(0.0),
        }
    }
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 50)]
    b: u64,
    #[arg(long, default_value_t = 69)]
    d: u64,
    #[arg(long, default_value_t = 1000)]
    steps: u64,
    #[command(flatten)]
    noise: NoiseArgs,
}

#[derive(Args)]
struct TestbedArgs {
    #[arg(long, default_value_t = 100)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 10)]
    b: u64,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    noise: NoiseArgs,
}

#[derive(Clone)]
struct SeedList(Vec<u64>);

fn parse_seeds(s: &str) -> std::result::Result<SeedList, String> {
    let bad = || format!("expected `a..b` or a comma list, got `{s}`");
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok(SeedList((a..=b).collect()));
    }
    s.split(',')
        .map(|v| v.trim().parse().map_err(|_| bad()))
        .collect::<std::result::Result<_, _>>()
        .map(SeedList)
}

fn load_document(args: &ConfigArgs) -> Result<ConfigDocument> {
    let text = fs::read_to_string(&args.config)?;
    let mut doc = ConfigDocument::parse(&text)?;
    for o in &args.overrides {
        doc.set(o)?;
    }
    Ok(doc)
}

fn write_grid(out: &std::path::Path, cells: &[dpbyz::simulator::GridCell]) -> Result<()> {
    let paths = emit_grid(out, cells)?;
    for c in cells {
        for r in &c.runs {
            if let Err(e) = &r.outcome {
                eprintln!("warning: {} seed {}: {e}", c.config, r.seed);
            }
        }
    }
    println!("wrote {} files to {}", paths.len(), out.display());
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let configs = load_document(&args.common)?.expand()?;
    let [config] = configs.as_slice() else {
        return Err(Error::Config {
            key: "*".into(),
            message: format!("simulate needs a single configuration, the file expands to {}", configs.len()),
        });
    };
    let seed = args.seed.unwrap_or(config.master_seed);
    let cells = run_grid(std::slice::from_ref(config), &[seed])?;
    if let Some(Err(e)) = cells[0].runs.first().map(|r| r.outcome.as_ref()) {
        return Err(Error::State(e.to_string()));
    }
    write_grid(&args.common.out, &cells)
}

fn grid(args: &GridArgs) -> Result<()> {
    let configs = load_document(&args.common)?.expand()?;
    let cells = run_grid(&configs, &args.seeds.0)?;
    write_grid(&args.common.out, &cells)
}

fn feasibility(args: &FeasibilityArgs) -> Result<()> {
    let kinds: Vec<GarKind> = if args.gar.eq_ignore_ascii_case("all") {
        GarKind::RESILIENT.to_vec()
    } else {
        args.gar.split(',').map(str::parse).collect::<Result<_>>()?
    };
    let budget = PrivacyBudget::new(args.epsilon, args.delta)?;
    let rows = feasibility_rows(&kinds, args.n, args.f, args.b, args.d, budget);
    print!("{}", feasibility_text(&rows));
    if let Some(path) = &args.csv {
        write_feasibility_csv(fs::File::create(path)?, &rows)?;
    }
    Ok(())
}

fn bounds(args: &BoundsArgs) -> Result<()> {
    let noise_std = args.noise.resolve(args.b)?;
    let q = RateBoundQuery {
        mu: args.mu,
        lambda: args.lambda,
        alpha: args.alpha,
        c: args.c,
        sigma: args.sigma,
        b: args.b,
        d: args.d,
        steps: args.steps,
        noise_std,
        g_max: args.noise.g_max,
    };
    let upper = theorem_upper_bound(&q)?;
    let lower = theorem_lower_bound(args.sigma, args.b, args.d, args.steps, noise_std)?;
    println!("noise_std={noise_std}");
    println!("upper_bound={upper}");
    println!("lower_bound={lower}");
    Ok(())
}

fn testbed(args: &TestbedArgs) -> Result<()> {
    let noise_std = args.noise.resolve(args.b)?;
    let stream = RandomStream::new(args.seed, streams::TESTBED);
    let r = quadratic_testbed(args.d, args.sigma, args.b as usize, args.steps, noise_std, args.trials, &stream)?;
    println!("noise_std={noise_std}");
    println!("empirical_error={}", r.empirical_error);
    println!("predicted_error={}", r.predicted_error);
    println!("ratio={}", r.empirical_error / r.predicted_error);
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Parameter => 2,
        ErrorKind::Config => 3,
        ErrorKind::Parse => 4,
        ErrorKind::Precondition => 5,
        ErrorKind::Unsupported => 6,
        ErrorKind::State => 7,
        ErrorKind::Io => 8,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // No global pool exists yet at this point.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Grid(a) => grid(a),
        Command::Feasibility(a) => feasibility(a),
        Command::Bounds(a) => bounds(a),
        Command::Testbed(a) => testbed(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("error kind={} message={:?}", e.kind(), message);
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
