use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rdbounds::analysis::{self, parse_cutoffs, parse_interval, parse_key_values, AnalysisConfig};
use rdbounds::bounds::{linspace, CutoffPair};
use rdbounds::decision_model::{periodicity_check, regression_curves, Ability, DecisionModelSpec, NoiseDensity};
use rdbounds::simulation::{run_monte_carlo, Design, SimulationConfig};
use rdbounds::{Error, Result};

#[derive(Parser)]
#[command(name = "rdbounds", version, about = "Bounds on extrapolated RD treatment effects")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate bounds and a uniform band from a CSV file.
    Bounds(Box<BoundsArgs>),
    /// Monte Carlo study of the two-group cubic designs.
    Simulate(SimulateArgs),
    /// Untreated regression curves implied by the effort-choice model.
    DecisionModel(DecisionArgs),
}

#[derive(Args)]
struct BoundsArgs {
    /// key=value file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<String>,
    /// Outcome column.
    #[arg(long)]
    y: Option<String>,
    /// Running-variable column.
    #[arg(long)]
    x: Option<String>,
    /// Cutoff-label column.
    #[arg(long)]
    c: Option<String>,
    /// Treatment column (`-` for none).
    #[arg(long)]
    d: Option<String>,
    /// Comma-separated cutoff values, e.g. `1,2.25`.
    #[arg(long)]
    cutoffs: Option<String>,
    /// Low cutoff of the pair to extrapolate from (default: the smallest).
    #[arg(long)]
    from_cutoff: Option<String>,
    /// sharp | fuzzy
    #[arg(long)]
    design: Option<String>,
    /// increasing | decreasing
    #[arg(long)]
    direction: Option<String>,
    /// lo,hi
    #[arg(long)]
    interval: Option<String>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// Bootstrap replications.
    #[arg(long)]
    bootstrap: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// triangular | epanechnikov | uniform
    #[arg(long)]
    kernel: Option<String>,
    /// auto | manual
    #[arg(long)]
    bw_mode: Option<String>,
    #[arg(long = "bw-1l")]
    bw_1l: Option<String>,
    #[arg(long = "bw-0h")]
    bw_0h: Option<String>,
    #[arg(long = "bw-0l")]
    bw_0l: Option<String>,
    /// Take-up floor for fuzzy designs.
    #[arg(long)]
    p_min: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

impl BoundsArgs {
    fn flag_pairs(&self) -> Vec<(&'static str, &String)> {
        [
            ("input", &self.input),
            ("y", &self.y),
            ("x", &self.x),
            ("c", &self.c),
            ("d", &self.d),
            ("cutoffs", &self.cutoffs),
            ("from-cutoff", &self.from_cutoff),
            ("design", &self.design),
            ("direction", &self.direction),
            ("interval", &self.interval),
            ("grid", &self.grid),
            ("alpha", &self.alpha),
            ("bootstrap", &self.bootstrap),
            ("seed", &self.seed),
            ("kernel", &self.kernel),
            ("bw-mode", &self.bw_mode),
            ("bw-1l", &self.bw_1l),
            ("bw-0h", &self.bw_0h),
            ("bw-0l", &self.bw_0l),
            ("p-min", &self.p_min),
            ("out", &self.out),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
        .collect()
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "sharp")]
    design: Design,
    /// Observations per cutoff group.
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 500)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 20240601)]
    seed: u64,
    /// Evaluation points, comma-separated.
    #[arg(long, value_parser = parse_points)]
    eval: Option<Vec<f64>>,
    /// 1000 repetitions with 1000 bootstrap draws each.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DecisionArgs {
    /// 1, 2 or custom (Example 1 with the overrides below).
    #[arg(long, default_value = "1")]
    example: String,
    /// Agents per cutoff group.
    #[arg(long, default_value_t = 100_000)]
    agents: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Curve grid `lo,hi` (default: the two cutoffs).
    #[arg(long, value_parser = parse_interval_arg)]
    range: Option<(f64, f64)>,
    #[arg(long, default_value_t = 21)]
    grid: usize,
    /// Fixed bandwidth for both groups instead of the IMSE choice.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau_belief: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// triangular | uniform:LO:HI | gaussian:SD | periodic:W:A:PERIOD
    #[arg(long)]
    noise: Option<String>,
    /// Two cutoffs `l,h`.
    #[arg(long)]
    cutoffs: Option<String>,
    /// Ability range `lo,hi` for the high-cutoff group.
    #[arg(long, value_parser = parse_interval_arg)]
    ability_high: Option<(f64, f64)>,
    /// Scores cannot be influenced by effort.
    #[arg(long)]
    non_manipulable: bool,
    /// Also report the cutoff-invariance check on a 101-point ability grid.
    #[arg(long)]
    periodicity: bool,
    /// Write curves.csv here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_points(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number"))).collect()
}

fn parse_interval_arg(s: &str) -> std::result::Result<(f64, f64), String> {
    parse_interval(s).map_err(|e| e.to_string())
}

fn bounds(args: &BoundsArgs) -> Result<()> {
    let mut cfg = AnalysisConfig::default();
    if let Some(path) = &args.config {
        cfg.apply_pairs(&parse_key_values(&fs::read_to_string(path)?)?)?;
    }
    for (k, v) in args.flag_pairs() {
        cfg.set(k, v)?;
    }
    let r = analysis::run_analysis(&cfg)?;
    let out = cfg.out.as_deref().unwrap_or(Path::new("."));
    println!("b_1l = {:.6}  b_0h = {:.6}  b_0l = {:.6}", r.plan.b_1l, r.plan.b_0h, r.plan.b_0l);
    let boot = &r.manifest["bootstrap"];
    println!("crit_lower = {}  crit_upper = {}", boot["crit_lower"], boot["crit_upper"]);
    for w in &r.warnings {
        println!("warning: {w}");
    }
    println!("results written to {}", out.display());
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg = SimulationConfig {
        design: args.design,
        n_per_group: args.n,
        reps: args.reps,
        bootstrap_m: args.bootstrap,
        alpha: args.alpha,
        seed: args.seed,
        ..Default::default()
    };
    if let Some(e) = &args.eval {
        cfg.eval_points = e.clone();
    }
    if args.full {
        cfg.reps = 1000;
        cfg.bootstrap_m = 1000;
    }
    let start = Instant::now();
    let report = run_monte_carlo(&cfg)?;
    let wall = start.elapsed().as_secs_f64();
    let table = report.to_table();
    print!("{table}");
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        report.write_csv(fs::File::create(dir.join("report.csv"))?)?;
        fs::write(dir.join("report.txt"), &table)?;
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&report.manifest(wall))? + "\n")?;
    }
    Ok(())
}

fn decision_spec(args: &DecisionArgs) -> Result<DecisionModelSpec> {
    let mut spec = match args.example.as_str() {
        "1" => DecisionModelSpec::example1(),
        "2" => DecisionModelSpec::example2(),
        "custom" => DecisionModelSpec::example1(),
        o => return Err(Error::InvalidConfig(format!("example must be 1, 2 or custom, got `{o}`"))),
    };
    let custom = args.beta.is_some()
        || args.tau_belief.is_some()
        || args.gamma.is_some()
        || args.noise.is_some()
        || args.cutoffs.is_some()
        || args.ability_high.is_some()
        || args.non_manipulable;
    if custom && args.example != "custom" {
        return Err(Error::InvalidConfig("model overrides require --example custom".into()));
    }
    if let Some(b) = args.beta {
        spec.beta = b;
    }
    if let Some(t) = args.tau_belief {
        spec.tau_belief = t;
    }
    if let Some(g) = args.gamma {
        spec.gamma = g;
    }
    if let Some(n) = &args.noise {
        spec.noise = n.parse::<NoiseDensity>()?;
    }
    if let Some(c) = &args.cutoffs {
        let v = parse_cutoffs(c)?;
        if v.len() != 2 {
            return Err(Error::InvalidConfig("decision model takes exactly two cutoffs".into()));
        }
        spec.cutoffs = CutoffPair::new(v[0], v[1])?;
    }
    if let Some((lo, hi)) = args.ability_high {
        spec.ability[1] = Ability { lo, hi };
    }
    spec.manipulable = !args.non_manipulable;
    spec.validate()?;
    Ok(spec)
}

fn decision_model(args: &DecisionArgs) -> Result<()> {
    let spec = decision_spec(args)?;
    let (lo, hi) = args.range.unwrap_or((spec.cutoffs.l, spec.cutoffs.h));
    if !(2..=analysis::MAX_GRID).contains(&args.grid) {
        return Err(Error::InvalidConfig(format!("grid must have between 2 and {} points", analysis::MAX_GRID)));
    }
    let grid = linspace(lo, hi, args.grid);
    let curves = regression_curves(&spec, &grid, args.agents, args.seed, args.bandwidth)?;
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            curves.write_csv(fs::File::create(dir.join("curves.csv"))?)?;
            if let Some(d) = curves.max_gap_deviation(lo) {
                println!("max |B(x) - B({lo})| / se = {d:.2}");
            }
        }
        None => curves.write_csv(std::io::stdout().lock())?,
    }
    if args.periodicity {
        let eps = linspace(spec.ability[0].lo, spec.ability[0].hi, 101);
        let r = periodicity_check(&spec, &eps)?;
        eprintln!("max effort gap = {:e}, cutoff-invariant = {}", r.max_effort_gap, r.periodic_verdict);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Bounds(a) => bounds(a),
        Command::Simulate(a) => simulate(a),
        Command::DecisionModel(a) => decision_model(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", analysis::error_json(&e));
            ExitCode::from(2)
        }
    }
}
