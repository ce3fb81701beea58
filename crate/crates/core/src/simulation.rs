//! Monte Carlo harness for the two-group cubic designs (sharp and fuzzy).

use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{select_plan, PlanSelection};
use crate::bounds::{linspace, CutoffPair, Direction, SharpEstimator};
use crate::error::{Error, Result};
use crate::fuzzy::{FuzzyEstimator, DEFAULT_P_MIN};
use crate::inference::{fuzzy_draws, sharp_draws, UniformBand};
use crate::kernels::KernelSpec;
use crate::local_poly::{ArmSelector, RdSample, Side, Subsample};
use crate::rng::{derive_seed, domain, stream};

pub const LOW_CUTOFF: f64 = 1.0;
pub const HIGH_CUTOFF: f64 = 2.25;
pub const TRUNCATION: (f64, f64) = (0.5, 3.0);
/// Effect of treatment on the treated in the sharp design.
pub const TAU: f64 = 1.5;
pub const EVAL_POINTS: [f64; 4] = [1.25, 1.5, 1.75, 2.0];
/// Largest tolerated share of failed repetitions.
pub const MAX_FAILURE_SHARE: f64 = 0.05;

pub fn pair() -> CutoffPair {
    CutoffPair { l: LOW_CUTOFF, h: HIGH_CUTOFF }
}

/// Untreated mean of the low-cutoff group.
pub fn mu0_low(x: f64) -> f64 {
    ((-0.056 * x - 0.099) * x + 1.983) * x + 0.296
}

/// Untreated mean of the high-cutoff group.
pub fn mu0_high(x: f64) -> f64 {
    ((-0.553 * x + 2.335) * x - 0.872) * x + 1.439
}

/// Take-up probability right of the low cutoff in the fuzzy design.
pub fn takeup_probability(x: f64) -> f64 {
    0.9 - (x - LOW_CUTOFF).max(0.0).sqrt() / 5.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    #[default]
    Sharp,
    Fuzzy,
}

impl std::str::FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sharp" => Ok(Self::Sharp),
            "fuzzy" => Ok(Self::Fuzzy),
            other => Err(Error::InvalidConfig(format!("unknown design `{other}`"))),
        }
    }
}

impl std::fmt::Display for Design {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sharp => "sharp",
            Self::Fuzzy => "fuzzy",
        })
    }
}

/// Population bounds and effect at `x` in `(l, h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PopulationTruth {
    pub lower: f64,
    pub upper: f64,
    pub tau: f64,
}

pub fn population_truth(design: Design, x: f64) -> PopulationTruth {
    let lower = mu0_low(x) + TAU - mu0_high(x);
    let upper = mu0_low(x) + TAU - mu0_low(LOW_CUTOFF);
    match design {
        Design::Sharp => PopulationTruth { lower, upper, tau: TAU },
        Design::Fuzzy => {
            let p = takeup_probability(x);
            PopulationTruth { lower: lower / p, upper: upper / p, tau: TAU / p }
        }
    }
}

fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let x = mean + z;
        if x > TRUNCATION.0 && x < TRUNCATION.1 {
            return x;
        }
    }
}

fn generate(design: Design, n_per_group: usize, seed: u64) -> Vec<RdSample> {
    let mut out = Vec::with_capacity(2 * n_per_group);
    for (g, c) in [LOW_CUTOFF, HIGH_CUTOFF].into_iter().enumerate() {
        let mut rng = stream(seed, domain::SIM_DATA, g as u64);
        let mu0: fn(f64) -> f64 = if g == 0 { mu0_low } else { mu0_high };
        for _ in 0..n_per_group {
            let x = truncated_normal(&mut rng, c);
            let e: f64 = rng.sample(StandardNormal);
            let y0 = mu0(x) + e;
            let u: f64 = rng.random();
            let (d, effect) = match design {
                Design::Sharp => (x >= c, TAU),
                Design::Fuzzy => {
                    let p = 0.9 - (x - c).max(0.0).sqrt() / 5.0;
                    (x >= c && u < p, TAU / p)
                }
            };
            out.push(RdSample::new(if d { y0 + effect } else { y0 }, x, c, d));
        }
    }
    out
}

/// Sharp design: `n_per_group` draws for each cutoff group.
pub fn generate_sharp(n_per_group: usize, seed: u64) -> Vec<RdSample> {
    generate(Design::Sharp, n_per_group, seed)
}

/// Fuzzy design: take-up right of each cutoff with probability
/// `0.9 − √(x − c)/5`; never treated left of the cutoff.
pub fn generate_fuzzy(n_per_group: usize, seed: u64) -> Vec<RdSample> {
    generate(Design::Fuzzy, n_per_group, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub design: Design,
    pub n_per_group: usize,
    pub reps: usize,
    pub bootstrap_m: usize,
    pub alpha: f64,
    pub eval_points: Vec<f64>,
    pub seed: u64,
    /// Equispaced points over the hull of the evaluation points.
    pub grid_points: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            design: Design::Sharp,
            n_per_group: 500,
            reps: 200,
            bootstrap_m: 500,
            alpha: 0.05,
            eval_points: EVAL_POINTS.to_vec(),
            seed: 20240601,
            grid_points: 50,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.reps == 0 {
            return bad("reps must be at least 1".into());
        }
        if self.n_per_group == 0 {
            return bad("n must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.eval_points.is_empty() || self.eval_points.iter().any(|&x| !pair().contains(x)) {
            return bad(format!("eval points must be non-empty and inside ({LOW_CUTOFF}, {HIGH_CUTOFF})"));
        }
        if self.grid_points < 2 {
            return bad("grid must have at least 2 points".into());
        }
        Ok(())
    }

    /// Band grid: equispaced points over the eval hull merged with the eval points.
    pub fn grid(&self) -> Vec<f64> {
        let (lo, hi) = self.interval();
        let mut g = linspace(lo, hi, self.grid_points);
        g.extend(&self.eval_points);
        g.sort_by(f64::total_cmp);
        g.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        for &e in &self.eval_points {
            if let Some(v) = g.iter_mut().find(|v| (**v - e).abs() <= 1e-12) {
                *v = e;
            }
        }
        g
    }

    pub fn interval(&self) -> (f64, f64) {
        let lo = self.eval_points.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.eval_points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Estimates and band from one repetition, at the evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepetitionResult {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub band_lo: Vec<f64>,
    pub band_hi: Vec<f64>,
    pub bandwidths: [f64; 3],
    pub discarded: usize,
}

/// Runs one repetition end to end: data, bandwidths, bounds, band.
pub fn run_repetition(config: &SimulationConfig, rep: usize) -> Result<RepetitionResult> {
    let data_seed = derive_seed(config.seed, domain::SIM_DATA, rep as u64);
    let boot_seed = derive_seed(config.seed, domain::SIM_BOOTSTRAP, rep as u64);
    let kernel = KernelSpec::TRIANGULAR;
    let p = pair();
    let grid = config.grid();
    let interval = config.interval();
    let (curve, draws) = match config.design {
        Design::Sharp => {
            let data = generate_sharp(config.n_per_group, data_seed);
            let sel = plan_for(&data, Design::Sharp, interval, kernel)?;
            let est = SharpEstimator::new(&data, p, &grid, &sel.plan, kernel, Direction::IncreasingDominant)?;
            (est.curve(), (sharp_draws(&est, config.bootstrap_m, boot_seed, domain::BOOTSTRAP)?, sel))
        }
        Design::Fuzzy => {
            let data = generate_fuzzy(config.n_per_group, data_seed);
            let sel = plan_for(&data, Design::Fuzzy, interval, kernel)?;
            let est = FuzzyEstimator::new(&data, p, &grid, &sel.plan, kernel, DEFAULT_P_MIN)?;
            (est.curve().as_bounds(), (fuzzy_draws(&est, config.bootstrap_m, boot_seed, domain::BOOTSTRAP)?, sel))
        }
    };
    let (draws, sel) = draws;
    let band: UniformBand = draws.band(config.alpha)?;
    let idx: Vec<usize> =
        config.eval_points.iter().map(|&e| curve.index_of(e).expect("eval points are on the grid")).collect();
    Ok(RepetitionResult {
        lower: idx.iter().map(|&i| curve.lower[i]).collect(),
        upper: idx.iter().map(|&i| curve.upper[i]).collect(),
        band_lo: idx.iter().map(|&i| band.lo[i]).collect(),
        band_hi: idx.iter().map(|&i| band.hi[i]).collect(),
        bandwidths: [sel.plan.b_1l, sel.plan.b_0h, sel.plan.b_0l],
        discarded: band.discarded,
    })
}

/// Automatic bandwidths for the design's three arms.
pub fn plan_for(data: &[RdSample], design: Design, interval: (f64, f64), kernel: KernelSpec) -> Result<PlanSelection> {
    let p = pair();
    let treated = match design {
        Design::Sharp => Some(true),
        Design::Fuzzy => None,
    };
    let control = match design {
        Design::Sharp => Some(false),
        Design::Fuzzy => None,
    };
    let a1 = Subsample::require(data, ArmSelector::new(treated, p.l, Side::Right))?;
    let a0h = Subsample::require(data, ArmSelector::new(control, p.h, Side::Left))?;
    let a0l = Subsample::require(data, ArmSelector::new(control, p.l, Side::Left))?;
    select_plan(&a1, &a0h, &a0l, interval, p.l, kernel)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSummary {
    pub x: f64,
    pub lb_true: f64,
    pub ub_true: f64,
    pub tau_true: f64,
    pub lb_mean: f64,
    /// Standard deviation of the lower-bound estimate across repetitions.
    pub lb_se: f64,
    /// Monte Carlo standard error of `lb_mean`.
    pub lb_mean_se: f64,
    pub ub_mean: f64,
    pub ub_se: f64,
    pub ub_mean_se: f64,
    pub band_length_mean: f64,
    pub coverage_bounds_pct: f64,
    pub coverage_tau_pct: f64,
    /// Share of bands excluding zero at this point.
    pub power_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub points: Vec<PointSummary>,
    pub completed: usize,
    pub failed: usize,
    pub failure_messages: Vec<String>,
    pub discarded_replications: usize,
    pub mean_bandwidths: [f64; 3],
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

pub fn summarize(config: &SimulationConfig, results: &[RepetitionResult], failures: Vec<String>) -> SimulationReport {
    let pct = |k: usize| 100.0 * k as f64 / results.len() as f64;
    let points = config
        .eval_points
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            let truth = population_truth(config.design, x);
            let lbs: Vec<f64> = results.iter().map(|r| r.lower[j]).collect();
            let ubs: Vec<f64> = results.iter().map(|r| r.upper[j]).collect();
            let lens: Vec<f64> = results.iter().map(|r| r.band_hi[j] - r.band_lo[j]).collect();
            let (lb_mean, lb_se) = mean_sd(&lbs);
            let (ub_mean, ub_se) = mean_sd(&ubs);
            let cov_b = results.iter().filter(|r| r.band_lo[j] <= truth.lower && truth.upper <= r.band_hi[j]).count();
            let cov_t = results.iter().filter(|r| r.band_lo[j] <= truth.tau && truth.tau <= r.band_hi[j]).count();
            let power = results.iter().filter(|r| r.band_lo[j] > 0.0 || r.band_hi[j] < 0.0).count();
            PointSummary {
                x,
                lb_true: truth.lower,
                ub_true: truth.upper,
                tau_true: truth.tau,
                lb_mean,
                lb_se,
                lb_mean_se: lb_se / (results.len() as f64).sqrt(),
                ub_mean,
                ub_se,
                ub_mean_se: ub_se / (results.len() as f64).sqrt(),
                band_length_mean: mean_sd(&lens).0,
                coverage_bounds_pct: pct(cov_b),
                coverage_tau_pct: pct(cov_t),
                power_pct: pct(power),
            }
        })
        .collect();
    let mut mean_bw = [0.0; 3];
    for r in results {
        for k in 0..3 {
            mean_bw[k] += r.bandwidths[k] / results.len() as f64;
        }
    }
    SimulationReport {
        config: config.clone(),
        points,
        completed: results.len(),
        failed: failures.len(),
        failure_messages: failures,
        discarded_replications: results.iter().map(|r| r.discarded).sum(),
        mean_bandwidths: mean_bw,
    }
}

/// Runs all repetitions (in parallel, reproducibly) and aggregates them.
/// Failed repetitions are excluded and counted; more than 5% is an error.
pub fn run_monte_carlo(config: &SimulationConfig) -> Result<SimulationReport> {
    config.validate()?;
    let outcomes: Vec<Result<RepetitionResult>> =
        (0..config.reps).into_par_iter().map(|r| run_repetition(config, r)).collect();
    let mut results = Vec::with_capacity(config.reps);
    let mut failures = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => results.push(v),
            Err(e) => failures.push(format!("repetition {r}: {e}")),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_SHARE * config.reps as f64 || results.is_empty() {
        return Err(Error::HarnessFailure {
            failed: failures.len(),
            reps: config.reps,
            first: failures.first().cloned().unwrap_or_default(),
        });
    }
    Ok(summarize(config, &results, failures))
}

impl SimulationReport {
    pub fn point(&self, x: f64) -> Option<&PointSummary> {
        self.points.iter().find(|p| (p.x - x).abs() < 1e-12)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for p in &self.points {
            wr.serialize(p)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Fixed-width table with estimates over their standard deviations.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let c = &self.config;
        let _ = writeln!(
            s,
            "{} design, n = {} per group, {} repetitions ({} failed), M = {}, alpha = {}",
            c.design, c.n_per_group, self.completed, self.failed, c.bootstrap_m, c.alpha
        );
        let _ = writeln!(
            s,
            "{:>8} {:>9} {:>9} {:>9} {:>10} {:>10} {:>10}",
            "x", "LB", "UB", "Length", "Cov.bnd%", "Cov.tau%", "0notin%"
        );
        for p in &self.points {
            let _ = writeln!(
                s,
                "{:>8.2} {:>9.3} {:>9.3} {:>9.3} {:>10.1} {:>10.1} {:>10.1}",
                p.x, p.lb_mean, p.ub_mean, p.band_length_mean, p.coverage_bounds_pct, p.coverage_tau_pct, p.power_pct
            );
            let _ = writeln!(s, "{:>8} {:>9} {:>9}", "", format!("({:.3})", p.lb_se), format!("({:.3})", p.ub_se));
        }
        s
    }

    pub fn manifest(&self, wall_seconds: f64) -> serde_json::Value {
        serde_json::json!({
            "config": self.config,
            "completed": self.completed,
            "failed": self.failed,
            "failure_messages": self.failure_messages,
            "discarded_replications": self.discarded_replications,
            "mean_bandwidths": {
                "b_1l": self.mean_bandwidths[0],
                "b_0h": self.mean_bandwidths[1],
                "b_0l": self.mean_bandwidths[2],
            },
            "wall_seconds": wall_seconds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_values() {
        let lo = [1.093, 0.840, 0.563, 0.307];
        let up = [1.887, 2.235, 2.539, 2.794];
        for (i, &x) in EVAL_POINTS.iter().enumerate() {
            let t = population_truth(Design::Sharp, x);
            assert!((t.lower - lo[i]).abs() < 1e-3, "{x}: {}", t.lower);
            assert!((t.upper - up[i]).abs() < 1e-3, "{x}: {}", t.upper);
            assert_eq!(t.tau, 1.5);
        }
        let f = population_truth(Design::Fuzzy, 1.25);
        assert!((f.lower - 1.367).abs() < 1e-3);
        assert!((f.upper - 2.358).abs() < 1e-3);
        assert!((takeup_probability(2.0) - 0.7).abs() < 1e-15);
        assert!((takeup_probability(1.0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn generated_data_contracts() {
        let s = generate_sharp(300, 1);
        assert_eq!(s.len(), 600);
        assert!(s.iter().all(|r| r.x > 0.5 && r.x < 3.0 && r.d == (r.x >= r.c)));
        let f = generate_fuzzy(300, 1);
        assert!(f.iter().all(|r| !(r.d && r.x < r.c)));
        assert!(f.iter().any(|r| !r.d && r.x >= r.c));
        assert_eq!(s.iter().map(|r| r.x).collect::<Vec<_>>(), f.iter().map(|r| r.x).collect::<Vec<_>>());
    }

    #[test]
    fn grid_merges_eval_points() {
        let c = SimulationConfig { eval_points: vec![1.3, 1.5, 1.7], grid_points: 4, ..Default::default() };
        let g = c.grid();
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        for e in [1.3, 1.5, 1.7] {
            assert!(g.contains(&e));
        }
        assert_eq!(SimulationConfig::default().grid().len(), 52);
    }
}
