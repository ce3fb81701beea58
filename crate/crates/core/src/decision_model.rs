//! Agent effort choice when the running variable is a noisy, effort-driven
//! score, and the untreated regression curves it induces per cutoff group.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::bandwidth::imse_bandwidth;
use crate::bounds::CutoffPair;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::local_poly::{Subsample, Window};
use crate::quadrature::adaptive_simpson;
use crate::rng::{domain, stream};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type CostFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

pub const DEFAULT_E_MAX: f64 = 10.0;
pub const GRID_POINTS: usize = 501;
pub const GOLDEN_TOL: f64 = 1e-10;
/// Agents simulated per random stream.
pub const AGENT_CHUNK: usize = 4096;
/// Effort gaps below this count as cutoff-invariant.
pub const PERIODIC_TOL: f64 = 1e-6;

/// Density of the score noise.
#[derive(Clone)]
pub enum NoiseDensity {
    /// `(1 - |z|)_+`
    Triangular,
    Uniform {
        lo: f64,
        hi: f64,
    },
    Gaussian {
        sd: f64,
    },
    /// `(1 + a sin(2π z / period)) / (2w)` on `[-w, w]`.
    PeriodicSine {
        half_width: f64,
        amplitude: f64,
        period: f64,
    },
    Custom {
        pdf: ScalarFn,
        lo: f64,
        hi: f64,
    },
}

impl fmt::Debug for NoiseDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Triangular => f.write_str("Triangular"),
            Self::Uniform { lo, hi } => write!(f, "Uniform({lo}, {hi})"),
            Self::Gaussian { sd } => write!(f, "Gaussian(sd={sd})"),
            Self::PeriodicSine { half_width, amplitude, period } => {
                write!(f, "PeriodicSine(w={half_width}, a={amplitude}, period={period})")
            }
            Self::Custom { lo, hi, .. } => write!(f, "Custom[{lo}, {hi}]"),
        }
    }
}

impl NoiseDensity {
    pub fn pdf(&self, z: f64) -> f64 {
        match self {
            Self::Triangular => (1.0 - z.abs()).max(0.0),
            Self::Uniform { lo, hi } => {
                if z >= *lo && z <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            Self::Gaussian { sd } => (-0.5 * (z / sd).powi(2)).exp() / (sd * (2.0 * PI).sqrt()),
            Self::PeriodicSine { half_width: w, amplitude: a, period: p } => {
                if z.abs() <= *w {
                    (1.0 + a * (2.0 * PI * z / p).sin()) / (2.0 * w)
                } else {
                    0.0
                }
            }
            Self::Custom { pdf, lo, hi } => {
                if z >= *lo && z <= *hi {
                    pdf(z)
                } else {
                    0.0
                }
            }
        }
    }

    /// `P(η ≥ z)`
    pub fn tail(&self, z: f64) -> f64 {
        match self {
            Self::Triangular => {
                if z <= -1.0 {
                    1.0
                } else if z <= 0.0 {
                    1.0 - (1.0 + z).powi(2) / 2.0
                } else if z < 1.0 {
                    (1.0 - z).powi(2) / 2.0
                } else {
                    0.0
                }
            }
            Self::Uniform { lo, hi } => ((hi - z) / (hi - lo)).clamp(0.0, 1.0),
            Self::Gaussian { sd } => 1.0 - StatNormal::standard().cdf(z / sd),
            Self::PeriodicSine { half_width: w, amplitude: a, period: p } => {
                if z <= -w {
                    1.0
                } else if z >= *w {
                    0.0
                } else {
                    let k = 2.0 * PI / p;
                    ((w - z) + a / k * ((k * z).cos() - (k * w).cos())) / (2.0 * w)
                }
            }
            Self::Custom { pdf, lo, hi } => {
                if z >= *hi {
                    0.0
                } else {
                    adaptive_simpson(&|t| pdf(t), z.max(*lo), *hi, 1e-12)
                }
            }
        }
    }

    fn support(&self) -> (f64, f64) {
        match self {
            Self::Triangular => (-1.0, 1.0),
            Self::Uniform { lo, hi } => (*lo, *hi),
            Self::Gaussian { sd } => (-12.0 * sd, 12.0 * sd),
            Self::PeriodicSine { half_width, .. } => (-half_width, *half_width),
            Self::Custom { lo, hi, .. } => (*lo, *hi),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Triangular => rng.random::<f64>() + rng.random::<f64>() - 1.0,
            Self::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Self::Gaussian { sd } => Normal::new(0.0, *sd).expect("validated sd").sample(rng),
            Self::PeriodicSine { half_width: w, amplitude: a, .. } => {
                let top = (1.0 + a.abs()) / (2.0 * w);
                loop {
                    let z = -w + 2.0 * w * rng.random::<f64>();
                    if rng.random::<f64>() * top <= self.pdf(z) {
                        return z;
                    }
                }
            }
            Self::Custom { lo, hi, .. } => {
                let top = 1.05 * (0..=1000).map(|i| self.pdf(lo + (hi - lo) * i as f64 / 1000.0)).fold(0.0, f64::max);
                loop {
                    let z = lo + (hi - lo) * rng.random::<f64>();
                    if rng.random::<f64>() * top <= self.pdf(z) {
                        return z;
                    }
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        match self {
            Self::Uniform { lo, hi } if !(lo < hi && ok_scale(hi - lo)) => {
                return bad(format!("uniform noise needs lo < hi, got [{lo}, {hi}]"))
            }
            Self::Gaussian { sd } if !(*sd > 0.0 && ok_scale(*sd)) => {
                return bad(format!("gaussian noise needs sd > 0, got {sd}"))
            }
            Self::PeriodicSine { half_width, amplitude, period }
                if !(ok_scale(2.0 * half_width) && ok_scale(*period) && amplitude.abs() <= 1.0) =>
            {
                return bad("periodic sine noise needs w > 0, period > 0, |a| <= 1".into())
            }
            Self::Custom { lo, hi, .. } if !(lo < hi) => return bad("custom noise needs lo < hi".into()),
            Self::Custom { .. } => {}
            _ => return Ok(()),
        }
        let (lo, hi) = self.support();
        if (0..=1000).any(|i| !(self.pdf(lo + (hi - lo) * i as f64 / 1000.0) >= 0.0)) {
            return bad("noise density is negative or non-finite".into());
        }
        let mass = adaptive_simpson(&|z| self.pdf(z), lo, hi, 1e-10);
        if (mass - 1.0).abs() > 1e-6 {
            return bad(format!("noise density integrates to {mass}, not 1"));
        }
        Ok(())
    }
}

fn ok_scale(v: f64) -> bool {
    v > 0.0 && v.is_finite() && (1.0 / v).is_finite()
}

/// `triangular`, `uniform:LO:HI`, `gaussian:SD` or `periodic:W:A:PERIOD`.
impl std::str::FromStr for NoiseDensity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let name = parts.next().unwrap_or("").trim().to_ascii_lowercase();
        let args = parts
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::InvalidConfig(format!("noise: `{p}` is not a finite number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let noise = match (name.as_str(), args.as_slice()) {
            ("triangular", []) => Self::Triangular,
            ("uniform", [lo, hi]) => Self::Uniform { lo: *lo, hi: *hi },
            ("gaussian", [sd]) => Self::Gaussian { sd: *sd },
            ("periodic", [w, a, p]) => Self::PeriodicSine { half_width: *w, amplitude: *a, period: *p },
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "noise: expected triangular, uniform:LO:HI, gaussian:SD or periodic:W:A:PERIOD, got `{s}`"
                )))
            }
        };
        noise.validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(noise)
    }
}

/// Uniform ability distribution `ε ~ U(lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ability {
    pub lo: f64,
    pub hi: f64,
}

impl Ability {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.lo + (self.hi - self.lo) * rng.random::<f64>()
    }
}

#[derive(Clone)]
pub struct DecisionModelSpec {
    /// `u(s)`
    pub utility: ScalarFn,
    /// `s(e)`
    pub score: ScalarFn,
    /// `y(e)`
    pub outcome: ScalarFn,
    /// `K(e, ε)`
    pub cost: CostFn,
    pub beta: f64,
    pub tau_belief: f64,
    pub gamma: f64,
    pub noise: NoiseDensity,
    /// Ability distributions of the low- and high-cutoff groups.
    pub ability: [Ability; 2],
    pub cutoffs: CutoffPair,
    pub manipulable: bool,
    pub e_max: f64,
    /// SD of the Gaussian outcome noise.
    pub outcome_sd: f64,
}

impl fmt::Debug for DecisionModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DecisionModelSpec")
            .field("beta", &self.beta)
            .field("tau_belief", &self.tau_belief)
            .field("gamma", &self.gamma)
            .field("noise", &self.noise)
            .field("ability", &self.ability)
            .field("cutoffs", &self.cutoffs)
            .field("manipulable", &self.manipulable)
            .field("e_max", &self.e_max)
            .finish_non_exhaustive()
    }
}

impl DecisionModelSpec {
    /// `u(s) = s = 5√e`, `y = 10√e`, `K = 15(2 − ε)e`, triangular noise,
    /// `τ̃ = 1`, `γ = 0`, `β = 1`, `ε ~ U(0, 1)`, cutoffs 2 and 3.
    pub fn example1() -> Self {
        Self {
            utility: Arc::new(|s| s),
            score: Arc::new(|e| 5.0 * e.sqrt()),
            outcome: Arc::new(|e| 10.0 * e.sqrt()),
            cost: Arc::new(|e, eps| 15.0 * (2.0 - eps) * e),
            beta: 1.0,
            tau_belief: 1.0,
            gamma: 0.0,
            noise: NoiseDensity::Triangular,
            ability: [Ability { lo: 0.0, hi: 1.0 }; 2],
            cutoffs: CutoffPair { l: 2.0, h: 3.0 },
            manipulable: true,
            e_max: DEFAULT_E_MAX,
            outcome_sd: 1.0,
        }
    }

    /// As [`Self::example1`] with `ε ~ U(2/3, 5/3)` in the high-cutoff group.
    pub fn example2() -> Self {
        Self { ability: [Ability { lo: 0.0, hi: 1.0 }, Ability { lo: 2.0 / 3.0, hi: 5.0 / 3.0 }], ..Self::example1() }
    }

    /// Score `2 + 6e/(1 + e)` with range (2, 8), cutoffs 4 and 6, and the
    /// given noise density.
    pub fn periodicity_setup(noise: NoiseDensity) -> Self {
        Self {
            utility: Arc::new(|s| s),
            score: Arc::new(|e| 2.0 + 6.0 * e / (1.0 + e)),
            outcome: Arc::new(|e| 2.0 * e.sqrt()),
            cost: Arc::new(|e, eps| 3.0 * (2.0 - eps) * e * e),
            beta: 1.0,
            tau_belief: 2.0,
            gamma: 0.0,
            noise,
            ability: [Ability { lo: 0.0, hi: 1.0 }; 2],
            cutoffs: CutoffPair { l: 4.0, h: 6.0 },
            manipulable: true,
            e_max: DEFAULT_E_MAX,
            outcome_sd: 1.0,
        }
    }

    pub fn objective(&self, e: f64, epsilon: f64, cutoff: f64) -> f64 {
        let s = (self.score)(e);
        let mut future = (self.outcome)(e);
        if self.manipulable {
            future += self.tau_belief * self.noise.tail(cutoff - s);
        }
        (self.utility)(s) - (self.cost)(e, epsilon) + self.beta * future
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidSpec(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.e_max > 0.0 && self.e_max.is_finite()) {
            return Err(Error::InvalidSpec(format!("e_max must be positive, got {}", self.e_max)));
        }
        if !(self.outcome_sd >= 0.0) {
            return Err(Error::InvalidSpec("outcome noise sd must be non-negative".into()));
        }
        for a in &self.ability {
            if !(a.lo <= a.hi) {
                return Err(Error::InvalidSpec(format!("ability range [{}, {}] is empty", a.lo, a.hi)));
            }
        }
        self.noise.validate()?;
        let h = self.e_max / (GRID_POINTS - 1) as f64;
        for a in &self.ability {
            for eps in [a.lo, 0.5 * (a.lo + a.hi), a.hi] {
                let k: Vec<f64> = (0..GRID_POINTS).map(|i| (self.cost)(i as f64 * h, eps)).collect();
                if k.windows(3).any(|w| w[0] - 2.0 * w[1] + w[2] < -1e-8) {
                    return Err(Error::InvalidSpec(format!("cost is not convex in effort at ε={eps}")));
                }
            }
        }
        Ok(())
    }
}

/// Case of the closed-form Example 1 solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Example1Branch {
    /// `1 / (4(2 − ε)²)`
    Interior,
    /// `(4 + C)² / (17 − 6ε)²`
    Above,
    /// `(4 − C)² / (7 − 6ε)²`
    Below,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffortSolution {
    pub epsilon: f64,
    pub cutoff: f64,
    pub effort: f64,
    pub objective: f64,
    pub branch: Option<Example1Branch>,
}

/// Closed-form optimal effort in Example 1.
pub fn example1_effort(epsilon: f64, cutoff: f64) -> EffortSolution {
    let c = cutoff;
    let (effort, branch) =
        if epsilon <= (4.0 * c - 9.0) / (2.0 * (c - 1.0)) || epsilon > (4.0 * c - 1.0) / (2.0 * (c + 1.0)) {
            (1.0 / (4.0 * (2.0 - epsilon).powi(2)), Example1Branch::Interior)
        } else if epsilon > (6.0 * c - 10.0) / (3.0 * c) {
            ((4.0 + c).powi(2) / (17.0 - 6.0 * epsilon).powi(2), Example1Branch::Above)
        } else {
            ((4.0 - c).powi(2) / (7.0 - 6.0 * epsilon).powi(2), Example1Branch::Below)
        };
    let objective = DecisionModelSpec::example1().objective(effort, epsilon, cutoff);
    EffortSolution { epsilon, cutoff, effort, objective, branch: Some(branch) }
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Maximizes the objective on `[0, e_max]`: a 501-point grid locates every
/// local maximum, each is refined by golden-section search, and the best wins.
pub fn solve_effort_numeric(spec: &DecisionModelSpec, epsilon: f64, cutoff: f64, e_max: f64) -> Result<EffortSolution> {
    if !(e_max > 0.0 && e_max.is_finite()) {
        return Err(Error::InvalidSpec(format!("e_max must be positive, got {e_max}")));
    }
    let f = |e: f64| spec.objective(e, epsilon, cutoff);
    let h = e_max / (GRID_POINTS - 1) as f64;
    let vals: Vec<f64> = (0..GRID_POINTS).map(|i| f(i as f64 * h)).collect();
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "objective is not finite at e={} (ε={epsilon}, C={cutoff})",
            i as f64 * h
        )));
    }
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for i in 0..GRID_POINTS {
        let left = if i == 0 { f64::NEG_INFINITY } else { vals[i - 1] };
        let right = if i + 1 == GRID_POINTS { f64::NEG_INFINITY } else { vals[i + 1] };
        if vals[i] >= left && vals[i] >= right {
            let a = i.saturating_sub(1) as f64 * h;
            let b = ((i + 1).min(GRID_POINTS - 1)) as f64 * h;
            let mut cand = golden_max(f, a, b);
            for end in [a, b] {
                let v = f(end);
                if v > cand.1 {
                    cand = (end, v);
                }
            }
            if cand.1 > best.1 {
                best = cand;
            }
        }
    }
    Ok(EffortSolution { epsilon, cutoff, effort: best.0, objective: best.1, branch: None })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionCurves {
    pub grid: Vec<f64>,
    /// `E[Y(0) | X = x]` for the low- and high-cutoff groups.
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub se_low: Vec<f64>,
    pub se_high: Vec<f64>,
    /// `high − low`
    pub gap: Vec<f64>,
    pub gap_se: Vec<f64>,
    pub bandwidths: [f64; 2],
    pub n_agents: usize,
}

impl RegressionCurves {
    /// Largest studentized deviation `|B(x) − B(x_ref)| / se` over the grid.
    pub fn max_gap_deviation(&self, x_ref: f64) -> Option<f64> {
        let r = self.grid.iter().position(|&g| (g - x_ref).abs() < 1e-12)?;
        (0..self.grid.len())
            .filter(|&i| i != r)
            .map(|i| (self.gap[i] - self.gap[r]).abs() / (self.gap_se[i].powi(2) + self.gap_se[r].powi(2)).sqrt())
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["x", "low", "high", "se_low", "se_high", "gap", "gap_se"])?;
        for i in 0..self.grid.len() {
            wr.write_record([
                self.grid[i].to_string(),
                self.low[i].to_string(),
                self.high[i].to_string(),
                self.se_low[i].to_string(),
                self.se_high[i].to_string(),
                self.gap[i].to_string(),
                self.gap_se[i].to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Simulated `(X, Y(0))` for `n` agents of one group.
pub fn simulate_agents(spec: &DecisionModelSpec, group: usize, n: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let cutoff = if group == 0 { spec.cutoffs.l } else { spec.cutoffs.h };
    let shift = if group == 0 { 0.0 } else { spec.gamma };
    let ability = spec.ability[group];
    let y_noise = Normal::new(0.0, spec.outcome_sd).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let chunks = n.div_ceil(AGENT_CHUNK);
    let parts: Vec<Result<Vec<(f64, f64)>>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, domain::AGENTS, ((group as u64) << 32) | k as u64);
            let len = AGENT_CHUNK.min(n - k * AGENT_CHUNK);
            (0..len)
                .map(|_| {
                    let eps = ability.sample(&mut rng);
                    let e = solve_effort_numeric(spec, eps, cutoff, spec.e_max)?.effort;
                    let x = (spec.score)(e) + spec.noise.sample(&mut rng);
                    let y = (spec.outcome)(e) + shift + y_noise.sample(&mut rng);
                    Ok((x, y))
                })
                .collect()
        })
        .collect();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for p in parts {
        for (x, y) in p? {
            xs.push(x);
            ys.push(y);
        }
    }
    Ok((xs, ys))
}

/// Local linear fits with heteroskedasticity-robust standard errors built
/// from residuals of the fit at each grid point.
fn local_linear_curve(sub: &Subsample, grid: &[f64], b: f64, kernel: KernelSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut est = Vec::with_capacity(grid.len());
    let mut se = Vec::with_capacity(grid.len());
    for &x0 in grid {
        let win = Window::new(sub.x(), x0, b, kernel);
        let coef = win.fit(sub.y(), None, 1)?;
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (&k, &t) in win.kw.iter().zip(&win.t) {
            s0 += k;
            s1 += k * t;
            s2 += k * t * t;
        }
        let det = s0 * s2 - s1 * s1;
        let ys = &sub.y()[win.rows()];
        let var: f64 = win
            .kw
            .iter()
            .zip(&win.t)
            .zip(ys)
            .map(|((&k, &t), &y)| {
                let l = k * (s2 - s1 * t) / det;
                let u = y - (coef[0] + coef[1] * t * b);
                l * l * u * u
            })
            .sum();
        est.push(coef[0]);
        se.push(var.sqrt());
    }
    Ok((est, se))
}

/// Simulates both groups and estimates `E[Y(0) | X = x]` on `grid_x` with an
/// IMSE bandwidth over the grid hull (or `bandwidth` when given).
pub fn regression_curves(
    spec: &DecisionModelSpec,
    grid_x: &[f64],
    n_agents: usize,
    seed: u64,
    bandwidth: Option<f64>,
) -> Result<RegressionCurves> {
    spec.validate()?;
    if grid_x.is_empty() || n_agents == 0 {
        return Err(Error::InvalidSpec("regression curves need a grid and at least one agent".into()));
    }
    let kernel = KernelSpec::TRIANGULAR;
    let lo = grid_x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid_x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut curves = Vec::with_capacity(2);
    let mut bandwidths = [0.0; 2];
    for g in 0..2 {
        let (x, y) = simulate_agents(spec, g, n_agents, seed)?;
        let sub = Subsample::from_xy(&x, &y);
        let b = match bandwidth {
            Some(b) => b,
            None => imse_bandwidth(&sub, (lo, hi), kernel)?.value,
        };
        bandwidths[g] = b;
        curves.push(local_linear_curve(&sub, grid_x, b, kernel)?);
    }
    let (high, se_high) = curves.pop().expect("two groups");
    let (low, se_low) = curves.pop().expect("two groups");
    let gap = high.iter().zip(&low).map(|(h, l)| h - l).collect();
    let gap_se = se_high.iter().zip(&se_low).map(|(a, b)| (a * a + b * b).sqrt()).collect();
    Ok(RegressionCurves { grid: grid_x.to_vec(), low, high, se_low, se_high, gap, gap_se, bandwidths, n_agents })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodicityReport {
    pub max_effort_gap: f64,
    pub periodic_verdict: bool,
}

/// Largest difference in optimal effort between the two cutoffs over
/// `epsilon_grid`; the verdict is true when it is below 1e-6.
pub fn periodicity_check(spec: &DecisionModelSpec, epsilon_grid: &[f64]) -> Result<PeriodicityReport> {
    if !spec.manipulable {
        return Err(Error::InvalidSpec("periodicity check requires a manipulable running variable".into()));
    }
    spec.validate()?;
    let mut gap = 0.0f64;
    for &eps in epsilon_grid {
        let a = solve_effort_numeric(spec, eps, spec.cutoffs.l, spec.e_max)?.effort;
        let b = solve_effort_numeric(spec, eps, spec.cutoffs.h, spec.e_max)?.effort;
        gap = gap.max((a - b).abs());
    }
    Ok(PeriodicityReport { max_effort_gap: gap, periodic_verdict: gap < PERIODIC_TOL })
}
