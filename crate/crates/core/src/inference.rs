//! Pointwise and Imbens-Manski intervals, and the multiplier-bootstrap
//! uniform confidence band for the bound curves.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bandwidth::BandwidthPlan;
use crate::bounds::{BoundsCurve, CutoffPair, Direction, SharpEstimator};
use crate::error::{Error, Result};
use crate::fuzzy::{FuzzyBoundsCurve, FuzzyEstimator};
use crate::kernels::KernelSpec;
use crate::local_poly::RdSample;
use crate::rng::{domain, mammen_vector};

/// Replications below this count are refused.
pub const MIN_REPLICATIONS: usize = 100;
pub const DEFAULT_REPLICATIONS: usize = 1000;
/// Largest tolerated share of discarded replications.
pub const MAX_DISCARD_SHARE: f64 = 0.05;

fn std_normal() -> Normal {
    Normal::standard()
}

/// Standard normal quantile.
pub fn z_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Critical value `c` solving `Φ(c + Δ/σ) − Φ(−c) = 1 − α` with
/// `σ = max(σ_L, σ_U)`, by bisection to 1e-10.
pub fn imbens_manski_critical(delta: f64, sigma_lower: f64, sigma_upper: f64, alpha: f64) -> f64 {
    let n = std_normal();
    let s = sigma_lower.max(sigma_upper);
    let ratio = match delta.max(0.0) / s {
        r if r.is_nan() => 0.0,
        r => r,
    };
    let g = |c: f64| n.cdf(c + ratio) - n.cdf(-c) - (1.0 - alpha);
    let (mut lo, mut hi) = (0.0, 1.0);
    while g(hi) < 0.0 {
        hi *= 2.0;
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointwiseCI {
    pub x0: f64,
    pub ci_lower_bound: [f64; 2],
    pub ci_upper_bound: [f64; 2],
    /// Imbens-Manski interval for the effect itself.
    pub ci_set: [f64; 2],
    pub c_im: f64,
    pub alpha: f64,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidSpec(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

pub fn pointwise_cis(curve: &BoundsCurve, x0: f64, alpha: f64) -> Result<PointwiseCI> {
    check_alpha(alpha)?;
    let i = curve.index_of(x0).ok_or_else(|| Error::InvalidSpec(format!("{x0} is not a grid point of the curve")))?;
    let (vl, vu) = (curve.var_lower[i], curve.var_upper[i]);
    if !(vl >= 0.0 && vl.is_finite() && vu >= 0.0 && vu.is_finite()) {
        return Err(Error::InvalidVariance { x0 });
    }
    let (sl, su) = (vl.sqrt(), vu.sqrt());
    let (l, u) = (curve.lower[i], curve.upper[i]);
    let z = z_quantile(1.0 - alpha / 2.0);
    let c_im = imbens_manski_critical(u - l, sl, su, alpha);
    Ok(PointwiseCI {
        x0,
        ci_lower_bound: [l - z * sl, l + z * sl],
        ci_upper_bound: [u - z * su, u + z * su],
        ci_set: [l - c_im * sl, u + c_im * su],
        c_im,
        alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformBand {
    pub grid: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub alpha: f64,
    pub crit_lower: f64,
    pub crit_upper: f64,
    pub replications: usize,
    pub discarded: usize,
    pub seed: u64,
}

/// True when the band lies entirely above or entirely below zero.
pub fn excludes_zero(band: &UniformBand) -> bool {
    band.lo.iter().all(|&v| v > 0.0) || band.hi.iter().all(|&v| v < 0.0)
}

/// Replication maxima of the studentized deviations, from which bands at any
/// level can be assembled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapDraws {
    pub grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
    /// Maxima over the grid for each kept replication, in replication order.
    pub max_lower: Vec<f64>,
    pub max_upper: Vec<f64>,
    pub replications: usize,
    pub discarded: usize,
    /// First discard reason, if any.
    pub first_discard: Option<String>,
    pub seed: u64,
}

/// Type-1 empirical quantile of unsorted values.
fn empirical_quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

impl BootstrapDraws {
    pub fn band(&self, alpha: f64) -> Result<UniformBand> {
        check_alpha(alpha)?;
        let q = 1.0 - alpha / 2.0;
        let crit_lower = empirical_quantile(&self.max_lower, q).max(0.0);
        let crit_upper = empirical_quantile(&self.max_upper, q).max(0.0);
        let lo = self.lower.iter().zip(&self.var_lower).map(|(l, v)| l - crit_lower * v.sqrt()).collect();
        let hi = self.upper.iter().zip(&self.var_upper).map(|(u, v)| u + crit_upper * v.sqrt()).collect();
        Ok(UniformBand {
            grid: self.grid.clone(),
            lo,
            hi,
            alpha,
            crit_lower,
            crit_upper,
            replications: self.replications,
            discarded: self.discarded,
            seed: self.seed,
        })
    }
}

fn studentized_max(star: &[f64], est: &[f64], var: &[f64]) -> f64 {
    star.iter()
        .zip(est)
        .zip(var)
        .map(|((s, e), v)| {
            let sd = v.sqrt();
            if sd > 0.0 {
                (s - e) / sd
            } else {
                0.0
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn check_interval(pair: &CutoffPair, interval: (f64, f64), grid: &[f64]) -> Result<()> {
    let (a, b) = interval;
    if !(a <= b) {
        return Err(Error::InvalidSpec(format!("invalid interval [{a}, {b}]")));
    }
    pair.check(a)?;
    pair.check(b)?;
    if let Some(&x) = grid.iter().find(|&&x| x < a || x > b) {
        return Err(Error::InvalidSpec(format!("grid point {x} outside the band interval [{a}, {b}]")));
    }
    Ok(())
}

/// Runs `m` replications of `replicate` with multiplier streams keyed by
/// `(seed, stream_domain, replication)`.
pub(crate) fn run_bootstrap<F>(
    est: &BoundsCurve,
    n_obs: usize,
    m: usize,
    seed: u64,
    stream_domain: u64,
    replicate: F,
) -> Result<BootstrapDraws>
where
    F: Fn(&[f64]) -> Result<(Vec<f64>, Vec<f64>)> + Sync,
{
    if m < MIN_REPLICATIONS {
        return Err(Error::InvalidSpec(format!("at least {MIN_REPLICATIONS} replications required, got {m}")));
    }
    let one = |r: usize| -> Result<(f64, f64)> {
        let xi = mammen_vector(seed, stream_domain, r as u64, n_obs);
        let (lo, up) = replicate(&xi)?;
        Ok((studentized_max(&lo, &est.lower, &est.var_lower), studentized_max(&up, &est.upper, &est.var_upper)))
    };
    let results: Vec<Result<(f64, f64)>> = (0..m).into_par_iter().map(one).collect();
    let mut draws = BootstrapDraws {
        grid: est.grid.clone(),
        lower: est.lower.clone(),
        upper: est.upper.clone(),
        var_lower: est.var_lower.clone(),
        var_upper: est.var_upper.clone(),
        max_lower: Vec::with_capacity(m),
        max_upper: Vec::with_capacity(m),
        replications: m,
        discarded: 0,
        first_discard: None,
        seed,
    };
    for r in results {
        match r {
            Ok((a, b)) if a.is_finite() && b.is_finite() => {
                draws.max_lower.push(a);
                draws.max_upper.push(b);
            }
            other => {
                draws.discarded += 1;
                if draws.first_discard.is_none() {
                    draws.first_discard = Some(match other {
                        Err(e) => e.to_string(),
                        Ok(_) => "non-finite studentized deviation".into(),
                    });
                }
            }
        }
    }
    if draws.discarded as f64 > MAX_DISCARD_SHARE * m as f64 || draws.max_lower.is_empty() {
        return Err(Error::BootstrapInstability { discarded: draws.discarded, replications: m });
    }
    Ok(draws)
}

/// Multiplier bootstrap for the sharp bounds; use [`BootstrapDraws::band`]
/// to assemble bands at one or more levels from the same draws.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_sharp(
    data: &[RdSample],
    pair: CutoffPair,
    interval: (f64, f64),
    grid: &[f64],
    plan: &BandwidthPlan,
    kernel: KernelSpec,
    dir: Direction,
    m: usize,
    seed: u64,
) -> Result<BootstrapDraws> {
    check_interval(&pair, interval, grid)?;
    let est = SharpEstimator::new(data, pair, grid, plan, kernel, dir)?;
    sharp_draws(&est, m, seed, domain::BOOTSTRAP)
}

pub(crate) fn sharp_draws(est: &SharpEstimator, m: usize, seed: u64, stream_domain: u64) -> Result<BootstrapDraws> {
    run_bootstrap(&est.curve(), est.n_obs, m, seed, stream_domain, |xi| est.replicate(xi))
}

pub(crate) fn fuzzy_draws(est: &FuzzyEstimator, m: usize, seed: u64, stream_domain: u64) -> Result<BootstrapDraws> {
    run_bootstrap(&est.curve().as_bounds(), est.n_obs, m, seed, stream_domain, |xi| est.replicate(xi))
}

#[allow(clippy::too_many_arguments)]
pub fn uniform_band_sharp(
    data: &[RdSample],
    pair: CutoffPair,
    interval: (f64, f64),
    grid: &[f64],
    plan: &BandwidthPlan,
    kernel: KernelSpec,
    m: usize,
    alpha: f64,
    seed: u64,
) -> Result<UniformBand> {
    check_alpha(alpha)?;
    bootstrap_sharp(data, pair, interval, grid, plan, kernel, Direction::IncreasingDominant, m, seed)?.band(alpha)
}

#[allow(clippy::too_many_arguments)]
pub fn bootstrap_fuzzy(
    data: &[RdSample],
    pair: CutoffPair,
    interval: (f64, f64),
    grid: &[f64],
    plan: &BandwidthPlan,
    kernel: KernelSpec,
    p_min: f64,
    m: usize,
    seed: u64,
) -> Result<(FuzzyBoundsCurve, BootstrapDraws)> {
    check_interval(&pair, interval, grid)?;
    let est = FuzzyEstimator::new(data, pair, grid, plan, kernel, p_min)?;
    let draws = fuzzy_draws(&est, m, seed, domain::BOOTSTRAP)?;
    Ok((est.curve().clone(), draws))
}

#[allow(clippy::too_many_arguments)]
pub fn uniform_band_fuzzy(
    data: &[RdSample],
    pair: CutoffPair,
    interval: (f64, f64),
    grid: &[f64],
    plan: &BandwidthPlan,
    kernel: KernelSpec,
    m: usize,
    alpha: f64,
    seed: u64,
) -> Result<UniformBand> {
    check_alpha(alpha)?;
    let p_min = crate::fuzzy::DEFAULT_P_MIN;
    bootstrap_fuzzy(data, pair, interval, grid, plan, kernel, p_min, m, seed)?.1.band(alpha)
}
