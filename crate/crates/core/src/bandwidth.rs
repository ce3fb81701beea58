//! Plug-in MSE- and IMSE-optimal bandwidths for local linear regression.
//!
//! The optimal bandwidth solves `b^5 = V σ² / (4 n f B² m''²)` where `B` and
//! `V` are the bias and variance constants of the (interior or boundary)
//! local linear equivalent kernel. The curvature `m''` and residual variance
//! `σ²` come from a global quartic pilot fit, and `f` from a kernel density
//! estimate with a normal-reference pilot bandwidth.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::{solve_spd, MAX_CONDITION};
use crate::local_poly::{Boundary, Subsample};
use crate::quadrature::GaussLegendre;

/// Below this subsample size the selector returns half the x-range.
pub const MIN_PILOT_N: usize = 20;

/// Lower clamp: distance from `x0` to its `NN_FLOOR`-th nearest neighbour.
pub const NN_FLOOR: usize = 10;

const IMSE_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Clamp {
    None,
    Lower,
    Upper,
    /// Rule-of-thumb span used because the pilot could not be formed.
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandwidthChoice {
    pub value: f64,
    /// Unclamped plug-in value (may be infinite when the curvature vanishes).
    pub raw: f64,
    pub clamp: Clamp,
}

/// Bandwidths for the three estimation arms. Bias-correction bandwidths
/// equal these by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandwidthPlan {
    pub b_1l: f64,
    pub b_0h: f64,
    pub b_0l: f64,
}

impl BandwidthPlan {
    pub fn new(b_1l: f64, b_0h: f64, b_0l: f64) -> Result<Self> {
        for b in [b_1l, b_0h, b_0l] {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidBandwidth(b));
            }
        }
        Ok(Self { b_1l, b_0h, b_0l })
    }
}

/// Outcome of automatic plan selection.
#[derive(Debug, Clone, Serialize)]
pub struct PlanSelection {
    pub plan: BandwidthPlan,
    pub choices: [BandwidthChoice; 3],
    pub warnings: Vec<String>,
}

/// IMSE bandwidths over `interval` for the first two arms and an MSE
/// bandwidth at `boundary_point` for the third. Pilot failures fall back to
/// the rule-of-thumb span and are reported as warnings.
pub fn select_plan(
    arm_1l: &Subsample,
    arm_0h: &Subsample,
    arm_0l: &Subsample,
    interval: (f64, f64),
    boundary_point: f64,
    kernel: KernelSpec,
) -> Result<PlanSelection> {
    let mut warnings = Vec::new();
    let mut resolve = |name: &str, r: Result<BandwidthChoice>| -> Result<BandwidthChoice> {
        match r {
            Ok(c) => {
                if c.clamp == Clamp::Fallback {
                    warnings.push(format!("{name}: fewer than {MIN_PILOT_N} observations, using half the x-range"));
                }
                Ok(c)
            }
            Err(Error::PilotFailure { reason, fallback }) => {
                warnings.push(format!("{name}: pilot failed ({reason}), using fallback {fallback}"));
                Ok(BandwidthChoice { value: fallback, raw: f64::NAN, clamp: Clamp::Fallback })
            }
            Err(e) => Err(e),
        }
    };
    let c1 = resolve("b_1l", imse_bandwidth(arm_1l, interval, kernel))?;
    let c2 = resolve("b_0h", imse_bandwidth(arm_0h, interval, kernel))?;
    let c3 = resolve("b_0l", mse_bandwidth(arm_0l, boundary_point, kernel))?;
    Ok(PlanSelection { plan: BandwidthPlan::new(c1.value, c2.value, c3.value)?, choices: [c1, c2, c3], warnings })
}

/// Bias and variance constants of the local linear estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LinearConstants {
    pub bias: f64,
    pub variance: f64,
}

pub(crate) fn linear_constants(kernel: KernelSpec, boundary: Boundary) -> Result<LinearConstants> {
    let rule = GaussLegendre::new(16);
    let half = |f: &dyn Fn(f64) -> f64| rule.integrate(0.0, 1.0, f);
    match boundary {
        Boundary::Interior => {
            let r = 2.0 * half(&|w| kernel.eval(w).powi(2));
            Ok(LinearConstants { bias: kernel.moment(2) / 2.0, variance: r })
        }
        _ => {
            let a = kernel.boundary_linear_coefficients()?;
            let kb = |w: f64| (a[0] + a[1] * w) * kernel.eval(w);
            Ok(LinearConstants { bias: half(&|w| w * w * kb(w)) / 2.0, variance: half(&|w| kb(w).powi(2)) })
        }
    }
}

/// Global quartic pilot on the standardized running variable.
#[derive(Debug, Clone, Copy)]
struct Pilot {
    coef: [f64; 5],
    mean: f64,
    sd: f64,
    sigma2: f64,
}

impl Pilot {
    fn fit(sub: &Subsample) -> std::result::Result<Self, String> {
        let n = sub.len();
        let x = sub.x();
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0 && sd.is_finite()) {
            return Err("running variable has no spread".into());
        }
        let mut a = [[0.0; 5]; 5];
        let mut b = [0.0; 5];
        for (&xi, &yi) in x.iter().zip(sub.y()) {
            let t = (xi - mean) / sd;
            let mut p = [1.0; 9];
            for k in 1..9 {
                p[k] = p[k - 1] * t;
            }
            for j in 0..5 {
                b[j] += p[j] * yi;
                for k in 0..5 {
                    a[j][k] += p[j + k];
                }
            }
        }
        let sol = solve_spd(&a, &b)
            .filter(|s| s.condition <= MAX_CONDITION)
            .ok_or_else(|| "singular quartic pilot design".to_string())?;
        let coef = sol.x;
        let rss: f64 = x
            .iter()
            .zip(sub.y())
            .map(|(&xi, &yi)| {
                let t = (xi - mean) / sd;
                let fit = coef[0] + t * (coef[1] + t * (coef[2] + t * (coef[3] + t * coef[4])));
                (yi - fit).powi(2)
            })
            .sum();
        let sigma2 = rss / (n - 5) as f64;
        if !sigma2.is_finite() {
            return Err("non-finite pilot residual variance".into());
        }
        Ok(Self { coef, mean, sd, sigma2 })
    }

    fn second_derivative(&self, x: f64) -> f64 {
        let t = (x - self.mean) / self.sd;
        let c = &self.coef;
        (2.0 * c[2] + 6.0 * c[3] * t + 12.0 * c[4] * t * t) / (self.sd * self.sd)
    }
}

/// Normal-reference pilot bandwidth for the density estimate, rescaled to
/// the kernel's canonical scale.
fn density_pilot_bandwidth(sub: &Subsample, kernel: KernelSpec) -> f64 {
    let x = sub.x();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let q = |p: f64| x[((p * (n - 1.0)).round() as usize).min(x.len() - 1)];
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let lc = linear_constants(kernel, Boundary::Interior).expect("interior constants");
    let canonical = (lc.variance / kernel.moment(2).powi(2)).powf(0.2);
    let gaussian = (0.5 / std::f64::consts::PI.sqrt()).powf(0.2);
    1.06 * spread * n.powf(-0.2) * canonical / gaussian
}

fn pilot_density(sub: &Subsample, x0: f64, h: f64, kernel: KernelSpec) -> f64 {
    let n = sub.len() as f64;
    let s: f64 = sub.x().iter().map(|&xi| kernel.eval((xi - x0) / h)).sum();
    let f = s / (n * h);
    match sub.boundary_at(x0) {
        Boundary::Interior => f,
        _ => f / kernel.half_mass(),
    }
}

fn nn_distance(x: &[f64], x0: f64) -> f64 {
    let mut d: Vec<f64> = x.iter().map(|v| (v - x0).abs()).collect();
    let k = NN_FLOOR.min(d.len()) - 1;
    d.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    d[k] * (1.0 + 1e-9)
}

fn half_range(sub: &Subsample) -> f64 {
    let (lo, hi) = sub.x_range().unwrap_or((0.0, 0.0));
    0.5 * (hi - lo)
}

fn clamp(raw: f64, lower: f64, upper: f64) -> BandwidthChoice {
    let value = raw.min(upper).max(lower);
    let clamp = if value == lower && raw < lower {
        Clamp::Lower
    } else if value == upper && raw > upper {
        Clamp::Upper
    } else {
        Clamp::None
    };
    BandwidthChoice { value, raw, clamp }
}

fn precheck(sub: &Subsample) -> Result<Option<BandwidthChoice>> {
    if sub.is_empty() {
        return Err(Error::InvalidSpec("bandwidth selection on an empty subsample".into()));
    }
    if sub.len() < MIN_PILOT_N {
        let v = half_range(sub);
        if !(v > 0.0) {
            return Err(Error::PilotFailure { reason: "no spread in running variable".into(), fallback: f64::NAN });
        }
        return Ok(Some(BandwidthChoice { value: v, raw: f64::NAN, clamp: Clamp::Fallback }));
    }
    Ok(None)
}

/// MSE-optimal bandwidth at `x0`. Boundary constants are used when `x0` lies
/// at or beyond an edge of the subsample.
pub fn mse_bandwidth(sub: &Subsample, x0: f64, kernel: KernelSpec) -> Result<BandwidthChoice> {
    imse_core(sub, (x0, x0), kernel)
}

/// IMSE-optimal bandwidth over `interval`, integrating the bias and variance
/// terms with a 64-point Gauss-Legendre rule.
pub fn imse_bandwidth(sub: &Subsample, interval: (f64, f64), kernel: KernelSpec) -> Result<BandwidthChoice> {
    let (a, b) = interval;
    if !(a <= b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidSpec(format!("invalid interval [{a}, {b}]")));
    }
    imse_core(sub, interval, kernel)
}

fn imse_core(sub: &Subsample, (a, b): (f64, f64), kernel: KernelSpec) -> Result<BandwidthChoice> {
    if let Some(c) = precheck(sub)? {
        return Ok(c);
    }
    let fallback = half_range(sub);
    let fail = |reason: String| Error::PilotFailure { reason, fallback };
    let pilot = Pilot::fit(sub).map_err(fail)?;
    let h_pilot = density_pilot_bandwidth(sub, kernel);
    let boundary = if a == b { sub.boundary_at(a) } else { Boundary::Interior };
    let lc = linear_constants(kernel, boundary)?;

    let rule = GaussLegendre::new(IMSE_NODES);
    let nodes: Vec<(f64, f64)> = if a == b { vec![(a, 1.0)] } else { rule.mapped(a, b).collect() };
    let (mut curv, mut inv_f, mut mass) = (0.0, 0.0, 0.0);
    for (x, w) in nodes {
        let f = pilot_density(sub, x, h_pilot, kernel);
        if !(f > 0.0) {
            return Err(fail(format!("zero pilot density at {x}")));
        }
        curv += w * pilot.second_derivative(x).powi(2);
        inv_f += w / f;
        mass += w;
    }
    curv /= mass;
    inv_f /= mass;
    // curvature at rounding level relative to the response is exact linearity
    let y_scale = sub.y().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if curv.sqrt() * fallback * fallback <= 1e-9 * y_scale {
        curv = 0.0;
    }

    let n = sub.len() as f64;
    let raw = (lc.variance * pilot.sigma2 * inv_f / (4.0 * n * lc.bias * lc.bias * curv)).powf(0.2);
    let raw = if raw.is_nan() { f64::INFINITY } else { raw };
    let lower = nn_distance(sub.x(), a).max(nn_distance(sub.x(), b));
    Ok(clamp(raw, lower, fallback))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, Uniform};

    fn draw(n: usize, seed: u64, scale: f64) -> Subsample {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ux = Uniform::new(0.0, 2.0).unwrap();
        let e = Normal::new(0.0, 0.3).unwrap();
        let x: Vec<f64> = (0..n).map(|_| ux.sample(&mut rng)).collect();
        let y: Vec<f64> = x.iter().map(|&v| (1.5 * v).sin() + v * v * v / 3.0 + e.sample(&mut rng)).collect();
        let xs: Vec<f64> = x.iter().map(|v| v * scale).collect();
        Subsample::from_xy(&xs, &y)
    }

    #[test]
    fn interior_constants_match_closed_form() {
        let c = linear_constants(KernelSpec::TRIANGULAR, Boundary::Interior).unwrap();
        assert!((c.bias - 1.0 / 12.0).abs() < 1e-14);
        assert!((c.variance - 2.0 / 3.0).abs() < 1e-14);
        let b = linear_constants(KernelSpec::TRIANGULAR, Boundary::DataLeft).unwrap();
        assert!(b.variance > c.variance);
        assert!(b.bias < 0.0);
    }

    #[test]
    fn scale_equivariance() {
        let k = KernelSpec::TRIANGULAR;
        let b1 = mse_bandwidth(&draw(800, 1, 1.0), 1.1, k).unwrap();
        let b10 = mse_bandwidth(&draw(800, 1, 10.0), 11.0, k).unwrap();
        assert_eq!(b1.clamp, Clamp::None);
        assert!((b10.value / b1.value - 10.0).abs() < 0.2);
    }

    #[test]
    fn degenerate_interval_equals_pointwise() {
        let k = KernelSpec::EPANECHNIKOV;
        let sub = draw(500, 2, 1.0);
        let a = mse_bandwidth(&sub, 0.7, k).unwrap();
        let b = imse_bandwidth(&sub, (0.7, 0.7), k).unwrap();
        assert!((a.value - b.value).abs() < 1e-8);
    }

    #[test]
    fn linear_truth_hits_upper_clamp() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 / 100.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let sub = Subsample::from_xy(&x, &y);
        let c = imse_bandwidth(&sub, (0.5, 1.5), KernelSpec::TRIANGULAR).unwrap();
        assert_eq!(c.clamp, Clamp::Upper);
        assert!((c.value - 0.995).abs() < 1e-12);
    }

    #[test]
    fn small_samples_fall_back() {
        let sub = Subsample::from_xy(&[0.0, 1.0, 4.0], &[1.0, 2.0, 3.0]);
        let c = mse_bandwidth(&sub, 1.0, KernelSpec::TRIANGULAR).unwrap();
        assert_eq!(c.clamp, Clamp::Fallback);
        assert_eq!(c.value, 2.0);
    }

    #[test]
    fn constant_x_is_pilot_failure() {
        let sub = Subsample::from_xy(&[1.0; 30], &[0.5; 30]);
        assert!(matches!(mse_bandwidth(&sub, 1.0, KernelSpec::TRIANGULAR), Err(Error::PilotFailure { .. })));
    }
}
