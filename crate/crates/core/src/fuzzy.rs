//! Bounds under one-sided noncompliance: intention-to-treat bound numerators
//! scaled by the estimated take-up probability of the low-cutoff group.

use std::io::Write;

use serde::Serialize;

use crate::bandwidth::BandwidthPlan;
use crate::bounds::{check_grid, write_curve_csv, BoundsCurve, CutoffPair, GridArm};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::local_poly::{window_variance, Arm, ArmSelector, Boundary, RdSample, Side, Subsample};

pub const DEFAULT_P_MIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzyBoundsCurve {
    pub grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
    pub band_lo: Option<Vec<f64>>,
    pub band_hi: Option<Vec<f64>>,
    /// Grid indices where the take-up estimate exceeded 1 and was clamped.
    pub clamped: Vec<usize>,
}

impl FuzzyBoundsCurve {
    pub fn as_bounds(&self) -> BoundsCurve {
        BoundsCurve {
            grid: self.grid.clone(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            var_lower: self.var_lower.clone(),
            var_upper: self.var_upper.clone(),
            cb_point: None,
            band_lo: self.band_lo.clone(),
            band_hi: self.band_hi.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_curve_csv(w, &self.as_bounds(), Some(&self.p_hat))
    }
}

/// Rows treated below their own cutoff (1-based positions).
pub fn compliance_violations(data: &[RdSample]) -> Vec<usize> {
    data.iter().enumerate().filter(|(_, s)| s.d && s.x < s.c).map(|(i, _)| i + 1).collect()
}

fn sel_plus(pair: &CutoffPair) -> ArmSelector {
    ArmSelector::new(None, pair.l, Side::Right)
}

fn sel_high(pair: &CutoffPair) -> ArmSelector {
    ArmSelector::new(None, pair.h, Side::Left)
}

fn sel_minus(pair: &CutoffPair) -> ArmSelector {
    ArmSelector::new(None, pair.l, Side::Left)
}

#[derive(Debug, Clone)]
pub(crate) struct FuzzyEstimator {
    pub grid: Vec<f64>,
    pub n_obs: usize,
    pub p_min: f64,
    pub outcome: GridArm,
    pub takeup: GridArm,
    pub high: GridArm,
    pub minus: GridArm,
    curve: FuzzyBoundsCurve,
}

impl FuzzyEstimator {
    pub fn new(
        data: &[RdSample],
        pair: CutoffPair,
        grid: &[f64],
        plan: &BandwidthPlan,
        kernel: KernelSpec,
        p_min: f64,
    ) -> Result<Self> {
        if !(p_min > 0.0 && p_min < 1.0) {
            return Err(Error::InvalidSpec(format!("p_min must lie in (0, 1), got {p_min}")));
        }
        check_grid(&pair, grid)?;
        let bad = compliance_violations(data);
        if !bad.is_empty() {
            return Err(Error::ComplianceViolation { lines: bad });
        }
        let plus = Subsample::require(data, sel_plus(&pair))?;
        let outcome = GridArm::new(Arm::new(plus.clone(), plan.b_1l, kernel)?, grid, None)?;
        let takeup = GridArm::new(Arm::new(plus.takeup(), plan.b_1l, kernel)?, grid, None)?;
        let high = GridArm::new(Arm::new(Subsample::require(data, sel_high(&pair))?, plan.b_0h, kernel)?, grid, None)?;
        let minus = GridArm::new(
            Arm::new(Subsample::require(data, sel_minus(&pair))?, plan.b_0l, kernel)?,
            &[pair.l],
            Some(Boundary::DataLeft),
        )?;

        let n = grid.len();
        let mut curve = FuzzyBoundsCurve {
            grid: grid.to_vec(),
            lower: Vec::with_capacity(n),
            upper: Vec::with_capacity(n),
            p_hat: Vec::with_capacity(n),
            var_lower: Vec::with_capacity(n),
            var_upper: Vec::with_capacity(n),
            band_lo: None,
            band_hi: None,
            clamped: Vec::new(),
        };
        let mu_minus = minus.fits[0].corrected;
        let v_minus = minus.fits[0].variance;
        let n_plus = outcome.arm.sub.len();
        let mut combined = vec![0.0; n_plus];
        for (i, &x) in grid.iter().enumerate() {
            let raw = takeup.fits[i].corrected;
            if !(raw >= p_min) {
                return Err(Error::WeakTakeup { x, p_hat: raw, p_min });
            }
            if raw > 1.0 {
                curve.clamped.push(i);
            }
            let p = raw.min(1.0);
            let mu_plus = outcome.fits[i].corrected;
            let lo = (mu_plus - high.fits[i].corrected) / p;
            let up = (mu_plus - mu_minus) / p;
            let win = &outcome.windows[i];
            let boundary = outcome.arm.sub.boundary_at(x);
            let mut v_plus = |theta: f64| {
                for r in win.rows() {
                    combined[r] = outcome.arm.residuals[r] - theta * takeup.arm.residuals[r];
                }
                window_variance(win, &combined, n_plus, kernel, boundary)
            };
            let vl = v_plus(lo)?;
            let vu = v_plus(up)?;
            curve.lower.push(lo);
            curve.upper.push(up);
            curve.p_hat.push(p);
            curve.var_lower.push((vl + high.fits[i].variance) / (p * p));
            curve.var_upper.push((vu + v_minus) / (p * p));
        }
        Ok(Self { grid: grid.to_vec(), n_obs: data.len(), p_min, outcome, takeup, high, minus, curve })
    }

    pub fn curve(&self) -> &FuzzyBoundsCurve {
        &self.curve
    }

    /// Bootstrap bounds; the same multipliers drive the outcome and take-up refits.
    pub fn replicate(&self, xi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let m_plus = self.outcome.multipliers(xi);
        let mu = self.outcome.refit(self.outcome.arm.sub.y(), &m_plus)?;
        let p = self.takeup.refit(self.takeup.arm.sub.y(), &m_plus)?;
        let mh = self.high.refit(self.high.arm.sub.y(), &self.high.multipliers(xi))?;
        let mm = self.minus.refit(self.minus.arm.sub.y(), &self.minus.multipliers(xi))?[0];
        let mut lo = Vec::with_capacity(self.grid.len());
        let mut up = Vec::with_capacity(self.grid.len());
        for i in 0..self.grid.len() {
            if !(p[i] >= self.p_min) {
                return Err(Error::WeakTakeup { x: self.grid[i], p_hat: p[i], p_min: self.p_min });
            }
            let pi = p[i].min(1.0);
            lo.push((mu[i] - mh[i]) / pi);
            up.push((mu[i] - mm) / pi);
        }
        Ok((lo, up))
    }
}

/// Fuzzy bounds with the default take-up floor.
pub fn fuzzy_bounds(
    data: &[RdSample],
    pair: CutoffPair,
    grid: &[f64],
    plan: &BandwidthPlan,
    kernel: KernelSpec,
) -> Result<FuzzyBoundsCurve> {
    fuzzy_bounds_with_floor(data, pair, grid, plan, kernel, DEFAULT_P_MIN)
}

pub fn fuzzy_bounds_with_floor(
    data: &[RdSample],
    pair: CutoffPair,
    grid: &[f64],
    plan: &BandwidthPlan,
    kernel: KernelSpec,
    p_min: f64,
) -> Result<FuzzyBoundsCurve> {
    Ok(FuzzyEstimator::new(data, pair, grid, plan, kernel, p_min)?.curve)
}

/// Local linear estimate of the take-up probability at `x0` for the
/// low-cutoff group right of its cutoff, clamped to `[p_min, 1]`.
pub fn takeup_fit(
    data: &[RdSample],
    pair: CutoffPair,
    x0: f64,
    bandwidth: f64,
    kernel: KernelSpec,
    p_min: f64,
) -> Result<f64> {
    let sub = Subsample::require(data, sel_plus(&pair))?.takeup();
    let p = crate::local_poly::fit_local_linear(&sub, x0, bandwidth, kernel)?;
    Ok(p.clamp(p_min, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{sharp_bounds, Direction};

    fn data(takeup: impl Fn(usize, f64) -> bool) -> Vec<RdSample> {
        let mut v = Vec::new();
        for i in 0..=300 {
            let x = i as f64 / 100.0;
            let noise = 0.1 * (((i * 37) % 11) as f64 / 10.0 - 0.5);
            let d = x >= 1.0 && takeup(i, x);
            let y = x * 0.8 + noise + if d { 1.5 } else { 0.0 };
            v.push(RdSample::new(y, x, 1.0, d));
            v.push(RdSample::new(x * 0.9 + 0.3 - noise, x + 0.004, 2.0, false));
        }
        v
    }

    #[test]
    fn full_compliance_matches_sharp() {
        let d = data(|_, _| true);
        let pair = CutoffPair::new(1.0, 2.0).unwrap();
        let plan = BandwidthPlan::new(0.5, 0.5, 0.4).unwrap();
        let k = KernelSpec::TRIANGULAR;
        let grid = [1.2, 1.5, 1.8];
        let f = fuzzy_bounds(&d, pair, &grid, &plan, k).unwrap();
        let s = sharp_bounds(&d, pair, &grid, &plan, k, Direction::IncreasingDominant).unwrap();
        for i in 0..3 {
            assert!((f.p_hat[i] - 1.0).abs() < 1e-12);
            assert!((f.lower[i] - s.lower[i]).abs() < 1e-12);
            assert!((f.upper[i] - s.upper[i]).abs() < 1e-12);
            assert!((f.var_lower[i] - s.var_lower[i]).abs() < 1e-12);
            assert!((f.var_upper[i] - s.var_upper[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn alternating_takeup_is_half() {
        let d = data(|i, _| i % 2 == 0);
        let pair = CutoffPair::new(1.0, 2.0).unwrap();
        let p = takeup_fit(&d, pair, 1.5, 0.3, KernelSpec::TRIANGULAR, DEFAULT_P_MIN).unwrap();
        assert!((p - 0.5).abs() < 0.05);
        let all = data(|_, _| true);
        assert_eq!(takeup_fit(&all, pair, 1.5, 0.3, KernelSpec::TRIANGULAR, DEFAULT_P_MIN).unwrap(), 1.0);
    }

    #[test]
    fn weak_takeup_and_compliance_errors() {
        let d = data(|_, x| x > 2.5);
        let pair = CutoffPair::new(1.0, 2.0).unwrap();
        let plan = BandwidthPlan::new(0.3, 0.3, 0.3).unwrap();
        let r = fuzzy_bounds(&d, pair, &[1.2], &plan, KernelSpec::TRIANGULAR);
        assert!(matches!(r, Err(Error::WeakTakeup { x, .. }) if x == 1.2));

        let mut bad = data(|_, _| true);
        bad[4].d = true; // x = 0.02 < c
        let r = fuzzy_bounds(&bad, pair, &[1.2], &plan, KernelSpec::TRIANGULAR);
        assert!(matches!(r, Err(Error::ComplianceViolation { lines }) if lines == vec![5]));
    }

    #[test]
    fn homogeneous_in_outcome_scale() {
        let d = data(|i, _| i % 3 != 0);
        let pair = CutoffPair::new(1.0, 2.0).unwrap();
        let plan = BandwidthPlan::new(0.5, 0.5, 0.4).unwrap();
        let k = KernelSpec::EPANECHNIKOV;
        let a = fuzzy_bounds(&d, pair, &[1.4], &plan, k).unwrap();
        let scaled: Vec<_> = d.iter().map(|s| RdSample { y: 2.5 * s.y, ..*s }).collect();
        let b = fuzzy_bounds(&scaled, pair, &[1.4], &plan, k).unwrap();
        assert!((b.lower[0] - 2.5 * a.lower[0]).abs() < 1e-12);
        assert!((b.upper[0] - 2.5 * a.upper[0]).abs() < 1e-12);
        assert_eq!(a.p_hat, b.p_hat);
    }
}
