//! Sharp-design bounds on the extrapolated effect for the low-cutoff group,
//! the constant-bias point extrapolation, sequential-dominance tightening
//! with several cutoffs, and the dominance refutation diagnostic.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bandwidth::BandwidthPlan;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::local_poly::{Arm, ArmSelector, Boundary, LocalFit, RdSample, Side, Subsample, Window};

/// Critical value of the one-sided 5% dominance check.
pub const DOMINANCE_Z: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffPair {
    pub l: f64,
    pub h: f64,
}

impl CutoffPair {
    pub fn new(l: f64, h: f64) -> Result<Self> {
        if !(l < h) || !l.is_finite() || !h.is_finite() {
            return Err(Error::InvalidSpec(format!("cutoffs must satisfy l < h, got l={l}, h={h}")));
        }
        Ok(Self { l, h })
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.l && x < self.h
    }

    pub fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideDomain { x, lo: self.l, hi: self.h })
        }
    }

    /// 50 equispaced points on `[l + 5%, h - 5%]` of the gap.
    pub fn default_grid(&self) -> Vec<f64> {
        let d = self.h - self.l;
        linspace(self.l + 0.05 * d, self.h - 0.05 * d, 50)
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Shape restriction on the untreated mean curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Increasing curves with the high-cutoff group on top.
    #[default]
    IncreasingDominant,
    /// Decreasing curves with the low-cutoff group on top.
    DecreasingAntidominant,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "increasing" | "increasing_dominant" => Ok(Self::IncreasingDominant),
            "decreasing" | "decreasing_antidominant" => Ok(Self::DecreasingAntidominant),
            other => Err(Error::InvalidConfig(format!("unknown direction `{other}`"))),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::IncreasingDominant => "increasing_dominant",
            Self::DecreasingAntidominant => "decreasing_antidominant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsCurve {
    pub grid: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
    pub cb_point: Option<Vec<f64>>,
    pub band_lo: Option<Vec<f64>>,
    pub band_hi: Option<Vec<f64>>,
}

impl BoundsCurve {
    /// Grid indices where the estimated lower bound exceeds the upper bound.
    pub fn crossings(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&i| self.lower[i] > self.upper[i]).collect()
    }

    pub fn index_of(&self, x: f64) -> Option<usize> {
        self.grid.iter().position(|&g| (g - x).abs() <= 1e-12 * (1.0 + x.abs()))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_curve_csv(w, self, None)
    }
}

fn opt_cell(v: &Option<Vec<f64>>, i: usize) -> String {
    v.as_ref().map(|v| v[i].to_string()).unwrap_or_default()
}

pub(crate) fn write_curve_csv<W: Write>(w: W, c: &BoundsCurve, p_hat: Option<&[f64]>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["x", "lower", "upper", "var_lower", "var_upper", "cb_point", "band_lo", "band_hi"];
    if p_hat.is_some() {
        header.push("p_hat");
    }
    wr.write_record(&header)?;
    for i in 0..c.grid.len() {
        let mut row = vec![
            c.grid[i].to_string(),
            c.lower[i].to_string(),
            c.upper[i].to_string(),
            c.var_lower[i].to_string(),
            c.var_upper[i].to_string(),
            opt_cell(&c.cb_point, i),
            opt_cell(&c.band_lo, i),
            opt_cell(&c.band_hi, i),
        ];
        if let Some(p) = p_hat {
            row.push(p[i].to_string());
        }
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

pub(crate) fn check_grid(pair: &CutoffPair, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidSpec("empty evaluation grid".into()));
    }
    for &x in grid {
        pair.check(x)?;
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidSpec("evaluation grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Arm fitted on its windows over the grid, kept for bootstrap reuse.
#[derive(Debug, Clone)]
pub(crate) struct GridArm {
    pub arm: Arm,
    pub windows: Vec<Window>,
    pub fits: Vec<LocalFit>,
}

impl GridArm {
    pub fn new(arm: Arm, points: &[f64], boundary: Option<Boundary>) -> Result<Self> {
        let mut windows = Vec::with_capacity(points.len());
        let mut fits = Vec::with_capacity(points.len());
        for &x in points {
            let win = arm.window(x);
            let b = boundary.unwrap_or_else(|| arm.sub.boundary_at(x));
            fits.push(arm.fit_window(&win, b)?);
            windows.push(win);
        }
        Ok(Self { arm, windows, fits })
    }

    pub fn corrected(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.corrected).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.variance).collect()
    }

    /// Row multipliers `ξ_id + 1` for this arm.
    pub fn multipliers(&self, xi: &[f64]) -> Vec<f64> {
        self.arm.sub.ids().iter().map(|&id| xi[id] + 1.0).collect()
    }

    /// Multiplier-weighted local quadratic fits on the stored windows.
    pub fn refit(&self, response: &[f64], mult: &[f64]) -> Result<Vec<f64>> {
        self.windows.iter().map(|w| Ok(w.fit(response, Some(mult), 2)?[0])).collect()
    }
}

pub(crate) fn arm(data: &[RdSample], sel: ArmSelector, b: f64, kernel: KernelSpec) -> Result<Arm> {
    Arm::new(Subsample::require(data, sel)?, b, kernel)
}

pub(crate) fn treated_low(pair: &CutoffPair) -> ArmSelector {
    ArmSelector::new(Some(true), pair.l, Side::Right)
}

pub(crate) fn control_high(pair: &CutoffPair) -> ArmSelector {
    ArmSelector::new(Some(false), pair.h, Side::Left)
}

pub(crate) fn control_low(pair: &CutoffPair) -> ArmSelector {
    ArmSelector::new(Some(false), pair.l, Side::Left)
}

/// Sharp-design components at every grid point.
#[derive(Debug, Clone)]
pub(crate) struct SharpEstimator {
    pub direction: Direction,
    pub grid: Vec<f64>,
    pub n_obs: usize,
    pub treated: GridArm,
    pub control_high: GridArm,
    /// Single boundary fit at `l`.
    pub control_low: GridArm,
}

impl SharpEstimator {
    pub fn new(
        data: &[RdSample],
        pair: CutoffPair,
        grid: &[f64],
        plan: &BandwidthPlan,
        kernel: KernelSpec,
        direction: Direction,
    ) -> Result<Self> {
        check_grid(&pair, grid)?;
        let a1 = arm(data, treated_low(&pair), plan.b_1l, kernel)?;
        let a0h = arm(data, control_high(&pair), plan.b_0h, kernel)?;
        let a0l = arm(data, control_low(&pair), plan.b_0l, kernel)?;
        Ok(Self {
            direction,
            grid: grid.to_vec(),
            n_obs: data.len(),
            treated: GridArm::new(a1, grid, None)?,
            control_high: GridArm::new(a0h, grid, None)?,
            control_low: GridArm::new(a0l, &[pair.l], Some(Boundary::DataLeft))?,
        })
    }

    /// Orders the (lower, upper) pair of the increasing case by the direction.
    pub fn orient<T>(&self, l: T, u: T) -> (T, T) {
        match self.direction {
            Direction::IncreasingDominant => (l, u),
            Direction::DecreasingAntidominant => (u, l),
        }
    }

    pub fn curve(&self) -> BoundsCurve {
        let m1 = self.treated.corrected();
        let m0h = self.control_high.corrected();
        let m0l = self.control_low.fits[0].corrected;
        let v1 = self.treated.variances();
        let v0h = self.control_high.variances();
        let v0l = self.control_low.fits[0].variance;
        let lo: Vec<f64> = m1.iter().zip(&m0h).map(|(a, b)| a - b).collect();
        let up: Vec<f64> = m1.iter().map(|a| a - m0l).collect();
        let vl: Vec<f64> = v1.iter().zip(&v0h).map(|(a, b)| a + b).collect();
        let vu: Vec<f64> = v1.iter().map(|a| a + v0l).collect();
        let (lower, upper) = self.orient(lo, up);
        let (var_lower, var_upper) = self.orient(vl, vu);
        BoundsCurve {
            grid: self.grid.clone(),
            lower,
            upper,
            var_lower,
            var_upper,
            cb_point: None,
            band_lo: None,
            band_hi: None,
        }
    }

    /// Bootstrap bounds from multiplier-weighted refits.
    pub fn replicate(&self, xi: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let m1 = self.treated.refit(self.treated.arm.sub.y(), &self.treated.multipliers(xi))?;
        let m0h = self.control_high.refit(self.control_high.arm.sub.y(), &self.control_high.multipliers(xi))?;
        let m0l = self.control_low.refit(self.control_low.arm.sub.y(), &self.control_low.multipliers(xi))?[0];
        let lo = m1.iter().zip(&m0h).map(|(a, b)| a - b).collect();
        let up = m1.iter().map(|a| a - m0l).collect();
        Ok(self.orient(lo, up))
    }
}

/// Bounds on the extrapolated effect for the low-cutoff group at each grid
/// point, with bias-corrected component fits and their variances.
pub fn sharp_bounds(
    data: &[RdSample],
    pair: CutoffPair,
    grid: &[f64],
    plan: &BandwidthPlan,
    kernel: KernelSpec,
    dir: Direction,
) -> Result<BoundsCurve> {
    Ok(SharpEstimator::new(data, pair, grid, plan, kernel, dir)?.curve())
}

/// Point extrapolation assuming the gap between the two untreated curves is
/// constant, with the gap measured at `l`.
pub fn constant_bias_extrapolation(
    data: &[RdSample],
    pair: CutoffPair,
    grid: &[f64],
    plan: &BandwidthPlan,
    kernel: KernelSpec,
) -> Result<Vec<f64>> {
    check_grid(&pair, grid)?;
    let a1 = arm(data, treated_low(&pair), plan.b_1l, kernel)?;
    let a0h = arm(data, control_high(&pair), plan.b_0h, kernel)?;
    let a0l = arm(data, control_low(&pair), plan.b_0l, kernel)?;
    let gap =
        a0h.fit_at(pair.l, a0h.sub.boundary_at(pair.l))?.corrected - a0l.fit_at(pair.l, Boundary::DataLeft)?.corrected;
    grid.iter()
        .map(|&x| {
            let m1 = a1.fit_at(x, a1.sub.boundary_at(x))?.corrected;
            let m0 = a0h.fit_at(x, a0h.sub.boundary_at(x))?.corrected;
            Ok(m1 - m0 + gap)
        })
        .collect()
}

/// Bandwidths for a design with cutoffs `c_0 < c_1 < … < c_J`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiCutoffPlan {
    /// Treated arm of group `c_0`.
    pub b_treated: f64,
    /// Boundary control fit of group `c_0` at `c_0`.
    pub b_boundary: f64,
    /// Control arms of groups `c_1..c_J`, in order.
    pub b_controls: Vec<f64>,
}

/// Bounds for group `c_0` where the lower bound at `x ∈ (c_{K-1}, c_K)` uses
/// the untreated curve of group `c_K`.
pub fn multi_cutoff_bounds(
    data: &[RdSample],
    cutoffs: &[f64],
    grid: &[f64],
    plans: &MultiCutoffPlan,
    kernel: KernelSpec,
) -> Result<BoundsCurve> {
    let j = cutoffs
        .len()
        .checked_sub(1)
        .filter(|&j| j >= 1)
        .ok_or_else(|| Error::InvalidSpec("at least two cutoffs are required".into()))?;
    if cutoffs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidSpec("cutoffs must be strictly increasing".into()));
    }
    if plans.b_controls.len() != j {
        return Err(Error::InvalidSpec(format!("expected {j} control bandwidths, got {}", plans.b_controls.len())));
    }
    let outer = CutoffPair::new(cutoffs[0], cutoffs[j])?;
    check_grid(&outer, grid)?;
    let a1 = arm(data, treated_low(&outer), plans.b_treated, kernel)?;
    let a0l = arm(data, control_low(&outer), plans.b_boundary, kernel)?;
    let f0l = a0l.fit_at(outer.l, Boundary::DataLeft)?;

    let mut controls: Vec<Option<Arm>> = vec![None; j];
    let n = grid.len();
    let mut curve = BoundsCurve {
        grid: grid.to_vec(),
        lower: Vec::with_capacity(n),
        upper: Vec::with_capacity(n),
        var_lower: Vec::with_capacity(n),
        var_upper: Vec::with_capacity(n),
        cb_point: None,
        band_lo: None,
        band_hi: None,
    };
    for &x in grid {
        // smallest cutoff strictly above x
        let k = cutoffs.partition_point(|&c| c <= x);
        let slot = &mut controls[k - 1];
        if slot.is_none() {
            let sel = ArmSelector::new(Some(false), cutoffs[k], Side::Left);
            *slot = Some(arm(data, sel, plans.b_controls[k - 1], kernel)?);
        }
        let a0k = slot.as_ref().expect("just filled");
        let f1 = a1.fit_at(x, a1.sub.boundary_at(x))?;
        let f0 = a0k.fit_at(x, a0k.sub.boundary_at(x))?;
        curve.lower.push(f1.corrected - f0.corrected);
        curve.upper.push(f1.corrected - f0l.corrected);
        curve.var_lower.push(f1.variance + f0.variance);
        curve.var_upper.push(f1.variance + f0l.variance);
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DominanceFlag {
    Consistent,
    Refuted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceDiagnostic {
    /// `μ̂_{0,l}(l⁻) − μ̂_{0,h}(l⁻)`
    pub statistic: f64,
    pub se: f64,
    pub flag: DominanceFlag,
}

/// One-sided check of whether the low group's untreated curve sits above the
/// high group's just left of `l`.
pub fn dominance_diagnostic(
    data: &[RdSample],
    pair: CutoffPair,
    plan: &BandwidthPlan,
    kernel: KernelSpec,
) -> Result<DominanceDiagnostic> {
    let a0l = arm(data, control_low(&pair), plan.b_0l, kernel)?;
    let a0h = arm(data, control_high(&pair), plan.b_0h, kernel)?;
    let fl = a0l.fit_at(pair.l, Boundary::DataLeft)?;
    let fh = a0h.fit_at(pair.l, a0h.sub.boundary_at(pair.l))?;
    let statistic = fl.corrected - fh.corrected;
    let se = (fl.variance + fh.variance).sqrt();
    let flag = if statistic > DOMINANCE_Z * se { DominanceFlag::Refuted } else { DominanceFlag::Consistent };
    Ok(DominanceDiagnostic { statistic, se, flag })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Noiseless sharp design on an even grid with polynomial curves.
    fn exact_data(m1: impl Fn(f64) -> f64, m0l: impl Fn(f64) -> f64, m0h: impl Fn(f64) -> f64) -> Vec<RdSample> {
        let mut v = Vec::new();
        for i in 0..=400 {
            let x = i as f64 / 400.0 * 3.0;
            let yl = if x >= 1.0 { m1(x) } else { m0l(x) };
            v.push(RdSample::sharp(yl, x, 1.0));
            let xh = x + 0.0013;
            let yh = if xh >= 2.0 { m0h(xh) + 1.0 } else { m0h(xh) };
            v.push(RdSample::sharp(yh, xh, 2.0));
        }
        v
    }

    fn plan() -> BandwidthPlan {
        BandwidthPlan::new(0.4, 0.4, 0.4).unwrap()
    }

    #[test]
    fn definitional_arithmetic_on_flat_curves() {
        let data = exact_data(|_| 2.0, |_| 0.3, |_| 0.5);
        let pair = CutoffPair::new(1.0, 2.0).unwrap();
        let k = KernelSpec::TRIANGULAR;
        let c = sharp_bounds(&data, pair, &[1.5], &plan(), k, Direction::IncreasingDominant).unwrap();
        assert!((c.lower[0] - 1.5).abs() < 1e-12);
        assert!((c.upper[0] - 1.7).abs() < 1e-12);
        assert!(c.crossings().is_empty());
    }

    #[test]
    fn constant_bias_identity() {
        // identical untreated curves: B(l) = 0 and the point estimate equals the lower bound
        let data = exact_data(|x| x + 1.5, |x| x, |x| x);
        let pair = CutoffPair::new(1.0, 2.0).unwrap();
        let k = KernelSpec::TRIANGULAR;
        let grid = [1.2, 1.5, 1.8];
        let c = sharp_bounds(&data, pair, &grid, &plan(), k, Direction::IncreasingDominant).unwrap();
        let cb = constant_bias_extrapolation(&data, pair, &grid, &plan(), k).unwrap();
        for i in 0..3 {
            assert!((cb[i] - c.lower[i]).abs() < 1e-12);
        }
        // a shift of 0.2 between the curves
        let data = exact_data(|x| x + 1.5, |x| x, |x| x + 0.2);
        let cb = constant_bias_extrapolation(&data, pair, &grid, &plan(), k).unwrap();
        for v in cb {
            assert!((v - 1.5).abs() < 1e-10);
        }
    }

    #[test]
    fn domain_and_missing_arm_errors() {
        let data = exact_data(|x| x, |x| x, |x| x);
        let pair = CutoffPair::new(1.0, 2.0).unwrap();
        let k = KernelSpec::TRIANGULAR;
        let r = sharp_bounds(&data, pair, &[1.0], &plan(), k, Direction::IncreasingDominant);
        assert!(matches!(r, Err(Error::OutsideDomain { .. })));
        let only_low: Vec<_> = data.iter().copied().filter(|s| s.c == 1.0).collect();
        let r = sharp_bounds(&only_low, pair, &[1.5], &plan(), k, Direction::IncreasingDominant);
        match r {
            Err(Error::MissingArm(label)) => assert_eq!(label.cutoff, 2.0),
            other => panic!("unexpected {other:?}"),
        }
        assert!(CutoffPair::new(2.0, 1.0).is_err());
    }

    #[test]
    fn default_grid_is_interior() {
        let pair = CutoffPair::new(-57.21, -40.75).unwrap();
        let g = pair.default_grid();
        assert_eq!(g.len(), 50);
        assert!(g.iter().all(|&x| pair.contains(x)));
        assert!((g[0] - (-57.21 + 0.05 * 16.46)).abs() < 1e-12);
    }

    #[test]
    fn dominance_identical_curves() {
        let mut data = exact_data(|x| x + 1.0, |x| x * x, |x| x * x);
        for (i, s) in data.iter_mut().enumerate() {
            s.y += 0.05 * (((i * 7919) % 13) as f64 / 12.0 - 0.5);
        }
        let pair = CutoffPair::new(1.0, 2.0).unwrap();
        let d = dominance_diagnostic(&data, pair, &plan(), KernelSpec::TRIANGULAR).unwrap();
        assert!(d.se > 0.0);
        assert!(d.statistic.abs() < 3.0 * d.se);
        assert_eq!(d.flag, DominanceFlag::Consistent);
    }

    #[test]
    fn direction_parses() {
        assert_eq!("decreasing".parse::<Direction>().unwrap(), Direction::DecreasingAntidominant);
        assert_eq!("increasing-dominant".parse::<Direction>().unwrap(), Direction::IncreasingDominant);
        assert!("sideways".parse::<Direction>().is_err());
    }
}
