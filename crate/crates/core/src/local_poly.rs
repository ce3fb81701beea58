//! Kernel-weighted local polynomial regression (degrees 1 and 2).
//!
//! All fits center the regressors at the evaluation point and scale them by
//! the bandwidth, so the normal matrix is built from `t = (x - x0) / b` and
//! stays well conditioned for small bandwidths. Coefficients are mapped back
//! to the original units before they leave this module.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ArmLabel, Error, Result};
use crate::kernels::{EquivalentKernel, KernelSpec};
use crate::linalg::{solve_spd, MAX_CONDITION};

/// Cutoff labels closer than this are treated as the same group.
pub const CUTOFF_TOLERANCE: f64 = 1e-9;

/// Local density estimates below this are refused by the variance estimator.
pub const MIN_DENSITY: f64 = 1e-12;

/// One observation of a (possibly multi-cutoff) RD design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdSample {
    pub y: f64,
    pub x: f64,
    /// The cutoff of the group this observation belongs to.
    pub c: f64,
    pub d: bool,
}

impl RdSample {
    pub fn new(y: f64, x: f64, c: f64, d: bool) -> Self {
        Self { y, x, c, d }
    }

    /// Sharp assignment: treated exactly when `x >= c`.
    pub fn sharp(y: f64, x: f64, c: f64) -> Self {
        Self { y, x, c, d: x >= c }
    }

    pub fn in_group(&self, cutoff: f64) -> bool {
        (self.c - cutoff).abs() <= CUTOFF_TOLERANCE
    }
}

/// Position of an observation relative to its own group's cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// `x < c`
    Left,
    /// `x >= c`
    Right,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmSelector {
    /// `None` keeps both treatment statuses (fuzzy designs select by side only).
    pub treated: Option<bool>,
    pub cutoff: f64,
    pub side: Side,
}

impl ArmSelector {
    pub fn new(treated: Option<bool>, cutoff: f64, side: Side) -> Self {
        Self { treated, cutoff, side }
    }

    pub fn matches(&self, s: &RdSample) -> bool {
        if !s.in_group(self.cutoff) {
            return false;
        }
        if let Some(t) = self.treated {
            if s.d != t {
                return false;
            }
        }
        match self.side {
            Side::Left => s.x < s.c,
            Side::Right => s.x >= s.c,
            Side::All => true,
        }
    }

    pub fn label(&self) -> ArmLabel {
        ArmLabel { treated: self.treated, cutoff: self.cutoff, side: self.side }
    }
}

/// Where an evaluation point sits relative to the support of a subsample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Interior,
    /// Evaluation at the left edge; data lie at or to the right (w >= 0).
    DataRight,
    /// Evaluation at the right edge; data lie at or to the left (w <= 0).
    DataLeft,
}

/// Rows of one arm, sorted by the running variable.
#[derive(Debug, Clone)]
pub struct Subsample {
    selector: Option<ArmSelector>,
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
    ids: Vec<usize>,
}

impl Subsample {
    /// Rows of `data` matching `selector`; `ids` are positions in `data`.
    pub fn select(data: &[RdSample], selector: ArmSelector) -> Self {
        let rows: Vec<(usize, &RdSample)> = data.iter().enumerate().filter(|(_, s)| selector.matches(s)).collect();
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| rows[a].1.x.total_cmp(&rows[b].1.x).then(a.cmp(&b)));
        let mut out = Self {
            selector: Some(selector),
            x: Vec::with_capacity(rows.len()),
            y: Vec::with_capacity(rows.len()),
            d: Vec::with_capacity(rows.len()),
            ids: Vec::with_capacity(rows.len()),
        };
        for i in order {
            let (id, s) = rows[i];
            out.x.push(s.x);
            out.y.push(s.y);
            out.d.push(if s.d { 1.0 } else { 0.0 });
            out.ids.push(id);
        }
        out
    }

    /// Like [`Subsample::select`] but refuses an empty arm.
    pub fn require(data: &[RdSample], selector: ArmSelector) -> Result<Self> {
        let sub = Self::select(data, selector);
        if sub.is_empty() {
            return Err(Error::MissingArm(selector.label()));
        }
        Ok(sub)
    }

    /// A bare regression sample; ids are the input positions.
    pub fn from_xy(x: &[f64], y: &[f64]) -> Self {
        assert_eq!(x.len(), y.len(), "x and y lengths differ");
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
        Self {
            selector: None,
            x: order.iter().map(|&i| x[i]).collect(),
            y: order.iter().map(|&i| y[i]).collect(),
            d: vec![0.0; x.len()],
            ids: order,
        }
    }

    /// The same rows with the treatment indicator as the response.
    pub fn takeup(&self) -> Self {
        Self { y: self.d.clone(), ..self.clone() }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn selector(&self) -> Option<ArmSelector> {
        self.selector
    }

    pub fn x_range(&self) -> Option<(f64, f64)> {
        Some((*self.x.first()?, *self.x.last()?))
    }

    /// Boundary classification of `x0`: at or beyond an edge of the data.
    pub fn boundary_at(&self, x0: f64) -> Boundary {
        match self.x_range() {
            Some((_, hi)) if x0 >= hi => Boundary::DataLeft,
            Some((lo, _)) if x0 <= lo => Boundary::DataRight,
            _ => Boundary::Interior,
        }
    }
}

/// Point estimate, bias estimate, and variance at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalFit {
    pub x0: f64,
    pub estimate: f64,
    pub bias: f64,
    pub corrected: f64,
    pub variance: f64,
    pub n_eff: usize,
}

/// Rows of a subsample inside `[x0 - b, x0 + b]` with their kernel weights.
#[derive(Debug, Clone)]
pub(crate) struct Window {
    pub x0: f64,
    pub bandwidth: f64,
    pub start: usize,
    pub kw: Vec<f64>,
    pub t: Vec<f64>,
}

impl Window {
    pub fn new(x: &[f64], x0: f64, bandwidth: f64, kernel: KernelSpec) -> Self {
        let lo = x.partition_point(|&v| v < x0 - bandwidth);
        let hi = x.partition_point(|&v| v <= x0 + bandwidth);
        let (mut kw, mut t) = (Vec::with_capacity(hi - lo), Vec::with_capacity(hi - lo));
        for &xi in &x[lo..hi] {
            let ti = (xi - x0) / bandwidth;
            t.push(ti);
            kw.push(kernel.eval(ti));
        }
        Self { x0, bandwidth, start: lo, kw, t }
    }

    pub fn rows(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.kw.len()
    }

    pub fn n_eff(&self) -> usize {
        self.kw.iter().filter(|&&k| k > 0.0).count()
    }

    fn n_eff_weighted(&self, mult: &[f64]) -> usize {
        self.kw.iter().zip(&mult[self.rows()]).filter(|(&k, &m)| k * m > 0.0).count()
    }

    fn insufficient(&self, n_eff: usize) -> Error {
        Error::InsufficientLocalData { x0: self.x0, bandwidth: self.bandwidth, n_eff }
    }

    /// Weighted polynomial fit of `response` (indexed by subsample row);
    /// returns coefficients in original units, highest unused entries zero.
    pub fn fit(&self, response: &[f64], mult: Option<&[f64]>, degree: usize) -> Result<[f64; 3]> {
        match degree {
            1 => self.fit_degree::<2>(response, mult),
            2 => self.fit_degree::<3>(response, mult),
            _ => panic!("only degrees 1 and 2 are supported"),
        }
    }

    fn fit_degree<const N: usize>(&self, response: &[f64], mult: Option<&[f64]>) -> Result<[f64; 3]> {
        let n_eff = match mult {
            Some(m) => self.n_eff_weighted(m),
            None => self.n_eff(),
        };
        if n_eff < N {
            return Err(self.insufficient(n_eff));
        }
        let mut s = [0.0f64; 5];
        let mut r = [0.0f64; 3];
        let ys = &response[self.rows()];
        for (i, (&k, &t)) in self.kw.iter().zip(&self.t).enumerate() {
            let w = match mult {
                Some(m) => k * m[self.start + i],
                None => k,
            };
            if w == 0.0 {
                continue;
            }
            let wy = w * ys[i];
            let t2 = t * t;
            s[0] += w;
            s[1] += w * t;
            s[2] += w * t2;
            r[0] += wy;
            r[1] += wy * t;
            if N == 3 {
                s[3] += w * t2 * t;
                s[4] += w * t2 * t2;
                r[2] += wy * t2;
            }
        }
        let mut a = [[0.0; N]; N];
        let mut b = [0.0; N];
        b.copy_from_slice(&r[..N]);
        for (i, row) in a.iter_mut().enumerate() {
            row.copy_from_slice(&s[i..i + N]);
        }
        let sol =
            solve_spd(&a, &b).filter(|sol| sol.condition <= MAX_CONDITION).ok_or_else(|| self.insufficient(n_eff))?;
        let mut out = [0.0; 3];
        let mut scale = 1.0;
        for j in 0..N {
            out[j] = sol.x[j] / scale;
            scale *= self.bandwidth;
        }
        Ok(out)
    }
}

fn check_bandwidth(bandwidth: f64) -> Result<()> {
    if bandwidth > 0.0 && bandwidth.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidBandwidth(bandwidth))
    }
}

pub fn fit_local_linear(sub: &Subsample, x0: f64, bandwidth: f64, kernel: KernelSpec) -> Result<f64> {
    check_bandwidth(bandwidth)?;
    Ok(Window::new(sub.x(), x0, bandwidth, kernel).fit(sub.y(), None, 1)?[0])
}

/// Local quadratic fit with optional per-row multipliers (aligned with the
/// subsample's sorted rows). All multipliers must be finite.
pub fn fit_local_quadratic(
    sub: &Subsample,
    x0: f64,
    bandwidth: f64,
    kernel: KernelSpec,
    weights: Option<&[f64]>,
) -> Result<f64> {
    check_bandwidth(bandwidth)?;
    if let Some(w) = weights {
        if w.len() != sub.len() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("multipliers must be finite and one per row".into()));
        }
    }
    Ok(Window::new(sub.x(), x0, bandwidth, kernel).fit(sub.y(), weights, 2)?[0])
}

pub fn density_estimate(sub: &Subsample, x0: f64, bandwidth: f64, kernel: KernelSpec) -> f64 {
    if sub.is_empty() || !(bandwidth > 0.0) {
        return 0.0;
    }
    let win = Window::new(sub.x(), x0, bandwidth, kernel);
    win.kw.iter().sum::<f64>() / (sub.len() as f64 * bandwidth)
}

/// Residuals `y_i - μ̂^BC(x_i)` of a response at every row of `x`, using
/// local quadratic fits with the given bandwidth.
///
/// Rows whose own fit is ill-posed reuse the local polynomial of the
/// nearest row with a valid fit.
pub(crate) fn bc_residuals(x: &[f64], response: &[f64], bandwidth: f64, kernel: KernelSpec) -> Result<Vec<f64>> {
    let n = x.len();
    let fit_at = |i: usize| Window::new(x, x[i], bandwidth, kernel).fit(response, None, 2).ok();
    let coefs: Vec<Option<[f64; 3]>> =
        if n > 2048 { (0..n).into_par_iter().map(fit_at).collect() } else { (0..n).map(fit_at).collect() };
    let valid: Vec<usize> = (0..n).filter(|&i| coefs[i].is_some()).collect();
    if valid.is_empty() {
        let x0 = x.first().copied().unwrap_or(f64::NAN);
        return Err(Error::InsufficientLocalData { x0, bandwidth, n_eff: 0 });
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (j, c) = match coefs[i] {
            Some(c) => (i, c),
            None => {
                // rows are sorted, so the nearest valid row is adjacent in `valid`
                let p = valid.partition_point(|&v| x[v] < x[i]);
                let cand = [p.checked_sub(1), (p < valid.len()).then_some(p)];
                let j = cand
                    .into_iter()
                    .flatten()
                    .map(|k| valid[k])
                    .min_by(|&a, &b| (x[a] - x[i]).abs().total_cmp(&(x[b] - x[i]).abs()))
                    .expect("at least one valid fit");
                (j, coefs[j].expect("valid"))
            }
        };
        let dx = x[i] - x[j];
        out.push(response[i] - (c[0] + c[1] * dx + c[2] * dx * dx));
    }
    Ok(out)
}

/// Linearized variance `ŝ²/(n b)` built from residuals over a window.
///
/// `n` is the subsample size. At a boundary the density estimate is
/// renormalized by the kernel's one-sided mass.
pub(crate) fn window_variance(
    win: &Window,
    residuals: &[f64],
    n: usize,
    kernel: KernelSpec,
    boundary: Boundary,
) -> Result<f64> {
    let nb = n as f64 * win.bandwidth;
    let mut f_hat = win.kw.iter().sum::<f64>() / nb;
    if boundary != Boundary::Interior {
        f_hat /= kernel.half_mass();
    }
    if !(f_hat >= MIN_DENSITY) {
        return Err(Error::DegenerateDensity { x0: win.x0, density: f_hat });
    }
    let eq = EquivalentKernel::new(kernel, boundary)?;
    let ssq: f64 = win
        .t
        .iter()
        .zip(&residuals[win.rows()])
        .map(|(&t, &u)| {
            let k = eq.eval(t);
            u * u * k * k
        })
        .sum();
    let s2 = ssq / (nb * f_hat * f_hat);
    let v = s2 / nb;
    if !v.is_finite() || v < 0.0 {
        return Err(Error::InvalidVariance { x0: win.x0 });
    }
    Ok(v)
}

/// Conditional variance estimate of the bias-corrected fit at `x0`.
pub fn variance_estimate(
    sub: &Subsample,
    x0: f64,
    bandwidth: f64,
    kernel: KernelSpec,
    fit: &LocalFit,
    boundary: Boundary,
) -> Result<f64> {
    check_bandwidth(bandwidth)?;
    debug_assert!(fit.x0 == x0, "fit evaluated at a different point");
    let resid = bc_residuals(sub.x(), sub.y(), bandwidth, kernel)?;
    let win = Window::new(sub.x(), x0, bandwidth, kernel);
    window_variance(&win, &resid, sub.len(), kernel, boundary)
}

/// Local linear estimate, its local-quadratic bias correction (same
/// bandwidth), and the variance of the corrected estimate.
pub fn bias_corrected_fit(sub: &Subsample, x0: f64, bandwidth: f64, kernel: KernelSpec) -> Result<LocalFit> {
    Arm::new(sub.clone(), bandwidth, kernel)?.fit_at(x0, sub.boundary_at(x0))
}

/// A subsample with a fixed bandwidth and cached residuals, evaluated at many
/// points.
#[derive(Debug, Clone)]
pub(crate) struct Arm {
    pub sub: Subsample,
    pub bandwidth: f64,
    pub kernel: KernelSpec,
    pub residuals: Vec<f64>,
}

impl Arm {
    pub fn new(sub: Subsample, bandwidth: f64, kernel: KernelSpec) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        let residuals = bc_residuals(sub.x(), sub.y(), bandwidth, kernel)?;
        Ok(Self { sub, bandwidth, kernel, residuals })
    }

    pub fn window(&self, x0: f64) -> Window {
        Window::new(self.sub.x(), x0, self.bandwidth, self.kernel)
    }

    pub fn fit_window(&self, win: &Window, boundary: Boundary) -> Result<LocalFit> {
        let estimate = win.fit(self.sub.y(), None, 1)?[0];
        let quad = win.fit(self.sub.y(), None, 2)?[0];
        let bias = estimate - quad;
        let variance = window_variance(win, &self.residuals, self.sub.len(), self.kernel, boundary)?;
        Ok(LocalFit { x0: win.x0, estimate, bias, corrected: estimate - bias, variance, n_eff: win.n_eff() })
    }

    pub fn fit_at(&self, x0: f64, boundary: Boundary) -> Result<LocalFit> {
        self.fit_window(&self.window(x0), boundary)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid_sub(n: usize, f: impl Fn(f64) -> f64) -> Subsample {
        let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64 * 4.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| f(v)).collect();
        Subsample::from_xy(&x, &y)
    }

    #[test]
    fn reproduces_constants_lines_and_quadratics() {
        let k = KernelSpec::TRIANGULAR;
        let c = grid_sub(40, |_| 3.7);
        assert!((fit_local_linear(&c, 1.3, 0.5, k).unwrap() - 3.7).abs() < 1e-12);
        let lin = grid_sub(40, |x| 2.0 * x + 1.0);
        for x0 in [0.0, 0.7, 2.2, 4.0] {
            assert!((fit_local_linear(&lin, x0, 0.6, k).unwrap() - (2.0 * x0 + 1.0)).abs() < 1e-10);
        }
        let quad = grid_sub(60, |x| x * x);
        for x0 in [0.5, 1.7, 3.1] {
            let v = fit_local_quadratic(&quad, x0, 0.7, k, None).unwrap();
            assert!((v - x0 * x0).abs() < 1e-9);
        }
    }

    #[test]
    fn bias_correction_on_polynomials() {
        let k = KernelSpec::EPANECHNIKOV;
        let lin = grid_sub(50, |x| 2.0 * x + 1.0);
        let fit = bias_corrected_fit(&lin, 1.9, 0.8, k).unwrap();
        assert!(fit.bias.abs() < 1e-9);
        assert!((fit.corrected - 4.8).abs() < 1e-9);
        assert!(fit.variance <= 1e-12);
        assert_eq!(fit.corrected, fit.estimate - fit.bias);

        let quad = grid_sub(50, |x| x * x);
        let fit = bias_corrected_fit(&quad, 2.3, 0.8, k).unwrap();
        assert!((fit.corrected - 2.3 * 2.3).abs() < 1e-9);
    }

    #[test]
    fn insufficient_data_is_reported() {
        let sub = Subsample::from_xy(&[0.0, 0.0, 0.0, 5.0], &[1.0, 2.0, 3.0, 4.0]);
        match fit_local_linear(&sub, 0.0, 0.5, KernelSpec::TRIANGULAR) {
            Err(Error::InsufficientLocalData { x0, bandwidth, .. }) => {
                assert_eq!(x0, 0.0);
                assert_eq!(bandwidth, 0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(fit_local_quadratic(&sub, 2.5, 0.1, KernelSpec::TRIANGULAR, None).is_err());
        assert!(matches!(fit_local_linear(&sub, 0.0, -1.0, KernelSpec::TRIANGULAR), Err(Error::InvalidBandwidth(_))));
    }

    #[test]
    fn density_examples() {
        let k = KernelSpec::TRIANGULAR;
        let empty = Subsample::from_xy(&[5.0, 6.0], &[0.0, 0.0]);
        assert_eq!(density_estimate(&empty, 0.0, 0.5, k), 0.0);
        let at = Subsample::from_xy(&[1.0; 7], &[0.0; 7]);
        assert!((density_estimate(&at, 1.0, 0.25, k) - 1.0 / 0.25).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let sub = Subsample::from_xy(&x, &vec![0.0; x.len()]);
        assert!((density_estimate(&sub, 0.5, 0.05, k) - 1.0).abs() < 0.1);
    }

    #[test]
    fn boundary_variance_is_finite_and_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..400).map(|_| rng.random::<f64>() - 1.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| v + rng.random::<f64>() - 0.5).collect();
        let sub = Subsample::from_xy(&x, &y);
        assert_eq!(sub.boundary_at(0.0), Boundary::DataLeft);
        let fit = bias_corrected_fit(&sub, 0.0, 0.4, KernelSpec::TRIANGULAR).unwrap();
        let v = variance_estimate(&sub, 0.0, 0.4, KernelSpec::TRIANGULAR, &fit, Boundary::DataLeft).unwrap();
        assert!(v.is_finite() && v > 0.0);
        assert_eq!(v, fit.variance);
    }

    #[test]
    fn degenerate_density_errors() {
        let sub = Subsample::from_xy(&[0.0, 0.1, 0.2, 0.3, 0.4], &[1.0, 2.0, 0.0, 1.0, 3.0]);
        let win = Window::new(sub.x(), 10.0, 0.5, KernelSpec::TRIANGULAR);
        let r = window_variance(&win, &[0.0; 5], 5, KernelSpec::TRIANGULAR, Boundary::Interior);
        assert!(matches!(r, Err(Error::DegenerateDensity { .. })));
    }

    #[test]
    fn selector_respects_groups_and_sides() {
        let data = vec![
            RdSample::sharp(1.0, 0.5, 1.0),
            RdSample::sharp(2.0, 1.5, 1.0),
            RdSample::sharp(3.0, 1.5, 2.0),
            RdSample::sharp(4.0, 0.2, 1.0 + 1e-12),
        ];
        let s = Subsample::select(&data, ArmSelector::new(Some(false), 1.0, Side::Left));
        assert_eq!(s.ids(), &[3, 0]);
        assert_eq!(s.x(), &[0.2, 0.5]);
        let t = Subsample::select(&data, ArmSelector::new(Some(true), 1.0, Side::Right));
        assert_eq!(t.len(), 1);
        let missing = Subsample::require(&data, ArmSelector::new(Some(true), 3.0, Side::Right));
        assert!(matches!(missing, Err(Error::MissingArm(_))));
    }
}
