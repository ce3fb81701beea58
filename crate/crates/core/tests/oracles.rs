use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdbounds::bandwidth::{imse_bandwidth, mse_bandwidth, Clamp};
use rdbounds::inference::{imbens_manski_critical, z_quantile};
use rdbounds::kernels::{equivalent_kernel_boundary, equivalent_kernel_interior};
use rdbounds::local_poly::{
    bias_corrected_fit, density_estimate, fit_local_linear, fit_local_quadratic, variance_estimate,
};
use rdbounds::quadrature::GaussLegendre;
use rdbounds::rng::{mammen_vector, MammenDraw};
use rdbounds::{Boundary, KernelFamily, KernelSpec, Subsample};
use statrs::distribution::{ContinuousCDF, Normal};

const KERNELS: [KernelSpec; 3] = [KernelSpec::TRIANGULAR, KernelSpec::EPANECHNIKOV, KernelSpec::UNIFORM];

fn wls(x: &[f64], y: &[f64], x0: f64, b: f64, k: KernelSpec, degree: usize) -> f64 {
    let rows: Vec<usize> = (0..x.len()).filter(|&i| k.eval((x[i] - x0) / b) > 0.0).collect();
    let p = degree + 1;
    let design = DMatrix::from_fn(rows.len(), p, |r, c| (x[rows[r]] - x0).powi(c as i32));
    let w = DMatrix::from_diagonal(&DVector::from_iterator(rows.len(), rows.iter().map(|&i| k.eval((x[i] - x0) / b))));
    let yv = DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i]));
    let xtw = design.transpose() * w;
    let beta = (&xtw * &design).lu().solve(&(xtw * yv)).expect("oracle solve");
    beta[0]
}

fn jittered(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| (i as f64 + rng.random::<f64>()) / n as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn wls_oracle(n in 12usize..=50, seed in any::<u64>(), x0 in 0.2f64..0.8, b in 0.3f64..1.0,
                  kf in 0usize..3, ys in prop::collection::vec(-10.0f64..10.0, 50)) {
        let x = jittered(n, seed);
        let y = &ys[..n];
        let k = KERNELS[kf];
        let sub = Subsample::from_xy(&x, y);
        let ll = fit_local_linear(&sub, x0, b, k).unwrap();
        let lq = fit_local_quadratic(&sub, x0, b, k, None).unwrap();
        let o1 = wls(&x, y, x0, b, k, 1);
        let o2 = wls(&x, y, x0, b, k, 2);
        prop_assert!((ll - o1).abs() <= 1e-10 * (1.0 + o1.abs()), "{ll} vs {o1}");
        prop_assert!((lq - o2).abs() <= 1e-10 * (1.0 + o2.abs()), "{lq} vs {o2}");
        let bc = bias_corrected_fit(&sub, x0, b, k).unwrap();
        prop_assert!((bc.corrected - lq).abs() <= 1e-10 * (1.0 + lq.abs()));
        prop_assert!((bc.estimate - ll).abs() <= 1e-10 * (1.0 + ll.abs()));
    }

    #[test]
    fn polynomial_reproduction(seed in any::<u64>(), a in -5.0f64..5.0, s in -5.0f64..5.0, q in -5.0f64..5.0,
                               x0 in 0.0f64..1.0, b in 0.2f64..0.8, kf in 0usize..3) {
        let x = jittered(60, seed);
        let k = KERNELS[kf];
        let lin: Vec<f64> = x.iter().map(|&v| a + s * v).collect();
        let quad: Vec<f64> = x.iter().map(|&v| a + s * v + q * v * v).collect();
        let sl = Subsample::from_xy(&x, &lin);
        let sq = Subsample::from_xy(&x, &quad);
        let t1 = a + s * x0;
        let t2 = t1 + q * x0 * x0;
        prop_assert!((fit_local_linear(&sl, x0, b, k).unwrap() - t1).abs() <= 1e-9);
        prop_assert!((fit_local_quadratic(&sl, x0, b, k, None).unwrap() - t1).abs() <= 1e-9);
        prop_assert!((fit_local_quadratic(&sq, x0, b, k, None).unwrap() - t2).abs() <= 1e-9);
        let f = bias_corrected_fit(&sq, x0, b, k).unwrap();
        prop_assert!((f.corrected - t2).abs() <= 1e-9);
        let f = bias_corrected_fit(&sl, x0, b, k).unwrap();
        prop_assert!(f.bias.abs() <= 1e-9 && f.variance <= 1e-12);
    }
}

#[test]
fn constants_and_density_contract() {
    let x: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
    let c = Subsample::from_xy(&x, &vec![3.7; 40]);
    for k in KERNELS {
        assert!((fit_local_linear(&c, 0.4, 0.3, k).unwrap() - 3.7).abs() < 1e-12);
    }
    let same = Subsample::from_xy(&[0.5; 7], &[1.0; 7]);
    for k in KERNELS {
        assert!((density_estimate(&same, 0.5, 0.2, k) - k.eval(0.0) / 0.2).abs() < 1e-12);
    }
    assert_eq!(density_estimate(&same, 3.0, 0.2, KernelSpec::TRIANGULAR), 0.0);
}

#[test]
fn boundary_variance_is_one_sided_and_positive() {
    let x = jittered(200, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let y: Vec<f64> = x.iter().map(|&v| v + rng.random::<f64>() - 0.5).collect();
    let sub = Subsample::from_xy(&x, &y);
    let fit = bias_corrected_fit(&sub, 1.0, 0.3, KernelSpec::TRIANGULAR).unwrap();
    let vb = variance_estimate(&sub, 1.0, 0.3, KernelSpec::TRIANGULAR, &fit, Boundary::DataLeft).unwrap();
    assert!(vb.is_finite() && vb > 0.0);
    assert_eq!(vb, fit.variance);
}

#[test]
fn equivalent_kernel_moments() {
    let gl = GaussLegendre::new(20);
    for k in KERNELS {
        for r in 0..3 {
            let f = |w: f64| w.powi(r) * equivalent_kernel_interior(k, w).unwrap();
            let m = gl.integrate(-1.0, 0.0, f) + gl.integrate(0.0, 1.0, f);
            let target = if r == 0 { 1.0 } else { 0.0 };
            assert!((m - target).abs() < 1e-10, "{k} interior r={r}: {m}");
            let m = gl.integrate(0.0, 1.0, |w: f64| w.powi(r) * equivalent_kernel_boundary(k, w).unwrap());
            assert!((m - target).abs() < 1e-10, "{k} boundary r={r}: {m}");
        }
        assert_eq!(equivalent_kernel_boundary(k, -0.1).unwrap(), 0.0);
    }
}

#[test]
fn mammen_moments_over_a_million_draws() {
    let v = mammen_vector(17, 1, 0, 1_000_000);
    assert!(v.iter().all(|&x| x == MammenDraw::LOW || x == MammenDraw::HIGH));
    assert!(v.iter().all(|&x| x + 1.0 > 0.0));
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let third = v.iter().map(|x| x.powi(3)).sum::<f64>() / n;
    assert!(mean.abs() < 0.005, "mean {mean}");
    assert!((var - 1.0).abs() < 0.01, "var {var}");
    assert!((third - 1.0).abs() < 0.02, "third moment {third}");
    let p_low = v.iter().filter(|&&x| x == MammenDraw::LOW).count() as f64 / n;
    assert!((p_low - MammenDraw::P_LOW).abs() < 0.003);
}

#[test]
fn imbens_manski_limits_and_root() {
    let c_inf = imbens_manski_critical(1e9, 1.0, 1.0, 0.05);
    assert!((c_inf - 1.6448536269514722).abs() < 1e-6, "{c_inf}");
    assert!((c_inf - z_quantile(0.95)).abs() < 1e-6);
    let c0 = imbens_manski_critical(0.0, 1.0, 1.0, 0.05);
    assert!((c0 - 1.959963984540054).abs() < 1e-6, "{c0}");
    let c = imbens_manski_critical(0.4, 0.1, 0.1, 0.05);
    assert!(c > z_quantile(0.95) && c < z_quantile(0.975));
    let phi = Normal::standard();
    assert!((phi.cdf(c + 4.0) - phi.cdf(-c) - 0.95).abs() < 1e-8);
}

/// Forty points with fixed pseudo-noise; the plug-in value below was computed
/// independently (least-squares quartic, explicit kernel density, closed-form
/// triangular constants R(K) = 2/3, μ₂ = 1/6).
fn forty() -> (Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (0..40).map(|i| 0.05 * i as f64 + 0.02 * (7.0 * i as f64).sin()).collect();
    let y: Vec<f64> = x.iter().enumerate().map(|(i, &v)| (2.0 * v).sin() + 0.3 * (11.0 * i as f64).cos()).collect();
    (x, y)
}

fn plugin_oracle(x: &[f64], y: &[f64], nodes: &[(f64, f64)]) -> f64 {
    let n = x.len();
    let design = DMatrix::from_fn(n, 5, |r, c| x[r].powi(c as i32));
    let yv = DVector::from_column_slice(y);
    let coef = design.clone().svd(true, true).solve(&yv, 1e-14).unwrap();
    let rss = (yv - &design * &coef).norm_squared();
    let s2 = rss / (n - 5) as f64;
    let m2 = |t: f64| 2.0 * coef[2] + 6.0 * coef[3] * t + 12.0 * coef[4] * t * t;
    let mut xs = x.to_vec();
    xs.sort_by(f64::total_cmp);
    let mean = x.iter().sum::<f64>() / n as f64;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let iqr = xs[29] - xs[10];
    let (rk, mu2): (f64, f64) = (2.0 / 3.0, 1.0 / 6.0);
    let h = 1.06 * sd.min(iqr / 1.34) * (n as f64).powf(-0.2) * (rk / (mu2 * mu2)).powf(0.2)
        / (0.5 / std::f64::consts::PI.sqrt()).powf(0.2);
    let f = |t: f64| x.iter().map(|&v| (1.0 - ((v - t) / h).abs()).max(0.0)).sum::<f64>() / (n as f64 * h);
    let wsum: f64 = nodes.iter().map(|p| p.1).sum();
    let inv_f = nodes.iter().map(|&(t, w)| w / f(t)).sum::<f64>() / wsum;
    let curv = nodes.iter().map(|&(t, w)| w * m2(t).powi(2)).sum::<f64>() / wsum;
    (rk * s2 * inv_f / (4.0 * n as f64 * (mu2 / 2.0).powi(2) * curv)).powf(0.2)
}

#[test]
fn forty_point_plugin_oracle() {
    let (x, y) = forty();
    let sub = Subsample::from_xy(&x, &y);
    let k = KernelSpec::TRIANGULAR;
    let frozen = 0.33712765826034685;
    assert!((plugin_oracle(&x, &y, &[(1.0, 1.0)]) - frozen).abs() < 1e-8);
    let c = mse_bandwidth(&sub, 1.0, k).unwrap();
    assert_eq!(c.clamp, Clamp::None);
    assert!((c.value - frozen).abs() < 1e-8, "{}", c.value);

    let frozen_imse = 0.35041031267023315;
    let nodes: Vec<(f64, f64)> = GaussLegendre::new(64).mapped(0.6, 1.4).collect();
    assert!((plugin_oracle(&x, &y, &nodes) - frozen_imse).abs() < 1e-8);
    let c = imse_bandwidth(&sub, (0.6, 1.4), k).unwrap();
    assert!((c.value - frozen_imse).abs() < 1e-8, "{}", c.value);
}

fn selector_draw(n: usize, rng: &mut ChaCha8Rng) -> Subsample {
    let x: Vec<f64> = (0..n).map(|_| 2.0 * rng.random::<f64>()).collect();
    let y: Vec<f64> = x.iter().map(|&v| (3.0 * v).sin() + 0.5 * (rng.random::<f64>() - 0.5) * 12f64.sqrt()).collect();
    Subsample::from_xy(&x, &y)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
}

#[test]
fn bandwidth_rate_is_n_to_minus_one_fifth() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let k = KernelSpec::TRIANGULAR;
    for sel in [0, 1] {
        let run = |n: usize, rng: &mut ChaCha8Rng| {
            median(
                (0..50)
                    .map(|_| {
                        let s = selector_draw(n, rng);
                        if sel == 0 {
                            mse_bandwidth(&s, 0.5, k).unwrap().value
                        } else {
                            imse_bandwidth(&s, (0.3, 0.7), k).unwrap().value
                        }
                    })
                    .collect(),
            )
        };
        let b1 = run(2000, &mut rng);
        assert!(b1 < 0.5, "selector {sel} clamped: {b1}");
        let b2 = run(4000, &mut rng);
        let ratio = b2 / b1;
        let target = 2f64.powf(-0.2);
        assert!((ratio / target - 1.0).abs() < 0.10, "selector {sel}: ratio {ratio} vs {target}");
    }
}

#[test]
fn bandwidth_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = selector_draw(500, &mut rng);
    let scaled = Subsample::from_xy(&s.x().iter().map(|v| v * 10.0).collect::<Vec<_>>(), s.y());
    let shifted = Subsample::from_xy(s.x(), &s.y().iter().map(|v| v + 4.0).collect::<Vec<_>>());
    for k in KERNELS {
        let b = imse_bandwidth(&s, (0.5, 1.5), k).unwrap().value;
        let b10 = imse_bandwidth(&scaled, (5.0, 15.0), k).unwrap().value;
        assert!((b10 / (10.0 * b) - 1.0).abs() < 0.02);
        let bs = imse_bandwidth(&shifted, (0.5, 1.5), k).unwrap().value;
        assert!((bs / b - 1.0).abs() < 1e-9);
        let bm = mse_bandwidth(&s, 1.0, k).unwrap().value;
        assert!((imse_bandwidth(&s, (1.0, 1.0), k).unwrap().value - bm).abs() < 1e-8);
    }
    assert_eq!(KernelSpec::new(KernelFamily::Uniform), KernelSpec::UNIFORM);
}
