//! Compactly supported second-order kernels on [-1, 1], their moments, and
//! the equivalent kernels of the local quadratic estimator.
//!
//! Moments are closed-form per family. The interior equivalent kernel
//! annihilates the second moment; the boundary version is built from the
//! one-sided moment matrix `S_jk = ∫₀¹ w^(j+k) K(w) dw` and reproduces the
//! first three moment conditions on [0, 1].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_spd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    #[default]
    Triangular,
    Epanechnikov,
    Uniform,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Triangular => "triangular",
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::Uniform => "uniform",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "triangular" | "tri" => Ok(KernelFamily::Triangular),
            "epanechnikov" | "epa" => Ok(KernelFamily::Epanechnikov),
            "uniform" | "uni" => Ok(KernelFamily::Uniform),
            other => Err(Error::InvalidKernel(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// A kernel on the fixed support [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
}

impl KernelSpec {
    pub const TRIANGULAR: KernelSpec = KernelSpec { family: KernelFamily::Triangular };
    pub const EPANECHNIKOV: KernelSpec = KernelSpec { family: KernelFamily::Epanechnikov };
    pub const UNIFORM: KernelSpec = KernelSpec { family: KernelFamily::Uniform };

    pub fn new(family: KernelFamily) -> Self {
        Self { family }
    }

    pub const fn support(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }

    #[inline]
    pub fn eval(&self, w: f64) -> f64 {
        eval_kernel(*self, w)
    }

    /// One-sided moment ∫₀¹ w^r K(w) dw.
    pub fn half_moment(&self, r: u32) -> f64 {
        let r = r as f64;
        match self.family {
            KernelFamily::Triangular => 1.0 / ((r + 1.0) * (r + 2.0)),
            KernelFamily::Epanechnikov => 1.5 / ((r + 1.0) * (r + 3.0)),
            KernelFamily::Uniform => 0.5 / (r + 1.0),
        }
    }

    /// Two-sided moment ∫ w^r K(w) dw (zero for odd r).
    pub fn moment(&self, r: u32) -> f64 {
        if r % 2 == 1 {
            0.0
        } else {
            2.0 * self.half_moment(r)
        }
    }

    pub fn moments(&self) -> KernelMoments {
        moments(*self)
    }

    /// Interior equivalent kernel K*(w) of the local quadratic estimator.
    pub fn equivalent_interior(&self, w: f64) -> Result<f64> {
        equivalent_kernel_interior(*self, w)
    }

    /// Coefficients `a` with `K*_b(w) = (a0 + a1 w + a2 w²) K(w)` on [0, 1].
    pub fn boundary_coefficients(&self) -> Result<[f64; 3]> {
        let mut s = [[0.0; 3]; 3];
        for (j, row) in s.iter_mut().enumerate() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = self.half_moment((j + k) as u32);
            }
        }
        // e1' S^{-1} is the first row of S^{-1}; S is symmetric so solve S a = e1.
        let sol = solve_spd(&s, &[1.0, 0.0, 0.0])
            .filter(|sol| sol.condition < 1e12)
            .ok_or_else(|| Error::InvalidKernel("singular one-sided moment matrix".into()))?;
        Ok(sol.x)
    }

    /// Coefficients `a` with the local-linear boundary kernel
    /// `(a0 + a1 w) K(w)` on [0, 1].
    pub(crate) fn boundary_linear_coefficients(&self) -> Result<[f64; 2]> {
        let s = [[self.half_moment(0), self.half_moment(1)], [self.half_moment(1), self.half_moment(2)]];
        let sol = solve_spd(&s, &[1.0, 0.0])
            .ok_or_else(|| Error::InvalidKernel("singular one-sided moment matrix".into()))?;
        Ok(sol.x)
    }

    /// Mass of the kernel on [0, 1].
    pub fn half_mass(&self) -> f64 {
        self.half_moment(0)
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.family.fmt(f)
    }
}

/// Moments π_0..π_6 of a kernel, two-sided and over [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelMoments {
    pub pi: [f64; 7],
    pub half: [f64; 7],
}

impl KernelMoments {
    /// π_4 − π_2², positive for every supported family.
    pub fn equivalent_denominator(&self) -> f64 {
        self.pi[4] - self.pi[2] * self.pi[2]
    }
}

#[inline]
pub fn eval_kernel(spec: KernelSpec, w: f64) -> f64 {
    let a = w.abs();
    if !(a <= 1.0) {
        return 0.0;
    }
    match spec.family {
        KernelFamily::Triangular => 1.0 - a,
        KernelFamily::Epanechnikov => 0.75 * (1.0 - a * a),
        KernelFamily::Uniform => 0.5,
    }
}

pub fn moments(spec: KernelSpec) -> KernelMoments {
    let mut pi = [0.0; 7];
    let mut half = [0.0; 7];
    for r in 0..7u32 {
        pi[r as usize] = spec.moment(r);
        half[r as usize] = spec.half_moment(r);
    }
    KernelMoments { pi, half }
}

pub fn equivalent_kernel_interior(spec: KernelSpec, w: f64) -> Result<f64> {
    let m = moments(spec);
    let den = m.equivalent_denominator();
    if !(den > 0.0) {
        return Err(Error::InvalidKernel("pi_4 - pi_2^2 is not positive".into()));
    }
    Ok((m.pi[4] - m.pi[2] * w * w) / den * spec.eval(w))
}

/// Boundary equivalent kernel for data on `w >= 0`.
pub fn equivalent_kernel_boundary(spec: KernelSpec, w: f64) -> Result<f64> {
    let a = spec.boundary_coefficients()?;
    Ok(boundary_eval(spec, &a, w))
}

#[inline]
pub(crate) fn boundary_eval(spec: KernelSpec, a: &[f64; 3], w: f64) -> f64 {
    if w < 0.0 {
        return 0.0;
    }
    (a[0] + a[1] * w + a[2] * w * w) * spec.eval(w)
}

/// Equivalent kernel evaluator with precomputed coefficients, oriented so
/// that `Left` means data lie to the left of the evaluation point (w <= 0).
#[derive(Debug, Clone, Copy)]
pub(crate) enum EquivalentKernel {
    Interior { spec: KernelSpec, c0: f64, c2: f64 },
    DataRight { spec: KernelSpec, a: [f64; 3] },
    DataLeft { spec: KernelSpec, a: [f64; 3] },
}

impl EquivalentKernel {
    pub(crate) fn new(spec: KernelSpec, boundary: crate::local_poly::Boundary) -> Result<Self> {
        use crate::local_poly::Boundary;
        Ok(match boundary {
            Boundary::Interior => {
                let m = moments(spec);
                let den = m.equivalent_denominator();
                if !(den > 0.0) {
                    return Err(Error::InvalidKernel("pi_4 - pi_2^2 is not positive".into()));
                }
                EquivalentKernel::Interior { spec, c0: m.pi[4] / den, c2: m.pi[2] / den }
            }
            Boundary::DataRight => EquivalentKernel::DataRight { spec, a: spec.boundary_coefficients()? },
            Boundary::DataLeft => EquivalentKernel::DataLeft { spec, a: spec.boundary_coefficients()? },
        })
    }

    #[inline]
    pub(crate) fn eval(&self, w: f64) -> f64 {
        match *self {
            EquivalentKernel::Interior { spec, c0, c2 } => (c0 - c2 * w * w) * spec.eval(w),
            EquivalentKernel::DataRight { spec, ref a } => boundary_eval(spec, a, w),
            EquivalentKernel::DataLeft { spec, ref a } => boundary_eval(spec, a, -w),
        }
    }
}
