//! Small dense symmetric positive-definite solves for the local normal equations.

/// Fits whose scaled normal matrix has a condition estimate above this are refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Solution of a small SPD system together with a condition estimate.
#[derive(Debug, Clone, Copy)]
pub struct SpdSolution<const N: usize> {
    pub x: [f64; N],
    pub condition: f64,
}

/// Solves `a x = b` for symmetric positive-definite `a` via a Jacobi-scaled
/// Cholesky factorization.
///
/// Returns `None` when the matrix is not numerically positive definite. The
/// condition estimate is `(max l_ii / min l_ii)^2` of the scaled factor, a
/// cheap lower bound on the 2-norm condition number.
pub fn solve_spd<const N: usize>(a: &[[f64; N]; N], b: &[f64; N]) -> Option<SpdSolution<N>> {
    let mut scale = [0.0; N];
    for i in 0..N {
        let d = a[i][i];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        scale[i] = 1.0 / d.sqrt();
    }
    let mut l = [[0.0; N]; N];
    for i in 0..N {
        for j in 0..=i {
            let mut s = a[i][j] * scale[i] * scale[j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let (mut dmin, mut dmax) = (f64::INFINITY, 0.0f64);
    for (i, row) in l.iter().enumerate() {
        dmin = dmin.min(row[i]);
        dmax = dmax.max(row[i]);
    }
    let condition = (dmax / dmin).powi(2);

    // forward: L z = D b
    let mut z = [0.0; N];
    for i in 0..N {
        let mut s = b[i] * scale[i];
        for k in 0..i {
            s -= l[i][k] * z[k];
        }
        z[i] = s / l[i][i];
    }
    // backward: L^T w = z, x = D w
    let mut x = [0.0; N];
    for i in (0..N).rev() {
        let mut s = z[i];
        for k in (i + 1)..N {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    for i in 0..N {
        x[i] *= scale[i];
    }
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(SpdSolution { x, condition })
}
