//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Relative jitter levels tried, in order, before giving up on a factorization.
const JITTER_LEVELS: [f64; 2] = [1e-10, 1e-8];

/// Lower Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct Factor {
    l: DMatrix<f64>,
    log_det: f64,
}

impl Factor {
    /// Factorize `m` after adding `eps * trace(m)/n * I`, first with
    /// `eps = 1e-10` and, if that fails, once more with `eps = 1e-8`.
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::Argument(format!(
                "cannot factorize a {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.trace() / n as f64;
        if !scale.is_finite() {
            return Err(Error::Numerical("non-finite covariance".into()));
        }
        for eps in JITTER_LEVELS {
            let mut a = m.clone();
            let jitter = eps * scale.max(0.0);
            for i in 0..n {
                a[(i, i)] += jitter;
            }
            if let Some(ch) = a.cholesky() {
                let l = ch.unpack();
                let log_det = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
                if log_det.is_finite() {
                    return Ok(Self { l, log_det });
                }
            }
        }
        Err(Error::Numerical(format!(
            "{n}x{n} covariance is not positive definite after jitter"
        )))
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `‖L⁻¹ d‖²`
    pub fn mahalanobis_sq(&self, d: &DVector<f64>) -> f64 {
        forward_sq_norm(&self.l, d.as_slice())
    }

    /// Log normal density of a deviation `d = x - μ`.
    pub fn log_normal(&self, d: &DVector<f64>) -> f64 {
        -0.5 * (self.dim() as f64 * LN_2PI + self.log_det + self.mahalanobis_sq(d))
    }

    /// `M⁻¹ b`
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self
            .l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a nonzero diagonal");
        self.l
            .tr_solve_lower_triangular(&y)
            .expect("cholesky factor has a nonzero diagonal")
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self
            .l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a nonzero diagonal");
        self.l
            .tr_solve_lower_triangular(&y)
            .expect("cholesky factor has a nonzero diagonal")
    }
}

/// `‖L⁻¹ d‖²` by forward substitution without allocating.
pub(crate) fn forward_sq_norm(l: &DMatrix<f64>, d: &[f64]) -> f64 {
    let n = d.len();
    let mut z = [0.0f64; 64];
    let mut heap;
    let z: &mut [f64] = if n <= 64 {
        &mut z[..n]
    } else {
        heap = vec![0.0; n];
        &mut heap[..]
    };
    let mut acc = 0.0;
    for i in 0..n {
        let mut s = d[i];
        for k in 0..i {
            s -= l[(i, k)] * z[k];
        }
        let zi = s / l[(i, i)];
        z[i] = zi;
        acc += zi * zi;
    }
    acc
}

/// Factor usable for sampling from a positive *semi*definite covariance:
/// pivots that vanish (relative to the largest diagonal) leave a zero column.
pub fn psd_sampling_factor(m: &DMatrix<f64>, jitter: bool) -> Result<DMatrix<f64>> {
    if jitter {
        let scale = m.trace() / m.nrows() as f64;
        if scale > 0.0 {
            return Factor::new(m).map(|f| f.l);
        }
    }
    let n = m.nrows();
    let max_diag = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
    let tol = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol * 1e4 {
            return Err(Error::Numerical(
                "covariance is not positive semidefinite".into(),
            ));
        }
        if d <= tol {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest asymmetry relative to the largest entry.
pub(crate) fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(v: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for &x in v {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Log of `Σ exp(v_i)` with a max shift.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn factor_log_normal_matches_closed_form() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let f = Factor::new(&m).unwrap();
        let d = DVector::from_vec(vec![0.4, -0.2]);
        let inv = m.clone().try_inverse().unwrap();
        let q = (d.transpose() * &inv * &d)[(0, 0)];
        let expected = -0.5 * (2.0 * LN_2PI + m.determinant().ln() + q);
        assert_relative_eq!(f.log_normal(&d), expected, epsilon = 1e-9);
    }

    #[test]
    fn rank_deficient_factor_uses_jitter() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(Factor::new(&m).is_ok());
        assert!(Factor::new(&DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn psd_factor_of_zero_matrix_is_zero() {
        let l = psd_sampling_factor(&DMatrix::zeros(3, 3), false).unwrap();
        assert_eq!(l, DMatrix::zeros(3, 3));
    }

    #[test]
    fn psd_factor_reproduces_singular_matrix() {
        let v = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let m = &v * v.transpose();
        let l = psd_sampling_factor(&m, false).unwrap();
        assert_relative_eq!(&l * l.transpose(), m, epsilon = 1e-12);
    }

    #[test]
    fn log_sum_exp_is_stable() {
        assert_relative_eq!(log_sum_exp(&[-1000.0, -1000.0]), -1000.0 + 2f64.ln());
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}
