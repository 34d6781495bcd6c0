use nalgebra::{DMatrix, DVector};

use super::DynamicalModel;
use crate::error::{Error, Result};
use crate::gmu::InformationMap;
use crate::rng::RngStream;

/// `x_k' = -x_{k-1}(x_{k-2} - x_{k+1}) - x_k + F` with cyclic indices.
pub fn lorenz96_rhs(x: &DVector<f64>, forcing: f64) -> Result<DVector<f64>> {
    let n = x.len();
    if n < 4 {
        return Err(Error::Argument(format!("Lorenz '96 needs n >= 4, got {n}")));
    }
    Ok(rhs_unchecked(x, forcing))
}

fn rhs_unchecked(x: &DVector<f64>, forcing: f64) -> DVector<f64> {
    let n = x.len();
    DVector::from_fn(n, |k, _| {
        let km1 = x[(k + n - 1) % n];
        let km2 = x[(k + n - 2) % n];
        let kp1 = x[(k + 1) % n];
        -km1 * (km2 - kp1) - x[k] + forcing
    })
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step(rhs: impl Fn(&DVector<f64>) -> DVector<f64>, x: &DVector<f64>, dt: f64) -> DVector<f64> {
    let k1 = rhs(x);
    let k2 = rhs(&(x + &k1 * (0.5 * dt)));
    let k3 = rhs(&(x + &k2 * (0.5 * dt)));
    let k4 = rhs(&(x + &k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Lorenz '96 advanced over one assimilation interval with fixed-step RK4.
#[derive(Clone, Debug, PartialEq)]
pub struct Lorenz96 {
    pub dim: usize,
    pub forcing: f64,
    pub dt: f64,
    pub interval: f64,
}

impl Default for Lorenz96 {
    fn default() -> Self {
        Self {
            dim: 40,
            forcing: 8.0,
            dt: 0.05,
            interval: 0.2,
        }
    }
}

impl Lorenz96 {
    pub fn new(dim: usize, forcing: f64) -> Result<Self> {
        if dim < 4 {
            return Err(Error::Argument(format!("Lorenz '96 needs n >= 4, got {dim}")));
        }
        Ok(Self {
            dim,
            forcing,
            ..Self::default()
        })
    }

    pub fn substeps(&self) -> usize {
        (self.interval / self.dt).round().max(1.0) as usize
    }

    pub fn rhs(&self, x: &DVector<f64>) -> DVector<f64> {
        rhs_unchecked(x, self.forcing)
    }

    /// Integrate for `time` units with the model's step size.
    pub fn integrate(&self, x: &DVector<f64>, time: f64) -> DVector<f64> {
        let steps = (time / self.dt).round() as usize;
        let mut x = x.clone();
        for _ in 0..steps {
            x = rk4_step(|y| self.rhs(y), &x, self.dt);
        }
        x
    }

    pub fn advance(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut x = x.clone();
        for _ in 0..self.substeps() {
            x = rk4_step(|y| self.rhs(y), &x, self.dt);
        }
        x
    }
}

impl DynamicalModel for Lorenz96 {
    fn dim(&self) -> usize {
        self.dim
    }

    fn step(&self, x: &DVector<f64>, _rng: &mut RngStream) -> DVector<f64> {
        self.advance(x)
    }
}

/// A point on the attractor: the equilibrium `x = F`, nudged by 0.01 on the
/// first coordinate, integrated for 10 time units.
pub fn attractor_state(model: &Lorenz96) -> DVector<f64> {
    let mut x = DVector::from_element(model.dim, model.forcing);
    x[0] += 0.01;
    model.integrate(&x, 10.0)
}

/// Euclidean norms of consecutive coordinate pairs, `R^n → R^{n/2}`.
///
/// For `n = 2` this is the plain norm `‖x‖₂`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairwiseNorm {
    pub dim: usize,
}

/// Below this norm the Jacobian row is zeroed.
const NORM_FLOOR: f64 = 1e-12;

impl PairwiseNorm {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::Argument(format!(
                "pairwise norms need an even dimension, got {dim}"
            )));
        }
        Ok(Self { dim })
    }
}

impl InformationMap for PairwiseNorm {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn output_dim(&self) -> usize {
        self.dim / 2
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim / 2, |i, _| x[2 * i].hypot(x[2 * i + 1]))
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.dim / 2, self.dim);
        for i in 0..self.dim / 2 {
            let (a, b) = (x[2 * i], x[2 * i + 1]);
            let r = a.hypot(b);
            if r >= NORM_FLOOR {
                jac[(i, 2 * i)] = a / r;
                jac[(i, 2 * i + 1)] = b / r;
            }
        }
        jac
    }
}

pub fn lorenz96_observe(x: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(PairwiseNorm::new(x.len())?.apply(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmu::finite_difference_jacobian;
    use approx::assert_relative_eq;

    fn random_state(seed: u64, n: usize) -> DVector<f64> {
        let mut rng = RngStream::new(seed, 0);
        DVector::from_fn(n, |_, _| 3.0 * rng.standard_normal())
    }

    #[test]
    fn equilibrium_and_origin() {
        let f = 8.0;
        let eq = DVector::from_element(40, f);
        assert_eq!(lorenz96_rhs(&eq, f).unwrap(), DVector::zeros(40));
        assert_eq!(lorenz96_rhs(&DVector::zeros(40), f).unwrap(), DVector::from_element(40, f));
        assert!(lorenz96_rhs(&DVector::zeros(3), f).is_err());
    }

    #[test]
    fn rhs_matches_index_by_index_evaluation() {
        let x = random_state(11, 40);
        let fx = lorenz96_rhs(&x, 8.0).unwrap();
        // 1-based cyclic indexing written out the long way
        let get = |k: i64| -> f64 {
            let idx = ((k - 1).rem_euclid(40)) as usize;
            x[idx]
        };
        for k in 1..=40i64 {
            let expected = -get(k - 1) * (get(k - 2) - get(k + 1)) - get(k) + 8.0;
            assert_relative_eq!(fx[(k - 1) as usize], expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn rk4_on_exponential() {
        let x = DVector::from_vec(vec![1.0]);
        let y = rk4_step(|v| v.clone(), &x, 0.1);
        let series = 1.0 + 0.1 + 0.01 / 2.0 + 0.001 / 6.0 + 0.0001 / 24.0;
        assert_relative_eq!(y[0], series, epsilon = 1e-15);
        assert_relative_eq!(y[0], 1.105_170_83, epsilon = 1e-8);
        let z = rk4_step(|v| v * 0.0, &x, 0.3);
        assert_eq!(z, x);
    }

    #[test]
    fn observe_values() {
        let h = lorenz96_observe(&DVector::from_element(40, 1.0)).unwrap();
        assert_eq!(h.len(), 20);
        assert!(h.iter().all(|v| (v - 2f64.sqrt()).abs() < 1e-15));
        let op = PairwiseNorm::new(40).unwrap();
        assert_eq!(op.apply(&DVector::zeros(40)), DVector::zeros(20));
        assert_eq!(op.jacobian(&DVector::zeros(40)), DMatrix::zeros(20, 40));
        assert!(PairwiseNorm::new(3).is_err());
    }

    #[test]
    fn observe_jacobian_matches_finite_differences() {
        let op = PairwiseNorm::new(40).unwrap();
        for seed in 0..20 {
            let x = random_state(100 + seed, 40);
            let fd = finite_difference_jacobian(&op, &x, 1e-6);
            let an = op.jacobian(&x);
            assert!((fd - &an).norm() <= 1e-5 * an.norm());
        }
    }

    #[test]
    fn chaotic_divergence_and_bounded_attractor() {
        let model = Lorenz96::default();
        let a = attractor_state(&model);
        let mut b = a.clone();
        b[3] += 1e-8;
        let (a10, b10) = (model.integrate(&a, 10.0), model.integrate(&b, 10.0));
        let sep = (&a10 - &b10).norm();
        assert!(sep > 1e-8 * 1e5, "separation {sep}");
        let sep20 = (model.integrate(&a10, 10.0) - model.integrate(&b10, 10.0)).norm();
        assert!(sep20 > 1.0, "separation {sep20}");

        let mut x = a;
        for _ in 0..500 {
            x = model.advance(&x);
            assert!(x.iter().all(|v| (-20.0..=25.0).contains(v)));
        }
    }
}
