use nalgebra::{DMatrix, DVector};

use super::{LinearProjection, ObservationModel, PairwiseNorm};
use crate::error::Result;
use crate::mixture::GaussianMixture;

pub const BANANA_PRIOR_MEAN: [f64; 2] = [-3.5, 0.0];
pub const BANANA_PRIOR_COV: [f64; 4] = [1.0, 0.5, 0.5, 1.0];
const BANANA_OBSERVATION: f64 = 1.0;
const BANANA_NOISE: f64 = 1e-2;

/// Static 2-D test problem: Gaussian prior, a range observation `‖x‖₂ = 1`
/// with variance `1e-2`, and a mock reduced model keeping the second
/// coordinate.
#[derive(Clone, Debug)]
pub struct BananaProblem {
    pub prior: GaussianMixture,
    pub observation: ObservationModel,
    pub y: DVector<f64>,
    pub coupling: LinearProjection,
}

pub fn banana_problem() -> Result<BananaProblem> {
    let prior = GaussianMixture::gaussian(
        DVector::from_row_slice(&BANANA_PRIOR_MEAN),
        DMatrix::from_row_slice(2, 2, &BANANA_PRIOR_COV),
    )?;
    let observation = ObservationModel::new(
        PairwiseNorm::new(2)?,
        DMatrix::from_element(1, 1, BANANA_NOISE),
    )?;
    let coupling = LinearProjection::new(DMatrix::from_row_slice(1, 2, &[0.0, 1.0]))
        .expect("projection has full row rank");
    Ok(BananaProblem {
        prior,
        observation,
        y: DVector::from_element(1, BANANA_OBSERVATION),
        coupling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::CouplingMap;

    #[test]
    fn problem_definition() {
        let p = banana_problem().unwrap();
        assert_eq!(p.prior.mean(), DVector::from_vec(vec![-3.5, 0.0]));
        assert_eq!(p.observation.apply(&DVector::from_vec(vec![3.0, 4.0]))[0], 5.0);
        assert_eq!(p.y[0], 1.0);
        assert_eq!(p.observation.noise_cov()[(0, 0)], 1e-2);
    }

    #[test]
    fn projection_identities() {
        let c = banana_problem().unwrap().coupling;
        let x = DVector::from_vec(vec![-2.0, 0.7]);
        assert_eq!(c.encode(&x)[0], 0.7);
        let u = DVector::from_vec(vec![0.7]);
        assert_eq!(c.decode(&u), DVector::from_vec(vec![0.0, 0.7]));
        assert_eq!(c.encode(&c.decode(&u)), u);
    }
}
