//! Single-cycle analyses for the four non-adaptive filters, and ensemble
//! propagation.

mod enkf;
mod gmf;
mod mfenkf;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::gmu::Linearization;
use crate::kde::LocalizationMatrix;
use crate::mixture::GaussianMixture;
use crate::models::DynamicalModel;
use crate::rng::RngStream;

pub use enkf::enkf_analysis;
pub use gmf::{engmf_analysis, engmf_prior, mfengmf_analysis, mfengmf_prior};
pub(crate) use gmf::{engmf_from_prior, mfengmf_from_prior};
pub use mfenkf::{control_variate_gain, mfenkf_analysis};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterVariant {
    Enkf,
    Mfenkf,
    Engmf,
    Mfengmf,
}

impl FilterVariant {
    pub fn is_multifidelity(self) -> bool {
        matches!(self, FilterVariant::Mfenkf | FilterVariant::Mfengmf)
    }

    pub fn is_mixture(self) -> bool {
        matches!(self, FilterVariant::Engmf | FilterVariant::Mfengmf)
    }

    pub fn name(self) -> &'static str {
        match self {
            FilterVariant::Enkf => "enkf",
            FilterVariant::Mfenkf => "mfenkf",
            FilterVariant::Engmf => "engmf",
            FilterVariant::Mfengmf => "mfengmf",
        }
    }
}

#[derive(Clone, Debug)]
pub struct FilterConfig {
    pub variant: FilterVariant,
    /// `α_X`, Kalman variants.
    pub inflation_x: f64,
    /// `α_U`, MFEnKF.
    pub inflation_u: f64,
    /// `s_X`, mixture variants.
    pub scaling_x: f64,
    /// `s_U`, MFEnGMF.
    pub scaling_u: f64,
    pub defensive: f64,
    /// Applied in the full space.
    pub localization: Option<LocalizationMatrix>,
    pub linearization: Linearization,
    /// Draw fresh perturbed observations for the `Û` update of the MFEnKF
    /// instead of reusing the theory ensemble's.
    pub independent_reduced_perturbations: bool,
    /// Largest `N_X · N_U` the MFEnGMF may build.
    pub component_cap: usize,
}

impl FilterConfig {
    pub const DEFAULT_COMPONENT_CAP: usize = 1_000_000;

    pub fn new(variant: FilterVariant) -> Self {
        Self {
            variant,
            inflation_x: 1.0,
            inflation_u: 1.0,
            scaling_x: 1.0,
            scaling_u: 1.0,
            defensive: 1e-4,
            localization: None,
            linearization: Linearization::default(),
            independent_reduced_perturbations: false,
            component_cap: Self::DEFAULT_COMPONENT_CAP,
        }
    }

    pub fn with_scaling(mut self, s_x: f64, s_u: f64) -> Self {
        self.scaling_x = s_x;
        self.scaling_u = s_u;
        self
    }

    pub fn with_inflation(mut self, a_x: f64, a_u: f64) -> Self {
        self.inflation_x = a_x;
        self.inflation_u = a_u;
        self
    }

    pub fn with_localization(mut self, loc: Option<LocalizationMatrix>) -> Self {
        self.localization = loc;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Argument(format!("{what} = {v} is out of range")));
        match self.variant {
            FilterVariant::Enkf | FilterVariant::Mfenkf => {
                if !(self.inflation_x >= 1.0 && self.inflation_x.is_finite()) {
                    return bad("inflation_x", self.inflation_x);
                }
                if self.variant == FilterVariant::Mfenkf && !(self.inflation_u >= 1.0 && self.inflation_u.is_finite()) {
                    return bad("inflation_u", self.inflation_u);
                }
            }
            FilterVariant::Engmf | FilterVariant::Mfengmf => {
                if !(self.scaling_x > 0.0 && self.scaling_x.is_finite()) {
                    return bad("scaling_x", self.scaling_x);
                }
                if self.variant == FilterVariant::Mfengmf && !(self.scaling_u > 0.0 && self.scaling_u.is_finite()) {
                    return bad("scaling_u", self.scaling_u);
                }
                if !(0.0..=1.0).contains(&self.defensive) {
                    return bad("defensive", self.defensive);
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// `1 / Σ w²` of the posterior mixture.
    pub effective_components: Option<f64>,
    pub components: usize,
    /// Largest Frobenius norm among the member gains.
    pub max_gain_norm: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct AnalysisResult {
    /// `E_{X⁺}`
    pub theory: Ensemble,
    /// `E_{U⁺}`
    pub reduced: Option<Ensemble>,
    /// Pre-resampling posterior of the mixture filters.
    pub posterior: Option<GaussianMixture>,
    /// Point estimate of the state: ensemble or total-variate mean for the
    /// Kalman variants, mixture mean otherwise.
    pub estimate: DVector<f64>,
    pub diagnostics: Diagnostics,
}

pub(crate) fn effective_components(w: &[f64]) -> f64 {
    1.0 / w.iter().map(|x| x * x).sum::<f64>()
}

/// Member-wise `x ← x̄ + α (x − x̄)`.
pub fn inflate(e: &Ensemble, alpha: f64) -> Result<Ensemble> {
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(Error::Argument(format!("inflation must be >= 1, got {alpha}")));
    }
    if alpha == 1.0 {
        return Ok(e.clone());
    }
    let mean = e.mean();
    let mut m = e.members().clone();
    for mut col in m.column_iter_mut() {
        for (v, mu) in col.iter_mut().zip(mean.iter()) {
            *v = mu + alpha * (*v - mu);
        }
    }
    Ensemble::weighted(m, e.weights().to_vec())
}

/// Step every member through `model`; weights are kept.
pub fn propagate(e: &Ensemble, model: &dyn DynamicalModel, rng: &mut RngStream) -> Result<Ensemble> {
    if model.dim() != e.dim() {
        return Err(Error::Argument(format!(
            "model acts on R^{}, ensemble lives in R^{}",
            model.dim(),
            e.dim()
        )));
    }
    let streams = rng.spawn(e.len());
    let cols: Vec<DVector<f64>> = streams
        .into_par_iter()
        .enumerate()
        .map(|(i, mut r)| model.step(&e.member(i).into_owned(), &mut r))
        .collect();
    Ensemble::weighted(DMatrix::from_columns(&cols), e.weights().to_vec())
}

fn localize(cov: DMatrix<f64>, loc: Option<&LocalizationMatrix>) -> Result<DMatrix<f64>> {
    match loc {
        Some(l) => l.apply(&cov),
        None => Ok(cov),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Lorenz96, Stationary};

    #[test]
    fn inflation_examples() {
        let e = Ensemble::from_members(&[DVector::from_vec(vec![-1.0]), DVector::from_vec(vec![1.0])]).unwrap();
        assert_eq!(inflate(&e, 1.0).unwrap(), e);
        let e2 = inflate(&e, 2.0).unwrap();
        assert_eq!(e2.member(0)[0], -2.0);
        assert_eq!(e2.member(1)[0], 2.0);
        assert_eq!(e2.mean_cov().unwrap().1[(0, 0)], 4.0 * e.mean_cov().unwrap().1[(0, 0)]);
        assert!(inflate(&e, 0.9).is_err());

        let mut rng = RngStream::new(3, 3);
        let m = DMatrix::from_fn(5, 30, |_, _| 10.0 * rng.standard_normal());
        let e = Ensemble::from_columns(m).unwrap();
        let d = (inflate(&e, 1.37).unwrap().mean() - e.mean()).amax();
        assert!(d <= 1e-14 * 10.0, "{d}");
    }

    #[test]
    fn propagation_examples() {
        let mut rng = RngStream::new(1, 0);
        let e = Ensemble::from_columns(DMatrix::from_fn(3, 4, |i, j| (i * j) as f64)).unwrap();
        assert_eq!(propagate(&e, &Stationary(3), &mut rng).unwrap(), e);
        let model = Lorenz96::default();
        let eq = Ensemble::from_columns(DMatrix::from_element(40, 3, 8.0)).unwrap();
        assert_eq!(propagate(&eq, &model, &mut rng).unwrap(), eq);
        assert!(propagate(&e, &model, &mut rng).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(FilterConfig::new(FilterVariant::Enkf).with_inflation(0.5, 1.0).validate().is_err());
        assert!(FilterConfig::new(FilterVariant::Engmf).with_inflation(0.5, 1.0).validate().is_ok());
        assert!(FilterConfig::new(FilterVariant::Mfengmf).with_scaling(1.0, 0.0).validate().is_err());
        assert!(FilterConfig::new(FilterVariant::Engmf).with_scaling(1.0, 0.0).validate().is_ok());
        assert!(FilterConfig::new(FilterVariant::Mfenkf).with_inflation(1.1, 0.99).validate().is_err());
    }
}
