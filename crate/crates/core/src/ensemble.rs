use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-12;

/// A weighted collection of state vectors, stored column-wise (`n x N`).
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    members: DMatrix<f64>,
    weights: Vec<f64>,
}

impl Ensemble {
    /// Uniformly weighted ensemble from the columns of `members`.
    pub fn from_columns(members: DMatrix<f64>) -> Result<Self> {
        let n = members.ncols();
        Self::weighted(members, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn from_members(members: &[DVector<f64>]) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::Argument("ensemble needs at least one member".into()))?;
        let dim = first.len();
        if members.iter().any(|m| m.len() != dim) {
            return Err(Error::Argument("ensemble members differ in dimension".into()));
        }
        Self::from_columns(DMatrix::from_columns(members))
    }

    pub fn weighted(members: DMatrix<f64>, weights: Vec<f64>) -> Result<Self> {
        if members.ncols() == 0 || members.nrows() == 0 {
            return Err(Error::Argument(format!(
                "ensemble must have N >= 1 and n >= 1 (got {}x{})",
                members.nrows(),
                members.ncols()
            )));
        }
        if weights.len() != members.ncols() {
            return Err(Error::Argument(format!(
                "{} weights for {} members",
                weights.len(),
                members.ncols()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Argument("ensemble weights must be non-negative".into()));
        }
        let total = crate::linalg::compensated_sum(&weights);
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Argument(format!("ensemble weights sum to {total}")));
        }
        Ok(Self { members, weights })
    }

    pub fn dim(&self) -> usize {
        self.members.nrows()
    }

    pub fn len(&self) -> usize {
        self.members.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.members.ncols() == 0
    }

    pub fn members(&self) -> &DMatrix<f64> {
        &self.members
    }

    pub fn member(&self, i: usize) -> DVectorView<'_, f64> {
        self.members.column(i)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - u).abs() <= WEIGHT_TOL)
    }

    pub fn iter(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        self.members.column_iter().map(|c| c.into_owned())
    }

    /// Apply `f` to every member, keeping the weights.
    pub fn map(&self, f: impl FnMut(DVectorView<'_, f64>) -> DVector<f64>) -> Result<Self> {
        let cols: Vec<DVector<f64>> = self.members.column_iter().map(f).collect();
        Self::weighted(DMatrix::from_columns(&cols), self.weights.clone())
    }

    pub fn try_map(
        &self,
        mut f: impl FnMut(DVectorView<'_, f64>) -> Result<DVector<f64>>,
    ) -> Result<Self> {
        let cols = self
            .members
            .column_iter()
            .map(&mut f)
            .collect::<Result<Vec<_>>>()?;
        Self::weighted(DMatrix::from_columns(&cols), self.weights.clone())
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for (c, w) in self.members.column_iter().zip(&self.weights) {
            m.axpy(*w, &c, 1.0);
        }
        m
    }

    /// Weighted mean and unbiased covariance (divisor `N - 1` for uniform weights).
    pub fn mean_cov(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if self.len() < 2 {
            return Err(Error::DegenerateEnsemble(format!(
                "covariance needs N >= 2, got N = {}",
                self.len()
            )));
        }
        let mean = self.mean();
        let sum_sq: f64 = self.weights.iter().map(|w| w * w).sum();
        let denom = 1.0 - sum_sq;
        if denom <= 1e-14 {
            return Err(Error::DegenerateEnsemble(
                "all weight sits on a single member".into(),
            ));
        }
        let mut anomalies = self.members.clone();
        for (mut c, w) in anomalies.column_iter_mut().zip(&self.weights) {
            c -= &mean;
            c *= (w / denom).sqrt();
        }
        let cov = &anomalies * anomalies.transpose();
        Ok((mean, cov))
    }

    /// Cross covariance `Cov(self, other)` for two ensembles of equal size
    /// and weights.
    pub fn cross_cov(&self, other: &Ensemble) -> Result<DMatrix<f64>> {
        if self.len() != other.len() {
            return Err(Error::Argument(format!(
                "cross covariance of ensembles of size {} and {}",
                self.len(),
                other.len()
            )));
        }
        if self.len() < 2 {
            return Err(Error::DegenerateEnsemble("cross covariance needs N >= 2".into()));
        }
        let (ma, mb) = (self.mean(), other.mean());
        let denom = 1.0 - self.weights.iter().map(|w| w * w).sum::<f64>();
        let mut a = self.members.clone();
        let mut b = other.members.clone();
        for (i, w) in self.weights.iter().enumerate() {
            let s = (w / denom).sqrt();
            let mut ca = a.column_mut(i);
            ca -= &ma;
            ca *= s;
            let mut cb = b.column_mut(i);
            cb -= &mb;
            cb *= s;
        }
        Ok(&a * b.transpose())
    }

    /// Stack two ensembles column-wise, uniformly reweighted.
    pub fn concat(&self, other: &Ensemble) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::Argument("concatenating ensembles of different dimension".into()));
        }
        let mut m = DMatrix::zeros(self.dim(), self.len() + other.len());
        m.columns_mut(0, self.len()).copy_from(&self.members);
        m.columns_mut(self.len(), other.len()).copy_from(&other.members);
        Self::from_columns(m)
    }

    /// Members `[start, start + count)` as a uniformly weighted ensemble.
    pub fn slice(&self, start: usize, count: usize) -> Result<Self> {
        if start + count > self.len() {
            return Err(Error::Argument("ensemble slice out of range".into()));
        }
        Self::from_columns(self.members.columns(start, count).into_owned())
    }
}

/// Free-function form of [`Ensemble::mean_cov`].
pub fn ensemble_mean_cov(e: &Ensemble) -> Result<(DVector<f64>, DMatrix<f64>)> {
    e.mean_cov()
}
