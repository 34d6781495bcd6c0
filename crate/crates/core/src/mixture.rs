//! Gaussian mixtures: validation, moments, log densities and sampling.
//!
//! Component covariances live in a pool and each component refers to one
//! entry by index. A kernel density estimate stores a single pool entry for
//! all components; a fused mixture stores one entry per group of components
//! that share a covariance.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::ensemble::Ensemble;
use crate::error::{Error, Result};
use crate::linalg::{self, Factor, LN_2PI};
use crate::rng::RngStream;

const WEIGHT_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct GaussianMixture {
    dim: usize,
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    cov_index: Vec<usize>,
    weights: Vec<f64>,
}

impl GaussianMixture {
    /// One covariance per component.
    pub fn new(
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let index = (0..covariances.len()).collect();
        Self::pooled(means, covariances, index, weights)
    }

    /// Every component shares `covariance`.
    pub fn with_shared_covariance(
        means: Vec<DVector<f64>>,
        covariance: DMatrix<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let index = vec![0; means.len()];
        Self::pooled(means, vec![covariance], index, weights)
    }

    /// Component `k` uses `pool[cov_index[k]]`.
    pub fn pooled(
        means: Vec<DVector<f64>>,
        pool: Vec<DMatrix<f64>>,
        cov_index: Vec<usize>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let count = means.len();
        if count == 0 {
            return Err(Error::Argument("mixture needs at least one component".into()));
        }
        if cov_index.len() != count || weights.len() != count {
            return Err(Error::Argument(format!(
                "mixture has {count} means, {} covariance refs and {} weights",
                cov_index.len(),
                weights.len()
            )));
        }
        let dim = means[0].len();
        if dim == 0 || means.iter().any(|m| m.len() != dim) {
            return Err(Error::Argument("mixture means differ in dimension".into()));
        }
        if cov_index.iter().any(|&k| k >= pool.len()) {
            return Err(Error::Argument("covariance index out of range".into()));
        }
        for c in &pool {
            if c.nrows() != dim || c.ncols() != dim {
                return Err(Error::Argument(format!(
                    "covariance is {}x{}, expected {dim}x{dim}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            if linalg::relative_asymmetry(c) > SYMMETRY_TOL {
                return Err(Error::Argument("covariance is not symmetric".into()));
            }
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Argument("mixture weights must be non-negative".into()));
        }
        let total = crate::linalg::compensated_sum(&weights);
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Argument(format!("mixture weights sum to {total}")));
        }
        Ok(Self {
            dim,
            means,
            covariances: pool,
            cov_index,
            weights,
        })
    }

    /// Single Gaussian component.
    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::with_shared_covariance(vec![mean], cov, vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn means(&self) -> &[DVector<f64>] {
        &self.means
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn covariance_pool(&self) -> &[DMatrix<f64>] {
        &self.covariances
    }

    pub fn covariance_index(&self) -> &[usize] {
        &self.cov_index
    }

    pub fn covariance(&self, k: usize) -> &DMatrix<f64> {
        &self.covariances[self.cov_index[k]]
    }

    /// The shared covariance, if all components use one pool entry.
    pub fn shared_covariance(&self) -> Option<&DMatrix<f64>> {
        let first = self.cov_index[0];
        self.cov_index
            .iter()
            .all(|&k| k == first)
            .then(|| &self.covariances[first])
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for (mu, w) in self.means.iter().zip(&self.weights) {
            m.axpy(*w, mu, 1.0);
        }
        m
    }

    fn within_covariance(&self) -> DMatrix<f64> {
        let mut pooled_weight = vec![0.0; self.covariances.len()];
        for (k, w) in self.cov_index.iter().zip(&self.weights) {
            pooled_weight[*k] += w;
        }
        let mut c = DMatrix::zeros(self.dim, self.dim);
        for (cov, w) in self.covariances.iter().zip(pooled_weight) {
            if w > 0.0 {
                c += cov * w;
            }
        }
        c
    }

    /// Exact covariance of the mixture distribution.
    pub fn moment_covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let mut c = self.within_covariance();
        for (mu, w) in self.means.iter().zip(&self.weights) {
            let d = mu - &m;
            c.ger(*w, &d, &d, 1.0);
        }
        c
    }

    /// Covariance with the spread of the component means measured by the
    /// unbiased ensemble estimator. For a kernel density estimate of an
    /// ensemble `E` this is exactly `(1 + (s h)^2) Cov(E)`.
    pub fn sample_covariance(&self) -> Result<DMatrix<f64>> {
        let spread = Ensemble::weighted(DMatrix::from_columns(&self.means), self.weights.clone())?
            .mean_cov()?
            .1;
        Ok(spread + self.within_covariance())
    }

    /// Precompute factorizations for repeated density evaluation.
    pub fn evaluator(&self) -> Result<MixtureEvaluator> {
        MixtureEvaluator::new(self)
    }

    /// `log Σ w_k N(x; μ_k, Σ_k)`.
    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.evaluator()?.log_pdf(x.as_slice()))
    }
}

/// A mixture with every covariance factorized once.
#[derive(Clone, Debug)]
pub struct MixtureEvaluator {
    dim: usize,
    factors: Vec<Factor>,
    // per component: pool index, log weight + log normalizer, mean
    comps: Vec<(usize, f64)>,
    means: Vec<f64>,
}

impl MixtureEvaluator {
    fn new(gm: &GaussianMixture) -> Result<Self> {
        let factors = gm
            .covariances
            .iter()
            .map(Factor::new)
            .collect::<Result<Vec<_>>>()?;
        let n = gm.dim as f64;
        let comps = gm
            .cov_index
            .iter()
            .zip(&gm.weights)
            .map(|(&k, &w)| (k, w.ln() - 0.5 * (n * LN_2PI + factors[k].log_det())))
            .collect();
        let means = gm.means.iter().flat_map(|m| m.iter().copied()).collect();
        Ok(Self {
            dim: gm.dim,
            factors,
            comps,
            means,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let mut terms = Vec::with_capacity(self.comps.len());
        self.log_pdf_with(x, &mut terms)
    }

    /// Same as [`Self::log_pdf`] but reuses a scratch buffer.
    pub fn log_pdf_with(&self, x: &[f64], terms: &mut Vec<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let n = self.dim;
        terms.clear();
        let mut d = [0.0f64; 64];
        let mut heap;
        let d: &mut [f64] = if n <= 64 {
            &mut d[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap[..]
        };
        for (c, &(k, offset)) in self.comps.iter().enumerate() {
            if offset == f64::NEG_INFINITY {
                continue;
            }
            let mu = &self.means[c * n..(c + 1) * n];
            for i in 0..n {
                d[i] = x[i] - mu[i];
            }
            let q = linalg::forward_sq_norm(self.factors[k].lower(), d);
            terms.push(offset - 0.5 * q);
        }
        linalg::log_sum_exp(terms)
    }
}

/// Free-function form of [`GaussianMixture::log_pdf`].
pub fn gm_logpdf(gm: &GaussianMixture, x: &DVector<f64>) -> Result<f64> {
    if x.len() != gm.dim() {
        return Err(Error::Argument(format!(
            "point has dimension {}, mixture {}",
            x.len(),
            gm.dim()
        )));
    }
    gm.log_pdf(x)
}

/// Multinomial draws of component indices.
pub fn discrete_sample(weights: &[f64], count: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    if weights.is_empty() {
        return Err(Error::Argument("cannot sample from empty weights".into()));
    }
    let dist = WeightedIndex::new(weights)
        .map_err(|e| Error::Argument(format!("invalid sampling weights: {e}")))?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// Draw `count` uniformly weighted samples.
pub fn gm_sample(gm: &GaussianMixture, count: usize, rng: &mut RngStream) -> Result<Ensemble> {
    sample_with_jitter(gm, count, rng, true)
}

/// [`gm_sample`] with control over the covariance jitter; with jitter off,
/// semidefinite (even zero) covariances are sampled exactly.
pub fn sample_with_jitter(
    gm: &GaussianMixture,
    count: usize,
    rng: &mut RngStream,
    jitter: bool,
) -> Result<Ensemble> {
    if count == 0 {
        return Err(Error::Argument("sample count must be >= 1".into()));
    }
    let idx = discrete_sample(&gm.weights, count, rng)?;
    let mut factors: Vec<Option<DMatrix<f64>>> = vec![None; gm.covariances.len()];
    let n = gm.dim;
    let mut out = DMatrix::zeros(n, count);
    let mut z = DVector::zeros(n);
    for (col, &c) in idx.iter().enumerate() {
        let k = gm.cov_index[c];
        if factors[k].is_none() {
            factors[k] = Some(linalg::psd_sampling_factor(&gm.covariances[k], jitter)?);
        }
        let l = factors[k].as_ref().expect("factor just computed");
        rng.fill_standard_normal(z.as_mut_slice());
        let mut x = gm.means[c].clone();
        x.gemv(1.0, l, &z, 1.0);
        out.set_column(col, &x);
    }
    Ensemble::from_columns(out)
}
