//! The Gaussian mixture update: condition a mixture prior on a mixture
//! information source observed through a (non)linear map.
//!
//! Each prior/information component pair is one extended-Kalman update.
//! Raw weights are formed and normalized in the log domain and then blended
//! towards uniform by the defensive factor.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Factor};
use crate::mixture::GaussianMixture;

/// A differentiable map `λ: R^n → R^m`.
pub trait InformationMap: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// `x ↦ A x`
#[derive(Clone, Debug)]
pub struct LinearMap(pub DMatrix<f64>);

impl InformationMap for LinearMap {
    fn input_dim(&self) -> usize {
        self.0.ncols()
    }

    fn output_dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.0 * x
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.0.clone()
    }
}

/// Central finite-difference Jacobian, for checking analytic ones.
pub fn finite_difference_jacobian(map: &dyn InformationMap, x: &DVector<f64>, step: f64) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(map.output_dim(), map.input_dim());
    for k in 0..map.input_dim() {
        let h = step * x[k].abs().max(1.0);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let col = (map.apply(&xp) - map.apply(&xm)) / (2.0 * h);
        jac.set_column(k, &col);
    }
    jac
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmuConfig {
    pub defensive: f64,
}

impl GmuConfig {
    pub fn new(defensive: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&defensive) {
            return Err(Error::Argument(format!(
                "defensive factor must lie in [0, 1], got {defensive}"
            )));
        }
        Ok(Self { defensive })
    }
}

impl Default for GmuConfig {
    fn default() -> Self {
        Self { defensive: 1e-4 }
    }
}

fn check_dims(prior: &GaussianMixture, info: &GaussianMixture, map: &dyn InformationMap) -> Result<()> {
    if map.input_dim() != prior.dim() || map.output_dim() != info.dim() {
        return Err(Error::Argument(format!(
            "map is {}→{}, prior has dimension {}, information {}",
            map.input_dim(),
            map.output_dim(),
            prior.dim(),
            info.dim()
        )));
    }
    Ok(())
}

/// Normalize log weights and apply the defensive blend.
pub(crate) fn finalize_weights(log_w: &[f64], defensive: f64) -> Result<Vec<f64>> {
    let lse = linalg::log_sum_exp(log_w);
    if !lse.is_finite() {
        return Err(Error::Numerical(
            "every mixture component has zero or non-finite weight".into(),
        ));
    }
    let uniform = 1.0 / log_w.len() as f64;
    let mut w: Vec<f64> = log_w
        .iter()
        .map(|lw| (1.0 - defensive) * (lw - lse).exp() + defensive * uniform)
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

struct PairUpdate {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    log_w: f64,
}

fn pair_update(
    mu_x: &DVector<f64>,
    sigma_x: &DMatrix<f64>,
    lambda: &DVector<f64>,
    jac: &DMatrix<f64>,
    mu_v: &DVector<f64>,
    sigma_v: &DMatrix<f64>,
) -> Result<PairUpdate> {
    let js = jac * sigma_x;
    let s = &js * jac.transpose() + sigma_v;
    let f = Factor::new(&s)?;
    let gain = f.solve(&js).transpose();
    let d = lambda - mu_v;
    let mean = mu_x - &gain * &d;
    let mut cov = sigma_x - &gain * &js;
    linalg::symmetrize(&mut cov);
    Ok(PairUpdate {
        mean,
        cov,
        log_w: f.log_normal(&d),
    })
}

/// Fuse `prior` with `info` through `map`, evaluating every component pair
/// independently. The result has `N_X · N_υ` components.
pub fn gaussian_mixture_update(
    prior: &GaussianMixture,
    info: &GaussianMixture,
    map: &dyn InformationMap,
    cfg: &GmuConfig,
) -> Result<GaussianMixture> {
    check_dims(prior, info, map)?;
    let total = prior.len() * info.len();
    let mut means = Vec::with_capacity(total);
    let mut covs = Vec::with_capacity(total);
    let mut log_w = Vec::with_capacity(total);
    for (i, mu_x) in prior.means().iter().enumerate() {
        let lambda = map.apply(mu_x);
        let jac = map.jacobian(mu_x);
        for (j, mu_v) in info.means().iter().enumerate() {
            let up = pair_update(mu_x, prior.covariance(i), &lambda, &jac, mu_v, info.covariance(j))?;
            means.push(up.mean);
            covs.push(up.cov);
            log_w.push(prior.weights()[i].ln() + info.weights()[j].ln() + up.log_w);
        }
    }
    let weights = finalize_weights(&log_w, cfg.defensive)?;
    GaussianMixture::new(means, covs, weights)
}

/// Fast path when every information component shares one covariance: the
/// gain and posterior covariance depend only on the prior component, so they
/// are computed once per prior component and shared across the information
/// components. Output components are ordered prior-major, like
/// [`gaussian_mixture_update`], and the covariance pool holds one entry per
/// prior component.
pub fn gmu_shared_covariance(
    prior: &GaussianMixture,
    info: &GaussianMixture,
    map: &dyn InformationMap,
    cfg: &GmuConfig,
) -> Result<GaussianMixture> {
    check_dims(prior, info, map)?;
    let sigma_v = info.shared_covariance().ok_or_else(|| {
        Error::Argument("information mixture does not share one covariance".into())
    })?;
    let n_info = info.len();
    let log_w_info: Vec<f64> = info.weights().iter().map(|w| w.ln()).collect();

    let per_prior: Vec<(Vec<DVector<f64>>, DMatrix<f64>, Vec<f64>)> = (0..prior.len())
        .into_par_iter()
        .map(|i| {
            let mu_x = &prior.means()[i];
            let sigma_x = prior.covariance(i);
            let lambda = map.apply(mu_x);
            let jac = map.jacobian(mu_x);
            let js = &jac * sigma_x;
            let s = &js * jac.transpose() + sigma_v;
            let f = Factor::new(&s)?;
            let gain = f.solve(&js).transpose();
            let mut cov = sigma_x - &gain * &js;
            linalg::symmetrize(&mut cov);
            let lw_i = prior.weights()[i].ln();
            let mut means = Vec::with_capacity(n_info);
            let mut log_w = Vec::with_capacity(n_info);
            for (mu_v, lw_j) in info.means().iter().zip(&log_w_info) {
                let d = &lambda - mu_v;
                means.push(mu_x - &gain * &d);
                log_w.push(lw_i + lw_j + f.log_normal(&d));
            }
            Ok((means, cov, log_w))
        })
        .collect::<Result<_>>()?;

    let total = prior.len() * n_info;
    let mut means = Vec::with_capacity(total);
    let mut pool = Vec::with_capacity(prior.len());
    let mut index = Vec::with_capacity(total);
    let mut log_w = Vec::with_capacity(total);
    for (i, (m, c, w)) in per_prior.into_iter().enumerate() {
        means.extend(m);
        pool.push(c);
        index.extend(std::iter::repeat_n(i, n_info));
        log_w.extend(w);
    }
    let weights = finalize_weights(&log_w, cfg.defensive)?;
    GaussianMixture::pooled(means, pool, index, weights)
}

/// Where the measurement map is linearized when prior components are grouped
/// by a shared covariance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Linearization {
    /// Jacobian at every component mean.
    Component,
    /// One Jacobian, gain and covariance per group, taken at the group's
    /// weighted mean; `λ` is still evaluated at each component mean.
    #[default]
    Group,
}

/// GMU for a prior whose covariance pool groups many components (the output
/// of [`gmu_shared_covariance`]) against a shared-covariance information
/// mixture. Output ordering and pooling match [`gmu_shared_covariance`].
pub fn gmu_grouped(
    prior: &GaussianMixture,
    info: &GaussianMixture,
    map: &dyn InformationMap,
    cfg: &GmuConfig,
    linearization: Linearization,
) -> Result<GaussianMixture> {
    if linearization == Linearization::Component {
        return gmu_shared_covariance(prior, info, map, cfg);
    }
    check_dims(prior, info, map)?;
    let sigma_v = info.shared_covariance().ok_or_else(|| {
        Error::Argument("information mixture does not share one covariance".into())
    })?;
    let pool_len = prior.covariance_pool().len();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); pool_len];
    for (c, &k) in prior.covariance_index().iter().enumerate() {
        groups[k].push(c);
    }
    let n_info = info.len();
    let log_w_info: Vec<f64> = info.weights().iter().map(|w| w.ln()).collect();

    type GroupOut = (DMatrix<f64>, Vec<(usize, Vec<DVector<f64>>, Vec<f64>)>);
    let per_group: Vec<Option<GroupOut>> = groups
        .par_iter()
        .enumerate()
        .map(|(k, members)| {
            if members.is_empty() {
                return Ok(None);
            }
            let sigma_x = &prior.covariance_pool()[k];
            let total_w: f64 = members.iter().map(|&c| prior.weights()[c]).sum();
            let mut point = DVector::zeros(prior.dim());
            for &c in members {
                let w = if total_w > 0.0 {
                    prior.weights()[c] / total_w
                } else {
                    1.0 / members.len() as f64
                };
                point.axpy(w, &prior.means()[c], 1.0);
            }
            let jac = map.jacobian(&point);
            let js = &jac * sigma_x;
            let s = &js * jac.transpose() + sigma_v;
            let f = Factor::new(&s)?;
            let gain = f.solve(&js).transpose();
            let mut cov = sigma_x - &gain * &js;
            linalg::symmetrize(&mut cov);
            let mut out = Vec::with_capacity(members.len());
            for &c in members {
                let mu_x = &prior.means()[c];
                let lambda = map.apply(mu_x);
                let lw_c = prior.weights()[c].ln();
                let mut means = Vec::with_capacity(n_info);
                let mut log_w = Vec::with_capacity(n_info);
                for (mu_v, lw_j) in info.means().iter().zip(&log_w_info) {
                    let d = &lambda - mu_v;
                    means.push(mu_x - &gain * &d);
                    log_w.push(lw_c + lw_j + f.log_normal(&d));
                }
                out.push((c, means, log_w));
            }
            Ok(Some((cov, out)))
        })
        .collect::<Result<_>>()?;

    let total = prior.len() * n_info;
    let mut slots: Vec<Option<(Vec<DVector<f64>>, Vec<f64>, usize)>> = vec![None; prior.len()];
    let mut pool = Vec::with_capacity(pool_len);
    for (cov, out) in per_group.into_iter().flatten() {
        let k = pool.len();
        pool.push(cov);
        for (c, means, log_w) in out {
            slots[c] = Some((means, log_w, k));
        }
    }
    let mut means = Vec::with_capacity(total);
    let mut index = Vec::with_capacity(total);
    let mut log_w = Vec::with_capacity(total);
    for slot in slots {
        let (m, w, k) = slot.expect("every component belongs to a group");
        means.extend(m);
        log_w.extend(w);
        index.extend(std::iter::repeat_n(k, n_info));
    }
    let weights = finalize_weights(&log_w, cfg.defensive)?;
    GaussianMixture::pooled(means, pool, index, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn scalar_kalman_update() {
        let prior = GaussianMixture::gaussian(v(&[0.0]), DMatrix::identity(1, 1)).unwrap();
        let info = GaussianMixture::gaussian(v(&[1.0]), DMatrix::identity(1, 1)).unwrap();
        let map = LinearMap(DMatrix::identity(1, 1));
        let post = gaussian_mixture_update(&prior, &info, &map, &GmuConfig::new(0.0).unwrap()).unwrap();
        assert_eq!(post.len(), 1);
        assert_relative_eq!(post.means()[0][0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(post.covariance(0)[(0, 0)], 0.5, epsilon = 1e-9);
        assert_eq!(post.weights(), &[1.0]);
    }

    #[test]
    fn full_defensive_blend_is_uniform() {
        let c = DMatrix::identity(1, 1) * 0.1;
        let prior = GaussianMixture::with_shared_covariance(
            vec![v(&[-3.0]), v(&[0.0]), v(&[4.0])],
            c.clone(),
            vec![0.2, 0.3, 0.5],
        )
        .unwrap();
        let info = GaussianMixture::with_shared_covariance(vec![v(&[0.0]), v(&[9.0])], c, vec![0.5, 0.5]).unwrap();
        let map = LinearMap(DMatrix::identity(1, 1));
        let post = gaussian_mixture_update(&prior, &info, &map, &GmuConfig::new(1.0).unwrap()).unwrap();
        for w in post.weights() {
            assert_relative_eq!(*w, 1.0 / 6.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let prior = GaussianMixture::gaussian(v(&[0.0, 0.0]), DMatrix::identity(2, 2)).unwrap();
        let info = GaussianMixture::gaussian(v(&[0.0]), DMatrix::identity(1, 1)).unwrap();
        let map = LinearMap(DMatrix::identity(1, 1));
        assert!(matches!(
            gaussian_mixture_update(&prior, &info, &map, &GmuConfig::default()),
            Err(Error::Argument(_))
        ));
        assert!(GmuConfig::new(1.5).is_err());
    }

    #[test]
    fn single_info_component_is_per_component_ekf() {
        let prior = GaussianMixture::with_shared_covariance(
            vec![v(&[1.0, 0.0]), v(&[0.0, 2.0])],
            DMatrix::identity(2, 2),
            vec![0.5, 0.5],
        )
        .unwrap();
        let info = GaussianMixture::gaussian(v(&[1.0]), DMatrix::identity(1, 1) * 0.5).unwrap();
        let h = LinearMap(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]));
        let post = gmu_shared_covariance(&prior, &info, &h, &GmuConfig::new(0.0).unwrap()).unwrap();
        assert_eq!(post.len(), 2);
        assert_eq!(post.covariance_pool().len(), 2);
        // EKF: S = 2.5, K = [0.4, 0.4]
        assert_relative_eq!(post.means()[0], v(&[1.0, 0.0]), epsilon = 1e-9);
        assert_relative_eq!(post.means()[1], v(&[-0.4, 1.6]), epsilon = 1e-9);
        assert_relative_eq!(post.covariance(1)[(0, 1)], -0.4, epsilon = 1e-9);
    }

    #[test]
    fn shared_path_requires_shared_info() {
        let prior = GaussianMixture::gaussian(v(&[0.0]), DMatrix::identity(1, 1)).unwrap();
        let info = GaussianMixture::new(
            vec![v(&[0.0]), v(&[1.0])],
            vec![DMatrix::identity(1, 1), DMatrix::identity(1, 1) * 2.0],
            vec![0.5, 0.5],
        )
        .unwrap();
        let map = LinearMap(DMatrix::identity(1, 1));
        assert!(gmu_shared_covariance(&prior, &info, &map, &GmuConfig::default()).is_err());
    }

    #[test]
    fn grouped_paths_agree_for_linear_maps() {
        let mut rng = crate::rng::RngStream::new(21, 0);
        let mut rand_v = |n: usize| DVector::from_fn(n, |_, _| rng.standard_normal());
        let px = GaussianMixture::with_shared_covariance(
            (0..4).map(|_| rand_v(3)).collect(),
            DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 0.8, 0.1, 0.0, 0.1, 0.5]),
            vec![0.25; 4],
        )
        .unwrap();
        let pu = GaussianMixture::with_shared_covariance(
            (0..5).map(|_| rand_v(1)).collect(),
            DMatrix::identity(1, 1) * 0.3,
            vec![0.2; 5],
        )
        .unwrap();
        let enc = LinearMap(DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.5]));
        let pz = gmu_shared_covariance(&px, &pu, &enc, &GmuConfig::default()).unwrap();
        let obs = GaussianMixture::gaussian(rand_v(2), DMatrix::identity(2, 2) * 0.2).unwrap();
        let h = LinearMap(DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.3, 0.0, 1.0]));
        let cfg = GmuConfig::default();
        let a = gmu_grouped(&pz, &obs, &h, &cfg, Linearization::Group).unwrap();
        let b = gmu_grouped(&pz, &obs, &h, &cfg, Linearization::Component).unwrap();
        let c = gaussian_mixture_update(&pz, &obs, &h, &cfg).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a.covariance_pool().len(), 4);
        for k in 0..20 {
            assert!((&a.means()[k] - &c.means()[k]).amax() < 1e-12);
            assert!((&b.means()[k] - &c.means()[k]).amax() < 1e-12);
            assert!((a.covariance(k) - c.covariance(k)).amax() < 1e-12);
            assert!((a.weights()[k] - c.weights()[k]).abs() < 1e-12);
        }
    }
}
