use mfengmf::filters::{engmf_analysis, enkf_analysis, FilterConfig, FilterVariant};
use mfengmf::gmu::LinearMap;
use mfengmf::metrics::{
    banana_true_posterior, f_divergence, filter_density_for_metric, spatio_temporal_rmse, GridDensity, GridSpec,
};
use mfengmf::models::{banana_problem, ObservationModel};
use mfengmf::{gm_sample, Ensemble, GaussianMixture, RngStream};
use nalgebra::{DMatrix, DVector};

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(x)
}

#[test]
fn enkf_on_linear_gaussian_problem_matches_the_exact_posterior() {
    let mu = v(&[0.5, -0.5]);
    let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
    let h = DMatrix::from_row_slice(1, 2, &[1.0, 0.5]);
    let r = DMatrix::from_element(1, 1, 0.4);
    let y = v(&[1.2]);
    let prior = GaussianMixture::gaussian(mu.clone(), p.clone()).unwrap();
    let obs = ObservationModel::new(LinearMap(h.clone()), r.clone()).unwrap();

    let s = &h * &p * h.transpose() + &r;
    let k = &p * h.transpose() * s.clone().try_inverse().unwrap();
    let post_mean = &mu + &k * (&y - &h * &mu);
    let post_cov = &p - &k * &h * &p;
    let exact = GaussianMixture::gaussian(post_mean, post_cov).unwrap();

    let grid = GridSpec::new(vec![-5.0, -5.0], vec![5.0, 5.0], vec![301, 301]).unwrap();
    let truth = GridDensity::from_log_fn(grid, |x| exact.log_pdf(x).unwrap()).unwrap();

    let mut rng = RngStream::new(21, 0);
    let e = gm_sample(&prior, 10_000, &mut rng).unwrap();
    let a = enkf_analysis(&e, &obs, &y, &FilterConfig::new(FilterVariant::Enkf), &mut rng).unwrap();
    let q = filter_density_for_metric(&a).unwrap();
    let d = f_divergence(&truth, q.as_ref()).unwrap();
    assert!(d < 0.05, "f-divergence {d}");
}

#[test]
fn engmf_posterior_mean_approaches_quadrature_on_banana() {
    let p = banana_problem().unwrap();
    let grid = GridSpec::banana_with_nodes(301);
    let truth = banana_true_posterior(&grid).unwrap();
    let mut rng = RngStream::new(22, 0);
    let e = gm_sample(&p.prior, 10_000, &mut rng).unwrap();
    let a = engmf_analysis(&e, &p.observation, &p.y, &FilterConfig::new(FilterVariant::Engmf), &mut rng).unwrap();
    let gap = (a.posterior.unwrap().mean() - truth.mean()).amax();
    assert!(gap < 0.05, "posterior mean gap {gap}");
}

#[test]
fn two_member_kalman_ensemble_gives_two_component_density() {
    let p = banana_problem().unwrap();
    let e = Ensemble::from_members(&[v(&[-3.0, 0.5]), v(&[-2.5, -0.5])]).unwrap();
    let mut rng = RngStream::new(23, 0);
    let a = enkf_analysis(&e, &p.observation, &p.y, &FilterConfig::new(FilterVariant::Enkf), &mut rng).unwrap();
    let q = filter_density_for_metric(&a).unwrap();
    assert_eq!(q.len(), 2);
    let d = f_divergence(&banana_true_posterior(&GridSpec::banana_with_nodes(151)).unwrap(), q.as_ref()).unwrap();
    assert!(d.is_finite() && d >= 0.0);
}

#[test]
fn divergence_grows_with_the_shift() {
    let grid = GridSpec::new(vec![-10.0], vec![10.0], vec![2001]).unwrap();
    let p0 = GaussianMixture::gaussian(v(&[0.0]), DMatrix::identity(1, 1)).unwrap();
    let p = GridDensity::from_log_fn(grid, |x| p0.log_pdf(x).unwrap()).unwrap();
    let mut last = 0.0;
    for shift in [0.05, 0.1, 0.3, 1.0] {
        let q = GaussianMixture::gaussian(v(&[shift]), DMatrix::identity(1, 1)).unwrap();
        let d = f_divergence(&p, &q).unwrap();
        // closed form δ² + δ⁴/4
        assert!((d - (shift * shift + shift.powi(4) / 4.0)).abs() < 1e-6, "shift {shift}: {d}");
        assert!(d > last);
        last = d;
    }
}

#[test]
fn rmse_of_a_constant_offset() {
    let truth: Vec<DVector<f64>> = (0..5).map(|k| DVector::from_element(40, k as f64)).collect();
    let est: Vec<DVector<f64>> = truth.iter().map(|t| t.add_scalar(0.5)).collect();
    assert!((spatio_temporal_rmse(&est, &truth).unwrap() - 0.5).abs() < 1e-15);
    assert!(spatio_temporal_rmse(&est[..3], &truth).is_err());
}
